use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, CheckpointHeader, ParamBlock};
use crate::env::{Observation, OBS_DIM};
use crate::error::{Error, Result};
use crate::nn::{softmax, DenseLayer, ParamCount};
use crate::quantum::{vqc_forward, vqc_gradient, VqcSpec};

pub const N_ACTIONS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BodyKind {
    /// Angle-encoded VQC on `latent_dim` qubits.
    Quantum,
    /// Classical baseline: tanh dense `latent_dim → latent_dim`.
    Dense,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetConfig {
    pub latent_dim: usize,
    pub body: BodyKind,
    pub vqc_layers: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            latent_dim: 8,
            body: BodyKind::Quantum,
            vqc_layers: 2,
        }
    }
}

impl NetConfig {
    pub fn classical_baseline(latent_dim: usize) -> Self {
        Self {
            latent_dim,
            body: BodyKind::Dense,
            vqc_layers: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 {
            return Err(Error::Config("network.latent_dim must be positive".into()));
        }
        if self.body == BodyKind::Quantum {
            VqcSpec::new(self.latent_dim, self.latent_dim, self.vqc_layers)
                .map_err(|e| Error::Config(format!("network quantum body: {e}")))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Body {
    Quantum { spec: VqcSpec, angles: Vec<f64> },
    Dense(DenseLayer),
}

impl Body {
    fn param_count(&self) -> ParamCount {
        match self {
            Body::Quantum { spec, .. } => ParamCount::vqc(spec),
            Body::Dense(layer) => ParamCount::dense(layer),
        }
    }
}

/// `input (tanh) → body → linear head`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tower {
    pub input: DenseLayer,
    pub body: Body,
    pub head: DenseLayer,
}

pub(crate) struct TowerCache {
    state: Vec<f64>,
    latent: Vec<f64>,
    body_out: Vec<f64>,
    pub(crate) out: Vec<f64>,
}

impl Tower {
    fn init<R: Rng + ?Sized>(cfg: &NetConfig, out_dim: usize, rng: &mut R) -> Self {
        let input = DenseLayer::glorot(OBS_DIM, cfg.latent_dim, rng);
        let body = match cfg.body {
            BodyKind::Quantum => {
                let spec = VqcSpec::new(cfg.latent_dim, cfg.latent_dim, cfg.vqc_layers)
                    .expect("validated net config");
                let angles = (0..spec.param_count())
                    .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
                    .collect();
                Body::Quantum { spec, angles }
            }
            BodyKind::Dense => Body::Dense(DenseLayer::glorot(cfg.latent_dim, cfg.latent_dim, rng)),
        };
        let head = DenseLayer::glorot(cfg.latent_dim, out_dim, rng);
        Self { input, body, head }
    }

    pub fn param_count(&self) -> ParamCount {
        ParamCount::dense(&self.input) + self.body.param_count() + ParamCount::dense(&self.head)
    }

    pub(crate) fn forward(&self, state: &[f64]) -> TowerCache {
        let latent: Vec<f64> = self
            .input
            .forward_unchecked(state)
            .into_iter()
            .map(f64::tanh)
            .collect();
        let body_out = match &self.body {
            Body::Quantum { spec, angles } => {
                vqc_forward(spec, angles, &latent).expect("tower shapes validated")
            }
            Body::Dense(layer) => layer
                .forward_unchecked(&latent)
                .into_iter()
                .map(f64::tanh)
                .collect(),
        };
        let out = self.head.forward_unchecked(&body_out);
        TowerCache {
            state: state.to_vec(),
            latent,
            body_out,
            out,
        }
    }

    /// Gradient of `d_out · out` in `write_flat` order, appended to `grad`.
    pub(crate) fn backward(&self, cache: &TowerCache, d_out: &[f64], grad: &mut Vec<f64>) -> Result<()> {
        let head_g = self.head.backward(&cache.body_out, d_out)?;
        let (body_flat, d_latent) = match &self.body {
            Body::Quantum { spec, angles } => {
                let g = vqc_gradient(spec, angles, &cache.latent, &head_g.input)?;
                (g.params, g.inputs)
            }
            Body::Dense(layer) => {
                let d_pre: Vec<f64> = head_g
                    .input
                    .iter()
                    .zip(&cache.body_out)
                    .map(|(d, y)| d * (1.0 - y * y))
                    .collect();
                let g = layer.backward(&cache.latent, &d_pre)?;
                let mut flat = Vec::new();
                g.write_flat(&mut flat);
                (flat, g.input)
            }
        };
        let d_pre: Vec<f64> = d_latent
            .iter()
            .zip(&cache.latent)
            .map(|(d, z)| d * (1.0 - z * z))
            .collect();
        let in_g = self.input.backward(&cache.state, &d_pre)?;
        in_g.write_flat(grad);
        grad.extend_from_slice(&body_flat);
        head_g.write_flat(grad);
        Ok(())
    }

    fn write_flat(&self, out: &mut Vec<f64>) {
        self.input.write_flat(out);
        match &self.body {
            Body::Quantum { angles, .. } => out.extend_from_slice(angles),
            Body::Dense(layer) => layer.write_flat(out),
        }
        self.head.write_flat(out);
    }

    fn read_flat<'a>(&mut self, src: &'a [f64]) -> &'a [f64] {
        let rest = self.input.read_flat(src);
        let rest = match &mut self.body {
            Body::Quantum { angles, .. } => {
                let (a, rest) = rest.split_at(angles.len());
                angles.copy_from_slice(a);
                rest
            }
            Body::Dense(layer) => layer.read_flat(rest),
        };
        self.head.read_flat(rest)
    }

    fn blocks(&self, prefix: &str, out: &mut Vec<ParamBlock>) {
        let mut push = |name: &str, shape: Vec<usize>| {
            out.push(ParamBlock {
                name: format!("{prefix}.{name}"),
                shape,
            })
        };
        push("input.weight", vec![self.input.out_dim, self.input.in_dim]);
        push("input.bias", vec![self.input.out_dim]);
        match &self.body {
            Body::Quantum { spec, .. } => push("vqc.angles", vec![spec.n_layers, spec.n_qubits]),
            Body::Dense(l) => {
                push("body.weight", vec![l.out_dim, l.in_dim]);
                push("body.bias", vec![l.out_dim]);
            }
        }
        push("head.weight", vec![self.head.out_dim, self.head.in_dim]);
        push("head.bias", vec![self.head.out_dim]);
    }
}

/// Separate actor (policy over 3 actions) and critic (state value) towers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorCritic {
    pub config: NetConfig,
    pub actor: Tower,
    pub critic: Tower,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyValue {
    pub policy: [f64; N_ACTIONS],
    pub value: f64,
}

impl ActorCritic {
    pub fn init(config: NetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let actor = Tower::init(&config, N_ACTIONS, &mut rng);
        let critic = Tower::init(&config, 1, &mut rng);
        Ok(Self {
            config,
            actor,
            critic,
        })
    }

    pub fn count_params(&self) -> ParamCount {
        self.actor.param_count() + self.critic.param_count()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.count_params().total());
        self.actor.write_flat(&mut out);
        self.critic.write_flat(&mut out);
        out
    }

    pub fn load_flat(&mut self, flat: &[f64]) -> Result<()> {
        let expected = self.count_params().total();
        if flat.len() != expected {
            return Err(Error::ShapeMismatch {
                context: "actor-critic flat params",
                expected,
                got: flat.len(),
            });
        }
        let rest = self.actor.read_flat(flat);
        self.critic.read_flat(rest);
        Ok(())
    }

    fn check_state(state: &[f64]) -> Result<()> {
        if state.len() != OBS_DIM {
            return Err(Error::ShapeMismatch {
                context: "agent state",
                expected: OBS_DIM,
                got: state.len(),
            });
        }
        Ok(())
    }

    pub fn policy(&self, state: &[f64]) -> Result<[f64; N_ACTIONS]> {
        Self::check_state(state)?;
        let p = softmax(&self.actor.forward(state).out);
        Ok([p[0], p[1], p[2]])
    }

    pub fn value(&self, state: &[f64]) -> Result<f64> {
        Self::check_state(state)?;
        Ok(self.critic.forward(state).out[0])
    }

    pub fn forward_policy_value(&self, state: &[f64]) -> Result<PolicyValue> {
        Ok(PolicyValue {
            policy: self.policy(state)?,
            value: self.value(state)?,
        })
    }

    pub fn forward_observation(&self, obs: &Observation) -> Result<PolicyValue> {
        self.forward_policy_value(obs.as_slice())
    }

    pub fn to_checkpoint(&self, seeds: Vec<u64>) -> Checkpoint {
        let mut blocks = Vec::new();
        self.actor.blocks("actor", &mut blocks);
        self.critic.blocks("critic", &mut blocks);
        Checkpoint {
            header: CheckpointHeader {
                kind: CHECKPOINT_KIND.into(),
                blocks,
                seeds,
                config: serde_json::to_value(self.config).expect("config serializes"),
            },
            params: self.to_flat(),
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind(CHECKPOINT_KIND)?;
        let config: NetConfig = serde_json::from_value(ck.header.config.clone())?;
        let mut net = Self::init(config, 0)?;
        net.load_flat(&ck.params)?;
        Ok(net)
    }
}

pub const CHECKPOINT_KIND: &str = "actor_critic";

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_parameter_inventory() {
        let net = ActorCritic::init(NetConfig::default(), 1).unwrap();
        let c = net.count_params();
        assert_eq!((c.quantum, c.classical, c.total()), (32, 212, 244));
        let actor = net.actor.param_count();
        assert_eq!((actor.classical, actor.quantum), (115, 16));
        assert_eq!(net.to_flat().len(), 244);
    }

    #[test]
    fn classical_baseline_has_no_quantum_params() {
        let net = ActorCritic::init(NetConfig::classical_baseline(8), 1).unwrap();
        let c = net.count_params();
        assert_eq!(c.quantum, 0);
        // 2×(10·8+8) + 2×(8·8+8) + (8·3+3) + (8·1+1)
        assert_eq!(c.classical, 176 + 144 + 27 + 9);
    }

    #[test]
    fn policy_is_a_distribution() {
        let net = ActorCritic::init(NetConfig::default(), 2).unwrap();
        let s = [0.6, 0.4, 1.0, 0.0, 0.0, 0.0, 0.3, -0.2, 0.01, 0.004];
        let pv = net.forward_policy_value(&s).unwrap();
        assert!((pv.policy.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(pv.value.is_finite());
        assert_eq!(pv, net.forward_policy_value(&s).unwrap());
        assert!(net.policy(&s[..9]).is_err());

        let mut zero_head = net.clone();
        zero_head.actor.head = DenseLayer::zeros(8, 3);
        let p = zero_head.policy(&s).unwrap();
        assert!(p.iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn checkpoint_round_trip() {
        let net = ActorCritic::init(NetConfig::default(), 3).unwrap();
        let ck = net.to_checkpoint(vec![3]);
        let bytes = ck.to_bytes();
        let back = Checkpoint::read_from(bytes.as_slice()).unwrap();
        assert_eq!(ActorCritic::from_checkpoint(&back).unwrap(), net);
    }
}
