//! Quantum LSTM forecaster.
//!
//! Each of the four LSTM gate transforms is `out_proj ∘ VQC ∘ in_proj`
//! applied to `concat(x_t, h_{t−1})`; the gates then follow the usual
//! sigmoid/tanh recurrence. A dense softmax head maps the final hidden state
//! to `(P_up, P_down)`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, CheckpointHeader, ParamBlock};
use crate::error::{Error, Result};
use crate::market_data::{Direction, ForecastSample};
use crate::nn::{sigmoid, softmax, weighted_cross_entropy, DenseLayer, ParamCount, Rmsprop};
use crate::quantum::{vqc_forward, vqc_gradient, VqcSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QlstmConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub seq_len: usize,
    pub n_qubits: usize,
    pub vqc_layers: usize,
    pub epochs: usize,
    pub lr: f64,
    /// Loss weights for `[up, down]`; inverse class frequency when unset.
    pub class_weights: Option<[f64; 2]>,
}

impl Default for QlstmConfig {
    fn default() -> Self {
        Self {
            input_dim: 6,
            hidden_dim: 2,
            seq_len: 4,
            n_qubits: 4,
            vqc_layers: 2,
            epochs: 50,
            lr: 5e-3,
            class_weights: None,
        }
    }
}

impl QlstmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_dim == 0 || self.seq_len == 0 {
            return Err(Error::Config("qlstm dimensions must be positive".into()));
        }
        if self.n_qubits == 0 || self.n_qubits > 12 {
            return Err(Error::Config(format!(
                "qlstm n_qubits {} outside 1..=12",
                self.n_qubits
            )));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("qlstm lr {} must be ≥ 0", self.lr)));
        }
        Ok(())
    }

    fn vqc_spec(&self) -> Result<VqcSpec> {
        VqcSpec::new(self.n_qubits, self.n_qubits, self.vqc_layers)
    }
}

pub const GATE_NAMES: [&str; 4] = ["forget", "input", "update", "output"];
const FORGET: usize = 0;
const INPUT: usize = 1;
const UPDATE: usize = 2;
const OUTPUT: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateStack {
    pub in_proj: DenseLayer,
    pub vqc: VqcSpec,
    pub angles: Vec<f64>,
    pub out_proj: DenseLayer,
}

impl GateStack {
    fn forward(&self, v: &[f64]) -> GateCache {
        let a = self.in_proj.forward_unchecked(v);
        let e = vqc_forward(&self.vqc, &self.angles, &a).expect("gate shapes validated");
        let z = self.out_proj.forward_unchecked(&e);
        GateCache { a, e, z }
    }

    fn write_flat(&self, out: &mut Vec<f64>) {
        self.in_proj.write_flat(out);
        out.extend_from_slice(&self.angles);
        self.out_proj.write_flat(out);
    }

    fn read_flat<'a>(&mut self, src: &'a [f64]) -> &'a [f64] {
        let rest = self.in_proj.read_flat(src);
        let (angles, rest) = rest.split_at(self.angles.len());
        self.angles.copy_from_slice(angles);
        self.out_proj.read_flat(rest)
    }

    fn param_count(&self) -> ParamCount {
        ParamCount::dense(&self.in_proj) + ParamCount::vqc(&self.vqc) + ParamCount::dense(&self.out_proj)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QlstmParams {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub seq_len: usize,
    pub gates: Vec<GateStack>,
    pub head: DenseLayer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl CellState {
    pub fn zeros(hidden_dim: usize) -> Self {
        Self {
            h: vec![0.0; hidden_dim],
            c: vec![0.0; hidden_dim],
        }
    }
}

struct GateCache {
    a: Vec<f64>,
    e: Vec<f64>,
    z: Vec<f64>,
}

struct StepCache {
    v: Vec<f64>,
    gates: Vec<GateCache>,
    f: Vec<f64>,
    i: Vec<f64>,
    u: Vec<f64>,
    o: Vec<f64>,
    c_prev: Vec<f64>,
    c: Vec<f64>,
}

impl QlstmParams {
    fn build(cfg: &QlstmConfig, mut make: impl FnMut(usize, usize) -> DenseLayer, mut angles: impl FnMut(usize) -> Vec<f64>) -> Result<Self> {
        cfg.validate()?;
        let vqc = cfg.vqc_spec()?;
        let concat = cfg.input_dim + cfg.hidden_dim;
        let gates = (0..4)
            .map(|_| GateStack {
                in_proj: make(concat, cfg.n_qubits),
                vqc,
                angles: angles(vqc.param_count()),
                out_proj: make(cfg.n_qubits, cfg.hidden_dim),
            })
            .collect();
        Ok(Self {
            input_dim: cfg.input_dim,
            hidden_dim: cfg.hidden_dim,
            seq_len: cfg.seq_len,
            gates,
            head: make(cfg.hidden_dim, 2),
        })
    }

    /// Glorot dense weights, zero biases, VQC angles uniform in [0, 2π).
    pub fn init<R: Rng + ?Sized>(cfg: &QlstmConfig, rng: &mut R) -> Result<Self> {
        let mut layers: Vec<DenseLayer> = Vec::new();
        let mut angle_sets: Vec<Vec<f64>> = Vec::new();
        // Draw in a fixed order: per gate (in_proj, angles, out_proj), then head.
        let concat = cfg.input_dim + cfg.hidden_dim;
        let n_angles = cfg.n_qubits * cfg.vqc_layers;
        for _ in 0..4 {
            layers.push(DenseLayer::glorot(concat, cfg.n_qubits, rng));
            angle_sets.push(
                (0..n_angles)
                    .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
                    .collect(),
            );
            layers.push(DenseLayer::glorot(cfg.n_qubits, cfg.hidden_dim, rng));
        }
        layers.push(DenseLayer::glorot(cfg.hidden_dim, 2, rng));
        let mut layers = layers.into_iter();
        let mut angle_sets = angle_sets.into_iter();
        Self::build(
            cfg,
            |_, _| layers.next().expect("layer drawn"),
            |_| angle_sets.next().expect("angles drawn"),
        )
    }

    pub fn zeros(cfg: &QlstmConfig) -> Result<Self> {
        Self::build(cfg, DenseLayer::zeros, |n| vec![0.0; n])
    }

    pub fn param_count(&self) -> ParamCount {
        self.gates.iter().map(GateStack::param_count).sum::<ParamCount>() + ParamCount::dense(&self.head)
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count().total());
        for g in &self.gates {
            g.write_flat(&mut out);
        }
        self.head.write_flat(&mut out);
        out
    }

    pub fn load_flat(&mut self, flat: &[f64]) -> Result<()> {
        let expected = self.param_count().total();
        if flat.len() != expected {
            return Err(Error::ShapeMismatch {
                context: "qlstm flat params",
                expected,
                got: flat.len(),
            });
        }
        let mut rest = flat;
        for g in &mut self.gates {
            rest = g.read_flat(rest);
        }
        self.head.read_flat(rest);
        Ok(())
    }

    fn step(&self, x: &[f64], prev: &CellState) -> StepCache {
        let mut v = x.to_vec();
        v.extend_from_slice(&prev.h);
        let gates: Vec<GateCache> = self.gates.iter().map(|g| g.forward(&v)).collect();
        let f: Vec<f64> = gates[FORGET].z.iter().map(|&z| sigmoid(z)).collect();
        let i: Vec<f64> = gates[INPUT].z.iter().map(|&z| sigmoid(z)).collect();
        let u: Vec<f64> = gates[UPDATE].z.iter().map(|&z| z.tanh()).collect();
        let o: Vec<f64> = gates[OUTPUT].z.iter().map(|&z| sigmoid(z)).collect();
        let c: Vec<f64> = (0..self.hidden_dim)
            .map(|k| f[k] * prev.c[k] + i[k] * u[k])
            .collect();
        StepCache {
            v,
            gates,
            f,
            i,
            u,
            o,
            c_prev: prev.c.clone(),
            c,
        }
    }

    pub fn cell_forward(&self, x: &[f64], state: &CellState) -> Result<CellState> {
        if x.len() != self.input_dim {
            return Err(Error::ShapeMismatch {
                context: "qlstm input",
                expected: self.input_dim,
                got: x.len(),
            });
        }
        if state.h.len() != self.hidden_dim || state.c.len() != self.hidden_dim {
            return Err(Error::ShapeMismatch {
                context: "qlstm state",
                expected: self.hidden_dim,
                got: state.h.len(),
            });
        }
        let cache = self.step(x, state);
        let h = cache.o.iter().zip(&cache.c).map(|(o, c)| o * c.tanh()).collect();
        Ok(CellState { h, c: cache.c })
    }

    fn check_window(&self, window: &[Vec<f64>]) -> Result<()> {
        if window.len() != self.seq_len {
            return Err(Error::ShapeMismatch {
                context: "qlstm window length",
                expected: self.seq_len,
                got: window.len(),
            });
        }
        if let Some(row) = window.iter().find(|r| r.len() != self.input_dim) {
            return Err(Error::ShapeMismatch {
                context: "qlstm window row",
                expected: self.input_dim,
                got: row.len(),
            });
        }
        Ok(())
    }

    fn unroll(&self, window: &[Vec<f64>]) -> (Vec<StepCache>, Vec<f64>) {
        let mut state = CellState::zeros(self.hidden_dim);
        let mut caches = Vec::with_capacity(window.len());
        for x in window {
            let cache = self.step(x, &state);
            let h = cache.o.iter().zip(&cache.c).map(|(o, c)| o * c.tanh()).collect();
            state = CellState { h, c: cache.c.clone() };
            caches.push(cache);
        }
        (caches, state.h)
    }

    /// `(P_up, P_down)` for a `seq_len × input_dim` window, starting from a zero state.
    pub fn sequence_forward(&self, window: &[Vec<f64>]) -> Result<[f64; 2]> {
        self.check_window(window)?;
        let (_, h) = self.unroll(window);
        let p = softmax(&self.head.forward_unchecked(&h));
        Ok([p[0], p[1]])
    }

    /// Weighted cross-entropy on one sample and its gradient in `to_flat` order,
    /// by backpropagation through time.
    pub fn loss_and_grad(
        &self,
        window: &[Vec<f64>],
        label: Direction,
        class_weights: &[f64; 2],
    ) -> Result<(f64, Vec<f64>)> {
        self.check_window(window)?;
        let (caches, h_last) = self.unroll(window);
        let logits = self.head.forward_unchecked(&h_last);
        let probs = softmax(&logits);
        let (loss, d_logits) = weighted_cross_entropy(&probs, label.index(), class_weights)?;

        let mut grads = self.clone();
        let zero = vec![0.0; grads.param_count().total()];
        grads.load_flat(&zero)?;

        let head_g = self.head.backward(&h_last, &d_logits)?;
        grads.head.weights = head_g.weights;
        grads.head.bias = head_g.bias;

        let hd = self.hidden_dim;
        let mut dh = head_g.input;
        let mut dc = vec![0.0; hd];
        for cache in caches.iter().rev() {
            let tc: Vec<f64> = cache.c.iter().map(|c| c.tanh()).collect();
            let mut dz = [vec![0.0; hd], vec![0.0; hd], vec![0.0; hd], vec![0.0; hd]];
            let mut dc_prev = vec![0.0; hd];
            for k in 0..hd {
                let d_o = dh[k] * tc[k];
                let dct = dc[k] + dh[k] * cache.o[k] * (1.0 - tc[k] * tc[k]);
                let d_f = dct * cache.c_prev[k];
                let d_i = dct * cache.u[k];
                let d_u = dct * cache.i[k];
                dc_prev[k] = dct * cache.f[k];
                dz[FORGET][k] = d_f * cache.f[k] * (1.0 - cache.f[k]);
                dz[INPUT][k] = d_i * cache.i[k] * (1.0 - cache.i[k]);
                dz[UPDATE][k] = d_u * (1.0 - cache.u[k] * cache.u[k]);
                dz[OUTPUT][k] = d_o * cache.o[k] * (1.0 - cache.o[k]);
            }

            let mut dv = vec![0.0; cache.v.len()];
            for (g, gate) in self.gates.iter().enumerate() {
                let gc = &cache.gates[g];
                let out_g = gate.out_proj.backward(&gc.e, &dz[g])?;
                let vqc_g = vqc_gradient(&gate.vqc, &gate.angles, &gc.a, &out_g.input)?;
                let in_g = gate.in_proj.backward(&cache.v, &vqc_g.inputs)?;

                let acc = &mut grads.gates[g];
                add_into(&mut acc.out_proj.weights, &out_g.weights);
                add_into(&mut acc.out_proj.bias, &out_g.bias);
                add_into(&mut acc.angles, &vqc_g.params);
                add_into(&mut acc.in_proj.weights, &in_g.weights);
                add_into(&mut acc.in_proj.bias, &in_g.bias);
                add_into(&mut dv, &in_g.input);
            }
            dh = dv[self.input_dim..].to_vec();
            dc = dc_prev;
        }
        Ok((loss, grads.to_flat()))
    }
}

fn add_into(acc: &mut [f64], g: &[f64]) {
    for (a, b) in acc.iter_mut().zip(g) {
        *a += b;
    }
}

/// Inverse-frequency weights `N / (2·N_c)` for `[up, down]`.
pub fn inverse_frequency_weights(samples: &[ForecastSample]) -> Result<[f64; 2]> {
    let n_up = samples.iter().filter(|s| s.label == Direction::Up).count();
    let n_down = samples.len() - n_up;
    if n_up == 0 || n_down == 0 {
        return Err(Error::SingleClass);
    }
    let n = samples.len() as f64;
    Ok([n / (2.0 * n_up as f64), n / (2.0 * n_down as f64)])
}

pub fn predicted_direction(probs: &[f64; 2]) -> Direction {
    if probs[0] >= probs[1] {
        Direction::Up
    } else {
        Direction::Down
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss: f64,
    pub train_acc: f64,
    pub test_acc: Option<f64>,
    pub skipped_updates: u64,
}

#[derive(Debug, Clone)]
pub struct TrainedQlstm {
    pub params: QlstmParams,
    pub class_weights: [f64; 2],
    pub history: Vec<EpochMetrics>,
}

/// Mean weighted loss and accuracy over `samples` in their given order.
pub fn evaluate(params: &QlstmParams, samples: &[ForecastSample], class_weights: &[f64; 2]) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Ok((0.0, 0.0));
    }
    let mut loss = 0.0;
    let mut correct = 0usize;
    for s in samples {
        let p = params.sequence_forward(&s.window)?;
        loss += weighted_cross_entropy(&p, s.label.index(), class_weights)?.0;
        if predicted_direction(&p) == s.label {
            correct += 1;
        }
    }
    Ok((loss / samples.len() as f64, correct as f64 / samples.len() as f64))
}

/// Online (batch size 1) RMSprop training with a seeded per-epoch shuffle.
pub fn train_qlstm(
    train: &[ForecastSample],
    test: &[ForecastSample],
    cfg: &QlstmConfig,
    init_seed: u64,
    shuffle_seed: u64,
) -> Result<TrainedQlstm> {
    if train.is_empty() {
        return Err(Error::EmptyInput("qlstm training set"));
    }
    let class_weights = match cfg.class_weights {
        Some(w) => {
            inverse_frequency_weights(train)?;
            w
        }
        None => inverse_frequency_weights(train)?,
    };
    let mut init_rng = ChaCha8Rng::seed_from_u64(init_seed);
    let mut params = QlstmParams::init(cfg, &mut init_rng)?;
    let mut flat = params.to_flat();
    let mut opt = Rmsprop::new(flat.len(), cfg.lr);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(shuffle_seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        for &idx in &order {
            let s = &train[idx];
            let (_, grad) = params.loss_and_grad(&s.window, s.label, &class_weights)?;
            opt.step(&mut flat, &grad)?;
            params.load_flat(&flat)?;
        }
        let (loss, train_acc) = evaluate(&params, train, &class_weights)?;
        let test_acc = if test.is_empty() {
            None
        } else {
            Some(evaluate(&params, test, &class_weights)?.1)
        };
        log::debug!("qlstm epoch {epoch}: loss {loss:.5} train_acc {train_acc:.4} test_acc {test_acc:?}");
        history.push(EpochMetrics {
            epoch,
            loss,
            train_acc,
            test_acc,
            skipped_updates: opt.skipped,
        });
    }
    Ok(TrainedQlstm {
        params,
        class_weights,
        history,
    })
}

pub fn write_epoch_csv<W: std::io::Write>(writer: W, history: &[EpochMetrics]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["epoch", "loss", "train_acc", "test_acc"])?;
    for m in history {
        w.write_record([
            m.epoch.to_string(),
            m.loss.to_string(),
            m.train_acc.to_string(),
            m.test_acc.map(|a| a.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<qlstm metrics>", e))?;
    Ok(())
}

/// Frozen forecaster queried online by the trading environment.
#[derive(Debug, Clone, PartialEq)]
pub struct Forecaster {
    params: QlstmParams,
}

impl Forecaster {
    pub fn new(params: QlstmParams) -> Self {
        Self { params }
    }

    pub fn params(&self) -> &QlstmParams {
        &self.params
    }

    pub fn seq_len(&self) -> usize {
        self.params.seq_len
    }

    pub fn predict(&self, window: &[Vec<f64>]) -> Result<[f64; 2]> {
        self.params.sequence_forward(window)
    }
}

pub const CHECKPOINT_KIND: &str = "qlstm";

impl QlstmParams {
    fn blocks(&self) -> Vec<ParamBlock> {
        let mut out = Vec::new();
        let mut push = |name: String, shape: Vec<usize>| out.push(ParamBlock { name, shape });
        for (g, gate) in GATE_NAMES.iter().zip(&self.gates) {
            push(format!("{g}.in_proj.weight"), vec![gate.in_proj.out_dim, gate.in_proj.in_dim]);
            push(format!("{g}.in_proj.bias"), vec![gate.in_proj.out_dim]);
            push(format!("{g}.vqc.angles"), vec![gate.vqc.n_layers, gate.vqc.n_qubits]);
            push(format!("{g}.out_proj.weight"), vec![gate.out_proj.out_dim, gate.out_proj.in_dim]);
            push(format!("{g}.out_proj.bias"), vec![gate.out_proj.out_dim]);
        }
        push("head.weight".into(), vec![self.head.out_dim, self.head.in_dim]);
        push("head.bias".into(), vec![self.head.out_dim]);
        out
    }

    pub fn to_checkpoint(&self, cfg: &QlstmConfig, seeds: Vec<u64>) -> Checkpoint {
        Checkpoint {
            header: CheckpointHeader {
                kind: CHECKPOINT_KIND.into(),
                blocks: self.blocks(),
                seeds,
                config: serde_json::to_value(cfg).expect("config serializes"),
            },
            params: self.to_flat(),
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<(Self, QlstmConfig)> {
        ck.expect_kind(CHECKPOINT_KIND)?;
        let cfg: QlstmConfig = serde_json::from_value(ck.header.config.clone())?;
        let mut params = Self::zeros(&cfg)?;
        if params.blocks() != ck.header.blocks {
            return Err(Error::Checkpoint("qlstm block layout does not match config".into()));
        }
        params.load_flat(&ck.params)?;
        Ok((params, cfg))
    }
}
