//! Exact statevector simulation for small R_y/CNOT variational circuits.
//!
//! Basis ordering is little-endian: qubit 0 is the least-significant bit of
//! the basis-state index. Circuits are evaluated exactly (no shot sampling),
//! so expectation values are deterministic.

use std::f64::consts::{FRAC_PI_2, PI};
use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_QUBITS: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    /// |0…0⟩ on `n_qubits` qubits.
    pub fn new(n_qubits: usize) -> Result<Self> {
        if !(1..=MAX_QUBITS).contains(&n_qubits) {
            return Err(Error::QubitCount(n_qubits));
        }
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); 1 << n_qubits];
        amplitudes[0] = Complex64::new(1.0, 0.0);
        Ok(Self {
            n_qubits,
            amplitudes,
        })
    }

    /// Builds a state from raw amplitudes. The caller is responsible for normalization.
    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self> {
        let len = amplitudes.len();
        if !len.is_power_of_two() {
            return Err(Error::InvalidArgument(format!(
                "amplitude count {len} is not a power of two"
            )));
        }
        let n_qubits = len.trailing_zeros() as usize;
        if !(1..=MAX_QUBITS).contains(&n_qubits) {
            return Err(Error::QubitCount(n_qubits));
        }
        Ok(Self {
            n_qubits,
            amplitudes,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    fn check_qubit(&self, index: usize) -> Result<()> {
        if index >= self.n_qubits {
            return Err(Error::QubitIndex {
                index,
                n_qubits: self.n_qubits,
            });
        }
        Ok(())
    }

    pub fn apply_ry(&mut self, qubit: usize, theta: f64) -> Result<()> {
        self.check_qubit(qubit)?;
        self.ry_unchecked(qubit, theta);
        Ok(())
    }

    pub fn apply_cnot(&mut self, control: usize, target: usize) -> Result<()> {
        self.check_qubit(control)?;
        self.check_qubit(target)?;
        if control == target {
            return Err(Error::CnotSameQubit(control));
        }
        self.cnot_unchecked(control, target);
        Ok(())
    }

    pub fn expect_z(&self, qubit: usize) -> Result<f64> {
        self.check_qubit(qubit)?;
        let mask = 1usize << qubit;
        Ok(self
            .amplitudes
            .iter()
            .enumerate()
            .map(|(i, a)| if i & mask == 0 { a.norm_sqr() } else { -a.norm_sqr() })
            .sum())
    }

    /// ⟨Z_q⟩ for every qubit in a single sweep over the amplitudes.
    pub fn expect_z_all(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_qubits];
        for (i, a) in self.amplitudes.iter().enumerate() {
            let p = a.norm_sqr();
            for (q, o) in out.iter_mut().enumerate() {
                if (i >> q) & 1 == 0 {
                    *o += p;
                } else {
                    *o -= p;
                }
            }
        }
        out
    }

    fn ry_unchecked(&mut self, qubit: usize, theta: f64) {
        let (s, c) = (theta * 0.5).sin_cos();
        let stride = 1usize << qubit;
        let len = self.amplitudes.len();
        let mut base = 0;
        while base < len {
            for i in base..base + stride {
                let a0 = self.amplitudes[i];
                let a1 = self.amplitudes[i + stride];
                self.amplitudes[i] = a0 * c - a1 * s;
                self.amplitudes[i + stride] = a0 * s + a1 * c;
            }
            base += stride << 1;
        }
    }

    fn cnot_unchecked(&mut self, control: usize, target: usize) {
        let cmask = 1usize << control;
        let tmask = 1usize << target;
        for i in 0..self.amplitudes.len() {
            if i & cmask != 0 && i & tmask == 0 {
                self.amplitudes.swap(i, i | tmask);
            }
        }
    }

    /// Writes `basis,re,im` rows, one per amplitude.
    pub fn write_csv<W: Write>(&self, mut w: W, label: &str) -> std::io::Result<()> {
        for (i, a) in self.amplitudes.iter().enumerate() {
            writeln!(w, "{label},{i},{},{}", a.re, a.im)?;
        }
        Ok(())
    }
}

/// Maps a normalized feature to an R_y rotation angle.
#[inline]
pub fn encode_angle(x: f64) -> f64 {
    PI * x
}

/// Layout of a hardware-efficient ansatz: angle encoding of the first
/// `n_inputs` qubits, then `n_layers` of (R_y on every qubit, CNOT ring).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VqcSpec {
    pub n_qubits: usize,
    pub n_inputs: usize,
    pub n_layers: usize,
}

impl VqcSpec {
    pub fn new(n_qubits: usize, n_inputs: usize, n_layers: usize) -> Result<Self> {
        if !(1..=MAX_QUBITS).contains(&n_qubits) {
            return Err(Error::QubitCount(n_qubits));
        }
        if n_inputs > n_qubits {
            return Err(Error::InvalidArgument(format!(
                "{n_inputs} encoding inputs exceed {n_qubits} qubits"
            )));
        }
        Ok(Self {
            n_qubits,
            n_inputs,
            n_layers,
        })
    }

    pub fn param_count(&self) -> usize {
        self.n_qubits * self.n_layers
    }

    fn check(&self, params: &[f64], inputs: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::ShapeMismatch {
                context: "vqc params",
                expected: self.param_count(),
                got: params.len(),
            });
        }
        if inputs.len() != self.n_inputs {
            return Err(Error::ShapeMismatch {
                context: "vqc inputs",
                expected: self.n_inputs,
                got: inputs.len(),
            });
        }
        Ok(())
    }

    /// Runs the circuit and returns the final state.
    pub fn prepare(&self, params: &[f64], inputs: &[f64]) -> Result<StateVector> {
        self.check(params, inputs)?;
        let angles: Vec<f64> = inputs.iter().map(|&x| encode_angle(x)).collect();
        Ok(self.run(params, &angles))
    }

    fn run(&self, params: &[f64], enc_angles: &[f64]) -> StateVector {
        let mut state = StateVector::new(self.n_qubits).expect("validated qubit count");
        for (q, &a) in enc_angles.iter().enumerate() {
            state.ry_unchecked(q, a);
        }
        for layer in params.chunks_exact(self.n_qubits) {
            for (q, &theta) in layer.iter().enumerate() {
                state.ry_unchecked(q, theta);
            }
            if self.n_qubits > 1 {
                for q in 0..self.n_qubits {
                    state.cnot_unchecked(q, (q + 1) % self.n_qubits);
                }
            }
        }
        state
    }

    fn eval(&self, params: &[f64], enc_angles: &[f64]) -> Vec<f64> {
        self.run(params, enc_angles).expect_z_all()
    }
}

/// Expectations ⟨Z_q⟩ for every qubit.
pub fn vqc_forward(spec: &VqcSpec, params: &[f64], inputs: &[f64]) -> Result<Vec<f64>> {
    spec.check(params, inputs)?;
    let angles: Vec<f64> = inputs.iter().map(|&x| encode_angle(x)).collect();
    Ok(spec.eval(params, &angles))
}

#[derive(Debug, Clone, PartialEq)]
pub struct VqcGradient {
    pub params: Vec<f64>,
    pub inputs: Vec<f64>,
}

/// Parameter-shift gradient of `upstream · ⟨Z⟩` with respect to the
/// trainable angles and the encoded inputs.
pub fn vqc_gradient(
    spec: &VqcSpec,
    params: &[f64],
    inputs: &[f64],
    upstream: &[f64],
) -> Result<VqcGradient> {
    spec.check(params, inputs)?;
    if upstream.len() != spec.n_qubits {
        return Err(Error::ShapeMismatch {
            context: "vqc upstream",
            expected: spec.n_qubits,
            got: upstream.len(),
        });
    }
    let contract = |e: &[f64]| -> f64 { e.iter().zip(upstream).map(|(a, b)| a * b).sum() };

    let mut angles: Vec<f64> = inputs.iter().map(|&x| encode_angle(x)).collect();
    let mut shifted = params.to_vec();
    let mut grad_params = vec![0.0; params.len()];
    for k in 0..params.len() {
        let orig = shifted[k];
        shifted[k] = orig + FRAC_PI_2;
        let plus = contract(&spec.eval(&shifted, &angles));
        shifted[k] = orig - FRAC_PI_2;
        let minus = contract(&spec.eval(&shifted, &angles));
        shifted[k] = orig;
        grad_params[k] = 0.5 * (plus - minus);
    }

    let mut grad_inputs = vec![0.0; inputs.len()];
    for i in 0..inputs.len() {
        let orig = angles[i];
        angles[i] = orig + FRAC_PI_2;
        let plus = contract(&spec.eval(params, &angles));
        angles[i] = orig - FRAC_PI_2;
        let minus = contract(&spec.eval(params, &angles));
        angles[i] = orig;
        // chain rule through encode(x) = πx
        grad_inputs[i] = PI * 0.5 * (plus - minus);
    }

    Ok(VqcGradient {
        params: grad_params,
        inputs: grad_inputs,
    })
}
