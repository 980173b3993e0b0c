//! Independent reference computations used by the test suites and the
//! `selftest` command. Nothing here is used on a production code path.

use num_complex::Complex64;

use crate::quantum::VqcSpec;

/// Central finite-difference gradient of a scalar function.
pub fn central_gradient<F>(f: F, x: &[f64], h: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let plus = f(&probe);
            probe[i] = orig - h;
            let minus = f(&probe);
            probe[i] = orig;
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

type Matrix = Vec<Vec<Complex64>>;

fn identity(dim: usize) -> Matrix {
    (0..dim)
        .map(|i| {
            (0..dim)
                .map(|j| Complex64::new(if i == j { 1.0 } else { 0.0 }, 0.0))
                .collect()
        })
        .collect()
}

fn matmul(a: &Matrix, b: &Matrix) -> Matrix {
    let n = a.len();
    let mut out = vec![vec![Complex64::new(0.0, 0.0); n]; n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i][k];
            if aik.norm_sqr() == 0.0 {
                continue;
            }
            for j in 0..n {
                out[i][j] += aik * b[k][j];
            }
        }
    }
    out
}

/// Full 2^n × 2^n matrix of R_y(θ) acting on `qubit` (little-endian basis).
pub fn ry_matrix(n_qubits: usize, qubit: usize, theta: f64) -> Vec<Vec<Complex64>> {
    let dim = 1 << n_qubits;
    let (s, c) = (theta / 2.0).sin_cos();
    let single = [[c, -s], [s, c]];
    let mask = 1 << qubit;
    (0..dim)
        .map(|i| {
            (0..dim)
                .map(|j| {
                    if i & !mask != j & !mask {
                        Complex64::new(0.0, 0.0)
                    } else {
                        Complex64::new(single[(i >> qubit) & 1][(j >> qubit) & 1], 0.0)
                    }
                })
                .collect()
        })
        .collect()
}

/// Full permutation matrix of CNOT(control → target).
pub fn cnot_matrix(n_qubits: usize, control: usize, target: usize) -> Vec<Vec<Complex64>> {
    let dim = 1 << n_qubits;
    let image = |j: usize| if (j >> control) & 1 == 1 { j ^ (1 << target) } else { j };
    (0..dim)
        .map(|i| {
            (0..dim)
                .map(|j| Complex64::new(if image(j) == i { 1.0 } else { 0.0 }, 0.0))
                .collect()
        })
        .collect()
}

/// Expectations of the VQC computed by multiplying dense gate matrices into
/// one unitary and applying it to |0…0⟩.
pub fn dense_vqc_expectations(spec: &VqcSpec, params: &[f64], inputs: &[f64]) -> Vec<f64> {
    let n = spec.n_qubits;
    let dim = 1 << n;
    let mut gates: Vec<Matrix> = Vec::new();
    for (q, &x) in inputs.iter().enumerate() {
        gates.push(ry_matrix(n, q, std::f64::consts::PI * x));
    }
    for l in 0..spec.n_layers {
        for q in 0..n {
            gates.push(ry_matrix(n, q, params[l * n + q]));
        }
        if n > 1 {
            for q in 0..n {
                gates.push(cnot_matrix(n, q, (q + 1) % n));
            }
        }
    }
    let unitary = gates.iter().fold(identity(dim), |acc, g| matmul(g, &acc));
    let psi: Vec<Complex64> = (0..dim).map(|i| unitary[i][0]).collect();
    (0..n)
        .map(|q| {
            psi.iter()
                .enumerate()
                .map(|(i, a)| {
                    let z = if (i >> q) & 1 == 0 { 1.0 } else { -1.0 };
                    z * a.norm_sqr()
                })
                .sum()
        })
        .collect()
}

/// R_t = Σ_k γ^k r_{t+k} + γ^{K−t} v_boot, summed forward term by term.
pub fn discounted_returns(rewards: &[f64], gamma: f64, bootstrap: f64) -> Vec<f64> {
    let n = rewards.len();
    (0..n)
        .map(|t| {
            let mut total = 0.0;
            for (k, r) in rewards[t..].iter().enumerate() {
                total += gamma.powi(k as i32) * r;
            }
            total + gamma.powi((n - t) as i32) * bootstrap
        })
        .collect()
}

/// Largest percentage decline over every ordered pair `i ≤ j`.
pub fn brute_force_max_drawdown(equity: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..equity.len() {
        for j in i..equity.len() {
            worst = worst.max(100.0 * (equity[i] - equity[j]) / equity[i]);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn central_gradient_of_quadratic() {
        let g = central_gradient(|x| x[0] * x[0] + 3.0 * x[1], &[2.0, 5.0], 1e-5);
        assert!((g[0] - 4.0).abs() < 1e-8 && (g[1] - 3.0).abs() < 1e-8);
    }

    #[test]
    fn dense_oracle_single_qubit() {
        let spec = VqcSpec::new(1, 1, 1).unwrap();
        let e = dense_vqc_expectations(&spec, &[0.4], &[0.0]);
        assert!((e[0] - 0.4f64.cos()).abs() < 1e-12);
    }

    #[test]
    fn discounted_returns_suffix_sums() {
        assert_eq!(discounted_returns(&[1.0, 1.0, 1.0], 1.0, 0.0), vec![3.0, 2.0, 1.0]);
    }

    #[test]
    fn brute_force_drawdown() {
        assert!((brute_force_max_drawdown(&[100.0, 110.0, 99.0, 120.0]) - 10.0).abs() < 1e-12);
    }
}
