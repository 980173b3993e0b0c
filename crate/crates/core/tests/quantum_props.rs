use proptest::prelude::*;
use qfx_core::oracle::dense_vqc_expectations;
use qfx_core::quantum::{vqc_forward, StateVector, VqcSpec};

#[derive(Debug, Clone)]
enum Gate {
    Ry(usize, f64),
    Cnot(usize, usize),
}

fn gates(n: usize) -> impl Strategy<Value = Vec<Gate>> {
    let ry = (0..n, -10.0f64..10.0).prop_map(|(q, t)| Gate::Ry(q, t));
    let cnot = (0..n, 1..n).prop_map(move |(c, d)| Gate::Cnot(c, (c + d) % n));
    prop::collection::vec(prop_oneof![ry, cnot], 1..200)
}

proptest! {
    #[test]
    fn gates_preserve_norm(seq in gates(5)) {
        let mut sv = StateVector::new(5).unwrap();
        for g in &seq {
            match *g {
                Gate::Ry(q, t) => sv.apply_ry(q, t).unwrap(),
                Gate::Cnot(c, t) => sv.apply_cnot(c, t).unwrap(),
            }
        }
        prop_assert!((sv.norm_sqr() - 1.0).abs() < 1e-10);
        for z in sv.expect_z_all() {
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&z));
        }
    }

    #[test]
    fn vqc_matches_dense_unitary(
        n_qubits in 1usize..=5,
        n_layers in 1usize..=3,
        seed_params in prop::collection::vec(-7.0f64..7.0, 15),
        seed_inputs in prop::collection::vec(-0.5f64..1.5, 5),
        n_inputs_frac in 0.0f64..=1.0,
    ) {
        let n_inputs = ((n_qubits as f64) * n_inputs_frac).round() as usize;
        let spec = VqcSpec::new(n_qubits, n_inputs, n_layers).unwrap();
        let params = &seed_params[..spec.param_count()];
        let inputs = &seed_inputs[..n_inputs];
        let fast = vqc_forward(&spec, params, inputs).unwrap();
        let dense = dense_vqc_expectations(&spec, params, inputs);
        for (a, b) in fast.iter().zip(&dense) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn cnot_is_an_involution(bits in 0usize..32, c in 0usize..5, d in 1usize..5) {
        let t = (c + d) % 5;
        let mut amps = vec![num_complex::Complex64::new(0.0, 0.0); 32];
        amps[bits] = num_complex::Complex64::new(1.0, 0.0);
        let mut sv = StateVector::from_amplitudes(amps.clone()).unwrap();
        sv.apply_cnot(c, t).unwrap();
        sv.apply_cnot(c, t).unwrap();
        prop_assert_eq!(sv.amplitudes(), amps.as_slice());
    }
}

#[test]
fn rejects_bad_layouts() {
    assert!(StateVector::new(0).is_err());
    assert!(StateVector::new(13).is_err());
    let mut sv = StateVector::new(2).unwrap();
    assert!(sv.apply_cnot(1, 1).is_err());
    assert!(sv.apply_ry(2, 0.1).is_err());
    assert!(VqcSpec::new(3, 4, 1).is_err());
}
