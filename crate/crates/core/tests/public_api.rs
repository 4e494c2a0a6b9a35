use cavity_gate::analysis::{state_fidelity, thermal_cutoff};
use cavity_gate::gates::{self, ghz_target, Model};
use cavity_gate::operators::{fock_ket, thermal_field};
use cavity_gate::propagator::IntegratorConfig;
use cavity_gate::{GateParameters32, QuantumState, QuantumState32};

#[test]
fn single_precision_gate() {
    let p: GateParameters32 = gates::plan_gate(1.0f32, 12.0).unwrap();
    assert_eq!(p.k, 12);
    let field: QuantumState32 = thermal_field(12, 0.5f32).unwrap();
    let r = gates::verify_gate(&p, &field, &Model::Effective, &IntegratorConfig::adaptive(1e-5)).unwrap();
    assert!(r.fidelity > 1.0 - 1e-4, "{}", r.fidelity);
    assert!((r.phases_over_pi[0] - 1.0).abs() < 1e-4);
}

#[test]
fn double_and_single_precision_agree() {
    let p64 = gates::plan_gate(1.0f64, 7.0).unwrap();
    let p32 = gates::plan_gate(1.0f32, 7.0).unwrap();
    let r64 = gates::verify_gate(&p64, &QuantumState::Pure(fock_ket(10, 2).unwrap()), &Model::Effective, &IntegratorConfig::default()).unwrap();
    let r32 = gates::verify_gate(&p32, &QuantumState32::Pure(fock_ket(10, 2).unwrap()), &Model::Effective, &IntegratorConfig::adaptive(1e-5)).unwrap();
    for (a, b) in r64.per_input.iter().zip(&r32.per_input) {
        assert_eq!(a.input, b.input);
        assert!((a.fidelity - f64::from(b.fidelity)).abs() < 1e-4);
    }
}

#[test]
fn five_atom_ghz_from_resummation() {
    let p = gates::plan_ghz(5, 1.0f64, 3.0).unwrap();
    assert_eq!(p.family_index, Some(3));
    let target = ghz_target::<f64>(5).unwrap();
    let state = QuantumState::Pure(gates::ghz_by_resummation(&p).unwrap());
    assert!(state_fidelity(&target, &state).unwrap() > 1.0 - 1e-12);
}

#[test]
fn thermal_cutoff_grows_with_occupation() {
    assert_eq!(thermal_cutoff(0.0).unwrap(), 10);
    assert_eq!(thermal_cutoff(1.0).unwrap(), 16);
    assert!(thermal_cutoff(2.0).unwrap() > 16);
    assert!(thermal_cutoff(-1.0).is_err());
}
