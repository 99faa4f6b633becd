use std::f64::consts::PI;

use approx::assert_abs_diff_eq;
use nvqsim_core::nv::{schedule_timing, NVParams};
use nvqsim_core::spin::*;
use nvqsim_core::ti::*;
use nvqsim_core::trotter::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_params(rng: &mut ChaCha8Rng) -> (TIParams, Momentum) {
    let p = TIParams::new(rng.gen_range(0.1..3.0), rng.gen_range(0.1..3.0), rng.gen_range(0.0..3.0)).unwrap();
    let k = Momentum::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
    (p, k)
}

fn pauli_exp(angle: f64, m: &CMatrix) -> CMatrix {
    // matrix exponential by eigendecomposition, independent of the closed form
    let h = Operator::new(HilbertSpace::new(vec![m.nrows()]).unwrap(), m * c(-angle, 0.0)).unwrap();
    propagator(&h, 1.0).unwrap().into_matrix()
}

fn zz() -> CMatrix {
    ops::sigma_z().kronecker(&ops::sigma_z())
}

#[test]
fn conjugation_identity_over_random_draws() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let (p, k) = random_params(&mut rng);
        let r = build_hs(&p, k).unwrap();
        let scale = r.hs.max_abs().max(1.0);
        assert!(r.conjugation_error <= 1e-12 * scale, "{}", r.conjugation_error);
    }
}

#[test]
fn rotated_hamiltonian_is_isospectral() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let (p, k) = random_params(&mut rng);
        let a = build_h_ti(&p, k).eigenvalues().unwrap();
        let b = build_hs(&p, k).unwrap().hs.eigenvalues().unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-10);
        }
    }
}

#[test]
fn zero_field_origin_is_pure_mass_term() {
    let p = TIParams::new(1.0, 0.8, 0.0).unwrap();
    let r = build_hs(&p, Momentum::default()).unwrap();
    assert!(max_abs(&(r.hs.matrix() - zz() * c(0.8, 0.0))) < 1e-15);
    let e = r.hs.eigenvalues().unwrap();
    for (x, y) in e.iter().zip([-0.8, -0.8, 0.8, 0.8]) {
        assert_abs_diff_eq!(*x, y, epsilon = 1e-12);
    }
}

#[test]
fn u1_is_product_of_its_factors() {
    let tx = ops::identity(2).kronecker(&ops::sigma_x());
    let want = pauli_exp(PI / 4.0, &zz()) * pauli_exp(PI / 4.0, &tx);
    let u = u1();
    assert!(u.is_unitary(1e-13));
    assert!(max_abs(&(u.matrix() - want)) < 1e-13);
    let sx = ops::sigma_x().kronecker(&ops::identity(2));
    assert!(max_abs(&(u2().matrix() - pauli_exp(PI / 4.0, &tx) * pauli_exp(PI / 4.0, &sx))) < 1e-13);
}

#[test]
fn u2_maps_zz_onto_yy() {
    let yy = ops::sigma_y().kronecker(&ops::sigma_y());
    let u = u2();
    for i in 0..=40 {
        let theta = -PI + 2.0 * PI * i as f64 / 40.0;
        let lhs = u.matrix() * pauli_exp(theta, &zz()) * u.matrix().adjoint();
        assert!(max_abs(&(lhs - pauli_exp(theta, &yy))) <= 1e-12);
    }
}

#[test]
fn many_slices_converge_to_exact_evolution() {
    let p = TIParams::with_ratio(1.0, 1.0, 1.43).unwrap();
    // the split error is proportional to ε_B A kx
    let k = Momentum::new(0.02, 0.8);
    let plan = TrotterPlan::for_params(&p, 1.0 / p.delta, 512).unwrap();
    assert!(trotter_error(&plan, &p, k).unwrap() <= 1e-4);
    let coarse = TrotterPlan::for_params(&p, 1.0 / p.delta, 8).unwrap();
    assert!(trotter_error(&coarse, &p, k).unwrap() > trotter_error(&plan, &p, k).unwrap());
}

#[test]
fn commuting_split_is_exact_for_any_slicing() {
    let p = TIParams::with_ratio(1.0, 1.0, 0.0).unwrap();
    let k = Momentum::new(0.3, -0.7);
    for n in [1, 2, 3, 7] {
        let plan = TrotterPlan::for_params(&p, 2.3, n).unwrap();
        assert!(trotter_error(&plan, &p, k).unwrap() < 1e-12);
    }
    let p = TIParams::with_ratio(1.0, 1.0, 1.43).unwrap();
    let plan = TrotterPlan::for_params(&p, 2.3, 2).unwrap();
    assert!(trotter_error(&plan, &p, Momentum::new(0.0, 0.9)).unwrap() < 1e-12);
    let plan = TrotterPlan::for_params(&p, 0.0, 3).unwrap();
    assert!(trotter_error(&plan, &p, k).unwrap() < 1e-14);
}

#[test]
fn two_slice_fidelity_sits_near_anchor() {
    let k = anchor_momentum(&TIParams::new(1.0, 1.0, 0.0).unwrap());
    let r = fidelity_report(1.0, 1.0, k, &[0.57, 1.0, 1.43], 2, DEFAULT_SAMPLES).unwrap();
    assert!((0.80..=0.95).contains(&r.min_fidelity), "{}", r.min_fidelity);
    assert!(r.mean_fidelity > r.min_fidelity);
    let finer = fidelity_report(1.0, 1.0, k, &[0.57, 1.0, 1.43], 8, DEFAULT_SAMPLES).unwrap();
    assert!(finer.min_fidelity > r.min_fidelity);
}

#[test]
fn first_order_error_scaling() {
    let p = TIParams::with_ratio(1.0, 1.0, 1.0).unwrap();
    let (errors, exponent) = trotter_scaling(&p, anchor_momentum(&p), 1.0, &[2, 4, 8, 16, 32]).unwrap();
    assert!(errors.windows(2).all(|w| w[1] < w[0]));
    assert!((0.8..=1.2).contains(&exponent), "{exponent}");
}

#[test]
fn drive_mapping_axis_and_zero() {
    let g = NVParams::default().gamma_e;
    let d = drive_mapping(1.5, Momentum::new(0.4, 0.0), g, 1.0);
    assert_eq!(d.phase_rad, 0.0);
    assert_abs_diff_eq!(d.amplitude_gauss, 4.0 * 1.5 * 0.4 / g, epsilon = 1e-15);
    let z = drive_mapping(1.5, Momentum::default(), g, 1.0);
    assert_eq!((z.amplitude_gauss, z.phase_rad), (0.0, 0.0));
}

proptest! {
    #[test]
    fn drive_mapping_round_trips(a in 0.1f64..5.0, kx in -3.0f64..3.0, ky in -3.0f64..3.0, scale in 0.01f64..10.0) {
        let g = NVParams::default().gamma_e;
        let k = Momentum::new(kx, ky);
        let d = drive_mapping(a, k, g, scale);
        let back = inverse_drive(d, a, g, scale);
        prop_assert!((back.kx - kx).abs() <= 1e-12 && (back.ky - ky).abs() <= 1e-12);
        prop_assert!(((g * scale * d.amplitude_gauss / 4.0) * d.phase_rad.cos() - a * kx).abs() <= 1e-12);
    }

    #[test]
    fn plan_validation(t in -1.0f64..1.0, n in 0usize..3, s in -1.0f64..2.0) {
        let ok = TrotterPlan::new(t, n, s).is_ok();
        prop_assert_eq!(ok, t >= 0.0 && n >= 1 && s >= 0.0);
    }
}

#[test]
fn zero_time_circuit_is_identity() {
    let p = TIParams::with_ratio(1.0, 1.0, 1.43).unwrap();
    let k = Momentum::new(0.2, 0.5);
    let cc = compile_controlled_u(&TrotterPlan::for_params(&p, 0.0, 2).unwrap(), &p, k, &Hardware::default()).unwrap();
    let u = cc.gate_unitary(&p, k).unwrap();
    assert!(phase_aligned_distance_mat(u.matrix(), &CMatrix::identity(8, 8)).unwrap() < 1e-12);
}

#[test]
fn controlled_block_is_rotated_trotter_product() {
    let p = TIParams::with_ratio(1.0, 1.0, 0.57).unwrap();
    let k = Momentum::new(-0.3, 0.6);
    let plan = TrotterPlan::for_params(&p, 1.7, 3).unwrap();
    let u = compile_controlled_u(&plan, &p, k, &Hardware::default()).unwrap().gate_unitary(&p, k).unwrap();
    let (b0, b1) = ancilla_blocks(&u);
    let v = trotter_unitary(&plan, &p, k).unwrap();
    let want = u1().matrix() * v.matrix() * u1().matrix().adjoint();
    assert!(max_abs(&(b1 - want)) < 1e-12);
    assert!(max_abs(&(b0 - CMatrix::identity(4, 4))) < 1e-12);
}

#[test]
fn eigenstate_acquires_energy_phase_on_ancilla() {
    let p = TIParams::with_ratio(1.0, 1.0, 1.43).unwrap();
    let k = Momentum::new(0.1, 0.4);
    let (energies, vecs) = build_h_ti(&p, k).eigh().unwrap();
    let t = 1.1;
    let plan = TrotterPlan::for_params(&p, t, 256).unwrap();
    let u = compile_controlled_u(&plan, &p, k, &Hardware::default()).unwrap().gate_unitary(&p, k).unwrap();
    let plus = CVector::from_vec(vec![c(0.5f64.sqrt(), 0.0); 2]);
    for m in 0..4 {
        let phi = vecs.column(m).into_owned();
        let out = u.matrix() * kron_vec(&phi, &plus);
        let mut g = c(0.0, 0.0);
        for i in 0..4 {
            g += out[2 * i].conj() * out[2 * i + 1] * 2.0;
        }
        assert!((g - C64::from_polar(1.0, -energies[m] * t)).norm() < 1e-3, "m={m} g={g}");
    }
}

#[test]
fn idle_block_holds_for_random_plans() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let hw = Hardware::default();
    for _ in 0..50 {
        let (p, k) = random_params(&mut rng);
        let plan = TrotterPlan::for_params(&p, rng.gen_range(0.0..5.0), rng.gen_range(1..6)).unwrap();
        let u = gates_unitary(&gate_list(&plan, &p, k).unwrap(), &p, k).unwrap();
        assert!(idle_block_deviation(&u) <= SUBSPACE_TOL);
        assert!(compile_controlled_u(&plan, &p, k, &hw).unwrap().gate_unitary(&p, k).is_ok());
    }
}

#[test]
fn plan_must_match_field_ratio() {
    let p = TIParams::with_ratio(1.0, 1.0, 1.0).unwrap();
    let plan = TrotterPlan::new(1.0, 2, 0.5).unwrap();
    assert!(trotter_unitary(&plan, &p, Momentum::default()).is_err());
}

#[test]
fn field_sweep_is_slice_duration_scaling() {
    let hw = Hardware::default();
    let k = Momentum::new(0.0, 0.4);
    for s in [0.57, 1.43, 2.0] {
        let ps = TIParams::with_ratio(1.0, 1.0, s).unwrap();
        let p1 = TIParams::with_ratio(1.0, 1.0, 1.0).unwrap();
        let direct = compile_controlled_u(&TrotterPlan::for_params(&ps, 2.0, 2).unwrap(), &ps, k, &hw).unwrap();
        let mut scaled = compile_controlled_u(&TrotterPlan::for_params(&p1, 2.0, 2).unwrap(), &p1, k, &hw).unwrap();
        scaled.scale_h1(s);
        assert_eq!(direct.gates, scaled.gates);
        assert_eq!(direct.plan, scaled.plan);
        let a = direct.gate_unitary(&ps, k).unwrap();
        let b = scaled.gate_unitary(&ps, k).unwrap();
        assert_eq!(a.matrix(), b.matrix());
    }
}

#[test]
fn gate_list_serializes() {
    let p = TIParams::with_ratio(1.0, 1.0, 1.0).unwrap();
    let cc = compile_controlled_u(&TrotterPlan::for_params(&p, 1.0, 1).unwrap(), &p, Momentum::new(0.1, 0.2), &Hardware::default()).unwrap();
    let v: serde_json::Value = serde_json::from_str(&cc.gates_json()).unwrap();
    let names: Vec<&str> = v.as_array().unwrap().iter().map(|g| g["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["u1_dagger", "h2_slice", "u2_dagger", "zz_slice", "u2", "u1"]);
    assert_eq!(v[1]["subspace"], "n1");
    assert_eq!(v[2]["subspace"], "all");
}

#[test]
fn pulse_tier_tracks_gate_tier() {
    let hw = Hardware::default();
    for s in [0.57, 1.0, 1.43] {
        let p = TIParams::with_ratio(1.0, 1.0, s).unwrap();
        let k = anchor_momentum(&p);
        let plan = TrotterPlan::for_params(&p, 1.0, 2).unwrap();
        let cc = compile_controlled_u(&plan, &p, k, &hw).unwrap();
        let (pulse, leakage) = cc.pulse_unitary(&hw).unwrap();
        assert!(phase_aligned_distance(&pulse, &cc.gate_unitary(&p, k).unwrap()).unwrap() <= 5e-2);
        assert!(leakage <= 1e-2);
    }
}

#[test]
fn full_run_timing_budget() {
    let p = TIParams::with_ratio(1.0, 1.0, 1.43).unwrap();
    let k = anchor_momentum(&p);
    let plan = TrotterPlan::for_params(&p, 1.0, 2).unwrap();
    let t = schedule_timing(&algorithm_schedule(&plan, &p, k, &Hardware::default(), false).unwrap());
    assert!((76.0..=114.0).contains(&t.total_us), "{t:?}");
    assert!((88.0 * 0.8..=88.0 * 1.2).contains(&t.rf_us), "{t:?}");
    assert!((1.5..=4.5).contains(&t.electron_us()), "{t:?}");
}
