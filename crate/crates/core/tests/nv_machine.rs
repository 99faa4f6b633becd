use std::f64::consts::PI;

use approx::assert_abs_diff_eq;
use nvqsim_core::nv::*;
use nvqsim_core::spin::*;
use proptest::prelude::*;

const TAU: f64 = 2.0 * PI;

fn level(h: &Operator, m_s: i8, c_up: bool, m_n: i8) -> f64 {
    let i = register_index(m_s, c_up, m_n);
    h.matrix()[(i, i)].re
}

fn rot(axis: CMatrix, angle: f64) -> CMatrix {
    let d = axis.nrows();
    CMatrix::identity(d, d) * c((angle / 2.0).cos(), 0.0) - axis * c(0.0, (angle / 2.0).sin())
}

fn in_plane(phase: f64) -> CMatrix {
    ops::sigma_x() * c(phase.cos(), 0.0) + ops::sigma_y() * c(phase.sin(), 0.0)
}

fn ancilla_controlled(block: CMatrix) -> CMatrix {
    CMatrix::identity(4, 4).kronecker(&ops::projector(2, 0)) + block.kronecker(&ops::projector(2, 1))
}

fn pulse_restricted(p: &NVParams, s: &PulseSchedule) -> (Operator, f64) {
    let mut sim = PulseSimulator::new(*p, PulseModel::default()).unwrap();
    let u = sim.propagator(s.simulated()).unwrap();
    let emb = QubitEmbedding::new();
    (emb.restrict(&u), emb.leakage(&u))
}

fn composed(f: impl FnOnce(&mut Composer)) -> PulseSchedule {
    let mut cm = Composer::new(NVParams::default(), PulseDurations::default()).unwrap();
    f(&mut cm);
    cm.finish()
}

#[test]
fn defaults_carry_quoted_constants() {
    let p = NVParams::default();
    assert_eq!(p.d, TAU * 2870.0);
    assert_eq!(p.j_c, TAU * 14.0);
    assert_eq!(p.j_n, TAU * 2.1);
    assert_eq!(p.q, TAU * -5.1);
    assert_eq!(p.gamma_e, TAU * 2.8);
    assert_eq!(p.gamma_c, TAU * 1.1e-3);
    assert_eq!(p.gamma_n, TAU * 0.3077e-3);
    assert_abs_diff_eq!(p.mapped_delta(), TAU * 3.5, epsilon = 1e-12);
    let d = PulseDurations::default();
    assert_eq!((d.mw_hard_us, d.mw_selective_us, d.rf_n_us, d.rf_c_us, d.free_us), (0.05, 0.5, 20.0, 2.0, 0.07));
}

#[test]
fn invalid_parameters_are_rejected() {
    let p = NVParams { j_c: 0.0, ..NVParams::default() };
    assert!(build_h0(&p).is_err());
    let p = NVParams { b0: -1.0, ..NVParams::default() };
    assert!(p.validate().is_err());
    let d = PulseDurations { rf_n_us: 0.0, ..PulseDurations::default() };
    assert!(Composer::new(NVParams::default(), d).is_err());
}

#[test]
fn static_hamiltonian_is_diagonal() {
    let h = build_h0(&NVParams::default()).unwrap();
    assert!(h.is_hermitian(1e-12));
    let m = h.matrix();
    for i in 0..18 {
        for j in 0..18 {
            if i != j {
                assert!(m[(i, j)].norm() <= 1e-14);
            }
        }
    }
}

#[test]
fn zero_field_levels_are_splitting_plus_quadrupole_plus_couplings() {
    let p = NVParams { b0: 0.0, ..NVParams::default() };
    let h = build_h0(&p).unwrap();
    for m_s in [1i8, 0, -1] {
        for (c_up, m_c) in [(true, 0.5), (false, -0.5)] {
            for m_n in [1i8, 0, -1] {
                let (s, n) = (f64::from(m_s), f64::from(m_n));
                let couplings = p.j_c * s * m_c + p.j_n * s * n;
                assert_abs_diff_eq!(level(&h, m_s, c_up, m_n) - couplings, p.d * s * s + p.q * n * n, epsilon = 1e-9);
            }
        }
    }
}

#[test]
fn level_energy_by_hand() {
    let p = NVParams::default();
    let h = build_h0(&p).unwrap();
    let want = p.d + p.gamma_e * p.b0 - p.gamma_c * p.b0 / 2.0 + p.j_c / 2.0;
    assert_abs_diff_eq!(level(&h, 1, true, 0), want, epsilon = 1e-9);
}

#[test]
fn carbon_hyperfine_splitting_is_coupling() {
    let p = NVParams::default();
    let h = build_h0(&p).unwrap();
    for m_n in [1i8, 0, -1] {
        let upper = level(&h, 1, true, m_n) - level(&h, 1, false, m_n);
        let lower = level(&h, 0, true, m_n) - level(&h, 0, false, m_n);
        assert_abs_diff_eq!(upper - lower, TAU * 14.0, epsilon = 1e-9);
    }
}

#[test]
fn rotating_frame_subtracts_frame_generator() {
    let p = NVParams::default();
    let lab = build_h0(&p).unwrap();
    let diff = lab.matrix() - frame_generator(&p).matrix() - rotating_frame_hamiltonian(&p);
    assert!(max_abs(&diff) <= 1e-12 * lab.max_abs());
}

#[test]
fn carbon_coupling_projects_onto_quarter_strength() {
    let p = NVParams::default();
    let r = Register::new();
    let coupling = &r.s_z * &r.c_z * c(p.j_c, 0.0);
    let restricted = QubitEmbedding::new().restrict(&coupling);
    assert!(max_abs(&(restricted.matrix() - projected_carbon_coupling(p.j_c))) < 1e-12);
    let full_index = register_index(1, true, 0);
    assert_abs_diff_eq!(coupling[(full_index, full_index)].re, p.j_c / 2.0, epsilon = 1e-12);
    for c_up in [true, false] {
        let i = register_index(0, c_up, 1);
        assert_eq!(coupling[(i, i)].re, 0.0);
    }
}

#[test]
fn resonant_quarter_turn() {
    let p = NVParams::default();
    let t = 0.05;
    let e = PulseElement::mw_rotation(&p, PI / 2.0, 0.0, t);
    assert_abs_diff_eq!(p.gamma_e * e.amplitude_gauss * t / 4.0, PI / 4.0, epsilon = 1e-12);
    let i2 = ops::identity(2);
    let ideal = rot(ops::sigma_x().kronecker(&i2).kronecker(&i2), PI / 2.0);
    let gate = apply_pulse(&p, &e, Tier::Gate, PulseModel::default(), 0.0).unwrap();
    assert!(max_abs(&(gate.propagator.matrix() - &ideal)) < 1e-12);
    assert!(!gate.rwa_warning);
    let pulse = apply_pulse(&p, &e, Tier::Pulse, PulseModel::default(), 0.0).unwrap();
    let restricted = QubitEmbedding::new().restrict(pulse.propagator.matrix());
    assert!(phase_aligned_distance_mat(restricted.matrix(), &ideal).unwrap() < 1e-3);
}

#[test]
fn zero_amplitude_drive_is_free_evolution() {
    let p = NVParams::default();
    let mut sim = PulseSimulator::new(p, PulseModel::default()).unwrap();
    let driven = sim.element(&PulseElement::mw_selective(0.0, 0.3, 0.4, 1)).unwrap();
    let free = sim.element(&PulseElement::free(0.4)).unwrap();
    assert!(max_abs(&(driven - free)) < 1e-12);
}

#[test]
fn selective_gate_rotates_only_target_block() {
    let p = NVParams::default();
    let mut e = PulseElement::mw_rotation(&p, PI / 2.0, 0.0, 0.05);
    e.target = Target::NLevel(1);
    let u = apply_pulse(&p, &e, Tier::Gate, PulseModel::default(), 0.0).unwrap().propagator;
    let block = rot(ops::sigma_x().kronecker(&ops::identity(2)), PI / 2.0);
    assert!(max_abs(&(u.matrix() - ancilla_controlled(block))) < 1e-12);
}

#[test]
fn rwa_flag_marks_crowded_microwave_lines() {
    let p = NVParams::default();
    let e = PulseElement::mw_rotation(&p, PI, 0.0, 0.05);
    assert!(!rwa_warning(&p, &e).unwrap());
    let low = NVParams { b0: 20.0, ..p };
    assert!(rwa_warning(&low, &PulseElement::mw_rotation(&low, PI, 0.0, 0.05)).unwrap());
}

#[test]
fn echo_removes_detuning_and_coupling() {
    let p = NVParams::default();
    let s = composed(|c| c.refocused_interval(1.3));
    for detuning in [0.0, 0.8, -1.7] {
        let mut sim = PulseSimulator::new(p, PulseModel::default()).unwrap().with_detuning(detuning);
        let u = QubitEmbedding::new().restrict(&sim.propagator(s.simulated()).unwrap());
        assert!(phase_aligned_distance_mat(u.matrix(), &CMatrix::identity(8, 8)).unwrap() < 1e-3);
    }
    let mut sim = PulseSimulator::new(p, PulseModel::default()).unwrap().with_detuning(0.8);
    let bare = QubitEmbedding::new().restrict(&sim.propagator(&[PulseElement::free(1.3)]).unwrap());
    assert!(phase_aligned_distance_mat(bare.matrix(), &CMatrix::identity(8, 8)).unwrap() > 0.1);
}

#[test]
fn coupling_period_yields_two_qubit_phase_gate() {
    let p = NVParams::default();
    let s = composed(|c| c.conditional_zz(PI / 4.0));
    let free: f64 = s.simulated().filter(|e| e.kind == PulseKind::FreeEvolution).map(|e| e.duration_us).sum();
    assert_abs_diff_eq!(free, PI / p.j_c, epsilon = 1e-12);
    let gate = gate_schedule_unitary(&p, s.simulated()).unwrap();
    let zz = ops::sigma_z().kronecker(&ops::sigma_z());
    // the schedule also cancels the flips' m_S = −1 light shift, which the
    // gate tier does not have
    let chi = flip_pair_light_shift(&p, PulseDurations::default().flip_us);
    let nu = ops::projector(2, 0) + ops::projector(2, 1) * C64::from_polar(1.0, chi);
    let shift = CMatrix::identity(4, 4).kronecker(&nu);
    let ideal = shift * ancilla_controlled(rot(zz, PI / 2.0));
    assert!(phase_aligned_distance_mat(gate.matrix(), &ideal).unwrap() < 1e-9);
}

#[test]
fn primitives_agree_across_tiers() {
    let p = NVParams::default();
    let i2 = ops::identity(2);
    let zz = ops::sigma_z().kronecker(&ops::sigma_z());
    let amp = 4.0 * 5.0 / p.gamma_e;
    let drive_h = Operator::new(
        HilbertSpace::new(vec![4]).unwrap(),
        (in_plane(0.4) * c(5.0, 0.0)).kronecker(&i2) + &zz * c(p.mapped_delta(), 0.0),
    )
    .unwrap();
    let cases: Vec<(&str, PulseSchedule, CMatrix)> = vec![
        ("electron", composed(|c| c.electron_rotation(PI / 2.0, 0.3)), rot(in_plane(0.3).kronecker(&i2).kronecker(&i2), PI / 2.0)),
        ("electron pi", composed(|c| c.electron_rotation(PI, 0.0)), rot(in_plane(0.0).kronecker(&i2).kronecker(&i2), PI)),
        ("carbon", composed(|c| c.carbon_rotation(PI / 2.0, 0.0)), rot(i2.kronecker(&in_plane(0.0)).kronecker(&i2), PI / 2.0)),
        ("carbon pi", composed(|c| c.carbon_rotation(PI, 0.7)), rot(i2.kronecker(&in_plane(0.7)).kronecker(&i2), PI)),
        ("nitrogen", composed(|c| c.nitrogen_rotation(PI / 2.0, 1.0)), rot(i2.kronecker(&i2).kronecker(&in_plane(1.0)), PI / 2.0)),
        ("zz", composed(|c| c.conditional_zz(0.3)), ancilla_controlled(rot(zz.clone(), 0.6))),
        ("zz wrap", composed(|c| c.conditional_zz(-PI / 4.0)), ancilla_controlled(rot(zz.clone(), -PI / 2.0))),
        ("drive", composed(|c| c.conditional_drive(amp, 0.4, 0.2)), ancilla_controlled(propagator(&drive_h, 0.2).unwrap().into_matrix())),
        ("echo", composed(|c| c.refocused_interval(1.0)), CMatrix::identity(8, 8)),
    ];
    for (name, s, ideal) in cases {
        let (u, leak) = pulse_restricted(&p, &s);
        let d = phase_aligned_distance_mat(u.matrix(), &ideal).unwrap();
        assert!(d <= 1e-3, "{name}: {d:.3e}");
        assert!(leak <= 1e-3, "{name}: leakage {leak:.3e}");
    }
}

#[test]
fn nitrogen_calibration_is_phase_independent() {
    let p = NVParams::default();
    let cal = nitrogen_calibration(&p, &PulseDurations::default(), PI / 2.0);
    assert!(cal.residual <= 1e-3);
    let i2 = ops::identity(2);
    for phase in [0.0, 2.0, 4.5] {
        let (u, _) = pulse_restricted(&p, &composed(|c| c.nitrogen_rotation(PI / 2.0, phase)));
        let ideal = rot(i2.kronecker(&i2).kronecker(&in_plane(phase)), PI / 2.0);
        assert_abs_diff_eq!(phase_aligned_distance_mat(u.matrix(), &ideal).unwrap(), cal.residual, epsilon = 1e-9);
    }
}

#[test]
fn timing_examples() {
    assert_eq!(schedule_timing(&PulseSchedule::default()).total_us, 0.0);
    let p = NVParams::default();
    let mut s = PulseSchedule::default();
    s.push(PulseElement::rf_n(&p, PI / 20.0, 0.0, 20.0, Target::All));
    let t = schedule_timing(&s);
    assert_eq!(t.total_us, 20.0);
    assert_eq!(t.rf_us, 20.0);
    let s = composed(|c| c.nitrogen_phase(1.0));
    assert_eq!(schedule_timing(&s).total_us, 0.0);
}

#[test]
fn schedule_json_round_trip() {
    let s = composed(|c| {
        c.nitrogen_hadamard();
        c.conditional_zz(0.4);
        c.readout_swap();
    });
    let text = s.to_json();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    let first = &v.as_array().unwrap()[0];
    for key in ["kind", "duration_us", "amplitude_gauss", "phase_rad", "target"] {
        assert!(first.get(key).is_some(), "missing {key}");
    }
    assert_eq!(PulseSchedule::from_json(&text).unwrap(), s);
    let report = serde_json::to_value(schedule_timing(&s)).unwrap();
    for key in ["total_us", "rf_us", "mw_us", "free_us"] {
        assert!(report.get(key).is_some());
    }
    assert!(PulseSchedule::from_json(r#"[{"kind":"free_evolution","duration_us":-1,"amplitude_gauss":0,"phase_rad":0,"target":"all"}]"#).is_err());
}

#[test]
fn readout_is_timed_but_not_simulated() {
    let s = composed(|c| c.readout_swap());
    assert_eq!(s.simulated().count(), 0);
    assert_abs_diff_eq!(schedule_timing(&s).total_us, 40.5, epsilon = 1e-12);
}

#[test]
fn free_induction_follows_gaussian_decay() {
    let p = NVParams::default();
    let model = NoiseModel { mc_samples: 1000, seed: 11, ..NoiseModel::default() };
    let times: Vec<f64> = (1..=12).map(|i| 0.5 * f64::from(i)).collect();
    let points = coherence_decay(&p, &model, PulseModel::default(), &times, false, 0.05).unwrap();
    let mut chi2 = 0.0;
    for pt in &points {
        let z = (pt.mean - pt.expected) / pt.stderr;
        assert!(z.abs() <= 3.0, "t = {}: z = {z:.2}", pt.t_us);
        chi2 += z * z;
    }
    assert!(chi2 / (points.len() as f64) < 2.0);
}

#[test]
fn echo_recovers_coherence_at_dephasing_time() {
    let p = NVParams::default();
    let model = NoiseModel { mc_samples: 1000, ..NoiseModel::default() };
    let pt = coherence_decay(&p, &model, PulseModel::default(), &[model.t2_star_e], true, 0.05).unwrap()[0];
    assert!(pt.mean >= 0.99, "{}", pt.mean);
    let enveloped = NoiseModel { t2_envelope: true, ..model };
    let pt = coherence_decay(&p, &enveloped, PulseModel::default(), &[3.0], true, 0.05).unwrap()[0];
    assert_abs_diff_eq!(pt.mean, (-3.0f64 / 200.0).exp(), epsilon = 1e-4);
}

#[test]
fn noiseless_ensemble_reproduces_pulse_tier() {
    let p = NVParams::default();
    let s = composed(|c| {
        c.nitrogen_hadamard();
        c.conditional_zz(0.3);
    });
    let psi = coherence_probe_state();
    let runs = noisy_run(&p, PulseModel::default(), &s, &NoiseModel::noiseless(3), &psi).unwrap();
    let mut sim = PulseSimulator::new(p, PulseModel::default()).unwrap();
    let reference = sim.evolve(&psi, s.simulated()).unwrap();
    for r in runs {
        assert!((r - &reference).norm() < 1e-12);
    }
    let bad = NoiseModel { mc_samples: 0, ..NoiseModel::default() };
    assert!(noisy_run(&p, PulseModel::default(), &s, &bad, &psi).is_err());
}

#[test]
fn ensemble_is_reproducible_from_seed() {
    let model = NoiseModel { seed: 5, ..NoiseModel::default() };
    assert_eq!(model.detunings(), model.detunings());
    let other = NoiseModel { seed: 6, ..model };
    assert_ne!(model.detunings(), other.detunings());
    let e = ensemble_average(&model, |d| Ok(d * d)).unwrap();
    assert_abs_diff_eq!(e.mean, model.sigma().powi(2), epsilon = 5.0 * e.stderr);
}

fn arb_element() -> impl Strategy<Value = PulseElement> {
    let p = NVParams::default();
    prop_oneof![
        (0.0..5.0f64).prop_map(PulseElement::free),
        (0.01..1.0f64, 0.0..TAU).prop_map(move |(t, ph)| PulseElement::mw_rotation(&p, PI / 2.0, ph, t)),
        (1.0..20.0f64).prop_map(move |t| PulseElement::rf_n(&p, PI / t, 0.0, t, Target::All)),
        (0.5..3.0f64).prop_map(move |t| PulseElement::rf_c(&p, PI / t, 0.0, t)),
        (0.0..TAU).prop_map(|a| PulseElement::frame_z(Spin::N14, a)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn timing_is_sum_of_durations(elements in proptest::collection::vec(arb_element(), 0..30)) {
        let s = PulseSchedule::new(elements.clone());
        let t = schedule_timing(&s);
        let mut total = 0.0;
        for e in &elements {
            total += e.duration_us;
        }
        prop_assert_eq!(t.total_us, total);
        prop_assert!((t.rf_us + t.mw_us + t.free_us - total).abs() <= 1e-12 * total.max(1.0));
    }

    #[test]
    fn pulse_propagators_are_unitary(e in arb_element(), detuning in -2.0..2.0f64) {
        let p = NVParams::default();
        let u = apply_pulse(&p, &e, Tier::Noisy, PulseModel::default(), detuning).unwrap().propagator;
        prop_assert!(u.is_unitary(1e-9));
        let g = apply_pulse(&p, &e, Tier::Gate, PulseModel::default(), 0.0).unwrap().propagator;
        prop_assert!(g.is_unitary(1e-9));
    }
}
