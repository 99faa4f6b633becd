use approx::assert_abs_diff_eq;
use nalgebra::DMatrix;
use nvqsim_core::spin::{
    c, collapse, fidelity, measure_subsystem, ops, phase_aligned_distance, propagator, CMatrix, CVector,
    HilbertSpace, Operator, StateVector, C64,
};
use nvqsim_core::Error;
use proptest::prelude::*;

fn qubit() -> HilbertSpace {
    HilbertSpace::new(vec![2]).unwrap()
}

fn random_hermitian(d: usize, entries: &[f64]) -> CMatrix {
    let mut m = CMatrix::zeros(d, d);
    let mut it = entries.iter().cycle();
    for i in 0..d {
        m[(i, i)] = c(*it.next().unwrap(), 0.0);
        for j in i + 1..d {
            let z = c(*it.next().unwrap(), *it.next().unwrap());
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
        }
    }
    m
}

#[test]
fn two_level_propagator_matches_rotation_formula() {
    let (w, om, t) = (0.7, 1.9, 0.83);
    let h = ops::sigma_z() * c(w / 2.0, 0.0) + ops::sigma_x() * c(om / 2.0, 0.0);
    let u = propagator(&Operator::new(qubit(), h).unwrap(), t).unwrap();
    let r = w.hypot(om);
    let th = r * t / 2.0;
    let expected = ops::identity(2) * c(th.cos(), 0.0)
        - (ops::sigma_z() * c(w / r, 0.0) + ops::sigma_x() * c(om / r, 0.0)) * c(0.0, th.sin());
    assert!(nvqsim_core::spin::max_abs(&(u.matrix() - expected)) < 1e-14);
}

#[test]
fn propagator_rejects_non_hermitian() {
    let m = CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
    let err = propagator(&Operator::new(qubit(), m).unwrap(), 1.0).unwrap_err();
    assert!(matches!(err, Error::NotHermitian { .. }));
}

#[test]
fn embed_places_operator_on_its_factor() {
    let space = HilbertSpace::new(vec![3, 2, 3]).unwrap();
    let op = Operator::embed(&ops::sigma_x(), 1, &space).unwrap();
    let expected = ops::identity(3).kronecker(&ops::sigma_x()).kronecker(&ops::identity(3));
    assert_eq!(op.matrix(), &expected);
    assert_eq!(op.dim(), 18);
}

#[test]
fn embed_rejects_wrong_local_dimension() {
    let space = HilbertSpace::new(vec![3, 2]).unwrap();
    assert!(matches!(
        Operator::embed(&ops::sigma_x(), 0, &space),
        Err(Error::DimensionMismatch { .. })
    ));
    assert!(matches!(
        Operator::embed(&ops::sigma_x(), 5, &space),
        Err(Error::SlotOutOfRange { .. })
    ));
}

#[test]
fn state_vector_requires_normalization() {
    let v = CVector::from_vec(vec![c(1.0, 0.0), c(1.0, 0.0)]);
    assert!(matches!(StateVector::new(qubit(), v.clone()), Err(Error::NotNormalized { .. })));
    let s = StateVector::normalized(qubit(), v).unwrap();
    assert_abs_diff_eq!(s.norm(), 1.0, epsilon = 1e-15);
}

#[test]
fn fidelity_rejects_mismatched_spaces() {
    let a = StateVector::basis(&qubit(), 0).unwrap();
    let b = StateVector::basis(&HilbertSpace::new(vec![3]).unwrap(), 0).unwrap();
    assert!(matches!(fidelity(&a, &b), Err(Error::DimensionMismatch { .. })));
}

#[test]
fn bell_state_measurement_and_collapse() {
    let space = HilbertSpace::new(vec![2, 2]).unwrap();
    let amps = CVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 1.0)]);
    let psi = StateVector::normalized(space.clone(), amps).unwrap();
    let z = vec![CVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]), CVector::from_vec(vec![c(0.0, 0.0), c(1.0, 0.0)])];
    let p = measure_subsystem(&psi, 1, &z).unwrap();
    assert_abs_diff_eq!(p[0], 0.5, epsilon = 1e-15);
    assert_abs_diff_eq!(p[1], 0.5, epsilon = 1e-15);
    let (prob, post) = collapse(&psi, 0, &z, 1).unwrap();
    assert_abs_diff_eq!(prob, 0.5, epsilon = 1e-15);
    let expected = StateVector::new(space, CVector::from_vec(vec![c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 1.0)])).unwrap();
    assert_abs_diff_eq!(fidelity(&post, &expected).unwrap(), 1.0, epsilon = 1e-15);
}

#[test]
fn measurement_rejects_non_orthonormal_basis() {
    let psi = StateVector::basis(&qubit(), 0).unwrap();
    let bad = vec![CVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]), CVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)])];
    assert!(matches!(measure_subsystem(&psi, 0, &bad), Err(Error::InvalidBasis)));
    let short = vec![CVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)])];
    assert!(matches!(measure_subsystem(&psi, 0, &short), Err(Error::InvalidBasis)));
}

#[test]
fn phase_aligned_distance_ignores_global_phase() {
    let h = Operator::new(qubit(), ops::sigma_y()).unwrap();
    let u = propagator(&h, 0.4).unwrap();
    let v = u.scale(C64::from_polar(1.0, 2.1));
    assert!(phase_aligned_distance(&u, &v).unwrap() < 1e-15);
    let w = propagator(&h, 0.5).unwrap();
    assert!(phase_aligned_distance(&u, &w).unwrap() > 0.09);
}

#[test]
fn product_state_is_kronecker_product() {
    let a = StateVector::basis(&qubit(), 1).unwrap();
    let b = StateVector::basis(&HilbertSpace::new(vec![3]).unwrap(), 2).unwrap();
    let ab = StateVector::product(&[a, b]).unwrap();
    assert_eq!(ab.space().factors(), &[2, 3]);
    assert_eq!(ab.amplitudes()[5], c(1.0, 0.0));
}

#[test]
fn spin_one_commutation_relation() {
    let sp = ops::spin1_plus();
    let sm = sp.adjoint();
    let comm = &sp * &sm - &sm * &sp;
    let twice_sz = ops::spin1_z() * c(2.0, 0.0);
    assert!(nvqsim_core::spin::max_abs(&(comm - twice_sz)) < 1e-15);
}

proptest! {
    #[test]
    fn propagators_are_unitary(entries in prop::collection::vec(-3.0f64..3.0, 16..40), t in -5.0f64..5.0, d in 2usize..7) {
        let space = HilbertSpace::new(vec![d]).unwrap();
        let h = Operator::new(space, random_hermitian(d, &entries)).unwrap();
        let u = propagator(&h, t).unwrap();
        prop_assert!(u.unitarity_deviation() <= 1e-12);
    }

    #[test]
    fn propagator_group_law(entries in prop::collection::vec(-2.0f64..2.0, 16..20), t1 in -2.0f64..2.0, t2 in -2.0f64..2.0) {
        let space = HilbertSpace::new(vec![4]).unwrap();
        let h = Operator::new(space, random_hermitian(4, &entries)).unwrap();
        let lhs = &propagator(&h, t1).unwrap() * &propagator(&h, t2).unwrap();
        let rhs = propagator(&h, t1 + t2).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs) < 1e-12);
    }

    #[test]
    fn measurement_probabilities_sum_to_one(re in prop::collection::vec(-1.0f64..1.0, 12), im in prop::collection::vec(-1.0f64..1.0, 12), slot in 0usize..3) {
        let space = HilbertSpace::new(vec![2, 3, 2]).unwrap();
        let amps = CVector::from_iterator(12, re.iter().zip(&im).map(|(a, b)| c(*a, *b)));
        prop_assume!(amps.norm() > 1e-3);
        let psi = StateVector::normalized(space.clone(), amps).unwrap();
        let d = space.factors()[slot];
        let basis: Vec<CVector> = (0..d).map(|i| DMatrix::<C64>::identity(d, d).column(i).into_owned()).collect();
        let p = measure_subsystem(&psi, slot, &basis).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn fidelity_is_symmetric_and_bounded(a in prop::collection::vec(-1.0f64..1.0, 8), b in prop::collection::vec(-1.0f64..1.0, 8)) {
        let space = HilbertSpace::new(vec![2, 2]).unwrap();
        let va = CVector::from_iterator(4, a.chunks(2).map(|p| c(p[0], p[1])));
        let vb = CVector::from_iterator(4, b.chunks(2).map(|p| c(p[0], p[1])));
        prop_assume!(va.norm() > 1e-3 && vb.norm() > 1e-3);
        let sa = StateVector::normalized(space.clone(), va).unwrap();
        let sb = StateVector::normalized(space, vb).unwrap();
        let f = fidelity(&sa, &sb).unwrap();
        prop_assert!((f - fidelity(&sb, &sa).unwrap()).abs() < 1e-15);
        prop_assert!((-1e-15..=1.0 + 1e-12).contains(&f));
    }
}
