mod common;

use adjprec::adjoint::check::{adjoint_consistency, fd_jvp};
use adjprec::adjoint::{
    canonical_adjoint_rhs, pairing_drift, rate, rate_jvp, rate_vjp, variational_rhs, FieldArgs, LinearField,
    PartitionedField, Slot,
};
use adjprec::blockla::{BlockOp, BlockShape, BlockVec, Mat};
use adjprec::precond::PairingMap;
use adjprec::Result;
use approx::assert_relative_eq;
use common::{fd_jacobian, random_vec, Coupled};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn two_by_two() -> LinearField {
    let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
    LinearField::implicit(BlockOp::from_dense(BlockShape::new(1, 1), &a).unwrap())
}

/// `f(u) = u²` split as `u1 * u2`.
struct Square;

impl PartitionedField for Square {
    fn shape(&self) -> BlockShape {
        BlockShape::new(1, 0)
    }
    fn value(&self, a: FieldArgs) -> Result<BlockVec> {
        Ok(BlockVec::from_slices(&[a.u1.get(0) * a.u2.get(0)], &[]))
    }
    fn jvp_slot1(&self, a: FieldArgs, du: &BlockVec) -> Result<BlockVec> {
        Ok(du.scaled(a.u2.get(0)))
    }
    fn jvp_slot2(&self, a: FieldArgs, du: &BlockVec) -> Result<BlockVec> {
        Ok(du.scaled(a.u1.get(0)))
    }
    fn vjp_slot1(&self, a: FieldArgs, w: &BlockVec) -> Result<BlockVec> {
        Ok(w.scaled(a.u2.get(0)))
    }
    fn vjp_slot2(&self, a: FieldArgs, w: &BlockVec) -> Result<BlockVec> {
        Ok(w.scaled(a.u1.get(0)))
    }
}

#[test]
fn canonical_rhs_is_minus_transpose_action() {
    let u = BlockVec::from_slices(&[0.3], &[-0.7]);
    let p = BlockVec::from_slices(&[1.0], &[1.0]);
    let r = canonical_adjoint_rhs(&two_by_two(), 0.0, &u, &p).unwrap();
    assert_eq!(r.flatten().as_slice(), &[-4.0, -6.0]);
}

#[test]
fn variational_rhs_of_linear_field_is_matrix_column() {
    let u = BlockVec::from_slices(&[5.0], &[1.0]);
    let e1 = BlockVec::unit(BlockShape::new(1, 1), 0);
    let r = variational_rhs(&two_by_two(), 0.0, &u, &e1).unwrap();
    assert_eq!(r.flatten().as_slice(), &[1.0, 3.0]);
}

#[test]
fn variational_rhs_sums_both_slots() {
    let u = BlockVec::from_slices(&[2.0], &[]);
    let du = BlockVec::from_slices(&[1.0], &[]);
    assert_eq!(variational_rhs(&Square, 0.0, &u, &du).unwrap().get(0), 4.0);
    assert_eq!(canonical_adjoint_rhs(&Square, 0.0, &u, &du).unwrap().get(0), -4.0);
}

#[test]
fn linear_field_matches_dense_matrix() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let shape = BlockShape::new(3, 4);
    let a1 = common::random_matrix(&mut rng, 7, 1.0);
    let a2 = common::random_matrix(&mut rng, 7, 1.0);
    let f = LinearField::new(BlockOp::from_dense(shape, &a1).unwrap(), BlockOp::from_dense(shape, &a2).unwrap());
    let u = random_vec(&mut rng, shape, -1.0, 1.0);
    let w = random_vec(&mut rng, shape, -1.0, 1.0);
    let a = &a1 + &a2;
    let expect_rate = &a * u.flatten();
    let expect_vjp = a.transpose() * w.flatten();
    assert_relative_eq!(rate(&f, 0.0, &u).unwrap().flatten(), expect_rate, epsilon = 1e-14);
    assert_relative_eq!(rate_vjp(&f, 0.0, &u, &w).unwrap().flatten(), expect_vjp, epsilon = 1e-14);
}

#[test]
fn nonlinear_rate_derivatives_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let shape = BlockShape::new(2, 3);
    let f = Coupled::random(&mut rng, shape);
    let u = random_vec(&mut rng, shape, -1.0, 1.0);
    let j = fd_jacobian(shape, &u, 1e-6, |v| rate(&f, 0.0, v).unwrap());
    for i in 0..shape.len() {
        let e = BlockVec::unit(shape, i);
        let col = rate_jvp(&f, 0.0, &u, &e).unwrap().flatten();
        let row = rate_vjp(&f, 0.0, &u, &e).unwrap().flatten();
        assert_relative_eq!(col, j.column(i).into_owned(), epsilon = 1e-8);
        assert_relative_eq!(row, j.row(i).transpose(), epsilon = 1e-8);
    }
}

#[test]
fn slot_jvp_matches_finite_differences_off_the_diagonal() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let shape = BlockShape::new(3, 2);
    let f = Coupled::random(&mut rng, shape);
    let u1 = random_vec(&mut rng, shape, -1.0, 1.0);
    let u2 = random_vec(&mut rng, shape, -1.0, 1.0);
    let du = random_vec(&mut rng, shape, -1.0, 1.0);
    let a = FieldArgs::new(0.0, &u1, 0.0, &u2);
    for (slot, exact) in [(Slot::Explicit, f.jvp_slot1(a, &du).unwrap()), (Slot::Implicit, f.jvp_slot2(a, &du).unwrap())] {
        let fd = fd_jvp(&f, a, slot, &du, 1e-6).unwrap();
        assert!((fd - exact).norm_inf() < 1e-8, "{slot:?}");
    }
}

#[test]
fn pairing_is_constant_along_exact_linear_flows() {
    // du' = diag(a, b) du, p' = -diag(a, b) p
    let (a, b) = (0.7, -1.3);
    let (mut p, mut du) = (Vec::new(), Vec::new());
    for k in 0..20 {
        let t = 0.1 * k as f64;
        du.push(BlockVec::from_slices(&[(a * t).exp()], &[2.0 * (b * t).exp()]));
        p.push(BlockVec::from_slices(&[3.0 * (-a * t).exp()], &[(-b * t).exp()]));
    }
    for d in pairing_drift(&p, &du, None) {
        assert!(d.abs() < 1e-14, "{d}");
    }

    // Under P = diag(2, 5), ξ = P^{-T} p keeps <ξ, P du> constant.
    let pm = PairingMap::new(BlockOp::block_diagonal(Mat::Diagonal(DVector::from_element(1, 2.0)), Mat::Diagonal(DVector::from_element(1, 5.0))).unwrap()).unwrap();
    let xi: Vec<BlockVec> = p.iter().map(|p| pm.solve_transpose(p)).collect();
    for d in pairing_drift(&xi, &du, Some(&pm)) {
        assert!(d.abs() < 1e-14, "{d}");
    }
}

#[test]
fn pairing_drift_reports_closed_form_offsets() {
    // p frozen at p(0) = (1, 0) while du = (e^t, 0): drift is e^t - 1.
    let ts = [0.0, 0.5, 1.0];
    let p: Vec<BlockVec> = ts.iter().map(|_| BlockVec::from_slices(&[1.0], &[0.0])).collect();
    let du: Vec<BlockVec> = ts.iter().map(|t| BlockVec::from_slices(&[f64::exp(*t)], &[4.0])).collect();
    let d = pairing_drift(&p, &du, None);
    for (d, t) in d.iter().zip(ts) {
        assert_relative_eq!(*d, t.exp() - 1.0, epsilon = 1e-15);
    }
    assert!(pairing_drift(&[], &[], None).is_empty());
}

#[test]
fn mass_enters_the_rate_and_its_transpose() {
    let shape = BlockShape::new(1, 1);
    let m = PairingMap::new(BlockOp::from_dense(shape, &DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 1.0])).unwrap()).unwrap();
    let sys = adjprec::precond::mass_matrix_adjoint_system(m, two_by_two()).unwrap();
    let u = BlockVec::from_slices(&[1.0], &[1.0]);
    // M^{-1} A u with A u = (3, 7): y = 7, x = (3 - 7) / 2
    assert_eq!(rate(&sys, 0.0, &u).unwrap().flatten().as_slice(), &[-2.0, 7.0]);
    // A^T M^{-T} w with w = (2, 0): M^{-T} w = (1, -1), A^T (1, -1) = (-2, -2)
    let w = BlockVec::from_slices(&[2.0], &[0.0]);
    assert_eq!(rate_vjp(&sys, 0.0, &u, &w).unwrap().flatten().as_slice(), &[-2.0, -2.0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn slot_transposes_are_consistent(seed in any::<u64>(), nx in 0usize..4, ny in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = BlockShape::new(nx, ny);
        let f = Coupled::random(&mut rng, shape);
        let u1 = random_vec(&mut rng, shape, -2.0, 2.0);
        let u2 = random_vec(&mut rng, shape, -2.0, 2.0);
        let du = random_vec(&mut rng, shape, -1.0, 1.0);
        let w = random_vec(&mut rng, shape, -1.0, 1.0);
        let a = FieldArgs::new(0.0, &u1, 0.0, &u2);
        for slot in [Slot::Explicit, Slot::Implicit] {
            prop_assert!(adjoint_consistency(&f, a, slot, &du, &w).unwrap() < 1e-13);
        }
    }

    #[test]
    fn assembled_jacobians_match_actions(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = BlockShape::new(2, 2);
        let f = Coupled::random(&mut rng, shape);
        let u = random_vec(&mut rng, shape, -2.0, 2.0);
        let du = random_vec(&mut rng, shape, -1.0, 1.0);
        let a = FieldArgs::diagonal(0.3, &u);
        let j1 = f.jacobian_slot1(a).unwrap().apply(&du);
        let j2 = f.jacobian_slot2(a).unwrap().apply(&du);
        prop_assert!((j1 - f.jvp_slot1(a, &du).unwrap()).norm_inf() < 1e-14);
        prop_assert!((j2 - f.jvp_slot2(a, &du).unwrap()).norm_inf() < 1e-14);
    }
}
