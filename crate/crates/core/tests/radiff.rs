use adjprec::adjoint::check::adjoint_consistency;
use adjprec::adjoint::{FieldArgs, PartitionedField, Slot};
use adjprec::blockla::BlockVec;
use adjprec::radiff::{
    marshak_problem, perturbed_initial_state, wavefront_position, write_snapshot, GaussianBump, LeftBoundary,
    RadDiffConfig, RadiationDiffusion, SNAPSHOT_HEADER,
};
use adjprec::timeint::{integrate_forward_observed, semi_implicit_step, StepConfig};
use approx::assert_relative_eq;
use nalgebra::DVector;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const C: f64 = 2.99792e10;
const A: f64 = 137.2;

fn zero_flux(n: usize) -> RadDiffConfig {
    RadDiffConfig { left_boundary: LeftBoundary::ZeroFlux, ..RadDiffConfig::default().with_cells(n) }
}

/// A nonequilibrium state with temperatures between 1 and 50 eV.
fn warm_state(cfg: &RadDiffConfig, rng: &mut impl Rng) -> BlockVec {
    let t = DVector::from_fn(cfg.n, |_, _| rng.gen_range(1.0f64..50.0));
    let e = t.map(|v| A * C * v.powi(4) * rng.gen_range(0.5..1.5));
    BlockVec::new(e, t)
}

#[test]
fn material_constants() {
    let cfg = RadDiffConfig::default();
    assert_relative_eq!(cfg.sigma(1200.0), 1e12 / 1.728e9, max_relative = 1e-14);
    assert_relative_eq!(cfg.sigma(1200.0), 578.7037, max_relative = 1e-6);
    assert_relative_eq!(cfg.diffusion(0.025), C / 3.0 * 1.5625e-5 / 1e12, max_relative = 1e-14);
    assert_relative_eq!(cfg.diffusion(0.025), 1.5614e-7, max_relative = 1e-4);

    let e0 = cfg.equilibrium_energy(0.025);
    assert!((e0 / 1.61e6 - 1.0).abs() < 0.01, "{e0}");
    let range = cfg.diffusion_dynamic_range();
    assert_relative_eq!(range, 48000f64.powi(3), max_relative = 1e-12);
    assert!((range / 1.1e14 - 1.0).abs() < 0.01, "{range}");
}

#[test]
fn floor_freezes_coefficients() {
    let cfg = RadDiffConfig::default();
    assert_eq!(cfg.sigma(0.0), cfg.sigma(cfg.t_floor));
    assert_eq!(cfg.dsigma(cfg.t_floor * 0.5), 0.0);
    assert_eq!(cfg.ddiffusion(-1.0), 0.0);
    let field = RadiationDiffusion::new(cfg.clone().with_cells(4)).unwrap();
    assert!(!field.floor_activated());
    let mut u = cfg.with_cells(4).equilibrium_state(0.025);
    u.y[2] = 0.0;
    field.value(FieldArgs::diagonal(0.0, &u)).unwrap();
    assert!(field.floor_activated());
}

#[test]
fn invalid_configs_are_rejected() {
    assert!(RadDiffConfig::default().with_cells(1).validate().is_err());
    for bad in [
        RadDiffConfig { c: 0.0, ..Default::default() },
        RadDiffConfig { t_floor: -1.0, ..Default::default() },
        RadDiffConfig { length: f64::NAN, ..Default::default() },
    ] {
        assert!(RadiationDiffusion::new(bad).is_err());
    }
}

#[test]
fn equilibrium_is_a_fixed_point() {
    for cfg in [zero_flux(30), RadDiffConfig::default().with_cells(30)] {
        let t = if cfg.left_boundary == LeftBoundary::Drive { cfg.t_drive } else { cfg.t_initial };
        let field = RadiationDiffusion::new(cfg.clone()).unwrap();
        let u = cfg.equilibrium_state(t);
        let out = semi_implicit_step(&field, 0.0, &u, &StepConfig::new(5e-13)).unwrap();
        let rel = (&out.state - &u).x.amax() / u.x.amax();
        let rel_t = (&out.state - &u).y.amax() / u.y.amax();
        assert!(rel <= 1e-10 && rel_t <= 1e-10, "{rel} {rel_t}");
    }
}

#[test]
fn exchange_conserves_total_energy_without_flux() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cfg = zero_flux(25);
    let field = RadiationDiffusion::new(cfg.clone()).unwrap();
    for _ in 0..10 {
        let u = warm_state(&cfg, &mut rng);
        let f = field.value(FieldArgs::diagonal(0.0, &u)).unwrap();
        let total: f64 = f.x.sum() + f.y.sum();
        let scale: f64 = f.x.abs().sum() + f.y.abs().sum();
        assert!(total.abs() <= 1e-10 * scale, "{total} vs {scale}");
    }

    // and the semi-implicit step keeps the mass-weighted energy
    let u = warm_state(&cfg, &mut rng);
    let energy = |u: &BlockVec| cfg.dx() * (u.x.sum() + cfg.rho * cfg.c_v * u.y.sum());
    let out = semi_implicit_step(&field, 0.0, &u, &StepConfig::new(1e-12).with_tol(0.0)).unwrap();
    assert_relative_eq!(energy(&out.state), energy(&u), max_relative = 1e-12);
}

/// Jacobian column `i` by Richardson-extrapolated central differences with a
/// step relative to `u_i`. The large step keeps round-off of the ~1e21
/// exchange terms out of the small transport derivatives.
fn fd_column(field: &RadiationDiffusion, u1: &BlockVec, u2: &BlockVec, slot: Slot, i: usize) -> BlockVec {
    let base = if slot == Slot::Explicit { u1 } else { u2 };
    let h = 1e-3 * base.get(i).abs();
    let eval = |d: f64| {
        let mut v = base.clone();
        v.set(i, base.get(i) + d);
        match slot {
            Slot::Explicit => field.value(FieldArgs::new(0.0, &v, 0.0, u2)).unwrap(),
            Slot::Implicit => field.value(FieldArgs::new(0.0, u1, 0.0, &v)).unwrap(),
        }
    };
    let wide = (eval(h) - eval(-h)).scaled(0.5 / h);
    let narrow = (eval(0.5 * h) - eval(-0.5 * h)).scaled(1.0 / h);
    (narrow.scaled(4.0) - wide).scaled(1.0 / 3.0)
}

#[test]
fn slot_derivatives_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cfg = RadDiffConfig::default().with_cells(8);
    let field = RadiationDiffusion::new(cfg.clone()).unwrap();
    let u1 = warm_state(&cfg, &mut rng);
    let u2 = warm_state(&cfg, &mut rng);
    let a = FieldArgs::new(0.0, &u1, 0.0, &u2);
    for slot in [Slot::Explicit, Slot::Implicit] {
        for i in 0..cfg.shape().len() {
            let e = BlockVec::unit(cfg.shape(), i);
            let exact = match slot {
                Slot::Explicit => field.jvp_slot1(a, &e).unwrap(),
                Slot::Implicit => field.jvp_slot2(a, &e).unwrap(),
            };
            let fd = fd_column(&field, &u1, &u2, slot, i);
            for (block_fd, block_ex) in [(&fd.x, &exact.x), (&fd.y, &exact.y)] {
                let scale = block_ex.amax().max(block_fd.amax());
                assert!((block_fd - block_ex).amax() <= 1e-6 * scale + 1e-300, "{slot:?} column {i}");
            }
        }
    }
}

#[test]
fn assembled_jacobians_match_actions() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let cfg = RadDiffConfig::default().with_cells(6);
    let field = RadiationDiffusion::new(cfg.clone()).unwrap();
    let u1 = warm_state(&cfg, &mut rng);
    let u2 = warm_state(&cfg, &mut rng);
    let a = FieldArgs::new(0.0, &u1, 0.0, &u2);
    let j1 = field.jacobian_slot1(a).unwrap().to_dense();
    let j2 = field.jacobian_slot2(a).unwrap().to_dense();
    for i in 0..12 {
        let e = BlockVec::unit(cfg.shape(), i);
        let c1 = field.jvp_slot1(a, &e).unwrap().flatten();
        let c2 = field.jvp_slot2(a, &e).unwrap().flatten();
        assert!((j1.column(i) - &c1).amax() <= 1e-14 * c1.amax().max(1.0));
        assert!((j2.column(i) - &c2).amax() <= 1e-14 * c2.amax().max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn radiation_vjp_is_the_transpose_of_jvp(seed in any::<u64>(), n in 2usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = RadDiffConfig::default().with_cells(n);
        let field = RadiationDiffusion::new(cfg.clone()).unwrap();
        let u1 = warm_state(&cfg, &mut rng);
        let u2 = warm_state(&cfg, &mut rng);
        let du = BlockVec::new(u1.x.map(|v| v * rng.gen_range(-1e-3..1e-3)), u1.y.map(|v| v * rng.gen_range(-1e-3..1e-3)));
        let w = BlockVec::new(DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0)), DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0)));
        let a = FieldArgs::new(0.0, &u1, 0.0, &u2);
        for slot in [Slot::Explicit, Slot::Implicit] {
            prop_assert!(adjoint_consistency(&field, a, slot, &du, &w).unwrap() < 1e-12);
        }
    }
}

#[test]
fn marshak_wave_advances_with_monotone_profiles() {
    let cfg = RadDiffConfig::default().with_cells(50);
    let prob = marshak_problem(cfg.clone()).unwrap();
    assert!(prob.initial.x.iter().all(|e| (*e / 1.61e6 - 1.0).abs() < 0.01));
    let mut fronts = Vec::new();
    let mut worst_rise = 0.0f64;
    integrate_forward_observed(&prob.field, &prob.initial, 5e-9, &StepConfig::new(5e-13), |n, _, u| {
        if n % 500 == 0 {
            fronts.push(wavefront_position(&cfg, u, 10.0));
            for w in u.y.as_slice().windows(2) {
                worst_rise = worst_rise.max((w[1] - w[0]) / w[0]);
            }
        }
    })
    .unwrap();
    assert!(fronts.windows(2).all(|w| w[1] >= w[0]), "{fronts:?}");
    assert!(fronts.last().unwrap() > &0.0);
    assert!(fronts.last().unwrap() < &cfg.length);
    assert!(worst_rise <= 1e-9, "{worst_rise}");
    assert!(!prob.field.floor_activated());
}

#[test]
fn bump_raises_the_center_and_keeps_equilibrium() {
    let cfg = RadDiffConfig::default().with_cells(40);
    let bump = GaussianBump::default();
    let u = perturbed_initial_state(&cfg, &bump);
    let grid = cfg.grid();
    let mid = grid.iter().position(|x| (x - bump.center).abs() < cfg.dx()).unwrap();
    let expect = cfg.t_initial + bump.amplitude * (-((grid[mid] - bump.center) / bump.width).powi(2)).exp();
    assert_relative_eq!(u.y[mid], expect, max_relative = 1e-15);
    for i in 0..cfg.n {
        assert_relative_eq!(u.x[i], A * C * u.y[i].powi(4), max_relative = 1e-14);
    }
    assert_relative_eq!(u.y[0], cfg.t_initial, max_relative = 1e-6);
}

#[test]
fn snapshot_has_unit_header() {
    let cfg = RadDiffConfig::default().with_cells(5);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("snap.csv");
    write_snapshot(&path, &cfg, &cfg.equilibrium_state(1.0)).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), SNAPSHOT_HEADER.join(","));
    let first: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(first, vec![0.025, A * C, 1.0]);
    assert_eq!(lines.count(), 4);
}
