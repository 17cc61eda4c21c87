//! One-dimensional gray radiation diffusion coupled to material temperature.
//!
//! ```text
//! ∂E/∂t    = ∂x(𝒟(T) ∂x E) - σ_a(T) (E - a c T⁴)
//! ρ c_v ∂T/∂t = σ_a(T) (E - a c T⁴)
//! ```
//!
//! with `σ_a(T) = σ₀ / T³` and `𝒟(T) = (c/3) / σ_a(T)` on `[0, l]`.
//! Cells are uniform and cell-centered; interface diffusion coefficients are
//! harmonic means of the neighbouring cell values. The discrete system is
//! kept in mass-matrix form with lumped masses `Δx I` (radiation) and
//! `ρ c_v Δx I` (material):
//!
//! ```text
//! M dE/dt     = K(T) E + b(T) - Σ_a(T) E + Em(T, T)
//! M_ρcv dT/dt = Σ_a(T) E - Em(T, T)
//! ```
//!
//! where `Em(T1, T2)_i = Δx a c σ_a(T1_i) T2_i⁴` and `b` carries the drive
//! at `x = 0`. The partition lags every temperature-dependent coefficient
//! (`K`, `Σ_a`, the `σ_a` factor of `Em`) in slot 1 and keeps `E` and the
//! `T⁴` factor implicit in slot 2. The right boundary has zero flux. At the
//! left boundary a ghost cell one spacing outside the domain holds
//! `T = T_drive` and either `E = a c T_drive⁴` (drive) or zero flux.
//!
//! The temperature floor only enters `σ_a` and `𝒟`; below it both are
//! frozen and their derivatives vanish.

use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::adjoint::{FieldArgs, PartitionedField};
use crate::blockla::{Banded, BlockOp, BlockShape, BlockVec, Mat};
use crate::error::{Error, Result};
use crate::precond::PairingMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LeftBoundary {
    /// Ghost radiation energy `a c T_drive⁴`.
    #[default]
    Drive,
    /// No radiation flux through `x = 0`.
    ZeroFlux,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadDiffConfig {
    /// Number of cells.
    pub n: usize,
    /// Domain length, cm.
    pub length: f64,
    /// Speed of light, cm/s.
    pub c: f64,
    /// Radiation constant.
    pub a: f64,
    /// Density, g/cm³.
    pub rho: f64,
    /// Specific heat.
    pub c_v: f64,
    /// `σ₀` in `σ_a(T) = σ₀ / T³`.
    pub sigma_coef: f64,
    /// Drive temperature at `x = 0`, eV.
    pub t_drive: f64,
    /// Floor applied inside `σ_a` and `𝒟`, eV.
    pub t_floor: f64,
    /// Initial uniform temperature, eV.
    pub t_initial: f64,
    pub left_boundary: LeftBoundary,
}

impl Default for RadDiffConfig {
    fn default() -> Self {
        Self {
            n: 100,
            length: 0.25,
            c: 2.99792e10,
            a: 137.2,
            rho: 1.0,
            c_v: 3e12,
            sigma_coef: 1e12,
            t_drive: 1200.0,
            t_floor: 1e-6,
            t_initial: 0.025,
            left_boundary: LeftBoundary::Drive,
        }
    }
}

impl RadDiffConfig {
    pub fn with_cells(mut self, n: usize) -> Self {
        self.n = n;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("length", self.length),
            ("c", self.c),
            ("a", self.a),
            ("rho", self.rho),
            ("c_v", self.c_v),
            ("sigma_coef", self.sigma_coef),
            ("t_drive", self.t_drive),
            ("t_floor", self.t_floor),
            ("t_initial", self.t_initial),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if self.n < 2 {
            return Err(Error::InvalidParameter(format!("need at least 2 cells, got {}", self.n)));
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        self.length / self.n as f64
    }

    pub fn ac(&self) -> f64 {
        self.a * self.c
    }

    pub fn shape(&self) -> BlockShape {
        BlockShape::new(self.n, self.n)
    }

    pub fn sigma(&self, t: f64) -> f64 {
        let t = t.max(self.t_floor);
        self.sigma_coef / (t * t * t)
    }

    pub fn dsigma(&self, t: f64) -> f64 {
        if t > self.t_floor {
            -3.0 * self.sigma(t) / t
        } else {
            0.0
        }
    }

    pub fn diffusion(&self, t: f64) -> f64 {
        self.c / 3.0 / self.sigma(t)
    }

    pub fn ddiffusion(&self, t: f64) -> f64 {
        if t > self.t_floor {
            3.0 * self.diffusion(t) / t
        } else {
            0.0
        }
    }

    /// `a c T⁴`
    pub fn equilibrium_energy(&self, t: f64) -> f64 {
        self.ac() * t.powi(4)
    }

    /// `𝒟(T_drive) / 𝒟(T_initial)`
    pub fn diffusion_dynamic_range(&self) -> f64 {
        self.diffusion(self.t_drive) / self.diffusion(self.t_initial)
    }

    /// Cell centers, cm.
    pub fn grid(&self) -> Vec<f64> {
        let dx = self.dx();
        (0..self.n).map(|i| (i as f64 + 0.5) * dx).collect()
    }

    /// Uniform state in radiative equilibrium at temperature `t`.
    pub fn equilibrium_state(&self, t: f64) -> BlockVec {
        BlockVec::new(DVector::from_element(self.n, self.equilibrium_energy(t)), DVector::from_element(self.n, t))
    }
}

fn harmonic(a: f64, b: f64) -> f64 {
    if a + b == 0.0 {
        0.0
    } else {
        2.0 * a * b / (a + b)
    }
}

/// `∂/∂a` of the harmonic mean.
fn dharmonic(a: f64, b: f64) -> f64 {
    let s = a + b;
    if s == 0.0 {
        0.0
    } else {
        2.0 * b * b / (s * s)
    }
}

pub struct RadiationDiffusion {
    config: RadDiffConfig,
    mass: PairingMap,
    floor_hit: AtomicBool,
}

impl Clone for RadiationDiffusion {
    fn clone(&self) -> Self {
        Self { config: self.config.clone(), mass: self.mass.clone(), floor_hit: AtomicBool::new(false) }
    }
}

impl std::fmt::Debug for RadiationDiffusion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RadiationDiffusion").field("config", &self.config).finish()
    }
}

struct Coefficients {
    sigma: Vec<f64>,
    dsigma: Vec<f64>,
    /// Interior faces `i + 1/2`, `i = 0..n-1`.
    face: Vec<f64>,
    /// Derivatives of `face[i]` with respect to `T_i` and `T_{i+1}`.
    dface_left: Vec<f64>,
    dface_right: Vec<f64>,
    boundary: f64,
    dboundary: f64,
    e_ghost: f64,
}

impl RadiationDiffusion {
    pub fn new(config: RadDiffConfig) -> Result<Self> {
        config.validate()?;
        let dx = config.dx();
        let mass = PairingMap::new(BlockOp::block_diagonal(
            Mat::scaled_identity(config.n, dx),
            Mat::scaled_identity(config.n, config.rho * config.c_v * dx),
        )?)?;
        Ok(Self { config, mass, floor_hit: AtomicBool::new(false) })
    }

    pub fn config(&self) -> &RadDiffConfig {
        &self.config
    }

    /// True once any evaluation has clamped a temperature to the floor.
    pub fn floor_activated(&self) -> bool {
        self.floor_hit.load(Ordering::Relaxed)
    }

    fn note_floor(&self, t: &DVector<f64>) {
        if t.iter().any(|v| *v <= self.config.t_floor) && !self.floor_hit.swap(true, Ordering::Relaxed) {
            log::warn!("temperature floor {} eV reached; sigma and diffusion frozen there", self.config.t_floor);
        }
    }

    fn coefficients(&self, t: &DVector<f64>) -> Coefficients {
        self.note_floor(t);
        let cfg = &self.config;
        let n = cfg.n;
        let d: Vec<f64> = t.iter().map(|&v| cfg.diffusion(v)).collect();
        let dd: Vec<f64> = t.iter().map(|&v| cfg.ddiffusion(v)).collect();
        let mut face = Vec::with_capacity(n - 1);
        let mut dface_left = Vec::with_capacity(n - 1);
        let mut dface_right = Vec::with_capacity(n - 1);
        for i in 0..n - 1 {
            face.push(harmonic(d[i], d[i + 1]));
            dface_left.push(dharmonic(d[i], d[i + 1]) * dd[i]);
            dface_right.push(dharmonic(d[i + 1], d[i]) * dd[i + 1]);
        }
        let (boundary, dboundary, e_ghost) = match cfg.left_boundary {
            LeftBoundary::Drive => {
                let db = cfg.diffusion(cfg.t_drive);
                (harmonic(db, d[0]), dharmonic(d[0], db) * dd[0], cfg.equilibrium_energy(cfg.t_drive))
            }
            LeftBoundary::ZeroFlux => (0.0, 0.0, 0.0),
        };
        Coefficients {
            sigma: t.iter().map(|&v| cfg.sigma(v)).collect(),
            dsigma: t.iter().map(|&v| cfg.dsigma(v)).collect(),
            face,
            dface_left,
            dface_right,
            boundary,
            dboundary,
            e_ghost,
        }
    }

    /// `K(T)` without the boundary source, as a tridiagonal matrix.
    pub fn stiffness(&self, t: &DVector<f64>) -> Banded {
        let c = self.coefficients(t);
        self.stiffness_from(&c)
    }

    fn stiffness_from(&self, c: &Coefficients) -> Banded {
        let n = self.config.n;
        let inv_dx = 1.0 / self.config.dx();
        let mut k = Banded::zeros(n, 1, 1);
        for (i, &df) in c.face.iter().enumerate() {
            let w = df * inv_dx;
            k.add_to(i, i, -w);
            k.add_to(i + 1, i + 1, -w);
            k.add_to(i, i + 1, w);
            k.add_to(i + 1, i, w);
        }
        k.add_to(0, 0, -c.boundary * inv_dx);
        k
    }
}

impl PartitionedField for RadiationDiffusion {
    fn shape(&self) -> BlockShape {
        self.config.shape()
    }

    fn value(&self, a: FieldArgs) -> Result<BlockVec> {
        let cfg = &self.config;
        let dx = cfg.dx();
        let c = self.coefficients(&a.u1.y);
        let (e, t2) = (&a.u2.x, &a.u2.y);
        let mut fe = DVector::zeros(cfg.n);
        let mut ft = DVector::zeros(cfg.n);
        for (i, &df) in c.face.iter().enumerate() {
            let flux = df * (e[i + 1] - e[i]) / dx;
            fe[i] += flux;
            fe[i + 1] -= flux;
        }
        fe[0] += c.boundary * (c.e_ghost - e[0]) / dx;
        for i in 0..cfg.n {
            let exchange = dx * c.sigma[i] * (e[i] - cfg.ac() * t2[i].powi(4));
            fe[i] -= exchange;
            ft[i] += exchange;
        }
        Ok(BlockVec::new(fe, ft))
    }

    fn jvp_slot1(&self, a: FieldArgs, du: &BlockVec) -> Result<BlockVec> {
        Ok(self.jacobian_slot1(a)?.apply(du))
    }

    fn jvp_slot2(&self, a: FieldArgs, du: &BlockVec) -> Result<BlockVec> {
        Ok(self.jacobian_slot2(a)?.apply(du))
    }

    fn vjp_slot1(&self, a: FieldArgs, w: &BlockVec) -> Result<BlockVec> {
        Ok(self.jacobian_slot1(a)?.apply_transpose(w))
    }

    fn vjp_slot2(&self, a: FieldArgs, w: &BlockVec) -> Result<BlockVec> {
        Ok(self.jacobian_slot2(a)?.apply_transpose(w))
    }

    fn jacobian_slot1(&self, a: FieldArgs) -> Result<BlockOp> {
        let cfg = &self.config;
        let n = cfg.n;
        let dx = cfg.dx();
        let c = self.coefficients(&a.u1.y);
        let (e, t2) = (&a.u2.x, &a.u2.y);
        let mut et = Banded::zeros(n, 1, 1);
        for i in 0..n - 1 {
            let de = (e[i + 1] - e[i]) / dx;
            et.add_to(i, i, c.dface_left[i] * de);
            et.add_to(i, i + 1, c.dface_right[i] * de);
            et.add_to(i + 1, i, -c.dface_left[i] * de);
            et.add_to(i + 1, i + 1, -c.dface_right[i] * de);
        }
        et.add_to(0, 0, c.dboundary * (c.e_ghost - e[0]) / dx);
        let mut tt = DVector::zeros(n);
        for i in 0..n {
            let local = dx * c.dsigma[i] * (e[i] - cfg.ac() * t2[i].powi(4));
            et.add_to(i, i, -local);
            tt[i] = local;
        }
        BlockOp::new(Mat::zero(n, n), Mat::Banded(et), Mat::zero(n, n), Mat::Diagonal(tt))
    }

    fn jacobian_slot2(&self, a: FieldArgs) -> Result<BlockOp> {
        let cfg = &self.config;
        let n = cfg.n;
        let dx = cfg.dx();
        let c = self.coefficients(&a.u1.y);
        let t2 = &a.u2.y;
        let mut ee = self.stiffness_from(&c);
        let mut absorb = DVector::zeros(n);
        let mut emit = DVector::zeros(n);
        for i in 0..n {
            absorb[i] = dx * c.sigma[i];
            emit[i] = dx * 4.0 * cfg.ac() * c.sigma[i] * t2[i].powi(3);
            ee.add_to(i, i, -absorb[i]);
        }
        BlockOp::new(Mat::Banded(ee), Mat::Diagonal(emit.clone()), Mat::Diagonal(absorb), Mat::Diagonal(-emit))
    }

    fn mass(&self) -> Option<&PairingMap> {
        Some(&self.mass)
    }

    fn block_names(&self) -> (&str, &str) {
        ("E", "T")
    }
}

/// Smooth bump added to the initial temperature:
/// `T += amplitude * exp(-((x - center) / width)²)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianBump {
    pub center: f64,
    pub width: f64,
    pub amplitude: f64,
}

impl Default for GaussianBump {
    fn default() -> Self {
        Self { center: 0.125, width: 0.025, amplitude: 0.025 }
    }
}

/// Driven Marshak-wave setup: cold uniform equilibrium and the drive at `x = 0`.
#[derive(Clone, Debug)]
pub struct MarshakProblem {
    pub field: RadiationDiffusion,
    pub initial: BlockVec,
}

pub fn marshak_problem(config: RadDiffConfig) -> Result<MarshakProblem> {
    let initial = config.equilibrium_state(config.t_initial);
    let field = RadiationDiffusion::new(config)?;
    Ok(MarshakProblem { field, initial })
}

/// Equilibrium initial state with a temperature bump and `E = a c T⁴`.
pub fn perturbed_initial_state(config: &RadDiffConfig, bump: &GaussianBump) -> BlockVec {
    let t = DVector::from_iterator(
        config.n,
        config
            .grid()
            .into_iter()
            .map(|x| config.t_initial + bump.amplitude * (-((x - bump.center) / bump.width).powi(2)).exp()),
    );
    let e = t.map(|v| config.equilibrium_energy(v));
    BlockVec::new(e, t)
}

/// Rightmost cell center with `T >= threshold`, or 0 when no cell qualifies.
pub fn wavefront_position(config: &RadDiffConfig, state: &BlockVec, threshold: f64) -> f64 {
    let grid = config.grid();
    (0..config.n).rev().find(|&i| state.y[i] >= threshold).map(|i| grid[i]).unwrap_or(0.0)
}

/// Column names of [`write_snapshot`], units in the suffix.
pub const SNAPSHOT_HEADER: [&str; 3] = ["x_cm", "E_erg_cm3", "T_eV"];

/// Writes the snapshot table with columns `x_cm,E_erg_cm3,T_eV`.
pub fn write_snapshot(path: &Path, config: &RadDiffConfig, state: &BlockVec) -> Result<()> {
    let grid = config.grid();
    crate::io::write_table(path, &SNAPSHOT_HEADER, (0..config.n).map(|i| vec![grid[i], state.x[i], state.y[i]]))
}
