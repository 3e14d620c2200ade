//! Reference mechanical systems, their midpoint discretizations, trajectory
//! generation and measurement noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::diffcore::Real;
use crate::error::{check_dim, Error, Result};
use crate::integrator::{self, NewtonConfig};
use crate::lagrangian::{DiscreteLagrangian, Lagrangian};
use crate::model::SymmetryGenerator;

/// A known Lagrangian system with its physical constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum SystemSpec {
    /// Pendulum of mass `m1` and length `l` on a cart of mass `m2`;
    /// `q = (s, φ)` with `s` the cart position and `φ` the pendulum angle.
    #[serde(rename = "cartpend")]
    CartPendulum { m1: f64, m2: f64, l: f64, g: f64 },
    /// Planar two-body problem in relative coordinates `q = (x, y)`.
    Kepler {
        #[serde(rename = "G")]
        grav: f64,
        m1: f64,
        m2: f64,
    },
    /// `L = ½ q̇² − ½ ω² q²` in one dimension.
    #[serde(rename = "harmonic")]
    HarmonicOscillator { omega: f64 },
    /// `L = ½ m ‖q̇‖²`.
    FreeParticle { n_q: usize, mass: f64 },
}

/// Derived cart-pendulum coefficients.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CartPendulumCoefficients {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub d: f64,
}

impl SystemSpec {
    pub fn cartpend() -> Self {
        SystemSpec::CartPendulum { m1: 1.0, m2: 1.0, l: 1.0, g: 9.81 }
    }

    pub fn kepler() -> Self {
        SystemSpec::Kepler { grav: 6.673e-26, m1: 6e24, m2: 100.0 }
    }

    pub fn harmonic() -> Self {
        SystemSpec::HarmonicOscillator { omega: 1.0 }
    }

    pub fn free_particle(n_q: usize) -> Self {
        SystemSpec::FreeParticle { n_q, mass: 1.0 }
    }

    /// Default-parameter system by short name.
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "cartpend" => Ok(Self::cartpend()),
            "kepler" => Ok(Self::kepler()),
            "harmonic" => Ok(Self::harmonic()),
            "free_particle" => Ok(Self::free_particle(1)),
            other => Err(Error::invalid(format!(
                "unknown system {other:?} (expected cartpend, kepler, harmonic, free_particle)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SystemSpec::CartPendulum { .. } => "cartpend",
            SystemSpec::Kepler { .. } => "kepler",
            SystemSpec::HarmonicOscillator { .. } => "harmonic",
            SystemSpec::FreeParticle { .. } => "free_particle",
        }
    }

    pub fn cartpend_coefficients(&self) -> Option<CartPendulumCoefficients> {
        match *self {
            SystemSpec::CartPendulum { m1, m2, l, g } => {
                Some(CartPendulumCoefficients { alpha: m1 * l * l, beta: m1 * l, gamma: m1 + m2, d: -m1 * g * l })
            }
            _ => None,
        }
    }

    /// `G m1 m2` for the Kepler problem.
    pub fn kepler_coupling(&self) -> Option<f64> {
        match *self {
            SystemSpec::Kepler { grav, m1, m2 } => Some(grav * m1 * m2),
            _ => None,
        }
    }

    /// The known symmetry: cart translation, planar rotation, or translation
    /// of a free particle along its first axis.
    pub fn true_generator(&self) -> Option<SymmetryGenerator> {
        match *self {
            SystemSpec::CartPendulum { .. } => Some(SymmetryGenerator::translation(vec![1.0, 0.0])),
            SystemSpec::Kepler { .. } => {
                let h = std::f64::consts::FRAC_1_SQRT_2;
                Some(SymmetryGenerator::new(vec![0.0, h, -h, 0.0], vec![0.0, 0.0]).expect("2 × 2"))
            }
            SystemSpec::HarmonicOscillator { .. } => None,
            SystemSpec::FreeParticle { n_q, .. } => {
                let mut w = vec![0.0; n_q];
                w[0] = 1.0;
                Some(SymmetryGenerator::translation(w))
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            SystemSpec::CartPendulum { m1, m2, l, g } => {
                m1 > 0.0 && m2 > 0.0 && l > 0.0 && g.is_finite() && m1.is_finite() && m2.is_finite() && l.is_finite()
            }
            SystemSpec::Kepler { grav, m1, m2 } => (grav * m1 * m2).is_finite() && grav * m1 * m2 > 0.0,
            SystemSpec::HarmonicOscillator { omega } => omega.is_finite(),
            SystemSpec::FreeParticle { n_q, mass } => n_q > 0 && mass > 0.0 && mass.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid physical parameters for {}", self.name())))
        }
    }
}

impl Lagrangian for SystemSpec {
    fn n_q(&self) -> usize {
        match *self {
            SystemSpec::CartPendulum { .. } | SystemSpec::Kepler { .. } => 2,
            SystemSpec::HarmonicOscillator { .. } => 1,
            SystemSpec::FreeParticle { n_q, .. } => n_q,
        }
    }

    fn eval<S: Real>(&self, q: &[S], v: &[S]) -> S {
        match *self {
            SystemSpec::CartPendulum { .. } => {
                let c = self.cartpend_coefficients().expect("cart-pendulum");
                let (sd, phi, phid) = (v[0], q[1], v[1]);
                let kinetic = (phid * phid).scale(c.alpha)
                    + (phi.cos() * sd * phid).scale(2.0 * c.beta)
                    + (sd * sd).scale(c.gamma);
                kinetic.scale(0.5) + phi.cos().scale(c.d)
            }
            SystemSpec::Kepler { .. } => {
                let k = self.kepler_coupling().expect("kepler");
                let r = (q[0] * q[0] + q[1] * q[1]).sqrt();
                (v[0] * v[0] + v[1] * v[1]).scale(0.5) + r.recip().scale(k)
            }
            SystemSpec::HarmonicOscillator { omega } => (v[0] * v[0] - (q[0] * q[0]).scale(omega * omega)).scale(0.5),
            SystemSpec::FreeParticle { mass, .. } => v.iter().fold(S::zero(), |acc, &x| acc + x * x).scale(0.5 * mass),
        }
    }

    fn value(&self, q: &[f64], v: &[f64]) -> Result<f64> {
        check_dim(self.n_q(), q.len())?;
        check_dim(self.n_q(), v.len())?;
        if matches!(self, SystemSpec::Kepler { .. }) && q[0] == 0.0 && q[1] == 0.0 {
            return Err(Error::KeplerSingularity);
        }
        let x = self.eval(q, v);
        if x.is_finite() {
            Ok(x)
        } else {
            Err(Error::NonFinite("Lagrangian value".into()))
        }
    }
}

/// `L_d(q0, q1) = dt · L((q0 + q1)/2, (q1 − q0)/dt)` for a known system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrueMidpoint {
    pub system: SystemSpec,
    pub dt: f64,
}

impl TrueMidpoint {
    pub fn new(system: SystemSpec, dt: f64) -> Result<Self> {
        system.validate()?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid(format!("dt must be positive, got {dt}")));
        }
        Ok(Self { system, dt })
    }
}

impl DiscreteLagrangian for TrueMidpoint {
    fn n_q(&self) -> usize {
        self.system.n_q()
    }

    fn dt(&self) -> f64 {
        self.dt
    }

    fn eval<S: Real>(&self, q0: &[S], q1: &[S]) -> S {
        let mid: Vec<S> = q0.iter().zip(q1).map(|(&a, &b)| (a + b).scale(0.5)).collect();
        let vel: Vec<S> = q0.iter().zip(q1).map(|(&a, &b)| (b - a).scale(1.0 / self.dt)).collect();
        self.system.eval(&mid, &vel).scale(self.dt)
    }

    fn value(&self, q0: &[f64], q1: &[f64]) -> Result<f64> {
        check_dim(self.n_q(), q0.len())?;
        check_dim(self.n_q(), q1.len())?;
        let mid: Vec<f64> = q0.iter().zip(q1).map(|(a, b)| 0.5 * (a + b)).collect();
        let vel: Vec<f64> = q0.iter().zip(q1).map(|(a, b)| (b - a) / self.dt).collect();
        Ok(self.dt * self.system.value(&mid, &vel)?)
    }
}

/// Where a trajectory came from.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<SystemSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub noise_variance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fine_dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p0: Option<Vec<f64>>,
}

/// Configurations `q_0 … q_N` sampled at `t_k = t0 + k·dt`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    dt: f64,
    t0: f64,
    n_q: usize,
    points: Vec<Vec<f64>>,
    pub provenance: Option<Provenance>,
}

impl Trajectory {
    pub fn new(dt: f64, t0: f64, points: Vec<Vec<f64>>) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid(format!("dt must be positive, got {dt}")));
        }
        let n_q = points.first().map(Vec::len).ok_or_else(|| Error::invalid("trajectory has no points"))?;
        if n_q == 0 {
            return Err(Error::invalid("configuration dimension must be positive"));
        }
        for p in &points {
            check_dim(n_q, p.len())?;
        }
        Ok(Self { dt, t0, n_q, points, provenance: None })
    }

    pub fn with_provenance(mut self, p: Provenance) -> Self {
        self.provenance = Some(p);
        self
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub(crate) fn set_t0(&mut self, t0: f64) {
        self.t0 = t0;
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn n_q(&self) -> usize {
        self.n_q
    }

    /// Number of points, `N + 1`.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Number of steps `N`.
    pub fn n_steps(&self) -> usize {
        self.points.len() - 1
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.points[k]
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn truncated(&self, len: usize) -> Self {
        let mut t = self.clone();
        t.points.truncate(len.max(1));
        t
    }

    /// Half-range `(max − min)/2` of each component.
    pub fn amplitude(&self) -> Vec<f64> {
        (0..self.n_q)
            .map(|i| {
                let (lo, hi) = self
                    .points
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p[i]), hi.max(p[i])));
                0.5 * (hi - lo)
            })
            .collect()
    }

    pub(crate) fn push(&mut self, q: Vec<f64>) {
        debug_assert_eq!(q.len(), self.n_q);
        self.points.push(q);
    }
}

fn subsample_ratio(fine_dt: f64, coarse_dt: f64) -> Result<usize> {
    if !(fine_dt > 0.0 && coarse_dt > 0.0) {
        return Err(Error::invalid("step sizes must be positive"));
    }
    let r = coarse_dt / fine_dt;
    let k = r.round();
    if k < 1.0 || (r - k).abs() > 1e-9 * r {
        return Err(Error::invalid(format!(
            "coarse dt {coarse_dt} is not an integer multiple of fine dt {fine_dt}"
        )));
    }
    Ok(k as usize)
}

/// Integrates the true midpoint rule at `fine_dt` from `(q0, p0)` and keeps
/// every `coarse_dt / fine_dt`-th point, `N + 1` points in total.
pub fn generate(
    system: &SystemSpec,
    q0: &[f64],
    p0: &[f64],
    fine_dt: f64,
    coarse_dt: f64,
    n: usize,
    seed: u64,
) -> Result<Trajectory> {
    generate_with(system, q0, p0, fine_dt, coarse_dt, n, seed, &NewtonConfig::default())
}

#[allow(clippy::too_many_arguments)]
pub fn generate_with(
    system: &SystemSpec,
    q0: &[f64],
    p0: &[f64],
    fine_dt: f64,
    coarse_dt: f64,
    n: usize,
    seed: u64,
    cfg: &NewtonConfig,
) -> Result<Trajectory> {
    let ratio = subsample_ratio(fine_dt, coarse_dt)?;
    if n == 0 {
        return Err(Error::invalid("N must be at least 1"));
    }
    let ld = TrueMidpoint::new(*system, fine_dt)?;
    check_dim(ld.n_q(), q0.len())?;
    check_dim(ld.n_q(), p0.len())?;
    let q1 = integrator::initialize(&ld, q0, p0, cfg)?;
    let fine = integrator::rollout(&ld, q0, &q1, n * ratio, cfg)?.into_result()?;
    let points = fine.points().iter().step_by(ratio).cloned().collect();
    let provenance = Provenance {
        system: Some(*system),
        seed: Some(seed),
        fine_dt: Some(fine_dt),
        q0: Some(q0.to_vec()),
        p0: Some(p0.to_vec()),
        ..Provenance::default()
    };
    Ok(Trajectory::new(coarse_dt, 0.0, points)?.with_provenance(provenance))
}

/// Initial condition `i` of a multi-trajectory data set: the base `(q0, p0)`
/// shifted uniformly within `±spread` per component. Index 0 keeps the base.
pub fn perturbed_initial_condition(q0: &[f64], p0: &[f64], spread: f64, seed: u64, i: usize) -> (Vec<f64>, Vec<f64>) {
    if i == 0 || spread == 0.0 {
        return (q0.to_vec(), p0.to_vec());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
    let mut shift = |x: &f64| x + rng.random_range(-spread..=spread);
    let q = q0.iter().map(&mut shift).collect();
    let p = p0.iter().map(&mut shift).collect();
    (q, p)
}

/// Adds i.i.d. `N(0, variance)` noise to every component.
pub fn add_noise(traj: &Trajectory, variance: f64, seed: u64) -> Result<Trajectory> {
    if !(variance >= 0.0 && variance.is_finite()) {
        return Err(Error::invalid(format!("noise variance must be non-negative, got {variance}")));
    }
    let mut out = traj.clone();
    if variance > 0.0 {
        let normal = Normal::new(0.0, variance.sqrt()).map_err(|e| Error::invalid(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for p in &mut out.points {
            for x in p.iter_mut() {
                *x += normal.sample(&mut rng);
            }
        }
    }
    let mut prov = out.provenance.take().unwrap_or_default();
    prov.noise_variance = variance;
    prov.noise_seed = Some(seed);
    out.provenance = Some(prov);
    Ok(out)
}
