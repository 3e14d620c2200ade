//! Post-training diagnostics: recreation and prediction rollouts, conserved
//! quantities, energies, symmetry residuals and trajectory errors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::integrator::{discrete_momentum, rollout, NewtonConfig};
use crate::lagrangian::DiscreteLagrangian;
use crate::model::{Checkpoint, SymmetryGenerator};
use crate::systems::{SystemSpec, Trajectory};
use crate::vbea::{hamiltonian, momentum, recover_velocity_with, vbea_energy, VelocityEstimator};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Recreation,
    Prediction,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Recreation => "recreation",
            Phase::Prediction => "prediction",
        }
    }
}

/// Rollout seeded from the first two reference points. Indices `k ≤ split`
/// cover the observed window, later ones are extrapolation.
#[derive(Debug)]
pub struct Prediction {
    pub trajectory: Trajectory,
    pub split: usize,
    /// Solver failure at `failed_index()`, with the points before it kept.
    pub failure: Option<Error>,
}

impl Prediction {
    pub fn phase(&self, k: usize) -> Phase {
        if k <= self.split {
            Phase::Recreation
        } else {
            Phase::Prediction
        }
    }

    /// Index of the point that could not be computed.
    pub fn failed_index(&self) -> Option<usize> {
        match &self.failure {
            Some(Error::Rollout { index, .. }) => Some(index + 1),
            _ => None,
        }
    }

    pub fn failure_phase(&self) -> Option<Phase> {
        self.failed_index().map(|k| self.phase(k))
    }
}

pub fn recreate_and_predict<L: DiscreteLagrangian>(
    ld: &L,
    reference: &Trajectory,
    n_extra: usize,
    cfg: &NewtonConfig,
) -> Result<Prediction> {
    check_dim(ld.n_q(), reference.n_q())?;
    if reference.len() < 2 {
        return Err(Error::TrajectoryTooShort { points: reference.len(), needed: 2 });
    }
    if (ld.dt() - reference.dt()).abs() > 1e-12 * reference.dt() {
        return Err(Error::invalid(format!("model dt {} differs from data dt {}", ld.dt(), reference.dt())));
    }
    let split = reference.n_steps();
    let r = rollout(ld, reference.point(0), reference.point(1), split + n_extra, cfg)?;
    let mut trajectory = r.trajectory;
    trajectory.set_t0(reference.t0());
    Ok(Prediction { trajectory, split, failure: r.failure })
}

/// Values defined on a contiguous index range of a trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub first_index: usize,
    pub values: Vec<f64>,
}

impl Series {
    pub fn get(&self, k: usize) -> Option<f64> {
        k.checked_sub(self.first_index).and_then(|i| self.values.get(i).copied())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `max − min`, or NaN if any value is NaN.
    pub fn spread(&self) -> f64 {
        if self.values.iter().any(|x| x.is_nan()) {
            return f64::NAN;
        }
        let max = self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = self.values.iter().copied().fold(f64::INFINITY, f64::min);
        if self.values.is_empty() {
            0.0
        } else {
            max - min
        }
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|x| x.is_finite())
    }
}

/// Where momenta come from.
#[derive(Clone, Copy, Debug)]
pub enum Mode<'a> {
    /// `p_k = −D1 L_d(q_k, q_{k+1})` from the checkpoint's discrete Lagrangian.
    Model,
    /// `∇_v L` of the known system at finite-difference velocities.
    True(&'a SystemSpec),
}

fn generator_action(g: &SymmetryGenerator, q: &[f64]) -> Vec<f64> {
    g.apply(q)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `I_k = p_kᵀ (M q_k + w)`. Model mode covers `0..len−1`; true mode the
/// central-difference range `1..len−1`.
pub fn conserved_series<L: DiscreteLagrangian>(
    ld: &L,
    traj: &Trajectory,
    generator: &SymmetryGenerator,
    mode: Mode<'_>,
) -> Result<Series> {
    check_dim(traj.n_q(), generator.n_q())?;
    match mode {
        Mode::Model => {
            check_dim(ld.n_q(), traj.n_q())?;
            let values = (0..traj.len().saturating_sub(1))
                .into_par_iter()
                .map(|k| {
                    let p = discrete_momentum(ld, traj.point(k), traj.point(k + 1))?;
                    Ok(dot(&p, &generator_action(generator, traj.point(k))))
                })
                .collect::<Result<_>>()?;
            Ok(Series { first_index: 0, values })
        }
        Mode::True(system) => {
            let est = VelocityEstimator::CentralDifference;
            let range = est.valid_range(traj.len());
            let values = range
                .clone()
                .into_par_iter()
                .map(|k| {
                    let q = traj.point(k);
                    let v = recover_velocity_with(traj, k, est)?;
                    let p = momentum(system, q, &v)?;
                    Ok(dot(&p, &generator_action(generator, q)))
                })
                .collect::<Result<_>>()?;
            Ok(Series { first_index: range.start, values })
        }
    }
}

/// Energy at finite-difference velocities: `H^VBEA` of the model's
/// continuous Lagrangian, or the true Hamiltonian.
pub fn energy_series<L: DiscreteLagrangian>(
    ld: &L,
    traj: &Trajectory,
    mode: Mode<'_>,
    est: VelocityEstimator,
) -> Result<Series> {
    let range = est.valid_range(traj.len());
    let values = range
        .clone()
        .into_par_iter()
        .map(|k| {
            let q = traj.point(k);
            let v = recover_velocity_with(traj, k, est)?;
            match mode {
                Mode::Model => vbea_energy(ld, q, &v),
                Mode::True(system) => hamiltonian(system, q, &v),
            }
        })
        .collect::<Result<_>>()?;
    Ok(Series { first_index: range.start, values })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualStats {
    pub max: f64,
    pub mean: f64,
}

/// Absolute discrete symmetry residual
/// `|D1 L_d(a, b)·ξ(a) + D2 L_d(a, b)·ξ(b)|` with `ξ(q) = M q + w`.
pub fn symmetry_residual<L: DiscreteLagrangian>(
    ld: &L,
    generator: &SymmetryGenerator,
    pairs: &[(Vec<f64>, Vec<f64>)],
) -> Result<ResidualStats> {
    check_dim(ld.n_q(), generator.n_q())?;
    if pairs.is_empty() {
        return Err(Error::invalid("no sample pairs"));
    }
    let r: Vec<f64> = pairs
        .par_iter()
        .map(|(a, b)| {
            let j = ld.jet(a, b)?;
            Ok((dot(&j.d1, &generator.apply(a)) + dot(&j.d2, &generator.apply(b))).abs())
        })
        .collect::<Result<_>>()?;
    Ok(ResidualStats {
        max: r.iter().copied().fold(0.0, f64::max),
        mean: r.iter().sum::<f64>() / r.len() as f64,
    })
}

pub fn consecutive_pairs(trajectories: &[Trajectory]) -> Vec<(Vec<f64>, Vec<f64>)> {
    trajectories
        .iter()
        .flat_map(|t| t.points().windows(2).map(|w| (w[0].clone(), w[1].clone())))
        .collect()
}

/// Pairs drawn uniformly from the box `[lo, hi]` in both slots.
pub fn random_pairs(lo: &[f64], hi: &[f64], count: usize, seed: u64) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    check_dim(lo.len(), hi.len())?;
    if lo.iter().zip(hi).any(|(a, b)| !(a <= b)) {
        return Err(Error::invalid("sample box has lo > hi"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        lo.iter().zip(hi).map(|(a, b)| if a == b { *a } else { rng.random_range(*a..*b) }).collect()
    };
    Ok((0..count).map(|_| (draw(&mut rng), draw(&mut rng))).collect())
}

/// Root mean square error, averaged over compared time steps and over
/// components: `sqrt(mean_k ‖e_k‖² / n_q)`. A constant offset `δ` on every
/// component gives `|δ|`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseError {
    pub rmse: f64,
    pub per_component: Vec<f64>,
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryError {
    pub recreation: PhaseError,
    /// `None` when the reference ends at the split.
    pub prediction: Option<PhaseError>,
}

fn phase_error(reference: &Trajectory, predicted: &Trajectory, range: std::ops::Range<usize>) -> PhaseError {
    let n = reference.n_q();
    let mut sq = vec![0.0; n];
    for k in range.clone() {
        for (i, s) in sq.iter_mut().enumerate() {
            let e = predicted.point(k)[i] - reference.point(k)[i];
            *s += e * e;
        }
    }
    let count = range.len() as f64;
    let per_component: Vec<f64> = sq.iter().map(|s| (s / count).sqrt()).collect();
    let rmse = (sq.iter().sum::<f64>() / (count * n as f64)).sqrt();
    PhaseError { rmse, per_component, points: range.len() }
}

/// Compares indices `0..=split` and `split+1..reference.len()`.
pub fn trajectory_error(reference: &Trajectory, predicted: &Trajectory, split: usize) -> Result<TrajectoryError> {
    check_dim(reference.n_q(), predicted.n_q())?;
    if (reference.dt() - predicted.dt()).abs() > 1e-12 * reference.dt() {
        return Err(Error::invalid(format!("dt {} vs {}", reference.dt(), predicted.dt())));
    }
    if split >= reference.len() {
        return Err(Error::BoundaryIndex { index: split, lo: 0, hi: reference.len().saturating_sub(1) });
    }
    if predicted.len() < reference.len() {
        return Err(Error::TrajectoryTooShort { points: predicted.len(), needed: reference.len() });
    }
    let recreation = phase_error(reference, predicted, 0..split + 1);
    let prediction = (split + 1 < reference.len()).then(|| phase_error(reference, predicted, split + 1..reference.len()));
    Ok(TrajectoryError { recreation, prediction })
}

/// Which generator the conserved-quantity columns use.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorChoice {
    #[default]
    Learned,
    True,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub k: usize,
    pub t: f64,
    pub phase: Phase,
    pub q: Vec<f64>,
    pub i_nn: Option<f64>,
    pub i_true: Option<f64>,
    pub h_vbea: Option<f64>,
    pub h_true: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub n_extra: usize,
    pub split: usize,
    pub points: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failed_index: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<TrajectoryError>,
    pub drift_i_nn: Option<f64>,
    pub drift_i_true: Option<f64>,
    pub drift_h_vbea: Option<f64>,
    pub drift_h_true: Option<f64>,
    pub symmetry_residual: Option<ResidualStats>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub rows: Vec<ReportRow>,
    pub summary: ReportSummary,
}

#[derive(Clone, Debug, Default)]
pub struct EvalOptions {
    pub n_extra: usize,
    pub generator: GeneratorChoice,
    /// Required for the true-system columns and for `GeneratorChoice::True`.
    pub system: Option<SystemSpec>,
    pub newton: NewtonConfig,
    pub velocity: VelocityEstimator,
    /// Reference extending past the observed window, for a prediction RMSE.
    pub extended_reference: Option<Trajectory>,
}

/// Builds the per-index report for one reference trajectory. A solver
/// failure truncates the rows but still yields a report.
pub fn evaluate(checkpoint: &Checkpoint, reference: &Trajectory, opts: &EvalOptions) -> Result<Report> {
    let ld = &checkpoint.model;
    let pred = recreate_and_predict(ld, reference, opts.n_extra, &opts.newton)?;
    let traj = &pred.trajectory;
    let generator = match opts.generator {
        GeneratorChoice::Learned => checkpoint.generators.first().cloned(),
        GeneratorChoice::True => Some(
            opts.system
                .as_ref()
                .and_then(SystemSpec::true_generator)
                .ok_or_else(|| Error::invalid("true generator needs a system with a known symmetry"))?,
        ),
    };
    let usable = traj.len() >= 3;
    let i_nn = match (&generator, usable) {
        (Some(g), true) => Some(conserved_series(ld, traj, g, Mode::Model)?),
        _ => None,
    };
    let i_true = match (&generator, &opts.system, usable) {
        (Some(g), Some(s), true) => Some(conserved_series(ld, traj, g, Mode::True(s))?),
        _ => None,
    };
    let energy_ok = traj.len() > 2 * opts.velocity.reach();
    let h_vbea = if energy_ok { Some(energy_series(ld, traj, Mode::Model, opts.velocity)?) } else { None };
    let h_true = match (&opts.system, energy_ok) {
        (Some(s), true) => Some(energy_series(ld, traj, Mode::True(s), opts.velocity)?),
        _ => None,
    };
    let at = |s: &Option<Series>, k: usize| s.as_ref().and_then(|s| s.get(k));
    let rows = (0..traj.len())
        .map(|k| ReportRow {
            k,
            t: traj.time(k),
            phase: pred.phase(k),
            q: traj.point(k).to_vec(),
            i_nn: at(&i_nn, k),
            i_true: at(&i_true, k),
            h_vbea: at(&h_vbea, k),
            h_true: at(&h_true, k),
        })
        .collect();

    let compare_to = opts.extended_reference.as_ref().unwrap_or(reference);
    let error = if traj.len() >= compare_to.len() {
        Some(trajectory_error(compare_to, traj, pred.split.min(compare_to.len() - 1))?)
    } else if traj.len() >= reference.len() {
        Some(trajectory_error(reference, traj, pred.split)?)
    } else {
        None
    };
    let symmetry_residual = match &generator {
        Some(g) => Some(symmetry_residual(ld, g, &consecutive_pairs(std::slice::from_ref(reference)))?),
        None => None,
    };
    let drift = |s: &Option<Series>| s.as_ref().map(Series::spread);
    let summary = ReportSummary {
        n_extra: opts.n_extra,
        split: pred.split,
        points: traj.len(),
        failed_index: pred.failed_index(),
        error,
        drift_i_nn: drift(&i_nn),
        drift_i_true: drift(&i_true),
        drift_h_vbea: drift(&h_vbea),
        drift_h_true: drift(&h_true),
        symmetry_residual,
    };
    Ok(Report { rows, summary })
}

/// [`evaluate`] over several references in parallel, in input order.
pub fn evaluate_all(checkpoint: &Checkpoint, references: &[Trajectory], opts: &EvalOptions) -> Vec<Result<Report>> {
    references.par_iter().map(|r| evaluate(checkpoint, r, opts)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lagrangian::testing::ConstantLd;
    use crate::model::{DiscreteLagrangianModel, LagrangianModel, TrainingMeta};
    use crate::systems::{generate, TrueMidpoint};
    use proptest::prelude::*;

    fn cart_reference(n: usize) -> Trajectory {
        generate(&SystemSpec::cartpend(), &[0.0, 2.9], &[0.5, 0.0], 0.01, 0.01, n, 0).unwrap()
    }

    fn oracle(system: SystemSpec, dt: f64) -> Checkpoint {
        let m = LagrangianModel::TrueMidpoint(TrueMidpoint::new(system, dt).unwrap());
        Checkpoint::new(m, system.true_generator().into_iter().collect(), TrainingMeta::default())
    }

    #[test]
    fn oracle_reproduces_reference() {
        let reference = cart_reference(200);
        let ckpt = oracle(SystemSpec::cartpend(), 0.01);
        let p = recreate_and_predict(&ckpt.model, &reference, 0, &NewtonConfig::default()).unwrap();
        assert!(p.failure.is_none());
        let e = trajectory_error(&reference, &p.trajectory, p.split).unwrap();
        assert!(e.recreation.rmse <= 1e-6, "{}", e.recreation.rmse);
        assert!(e.prediction.is_none());
        assert_eq!(p.trajectory.len(), reference.len());
    }

    #[test]
    fn oracle_prediction_matches_longer_reference() {
        let long = cart_reference(300);
        let short = long.truncated(201);
        let ckpt = oracle(SystemSpec::cartpend(), 0.01);
        let p = recreate_and_predict(&ckpt.model, &short, 100, &NewtonConfig::default()).unwrap();
        assert_eq!(p.phase(200), Phase::Recreation);
        assert_eq!(p.phase(201), Phase::Prediction);
        let e = trajectory_error(&long, &p.trajectory, p.split).unwrap();
        assert!(e.recreation.rmse <= 1e-6 && e.prediction.unwrap().rmse <= 1e-6);
    }

    #[test]
    fn constant_model_fails_at_first_step() {
        let reference = generate(&SystemSpec::free_particle(2), &[0.0, 0.0], &[1.0, 0.0], 0.1, 0.1, 10, 0).unwrap();
        let p = recreate_and_predict(&ConstantLd { n_q: 2, c: 1.0 }, &reference, 5, &NewtonConfig::default()).unwrap();
        assert_eq!(p.failed_index(), Some(2));
        assert_eq!(p.trajectory.len(), 2);
        assert!(p.failure.unwrap().is_solver_failure());
    }

    #[test]
    fn discrete_noether_for_cartpend_translation() {
        let sys = SystemSpec::cartpend();
        let ld = TrueMidpoint::new(sys, 0.01).unwrap();
        let traj = cart_reference(1000);
        let s = conserved_series(&ld, &traj, &sys.true_generator().unwrap(), Mode::Model).unwrap();
        assert_eq!((s.first_index, s.len()), (0, 1000));
        assert!(s.spread() <= 1e-8, "{}", s.spread());
    }

    #[test]
    fn zero_generator_gives_zero_series() {
        let sys = SystemSpec::cartpend();
        let ld = TrueMidpoint::new(sys, 0.01).unwrap();
        let traj = cart_reference(20);
        let s = conserved_series(&ld, &traj, &SymmetryGenerator::zero(2), Mode::Model).unwrap();
        assert!(s.values.iter().all(|&x| x == 0.0));
        let t = conserved_series(&ld, &traj, &SymmetryGenerator::zero(2), Mode::True(&sys)).unwrap();
        assert_eq!((t.first_index, t.len()), (1, 19));
        assert!(t.values.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn negated_generator_negates_series() {
        let sys = SystemSpec::kepler();
        let ld = TrueMidpoint::new(sys, 0.1).unwrap();
        let traj = generate(&sys, &[3.0, 0.0], &[0.0, 3.5], 0.01, 0.1, 50, 0).unwrap();
        let g = SymmetryGenerator::new(vec![0.2, 0.3, -0.1, 0.5], vec![0.4, -0.7]).unwrap();
        for mode in [Mode::Model, Mode::True(&sys)] {
            let a = conserved_series(&ld, &traj, &g, mode).unwrap();
            let b = conserved_series(&ld, &traj, &g.scaled(-1.0), mode).unwrap();
            for (x, y) in a.values.iter().zip(&b.values) {
                assert!((x + y).abs() <= 1e-12 * x.abs().max(1.0));
            }
        }
    }

    #[test]
    fn conserved_series_ignores_additive_constant() {
        let traj = cart_reference(30);
        let mut m = DiscreteLagrangianModel::init(2, 2, 0.01, crate::model::Activation::Tanh, &[8, 8]).unwrap();
        let g = SymmetryGenerator::new(vec![0.1, 0.2, 0.3, 0.4], vec![1.0, -1.0]).unwrap();
        let a = conserved_series(&m, &traj, &g, Mode::Model).unwrap();
        let mut p = m.params();
        *p.last_mut().unwrap() += 3.5;
        m.set_params(&p).unwrap();
        let b = conserved_series(&m, &traj, &g, Mode::Model).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn free_particle_energy_is_constant() {
        let sys = SystemSpec::free_particle(2);
        let ld = TrueMidpoint::new(sys, 0.1).unwrap();
        let traj = generate(&sys, &[0.0, 1.0], &[0.3, -0.4], 0.1, 0.1, 40, 0).unwrap();
        let h = energy_series(&ld, &traj, Mode::True(&sys), VelocityEstimator::CentralDifference).unwrap();
        for x in &h.values {
            assert!((x - 0.125).abs() <= 1e-13, "{x}");
        }
        let hv = energy_series(&ld, &traj, Mode::Model, VelocityEstimator::CentralDifference).unwrap();
        assert!(hv.spread() <= 1e-12);
    }

    #[test]
    fn true_energy_oscillation_is_second_order() {
        let sys = SystemSpec::harmonic();
        let spread = |dt: f64| {
            let n = (20.0 / dt).round() as usize;
            let t = generate(&sys, &[1.0], &[0.0], dt, dt, n, 0).unwrap();
            let ld = TrueMidpoint::new(sys, dt).unwrap();
            energy_series(&ld, &t, Mode::True(&sys), VelocityEstimator::CentralDifference).unwrap().spread()
        };
        let r = spread(0.1) / spread(0.05);
        assert!((3.5..4.5).contains(&r), "{r}");
    }

    #[test]
    fn vbea_energy_ratio_near_sixteen() {
        let sys = SystemSpec::harmonic();
        let spread = |dt: f64| {
            let n = (20.0 / dt).round() as usize;
            let t = generate(&sys, &[1.0], &[0.0], dt, dt, n, 0).unwrap();
            let ld = TrueMidpoint::new(sys, dt).unwrap();
            energy_series(&ld, &t, Mode::Model, VelocityEstimator::FivePoint).unwrap().spread()
        };
        let r = spread(0.1) / spread(0.05);
        assert!((12.0..20.0).contains(&r), "{r}");
    }

    #[test]
    fn true_cartpend_has_zero_symmetry_residual() {
        let sys = SystemSpec::cartpend();
        let ld = TrueMidpoint::new(sys, 0.01).unwrap();
        let pairs = random_pairs(&[-2.0, -3.0], &[2.0, 3.0], 200, 9).unwrap();
        let s = symmetry_residual(&ld, &sys.true_generator().unwrap(), &pairs).unwrap();
        assert!(s.max <= 1e-10, "{}", s.max);
    }

    #[test]
    fn random_model_breaks_symmetry_and_residual_is_linear() {
        let m = DiscreteLagrangianModel::init_default(3, 2, 0.01).unwrap();
        let g = SystemSpec::cartpend().true_generator().unwrap();
        let pairs = random_pairs(&[-1.0, -1.0], &[1.0, 1.0], 50, 1).unwrap();
        let a = symmetry_residual(&m, &g, &pairs).unwrap();
        assert!(a.max > 1e-6);
        let b = symmetry_residual(&m, &g.scaled(2.5), &pairs).unwrap();
        assert!((b.max - 2.5 * a.max).abs() <= 1e-12 * b.max);
        assert!((b.mean - 2.5 * a.mean).abs() <= 1e-12 * b.mean);
    }

    #[test]
    fn rmse_of_identical_trajectories_is_zero() {
        let t = cart_reference(20);
        let e = trajectory_error(&t, &t, 10).unwrap();
        assert_eq!(e.recreation.rmse, 0.0);
        assert_eq!(e.prediction.unwrap().rmse, 0.0);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let t = cart_reference(20);
        assert!(trajectory_error(&t, &t.truncated(10), 5).is_err());
        assert!(trajectory_error(&t, &t, 21).is_err());
    }

    #[test]
    fn report_has_both_phases() {
        let reference = cart_reference(50);
        let ckpt = oracle(SystemSpec::cartpend(), 0.01);
        let opts = EvalOptions { n_extra: 20, system: Some(SystemSpec::cartpend()), ..Default::default() };
        let r = evaluate(&ckpt, &reference, &opts).unwrap();
        assert_eq!(r.rows.len(), 71);
        assert_eq!(r.rows[50].phase, Phase::Recreation);
        assert_eq!(r.rows[51].phase, Phase::Prediction);
        assert!(r.rows[0].i_nn.is_some() && r.rows[0].i_true.is_none());
        assert!(r.rows[70].i_nn.is_none() && r.rows[70].h_vbea.is_none());
        assert!(r.summary.drift_i_nn.unwrap() <= 1e-8);
        assert!(r.summary.error.as_ref().unwrap().recreation.rmse <= 1e-6);
        assert!(r.summary.symmetry_residual.unwrap().max <= 1e-10);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn constant_offset_rmse_is_offset(delta in -5.0f64..5.0, split in 0usize..15) {
            let t = cart_reference(15);
            let shifted = Trajectory::new(
                t.dt(),
                t.t0(),
                t.points().iter().map(|p| p.iter().map(|x| x + delta).collect()).collect(),
            ).unwrap();
            let e = trajectory_error(&t, &shifted, split).unwrap();
            prop_assert!((e.recreation.rmse - delta.abs()).abs() <= 1e-12);
            for c in &e.recreation.per_component {
                prop_assert!((c - delta.abs()).abs() <= 1e-12);
            }
        }
    }
}
