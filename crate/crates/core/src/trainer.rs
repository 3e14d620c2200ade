//! Full-batch Adam training of the network and symmetry generators.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{loss_and_grad, LossBreakdown, LossWeights, TrainingSet};
use crate::model::{Checkpoint, DiscreteLagrangianModel, LagrangianModel, SymmetryGenerator, TrainingMeta};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 3e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid Adam settings {self:?}")))
        }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }
}

/// One bias-corrected Adam update in place. Non-finite gradients leave both
/// parameters and state untouched.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    if params.len() != grads.len() || state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(Error::DimensionMismatch { expected: params.len(), got: grads.len() });
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!("gradient entry {i}")));
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub adam: AdamConfig,
    /// Epochs before the symmetry terms enter the objective and the
    /// generators start to move.
    pub symmetry_warmup_epochs: usize,
    pub seed: u64,
    pub weights: LossWeights,
    /// Emit a checkpoint every this many epochs; 0 only at the end.
    pub checkpoint_interval: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100_000,
            adam: AdamConfig::default(),
            symmetry_warmup_epochs: 5_000,
            seed: 0,
            weights: LossWeights::default(),
            checkpoint_interval: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        self.adam.validate()?;
        self.weights.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    #[serde(flatten)]
    pub loss: LossBreakdown,
}

pub enum TrainEvent<'a> {
    /// Loss at the start of an epoch, before that epoch's update.
    Epoch(&'a EpochRecord),
    Checkpoint(&'a Checkpoint),
}

#[derive(Debug)]
pub struct TrainOutcome {
    /// Final state, or the last finite state when training aborted.
    pub checkpoint: Checkpoint,
    pub history: Vec<EpochRecord>,
    pub aborted: Option<Error>,
}

fn snapshot(
    model: &DiscreteLagrangianModel,
    generators: &[SymmetryGenerator],
    cfg: &TrainConfig,
    epoch: usize,
    last: Option<&EpochRecord>,
) -> Checkpoint {
    let mode = if generators.is_empty() { "dlnn" } else { "symdlnn" };
    let meta = TrainingMeta {
        epoch,
        seed: cfg.seed,
        mode: Some(mode.into()),
        system: None,
        last_loss: last.map(|r| r.loss.clone()),
    };
    Checkpoint::new(LagrangianModel::Neural(model.clone()), generators.to_vec(), meta)
}

/// Runs `cfg.epochs` full-batch epochs. With no generators this is plain
/// discrete Lagrangian learning; otherwise the generators are frozen and
/// the symmetry terms excluded for the first `symmetry_warmup_epochs`.
///
/// A non-finite loss or gradient stops training; the outcome then holds the
/// last finite state and the error.
pub fn train(
    set: &TrainingSet,
    model: DiscreteLagrangianModel,
    generators: Vec<SymmetryGenerator>,
    cfg: &TrainConfig,
    mut hook: impl FnMut(TrainEvent<'_>) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if model.n_q() != set.n_q() {
        return Err(Error::DimensionMismatch { expected: model.n_q(), got: set.n_q() });
    }
    if (model.dt() - set.dt()).abs() > 1e-12 * set.dt() {
        return Err(Error::invalid(format!("model dt {} differs from data dt {}", model.dt(), set.dt())));
    }
    let n_q = model.n_q();
    let gen_len = n_q * n_q + n_q;
    let mut model = model;
    let mut generators = generators;
    let mut params = model.params();
    let mut gen_params: Vec<f64> = generators.iter().flat_map(|g| g.flat()).collect();
    let mut model_state = AdamState::new(params.len());
    let mut gen_state = AdamState::new(gen_params.len());
    let mut history: Vec<EpochRecord> = Vec::with_capacity(cfg.epochs);
    let mut completed = 0;
    let mut aborted = None;

    for epoch in 1..=cfg.epochs {
        let active = !generators.is_empty() && epoch > cfg.symmetry_warmup_epochs;
        let grad = match loss_and_grad(&model, &generators, set, &cfg.weights, active) {
            Ok(g) => g,
            Err(e @ Error::NonFinite(_)) => {
                aborted = Some(e);
                break;
            }
            Err(e) => return Err(e),
        };
        history.push(EpochRecord { epoch, loss: grad.breakdown });
        hook(TrainEvent::Epoch(history.last().expect("just pushed")))?;

        let mut next = params.clone();
        if let Err(e) = adam_step(&mut next, &grad.model, &mut model_state, &cfg.adam) {
            aborted = Some(e);
            break;
        }
        let mut next_gen = gen_params.clone();
        if active {
            let flat: Vec<f64> = grad.generators.concat();
            if let Err(e) = adam_step(&mut next_gen, &flat, &mut gen_state, &cfg.adam) {
                aborted = Some(e);
                break;
            }
        }
        if next.iter().chain(&next_gen).any(|x| !x.is_finite()) {
            aborted = Some(Error::NonFinite(format!("parameters after epoch {epoch}")));
            break;
        }
        params = next;
        gen_params = next_gen;
        model.set_params(&params)?;
        if active {
            generators = gen_params
                .chunks(gen_len)
                .map(|c| SymmetryGenerator::from_flat(n_q, c))
                .collect::<Result<_>>()?;
        }
        completed = epoch;
        if cfg.checkpoint_interval > 0 && epoch % cfg.checkpoint_interval == 0 && epoch < cfg.epochs {
            let c = snapshot(&model, &generators, cfg, completed, history.last());
            hook(TrainEvent::Checkpoint(&c))?;
        }
    }
    let checkpoint = snapshot(&model, &generators, cfg, completed, history.last());
    hook(TrainEvent::Checkpoint(&checkpoint))?;
    Ok(TrainOutcome { checkpoint, history, aborted })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Activation;
    use crate::systems::{generate, SystemSpec};
    use proptest::prelude::*;

    #[test]
    fn zero_gradient_keeps_parameters() {
        let mut p = vec![1.0, -2.0];
        let mut s = AdamState { m: vec![0.5, 0.5], v: vec![1.0, 1.0], t: 3 };
        adam_step(&mut p, &[0.0, 0.0], &mut s, &AdamConfig::default()).unwrap();
        // momentum keeps moving the parameters; with zero moments they stay
        let mut q = vec![1.0, -2.0];
        let mut z = AdamState::new(2);
        adam_step(&mut q, &[0.0, 0.0], &mut z, &AdamConfig::default()).unwrap();
        assert_eq!(q, vec![1.0, -2.0]);
        assert_eq!(s.m, vec![0.45, 0.45]);
        assert!((s.v[0] - 0.999).abs() < 1e-15);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let cfg = AdamConfig::default();
        let mut p = vec![0.0; 3];
        let mut s = AdamState::new(3);
        adam_step(&mut p, &[0.3, -20.0, 1e-3], &mut s, &cfg).unwrap();
        for (x, sign) in p.iter().zip([-1.0, 1.0, -1.0]) {
            assert!((x - sign * cfg.learning_rate).abs() < 1e-7 * cfg.learning_rate.max(1.0), "{x}");
        }
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut p = vec![0.0; 2];
        let mut s = AdamState::new(2);
        let r = adam_step(&mut p, &[f64::NAN, 0.0], &mut s, &AdamConfig::default());
        assert!(matches!(r, Err(Error::NonFinite(_))));
        assert_eq!(s.t, 0);
    }

    fn tiny_data() -> TrainingSet {
        let t = generate(&SystemSpec::harmonic(), &[1.0], &[0.0], 0.01, 0.1, 30, 0).unwrap();
        TrainingSet::new(&[t]).unwrap()
    }

    fn tiny_model(seed: u64) -> DiscreteLagrangianModel {
        DiscreteLagrangianModel::init(seed, 1, 0.1, Activation::Tanh, &[16, 16]).unwrap()
    }

    fn cfg(epochs: usize, warmup: usize) -> TrainConfig {
        TrainConfig { epochs, symmetry_warmup_epochs: warmup, seed: 1, ..TrainConfig::default() }
    }

    #[test]
    fn training_is_deterministic() {
        let set = tiny_data();
        let g = vec![SymmetryGenerator::random(1, 2, 0.5)];
        let run = || train(&set, tiny_model(4), g.clone(), &cfg(30, 10), |_| Ok(())).unwrap();
        let (a, b) = (run(), run());
        assert_eq!(a.checkpoint, b.checkpoint);
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn generators_frozen_during_warmup() {
        let set = tiny_data();
        let g0 = SymmetryGenerator::new(vec![0.1], vec![0.7]).unwrap();
        let mut seen = Vec::new();
        train(&set, tiny_model(4), vec![g0.clone()], &cfg(20, 10), |e| {
            if let TrainEvent::Checkpoint(c) = e {
                seen.push((c.meta.epoch, c.generators[0].clone()));
            }
            Ok(())
        })
        .unwrap();
        let c10 = train(&set, tiny_model(4), vec![g0.clone()], &cfg(10, 10), |_| Ok(())).unwrap();
        assert_eq!(c10.checkpoint.generators[0], g0);
        assert_ne!(seen.last().unwrap().1, g0);
    }

    #[test]
    fn warmup_boundary_adds_symmetry_terms() {
        let set = tiny_data();
        let g0 = SymmetryGenerator::new(vec![0.1], vec![0.7]).unwrap();
        let out = train(&set, tiny_model(4), vec![g0], &cfg(6, 5), |_| Ok(())).unwrap();
        let (before, after) = (&out.history[4].loss, &out.history[5].loss);
        assert!(!before.symmetry_active && after.symmetry_active);
        let w = LossWeights::default();
        let expected = after.del + after.degeneracy + after.symmetry + after.nontriviality + after.orthogonality;
        assert!((after.total - expected).abs() <= 1e-12 * expected);
        assert!((before.total - before.del - before.degeneracy).abs() <= 1e-12 * before.total);
        assert!(out.history.iter().all(|r| (r.loss.total - r.loss.weighted_total(&w)).abs() <= 1e-12 * r.loss.total.abs()));
    }

    #[test]
    fn dlnn_mode_never_activates_symmetry() {
        let set = tiny_data();
        let out = train(&set, tiny_model(4), vec![], &cfg(5, 0), |_| Ok(())).unwrap();
        assert!(out.history.iter().all(|r| !r.loss.symmetry_active && r.loss.symmetry == 0.0));
        assert_eq!(out.checkpoint.meta.mode.as_deref(), Some("dlnn"));
    }

    #[test]
    fn harmonic_training_reduces_del_loss() {
        let t = generate(&SystemSpec::harmonic(), &[1.0], &[0.0], 0.01, 0.1, 60, 0).unwrap();
        let set = TrainingSet::new(&[t]).unwrap();
        let model = DiscreteLagrangianModel::init_default(7, 1, 0.1).unwrap();
        let out = train(&set, model, vec![], &cfg(2000, 0), |_| Ok(())).unwrap();
        let first = out.history[0].loss.del;
        let tail = out.history[1900..].iter().map(|r| r.loss.del).sum::<f64>() / 100.0;
        assert!(first / tail >= 100.0, "{first} → {tail}");
    }

    #[test]
    fn mismatched_step_is_rejected() {
        let set = tiny_data();
        let m = DiscreteLagrangianModel::init(1, 1, 0.2, Activation::Tanh, &[4]).unwrap();
        assert!(train(&set, m, vec![], &cfg(1, 0), |_| Ok(())).is_err());
    }

    #[test]
    fn aborts_with_last_finite_state() {
        let set = tiny_data();
        let mut m = tiny_model(1);
        let mut huge = m.params();
        let n = huge.len();
        // output layer only, so the hidden units stay unsaturated
        huge[n - 17..].iter_mut().for_each(|x| *x *= 1e200);
        m.set_params(&huge).unwrap();
        let out = train(&set, m.clone(), vec![], &cfg(3, 0), |_| Ok(())).unwrap();
        assert!(out.aborted.is_some());
        assert_eq!(out.checkpoint.meta.epoch, 0);
        assert_eq!(out.checkpoint.model, LagrangianModel::Neural(m));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn adam_update_is_bounded_by_learning_rate(g in prop::collection::vec(-1e3f64..1e3, 1..8)) {
            let cfg = AdamConfig::default();
            let mut p = vec![0.0; g.len()];
            let mut s = AdamState::new(g.len());
            adam_step(&mut p, &g, &mut s, &cfg).unwrap();
            for x in p {
                prop_assert!(x.abs() <= cfg.learning_rate * (1.0 + 1e-9));
            }
        }
    }
}
