//! Input jets of scalar fields on `Q × Q` and their parameter gradients.
//!
//! A [`Jet`] carries the value of `L_d(q0, q1)`, both input-block gradients
//! and the mixed block `D2 D1 L_d`. Objectives are composed from jets on a
//! scalar [`Tape`]; the tape yields adjoints for every jet entry, which a
//! [`ParametricJetField`] then pulls back to its parameters. Together this is
//! a third-order derivative (parameters × two input derivatives) without any
//! symbolic manipulation.

pub mod mlp;
pub mod real;
pub mod tape;

use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};

pub use real::{Dual, HyperDual, Real};
pub use tape::{Adjoints, Tape, Var};

/// Pairs processed per forward/backward work unit.
pub const CHUNK_PAIRS: usize = 64;
/// Above this many pairs the forward caches are dropped and recomputed in the
/// backward sweep.
const MAX_CACHED_PAIRS: usize = 8192;

/// Value and input derivatives of a scalar field `f(q0, q1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Jet {
    pub value: f64,
    /// `∇_{q0} f`
    pub d1: Vec<f64>,
    /// `∇_{q1} f`
    pub d2: Vec<f64>,
    /// Row-major `n_q × n_q`; entry `[i * n_q + j]` is `∂ d1[i] / ∂ q1[j]`.
    pub d2d1: Vec<f64>,
}

impl Jet {
    pub fn zeros(n_q: usize) -> Self {
        Self { value: 0.0, d1: vec![0.0; n_q], d2: vec![0.0; n_q], d2d1: vec![0.0; n_q * n_q] }
    }

    pub fn n_q(&self) -> usize {
        self.d1.len()
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
            && self.d1.iter().chain(&self.d2).chain(&self.d2d1).all(|x| x.is_finite())
    }
}

/// Sensitivities of an objective with respect to each entry of a [`Jet`].
pub type JetAdjoint = Jet;

/// Tape handles for the entries of one jet.
#[derive(Clone, Debug)]
pub struct JetVars {
    pub value: Var,
    pub d1: Vec<Var>,
    pub d2: Vec<Var>,
    pub d2d1: Vec<Var>,
}

impl JetVars {
    pub(crate) fn record(tape: &mut Tape, jet: &Jet) -> Self {
        Self {
            value: tape.leaf(jet.value),
            d1: jet.d1.iter().map(|&x| tape.leaf(x)).collect(),
            d2: jet.d2.iter().map(|&x| tape.leaf(x)).collect(),
            d2d1: jet.d2d1.iter().map(|&x| tape.leaf(x)).collect(),
        }
    }

    fn adjoint(&self, adj: &Adjoints) -> JetAdjoint {
        JetAdjoint {
            value: adj.get(self.value),
            d1: self.d1.iter().map(|&v| adj.get(v)).collect(),
            d2: self.d2.iter().map(|&v| adj.get(v)).collect(),
            d2d1: self.d2d1.iter().map(|&v| adj.get(v)).collect(),
        }
    }
}

/// Partial derivatives of an objective, one per model parameter, in the
/// model's canonical parameter order.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGradient(pub Vec<f64>);

impl ParamGradient {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// A scalar field on `Q × Q` with trainable parameters whose input jets can
/// be differentiated with respect to those parameters.
///
/// Inputs are passed as a flat slice of pairs, `2 · n_q` numbers per pair
/// laid out as `q0 ‖ q1`.
pub trait ParametricJetField: Sync {
    type Cache: Send + Sync;

    fn n_q(&self) -> usize;
    fn n_params(&self) -> usize;
    fn forward_jets(&self, inputs: &[f64]) -> Result<(Vec<Jet>, Self::Cache)>;
    /// Pulls jet adjoints back to parameter space.
    fn backward_jets(&self, cache: &Self::Cache, adjoints: &[JetAdjoint]) -> Vec<f64>;
}

/// Result of differentiating an objective built from jets.
#[derive(Debug, Clone)]
pub struct Objective {
    pub value: f64,
    pub params: ParamGradient,
    /// Adjoints of every node on the objective tape, for leaves the objective
    /// created itself (e.g. symmetry generator entries).
    pub adjoints: Adjoints,
    pub tape: Tape,
}

/// Jets of `field` at one pair.
pub fn eval_jet<F: ParametricJetField>(field: &F, q0: &[f64], q1: &[f64]) -> Result<Jet> {
    let n = field.n_q();
    check_dim(n, q0.len())?;
    check_dim(n, q1.len())?;
    let input: Vec<f64> = q0.iter().chain(q1).copied().collect();
    let (mut jets, _) = field.forward_jets(&input)?;
    Ok(jets.pop().expect("one pair in, one jet out"))
}

/// Evaluates jets at every pair in `inputs`, builds the objective with
/// `objective`, and returns its value and exact parameter gradient.
///
/// Chunks are processed in parallel; the reduction runs in chunk order, so
/// the result does not depend on the number of worker threads.
pub fn param_grad<F, O>(field: &F, inputs: &[f64], objective: O) -> Result<Objective>
where
    F: ParametricJetField,
    O: FnOnce(&mut Tape, &[Jet], &[JetVars]) -> Result<Var>,
{
    let stride = 2 * field.n_q();
    if !inputs.len().is_multiple_of(stride) {
        return Err(Error::DimensionMismatch { expected: stride, got: inputs.len() % stride });
    }
    let n_pairs = inputs.len() / stride;
    let keep_cache = n_pairs <= MAX_CACHED_PAIRS;
    let chunks: Vec<&[f64]> = inputs.chunks(CHUNK_PAIRS * stride).collect();

    let forward: Vec<(Vec<Jet>, Option<F::Cache>)> = chunks
        .par_iter()
        .map(|c| field.forward_jets(c).map(|(j, cache)| (j, keep_cache.then_some(cache))))
        .collect::<Result<_>>()?;

    let jets: Vec<Jet> = forward.iter().flat_map(|(j, _)| j.iter().cloned()).collect();
    if let Some(bad) = jets.iter().position(|j| !j.is_finite()) {
        return Err(Error::NonFinite(format!("jet at pair {bad}")));
    }

    let mut tape = Tape::new();
    let vars: Vec<JetVars> = jets.iter().map(|j| JetVars::record(&mut tape, j)).collect();
    let out = objective(&mut tape, &jets, &vars)?;
    let value = tape.value(out);
    if !value.is_finite() {
        let node = tape.first_non_finite().unwrap_or(out.index());
        return Err(Error::NonFinite(format!("objective (tape node {node})")));
    }
    let adjoints = tape.backward(out);
    if !adjoints.all_finite() {
        return Err(Error::NonFinite("objective adjoints".into()));
    }
    let jet_adj: Vec<JetAdjoint> = vars.iter().map(|v| v.adjoint(&adjoints)).collect();

    let partial: Vec<Vec<f64>> = chunks
        .par_iter()
        .zip(forward.par_iter())
        .zip(jet_adj.par_chunks(CHUNK_PAIRS))
        .map(|((input, (_, cache)), adj)| match cache {
            Some(c) => Ok(field.backward_jets(c, adj)),
            None => field.forward_jets(input).map(|(_, c)| field.backward_jets(&c, adj)),
        })
        .collect::<Result<_>>()?;

    let mut grad = vec![0.0; field.n_params()];
    for g in &partial {
        for (acc, x) in grad.iter_mut().zip(g) {
            *acc += x;
        }
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("parameter gradient".into()));
    }
    Ok(Objective { value, params: ParamGradient(grad), adjoints, tape })
}
