//! Training objective: DEL residual loss, degeneracy regularizer and the
//! symmetry-discovery terms.
//!
//! Every term is assembled on a scalar [`Tape`] from jets of the discrete
//! Lagrangian, so the same code both evaluates the loss for any
//! [`DiscreteLagrangian`] and differentiates it for the neural model.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffcore::{self, Jet, JetVars, Tape, Var};
use crate::error::{check_dim, Error, Result};
use crate::lagrangian::DiscreteLagrangian;
use crate::model::{DiscreteLagrangianModel, SymmetryGenerator};
use crate::systems::Trajectory;

/// Which closed form the per-pair degeneracy penalty takes, with
/// `x = c · det(D2D1 L_d)^m`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DegeneracyForm {
    /// `1 − 1/(1 + e^{−x})`: bounded in `[0, 1]`, `½` at a zero determinant.
    #[default]
    Logistic,
    /// `1 − 1/(1 − e^{−x})`: unbounded near `x = 0`; kept for comparison.
    Printed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub w_del: f64,
    pub w_degen: f64,
    pub w_sym: f64,
    pub w_nontriv: f64,
    pub w_orth: f64,
    /// Exponent `m ∈ {1, 2}` on the determinant.
    pub degeneracy_exponent: u32,
    /// Slope `c > 0`.
    pub degeneracy_slope: f64,
    pub degeneracy_form: DegeneracyForm,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            w_del: 1.0,
            w_degen: 1.0,
            w_sym: 1.0,
            w_nontriv: 1.0,
            w_orth: 1.0,
            degeneracy_exponent: 2,
            degeneracy_slope: 0.01,
            degeneracy_form: DegeneracyForm::Logistic,
        }
    }
}

impl LossWeights {
    pub fn zero() -> Self {
        Self { w_del: 0.0, w_degen: 0.0, w_sym: 0.0, w_nontriv: 0.0, w_orth: 0.0, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let w = [self.w_del, self.w_degen, self.w_sym, self.w_nontriv, self.w_orth];
        if w.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
            return Err(Error::Config(format!("loss weights must be finite and non-negative: {w:?}")));
        }
        if !matches!(self.degeneracy_exponent, 1 | 2) {
            return Err(Error::Config(format!("degeneracy exponent must be 1 or 2, got {}", self.degeneracy_exponent)));
        }
        if !(self.degeneracy_slope > 0.0 && self.degeneracy_slope.is_finite()) {
            return Err(Error::Config(format!("degeneracy slope must be positive, got {}", self.degeneracy_slope)));
        }
        Ok(())
    }
}

/// Per-term loss values and their weighted total.
///
/// The symmetry terms are always reported; they enter `total` only when
/// `symmetry_active` is set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
pub struct LossBreakdown {
    pub del: f64,
    pub degeneracy: f64,
    pub symmetry: f64,
    pub nontriviality: f64,
    pub orthogonality: f64,
    pub total: f64,
    pub symmetry_active: bool,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        [self.del, self.degeneracy, self.symmetry, self.nontriviality, self.orthogonality, self.total]
            .iter()
            .all(|x| x.is_finite())
    }

    /// Recomputes the weighted total from the terms.
    pub fn weighted_total(&self, w: &LossWeights) -> f64 {
        let mut t = w.w_del * self.del + w.w_degen * self.degeneracy;
        if self.symmetry_active {
            t += w.w_sym * self.symmetry + w.w_nontriv * self.nontriviality + w.w_orth * self.orthogonality;
        }
        t
    }
}

/// Consecutive pairs and interior triples of one or more trajectories,
/// flattened once for repeated loss evaluation.
#[derive(Clone, Debug)]
pub struct TrainingSet {
    n_q: usize,
    dt: f64,
    /// `q_k ‖ q_{k+1}` for every consecutive pair.
    inputs: Vec<f64>,
    /// Pair indices `(k−1, k)` of every interior point `k`.
    triples: Vec<(usize, usize)>,
}

impl TrainingSet {
    pub fn new(trajectories: &[Trajectory]) -> Result<Self> {
        let first = trajectories.first().ok_or_else(|| Error::invalid("no training trajectories"))?;
        let (n_q, dt) = (first.n_q(), first.dt());
        let mut inputs = Vec::new();
        let mut triples = Vec::new();
        for t in trajectories {
            check_dim(n_q, t.n_q())?;
            if (t.dt() - dt).abs() > 1e-12 * dt {
                return Err(Error::invalid(format!("trajectories mix step sizes {dt} and {}", t.dt())));
            }
            if t.len() < 3 {
                return Err(Error::TrajectoryTooShort { points: t.len(), needed: 3 });
            }
            let base = inputs.len() / (2 * n_q);
            for k in 0..t.n_steps() {
                inputs.extend_from_slice(t.point(k));
                inputs.extend_from_slice(t.point(k + 1));
            }
            triples.extend((1..t.n_steps()).map(|k| (base + k - 1, base + k)));
        }
        Ok(Self { n_q, dt, inputs, triples })
    }

    pub fn n_q(&self) -> usize {
        self.n_q
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_pairs(&self) -> usize {
        self.inputs.len() / (2 * self.n_q)
    }

    pub fn n_triples(&self) -> usize {
        self.triples.len()
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn pair(&self, i: usize) -> (&[f64], &[f64]) {
        let s = &self.inputs[2 * self.n_q * i..2 * self.n_q * (i + 1)];
        s.split_at(self.n_q)
    }
}

struct GeneratorVars {
    flat: Vec<Var>,
}

impl GeneratorVars {
    fn record(tape: &mut Tape, g: &SymmetryGenerator) -> Self {
        Self { flat: g.flat().into_iter().map(|x| tape.leaf(x)).collect() }
    }

    fn m_row(&self, n: usize, i: usize) -> &[Var] {
        &self.flat[i * n..(i + 1) * n]
    }

    fn w(&self, n: usize, i: usize) -> Var {
        self.flat[n * n + i]
    }
}

struct TermVars {
    del: Var,
    degeneracy: Var,
    symmetry: Var,
    nontriviality: Var,
    orthogonality: Var,
    total: Var,
}

impl TermVars {
    fn read(&self, tape: &Tape, symmetry_active: bool) -> LossBreakdown {
        LossBreakdown {
            del: tape.value(self.del),
            degeneracy: tape.value(self.degeneracy),
            symmetry: tape.value(self.symmetry),
            nontriviality: tape.value(self.nontriviality),
            orthogonality: tape.value(self.orthogonality),
            total: tape.value(self.total),
            symmetry_active,
        }
    }
}

fn del_term(tape: &mut Tape, set: &TrainingSet, jets: &[JetVars]) -> Var {
    let per_triple: Vec<Var> = set
        .triples
        .iter()
        .map(|&(a, b)| {
            let r: Vec<Var> = jets[a].d2.iter().zip(&jets[b].d1).map(|(&x, &y)| tape.add(x, y)).collect();
            tape.dot(&r, &r)
        })
        .collect();
    let s = tape.sum(&per_triple);
    tape.scale(s, 1.0 / set.n_triples() as f64)
}

fn degeneracy_term(tape: &mut Tape, n: usize, jets: &[JetVars], w: &LossWeights) -> Var {
    let per_pair: Vec<Var> = jets
        .iter()
        .map(|j| {
            let d = tape.det(&j.d2d1, n);
            let dm = tape.powi(d, w.degeneracy_exponent as i32);
            let x = tape.scale(dm, w.degeneracy_slope);
            match w.degeneracy_form {
                DegeneracyForm::Logistic => {
                    let neg = tape.neg(x);
                    tape.sigmoid(neg)
                }
                DegeneracyForm::Printed => {
                    let neg = tape.neg(x);
                    let e = tape.exp(neg);
                    let ne = tape.neg(e);
                    let den = tape.add_const(ne, 1.0);
                    let one = tape.constant(1.0);
                    let inv = tape.div(one, den);
                    let ninv = tape.neg(inv);
                    tape.add_const(ninv, 1.0)
                }
            }
        })
        .collect();
    tape.sum(&per_pair)
}

/// `(M q + w)` for constant `q`.
fn generator_action(tape: &mut Tape, g: &GeneratorVars, n: usize, q: &[f64]) -> Vec<Var> {
    (0..n)
        .map(|i| {
            let mq = tape.dot_const(g.m_row(n, i), q);
            tape.add(mq, g.w(n, i))
        })
        .collect()
}

fn symmetry_term(tape: &mut Tape, set: &TrainingSet, jets: &[JetVars], gens: &[GeneratorVars]) -> Var {
    let n = set.n_q;
    let per_gen: Vec<Var> = gens
        .iter()
        .map(|g| {
            let sq: Vec<Var> = jets
                .iter()
                .enumerate()
                .map(|(i, j)| {
                    let (q0, q1) = set.pair(i);
                    let a0 = generator_action(tape, g, n, q0);
                    let a1 = generator_action(tape, g, n, q1);
                    let r0 = tape.dot(&a0, &j.d1);
                    let r1 = tape.dot(&a1, &j.d2);
                    let r = tape.add(r0, r1);
                    tape.square(r)
                })
                .collect();
            let s = tape.sum(&sq);
            tape.scale(s, 1.0 / jets.len() as f64)
        })
        .collect();
    tape.sum(&per_gen)
}

fn nontriviality_term(tape: &mut Tape, gens: &[GeneratorVars]) -> Var {
    let per_gen: Vec<Var> = gens
        .iter()
        .map(|g| {
            let n2 = tape.dot(&g.flat, &g.flat);
            let d = tape.add_const(n2, -1.0);
            tape.square(d)
        })
        .collect();
    tape.sum(&per_gen)
}

fn orthogonality_term(tape: &mut Tape, gens: &[GeneratorVars]) -> Var {
    let mut terms = Vec::new();
    for k in 0..gens.len() {
        for s in 0..k {
            let ip = tape.dot(&gens[s].flat, &gens[k].flat);
            terms.push(tape.square(ip));
        }
    }
    tape.sum(&terms)
}

fn build(
    tape: &mut Tape,
    set: &TrainingSet,
    jets: &[JetVars],
    gens: &[GeneratorVars],
    w: &LossWeights,
    symmetry_active: bool,
) -> TermVars {
    let del = del_term(tape, set, jets);
    let degeneracy = degeneracy_term(tape, set.n_q, jets, w);
    let symmetry = symmetry_term(tape, set, jets, gens);
    let nontriviality = nontriviality_term(tape, gens);
    let orthogonality = orthogonality_term(tape, gens);
    let mut parts = vec![tape.scale(del, w.w_del), tape.scale(degeneracy, w.w_degen)];
    if symmetry_active {
        parts.push(tape.scale(symmetry, w.w_sym));
        parts.push(tape.scale(nontriviality, w.w_nontriv));
        parts.push(tape.scale(orthogonality, w.w_orth));
    }
    let total = tape.sum(&parts);
    TermVars { del, degeneracy, symmetry, nontriviality, orthogonality, total }
}

fn check_generators(set: &TrainingSet, gens: &[SymmetryGenerator]) -> Result<()> {
    gens.iter().try_for_each(|g| check_dim(set.n_q, g.n_q()))
}

/// Jets of `ld` at every pair of `set`, computed in parallel.
pub fn pair_jets<L: DiscreteLagrangian>(ld: &L, set: &TrainingSet) -> Result<Vec<Jet>> {
    check_dim(set.n_q, ld.n_q())?;
    (0..set.n_pairs())
        .into_par_iter()
        .map(|i| {
            let (q0, q1) = set.pair(i);
            ld.jet(q0, q1)
        })
        .collect()
}

/// All loss terms for any discrete Lagrangian.
pub fn total_loss<L: DiscreteLagrangian>(
    ld: &L,
    generators: &[SymmetryGenerator],
    set: &TrainingSet,
    weights: &LossWeights,
    symmetry_enabled: bool,
) -> Result<LossBreakdown> {
    weights.validate()?;
    check_generators(set, generators)?;
    let jets = pair_jets(ld, set)?;
    let mut tape = Tape::new();
    let vars: Vec<JetVars> = jets.iter().map(|j| JetVars::record(&mut tape, j)).collect();
    let gens: Vec<GeneratorVars> = generators.iter().map(|g| GeneratorVars::record(&mut tape, g)).collect();
    let terms = build(&mut tape, set, &vars, &gens, weights, symmetry_enabled);
    Ok(terms.read(&tape, symmetry_enabled))
}

/// Mean over interior triples of `‖D2 L_d(q_{k−1}, q_k) + D1 L_d(q_k, q_{k+1})‖²`.
pub fn del_loss<L: DiscreteLagrangian>(ld: &L, set: &TrainingSet) -> Result<f64> {
    Ok(total_loss(ld, &[], set, &LossWeights::default(), false)?.del)
}

/// Sum over pairs of the degeneracy penalty.
pub fn degeneracy_loss<L: DiscreteLagrangian>(ld: &L, set: &TrainingSet, m: u32, c: f64) -> Result<f64> {
    let w = LossWeights { degeneracy_exponent: m, degeneracy_slope: c, ..LossWeights::default() };
    Ok(total_loss(ld, &[], set, &w, false)?.degeneracy)
}

/// Sum over generators of the mean squared symmetry residual over pairs.
pub fn symmetry_loss<L: DiscreteLagrangian>(ld: &L, generators: &[SymmetryGenerator], set: &TrainingSet) -> Result<f64> {
    Ok(total_loss(ld, generators, set, &LossWeights::default(), true)?.symmetry)
}

/// `Σ_j (‖M_j‖² + ‖w_j‖² − 1)²`
pub fn nontriviality_loss(generators: &[SymmetryGenerator]) -> f64 {
    generators.iter().map(|g| (g.inner(g) - 1.0).powi(2)).sum()
}

/// `Σ_{s<k} ⟨g_s, g_k⟩²`
pub fn orthogonality_loss(generators: &[SymmetryGenerator]) -> f64 {
    let mut acc = 0.0;
    for k in 0..generators.len() {
        for s in 0..k {
            acc += generators[s].inner(&generators[k]).powi(2);
        }
    }
    acc
}

/// Loss value with its gradient for the network parameters and for each
/// generator (flat `vec M ‖ w` order).
#[derive(Clone, Debug)]
pub struct LossGradient {
    pub breakdown: LossBreakdown,
    pub model: Vec<f64>,
    pub generators: Vec<Vec<f64>>,
}

pub fn loss_and_grad(
    model: &DiscreteLagrangianModel,
    generators: &[SymmetryGenerator],
    set: &TrainingSet,
    weights: &LossWeights,
    symmetry_enabled: bool,
) -> Result<LossGradient> {
    weights.validate()?;
    check_dim(set.n_q, model.n_q())?;
    check_generators(set, generators)?;
    let mut captured: Option<(TermVars, Vec<GeneratorVars>)> = None;
    let obj = diffcore::param_grad(model, set.inputs(), |tape, _jets, vars| {
        let gens: Vec<GeneratorVars> = generators.iter().map(|g| GeneratorVars::record(tape, g)).collect();
        let terms = build(tape, set, vars, &gens, weights, symmetry_enabled);
        let total = terms.total;
        captured = Some((terms, gens));
        Ok(total)
    })?;
    let (terms, gens) = captured.expect("objective ran");
    let breakdown = terms.read(&obj.tape, symmetry_enabled);
    if !breakdown.is_finite() {
        return Err(Error::NonFinite("loss terms".into()));
    }
    let generators = gens.iter().map(|g| g.flat.iter().map(|&v| obj.adjoints.get(v)).collect()).collect();
    Ok(LossGradient { breakdown, model: obj.params.0, generators })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lagrangian::testing::*;
    use crate::lagrangian::DiscreteLagrangian;
    use crate::model::Activation;
    use crate::systems::{generate, SystemSpec, TrueMidpoint};
    use crate::Real;
    use proptest::prelude::*;

    fn line(points: &[f64], dt: f64) -> TrainingSet {
        let t = Trajectory::new(dt, 0.0, points.iter().map(|&x| vec![x]).collect()).unwrap();
        TrainingSet::new(&[t]).unwrap()
    }

    struct SumLd;

    impl DiscreteLagrangian for SumLd {
        fn n_q(&self) -> usize {
            1
        }
        fn dt(&self) -> f64 {
            1.0
        }
        fn eval<S: Real>(&self, q0: &[S], q1: &[S]) -> S {
            q0[0] + q1[0]
        }
    }

    #[test]
    fn free_particle_del_loss_on_uneven_triple() {
        let dt = 0.1;
        let l = FreeParticleLd { n_q: 1, dt };
        let v = del_loss(&l, &line(&[0.0, 1.0, 3.0], dt)).unwrap();
        assert!((v - 1.0 / (dt * dt)).abs() < 1e-9, "{v}");
    }

    #[test]
    fn constant_lagrangian_losses() {
        let l = ConstantLd { c: 2.0, n_q: 1 };
        let set = line(&[0.0, 0.1, 0.3, 0.2, 0.5], 0.1);
        assert_eq!(del_loss(&l, &set).unwrap(), 0.0);
        let d = degeneracy_loss(&l, &set, 2, 0.01).unwrap();
        assert!((d - 0.5 * set.n_pairs() as f64).abs() < 1e-12);
    }

    #[test]
    fn large_determinant_penalty() {
        // L_d = a q0 q1 with a² = 1000 gives det² = 1e6 for m = 2 … use m = 1 with det = 1000
        let l = BilinearLd { a: vec![1000.0], n_q: 1 };
        let set = line(&[0.0, 1.0, 2.0], 1.0);
        let d = degeneracy_loss(&l, &set, 1, 0.01).unwrap() / set.n_pairs() as f64;
        assert!((d - 4.5397868702434395e-5).abs() < 1e-15, "{d}");
    }

    #[test]
    fn even_exponent_ignores_determinant_sign() {
        let set = line(&[0.0, 1.0, 2.0], 1.0);
        let a = degeneracy_loss(&BilinearLd { a: vec![7.0], n_q: 1 }, &set, 2, 0.01).unwrap();
        let b = degeneracy_loss(&BilinearLd { a: vec![-7.0], n_q: 1 }, &set, 2, 0.01).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sum_lagrangian_symmetry_residual() {
        let g = SymmetryGenerator::translation(vec![1.0]);
        let v = symmetry_loss(&SumLd, &[g], &line(&[0.3, -1.0, 2.0], 1.0)).unwrap();
        assert!((v - 4.0).abs() < 1e-14);
    }

    #[test]
    fn zero_generator_has_zero_symmetry_loss() {
        let ld = TrueMidpoint::new(SystemSpec::kepler(), 0.1).unwrap();
        let t = generate(&SystemSpec::kepler(), &[3.0, 0.0], &[0.0, 3.0], 0.01, 0.1, 10, 0).unwrap();
        let set = TrainingSet::new(&[t]).unwrap();
        assert_eq!(symmetry_loss(&ld, &[SymmetryGenerator::zero(2)], &set).unwrap(), 0.0);
    }

    #[test]
    fn cartpend_true_midpoint_losses() {
        let s = SystemSpec::cartpend();
        let t = generate(&s, &[0.0, 0.5], &[0.5, 0.0], 1e-3, 1e-2, 50, 0).unwrap();
        let set = TrainingSet::new(&[t]).unwrap();
        let ld = TrueMidpoint::new(s, 0.01).unwrap();
        let g = s.true_generator().unwrap();
        assert!(symmetry_loss(&ld, &[g], &set).unwrap() <= 1e-20);
        // coarse-step midpoint on fine data is not exact: small but nonzero
        assert!(del_loss(&ld, &set).unwrap() < 1e-8);
        let own = generate(&s, &[0.0, 0.5], &[0.5, 0.0], 1e-2, 1e-2, 50, 0).unwrap();
        let own = TrainingSet::new(&[own]).unwrap();
        assert!(del_loss(&ld, &own).unwrap() <= 1e-18);
    }

    #[test]
    fn generator_only_terms() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let rot = SymmetryGenerator::new(vec![0.0, h, -h, 0.0], vec![0.0, 0.0]).unwrap();
        let tr = SymmetryGenerator::translation(vec![1.0, 0.0]);
        assert_eq!(nontriviality_loss(std::slice::from_ref(&tr)), 0.0);
        assert_eq!(nontriviality_loss(&[SymmetryGenerator::zero(2)]), 1.0);
        assert!(nontriviality_loss(std::slice::from_ref(&rot)).abs() < 1e-30);
        assert_eq!(orthogonality_loss(std::slice::from_ref(&tr)), 0.0);
        assert_eq!(orthogonality_loss(&[tr.clone(), tr.clone()]), 1.0);
        assert_eq!(orthogonality_loss(&[tr, rot]), 0.0);
    }

    #[test]
    fn tape_terms_match_direct_generator_terms() {
        let gens = vec![SymmetryGenerator::random(2, 1, 0.8), SymmetryGenerator::random(2, 2, 0.8)];
        let t = Trajectory::new(0.1, 0.0, vec![vec![0.0, 1.0], vec![0.1, 0.9], vec![0.3, 0.7]]).unwrap();
        let b = total_loss(&FreeParticleLd { n_q: 2, dt: 0.1 }, &gens, &TrainingSet::new(&[t]).unwrap(), &LossWeights::default(), true)
            .unwrap();
        assert!((b.nontriviality - nontriviality_loss(&gens)).abs() < 1e-14);
        assert!((b.orthogonality - orthogonality_loss(&gens)).abs() < 1e-14);
    }

    fn small_fixture() -> (DiscreteLagrangianModel, Vec<SymmetryGenerator>, TrainingSet) {
        let m = DiscreteLagrangianModel::init(9, 2, 0.1, Activation::Tanh, &[8, 8]).unwrap();
        let t = Trajectory::new(0.1, 0.0, vec![vec![0.0, 0.3], vec![0.05, 0.25], vec![0.12, 0.1]]).unwrap();
        let g = SymmetryGenerator::new(vec![0.1, 0.1, 0.1, 0.1], vec![1.5, 0.5]).unwrap();
        (m, vec![g], TrainingSet::new(&[t]).unwrap())
    }

    #[test]
    fn total_is_sum_of_terms() {
        let (m, g, set) = small_fixture();
        let w = LossWeights::default();
        let b = total_loss(&m, &g, &set, &w, true).unwrap();
        let sum = del_loss(&m, &set).unwrap()
            + degeneracy_loss(&m, &set, 2, 0.01).unwrap()
            + symmetry_loss(&m, &g, &set).unwrap()
            + nontriviality_loss(&g)
            + orthogonality_loss(&g);
        assert!((b.total - sum).abs() <= 1e-12 * sum.abs());
        assert!((b.weighted_total(&w) - b.total).abs() <= 1e-12 * sum.abs());
    }

    #[test]
    fn zero_weights_give_zero_total() {
        let (m, g, set) = small_fixture();
        assert_eq!(total_loss(&m, &g, &set, &LossWeights::zero(), true).unwrap().total, 0.0);
    }

    #[test]
    fn disabled_symmetry_ignores_generators() {
        let (m, g, set) = small_fixture();
        let w = LossWeights::default();
        let a = total_loss(&m, &g, &set, &w, false).unwrap().total;
        let b = total_loss(&m, &[g[0].scaled(3.0)], &set, &w, false).unwrap().total;
        assert_eq!(a, b);
    }

    #[test]
    fn batched_and_pointwise_losses_agree() {
        let (m, g, set) = small_fixture();
        let w = LossWeights::default();
        let a = total_loss(&m, &g, &set, &w, true).unwrap();
        let b = loss_and_grad(&m, &g, &set, &w, true).unwrap().breakdown;
        assert!((a.total - b.total).abs() <= 1e-12 * a.total.abs());
    }

    #[test]
    fn invalid_weights_are_rejected() {
        let (m, g, set) = small_fixture();
        let w = LossWeights { degeneracy_exponent: 3, ..LossWeights::default() };
        assert!(matches!(total_loss(&m, &g, &set, &w, true), Err(Error::Config(_))));
        let w = LossWeights { w_del: -1.0, ..LossWeights::default() };
        assert!(matches!(total_loss(&m, &g, &set, &w, true), Err(Error::Config(_))));
    }

    #[test]
    fn short_trajectory_is_rejected() {
        let t = Trajectory::new(0.1, 0.0, vec![vec![0.0], vec![1.0]]).unwrap();
        assert!(matches!(TrainingSet::new(&[t]), Err(Error::TrajectoryTooShort { points: 2, needed: 3 })));
    }

    proptest! {
        #[test]
        fn loss_terms_are_non_negative(seed in 0u64..1000, scale in 0.1f64..3.0) {
            let m = DiscreteLagrangianModel::init(seed, 2, 0.1, Activation::Tanh, &[6]).unwrap();
            let pts = (0..5).map(|k| vec![scale * (k as f64 * 0.3).sin(), scale * (k as f64 * 0.2).cos()]).collect();
            let set = TrainingSet::new(&[Trajectory::new(0.1, 0.0, pts).unwrap()]).unwrap();
            let g = vec![SymmetryGenerator::random(2, seed, 1.0), SymmetryGenerator::random(2, seed + 1, 1.0)];
            let b = total_loss(&m, &g, &set, &LossWeights::default(), true).unwrap();
            prop_assert!(b.del >= 0.0 && b.symmetry >= 0.0 && b.nontriviality >= 0.0 && b.orthogonality >= 0.0);
            let per = b.degeneracy / set.n_pairs() as f64;
            prop_assert!((0.0..=1.0).contains(&per));
        }
    }
}
