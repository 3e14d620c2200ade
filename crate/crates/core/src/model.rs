//! Neural discrete Lagrangian, affine symmetry generators and checkpoints.
//!
//! Canonical parameter order (used by every gradient and by the optimizer):
//! for each layer in turn, the weight matrix in row-major order
//! (`out × in`), then the bias vector.

use std::path::Path;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::real::{sigmoid, softplus};
use crate::diffcore::{self, Jet, Real};
use crate::error::{check_dim, Error, Result};
use crate::lagrangian::DiscreteLagrangian;
use crate::loss::LossBreakdown;
use crate::systems::{SystemSpec, TrueMidpoint};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;
pub const PAPER_HIDDEN: [usize; 3] = [128, 128, 128];

/// Smooth hidden-layer nonlinearity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    Softplus,
}

impl Activation {
    pub fn apply<S: Real>(self, z: S) -> S {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Softplus => z.softplus(),
        }
    }

    /// `(σ, σ', σ'', σ''')` at `z`.
    #[inline]
    pub fn derivatives(self, z: f64) -> (f64, f64, f64, f64) {
        match self {
            Activation::Tanh => {
                let t = z.tanh();
                let s1 = 1.0 - t * t;
                (t, s1, -2.0 * t * s1, -2.0 * s1 * (1.0 - 3.0 * t * t))
            }
            Activation::Softplus => {
                let s = sigmoid(z);
                let s2 = s * (1.0 - s);
                (softplus(z), s, s2, s2 * (1.0 - 2.0 * s))
            }
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "softplus" => Ok(Activation::Softplus),
            other => Err(Error::invalid(format!("unknown activation {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    /// `out × in`
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
}

impl DenseLayer {
    pub fn fan_in(&self) -> usize {
        self.weights.ncols()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.nrows()
    }
}

/// `L_d^NN(q0, q1)`: an MLP on `q0 ‖ q1` with smooth hidden activations and
/// a linear scalar output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NeuralModelFile", into = "NeuralModelFile")]
pub struct DiscreteLagrangianModel {
    n_q: usize,
    dt: f64,
    activation: Activation,
    layers: Vec<DenseLayer>,
}

impl DiscreteLagrangianModel {
    /// Glorot-uniform weights, zero biases, deterministic per seed.
    pub fn init(seed: u64, n_q: usize, dt: f64, activation: Activation, hidden: &[usize]) -> Result<Self> {
        if n_q == 0 {
            return Err(Error::invalid("n_q must be positive"));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid(format!("dt must be positive, got {dt}")));
        }
        if hidden.contains(&0) {
            return Err(Error::invalid("hidden widths must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = layer_dims(n_q, hidden);
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let weights = Array2::from_shape_fn((fan_out, fan_in), |_| rng.random_range(-a..a));
                DenseLayer { weights, biases: Array1::zeros(fan_out) }
            })
            .collect();
        Ok(Self { n_q, dt, activation, layers })
    }

    /// Three hidden layers of width 128.
    pub fn init_default(seed: u64, n_q: usize, dt: f64) -> Result<Self> {
        Self::init(seed, n_q, dt, Activation::Tanh, &PAPER_HIDDEN)
    }

    /// All weights zero, output bias `bias`: a constant Lagrangian.
    pub fn constant(n_q: usize, dt: f64, hidden: &[usize], bias: f64) -> Result<Self> {
        let mut m = Self::init(0, n_q, dt, Activation::Tanh, hidden)?;
        for layer in &mut m.layers {
            layer.weights.fill(0.0);
        }
        m.layers.last_mut().expect("at least one layer").biases[0] = bias;
        Ok(m)
    }

    pub fn from_layers(n_q: usize, dt: f64, activation: Activation, layers: Vec<DenseLayer>) -> Result<Self> {
        let m = Self { n_q, dt, activation, layers };
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<()> {
        if self.n_q == 0 || !(self.dt > 0.0) {
            return Err(Error::invalid("model needs n_q > 0 and dt > 0"));
        }
        let first = self.layers.first().ok_or_else(|| Error::invalid("model has no layers"))?;
        check_dim(2 * self.n_q, first.fan_in())?;
        for w in self.layers.windows(2) {
            check_dim(w[0].fan_out(), w[1].fan_in())?;
        }
        for l in &self.layers {
            check_dim(l.fan_out(), l.biases.len())?;
        }
        check_dim(1, self.layers.last().expect("non-empty").fan_out())
    }

    pub fn n_q(&self) -> usize {
        self.n_q
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        std::iter::once(2 * self.n_q).chain(self.layers.iter().map(|l| l.fan_out())).collect()
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    /// Flat parameter vector in canonical order.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            out.extend(l.weights.iter());
            out.extend(l.biases.iter());
        }
        out
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        check_dim(self.n_params(), p.len())?;
        let mut off = 0;
        for l in &mut self.layers {
            for (dst, src) in l.weights.iter_mut().zip(&p[off..]) {
                *dst = *src;
            }
            off += l.weights.len();
            for (dst, src) in l.biases.iter_mut().zip(&p[off..]) {
                *dst = *src;
            }
            off += l.biases.len();
        }
        Ok(())
    }

    /// `L_d^NN(q0, q1)`.
    pub fn forward(&self, q0: &[f64], q1: &[f64]) -> Result<f64> {
        DiscreteLagrangian::value(self, q0, q1)
    }

    /// Evaluates the network on the concatenated input with any scalar type.
    pub fn eval_input<S: Real>(&self, x: &[S]) -> S {
        let mut h: Vec<S> = x.to_vec();
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            let next: Vec<S> = layer
                .weights
                .rows()
                .into_iter()
                .zip(layer.biases.iter())
                .map(|(row, &b)| {
                    let z = row.iter().zip(&h).fold(S::from_f64(b), |acc, (&w, &hk)| acc + hk.scale(w));
                    if li == last {
                        z
                    } else {
                        self.activation.apply(z)
                    }
                })
                .collect();
            h = next;
        }
        h[0]
    }
}

impl DiscreteLagrangian for DiscreteLagrangianModel {
    fn n_q(&self) -> usize {
        self.n_q
    }

    fn dt(&self) -> f64 {
        self.dt
    }

    fn eval<S: Real>(&self, q0: &[S], q1: &[S]) -> S {
        let x: Vec<S> = q0.iter().chain(q1).copied().collect();
        self.eval_input(&x)
    }

    fn jet(&self, q0: &[f64], q1: &[f64]) -> Result<Jet> {
        diffcore::eval_jet(self, q0, q1)
    }
}

pub fn layer_dims(n_q: usize, hidden: &[usize]) -> Vec<usize> {
    std::iter::once(2 * n_q).chain(hidden.iter().copied()).chain(std::iter::once(1)).collect()
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    weights: Vec<Vec<f64>>,
    biases: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct NeuralModelFile {
    n_q: usize,
    dt: f64,
    activation: Activation,
    layer_dims: Vec<usize>,
    layers: Vec<LayerFile>,
}

impl From<DiscreteLagrangianModel> for NeuralModelFile {
    fn from(m: DiscreteLagrangianModel) -> Self {
        NeuralModelFile {
            n_q: m.n_q,
            dt: m.dt,
            activation: m.activation,
            layer_dims: m.layer_dims(),
            layers: m
                .layers
                .iter()
                .map(|l| LayerFile {
                    weights: l.weights.rows().into_iter().map(|r| r.to_vec()).collect(),
                    biases: l.biases.to_vec(),
                })
                .collect(),
        }
    }
}

impl TryFrom<NeuralModelFile> for DiscreteLagrangianModel {
    type Error = Error;
    fn try_from(f: NeuralModelFile) -> Result<Self> {
        let layers = f
            .layers
            .into_iter()
            .map(|l| {
                let rows = l.weights.len();
                let cols = l.weights.first().map_or(0, Vec::len);
                if l.weights.iter().any(|r| r.len() != cols) {
                    return Err(Error::invalid("ragged weight matrix"));
                }
                let flat: Vec<f64> = l.weights.into_iter().flatten().collect();
                let weights = Array2::from_shape_vec((rows, cols), flat).map_err(|e| Error::invalid(e.to_string()))?;
                Ok(DenseLayer { weights, biases: Array1::from(l.biases) })
            })
            .collect::<Result<Vec<_>>>()?;
        let m = DiscreteLagrangianModel::from_layers(f.n_q, f.dt, f.activation, layers)?;
        if m.layer_dims() != f.layer_dims {
            return Err(Error::invalid(format!(
                "layer_dims {:?} disagree with weights {:?}",
                f.layer_dims,
                m.layer_dims()
            )));
        }
        Ok(m)
    }
}

/// Affine Lie-algebra element `(M, w)`: the infinitesimal action
/// `q ↦ M q + w`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GeneratorFile", into = "GeneratorFile")]
pub struct SymmetryGenerator {
    n_q: usize,
    /// Row-major `n_q × n_q`.
    m: Vec<f64>,
    w: Vec<f64>,
}

impl SymmetryGenerator {
    pub fn new(m: Vec<f64>, w: Vec<f64>) -> Result<Self> {
        let n = w.len();
        check_dim(n * n, m.len())?;
        if m.iter().chain(&w).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("symmetry generator".into()));
        }
        Ok(Self { n_q: n, m, w })
    }

    pub fn zero(n_q: usize) -> Self {
        Self { n_q, m: vec![0.0; n_q * n_q], w: vec![0.0; n_q] }
    }

    pub fn translation(w: Vec<f64>) -> Self {
        let n = w.len();
        Self { n_q: n, m: vec![0.0; n * n], w }
    }

    /// Small uniform noise, used when no guess is configured.
    pub fn random(n_q: usize, seed: u64, amplitude: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |k: usize| -> Vec<f64> { (0..k).map(|_| rng.random_range(-amplitude..amplitude)).collect() };
        let m = draw(n_q * n_q);
        let w = draw(n_q);
        Self { n_q, m, w }
    }

    pub fn n_q(&self) -> usize {
        self.n_q
    }

    pub fn m(&self) -> &[f64] {
        &self.m
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    /// `M q + w`
    pub fn apply<S: Real>(&self, q: &[S]) -> Vec<S> {
        let n = self.n_q;
        (0..n)
            .map(|i| (0..n).fold(S::from_f64(self.w[i]), |acc, j| acc + q[j].scale(self.m[i * n + j])))
            .collect()
    }

    /// `(vec M, w)` as one Lie-algebra coordinate vector (row-major `M`).
    pub fn flat(&self) -> Vec<f64> {
        self.m.iter().chain(&self.w).copied().collect()
    }

    pub fn from_flat(n_q: usize, p: &[f64]) -> Result<Self> {
        check_dim(n_q * n_q + n_q, p.len())?;
        Self::new(p[..n_q * n_q].to_vec(), p[n_q * n_q..].to_vec())
    }

    pub fn norm(&self) -> f64 {
        self.flat().iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self { n_q: self.n_q, m: self.m.iter().map(|x| x * k).collect(), w: self.w.iter().map(|x| x * k).collect() }
    }

    /// Unit-norm copy (zero stays zero).
    pub fn normalized(&self) -> Self {
        let n = self.norm();
        if n == 0.0 {
            self.clone()
        } else {
            self.scaled(1.0 / n)
        }
    }

    /// Frobenius/Euclidean inner product on the Lie algebra.
    pub fn inner(&self, other: &Self) -> f64 {
        self.flat().iter().zip(other.flat()).map(|(a, b)| a * b).sum()
    }
}

#[derive(Serialize, Deserialize)]
struct GeneratorFile {
    m: Vec<Vec<f64>>,
    w: Vec<f64>,
}

impl From<SymmetryGenerator> for GeneratorFile {
    fn from(g: SymmetryGenerator) -> Self {
        let n = g.n_q;
        GeneratorFile { m: (0..n).map(|i| g.m[i * n..(i + 1) * n].to_vec()).collect(), w: g.w }
    }
}

impl TryFrom<GeneratorFile> for SymmetryGenerator {
    type Error = Error;
    fn try_from(f: GeneratorFile) -> Result<Self> {
        if f.m.len() != f.w.len() || f.m.iter().any(|r| r.len() != f.w.len()) {
            return Err(Error::invalid("generator M must be n_q × n_q with n_q = len(w)"));
        }
        SymmetryGenerator::new(f.m.into_iter().flatten().collect(), f.w)
    }
}

/// Any discrete Lagrangian a checkpoint can hold: a trained network or the
/// exact midpoint discretization of a known system (an oracle model).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LagrangianModel {
    Neural(DiscreteLagrangianModel),
    TrueMidpoint(TrueMidpoint),
}

impl DiscreteLagrangian for LagrangianModel {
    fn n_q(&self) -> usize {
        match self {
            LagrangianModel::Neural(m) => m.n_q(),
            LagrangianModel::TrueMidpoint(m) => m.n_q(),
        }
    }

    fn dt(&self) -> f64 {
        match self {
            LagrangianModel::Neural(m) => m.dt(),
            LagrangianModel::TrueMidpoint(m) => m.dt(),
        }
    }

    fn eval<S: Real>(&self, q0: &[S], q1: &[S]) -> S {
        match self {
            LagrangianModel::Neural(m) => m.eval(q0, q1),
            LagrangianModel::TrueMidpoint(m) => m.eval(q0, q1),
        }
    }

    fn jet(&self, q0: &[f64], q1: &[f64]) -> Result<Jet> {
        match self {
            LagrangianModel::Neural(m) => m.jet(q0, q1),
            LagrangianModel::TrueMidpoint(m) => m.jet(q0, q1),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
pub struct TrainingMeta {
    pub epoch: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<SystemSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_loss: Option<LossBreakdown>,
}

/// Model + generators + training metadata, stored as JSON. Floats are
/// written in shortest round-trip form, so loading restores every bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub model: LagrangianModel,
    #[serde(default)]
    pub generators: Vec<SymmetryGenerator>,
    #[serde(default)]
    pub meta: TrainingMeta,
}

impl Checkpoint {
    pub fn new(model: LagrangianModel, generators: Vec<SymmetryGenerator>, meta: TrainingMeta) -> Self {
        Self { format_version: CHECKPOINT_FORMAT_VERSION, model, generators, meta }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Checkpoint = serde_json::from_str(s)?;
        if c.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::invalid(format!("unsupported checkpoint format_version {}", c.format_version)));
        }
        let n = c.model.n_q();
        for g in &c.generators {
            check_dim(n, g.n_q())?;
        }
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path)?;
        Self::from_json(&s).map_err(|e| Error::Format { path: path.to_owned(), reason: e.to_string() })
    }
}
