//! Experiment configuration: one TOML file describing the system, data,
//! network, training, symmetry guesses and evaluation.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::eval::GeneratorChoice;
use crate::integrator::NewtonConfig;
use crate::lagrangian::Lagrangian;
use crate::loss::{total_loss, LossBreakdown, TrainingSet};
use crate::model::{Activation, DiscreteLagrangianModel, SymmetryGenerator, PAPER_HIDDEN};
use crate::systems::{add_noise, generate_with, perturbed_initial_condition, SystemSpec, Trajectory};
use crate::trainer::TrainConfig;
use crate::vbea::VelocityEstimator;

pub const CONFIG_FORMAT_VERSION: u32 = 1;

fn format_version() -> u32 {
    CONFIG_FORMAT_VERSION
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub q0: Vec<f64>,
    pub p0: Vec<f64>,
    /// Coarse steps per trajectory; each has `n + 1` points.
    pub n: usize,
    pub dt: f64,
    pub fine_dt: f64,
    pub seed: u64,
    pub noise_variance: f64,
    pub trajectories: usize,
    /// Half-width of the uniform perturbation applied to `(q0, p0)` for
    /// every trajectory after the first.
    pub ic_spread: f64,
    /// Existing trajectory files; when non-empty they replace generation.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub paths: Vec<PathBuf>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            q0: Vec::new(),
            p0: Vec::new(),
            n: 200,
            dt: 0.01,
            fine_dt: 1e-4,
            seed: 0,
            noise_variance: 0.0,
            trajectories: 1,
            ic_spread: 0.1,
            paths: Vec::new(),
        }
    }
}

impl DataConfig {
    pub fn validate(&self, n_q: usize) -> Result<()> {
        if self.paths.is_empty() {
            check_dim(n_q, self.q0.len())?;
            check_dim(n_q, self.p0.len())?;
        }
        let ok = self.n >= 1
            && self.dt > 0.0
            && self.fine_dt > 0.0
            && self.trajectories >= 1
            && self.noise_variance >= 0.0
            && self.ic_spread >= 0.0;
        if !ok {
            return Err(Error::Config(format!("invalid data settings {self:?}")));
        }
        let ratio = self.dt / self.fine_dt;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio || ratio.round() < 1.0 {
            return Err(Error::Config(format!("dt {} is not an integer multiple of fine_dt {}", self.dt, self.fine_dt)));
        }
        Ok(())
    }

    /// Initial condition of trajectory `i`.
    pub fn initial_condition(&self, i: usize) -> (Vec<f64>, Vec<f64>) {
        perturbed_initial_condition(&self.q0, &self.p0, self.ic_spread, self.seed, i)
    }

    /// Generates trajectory `i` with `steps` coarse steps, noise included.
    pub fn generate_one(&self, system: &SystemSpec, i: usize, steps: usize, newton: &NewtonConfig) -> Result<Trajectory> {
        let (q0, p0) = self.initial_condition(i);
        let seed = self.seed.wrapping_add(i as u64);
        let t = generate_with(system, &q0, &p0, self.fine_dt, self.dt, steps, seed, newton)?;
        if self.noise_variance > 0.0 {
            add_noise(&t, self.noise_variance, seed)
        } else {
            Ok(t)
        }
    }

    /// All configured trajectories, generated in parallel.
    pub fn generate(&self, system: &SystemSpec, newton: &NewtonConfig) -> Result<Vec<Trajectory>> {
        self.validate(system.n_q())?;
        (0..self.trajectories).into_par_iter().map(|i| self.generate_one(system, i, self.n, newton)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { hidden: PAPER_HIDDEN.to_vec(), activation: Activation::Tanh, seed: 42 }
    }
}

impl ModelConfig {
    pub fn init(&self, n_q: usize, dt: f64) -> Result<DiscreteLagrangianModel> {
        DiscreteLagrangianModel::init(self.seed, n_q, dt, self.activation, &self.hidden)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SymmetryConfig {
    /// Number of generators `K`; guesses beyond `generators` are random.
    pub count: usize,
    pub generators: Vec<SymmetryGenerator>,
    pub guess_amplitude: f64,
    pub seed: u64,
}

impl Default for SymmetryConfig {
    fn default() -> Self {
        Self { count: 0, generators: Vec::new(), guess_amplitude: 0.1, seed: 0 }
    }
}

impl SymmetryConfig {
    pub fn k(&self) -> usize {
        self.count.max(self.generators.len())
    }

    pub fn initial_generators(&self, n_q: usize) -> Result<Vec<SymmetryGenerator>> {
        for g in &self.generators {
            check_dim(n_q, g.n_q())?;
        }
        let extra = (self.generators.len()..self.k())
            .map(|i| SymmetryGenerator::random(n_q, self.seed.wrapping_add(i as u64), self.guess_amplitude));
        Ok(self.generators.iter().cloned().chain(extra).collect())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub n_extra: usize,
    pub generator: GeneratorChoice,
    pub velocity: VelocityEstimator,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "format_version")]
    pub format_version: u32,
    pub system: SystemSpec,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub symmetry: SymmetryConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub newton: NewtonConfig,
}

/// What a dry run resolved and checked.
#[derive(Clone, Debug, PartialEq)]
pub struct DryRun {
    pub n_params: usize,
    pub generators: usize,
    pub initial_loss: LossBreakdown,
}

impl ExperimentConfig {
    pub fn new(system: SystemSpec) -> Self {
        Self {
            format_version: CONFIG_FORMAT_VERSION,
            system,
            data: DataConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            symmetry: SymmetryConfig::default(),
            eval: EvalConfig::default(),
            newton: NewtonConfig::default(),
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let c: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path)?;
        Self::from_toml_str(&s).map_err(|e| match e {
            Error::Config(reason) => Error::Config(format!("{}: {reason}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != CONFIG_FORMAT_VERSION {
            return Err(Error::Config(format!("unsupported format_version {}", self.format_version)));
        }
        let n_q = self.system.n_q();
        self.data.validate(n_q)?;
        self.train.validate()?;
        self.newton.validate()?;
        if self.model.hidden.contains(&0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        for g in &self.symmetry.generators {
            check_dim(n_q, g.n_q()).map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }

    /// Resolves every component and evaluates the initial loss on a short
    /// prefix of the first trajectory, without training.
    pub fn dry_run(&self) -> Result<DryRun> {
        self.validate()?;
        let n_q = self.system.n_q();
        let data = if let Some(p) = self.data.paths.first() {
            crate::io::read_trajectory(p)?.truncated(3)
        } else {
            self.data.generate_one(&self.system, 0, 2, &self.newton)?
        };
        let model = self.model.init(n_q, data.dt())?;
        let generators = self.symmetry.initial_generators(n_q)?;
        let set = TrainingSet::new(&[data])?;
        let initial_loss = total_loss(&model, &generators, &set, &self.train.weights, !generators.is_empty())?;
        Ok(DryRun { n_params: model.n_params(), generators: generators.len(), initial_loss })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[system]
name = "cartpend"
m1 = 1.0
m2 = 1.0
l = 1.0
g = 9.81

[data]
q0 = [0.0, 2.9]
p0 = [0.5, 0.0]
n = 20
dt = 0.01
fine_dt = 1e-3
"#;

    #[test]
    fn minimal_config_fills_defaults() {
        let c = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(c.format_version, 1);
        assert_eq!(c.train.adam.learning_rate, 3e-3);
        assert_eq!(c.train.symmetry_warmup_epochs, 5000);
        assert_eq!(c.model.hidden, vec![128, 128, 128]);
        assert_eq!(c.symmetry.k(), 0);
    }

    #[test]
    fn resolved_config_round_trips() {
        let mut c = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        c.symmetry.generators = vec![SymmetryGenerator::new(vec![0.1; 4], vec![1.5, 0.5]).unwrap()];
        let back = ExperimentConfig::from_toml_str(&c.to_toml_string().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(ExperimentConfig::from_toml_str(&format!("{MINIMAL}\n[train]\nepoch = 3\n")).is_err());
        assert!(ExperimentConfig::from_toml_str(&MINIMAL.replace("fine_dt = 1e-3", "fine_dt = 3e-3")).is_err());
        assert!(ExperimentConfig::from_toml_str(&MINIMAL.replace("p0 = [0.5, 0.0]", "p0 = [0.5]")).is_err());
        assert!(ExperimentConfig::from_toml_str(&format!("format_version = 2\n{MINIMAL}")).is_err());
        let bad_generator = format!("{MINIMAL}\n[[symmetry.generators]]\nm = [[0.0]]\nw = [1.0]\n");
        assert!(ExperimentConfig::from_toml_str(&bad_generator).is_err());
    }

    #[test]
    fn generator_guesses_fill_up_to_count() {
        let s = SymmetryConfig {
            count: 3,
            generators: vec![SymmetryGenerator::translation(vec![1.0, 0.0])],
            ..SymmetryConfig::default()
        };
        let g = s.initial_generators(2).unwrap();
        assert_eq!(g.len(), 3);
        assert_eq!(g[0], SymmetryGenerator::translation(vec![1.0, 0.0]));
        assert_ne!(g[1], g[2]);
        assert!(g[1].flat().iter().all(|x| x.abs() < 0.1));
    }

    #[test]
    fn multi_trajectory_generation_is_seeded() {
        let mut c = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        c.data.trajectories = 3;
        let a = c.data.generate(&c.system, &c.newton).unwrap();
        let b = c.data.generate(&c.system, &c.newton).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[1].point(0), a[2].point(0));
        assert_eq!(a[0].point(0), &[0.0, 2.9]);
        assert_eq!(a[0].len(), 21);
    }

    #[test]
    fn dry_run_evaluates_initial_loss() {
        let mut c = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        c.symmetry.count = 1;
        let d = c.dry_run().unwrap();
        assert_eq!(d.n_params, 33_793);
        assert_eq!(d.generators, 1);
        assert!(d.initial_loss.is_finite() && d.initial_loss.symmetry_active);
    }
}
