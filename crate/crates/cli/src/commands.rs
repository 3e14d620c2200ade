use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use symdl::config::ExperimentConfig;
use symdl::eval::{evaluate_all, EvalOptions, GeneratorChoice};
use symdl::integrator::{initialize, rollout, NewtonConfig};
use symdl::io::{read_trajectory, write_loss_history, write_report, write_trajectory, write_vbea_table};
use symdl::loss::{total_loss, TrainingSet};
use symdl::model::{Checkpoint, LagrangianModel, TrainingMeta};
use symdl::systems::{SystemSpec, Trajectory, TrueMidpoint};
use symdl::trainer::{train, TrainEvent};
use symdl::vbea::{tabulate, VelocityEstimator};
use symdl::{DiscreteLagrangian, Error};

use crate::{
    grid, Command, Common, EvalArgs, GenerateArgs, GeneratorArg, Mode, OracleArgs, RolloutArgs, TrainArgs,
    VbeaExportArgs, VelocityArg,
};

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_INTEGRATOR: u8 = 3;
pub const EXIT_ABORT: u8 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub error: anyhow::Error,
}

impl From<anyhow::Error> for CliError {
    fn from(error: anyhow::Error) -> Self {
        let solver = error
            .chain()
            .any(|c| c.downcast_ref::<Error>().is_some_and(Error::is_solver_failure));
        let code = if solver { EXIT_INTEGRATOR } else { EXIT_USAGE };
        CliError { code, error }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        anyhow::Error::new(e).into()
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        anyhow::Error::new(e).into()
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn fail(code: u8, error: anyhow::Error) -> CliError {
    CliError { code, error }
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Generate(a) => generate(a),
        Command::Train(a) => train_cmd(a),
        Command::Rollout(a) => rollout_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::VbeaExport(a) => vbea_export(a),
        Command::Oracle(a) => oracle(a),
    }
}

/// Shipped desk-scale presets, used as the base when no config is given.
fn builtin_preset(system: &str) -> Option<&'static str> {
    match system {
        "cartpend" => Some(include_str!("../../../configs/desk/cartpend_single.toml")),
        "kepler" => Some(include_str!("../../../configs/desk/kepler_single.toml")),
        _ => None,
    }
}

fn base_config(common: &Common, system: Option<&str>) -> Result<ExperimentConfig> {
    let mut cfg = match (&common.config, system) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(name)) => match builtin_preset(name) {
            Some(text) => ExperimentConfig::from_toml_str(text)?,
            None => ExperimentConfig::new(SystemSpec::by_name(name)?),
        },
        (None, None) => return Err(anyhow!("either --config or --system is required").into()),
    };
    if let Some(name) = system {
        if cfg.system.name() != name {
            cfg.system = SystemSpec::by_name(name)?;
        }
    }
    Ok(cfg)
}

fn print_config(cfg: &ExperimentConfig) -> Result<()> {
    print!("{}", cfg.to_toml_string()?);
    Ok(())
}

fn generate(a: GenerateArgs) -> Result<()> {
    let mut cfg = base_config(&a.common, a.system.as_deref())?;
    let d = &mut cfg.data;
    d.paths.clear();
    if let Some(v) = a.n {
        d.n = v;
    }
    if let Some(v) = a.dt {
        d.dt = v;
    }
    if let Some(v) = a.fine_dt {
        d.fine_dt = v;
    }
    if let Some(v) = a.q0 {
        d.q0 = v;
    }
    if let Some(v) = a.p0 {
        d.p0 = v;
    }
    if let Some(v) = a.noise_var {
        d.noise_variance = v;
    }
    if let Some(v) = a.seed {
        d.seed = v;
    }
    if let Some(v) = a.trajectories {
        d.trajectories = v;
    }
    if let Some(v) = a.ic_spread {
        d.ic_spread = v;
    }
    cfg.validate()?;
    if a.common.print_config {
        return print_config(&cfg);
    }
    if a.dry_run {
        let t = cfg.data.generate_one(&cfg.system, 0, 2, &cfg.newton)?;
        println!("dry run ok: {} trajectories of {} points, n_q = {}", cfg.data.trajectories, cfg.data.n + 1, t.n_q());
        return Ok(());
    }
    let out = a.out.expect("required by clap");
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let trajectories = cfg.data.generate(&cfg.system, &cfg.newton)?;
    for (i, t) in trajectories.iter().enumerate() {
        let path = out.join(format!("{}_{i:03}.csv", cfg.system.name()));
        write_trajectory(&path, t)?;
        println!("{}", path.display());
    }
    Ok(())
}

/// Files as given; directories expand to their sorted `*.csv` entries.
fn expand_data(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut entries: Vec<PathBuf> = std::fs::read_dir(p)
                .with_context(|| format!("reading {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|e| e.extension().is_some_and(|x| x == "csv"))
                .collect();
            entries.sort();
            out.extend(entries);
        } else {
            out.push(p.clone());
        }
    }
    if out.is_empty() {
        return Err(anyhow!("no trajectory files found").into());
    }
    Ok(out)
}

fn read_all(paths: &[PathBuf]) -> Result<Vec<Trajectory>> {
    Ok(paths.iter().map(|p| read_trajectory(p)).collect::<symdl::Result<_>>()?)
}

fn recorded_system(trajectories: &[Trajectory]) -> Option<SystemSpec> {
    trajectories.iter().find_map(|t| t.provenance.as_ref().and_then(|p| p.system))
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let data_paths = if a.data.is_empty() { Vec::new() } else { expand_data(&a.data)? };
    let mut cfg = match &a.common.config {
        Some(_) => base_config(&a.common, None)?,
        None => {
            let probe = read_all(&data_paths[..data_paths.len().min(1)])?;
            let system = recorded_system(&probe).ok_or_else(|| anyhow!("--config is required"))?;
            base_config(&a.common, Some(system.name()))?
        }
    };
    if !data_paths.is_empty() {
        cfg.data.paths = data_paths;
    }
    if let Some(v) = a.epochs {
        cfg.train.epochs = v;
    }
    if let Some(v) = a.warmup {
        cfg.train.symmetry_warmup_epochs = v;
    }
    if let Some(v) = a.seed {
        cfg.train.seed = v;
        cfg.model.seed = v;
        cfg.symmetry.seed = v;
    }
    if let Some(v) = a.checkpoint_interval {
        cfg.train.checkpoint_interval = v;
    }
    match a.mode {
        Some(Mode::Dlnn) => {
            cfg.symmetry.count = 0;
            cfg.symmetry.generators.clear();
        }
        Some(Mode::Symdlnn) if cfg.symmetry.k() == 0 => cfg.symmetry.count = 1,
        _ => {}
    }
    cfg.validate()?;
    if a.common.print_config {
        return print_config(&cfg);
    }

    let trajectories = if cfg.data.paths.is_empty() {
        if a.dry_run {
            vec![cfg.data.generate_one(&cfg.system, 0, 2, &cfg.newton)?]
        } else {
            cfg.data.generate(&cfg.system, &cfg.newton)?
        }
    } else {
        read_all(&cfg.data.paths)?
    };
    let set = TrainingSet::new(&trajectories)?;
    let n_q = set.n_q();
    let model = cfg.model.init(n_q, set.dt())?;
    let generators = cfg.symmetry.initial_generators(n_q)?;
    let mode = if generators.is_empty() { "dlnn" } else { "symdlnn" };

    if a.dry_run {
        let loss = total_loss(&model, &generators, &set, &cfg.train.weights, !generators.is_empty())?;
        println!(
            "dry run ok: mode {mode}, {} trajectories, {} triples, {} parameters, {} generators, initial loss {:e}",
            trajectories.len(),
            set.n_triples(),
            model.n_params(),
            generators.len(),
            loss.total
        );
        return Ok(());
    }

    let out = a.out.expect("required by clap");
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    std::fs::write(out.join("config.toml"), cfg.to_toml_string()?)?;
    let every = (cfg.train.epochs / 20).max(1);
    let system = cfg.system;
    let outcome = train(&set, model, generators, &cfg.train, |event| {
        match event {
            TrainEvent::Epoch(r) if r.epoch == 1 || r.epoch % every == 0 => {
                eprintln!("epoch {:>7}  total {:.6e}  del {:.6e}", r.epoch, r.loss.total, r.loss.del);
            }
            TrainEvent::Checkpoint(c) if c.meta.epoch < cfg.train.epochs => {
                let mut c = c.clone();
                c.meta.system = Some(system);
                c.save(&out.join(format!("checkpoint_{:07}.json", c.meta.epoch)))?;
            }
            _ => {}
        }
        Ok(())
    })?;
    let mut checkpoint = outcome.checkpoint;
    checkpoint.meta.system = Some(system);
    checkpoint.save(&out.join("checkpoint.json"))?;
    write_loss_history(&out.join("loss.csv"), &outcome.history)?;
    println!("{}", out.join("checkpoint.json").display());
    if let Some(e) = outcome.aborted {
        return Err(fail(
            EXIT_ABORT,
            anyhow::Error::new(e).context(format!("training aborted after epoch {}", checkpoint.meta.epoch)),
        ));
    }
    Ok(())
}

fn rollout_cmd(a: RolloutArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&a.model)?;
    let ld = &ckpt.model;
    let newton = NewtonConfig::default();
    let (q0, q1) = if let Some(path) = &a.init_from {
        let t = read_trajectory(path)?;
        if t.len() < 2 {
            return Err(anyhow!("{} has fewer than two points", path.display()).into());
        }
        (t.point(0).to_vec(), t.point(1).to_vec())
    } else {
        let q0 = a.q0.ok_or_else(|| anyhow!("--q0 or --init-from is required"))?;
        let q1 = match (a.q1, a.p0) {
            (Some(q1), _) => q1,
            (None, Some(p0)) => initialize(ld, &q0, &p0, &newton).context("initializing from (q0, p0)")?,
            (None, None) => return Err(anyhow!("--q1 or --p0 is required with --q0").into()),
        };
        (q0, q1)
    };
    let r = rollout(ld, &q0, &q1, a.steps, &newton)?;
    write_trajectory(&a.out, &r.trajectory)?;
    println!("{}", a.out.display());
    match r.failure {
        Some(e) => Err(fail(EXIT_INTEGRATOR, anyhow::Error::new(e).context("rollout stopped early"))),
        None => Ok(()),
    }
}

fn eval_cmd(a: EvalArgs) -> Result<()> {
    let mut cfg = match &a.common.config {
        Some(p) => Some(ExperimentConfig::load(p)?),
        None => None,
    };
    let mut ev = cfg.as_ref().map(|c| c.eval.clone()).unwrap_or_default();
    if let Some(n) = a.n_extra {
        ev.n_extra = n;
    }
    if let Some(g) = a.generator {
        ev.generator = match g {
            GeneratorArg::Learned => GeneratorChoice::Learned,
            GeneratorArg::True => GeneratorChoice::True,
        };
    }
    if let Some(v) = a.velocity {
        ev.velocity = match v {
            VelocityArg::Central => VelocityEstimator::CentralDifference,
            VelocityArg::FivePoint => VelocityEstimator::FivePoint,
        };
    }
    if let Some(c) = cfg.as_mut() {
        c.eval = ev.clone();
    }
    if a.common.print_config {
        return match &cfg {
            Some(c) => print_config(c),
            None => {
                println!("{}", toml::to_string(&ev).map_err(anyhow::Error::new)?);
                Ok(())
            }
        };
    }

    let ckpt = Checkpoint::load(&a.model)?;
    let paths = expand_data(&a.data)?;
    let references = read_all(&paths)?;
    let system = match &a.system {
        Some(name) => Some(SystemSpec::by_name(name)?),
        None => ckpt.meta.system.or(cfg.as_ref().map(|c| c.system)).or_else(|| recorded_system(&references)),
    };
    let extended_reference = a.reference.as_deref().map(read_trajectory).transpose()?;
    let opts = EvalOptions {
        n_extra: ev.n_extra,
        generator: ev.generator,
        system,
        newton: cfg.map(|c| c.newton).unwrap_or_default(),
        velocity: ev.velocity,
        extended_reference,
    };
    let report_path = a.report.expect("required by clap");
    let targets: Vec<PathBuf> = if paths.len() == 1 {
        vec![report_path.clone()]
    } else {
        std::fs::create_dir_all(&report_path)?;
        paths.iter().map(|p| report_path.join(report_name(p))).collect()
    };
    let mut failed = None;
    for ((report, target), source) in evaluate_all(&ckpt, &references, &opts).into_iter().zip(&targets).zip(&paths) {
        let report = report.with_context(|| format!("evaluating {}", source.display()))?;
        write_report(target, &report)?;
        println!("{}", target.display());
        if let Some(k) = report.summary.failed_index {
            failed.get_or_insert(anyhow!("{}: Newton failure at index {k}", source.display()));
        }
    }
    match failed {
        Some(e) => Err(fail(EXIT_INTEGRATOR, e)),
        None => Ok(()),
    }
}

fn report_name(data: &Path) -> String {
    let stem = data.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    format!("{stem}_report.csv")
}

fn vbea_export(a: VbeaExportArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&a.model)?;
    let axes = grid::parse(&a.grid)?;
    let n_q = ckpt.model.n_q();
    if axes.len() != 2 * n_q {
        bail_usage(format!("grid needs {} axes (q then v), got {}", 2 * n_q, axes.len()))?;
    }
    let samples = tabulate(&ckpt.model, &grid::points(&axes))?;
    write_vbea_table(&a.out, &samples)?;
    println!("{}", a.out.display());
    Ok(())
}

fn bail_usage(msg: String) -> Result<()> {
    Err(fail(EXIT_USAGE, anyhow!(msg)))
}

fn oracle(a: OracleArgs) -> Result<()> {
    let system = SystemSpec::by_name(&a.system)?;
    let model = LagrangianModel::TrueMidpoint(TrueMidpoint::new(system, a.dt)?);
    let meta = TrainingMeta { mode: Some("oracle".into()), system: Some(system), ..TrainingMeta::default() };
    let ckpt = Checkpoint::new(model, system.true_generator().into_iter().collect(), meta);
    ckpt.save(&a.out)?;
    println!("{}", a.out.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solver_failures_map_to_integrator_exit() {
        let e: CliError = Error::Rollout { index: 3, source: Box::new(Error::SingularJacobian { det: 0.0 }) }.into();
        assert_eq!(e.code, EXIT_INTEGRATOR);
        let e: CliError = anyhow::Error::new(Error::NewtonDiverged { iterations: 1, residual: 1.0 })
            .context("outer")
            .into();
        assert_eq!(e.code, EXIT_INTEGRATOR);
        let e: CliError = Error::Config("x".into()).into();
        assert_eq!(e.code, EXIT_USAGE);
    }

    #[test]
    fn presets_are_embedded() {
        for name in ["cartpend", "kepler"] {
            let cfg = ExperimentConfig::from_toml_str(builtin_preset(name).unwrap()).unwrap();
            assert_eq!(cfg.system.name(), name);
        }
    }
}
