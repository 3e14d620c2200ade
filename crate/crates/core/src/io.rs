//! On-disk formats: trajectory CSV with a JSON sidecar, loss history CSV and
//! evaluation report CSV.
//!
//! Floats are written in shortest round-trip scientific notation, so a
//! written trajectory reads back bit-identically.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{Phase, Report, ReportSummary};
use crate::loss::LossBreakdown;
use crate::systems::{Provenance, Trajectory};
use crate::trainer::EpochRecord;
use crate::vbea::VbeaSample;

pub const FORMAT_VERSION: u32 = 1;
const VERSION_LINE: &str = "# format_version=1";

fn format_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format { path: path.to_owned(), reason: reason.into() }
}

fn num(x: f64) -> String {
    format!("{x:e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn parse_f64(path: &Path, s: &str) -> Result<f64> {
    s.trim().parse().map_err(|_| format_err(path, format!("not a number: {s:?}")))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct TrajectoryMeta {
    format_version: u32,
    dt: f64,
    t0: f64,
    n_q: usize,
    points: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<Provenance>,
}

/// `run/traj.csv` → `run/traj.meta.json`.
pub fn meta_path(csv: &Path) -> PathBuf {
    csv.with_extension("meta.json")
}

/// Writes `t,q1,…,qn` rows plus the sidecar holding `dt`, `t0` and
/// provenance.
pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["t".to_string()];
    header.extend((1..=traj.n_q()).map(|i| format!("q{i}")));
    w.write_record(&header)?;
    for k in 0..traj.len() {
        let mut row = vec![num(traj.time(k))];
        row.extend(traj.point(k).iter().map(|&x| num(x)));
        w.write_record(&row)?;
    }
    w.flush()?;
    let meta = TrajectoryMeta {
        format_version: FORMAT_VERSION,
        dt: traj.dt(),
        t0: traj.t0(),
        n_q: traj.n_q(),
        points: traj.len(),
        provenance: traj.provenance.clone(),
    };
    std::fs::write(meta_path(path), serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok(())
}

/// Reads a trajectory CSV. Without a sidecar, `dt` and `t0` come from the
/// first two `t` entries.
pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let header = r.headers()?.clone();
    if header.get(0) != Some("t") || header.len() < 2 {
        return Err(format_err(path, "header must be t,q1,…"));
    }
    let n_q = header.len() - 1;
    let mut times = Vec::new();
    let mut points = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != n_q + 1 {
            return Err(format_err(path, format!("row {} has {} fields", points.len() + 1, rec.len())));
        }
        times.push(parse_f64(path, &rec[0])?);
        points.push(rec.iter().skip(1).map(|s| parse_f64(path, s)).collect::<Result<Vec<_>>>()?);
    }
    let sidecar = meta_path(path);
    let traj = if sidecar.exists() {
        let meta: TrajectoryMeta = serde_json::from_str(&std::fs::read_to_string(&sidecar)?)
            .map_err(|e| format_err(&sidecar, e.to_string()))?;
        if meta.format_version != FORMAT_VERSION {
            return Err(format_err(&sidecar, format!("unsupported format_version {}", meta.format_version)));
        }
        if meta.n_q != n_q || meta.points != points.len() {
            return Err(format_err(path, "CSV shape disagrees with its metadata"));
        }
        let mut t = Trajectory::new(meta.dt, meta.t0, points)?;
        t.provenance = meta.provenance;
        t
    } else {
        if times.len() < 2 {
            return Err(format_err(path, "need two rows or a metadata file to infer dt"));
        }
        Trajectory::new(times[1] - times[0], times[0], points)?
    };
    let tol = 1e-9 * traj.dt().max(traj.time(traj.len() - 1).abs());
    if let Some(k) = times.iter().enumerate().position(|(k, &t)| (t - traj.time(k)).abs() > tol) {
        return Err(format_err(path, format!("row {} time {} off the uniform grid", k + 1, times[k])));
    }
    Ok(traj)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let mut f = BufWriter::new(File::create(path)?);
    writeln!(f, "{VERSION_LINE}")?;
    Ok(f)
}

fn check_version_line(path: &Path) -> Result<()> {
    let mut first = String::new();
    BufReader::new(File::open(path)?).read_line(&mut first)?;
    if first.trim_end() != VERSION_LINE {
        return Err(format_err(path, format!("expected {VERSION_LINE:?} on the first line")));
    }
    Ok(())
}

const LOSS_HEADER: [&str; 8] =
    ["epoch", "del", "degeneracy", "symmetry", "nontriviality", "orthogonality", "total", "symmetry_active"];

pub fn write_loss_history(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(LOSS_HEADER)?;
    for r in history {
        let l = &r.loss;
        w.write_record([
            r.epoch.to_string(),
            num(l.del),
            num(l.degeneracy),
            num(l.symmetry),
            num(l.nontriviality),
            num(l.orthogonality),
            num(l.total),
            (l.symmetry_active as u8).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_loss_history(path: &Path) -> Result<Vec<EpochRecord>> {
    check_version_line(path)?;
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    if r.headers()?.iter().ne(LOSS_HEADER) {
        return Err(format_err(path, "unexpected loss history header"));
    }
    r.records()
        .map(|rec| {
            let rec = rec?;
            let f = |i: usize| parse_f64(path, &rec[i]);
            Ok(EpochRecord {
                epoch: rec[0].parse().map_err(|_| format_err(path, "bad epoch"))?,
                loss: LossBreakdown {
                    del: f(1)?,
                    degeneracy: f(2)?,
                    symmetry: f(3)?,
                    nontriviality: f(4)?,
                    orthogonality: f(5)?,
                    total: f(6)?,
                    symmetry_active: &rec[7] == "1",
                },
            })
        })
        .collect()
}

/// Per-index rows `k,t,phase,q…,I_nn,I_true,H_vbea,H_true` (empty where a
/// series is undefined), then the summary as `# summary <json>`.
pub fn write_report(path: &Path, report: &Report) -> Result<()> {
    let mut f = create(path)?;
    {
        let mut w = csv::Writer::from_writer(&mut f);
        let n_q = report.rows.first().map_or(0, |r| r.q.len());
        let mut header: Vec<String> = ["k", "t", "phase"].map(String::from).to_vec();
        header.extend((1..=n_q).map(|i| format!("q{i}")));
        header.extend(["I_nn", "I_true", "H_vbea", "H_true"].map(String::from));
        w.write_record(&header)?;
        for r in &report.rows {
            let mut row = vec![r.k.to_string(), num(r.t), r.phase.as_str().to_string()];
            row.extend(r.q.iter().map(|&x| num(x)));
            row.extend([opt(r.i_nn), opt(r.i_true), opt(r.h_vbea), opt(r.h_true)]);
            w.write_record(&row)?;
        }
        w.flush()?;
    }
    writeln!(f, "# summary {}", serde_json::to_string(&report.summary)?)?;
    f.flush()?;
    Ok(())
}

/// Summary block of a report file.
pub fn read_report_summary(path: &Path) -> Result<ReportSummary> {
    check_version_line(path)?;
    let text = std::fs::read_to_string(path)?;
    let line = text
        .lines()
        .find_map(|l| l.strip_prefix("# summary "))
        .ok_or_else(|| format_err(path, "no summary block"))?;
    serde_json::from_str(line).map_err(|e| format_err(path, e.to_string()))
}

/// Phase column values of a report, in row order.
pub fn read_report_phases(path: &Path) -> Result<Vec<Phase>> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    r.records()
        .map(|rec| match &rec?[2] {
            "recreation" => Ok(Phase::Recreation),
            "prediction" => Ok(Phase::Prediction),
            other => Err(format_err(path, format!("unknown phase {other:?}"))),
        })
        .collect()
}

/// `q…,v…,L_invmod,L_vbea,H_vbea` rows after the version line.
pub fn write_vbea_table(path: &Path, samples: &[VbeaSample]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let n_q = samples.first().map_or(0, |s| s.q.len());
    let mut header: Vec<String> = (1..=n_q).map(|i| format!("q{i}")).collect();
    header.extend((1..=n_q).map(|i| format!("v{i}")));
    header.extend(["L_invmod", "L_vbea", "H_vbea"].map(String::from));
    w.write_record(&header)?;
    for s in samples {
        let mut row: Vec<String> = s.q.iter().chain(&s.v).map(|&x| num(x)).collect();
        row.extend([opt(s.l_invmod), opt(s.l_vbea), opt(s.h_vbea)]);
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
