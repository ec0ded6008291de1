//! Front end for the `monompc` binary: config loading, the closed-loop drivers
//! behind `simulate` and `compare`, and the `verify` report.

pub mod config;

use std::io::Write;
use std::path::Path;

use monompc::mpc::{
    compare_runs, lie_trotter_start, run_dae_splitting, run_lie_trotter, run_mpc, run_suboptimal_mpc, CompareReport,
    RunRecord,
};
use monompc::splitting::instantaneous_solve;
use monompc::verify::{run_suite, PropertyReport, Suite, VerifyContext};
use monompc::grid::VVector;
use serde::Serialize;

pub use config::{Experiment, Mode};

/// Overrides the output directory named in a config.
pub const OUTPUT_DIR_ENV: &str = "MONOMPC_OUTPUT_DIR";

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

/// A command failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }

    fn numerical(mode: Mode, err: monompc::Error) -> Self {
        Self {
            code: EXIT_NUMERICAL,
            message: format!("{} run failed: {err}", mode.name()),
        }
    }

    fn io(path: &Path, err: std::io::Error) -> Self {
        Self {
            code: EXIT_FAILURE,
            message: format!("cannot write {}: {err}", path.display()),
        }
    }
}

type CmdResult<T> = Result<T, Failure>;

/// Runs the experiment's driver. Every mode starts from the same plant state and
/// the zero optimizer state; the splitting modes first bring the optimizer block
/// to their own starting point at that state.
pub fn run(exp: &Experiment) -> monompc::Result<RunRecord> {
    let (spec, plant, cfg) = (&exp.spec, &exp.plant, &exp.split);
    let steps = exp.raw.steps;
    match exp.mode {
        Mode::Mpc => run_mpc(plant, spec, cfg.h, steps, &exp.xp0, exp.raw.oracle_tol),
        Mode::DaeSplitting => {
            let w = instantaneous_solve(spec, &exp.xp0, exp.raw.oracle_tol)?;
            let v0 = VVector { xp: exp.xp0.clone(), w };
            run_dae_splitting(plant, spec, cfg.h, steps, &v0, exp.raw.oracle_tol)
        }
        Mode::LieTrotter => {
            let v0 = lie_trotter_start(spec, cfg, &exp.xp0, &exp.zero_w())?;
            run_lie_trotter(plant, spec, cfg, steps, &v0)
        }
        Mode::SuboptimalProxPoint | Mode::SuboptimalForwardBackward | Mode::SuboptimalPeacemanRachford => {
            run_suboptimal_mpc(plant, spec, cfg, steps, &exp.xp0, &exp.zero_w(), exp.raw.start.into())
        }
    }
}

fn run_checked(exp: &Experiment) -> CmdResult<RunRecord> {
    run(exp).map_err(|e| Failure::numerical(exp.mode, e))
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CmdResult<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Failure::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| Failure::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Failure::io(path, e))?;
    tmp.persist(path).map_err(|e| Failure::io(path, e.error))?;
    Ok(())
}

fn to_json(value: &impl Serialize) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s.into_bytes()
}

#[derive(Debug, Serialize)]
pub struct Summary {
    pub mode: &'static str,
    pub steps: usize,
    pub h: f64,
    pub eps: f64,
    pub j: usize,
    pub seed: u64,
    pub initial_state: Vec<f64>,
    pub final_state: Vec<f64>,
    pub final_state_norm: f64,
    pub max_kkt_residual: f64,
    pub control_bounds_respected: bool,
    /// Deviation from exact MPC on the same config; absent for `mpc` itself.
    pub deviation_from_mpc: Option<CompareReport>,
}

/// `simulate`: writes `<mode>.csv` and `<mode>_summary.json`; returns the paths.
pub fn cmd_simulate(config_path: &Path) -> CmdResult<Vec<std::path::PathBuf>> {
    let exp = config::load(config_path).map_err(Failure::config)?;
    let rec = run_checked(&exp)?;
    let deviation = if exp.mode == Mode::Mpc {
        None
    } else {
        let reference = run_checked(&exp.with_mode(Mode::Mpc))?;
        Some(compare_runs(&rec, &reference).map_err(|e| Failure::numerical(Mode::Mpc, e))?)
    };
    let bounds = &exp.spec.bounds;
    let summary = Summary {
        mode: exp.mode.name(),
        steps: rec.steps(),
        h: exp.split.h,
        eps: exp.split.eps,
        j: exp.split.j,
        seed: exp.raw.seed,
        initial_state: exp.xp0.iter().copied().collect(),
        final_state: rec.final_state().iter().copied().collect(),
        final_state_norm: rec.final_state().norm(),
        max_kkt_residual: rec.kkt_residuals.iter().copied().fold(0.0, f64::max),
        control_bounds_respected: rec.applied_controls.iter().all(|u| bounds.contains(u)),
        deviation_from_mpc: deviation,
    };

    let mut csv = Vec::new();
    rec.write_csv(&mut csv).expect("writing to memory");
    let csv_path = exp.output_dir.join(format!("{}.csv", exp.mode.name()));
    let summary_path = exp.output_dir.join(format!("{}_summary.json", exp.mode.name()));
    write_atomic(&csv_path, &csv)?;
    write_atomic(&summary_path, &to_json(&summary))?;
    Ok(vec![csv_path, summary_path])
}

#[derive(Debug, Serialize)]
pub struct CompareOutput {
    pub scheme_a: &'static str,
    pub scheme_b: &'static str,
    pub steps: usize,
    pub max_state_dev: f64,
    pub max_control_dev: f64,
    pub max_dev: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// `compare`: runs both modes on the config and writes
/// `compare_<a>_vs_<b>.json`. Returns the report; `pass` decides the exit code.
pub fn cmd_compare(config_path: &Path, a: &str, b: &str) -> CmdResult<(CompareOutput, std::path::PathBuf)> {
    let exp = config::load(config_path).map_err(Failure::config)?;
    let ma = Mode::parse(a).map_err(Failure::config)?;
    let mb = Mode::parse(b).map_err(Failure::config)?;
    let ra = run_checked(&exp.with_mode(ma))?;
    let rb = run_checked(&exp.with_mode(mb))?;
    let rep = compare_runs(&ra, &rb).map_err(|e| Failure::numerical(ma, e))?;
    let tolerance = exp.raw.compare_tolerance;
    let out = CompareOutput {
        scheme_a: ma.name(),
        scheme_b: mb.name(),
        steps: ra.steps(),
        max_state_dev: rep.max_state_dev,
        max_control_dev: rep.max_control_dev,
        max_dev: rep.max_dev(),
        tolerance,
        pass: rep.max_dev() <= tolerance,
    };
    let path = exp
        .output_dir
        .join(format!("compare_{}_vs_{}.json", ma.name(), mb.name()));
    write_atomic(&path, &to_json(&out))?;
    Ok((out, path))
}

#[derive(Debug, Serialize)]
pub struct VerifyOutput {
    pub suite: Suite,
    pub seed: u64,
    pub pass: bool,
    pub properties: Vec<PropertyReport>,
}

/// `verify`: runs a property suite. The JSON is a pure function of suite and seed.
pub fn cmd_verify(suite: &str, seed: u64, nonmonotone_plant: bool) -> CmdResult<(VerifyOutput, String)> {
    let suite: Suite = suite.parse().map_err(|e: monompc::Error| Failure::config(e.to_string()))?;
    let mut ctx = VerifyContext::reference();
    if nonmonotone_plant {
        ctx = ctx.with_nonmonotone_plant();
    }
    let properties = run_suite(suite, seed, &ctx).map_err(|e| Failure {
        code: EXIT_NUMERICAL,
        message: format!("verify failed: {e}"),
    })?;
    let out = VerifyOutput {
        suite,
        seed,
        pass: properties.iter().all(|p| p.pass),
        properties,
    };
    let json = String::from_utf8(to_json(&out)).expect("serde_json emits UTF-8");
    Ok((out, json))
}
