//! Closed-loop drivers: exact MPC, suboptimal MPC and the two splitting schemes
//! of the coupled system, plus run comparison.
//!
//! Every driver records the pairs `(x_p(t_n), w_n)` where `w_n` is the optimizer
//! state from which the control on `[t_n, t_{n+1})` is read off, so records of
//! different drivers can be compared index by index.

use std::io::Write;
use std::sync::Arc;

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{weighted_norm, AdjointState, StateTraj, VVector, WVector};
use crate::monotone::{MonotoneOp, ResolventOptions, ResolventSolver, SingleValued};
use crate::ocp::{recover_control, KktState, KktSystem, MoptOperator, OcpOracle, OcpSpec};
use crate::plant::{plant_flow, PlantModel};
use crate::splitting::{FrozenPlantOptimizer, PeacemanRachford, Scheme, SplitConfig};

#[derive(Debug, Clone, Default)]
pub struct RunRecord {
    pub label: String,
    pub times: Vec<f64>,
    pub plant_states: Vec<DVector<f64>>,
    pub applied_controls: Vec<DVector<f64>>,
    pub optimizer_states: Vec<WVector>,
    pub kkt_residuals: Vec<f64>,
}

impl RunRecord {
    fn new(label: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            ..Self::default()
        }
    }

    pub fn steps(&self) -> usize {
        self.applied_controls.len()
    }

    pub fn final_state(&self) -> &DVector<f64> {
        self.plant_states.last().expect("a run records at least the initial state")
    }

    fn push(&mut self, t: f64, xp: &DVector<f64>, w: &WVector, spec: &OcpSpec) -> Result<()> {
        let step = self.times.len();
        let r = kkt_residual(spec, xp, w).map_err(|e| e.at_step(step))?;
        if !xp.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("plant state").at_step(step));
        }
        if !r.is_finite() {
            return Err(Error::NonFinite("optimizer state").at_step(step));
        }
        self.times.push(t);
        self.plant_states.push(xp.clone());
        self.kkt_residuals.push(r);
        self.optimizer_states.push(w.clone());
        Ok(())
    }

    /// Trajectory as CSV: `t, x_p[..], u[..], kkt_residual`, one row per sampling
    /// instant; the control fields of the final row are empty.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        let n = self.plant_states.first().map_or(0, DVector::len);
        let m = self.applied_controls.first().map_or(0, DVector::len);
        let mut header = vec!["t".to_string()];
        header.extend((0..n).map(|i| format!("x_p[{i}]")));
        header.extend((0..m).map(|i| format!("u[{i}]")));
        header.push("kkt_residual".into());
        writeln!(out, "{}", header.join(","))?;
        for (k, t) in self.times.iter().enumerate() {
            let mut row = vec![fmt_f64(*t)];
            row.extend(self.plant_states[k].iter().map(|v| fmt_f64(*v)));
            match self.applied_controls.get(k) {
                Some(u) => row.extend(u.iter().map(|v| fmt_f64(*v))),
                None => row.extend(std::iter::repeat_n(String::new(), m)),
            }
            row.push(self.kkt_residuals.get(k).map_or(String::new(), |r| fmt_f64(*r)));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Round-trip-safe formatting with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// `‖M_opt,x_p(w)‖_W`.
pub fn kkt_residual(spec: &OcpSpec, xp: &DVector<f64>, w: &WVector) -> Result<f64> {
    let op = MoptOperator::new(spec, xp)?;
    Ok(weighted_norm(&op.metric(), &op.apply(&w.to_flat())))
}

fn check_run(spec: &OcpSpec, plant: &PlantModel, xp0: &DVector<f64>, h: f64, steps: usize) -> Result<()> {
    if plant.n() != spec.n() || plant.m() != spec.m() {
        return Err(Error::dim(
            "plant vs. OCP",
            format!("n={}, m={}", spec.n(), spec.m()),
            format!("n={}, m={}", plant.n(), plant.m()),
        ));
    }
    if xp0.len() != spec.n() {
        return Err(Error::dim("initial plant state", spec.n(), xp0.len()));
    }
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::InvalidArgument(format!("sampling time must be positive, got {h}")));
    }
    if steps == 0 {
        return Err(Error::InvalidArgument("at least one step is required".into()));
    }
    Ok(())
}

fn check_w(spec: &OcpSpec, w: &WVector) -> Result<()> {
    if w.grid() != &spec.grid || w.state_dim() != spec.n() {
        return Err(Error::dim("optimizer state", spec.n(), w.state_dim()));
    }
    Ok(())
}

/// Exact MPC: solve the OCP at every sampling instant and hold `u*(0)`.
pub fn run_mpc(
    plant: &PlantModel,
    spec: &OcpSpec,
    h: f64,
    steps: usize,
    xp0: &DVector<f64>,
    tol: f64,
) -> Result<RunRecord> {
    check_run(spec, plant, xp0, h, steps)?;
    let oracle = OcpOracle::new(spec)?;
    let mut rec = RunRecord::new("mpc");
    let mut xp = xp0.clone();
    for n in 0..=steps {
        let w = oracle.solve(&xp, tol).map_err(|e| e.at_step(n))?.w;
        rec.push(n as f64 * h, &xp, &w, spec)?;
        if n == steps {
            break;
        }
        let u = spec.feedback_from_state(&w);
        xp = plant_flow(plant, &u, h, &xp).map_err(|e| e.at_step(n))?;
        rec.applied_controls.push(u);
    }
    Ok(rec)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StartMode {
    /// Each sampling instant starts from the previous instant's iterate.
    #[default]
    Warm,
    /// Each sampling instant restarts from the given initial iterate.
    Cold,
}

/// Full optimality-system iterate `(x, u, λ, λ₀)` lifted from a reduced state.
fn lift(kkt: &KktSystem, w: &WVector) -> Result<DVector<f64>> {
    let u = recover_control(kkt.spec(), &w.p)?;
    Ok(kkt.to_flat(&KktState {
        x: w.x.clone(),
        u,
        p: w.p.clone(),
    }))
}

fn reduce(kkt: &KktSystem, z: &DVector<f64>) -> Result<WVector> {
    Ok(kkt.from_flat(z)?.reduced())
}

/// Inner iteration state of the suboptimal driver.
enum Inner {
    Reduced(WVector),
    Full(DVector<f64>),
}

/// Suboptimal MPC: `j` iterations of the configured inner scheme per sampling instant.
///
/// Proximal-point iterates live in the reduced space. Forward-backward and
/// Peaceman–Rachford iterate on the full optimality system; for the latter the
/// reported optimizer state is the shadow point `J_{γ(𝒜+b)}(z)`.
pub fn run_suboptimal_mpc(
    plant: &PlantModel,
    spec: &OcpSpec,
    cfg: &SplitConfig,
    steps: usize,
    xp0: &DVector<f64>,
    w0: &WVector,
    start: StartMode,
) -> Result<RunRecord> {
    cfg.validate()?;
    check_run(spec, plant, xp0, cfg.h, steps)?;
    check_w(spec, w0)?;
    let gamma = cfg.gamma();
    let opts = ResolventOptions::with_tol(cfg.tol);
    let kkt = KktSystem::new(spec);
    let bounds = kkt.bounds();
    let oracle = OcpOracle::new(spec)?;
    let mopt0 = MoptOperator::new(spec, &DVector::zeros(spec.n()))?;
    let mut pr = match cfg.scheme {
        Scheme::PeacemanRachford => Some(PeacemanRachford::new(
            kkt.affine(),
            &kkt.forcing(xp0)?,
            &bounds,
            gamma,
        )?),
        _ => None,
    };
    let initial = match cfg.scheme {
        Scheme::ForwardBackward | Scheme::PeacemanRachford => Inner::Full(lift(&kkt, w0)?),
        _ => Inner::Reduced(w0.clone()),
    };

    let mut rec = RunRecord::new(format!("suboptimal_{}", scheme_name(cfg.scheme)));
    let mut xp = xp0.clone();
    let mut inner = match &initial {
        Inner::Reduced(w) => Inner::Reduced(w.clone()),
        Inner::Full(z) => Inner::Full(z.clone()),
    };
    for n in 0..=steps {
        if start == StartMode::Cold {
            inner = match &initial {
                Inner::Reduced(w) => Inner::Reduced(w.clone()),
                Inner::Full(z) => Inner::Full(z.clone()),
            };
        }
        let w = match (cfg.scheme, &mut inner) {
            (Scheme::Instantaneous, inner) => {
                let w = oracle.solve(&xp, cfg.tol).map_err(|e| e.at_step(n))?.w;
                *inner = Inner::Reduced(w.clone());
                w
            }
            (Scheme::ProxPoint, Inner::Reduced(w)) => {
                let op = mopt0.with_x0(&xp)?.to_monotone();
                let mut solver = ResolventSolver::new(&op, gamma, opts)?;
                let mut flat = w.to_flat();
                for _ in 0..cfg.j {
                    flat = solver.solve(&flat).map_err(|e| e.at_step(n))?;
                }
                *w = WVector::from_flat(spec.grid, spec.n(), &flat)?;
                w.clone()
            }
            (Scheme::ForwardBackward, Inner::Full(z)) => {
                let b = kkt.forcing(&xp)?;
                for _ in 0..cfg.j {
                    *z = bounds.project(&(&*z - (kkt.affine().apply(z) + &b) * gamma));
                }
                if !z.iter().all(|v| v.is_finite()) {
                    return Err(Error::Convergence {
                        what: "forward-backward iteration",
                        iterations: cfg.j,
                        residual: f64::INFINITY,
                    }
                    .at_step(n));
                }
                reduce(&kkt, z)?
            }
            (Scheme::PeacemanRachford, Inner::Full(z)) => {
                let pr = pr.as_mut().expect("built for this scheme");
                pr.set_forcing(&kkt.forcing(&xp)?)?;
                for _ in 0..cfg.j {
                    *z = pr.step(z).map_err(|e| e.at_step(n))?;
                }
                reduce(&kkt, &pr.linear_resolvent(z)?)?
            }
            _ => unreachable!("inner state matches the scheme"),
        };
        rec.push(n as f64 * cfg.h, &xp, &w, spec)?;
        if n == steps {
            break;
        }
        let u = spec.feedback_from_state(&w);
        xp = plant_flow(plant, &u, cfg.h, &xp).map_err(|e| e.at_step(n))?;
        rec.applied_controls.push(u);
    }
    Ok(rec)
}

pub fn scheme_name(s: Scheme) -> &'static str {
    match s {
        Scheme::ProxPoint => "proxpoint",
        Scheme::ForwardBackward => "forward_backward",
        Scheme::PeacemanRachford => "peaceman_rachford",
        Scheme::Instantaneous => "instantaneous",
    }
}

/// Lie–Trotter splitting of the coupled system with `j` implicit Euler substeps:
/// exact plant flow under the held control, then `j` implicit steps of size `h/j`
/// on the optimizer block with the plant state frozen.
pub fn run_lie_trotter(
    plant: &PlantModel,
    spec: &OcpSpec,
    cfg: &SplitConfig,
    steps: usize,
    v0: &VVector,
) -> Result<RunRecord> {
    cfg.validate()?;
    check_run(spec, plant, &v0.xp, cfg.h, steps)?;
    check_w(spec, &v0.w)?;
    let op = frozen_optimizer_op(spec, cfg.eps)?;
    let substep = cfg.h / cfg.j as f64;
    let mut solver = ResolventSolver::new(&op, substep, ResolventOptions::with_tol(cfg.tol))?;

    let mut rec = RunRecord::new("lie_trotter");
    let mut v = v0.clone();
    for n in 0..=steps {
        rec.push(n as f64 * cfg.h, &v.xp, &v.w, spec)?;
        if n == steps {
            break;
        }
        let u = spec.feedback_from_state(&v.w);
        let xp = plant_flow(plant, &u, cfg.h, &v.xp).map_err(|e| e.at_step(n))?;
        rec.applied_controls.push(u);
        let mut flat = VVector { xp, w: v.w }.to_flat();
        for _ in 0..cfg.j {
            flat = solver.solve(&flat).map_err(|e| e.at_step(n))?;
        }
        v = VVector::from_flat(spec.grid, spec.n(), &flat)?;
    }
    Ok(rec)
}

fn frozen_optimizer_op(spec: &OcpSpec, eps: f64) -> Result<MonotoneOp> {
    let frozen = FrozenPlantOptimizer::new(spec, eps)?;
    MonotoneOp::new(Arc::new(frozen)).with_metric(VVector::weights(&spec.grid, spec.n()))
}

/// Initial coupled state for [`run_lie_trotter`]: the optimizer block after `j`
/// implicit substeps from `w_init` at the initial plant state, so the first held
/// control already reflects the measurement.
pub fn lie_trotter_start(spec: &OcpSpec, cfg: &SplitConfig, xp0: &DVector<f64>, w_init: &WVector) -> Result<VVector> {
    cfg.validate()?;
    check_w(spec, w_init)?;
    if xp0.len() != spec.n() {
        return Err(Error::dim("initial plant state", spec.n(), xp0.len()));
    }
    let op = frozen_optimizer_op(spec, cfg.eps)?;
    let mut solver = ResolventSolver::new(&op, cfg.h / cfg.j as f64, ResolventOptions::with_tol(cfg.tol))?;
    let mut flat = VVector {
        xp: xp0.clone(),
        w: w_init.clone(),
    }
    .to_flat();
    for _ in 0..cfg.j {
        flat = solver.solve(&flat).map_err(|e| e.at_step(0))?;
    }
    VVector::from_flat(spec.grid, spec.n(), &flat)
}

/// The `ε = 0` splitting: exact plant flow, then the instantaneous optimizer state.
pub fn run_dae_splitting(
    plant: &PlantModel,
    spec: &OcpSpec,
    h: f64,
    steps: usize,
    v0: &VVector,
    tol: f64,
) -> Result<RunRecord> {
    check_run(spec, plant, &v0.xp, h, steps)?;
    check_w(spec, &v0.w)?;
    let oracle = OcpOracle::new(spec)?;
    let mut rec = RunRecord::new("dae_splitting");
    let mut v = v0.clone();
    for n in 0..=steps {
        rec.push(n as f64 * h, &v.xp, &v.w, spec)?;
        if n == steps {
            break;
        }
        let u = spec.feedback_from_state(&v.w);
        let xp = plant_flow(plant, &u, h, &v.xp).map_err(|e| e.at_step(n))?;
        rec.applied_controls.push(u);
        let w = oracle.solve(&xp, tol).map_err(|e| e.at_step(n + 1))?.w;
        v = VVector { xp, w };
    }
    Ok(rec)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CompareReport {
    pub max_state_dev: f64,
    pub max_control_dev: f64,
}

impl CompareReport {
    pub fn max_dev(&self) -> f64 {
        self.max_state_dev.max(self.max_control_dev)
    }
}

pub fn compare_runs(r1: &RunRecord, r2: &RunRecord) -> Result<CompareReport> {
    if r1.plant_states.len() != r2.plant_states.len() || r1.applied_controls.len() != r2.applied_controls.len() {
        return Err(Error::dim(
            "compare_runs step count",
            r1.applied_controls.len(),
            r2.applied_controls.len(),
        ));
    }
    let dev = |a: &[DVector<f64>], b: &[DVector<f64>], what: &'static str| -> Result<f64> {
        let mut worst = 0.0f64;
        for (x, y) in a.iter().zip(b) {
            if x.len() != y.len() {
                return Err(Error::dim(what, x.len(), y.len()));
            }
            worst = worst.max((x - y).amax());
        }
        Ok(worst)
    };
    Ok(CompareReport {
        max_state_dev: dev(&r1.plant_states, &r2.plant_states, "compare_runs state")?,
        max_control_dev: dev(&r1.applied_controls, &r2.applied_controls, "compare_runs control")?,
    })
}

/// The zero optimizer state on the spec's grid.
pub fn zero_optimizer_state(spec: &OcpSpec) -> WVector {
    WVector {
        x: StateTraj::zeros(spec.grid, spec.n()),
        p: AdjointState::zeros(spec.grid, spec.n()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use crate::monotone::BoxBounds;
    use nalgebra::DMatrix;

    fn scalar() -> (PlantModel, OcpSpec) {
        let spec = OcpSpec::new(
            DMatrix::from_element(1, 1, -1.0),
            DMatrix::from_element(1, 1, 1.0),
            DVector::zeros(1),
            DVector::zeros(1),
            0.5,
            BoxBounds::symmetric(1, 1.0).unwrap(),
            make_grid(1.0, 10).unwrap(),
        )
        .unwrap();
        let plant = PlantModel::linear(spec.a.clone(), spec.b.clone()).unwrap();
        (plant, spec)
    }

    #[test]
    fn equilibrium_run_is_constant() {
        let (plant, spec) = scalar();
        let rec = run_mpc(&plant, &spec, 0.1, 5, &DVector::zeros(1), 1e-12).unwrap();
        assert!(rec.plant_states.iter().all(|x| x.amax() == 0.0));
        assert!(rec.applied_controls.iter().all(|u| u.amax() == 0.0));
        assert_eq!(rec.kkt_residuals.len(), 6);
    }

    #[test]
    fn compare_identical_runs_is_zero() {
        let (plant, spec) = scalar();
        let rec = run_mpc(&plant, &spec, 0.1, 4, &DVector::from_element(1, 2.0), 1e-10).unwrap();
        let rep = compare_runs(&rec, &rec).unwrap();
        assert_eq!((rep.max_state_dev, rep.max_control_dev), (0.0, 0.0));
        let short = run_mpc(&plant, &spec, 0.1, 3, &DVector::from_element(1, 2.0), 1e-10).unwrap();
        assert!(compare_runs(&rec, &short).is_err());
    }

    #[test]
    fn csv_has_empty_final_controls() {
        let (plant, spec) = scalar();
        let rec = run_mpc(&plant, &spec, 0.1, 2, &DVector::from_element(1, 1.0), 1e-10).unwrap();
        let mut buf = Vec::new();
        rec.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,x_p[0],u[0],kkt_residual");
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[3].split(',').nth(2), Some(""));
        let t1: f64 = lines[2].split(',').next().unwrap().parse().unwrap();
        assert_eq!(t1, 0.1);
    }
}
