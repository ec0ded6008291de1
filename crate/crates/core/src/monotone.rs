//! Monotone operators on flat coordinate spaces.
//!
//! A [`MonotoneOp`] is a single-valued part (anything implementing [`SingleValued`])
//! plus an optional box-indicator subdifferential, living on `ℝ^d` with a diagonal
//! metric. Resolvents are closed form for the pure box and for affine operators, and
//! otherwise solved by semismooth Newton with a damped fixed-point fallback.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, LU};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{weighted_dot, weighted_norm, ControlTraj};

/// Componentwise bounds `lo ≤ u ≤ hi`; infinite entries leave a coordinate free.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxBounds {
    lo: DVector<f64>,
    hi: DVector<f64>,
}

impl BoxBounds {
    pub fn new(lo: DVector<f64>, hi: DVector<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::dim("box bounds", lo.len(), hi.len()));
        }
        for (i, (l, h)) in lo.iter().zip(hi.iter()).enumerate() {
            if l.is_nan() || h.is_nan() || *l == f64::INFINITY || *h == f64::NEG_INFINITY || l > h {
                return Err(Error::InvalidArgument(format!(
                    "invalid bound pair [{l}, {h}] at component {i}"
                )));
            }
        }
        Ok(Self { lo, hi })
    }

    pub fn unbounded(m: usize) -> Self {
        Self {
            lo: DVector::from_element(m, f64::NEG_INFINITY),
            hi: DVector::from_element(m, f64::INFINITY),
        }
    }

    pub fn symmetric(m: usize, radius: f64) -> Result<Self> {
        Self::new(DVector::from_element(m, -radius), DVector::from_element(m, radius))
    }

    pub fn lo(&self) -> &DVector<f64> {
        &self.lo
    }

    pub fn hi(&self) -> &DVector<f64> {
        &self.hi
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn is_unbounded(&self) -> bool {
        self.lo.iter().all(|v| v.is_infinite()) && self.hi.iter().all(|v| v.is_infinite())
    }

    pub fn contains(&self, u: &DVector<f64>) -> bool {
        u.len() == self.dim()
            && u.iter()
                .zip(self.lo.iter().zip(self.hi.iter()))
                .all(|(v, (l, h))| *l <= *v && *v <= *h)
    }

    /// Componentwise clamp.
    pub fn project(&self, u: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(u.len(), |i, _| u[i].clamp(self.lo[i], self.hi[i]))
    }

    /// `true` where the clamp has derivative one. Values exactly on a bound count as active.
    pub fn inactive_mask(&self, u: &DVector<f64>) -> Vec<bool> {
        u.iter()
            .zip(self.lo.iter().zip(self.hi.iter()))
            .map(|(v, (l, h))| *l < *v && *v < *h)
            .collect()
    }

    /// Repeats the bounds `times` times, for flattened trajectories.
    pub fn tile(&self, times: usize) -> Self {
        let m = self.dim();
        Self {
            lo: DVector::from_fn(m * times, |i, _| self.lo[i % m]),
            hi: DVector::from_fn(m * times, |i, _| self.hi[i % m]),
        }
    }
}

pub fn project_box(bounds: &BoxBounds, u: &DVector<f64>) -> Result<DVector<f64>> {
    if u.len() != bounds.dim() {
        return Err(Error::dim("project_box", bounds.dim(), u.len()));
    }
    Ok(bounds.project(u))
}

/// Pointwise projection of every control sample.
pub fn project_box_traj(bounds: &BoxBounds, u: &ControlTraj) -> Result<ControlTraj> {
    if u.dim() != bounds.dim() {
        return Err(Error::dim("project_box", bounds.dim(), u.dim()));
    }
    let mut values = u.values().clone();
    for mut row in values.row_iter_mut() {
        for (i, v) in row.iter_mut().enumerate() {
            *v = v.clamp(bounds.lo[i], bounds.hi[i]);
        }
    }
    ControlTraj::new(*u.grid(), values)
}

/// Single-valued operator with an element of its generalized Jacobian.
pub trait SingleValued: Send + Sync {
    fn dim(&self) -> usize;

    fn apply(&self, x: &DVector<f64>) -> DVector<f64>;

    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64>;

    /// Pattern that determines the Jacobian: equal keys mean equal Jacobians.
    /// `None` when the Jacobian varies continuously.
    fn jacobian_key(&self, _x: &DVector<f64>) -> Option<Vec<bool>> {
        None
    }

    fn affine_parts(&self) -> Option<(&DMatrix<f64>, &DVector<f64>)> {
        None
    }
}

/// `x ↦ K x + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub k: DMatrix<f64>,
    pub c: DVector<f64>,
}

impl Affine {
    pub fn new(k: DMatrix<f64>, c: DVector<f64>) -> Result<Self> {
        if !k.is_square() || k.nrows() != c.len() {
            return Err(Error::dim(
                "affine operator",
                format!("{0}x{0}", c.len()),
                format!("{}x{}", k.nrows(), k.ncols()),
            ));
        }
        Ok(Self { k, c })
    }

    pub fn linear(k: DMatrix<f64>) -> Result<Self> {
        let c = DVector::zeros(k.nrows());
        Self::new(k, c)
    }

    pub fn zero(dim: usize) -> Self {
        Self::scaled_identity(dim, 0.0)
    }

    pub fn identity(dim: usize) -> Self {
        Self::scaled_identity(dim, 1.0)
    }

    pub fn scaled_identity(dim: usize, s: f64) -> Self {
        Self {
            k: DMatrix::identity(dim, dim) * s,
            c: DVector::zeros(dim),
        }
    }
}

impl SingleValued for Affine {
    fn dim(&self) -> usize {
        self.c.len()
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.k * x + &self.c
    }

    fn jacobian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        self.k.clone()
    }

    fn jacobian_key(&self, _x: &DVector<f64>) -> Option<Vec<bool>> {
        Some(Vec::new())
    }

    fn affine_parts(&self) -> Option<(&DMatrix<f64>, &DVector<f64>)> {
        Some((&self.k, &self.c))
    }
}

type MapFn = dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync;
type JacFn = dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync;

/// Closure-backed operator.
pub struct FnOperator {
    dim: usize,
    map: Box<MapFn>,
    jac: Box<JacFn>,
}

impl FnOperator {
    pub fn new(
        dim: usize,
        map: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        jac: impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim,
            map: Box::new(map),
            jac: Box::new(jac),
        }
    }
}

impl std::fmt::Debug for FnOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FnOperator").field("dim", &self.dim).finish_non_exhaustive()
    }
}

impl SingleValued for FnOperator {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.map)(x)
    }

    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        (self.jac)(x)
    }
}

/// `A + ∂i_box` on `ℝ^d` with a diagonal metric.
#[derive(Clone)]
pub struct MonotoneOp {
    single: Arc<dyn SingleValued>,
    box_part: Option<BoxBounds>,
    metric: DVector<f64>,
}

impl std::fmt::Debug for MonotoneOp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MonotoneOp")
            .field("dim", &self.dim())
            .field("box_part", &self.box_part)
            .finish_non_exhaustive()
    }
}

impl MonotoneOp {
    pub fn new(single: Arc<dyn SingleValued>) -> Self {
        let metric = DVector::from_element(single.dim(), 1.0);
        Self {
            single,
            box_part: None,
            metric,
        }
    }

    pub fn from_affine(op: Affine) -> Self {
        Self::new(Arc::new(op))
    }

    /// Subdifferential of the indicator of a box.
    pub fn box_indicator(bounds: BoxBounds) -> Self {
        let dim = bounds.dim();
        Self {
            single: Arc::new(Affine::zero(dim)),
            box_part: Some(bounds),
            metric: DVector::from_element(dim, 1.0),
        }
    }

    pub fn with_box(mut self, bounds: BoxBounds) -> Result<Self> {
        if bounds.dim() != self.dim() {
            return Err(Error::dim("monotone operator box", self.dim(), bounds.dim()));
        }
        self.box_part = Some(bounds);
        Ok(self)
    }

    pub fn with_metric(mut self, metric: DVector<f64>) -> Result<Self> {
        if metric.len() != self.dim() {
            return Err(Error::dim("monotone operator metric", self.dim(), metric.len()));
        }
        if metric.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidArgument("metric weights must be positive".into()));
        }
        self.metric = metric;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.single.dim()
    }

    pub fn metric(&self) -> &DVector<f64> {
        &self.metric
    }

    pub fn box_part(&self) -> Option<&BoxBounds> {
        self.box_part.as_ref()
    }

    pub fn single(&self) -> &dyn SingleValued {
        self.single.as_ref()
    }

    /// Value of the single-valued part. Equals the operator itself when there is no box part.
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        self.single.apply(x)
    }

    pub fn norm(&self, x: &DVector<f64>) -> f64 {
        weighted_norm(&self.metric, x)
    }

    pub fn dot(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        weighted_dot(&self.metric, a, b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolventOptions {
    pub tol: f64,
    pub newton_max_iter: usize,
    pub fixed_point_max_iter: usize,
    pub damping: f64,
}

impl Default for ResolventOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            newton_max_iter: 200,
            fixed_point_max_iter: 100_000,
            damping: 0.5,
        }
    }
}

impl ResolventOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }
}

/// Evaluates `J_{γM} = (I + γM)^{-1}` repeatedly for a fixed operator and step,
/// reusing factorizations while the Jacobian pattern does not change.
pub struct ResolventSolver<'a> {
    op: &'a MonotoneOp,
    gamma: f64,
    opts: ResolventOptions,
    cache: Option<(Vec<bool>, LU<f64, nalgebra::Dyn, nalgebra::Dyn>)>,
    jac_norm: f64,
}

impl<'a> ResolventSolver<'a> {
    pub fn new(op: &'a MonotoneOp, gamma: f64, opts: ResolventOptions) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::InvalidArgument(format!("resolvent step must be positive, got {gamma}")));
        }
        if !(opts.tol > 0.0) {
            return Err(Error::InvalidArgument("resolvent tolerance must be positive".into()));
        }
        Ok(Self {
            op,
            gamma,
            opts,
            cache: None,
            jac_norm: 0.0,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn solve(&mut self, w: &DVector<f64>) -> Result<DVector<f64>> {
        if w.len() != self.op.dim() {
            return Err(Error::dim("resolvent", self.op.dim(), w.len()));
        }
        let op = self.op;
        let gamma = self.gamma;
        match (op.box_part(), op.single().affine_parts()) {
            (Some(bounds), Some((k, c))) if is_zero(k) && is_zero_vec(c) => Ok(bounds.project(w)),
            (None, Some((k, c))) => {
                let rhs = w - c * gamma;
                let lu = self.factor(Vec::new(), || {
                    DMatrix::identity(k.nrows(), k.ncols()) + k * gamma
                })?;
                lu.solve(&rhs).ok_or(Error::Singular("affine resolvent"))
            }
            _ => self.newton(w),
        }
    }

    fn factor(
        &mut self,
        key: Vec<bool>,
        build: impl FnOnce() -> DMatrix<f64>,
    ) -> Result<&LU<f64, nalgebra::Dyn, nalgebra::Dyn>> {
        let hit = matches!(&self.cache, Some((k, _)) if *k == key);
        if !hit {
            let lu = build().lu();
            if !lu.is_invertible() {
                return Err(Error::Singular("resolvent Jacobian"));
            }
            self.cache = Some((key, lu));
        }
        Ok(&self.cache.as_ref().expect("cache filled above").1)
    }

    /// Residual of the resolvent equation. With a box part it is the natural
    /// residual `x − P(w − γA x)`, otherwise `x + γA x − w`.
    ///
    /// The returned scale bounds the magnitude of the terms summed into the
    /// residual. `‖J‖‖x‖` covers cancellation inside `A x` for stiff operators.
    fn residual(&self, w: &DVector<f64>, x: &DVector<f64>) -> (DVector<f64>, f64) {
        let ax = self.op.apply(x);
        let spread = self.op.norm(&ax).max(self.jac_norm * self.op.norm(x));
        let scale = self.op.norm(w) + self.op.norm(x) + self.gamma * spread;
        let g = match self.op.box_part() {
            Some(bounds) => x - bounds.project(&(w - &ax * self.gamma)),
            None => x + &ax * self.gamma - w,
        };
        (g, scale)
    }

    fn tolerance(&self, scale: f64) -> f64 {
        // The residual cannot be resolved below the rounding level of its terms.
        self.opts.tol.max(64.0 * f64::EPSILON * scale)
    }

    fn newton(&mut self, w: &DVector<f64>) -> Result<DVector<f64>> {
        let mut x = match self.op.box_part() {
            Some(b) => b.project(w),
            None => w.clone(),
        };
        self.jac_norm = self.jac_norm.max(self.op.single().jacobian(&x).norm());
        let (mut g, mut scale) = self.residual(w, &x);
        let mut r = self.op.norm(&g);
        for _ in 0..self.opts.newton_max_iter {
            if r <= self.tolerance(scale) {
                return Ok(x);
            }
            let dir = self.newton_direction(w, &x, &g)?;
            let mut t = 1.0;
            let mut accepted = None;
            while t > 1e-10 {
                let xn = &x + &dir * t;
                let (gn, sn) = self.residual(w, &xn);
                let rn = self.op.norm(&gn);
                if rn <= (1.0 - 1e-4 * t) * r || rn <= self.tolerance(sn) {
                    accepted = Some((xn, gn, sn, rn));
                    break;
                }
                t *= 0.5;
            }
            match accepted {
                Some((xn, gn, sn, rn)) => {
                    x = xn;
                    g = gn;
                    scale = sn;
                    r = rn;
                }
                None => break,
            }
        }
        if r <= self.tolerance(scale) {
            return Ok(x);
        }
        self.fixed_point(w, x)
    }

    fn newton_direction(
        &mut self,
        w: &DVector<f64>,
        x: &DVector<f64>,
        g: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        let gamma = self.gamma;
        let op = self.op;
        let single = op.single();
        let dim = op.dim();
        // Generalized Jacobian: I + γ D J_A, D the clamp derivative (identity without a box).
        let mask = op
            .box_part()
            .map(|b| b.inactive_mask(&(w - single.apply(x) * gamma)));
        let key = single.jacobian_key(x).map(|mut k| {
            if let Some(m) = &mask {
                k.extend(m.iter().copied());
            }
            k
        });
        let build = || {
            let mut jac = single.jacobian(x) * gamma;
            if let Some(m) = &mask {
                for (i, inactive) in m.iter().enumerate() {
                    if !inactive {
                        jac.row_mut(i).fill(0.0);
                    }
                }
            }
            jac + DMatrix::identity(dim, dim)
        };
        let rhs = -g;
        match key {
            Some(key) => {
                let lu = self.factor(key, build)?;
                lu.solve(&rhs).ok_or(Error::Singular("resolvent Newton step"))
            }
            None => build()
                .lu()
                .solve(&rhs)
                .ok_or(Error::Singular("resolvent Newton step")),
        }
    }

    fn fixed_point(&self, w: &DVector<f64>, mut x: DVector<f64>) -> Result<DVector<f64>> {
        let theta = self.opts.damping;
        let mut r = f64::INFINITY;
        for _ in 0..self.opts.fixed_point_max_iter {
            let step = w - self.op.apply(&x) * self.gamma;
            let tx = match self.op.box_part() {
                Some(b) => b.project(&step),
                None => step,
            };
            x = &x * (1.0 - theta) + tx * theta;
            let (g, scale) = self.residual(w, &x);
            r = self.op.norm(&g);
            if !r.is_finite() {
                break;
            }
            if r <= self.tolerance(scale) {
                return Ok(x);
            }
        }
        Err(Error::Convergence {
            what: "resolvent",
            iterations: self.opts.newton_max_iter + self.opts.fixed_point_max_iter,
            residual: r,
        })
    }
}

fn is_zero(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| *v == 0.0)
}

fn is_zero_vec(v: &DVector<f64>) -> bool {
    v.iter().all(|x| *x == 0.0)
}

/// `J_{γM}(w) = (I + γM)^{-1} w`.
pub fn resolvent(op: &MonotoneOp, gamma: f64, w: &DVector<f64>, tol: f64) -> Result<DVector<f64>> {
    ResolventSolver::new(op, gamma, ResolventOptions::with_tol(tol))?.solve(w)
}

/// `R_{γM} = 2 J_{γM} − I`.
pub fn reflected_resolvent(
    op: &MonotoneOp,
    gamma: f64,
    w: &DVector<f64>,
    tol: f64,
) -> Result<DVector<f64>> {
    let j = resolvent(op, gamma, w, tol)?;
    Ok(j * 2.0 - w)
}

/// Yosida approximation `M_γ = (I − J_{γM}) / γ`.
pub fn yosida(op: &MonotoneOp, gamma: f64, w: &DVector<f64>, tol: f64) -> Result<DVector<f64>> {
    let j = resolvent(op, gamma, w, tol)?;
    Ok((w - j) / gamma)
}

/// Outcome of a random monotonicity probe.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotoneReport {
    pub samples: usize,
    pub seed: u64,
    /// Minimum of `⟨A x − A z, x − z⟩ / ‖x − z‖²` over sampled pairs.
    pub min_pairing: f64,
    /// Smallest `ω ≥ 0` for which `A + ωI` passed the probe.
    pub omega: f64,
}

impl MonotoneReport {
    pub fn is_monotone(&self, tol: f64) -> bool {
        self.min_pairing >= -tol
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FirmReport {
    pub samples: usize,
    pub seed: u64,
    /// Minimum of `⟨T x − T z, x − z⟩ − ‖T x − T z‖²` over sampled pairs.
    pub min_gap: f64,
}

/// Deterministic standard-normal sampler used by all probes.
pub struct NormalSampler {
    rng: ChaCha8Rng,
}

impl NormalSampler {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn scalar(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    pub fn vector(&mut self, dim: usize) -> DVector<f64> {
        DVector::from_fn(dim, |_, _| self.scalar())
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        use rand::Rng;
        self.rng.gen_range(lo..hi)
    }
}

/// Probes the single-valued part of `op` on random pairs.
pub fn check_monotone(op: &MonotoneOp, samples: usize, seed: u64) -> MonotoneReport {
    check_monotone_map(|x| op.apply(x), op.metric(), samples, seed)
}

pub fn check_monotone_map(
    map: impl Fn(&DVector<f64>) -> DVector<f64>,
    metric: &DVector<f64>,
    samples: usize,
    seed: u64,
) -> MonotoneReport {
    let mut sampler = NormalSampler::new(seed);
    let dim = metric.len();
    let mut min_pairing = f64::INFINITY;
    for _ in 0..samples {
        let x = sampler.vector(dim);
        let z = sampler.vector(dim);
        let d = &x - &z;
        let dd = weighted_dot(metric, &d, &d);
        if dd == 0.0 {
            continue;
        }
        let pairing = weighted_dot(metric, &(map(&x) - map(&z)), &d) / dd;
        min_pairing = min_pairing.min(pairing);
    }
    MonotoneReport {
        samples,
        seed,
        min_pairing,
        omega: (-min_pairing).max(0.0),
    }
}

pub fn check_firmly_nonexpansive(
    map: impl Fn(&DVector<f64>) -> Result<DVector<f64>>,
    metric: &DVector<f64>,
    samples: usize,
    seed: u64,
) -> Result<FirmReport> {
    let mut sampler = NormalSampler::new(seed);
    let dim = metric.len();
    let mut min_gap = f64::INFINITY;
    for _ in 0..samples {
        let x = sampler.vector(dim);
        let z = sampler.vector(dim);
        let t = map(&x)? - map(&z)?;
        let gap = weighted_dot(metric, &t, &(&x - &z)) - weighted_dot(metric, &t, &t);
        min_gap = min_gap.min(gap);
    }
    Ok(FirmReport {
        samples,
        seed,
        min_gap,
    })
}
