//! The discrete constrained LQ optimal control problem and its optimality system.
//!
//! Dynamics are discretized by implicit Euler,
//! `r_k = (x_{k+1} − x_k)/dt − A x_{k+1} − B u_k`, `k = 0..N−1`, plus the initial row
//! `x_0`. The constraint adjoint is the weighted transpose `W_dom⁻¹ Cᵀ W_ran`, so the
//! skew block of the reduced optimality operator is exactly skew in the discrete
//! metric and `M_opt,x₀` is monotone without any discretization error.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{AdjointState, ControlTraj, HorizonGrid, StateTraj, WVector};
use crate::monotone::{Affine, BoxBounds, MonotoneOp, SingleValued};

/// Data of the constrained LQ problem.
#[derive(Debug, Clone, PartialEq)]
pub struct OcpSpec {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub x_ref: DVector<f64>,
    pub u_ref: DVector<f64>,
    pub alpha: f64,
    pub bounds: BoxBounds,
    pub grid: HorizonGrid,
}

impl OcpSpec {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        x_ref: DVector<f64>,
        u_ref: DVector<f64>,
        alpha: f64,
        bounds: BoxBounds,
        grid: HorizonGrid,
    ) -> Result<Self> {
        let n = a.nrows();
        if !a.is_square() {
            return Err(Error::dim("OCP matrix A", format!("{n}x{n}"), format!("{}x{}", a.nrows(), a.ncols())));
        }
        if b.nrows() != n {
            return Err(Error::dim("OCP matrix B rows", n, b.nrows()));
        }
        let m = b.ncols();
        if x_ref.len() != n {
            return Err(Error::dim("x_ref", n, x_ref.len()));
        }
        if u_ref.len() != m {
            return Err(Error::dim("u_ref", m, u_ref.len()));
        }
        if bounds.dim() != m {
            return Err(Error::dim("control bounds", m, bounds.dim()));
        }
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::InvalidArgument(format!("alpha must be positive, got {alpha}")));
        }
        let finite = a.iter().chain(b.iter()).chain(x_ref.iter()).chain(u_ref.iter());
        if finite.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("OCP data contains non-finite entries".into()));
        }
        if !bounds.contains(&u_ref) {
            return Err(Error::InvalidArgument("u_ref must lie inside the control bounds".into()));
        }
        Ok(Self {
            a,
            b,
            x_ref,
            u_ref,
            alpha,
            bounds,
            grid,
        })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    /// `P_F((1/α) Bᵀ λ + u_ref)` for a single adjoint sample.
    pub fn control_from_adjoint(&self, lambda: &DVector<f64>) -> DVector<f64> {
        self.bounds
            .project(&(self.b.transpose() * lambda / self.alpha + &self.u_ref))
    }

    /// Control applied to the plant for an optimizer state: the projection evaluated
    /// at `τ = 0` with `λ(0) = λ₀`.
    pub fn feedback_from_state(&self, w: &WVector) -> DVector<f64> {
        self.control_from_adjoint(&w.p.lambda0)
    }

    pub fn to_json(&self) -> OcpSpecJson {
        let rows = |m: &DMatrix<f64>| {
            (0..m.nrows())
                .map(|r| m.row(r).iter().copied().collect())
                .collect()
        };
        OcpSpecJson {
            a: rows(&self.a),
            b: rows(&self.b),
            x_ref: self.x_ref.iter().copied().collect(),
            u_ref: self.u_ref.iter().copied().collect(),
            alpha: self.alpha,
            lo: self.bounds.lo().iter().map(|v| Bound(*v)).collect(),
            hi: self.bounds.hi().iter().map(|v| Bound(*v)).collect(),
            t_f: self.grid.t_f(),
            intervals: self.grid.intervals(),
        }
    }

    pub fn from_json(json: &OcpSpecJson) -> Result<Self> {
        let a = matrix_from_rows(&json.a, "A")?;
        let b = matrix_from_rows(&json.b, "B")?;
        let bounds = BoxBounds::new(
            DVector::from_iterator(json.lo.len(), json.lo.iter().map(|v| v.0)),
            DVector::from_iterator(json.hi.len(), json.hi.iter().map(|v| v.0)),
        )?;
        Self::new(
            a,
            b,
            DVector::from_column_slice(&json.x_ref),
            DVector::from_column_slice(&json.u_ref),
            json.alpha,
            bounds,
            HorizonGrid::new(json.t_f, json.intervals)?,
        )
    }
}

pub fn matrix_from_rows(rows: &[Vec<f64>], name: &str) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if nrows == 0 || ncols == 0 {
        return Err(Error::InvalidArgument(format!("matrix {name} is empty")));
    }
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::InvalidArgument(format!("matrix {name} has ragged rows")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(nrows, ncols, &flat))
}

/// A bound entry; serialized as a number or as `"inf"` / `"-inf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bound(pub f64);

impl Serialize for Bound {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0 == f64::INFINITY {
            s.serialize_str("inf")
        } else if self.0 == f64::NEG_INFINITY {
            s.serialize_str("-inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Bound {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Bound(v)),
            Raw::Str(s) => match s.as_str() {
                "inf" | "+inf" => Ok(Bound(f64::INFINITY)),
                "-inf" => Ok(Bound(f64::NEG_INFINITY)),
                other => Err(serde::de::Error::custom(format!(
                    "expected a number, \"inf\" or \"-inf\", got \"{other}\""
                ))),
            },
        }
    }
}

/// JSON form of [`OcpSpec`]; matrices are arrays of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OcpSpecJson {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    pub x_ref: Vec<f64>,
    pub u_ref: Vec<f64>,
    pub alpha: f64,
    pub lo: Vec<Bound>,
    pub hi: Vec<Bound>,
    pub t_f: f64,
    #[serde(rename = "N")]
    pub intervals: usize,
}

/// The constraint operator `C(x, u) = ((ẋ − Ax − Bu)_k, x(0))` and its weighted adjoint.
///
/// Domain layout `[x_0..x_N, u_0..u_{N−1}]` with weight `dt`; range layout
/// `[r_0..r_{N−1}, x(0)]` with weight `dt` on residual rows and `1` on the initial row.
#[derive(Debug, Clone)]
pub struct ConstraintOperator {
    grid: HorizonGrid,
    n: usize,
    m: usize,
    pub c: DMatrix<f64>,
    pub cstar: DMatrix<f64>,
}

impl ConstraintOperator {
    pub fn domain_dim(&self) -> usize {
        self.grid.nodes() * self.n + self.grid.intervals() * self.m
    }

    pub fn range_dim(&self) -> usize {
        self.grid.intervals() * self.n + self.n
    }

    pub fn domain_weights(&self) -> DVector<f64> {
        DVector::from_element(self.domain_dim(), self.grid.dt())
    }

    pub fn range_weights(&self) -> DVector<f64> {
        let split = self.grid.intervals() * self.n;
        DVector::from_fn(self.range_dim(), |i, _| if i < split { self.grid.dt() } else { 1.0 })
    }

    pub fn state_cols(&self) -> usize {
        self.grid.nodes() * self.n
    }

    pub fn apply_flat(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        if z.len() != self.domain_dim() {
            return Err(Error::dim("constraint operator", self.domain_dim(), z.len()));
        }
        Ok(&self.c * z)
    }

    pub fn adjoint_flat(&self, p: &DVector<f64>) -> Result<DVector<f64>> {
        if p.len() != self.range_dim() {
            return Err(Error::dim("constraint adjoint", self.range_dim(), p.len()));
        }
        Ok(&self.cstar * p)
    }

    /// Applies `C` to a state/control pair, returning the residual rows and `x(0)`.
    pub fn apply(&self, x: &StateTraj, u: &ControlTraj) -> Result<(DMatrix<f64>, DVector<f64>)> {
        if x.dim() != self.n || u.dim() != self.m || x.grid() != &self.grid || u.grid() != &self.grid {
            return Err(Error::dim("constraint operator", format!("n={}, m={}", self.n, self.m), format!("n={}, m={}", x.dim(), u.dim())));
        }
        let mut z = Vec::with_capacity(self.domain_dim());
        z.extend(row_major(x.values()));
        z.extend(row_major(u.values()));
        let r = &self.c * DVector::from_vec(z);
        let split = self.grid.intervals() * self.n;
        Ok((
            DMatrix::from_row_slice(self.grid.intervals(), self.n, &r.as_slice()[..split]),
            DVector::from_column_slice(&r.as_slice()[split..]),
        ))
    }

    /// Range coordinates of a dual variable: residual multipliers `λ_0..λ_{N−1}` then `λ₀`.
    pub fn range_from_adjoint(&self, p: &AdjointState) -> DVector<f64> {
        let mut out = Vec::with_capacity(self.range_dim());
        for k in 0..self.grid.intervals() {
            out.extend(p.lambda.row(k).iter());
        }
        out.extend(p.lambda0.iter());
        DVector::from_vec(out)
    }
}

fn row_major(m: &DMatrix<f64>) -> impl Iterator<Item = f64> + '_ {
    (0..m.nrows()).flat_map(move |r| (0..m.ncols()).map(move |c| m[(r, c)]))
}

pub fn assemble_constraint(spec: &OcpSpec) -> ConstraintOperator {
    let (n, m) = (spec.n(), spec.m());
    let grid = spec.grid;
    let (nn, dt) = (grid.intervals(), grid.dt());
    let xcols = grid.nodes() * n;
    let rows = nn * n + n;
    let cols = xcols + nn * m;
    let mut c = DMatrix::zeros(rows, cols);
    let eye = DMatrix::<f64>::identity(n, n);
    let forward = &eye / dt - &spec.a;
    for k in 0..nn {
        c.view_mut((k * n, (k + 1) * n), (n, n)).copy_from(&forward);
        c.view_mut((k * n, k * n), (n, n)).copy_from(&(-&eye / dt));
        c.view_mut((k * n, xcols + k * m), (n, m)).copy_from(&(-&spec.b));
    }
    c.view_mut((nn * n, 0), (n, n)).copy_from(&eye);

    let op = ConstraintOperator {
        grid,
        n,
        m,
        c: DMatrix::zeros(0, 0),
        cstar: DMatrix::zeros(0, 0),
    };
    let wd = op.domain_weights();
    let wr = op.range_weights();
    let mut cstar = c.transpose();
    for i in 0..cstar.nrows() {
        for j in 0..cstar.ncols() {
            cstar[(i, j)] *= wr[j] / wd[i];
        }
    }
    ConstraintOperator { c, cstar, ..op }
}

/// Reduced optimality operator `M_opt,x₀` on flat `W` coordinates.
///
/// `M(x, λ, λ₀) = (x − x_ref + 𝒜*(λ, λ₀) ; −𝒜x + [B P_F(Bᵀλ/α + u_ref); 0] + [0; x₀])`.
/// The terminal adjoint row is outside the adjoint's domain; the operator ignores it
/// and returns zero in that slot.
#[derive(Debug, Clone)]
pub struct MoptOperator {
    spec: OcpSpec,
    x0: DVector<f64>,
    linear: Arc<DMatrix<f64>>,
    constant: DVector<f64>,
}

impl MoptOperator {
    pub fn new(spec: &OcpSpec, x0: &DVector<f64>) -> Result<Self> {
        let linear = Arc::new(reduced_skew_matrix(spec));
        Self::with_linear(spec, x0, linear)
    }

    fn with_linear(spec: &OcpSpec, x0: &DVector<f64>, linear: Arc<DMatrix<f64>>) -> Result<Self> {
        let n = spec.n();
        if x0.len() != n {
            return Err(Error::dim("optimizer initial value", n, x0.len()));
        }
        let grid = spec.grid;
        let mut constant = DVector::zeros(WVector::flat_len(&grid, n));
        for k in 0..grid.nodes() {
            for i in 0..n {
                constant[k * n + i] = -spec.x_ref[i];
            }
        }
        let nu = 2 * grid.nodes() * n;
        for i in 0..n {
            constant[nu + i] = x0[i];
        }
        Ok(Self {
            spec: spec.clone(),
            x0: x0.clone(),
            linear,
            constant,
        })
    }

    /// Same operator with a different initial value; shares the assembled matrix.
    pub fn with_x0(&self, x0: &DVector<f64>) -> Result<Self> {
        Self::with_linear(&self.spec, x0, Arc::clone(&self.linear))
    }

    pub fn spec(&self) -> &OcpSpec {
        &self.spec
    }

    pub fn x0(&self) -> &DVector<f64> {
        &self.x0
    }

    pub fn metric(&self) -> DVector<f64> {
        WVector::weights(&self.spec.grid, self.spec.n())
    }

    /// Wraps the operator with its metric for the resolvent and probe machinery.
    pub fn to_monotone(&self) -> MonotoneOp {
        let metric = self.metric();
        MonotoneOp::new(Arc::new(self.clone()))
            .with_metric(metric)
            .expect("metric matches the flat layout")
    }

    fn mu_offset(&self) -> usize {
        self.spec.grid.nodes() * self.spec.n()
    }

    fn clamp_argument(&self, w: &DVector<f64>, k: usize) -> DVector<f64> {
        let n = self.spec.n();
        let start = self.mu_offset() + k * n;
        let mu = DVector::from_column_slice(&w.as_slice()[start..start + n]);
        self.spec.b.transpose() * mu / self.spec.alpha + &self.spec.u_ref
    }
}

impl SingleValued for MoptOperator {
    fn dim(&self) -> usize {
        self.constant.len()
    }

    fn apply(&self, w: &DVector<f64>) -> DVector<f64> {
        let mut out = &*self.linear * w + &self.constant;
        let n = self.spec.n();
        for k in 0..self.spec.grid.intervals() {
            let u = self.spec.bounds.project(&self.clamp_argument(w, k));
            let bu = &self.spec.b * u;
            let start = self.mu_offset() + k * n;
            for i in 0..n {
                out[start + i] += bu[i];
            }
        }
        out
    }

    fn jacobian(&self, w: &DVector<f64>) -> DMatrix<f64> {
        let mut jac = (*self.linear).clone();
        let n = self.spec.n();
        let bt = self.spec.b.transpose();
        for k in 0..self.spec.grid.intervals() {
            let mask = self.spec.bounds.inactive_mask(&self.clamp_argument(w, k));
            let mut bd = self.spec.b.clone();
            for (j, inactive) in mask.iter().enumerate() {
                if !inactive {
                    bd.column_mut(j).fill(0.0);
                }
            }
            let block = bd * &bt / self.spec.alpha;
            let start = self.mu_offset() + k * n;
            let mut view = jac.view_mut((start, start), (n, n));
            view += block;
        }
        jac
    }

    fn jacobian_key(&self, w: &DVector<f64>) -> Option<Vec<bool>> {
        let mut key = Vec::with_capacity(self.spec.grid.intervals() * self.spec.m());
        for k in 0..self.spec.grid.intervals() {
            key.extend(self.spec.bounds.inactive_mask(&self.clamp_argument(w, k)));
        }
        Some(key)
    }
}

/// Linear part `[[I, 𝒜*], [−𝒜, 0]]` of `M_opt` in flat `W` coordinates.
fn reduced_skew_matrix(spec: &OcpSpec) -> DMatrix<f64> {
    let n = spec.n();
    let grid = spec.grid;
    let cop = assemble_constraint(spec);
    let xcols = cop.state_cols();
    let dim = WVector::flat_len(&grid, n);
    let range_split = grid.intervals() * n;
    // Range coordinate i lives in the λ block (i < N n) or the λ₀ block.
    let range_to_flat = |i: usize| {
        if i < range_split {
            xcols + i
        } else {
            2 * xcols + (i - range_split)
        }
    };
    let mut k = DMatrix::zeros(dim, dim);
    for i in 0..xcols {
        k[(i, i)] = 1.0;
    }
    for r in 0..cop.range_dim() {
        let fr = range_to_flat(r);
        for col in 0..xcols {
            // 𝒜* block: rows of x, columns of the dual.
            k[(col, fr)] = cop.cstar[(col, r)];
            // −𝒜 block: rows of the dual, columns of x.
            k[(fr, col)] = -cop.c[(r, col)];
        }
    }
    k
}

/// Evaluates `M_opt,x₀(w)`.
pub fn apply_mopt(op: &MoptOperator, w: &WVector) -> Result<WVector> {
    let spec = op.spec();
    if w.grid() != &spec.grid || w.state_dim() != spec.n() {
        return Err(Error::dim("apply_mopt", spec.n(), w.state_dim()));
    }
    let out = op.apply(&w.to_flat());
    WVector::from_flat(spec.grid, spec.n(), &out)
}

/// `u_k = P_F((1/α) Bᵀ λ_k + u_ref)`, sampling the adjoint at the left node of each interval.
pub fn recover_control(spec: &OcpSpec, p: &AdjointState) -> Result<ControlTraj> {
    if p.grid() != &spec.grid || p.dim() != spec.n() {
        return Err(Error::dim("recover_control", spec.n(), p.dim()));
    }
    let nn = spec.grid.intervals();
    let mut values = DMatrix::zeros(nn, spec.m());
    for k in 0..nn {
        let u = spec.control_from_adjoint(&p.node(k));
        values.row_mut(k).copy_from(&u.transpose());
    }
    ControlTraj::new(spec.grid, values)
}

/// The full optimality system `0 ∈ 𝒜(z, p) + 𝒮(z, p) + b` with `z = (x, u)`.
///
/// Flat layout `[x_0..x_N, u_0..u_{N−1}, λ_0..λ_N, λ₀]`; `𝒮` is the box-indicator
/// subdifferential on the control block and `b` embeds `x₀` in the `λ₀` block.
#[derive(Debug, Clone)]
pub struct KktSystem {
    spec: OcpSpec,
    affine: Affine,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KktState {
    pub x: StateTraj,
    pub u: ControlTraj,
    pub p: AdjointState,
}

impl KktState {
    pub fn reduced(&self) -> WVector {
        WVector {
            x: self.x.clone(),
            p: self.p.clone(),
        }
    }
}

impl KktSystem {
    pub fn new(spec: &OcpSpec) -> Self {
        let (n, m) = (spec.n(), spec.m());
        let grid = spec.grid;
        let cop = assemble_constraint(spec);
        let xcols = cop.state_cols();
        let ucols = grid.intervals() * m;
        let zdim = xcols + ucols;
        let lam = zdim;
        let nu = zdim + xcols;
        let dim = nu + n;
        let range_split = grid.intervals() * n;
        let range_to_flat = |i: usize| {
            if i < range_split {
                lam + i
            } else {
                nu + (i - range_split)
            }
        };
        let mut k = DMatrix::zeros(dim, dim);
        let mut c = DVector::zeros(dim);
        for i in 0..xcols {
            k[(i, i)] = 1.0;
            c[i] = -spec.x_ref[i % n];
        }
        for i in 0..ucols {
            k[(xcols + i, xcols + i)] = spec.alpha;
            c[xcols + i] = -spec.alpha * spec.u_ref[i % m];
        }
        for r in 0..cop.range_dim() {
            let fr = range_to_flat(r);
            for col in 0..zdim {
                k[(col, fr)] = cop.cstar[(col, r)];
                k[(fr, col)] = -cop.c[(r, col)];
            }
        }
        Self {
            spec: spec.clone(),
            affine: Affine { k, c },
        }
    }

    pub fn spec(&self) -> &OcpSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.affine.c.len()
    }

    /// Single-valued affine part `𝒜` (without the forcing).
    pub fn affine(&self) -> &Affine {
        &self.affine
    }

    pub fn forcing(&self, x0: &DVector<f64>) -> Result<DVector<f64>> {
        if x0.len() != self.spec.n() {
            return Err(Error::dim("KKT forcing", self.spec.n(), x0.len()));
        }
        let mut b = DVector::zeros(self.dim());
        let start = self.dim() - self.spec.n();
        b.rows_mut(start, self.spec.n()).copy_from(x0);
        Ok(b)
    }

    /// Flat box bounds: the control box on the control block, free elsewhere.
    pub fn bounds(&self) -> BoxBounds {
        let (n, m) = (self.spec.n(), self.spec.m());
        let grid = self.spec.grid;
        let xcols = grid.nodes() * n;
        let ucols = grid.intervals() * m;
        let tiled = self.spec.bounds.tile(grid.intervals());
        let mut lo = DVector::from_element(self.dim(), f64::NEG_INFINITY);
        let mut hi = DVector::from_element(self.dim(), f64::INFINITY);
        lo.rows_mut(xcols, ucols).copy_from(tiled.lo());
        hi.rows_mut(xcols, ucols).copy_from(tiled.hi());
        BoxBounds::new(lo, hi).expect("tiled control bounds are valid")
    }

    pub fn metric(&self) -> DVector<f64> {
        let n = self.spec.n();
        let dim = self.dim();
        DVector::from_fn(dim, |i, _| if i < dim - n { self.spec.grid.dt() } else { 1.0 })
    }

    pub fn to_flat(&self, s: &KktState) -> DVector<f64> {
        let mut out = Vec::with_capacity(self.dim());
        out.extend(row_major(s.x.values()));
        out.extend(row_major(s.u.values()));
        out.extend(row_major(&s.p.lambda));
        out.extend(s.p.lambda0.iter());
        DVector::from_vec(out)
    }

    pub fn from_flat(&self, flat: &DVector<f64>) -> Result<KktState> {
        if flat.len() != self.dim() {
            return Err(Error::dim("KKT state (flat)", self.dim(), flat.len()));
        }
        let (n, m) = (self.spec.n(), self.spec.m());
        let grid = self.spec.grid;
        let s = flat.as_slice();
        let xl = grid.nodes() * n;
        let ul = grid.intervals() * m;
        Ok(KktState {
            x: StateTraj::new(grid, DMatrix::from_row_slice(grid.nodes(), n, &s[..xl]))?,
            u: ControlTraj::new(grid, DMatrix::from_row_slice(grid.intervals(), m, &s[xl..xl + ul]))?,
            p: AdjointState::new(
                grid,
                DMatrix::from_row_slice(grid.nodes(), n, &s[xl + ul..2 * xl + ul]),
                DVector::from_column_slice(&s[2 * xl + ul..]),
            )?,
        })
    }
}

/// Result of [`solve_ocp_oracle`].
#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub w: WVector,
    pub u: ControlTraj,
    pub objective: f64,
    pub iterations: usize,
    /// `‖B (P_F(Bᵀλ/α + u_ref) − u)‖`, the only nonzero block of the optimality residual.
    pub residual: f64,
}

impl OracleSolution {
    pub fn kkt_state(&self) -> KktState {
        KktState {
            x: self.w.x.clone(),
            u: self.u.clone(),
            p: self.w.p.clone(),
        }
    }
}

/// Projected-gradient solver of the reduced problem in `u`.
///
/// States come from the forward implicit-Euler recursion and adjoints from the
/// backward recursion of the discrete adjoint, so the returned optimizer state
/// satisfies both linear blocks of the optimality system to rounding.
#[derive(Debug, Clone)]
pub struct OcpOracle {
    spec: OcpSpec,
    step_inv: DMatrix<f64>,
    step_inv_t: DMatrix<f64>,
    lipschitz: f64,
    pub max_iter: usize,
}

impl OcpOracle {
    pub fn new(spec: &OcpSpec) -> Result<Self> {
        let n = spec.n();
        let dt = spec.grid.dt();
        let step = DMatrix::<f64>::identity(n, n) - &spec.a * dt;
        let step_inv = step
            .try_inverse()
            .ok_or(Error::Singular("implicit Euler step matrix"))?;
        let step_inv_t = step_inv.transpose();
        let mut oracle = Self {
            spec: spec.clone(),
            step_inv,
            step_inv_t,
            lipschitz: 0.0,
            max_iter: 1_000_000,
        };
        oracle.lipschitz = spec.alpha + oracle.control_to_state_norm_sq();
        Ok(oracle)
    }

    pub fn spec(&self) -> &OcpSpec {
        &self.spec
    }

    /// Lipschitz constant of the reduced gradient.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// Squared operator norm of the zero-initial-state map `u ↦ x`. Both spaces carry the
    /// same weight `dt`, so the Euclidean spectral norm of the dense matrix is exact.
    fn control_to_state_norm_sq(&self) -> f64 {
        let (n, m) = (self.spec.n(), self.spec.m());
        let nn = self.spec.grid.intervals();
        let zero = DVector::zeros(n);
        let mut s = DMatrix::zeros((nn + 1) * n, nn * m);
        for col in 0..nn * m {
            let mut u = DMatrix::zeros(nn, m);
            u[(col / m, col % m)] = 1.0;
            let x = self.forward(&u, &zero);
            for (r, v) in row_major(&x).enumerate() {
                s[(r, col)] = v;
            }
        }
        let gram = s.transpose() * s;
        gram.symmetric_eigenvalues().max()
    }

    fn forward(&self, u: &DMatrix<f64>, x0: &DVector<f64>) -> DMatrix<f64> {
        let (n, nn) = (self.spec.n(), self.spec.grid.intervals());
        let dt = self.spec.grid.dt();
        let mut x = DMatrix::zeros(nn + 1, n);
        x.row_mut(0).copy_from(&x0.transpose());
        let mut cur = x0.clone();
        for k in 0..nn {
            let uk = u.row(k).transpose();
            cur = &self.step_inv * (&cur + &self.spec.b * uk * dt);
            x.row_mut(k + 1).copy_from(&cur.transpose());
        }
        x
    }

    /// Solves the discrete adjoint equation `𝒜*(λ, λ₀) = −(x − x_ref)`.
    fn backward(&self, x: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
        let (n, nn) = (self.spec.n(), self.spec.grid.intervals());
        let dt = self.spec.grid.dt();
        let mut lambda = DMatrix::zeros(nn + 1, n);
        let mut next = DVector::zeros(n);
        for j in (1..=nn).rev() {
            let e = x.row(j).transpose() - &self.spec.x_ref;
            next = &self.step_inv_t * (next - e * dt);
            lambda.row_mut(j - 1).copy_from(&next.transpose());
        }
        let e0 = x.row(0).transpose() - &self.spec.x_ref;
        let lambda0 = lambda.row(0).transpose() - e0 * dt;
        (lambda, lambda0)
    }

    pub fn objective(&self, x: &DMatrix<f64>, u: &DMatrix<f64>) -> f64 {
        let dt = self.spec.grid.dt();
        let state: f64 = x
            .row_iter()
            .map(|r| (r.transpose() - &self.spec.x_ref).norm_squared())
            .sum();
        let control: f64 = u
            .row_iter()
            .map(|r| (r.transpose() - &self.spec.u_ref).norm_squared())
            .sum();
        0.5 * dt * state + 0.5 * self.spec.alpha * dt * control
    }

    pub fn solve(&self, x0: &DVector<f64>, tol: f64) -> Result<OracleSolution> {
        self.solve_from(x0, tol, None)
    }

    /// Runs projected gradient from `warm` (defaults to `u ≡ u_ref`).
    pub fn solve_from(
        &self,
        x0: &DVector<f64>,
        tol: f64,
        warm: Option<&ControlTraj>,
    ) -> Result<OracleSolution> {
        let spec = &self.spec;
        let (n, m, nn) = (spec.n(), spec.m(), spec.grid.intervals());
        if x0.len() != n {
            return Err(Error::dim("oracle initial value", n, x0.len()));
        }
        if !(tol > 0.0) {
            return Err(Error::InvalidArgument("oracle tolerance must be positive".into()));
        }
        let dt = spec.grid.dt();
        let bt = spec.b.transpose();
        let mut u = match warm {
            Some(w) if w.dim() == m && w.grid() == &spec.grid => {
                let mut v = w.values().clone();
                for k in 0..nn {
                    let p = spec.bounds.project(&v.row(k).transpose());
                    v.row_mut(k).copy_from(&p.transpose());
                }
                v
            }
            _ => {
                let mut v = DMatrix::zeros(nn, m);
                for k in 0..nn {
                    v.row_mut(k).copy_from(&spec.u_ref.transpose());
                }
                v
            }
        };
        let step = 1.0 / self.lipschitz;
        let mut residual = f64::INFINITY;
        for it in 0..=self.max_iter {
            let x = self.forward(&u, x0);
            let (lambda, lambda0) = self.backward(&x);
            let mut res_sq = 0.0;
            let mut next = u.clone();
            for k in 0..nn {
                let mu = lambda.row(k).transpose();
                let uk = u.row(k).transpose();
                let target = spec.bounds.project(&(&bt * &mu / spec.alpha + &spec.u_ref));
                res_sq += (&spec.b * (&target - &uk)).norm_squared();
                let grad = (&uk - &spec.u_ref) * spec.alpha - &bt * &mu;
                let stepped = spec.bounds.project(&(&uk - grad * step));
                next.row_mut(k).copy_from(&stepped.transpose());
            }
            residual = (dt * res_sq).sqrt();
            if residual <= tol {
                let objective = self.objective(&x, &u);
                let w = WVector {
                    x: StateTraj::new(spec.grid, x)?,
                    p: AdjointState::new(spec.grid, lambda, lambda0)?,
                };
                return Ok(OracleSolution {
                    w,
                    u: ControlTraj::new(spec.grid, u)?,
                    objective,
                    iterations: it,
                    residual,
                });
            }
            if !residual.is_finite() {
                break;
            }
            u = next;
        }
        Err(Error::Convergence {
            what: "OCP oracle (projected gradient)",
            iterations: self.max_iter,
            residual,
        })
    }
}

pub fn solve_ocp_oracle(spec: &OcpSpec, x0: &DVector<f64>, tol: f64) -> Result<OracleSolution> {
    OcpOracle::new(spec)?.solve(x0, tol)
}

/// MPC feedback `μ(x_p)`: the optimal control at `τ = 0`.
pub fn feedback_mu(spec: &OcpSpec, xp: &DVector<f64>, tol: f64) -> Result<DVector<f64>> {
    let sol = solve_ocp_oracle(spec, xp, tol)?;
    Ok(spec.feedback_from_state(&sol.w))
}
