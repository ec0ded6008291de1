//! Trajectory spaces on a uniform horizon grid.
//!
//! States and adjoints are sampled at the `N + 1` nodes `τ_k = k·dt`, controls are
//! piecewise constant on the `N` intervals `[τ_k, τ_{k+1})`. Every trajectory inner
//! product is the rectangle rule `dt · Σ_k ⟨a_k, b_k⟩`; the `λ₀` block and the plant
//! state are plain Euclidean vectors.
//!
//! Operators in this crate act on flattened coordinates. The flat layout of a
//! [`WVector`] is `[x_0 .. x_N, λ_0 .. λ_N, λ₀]`, each sample contributing `n`
//! consecutive entries, and [`WVector::weights`] gives the matching diagonal metric.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizonGrid {
    t_f: f64,
    intervals: usize,
    dt: f64,
}

impl HorizonGrid {
    pub fn new(t_f: f64, intervals: usize) -> Result<Self> {
        if !(t_f.is_finite() && t_f > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "horizon length must be positive and finite, got {t_f}"
            )));
        }
        if intervals == 0 {
            return Err(Error::InvalidArgument(
                "horizon grid needs at least one interval".into(),
            ));
        }
        Ok(Self {
            t_f,
            intervals,
            dt: t_f / intervals as f64,
        })
    }

    pub fn t_f(&self) -> f64 {
        self.t_f
    }

    /// Number of intervals `N`.
    pub fn intervals(&self) -> usize {
        self.intervals
    }

    /// Number of nodes `N + 1`.
    pub fn nodes(&self) -> usize {
        self.intervals + 1
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn node_time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }
}

/// Shorthand for [`HorizonGrid::new`].
pub fn make_grid(t_f: f64, intervals: usize) -> Result<HorizonGrid> {
    HorizonGrid::new(t_f, intervals)
}

pub trait InnerProduct {
    fn inner(&self, other: &Self) -> Result<f64>;

    fn norm(&self) -> f64 {
        self.inner(self)
            .expect("a value always matches its own shape")
            .max(0.0)
            .sqrt()
    }
}

fn check_finite(m: &DMatrix<f64>, context: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{context} contains non-finite entries")))
    }
}

fn check_shape(
    m: &DMatrix<f64>,
    rows: usize,
    cols: Option<usize>,
    context: &'static str,
) -> Result<()> {
    let cols_ok = cols.is_none_or(|c| m.ncols() == c);
    if m.nrows() != rows || !cols_ok {
        let expected = match cols {
            Some(c) => format!("{rows}x{c}"),
            None => format!("{rows}x*"),
        };
        return Err(Error::dim(context, expected, format!("{}x{}", m.nrows(), m.ncols())));
    }
    Ok(())
}

fn same_grid(a: &HorizonGrid, b: &HorizonGrid, context: &'static str) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::dim(context, format!("{a:?}"), format!("{b:?}")))
    }
}

fn push_rows(out: &mut Vec<f64>, m: &DMatrix<f64>) {
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out.push(m[(r, c)]);
        }
    }
}

fn rows_from(flat: &[f64], rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, &flat[..rows * cols])
}

/// Nodal state trajectory, one row per node.
#[derive(Debug, Clone, PartialEq)]
pub struct StateTraj {
    grid: HorizonGrid,
    values: DMatrix<f64>,
}

impl StateTraj {
    pub fn new(grid: HorizonGrid, values: DMatrix<f64>) -> Result<Self> {
        check_shape(&values, grid.nodes(), None, "state trajectory")?;
        check_finite(&values, "state trajectory")?;
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: HorizonGrid, n: usize) -> Self {
        Self {
            grid,
            values: DMatrix::zeros(grid.nodes(), n),
        }
    }

    pub fn constant(grid: HorizonGrid, value: &DVector<f64>) -> Self {
        let mut values = DMatrix::zeros(grid.nodes(), value.len());
        for mut row in values.row_iter_mut() {
            row.copy_from(&value.transpose());
        }
        Self { grid, values }
    }

    pub fn grid(&self) -> &HorizonGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.values
    }

    pub fn node(&self, k: usize) -> DVector<f64> {
        self.values.row(k).transpose()
    }
}

impl InnerProduct for StateTraj {
    fn inner(&self, other: &Self) -> Result<f64> {
        same_grid(&self.grid, &other.grid, "state inner product")?;
        check_shape(&other.values, self.values.nrows(), Some(self.values.ncols()), "state inner product")?;
        Ok(self.grid.dt() * self.values.dot(&other.values))
    }
}

/// Piecewise-constant control trajectory, one row per interval.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlTraj {
    grid: HorizonGrid,
    values: DMatrix<f64>,
}

impl ControlTraj {
    pub fn new(grid: HorizonGrid, values: DMatrix<f64>) -> Result<Self> {
        check_shape(&values, grid.intervals(), None, "control trajectory")?;
        check_finite(&values, "control trajectory")?;
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: HorizonGrid, m: usize) -> Self {
        Self {
            grid,
            values: DMatrix::zeros(grid.intervals(), m),
        }
    }

    pub fn constant(grid: HorizonGrid, value: &DVector<f64>) -> Self {
        let mut values = DMatrix::zeros(grid.intervals(), value.len());
        for mut row in values.row_iter_mut() {
            row.copy_from(&value.transpose());
        }
        Self { grid, values }
    }

    pub fn grid(&self) -> &HorizonGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.values
    }

    pub fn sample(&self, k: usize) -> DVector<f64> {
        self.values.row(k).transpose()
    }
}

impl InnerProduct for ControlTraj {
    fn inner(&self, other: &Self) -> Result<f64> {
        same_grid(&self.grid, &other.grid, "control inner product")?;
        check_shape(&other.values, self.values.nrows(), Some(self.values.ncols()), "control inner product")?;
        Ok(self.grid.dt() * self.values.dot(&other.values))
    }
}

/// Dual variable `p = (λ, λ₀)`.
///
/// Row `k < N` of `lambda` is the multiplier of the `k`-th dynamics residual, so the
/// terminal row `lambda[N]` is zero for every element of the adjoint's domain and is
/// ignored by the constraint adjoint. `lambda0` multiplies the initial condition.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointState {
    grid: HorizonGrid,
    pub lambda: DMatrix<f64>,
    pub lambda0: DVector<f64>,
}

impl AdjointState {
    pub fn new(grid: HorizonGrid, lambda: DMatrix<f64>, lambda0: DVector<f64>) -> Result<Self> {
        check_shape(&lambda, grid.nodes(), Some(lambda0.len()), "adjoint trajectory")?;
        check_finite(&lambda, "adjoint trajectory")?;
        if lambda0.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("lambda0 contains non-finite entries".into()));
        }
        Ok(Self { grid, lambda, lambda0 })
    }

    pub fn zeros(grid: HorizonGrid, n: usize) -> Self {
        Self {
            grid,
            lambda: DMatrix::zeros(grid.nodes(), n),
            lambda0: DVector::zeros(n),
        }
    }

    pub fn grid(&self) -> &HorizonGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.lambda0.len()
    }

    pub fn node(&self, k: usize) -> DVector<f64> {
        self.lambda.row(k).transpose()
    }
}

impl InnerProduct for AdjointState {
    fn inner(&self, other: &Self) -> Result<f64> {
        same_grid(&self.grid, &other.grid, "adjoint inner product")?;
        check_shape(&other.lambda, self.lambda.nrows(), Some(self.lambda.ncols()), "adjoint inner product")?;
        Ok(self.grid.dt() * self.lambda.dot(&other.lambda) + self.lambda0.dot(&other.lambda0))
    }
}

/// Optimizer state `w = (x, (λ, λ₀))`.
#[derive(Debug, Clone, PartialEq)]
pub struct WVector {
    pub x: StateTraj,
    pub p: AdjointState,
}

impl WVector {
    pub fn new(x: StateTraj, p: AdjointState) -> Result<Self> {
        same_grid(x.grid(), p.grid(), "optimizer state")?;
        if x.dim() != p.dim() {
            return Err(Error::dim("optimizer state", x.dim(), p.dim()));
        }
        Ok(Self { x, p })
    }

    pub fn zeros(grid: HorizonGrid, n: usize) -> Self {
        Self {
            x: StateTraj::zeros(grid, n),
            p: AdjointState::zeros(grid, n),
        }
    }

    pub fn grid(&self) -> &HorizonGrid {
        self.x.grid()
    }

    pub fn state_dim(&self) -> usize {
        self.x.dim()
    }

    /// Length of the flat coordinate vector.
    pub fn flat_len(grid: &HorizonGrid, n: usize) -> usize {
        2 * grid.nodes() * n + n
    }

    pub fn to_flat(&self) -> DVector<f64> {
        let mut out = Vec::with_capacity(Self::flat_len(self.grid(), self.state_dim()));
        push_rows(&mut out, self.x.values());
        push_rows(&mut out, &self.p.lambda);
        out.extend(self.p.lambda0.iter());
        DVector::from_vec(out)
    }

    pub fn from_flat(grid: HorizonGrid, n: usize, flat: &DVector<f64>) -> Result<Self> {
        let len = Self::flat_len(&grid, n);
        if flat.len() != len {
            return Err(Error::dim("optimizer state (flat)", len, flat.len()));
        }
        let s = flat.as_slice();
        let block = grid.nodes() * n;
        let x = StateTraj::new(grid, rows_from(s, grid.nodes(), n))?;
        let lambda = rows_from(&s[block..], grid.nodes(), n);
        let lambda0 = DVector::from_column_slice(&s[2 * block..]);
        Ok(Self {
            x,
            p: AdjointState::new(grid, lambda, lambda0)?,
        })
    }

    /// Diagonal of the metric in flat coordinates.
    pub fn weights(grid: &HorizonGrid, n: usize) -> DVector<f64> {
        let block = grid.nodes() * n;
        DVector::from_fn(Self::flat_len(grid, n), |i, _| {
            if i < 2 * block {
                grid.dt()
            } else {
                1.0
            }
        })
    }
}

impl InnerProduct for WVector {
    fn inner(&self, other: &Self) -> Result<f64> {
        Ok(self.x.inner(&other.x)? + self.p.inner(&other.p)?)
    }
}

/// Coupled state `v = (x_p, w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VVector {
    pub xp: DVector<f64>,
    pub w: WVector,
}

impl VVector {
    pub fn flat_len(grid: &HorizonGrid, n: usize) -> usize {
        n + WVector::flat_len(grid, n)
    }

    pub fn to_flat(&self) -> DVector<f64> {
        let w = self.w.to_flat();
        let mut out = Vec::with_capacity(self.xp.len() + w.len());
        out.extend(self.xp.iter());
        out.extend(w.iter());
        DVector::from_vec(out)
    }

    pub fn from_flat(grid: HorizonGrid, n: usize, flat: &DVector<f64>) -> Result<Self> {
        let len = Self::flat_len(&grid, n);
        if flat.len() != len {
            return Err(Error::dim("coupled state (flat)", len, flat.len()));
        }
        let xp = DVector::from_column_slice(&flat.as_slice()[..n]);
        let w = WVector::from_flat(grid, n, &DVector::from_column_slice(&flat.as_slice()[n..]))?;
        pack_v(xp, w)
    }

    pub fn weights(grid: &HorizonGrid, n: usize) -> DVector<f64> {
        let w = WVector::weights(grid, n);
        DVector::from_fn(n + w.len(), |i, _| if i < n { 1.0 } else { w[i - n] })
    }

    /// Sum norm `‖x_p‖ + ‖w‖_W`.
    pub fn norm_sum(&self) -> f64 {
        self.xp.norm() + self.w.norm()
    }
}

impl InnerProduct for VVector {
    fn inner(&self, other: &Self) -> Result<f64> {
        if self.xp.len() != other.xp.len() {
            return Err(Error::dim("coupled inner product", self.xp.len(), other.xp.len()));
        }
        Ok(self.xp.dot(&other.xp) + self.w.inner(&other.w)?)
    }
}

pub fn pack_v(xp: DVector<f64>, w: WVector) -> Result<VVector> {
    if xp.len() != w.state_dim() {
        return Err(Error::dim("pack_v", w.state_dim(), xp.len()));
    }
    if xp.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("plant state contains non-finite entries".into()));
    }
    Ok(VVector { xp, w })
}

pub fn unpack_v(v: VVector) -> (DVector<f64>, WVector) {
    (v.xp, v.w)
}

/// Weighted inner product of two flat vectors under a diagonal metric.
pub fn weighted_dot(weights: &DVector<f64>, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    weights
        .iter()
        .zip(a.iter().zip(b.iter()))
        .map(|(w, (x, y))| w * x * y)
        .sum()
}

pub fn weighted_norm(weights: &DVector<f64>, a: &DVector<f64>) -> f64 {
    weighted_dot(weights, a, a).max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_spacing() {
        assert_eq!(make_grid(1.0, 10).unwrap().dt(), 0.1);
        assert_eq!(make_grid(2.0, 1).unwrap().dt(), 2.0);
        assert_eq!(make_grid(0.5, 50).unwrap().dt(), 0.01);
        let g = make_grid(0.7, 13).unwrap();
        assert!((g.dt() * 13.0 - 0.7).abs() <= f64::EPSILON * 0.7);
    }

    #[test]
    fn grid_rejects_bad_input() {
        assert!(matches!(make_grid(0.0, 3), Err(Error::InvalidArgument(_))));
        assert!(matches!(make_grid(-1.0, 3), Err(Error::InvalidArgument(_))));
        assert!(matches!(make_grid(1.0, 0), Err(Error::InvalidArgument(_))));
        assert!(make_grid(f64::NAN, 3).is_err());
    }

    #[test]
    fn constant_control_integrates_to_horizon() {
        let g = make_grid(1.0, 10).unwrap();
        let one = ControlTraj::constant(g, &DVector::from_element(1, 1.0));
        assert!((one.inner(&one).unwrap() - 1.0).abs() < 1e-15);
        let zero = ControlTraj::zeros(g, 1);
        assert_eq!(zero.inner(&one).unwrap(), 0.0);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let g = make_grid(1.0, 4).unwrap();
        let a = StateTraj::zeros(g, 2);
        let b = StateTraj::zeros(g, 3);
        assert!(matches!(a.inner(&b), Err(Error::Dimension { .. })));
        let other = StateTraj::zeros(make_grid(1.0, 5).unwrap(), 2);
        assert!(a.inner(&other).is_err());
        assert!(StateTraj::new(g, DMatrix::zeros(4, 2)).is_err());
        assert!(ControlTraj::new(g, DMatrix::from_element(4, 1, f64::NAN)).is_err());
    }

    #[test]
    fn pack_rejects_dimension_mismatch() {
        let g = make_grid(1.0, 4).unwrap();
        assert!(pack_v(DVector::zeros(3), WVector::zeros(g, 2)).is_err());
        let v = pack_v(DVector::zeros(2), WVector::zeros(g, 2)).unwrap();
        assert_eq!(v.norm(), 0.0);
    }

    #[test]
    fn flat_layout_round_trips() {
        let g = make_grid(1.0, 3).unwrap();
        let flat = DVector::from_fn(VVector::flat_len(&g, 2), |i, _| i as f64);
        let v = VVector::from_flat(g, 2, &flat).unwrap();
        assert_eq!(v.to_flat(), flat);
        assert_eq!(v.w.x.values()[(1, 0)], 4.0);
        assert_eq!(v.w.p.lambda0[1], (flat.len() - 1) as f64);
        let w = VVector::weights(&g, 2);
        assert!((weighted_dot(&w, &flat, &flat) - v.inner(&v).unwrap()).abs() < 1e-9);
    }
}
