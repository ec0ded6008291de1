//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use monompc::grid::make_grid;
use monompc::monotone::BoxBounds;
use monompc::ocp::OcpSpec;
use nalgebra::{DMatrix, DVector};

/// Damped oscillator `A = [[-1, 1], [-1, -1]]`, `B = e₂`, `α = 0.3`, `|u| ≤ 1`, `t_f = 2`, `N = 20`.
pub fn reference_spec() -> OcpSpec {
    OcpSpec::new(
        DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, -1.0, -1.0]),
        DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
        DVector::zeros(2),
        DVector::zeros(1),
        0.3,
        BoxBounds::symmetric(1, 1.0).unwrap(),
        make_grid(2.0, 20).unwrap(),
    )
    .unwrap()
}

pub fn with_bounds(spec: &OcpSpec, bounds: BoxBounds) -> OcpSpec {
    OcpSpec::new(
        spec.a.clone(),
        spec.b.clone(),
        spec.x_ref.clone(),
        spec.u_ref.clone(),
        spec.alpha,
        bounds,
        spec.grid,
    )
    .unwrap()
}

/// Solution of the equality-constrained QP written out from scratch.
pub struct DenseQp {
    /// Row `k` is `x_k`, `k = 0..=N`.
    pub x: DMatrix<f64>,
    /// Row `k` is `u_k`, `k = 0..N`.
    pub u: DMatrix<f64>,
    pub objective: f64,
}

/// Minimizes `½ dt Σ_{k=0}^{N} |x_k − x_ref|² + ½ α dt Σ_{k<N} |u_k − u_ref|²`
/// subject to `x_0 = x0` and `x_{k+1} − x_k = dt (A x_{k+1} + B u_k)`, ignoring
/// any control bounds, by one dense saddle-point solve.
pub fn dense_qp(spec: &OcpSpec, x0: &DVector<f64>) -> DenseQp {
    let (n, m, nn) = (spec.n(), spec.m(), spec.grid.intervals());
    let dt = spec.grid.dt();
    let nx = (nn + 1) * n;
    let nz = nx + nn * m;
    let nc = (nn + 1) * n;
    let xi = |k: usize, i: usize| k * n + i;
    let ui = |k: usize, i: usize| nx + k * m + i;

    let mut h = DMatrix::zeros(nz, nz);
    let mut q = DVector::zeros(nz);
    for k in 0..=nn {
        for i in 0..n {
            h[(xi(k, i), xi(k, i))] = dt;
            q[xi(k, i)] = -dt * spec.x_ref[i];
        }
    }
    for k in 0..nn {
        for i in 0..m {
            h[(ui(k, i), ui(k, i))] = spec.alpha * dt;
            q[ui(k, i)] = -spec.alpha * dt * spec.u_ref[i];
        }
    }
    let mut g = DMatrix::zeros(nc, nz);
    let mut rhs_c = DVector::zeros(nc);
    for i in 0..n {
        g[(i, xi(0, i))] = 1.0;
        rhs_c[i] = x0[i];
    }
    for k in 0..nn {
        for r in 0..n {
            let row = (k + 1) * n + r;
            g[(row, xi(k + 1, r))] += 1.0;
            g[(row, xi(k, r))] -= 1.0;
            for c in 0..n {
                g[(row, xi(k + 1, c))] -= dt * spec.a[(r, c)];
            }
            for c in 0..m {
                g[(row, ui(k, c))] -= dt * spec.b[(r, c)];
            }
        }
    }
    let mut kkt = DMatrix::zeros(nz + nc, nz + nc);
    kkt.view_mut((0, 0), (nz, nz)).copy_from(&h);
    kkt.view_mut((0, nz), (nz, nc)).copy_from(&g.transpose());
    kkt.view_mut((nz, 0), (nc, nz)).copy_from(&g);
    let mut rhs = DVector::zeros(nz + nc);
    rhs.rows_mut(0, nz).copy_from(&(-&q));
    rhs.rows_mut(nz, nc).copy_from(&rhs_c);
    let sol = kkt.lu().solve(&rhs).expect("nonsingular saddle-point system");

    let x = DMatrix::from_fn(nn + 1, n, |k, i| sol[xi(k, i)]);
    let u = DMatrix::from_fn(nn, m, |k, i| sol[ui(k, i)]);
    let mut objective = 0.0;
    for k in 0..=nn {
        objective += 0.5 * dt * (x.row(k).transpose() - &spec.x_ref).norm_squared();
    }
    for k in 0..nn {
        objective += 0.5 * spec.alpha * dt * (u.row(k).transpose() - &spec.u_ref).norm_squared();
    }
    DenseQp { x, u, objective }
}

/// Gradient of the optimal value `V(x0)` of [`dense_qp`]. `V` is quadratic, so a
/// central difference with unit step is exact up to rounding.
pub fn value_gradient(spec: &OcpSpec, x0: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(spec.n(), |i, _| {
        let mut hi = x0.clone();
        let mut lo = x0.clone();
        hi[i] += 1.0;
        lo[i] -= 1.0;
        0.5 * (dense_qp(spec, &hi).objective - dense_qp(spec, &lo).objective)
    })
}

/// Componentwise clamp onto `[lo, hi]`.
pub fn clamp(v: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(v.len(), |i, _| v[i].max(lo[i]).min(hi[i]))
}

/// Weights of the trajectory inner product on `[x | λ | λ₀]`.
pub fn w_weights(spec: &OcpSpec) -> DVector<f64> {
    let (n, nodes, dt) = (spec.n(), spec.grid.nodes(), spec.grid.dt());
    DVector::from_fn(2 * nodes * n + n, |i, _| if i < 2 * nodes * n { dt } else { 1.0 })
}

/// Weights on `[x_p | x | λ | λ₀]`.
pub fn v_weights(spec: &OcpSpec) -> DVector<f64> {
    let n = spec.n();
    let w = w_weights(spec);
    DVector::from_fn(n + w.len(), |i, _| if i < n { 1.0 } else { w[i - n] })
}

pub fn wnorm(weights: &DVector<f64>, v: &DVector<f64>) -> f64 {
    v.iter().zip(weights.iter()).map(|(a, w)| w * a * a).sum::<f64>().sqrt()
}

pub fn wdot(weights: &DVector<f64>, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    a.iter().zip(b.iter()).zip(weights.iter()).map(|((x, y), w)| w * x * y).sum()
}
