//! Flows and one-step maps of the coupled optimizer-plant system.
//!
//! The coupled state `v = (x_p, w)` evolves by `v̇ = −(𝓜(v) + F(v))` with the
//! block-diagonal monotone part `𝓜(v) = (M_p(x_p), ε⁻¹ M_opt,0(w))` and the
//! interconnection `F(v) = (−B_p P_F(Bᵀλ₀/α + u_ref), ε⁻¹ [0; 0; x_p])`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{VVector, WVector};
use crate::monotone::{resolvent, Affine, BoxBounds, MonotoneOp, ResolventOptions, ResolventSolver, SingleValued};
use crate::ocp::{solve_ocp_oracle, MoptOperator, OcpSpec};
use crate::plant::PlantModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    ProxPoint,
    ForwardBackward,
    PeacemanRachford,
    Instantaneous,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub h: f64,
    pub eps: f64,
    pub j: usize,
    pub scheme: Scheme,
    pub tol: f64,
}

impl SplitConfig {
    pub fn new(h: f64, eps: f64, j: usize, scheme: Scheme, tol: f64) -> Result<Self> {
        let cfg = Self { h, eps, j, scheme, tol };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h.is_finite() && self.h > 0.0) {
            return Err(Error::InvalidArgument(format!("sampling time h must be positive, got {}", self.h)));
        }
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return Err(Error::InvalidArgument(format!("time scale eps must be positive, got {}", self.eps)));
        }
        if self.j == 0 {
            return Err(Error::InvalidArgument("substep count j must be at least 1".into()));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tolerance must be positive, got {}", self.tol)));
        }
        Ok(())
    }

    /// Step of one inner iteration, `h / (j ε)`.
    pub fn gamma(&self) -> f64 {
        self.h / (self.j as f64 * self.eps)
    }
}

/// `c · op`, used to turn a monotone operator into the right-hand side `−op` and back.
#[derive(Clone)]
pub struct ScaledOp {
    inner: Arc<dyn SingleValued>,
    factor: f64,
}

impl ScaledOp {
    pub fn new(inner: Arc<dyn SingleValued>, factor: f64) -> Self {
        Self { inner, factor }
    }
}

impl SingleValued for ScaledOp {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        self.inner.apply(x) * self.factor
    }

    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        self.inner.jacobian(x) * self.factor
    }

    fn jacobian_key(&self, x: &DVector<f64>) -> Option<Vec<bool>> {
        self.inner.jacobian_key(x)
    }
}

pub fn explicit_euler_step(
    rhs: impl Fn(&DVector<f64>) -> DVector<f64>,
    h: f64,
    w: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_step(h)?;
    Ok(w + rhs(w) * h)
}

/// Solves `w' = w + h·rhs(w')`, which is the resolvent of `−rhs` at `h`.
pub fn implicit_euler_step(
    rhs: Arc<dyn SingleValued>,
    metric: &DVector<f64>,
    h: f64,
    w: &DVector<f64>,
    tol: f64,
) -> Result<DVector<f64>> {
    check_step(h)?;
    let op = MonotoneOp::new(Arc::new(ScaledOp::new(rhs, -1.0))).with_metric(metric.clone())?;
    resolvent(&op, h, w, tol)
}

fn check_step(h: f64) -> Result<()> {
    if h.is_finite() && h > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("step must be positive, got {h}")))
    }
}

/// One proximal-point iteration `w ↦ (I + γ M_opt,x₀)⁻¹ w`.
pub fn prox_point_step(mopt: &MoptOperator, gamma: f64, w: &WVector, tol: f64) -> Result<WVector> {
    let op = mopt.to_monotone();
    let out = resolvent(&op, gamma, &w.to_flat(), tol)?;
    WVector::from_flat(*w.grid(), w.state_dim(), &out)
}

/// Forward-backward step `P(w − γ(𝒜w + b))` on the full optimality system.
pub fn forward_backward_step(
    aop: &Affine,
    b: &DVector<f64>,
    bounds: &BoxBounds,
    gamma: f64,
    w: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_step(gamma)?;
    check_full(aop, b, bounds, w)?;
    Ok(bounds.project(&(w - (aop.apply(w) + b) * gamma)))
}

/// Explicit Euler on `εẇ = −(𝒜w + b)` followed by implicit Euler on `εẇ ∈ −𝒮w`, both with step `h`.
pub fn phi3_star(
    aop: &Affine,
    b: &DVector<f64>,
    bounds: &BoxBounds,
    h: f64,
    eps: f64,
    w: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_full(aop, b, bounds, w)?;
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    let half = explicit_euler_step(|y| -(aop.apply(y) + b) / eps, h, w)?;
    let s = MonotoneOp::box_indicator(bounds.clone());
    resolvent(&s, h / eps, &half, 1e-14)
}

fn check_full(aop: &Affine, b: &DVector<f64>, bounds: &BoxBounds, w: &DVector<f64>) -> Result<()> {
    let d = aop.dim();
    for (what, len) in [("forcing", b.len()), ("bounds", bounds.dim()), ("iterate", w.len())] {
        if len != d {
            return Err(Error::Dimension {
                context: "optimality system",
                expected: d.to_string(),
                got: format!("{what} of length {len}"),
            });
        }
    }
    Ok(())
}

/// Peaceman–Rachford iteration `R_{γ𝒮} ∘ R_{γ(𝒜+b)}` with the linear solve factored once.
#[derive(Debug, Clone)]
pub struct PeacemanRachford {
    aop: Affine,
    b: DVector<f64>,
    bounds: BoxBounds,
    gamma: f64,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl PeacemanRachford {
    pub fn new(aop: &Affine, b: &DVector<f64>, bounds: &BoxBounds, gamma: f64) -> Result<Self> {
        check_step(gamma)?;
        check_full(aop, b, bounds, b)?;
        let d = aop.dim();
        let lu = (DMatrix::identity(d, d) + &aop.k * gamma).lu();
        if !lu.is_invertible() {
            return Err(Error::Singular("Peaceman-Rachford linear resolvent"));
        }
        Ok(Self {
            aop: aop.clone(),
            b: b.clone(),
            bounds: bounds.clone(),
            gamma,
            lu,
        })
    }

    /// Replaces the forcing; the factorization does not depend on it.
    pub fn set_forcing(&mut self, b: &DVector<f64>) -> Result<()> {
        check_full(&self.aop, b, &self.bounds, b)?;
        self.b = b.clone();
        Ok(())
    }

    /// `J_{γ(𝒜+b)}(w)`, which maps fixed points of the iteration to zeros of the system.
    pub fn linear_resolvent(&self, w: &DVector<f64>) -> Result<DVector<f64>> {
        let rhs = w - (&self.aop.c + &self.b) * self.gamma;
        self.lu.solve(&rhs).ok_or(Error::Singular("Peaceman-Rachford linear resolvent"))
    }

    pub fn step(&self, w: &DVector<f64>) -> Result<DVector<f64>> {
        check_full(&self.aop, &self.b, &self.bounds, w)?;
        let r = self.linear_resolvent(w)? * 2.0 - w;
        Ok(self.bounds.project(&r) * 2.0 - r)
    }

    /// The same map assembled from the four Euler half-steps
    /// `ψ^{2e} ∘ ψ^{2i} ∘ ψ^{1e} ∘ ψ^{1i}`.
    pub fn step_composite(&self, w: &DVector<f64>) -> Result<DVector<f64>> {
        check_full(&self.aop, &self.b, &self.bounds, w)?;
        let g = self.gamma;
        // Implicit Euler on the affine part.
        let y1 = self.linear_resolvent(w)?;
        // Explicit Euler on the affine part.
        let y2 = &y1 - (self.aop.apply(&y1) + &self.b) * g;
        // Implicit Euler on the box part.
        let y3 = self.bounds.project(&y2);
        // Explicit Euler on the box part, using the selection the implicit step produced.
        let selection = (&y2 - &y3) / g;
        Ok(&y3 - selection * g)
    }
}

pub fn peaceman_rachford_step(
    aop: &Affine,
    b: &DVector<f64>,
    bounds: &BoxBounds,
    gamma: f64,
    w: &DVector<f64>,
) -> Result<DVector<f64>> {
    PeacemanRachford::new(aop, b, bounds, gamma)?.step(w)
}

pub fn psi_composite_step(
    aop: &Affine,
    b: &DVector<f64>,
    bounds: &BoxBounds,
    gamma: f64,
    w: &DVector<f64>,
) -> Result<DVector<f64>> {
    PeacemanRachford::new(aop, b, bounds, gamma)?.step_composite(w)
}

/// The `ε = 0` optimizer state: the exact optimality-system zero for the measured state.
pub fn instantaneous_solve(spec: &OcpSpec, xp: &DVector<f64>, tol: f64) -> Result<WVector> {
    Ok(solve_ocp_oracle(spec, xp, tol)?.w)
}

fn check_coupled(spec: &OcpSpec, plant: &PlantModel, eps: f64) -> Result<()> {
    if plant.n() != spec.n() || plant.m() != spec.m() {
        return Err(Error::dim(
            "plant vs. OCP",
            format!("n={}, m={}", spec.n(), spec.m()),
            format!("n={}, m={}", plant.n(), plant.m()),
        ));
    }
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    Ok(())
}

/// The interconnection `F(v)`.
pub fn coupling_f(spec: &OcpSpec, plant: &PlantModel, eps: f64, v: &VVector) -> Result<VVector> {
    check_coupled(spec, plant, eps)?;
    let u = spec.feedback_from_state(&v.w);
    let mut w = WVector::zeros(spec.grid, spec.n());
    w.p.lambda0 = &v.xp / eps;
    Ok(VVector { xp: -(&plant.bp * u), w })
}

/// Operator norm `‖B‖₂`.
pub fn spectral_norm(b: &DMatrix<f64>) -> f64 {
    b.clone().svd(false, false).singular_values.max()
}

/// The closed-form Lipschitz bound `√2 · max((2/α)‖B‖, 1/ε)` of the interconnection.
///
/// The interconnection actually has modulus `max(‖B_p‖‖B‖/α, 1/ε)`, so this bound holds
/// whenever `‖B_p‖ ≤ 2`; [`coupling_lipschitz`] covers the general case.
pub fn lipschitz_bound(alpha: f64, b_norm: f64, eps: f64) -> f64 {
    std::f64::consts::SQRT_2 * (2.0 * b_norm / alpha).max(1.0 / eps)
}

/// A Lipschitz bound of `F` valid for every plant input matrix.
pub fn coupling_lipschitz(spec: &OcpSpec, plant: &PlantModel, eps: f64) -> f64 {
    let nb = spectral_norm(&spec.b);
    let nbp = spectral_norm(&plant.bp);
    std::f64::consts::SQRT_2 * ((2.0f64.max(nbp) * nb) / spec.alpha).max(1.0 / eps)
}

/// Optimizer part of the coupled system with the plant state frozen, on flat `V`
/// coordinates: `(x_p, w) ↦ (0, ε⁻¹ (M_opt,0(w) + [0; 0; x_p]))`.
#[derive(Debug, Clone)]
pub struct FrozenPlantOptimizer {
    mopt0: MoptOperator,
    eps: f64,
    n: usize,
}

impl FrozenPlantOptimizer {
    pub fn new(spec: &OcpSpec, eps: f64) -> Result<Self> {
        if !(eps.is_finite() && eps > 0.0) {
            return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
        }
        Ok(Self {
            mopt0: MoptOperator::new(spec, &DVector::zeros(spec.n()))?,
            eps,
            n: spec.n(),
        })
    }

    fn split<'a>(&self, v: &'a DVector<f64>) -> (&'a [f64], DVector<f64>) {
        let s = v.as_slice();
        (&s[..self.n], DVector::from_column_slice(&s[self.n..]))
    }
}

impl SingleValued for FrozenPlantOptimizer {
    fn dim(&self) -> usize {
        self.n + self.mopt0.dim()
    }

    fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        let (xp, w) = self.split(v);
        let mut mw = self.mopt0.apply(&w);
        let nu = mw.len() - self.n;
        for i in 0..self.n {
            mw[nu + i] += xp[i];
        }
        let mut out = DVector::zeros(self.dim());
        out.rows_mut(self.n, mw.len()).copy_from(&(mw / self.eps));
        out
    }

    fn jacobian(&self, v: &DVector<f64>) -> DMatrix<f64> {
        let (_, w) = self.split(v);
        let d = self.dim();
        let wd = d - self.n;
        let mut jac = DMatrix::zeros(d, d);
        jac.view_mut((self.n, self.n), (wd, wd))
            .copy_from(&(self.mopt0.jacobian(&w) / self.eps));
        for i in 0..self.n {
            jac[(d - self.n + i, i)] = 1.0 / self.eps;
        }
        jac
    }

    fn jacobian_key(&self, v: &DVector<f64>) -> Option<Vec<bool>> {
        let (_, w) = self.split(v);
        self.mopt0.jacobian_key(&w)
    }
}

/// Trajectory of the reference integrator.
#[derive(Debug, Clone)]
pub struct CoupledTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<VVector>,
}

/// Reference integration of the unsplit coupled system by IMEX Euler:
/// `v_{k+1} = J_{dt 𝓜}(v_k − dt F(v_k))`.
pub fn integrate_coupled(
    plant: &PlantModel,
    spec: &OcpSpec,
    cfg: &SplitConfig,
    v0: &VVector,
    t_end: f64,
    dt_ref: f64,
) -> Result<CoupledTrajectory> {
    cfg.validate()?;
    check_coupled(spec, plant, cfg.eps)?;
    if v0.xp.len() != spec.n() || v0.w.grid() != &spec.grid || v0.w.state_dim() != spec.n() {
        return Err(Error::dim("integrate_coupled initial value", spec.n(), v0.xp.len()));
    }
    if !(t_end.is_finite() && t_end >= 0.0) || !(dt_ref.is_finite() && dt_ref > 0.0) {
        return Err(Error::InvalidArgument("integration horizon and step must be positive".into()));
    }
    let steps = ((t_end / dt_ref).round() as usize).max(1);
    let dt = t_end / steps as f64;
    let opts = ResolventOptions::with_tol(cfg.tol);

    let plant_op = plant.mp_operator();
    let mut plant_solver = ResolventSolver::new(&plant_op, dt, opts)?;
    let opt_op = MoptOperator::new(spec, &DVector::zeros(spec.n()))?.to_monotone();
    let mut opt_solver = ResolventSolver::new(&opt_op, dt / cfg.eps, opts)?;

    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut v = v0.clone();
    times.push(0.0);
    states.push(v.clone());
    for k in 0..steps {
        let f = coupling_f(spec, plant, cfg.eps, &v)?;
        let xp_half = &v.xp - &f.xp * dt;
        let w_half = v.w.to_flat() - f.w.to_flat() * dt;
        let xp = plant_solver.solve(&xp_half).map_err(|e| e.at_step(k))?;
        let w = opt_solver.solve(&w_half).map_err(|e| e.at_step(k))?;
        v = VVector {
            xp,
            w: WVector::from_flat(spec.grid, spec.n(), &w)?,
        };
        times.push((k + 1) as f64 * dt);
        states.push(v.clone());
    }
    Ok(CoupledTrajectory { times, states })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use crate::monotone::Affine;

    #[test]
    fn config_validation() {
        assert!(SplitConfig::new(0.1, 1.0, 1, Scheme::ProxPoint, 1e-12).is_ok());
        assert!(SplitConfig::new(0.0, 1.0, 1, Scheme::ProxPoint, 1e-12).is_err());
        assert!(SplitConfig::new(0.1, 0.0, 1, Scheme::ProxPoint, 1e-12).is_err());
        assert!(SplitConfig::new(0.1, 1.0, 0, Scheme::ProxPoint, 1e-12).is_err());
        let cfg = SplitConfig::new(0.1, 0.5, 4, Scheme::ProxPoint, 1e-12).unwrap();
        assert!((cfg.gamma() - 0.05).abs() < 1e-16);
    }

    #[test]
    fn euler_steps_scalar_decay() {
        let w = DVector::from_element(1, 3.0);
        let e = explicit_euler_step(|x| -x, 0.1, &w).unwrap();
        assert!((e[0] - 2.7).abs() < 1e-15);
        let rhs: Arc<dyn SingleValued> = Arc::new(Affine::scaled_identity(1, -1.0));
        let i = implicit_euler_step(rhs, &DVector::from_element(1, 1.0), 0.1, &w, 1e-14).unwrap();
        assert!((i[0] - 3.0 / 1.1).abs() < 1e-14);

        let zero: Arc<dyn SingleValued> = Arc::new(Affine::zero(1));
        assert_eq!(explicit_euler_step(|x| x * 0.0, 0.1, &w).unwrap(), w);
        assert_eq!(implicit_euler_step(zero, &DVector::from_element(1, 1.0), 0.1, &w, 1e-14).unwrap(), w);
    }

    #[test]
    fn analytic_lipschitz_spot_value() {
        assert!((lipschitz_bound(1.0, 1.0, 1.0) - 2.0 * std::f64::consts::SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn peaceman_rachford_trivial_case_is_identity() {
        let d = 5;
        let aop = Affine::zero(d);
        let pr = PeacemanRachford::new(&aop, &DVector::zeros(d), &BoxBounds::unbounded(d), 0.7).unwrap();
        let w = DVector::from_fn(d, |i, _| i as f64 - 2.0);
        assert!((pr.step(&w).unwrap() - &w).amax() < 1e-15);
    }

    #[test]
    fn forward_backward_unconstrained_is_explicit_euler() {
        let g = make_grid(1.0, 3).unwrap();
        let spec = OcpSpec::new(
            DMatrix::from_element(1, 1, -0.5),
            DMatrix::from_element(1, 1, 1.0),
            DVector::zeros(1),
            DVector::zeros(1),
            1.0,
            BoxBounds::unbounded(1),
            g,
        )
        .unwrap();
        let kkt = crate::ocp::KktSystem::new(&spec);
        let b = kkt.forcing(&DVector::from_element(1, 0.3)).unwrap();
        let w = DVector::from_fn(kkt.dim(), |i, _| (i as f64).sin());
        let fb = forward_backward_step(kkt.affine(), &b, &kkt.bounds(), 0.2, &w).unwrap();
        let ee = explicit_euler_step(|y| -(kkt.affine().apply(y) + &b), 0.2, &w).unwrap();
        assert!((fb - ee).amax() < 1e-14);
    }
}
