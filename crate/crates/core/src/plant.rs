//! Plant models `ẋ = −M_p(x) + B_p u` and their exact flow under a held control.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::monotone::{check_monotone, Affine, FnOperator, MonotoneOp, MonotoneReport, SingleValued};

#[derive(Clone)]
pub enum PlantKind {
    /// `ẋ = A_p x + B_p u`, i.e. `M_p = −A_p`.
    Linear { ap: DMatrix<f64> },
    /// `ẋ = −M_p(x) + B_p u` for a declared-monotone `M_p`.
    Nonlinear { name: String, mp: Arc<dyn SingleValued> },
}

impl std::fmt::Debug for PlantKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PlantKind::Linear { ap } => f.debug_struct("Linear").field("ap", ap).finish(),
            PlantKind::Nonlinear { name, .. } => f.debug_struct("Nonlinear").field("name", name).finish(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlantModel {
    pub kind: PlantKind,
    pub bp: DMatrix<f64>,
}

impl PlantModel {
    pub fn linear(ap: DMatrix<f64>, bp: DMatrix<f64>) -> Result<Self> {
        if !ap.is_square() || ap.nrows() != bp.nrows() {
            return Err(Error::dim(
                "linear plant",
                format!("{0}x{0} and {0}xm", bp.nrows()),
                format!("{}x{} and {}x{}", ap.nrows(), ap.ncols(), bp.nrows(), bp.ncols()),
            ));
        }
        Ok(Self {
            kind: PlantKind::Linear { ap },
            bp,
        })
    }

    pub fn nonlinear(name: impl Into<String>, mp: Arc<dyn SingleValued>, bp: DMatrix<f64>) -> Result<Self> {
        if mp.dim() != bp.nrows() {
            return Err(Error::dim("nonlinear plant", bp.nrows(), mp.dim()));
        }
        Ok(Self {
            kind: PlantKind::Nonlinear { name: name.into(), mp },
            bp,
        })
    }

    /// Builtin `M_p(x) = x + tanh(x)` componentwise.
    pub fn saturating_gradient(bp: DMatrix<f64>) -> Self {
        let n = bp.nrows();
        let mp = FnOperator::new(
            n,
            |x: &DVector<f64>| x + x.map(f64::tanh),
            |x: &DVector<f64>| {
                DMatrix::from_diagonal(&x.map(|v| {
                    let c = v.cosh();
                    1.0 + 1.0 / (c * c)
                }))
            },
        );
        Self {
            kind: PlantKind::Nonlinear {
                name: "saturating_gradient".into(),
                mp: Arc::new(mp),
            },
            bp,
        }
    }

    pub fn n(&self) -> usize {
        self.bp.nrows()
    }

    pub fn m(&self) -> usize {
        self.bp.ncols()
    }

    /// The monotone part `M_p` as an operator.
    pub fn mp_operator(&self) -> MonotoneOp {
        match &self.kind {
            PlantKind::Linear { ap } => MonotoneOp::from_affine(Affine {
                k: -ap,
                c: DVector::zeros(ap.nrows()),
            }),
            PlantKind::Nonlinear { mp, .. } => MonotoneOp::new(Arc::clone(mp)),
        }
    }

    pub fn mp(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.kind {
            PlantKind::Linear { ap } => -(ap * x),
            PlantKind::Nonlinear { mp, .. } => mp.apply(x),
        }
    }

    pub fn rhs(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.bp * u - self.mp(x)
    }

    /// Probes the declared monotonicity of `M_p`.
    pub fn check_monotone(&self, samples: usize, seed: u64) -> MonotoneReport {
        check_monotone(&self.mp_operator(), samples, seed)
    }
}

/// Exact flow of `ẋ = −M_p(x) + B_p u` over `[0, h]` with `u` held constant.
pub fn plant_flow(plant: &PlantModel, u: &DVector<f64>, h: f64, xp: &DVector<f64>) -> Result<DVector<f64>> {
    let n = plant.n();
    if xp.len() != n {
        return Err(Error::dim("plant_flow state", n, xp.len()));
    }
    if u.len() != plant.m() {
        return Err(Error::dim("plant_flow control", plant.m(), u.len()));
    }
    if !(h.is_finite() && h >= 0.0) {
        return Err(Error::InvalidArgument(format!("flow time must be nonnegative, got {h}")));
    }
    if h == 0.0 {
        return Ok(xp.clone());
    }
    match &plant.kind {
        PlantKind::Linear { ap } => Ok(linear_flow(ap, &(&plant.bp * u), h, xp)),
        PlantKind::Nonlinear { .. } => {
            let bu = &plant.bp * u;
            dopri5(|x| &bu - plant.mp(x), xp, h, &Dopri5Options::default())
        }
    }
}

/// Variation of constants through the exponential of the augmented matrix
/// `[[A_p, B_p u], [0, 0]]`, whose last column carries the forced response.
fn linear_flow(ap: &DMatrix<f64>, bu: &DVector<f64>, h: f64, xp: &DVector<f64>) -> DVector<f64> {
    let n = ap.nrows();
    let mut aug = DMatrix::zeros(n + 1, n + 1);
    aug.view_mut((0, 0), (n, n)).copy_from(&(ap * h));
    aug.view_mut((0, n), (n, 1)).copy_from(&(bu * h));
    let e = aug.exp();
    e.view((0, 0), (n, n)) * xp + e.view((0, n), (n, 1)).column(0)
}

#[derive(Debug, Clone, Copy)]
pub struct Dopri5Options {
    pub rtol: f64,
    pub atol: f64,
    pub min_step: f64,
    pub max_steps: usize,
}

impl Default for Dopri5Options {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            min_step: 1e-14,
            max_steps: 1_000_000,
        }
    }
}

/// Dormand–Prince 5(4) with standard step-size control, integrating the autonomous
/// system `ẋ = f(x)` over `[0, t_end]`.
pub fn dopri5(
    f: impl Fn(&DVector<f64>) -> DVector<f64>,
    x0: &DVector<f64>,
    t_end: f64,
    opts: &Dopri5Options,
) -> Result<DVector<f64>> {
    const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    // Difference between the 5th- and 4th-order weights.
    const E: [f64; 7] = [
        71.0 / 57600.0,
        0.0,
        -71.0 / 16695.0,
        71.0 / 1920.0,
        -17253.0 / 339200.0,
        22.0 / 525.0,
        -1.0 / 40.0,
    ];
    let mut x = x0.clone();
    let mut t = 0.0;
    let mut k1 = f(&x);
    let scale0 = x.amax().max(1.0);
    let mut h = (0.01 * scale0 / k1.amax().max(1e-6)).min(t_end).max(opts.min_step);
    let mut steps = 0;
    while t < t_end {
        if steps >= opts.max_steps {
            return Err(Error::Integration(format!("step budget exhausted at t = {t}")));
        }
        steps += 1;
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }
        let mut k = vec![k1.clone()];
        for stage in 1..7 {
            let mut y = x.clone();
            for (j, kj) in k.iter().enumerate() {
                if A[stage][j] != 0.0 {
                    y += kj * (h * A[stage][j]);
                }
            }
            k.push(f(&y));
        }
        let mut x_new = x.clone();
        for j in 0..6 {
            if A[6][j] != 0.0 {
                x_new += &k[j] * (h * A[6][j]);
            }
        }
        let mut err = 0.0f64;
        for i in 0..x.len() {
            let mut e = 0.0;
            for (j, kj) in k.iter().enumerate() {
                e += E[j] * kj[i];
            }
            let sc = opts.atol + opts.rtol * x[i].abs().max(x_new[i].abs());
            err = err.max((h * e / sc).abs());
        }
        if !err.is_finite() {
            return Err(Error::Integration(format!("non-finite state at t = {t}")));
        }
        if err <= 1.0 {
            t = if last { t_end } else { t + h };
            x = x_new;
            // First-same-as-last: the seventh stage is f at the accepted point.
            k1 = k.pop().expect("seven stages");
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
        if h < opts.min_step && t < t_end {
            return Err(Error::Integration(format!("step size underflow at t = {t}")));
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_decay_both_kinds() {
        let one = DMatrix::from_element(1, 1, 1.0);
        let lin = PlantModel::linear(DMatrix::from_element(1, 1, -1.0), one.clone()).unwrap();
        let x = plant_flow(&lin, &DVector::zeros(1), 1.0, &DVector::from_element(1, 1.0)).unwrap();
        assert!((x[0] - 0.36787944117144233).abs() < 1e-11);

        let mp = FnOperator::new(1, |x: &DVector<f64>| x.clone(), |_: &DVector<f64>| DMatrix::identity(1, 1));
        let nl = PlantModel::nonlinear("id", Arc::new(mp), one).unwrap();
        let y = plant_flow(&nl, &DVector::zeros(1), 1.0, &DVector::from_element(1, 1.0)).unwrap();
        assert!((y[0] - 0.36787944117144233).abs() < 1e-10);
    }

    #[test]
    fn equilibrium_is_stationary() {
        // A_p x_ref + B_p u = 0 with x_ref = (1, -1), u = 1.
        let ap = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -1.0]);
        let bp = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
        let plant = PlantModel::linear(ap, bp).unwrap();
        let xr = DVector::from_column_slice(&[1.0, -1.0]);
        for h in [0.1, 1.0, 7.5] {
            let x = plant_flow(&plant, &DVector::from_element(1, 1.0), h, &xr).unwrap();
            assert!((x - &xr).amax() < 1e-13);
        }
    }

    #[test]
    fn rejects_bad_input() {
        let plant = PlantModel::linear(DMatrix::zeros(1, 1), DMatrix::zeros(1, 1)).unwrap();
        assert!(plant_flow(&plant, &DVector::zeros(1), -1.0, &DVector::zeros(1)).is_err());
        assert!(plant_flow(&plant, &DVector::zeros(2), 1.0, &DVector::zeros(1)).is_err());
        assert!(PlantModel::linear(DMatrix::zeros(2, 2), DMatrix::zeros(1, 1)).is_err());
    }

    #[test]
    fn saturating_gradient_is_monotone() {
        let plant = PlantModel::saturating_gradient(DMatrix::identity(3, 1));
        assert!(plant.check_monotone(200, 4).is_monotone(1e-10));
        let x = DVector::from_column_slice(&[0.5, -2.0, 0.0]);
        let want = DVector::from_column_slice(&[0.5 + 0.5f64.tanh(), -2.0 + (-2.0f64).tanh(), 0.0]);
        assert!((plant.mp(&x) - want).amax() < 1e-15);
    }

    #[test]
    fn underflow_is_reported() {
        let opts = Dopri5Options {
            min_step: 1e-3,
            ..Dopri5Options::default()
        };
        // Finite-time blow-up: ẋ = x², x(0) = 1 explodes at t = 1.
        let r = dopri5(|x| x.map(|v| v * v), &DVector::from_element(1, 1.0), 2.0, &opts);
        assert!(matches!(r, Err(Error::Integration(_))));
    }
}
