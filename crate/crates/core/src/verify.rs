//! Randomized property suites over a reference instance.
//!
//! Every property draws from its own seeded stream, so a suite run is a pure
//! function of the seed and the instance.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{make_grid, weighted_dot, weighted_norm, InnerProduct, VVector, WVector};
use crate::monotone::{
    check_firmly_nonexpansive, check_monotone, resolvent, yosida, BoxBounds, NormalSampler,
    SingleValued,
};
use crate::ocp::{assemble_constraint, feedback_mu, KktSystem, MoptOperator, OcpOracle, OcpSpec};
use crate::plant::{plant_flow, PlantModel};
use crate::splitting::{
    coupling_f, coupling_lipschitz, forward_backward_step, integrate_coupled, phi3_star,
    prox_point_step, PeacemanRachford, Scheme, SplitConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Operators,
    Ocp,
    Flows,
    All,
}

impl std::str::FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "operators" => Ok(Suite::Operators),
            "ocp" => Ok(Suite::Ocp),
            "flows" => Ok(Suite::Flows),
            "all" => Ok(Suite::All),
            other => Err(Error::InvalidArgument(format!(
                "unknown suite \"{other}\" (expected operators, ocp, flows or all)"
            ))),
        }
    }
}

/// How `worst` is compared against `tolerance`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">=")]
    AtLeast,
    #[serde(rename = ">")]
    Above,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyReport {
    pub name: String,
    pub samples: usize,
    pub worst: f64,
    pub relation: Relation,
    pub tolerance: f64,
    pub seed: u64,
    pub pass: bool,
}

impl PropertyReport {
    fn new(name: &str, samples: usize, worst: f64, relation: Relation, tolerance: f64, seed: u64) -> Self {
        let pass = worst.is_finite()
            && match relation {
                Relation::AtMost => worst <= tolerance,
                Relation::AtLeast => worst >= tolerance,
                Relation::Above => worst > tolerance,
            };
        Self {
            name: name.into(),
            samples,
            worst,
            relation,
            tolerance,
            seed,
            pass,
        }
    }
}

/// Problem data the suites run against.
#[derive(Debug, Clone)]
pub struct VerifyContext {
    pub spec: OcpSpec,
    pub plant: PlantModel,
    pub eps: f64,
}

impl VerifyContext {
    /// Damped 2-state plant with a single bounded input; also used by the examples.
    pub fn reference() -> Self {
        let spec = reference_spec();
        let plant = PlantModel::linear(spec.a.clone(), spec.b.clone()).expect("consistent shapes");
        Self { spec, plant, eps: 1.0 }
    }

    /// The reference context with a plant whose `M_p = −I` is not monotone.
    pub fn with_nonmonotone_plant(mut self) -> Self {
        let n = self.spec.n();
        self.plant = PlantModel::linear(DMatrix::identity(n, n), self.plant.bp.clone()).expect("consistent shapes");
        self
    }
}

pub fn reference_spec() -> OcpSpec {
    OcpSpec::new(
        DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, -1.0, -1.0]),
        DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
        DVector::zeros(2),
        DVector::zeros(1),
        0.3,
        BoxBounds::symmetric(1, 1.0).expect("valid radius"),
        make_grid(2.0, 20).expect("valid grid"),
    )
    .expect("valid reference spec")
}

/// Runs a suite; each property gets the seed `seed + index`.
pub fn run_suite(suite: Suite, seed: u64, ctx: &VerifyContext) -> Result<Vec<PropertyReport>> {
    let mut props: Vec<(&str, Property)> = Vec::new();
    if matches!(suite, Suite::Operators | Suite::All) {
        props.extend(operator_properties());
    }
    if matches!(suite, Suite::Ocp | Suite::All) {
        props.extend(ocp_properties());
    }
    if matches!(suite, Suite::Flows | Suite::All) {
        props.extend(flow_properties());
    }
    props
        .into_iter()
        .enumerate()
        .map(|(i, (name, f))| f(name, ctx, seed.wrapping_add(i as u64)))
        .collect()
}

type Property = fn(&str, &VerifyContext, u64) -> Result<PropertyReport>;

fn operator_properties() -> Vec<(&'static str, Property)> {
    vec![
        ("plant_monotone", plant_monotone),
        ("project_box_idempotent", project_box_idempotent),
        ("project_box_firmly_nonexpansive", project_box_firm),
        ("mopt_monotone", mopt_monotone),
        ("mopt_resolvent_firmly_nonexpansive", mopt_resolvent_firm),
        ("mopt_resolvent_fixed_point", mopt_resolvent_fixed_point),
        ("mopt_yosida_firmly_nonexpansive", mopt_yosida_firm),
        ("inner_product_bilinear_symmetric", inner_product_bilinear),
        ("v_norm_equivalence", v_norm_equivalence),
    ]
}

fn ocp_properties() -> Vec<(&'static str, Property)> {
    vec![
        ("constraint_adjoint_exact", constraint_adjoint_exact),
        ("mopt_strengthened_monotone", mopt_strengthened),
        ("mopt_injective", mopt_injective),
        ("oracle_kkt_residual", oracle_kkt_residual),
        ("feedback_in_box", feedback_in_box),
    ]
}

fn flow_properties() -> Vec<(&'static str, Property)> {
    vec![
        ("forward_backward_map_identity", fb_identity),
        ("peaceman_rachford_map_identity", pr_identity),
        ("coupling_lipschitz", coupling_lipschitz_prop),
        ("plant_flow_semigroup", plant_semigroup),
        ("prox_point_fixed_point", prox_fixed_point),
        ("coupled_quasi_contraction", quasi_contraction),
    ]
}

fn random_w(s: &mut NormalSampler, spec: &OcpSpec) -> DVector<f64> {
    s.vector(WVector::flat_len(&spec.grid, spec.n()))
}

fn mopt0(ctx: &VerifyContext) -> Result<MoptOperator> {
    MoptOperator::new(&ctx.spec, &DVector::from_element(ctx.spec.n(), 0.5))
}

fn plant_monotone(name: &str, ctx: &VerifyContext, seed: u64) -> Result<PropertyReport> {
    let r = ctx.plant.check_monotone(1000, seed);
    Ok(PropertyReport::new(name, r.samples, r.min_pairing, Relation::AtLeast, -1e-10, seed))
}

fn project_box_idempotent(name: &str, _: &VerifyContext, seed: u64) -> Result<PropertyReport> {
    let mut s = NormalSampler::new(seed);
    let samples = 1000;
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let a = s.vector(3);
        let w = s.vector(3).abs();
        let b = BoxBounds::new(&a - &w, &a + &w)?;
        let p = b.project(&(s.vector(3) * 3.0));
        worst = worst.max((b.project(&p) - &p).amax());
    }
    Ok(PropertyReport::new(name, samples, worst, Relation::AtMost, 0.0, seed))
}

fn project_box_firm(name: &str, ctx: &VerifyContext, seed: u64) -> Result<PropertyReport> {
    let b = ctx.spec.bounds.tile(ctx.spec.grid.intervals());
    let metric = DVector::from_element(b.dim(), 1.0);
    let r = check_firmly_nonexpansive(|x| Ok(b.project(x)), &metric, 1000, seed)?;
    Ok(PropertyReport::new(name, r.samples, r.min_gap, Relation::AtLeast, -1e-12, seed))
}

fn mopt_monotone(name: &str, ctx: &VerifyContext, seed: u64) -> Result<PropertyReport> {
    let r = check_monotone(&mopt0(ctx)?.to_monotone(), 2000, seed);
    Ok(PropertyReport::new(name, r.samples, r.min_pairing, Relation::AtLeast, -1e-10, seed))
}

fn mopt_resolvent_firm(name: &str, ctx: &VerifyContext, seed: u64) -> Result<PropertyReport> {
    let op = mopt0(ctx)?.to_monotone();
    let metric = op.metric().clone();
    let r = check_firmly_nonexpansive(|x| resolvent(&op, 0.5, x, 1e-12), &metric, 200, seed)?;
    Ok(PropertyReport::new(name, r.samples, r.min_gap, Relation::AtLeast, -1e-8, seed))
}

fn mopt_yosida_firm(name: &str, ctx: &VerifyContext, seed: u64) -> Result<PropertyReport> {
    // At index 1 the Yosida approximation is firmly nonexpansive.
    let op = mopt0(ctx)?.to_monotone();
    let metric = op.metric().clone();
    let r = check_firmly_nonexpansive(|x| yosida(&op, 1.0, x, 1e-12), &metric, 200, seed)?;
    Ok(PropertyReport::new(name, r.samples, r.min_gap, Relation::AtLeast, -1e-8, seed))
}

fn mopt_resolvent_fixed_point(name: &str, ctx: &VerifyContext, seed: u64) -> Result<PropertyReport> {
    let mut s = NormalSampler::new(seed);
    let oracle = OcpOracle::new(&ctx.spec)?;
    let tol = 1e-11;
    let samples = 10;
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let x0 = s.vector(ctx.spec.n());
        let w = oracle.solve(&x0, tol)?.w;
        let op = MoptOperator::new(&ctx.spec, &x0)?.to_monotone();
        let flat = w.to_flat();
        for gamma in [0.1, 1.0, 10.0] {
            let j = resolvent(&op, gamma, &flat, 1e-12)?;
            worst = worst.max(weighted_norm(op.metric(), &(j - &flat)) / gamma.max(1.0));
        }
    }
    Ok(PropertyReport::new(name, samples, worst, Relation::AtMost, 10.0 * tol, seed))
}

fn inner_product_bilinear(name: &str, ctx: &VerifyContext, seed: u64) -> Result<PropertyReport> {
    let mut s = NormalSampler::new(seed);
    let (g, n) = (ctx.spec.grid, ctx.spec.n());
    let samples = 2000;
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let a = WVector::from_flat(g, n, &random_w(&mut s, &ctx.spec))?;
        let b = WVector::from_flat(g, n, &random_w(&mut s, &ctx.spec))?;
        let c = WVector::from_flat(g, n, &random_w(&mut s, &ctx.spec))?;
        let (ka, kb) = (s.scalar(), s.scalar());
        let combo = WVector::from_flat(g, n, &(a.to_flat() * ka + b.to_flat() * kb))?;
        let lhs = combo.inner(&c)?;
        let rhs = ka * a.inner(&c)? + kb * b.inner(&c)?;
        let scale = (ka.abs() * a.norm() + kb.abs() * b.norm()) * c.norm();
        worst = worst.max((lhs - rhs).abs() / scale);
        worst = worst.max((a.inner(&b)? - b.inner(&a)?).abs() / (a.norm() * b.norm()));
    }
    Ok(PropertyReport::new(name, samples, worst, Relation::AtMost, 1e-12, seed))
}

fn v_norm_equivalence(name: &str, ctx: &VerifyContext, seed: u64) -> Result<PropertyReport> {
    let mut s = NormalSampler::new(seed);
    let (g, n) = (ctx.spec.grid, ctx.spec.n());
    let samples = 2000;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..samples {
        let v = VVector::from_flat(g, n, &(s.vector(VVector::flat_len(&g, n)) * s.scalar().exp()))?;
        let two = v.norm();
        let one = v.norm_sum();
        // Both violations expressed relative to the Euclidean product norm.
        worst = worst.max((two - one) / two).max((one - std::f64::consts::SQRT_2 * two) / two);
    }
    Ok(PropertyReport::new(name, samples, worst, Relation::AtMost, 1e-15, seed))
}

fn random_spec(s: &mut NormalSampler) -> Result<OcpSpec> {
    let n = 1 + (s.uniform(0.0, 4.0) as usize).min(3);
    let m = 1 + (s.uniform(0.0, 2.0) as usize).min(1);
    let intervals = 2 + (s.uniform(0.0, 49.0) as usize).min(48);
    let lo = DVector::from_fn(m, |_, _| -1.0);
    OcpSpec::new(
        DMatrix::from_fn(n, n, |_, _| s.scalar()),
        DMatrix::from_fn(n, m, |_, _| s.scalar()),
        s.vector(n),
        DVector::zeros(m),
        s.uniform(0.1, 2.0),
        BoxBounds::new(lo, DVector::from_element(m, 1.0))?,
        make_grid(s.uniform(0.5, 3.0), intervals)?,
    )
}

fn constraint_adjoint_exact(name: &str, _: &VerifyContext, seed: u64) -> Result<PropertyReport> {
    let mut s = NormalSampler::new(seed);
    let (specs, pairs) = (5, 100);
    let mut worst = 0.0f64;
    for _ in 0..specs {
        let spec = random_spec(&mut s)?;
        let cop = assemble_constraint(&spec);
        let (wd, wr) = (cop.domain_weights(), cop.range_weights());
        for _ in 0..pairs {
            let z = s.vector(cop.domain_dim());
            let p = s.vector(cop.range_dim());
            let lhs = weighted_dot(&wr, &cop.apply_flat(&z)?, &p);
            let rhs = weighted_dot(&wd, &z, &cop.adjoint_flat(&p)?);
            worst = worst.max((lhs - rhs).abs() / (weighted_norm(&wd, &z) * weighted_norm(&wr, &p)));
        }
    }
    Ok(PropertyReport::new(name, specs * pairs, worst, Relation::AtMost, 1e-13, seed))
}

/// Pairing minus the lower bound `‖Δx‖² + α‖ΔP_F‖²`.
pub fn strengthened_monotonicity_gap(op: &MoptOperator, w1: &DVector<f64>, w2: &DVector<f64>) -> f64 {
    let spec = op.spec();
    let metric = op.metric();
    let n = spec.n();
    let dt = spec.grid.dt();
    let dw = w1 - w2;
    let pairing = weighted_dot(&metric, &(op.apply(w1) - op.apply(w2)), &dw);
    let xlen = spec.grid.nodes() * n;
    let dx = dt * dw.rows(0, xlen).norm_squared();
    let mut dp = 0.0;
    for k in 0..spec.grid.intervals() {
        let at = |w: &DVector<f64>| {
            let mu = w.rows(xlen + k * n, n).into_owned();
            spec.control_from_adjoint(&mu)
        };
        dp += dt * (at(w1) - at(w2)).norm_squared();
    }
    pairing - dx - spec.alpha * dp
}

fn mopt_strengthened(name: &str, ctx: &VerifyContext, seed: u64) -> Result<PropertyReport> {
    let mut s = NormalSampler::new(seed);
    let op = mopt0(ctx)?;
    let samples = 2000;
    let mut worst = f64::INFINITY;
    for _ in 0..samples {
        let w1 = random_w(&mut s, &ctx.spec) * 2.0;
        let w2 = random_w(&mut s, &ctx.spec) * 2.0;
        worst = worst.min(strengthened_monotonicity_gap(&op, &w1, &w2));
    }
    Ok(PropertyReport::new(name, samples, worst, Relation::AtLeast, -1e-10, seed))
}

fn mopt_injective(name: &str, ctx: &VerifyContext, seed: u64) -> Result<PropertyReport> {
    let mut s = NormalSampler::new(seed);
    let op = mopt0(ctx)?;
    let metric = op.metric();
    let samples = 500;
    let mut worst = f64::INFINITY;
    for _ in 0..samples {
        let w1 = random_w(&mut s, &ctx.spec);
        let w2 = random_w(&mut s, &ctx.spec);
        let ratio = weighted_norm(&metric, &(op.apply(&w1) - op.apply(&w2))) / weighted_norm(&metric, &(&w1 - &w2));
        worst = worst.min(ratio);
    }
    Ok(PropertyReport::new(name, samples, worst, Relation::Above, 0.0, seed))
}

fn oracle_kkt_residual(name: &str, ctx: &VerifyContext, seed: u64) -> Result<PropertyReport> {
    let mut s = NormalSampler::new(seed);
    let oracle = OcpOracle::new(&ctx.spec)?;
    let tol = 1e-10;
    let samples = 20;
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let x0 = s.vector(ctx.spec.n()) * 2.0;
        let sol = oracle.solve(&x0, tol)?;
        let op = MoptOperator::new(&ctx.spec, &x0)?;
        worst = worst.max(weighted_norm(&op.metric(), &op.apply(&sol.w.to_flat())));
    }
    Ok(PropertyReport::new(name, samples, worst, Relation::AtMost, 10.0 * tol, seed))
}

fn feedback_in_box(name: &str, ctx: &VerifyContext, seed: u64) -> Result<PropertyReport> {
    let mut s = NormalSampler::new(seed);
    let samples = 100;
    let b = &ctx.spec.bounds;
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let xp = s.vector(ctx.spec.n()) * 5.0;
        let mu = feedback_mu(&ctx.spec, &xp, 1e-8)?;
        let over = (&mu - b.hi()).max().max((b.lo() - &mu).max());
        worst = worst.max(over);
    }
    Ok(PropertyReport::new(name, samples, worst, Relation::AtMost, 0.0, seed))
}

fn fb_identity(name: &str, ctx: &VerifyContext, seed: u64) -> Result<PropertyReport> {
    let mut s = NormalSampler::new(seed);
    let kkt = KktSystem::new(&ctx.spec);
    let bounds = kkt.bounds();
    let samples = 100;
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let (h, eps) = (s.uniform(0.01, 0.2), s.uniform(0.5, 2.0));
        let b = kkt.forcing(&s.vector(ctx.spec.n()))?;
        let w = s.vector(kkt.dim());
        let a = phi3_star(kkt.affine(), &b, &bounds, h, eps, &w)?;
        let f = forward_backward_step(kkt.affine(), &b, &bounds, h / eps, &w)?;
        worst = worst.max((a - f).norm());
    }
    Ok(PropertyReport::new(name, samples, worst, Relation::AtMost, 1e-12, seed))
}

fn pr_identity(name: &str, ctx: &VerifyContext, seed: u64) -> Result<PropertyReport> {
    let mut s = NormalSampler::new(seed);
    let kkt = KktSystem::new(&ctx.spec);
    let b = kkt.forcing(&s.vector(ctx.spec.n()))?;
    let pr = PeacemanRachford::new(kkt.affine(), &b, &kkt.bounds(), 0.1)?;
    let samples = 100;
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let w = s.vector(kkt.dim());
        worst = worst.max((pr.step(&w)? - pr.step_composite(&w)?).norm());
    }
    Ok(PropertyReport::new(name, samples, worst, Relation::AtMost, 1e-12, seed))
}

fn coupling_lipschitz_prop(name: &str, ctx: &VerifyContext, seed: u64) -> Result<PropertyReport> {
    let mut s = NormalSampler::new(seed);
    let (g, n) = (ctx.spec.grid, ctx.spec.n());
    let l = coupling_lipschitz(&ctx.spec, &ctx.plant, ctx.eps);
    let samples = 2000;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..samples {
        let v1 = VVector::from_flat(g, n, &s.vector(VVector::flat_len(&g, n)))?;
        let v2 = VVector::from_flat(g, n, &s.vector(VVector::flat_len(&g, n)))?;
        let f1 = coupling_f(&ctx.spec, &ctx.plant, ctx.eps, &v1)?;
        let f2 = coupling_f(&ctx.spec, &ctx.plant, ctx.eps, &v2)?;
        let df = VVector::from_flat(g, n, &(f1.to_flat() - f2.to_flat()))?;
        let dv = VVector::from_flat(g, n, &(v1.to_flat() - v2.to_flat()))?;
        worst = worst.max(df.norm() / dv.norm() - l);
    }
    Ok(PropertyReport::new(name, samples, worst, Relation::AtMost, 1e-12, seed))
}

fn plant_semigroup(name: &str, ctx: &VerifyContext, seed: u64) -> Result<PropertyReport> {
    let mut s = NormalSampler::new(seed);
    let samples = 50;
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let x = s.vector(ctx.plant.n());
        let u = s.vector(ctx.plant.m());
        let (h1, h2) = (s.uniform(0.0, 0.5), s.uniform(0.0, 0.5));
        let once = plant_flow(&ctx.plant, &u, h1 + h2, &x)?;
        let twice = plant_flow(&ctx.plant, &u, h2, &plant_flow(&ctx.plant, &u, h1, &x)?)?;
        worst = worst.max((once - twice).amax());
    }
    Ok(PropertyReport::new(name, samples, worst, Relation::AtMost, 1e-10, seed))
}

fn prox_fixed_point(name: &str, ctx: &VerifyContext, seed: u64) -> Result<PropertyReport> {
    let mut s = NormalSampler::new(seed);
    let samples = 5;
    let mut worst = 0.0f64;
    let oracle = OcpOracle::new(&ctx.spec)?;
    for _ in 0..samples {
        let x0 = s.vector(ctx.spec.n());
        let w = oracle.solve(&x0, 1e-11)?.w;
        let op = MoptOperator::new(&ctx.spec, &x0)?;
        let next = prox_point_step(&op, 0.1, &w, 1e-12)?;
        worst = worst.max(weighted_norm(&op.metric(), &(next.to_flat() - w.to_flat())));
    }
    Ok(PropertyReport::new(name, samples, worst, Relation::AtMost, 1e-10, seed))
}

/// Worst ratio `‖v₁(t) − v₂(t)‖ / (e^{Lt} ‖v₁(0) − v₂(0)‖)` of the reference integrator.
pub fn quasi_contraction_ratio(
    spec: &OcpSpec,
    plant: &PlantModel,
    eps: f64,
    v1: &VVector,
    v2: &VVector,
    t_end: f64,
    dt_ref: f64,
) -> Result<f64> {
    let cfg = SplitConfig::new(0.1, eps, 1, Scheme::ProxPoint, 1e-13)?;
    let l = coupling_lipschitz(spec, plant, eps);
    let a = integrate_coupled(plant, spec, &cfg, v1, t_end, dt_ref)?;
    let b = integrate_coupled(plant, spec, &cfg, v2, t_end, dt_ref)?;
    let (g, n) = (spec.grid, spec.n());
    let gap = |x: &VVector, y: &VVector| -> Result<f64> {
        Ok(VVector::from_flat(g, n, &(x.to_flat() - y.to_flat()))?.norm())
    };
    let d0 = gap(v1, v2)?;
    let mut worst = 0.0f64;
    for ((t, x), y) in a.times.iter().zip(&a.states).zip(&b.states) {
        worst = worst.max(gap(x, y)? / ((l * t).exp() * d0));
    }
    Ok(worst)
}

fn quasi_contraction(name: &str, ctx: &VerifyContext, seed: u64) -> Result<PropertyReport> {
    let mut s = NormalSampler::new(seed);
    let (g, n) = (ctx.spec.grid, ctx.spec.n());
    let v1 = VVector::from_flat(g, n, &s.vector(VVector::flat_len(&g, n)))?;
    let v2 = VVector::from_flat(g, n, &s.vector(VVector::flat_len(&g, n)))?;
    let worst = quasi_contraction_ratio(&ctx.spec, &ctx.plant, ctx.eps, &v1, &v2, 1.0, 1e-3)?;
    Ok(PropertyReport::new(name, 1, worst, Relation::AtMost, 1.0 + 1e-6, seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_parse() {
        assert_eq!("ocp".parse::<Suite>().unwrap(), Suite::Ocp);
        assert!("nope".parse::<Suite>().is_err());
    }

    #[test]
    fn report_relations() {
        assert!(PropertyReport::new("a", 1, 0.5, Relation::AtMost, 1.0, 0).pass);
        assert!(!PropertyReport::new("a", 1, 0.5, Relation::AtLeast, 1.0, 0).pass);
        assert!(!PropertyReport::new("a", 1, 0.0, Relation::Above, 0.0, 0).pass);
        assert!(!PropertyReport::new("a", 1, f64::NAN, Relation::AtMost, 1.0, 0).pass);
    }
}
