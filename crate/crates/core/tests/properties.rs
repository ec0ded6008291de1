mod common;

use std::sync::Arc;

use approx::assert_relative_eq;
use common::{w_weights, wdot};
use monompc::grid::{make_grid, InnerProduct, VVector, WVector};
use monompc::monotone::{resolvent, Affine, BoxBounds, MonotoneOp, SingleValued};
use monompc::mpc::fmt_f64;
use monompc::ocp::{MoptOperator, OcpSpec};
use monompc::plant::{plant_flow, PlantModel};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn vec_strategy(len: usize, scale: f64) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(-scale..scale, len).prop_map(DVector::from_vec)
}

/// `(n, N, t_f)` for a small grid.
fn dims() -> impl Strategy<Value = (usize, usize, f64)> {
    (1usize..4, 1usize..12, 0.2f64..3.0)
}

fn w_and_flat() -> impl Strategy<Value = (usize, usize, f64, DVector<f64>, DVector<f64>)> {
    dims().prop_flat_map(|(n, nn, tf)| {
        let len = 2 * (nn + 1) * n + n;
        (Just(n), Just(nn), Just(tf), vec_strategy(len, 10.0), vec_strategy(len, 10.0))
    })
}

fn spec_strategy() -> impl Strategy<Value = OcpSpec> {
    (1usize..4, 1usize..3, 2usize..10).prop_flat_map(|(n, m, nn)| {
        (
            vec_strategy(n * n, 2.0),
            vec_strategy(n * m, 2.0),
            vec_strategy(n, 1.0),
            0.1f64..2.0,
            0.1f64..2.0,
            0.5f64..3.0,
        )
            .prop_map(move |(a, b, xr, alpha, r, tf)| {
                OcpSpec::new(
                    DMatrix::from_column_slice(n, n, a.as_slice()),
                    DMatrix::from_column_slice(n, m, b.as_slice()),
                    xr,
                    DVector::zeros(m),
                    alpha,
                    BoxBounds::symmetric(m, r).unwrap(),
                    make_grid(tf, nn).unwrap(),
                )
                .unwrap()
            })
    })
}

proptest! {
    #[test]
    fn w_flat_round_trip((n, nn, tf, a, _) in w_and_flat()) {
        let g = make_grid(tf, nn).unwrap();
        let w = WVector::from_flat(g, n, &a).unwrap();
        prop_assert_eq!(w.to_flat(), a.clone());
        prop_assert_eq!(w.p.lambda0.as_slice(), &a.as_slice()[a.len() - n..]);
    }

    #[test]
    fn v_pack_round_trip((n, nn, tf, a, _) in w_and_flat(), xp in vec_strategy(3, 5.0)) {
        let g = make_grid(tf, nn).unwrap();
        let xp = xp.rows(0, n).into_owned();
        let v = VVector { xp: xp.clone(), w: WVector::from_flat(g, n, &a).unwrap() };
        let back = VVector::from_flat(g, n, &v.to_flat()).unwrap();
        prop_assert_eq!(back.xp, xp);
        prop_assert_eq!(back.w.to_flat(), a);
    }

    #[test]
    fn w_inner_product_is_the_weighted_sum((n, nn, tf, a, b) in w_and_flat(), k in -3.0f64..3.0) {
        let g = make_grid(tf, nn).unwrap();
        let spec_like = |x: &DVector<f64>| WVector::from_flat(g, n, x).unwrap();
        let (wa, wb) = (spec_like(&a), spec_like(&b));
        // weights dt on trajectories and 1 on λ₀, computed here from the layout
        let dt = tf / nn as f64;
        let weights = DVector::from_fn(a.len(), |i, _| if i < a.len() - n { dt } else { 1.0 });
        let expected = wdot(&weights, &a, &b);
        let got = wa.inner(&wb).unwrap();
        prop_assert!((got - expected).abs() <= 1e-12 * (1.0 + expected.abs()));
        prop_assert!((got - wb.inner(&wa).unwrap()).abs() <= 1e-12 * (1.0 + got.abs()));
        let scaled = spec_like(&(&a * k + &b));
        let lin = k * got + wb.inner(&wb).unwrap();
        prop_assert!((scaled.inner(&wb).unwrap() - lin).abs() <= 1e-10 * (1.0 + lin.abs()));
    }

    #[test]
    fn projection_is_idempotent_and_inside(
        center in vec_strategy(4, 3.0),
        half in vec_strategy(4, 2.0),
        u in vec_strategy(4, 10.0),
    ) {
        let half = half.abs();
        let b = BoxBounds::new(&center - &half, &center + &half).unwrap();
        let p = b.project(&u);
        prop_assert!(b.contains(&p));
        prop_assert_eq!(b.project(&p), p.clone());
        for i in 0..4 {
            // each coordinate is the clamp of the input
            prop_assert_eq!(p[i], u[i].max(center[i] - half[i]).min(center[i] + half[i]));
        }
    }

    #[test]
    fn projection_is_firmly_nonexpansive(u in vec_strategy(5, 5.0), v in vec_strategy(5, 5.0), r in 0.1f64..3.0) {
        let b = BoxBounds::symmetric(5, r).unwrap();
        let (pu, pv) = (b.project(&u), b.project(&v));
        let d = &pu - &pv;
        prop_assert!(d.dot(&(&u - &v)) >= d.norm_squared() - 1e-12);
    }

    #[test]
    fn affine_resolvent_solves_the_implicit_equation(
        raw in vec_strategy(16, 1.0),
        skew in vec_strategy(16, 2.0),
        c in vec_strategy(4, 1.0),
        w in vec_strategy(4, 5.0),
        gamma in 0.01f64..10.0,
    ) {
        // K = RᵀR + (S − Sᵀ) is monotone
        let r = DMatrix::from_column_slice(4, 4, raw.as_slice());
        let s = DMatrix::from_column_slice(4, 4, skew.as_slice());
        let k = r.transpose() * &r + &s - s.transpose();
        let op = MonotoneOp::from_affine(Affine::new(k.clone(), c.clone()).unwrap());
        let y = resolvent(&op, gamma, &w, 1e-13).unwrap();
        let residual = &y + (&k * &y + &c) * gamma - &w;
        prop_assert!(residual.amax() <= 1e-9 * (1.0 + w.amax()), "residual {}", residual.amax());
    }

    #[test]
    fn boxed_resolvent_is_nonexpansive(w1 in vec_strategy(3, 4.0), w2 in vec_strategy(3, 4.0), gamma in 0.05f64..5.0) {
        let k = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, -1.0, 1.0, 0.5, 0.0, -0.5, 0.3]);
        let op = MonotoneOp::from_affine(Affine::linear(k).unwrap())
            .with_box(BoxBounds::symmetric(3, 0.7).unwrap())
            .unwrap();
        let j1 = resolvent(&op, gamma, &w1, 1e-13).unwrap();
        let j2 = resolvent(&op, gamma, &w2, 1e-13).unwrap();
        prop_assert!((&j1 - &j2).norm() <= (&w1 - &w2).norm() + 1e-9);
        prop_assert!(j1.amax() <= 0.7 + 1e-12);
    }

    #[test]
    fn mopt_is_monotone_on_random_specs(
        spec in spec_strategy(),
        seed_a in vec_strategy(200, 3.0),
        seed_b in vec_strategy(200, 3.0),
        x0 in vec_strategy(3, 2.0),
    ) {
        let n = spec.n();
        let op = MoptOperator::new(&spec, &x0.rows(0, n).into_owned()).unwrap();
        let weights = w_weights(&spec);
        let d = weights.len();
        let a = seed_a.rows(0, d).into_owned();
        let b = seed_b.rows(0, d).into_owned();
        let pairing = wdot(&weights, &(op.apply(&a) - op.apply(&b)), &(&a - &b));
        // the x block alone already bounds the pairing from below
        let dt = spec.grid.dt();
        let dx = dt * (&a - &b).rows(0, spec.grid.nodes() * n).norm_squared();
        prop_assert!(pairing >= dx - 1e-9 * (1.0 + dx), "pairing {pairing}, dx {dx}");
    }

    #[test]
    fn scalar_linear_flow_matches_closed_form(a in -3.0f64..1.0, b in -2.0f64..2.0, u in -1.0f64..1.0, x in -5.0f64..5.0, h in 0.001f64..1.0) {
        prop_assume!(a.abs() > 1e-3);
        let plant = PlantModel::linear(DMatrix::from_element(1, 1, a), DMatrix::from_element(1, 1, b)).unwrap();
        let got = plant_flow(&plant, &DVector::from_element(1, u), h, &DVector::from_element(1, x)).unwrap()[0];
        let expected = (a * h).exp() * x + ((a * h).exp() - 1.0) / a * b * u;
        prop_assert!((got - expected).abs() <= 1e-12 * (1.0 + expected.abs()));
    }

    #[test]
    fn csv_numbers_round_trip(v in prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO) {
        let s = fmt_f64(v);
        prop_assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits());
    }

    #[test]
    fn spec_json_round_trip(spec in spec_strategy()) {
        let json = serde_json::to_string(&spec.to_json()).unwrap();
        let back = OcpSpec::from_json(&serde_json::from_str(&json).unwrap()).unwrap();
        prop_assert_eq!(back, spec);
    }
}

#[test]
fn unbounded_box_round_trips_as_strings() {
    let spec = common::with_bounds(&common::reference_spec(), BoxBounds::unbounded(1));
    let json = serde_json::to_value(spec.to_json()).unwrap();
    assert_eq!(json["lo"], serde_json::json!(["-inf"]));
    assert_eq!(json["hi"], serde_json::json!(["inf"]));
    let back = OcpSpec::from_json(&serde_json::from_value(json).unwrap()).unwrap();
    assert_eq!(back, spec);
}

#[test]
fn saturating_plant_flow_matches_fine_rk4() {
    let bp = DMatrix::from_row_slice(2, 1, &[0.5, -1.0]);
    let plant = PlantModel::saturating_gradient(bp.clone());
    let u = DVector::from_element(1, 0.8);
    let x0 = DVector::from_column_slice(&[2.0, -1.5]);
    let h = 0.7;
    // classical RK4 with a tiny step on ẋ = −(x + tanh x) + B u
    let f = |x: &DVector<f64>| -(x + x.map(f64::tanh)) + &bp * &u;
    let steps = 20_000;
    let dt = h / steps as f64;
    let mut x = x0.clone();
    for _ in 0..steps {
        let k1 = f(&x);
        let k2 = f(&(&x + &k1 * (dt / 2.0)));
        let k3 = f(&(&x + &k2 * (dt / 2.0)));
        let k4 = f(&(&x + &k3 * dt));
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    }
    let got = plant_flow(&plant, &u, h, &x0).unwrap();
    for i in 0..2 {
        assert_relative_eq!(got[i], x[i], max_relative = 1e-9);
    }
}

#[test]
fn nonlinear_plant_rejects_mismatched_input_matrix() {
    struct Twice;
    impl SingleValued for Twice {
        fn dim(&self) -> usize {
            2
        }
        fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
            x * 2.0
        }
        fn jacobian(&self, _: &DVector<f64>) -> DMatrix<f64> {
            DMatrix::identity(2, 2) * 2.0
        }
    }
    assert!(PlantModel::nonlinear("twice", Arc::new(Twice), DMatrix::zeros(3, 1)).is_err());
    assert!(PlantModel::nonlinear("twice", Arc::new(Twice), DMatrix::zeros(2, 1)).is_ok());
}
