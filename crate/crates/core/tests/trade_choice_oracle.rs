//! Trade choice against a brute-force search along the pool's level set.

use cfmmwd::solvers::{trade_choice, SolverSettings};
use cfmmwd::{AssetVector, CfmmState, TradingFunction, UtilityFunction};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;
use common::level_set::oracle;

fn random_curve(rng: &mut impl Rng) -> TradingFunction {
    match rng.gen_range(0..3) {
        0 => TradingFunction::ConstantProduct,
        1 => {
            let w = rng.gen_range(0.1..0.9);
            TradingFunction::geometric_mean(vec![w, 1.0 - w]).unwrap()
        }
        _ => TradingFunction::constant_sum(vec![rng.gen_range(0.2..5.0), rng.gen_range(0.2..5.0)])
            .unwrap(),
    }
}

fn random_utility(rng: &mut impl Rng, l: usize) -> UtilityFunction {
    match rng.gen_range(0..3) {
        0 => UtilityFunction::CobbDouglasProduct,
        1 => {
            let mut w: Vec<f64> = (0..l).map(|_| rng.gen_range(0.1..1.0)).collect();
            let s: f64 = w.iter().sum();
            w.iter_mut().for_each(|v| *v /= s);
            UtilityFunction::weighted_geometric(w).unwrap()
        }
        _ => UtilityFunction::shifted_log_sum((0..l).map(|_| rng.gen_range(0.01..2.0)).collect())
            .unwrap(),
    }
}

fn random_endowment(rng: &mut impl Rng, l: usize) -> Vec<f64> {
    (0..l)
        .map(|_| {
            if rng.gen_bool(0.2) {
                0.0
            } else {
                rng.gen_range(0.0..3.0)
            }
        })
        .collect()
}

/// Norm of the wedge product of the two normalized vectors (`|sin|` of the angle).
fn misalignment(a: &[f64], b: &[f64]) -> f64 {
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut s = 0.0;
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            s += ((a[i] * b[j] - a[j] * b[i]) / (na * nb)).powi(2);
        }
    }
    s.sqrt()
}

#[test]
fn two_goods_match_the_level_set_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let settings = SolverSettings::default();
    for case in 0..1000 {
        let c = random_curve(&mut rng);
        let u = random_utility(&mut rng, 2);
        let r = [rng.gen_range(0.2..20.0), rng.gen_range(0.2..20.0)];
        let d = random_endowment(&mut rng, 2);
        let pool = CfmmState::feeless(c.clone(), r.to_vec()).unwrap();
        let out =
            trade_choice(&u, &AssetVector::new(d.clone()).unwrap(), &pool, &settings).unwrap();

        let k = c.eval(&r).unwrap();
        let k2 = c.eval(out.reserves.as_slice()).unwrap();
        assert!(
            (k2 - k).abs() <= 1e-9 * k,
            "case {case}: invariant {k} -> {k2}"
        );

        let got = u.eval(out.bundle.as_slice()).unwrap();
        let start = u.eval(&d).unwrap();
        assert!(
            got >= start - 1e-12,
            "case {case}: participation {got} < {start}"
        );

        let want = oracle(&u, [d[0], d[1]], &c, r);
        if want.is_finite() {
            assert!(
                (got - want).abs() <= 1e-6,
                "case {case}: {c:?} {u:?} R={r:?} d={d:?}: {got} < {want}"
            );
        } else {
            assert_eq!(got, want);
        }
    }
}

#[test]
fn interior_solutions_are_tangent() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let settings = SolverSettings::default();
    let mut checked = 0;
    for _ in 0..1000 {
        let l = rng.gen_range(2..5);
        let c = if rng.gen_bool(0.5) {
            let mut w: Vec<f64> = (0..l).map(|_| rng.gen_range(0.2..1.0)).collect();
            let s: f64 = w.iter().sum();
            w.iter_mut().for_each(|v| *v /= s);
            TradingFunction::geometric_mean(w).unwrap()
        } else {
            TradingFunction::constant_sum((0..l).map(|_| rng.gen_range(0.2..5.0)).collect())
                .unwrap()
        };
        let u = random_utility(&mut rng, l);
        let r: Vec<f64> = (0..l).map(|_| rng.gen_range(1.0..20.0)).collect();
        let d = random_endowment(&mut rng, l);
        let pool = CfmmState::feeless(c.clone(), r.clone()).unwrap();
        let out =
            trade_choice(&u, &AssetVector::new(d.clone()).unwrap(), &pool, &settings).unwrap();
        let k = c.eval(&r).unwrap();
        let got = u.eval(out.bundle.as_slice()).unwrap();
        assert!(got >= u.eval(&d).unwrap() - 1e-12);
        let interior = out.bundle.as_slice().iter().all(|v| *v > 1e-6)
            && out.reserves.as_slice().iter().all(|v| *v > 1e-6);
        if out.traded() {
            let k2 = c.eval(out.reserves.as_slice()).unwrap();
            assert!((k2 - k).abs() <= 1e-9 * k, "{k} -> {k2}");
        }
        if interior && out.traded() {
            let gu = u.grad(out.bundle.as_slice()).unwrap();
            let gc = c.grad(out.reserves.as_slice()).unwrap();
            assert!(
                misalignment(&gu, &gc) < 1e-6,
                "{c:?} {u:?}: {gu:?} vs {gc:?}"
            );
            checked += 1;
        }
    }
    assert!(checked > 300, "only {checked} interior cases");
}
