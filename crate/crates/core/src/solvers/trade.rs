//! The trade choice problem: maximize `U(zeta)` subject to
//! `C(R + endowment - zeta) >= C(R)`, `zeta >= 0`, post-trade reserves `>= 0`.

use nalgebra::{DMatrix, DVector};

use super::SolverSettings;
use crate::cfmm::{CfmmState, TradingFunction};
use crate::economy::{AssetVector, UtilityFunction};
use crate::error::{check_dim, Error, Result};

/// The agent's final bundle together with the net flow into the pool.
#[derive(Debug, Clone, PartialEq)]
pub struct TradeOutcome {
    /// `zeta(U, endowment, C, R)`.
    pub bundle: AssetVector,
    /// `endowment - zeta`, the change in pool reserves.
    pub inflow: Vec<f64>,
    /// `R + inflow`.
    pub reserves: AssetVector,
}

impl TradeOutcome {
    fn no_trade(endowment: &AssetVector, state: &CfmmState) -> Self {
        Self {
            bundle: endowment.clone(),
            inflow: vec![0.0; endowment.dim()],
            reserves: state.reserves.clone(),
        }
    }

    pub fn traded(&self) -> bool {
        self.inflow.iter().any(|v| *v != 0.0)
    }
}

/// Solves the trade choice problem for a fee-less pool.
///
/// Two-good smooth curves are solved along the level set by bisection on the
/// directional derivative of the utility; this path also returns the least
/// trade among tied optima. `ConstantMin` has a closed-form corner solution.
/// Other curves with more than two goods use [`trade_choice_barrier`].
pub fn trade_choice(
    u: &UtilityFunction,
    endowment: &AssetVector,
    state: &CfmmState,
    settings: &SolverSettings,
) -> Result<TradeOutcome> {
    check_dim(state.dim(), endowment.dim())?;
    u.check(endowment.dim())?;
    if state.fee != 0.0 {
        return Err(Error::Unsupported(format!(
            "trade choice assumes a fee-less pool, got fee {}",
            state.fee
        )));
    }
    match &state.function {
        TradingFunction::ConstantMin => Ok(min_corner_trade(endowment, state)),
        TradingFunction::QuadraticOverLinear => Err(Error::Unsupported(
            "quadratic-over-linear pools decrease in x; the trade choice problem is unbounded"
                .into(),
        )),
        _ if state.dim() == 2 => two_good_trade(u, endowment, state),
        _ => trade_choice_barrier(u, endowment, state, settings),
    }
}

/// Every reserve is drained down to the current minimum.
fn min_corner_trade(endowment: &AssetVector, state: &CfmmState) -> TradeOutcome {
    let r = state.reserves.as_slice();
    let floor = state.invariant();
    let bundle: Vec<f64> = r
        .iter()
        .zip(endowment.as_slice())
        .map(|(ri, di)| ri + di - floor)
        .collect();
    TradeOutcome {
        bundle: AssetVector::new(bundle).expect("nonnegative corner"),
        inflow: r.iter().map(|ri| floor - ri).collect(),
        reserves: AssetVector::new(vec![floor; r.len()]).expect("nonnegative floor"),
    }
}

fn two_good_trade(
    u: &UtilityFunction,
    endowment: &AssetVector,
    state: &CfmmState,
) -> Result<TradeOutcome> {
    let c = &state.function;
    let (r0, r1) = (state.reserves[0], state.reserves[1]);
    let (d0, d1) = (endowment[0], endowment[1]);
    let k = state.invariant();
    if k <= 0.0 {
        if matches!(c, TradingFunction::ConstantSum { .. }) {
            return Ok(TradeOutcome::no_trade(endowment, state));
        }
        return Err(Error::Domain(format!(
            "level set of {} through {:?} is degenerate",
            c.name(),
            state.reserves.as_slice()
        )));
    }
    if d0 == 0.0 && d1 == 0.0 {
        return Ok(TradeOutcome::no_trade(endowment, state));
    }

    // t is the amount of good 0 paid into the pool (negative: withdrawn)
    let x_floor = c.solve_coordinate(d1 + r1, 0, k).max(0.0);
    let x_cap = c.solve_coordinate(0.0, 0, k);
    let t_lo = (x_floor - r0).min(0.0);
    let t_hi = d0.min(x_cap - r0).max(0.0);

    let point = |t: f64| -> ([f64; 2], [f64; 2]) {
        if t == 0.0 {
            return ([r0, r1], [d0, d1]);
        }
        let x = r0 + t;
        let y = c.solve_coordinate(x, 1, k).max(0.0);
        ([x, y], [(d0 - t).max(0.0), (d1 + r1 - y).max(0.0)])
    };
    let slope = |t: f64| {
        let (res, z) = point(t);
        let g = u.grad_unchecked(&z);
        -g[0] + g[1] * c.marginal_rate(&res)
    };

    let (mut a, mut b) = (t_lo, t_hi);
    let scale = d0.max(d1).max(f64::MIN_POSITIVE);
    while b - a > 4.0 * f64::EPSILON * a.abs().max(b.abs()).max(scale) {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let s = slope(m);
        if s.is_nan() {
            return Err(Error::NonConvergence {
                what: "trade choice bisection",
                iterations: 0,
                residual: f64::NAN,
            });
        }
        if s > 0.0 {
            a = m;
        } else if s < 0.0 {
            b = m;
        } else {
            a = m;
            b = m;
        }
    }

    // no trade, then the exact feasibility corners, win ties
    let mut best_t = 0.0;
    let mut best_u = u.eval_unchecked(&[d0, d1]);
    for t in [t_lo, t_hi, a, b, 0.5 * (a + b)] {
        let v = u.eval_unchecked(&point(t).1);
        let threshold = if best_u.is_finite() {
            best_u + 1e-15 * best_u.abs().max(1.0)
        } else {
            best_u
        };
        if v > threshold {
            best_t = t;
            best_u = v;
        }
    }
    if best_t == 0.0 {
        return Ok(TradeOutcome::no_trade(endowment, state));
    }
    let (res, z) = point(best_t);
    Ok(TradeOutcome {
        bundle: AssetVector::new(z.to_vec())?,
        inflow: vec![best_t, res[1] - r1],
        reserves: AssetVector::new(res.to_vec())?,
    })
}

enum Slack<'a> {
    Linear(&'a [f64]),
    LogGeometric(&'a [f64]),
}

/// Log-barrier Newton method for `ConstantSum` and `GeometricMean` pools with
/// any number of goods. The utility is replaced by its separable concave
/// surrogate (`log U` for geometric utilities) and the pool constraint by its
/// concave form (`sum w_i log(R'_i / R_i) >= 0` for geometric means). The final
/// iterate is scaled up until the pool constraint binds.
pub fn trade_choice_barrier(
    u: &UtilityFunction,
    endowment: &AssetVector,
    state: &CfmmState,
    settings: &SolverSettings,
) -> Result<TradeOutcome> {
    check_dim(state.dim(), endowment.dim())?;
    u.check(endowment.dim())?;
    let r = state.reserves.as_slice();
    let d = endowment.as_slice();
    let l = r.len();
    let slack = match &state.function {
        TradingFunction::ConstantSum { coefficients } => Slack::Linear(coefficients),
        TradingFunction::GeometricMean { weights } => {
            if r.iter().any(|x| *x <= 0.0) {
                return Err(Error::Domain(format!(
                    "geometric-mean pool needs positive reserves, got {r:?}"
                )));
            }
            Slack::LogGeometric(weights)
        }
        other => {
            return Err(Error::Unsupported(format!(
                "barrier trade solver does not handle {}",
                other.name()
            )))
        }
    };

    let total: Vec<f64> = r.iter().zip(d).map(|(a, b)| a + b).collect();
    let free: Vec<usize> = (0..l).filter(|i| total[*i] > 0.0).collect();
    let fixed_kills_utility = free.len() < l
        && match u {
            UtilityFunction::ShiftedLogSum { shifts } => {
                (0..l).any(|i| total[i] == 0.0 && shifts[i] == 0.0)
            }
            _ => true,
        };
    if free.len() < 2 || free.iter().all(|i| d[*i] == 0.0) || fixed_kills_utility {
        return Ok(TradeOutcome::no_trade(endowment, state));
    }

    // slack of the pool constraint and its gradient/Hessian diagonal in zeta
    let slack_eval = |z: &[f64]| -> f64 {
        match slack {
            Slack::Linear(a) => free.iter().map(|&i| a[i] * (d[i] - z[i])).sum(),
            Slack::LogGeometric(w) => free
                .iter()
                .map(|&i| w[i] * ((d[i] - z[i]) / r[i]).ln_1p())
                .sum(),
        }
    };
    let feasible = |z: &[f64]| {
        free.iter().all(|&i| z[i] > 0.0 && total[i] - z[i] > 0.0) && slack_eval(z) > 0.0
    };
    let barrier_value = |z: &[f64], tau: f64| -> f64 {
        let (g, _, _) = u.surrogate(z);
        let mut b = slack_eval(z).ln();
        for &i in &free {
            b += z[i].ln() + (total[i] - z[i]).ln();
        }
        g + tau * b
    };

    // strictly feasible start: keep half of the endowment, skim a little of the rest
    let mut z = vec![0.0; l];
    for &i in &free {
        z[i] = 0.5 * d[i];
    }
    let mut skim = 1e-3;
    loop {
        for &i in &free {
            if d[i] == 0.0 {
                z[i] = skim * r[i];
            }
        }
        if feasible(&z) {
            break;
        }
        skim *= 0.5;
        if skim < 1e-300 {
            return Err(Error::NonConvergence {
                what: "barrier start",
                iterations: 0,
                residual: slack_eval(&z),
            });
        }
    }

    let m = free.len();
    let mut tau = 1.0;
    let tau_min = settings.tolerance * 1e-2;
    while tau >= tau_min {
        for _ in 0..100 {
            let (_, ug, uh) = u.surrogate(&z);
            let s = slack_eval(&z);
            let mut grad = DVector::<f64>::zeros(m);
            let mut hess = DMatrix::<f64>::zeros(m, m);
            let mut sg = vec![0.0; m];
            for (a, &i) in free.iter().enumerate() {
                let after = total[i] - z[i];
                let (dsi, hsi) = match slack {
                    Slack::Linear(c) => (-c[i], 0.0),
                    Slack::LogGeometric(w) => (-w[i] / after, -w[i] / (after * after)),
                };
                sg[a] = dsi;
                grad[a] = ug[i] + tau * (dsi / s + 1.0 / z[i] - 1.0 / after);
                hess[(a, a)] =
                    uh[i] + tau * (hsi / s - 1.0 / (z[i] * z[i]) - 1.0 / (after * after));
            }
            for a in 0..m {
                for b in 0..m {
                    hess[(a, b)] -= tau * sg[a] * sg[b] / (s * s);
                }
            }
            let neg = -hess;
            let step = match neg.cholesky() {
                Some(ch) => ch.solve(&grad),
                None => grad.clone(),
            };
            let decrement = grad.dot(&step);
            if !decrement.is_finite() {
                return Err(Error::NonConvergence {
                    what: "barrier newton step",
                    iterations: 0,
                    residual: decrement,
                });
            }
            if decrement < 1e-18 {
                break;
            }
            let f0 = barrier_value(&z, tau);
            let mut t = 1.0;
            let mut moved = false;
            for _ in 0..80 {
                let mut trial = z.clone();
                for (a, &i) in free.iter().enumerate() {
                    trial[i] += t * step[a];
                }
                if feasible(&trial) && barrier_value(&trial, tau) >= f0 + 0.25 * t * decrement {
                    z = trial;
                    moved = true;
                    break;
                }
                t *= 0.5;
            }
            if !moved {
                break;
            }
        }
        tau *= 0.1;
    }

    // spend the leftover slack by scaling the bundle up until the pool binds
    let scaled = |alpha: f64| -> Vec<f64> { z.iter().map(|v| v * (1.0 + alpha)).collect() };
    let alpha_max = free
        .iter()
        .map(|&i| total[i] / z[i] - 1.0)
        .fold(f64::INFINITY, f64::min)
        .max(0.0);
    let (mut lo, mut hi) = (0.0, alpha_max);
    if slack_eval(&scaled(hi)) >= 0.0 {
        lo = hi;
    } else {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if slack_eval(&scaled(mid)) >= 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }
    let mut bundle = scaled(lo);
    for &i in &free {
        bundle[i] = bundle[i].min(total[i]);
    }
    if u.eval_unchecked(&bundle) < u.eval_unchecked(d) {
        return Ok(TradeOutcome::no_trade(endowment, state));
    }
    let inflow: Vec<f64> = d.iter().zip(&bundle).map(|(a, b)| a - b).collect();
    let reserves: Vec<f64> = r.iter().zip(&inflow).map(|(a, b)| a + b).collect();
    Ok(TradeOutcome {
        bundle: AssetVector::from_clamped(bundle, 1e-12)?,
        inflow,
        reserves: AssetVector::from_clamped(reserves, 1e-9)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn av(v: &[f64]) -> AssetVector {
        AssetVector::new(v.to_vec()).unwrap()
    }

    fn xy() -> UtilityFunction {
        UtilityFunction::CobbDouglasProduct
    }

    fn solve(u: &UtilityFunction, d: &[f64], c: TradingFunction, r: &[f64]) -> TradeOutcome {
        let s = CfmmState::feeless(c, r.to_vec()).unwrap();
        trade_choice(u, &av(d), &s, &SolverSettings::default()).unwrap()
    }

    #[test]
    fn constant_sum_half_deposit() {
        let c = TradingFunction::constant_sum(vec![1.0, 1.0]).unwrap();
        let t = solve(&xy(), &[1.0, 0.0], c, &[5.0, 5.0]);
        assert_eq!(t.bundle.as_slice(), &[0.5, 0.5]);
        assert_eq!(t.inflow, vec![0.5, -0.5]);
        assert_eq!(t.reserves.as_slice(), &[5.5, 4.5]);
    }

    #[test]
    fn zero_wealth_does_not_trade() {
        for c in [
            TradingFunction::ConstantProduct,
            TradingFunction::constant_sum(vec![1.0, 2.0]).unwrap(),
            TradingFunction::ExpProduct,
        ] {
            let t = solve(&xy(), &[0.0, 0.0], c, &[3.0, 2.0]);
            assert!(t.bundle.is_zero() && !t.traded());
        }
    }

    #[test]
    fn blocked_direction_at_the_boundary() {
        let c = TradingFunction::constant_sum(vec![1.0, 1.0]).unwrap();
        let t = solve(&xy(), &[0.0, 1.0], c.clone(), &[0.0, 4.0]);
        assert!(!t.traded());
        let t = solve(&xy(), &[1.0, 0.0], c, &[0.0, 4.0]);
        assert_eq!(t.reserves.as_slice(), &[0.5, 3.5]);
    }

    #[test]
    fn mirrored_endowment_against_constant_product() {
        for (rx, ry) in [(3.0, 7.0), (1000.0, 1000.0), (0.5, 2.0)] {
            let t = solve(
                &xy(),
                &[0.0, 1.0],
                TradingFunction::ConstantProduct,
                &[rx, ry],
            );
            let b: f64 = -ry + (ry * (ry + 1.0)).sqrt();
            assert!((t.inflow[1] - b).abs() < 1e-9 * b.max(1.0), "{t:?} vs {b}");
        }
    }

    #[test]
    fn constant_min_drains_to_the_corner() {
        let t = solve(
            &xy(),
            &[1.0, 0.0],
            TradingFunction::ConstantMin,
            &[3.0, 7.0],
        );
        assert_eq!(t.reserves.as_slice(), &[3.0, 3.0]);
        assert_eq!(t.bundle.as_slice(), &[1.0, 4.0]);
        let t = solve(
            &xy(),
            &[0.0, 0.0],
            TradingFunction::ConstantMin,
            &[2.0, 2.0],
        );
        assert!(!t.traded());
    }

    #[test]
    fn fees_and_decreasing_curves_are_rejected() {
        let s = CfmmState::new(TradingFunction::ConstantProduct, av(&[1.0, 1.0]), 0.003).unwrap();
        assert!(matches!(
            trade_choice(&xy(), &av(&[1.0, 0.0]), &s, &SolverSettings::default()),
            Err(Error::Unsupported(_))
        ));
        let s = CfmmState::feeless(TradingFunction::QuadraticOverLinear, vec![1.0, 1.0]).unwrap();
        assert!(trade_choice(&xy(), &av(&[1.0, 0.0]), &s, &SolverSettings::default()).is_err());
    }

    #[test]
    fn barrier_agrees_with_the_two_good_path() {
        let cases = [
            (
                TradingFunction::constant_sum(vec![1.0, 2.0]).unwrap(),
                [4.0, 3.0],
                [1.0, 0.2],
            ),
            (
                TradingFunction::geometric_mean(vec![0.3, 0.7]).unwrap(),
                [5.0, 2.0],
                [0.0, 1.0],
            ),
            (
                TradingFunction::geometric_mean(vec![0.5, 0.5]).unwrap(),
                [50.0, 80.0],
                [0.7, 0.1],
            ),
        ];
        let utilities = [
            xy(),
            UtilityFunction::weighted_geometric(vec![0.4, 0.6]).unwrap(),
            UtilityFunction::shifted_log_sum(vec![0.1, 0.3]).unwrap(),
        ];
        for (c, r, d) in &cases {
            for u in &utilities {
                let s = CfmmState::feeless(c.clone(), r.to_vec()).unwrap();
                let e = av(d);
                let a = trade_choice(u, &e, &s, &SolverSettings::default()).unwrap();
                let b = trade_choice_barrier(u, &e, &s, &SolverSettings::default()).unwrap();
                let ua = u.eval(a.bundle.as_slice()).unwrap();
                let ub = u.eval(b.bundle.as_slice()).unwrap();
                assert!(
                    (ua - ub).abs() < 1e-8 * ua.abs().max(1.0),
                    "{c:?} {u:?}: {ua} vs {ub}"
                );
                let k = s.invariant();
                let kb = c.eval(b.reserves.as_slice()).unwrap();
                assert!((kb - k).abs() <= 1e-9 * k, "{kb} vs {k}");
            }
        }
    }

    #[test]
    fn barrier_handles_three_goods() {
        let c = TradingFunction::geometric_mean(vec![0.2, 0.3, 0.5]).unwrap();
        let s = CfmmState::feeless(c.clone(), vec![10.0, 20.0, 30.0]).unwrap();
        let u = UtilityFunction::CobbDouglasProduct;
        let t = trade_choice(&u, &av(&[1.0, 0.0, 0.0]), &s, &SolverSettings::default()).unwrap();
        let k = s.invariant();
        assert!((c.eval(t.reserves.as_slice()).unwrap() - k).abs() < 1e-9 * k);
        // KKT: grad U parallel to grad C at the new reserves
        let gu = u.grad(t.bundle.as_slice()).unwrap();
        let gc = c.grad(t.reserves.as_slice()).unwrap();
        let ratios: Vec<f64> = gu.iter().zip(&gc).map(|(a, b)| a / b).collect();
        for r in &ratios {
            assert!((r / ratios[0] - 1.0).abs() < 1e-6, "{ratios:?}");
        }
    }
}
