//! Brute-force trade choice for two goods: search along the pool's level set.

use cfmmwd::{TradingFunction, UtilityFunction};

/// `y` with `C(x, y) = k`, or `None` when even `y = 0` overshoots.
fn level_y(c: &TradingFunction, x: f64, k: f64) -> Option<f64> {
    let f = |y: f64| c.eval(&[x, y]).unwrap();
    if f(0.0) > k {
        return None;
    }
    let mut hi = 1.0;
    while f(hi) < k {
        hi *= 2.0;
        if hi > 1e300 {
            return None;
        }
    }
    let mut lo = 0.0;
    for _ in 0..120 {
        let m = 0.5 * (lo + hi);
        if f(m) < k {
            lo = m;
        } else {
            hi = m;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Best utility over pool states `(x, y(x))` reachable with the agent's
/// holdings: scan, then golden-section refinement.
pub fn oracle(u: &UtilityFunction, d: [f64; 2], c: &TradingFunction, r: [f64; 2]) -> f64 {
    let k = c.eval(&r).unwrap();
    let value = |x: f64| -> f64 {
        match level_y(c, x, k) {
            Some(y) if x <= r[0] + d[0] && y <= r[1] + d[1] => u
                .eval(&[r[0] + d[0] - x, (r[1] + d[1] - y).max(0.0)])
                .unwrap(),
            _ => f64::NEG_INFINITY,
        }
    };
    // feasible x form an interval inside [0, r0 + d0]; locate its ends
    let (lo, hi) = (0.0, r[0] + d[0]);
    let n = 1000;
    let grid: Vec<f64> = (0..=n)
        .map(|i| lo + (hi - lo) * i as f64 / n as f64)
        .collect();
    let feasible: Vec<bool> = grid.iter().map(|x| value(*x).is_finite()).collect();
    let edge = |mut inside: f64, mut outside: f64| {
        for _ in 0..100 {
            let m = 0.5 * (inside + outside);
            if value(m).is_finite() {
                inside = m;
            } else {
                outside = m;
            }
        }
        inside
    };
    let (Some(first), Some(last)) = (
        feasible.iter().position(|f| *f),
        feasible.iter().rposition(|f| *f),
    ) else {
        return u.eval(&d).unwrap();
    };
    let x_lo = if first > 0 {
        edge(grid[first], grid[first - 1])
    } else {
        lo
    };
    let x_hi = if last < n {
        edge(grid[last], grid[last + 1])
    } else {
        hi
    };

    let mut best = u.eval(&d).unwrap();
    let mut arg = r[0];
    for &x in grid.iter().chain(&[x_lo, x_hi]) {
        let v = value(x);
        if v > best {
            best = v;
            arg = x;
        }
    }
    let step = (hi - lo) / n as f64;
    let (mut a, mut b) = ((arg - step).max(x_lo), (arg + step).min(x_hi));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let x1 = b - g * (b - a);
        let x2 = a + g * (b - a);
        if value(x1) < value(x2) {
            a = x1;
        } else {
            b = x2;
        }
    }
    best.max(value(0.5 * (a + b)))
}
