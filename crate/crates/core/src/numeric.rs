//! Small numeric helpers shared by the law analytics and the experiment
//! estimators.

/// Neumaier-compensated accumulator. Replica results are reduced with this
/// so that the experiment aggregates are insensitive to reduction order well
/// below the 1e-12 level.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Bisection on a monotone increasing function; returns `x` with
/// `f(x) ≈ target` to relative tolerance `rel_tol` on the bracket width.
/// Panics if the bracket does not straddle the target after expansion.
pub fn solve_increasing<F: Fn(f64) -> f64>(
    f: F,
    target: f64,
    mut lo: f64,
    mut hi: f64,
    rel_tol: f64,
) -> f64 {
    assert!(lo > 0.0 && hi > lo);
    for _ in 0..200 {
        if f(lo) <= target {
            break;
        }
        lo /= 8.0;
    }
    for _ in 0..200 {
        if f(hi) >= target {
            break;
        }
        hi *= 8.0;
    }
    assert!(
        f(lo) <= target && f(hi) >= target,
        "bracket does not straddle target"
    );
    while hi - lo > rel_tol * hi {
        let mid = 0.5 * (lo + hi);
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Composite Simpson on `[a, b]` with `2n` panels.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let n2 = 2 * n.max(1);
    let h = (b - a) / n2 as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n2 {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

/// Survival function of the Kolmogorov distribution,
/// `Q(x) = 2 Σ_{k≥1} (−1)^{k−1} exp(−2 k² x²)`; the asymptotic p-value for a
/// KS statistic is `Q(√n_eff · D)`.
pub fn kolmogorov_survival(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=200 {
        let term = (-2.0 * (k as f64) * (k as f64) * x * x).exp();
        if term < 1e-18 {
            break;
        }
        sum += if k % 2 == 1 { term } else { -term };
    }
    (2.0 * sum).clamp(0.0, 1.0)
}
