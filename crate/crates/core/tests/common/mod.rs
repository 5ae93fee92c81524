#![allow(dead_code)]

/// Exhaustive maximum of `E[φ(b + Σ σ_k √dt ξ_k)]` over every adapted choice
/// of `σ_k ∈ {lo, hi}`, with `ξ_k` fair signs.
///
/// A strategy is one bit per decision node of the binary sign tree (`2^m − 1`
/// nodes for `m` steps), so all `2^(2^m − 1)` strategies are enumerated.
pub fn brute_force(phi: &dyn Fn(f64) -> f64, b: f64, steps: usize, dt: f64, lo: f64, hi: f64) -> f64 {
    assert!(steps <= 4, "brute force is only feasible for a few steps");
    let decisions = (1usize << steps) - 1;
    let sq = dt.sqrt();
    let mut best = f64::NEG_INFINITY;
    for strategy in 0u64..(1u64 << decisions) {
        let mut total = 0.0;
        for signs in 0usize..(1 << steps) {
            let mut x = b;
            let mut node = 0usize;
            for k in 0..steps {
                let sigma = if strategy >> node & 1 == 1 { hi } else { lo };
                let up = signs >> k & 1 == 1;
                x += sigma * sq * if up { 1.0 } else { -1.0 };
                node = 2 * node + if up { 2 } else { 1 };
            }
            total += phi(x);
        }
        best = best.max(total / (1 << steps) as f64);
    }
    best
}

/// Every value of `B_{t_i}` reachable with `σ ∈ {lo, hi}` and sign increments.
pub fn reachable(i: usize, dt: f64, lo: f64, hi: f64) -> Vec<f64> {
    let mut layer = vec![0.0];
    for _ in 0..i {
        layer = layer
            .iter()
            .flat_map(|&x| {
                [lo, hi]
                    .into_iter()
                    .flat_map(move |s| [x + s * dt.sqrt(), x - s * dt.sqrt()])
            })
            .collect();
    }
    layer
}

/// Composite Simpson rule for `E[f(σ√t Z)]`, `Z` standard normal, on ±12 sd.
pub fn gauss_mean(f: impl Fn(f64) -> f64, sigma: f64, t: f64) -> f64 {
    let s = sigma * t.sqrt();
    if s == 0.0 {
        return f(0.0);
    }
    let m = 24_000;
    let h = 24.0 / m as f64;
    let mut acc = 0.0;
    for k in 0..=m {
        let z = -12.0 + k as f64 * h;
        let w = if k == 0 || k == m {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc += w * f(s * z) * (-0.5 * z * z).exp();
    }
    acc * h / 3.0 / (2.0 * std::f64::consts::PI).sqrt()
}
