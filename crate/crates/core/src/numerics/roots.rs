//! Bracketed root finding.

/// Refine a root of `f` in `[lo, hi]`, where `f(lo)` and `f(hi)` differ in
/// sign, by secant steps safeguarded with bisection. Stops once the bracket is
/// narrower than `tol`.
pub fn refine<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let mut flo = f(lo);
    let mut fhi = f(hi);
    if flo == 0.0 {
        return lo;
    }
    if fhi == 0.0 {
        return hi;
    }
    debug_assert!(flo.signum() != fhi.signum(), "root is not bracketed");
    for it in 0..200 {
        if (hi - lo).abs() <= tol {
            break;
        }
        let secant = hi - fhi * (hi - lo) / (fhi - flo);
        let mid = 0.5 * (lo + hi);
        // every third step is a plain bisection so the bracket always shrinks
        let x = if it % 3 == 2 || !(secant > lo.min(hi) && secant < lo.max(hi)) {
            mid
        } else {
            secant
        };
        let fx = f(x);
        if fx == 0.0 {
            return x;
        }
        if fx.signum() == flo.signum() {
            lo = x;
            flo = fx;
        } else {
            hi = x;
            fhi = fx;
        }
    }
    if flo.abs() < fhi.abs() {
        lo
    } else {
        hi
    }
}

/// All sign changes of `f` over the scan points `xs`, each refined to `tol`.
/// Exact zeros at a scan point are reported once.
pub fn scan_roots<F: FnMut(f64) -> f64>(mut f: F, xs: &[f64], tol: f64) -> Vec<f64> {
    let vals: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let mut roots = Vec::new();
    for i in 0..xs.len().saturating_sub(1) {
        let (a, b) = (vals[i], vals[i + 1]);
        if !a.is_finite() || !b.is_finite() {
            continue;
        }
        if a == 0.0 {
            if roots.last() != Some(&xs[i]) {
                roots.push(xs[i]);
            }
            continue;
        }
        if b == 0.0 {
            roots.push(xs[i + 1]);
            continue;
        }
        if a.signum() != b.signum() {
            roots.push(refine(&mut f, xs[i], xs[i + 1], tol));
        }
    }
    roots
}

/// Merge roots closer than `gap`, keeping the first of each cluster.
pub fn cluster(roots: &[f64], gap: f64) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for &r in roots {
        match out.last() {
            Some(&last) if (r - last).abs() <= gap => {}
            _ => out.push(r),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_root() {
        let r = refine(|x| 4.0 * x * x - 2.9 * x - 0.05, 0.5, 1.0, 1e-14);
        let exact = (2.9 + (2.9f64 * 2.9 + 0.8).sqrt()) / 8.0;
        assert!((r - exact).abs() < 1e-13);
    }

    #[test]
    fn scan_finds_all() {
        let xs: Vec<f64> = (0..=100).map(|i| i as f64 * 0.1).collect();
        let roots = scan_roots(|x| (x - 1.05) * (x - 4.25) * (x - 7.0), &xs, 1e-13);
        assert_eq!(roots.len(), 3);
        assert!((roots[0] - 1.05).abs() < 1e-12);
        assert!((roots[1] - 4.25).abs() < 1e-12);
        assert!((roots[2] - 7.0).abs() < 1e-12);
    }

    #[test]
    fn cluster_merges_neighbours() {
        assert_eq!(cluster(&[1.0, 1.001, 2.0], 0.01), vec![1.0, 2.0]);
    }
}
