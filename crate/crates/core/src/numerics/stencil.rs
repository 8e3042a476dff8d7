//! Finite-difference and local-polynomial derivative estimates.

/// Fourth-order central difference `f'(x)`.
pub fn central4<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    (-f(x + 2.0 * h) + 8.0 * f(x + h) - 8.0 * f(x - h) + f(x - 2.0 * h)) / (12.0 * h)
}

/// Second-order central difference `f'(x)`.
pub fn central2<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Derivatives `0..=order` at `at` of the polynomial interpolating
/// `(xs[i], ys[i])`. The points need not bracket `at`, which is how the
/// one-sided estimates next to a kink are taken.
pub fn poly_derivatives(xs: &[f64], ys: &[f64], at: f64, order: usize) -> Vec<f64> {
    let n = xs.len();
    assert_eq!(n, ys.len());
    assert!(n > order, "need more points than the derivative order");
    let scale = xs
        .iter()
        .map(|&x| (x - at).abs())
        .fold(0.0f64, f64::max)
        .max(f64::MIN_POSITIVE);
    // Vandermonde in t = (x - at) / scale.
    let mut a: Vec<Vec<f64>> = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| {
            let t = (x - at) / scale;
            let mut row: Vec<f64> = (0..n)
                .scan(1.0, |p, _| {
                    let v = *p;
                    *p *= t;
                    Some(v)
                })
                .collect();
            row.push(y);
            row
        })
        .collect();
    let coeffs = solve_augmented(&mut a);
    let mut out = Vec::with_capacity(order + 1);
    let mut fact = 1.0;
    for k in 0..=order {
        if k > 0 {
            fact *= k as f64;
        }
        out.push(fact * coeffs[k] / scale.powi(k as i32));
    }
    out
}

/// Gaussian elimination with partial pivoting on an `n x (n+1)` system.
fn solve_augmented(a: &mut [Vec<f64>]) -> Vec<f64> {
    let n = a.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for k in col..=n {
                    a[row][k] -= f * a[col][k];
                }
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut s = a[row][n];
        for k in row + 1..n {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    x
}

/// Cubic Lagrange interpolation on a uniform axis `x0 + i*dx`, using the four
/// nodes around `x` (clamped at the ends).
pub fn lagrange4_uniform(values: &[f64], x0: f64, dx: f64, x: f64) -> f64 {
    let n = values.len();
    if n < 4 {
        // fall back to linear
        let t = ((x - x0) / dx).clamp(0.0, (n - 1) as f64);
        let i = (t.floor() as usize).min(n.saturating_sub(2));
        let f = t - i as f64;
        return if n == 1 {
            values[0]
        } else {
            values[i] * (1.0 - f) + values[i + 1] * f
        };
    }
    let t = (x - x0) / dx;
    let i = (t.floor() as isize - 1).clamp(0, n as isize - 4) as usize;
    let s = t - i as f64;
    let (y0, y1, y2, y3) = (values[i], values[i + 1], values[i + 2], values[i + 3]);
    let l0 = -(s - 1.0) * (s - 2.0) * (s - 3.0) / 6.0;
    let l1 = s * (s - 2.0) * (s - 3.0) / 2.0;
    let l2 = -s * (s - 1.0) * (s - 3.0) / 2.0;
    let l3 = s * (s - 1.0) * (s - 2.0) / 6.0;
    y0 * l0 + y1 * l1 + y2 * l2 + y3 * l3
}
