use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("need at least two nodes, got {0}")]
    TooFewNodes(usize),
    #[error("nodes must be strictly increasing (at index {0})")]
    NotIncreasing(usize),
    #[error("length mismatch: {nodes} nodes, {values} values")]
    LengthMismatch { nodes: usize, values: usize },
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
}

/// A function sampled on a sorted grid, interpolated by piecewise cubic
/// Hermite polynomials.
///
/// When derivatives are not supplied, node slopes come from the quadratic
/// through each node and its neighbours, so quadratics are reproduced exactly.
/// Nodes listed as kinks are places where the sampled function is only
/// piecewise smooth; quadrature over the function splits there.
#[derive(Debug, Clone, PartialEq)]
pub struct GriddedFunction {
    nodes: Vec<f64>,
    values: Vec<f64>,
    slopes: Vec<f64>,
    kinks: Vec<f64>,
}

impl GriddedFunction {
    pub fn new(nodes: Vec<f64>, values: Vec<f64>) -> Result<Self, GridError> {
        validate(&nodes, &values)?;
        let slopes = three_point_slopes(&nodes, &values);
        Ok(Self {
            nodes,
            values,
            slopes,
            kinks: Vec::new(),
        })
    }

    pub fn with_derivatives(
        nodes: Vec<f64>,
        values: Vec<f64>,
        slopes: Vec<f64>,
    ) -> Result<Self, GridError> {
        validate(&nodes, &values)?;
        if slopes.len() != nodes.len() {
            return Err(GridError::LengthMismatch {
                nodes: nodes.len(),
                values: slopes.len(),
            });
        }
        if let Some(i) = slopes.iter().position(|s| !s.is_finite()) {
            return Err(GridError::NonFinite(i));
        }
        Ok(Self {
            nodes,
            values,
            slopes,
            kinks: Vec::new(),
        })
    }

    /// Samples `f` on `nodes`.
    pub fn from_fn<F: Fn(f64) -> f64>(nodes: Vec<f64>, f: F) -> Result<Self, GridError> {
        let values = nodes.iter().map(|&x| f(x)).collect();
        Self::new(nodes, values)
    }

    /// `n` evenly spaced nodes on `[lo, hi]`.
    pub fn uniform_nodes(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        let step = (hi - lo) / (n - 1) as f64;
        (0..n)
            .map(|i| if i + 1 == n { hi } else { lo + step * i as f64 })
            .collect()
    }

    /// Marks `kinks` as break points for quadrature. Each kink should also be
    /// a node.
    pub fn with_kinks(mut self, kinks: Vec<f64>) -> Self {
        self.kinks = kinks;
        self
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    pub fn kinks(&self) -> &[f64] {
        &self.kinks
    }

    pub fn lo(&self) -> f64 {
        self.nodes[0]
    }

    pub fn hi(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Spacing of the cell containing `x`.
    pub fn spacing_at(&self, x: f64) -> f64 {
        let i = self.cell(x);
        self.nodes[i + 1] - self.nodes[i]
    }

    fn cell(&self, x: f64) -> usize {
        let n = self.nodes.len();
        match self.nodes.binary_search_by(|v| v.total_cmp(&x)) {
            Ok(i) => i.min(n - 2),
            Err(0) => 0,
            Err(i) => (i - 1).min(n - 2),
        }
    }

    /// Value at `x`, clamped to the end values outside the node range.
    pub fn eval(&self, x: f64) -> f64 {
        self.eval_both(x).0
    }

    /// Derivative at `x`; zero outside the node range.
    pub fn eval_deriv(&self, x: f64) -> f64 {
        self.eval_both(x).1
    }

    /// `(value, derivative)` at `x`.
    pub fn eval_both(&self, x: f64) -> (f64, f64) {
        if x <= self.lo() {
            return (
                self.values[0],
                if x == self.lo() { self.slopes[0] } else { 0.0 },
            );
        }
        if x >= self.hi() {
            let n = self.nodes.len() - 1;
            return (
                self.values[n],
                if x == self.hi() { self.slopes[n] } else { 0.0 },
            );
        }
        let i = self.cell(x);
        let (x0, x1) = (self.nodes[i], self.nodes[i + 1]);
        let h = x1 - x0;
        let t = (x - x0) / h;
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (d0, d1) = (self.slopes[i] * h, self.slopes[i + 1] * h);
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        let v = h00 * y0 + h10 * d0 + h01 * y1 + h11 * d1;
        let dh00 = 6.0 * t2 - 6.0 * t;
        let dh10 = 3.0 * t2 - 4.0 * t + 1.0;
        let dh01 = -6.0 * t2 + 6.0 * t;
        let dh11 = 3.0 * t2 - 2.0 * t;
        let d = (dh00 * y0 + dh10 * d0 + dh01 * y1 + dh11 * d1) / h;
        (v, d)
    }
}

fn validate(nodes: &[f64], values: &[f64]) -> Result<(), GridError> {
    if nodes.len() < 2 {
        return Err(GridError::TooFewNodes(nodes.len()));
    }
    if nodes.len() != values.len() {
        return Err(GridError::LengthMismatch {
            nodes: nodes.len(),
            values: values.len(),
        });
    }
    for i in 1..nodes.len() {
        if !(nodes[i] > nodes[i - 1]) {
            return Err(GridError::NotIncreasing(i));
        }
    }
    if let Some(i) = nodes.iter().chain(values).position(|v| !v.is_finite()) {
        return Err(GridError::NonFinite(i % nodes.len()));
    }
    Ok(())
}

fn three_point_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n == 2 {
        let s = (y[1] - y[0]) / (x[1] - x[0]);
        return vec![s, s];
    }
    // derivative at x[j] of the parabola through points a, b, c
    let parabola = |a: usize, b: usize, c: usize, j: usize| {
        let (xa, xb, xc) = (x[a], x[b], x[c]);
        let xj = x[j];
        y[a] * (2.0 * xj - xb - xc) / ((xa - xb) * (xa - xc))
            + y[b] * (2.0 * xj - xa - xc) / ((xb - xa) * (xb - xc))
            + y[c] * (2.0 * xj - xa - xb) / ((xc - xa) * (xc - xb))
    };
    (0..n)
        .map(|j| match j {
            0 => parabola(0, 1, 2, 0),
            j if j == n - 1 => parabola(n - 3, n - 2, n - 1, j),
            j => parabola(j - 1, j, j + 1, j),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_quadratics() {
        let nodes = GriddedFunction::uniform_nodes(0.0, 2.0, 11);
        let g = GriddedFunction::from_fn(nodes, |y| 1.0 - y + 3.0 * y * y).unwrap();
        for x in [0.0, 0.13, 0.77, 1.5, 1.99, 2.0] {
            let (v, d) = g.eval_both(x);
            assert!((v - (1.0 - x + 3.0 * x * x)).abs() < 1e-12);
            assert!((d - (-1.0 + 6.0 * x)).abs() < 1e-11);
        }
    }

    #[test]
    fn hermite_with_exact_slopes_reproduces_cubics() {
        let nodes = vec![0.0, 0.3, 0.35, 1.0];
        let f = |x: f64| x * x * x - x;
        let df = |x: f64| 3.0 * x * x - 1.0;
        let g = GriddedFunction::with_derivatives(
            nodes.clone(),
            nodes.iter().map(|&x| f(x)).collect(),
            nodes.iter().map(|&x| df(x)).collect(),
        )
        .unwrap();
        for x in [0.1, 0.31, 0.6, 0.99] {
            assert!((g.eval(x) - f(x)).abs() < 1e-14);
            assert!((g.eval_deriv(x) - df(x)).abs() < 1e-13);
        }
    }

    #[test]
    fn rejects_bad_nodes() {
        assert!(matches!(
            GriddedFunction::new(vec![0.0, 0.0, 1.0], vec![1.0; 3]),
            Err(GridError::NotIncreasing(1))
        ));
        assert!(GriddedFunction::new(vec![0.0], vec![1.0]).is_err());
        assert!(GriddedFunction::new(vec![0.0, 1.0], vec![1.0, f64::NAN]).is_err());
    }
}
