//! Cubic splines used for custom boundary samples and corrector seam traces.

/// Interpolating cubic spline on a strictly increasing knot vector with
/// natural end conditions (zero second derivative at both ends).
#[derive(Clone, Debug)]
pub struct NaturalSpline {
    knots: Vec<f64>,
    values: Vec<f64>,
    second: Vec<f64>,
}

impl NaturalSpline {
    /// Panics if fewer than two knots are given or the knots are not increasing.
    pub fn new(knots: Vec<f64>, values: Vec<f64>) -> Self {
        assert!(knots.len() >= 2 && knots.len() == values.len());
        assert!(knots.windows(2).all(|w| w[1] > w[0]), "knots must increase");
        let n = knots.len();
        let mut second = vec![0.0; n];
        if n > 2 {
            // Tridiagonal system for interior second derivatives (Thomas algorithm).
            let m = n - 2;
            let mut diag = vec![0.0; m];
            let mut upper = vec![0.0; m];
            let mut rhs = vec![0.0; m];
            for k in 0..m {
                let i = k + 1;
                let h0 = knots[i] - knots[i - 1];
                let h1 = knots[i + 1] - knots[i];
                diag[k] = 2.0 * (h0 + h1);
                upper[k] = h1;
                rhs[k] = 6.0 * ((values[i + 1] - values[i]) / h1 - (values[i] - values[i - 1]) / h0);
            }
            for k in 1..m {
                let lower = knots[k + 1] - knots[k];
                let w = lower / diag[k - 1];
                diag[k] -= w * upper[k - 1];
                rhs[k] -= w * rhs[k - 1];
            }
            let mut sol = vec![0.0; m];
            sol[m - 1] = rhs[m - 1] / diag[m - 1];
            for k in (0..m - 1).rev() {
                sol[k] = (rhs[k] - upper[k] * sol[k + 1]) / diag[k];
            }
            second[1..n - 1].copy_from_slice(&sol);
        }
        Self { knots, values, second }
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.knots[0], *self.knots.last().unwrap())
    }

    fn interval(&self, x: f64) -> usize {
        let n = self.knots.len();
        match self.knots.binary_search_by(|k| k.partial_cmp(&x).unwrap()) {
            Ok(i) => i.min(n - 2),
            Err(0) => 0,
            Err(i) => (i - 1).min(n - 2),
        }
    }

    /// Value and first two derivatives at `x`; extrapolates with the end cubic.
    pub fn eval3(&self, x: f64) -> [f64; 3] {
        let i = self.interval(x);
        let (x0, x1) = (self.knots[i], self.knots[i + 1]);
        let h = x1 - x0;
        let (m0, m1) = (self.second[i], self.second[i + 1]);
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let a = (x1 - x) / h;
        let b = (x - x0) / h;
        let value = a * y0 + b * y1 + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / 6.0;
        let d1 = (y1 - y0) / h - (3.0 * a * a - 1.0) * h * m0 / 6.0 + (3.0 * b * b - 1.0) * h * m1 / 6.0;
        let d2 = a * m0 + b * m1;
        [value, d1, d2]
    }
}

/// Periodic interpolating cubic spline on `[0, 1)` through uniformly spaced samples.
#[derive(Clone, Debug)]
pub struct PeriodicSpline {
    values: Vec<f64>,
    second: Vec<f64>,
}

impl PeriodicSpline {
    pub fn new(values: Vec<f64>) -> Self {
        let n = values.len();
        assert!(n >= 3, "periodic spline needs at least three samples");
        let h = 1.0 / n as f64;
        // Cyclic system: m[i-1] + 4 m[i] + m[i+1] = 6/h^2 (y[i+1] - 2y[i] + y[i-1]).
        let rhs: Vec<f64> = (0..n)
            .map(|i| {
                let prev = values[(i + n - 1) % n];
                let next = values[(i + 1) % n];
                6.0 * (next - 2.0 * values[i] + prev) / (h * h)
            })
            .collect();
        let second = solve_cyclic_tridiagonal(1.0, 4.0, 1.0, &rhs);
        Self { values, second }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn eval3(&self, y: f64) -> [f64; 3] {
        let n = self.values.len();
        let h = 1.0 / n as f64;
        let s = y.rem_euclid(1.0) * n as f64;
        let i = (s.floor() as usize).min(n - 1);
        let b = s - i as f64;
        let a = 1.0 - b;
        let j = (i + 1) % n;
        let (y0, y1) = (self.values[i], self.values[j]);
        let (m0, m1) = (self.second[i], self.second[j]);
        let value = a * y0 + b * y1 + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / 6.0;
        let d1 = (y1 - y0) / h - (3.0 * a * a - 1.0) * h * m0 / 6.0 + (3.0 * b * b - 1.0) * h * m1 / 6.0;
        let d2 = a * m0 + b * m1;
        [value, d1, d2]
    }
}

/// Solves the constant-coefficient cyclic tridiagonal system via Sherman-Morrison.
fn solve_cyclic_tridiagonal(lower: f64, diag: f64, upper: f64, rhs: &[f64]) -> Vec<f64> {
    let n = rhs.len();
    let gamma = -diag;
    let mut d = vec![diag; n];
    d[0] = diag - gamma;
    d[n - 1] = diag - lower * upper / gamma;
    let thomas = |r: &[f64]| -> Vec<f64> {
        let mut c = vec![0.0; n];
        let mut x = vec![0.0; n];
        c[0] = upper / d[0];
        x[0] = r[0] / d[0];
        for i in 1..n {
            let m = d[i] - lower * c[i - 1];
            c[i] = upper / m;
            x[i] = (r[i] - lower * x[i - 1]) / m;
        }
        for i in (0..n - 1).rev() {
            x[i] -= c[i] * x[i + 1];
        }
        x
    };
    let x = thomas(rhs);
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = upper;
    let z = thomas(&u);
    let v0 = 1.0;
    let vn = lower / gamma;
    let factor = (v0 * x[0] + vn * x[n - 1]) / (1.0 + v0 * z[0] + vn * z[n - 1]);
    x.iter().zip(&z).map(|(xi, zi)| xi - factor * zi).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn natural_spline_reproduces_linear_data() {
        let knots: Vec<f64> = (0..7).map(|i| (i as f64).powf(1.3)).collect();
        let values: Vec<f64> = knots.iter().map(|x| 2.0 * x - 1.0).collect();
        let s = NaturalSpline::new(knots, values);
        for x in [0.0, 0.3, 1.7, 4.2, 7.9] {
            let [v, d1, d2] = s.eval3(x);
            assert!((v - (2.0 * x - 1.0)).abs() < 1e-12);
            assert!((d1 - 2.0).abs() < 1e-12);
            assert!(d2.abs() < 1e-12);
        }
    }

    #[test]
    fn periodic_spline_converges_on_cosine() {
        let err = |n: usize| {
            let values: Vec<f64> = (0..n)
                .map(|j| (2.0 * std::f64::consts::PI * j as f64 / n as f64).cos())
                .collect();
            let s = PeriodicSpline::new(values);
            (0..1000)
                .map(|k| {
                    let y = k as f64 / 1000.0 + 1e-4;
                    (s.eval3(y)[0] - (2.0 * std::f64::consts::PI * y).cos()).abs()
                })
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(16), err(32));
        assert!(e2 < e1 / 12.0, "fourth-order convergence expected: {e1} {e2}");
    }
}
