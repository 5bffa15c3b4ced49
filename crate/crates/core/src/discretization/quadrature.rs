//! Gauss–Legendre rules on `[0, 1]`.

#[derive(Clone, Debug)]
pub struct GaussRule {
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussRule {
    /// `n`-point rule on `[0, 1]` (exact for polynomials of degree `2n - 1`).
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut points = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n {
            // Newton on P_n from the Chebyshev-like initial guess.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            dp = if d != 0.0 { d } else { dp };
            points[n - 1 - i] = 0.5 * (x + 1.0);
            weights[n - 1 - i] = 1.0 / ((1.0 - x * x) * dp * dp);
        }
        Self { points, weights }
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Tensor-product points on `[0,1]²`, first coordinate fastest.
    pub fn tensor_points(&self) -> impl Iterator<Item = ([f64; 2], f64)> + '_ {
        let n = self.points.len();
        (0..n * n).map(move |k| {
            let (i, j) = (k % n, k / n);
            ([self.points[i], self.points[j]], self.weights[i] * self.weights[j])
        })
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_monomials_exactly() {
        for n in 1..=6 {
            let g = GaussRule::new(n);
            for k in 0..2 * n {
                let q: f64 = g.points().iter().zip(g.weights()).map(|(x, w)| w * x.powi(k as i32)).sum();
                assert!((q - 1.0 / (k as f64 + 1.0)).abs() < 1e-14, "n={n} k={k}");
            }
        }
    }

    #[test]
    fn three_point_nodes() {
        let g = GaussRule::new(3);
        let r = (0.6f64).sqrt() / 2.0;
        assert!((g.points()[0] - (0.5 - r)).abs() < 1e-15);
        assert!((g.points()[1] - 0.5).abs() < 1e-15);
        assert!((g.weights()[1] - 4.0 / 9.0).abs() < 1e-15);
    }
}
