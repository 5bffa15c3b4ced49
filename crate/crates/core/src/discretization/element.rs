//! Biquadratic velocity / bilinear pressure shape functions on `[0,1]²`.

use crate::geometry::MapPoint;

fn q2_1d(x: f64) -> ([f64; 3], [f64; 3]) {
    (
        [2.0 * (x - 0.5) * (x - 1.0), -4.0 * x * (x - 1.0), 2.0 * x * (x - 0.5)],
        [4.0 * x - 3.0, 4.0 - 8.0 * x, 4.0 * x - 1.0],
    )
}

/// Values and reference gradients of the 9 biquadratic functions.
pub fn q2(xi: [f64; 2]) -> ([f64; 9], [[f64; 2]; 9]) {
    let (a, da) = q2_1d(xi[0]);
    let (b, db) = q2_1d(xi[1]);
    let mut v = [0.0; 9];
    let mut g = [[0.0; 2]; 9];
    for j in 0..3 {
        for i in 0..3 {
            v[i + 3 * j] = a[i] * b[j];
            g[i + 3 * j] = [da[i] * b[j], a[i] * db[j]];
        }
    }
    (v, g)
}

/// Values and reference gradients of the 4 bilinear functions.
pub fn q1(xi: [f64; 2]) -> ([f64; 4], [[f64; 2]; 4]) {
    let a = [1.0 - xi[0], xi[0]];
    let b = [1.0 - xi[1], xi[1]];
    let mut v = [0.0; 4];
    let mut g = [[0.0; 2]; 4];
    for j in 0..2 {
        for i in 0..2 {
            v[i + 2 * j] = a[i] * b[j];
            g[i + 2 * j] = [(2.0 * i as f64 - 1.0) * b[j], a[i] * (2.0 * j as f64 - 1.0)];
        }
    }
    (v, g)
}

/// Maps reference gradients to physical gradients with `J^{-T}`.
pub fn physical_gradients<const N: usize>(mp: &MapPoint, g: &[[f64; 2]; N]) -> [[f64; 2]; N] {
    let [[a, b], [c, d]] = mp.jac;
    let inv_det = 1.0 / (a * d - b * c);
    let mut out = [[0.0; 2]; N];
    for (o, r) in out.iter_mut().zip(g) {
        o[0] = (d * r[0] - c * r[1]) * inv_det;
        o[1] = (-b * r[0] + a * r[1]) * inv_det;
    }
    out
}

/// Shape data at one quadrature point of one cell.
#[derive(Clone, Copy, Debug)]
pub struct PointData {
    pub x: [f64; 2],
    /// Quadrature weight times the Jacobian determinant.
    pub dx: f64,
    pub phi: [f64; 9],
    pub dphi: [[f64; 2]; 9],
    pub psi: [f64; 4],
}

impl PointData {
    pub fn new(mp: &MapPoint, xi: [f64; 2], weight: f64) -> Self {
        let (phi, g) = q2(xi);
        let (psi, _) = q1(xi);
        Self { x: mp.x, dx: weight * mp.det, phi, dphi: physical_gradients(mp, &g), psi }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_of_unity_and_nodality() {
        for xi in [[0.1, 0.7], [0.5, 0.5], [0.93, 0.02]] {
            let (v, g) = q2(xi);
            assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            assert!(g.iter().map(|d| d[0]).sum::<f64>().abs() < 1e-13);
            let (w, _) = q1(xi);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        }
        for j in 0..3 {
            for i in 0..3 {
                let (v, _) = q2([0.5 * i as f64, 0.5 * j as f64]);
                for (k, vk) in v.iter().enumerate() {
                    let expect = if k == i + 3 * j { 1.0 } else { 0.0 };
                    assert!((vk - expect).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let xi = [0.31, 0.77];
        let h = 1e-6;
        let (_, g) = q2(xi);
        let (vp, _) = q2([xi[0] + h, xi[1]]);
        let (vm, _) = q2([xi[0] - h, xi[1]]);
        for k in 0..9 {
            assert!(((vp[k] - vm[k]) / (2.0 * h) - g[k][0]).abs() < 1e-8);
        }
        let (_, g1) = q1(xi);
        let (wp, _) = q1([xi[0], xi[1] + h]);
        let (wm, _) = q1([xi[0], xi[1] - h]);
        for k in 0..4 {
            assert!(((wp[k] - wm[k]) / (2.0 * h) - g1[k][1]).abs() < 1e-8);
        }
    }
}
