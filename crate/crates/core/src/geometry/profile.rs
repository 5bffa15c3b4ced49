//! Periodic rough-boundary profiles `η: [0, 1) → [-1, 0]`.

use std::f64::consts::PI;
use std::hash::Hasher;
use std::sync::Arc;

use super::spline::PeriodicSpline;
use super::GeometryError;

/// One cosine mode `-a (1 - cos 2πk y) / 2` of a [`ProfileKind::SumOfCosines`] profile.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CosineMode {
    pub wavenumber: u32,
    pub amplitude: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ProfileKind {
    /// `η ≡ 0`.
    Flat,
    /// `η ≡ -depth`, optionally pinned smoothly to zero on a collar of
    /// half-width `pin_collar` around `y₁ = 0`.
    ShiftedFlat { depth: f64, pin_collar: Option<f64> },
    /// `η(y) = -a (1 - cos 2πy) / 2`.
    Cosine { amplitude: f64 },
    SumOfCosines { modes: Vec<CosineMode> },
    /// Uniform samples `η(j/n)`, interpolated by a periodic cubic spline.
    CustomSamples { values: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProfileSpec {
    pub kind: ProfileKind,
    /// Shift of the profile in `y₁`, in `[0, 1)`.
    pub phase: f64,
    /// Recorded Lipschitz (John) constant. Computed from the profile when `None`.
    pub lipschitz_bound: Option<f64>,
}

impl ProfileSpec {
    pub fn new(kind: ProfileKind) -> Self {
        Self { kind, phase: 0.0, lipschitz_bound: None }
    }

    pub fn flat() -> Self {
        Self::new(ProfileKind::Flat)
    }

    pub fn cosine(amplitude: f64) -> Self {
        Self::new(ProfileKind::Cosine { amplitude })
    }

    pub fn shifted_flat(depth: f64) -> Self {
        Self::new(ProfileKind::ShiftedFlat { depth, pin_collar: None })
    }

    pub fn with_phase(mut self, phase: f64) -> Self {
        self.phase = phase;
        self
    }
}

/// Threshold on the spline curvature of custom samples.
pub const MAX_CUSTOM_CURVATURE: f64 = 1.0e4;

#[derive(Clone, Debug)]
enum Shape {
    Flat,
    Shifted { depth: f64, collar: Option<f64> },
    Cosines(Vec<CosineMode>),
    Samples(Arc<PeriodicSpline>),
}

/// A validated periodic `C²` boundary profile.
#[derive(Clone, Debug)]
pub struct BoundaryProfile {
    spec: ProfileSpec,
    shape: Shape,
    mirrored: bool,
    lipschitz: f64,
}

/// Builds a profile and checks it lies in the band `-1 ≤ η ≤ 0` and is `C²`.
pub fn make_profile(spec: &ProfileSpec) -> Result<BoundaryProfile, GeometryError> {
    if !(0.0..1.0).contains(&spec.phase) {
        return Err(GeometryError::InvalidProfile(format!(
            "phase {} outside [0, 1)",
            spec.phase
        )));
    }
    let shape = match &spec.kind {
        ProfileKind::Flat => Shape::Flat,
        ProfileKind::ShiftedFlat { depth, pin_collar } => {
            if let Some(c) = pin_collar {
                if !(*c > 0.0 && *c <= 0.5) {
                    return Err(GeometryError::InvalidProfile(format!(
                        "pin collar {c} must lie in (0, 0.5]"
                    )));
                }
            }
            Shape::Shifted { depth: *depth, collar: *pin_collar }
        }
        ProfileKind::Cosine { amplitude } => {
            Shape::Cosines(vec![CosineMode { wavenumber: 1, amplitude: *amplitude }])
        }
        ProfileKind::SumOfCosines { modes } => {
            if modes.is_empty() || modes.iter().any(|m| m.wavenumber == 0) {
                return Err(GeometryError::InvalidProfile(
                    "sum of cosines needs at least one mode with wavenumber >= 1".into(),
                ));
            }
            Shape::Cosines(modes.clone())
        }
        ProfileKind::CustomSamples { values } => {
            check_custom_samples(values)?;
            Shape::Samples(Arc::new(PeriodicSpline::new(values.clone())))
        }
    };
    let mut profile = BoundaryProfile { spec: spec.clone(), shape, mirrored: false, lipschitz: 0.0 };

    let n = 4096;
    let mut lip: f64 = 0.0;
    let mut curvature: f64 = 0.0;
    for k in 0..n {
        let y = k as f64 / n as f64;
        let [v, d1, d2] = profile.eval3(y);
        if !(-1.0 - 1e-12..=1e-12).contains(&v) {
            return Err(GeometryError::OutOfBand { y, value: v });
        }
        lip = lip.max(d1.abs());
        curvature = curvature.max(d2.abs());
    }
    if curvature > MAX_CUSTOM_CURVATURE {
        return Err(GeometryError::NotC2(format!("curvature {curvature:.3e} exceeds limit")));
    }
    profile.lipschitz = spec.lipschitz_bound.unwrap_or(lip);
    Ok(profile)
}

fn check_custom_samples(values: &[f64]) -> Result<(), GeometryError> {
    let n = values.len();
    if n < 8 {
        return Err(GeometryError::InvalidProfile("custom profile needs at least 8 samples".into()));
    }
    if let Some((j, v)) = values.iter().enumerate().find(|(_, v)| !(-1.0..=0.0).contains(*v)) {
        return Err(GeometryError::OutOfBand { y: j as f64 / n as f64, value: *v });
    }
    // A kink makes the second difference grow like 1/h: compare against the
    // same quantity on every other sample.
    let max_d2 = |step: usize| {
        let m = n / step;
        let h = step as f64 / n as f64;
        (0..m)
            .map(|j| {
                let prev = values[((j + m - 1) % m) * step];
                let next = values[((j + 1) % m) * step];
                (next - 2.0 * values[j * step] + prev).abs() / (h * h)
            })
            .fold(0.0, f64::max)
    };
    let fine = max_d2(1);
    if n % 2 == 0 && n >= 16 {
        let coarse = max_d2(2);
        if fine > 1.0 && fine > 1.5 * coarse {
            return Err(GeometryError::NotC2(format!(
                "second differences grow under refinement ({fine:.3e} vs {coarse:.3e})"
            )));
        }
    }
    if fine > MAX_CUSTOM_CURVATURE {
        return Err(GeometryError::NotC2(format!("second difference {fine:.3e} exceeds limit")));
    }
    Ok(())
}

fn smoothstep(t: f64) -> [f64; 3] {
    if t >= 1.0 {
        return [1.0, 0.0, 0.0];
    }
    let t2 = t * t;
    [
        t2 * t * (10.0 - 15.0 * t + 6.0 * t2),
        30.0 * t2 * (1.0 - t) * (1.0 - t),
        60.0 * t * (1.0 - t) * (1.0 - 2.0 * t),
    ]
}

impl BoundaryProfile {
    pub fn spec(&self) -> &ProfileSpec {
        &self.spec
    }

    pub fn is_mirrored(&self) -> bool {
        self.mirrored
    }

    /// Recorded Lipschitz constant `sup |η'|`.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// The bumpy-John constant `K`; it plays no role for graph boundaries.
    pub fn john_k(&self) -> Option<f64> {
        None
    }

    /// True when `η ≡ 0`.
    pub fn is_flat(&self) -> bool {
        match &self.shape {
            Shape::Flat => true,
            Shape::Shifted { depth, .. } => *depth == 0.0,
            Shape::Cosines(modes) => modes.iter().all(|m| m.amplitude == 0.0),
            Shape::Samples(_) => false,
        }
    }

    /// The profile reflected as `y₁ ↦ η(1 - y₁)`.
    pub fn mirrored(&self) -> Self {
        let mut out = self.clone();
        out.mirrored = !self.mirrored;
        out
    }

    pub fn eval(&self, y: f64) -> f64 {
        self.eval3(y)[0]
    }

    pub fn deriv1(&self, y: f64) -> f64 {
        self.eval3(y)[1]
    }

    pub fn deriv2(&self, y: f64) -> f64 {
        self.eval3(y)[2]
    }

    /// `[η, η', η'']` at `y`.
    pub fn eval3(&self, y: f64) -> [f64; 3] {
        let sign = if self.mirrored { -1.0 } else { 1.0 };
        let s = (sign * y - self.spec.phase).rem_euclid(1.0);
        let [v, d1, d2] = self.base(s);
        [v, sign * d1, d2]
    }

    fn base(&self, s: f64) -> [f64; 3] {
        match &self.shape {
            Shape::Flat => [0.0; 3],
            Shape::Shifted { depth, collar: None } => [-depth, 0.0, 0.0],
            Shape::Shifted { depth, collar: Some(c) } => {
                let (r, dr) = if s <= 0.5 { (s, 1.0) } else { (1.0 - s, -1.0) };
                let [v, d1, d2] = smoothstep(r / c);
                [-depth * v, -depth * d1 * dr / c, -depth * d2 / (c * c)]
            }
            Shape::Cosines(modes) => {
                let mut out = [0.0; 3];
                for m in modes {
                    let k = m.wavenumber as f64;
                    let arg = 2.0 * PI * k * s;
                    out[0] -= 0.5 * m.amplitude * (1.0 - arg.cos());
                    out[1] -= m.amplitude * PI * k * arg.sin();
                    out[2] -= 2.0 * m.amplitude * PI * PI * k * k * arg.cos();
                }
                out
            }
            Shape::Samples(spline) => spline.eval3(s),
        }
    }

    /// `min η` over a fine sampling.
    pub fn min_value(&self) -> f64 {
        (0..4096).map(|k| self.eval(k as f64 / 4096.0)).fold(0.0, f64::min)
    }

    /// Stable 64-bit fingerprint of the profile descriptor.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Fnv1a::default();
        h.write(self.descriptor().as_bytes());
        h.finish()
    }

    /// Human-readable descriptor, e.g. `cosine(a=0.25) phase=0`.
    pub fn descriptor(&self) -> String {
        let kind = match &self.spec.kind {
            ProfileKind::Flat => "flat".to_string(),
            ProfileKind::ShiftedFlat { depth, pin_collar } => match pin_collar {
                Some(c) => format!("shifted_flat(d={depth},collar={c})"),
                None => format!("shifted_flat(d={depth})"),
            },
            ProfileKind::Cosine { amplitude } => format!("cosine(a={amplitude})"),
            ProfileKind::SumOfCosines { modes } => {
                let parts: Vec<String> =
                    modes.iter().map(|m| format!("{}:{}", m.wavenumber, m.amplitude)).collect();
                format!("sum_of_cosines({})", parts.join(";"))
            }
            ProfileKind::CustomSamples { values } => {
                let mut h = Fnv1a::default();
                for v in values {
                    h.write(&v.to_bits().to_le_bytes());
                }
                format!("custom_samples(n={},hash={:016x})", values.len(), h.finish())
            }
        };
        format!(
            "{kind} phase={}{}",
            self.spec.phase,
            if self.mirrored { " mirrored" } else { "" }
        )
    }
}

/// FNV-1a, used for fingerprints that must be stable across builds.
#[derive(Clone, Copy)]
pub(crate) struct Fnv1a(u64);

impl Default for Fnv1a {
    fn default() -> Self {
        Self(0xcbf2_9ce4_8422_2325)
    }
}

impl Hasher for Fnv1a {
    fn finish(&self) -> u64 {
        self.0
    }

    fn write(&mut self, bytes: &[u8]) {
        for b in bytes {
            self.0 ^= *b as u64;
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_is_identically_zero() {
        let p = make_profile(&ProfileSpec::flat()).unwrap();
        assert_eq!(p.eval(0.37), 0.0);
        assert!(p.is_flat());
    }

    #[test]
    fn shifted_flat_without_pin_is_constant() {
        let p = make_profile(&ProfileSpec::shifted_flat(0.5)).unwrap();
        assert_eq!(p.eval(0.2), -0.5);
        assert_eq!(p.eval(0.0), -0.5);
    }

    #[test]
    fn pinned_shifted_flat_vanishes_only_at_origin() {
        let spec = ProfileSpec::new(ProfileKind::ShiftedFlat { depth: 0.5, pin_collar: Some(0.2) });
        let p = make_profile(&spec).unwrap();
        assert_eq!(p.eval(0.0), 0.0);
        assert!(p.eval(0.01) < 0.0);
        assert_eq!(p.eval(0.5), -0.5);
        assert!((p.eval(0.1) - p.eval(0.9)).abs() < 1e-15);
    }

    #[test]
    fn cosine_matches_defining_formula() {
        let p = make_profile(&ProfileSpec::cosine(0.25)).unwrap();
        assert!((p.eval(0.5) + 0.25).abs() < 1e-15);
        assert_eq!(p.eval(0.0), 0.0);
        let y: f64 = 0.3;
        let expect = -0.25 * (1.0 - (2.0 * PI * y).cos()) / 2.0;
        assert!((p.eval(y) - expect).abs() < 1e-15);
    }

    #[test]
    fn derivatives_match_centered_differences() {
        let specs = [
            ProfileSpec::cosine(0.25).with_phase(0.3),
            ProfileSpec::new(ProfileKind::SumOfCosines {
                modes: vec![
                    CosineMode { wavenumber: 1, amplitude: 0.2 },
                    CosineMode { wavenumber: 3, amplitude: 0.05 },
                ],
            }),
            ProfileSpec::new(ProfileKind::ShiftedFlat { depth: 0.3, pin_collar: Some(0.25) }),
        ];
        for spec in &specs {
            let p = make_profile(spec).unwrap();
            let mut prev_err = f64::INFINITY;
            for h in [1e-2, 5e-3, 2.5e-3] {
                let mut err: f64 = 0.0;
                for k in 0..50 {
                    let y = 0.013 + k as f64 / 50.0;
                    let fd = (p.eval(y + h) - p.eval(y - h)) / (2.0 * h);
                    err = err.max((fd - p.deriv1(y)).abs());
                }
                assert!(err < prev_err / 3.0 || err < 1e-12, "{spec:?}: {err} vs {prev_err}");
                prev_err = err;
            }
        }
    }

    #[test]
    fn rejects_profiles_outside_band() {
        assert!(matches!(
            make_profile(&ProfileSpec::cosine(1.5)),
            Err(GeometryError::OutOfBand { .. })
        ));
        assert!(make_profile(&ProfileSpec::cosine(-0.1)).is_err());
        assert!(make_profile(&ProfileSpec::shifted_flat(1.2)).is_err());
    }

    #[test]
    fn rejects_kinked_custom_samples() {
        let n = 64;
        let kinked: Vec<f64> = (0..n)
            .map(|j| {
                let y = j as f64 / n as f64;
                -0.4 * (0.5 - (y - 0.5).abs())
            })
            .collect();
        let spec = ProfileSpec::new(ProfileKind::CustomSamples { values: kinked });
        assert!(matches!(make_profile(&spec), Err(GeometryError::NotC2(_))));

        let smooth: Vec<f64> = (0..n)
            .map(|j| -0.1 * (1.0 - (2.0 * PI * j as f64 / n as f64).cos()))
            .collect();
        let spec = ProfileSpec::new(ProfileKind::CustomSamples { values: smooth });
        let p = make_profile(&spec).unwrap();
        assert!((p.eval(0.5) + 0.2).abs() < 1e-4);
    }

    #[test]
    fn mirror_reflects_argument() {
        let p = make_profile(&ProfileSpec::cosine(0.3).with_phase(0.2)).unwrap();
        let m = p.mirrored();
        for y in [0.1, 0.35, 0.8] {
            assert!((m.eval(y) - p.eval(1.0 - y)).abs() < 1e-14);
            assert!((m.deriv1(y) + p.deriv1(1.0 - y)).abs() < 1e-12);
        }
        assert_ne!(m.fingerprint(), p.fingerprint());
    }
}
