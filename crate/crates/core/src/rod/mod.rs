//! Rod kinematics: densities, clamping, frame reconstruction and the
//! configuration map of the thick loop.
//!
//! The flexural densities `kappa1`, `kappa2` and the twist density `omega`
//! are piecewise constant on a uniform grid of `[0, L]`. The frame ODE
//!
//! ```text
//! x' = t,   t' = kappa1 d + kappa2 (t x d),   d' = omega (t x d) - kappa1 t
//! ```
//!
//! has, on each segment, the constant Darboux vector
//! `u = omega t - kappa2 d + kappa1 (t x d)`, so every segment is advanced by
//! an exact rotation about `u` and the midline by the matching helical arc.

mod section;
mod tube;

pub use section::CrossSection;
pub use tube::{build_tube, normal_plane_root, surface_point_on, BoundaryTag, NormalCoords, TubeMesh};

use crate::error::{KpError, Result};
use crate::geom::Vec3;
use crate::scalar::Real;

/// Piecewise-constant flexural and twist densities on a uniform grid.
#[derive(Clone, Debug, PartialEq)]
pub struct RodDensities<T> {
    pub kappa1: Vec<T>,
    pub kappa2: Vec<T>,
    pub omega: Vec<T>,
    pub length: T,
}

impl<T: Real> RodDensities<T> {
    pub fn new(kappa1: Vec<T>, kappa2: Vec<T>, omega: Vec<T>, length: T) -> Result<Self> {
        let dens = Self {
            kappa1,
            kappa2,
            omega,
            length,
        };
        dens.validate()?;
        Ok(dens)
    }

    pub fn uniform(n: usize, length: T, kappa1: T, kappa2: T, omega: T) -> Result<Self> {
        Self::new(vec![kappa1; n], vec![kappa2; n], vec![omega; n], length)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.kappa1.len();
        if n < 3 {
            return Err(KpError::InvalidInput(format!(
                "need at least 3 segments, got {n}"
            )));
        }
        if self.kappa2.len() != n || self.omega.len() != n {
            return Err(KpError::InvalidInput(
                "density arrays differ in length".into(),
            ));
        }
        if !(self.length > T::zero()) || !self.length.is_finite() {
            return Err(KpError::InvalidInput(format!(
                "length must be positive, got {}",
                self.length
            )));
        }
        let all = self.kappa1.iter().chain(&self.kappa2).chain(&self.omega);
        if all.clone().any(|v| !v.is_finite()) {
            return Err(KpError::InvalidInput("non-finite density".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn segments(&self) -> usize {
        self.kappa1.len()
    }

    #[inline]
    pub fn segment_length(&self) -> T {
        self.length / T::from_usize(self.segments())
    }

    /// Body-frame Darboux components `(kappa1, kappa2, omega)` of segment `i`.
    #[inline]
    pub fn segment(&self, i: usize) -> [T; 3] {
        [self.kappa1[i], self.kappa2[i], self.omega[i]]
    }

    /// Splits every segment into `factor` equal pieces carrying the same values.
    pub fn refined(&self, factor: usize) -> Self {
        let rep = |v: &[T]| v.iter().flat_map(|&x| std::iter::repeat(x).take(factor)).collect();
        Self {
            kappa1: rep(&self.kappa1),
            kappa2: rep(&self.kappa2),
            omega: rep(&self.omega),
            length: self.length,
        }
    }

    /// Flattens to `[kappa1.., kappa2.., omega..]`.
    pub fn to_vector(&self) -> Vec<T> {
        let mut v = Vec::with_capacity(3 * self.segments());
        v.extend_from_slice(&self.kappa1);
        v.extend_from_slice(&self.kappa2);
        v.extend_from_slice(&self.omega);
        v
    }

    pub fn from_vector(v: &[T], length: T) -> Self {
        let n = v.len() / 3;
        Self {
            kappa1: v[..n].to_vec(),
            kappa2: v[n..2 * n].to_vec(),
            omega: v[2 * n..].to_vec(),
            length,
        }
    }

    /// Pointwise curvature magnitude `sqrt(kappa1^2 + kappa2^2)` maximized over segments.
    pub fn max_curvature(&self) -> T {
        self.kappa1
            .iter()
            .zip(&self.kappa2)
            .map(|(a, b)| a.hypot(*b))
            .fold(T::zero(), T::max)
    }
}

/// Clamping parameters: base point, initial tangent and director.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClampingParams<T> {
    pub x0: Vec3<T>,
    pub t0: Vec3<T>,
    pub d0: Vec3<T>,
}

impl<T: Real> ClampingParams<T> {
    pub fn new(x0: Vec3<T>, t0: Vec3<T>, d0: Vec3<T>) -> Result<Self> {
        let tol = T::tol(1e-12);
        if !(x0.is_finite() && t0.is_finite() && d0.is_finite()) {
            return Err(KpError::InvalidInput("non-finite clamping parameter".into()));
        }
        if (t0.norm() - T::one()).abs() > tol || (d0.norm() - T::one()).abs() > tol {
            return Err(KpError::InvalidInput("t0 and d0 must be unit vectors".into()));
        }
        if t0.dot(d0).abs() > tol {
            return Err(KpError::InvalidInput("t0 and d0 must be orthogonal".into()));
        }
        Ok(Self { x0, t0, d0 })
    }

    /// Origin, tangent `e1`, director `e2`.
    pub fn standard() -> Self {
        Self {
            x0: Vec3::zero(),
            t0: Vec3::e1(),
            d0: Vec3::e2(),
        }
    }
}

/// Degrees of freedom of the loop: shape densities plus clamping.
#[derive(Clone, Debug, PartialEq)]
pub struct RodState<T> {
    pub densities: RodDensities<T>,
    pub clamp: ClampingParams<T>,
}

impl<T: Real> RodState<T> {
    pub fn new(densities: RodDensities<T>, clamp: ClampingParams<T>) -> Result<Self> {
        densities.validate()?;
        ClampingParams::new(clamp.x0, clamp.t0, clamp.d0)?;
        Ok(Self { densities, clamp })
    }

    #[inline]
    pub fn length(&self) -> T {
        self.densities.length
    }

    #[inline]
    pub fn segments(&self) -> usize {
        self.densities.segments()
    }

    pub fn with_densities(&self, densities: RodDensities<T>) -> Self {
        Self {
            densities,
            clamp: self.clamp,
        }
    }
}

/// Discretized midline with its orthonormal frame `(t, d, t x d)` at the
/// `N + 1` grid nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct FramedCurve<T> {
    pub nodes: Vec<Vec3<T>>,
    pub tangents: Vec<Vec3<T>>,
    pub directors: Vec<Vec3<T>>,
    pub densities: RodDensities<T>,
}

/// Advances a frame along one segment by arclength `sigma` with constant
/// body Darboux components `c = (kappa1, kappa2, omega)`.
#[inline]
pub(crate) fn advance<T: Real>(
    x: Vec3<T>,
    t: Vec3<T>,
    d: Vec3<T>,
    c: [T; 3],
    sigma: T,
) -> (Vec3<T>, Vec3<T>, Vec3<T>) {
    let b = t.cross(d);
    let u = t * c[2] - d * c[1] + b * c[0];
    let k = u.norm();
    if k == T::zero() || sigma == T::zero() {
        return (x + t * sigma, t, d);
    }
    let axis = u / k;
    let theta = k * sigma;
    let (s, _) = theta.sin_cos();
    let half = (theta * T::half()).sin();
    let t_par = axis * axis.dot(t);
    let t_perp = t - t_par;
    let x1 = x + t_par * sigma + t_perp * (s / k) + axis.cross(t) * (T::two() * half * half / k);
    (x1, t.rotated(axis, theta), d.rotated(axis, theta))
}

#[inline]
pub(crate) fn orthonormalize<T: Real>(t: Vec3<T>, d: Vec3<T>) -> (Vec3<T>, Vec3<T>) {
    let t = t.normalized();
    let d = (d - t * t.dot(d)).normalized();
    (t, d)
}

/// Reconstructs the midline and director field from the densities and the
/// clamping parameters.
pub fn integrate_frame<T: Real>(state: &RodState<T>) -> FramedCurve<T> {
    let dens = &state.densities;
    let n = dens.segments();
    let h = dens.segment_length();
    let mut nodes = Vec::with_capacity(n + 1);
    let mut tangents = Vec::with_capacity(n + 1);
    let mut directors = Vec::with_capacity(n + 1);
    let (mut x, (mut t, mut d)) = (state.clamp.x0, orthonormalize(state.clamp.t0, state.clamp.d0));
    nodes.push(x);
    tangents.push(t);
    directors.push(d);
    for i in 0..n {
        let (x1, t1, d1) = advance(x, t, d, dens.segment(i), h);
        let (t1, d1) = orthonormalize(t1, d1);
        x = x1;
        t = t1;
        d = d1;
        nodes.push(x);
        tangents.push(t);
        directors.push(d);
    }
    FramedCurve {
        nodes,
        tangents,
        directors,
        densities: dens.clone(),
    }
}

/// End frame `(x(L), t(L), d(L))` without storing the nodes.
pub fn integrate_end<T: Real>(state: &RodState<T>) -> (Vec3<T>, Vec3<T>, Vec3<T>) {
    let dens = &state.densities;
    let h = dens.segment_length();
    let (mut x, (mut t, mut d)) = (state.clamp.x0, orthonormalize(state.clamp.t0, state.clamp.d0));
    for i in 0..dens.segments() {
        let (x1, t1, d1) = advance(x, t, d, dens.segment(i), h);
        x = x1;
        (t, d) = orthonormalize(t1, d1);
    }
    (x, t, d)
}

impl<T: Real> FramedCurve<T> {
    #[inline]
    pub fn segments(&self) -> usize {
        self.densities.segments()
    }

    #[inline]
    pub fn length(&self) -> T {
        self.densities.length
    }

    #[inline]
    pub fn segment_length(&self) -> T {
        self.densities.segment_length()
    }

    #[inline]
    pub fn binormal(&self, i: usize) -> Vec3<T> {
        self.tangents[i].cross(self.directors[i])
    }

    /// Distance between the two ends of the midline.
    pub fn closure_gap(&self) -> T {
        self.nodes[0].dist(*self.nodes.last().unwrap())
    }

    /// Frame at local arclength `sigma` inside segment `i`.
    #[inline]
    pub fn frame_in_segment(&self, i: usize, sigma: T) -> (Vec3<T>, Vec3<T>, Vec3<T>) {
        let (x, t, d) = advance(
            self.nodes[i],
            self.tangents[i],
            self.directors[i],
            self.densities.segment(i),
            sigma,
        );
        let (t, d) = orthonormalize(t, d);
        (x, t, d)
    }

    /// Locates arclength `s` as (segment, local offset).
    pub fn locate(&self, s: T) -> Result<(usize, T)> {
        let l = self.length();
        let slack = T::tol(1e-12) * l;
        if !(s >= -slack && s <= l + slack) {
            return Err(KpError::OutOfRange {
                s: s.to_f64_lossy(),
                length: l.to_f64_lossy(),
            });
        }
        let s = s.max(T::zero()).min(l);
        let h = self.segment_length();
        let n = self.segments();
        let i = (s / h).floor().to_usize().unwrap_or(0).min(n - 1);
        Ok((i, s - h * T::from_usize(i)))
    }

    /// Midline point, tangent and director at arclength `s`.
    pub fn frame_at(&self, s: T) -> Result<(Vec3<T>, Vec3<T>, Vec3<T>)> {
        let (i, sigma) = self.locate(s)?;
        Ok(self.frame_in_segment(i, sigma))
    }

    /// Midpoint of segment `i` with its frame.
    pub fn segment_midpoint(&self, i: usize) -> (Vec3<T>, Vec3<T>, Vec3<T>) {
        self.frame_in_segment(i, self.segment_length() * T::half())
    }

    /// Nodes `0..N` as a closed polyline (the duplicate end node dropped).
    pub fn closed_polyline(&self) -> Vec<Vec3<T>> {
        self.nodes[..self.segments()].to_vec()
    }
}

/// The configuration map `p(s, z1, z2) = x(s) + z1 d(s) + z2 t(s) x d(s)`.
pub fn configuration_map<T: Real>(curve: &FramedCurve<T>, s: T, z1: T, z2: T) -> Result<Vec3<T>> {
    let (x, t, d) = curve.frame_at(s)?;
    Ok(x + d * z1 + t.cross(d) * z2)
}

/// Closure and gluing residuals.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClosureResiduals<T> {
    pub r_x: T,
    pub r_t: T,
    pub r_d: T,
}

impl<T: Real> ClosureResiduals<T> {
    pub fn max(&self) -> T {
        self.r_x.max(self.r_t).max(self.r_d)
    }
}

/// Signed angle from `from` to `to` about `axis`, both projected on the
/// plane orthogonal to `axis`.
pub fn signed_angle<T: Real>(from: Vec3<T>, to: Vec3<T>, axis: Vec3<T>) -> T {
    from.cross(to).dot(axis).atan2(from.dot(to))
}

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_angle<T: Real>(a: T) -> T {
    let tau = T::TAU();
    let mut w = a - tau * (a / tau).round();
    if w <= -T::PI() {
        w += tau;
    }
    w
}

pub fn closure_residuals<T: Real>(
    curve: &FramedCurve<T>,
    clamp: &ClampingParams<T>,
    glue_angle: T,
) -> ClosureResiduals<T> {
    let n = curve.segments();
    let r_x = curve.nodes[n].dist(clamp.x0);
    let r_t = curve.tangents[n].dist(clamp.t0);
    let angle = signed_angle(clamp.d0, curve.directors[n], clamp.t0);
    let r_d = wrap_angle(angle - glue_angle).abs();
    ClosureResiduals { r_x, r_t, r_d }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{PI, TAU};

    fn state(k1: f64, k2: f64, w: f64, n: usize, l: f64) -> RodState<f64> {
        RodState::new(
            RodDensities::uniform(n, l, k1, k2, w).unwrap(),
            ClampingParams::standard(),
        )
        .unwrap()
    }

    #[test]
    fn straight_rod_is_a_line() {
        let c = integrate_frame(&state(0.0, 0.0, 0.0, 10, 1.0));
        assert!(c.nodes[10].dist(Vec3::e1()) < 1e-15);
        for i in 0..=10 {
            assert_eq!(c.tangents[i], Vec3::e1());
            assert_eq!(c.directors[i], Vec3::e2());
        }
    }

    #[test]
    fn constant_kappa1_closes_into_a_circle() {
        let c = integrate_frame(&state(TAU, 0.0, 0.0, 200, 1.0));
        assert!(c.closure_gap() <= 1e-9);
        assert!(c.tangents[200].dist(c.tangents[0]) <= 1e-9);
        // radius 1/2pi, centre along d0
        let centre = Vec3::new(0.0, 1.0 / TAU, 0.0);
        for p in &c.nodes {
            assert!(((*p - centre).norm() - 1.0 / TAU).abs() < 1e-12);
        }
    }

    #[test]
    fn full_twist_returns_director() {
        let c = integrate_frame(&state(0.0, 0.0, TAU, 50, 1.0));
        assert!(c.nodes[50].dist(Vec3::e1()) < 1e-14);
        assert!(c.directors[50].dist(c.directors[0]) <= 1e-9);
        let r = closure_residuals(&c, &ClampingParams::standard(), 0.0);
        assert!(r.r_d <= 1e-9);
        assert!((r.r_x - 1.0).abs() < 1e-14);
    }

    #[test]
    fn half_twist_gives_pi_glue() {
        let c = integrate_frame(&state(0.0, 0.0, PI, 20, 1.0));
        let r = closure_residuals(&c, &ClampingParams::standard(), PI);
        assert!(r.r_d < 1e-12);
        let r0 = closure_residuals(&c, &ClampingParams::standard(), 0.0);
        assert!((r0.r_d - PI).abs() < 1e-12);
    }

    #[test]
    fn configuration_map_examples() {
        let straight = integrate_frame(&state(0.0, 0.0, 0.0, 8, 1.0));
        let p = configuration_map(&straight, 0.5, 0.1, -0.2).unwrap();
        assert!(p.dist(Vec3::new(0.5, 0.1, -0.2)) < 1e-15);
        let circle = integrate_frame(&state(TAU, 0.0, 0.0, 64, 1.0));
        let p = configuration_map(&circle, 0.0, 0.01, 0.0).unwrap();
        assert!(p.dist(Vec3::new(0.0, 0.01, 0.0)) < 1e-15);
        let p = configuration_map(&circle, 0.3, 0.0, 0.0).unwrap();
        let (x, _, _) = circle.frame_at(0.3).unwrap();
        assert_eq!(p, x);
        assert!(configuration_map(&circle, 1.5, 0.0, 0.0).is_err());
        assert!(configuration_map(&circle, -0.1, 0.0, 0.0).is_err());
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        assert!(RodDensities::uniform(2, 1.0, 0.0, 0.0, 0.0).is_err());
        assert!(RodDensities::uniform(5, 0.0, 0.0, 0.0, 0.0).is_err());
        assert!(RodDensities::new(vec![0.0; 4], vec![0.0; 4], vec![f64::NAN; 4], 1.0).is_err());
        assert!(ClampingParams::new(Vec3::zero(), Vec3::e1(), Vec3::new(0.1, 1.0, 0.0)).is_err());
        assert!(ClampingParams::new(Vec3::zero(), Vec3::e1() * 2.0, Vec3::e2()).is_err());
    }

    #[test]
    fn interpolation_is_continuous_at_nodes() {
        let st = RodState::new(
            RodDensities::new(
                vec![1.0, -2.0, 3.0, 0.5],
                vec![0.3, 0.0, -1.0, 2.0],
                vec![4.0, 1.0, 0.0, -3.0],
                2.0,
            )
            .unwrap(),
            ClampingParams::standard(),
        )
        .unwrap();
        let c = integrate_frame(&st);
        for i in 1..4 {
            let (x, t, d) = c.frame_in_segment(i - 1, c.segment_length());
            assert!(x.dist(c.nodes[i]) < 1e-14);
            assert!(t.dist(c.tangents[i]) < 1e-14);
            assert!(d.dist(c.directors[i]) < 1e-14);
        }
    }

    #[test]
    fn single_precision_circle_closes_roughly() {
        let st = RodState::<f32>::new(
            RodDensities::uniform(100, 1.0, std::f32::consts::TAU, 0.0, 0.0).unwrap(),
            ClampingParams::standard(),
        )
        .unwrap();
        let c = integrate_frame(&st);
        assert!(c.closure_gap() < 1e-5);
    }
}
