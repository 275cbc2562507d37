//! Small fixed-size linear algebra and the geometric predicates used by the
//! rod, film and topology modules.

use std::ops::{Add, AddAssign, Div, Index, Mul, Neg, Sub, SubAssign};

use crate::scalar::Real;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Vec3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> Vec3<T> {
    #[inline]
    pub const fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }

    #[inline]
    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero(), T::zero())
    }

    #[inline]
    pub fn from_f64(v: [f64; 3]) -> Self {
        Self::new(T::lit(v[0]), T::lit(v[1]), T::lit(v[2]))
    }

    #[inline]
    pub fn e1() -> Self {
        Self::new(T::one(), T::zero(), T::zero())
    }

    #[inline]
    pub fn e2() -> Self {
        Self::new(T::zero(), T::one(), T::zero())
    }

    #[inline]
    pub fn e3() -> Self {
        Self::new(T::zero(), T::zero(), T::one())
    }

    #[inline]
    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn cross(self, o: Self) -> Self {
        Self::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    #[inline]
    pub fn norm2(self) -> T {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> T {
        self.norm2().sqrt()
    }

    #[inline]
    pub fn dist(self, o: Self) -> T {
        (self - o).norm()
    }

    /// Unit vector in the same direction; the zero vector maps to itself.
    #[inline]
    pub fn normalized(self) -> Self {
        let n = self.norm();
        if n > T::zero() {
            self / n
        } else {
            self
        }
    }

    #[inline]
    pub fn max_abs(self) -> T {
        self.x.abs().max(self.y.abs()).max(self.z.abs())
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    #[inline]
    pub fn lerp(self, o: Self, u: T) -> Self {
        self + (o - self) * u
    }

    pub fn to_array(self) -> [T; 3] {
        [self.x, self.y, self.z]
    }

    pub fn cast<U: Real>(self) -> Vec3<U> {
        Vec3::new(
            U::lit(self.x.to_f64_lossy()),
            U::lit(self.y.to_f64_lossy()),
            U::lit(self.z.to_f64_lossy()),
        )
    }

    /// Rotates `self` about the unit `axis` by `angle` (Rodrigues formula).
    #[inline]
    pub fn rotated(self, axis: Self, angle: T) -> Self {
        let (s, c) = angle.sin_cos();
        self * c + axis.cross(self) * s + axis * (axis.dot(self) * (T::one() - c))
    }

    /// Any unit vector orthogonal to `self` (which must be nonzero).
    pub fn any_orthogonal(self) -> Self {
        let a = if self.x.abs() <= self.y.abs() && self.x.abs() <= self.z.abs() {
            Self::e1()
        } else if self.y.abs() <= self.z.abs() {
            Self::e2()
        } else {
            Self::e3()
        };
        self.cross(a).normalized()
    }
}

impl<T: Real> Add for Vec3<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<T: Real> Sub for Vec3<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<T: Real> Neg for Vec3<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y, -self.z)
    }
}

impl<T: Real> Mul<T> for Vec3<T> {
    type Output = Self;
    #[inline]
    fn mul(self, s: T) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }
}

impl<T: Real> Div<T> for Vec3<T> {
    type Output = Self;
    #[inline]
    fn div(self, s: T) -> Self {
        Self::new(self.x / s, self.y / s, self.z / s)
    }
}

impl<T: Real> AddAssign for Vec3<T> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<T: Real> SubAssign for Vec3<T> {
    #[inline]
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

impl<T: Real> Index<usize> for Vec3<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        match i {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("Vec3 index {i} out of range"),
        }
    }
}

/// 3x3 matrix stored by columns.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat3<T> {
    pub cols: [Vec3<T>; 3],
}

impl<T: Real> Mat3<T> {
    pub fn from_cols(a: Vec3<T>, b: Vec3<T>, c: Vec3<T>) -> Self {
        Self { cols: [a, b, c] }
    }

    pub fn identity() -> Self {
        Self::from_cols(Vec3::e1(), Vec3::e2(), Vec3::e3())
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.cols[c][r]
    }

    pub fn transpose(&self) -> Self {
        let row = |r| Vec3::new(self.get(r, 0), self.get(r, 1), self.get(r, 2));
        Self::from_cols(row(0), row(1), row(2))
    }

    pub fn mul_vec(&self, v: Vec3<T>) -> Vec3<T> {
        self.cols[0] * v.x + self.cols[1] * v.y + self.cols[2] * v.z
    }

    pub fn mul_mat(&self, o: &Self) -> Self {
        Self::from_cols(
            self.mul_vec(o.cols[0]),
            self.mul_vec(o.cols[1]),
            self.mul_vec(o.cols[2]),
        )
    }

    pub fn trace(&self) -> T {
        self.get(0, 0) + self.get(1, 1) + self.get(2, 2)
    }

    /// Rotation vector (axis times angle) of a rotation matrix.
    pub fn rotation_log(&self) -> Vec3<T> {
        let skew = Vec3::new(
            self.get(2, 1) - self.get(1, 2),
            self.get(0, 2) - self.get(2, 0),
            self.get(1, 0) - self.get(0, 1),
        ) * T::half();
        let s = skew.norm();
        let c = (self.trace() - T::one()) * T::half();
        let angle = s.atan2(c);
        if s > T::tol(1e-7) {
            return skew * (angle / s);
        }
        if c > T::zero() {
            // near identity: angle ~ s
            return skew;
        }
        // Near a half turn: recover the axis from the symmetric part.
        let diag = [self.get(0, 0), self.get(1, 1), self.get(2, 2)];
        let k = (0..3)
            .max_by(|&a, &b| diag[a].partial_cmp(&diag[b]).unwrap())
            .unwrap();
        let mut axis = Vec3::new(
            self.get(0, k) + self.get(k, 0),
            self.get(1, k) + self.get(k, 1),
            self.get(2, k) + self.get(k, 2),
        );
        axis = axis.normalized();
        if skew.dot(axis) < T::zero() {
            axis = -axis;
        }
        axis * angle
    }
}

/// Closest points between segments `[p0,p1]` and `[q0,q1]`; returns the
/// distance and the two segment parameters.
pub fn segment_segment_distance<T: Real>(
    p0: Vec3<T>,
    p1: Vec3<T>,
    q0: Vec3<T>,
    q1: Vec3<T>,
) -> (T, T, T) {
    let d1 = p1 - p0;
    let d2 = q1 - q0;
    let r = p0 - q0;
    let a = d1.norm2();
    let e = d2.norm2();
    let f = d2.dot(r);
    let zero = T::zero();
    let one = T::one();
    let tiny = T::epsilon() * T::epsilon();
    let (s, t);
    if a <= tiny && e <= tiny {
        return (r.norm(), zero, zero);
    }
    if a <= tiny {
        s = zero;
        t = (f / e).max(zero).min(one);
    } else {
        let c = d1.dot(r);
        if e <= tiny {
            t = zero;
            s = (-c / a).max(zero).min(one);
        } else {
            let b = d1.dot(d2);
            let denom = a * e - b * b;
            let mut s0 = if denom > tiny * a * e {
                ((b * f - c * e) / denom).max(zero).min(one)
            } else {
                zero
            };
            let mut t0 = (b * s0 + f) / e;
            if t0 < zero {
                t0 = zero;
                s0 = (-c / a).max(zero).min(one);
            } else if t0 > one {
                t0 = one;
                s0 = ((b - c) / a).max(zero).min(one);
            }
            s = s0;
            t = t0;
        }
    }
    let cp = p0 + d1 * s;
    let cq = q0 + d2 * t;
    (cp.dist(cq), s, t)
}

/// Distance from `p` to the segment `[a,b]`.
pub fn point_segment_distance<T: Real>(p: Vec3<T>, a: Vec3<T>, b: Vec3<T>) -> T {
    let ab = b - a;
    let l2 = ab.norm2();
    if l2 <= T::zero() {
        return p.dist(a);
    }
    let u = ((p - a).dot(ab) / l2).max(T::zero()).min(T::one());
    p.dist(a + ab * u)
}

pub fn triangle_area<T: Real>(a: Vec3<T>, b: Vec3<T>, c: Vec3<T>) -> T {
    (b - a).cross(c - a).norm() * T::half()
}

/// Segment/triangle intersection test with a relative thickening `eps` on the
/// barycentric and segment parameters. Coplanar configurations are resolved
/// by an in-plane overlap test.
pub fn segment_intersects_triangle<T: Real>(
    p0: Vec3<T>,
    p1: Vec3<T>,
    a: Vec3<T>,
    b: Vec3<T>,
    c: Vec3<T>,
    eps: T,
) -> bool {
    let dir = p1 - p0;
    let e1 = b - a;
    let e2 = c - a;
    let n = e1.cross(e2);
    let nn = n.norm();
    if nn <= T::zero() {
        return false;
    }
    let scale = dir.norm() * nn;
    let h = dir.cross(e2);
    let det = e1.dot(h);
    let one = T::one();
    if det.abs() > eps * scale {
        let inv = one / det;
        let s = p0 - a;
        let u = s.dot(h) * inv;
        if u < -eps || u > one + eps {
            return false;
        }
        let q = s.cross(e1);
        let v = dir.dot(q) * inv;
        if v < -eps || u + v > one + eps {
            return false;
        }
        let t = e2.dot(q) * inv;
        return t >= -eps && t <= one + eps;
    }
    // Segment parallel to the plane: only an in-plane overlap counts.
    let unit = n / nn;
    let size = e1.norm().max(e2.norm()).max(dir.norm());
    let off0 = (p0 - a).dot(unit);
    let off1 = (p1 - a).dot(unit);
    if off0.abs() > eps * size || off1.abs() > eps * size {
        return false;
    }
    // Project onto the dominant plane.
    let ax = if unit.x.abs() >= unit.y.abs() && unit.x.abs() >= unit.z.abs() {
        0
    } else if unit.y.abs() >= unit.z.abs() {
        1
    } else {
        2
    };
    let proj = |v: Vec3<T>| -> [T; 2] {
        match ax {
            0 => [v.y, v.z],
            1 => [v.z, v.x],
            _ => [v.x, v.y],
        }
    };
    let (pa, pb, pc) = (proj(a), proj(b), proj(c));
    let (q0, q1) = (proj(p0), proj(p1));
    if point_in_triangle_2d(q0, pa, pb, pc, eps) || point_in_triangle_2d(q1, pa, pb, pc, eps) {
        return true;
    }
    segments_intersect_2d(q0, q1, pa, pb, eps)
        || segments_intersect_2d(q0, q1, pb, pc, eps)
        || segments_intersect_2d(q0, q1, pc, pa, eps)
}

#[inline]
pub fn orient2d<T: Real>(a: [T; 2], b: [T; 2], c: [T; 2]) -> T {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn point_in_triangle_2d<T: Real>(p: [T; 2], a: [T; 2], b: [T; 2], c: [T; 2], eps: T) -> bool {
    let area = orient2d(a, b, c);
    if area == T::zero() {
        return false;
    }
    let w0 = orient2d(b, c, p) / area;
    let w1 = orient2d(c, a, p) / area;
    let w2 = orient2d(a, b, p) / area;
    w0 >= -eps && w1 >= -eps && w2 >= -eps
}

fn segments_intersect_2d<T: Real>(p0: [T; 2], p1: [T; 2], q0: [T; 2], q1: [T; 2], eps: T) -> bool {
    let d1 = [p1[0] - p0[0], p1[1] - p0[1]];
    let d2 = [q1[0] - q0[0], q1[1] - q0[1]];
    let den = d1[0] * d2[1] - d1[1] * d2[0];
    let scale = (d1[0].hypot(d1[1])) * (d2[0].hypot(d2[1]));
    if den.abs() <= eps * scale {
        return false;
    }
    let r = [q0[0] - p0[0], q0[1] - p0[1]];
    let s = (r[0] * d2[1] - r[1] * d2[0]) / den;
    let t = (r[0] * d1[1] - r[1] * d1[0]) / den;
    s >= -eps && s <= T::one() + eps && t >= -eps && t <= T::one() + eps
}

/// Solves the dense system `a x = b` in place by Gaussian elimination with
/// partial pivoting. Returns `None` for a singular matrix.
pub fn solve_dense<T: Real>(mut a: Vec<Vec<T>>, mut b: Vec<T>) -> Option<Vec<T>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())?;
        if a[piv][col].abs() <= T::min_positive_value() {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f != T::zero() {
                for k in col..n {
                    let v = a[col][k];
                    a[row][k] -= f * v;
                }
                let v = b[col];
                b[row] -= f * v;
            }
        }
    }
    let mut x = vec![T::zero(); n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    type V = Vec3<f64>;

    #[test]
    fn rotation_preserves_length_and_turns_by_angle() {
        let v = V::new(1.0, 2.0, -0.5);
        let axis = V::new(0.3, -0.2, 0.9).normalized();
        let r = v.rotated(axis, 1.1);
        assert!((r.norm() - v.norm()).abs() < 1e-14);
        let back = r.rotated(axis, -1.1);
        assert!(back.dist(v) < 1e-14);
    }

    #[test]
    fn rotation_log_recovers_axis_angle() {
        let axis = V::new(1.0, 1.0, 0.0).normalized();
        for &angle in &[1e-9, 0.3, 2.0, 3.1] {
            let m = Mat3::from_cols(
                V::e1().rotated(axis, angle),
                V::e2().rotated(axis, angle),
                V::e3().rotated(axis, angle),
            );
            let w = m.rotation_log();
            assert!(w.dist(axis * angle) < 1e-9, "{angle}: {w:?}");
        }
    }

    #[test]
    fn segment_distance_cases() {
        let (d, _, _) = segment_segment_distance(
            V::new(0.0, 0.0, 0.0),
            V::new(1.0, 0.0, 0.0),
            V::new(0.5, 1.0, 0.0),
            V::new(0.5, 1.0, 3.0),
        );
        assert!((d - 1.0).abs() < 1e-15);
        // parallel
        let (d, _, _) = segment_segment_distance(
            V::new(0.0, 0.0, 0.0),
            V::new(1.0, 0.0, 0.0),
            V::new(0.2, 0.3, 0.0),
            V::new(2.0, 0.3, 0.0),
        );
        assert!((d - 0.3).abs() < 1e-15);
        // skew crossing
        let (d, _, _) = segment_segment_distance(
            V::new(-1.0, 0.0, 0.0),
            V::new(1.0, 0.0, 0.0),
            V::new(0.0, -1.0, 0.25),
            V::new(0.0, 1.0, 0.25),
        );
        assert!((d - 0.25).abs() < 1e-15);
    }

    #[test]
    fn segment_triangle_transversal_and_coplanar() {
        let a = V::new(0.0, 0.0, 0.0);
        let b = V::new(1.0, 0.0, 0.0);
        let c = V::new(0.0, 1.0, 0.0);
        let eps = 1e-12;
        assert!(segment_intersects_triangle(
            V::new(0.2, 0.2, -1.0),
            V::new(0.2, 0.2, 1.0),
            a,
            b,
            c,
            eps
        ));
        assert!(!segment_intersects_triangle(
            V::new(0.8, 0.8, -1.0),
            V::new(0.8, 0.8, 1.0),
            a,
            b,
            c,
            eps
        ));
        // segment stops short of the plane
        assert!(!segment_intersects_triangle(
            V::new(0.2, 0.2, 1.0),
            V::new(0.2, 0.2, 0.5),
            a,
            b,
            c,
            eps
        ));
        // coplanar, crossing the triangle
        assert!(segment_intersects_triangle(
            V::new(-1.0, 0.2, 0.0),
            V::new(2.0, 0.2, 0.0),
            a,
            b,
            c,
            eps
        ));
        // coplanar, outside
        assert!(!segment_intersects_triangle(
            V::new(-1.0, 2.0, 0.0),
            V::new(2.0, 2.0, 0.0),
            a,
            b,
            c,
            eps
        ));
    }

    #[test]
    fn dense_solve() {
        let a = vec![vec![2.0, 1.0, 0.0], vec![1.0, 3.0, 1.0], vec![0.0, 1.0, 4.0]];
        let x = solve_dense(a.clone(), vec![1.0, 2.0, 3.0]).unwrap();
        for r in 0..3 {
            let v: f64 = (0..3).map(|k| a[r][k] * x[k]).sum();
            assert!((v - [1.0, 2.0, 3.0][r]).abs() < 1e-14);
        }
        assert!(solve_dense(vec![vec![1.0, 2.0], vec![2.0, 4.0]], vec![1.0, 1.0]).is_none());
    }
}
