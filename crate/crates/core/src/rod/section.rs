use crate::error::{KpError, Result};
use crate::geom::orient2d;
use crate::scalar::Real;

/// Convex polygonal cross-section in the `(z1, z2)` plane spanned by the
/// director `d` and the binormal `t x d`. Vertices are stored counter-clockwise.
#[derive(Clone, Debug, PartialEq)]
pub struct CrossSection<T> {
    vertices: Vec<[T; 2]>,
    area: T,
    first_moments: [T; 2],
    bound: T,
    inradius: T,
    circumradius: T,
}

impl<T: Real> CrossSection<T> {
    pub fn new(mut vertices: Vec<[T; 2]>) -> Result<Self> {
        let m = vertices.len();
        if m < 3 {
            return Err(KpError::InvalidInput(format!(
                "cross-section needs at least 3 vertices, got {m}"
            )));
        }
        if vertices.iter().any(|v| !v[0].is_finite() || !v[1].is_finite()) {
            return Err(KpError::InvalidInput("non-finite section vertex".into()));
        }
        let signed = shoelace(&vertices);
        if signed < T::zero() {
            vertices.reverse();
        }
        let origin = [T::zero(), T::zero()];
        let mut turning = T::zero();
        for j in 0..m {
            let a = vertices[j];
            let b = vertices[(j + 1) % m];
            let c = vertices[(j + 2) % m];
            if orient2d(a, b, c) <= T::zero() {
                return Err(KpError::InvalidInput("cross-section is not strictly convex".into()));
            }
            if orient2d(a, b, origin) <= T::zero() {
                return Err(KpError::InvalidInput(
                    "origin must lie strictly inside the cross-section".into(),
                ));
            }
            let e0 = [b[0] - a[0], b[1] - a[1]];
            let e1 = [c[0] - b[0], c[1] - b[1]];
            turning += (e0[0] * e1[1] - e0[1] * e1[0]).atan2(e0[0] * e1[0] + e0[1] * e1[1]);
        }
        // a convex turn sequence that winds more than once is self-intersecting
        if (turning - T::TAU()).abs() > T::tol(1e-9) {
            return Err(KpError::InvalidInput("cross-section is not simple".into()));
        }
        let area = shoelace(&vertices);
        let mut c1 = T::zero();
        let mut c2 = T::zero();
        for j in 0..m {
            let a = vertices[j];
            let b = vertices[(j + 1) % m];
            let cr = a[0] * b[1] - b[0] * a[1];
            c1 += (a[0] + b[0]) * cr;
            c2 += (a[1] + b[1]) * cr;
        }
        let six = T::lit(6.0);
        let bound = vertices
            .iter()
            .map(|v| v[0].abs().max(v[1].abs()))
            .fold(T::zero(), T::max);
        let circumradius = vertices
            .iter()
            .map(|v| v[0].hypot(v[1]))
            .fold(T::zero(), T::max);
        let inradius = (0..m)
            .map(|j| {
                let a = vertices[j];
                let b = vertices[(j + 1) % m];
                orient2d(a, b, origin) / (b[0] - a[0]).hypot(b[1] - a[1])
            })
            .fold(T::infinity(), T::min);
        Ok(Self {
            vertices,
            area,
            first_moments: [c1 / six, c2 / six],
            bound,
            inradius,
            circumradius,
        })
    }

    /// Regular `k`-gon of circumradius `r` with vertex 0 on the `z1` axis.
    pub fn regular(k: usize, r: T) -> Result<Self> {
        if !(r > T::zero()) {
            return Err(KpError::InvalidInput("section radius must be positive".into()));
        }
        let verts = (0..k)
            .map(|j| {
                let a = T::TAU() * T::from_usize(j) / T::from_usize(k);
                [r * a.cos(), r * a.sin()]
            })
            .collect();
        Self::new(verts)
    }

    pub fn vertices(&self) -> &[[T; 2]] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn area(&self) -> T {
        self.area
    }

    /// `(int z1 dA, int z2 dA)` over the section.
    pub fn first_moments(&self) -> [T; 2] {
        self.first_moments
    }

    /// `R` with `|z1| <= R` and `|z2| <= R` over the section.
    pub fn bound(&self) -> T {
        self.bound
    }

    /// Distance from the origin to the nearest edge.
    pub fn inradius(&self) -> T {
        self.inradius
    }

    /// Largest vertex distance from the origin.
    pub fn circumradius(&self) -> T {
        self.circumradius
    }

    /// `max over the section of a z1 + b z2`, attained at a vertex.
    pub fn max_linear(&self, a: T, b: T) -> T {
        self.vertices
            .iter()
            .map(|v| a * v[0] + b * v[1])
            .fold(T::neg_infinity(), T::max)
    }

    /// Point on edge `j` (from vertex `j` to `j + 1`) at parameter `u`.
    pub fn edge_point(&self, j: usize, u: T) -> [T; 2] {
        let m = self.vertices.len();
        let a = self.vertices[j % m];
        let b = self.vertices[(j + 1) % m];
        [a[0] + (b[0] - a[0]) * u, a[1] + (b[1] - a[1]) * u]
    }

    /// Signed distance to the boundary: positive inside.
    pub fn signed_depth(&self, z: [T; 2]) -> T {
        let m = self.vertices.len();
        (0..m)
            .map(|j| {
                let a = self.vertices[j];
                let b = self.vertices[(j + 1) % m];
                orient2d(a, b, z) / (b[0] - a[0]).hypot(b[1] - a[1])
            })
            .fold(T::infinity(), T::min)
    }

    pub fn contains(&self, z: [T; 2]) -> bool {
        self.signed_depth(z) >= T::zero()
    }

    pub fn contains_strict(&self, z: [T; 2]) -> bool {
        self.signed_depth(z) > T::zero()
    }

    /// Closest boundary point to `z`: `(edge, u, point, distance)`.
    pub fn project_to_boundary(&self, z: [T; 2]) -> (usize, T, [T; 2], T) {
        let m = self.vertices.len();
        let mut best = (0, T::zero(), self.vertices[0], T::infinity());
        for j in 0..m {
            let a = self.vertices[j];
            let b = self.vertices[(j + 1) % m];
            let e = [b[0] - a[0], b[1] - a[1]];
            let l2 = e[0] * e[0] + e[1] * e[1];
            let u = (((z[0] - a[0]) * e[0] + (z[1] - a[1]) * e[1]) / l2)
                .max(T::zero())
                .min(T::one());
            let p = [a[0] + e[0] * u, a[1] + e[1] * u];
            let dist = (z[0] - p[0]).hypot(z[1] - p[1]);
            if dist < best.3 {
                best = (j, u, p, dist);
            }
        }
        best
    }
}

fn shoelace<T: Real>(v: &[[T; 2]]) -> T {
    let m = v.len();
    (0..m)
        .map(|j| {
            let a = v[j];
            let b = v[(j + 1) % m];
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<T>()
        * T::half()
}
