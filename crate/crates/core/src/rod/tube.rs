use std::collections::BTreeMap;

use super::{CrossSection, FramedCurve};
use crate::error::{KpError, Result};
use crate::geom::{point_segment_distance, Vec3};
use crate::scalar::Real;

/// Location on the exact lateral surface of the tube: arclength fraction
/// `sigma` inside `segment`, and parameter `u` along polygon `edge`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryTag<T> {
    pub segment: usize,
    pub edge: usize,
    pub u: T,
    pub sigma: T,
}

/// Position of a point relative to the swept section at one arclength.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormalCoords<T> {
    pub segment: usize,
    /// local arclength inside the segment
    pub offset: T,
    pub zeta: [T; 2],
}

/// Triangulated lateral surface of the thick loop together with the curve and
/// section it was swept from, which back the exact surface queries.
#[derive(Clone, Debug)]
pub struct TubeMesh<T> {
    pub curve: FramedCurve<T>,
    pub section: CrossSection<T>,
    pub vertices: Vec<Vec3<T>>,
    pub triangles: Vec<[usize; 3]>,
    /// `(ring, polygon vertex)` for every mesh vertex
    pub tags: Vec<(usize, usize)>,
    sag: Vec<T>,
    /// bounding spheres `(centre, radius, first segment)` of runs of segments
    chunks: Vec<(Vec3<T>, T, usize)>,
}

const CHUNK: usize = 8;

/// Sweeps `section` along a closed `curve`. Ring `N` is identified with ring 0.
pub fn build_tube<T: Real>(curve: &FramedCurve<T>, section: &CrossSection<T>) -> Result<TubeMesh<T>> {
    let tol = T::tol(1e-6) * curve.length();
    let gap = curve.closure_gap();
    if !(gap <= tol) {
        return Err(KpError::NotClosed {
            gap: gap.to_f64_lossy(),
            tol: tol.to_f64_lossy(),
        });
    }
    let n = curve.segments();
    let m = section.len();
    let mut vertices = Vec::with_capacity(n * m);
    let mut tags = Vec::with_capacity(n * m);
    for i in 0..n {
        let x = curve.nodes[i];
        let d = curve.directors[i];
        let b = curve.binormal(i);
        for (j, z) in section.vertices().iter().enumerate() {
            vertices.push(x + d * z[0] + b * z[1]);
            tags.push((i, j));
        }
    }
    let idx = |i: usize, j: usize| (i % n) * m + (j % m);
    let mut triangles = Vec::with_capacity(2 * n * m);
    for i in 0..n {
        for j in 0..m {
            // outward orientation for a counter-clockwise section
            triangles.push([idx(i, j), idx(i, j + 1), idx(i + 1, j + 1)]);
            triangles.push([idx(i, j), idx(i + 1, j + 1), idx(i + 1, j)]);
        }
    }
    let h = curve.segment_length();
    let sag = (0..n)
        .map(|i| {
            let [k1, k2, _] = curve.densities.segment(i);
            k1.hypot(k2) * h * h / T::lit(8.0) + T::epsilon() * h
        })
        .collect::<Vec<T>>();
    let chunks = (0..n)
        .step_by(CHUNK)
        .map(|first| {
            let last = (first + CHUNK).min(n);
            let pts = &curve.nodes[first..=last];
            let centre = pts.iter().fold(Vec3::zero(), |a, &p| a + p) / T::from_usize(pts.len());
            let r = pts.iter().map(|p| p.dist(centre)).fold(T::zero(), T::max);
            let s = sag[first..last].iter().copied().fold(T::zero(), T::max);
            (centre, r + s, first)
        })
        .collect();
    Ok(TubeMesh {
        curve: curve.clone(),
        section: section.clone(),
        vertices,
        triangles,
        tags,
        sag,
        chunks,
    })
}

impl<T: Real> TubeMesh<T> {
    pub fn rings(&self) -> usize {
        self.curve.segments()
    }

    pub fn ring_size(&self) -> usize {
        self.section.len()
    }

    /// Vertex `j` of ring `i`; ring indices wrap.
    pub fn vertex(&self, i: usize, j: usize) -> Vec3<T> {
        self.vertices[(i % self.rings()) * self.ring_size() + j % self.ring_size()]
    }

    fn edge_counts(&self) -> BTreeMap<(usize, usize), usize> {
        let mut counts = BTreeMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *counts.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        counts
    }

    pub fn is_watertight(&self) -> bool {
        self.edge_counts().values().all(|&c| c == 2)
    }

    pub fn euler_characteristic(&self) -> i64 {
        let e = self.edge_counts().len() as i64;
        self.vertices.len() as i64 - e + self.triangles.len() as i64
    }

    pub fn check_watertight(&self) -> Result<()> {
        match self.edge_counts().iter().find(|(_, &c)| c != 2) {
            None => Ok(()),
            Some(((a, b), c)) => Err(KpError::NotWatertight(format!(
                "edge ({a},{b}) shared by {c} triangles"
            ))),
        }
    }

    /// Exact surface point for a boundary tag.
    pub fn surface_point(&self, tag: &BoundaryTag<T>) -> Vec3<T> {
        surface_point_on(&self.curve, &self.section, tag)
    }

    /// Distance from `q` to the chord of segment `i`, less the chord/arc sag.
    #[inline]
    fn chord_distance(&self, q: Vec3<T>, i: usize) -> T {
        point_segment_distance(q, self.curve.nodes[i], self.curve.nodes[i + 1]) - self.sag[i]
    }

    /// Segments whose swept sections may reach within `reach` of `q`.
    pub fn candidate_segments(&self, q: Vec3<T>, reach: T) -> Vec<usize> {
        let r = reach + self.section.circumradius();
        let n = self.rings();
        let mut out = Vec::new();
        for &(c, rad, first) in &self.chunks {
            if q.dist(c) - rad > r {
                continue;
            }
            out.extend((first..(first + CHUNK).min(n)).filter(|&i| self.chord_distance(q, i) <= r));
        }
        out
    }

    /// Solves `(q - x(s)) . t(s) = 0` inside segment `i`.
    pub fn normal_root(&self, q: Vec3<T>, i: usize) -> Option<NormalCoords<T>> {
        normal_plane_root(&self.curve, q, i)
    }

    fn roots_near(&self, q: Vec3<T>, reach: T) -> Vec<NormalCoords<T>> {
        self.candidate_segments(q, reach)
            .into_iter()
            .filter_map(|i| self.normal_root(q, i))
            .collect()
    }

    /// True if `q` lies in the closed tube (`strict == false`) or its open
    /// interior (`strict == true`).
    pub fn contains(&self, q: Vec3<T>, strict: bool) -> bool {
        self.roots_near(q, T::zero()).iter().any(|nc| {
            if strict {
                self.section.contains_strict(nc.zeta)
            } else {
                self.section.contains(nc.zeta)
            }
        })
    }

    /// Distance, measured in the normal plane, from `q` to the lateral surface
    /// of the nearby swept section (`None` if no normal plane through `q`
    /// meets a nearby segment).
    pub fn surface_distance(&self, q: Vec3<T>) -> Option<T> {
        let reach = self.section.circumradius();
        self.roots_near(q, reach)
            .iter()
            .map(|nc| self.section.project_to_boundary(nc.zeta).3)
            .fold(None, |acc: Option<T>, d| Some(acc.map_or(d, |a| a.min(d))))
    }

    fn tag_from_coords(&self, nc: &NormalCoords<T>) -> (Vec3<T>, BoundaryTag<T>, T) {
        let (edge, u, z, dist) = self.section.project_to_boundary(nc.zeta);
        let h = self.curve.segment_length();
        let tag = BoundaryTag {
            segment: nc.segment,
            edge,
            u,
            sigma: nc.offset / h,
        };
        let (x, t, d) = self.curve.frame_in_segment(nc.segment, nc.offset);
        (x + d * z[0] + t.cross(d) * z[1], tag, dist)
    }

    /// Projects `q` onto the lateral surface of the nearest part of the tube.
    ///
    /// With a `hint` segment only its neighbourhood is searched first.
    pub fn project_to_surface(&self, q: Vec3<T>, hint: Option<usize>) -> (Vec3<T>, BoundaryTag<T>) {
        let n = self.rings();
        let pick = |roots: &[NormalCoords<T>]| {
            roots
                .iter()
                .map(|nc| {
                    let (p, tag, _) = self.tag_from_coords(nc);
                    (p.dist(q), p, tag)
                })
                .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap())
        };
        if let Some(h) = hint {
            let roots: Vec<_> = (0..5)
                .map(|k| (h + n + k - 2) % n)
                .filter_map(|i| self.normal_root(q, i))
                .collect();
            if let Some((_, p, tag)) = pick(&roots) {
                return (p, tag);
            }
        }
        let nearest = (0..n)
            .map(|i| self.chord_distance(q, i))
            .fold(T::infinity(), T::min);
        let roots = self.roots_near(q, (nearest - self.section.circumradius()).max(T::zero()) + self.curve.segment_length());
        if let Some((_, p, tag)) = pick(&roots) {
            return (p, tag);
        }
        // No normal plane through q nearby: use the nearest node's section.
        let k = (0..n)
            .min_by(|&a, &b| {
                q.dist(self.curve.nodes[a])
                    .partial_cmp(&q.dist(self.curve.nodes[b]))
                    .unwrap()
            })
            .unwrap();
        let w = q - self.curve.nodes[k];
        let nc = NormalCoords {
            segment: k,
            offset: T::zero(),
            zeta: [w.dot(self.curve.directors[k]), w.dot(self.curve.binormal(k))],
        };
        let (p, tag, _) = self.tag_from_coords(&nc);
        (p, tag)
    }
}

/// Surface point for `tag` on the tube swept by `section` along `curve`.
pub fn surface_point_on<T: Real>(curve: &FramedCurve<T>, section: &CrossSection<T>, tag: &BoundaryTag<T>) -> Vec3<T> {
    let h = curve.segment_length();
    let (x, t, d) = curve.frame_in_segment(tag.segment, tag.sigma * h);
    let z = section.edge_point(tag.edge, tag.u);
    x + d * z[0] + t.cross(d) * z[1]
}

/// Root of `(q - x(s)) . t(s)` inside segment `i` of `curve`, with the
/// section coordinates of `q` in that normal plane. `None` when the function
/// does not change sign over the segment.
pub fn normal_plane_root<T: Real>(curve: &FramedCurve<T>, q: Vec3<T>, i: usize) -> Option<NormalCoords<T>> {
    let h = curve.segment_length();
    let f = |sigma: T| {
        let (x, t, d) = curve.frame_in_segment(i, sigma);
        ((q - x).dot(t), x, t, d)
    };
    let mut fa = (q - curve.nodes[i]).dot(curve.tangents[i]);
    let mut fb = (q - curve.nodes[i + 1]).dot(curve.tangents[i + 1]);
    if fa * fb > T::zero() {
        return None;
    }
    let (mut a, mut b) = (T::zero(), h);
    let tol = h * T::epsilon() * T::lit(4.0);
    let mut side = 0i8;
    let mut sigma = a;
    for _ in 0..80 {
        if fa == T::zero() {
            sigma = a;
            break;
        }
        if fb == T::zero() {
            sigma = b;
            break;
        }
        // Illinois-modified regula falsi
        let mut c = b - fb * (b - a) / (fb - fa);
        if !(c > a.min(b) && c < a.max(b)) {
            c = (a + b) * T::half();
        }
        let (fc, _, _, _) = f(c);
        sigma = c;
        if fc * fb < T::zero() {
            a = b;
            fa = fb;
            side = 0;
        } else if side == 1 {
            fa = fa * T::half();
        } else {
            side = 1;
        }
        b = c;
        fb = fc;
        if (b - a).abs() <= tol || fc == T::zero() {
            break;
        }
    }
    let (_, x, t, d) = f(sigma);
    let w = q - x;
    Some(NormalCoords {
        segment: i,
        offset: sigma,
        zeta: [w.dot(d), w.dot(t.cross(d))],
    })
}
