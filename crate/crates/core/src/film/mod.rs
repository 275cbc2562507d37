//! Liquid film as a triangle mesh whose boundary vertices live on the tube
//! surface.

mod relax;
mod remesh;

pub use relax::{relax_film, RelaxOptions, RelaxReport};

use std::collections::BTreeMap;

use crate::error::{KpError, Result};
use crate::geom::{segment_intersects_triangle, triangle_area, Vec3};
use crate::rod::{surface_point_on, BoundaryTag, CrossSection, FramedCurve, TubeMesh};
use crate::scalar::Real;
use crate::topology::TestLoop;

/// Triangle mesh of the film. `tags[v]` is set for vertices bound to the tube.
#[derive(Clone, Debug, PartialEq)]
pub struct FilmMesh<T> {
    pub vertices: Vec<Vec3<T>>,
    pub triangles: Vec<[usize; 3]>,
    pub tags: Vec<Option<BoundaryTag<T>>>,
}

/// Edge `(lo, hi)` to the triangles using it, in index order.
pub(crate) type EdgeMap = BTreeMap<(usize, usize), Vec<usize>>;

#[inline]
pub(crate) fn edge_key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

impl<T: Real> FilmMesh<T> {
    pub fn new(vertices: Vec<Vec3<T>>, triangles: Vec<[usize; 3]>, tags: Vec<Option<BoundaryTag<T>>>) -> Result<Self> {
        let film = Self {
            vertices,
            triangles,
            tags,
        };
        film.validate()?;
        Ok(film)
    }

    /// Checks indices, the two-triangles-per-edge rule and triangle areas.
    pub fn validate(&self) -> Result<()> {
        let nv = self.vertices.len();
        if self.tags.len() != nv {
            return Err(KpError::InvalidInput("one tag slot per vertex required".into()));
        }
        for (k, t) in self.triangles.iter().enumerate() {
            if t.iter().any(|&v| v >= nv) || t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return Err(KpError::InvalidInput(format!("triangle {k} has bad indices")));
            }
        }
        if let Some((e, _)) = self.edge_map().iter().find(|(_, ts)| ts.len() > 2) {
            return Err(KpError::InvalidInput(format!(
                "edge ({},{}) is shared by more than two triangles",
                e.0, e.1
            )));
        }
        self.check_areas()?;
        Ok(())
    }

    pub(crate) fn area_floor(&self) -> T {
        let (lo, hi) = bbox(&self.vertices);
        T::lit(1e-14) * (hi - lo).norm2()
    }

    fn check_areas(&self) -> Result<()> {
        let floor = self.area_floor();
        for k in 0..self.triangles.len() {
            if !(self.triangle_area(k) > floor) {
                return Err(KpError::DegenerateTriangle(k));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn triangle_area(&self, k: usize) -> T {
        let t = self.triangles[k];
        triangle_area(self.vertices[t[0]], self.vertices[t[1]], self.vertices[t[2]])
    }

    pub(crate) fn edge_map(&self) -> EdgeMap {
        let mut map: EdgeMap = BTreeMap::new();
        for (k, t) in self.triangles.iter().enumerate() {
            for e in 0..3 {
                map.entry(edge_key(t[e], t[(e + 1) % 3])).or_default().push(k);
            }
        }
        map
    }

    /// Edges used by exactly one triangle.
    pub fn boundary_edges(&self) -> Vec<(usize, usize)> {
        self.edge_map()
            .into_iter()
            .filter(|(_, ts)| ts.len() == 1)
            .map(|(e, _)| e)
            .collect()
    }

    pub fn tagged_count(&self) -> usize {
        self.tags.iter().filter(|t| t.is_some()).count()
    }

    pub fn mean_edge_length(&self) -> T {
        let map = self.edge_map();
        if map.is_empty() {
            return T::zero();
        }
        let sum: T = map.keys().map(|&(a, b)| self.vertices[a].dist(self.vertices[b])).sum();
        sum / T::from_usize(map.len())
    }

    /// Smallest interior angle over all triangles, in radians.
    pub fn min_angle(&self) -> T {
        let mut best = T::PI();
        for t in &self.triangles {
            for k in 0..3 {
                let p = self.vertices[t[k]];
                let u = self.vertices[t[(k + 1) % 3]] - p;
                let v = self.vertices[t[(k + 2) % 3]] - p;
                let ang = u.cross(v).norm().atan2(u.dot(v));
                best = best.min(ang);
            }
        }
        best
    }

    /// Removes vertices no triangle refers to.
    pub(crate) fn compact(&mut self) {
        let mut used = vec![false; self.vertices.len()];
        for t in &self.triangles {
            for &v in t {
                used[v] = true;
            }
        }
        let mut remap = vec![usize::MAX; self.vertices.len()];
        let mut verts = Vec::new();
        let mut tags = Vec::new();
        for (i, &u) in used.iter().enumerate() {
            if u {
                remap[i] = verts.len();
                verts.push(self.vertices[i]);
                tags.push(self.tags[i]);
            }
        }
        for t in &mut self.triangles {
            for v in t.iter_mut() {
                *v = remap[*v];
            }
        }
        self.vertices = verts;
        self.tags = tags;
    }
}

pub(crate) fn bbox<T: Real>(pts: &[Vec3<T>]) -> (Vec3<T>, Vec3<T>) {
    let mut lo = Vec3::new(T::infinity(), T::infinity(), T::infinity());
    let mut hi = Vec3::new(T::neg_infinity(), T::neg_infinity(), T::neg_infinity());
    for p in pts {
        lo = Vec3::new(lo.x.min(p.x), lo.y.min(p.y), lo.z.min(p.z));
        hi = Vec3::new(hi.x.max(p.x), hi.y.max(p.y), hi.z.max(p.z));
    }
    (lo, hi)
}

/// Total area; fails on a degenerate triangle.
pub fn film_area<T: Real>(film: &FilmMesh<T>) -> Result<T> {
    film.check_areas()?;
    Ok(area_unchecked(film))
}

pub(crate) fn area_unchecked<T: Real>(film: &FilmMesh<T>) -> T {
    (0..film.triangles.len()).map(|k| film.triangle_area(k)).sum()
}

/// `2 sigma area`, counting both faces of the film.
pub fn film_energy<T: Real>(film: &FilmMesh<T>, sigma: T) -> Result<T> {
    Ok(T::two() * sigma * film_area(film)?)
}

pub fn film_boundary_length<T: Real>(film: &FilmMesh<T>) -> T {
    film.boundary_edges()
        .iter()
        .map(|&(a, b)| film.vertices[a].dist(film.vertices[b]))
        .sum()
}

/// Gradient of the total area with respect to every vertex position.
pub fn area_gradient<T: Real>(film: &FilmMesh<T>) -> Vec<Vec3<T>> {
    let mut g = vec![Vec3::zero(); film.vertices.len()];
    for t in &film.triangles {
        let (a, b, c) = (film.vertices[t[0]], film.vertices[t[1]], film.vertices[t[2]]);
        let n = (b - a).cross(c - a);
        let nn = n.norm();
        if nn == T::zero() {
            continue;
        }
        let u = n / nn;
        g[t[0]] += u.cross(c - b) * T::half();
        g[t[1]] += u.cross(a - c) * T::half();
        g[t[2]] += u.cross(b - a) * T::half();
    }
    g
}

/// Cone from the midline centroid to the tube vertex ring facing it, refined
/// twice with boundary midpoints projected onto the tube.
pub fn init_film<T: Real>(curve: &FramedCurve<T>, tube: &TubeMesh<T>) -> Result<FilmMesh<T>> {
    let tol = T::tol(1e-6) * curve.length();
    let gap = curve.closure_gap();
    if !(gap <= tol) {
        return Err(KpError::NotClosed {
            gap: gap.to_f64_lossy(),
            tol: tol.to_f64_lossy(),
        });
    }
    let n = curve.segments();
    let centroid = curve.nodes[..n].iter().fold(Vec3::zero(), |a, &p| a + p) / T::from_usize(n);
    let mut vertices = vec![centroid];
    let mut tags = vec![None];
    for i in 0..n {
        let dir = centroid - curve.nodes[i];
        let (d, b) = (curve.directors[i], curve.binormal(i));
        let j = (0..tube.ring_size())
            .max_by(|&p, &q| {
                let zp = tube.section.vertices()[p];
                let zq = tube.section.vertices()[q];
                let fp = dir.dot(d * zp[0] + b * zp[1]);
                let fq = dir.dot(d * zq[0] + b * zq[1]);
                fp.partial_cmp(&fq).unwrap().then(q.cmp(&p))
            })
            .unwrap();
        vertices.push(tube.vertex(i, j));
        tags.push(Some(BoundaryTag {
            segment: i,
            edge: j,
            u: T::zero(),
            sigma: T::zero(),
        }));
    }
    let triangles = (0..n).map(|i| [0, 1 + i, 1 + (i + 1) % n]).collect();
    let mut film = FilmMesh {
        vertices,
        triangles,
        tags,
    };
    for _ in 0..2 {
        film = refine(&film, tube);
    }
    film.validate()?;
    Ok(film)
}

/// One round of 1-to-4 subdivision. Midpoints of boundary edges between two
/// tagged vertices are projected onto the tube.
pub fn refine<T: Real>(film: &FilmMesh<T>, tube: &TubeMesh<T>) -> FilmMesh<T> {
    let map = film.edge_map();
    let mut vertices = film.vertices.clone();
    let mut tags = film.tags.clone();
    let mut mid = BTreeMap::new();
    for (&(a, b), ts) in &map {
        let m = (film.vertices[a] + film.vertices[b]) * T::half();
        let idx = vertices.len();
        match (ts.len(), film.tags[a], film.tags[b]) {
            (1, Some(ta), Some(_)) => {
                let (p, tag) = tube.project_to_surface(m, Some(ta.segment));
                vertices.push(p);
                tags.push(Some(tag));
            }
            _ => {
                vertices.push(m);
                tags.push(None);
            }
        }
        mid.insert((a, b), idx);
    }
    let mut triangles = Vec::with_capacity(4 * film.triangles.len());
    for t in &film.triangles {
        let m01 = mid[&edge_key(t[0], t[1])];
        let m12 = mid[&edge_key(t[1], t[2])];
        let m20 = mid[&edge_key(t[2], t[0])];
        triangles.push([t[0], m01, m20]);
        triangles.push([m01, t[1], m12]);
        triangles.push([m20, m12, t[2]]);
        triangles.push([m01, m12, m20]);
    }
    FilmMesh {
        vertices,
        triangles,
        tags,
    }
}

/// Moves every tagged vertex to its tag's position on the tube swept by
/// `section` along `curve`; interior vertices stay.
pub fn replace_boundary<T: Real>(film: &FilmMesh<T>, curve: &FramedCurve<T>, section: &CrossSection<T>) -> FilmMesh<T> {
    let mut out = film.clone();
    for (v, tag) in out.vertices.iter_mut().zip(&film.tags) {
        if let Some(tag) = tag {
            *v = surface_point_on(curve, section, tag);
        }
    }
    out
}

/// Number of pairs of vertex-disjoint triangles that intersect.
pub fn film_self_intersections<T: Real>(film: &FilmMesh<T>) -> usize {
    let boxes: Vec<_> = film
        .triangles
        .iter()
        .map(|t| bbox(&[film.vertices[t[0]], film.vertices[t[1]], film.vertices[t[2]]]))
        .collect();
    let eps = T::lit(1e-12);
    let mut count = 0;
    for i in 0..film.triangles.len() {
        let ti = film.triangles[i];
        for j in i + 1..film.triangles.len() {
            let tj = film.triangles[j];
            if ti.iter().any(|v| tj.contains(v)) {
                continue;
            }
            let (a, b) = (&boxes[i], &boxes[j]);
            if a.0.x > b.1.x || a.0.y > b.1.y || a.0.z > b.1.z || b.0.x > a.1.x || b.0.y > a.1.y || b.0.z > a.1.z {
                continue;
            }
            let vi = ti.map(|v| film.vertices[v]);
            let vj = tj.map(|v| film.vertices[v]);
            let hit = (0..3).any(|k| segment_intersects_triangle(vi[k], vi[(k + 1) % 3], vj[0], vj[1], vj[2], eps))
                || (0..3).any(|k| segment_intersects_triangle(vj[k], vj[(k + 1) % 3], vi[0], vi[1], vi[2], eps));
            if hit {
                count += 1;
            }
        }
    }
    count
}

/// Film area inside the `eps`-neighbourhood of a test loop, by 64-fold
/// subdivision of each triangle and centroid classification.
pub fn film_area_near_loop<T: Real>(film: &FilmMesh<T>, lp: &TestLoop<T>, eps: T) -> T {
    const K: usize = 8;
    let mut total = T::zero();
    for t in &film.triangles {
        let [a, b, c] = t.map(|v| film.vertices[v]);
        let reach = a.dist(b).max(b.dist(c)).max(c.dist(a));
        if lp.distance_to(a) > eps + reach {
            continue;
        }
        let k = T::from_usize(K);
        let sub = triangle_area(a, b, c) / (k * k);
        let at = |i: T, j: T| a + (b - a) * (i / k) + (c - a) * (j / k);
        for i in 0..K {
            for j in 0..K - i {
                let (fi, fj) = (T::from_usize(i), T::from_usize(j));
                let third = T::one() / T::lit(3.0);
                // upright cell
                let cen = at(fi + third, fj + third);
                if lp.distance_to(cen) <= eps {
                    total += sub;
                }
                // inverted cell
                if i + j + 1 < K {
                    let cen = at(fi + T::two() * third, fj + T::two() * third);
                    if lp.distance_to(cen) <= eps {
                        total += sub;
                    }
                }
            }
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rod::{build_tube, integrate_frame, ClampingParams, RodDensities, RodState};
    use crate::topology::{canonical_threading_loop, spanning_check};
    use proptest::prelude::*;
    use std::f64::consts::{PI, TAU};

    pub(crate) fn disk(k: usize, r: f64) -> FilmMesh<f64> {
        let mut v = vec![Vec3::zero()];
        for j in 0..k {
            let a = TAU * j as f64 / k as f64;
            v.push(Vec3::new(r * a.cos(), r * a.sin(), 0.0));
        }
        let t = (0..k).map(|j| [0, 1 + j, 1 + (j + 1) % k]).collect();
        let n = v.len();
        FilmMesh::new(v, t, vec![None; n]).unwrap()
    }

    pub(crate) fn circle_tube(n: usize, r_mid: f64, r: f64, m: usize) -> TubeMesh<f64> {
        let st = RodState::new(
            RodDensities::uniform(n, TAU * r_mid, 1.0 / r_mid, 0.0, 0.0).unwrap(),
            ClampingParams::standard(),
        )
        .unwrap();
        build_tube(&integrate_frame(&st), &CrossSection::regular(m, r).unwrap()).unwrap()
    }

    #[test]
    fn area_examples() {
        let sq = FilmMesh::<f64>::new(
            vec![Vec3::zero(), Vec3::e1(), Vec3::new(1.0, 1.0, 0.0), Vec3::e2()],
            vec![[0, 1, 2], [0, 2, 3]],
            vec![None; 4],
        )
        .unwrap();
        assert!((film_area(&sq).unwrap() - 1.0).abs() < 1e-15);
        assert!((film_boundary_length(&sq) - 4.0).abs() < 1e-15);
        let d = disk(256, 1.0);
        assert!((film_area(&d).unwrap() - PI).abs() < 1e-3 * PI);
        assert!((film_boundary_length(&d) - TAU).abs() < 1e-3 * TAU);
        // two triangles of total area 2 with tension 0.025
        let big = FilmMesh::<f64>::new(
            vec![Vec3::zero(), Vec3::e1() * 2.0, Vec3::new(2.0, 1.0, 0.0), Vec3::e2()],
            vec![[0, 1, 2], [0, 2, 3]],
            vec![None; 4],
        )
        .unwrap();
        assert!((film_energy(&big, 0.025).unwrap() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn closed_surface_has_no_boundary() {
        let v = vec![Vec3::<f64>::zero(), Vec3::e1(), Vec3::e2(), Vec3::e3()];
        let t = vec![[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]];
        let tet = FilmMesh::new(v, t, vec![None; 4]).unwrap();
        assert_eq!(film_boundary_length(&tet), 0.0);
    }

    #[test]
    fn degenerate_triangles_are_rejected() {
        let v = vec![Vec3::zero(), Vec3::e1(), Vec3::e1() * 2.0];
        let bad = FilmMesh {
            vertices: v,
            triangles: vec![[0, 1, 2]],
            tags: vec![None; 3],
        };
        assert_eq!(film_area(&bad), Err(KpError::DegenerateTriangle(0)));
    }

    #[test]
    fn initial_film_spans_a_circle() {
        let tube = circle_tube(100, 1.0, 0.02, 16);
        let film = init_film(&tube.curve, &tube).unwrap();
        let a = film_area(&film).unwrap();
        assert!((a - PI).abs() < 0.05 * PI, "{a}");
        assert_eq!(film.tagged_count(), 400);
        let lp = canonical_threading_loop(&tube.curve, &tube.section).unwrap();
        assert_eq!(spanning_check(&film, &[lp], &tube).unwrap(), vec![true]);
        assert_eq!(film_self_intersections(&film), 0);
        for (v, tag) in film.vertices.iter().zip(&film.tags) {
            if let Some(tag) = tag {
                assert!(tube.surface_point(tag).dist(*v) < 1e-15);
            }
        }
    }

    #[test]
    fn initial_film_on_nonplanar_rod_is_valid() {
        let n = 120;
        let h = 1.0 / n as f64;
        let k1: Vec<f64> = (0..n).map(|i| TAU + 6.0 * (TAU * 2.0 * h * (i as f64 + 0.5)).sin()).collect();
        let k2: Vec<f64> = (0..n).map(|i| 8.0 * (TAU * 3.0 * h * (i as f64 + 0.5)).cos()).collect();
        let st = RodState::new(RodDensities::new(k1, k2, vec![0.0; n], 1.0).unwrap(), ClampingParams::standard()).unwrap();
        let st = crate::solver::reclose(&st, 0.0, 1e-12).unwrap();
        let curve = integrate_frame(&st);
        let tube = build_tube(&curve, &CrossSection::regular(8, 0.005).unwrap()).unwrap();
        let film = init_film(&curve, &tube).unwrap();
        film.validate().unwrap();
    }

    #[test]
    fn open_rod_has_no_film() {
        let st =
            RodState::new(RodDensities::uniform(20, 1.0, 3.0, 0.0, 0.0).unwrap(), ClampingParams::standard()).unwrap();
        let closed = circle_tube(20, 1.0, 0.02, 8);
        assert!(matches!(init_film(&integrate_frame(&st), &closed), Err(KpError::NotClosed { .. })));
    }

    #[test]
    fn neighbourhood_area_of_a_crossing_loop() {
        let d = disk(64, 1.0);
        let mut film = d.clone();
        for _ in 0..3 {
            film = refine_plain(&film);
        }
        // vertical line through (0.3, 0.2, 0) closed far away
        let lp = TestLoop::new(
            vec![Vec3::new(0.3, 0.2, -5.0), Vec3::new(0.3, 0.2, 5.0), Vec3::new(9.0, 0.2, 5.0), Vec3::new(9.0, 0.2, -5.0)],
            "line",
            "",
        )
        .unwrap();
        let a = film_area_near_loop(&film, &lp, 0.1);
        assert!((a - PI * 0.01).abs() < 0.05 * PI * 0.01, "{a}");
    }

    fn refine_plain(f: &FilmMesh<f64>) -> FilmMesh<f64> {
        let tube = circle_tube(20, 10.0, 0.02, 8);
        // no tags, so nothing is projected
        refine(f, &tube)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn area_gradient_matches_finite_differences(
            jitter in prop::collection::vec(prop::array::uniform3(-0.2f64..0.2), 17),
        ) {
            let mut film = disk(16, 1.0);
            for (v, j) in film.vertices.iter_mut().zip(&jitter) {
                *v += Vec3::from_f64(*j);
            }
            let g = area_gradient(&film);
            let h = 1e-6;
            for v in 0..film.vertices.len() {
                for k in 0..3 {
                    let mut e = [0.0; 3];
                    e[k] = h;
                    let mut p = film.clone();
                    p.vertices[v] += Vec3::from_f64(e);
                    let mut m = film.clone();
                    m.vertices[v] -= Vec3::from_f64(e);
                    let fd = (area_unchecked(&p) - area_unchecked(&m)) / (2.0 * h);
                    let an = g[v][k];
                    prop_assert!((fd - an).abs() <= 1e-6 * an.abs().max(1.0), "{fd} vs {an}");
                }
            }
        }
    }
}
