//! Twist, writhe and linking numbers of closed polylines; test loops and the
//! spanning check; Hausdorff distance.

use rayon::prelude::*;

use crate::error::{KpError, Result};
use crate::film::FilmMesh;
use crate::geom::{point_segment_distance, segment_intersects_triangle, segment_segment_distance, Vec3};
use crate::rod::{integrate_frame, signed_angle, CrossSection, FramedCurve, RodState, TubeMesh};
use crate::scalar::Real;

/// Closed polyline standing for one homotopy class of the tube complement.
#[derive(Clone, Debug, PartialEq)]
pub struct TestLoop<T> {
    pub points: Vec<Vec3<T>>,
    pub label: String,
    pub declared_class: String,
}

impl<T: Real> TestLoop<T> {
    pub fn new(points: Vec<Vec3<T>>, label: impl Into<String>, declared_class: impl Into<String>) -> Result<Self> {
        let label = label.into();
        if points.len() < 3 {
            return Err(KpError::InvalidInput(format!("loop '{label}' needs at least 3 points")));
        }
        let k = points.len();
        for i in 0..k {
            let (a, b) = (points[i], points[(i + 1) % k]);
            if !a.is_finite() || a == b {
                return Err(KpError::InvalidInput(format!(
                    "loop '{label}' has a repeated or non-finite point at {i}"
                )));
            }
        }
        Ok(Self {
            points,
            label,
            declared_class: declared_class.into(),
        })
    }

    /// Closed segments `(p_i, p_{i+1})` including the wrap-around.
    pub fn segments(&self) -> impl Iterator<Item = (Vec3<T>, Vec3<T>)> + '_ {
        let k = self.points.len();
        (0..k).map(move |i| (self.points[i], self.points[(i + 1) % k]))
    }

    /// Smallest Euclidean distance from `q` to the polyline.
    pub fn distance_to(&self, q: Vec3<T>) -> T {
        self.segments()
            .map(|(a, b)| point_segment_distance(q, a, b))
            .fold(T::infinity(), T::min)
    }
}

/// Circle of `radius` around the rod strand in the normal plane at node 0,
/// sampled at `k` points. It links the midline once.
pub fn threading_loop<T: Real>(curve: &FramedCurve<T>, radius: T, k: usize) -> Result<TestLoop<T>> {
    let x = curve.nodes[0];
    let d = curve.directors[0];
    let b = curve.binormal(0);
    let pts = (0..k)
        .map(|j| {
            let a = T::TAU() * T::from_usize(j) / T::from_usize(k);
            x + d * (radius * a.cos()) + b * (radius * a.sin())
        })
        .collect();
    TestLoop::new(pts, "threading", "meridian of the rod strand")
}

/// The default threading loop: radius three section radii, 64 points.
pub fn canonical_threading_loop<T: Real>(curve: &FramedCurve<T>, section: &CrossSection<T>) -> Result<TestLoop<T>> {
    threading_loop(curve, T::lit(3.0) * section.circumradius(), 64)
}

/// Link type and gluing of the director at the clamp.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinkSpec<T> {
    pub glue_angle: T,
    pub link_number: i64,
}

/// Gauss sum value with its nearest integer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Linking<T> {
    pub number: i64,
    pub sum: T,
    pub residual: T,
}

pub fn total_twist<T: Real>(state: &RodState<T>) -> T {
    let dens = &state.densities;
    dens.omega.iter().copied().sum::<T>() * dens.segment_length() / T::TAU()
}

/// Signed solid angle subtended by segments `p1p2` and `p3p4` (the exact
/// Gauss integral over the pair, times `4 pi`).
#[inline]
fn pair_solid_angle<T: Real>(p1: Vec3<T>, p2: Vec3<T>, p3: Vec3<T>, p4: Vec3<T>) -> T {
    let r13 = p3 - p1;
    let r14 = p4 - p1;
    let r23 = p3 - p2;
    let r24 = p4 - p2;
    let unit = |v: Vec3<T>| {
        let n = v.norm();
        if n > T::zero() {
            Some(v / n)
        } else {
            None
        }
    };
    let (Some(n1), Some(n2), Some(n3), Some(n4)) = (
        unit(r13.cross(r14)),
        unit(r14.cross(r24)),
        unit(r24.cross(r23)),
        unit(r23.cross(r13)),
    ) else {
        return T::zero();
    };
    // asin(a.b) without the loss near |a.b| = 1
    let asin = |a: Vec3<T>, b: Vec3<T>| a.dot(b).atan2(a.cross(b).norm());
    let omega = asin(n1, n2) + asin(n2, n3) + asin(n3, n4) + asin(n4, n1);
    let s = (p4 - p3).cross(p2 - p1).dot(r13);
    if s > T::zero() {
        omega
    } else if s < T::zero() {
        -omega
    } else {
        T::zero()
    }
}

/// Writhe of a closed polyline (last point joined back to the first).
pub fn writhe_polyline<T: Real>(pts: &[Vec3<T>]) -> T {
    let k = pts.len();
    let rows: Vec<T> = (0..k)
        .into_par_iter()
        .map(|i| {
            let (a, b) = (pts[i], pts[(i + 1) % k]);
            let mut acc = T::zero();
            for j in i + 2..k {
                if i == 0 && j == k - 1 {
                    continue;
                }
                acc += pair_solid_angle(a, b, pts[j], pts[(j + 1) % k]);
            }
            acc
        })
        .collect();
    // each unordered pair stands for two ordered ones
    rows.into_iter().sum::<T>() * T::two() / (T::lit(4.0) * T::PI())
}

pub fn writhe<T: Real>(curve: &FramedCurve<T>) -> Result<T> {
    let tol = T::tol(1e-6) * curve.length();
    let gap = curve.closure_gap();
    if !(gap <= tol) {
        return Err(KpError::NotClosed {
            gap: gap.to_f64_lossy(),
            tol: tol.to_f64_lossy(),
        });
    }
    Ok(writhe_polyline(&curve.closed_polyline()))
}

/// Minimum distance between two closed polylines.
pub fn polyline_distance<T: Real>(c1: &[Vec3<T>], c2: &[Vec3<T>]) -> T {
    let (k1, k2) = (c1.len(), c2.len());
    let rows: Vec<T> = (0..k1)
        .into_par_iter()
        .map(|i| {
            let (a, b) = (c1[i], c1[(i + 1) % k1]);
            (0..k2)
                .map(|j| segment_segment_distance(a, b, c2[j], c2[(j + 1) % k2]).0)
                .fold(T::infinity(), T::min)
        })
        .collect();
    rows.into_iter().fold(T::infinity(), T::min)
}

/// Gauss linking sum of two closed polylines, exact per segment pair.
pub fn linking_sum<T: Real>(c1: &[Vec3<T>], c2: &[Vec3<T>]) -> T {
    let (k1, k2) = (c1.len(), c2.len());
    let rows: Vec<T> = (0..k1)
        .into_par_iter()
        .map(|i| {
            let (a, b) = (c1[i], c1[(i + 1) % k1]);
            (0..k2)
                .map(|j| pair_solid_angle(a, b, c2[j], c2[(j + 1) % k2]))
                .sum::<T>()
        })
        .collect();
    rows.into_iter().sum::<T>() / (T::lit(4.0) * T::PI())
}

pub fn linking_number<T: Real>(c1: &[Vec3<T>], c2: &[Vec3<T>]) -> Result<Linking<T>> {
    if c1.len() < 3 || c2.len() < 3 {
        return Err(KpError::InvalidInput("linking needs closed polylines of 3+ points".into()));
    }
    let scale = c1
        .iter()
        .chain(c2)
        .map(|p| p.max_abs())
        .fold(T::zero(), T::max)
        .max(T::one());
    let dmin = polyline_distance(c1, c2);
    if !(dmin > T::tol(1e-12) * scale) {
        return Err(KpError::CurvesIntersect(dmin.to_f64_lossy()));
    }
    let sum = linking_sum(c1, c2);
    let r = sum.round();
    let residual = (sum - r).abs();
    if !(residual < T::lit(0.2)) {
        return Err(KpError::UnresolvedLink {
            value: sum.to_f64_lossy(),
            residual: residual.to_f64_lossy(),
        });
    }
    Ok(Linking {
        number: r.to_i64().unwrap_or(0),
        sum,
        residual,
    })
}

/// The midline polyline and its offset `x + eps d`. A nonzero gluing angle
/// is bridged by the shortest director arc from `d(L)` back to `d0`.
pub fn midline_and_offset<T: Real>(curve: &FramedCurve<T>, epsilon: T, glue_angle: T) -> (Vec<Vec3<T>>, Vec<Vec3<T>>) {
    let n = curve.segments();
    let mid = curve.closed_polyline();
    let mut off: Vec<Vec3<T>> = (0..n).map(|i| curve.nodes[i] + curve.directors[i] * epsilon).collect();
    if glue_angle != T::zero() {
        let t = curve.tangents[n];
        let x = curve.nodes[n];
        let dl = curve.directors[n];
        let d0 = curve.directors[0];
        let angle = signed_angle(dl, d0, t);
        let steps = (angle.abs() / (T::PI() / T::lit(16.0))).ceil().to_usize().unwrap_or(1).max(1);
        for k in 0..steps {
            let a = angle * T::from_usize(k) / T::from_usize(steps);
            off.push(x + dl.rotated(t, a) * epsilon);
        }
    }
    (mid, off)
}

pub fn rod_link_number<T: Real>(state: &RodState<T>, epsilon: T, glue_angle: T) -> Result<i64> {
    rod_link_number_curve(&integrate_frame(state), epsilon, glue_angle)
}

pub fn rod_link_number_curve<T: Real>(curve: &FramedCurve<T>, epsilon: T, glue_angle: T) -> Result<i64> {
    if !(epsilon > T::zero()) {
        return Err(KpError::InvalidInput("offset epsilon must be positive".into()));
    }
    let (mid, off) = midline_and_offset(curve, epsilon, glue_angle);
    Ok(linking_number(&mid, &off)?.number)
}

/// `|Lk - Tw - Wr|` for the rod.
pub fn calugareanu_residual<T: Real>(state: &RodState<T>, epsilon: T, glue_angle: T) -> Result<T> {
    let curve = integrate_frame(state);
    let lk = rod_link_number_curve(&curve, epsilon, glue_angle)?;
    let wr = writhe(&curve)?;
    Ok((T::lit(lk as f64) - total_twist(state) - wr).abs())
}

/// Rejects a loop that comes within the tube: every loop segment must clear
/// every midline chord by the section circumradius plus the chord sag.
pub fn check_loop_clear<T: Real>(lp: &TestLoop<T>, tube: &TubeMesh<T>) -> Result<()> {
    let curve = &tube.curve;
    let h = curve.segment_length();
    let rc = tube.section.circumradius();
    for (a, b) in lp.segments() {
        for i in 0..curve.segments() {
            let [k1, k2, _] = curve.densities.segment(i);
            let sag = k1.hypot(k2) * h * h / T::lit(8.0);
            let (dist, _, _) = segment_segment_distance(a, b, curve.nodes[i], curve.nodes[i + 1]);
            if !(dist > rc + sag) {
                return Err(KpError::InvalidLoop(lp.label.clone()));
            }
        }
    }
    Ok(())
}

/// Segment/triangle thickening used by the spanning check.
pub const SPAN_EPS: f64 = 1e-12;

/// True iff some segment of `lp` meets some triangle of `film`.
pub fn loop_meets_film<T: Real>(film: &FilmMesh<T>, lp: &TestLoop<T>) -> bool {
    let eps = T::lit(SPAN_EPS);
    let boxes: Vec<(Vec3<T>, Vec3<T>)> = film
        .triangles
        .iter()
        .map(|t| {
            let (a, b, c) = (film.vertices[t[0]], film.vertices[t[1]], film.vertices[t[2]]);
            let lo = Vec3::new(a.x.min(b.x).min(c.x), a.y.min(b.y).min(c.y), a.z.min(b.z).min(c.z));
            let hi = Vec3::new(a.x.max(b.x).max(c.x), a.y.max(b.y).max(c.y), a.z.max(b.z).max(c.z));
            (lo, hi)
        })
        .collect();
    lp.segments().any(|(p, q)| {
        let lo = Vec3::new(p.x.min(q.x), p.y.min(q.y), p.z.min(q.z));
        let hi = Vec3::new(p.x.max(q.x), p.y.max(q.y), p.z.max(q.z));
        let pad = (hi - lo).max_abs() * eps + T::epsilon();
        film.triangles.iter().zip(&boxes).any(|(t, (blo, bhi))| {
            if blo.x > hi.x + pad || blo.y > hi.y + pad || blo.z > hi.z + pad {
                return false;
            }
            if bhi.x < lo.x - pad || bhi.y < lo.y - pad || bhi.z < lo.z - pad {
                return false;
            }
            segment_intersects_triangle(p, q, film.vertices[t[0]], film.vertices[t[1]], film.vertices[t[2]], eps)
        })
    })
}

/// Per-loop intersection flags; the film spans iff all are true.
pub fn spanning_check<T: Real>(film: &FilmMesh<T>, loops: &[TestLoop<T>], tube: &TubeMesh<T>) -> Result<Vec<bool>> {
    for lp in loops {
        check_loop_clear(lp, tube)?;
    }
    Ok(loops.iter().map(|lp| loop_meets_film(film, lp)).collect())
}

/// Exact Hausdorff distance between finite point sets.
pub fn hausdorff_distance<T: Real>(a: &[Vec3<T>], b: &[Vec3<T>]) -> Result<T> {
    if a.is_empty() || b.is_empty() {
        return Err(KpError::EmptyInput);
    }
    let directed = |p: &[Vec3<T>], q: &[Vec3<T>]| {
        p.par_iter()
            .map(|x| q.iter().map(|y| x.dist(*y)).fold(T::infinity(), T::min))
            .reduce(|| T::zero(), T::max)
    };
    Ok(directed(a, b).max(directed(b, a)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rod::{ClampingParams, RodDensities};
    use proptest::prelude::*;
    use std::f64::consts::{PI, TAU};

    fn circle_pts(k: usize, r: f64, centre: Vec3<f64>, plane: usize) -> Vec<Vec3<f64>> {
        (0..k)
            .map(|j| {
                let a = TAU * j as f64 / k as f64;
                let (c, s) = (r * a.cos(), r * a.sin());
                centre
                    + match plane {
                        0 => Vec3::new(c, s, 0.0),
                        _ => Vec3::new(c, 0.0, s),
                    }
            })
            .collect()
    }

    fn twisted_circle(n: usize, turns: f64) -> RodState<f64> {
        // director rotating about a planar circle: exact values at midpoints
        let h = 1.0 / n as f64;
        let phi = |i: usize| TAU * turns * h * (i as f64 + 0.5);
        RodState::new(
            RodDensities::new(
                (0..n).map(|i| TAU * phi(i).cos()).collect(),
                (0..n).map(|i| -TAU * phi(i).sin()).collect(),
                vec![TAU * turns; n],
                1.0,
            )
            .unwrap(),
            ClampingParams::standard(),
        )
        .unwrap()
    }

    #[test]
    fn twist_examples() {
        let st = |w: f64, l: f64| {
            RodState::new(RodDensities::uniform(10, l, 0.0, 0.0, w).unwrap(), ClampingParams::standard()).unwrap()
        };
        assert_eq!(total_twist(&st(0.0, 1.0)), 0.0);
        assert!((total_twist(&st(TAU, 1.0)) - 1.0).abs() < 1e-14);
        assert!((total_twist(&st(PI, 2.0)) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn planar_writhe_vanishes() {
        let poly: Vec<Vec3<f64>> = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(2.0, 0.1, 0.0),
            Vec3::new(3.0, 1.0, 0.0),
            Vec3::new(1.0, 2.5, 0.0),
            Vec3::new(-0.5, 1.0, 0.0),
        ];
        assert!(writhe_polyline(&poly).abs() < 1e-9);
        assert!(writhe_polyline(&circle_pts(200, 1.0, Vec3::zero(), 0)).abs() < 1e-9);
    }

    fn trefoil(k: usize) -> Vec<Vec3<f64>> {
        (0..k)
            .map(|j| {
                let t = TAU * j as f64 / k as f64;
                trefoil_at(t)
            })
            .collect()
    }

    fn trefoil_at(t: f64) -> Vec3<f64> {
        let r = 2.0 + (3.0 * t).cos();
        Vec3::new(r * (2.0 * t).cos(), r * (2.0 * t).sin(), (3.0 * t).sin())
    }

    fn trefoil_tangent(t: f64) -> Vec3<f64> {
        let r = 2.0 + (3.0 * t).cos();
        let dr = -3.0 * (3.0 * t).sin();
        Vec3::new(
            dr * (2.0 * t).cos() - 2.0 * r * (2.0 * t).sin(),
            dr * (2.0 * t).sin() + 2.0 * r * (2.0 * t).cos(),
            3.0 * (3.0 * t).cos(),
        )
    }

    #[test]
    fn trefoil_writhe_matches_quadrature() {
        let k = 300;
        let wr = writhe_polyline(&trefoil(k));
        // midpoint rule for the smooth Gauss double integral at 10x resolution
        let m = 10 * k;
        let dt = TAU / m as f64;
        let pts: Vec<_> = (0..m).map(|j| trefoil_at(dt * (j as f64 + 0.5))).collect();
        let tan: Vec<_> = (0..m).map(|j| trefoil_tangent(dt * (j as f64 + 0.5))).collect();
        let mut oracle = 0.0;
        for i in 0..m {
            for j in 0..m {
                if i == j {
                    continue;
                }
                let r = pts[i] - pts[j];
                oracle += tan[i].cross(tan[j]).dot(r) / r.norm().powi(3);
            }
        }
        oracle *= dt * dt / (4.0 * PI);
        assert!((wr - oracle).abs() < 1e-3, "{wr} vs {oracle}");
        assert!(wr.abs() > 3.0 && wr.abs() < 3.8, "{wr}");
        // mirror image
        let mirrored: Vec<_> = trefoil(k).iter().map(|p| Vec3::new(p.x, p.y, -p.z)).collect();
        assert!((writhe_polyline(&mirrored) + wr).abs() < 1e-12);
    }

    #[test]
    fn hopf_and_split_links() {
        let a = circle_pts(128, 1.0, Vec3::zero(), 0);
        let b = circle_pts(128, 1.0, Vec3::new(1.0, 0.0, 0.0), 1);
        let lk = linking_number(&a, &b).unwrap();
        assert_eq!(lk.number.abs(), 1);
        assert!(lk.residual < 1e-9);
        let c = circle_pts(64, 1.0, Vec3::new(3.0, 0.0, 0.0), 0);
        assert_eq!(linking_number(&a, &c).unwrap().number, 0);
        assert!(matches!(linking_number(&a, &a), Err(KpError::CurvesIntersect(_))));
    }

    #[test]
    fn circle_offset_links() {
        let circle =
            RodState::new(RodDensities::uniform(100, 1.0, TAU, 0.0, 0.0).unwrap(), ClampingParams::standard()).unwrap();
        assert_eq!(rod_link_number(&circle, 0.01, 0.0).unwrap(), 0);
        assert!(calugareanu_residual(&circle, 0.01, 0.0).unwrap() < 1e-6);
        assert!(rod_link_number(&circle, 0.0, 0.0).is_err());
        let twisted = twisted_circle(200, 1.0);
        let curve = integrate_frame(&twisted);
        assert!(curve.closure_gap() < 1e-3);
        assert_eq!(rod_link_number(&twisted, 0.005, 0.0).unwrap(), 1);
        assert!((total_twist(&twisted) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn half_twist_glue_closes_the_offset() {
        // straight-ish check of the arc bridge: half turn glued by pi
        let st = twisted_circle(200, 0.5);
        let (_, off) = midline_and_offset(&integrate_frame(&st), 0.005, PI);
        assert!(off.len() > 200);
        let lk = rod_link_number(&st, 0.005, PI).unwrap();
        assert!(lk == 0 || lk == 1);
    }

    #[test]
    fn hausdorff_examples() {
        let a = vec![Vec3::new(0.0, 0.0, 0.0)];
        let b = vec![Vec3::zero(), Vec3::new(3.0, 0.0, 0.0)];
        assert_eq!(hausdorff_distance(&a, &a).unwrap(), 0.0);
        assert_eq!(hausdorff_distance(&a, &b).unwrap(), 3.0);
        let k = 200;
        let c1 = circle_pts(k, 1.0, Vec3::zero(), 0);
        let c2 = circle_pts(k, 2.0, Vec3::zero(), 0);
        assert!((hausdorff_distance(&c1, &c2).unwrap() - 1.0).abs() <= TAU / k as f64);
        assert_eq!(hausdorff_distance::<f64>(&[], &b), Err(KpError::EmptyInput));
    }

    #[test]
    fn loop_validation() {
        assert!(TestLoop::new(vec![Vec3::<f64>::zero(), Vec3::e1()], "a", "").is_err());
        assert!(TestLoop::new(vec![Vec3::<f64>::zero(), Vec3::e1(), Vec3::e1()], "a", "").is_err());
        assert!(TestLoop::new(vec![Vec3::<f64>::zero(), Vec3::e1(), Vec3::e2()], "a", "").is_ok());
    }

    fn rotate(p: Vec3<f64>, axis: Vec3<f64>, ang: f64, shift: Vec3<f64>) -> Vec3<f64> {
        p.rotated(axis, ang) + shift
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn linking_symmetric_and_rigid(
            ax in prop::array::uniform3(-1.0f64..1.0),
            ang in -3.0f64..3.0,
            shift in prop::array::uniform3(-5.0f64..5.0),
            off in 0.2f64..2.5,
        ) {
            let axis = Vec3::from_f64(ax);
            prop_assume!(axis.norm() > 0.1);
            let axis = axis.normalized();
            let a = circle_pts(48, 1.0, Vec3::zero(), 0);
            let b = circle_pts(48, 1.0, Vec3::new(off, 0.0, 0.0), 1);
            let Ok(l1) = linking_number(&a, &b) else { return Ok(()); };
            let l2 = linking_number(&b, &a).unwrap();
            prop_assert_eq!(l1.number, l2.number);
            let s = Vec3::from_f64(shift);
            let ra: Vec<_> = a.iter().map(|&p| rotate(p, axis, ang, s)).collect();
            let rb: Vec<_> = b.iter().map(|&p| rotate(p, axis, ang, s)).collect();
            prop_assert_eq!(linking_number(&ra, &rb).unwrap().number, l1.number);
        }

        #[test]
        fn writhe_rigid_scale_and_mirror(
            ax in prop::array::uniform3(-1.0f64..1.0),
            ang in -3.0f64..3.0,
            scale in 0.1f64..10.0,
        ) {
            let axis = Vec3::from_f64(ax);
            prop_assume!(axis.norm() > 0.1);
            let axis = axis.normalized();
            let base = trefoil(90);
            let w = writhe_polyline(&base);
            let moved: Vec<_> = base.iter().map(|&p| rotate(p * scale, axis, ang, Vec3::new(1.0, -2.0, 0.5))).collect();
            prop_assert!((writhe_polyline(&moved) - w).abs() < 1e-9, "{} {}", writhe_polyline(&moved), w);
            let mirror: Vec<_> = moved.iter().map(|p| Vec3::new(-p.x, p.y, p.z)).collect();
            prop_assert!((writhe_polyline(&mirror) + w).abs() < 1e-9);
        }

        #[test]
        fn hausdorff_is_a_metric(
            a in prop::collection::vec(prop::array::uniform3(-3.0f64..3.0), 1..12),
            b in prop::collection::vec(prop::array::uniform3(-3.0f64..3.0), 1..12),
            c in prop::collection::vec(prop::array::uniform3(-3.0f64..3.0), 1..12),
        ) {
            let conv = |v: &Vec<[f64; 3]>| v.iter().map(|&p| Vec3::<f64>::from_f64(p)).collect::<Vec<_>>();
            let (a, b, c) = (conv(&a), conv(&b), conv(&c));
            let ab = hausdorff_distance(&a, &b).unwrap();
            prop_assert_eq!(ab, hausdorff_distance(&b, &a).unwrap());
            let bc = hausdorff_distance(&b, &c).unwrap();
            let ac = hausdorff_distance(&a, &c).unwrap();
            prop_assert!(ac <= ab + bc + 1e-12);
        }

        #[test]
        fn twist_ignores_the_clamp(ax in prop::array::uniform3(-1.0f64..1.0), ang in -3.0f64..3.0) {
            let axis = Vec3::from_f64(ax);
            prop_assume!(axis.norm() > 0.1);
            let axis = axis.normalized();
            let dens = RodDensities::new(vec![1.0, 2.0, 3.0], vec![0.0; 3], vec![0.5, -1.0, 4.0], 1.5).unwrap();
            let a = RodState::new(dens.clone(), ClampingParams::standard()).unwrap();
            let clamp = ClampingParams::new(Vec3::new(1.0, 2.0, 3.0), Vec3::e1().rotated(axis, ang), Vec3::e2().rotated(axis, ang)).unwrap();
            let b = RodState::new(dens, clamp).unwrap();
            prop_assert_eq!(total_twist(&a), total_twist(&b));
        }
    }
}
