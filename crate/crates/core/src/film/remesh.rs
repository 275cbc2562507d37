//! Local mesh maintenance. Every operation keeps the total area from
//! increasing and refuses to fold triangles.

use std::collections::{BTreeMap, BTreeSet};

use super::{edge_key, FilmMesh};
use crate::geom::{triangle_area, Vec3};
use crate::rod::TubeMesh;
use crate::scalar::Real;

pub(crate) struct RemeshLimits<T> {
    pub length_max: T,
    pub length_min: T,
}

pub(crate) fn maintain<T: Real>(film: &mut FilmMesh<T>, tube: &TubeMesh<T>, limits: &RemeshLimits<T>) {
    flip_edges(film);
    split_edges(film, tube, limits.length_max);
    collapse_edges(film, limits.length_min);
    flip_edges(film);
}

fn normal<T: Real>(film: &FilmMesh<T>, t: [usize; 3]) -> Vec3<T> {
    let (a, b, c) = (film.vertices[t[0]], film.vertices[t[1]], film.vertices[t[2]]);
    (b - a).cross(c - a)
}

/// Rotates `t` so that it starts with the directed edge `a -> b`, if present.
fn align(t: [usize; 3], a: usize, b: usize) -> Option<[usize; 3]> {
    (0..3)
        .map(|k| [t[k], t[(k + 1) % 3], t[(k + 2) % 3]])
        .find(|r| r[0] == a && r[1] == b)
}

/// Flips interior edges whenever the flipped pair has smaller area.
fn flip_edges<T: Real>(film: &mut FilmMesh<T>) {
    let floor = film.area_floor();
    let mut map = film.edge_map();
    let keys: Vec<_> = map.keys().copied().collect();
    for (a, b) in keys {
        let Some(ts) = map.get(&(a, b)) else { continue };
        if ts.len() != 2 {
            continue;
        }
        let (i, j) = (ts[0], ts[1]);
        let (t1, t2) = (film.triangles[i], film.triangles[j]);
        // orient so that t1 = (p, q, c) and t2 = (q, p, d)
        let (p, q) = if align(t1, a, b).is_some() { (a, b) } else { (b, a) };
        let (Some(r1), Some(r2)) = (align(t1, p, q), align(t2, q, p)) else {
            continue;
        };
        let (c, d) = (r1[2], r2[2]);
        if c == d || map.contains_key(&edge_key(c, d)) {
            continue;
        }
        let n1 = [p, d, c];
        let n2 = [d, q, c];
        let old = film.triangle_area(i) + film.triangle_area(j);
        let na = normal(film, n1);
        let nb = normal(film, n2);
        let new = (na.norm() + nb.norm()) * T::half();
        let reference = normal(film, t1) + normal(film, t2);
        if !(new < old - T::epsilon() * old) || na.dot(reference) <= T::zero() || nb.dot(reference) <= T::zero() {
            continue;
        }
        if na.norm() * T::half() <= floor || nb.norm() * T::half() <= floor {
            continue;
        }
        film.triangles[i] = n1;
        film.triangles[j] = n2;
        // keep the map in sync for the remaining candidates
        map.remove(&(a, b));
        map.insert(edge_key(c, d), vec![i, j]);
        for (e, from, to) in [(edge_key(p, d), j, i), (edge_key(q, c), i, j)] {
            if let Some(v) = map.get_mut(&e) {
                for x in v.iter_mut() {
                    if *x == from {
                        *x = to;
                    }
                }
            }
        }
    }
}

/// Splits edges longer than `length_max` at their midpoint. Boundary
/// midpoints go onto the tube; a boundary split that would grow the area is
/// skipped.
fn split_edges<T: Real>(film: &mut FilmMesh<T>, tube: &TubeMesh<T>, length_max: T) {
    let map = film.edge_map();
    let mut long: Vec<((usize, usize), T)> = map
        .keys()
        .map(|&(a, b)| ((a, b), film.vertices[a].dist(film.vertices[b])))
        .filter(|&(_, l)| l > length_max)
        .collect();
    long.sort_by(|x, y| y.1.partial_cmp(&x.1).unwrap().then(x.0.cmp(&y.0)));
    let mut touched = BTreeSet::new();
    for ((a, b), _) in long {
        let ts = &map[&(a, b)];
        if ts.iter().any(|t| touched.contains(t)) {
            continue;
        }
        let mid = (film.vertices[a] + film.vertices[b]) * T::half();
        let (pos, tag) = match (ts.len(), film.tags[a], film.tags[b]) {
            (1, Some(ta), Some(_)) => {
                let (p, t) = tube.project_to_surface(mid, Some(ta.segment));
                (p, Some(t))
            }
            _ => (mid, None),
        };
        let mut new_tris = Vec::new();
        let mut old_area = T::zero();
        let mut ok = true;
        let m = film.vertices.len();
        for &k in ts {
            let t = film.triangles[k];
            let r = align(t, a, b).or_else(|| align(t, b, a)).unwrap();
            let (p, q, c) = (r[0], r[1], r[2]);
            old_area += film.triangle_area(k);
            let before = normal(film, t);
            let t1 = [p, m, c];
            let t2 = [m, q, c];
            for nt in [t1, t2] {
                let pts = nt.map(|v| if v == m { pos } else { film.vertices[v] });
                let n = (pts[1] - pts[0]).cross(pts[2] - pts[0]);
                if n.dot(before) <= T::zero() {
                    ok = false;
                }
            }
            new_tris.push((k, t1, t2));
        }
        if !ok {
            continue;
        }
        if tag.is_some() {
            let new_area: T = new_tris
                .iter()
                .map(|(_, t1, t2)| {
                    let at = |t: &[usize; 3]| {
                        let p = t.map(|v| if v == m { pos } else { film.vertices[v] });
                        triangle_area(p[0], p[1], p[2])
                    };
                    at(t1) + at(t2)
                })
                .sum();
            if new_area > old_area {
                continue;
            }
        }
        film.vertices.push(pos);
        film.tags.push(tag);
        for (k, t1, t2) in new_tris {
            touched.insert(k);
            film.triangles[k] = t1;
            touched.insert(film.triangles.len());
            film.triangles.push(t2);
        }
    }
}

/// Collapses interior edges shorter than `length_min` between untagged
/// vertices, subject to the link condition.
fn collapse_edges<T: Real>(film: &mut FilmMesh<T>, length_min: T) {
    let floor = film.area_floor();
    let map = film.edge_map();
    let mut short: Vec<((usize, usize), T)> = map
        .iter()
        .filter(|(_, ts)| ts.len() == 2)
        .map(|(&(a, b), _)| ((a, b), film.vertices[a].dist(film.vertices[b])))
        .filter(|&((a, b), l)| l < length_min && film.tags[a].is_none() && film.tags[b].is_none())
        .collect();
    if short.is_empty() {
        return;
    }
    short.sort_by(|x, y| x.1.partial_cmp(&y.1).unwrap().then(x.0.cmp(&y.0)));
    // vertex -> incident triangles
    let mut star: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for (k, t) in film.triangles.iter().enumerate() {
        for &v in t {
            star.entry(v).or_default().insert(k);
        }
    }
    let boundary_vertex: BTreeSet<usize> = map
        .iter()
        .filter(|(_, ts)| ts.len() == 1)
        .flat_map(|(&(a, b), _)| [a, b])
        .collect();
    let mut dead = vec![false; film.triangles.len()];
    let mut locked = BTreeSet::new();
    for ((a, b), _) in short {
        if locked.contains(&a) || locked.contains(&b) || boundary_vertex.contains(&a) || boundary_vertex.contains(&b) {
            continue;
        }
        let sa = &star[&a];
        let sb = &star[&b];
        let shared: Vec<usize> = sa.intersection(sb).copied().collect();
        if shared.len() != 2 {
            continue;
        }
        let ring = |s: &BTreeSet<usize>, me: usize| -> BTreeSet<usize> {
            s.iter().flat_map(|&k| film.triangles[k]).filter(|&v| v != me).collect()
        };
        let na = ring(sa, a);
        let nb = ring(sb, b);
        let common: BTreeSet<usize> = na.intersection(&nb).copied().collect();
        let opposite: BTreeSet<usize> = shared
            .iter()
            .flat_map(|&k| film.triangles[k])
            .filter(|&v| v != a && v != b)
            .collect();
        if common != opposite {
            continue;
        }
        let pos = (film.vertices[a] + film.vertices[b]) * T::half();
        let mut old_area = T::zero();
        let mut new_area = T::zero();
        let mut ok = true;
        let mut rewritten = Vec::new();
        for &k in sa.union(sb) {
            let t = film.triangles[k];
            old_area += film.triangle_area(k);
            if shared.contains(&k) {
                continue;
            }
            let nt = t.map(|v| if v == b { a } else { v });
            let p = nt.map(|v| if v == a { pos } else { film.vertices[v] });
            let n = (p[1] - p[0]).cross(p[2] - p[0]);
            if n.dot(normal(film, t)) <= T::zero() || n.norm() * T::half() <= floor {
                ok = false;
                break;
            }
            new_area += n.norm() * T::half();
            rewritten.push((k, nt));
        }
        if !ok || new_area > old_area {
            continue;
        }
        film.vertices[a] = pos;
        for (k, nt) in rewritten {
            film.triangles[k] = nt;
        }
        for &k in &shared {
            dead[k] = true;
        }
        for v in na.union(&nb) {
            locked.insert(*v);
        }
        locked.insert(a);
        locked.insert(b);
    }
    let mut kept = Vec::with_capacity(film.triangles.len());
    for (k, t) in film.triangles.iter().enumerate() {
        if !dead[k] {
            kept.push(*t);
        }
    }
    film.triangles = kept;
    film.compact();
}

#[cfg(test)]
mod tests {
    use super::super::{area_unchecked, FilmMesh};
    use super::*;

    fn quad(h: f64) -> FilmMesh<f64> {
        // kite split along its long diagonal; raising the short one by h
        // makes the other diagonal cheaper
        let v = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(2.0, 1.0, h),
            Vec3::new(4.0, 0.0, 0.0),
            Vec3::new(2.0, -1.0, h),
        ];
        FilmMesh::new(v, vec![[0, 1, 2], [0, 2, 3]], vec![None; 4]).unwrap()
    }

    #[test]
    fn flip_reduces_area_of_bent_quad() {
        let mut f = quad(0.5);
        let before = area_unchecked(&f);
        flip_edges(&mut f);
        let after = area_unchecked(&f);
        // 4 sqrt(1 + h^2) before, 2 sqrt(4 + h^2) after
        assert!((before - 4.0 * 1.25f64.sqrt()).abs() < 1e-12);
        assert!((after - 2.0 * 4.25f64.sqrt()).abs() < 1e-12);
        assert!(f.edge_map().contains_key(&(1, 3)));
        // the flat version is left alone
        let mut flat = quad(0.0);
        flip_edges(&mut flat);
        assert!(flat.edge_map().contains_key(&(0, 2)));
    }

    #[test]
    fn interior_split_keeps_area() {
        let mut f = quad(0.3);
        let tube = super::super::tests::circle_tube(16, 10.0, 0.01, 6);
        let a = area_unchecked(&f);
        split_edges(&mut f, &tube, 0.5);
        assert!(f.triangles.len() > 2);
        assert!((area_unchecked(&f) - a).abs() < 1e-14);
        f.validate().unwrap();
    }

    #[test]
    fn collapse_removes_short_interior_edge() {
        let tube = super::super::tests::circle_tube(16, 10.0, 0.01, 6);
        let mut f = super::super::refine(&super::super::tests::disk(12, 1.0), &tube);
        // pull one spoke midpoint next to the centre
        let k = (0..f.vertices.len())
            .find(|&v| (f.vertices[v].dist(Vec3::new(0.5, 0.0, 0.0))) < 1e-12)
            .unwrap();
        f.vertices[k] = Vec3::new(0.01, 0.0, 0.0);
        let (a, t) = (area_unchecked(&f), f.triangles.len());
        collapse_edges(&mut f, 0.05);
        assert_eq!(f.triangles.len(), t - 2);
        assert!((area_unchecked(&f) - a).abs() < 1e-14);
        f.validate().unwrap();
    }
}
