use rayon::prelude::*;

use super::remesh::{maintain, RemeshLimits};
use super::{area_gradient, area_unchecked, FilmMesh};
use crate::error::Result;
use crate::geom::Vec3;
use crate::rod::TubeMesh;
use crate::scalar::Real;
use crate::topology::{check_loop_clear, loop_meets_film, TestLoop};

/// Controls for [`relax_film`].
#[derive(Clone, Debug, PartialEq)]
pub struct RelaxOptions {
    pub max_iters: usize,
    pub tol_rel: f64,
    pub window: usize,
    pub maintenance_period: usize,
    /// split threshold as a multiple of the initial mean edge
    pub length_max: f64,
    /// collapse threshold as a multiple of the initial mean edge
    pub length_min: f64,
    /// initial step as a multiple of the squared mean edge
    pub step: f64,
    /// smallest step, relative to the initial one, before giving up
    pub min_step: f64,
}

impl Default for RelaxOptions {
    fn default() -> Self {
        Self {
            max_iters: 20_000,
            tol_rel: 1e-7,
            window: 50,
            maintenance_period: 25,
            length_max: 2.0,
            length_min: 0.2,
            step: 0.1,
            min_step: 1e-9,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RelaxReport<T> {
    pub iterations: usize,
    pub final_area: T,
    /// area after every accepted step or maintenance pass
    pub area_trace: Vec<T>,
    /// spanning result at every maintenance checkpoint
    pub spanning_ok: Vec<bool>,
    pub converged: bool,
    pub rollbacks: usize,
    pub min_angle: T,
    pub vertices: usize,
    pub triangles: usize,
}

/// Pulls tagged vertices back onto the tube surface and pushes interior
/// vertices out of the open tube interior.
fn confine<T: Real>(film: &mut FilmMesh<T>, tube: &TubeMesh<T>) {
    let moved: Vec<_> = film
        .vertices
        .par_iter()
        .zip(&film.tags)
        .map(|(&v, tag)| match tag {
            Some(tag) => {
                let (p, t) = tube.project_to_surface(v, Some(tag.segment));
                (p, Some(t))
            }
            None => {
                if tube.contains(v, true) {
                    let (p, _) = tube.project_to_surface(v, None);
                    (p, None)
                } else {
                    (v, None)
                }
            }
        })
        .collect();
    for (k, (p, tag)) in moved.into_iter().enumerate() {
        film.vertices[k] = p;
        if tag.is_some() {
            film.tags[k] = tag;
        }
    }
}

fn normals<T: Real>(film: &FilmMesh<T>) -> Vec<Vec3<T>> {
    film.triangles
        .iter()
        .map(|t| {
            let (a, b, c) = (film.vertices[t[0]], film.vertices[t[1]], film.vertices[t[2]]);
            (b - a).cross(c - a)
        })
        .collect()
}

/// No triangle collapsed or turned over relative to `before`.
fn orientation_kept<T: Real>(film: &FilmMesh<T>, before: &[Vec3<T>]) -> bool {
    let floor = film.area_floor();
    normals(film)
        .iter()
        .zip(before)
        .all(|(n, o)| n.norm() * T::half() > floor && n.dot(*o) > T::zero())
}

fn spans<T: Real>(film: &FilmMesh<T>, loops: &[TestLoop<T>]) -> bool {
    loops.iter().all(|lp| loop_meets_film(film, lp))
}

/// Area descent of the film with the boundary sliding on the tube.
///
/// Steps move every vertex along the mass-normalized negative area gradient
/// and are accepted only if the area drops after confinement. Every
/// `maintenance_period` iterations the mesh is flipped, split and collapsed
/// and the loops are re-tested; a lost loop rolls back to the previous
/// checkpoint with half the step.
pub fn relax_film<T: Real>(
    film: &FilmMesh<T>,
    tube: &TubeMesh<T>,
    loops: &[TestLoop<T>],
    opts: &RelaxOptions,
) -> Result<(FilmMesh<T>, RelaxReport<T>)> {
    film.validate()?;
    for lp in loops {
        check_loop_clear(lp, tube)?;
    }
    let mut film = film.clone();
    let mean_edge = film.mean_edge_length();
    let limits = RemeshLimits {
        length_max: T::lit(opts.length_max) * mean_edge,
        length_min: T::lit(opts.length_min) * mean_edge,
    };
    let alpha0 = T::lit(opts.step) * mean_edge * mean_edge;
    let alpha_min = alpha0 * T::lit(opts.min_step);
    let alpha_max = alpha0 * T::lit(100.0);
    let mut alpha = alpha0;
    let mut area = area_unchecked(&film);
    let mut trace = vec![area];
    let mut spanning_ok = vec![spans(&film, loops)];
    let mut checkpoint = (film.clone(), trace.len());
    let mut rollbacks = 0;
    let mut converged = false;
    let mut iterations = 0;
    let tol = T::lit(opts.tol_rel);

    while iterations < opts.max_iters {
        iterations += 1;
        let grad = area_gradient(&film);
        let mut mass = vec![T::zero(); film.vertices.len()];
        for k in 0..film.triangles.len() {
            let a = film.triangle_area(k) / T::lit(3.0);
            for &v in &film.triangles[k] {
                mass[v] += a;
            }
        }
        let before = normals(&film);
        let mut accepted = false;
        while alpha >= alpha_min {
            let mut cand = film.clone();
            for (k, v) in cand.vertices.iter_mut().enumerate() {
                if mass[k] > T::zero() {
                    *v -= grad[k] * (alpha / mass[k]);
                }
            }
            confine(&mut cand, tube);
            if orientation_kept(&cand, &before) {
                let a = area_unchecked(&cand);
                if a < area {
                    film = cand;
                    area = a;
                    accepted = true;
                    break;
                }
            }
            alpha = alpha * T::half();
        }
        if !accepted {
            // no descent direction left at the smallest step
            converged = true;
            break;
        }
        trace.push(area);
        alpha = (alpha * T::lit(1.5)).min(alpha_max);

        if opts.maintenance_period > 0 && iterations % opts.maintenance_period == 0 {
            maintain(&mut film, tube, &limits);
            let ok = spans(&film, loops);
            spanning_ok.push(ok);
            if ok {
                area = area_unchecked(&film);
                trace.push(area);
                checkpoint = (film.clone(), trace.len());
            } else {
                rollbacks += 1;
                film = checkpoint.0.clone();
                trace.truncate(checkpoint.1);
                area = *trace.last().unwrap();
                alpha = alpha * T::half();
                if alpha < alpha_min {
                    break;
                }
                continue;
            }
        }
        let w = opts.window;
        if trace.len() > w {
            let past = trace[trace.len() - 1 - w];
            if (past - area) <= tol * area.abs() {
                converged = true;
                break;
            }
        }
    }
    // the returned film always spans: fall back to the last checkpoint
    if !spans(&film, loops) {
        film = checkpoint.0.clone();
        trace.truncate(checkpoint.1);
        area = *trace.last().unwrap();
    }
    let report = RelaxReport {
        iterations,
        final_area: area,
        area_trace: trace,
        spanning_ok,
        converged,
        rollbacks,
        min_angle: film.min_angle(),
        vertices: film.vertices.len(),
        triangles: film.triangles.len(),
    };
    Ok((film, report))
}

#[cfg(test)]
mod tests {
    use super::super::tests::circle_tube;
    use super::super::{film_area, init_film};
    use super::*;
    use crate::topology::canonical_threading_loop;
    use std::f64::consts::PI;

    #[test]
    fn relaxed_disk_on_circular_tube() {
        let tube = circle_tube(100, 1.0, 0.05, 16);
        let lp = canonical_threading_loop(&tube.curve, &tube.section).unwrap();
        let film = init_film(&tube.curve, &tube).unwrap();
        let (out, rep) = relax_film(&film, &tube, &[lp.clone()], &RelaxOptions::default()).unwrap();
        let oracle = PI * 0.95f64.powi(2);
        assert!((rep.final_area - oracle).abs() < 0.02 * oracle, "{}", rep.final_area);
        assert!(rep.area_trace.windows(2).all(|w| w[1] <= w[0]));
        assert!(rep.spanning_ok.iter().all(|&b| b));
        assert!(loop_meets_film(&out, &lp));
        for (v, tag) in out.vertices.iter().zip(&out.tags) {
            match tag {
                Some(tag) => assert!(tube.surface_point(tag).dist(*v) <= 1e-9 * 0.05),
                None => assert!(!tube.contains(*v, true)),
            }
        }
    }

    #[test]
    fn flat_disk_is_stationary() {
        let tube = circle_tube(64, 1.0, 0.05, 12);
        let film = init_film(&tube.curve, &tube).unwrap();
        let opts = RelaxOptions {
            max_iters: 100,
            ..RelaxOptions::default()
        };
        let (out, rep) = relax_film(&film, &tube, &[], &opts).unwrap();
        let a0 = film_area(&film).unwrap();
        let a1 = film_area(&out).unwrap();
        assert!((a0 - a1) / a0 < 1e-9, "{a0} {a1}");
        assert!(rep.area_trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn spike_is_flattened() {
        let tube = circle_tube(64, 1.0, 0.05, 12);
        let mut film = init_film(&tube.curve, &tube).unwrap();
        film.vertices[0].z += 0.3;
        let spiked = film_area(&film).unwrap();
        let (_, rep) = relax_film(&film, &tube, &[], &RelaxOptions::default()).unwrap();
        assert!(rep.final_area < spiked);
        let oracle = PI * 0.95f64.powi(2);
        assert!((rep.final_area - oracle).abs() < 0.02 * oracle);
    }

    #[test]
    fn relaxed_area_scales_quadratically() {
        let base = {
            let tube = circle_tube(64, 1.0, 0.05, 12);
            let f = init_film(&tube.curve, &tube).unwrap();
            relax_film(&f, &tube, &[], &RelaxOptions::default()).unwrap().1.final_area
        };
        for lam in [0.5, 2.0] {
            let tube = circle_tube(64, lam, 0.05 * lam, 12);
            let f = init_film(&tube.curve, &tube).unwrap();
            let a = relax_film(&f, &tube, &[], &RelaxOptions::default()).unwrap().1.final_area;
            assert!((a / (lam * lam) - base).abs() < 1e-3 * base);
        }
    }
}
