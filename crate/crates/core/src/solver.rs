//! Constrained minimization of the loop energy and of the coupled
//! rod + film energy.
//!
//! The variables are the `3N` densities; the clamp is fixed. Each outer step
//! takes a finite-difference gradient of a smooth merit function
//!
//! ```text
//! E_sh + barrier + E_g + mu_x r_x^2 + mu_t r_t^2 + mu_d r_d^2 + contact + 2 sigma area
//! ```
//!
//! projects it onto the tangent space of the closure constraints, and after
//! the move restores closure by minimum-norm Gauss-Newton corrections. A step
//! is kept only if it lowers the merit, does not raise the physical energy,
//! leaves every margin positive, keeps the link number and stays free of
//! self-contact.

use rayon::prelude::*;

use crate::energy::{
    contact_slack, energy_breakdown, gravity_energy_curve, local_injectivity_margin, ni_barrier, self_contact_penalty,
    shape_energy, EnergyBreakdown, MaterialParams,
};
use crate::error::{KpError, Result};
use crate::film::{film_area, init_film, relax_film, replace_boundary, FilmMesh, RelaxOptions};
use crate::geom::{solve_dense, Mat3, Vec3};
use crate::rod::{
    build_tube, closure_residuals, integrate_end, integrate_frame, ClampingParams, ClosureResiduals, CrossSection,
    FramedCurve, RodDensities, RodState, TubeMesh,
};
use crate::scalar::Real;
use crate::topology::{
    hausdorff_distance, rod_link_number_curve, spanning_check, total_twist, writhe, LinkSpec, TestLoop,
};

/// Constraint set of a solve.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintSpec<T> {
    pub clamp: ClampingParams<T>,
    pub link: LinkSpec<T>,
    /// Knot template. It is validated and stored; the knot type itself is
    /// kept by continuity of the descent.
    pub knot_template: Option<Vec<Vec3<T>>>,
    pub energy_bound: Option<T>,
}

impl<T: Real> ConstraintSpec<T> {
    /// Constraints matching `state`: its clamp and its own link number.
    pub fn for_state(state: &RodState<T>, section: &CrossSection<T>, glue_angle: T) -> Result<Self> {
        let curve = integrate_frame(state);
        let link_number = rod_link_number_curve(&curve, link_epsilon(section), glue_angle)?;
        Ok(Self {
            clamp: state.clamp,
            link: LinkSpec {
                glue_angle,
                link_number,
            },
            knot_template: None,
            energy_bound: None,
        })
    }

    pub fn validate(&self) -> Result<()> {
        ClampingParams::new(self.clamp.x0, self.clamp.t0, self.clamp.d0)?;
        if !self.link.glue_angle.is_finite() {
            return Err(KpError::InvalidInput("glue angle must be finite".into()));
        }
        if let Some(tpl) = &self.knot_template {
            if tpl.len() < 3 || tpl.iter().any(|p| !p.is_finite()) {
                return Err(KpError::InvalidInput("knot template needs 3+ finite points".into()));
            }
        }
        Ok(())
    }
}

/// Offset distance used for the rod link number.
pub fn link_epsilon<T: Real>(section: &CrossSection<T>) -> T {
    section.inradius() * T::half()
}

/// Solver controls. Penalty and barrier weights and `gtol` are relative to
/// the bending energy scale `max(a1, a2, a3) / L`; `contact_stiffness` is
/// absolute (energy per squared length).
#[derive(Clone, Debug, PartialEq)]
pub struct SolveOptions {
    pub mu_x: f64,
    pub mu_t: f64,
    pub mu_d: f64,
    /// initial barrier weight and its per-step decay factor
    pub beta: f64,
    pub beta_decay: f64,
    pub beta_min: f64,
    pub contact_stiffness: f64,
    pub max_outer: usize,
    /// finite-difference step, relative to `max(1/L, |density|)`
    pub h_fd: f64,
    pub film_warm_start: bool,
    pub seed: u64,
    /// projected-gradient tolerance
    pub gtol: f64,
    /// relative energy decrease over `stall_window` accepted steps
    pub ftol: f64,
    pub stall_window: usize,
    /// closure target as a fraction of `L`
    pub closure_tol: f64,
    /// film iterations spent on each finite-difference perturbation
    pub inner_fd_iters: usize,
    /// largest density change per step, in units of `1/L`
    pub max_step: f64,
    pub film: RelaxOptions,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            mu_x: 1e3,
            mu_t: 1e3,
            mu_d: 1e3,
            beta: 1e-6,
            beta_decay: 0.5,
            beta_min: 1e-12,
            contact_stiffness: 1e6,
            max_outer: 200,
            h_fd: 1e-6,
            film_warm_start: true,
            seed: 0,
            gtol: 1e-6,
            ftol: 1e-6,
            stall_window: 5,
            closure_tol: 1e-10,
            inner_fd_iters: 0,
            max_step: 1.0,
            film: RelaxOptions::default(),
        }
    }
}

/// Link, twist and writhe of an accepted state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinkRecord<T> {
    pub link: i64,
    pub twist: T,
    pub writhe: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KPReport<T> {
    /// energies of the initial and every accepted state
    pub trace: Vec<EnergyBreakdown<T>>,
    pub residuals: Vec<ClosureResiduals<T>>,
    pub links: Vec<LinkRecord<T>>,
    /// Hausdorff distance between consecutive accepted tubes
    pub hausdorff: Vec<T>,
    pub iterations: usize,
    pub accepted: usize,
    pub converged: bool,
    pub termination: String,
    /// projected gradient max-norm at the start and at termination
    pub initial_gradient_norm: T,
    pub gradient_norm: T,
    pub contact_penalty: T,
    pub penalty_escalations: usize,
    pub final_state: RodState<T>,
    pub film: Option<FilmMesh<T>>,
}

impl<T: Real> KPReport<T> {
    pub fn final_energy(&self) -> &EnergyBreakdown<T> {
        self.trace.last().unwrap()
    }
}

/// Closure defect of an end frame: position offset over `L`, then the
/// rotation vector taking the glued clamp frame to the end frame.
fn closure_of_end<T: Real>(c: &ClampingParams<T>, length: T, glue: T, x: Vec3<T>, end: Mat3<T>) -> [T; 6] {
    let dx = (x - c.x0) / length;
    let dt = c.d0.rotated(c.t0, glue);
    let target = Mat3::from_cols(c.t0, dt, c.t0.cross(dt));
    let w = end.mul_mat(&target.transpose()).rotation_log();
    [dx.x, dx.y, dx.z, w.x, w.y, w.z]
}

fn closure_vector<T: Real>(state: &RodState<T>, glue: T) -> [T; 6] {
    let (x, t, d) = integrate_end(state);
    closure_of_end(&state.clamp, state.length(), glue, x, Mat3::from_cols(t, d, t.cross(d)))
}

fn norm6<T: Real>(c: &[T; 6]) -> T {
    c.iter().map(|v| *v * *v).sum::<T>().sqrt()
}

fn fd_step<T: Real>(v: T, length: T, rel: T) -> T {
    rel * v.abs().max(T::one() / length)
}

/// One segment as a rigid motion in the body frame of its first node.
fn segment_motion<T: Real>(c: [T; 3], h: T) -> (Mat3<T>, Vec3<T>) {
    let (p, t, d) = crate::rod::advance(Vec3::zero(), Vec3::e1(), Vec3::e2(), c, h);
    (Mat3::from_cols(t, d, t.cross(d)), p)
}

/// Columns `d c / d v_k` by central differences. Node frames and suffix
/// motions are precomputed, so each column costs one segment.
fn closure_jacobian<T: Real>(v: &[T], state: &RodState<T>, glue: T) -> Vec<[T; 6]> {
    let l = state.length();
    let dens = RodDensities::from_vector(v, l);
    let n = dens.segments();
    let h = dens.segment_length();
    let curve = integrate_frame(&state.with_densities(dens.clone()));
    let frames: Vec<Mat3<T>> = (0..=n)
        .map(|i| Mat3::from_cols(curve.tangents[i], curve.directors[i], curve.binormal(i)))
        .collect();
    // end = node i+1 composed with (rot[i+1], off[i+1]) in its body frame
    let mut rot = vec![Mat3::identity(); n + 1];
    let mut off = vec![Vec3::zero(); n + 1];
    for i in (0..n).rev() {
        let (r, p) = segment_motion(dens.segment(i), h);
        rot[i] = r.mul_mat(&rot[i + 1]);
        off[i] = p + r.mul_vec(off[i + 1]);
    }
    (0..3 * n)
        .into_par_iter()
        .map(|k| {
            let (i, comp) = (k % n, k / n);
            let step = fd_step(v[k], l, T::lit(1e-7));
            let eval = |sign: T| {
                let mut c = dens.segment(i);
                c[comp] += sign * step;
                let (r, p) = segment_motion(c, h);
                let end = frames[i].mul_mat(&r.mul_mat(&rot[i + 1]));
                let x = curve.nodes[i] + frames[i].mul_vec(p + r.mul_vec(off[i + 1]));
                closure_of_end(&state.clamp, l, glue, x, end)
            };
            let (cp, cm) = (eval(T::one()), eval(-T::one()));
            let mut col = [T::zero(); 6];
            for r in 0..6 {
                col[r] = (cp[r] - cm[r]) / (T::two() * step);
            }
            col
        })
        .collect()
}

/// `(J J^T)^{-1} J w` for the 6-row Jacobian given by columns.
fn gram_solve<T: Real>(jac: &[[T; 6]], rhs: [T; 6]) -> Option<[T; 6]> {
    let mut g = vec![vec![T::zero(); 6]; 6];
    for col in jac {
        for r in 0..6 {
            for c in 0..6 {
                g[r][c] += col[r] * col[c];
            }
        }
    }
    let sol = solve_dense(g, rhs.to_vec())?;
    let mut out = [T::zero(); 6];
    out.copy_from_slice(&sol);
    Some(out)
}

/// Projects `g` onto the null space of the closure Jacobian.
fn project<T: Real>(jac: &[[T; 6]], g: &[T]) -> Vec<T> {
    let mut jg = [T::zero(); 6];
    for (col, &gk) in jac.iter().zip(g) {
        for r in 0..6 {
            jg[r] += col[r] * gk;
        }
    }
    match gram_solve(jac, jg) {
        Some(lam) => g
            .iter()
            .zip(jac)
            .map(|(&gk, col)| gk - (0..6).map(|r| col[r] * lam[r]).sum::<T>())
            .collect(),
        None => g.to_vec(),
    }
}

/// Minimum-norm Gauss-Newton restoration of closure. Returns the corrected
/// density vector or `None` when the defect cannot be brought below `tol`.
fn restore_vector<T: Real>(v: &[T], state: &RodState<T>, glue: T, tol: T) -> Option<Vec<T>> {
    let l = state.length();
    let eval = |v: &[T]| closure_vector(&state.with_densities(RodDensities::from_vector(v, l)), glue);
    let mut v = v.to_vec();
    let mut c = eval(&v);
    let mut r = norm6(&c);
    for _ in 0..40 {
        if r <= tol {
            return Some(v);
        }
        let jac = closure_jacobian(&v, state, glue);
        let lam = gram_solve(&jac, c)?;
        let dv: Vec<T> = jac.iter().map(|col| (0..6).map(|k| col[k] * lam[k]).sum::<T>()).collect();
        let mut step = T::one();
        let mut improved = false;
        for _ in 0..20 {
            let cand: Vec<T> = v.iter().zip(&dv).map(|(&a, &d)| a - d * step).collect();
            let cc = eval(&cand);
            let rc = norm6(&cc);
            if rc < r {
                v = cand;
                c = cc;
                r = rc;
                improved = true;
                break;
            }
            step = step * T::half();
        }
        if !improved {
            break;
        }
    }
    if r <= tol {
        Some(v)
    } else {
        None
    }
}

/// Closes `state` (with gluing angle `glue`) by a minimum-norm change of its
/// densities, to a defect of `tol` (relative to `L`).
pub fn reclose<T: Real>(state: &RodState<T>, glue: T, tol: T) -> Result<RodState<T>> {
    let v = state.densities.to_vector();
    let l = state.length();
    match restore_vector(&v, state, glue, tol) {
        Some(v) => Ok(state.with_densities(RodDensities::from_vector(&v, l))),
        None => {
            let c = closure_vector(state, glue);
            Err(KpError::ClosureFailed(norm6(&c).to_f64_lossy()))
        }
    }
}

/// Film data carried through the coupled solve.
struct FilmState<T> {
    film: FilmMesh<T>,
    area: T,
}

struct Problem<'a, T> {
    section: &'a CrossSection<T>,
    mat: &'a MaterialParams<T>,
    cons: &'a ConstraintSpec<T>,
    opts: &'a SolveOptions,
    loops: &'a [TestLoop<T>],
    length: T,
    template: RodState<T>,
    sigma: T,
}

struct Point<T> {
    v: Vec<T>,
    state: RodState<T>,
    curve: FramedCurve<T>,
    energy: EnergyBreakdown<T>,
    merit: T,
    film: Option<FilmState<T>>,
}

impl<'a, T: Real> Problem<'a, T> {
    fn state_of(&self, v: &[T]) -> RodState<T> {
        self.template.with_densities(RodDensities::from_vector(v, self.length))
    }

    fn glue(&self) -> T {
        self.cons.link.glue_angle
    }

    fn closure_tol(&self) -> T {
        T::lit(self.opts.closure_tol)
    }

    fn penalties(&self, curve: &FramedCurve<T>, mu: &[T; 3]) -> T {
        let r = closure_residuals(curve, &self.cons.clamp, self.glue());
        mu[0] * r.r_x * r.r_x / (self.length * self.length) + mu[1] * r.r_t * r.r_t + mu[2] * r.r_d * r.r_d
    }

    /// Smooth merit; `None` when a margin is not positive. `film_area` is the
    /// film term already evaluated for this state.
    fn merit(&self, state: &RodState<T>, curve: &FramedCurve<T>, beta: T, mu: &[T; 3], contact: T, film_area: T) -> Option<T> {
        let barrier = ni_barrier(state, self.section, beta).ok()?;
        let e = shape_energy(state, self.mat) + gravity_energy_curve(curve, self.section, self.mat);
        Some(e + barrier + self.penalties(curve, mu) + contact + T::two() * self.sigma * film_area)
    }

    fn contact(&self, curve: &FramedCurve<T>) -> T {
        self_contact_penalty(curve, self.section, T::lit(self.opts.contact_stiffness))
    }

    /// Film area for a perturbed curve with the base film's boundary pinned
    /// to its tags.
    fn perturbed_area(&self, film: &FilmState<T>, curve: &FramedCurve<T>) -> T {
        let moved = replace_boundary(&film.film, curve, self.section);
        if self.opts.inner_fd_iters > 0 {
            if let Ok(tube) = build_tube(curve, self.section) {
                let opts = RelaxOptions {
                    max_iters: self.opts.inner_fd_iters,
                    maintenance_period: 0,
                    ..self.opts.film.clone()
                };
                if let Ok((_, rep)) = relax_film(&moved, &tube, &[], &opts) {
                    return rep.final_area;
                }
            }
        }
        crate::film::area_unchecked(&moved)
    }

    /// Finite-difference L2 gradient of the merit at `p`.
    fn gradient(&self, p: &Point<T>, beta: T, mu: &[T; 3]) -> Vec<T> {
        let h_seg = p.state.densities.segment_length();
        let rel = T::lit(self.opts.h_fd);
        // a single density change of size dk moves the curve by at most dk h L
        let slack = contact_slack(&p.curve, self.section);
        (0..p.v.len())
            .into_par_iter()
            .map(|k| {
                let dk = fd_step(p.v[k], self.length, rel);
                let contact_free = slack > T::two() * dk * h_seg * self.length;
                let f = |sign: T| {
                    let mut v = p.v.clone();
                    v[k] += sign * dk;
                    let st = self.state_of(&v);
                    let curve = integrate_frame(&st);
                    let contact = if contact_free { T::zero() } else { self.contact(&curve) };
                    let area = p.film.as_ref().map_or(T::zero(), |f| self.perturbed_area(f, &curve));
                    self.merit(&st, &curve, beta, mu, contact, area)
                };
                match (f(T::one()), f(-T::one())) {
                    (Some(a), Some(b)) => (a - b) / (T::two() * dk) / h_seg,
                    (Some(a), None) => (a - p.merit) / dk / h_seg,
                    (None, Some(b)) => (p.merit - b) / dk / h_seg,
                    (None, None) => T::zero(),
                }
            })
            .collect()
    }

    fn link_of(&self, curve: &FramedCurve<T>) -> Option<i64> {
        rod_link_number_curve(curve, link_epsilon(self.section), self.glue()).ok()
    }

    /// Relaxes the film for `curve`, warm-started from `prev` when given.
    fn relax_for(&self, curve: &FramedCurve<T>, prev: Option<&FilmMesh<T>>) -> Result<(FilmState<T>, TubeMesh<T>)> {
        let tube = build_tube(curve, self.section)?;
        let start = match prev {
            Some(f) if self.opts.film_warm_start => replace_boundary(f, curve, self.section),
            _ => init_film(curve, &tube)?,
        };
        let (film, rep) = relax_film(&start, &tube, self.loops, &self.opts.film)?;
        if !spanning_check(&film, self.loops, &tube)?.iter().all(|&b| b) {
            return Err(KpError::NotSpanning(
                self.loops.iter().map(|l| l.label.as_str()).collect::<Vec<_>>().join(","),
            ));
        }
        Ok((
            FilmState {
                film,
                area: rep.final_area,
            },
            tube,
        ))
    }

    /// Evaluates a closed candidate vector, returning `None` if it violates a
    /// hard constraint.
    fn evaluate(
        &self,
        v: Vec<T>,
        beta: T,
        mu: &[T; 3],
        link: i64,
        prev_film: Option<&FilmMesh<T>>,
    ) -> Option<Point<T>> {
        let state = self.state_of(&v);
        if !local_injectivity_margin(&state, self.section).iter().all(|&m| m > T::zero()) {
            return None;
        }
        let curve = integrate_frame(&state);
        if self.link_of(&curve) != Some(link) {
            return None;
        }
        if contact_slack(&curve, self.section) < T::zero() {
            return None;
        }
        let film = match prev_film {
            Some(f) if self.sigma > T::zero() => Some(self.relax_for(&curve, Some(f)).ok()?.0),
            _ => None,
        };
        let area = film.as_ref().map_or(T::zero(), |f| f.area);
        let merit = self.merit(&state, &curve, beta, mu, T::zero(), area)?;
        let e_film = T::two() * self.sigma * area;
        let energy = energy_breakdown(&state, &curve, self.section, self.mat, e_film);
        Some(Point {
            v,
            state,
            curve,
            energy,
            merit,
            film,
        })
    }
}

fn inf_norm<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |a, b| a.max(b.abs()))
}

fn record<T: Real>(report: &mut KPReport<T>, p: &Point<T>, cons: &ConstraintSpec<T>, link: i64) {
    report.trace.push(p.energy.clone());
    report
        .residuals
        .push(closure_residuals(&p.curve, &cons.clamp, cons.link.glue_angle));
    report.links.push(LinkRecord {
        link,
        twist: total_twist(&p.state),
        writhe: writhe(&p.curve).unwrap_or(T::nan()),
    });
}

/// Shared descent loop; `film` carries the initial relaxed film when the
/// film term is active.
fn descend<T: Real>(
    init: &RodState<T>,
    section: &CrossSection<T>,
    mat: &MaterialParams<T>,
    cons: &ConstraintSpec<T>,
    loops: &[TestLoop<T>],
    opts: &SolveOptions,
    sigma: T,
    film: Option<FilmMesh<T>>,
) -> Result<KPReport<T>> {
    mat.validate()?;
    cons.validate()?;
    let template = RodState::new(init.densities.clone(), cons.clamp)?;
    let margins = local_injectivity_margin(&template, section);
    let min_margin = margins.iter().copied().fold(T::infinity(), T::min);
    if !(min_margin > T::zero()) {
        return Err(KpError::Infeasible {
            min_margin: min_margin.to_f64_lossy(),
        });
    }
    let prob = Problem {
        section,
        mat,
        cons,
        opts,
        loops,
        length: template.length(),
        template: template.clone(),
        sigma,
    };
    let l = prob.length;
    let tol = prob.closure_tol();
    // weights are given relative to the bending energy scale a/L
    let e_scale = mat.a1.max(mat.a2).max(mat.a3) / l;
    let mut mu = [T::lit(opts.mu_x), T::lit(opts.mu_t), T::lit(opts.mu_d)].map(|m| m * e_scale);
    let mut beta = T::lit(opts.beta) * e_scale / l;
    let beta_min = T::lit(opts.beta_min) * e_scale / l;

    // start from a closed state
    let mut v0 = template.densities.to_vector();
    if norm6(&closure_vector(&template, prob.glue())) > tol {
        v0 = restore_vector(&v0, &template, prob.glue(), tol)
            .ok_or_else(|| KpError::ClosureFailed(norm6(&closure_vector(&template, prob.glue())).to_f64_lossy()))?;
    }
    let curve0 = integrate_frame(&prob.state_of(&v0));
    let link = prob.link_of(&curve0).ok_or_else(|| KpError::InvalidInput("link number of the initial state is unresolved".into()))?;
    if link != cons.link.link_number {
        return Err(KpError::LinkChanged {
            expected: cons.link.link_number,
            found: link,
        });
    }
    let film0 = match film {
        Some(f) if sigma > T::zero() => Some(prob.relax_for(&curve0, Some(&f))?.0),
        _ => None,
    };
    // `evaluate` relaxes the film, so assemble the first point by hand
    let mut cur = {
        let state = prob.state_of(&v0);
        let area = film0.as_ref().map_or(T::zero(), |f| f.area);
        let contact = prob.contact(&curve0);
        let merit = prob
            .merit(&state, &curve0, beta, &mu, contact, area)
            .ok_or(KpError::Infeasible {
                min_margin: min_margin.to_f64_lossy(),
            })?;
        let energy = energy_breakdown(&state, &curve0, section, mat, T::two() * sigma * area);
        Point {
            v: v0,
            state,
            curve: curve0,
            energy,
            merit,
            film: film0,
        }
    };
    if let Some(m) = cons.energy_bound {
        if !(cur.energy.e_total < m) {
            return Err(KpError::InvalidInput(format!(
                "initial energy {} exceeds the bound {}",
                cur.energy.e_total, m
            )));
        }
    }

    let mut report = KPReport {
        trace: Vec::new(),
        residuals: Vec::new(),
        links: Vec::new(),
        hausdorff: Vec::new(),
        iterations: 0,
        accepted: 0,
        converged: false,
        termination: String::new(),
        initial_gradient_norm: T::zero(),
        gradient_norm: T::zero(),
        contact_penalty: T::zero(),
        penalty_escalations: 0,
        final_state: cur.state.clone(),
        film: None,
    };
    record(&mut report, &cur, cons, link);
    let mut tube_pts = build_tube(&cur.curve, section).map(|t| t.vertices).unwrap_or_default();

    let max_step = T::lit(opts.max_step) / l;
    let mut grad = prob.gradient(&cur, beta, &mu);
    let mut jac = closure_jacobian(&cur.v, &cur.state, prob.glue());
    let mut gp = project(&jac, &grad);
    report.initial_gradient_norm = inf_norm(&gp);
    let mut prev: Option<(Vec<T>, Vec<T>)> = None;
    let gtol = T::lit(opts.gtol) * e_scale;

    loop {
        let gnorm = inf_norm(&gp);
        report.gradient_norm = gnorm;
        if gnorm <= gtol {
            report.converged = true;
            report.termination = "projected gradient below tolerance".into();
            break;
        }
        if report.iterations >= opts.max_outer {
            report.termination = "outer iteration limit".into();
            break;
        }
        report.iterations += 1;
        let mut alpha = match &prev {
            Some((s, y)) => {
                let sy: T = s.iter().zip(y).map(|(a, b)| *a * *b).sum();
                let ss: T = s.iter().map(|a| *a * *a).sum();
                if sy > T::zero() {
                    ss / sy
                } else {
                    max_step / gnorm
                }
            }
            None => max_step / gnorm,
        };
        alpha = alpha.min(max_step / gnorm);
        let mut next = None;
        let mut restore_failed = 0;
        for _ in 0..30 {
            let trial: Vec<T> = cur.v.iter().zip(&gp).map(|(&a, &g)| a - g * alpha).collect();
            if let Some(closed) = restore_vector(&trial, &cur.state, prob.glue(), tol) {
                if let Some(p) = prob.evaluate(closed, beta, &mu, link, cur.film.as_ref().map(|f| &f.film)) {
                    if p.merit < cur.merit && p.energy.e_total <= cur.energy.e_total {
                        next = Some(p);
                        break;
                    }
                }
            } else {
                restore_failed += 1;
            }
            alpha = alpha * T::half();
        }
        let Some(p) = next else {
            if restore_failed > 0 && report.penalty_escalations < 3 {
                // closure could not be restored: stiffen the penalties and retry
                for m in mu.iter_mut() {
                    *m = *m * T::lit(10.0);
                }
                report.penalty_escalations += 1;
                cur.merit = prob
                    .merit(&cur.state, &cur.curve, beta, &mu, T::zero(), cur.film.as_ref().map_or(T::zero(), |f| f.area))
                    .unwrap();
                grad = prob.gradient(&cur, beta, &mu);
                gp = project(&jac, &grad);
                prev = None;
                continue;
            }
            report.converged = true;
            report.termination = "no admissible descent step".into();
            break;
        };
        report.accepted += 1;
        record(&mut report, &p, cons, link);
        let new_pts = build_tube(&p.curve, section).map(|t| t.vertices).unwrap_or_default();
        if !tube_pts.is_empty() && !new_pts.is_empty() {
            report.hausdorff.push(hausdorff_distance(&tube_pts, &new_pts)?);
        }
        tube_pts = new_pts;

        let s: Vec<T> = p.v.iter().zip(&cur.v).map(|(a, b)| *a - *b).collect();
        cur = p;
        beta = (beta * T::lit(opts.beta_decay)).max(beta_min);
        // merit of the accepted point under the new barrier weight
        cur.merit = prob
            .merit(&cur.state, &cur.curve, beta, &mu, T::zero(), cur.film.as_ref().map_or(T::zero(), |f| f.area))
            .unwrap();
        grad = prob.gradient(&cur, beta, &mu);
        jac = closure_jacobian(&cur.v, &cur.state, prob.glue());
        let gp_new = project(&jac, &grad);
        let y: Vec<T> = gp_new.iter().zip(&gp).map(|(a, b)| *a - *b).collect();
        prev = Some((s, y));
        gp = gp_new;

        let w = opts.stall_window;
        let n = report.trace.len();
        if n > w {
            let old = report.trace[n - 1 - w].e_total;
            let new = report.trace[n - 1].e_total;
            if (old - new) <= T::lit(opts.ftol) * new.abs().max(T::epsilon()) {
                report.converged = true;
                report.termination = "relative energy decrease below tolerance".into();
                break;
            }
        }
    }
    report.contact_penalty = prob.contact(&cur.curve);
    report.final_state = cur.state.clone();
    report.film = cur.film.map(|f| f.film);
    Ok(report)
}

/// Minimizes the loop energy from a feasible `init` under `cons`.
pub fn minimize_loop<T: Real>(
    init: &RodState<T>,
    section: &CrossSection<T>,
    mat: &MaterialParams<T>,
    cons: &ConstraintSpec<T>,
    opts: &SolveOptions,
) -> Result<(RodState<T>, KPReport<T>)> {
    let report = descend(init, section, mat, cons, &[], opts, T::zero(), None)?;
    Ok((report.final_state.clone(), report))
}

/// Minimizes rod energy plus `2 sigma` times the relaxed film area.
///
/// With `sigma = 0` the rod trajectory is exactly that of [`minimize_loop`];
/// the film is then relaxed once on the final tube.
pub fn minimize_kp<T: Real>(
    init: &RodState<T>,
    section: &CrossSection<T>,
    mat: &MaterialParams<T>,
    cons: &ConstraintSpec<T>,
    loops: &[TestLoop<T>],
    opts: &SolveOptions,
) -> Result<(RodState<T>, FilmMesh<T>, KPReport<T>)> {
    let sigma = mat.sigma;
    let curve = integrate_frame(&RodState::new(init.densities.clone(), cons.clamp)?);
    let tube = build_tube(&curve, section)?;
    let start = init_film(&curve, &tube)?;
    if !spanning_check(&start, loops, &tube)?.iter().all(|&b| b) {
        return Err(KpError::NotSpanning("initial film".into()));
    }
    let mut report = descend(init, section, mat, cons, loops, opts, sigma, Some(start.clone()))?;
    let film = match report.film.take() {
        Some(f) => f,
        None => {
            let curve = integrate_frame(&report.final_state);
            let tube = build_tube(&curve, section)?;
            let warm = if opts.film_warm_start {
                replace_boundary(&start, &curve, section)
            } else {
                init_film(&curve, &tube)?
            };
            let (film, _) = relax_film(&warm, &tube, loops, &opts.film)?;
            film
        }
    };
    // report the film term for the returned film (zero when sigma = 0)
    let area = film_area(&film)?;
    if let Some(last) = report.trace.last_mut() {
        let e_film = T::two() * sigma * area;
        if last.ni_feasible {
            last.e_total = last.e_total - last.e_film + e_film;
        }
        last.e_film = e_film;
    }
    report.film = Some(film.clone());
    Ok((report.final_state.clone(), film, report))
}

/// One row of the semicontinuity diagnostic.
#[derive(Clone, Debug, PartialEq)]
pub struct LscRow<T> {
    pub hausdorff: T,
    pub area: T,
    /// film area inside the `eps`-neighbourhood of each loop
    pub loop_areas: Vec<T>,
    pub spanning: Vec<bool>,
    pub relax_converged: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LscTable<T> {
    pub rows: Vec<LscRow<T>>,
    pub limit_area: T,
    pub tol: T,
    /// every `area_k >= limit_area - tol`
    pub tail_ok: bool,
    pub floor: T,
    /// every loop area stays above `floor`
    pub floor_ok: bool,
    /// Hausdorff distances to the limit do not increase
    pub hausdorff_decreasing: bool,
}

/// Relaxed areas, Hausdorff distances and loop-neighbourhood areas along a
/// sequence of states whose last entry is the limit.
///
/// `loops` are fixed in space and must clear every tube of the sequence.
pub fn lsc_diagnostic<T: Real>(
    states: &[RodState<T>],
    section: &CrossSection<T>,
    loops: &[TestLoop<T>],
    glue_angle: T,
    relax: &RelaxOptions,
    tol_rel: T,
) -> Result<LscTable<T>> {
    if states.is_empty() {
        return Err(KpError::EmptyInput);
    }
    let eps = section.circumradius();
    let curves: Vec<FramedCurve<T>> = states.iter().map(integrate_frame).collect();
    let links: Vec<Option<i64>> = curves
        .iter()
        .map(|c| rod_link_number_curve(c, link_epsilon(section), glue_angle).ok())
        .collect();
    if links.iter().any(|l| l.is_none() || *l != links[0]) {
        return Err(KpError::NotConvergingSequence(format!("link numbers differ along the sequence: {links:?}")));
    }
    let tubes: Vec<TubeMesh<T>> = curves.iter().map(|c| build_tube(c, section)).collect::<Result<_>>()?;
    let last = tubes.last().unwrap();
    let mut rows = Vec::with_capacity(states.len());
    for tube in &tubes {
        let start = init_film(&tube.curve, tube)?;
        let (film, rep) = relax_film(&start, tube, loops, relax)?;
        let spanning = spanning_check(&film, loops, tube)?;
        rows.push(LscRow {
            hausdorff: hausdorff_distance(&tube.vertices, &last.vertices)?,
            area: rep.final_area,
            loop_areas: loops
                .iter()
                .map(|lp| crate::film::film_area_near_loop(&film, lp, eps))
                .collect(),
            spanning,
            relax_converged: rep.converged,
        });
    }
    let limit_area = rows.last().unwrap().area;
    let tol = tol_rel * limit_area;
    let floor = T::half() * T::PI() * eps * eps;
    let tail_ok = rows.iter().all(|r| r.area >= limit_area - tol);
    let floor_ok = rows.iter().all(|r| r.loop_areas.iter().all(|&a| a >= floor));
    let hausdorff_decreasing = rows.windows(2).all(|w| w[1].hausdorff <= w[0].hausdorff);
    Ok(LscTable {
        rows,
        limit_area,
        tol,
        tail_ok,
        floor,
        floor_ok,
        hausdorff_decreasing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;
    use std::f64::consts::{PI, TAU};

    fn section() -> CrossSection<f64> {
        CrossSection::regular(12, 0.01).unwrap()
    }

    #[test]
    fn reclose_fixes_a_perturbed_circle() {
        let mut st = presets::circle::<f64>(60, 1.0);
        st.densities.kappa1[3] += 0.5;
        st.densities.kappa2[10] -= 0.3;
        let before = norm6(&closure_vector(&st, 0.0));
        assert!(before > 1e-3);
        let closed = reclose(&st, 0.0, 1e-12).unwrap();
        let r = closure_residuals(&integrate_frame(&closed), &closed.clamp, 0.0);
        assert!(r.max() < 1e-10, "{r:?}");
    }

    #[test]
    fn jacobian_matches_full_integration() {
        let st = presets::perturbed_circle::<f64>(24, 1.3, 0.2, 5).unwrap();
        let v = st.densities.to_vector();
        let jac = closure_jacobian(&v, &st, 0.4);
        for k in [0, 7, 30, 71] {
            let dk = 1e-6;
            let mut p = v.clone();
            p[k] += dk;
            let mut m = v.clone();
            m[k] -= dk;
            let cp = closure_vector(&st.with_densities(RodDensities::from_vector(&p, 1.3)), 0.4);
            let cm = closure_vector(&st.with_densities(RodDensities::from_vector(&m, 1.3)), 0.4);
            for r in 0..6 {
                assert!(((cp[r] - cm[r]) / (2.0 * dk) - jac[k][r]).abs() < 1e-6, "{k} {r}");
            }
        }
    }

    #[test]
    fn projection_is_tangent() {
        let st = presets::circle::<f64>(30, 1.0);
        let v = st.densities.to_vector();
        let jac = closure_jacobian(&v, &st, 0.0);
        let g: Vec<f64> = (0..v.len()).map(|k| ((k * 7) % 11) as f64 - 5.0).collect();
        let p = project(&jac, &g);
        for r in 0..6 {
            let jp: f64 = jac.iter().zip(&p).map(|(c, x)| c[r] * x).sum();
            assert!(jp.abs() < 1e-9);
        }
    }

    #[test]
    fn rest_state_is_returned_unchanged() {
        let st = presets::circle::<f64>(50, 1.0);
        let mut mat = MaterialParams::isotropic(1.0);
        mat.kappa1_0 = TAU;
        let sec = section();
        let cons = ConstraintSpec::for_state(&st, &sec, 0.0).unwrap();
        let (out, rep) = minimize_loop(&st, &sec, &mat, &cons, &SolveOptions::default()).unwrap();
        assert_eq!(out.densities, st.densities);
        assert_eq!(rep.final_energy().e_total, 0.0);
        assert!(rep.converged);
    }

    #[test]
    fn perturbed_circle_relaxes_towards_the_circle() {
        let sec = section();
        let st = presets::perturbed_circle::<f64>(40, 1.0, 0.05, 3).unwrap();
        let mat = MaterialParams::isotropic(1.0);
        let cons = ConstraintSpec::for_state(&st, &sec, 0.0).unwrap();
        let opts = SolveOptions {
            max_outer: 60,
            ..SolveOptions::default()
        };
        let (out, rep) = minimize_loop(&st, &sec, &mat, &cons, &opts).unwrap();
        let e0 = rep.trace[0].e_shape;
        let e = rep.final_energy().e_shape;
        assert!(e <= e0);
        assert!((e - 2.0 * PI * PI) / (2.0 * PI * PI) < 0.01, "{e}");
        assert!(rep.trace.windows(2).all(|w| w[1].e_total <= w[0].e_total));
        let r = closure_residuals(&integrate_frame(&out), &out.clamp, 0.0);
        assert!(r.r_x < 1e-6 && r.r_t < 1e-6 && r.r_d < 1e-6);
        assert!(rep.links.iter().all(|l| l.link == 0));
        assert_eq!(rep.contact_penalty, 0.0);
    }

    #[test]
    fn triple_twist_keeps_its_link() {
        let sec = section();
        let st = presets::twisted_circle::<f64>(60, 1.0, 3.0).unwrap();
        let mat = MaterialParams::isotropic(1.0);
        let cons = ConstraintSpec::for_state(&st, &sec, 0.0).unwrap();
        assert_eq!(cons.link.link_number, 3);
        let opts = SolveOptions {
            max_outer: 15,
            ..SolveOptions::default()
        };
        let (out, rep) = minimize_loop(&st, &sec, &mat, &cons, &opts).unwrap();
        let lk = rod_link_number_curve(&integrate_frame(&out), link_epsilon(&sec), 0.0).unwrap();
        assert_eq!(lk, 3);
        assert!(rep.links.iter().all(|l| l.link == 3));
    }

    #[test]
    fn infeasible_start_is_rejected() {
        let sec = CrossSection::regular(12, 0.5).unwrap();
        let st = presets::circle::<f64>(30, 1.0);
        let cons = ConstraintSpec {
            clamp: st.clamp,
            link: LinkSpec {
                glue_angle: 0.0,
                link_number: 0,
            },
            knot_template: None,
            energy_bound: None,
        };
        let r = minimize_loop(&st, &sec, &MaterialParams::isotropic(1.0), &cons, &SolveOptions::default());
        assert!(matches!(r, Err(KpError::Infeasible { .. })));
    }
}
