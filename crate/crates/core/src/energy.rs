//! Loop energy: shape, non-interpenetration, gravity, and the injectivity
//! verifiers.
//!
//! Section coordinates follow the frame `(d, t x d)`. For the frame ODE in
//! [`crate::rod`] the axial Jacobian of the configuration map is
//! `dp/ds . t = 1 - z1 kappa1 - z2 kappa2`, which is the quantity the
//! non-interpenetration margin and the global volume balance are built on.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{KpError, Result};
use crate::geom::{segment_segment_distance, Vec3};
use crate::rod::{build_tube, integrate_frame, normal_plane_root, CrossSection, FramedCurve, RodState};
use crate::scalar::Real;

/// Stiffnesses, intrinsic densities and the external fields.
#[derive(Clone, Debug, PartialEq)]
pub struct MaterialParams<T> {
    pub a1: T,
    pub a2: T,
    pub a3: T,
    pub kappa1_0: T,
    pub kappa2_0: T,
    pub omega_0: T,
    pub rho: T,
    pub g: Vec3<T>,
    pub sigma: T,
    /// Growth exponent of the stored energy; only 2 is supported.
    pub p_exponent: u32,
}

impl<T: Real> MaterialParams<T> {
    /// Isotropic stiffness `a`, no intrinsic curvature, no gravity, no film.
    pub fn isotropic(a: T) -> Self {
        Self {
            a1: a,
            a2: a,
            a3: a,
            kappa1_0: T::zero(),
            kappa2_0: T::zero(),
            omega_0: T::zero(),
            rho: T::zero(),
            g: Vec3::zero(),
            sigma: T::zero(),
            p_exponent: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        for (name, v) in [("a1", self.a1), ("a2", self.a2), ("a3", self.a3)] {
            if !(v > T::zero() && v.is_finite()) {
                bad.push(format!("{name} must be positive"));
            }
        }
        if !(self.rho >= T::zero()) {
            bad.push("rho must be nonnegative".into());
        }
        if !(self.sigma >= T::zero()) {
            bad.push("sigma must be nonnegative".into());
        }
        if self.p_exponent != 2 {
            bad.push("p_exponent must be 2".into());
        }
        let intrinsic = [self.kappa1_0, self.kappa2_0, self.omega_0];
        if intrinsic.iter().any(|v| !v.is_finite()) || !self.g.is_finite() {
            bad.push("non-finite intrinsic density or gravity".into());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(KpError::InvalidInput(bad.join("; ")))
        }
    }

    /// Stored energy density `f` at body densities `c = (kappa1, kappa2, omega)`.
    #[inline]
    pub fn density(&self, c: [T; 3]) -> T {
        let e1 = c[0] - self.kappa1_0;
        let e2 = c[1] - self.kappa2_0;
        let e3 = c[2] - self.omega_0;
        T::half() * (self.a1 * e1 * e1 + self.a2 * e2 * e2 + self.a3 * e3 * e3)
    }
}

/// Energy terms of one state.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyBreakdown<T> {
    pub e_shape: T,
    pub e_gravity: T,
    pub e_film: T,
    pub e_total: T,
    pub ni_feasible: bool,
    pub margins: Vec<T>,
}

impl<T: Real> EnergyBreakdown<T> {
    pub fn min_margin(&self) -> T {
        self.margins.iter().copied().fold(T::infinity(), T::min)
    }
}

/// Evaluates all loop terms; `e_film` is supplied by the caller.
pub fn energy_breakdown<T: Real>(
    state: &RodState<T>,
    curve: &FramedCurve<T>,
    section: &CrossSection<T>,
    mat: &MaterialParams<T>,
    e_film: T,
) -> EnergyBreakdown<T> {
    let e_shape = shape_energy(state, mat);
    let e_gravity = gravity_energy_curve(curve, section, mat);
    let margins = local_injectivity_margin(state, section);
    let ni_feasible = margins.iter().all(|&m| m >= T::zero());
    let e_total = if ni_feasible {
        e_shape + e_gravity + e_film
    } else {
        T::infinity()
    };
    EnergyBreakdown {
        e_shape,
        e_gravity,
        e_film,
        e_total,
        ni_feasible,
        margins,
    }
}

pub fn shape_energy<T: Real>(state: &RodState<T>, mat: &MaterialParams<T>) -> T {
    let dens = &state.densities;
    let h = dens.segment_length();
    (0..dens.segments()).map(|i| mat.density(dens.segment(i))).sum::<T>() * h
}

/// Per-segment margin `1 - max over section vertices of (z1 kappa1 + z2 kappa2)`.
pub fn local_injectivity_margin<T: Real>(state: &RodState<T>, section: &CrossSection<T>) -> Vec<T> {
    let dens = &state.densities;
    (0..dens.segments())
        .map(|i| T::one() - section.max_linear(dens.kappa1[i], dens.kappa2[i]))
        .collect()
}

/// `0` when every margin is nonnegative, `+inf` otherwise.
pub fn ni_energy<T: Real>(state: &RodState<T>, section: &CrossSection<T>) -> T {
    if local_injectivity_margin(state, section).iter().all(|&m| m >= T::zero()) {
        T::zero()
    } else {
        T::infinity()
    }
}

/// Log barrier `-beta sum h log(margin)`.
pub fn ni_barrier<T: Real>(state: &RodState<T>, section: &CrossSection<T>, beta: T) -> Result<T> {
    let margins = local_injectivity_margin(state, section);
    let min = margins.iter().copied().fold(T::infinity(), T::min);
    if !(min > T::zero()) {
        return Err(KpError::Infeasible {
            min_margin: min.to_f64_lossy(),
        });
    }
    if beta == T::zero() {
        return Ok(T::zero());
    }
    let h = state.densities.segment_length();
    Ok(-beta * h * margins.iter().map(|m| m.ln()).sum::<T>())
}

pub fn gravity_energy<T: Real>(state: &RodState<T>, section: &CrossSection<T>, mat: &MaterialParams<T>) -> T {
    gravity_energy_curve(&integrate_frame(state), section, mat)
}

/// Gravity energy with midpoint quadrature along the midline and the exact
/// section integral `A x + c1 d + c2 (t x d)`.
pub fn gravity_energy_curve<T: Real>(
    curve: &FramedCurve<T>,
    section: &CrossSection<T>,
    mat: &MaterialParams<T>,
) -> T {
    if mat.rho == T::zero() || mat.g == Vec3::zero() {
        return T::zero();
    }
    let a = section.area();
    let [c1, c2] = section.first_moments();
    let h = curve.segment_length();
    let sum: T = (0..curve.segments())
        .map(|i| {
            let (x, t, d) = curve.segment_midpoint(i);
            a * mat.g.dot(x) + c1 * mat.g.dot(d) + c2 * mat.g.dot(t.cross(d))
        })
        .sum();
    -mat.rho * h * sum
}

/// Outcome of the global injectivity verifier.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GlobalInjectivity<T> {
    /// reduced reference-domain integral of the Jacobian
    pub lhs: T,
    /// voxel estimate of the image volume
    pub rhs: T,
    pub eps_vox: T,
    pub ok: bool,
    pub voxels: usize,
}

/// Compares the integrated Jacobian with a voxel count of the tube image.
pub fn global_injectivity_check<T: Real>(
    state: &RodState<T>,
    section: &CrossSection<T>,
    voxel_h: T,
) -> Result<GlobalInjectivity<T>> {
    let r = section.bound();
    if !(voxel_h > T::zero()) || voxel_h >= r {
        return Err(KpError::ResolutionInsufficient {
            voxel_h: voxel_h.to_f64_lossy(),
            bound: r.to_f64_lossy(),
        });
    }
    let curve = integrate_frame(state);
    let tube = build_tube(&curve, section)?;
    tube.check_watertight()?;
    let dens = &state.densities;
    let h = dens.segment_length();
    let a = section.area();
    let [c1, c2] = section.first_moments();
    let lhs: T = (0..dens.segments())
        .map(|i| a - c1 * dens.kappa1[i] - c2 * dens.kappa2[i])
        .sum::<T>()
        * h;

    let reach = section.circumradius();
    let mut lo = tube.vertices[0];
    let mut hi = lo;
    for p in curve.nodes.iter() {
        for k in 0..3 {
            let (l, u) = (p[k] - reach, p[k] + reach);
            match k {
                0 => {
                    lo.x = lo.x.min(l);
                    hi.x = hi.x.max(u);
                }
                1 => {
                    lo.y = lo.y.min(l);
                    hi.y = hi.y.max(u);
                }
                _ => {
                    lo.z = lo.z.min(l);
                    hi.z = hi.z.max(u);
                }
            }
        }
    }
    let cells = |a: T, b: T| ((b - a) / voxel_h).ceil().to_usize().unwrap_or(0).max(1);
    let (nx, ny, nz) = (cells(lo.x, hi.x), cells(lo.y, hi.y), cells(lo.z, hi.z));
    let centre = |lo: T, k: usize| lo + voxel_h * (T::from_usize(k) + T::half());
    let count: usize = (0..nz)
        .into_par_iter()
        .map(|kz| {
            let z = centre(lo.z, kz);
            let mut c = 0usize;
            for ky in 0..ny {
                let y = centre(lo.y, ky);
                for kx in 0..nx {
                    if tube.contains(Vec3::new(centre(lo.x, kx), y, z), false) {
                        c += 1;
                    }
                }
            }
            c
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum();
    let rhs = T::from_usize(count) * voxel_h * voxel_h * voxel_h;
    let eps_vox = T::lit(3.0) * voxel_h / r;
    Ok(GlobalInjectivity {
        lhs,
        rhs,
        eps_vox,
        ok: lhs <= rhs * (T::one() + eps_vox),
        voxels: count,
    })
}

/// Segment pairs closer along the curve than this are never penalized: a
/// feasible rod cannot bring them within `2 R_in` of each other.
fn contact_window<T: Real>(section: &CrossSection<T>) -> T {
    T::PI() * section.circumradius()
}

/// `sum stiffness * max(0, 2 R_in - dist)^2` over non-adjacent segment pairs
/// of the closed midline.
pub fn self_contact_penalty<T: Real>(curve: &FramedCurve<T>, section: &CrossSection<T>, stiffness: T) -> T {
    let n = curve.segments();
    let h = curve.segment_length();
    let skip = ((contact_window(section) / h).ceil().to_usize().unwrap_or(n)).max(1) + 1;
    let target = T::two() * section.inradius();
    if 2 * skip >= n {
        return T::zero();
    }
    let rows: Vec<T> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut acc = T::zero();
            for j in i + skip..n {
                // cyclic index gap
                if n - (j - i) < skip {
                    continue;
                }
                let (dist, _, _) =
                    segment_segment_distance(curve.nodes[i], curve.nodes[i + 1], curve.nodes[j], curve.nodes[j + 1]);
                let gap = target - dist;
                if gap > T::zero() {
                    acc += gap * gap;
                }
            }
            acc
        })
        .collect();
    stiffness * rows.into_iter().sum::<T>()
}

/// Smallest distance between non-excluded segment pairs minus `2 R_in`;
/// positive when the contact penalty is inactive.
pub fn contact_slack<T: Real>(curve: &FramedCurve<T>, section: &CrossSection<T>) -> T {
    let n = curve.segments();
    let h = curve.segment_length();
    let skip = ((contact_window(section) / h).ceil().to_usize().unwrap_or(n)).max(1) + 1;
    let target = T::two() * section.inradius();
    if 2 * skip >= n {
        return T::infinity();
    }
    let rows: Vec<T> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut best = T::infinity();
            for j in i + skip..n {
                if n - (j - i) < skip {
                    continue;
                }
                let (dist, _, _) =
                    segment_segment_distance(curve.nodes[i], curve.nodes[i + 1], curve.nodes[j], curve.nodes[j + 1]);
                best = best.min(dist);
            }
            best
        })
        .collect();
    rows.into_iter().fold(T::infinity(), T::min) - target
}

/// Result of the local collision scan.
#[derive(Clone, Debug, PartialEq)]
pub struct CollisionScan<T> {
    pub samples: usize,
    pub collisions: usize,
    /// first collision found: `(s_a, zeta_a, s_b, zeta_b, distance)`
    pub example: Option<(T, [T; 2], T, [T; 2], T)>,
}

/// Brute-force check of local injectivity of the configuration map.
///
/// Each sample draws `(s, zeta)` uniformly; every other parameter with the
/// same image lies in a normal plane through the sample point, so the partner
/// candidates are the roots of `(q - x(b)) . t(b)` in a window around `s`.
/// A collision is a partner inside the section whose parameter distance
/// exceeds `param_tol` and whose image lies within `dist_tol` of `q`.
pub fn local_collision_scan<T: Real>(
    curve: &FramedCurve<T>,
    section: &CrossSection<T>,
    samples: usize,
    seed: u64,
    param_tol: T,
    dist_tol: T,
) -> CollisionScan<T> {
    let n = curve.segments();
    let h = curve.segment_length();
    let l = curve.length();
    let closed = curve.closure_gap() <= T::tol(1e-9) * l;
    let kmax = curve.densities.max_curvature();
    let mut window = if kmax > T::zero() { T::TAU() / kmax } else { l };
    window = window.min(if closed { l * T::half() } else { l });
    let wseg = (window / h).ceil().to_usize().unwrap_or(n).min(n);

    // rejection sampling inside the section's bounding box
    let verts = section.vertices();
    let (mut zlo, mut zhi) = ([T::infinity(); 2], [T::neg_infinity(); 2]);
    for v in verts {
        for k in 0..2 {
            zlo[k] = zlo[k].min(v[k]);
            zhi[k] = zhi[k].max(v[k]);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<(T, [T; 2])> = (0..samples)
        .map(|_| {
            let s = T::lit(rng.gen::<f64>()) * l;
            loop {
                let z = [
                    zlo[0] + T::lit(rng.gen::<f64>()) * (zhi[0] - zlo[0]),
                    zlo[1] + T::lit(rng.gen::<f64>()) * (zhi[1] - zlo[1]),
                ];
                if section.contains(z) {
                    return (s, z);
                }
            }
        })
        .collect();

    let found: Vec<Option<(T, [T; 2], T, [T; 2], T)>> = draws
        .par_iter()
        .map(|&(s, z)| {
            let (ia, _) = curve.locate(s).ok()?;
            let (x, t, d) = curve.frame_at(s).ok()?;
            let q = x + d * z[0] + t.cross(d) * z[1];
            let range: Vec<usize> = if closed {
                let lo = ia + n - wseg.min(n / 2);
                (0..=2 * wseg.min(n / 2)).map(|k| (lo + k) % n).collect()
            } else {
                (ia.saturating_sub(wseg)..(ia + wseg + 1).min(n)).collect()
            };
            let mut seen = std::collections::BTreeSet::new();
            for i in range {
                if !seen.insert(i) {
                    continue;
                }
                let Some(nc) = normal_plane_root(curve, q, i) else {
                    continue;
                };
                if !section.contains(nc.zeta) {
                    continue;
                }
                let sb = h * T::from_usize(i) + nc.offset;
                let mut ds = (sb - s).abs();
                if closed {
                    ds = ds.min(l - ds);
                }
                let dz = (nc.zeta[0] - z[0]).hypot(nc.zeta[1] - z[1]);
                if ds + dz <= param_tol {
                    continue;
                }
                let (xb, tb, db) = curve.frame_in_segment(i, nc.offset);
                let pb = xb + db * nc.zeta[0] + tb.cross(db) * nc.zeta[1];
                let gap = pb.dist(q);
                if gap <= dist_tol {
                    return Some((s, z, sb, nc.zeta, gap));
                }
            }
            None
        })
        .collect();
    let collisions = found.iter().filter(|f| f.is_some()).count();
    CollisionScan {
        samples,
        collisions,
        example: found.into_iter().flatten().next(),
    }
}
