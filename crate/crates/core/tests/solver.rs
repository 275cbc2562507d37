use std::f64::consts::{PI, TAU};

use kp_core::error::KpError;
use kp_core::film::film_area;
use kp_core::rod::{build_tube, closure_residuals, integrate_frame};
use kp_core::solver::{lsc_diagnostic, minimize_kp, minimize_loop};
use kp_core::topology::{canonical_threading_loop, spanning_check};
use kp_core::{presets, ConstraintSpec, CrossSection, MaterialParams, RelaxOptions, RodState, SolveOptions, TestLoop};

fn section() -> CrossSection<f64> {
    CrossSection::regular(12, 0.01).unwrap()
}

fn setup(st: &RodState<f64>) -> (ConstraintSpec<f64>, Vec<TestLoop<f64>>) {
    let sec = section();
    let cons = ConstraintSpec::for_state(st, &sec, 0.0).unwrap();
    let lp = canonical_threading_loop(&integrate_frame(st), &sec).unwrap();
    (cons, vec![lp])
}

fn disk_oracle(length: f64, sec: &CrossSection<f64>) -> f64 {
    PI * (length / TAU - sec.inradius()).powi(2)
}

#[test]
fn zero_tension_matches_loop_minimizer() {
    let sec = section();
    let st = presets::perturbed_circle::<f64>(40, 1.0, 0.05, 11).unwrap();
    let (cons, loops) = setup(&st);
    let mat = MaterialParams::isotropic(1.0);
    let opts = SolveOptions { max_outer: 30, ..SolveOptions::default() };
    let (a, ra) = minimize_loop(&st, &sec, &mat, &cons, &opts).unwrap();
    let (b, film, rb) = minimize_kp(&st, &sec, &mat, &cons, &loops, &opts).unwrap();
    let diff = a
        .densities
        .to_vector()
        .iter()
        .zip(b.densities.to_vector())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    assert!(diff <= 1e-8, "{diff}");
    assert!((ra.final_energy().e_total - rb.final_energy().e_total).abs() <= 1e-8);
    assert_eq!(rb.final_energy().e_film, 0.0);
    let tube = build_tube(&integrate_frame(&b), &sec).unwrap();
    assert!(spanning_check(&film, &loops, &tube).unwrap().iter().all(|&s| s));
}

#[test]
fn frozen_rod_reports_rod_plus_film() {
    let sec = section();
    let st = presets::circle::<f64>(80, 1.0);
    let (cons, loops) = setup(&st);
    let mut mat = MaterialParams::isotropic(1.0);
    mat.sigma = 0.7;
    let opts = SolveOptions { max_outer: 0, ..SolveOptions::default() };
    let (out, film, rep) = minimize_kp(&st, &sec, &mat, &cons, &loops, &opts).unwrap();
    assert_eq!(out.densities, st.densities);
    let area = film_area(&film).unwrap();
    let e = rep.final_energy();
    assert!((e.e_total - (e.e_shape + e.e_gravity + 2.0 * mat.sigma * area)).abs() < 1e-12);
    let oracle = disk_oracle(1.0, &sec);
    assert!(((area - oracle) / oracle).abs() < 0.02, "{area} vs {oracle}");
}

#[test]
fn stronger_film_shrinks_the_film() {
    let sec = section();
    let st = presets::perturbed_circle::<f64>(40, 1.0, 0.05, 2).unwrap();
    let (cons, loops) = setup(&st);
    let base = 0.1 / (1.0 / TAU).powi(3);
    let opts = SolveOptions { max_outer: 20, ..SolveOptions::default() };
    let mut prev: Option<(f64, f64)> = None;
    for s in [0.5 * base, base, 2.0 * base] {
        let mut mat = MaterialParams::isotropic(1.0);
        mat.sigma = s;
        let (_, film, rep) = minimize_kp(&st, &sec, &mat, &cons, &loops, &opts).unwrap();
        let area = film_area(&film).unwrap();
        let e_sh = rep.final_energy().e_shape;
        assert!(rep.trace.windows(2).all(|w| w[1].e_total <= w[0].e_total));
        if let Some((a0, e0)) = prev {
            assert!(area <= a0 * (1.0 + 1e-4), "area {area} after {a0}");
            assert!(e_sh >= e0 * (1.0 - 1e-4), "shape {e_sh} after {e0}");
        }
        prev = Some((area, e_sh));
    }
}

#[test]
fn gradient_drops_at_termination() {
    let sec = section();
    let st = presets::perturbed_circle::<f64>(40, 1.0, 0.05, 4).unwrap();
    let (cons, _) = setup(&st);
    let mat = MaterialParams::isotropic(1.0);
    let opts = SolveOptions { max_outer: 100, ..SolveOptions::default() };
    let (out, rep) = minimize_loop(&st, &sec, &mat, &cons, &opts).unwrap();
    assert!(rep.converged, "{}", rep.termination);
    assert!(rep.gradient_norm < 1e-2 * rep.initial_gradient_norm);
    assert_eq!(rep.trace.len(), rep.accepted + 1);
    let r = closure_residuals(&integrate_frame(&out), &out.clamp, 0.0);
    assert!(r.max() < 1e-8);
}

#[test]
fn constant_sequence_has_flat_areas() {
    let sec = section();
    let st = presets::circle::<f64>(60, 1.0);
    let (_, loops) = setup(&st);
    let seq = vec![st.clone(), st.clone(), st];
    let t = lsc_diagnostic(&seq, &sec, &loops, 0.0, &RelaxOptions::default(), 1e-3).unwrap();
    assert!(t.tail_ok && t.floor_ok && t.hausdorff_decreasing);
    assert!(t.rows.iter().all(|r| r.hausdorff == 0.0 && r.area == t.limit_area));
}

#[test]
fn shrinking_circles_stay_above_the_limit() {
    let sec = CrossSection::regular(12, 0.02).unwrap();
    let lim = presets::circle::<f64>(60, 1.0);
    let mut seq: Vec<RodState<f64>> = (1..=4)
        .map(|k| RodState::new(presets::circle(60, 1.0 + 1.0 / k as f64).densities, lim.clamp).unwrap())
        .collect();
    seq.push(lim.clone());
    let lp = canonical_threading_loop(&integrate_frame(&lim), &sec).unwrap();
    let t = lsc_diagnostic(&seq, &sec, &[lp], 0.0, &RelaxOptions::default(), 1e-3).unwrap();
    assert!(t.tail_ok && t.floor_ok && t.hausdorff_decreasing);
    for (k, row) in t.rows.iter().enumerate().take(4) {
        let oracle = disk_oracle(1.0 + 1.0 / (k + 1) as f64, &sec);
        assert!(((row.area - oracle) / oracle).abs() < 0.02);
    }
}

#[test]
fn mixed_links_are_rejected() {
    let sec = section();
    let a = presets::circle::<f64>(60, 1.0);
    let b = presets::twisted_circle::<f64>(60, 1.0, 1.0).unwrap();
    let r = lsc_diagnostic(&[a, b], &sec, &[], 0.0, &RelaxOptions::default(), 1e-3);
    assert!(matches!(r, Err(KpError::NotConvergingSequence(_))));
}
