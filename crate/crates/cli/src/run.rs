//! Executes a configuration and writes its outputs.

use std::fmt;
use std::fs;
use std::io;
use std::path::Path;
use std::time::Instant;

use kp_core::energy::{
    contact_slack, energy_breakdown, global_injectivity_check, local_collision_scan, self_contact_penalty,
    EnergyBreakdown,
};
use kp_core::film::{film_area, init_film, relax_film};
use kp_core::presets;
use kp_core::rod::{build_tube, closure_residuals, integrate_frame, ClosureResiduals};
use kp_core::solver::{link_epsilon, lsc_diagnostic, minimize_kp, minimize_loop, KPReport};
use kp_core::topology::{
    calugareanu_residual, canonical_threading_loop, check_loop_clear, rod_link_number_curve, spanning_check,
    total_twist, writhe, LinkSpec,
};
use kp_core::{ConstraintSpec, FilmMesh, FramedCurve, KpError, RodDensities, RodState, TestLoop};
use serde_json::{json, Map, Value};

use crate::config::{ConfigErrors, Mode, RodSource, RunConfig};
use crate::export::{film_to_obj, json_to_string, loops_to_text, mesh_to_obj, polylines_to_text, trace_csv, write_atomic};

pub const EXIT_CONVERGED: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;

#[derive(Debug)]
pub enum RunError {
    Config(ConfigErrors),
    Solver(KpError),
    Io(io::Error),
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Config(e) => write!(f, "invalid configuration:\n{e}"),
            RunError::Solver(e) => write!(f, "{e}"),
            RunError::Io(e) => write!(f, "output error: {e}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<KpError> for RunError {
    fn from(e: KpError) -> Self {
        RunError::Solver(e)
    }
}

impl From<io::Error> for RunError {
    fn from(e: io::Error) -> Self {
        RunError::Io(e)
    }
}

impl From<ConfigErrors> for RunError {
    fn from(e: ConfigErrors) -> Self {
        RunError::Config(e)
    }
}

#[derive(Debug)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub report: Value,
}

/// Everything a run exports.
struct Outputs {
    state: RodState<f64>,
    film: Option<FilmMesh<f64>>,
    trace: Vec<(EnergyBreakdown<f64>, ClosureResiduals<f64>)>,
    loops: Vec<TestLoop<f64>>,
    extra_files: Vec<(&'static str, String)>,
    report: Map<String, Value>,
    converged: bool,
}

/// Initial rod described by the config.
pub fn build_rod(cfg: &RunConfig) -> Result<RodState<f64>, KpError> {
    let (n, l) = (cfg.rod.n, cfg.rod.length);
    let st = match &cfg.rod.source {
        RodSource::Circle => presets::circle(n, l),
        RodSource::PerturbedCircle { noise } => presets::perturbed_circle(n, l, *noise, cfg.seed)?,
        RodSource::TwistedCircle { turns } => presets::twisted_circle(n, l, *turns)?,
        RodSource::DoubledCircle => presets::doubled_circle(n, l),
        RodSource::Arrays { kappa1, kappa2, omega } => RodState::new(
            RodDensities::new(kappa1.clone(), kappa2.clone(), omega.clone(), l)?,
            cfg.rod.clamp,
        )?,
    };
    // closure and shape are independent of a rigid change of clamp
    RodState::new(st.densities, cfg.rod.clamp)
}

fn energy_json(e: &EnergyBreakdown<f64>) -> Value {
    json!({
        "e_shape": e.e_shape,
        "e_gravity": e.e_gravity,
        "e_film": e.e_film,
        "e_total": e.e_total,
        "ni_feasible": e.ni_feasible,
        "min_margin": e.min_margin(),
    })
}

fn residual_json(r: &ClosureResiduals<f64>) -> Value {
    json!({"r_x": r.r_x, "r_t": r.r_t, "r_d": r.r_d})
}

fn topology_json(state: &RodState<f64>, curve: &FramedCurve<f64>, cfg: &RunConfig) -> Value {
    let eps = link_epsilon(&cfg.section);
    let glue = cfg.constraints.glue_angle;
    let link = rod_link_number_curve(curve, eps, glue).ok();
    json!({
        "link": link,
        "twist": total_twist(state),
        "writhe": writhe(curve).ok(),
        "calugareanu_residual": calugareanu_residual(state, eps, glue).ok(),
        "epsilon": eps,
    })
}

fn solver_json(rep: &KPReport<f64>) -> Value {
    json!({
        "iterations": rep.iterations,
        "accepted": rep.accepted,
        "termination": rep.termination,
        "initial_gradient_norm": rep.initial_gradient_norm,
        "gradient_norm": rep.gradient_norm,
        "penalty_escalations": rep.penalty_escalations,
        "contact_penalty": rep.contact_penalty,
        "hausdorff": rep.hausdorff,
        "links": rep.links.iter().map(|l| json!({"link": l.link, "twist": l.twist, "writhe": l.writhe})).collect::<Vec<_>>(),
    })
}

fn loops_for(cfg: &RunConfig, curve: &FramedCurve<f64>) -> Result<Vec<TestLoop<f64>>, KpError> {
    let mut loops = cfg.loops.clone();
    if cfg.canonical_loop {
        loops.push(canonical_threading_loop(curve, &cfg.section)?);
    }
    Ok(loops)
}

fn constraints_for(cfg: &RunConfig, state: &RodState<f64>) -> Result<ConstraintSpec<f64>, KpError> {
    let glue = cfg.constraints.glue_angle;
    let link_number = match cfg.constraints.link {
        Some(l) => l,
        None => rod_link_number_curve(&integrate_frame(state), link_epsilon(&cfg.section), glue)?,
    };
    Ok(ConstraintSpec {
        clamp: state.clamp,
        link: LinkSpec {
            glue_angle: glue,
            link_number,
        },
        knot_template: cfg.constraints.template.clone(),
        energy_bound: cfg.constraints.energy_bound,
    })
}

fn solver_trace(rep: &KPReport<f64>) -> Vec<(EnergyBreakdown<f64>, ClosureResiduals<f64>)> {
    rep.trace.iter().cloned().zip(rep.residuals.iter().copied()).collect()
}

fn rod_relax(cfg: &RunConfig, init: RodState<f64>) -> Result<Outputs, KpError> {
    let cons = constraints_for(cfg, &init)?;
    let (state, rep) = minimize_loop(&init, &cfg.section, &cfg.material, &cons, &cfg.solver)?;
    let mut report = Map::new();
    report.insert("solver".into(), solver_json(&rep));
    report.insert("termination".into(), json!(rep.termination));
    Ok(Outputs {
        state,
        film: None,
        trace: solver_trace(&rep),
        loops: Vec::new(),
        extra_files: Vec::new(),
        report,
        converged: rep.converged,
    })
}

fn kp_solve(cfg: &RunConfig, init: RodState<f64>) -> Result<Outputs, KpError> {
    let cons = constraints_for(cfg, &init)?;
    let loops = loops_for(cfg, &integrate_frame(&init))?;
    let (state, film, rep) = minimize_kp(&init, &cfg.section, &cfg.material, &cons, &loops, &cfg.solver)?;
    let tube = build_tube(&integrate_frame(&state), &cfg.section)?;
    let spanning = spanning_check(&film, &loops, &tube)?;
    let mut report = Map::new();
    report.insert("solver".into(), solver_json(&rep));
    report.insert("termination".into(), json!(rep.termination));
    report.insert(
        "film".into(),
        json!({
            "area": film_area(&film)?,
            "vertices": film.vertices.len(),
            "triangles": film.triangles.len(),
            "spanning": spanning,
        }),
    );
    let mut checks = Map::new();
    checks.insert("spanning".into(), json!(spanning.iter().all(|&b| b)));
    checks.insert("link_preserved".into(), json!(rep.links.iter().all(|l| l.link == cons.link.link_number)));
    checks.insert("trace_non_increasing".into(), json!(rep.trace.windows(2).all(|w| w[1].e_total <= w[0].e_total)));
    report.insert("checks".into(), Value::Object(checks));
    Ok(Outputs {
        state,
        film: Some(film),
        trace: solver_trace(&rep),
        loops,
        extra_files: Vec::new(),
        report,
        converged: rep.converged,
    })
}

fn film_relax(cfg: &RunConfig, init: RodState<f64>) -> Result<Outputs, KpError> {
    let curve = integrate_frame(&init);
    let loops = loops_for(cfg, &curve)?;
    let tube = build_tube(&curve, &cfg.section)?;
    let start = init_film(&curve, &tube)?;
    let (film, rep) = relax_film(&start, &tube, &loops, &cfg.film)?;
    let spanning = spanning_check(&film, &loops, &tube)?;
    let residuals = closure_residuals(&curve, &init.clamp, cfg.constraints.glue_angle);
    let trace = rep
        .area_trace
        .iter()
        .map(|&a| {
            let e = energy_breakdown(&init, &curve, &cfg.section, &cfg.material, 2.0 * cfg.material.sigma * a);
            (e, residuals)
        })
        .collect();
    let mut report = Map::new();
    report.insert(
        "film".into(),
        json!({
            "area": rep.final_area,
            "iterations": rep.iterations,
            "rollbacks": rep.rollbacks,
            "converged": rep.converged,
            "min_angle": rep.min_angle,
            "vertices": rep.vertices,
            "triangles": rep.triangles,
            "spanning": spanning,
        }),
    );
    let ok = spanning.iter().all(|&b| b);
    report.insert("checks".into(), json!({"spanning": ok}));
    report.insert("termination".into(), json!(if rep.converged { "film converged" } else { "film iteration limit" }));
    Ok(Outputs {
        state: init,
        film: Some(film),
        trace,
        loops,
        extra_files: Vec::new(),
        report,
        converged: rep.converged && ok,
    })
}

fn check(cfg: &RunConfig, init: RodState<f64>) -> Result<Outputs, KpError> {
    let curve = integrate_frame(&init);
    let sec = &cfg.section;
    let l = init.length();
    let mut checks = Map::new();
    let mut report = Map::new();

    let r = closure_residuals(&curve, &init.clamp, cfg.constraints.glue_angle);
    checks.insert("closure".into(), json!(r.r_x <= 1e-6 * l && r.r_t <= 1e-6 && r.r_d <= 1e-6));
    let e = energy_breakdown(&init, &curve, sec, &cfg.material, 0.0);
    checks.insert("local_injectivity".into(), json!(e.min_margin() > 0.0));

    let voxel_h = cfg.check.voxel_h.unwrap_or(sec.bound() / 4.0);
    match global_injectivity_check(&init, sec, voxel_h) {
        Ok(g) => {
            checks.insert("glob_inj".into(), json!(g.ok));
            report.insert(
                "glob_inj".into(),
                json!({"lhs": g.lhs, "rhs": g.rhs, "eps_vox": g.eps_vox, "ok": g.ok, "voxels": g.voxels, "voxel_h": voxel_h}),
            );
        }
        Err(err) => {
            checks.insert("glob_inj".into(), json!(false));
            report.insert("glob_inj".into(), json!({"error": err.to_string()}));
        }
    }

    let scan = local_collision_scan(
        &curve,
        sec,
        cfg.check.scan_samples,
        cfg.seed,
        cfg.check.scan_param_tol * l,
        cfg.check.scan_dist_tol,
    );
    checks.insert("collision_scan".into(), json!(scan.collisions == 0));
    report.insert(
        "collision_scan".into(),
        json!({
            "samples": scan.samples,
            "collisions": scan.collisions,
            "example": scan.example.map(|(sa, za, sb, zb, d)| json!({"s_a": sa, "zeta_a": za, "s_b": sb, "zeta_b": zb, "distance": d})),
        }),
    );

    let slack = contact_slack(&curve, sec);
    let penalty = self_contact_penalty(&curve, sec, cfg.solver.contact_stiffness);
    checks.insert("self_contact".into(), json!(penalty == 0.0));
    report.insert("contact".into(), json!({"slack": slack, "penalty": penalty}));

    let cal = calugareanu_residual(&init, link_epsilon(sec), cfg.constraints.glue_angle);
    checks.insert("calugareanu".into(), json!(cal.as_ref().is_ok_and(|&c| c < 0.05)));

    let mut loops = cfg.loops.clone();
    if cfg.canonical_loop {
        if let Ok(lp) = canonical_threading_loop(&curve, sec) {
            loops.push(lp);
        }
    }
    if let Ok(tube) = build_tube(&curve, sec) {
        let clear: Vec<Value> = loops
            .iter()
            .map(|lp| json!({"label": lp.label, "clear": check_loop_clear(lp, &tube).is_ok()}))
            .collect();
        checks.insert("loops_clear".into(), json!(clear.iter().all(|c| c["clear"] == json!(true))));
        report.insert("loops".into(), Value::Array(clear));
    }
    report.insert("checks".into(), Value::Object(checks));
    report.insert("termination".into(), json!("checks evaluated"));
    Ok(Outputs {
        state: init,
        film: None,
        trace: vec![(e, r)],
        loops,
        extra_files: Vec::new(),
        report,
        converged: true,
    })
}

fn lsc(cfg: &RunConfig, init: RodState<f64>) -> Result<Outputs, KpError> {
    let sec = &cfg.section;
    let (n, l) = (cfg.rod.n, cfg.rod.length);
    let r = l / std::f64::consts::TAU;
    let mut states: Vec<RodState<f64>> = (1..=cfg.lsc.steps)
        .map(|k| {
            let lk = l * (1.0 + 1.0 / k as f64);
            RodState::new(presets::circle::<f64>(n, lk).densities, init.clamp)
        })
        .collect::<Result<_, _>>()?;
    states.push(init.clone());
    let limit_curve = integrate_frame(&init);
    let loops = loops_for(cfg, &limit_curve)?;
    let table = lsc_diagnostic(&states, sec, &loops, cfg.constraints.glue_angle, &cfg.film, cfg.lsc.tol_rel)?;
    let r_in = sec.inradius();
    let radii: Vec<f64> = (1..=cfg.lsc.steps).map(|k| r * (1.0 + 1.0 / k as f64)).chain([r]).collect();
    let film_tol = 0.02;
    let mut csv = String::from("k,radius,hausdorff,area,oracle,rel_err");
    for lp in &loops {
        csv.push_str(&format!(",near_{}", lp.label));
    }
    csv.push('\n');
    let mut rows = Vec::new();
    let mut within = true;
    for (k, (row, &rk)) in table.rows.iter().zip(&radii).enumerate() {
        let oracle = std::f64::consts::PI * (rk - r_in).powi(2);
        let rel = (row.area - oracle) / oracle;
        within &= rel.abs() <= film_tol;
        csv.push_str(&format!("{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}", k + 1, rk, row.hausdorff, row.area, oracle, rel));
        for a in &row.loop_areas {
            csv.push_str(&format!(",{a:.16e}"));
        }
        csv.push('\n');
        rows.push(json!({
            "radius": rk,
            "hausdorff": row.hausdorff,
            "area": row.area,
            "oracle": oracle,
            "rel_err": rel,
            "loop_areas": row.loop_areas,
            "spanning": row.spanning,
            "relax_converged": row.relax_converged,
        }));
    }
    let trace = states
        .iter()
        .zip(&table.rows)
        .map(|(st, row)| {
            let c = integrate_frame(st);
            (
                energy_breakdown(st, &c, sec, &cfg.material, 2.0 * cfg.material.sigma * row.area),
                closure_residuals(&c, &st.clamp, cfg.constraints.glue_angle),
            )
        })
        .collect();
    let mut report = Map::new();
    report.insert(
        "lsc".into(),
        json!({
            "rows": rows,
            "limit_area": table.limit_area,
            "tol": table.tol,
            "floor": table.floor,
        }),
    );
    report.insert(
        "checks".into(),
        json!({
            "tail": table.tail_ok,
            "floor": table.floor_ok,
            "hausdorff_decreasing": table.hausdorff_decreasing,
            "oracle_within_film_tol": within,
        }),
    );
    report.insert("termination".into(), json!("sequence evaluated"));
    let ok = table.tail_ok && table.floor_ok && within;
    Ok(Outputs {
        state: init,
        film: None,
        trace,
        loops,
        extra_files: vec![("lsc.csv", csv)],
        report,
        converged: ok,
    })
}

/// Writes all outputs of a finished run into `dir`.
fn export_outputs(cfg: &RunConfig, mode: Mode, out: &Outputs, dir: &Path) -> Result<Value, RunError> {
    fs::create_dir_all(dir)?;
    let curve = integrate_frame(&out.state);
    let sec = &cfg.section;
    if let Ok(tube) = build_tube(&curve, sec) {
        write_atomic(&dir.join("rod.obj"), mesh_to_obj(&tube.vertices, &tube.triangles).as_bytes())?;
    }
    write_atomic(&dir.join("midline.txt"), polylines_to_text(&[(None, &curve.nodes)]).as_bytes())?;
    if let Some(f) = &out.film {
        write_atomic(&dir.join("film.obj"), film_to_obj(f).as_bytes())?;
    }
    write_atomic(&dir.join("trace.csv"), trace_csv(&out.trace).as_bytes())?;
    write_atomic(&dir.join("loops.txt"), loops_to_text(&out.loops).as_bytes())?;
    for (name, text) in &out.extra_files {
        write_atomic(&dir.join(name), text.as_bytes())?;
    }

    let (last_e, last_r) = out.trace.last().cloned().expect("trace holds the initial state");
    let mut report = out.report.clone();
    report.insert("mode".into(), json!(mode.name()));
    report.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
    report.insert("seed".into(), json!(cfg.seed));
    report.insert("config".into(), serde_json::to_value(&cfg.raw).unwrap_or(Value::Null));
    report.insert("converged".into(), json!(out.converged));
    report.insert("energy".into(), energy_json(&last_e));
    report.insert("residuals".into(), residual_json(&last_r));
    report.insert("topology".into(), topology_json(&out.state, &curve, cfg));
    report.insert("trace_rows".into(), json!(out.trace.len()));
    let report = Value::Object(report);
    write_atomic(&dir.join("report.json"), json_to_string(&report).as_bytes())?;
    Ok(report)
}

/// Runs `cfg` in `mode` and writes the outputs to `dir`.
pub fn run(cfg: &RunConfig, mode: Mode, dir: &Path) -> Result<RunOutcome, RunError> {
    let start = Instant::now();
    let init = build_rod(cfg)?;
    let out = match mode {
        Mode::RodRelax => rod_relax(cfg, init)?,
        Mode::FilmRelax => film_relax(cfg, init)?,
        Mode::KpSolve => kp_solve(cfg, init)?,
        Mode::Check => check(cfg, init)?,
        Mode::LscDiagnostic => lsc(cfg, init)?,
    };
    let report = export_outputs(cfg, mode, &out, dir)?;
    let timing = json!({
        "elapsed_seconds": start.elapsed().as_secs_f64(),
        "threads": rayon::current_num_threads(),
    });
    write_atomic(&dir.join("timing.json"), json_to_string(&timing).as_bytes())?;
    Ok(RunOutcome {
        exit_code: if out.converged { EXIT_CONVERGED } else { EXIT_NOT_CONVERGED },
        report,
    })
}
