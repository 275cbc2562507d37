//! Run configuration: a TOML file with fixed sections and strict keys.
//!
//! Every problem found while reading is collected; unknown keys count as
//! errors. Relative file paths are resolved against the config's directory.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use kp_core::film::RelaxOptions;
use kp_core::solver::SolveOptions;
use kp_core::{ClampingParams, CrossSection, MaterialParams, TestLoop, Vec3};
use toml::{Table, Value};

use crate::export::read_polylines;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    RodRelax,
    FilmRelax,
    KpSolve,
    Check,
    LscDiagnostic,
}

impl Mode {
    pub const ALL: [Mode; 5] = [Mode::RodRelax, Mode::FilmRelax, Mode::KpSolve, Mode::Check, Mode::LscDiagnostic];

    pub fn name(self) -> &'static str {
        match self {
            Mode::RodRelax => "rod-relax",
            Mode::FilmRelax => "film-relax",
            Mode::KpSolve => "kp-solve",
            Mode::Check => "check",
            Mode::LscDiagnostic => "lsc-diagnostic",
        }
    }

    pub fn parse(s: &str) -> Option<Mode> {
        Mode::ALL.into_iter().find(|m| m.name() == s)
    }

    fn needs_loops(self) -> bool {
        matches!(self, Mode::FilmRelax | Mode::KpSolve | Mode::LscDiagnostic)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Where the rod densities come from.
#[derive(Clone, Debug, PartialEq)]
pub enum RodSource {
    Circle,
    PerturbedCircle { noise: f64 },
    TwistedCircle { turns: f64 },
    DoubledCircle,
    /// explicit `(kappa1, kappa2, omega)` arrays, inline or from a file
    Arrays { kappa1: Vec<f64>, kappa2: Vec<f64>, omega: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct RodSpec {
    pub source: RodSource,
    pub n: usize,
    pub length: f64,
    pub clamp: ClampingParams<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintConfig {
    pub glue_angle: f64,
    /// required link number; defaults to that of the initial state
    pub link: Option<i64>,
    pub template: Option<Vec<Vec3<f64>>>,
    pub energy_bound: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckOptions {
    /// voxel edge; defaults to a quarter of the section bound
    pub voxel_h: Option<f64>,
    pub scan_samples: usize,
    /// parameter-distance threshold for the collision scan, relative to `L`
    pub scan_param_tol: f64,
    pub scan_dist_tol: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LscOptions {
    pub steps: usize,
    pub tol_rel: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    /// mode named in the file, if any
    pub mode: Option<Mode>,
    pub seed: u64,
    pub rod: RodSpec,
    pub section: CrossSection<f64>,
    pub material: MaterialParams<f64>,
    pub constraints: ConstraintConfig,
    pub loops: Vec<TestLoop<f64>>,
    /// add the canonical threading loop of the initial rod
    pub canonical_loop: bool,
    pub solver: SolveOptions,
    pub film: RelaxOptions,
    pub check: CheckOptions,
    pub lsc: LscOptions,
    pub out_dir: Option<PathBuf>,
    /// the parsed file, echoed into the report
    pub raw: Table,
}

/// Every problem found in a config file.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigErrors(pub Vec<String>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

const SECTIONS: [&str; 10] = [
    "rod",
    "section",
    "material",
    "constraints",
    "loops",
    "solver",
    "film",
    "check",
    "lsc",
    "output",
];

/// Typed access to one table, recording the keys it reads.
struct Reader<'a> {
    name: &'a str,
    table: Option<&'a Table>,
    used: BTreeSet<String>,
    errors: Vec<String>,
}

impl<'a> Reader<'a> {
    fn new(name: &'a str, table: Option<&'a Table>) -> Self {
        Self {
            name,
            table,
            used: BTreeSet::new(),
            errors: Vec::new(),
        }
    }

    fn key(&self, key: &str) -> String {
        if self.name.is_empty() {
            key.to_string()
        } else {
            format!("{}.{key}", self.name)
        }
    }

    fn get(&mut self, key: &str) -> Option<&'a Value> {
        self.used.insert(key.to_string());
        self.table.and_then(|t| t.get(key))
    }

    fn has(&self, key: &str) -> bool {
        self.table.is_some_and(|t| t.contains_key(key))
    }

    fn err(&mut self, key: &str, msg: impl fmt::Display) {
        let k = self.key(key);
        self.errors.push(format!("{k}: {msg}"));
    }

    fn opt_f64(&mut self, key: &str) -> Option<f64> {
        match self.get(key)? {
            Value::Float(v) => Some(*v),
            Value::Integer(v) => Some(*v as f64),
            other => {
                self.err(key, format!("expected a number, got {}", other.type_str()));
                None
            }
        }
    }

    fn f64(&mut self, key: &str, default: f64) -> f64 {
        self.opt_f64(key).unwrap_or(default)
    }

    /// Number checked by `ok`, which names the requirement.
    fn f64_where(&mut self, key: &str, default: f64, what: &str, ok: impl Fn(f64) -> bool) -> f64 {
        let v = self.f64(key, default);
        if !ok(v) || !v.is_finite() {
            self.err(key, format!("must be {what}, got {v}"));
        }
        v
    }

    fn opt_i64(&mut self, key: &str) -> Option<i64> {
        match self.get(key)? {
            Value::Integer(v) => Some(*v),
            other => {
                self.err(key, format!("expected an integer, got {}", other.type_str()));
                None
            }
        }
    }

    fn usize(&mut self, key: &str, default: usize) -> usize {
        match self.opt_i64(key) {
            Some(v) if v >= 0 => v as usize,
            Some(v) => {
                self.err(key, format!("must be nonnegative, got {v}"));
                default
            }
            None => default,
        }
    }

    fn opt_str(&mut self, key: &str) -> Option<&'a str> {
        match self.get(key)? {
            Value::String(s) => Some(s.as_str()),
            other => {
                self.err(key, format!("expected a string, got {}", other.type_str()));
                None
            }
        }
    }

    fn bool(&mut self, key: &str, default: bool) -> bool {
        match self.get(key) {
            Some(Value::Boolean(b)) => *b,
            Some(other) => {
                self.err(key, format!("expected a boolean, got {}", other.type_str()));
                default
            }
            None => default,
        }
    }

    fn opt_f64_array(&mut self, key: &str) -> Option<Vec<f64>> {
        let v = self.get(key)?;
        let Value::Array(items) = v else {
            self.err(key, format!("expected an array, got {}", v.type_str()));
            return None;
        };
        let mut out = Vec::with_capacity(items.len());
        for it in items {
            match it {
                Value::Float(x) => out.push(*x),
                Value::Integer(x) => out.push(*x as f64),
                _ => {
                    self.err(key, "array entries must be numbers");
                    return None;
                }
            }
        }
        Some(out)
    }

    fn opt_vec3(&mut self, key: &str) -> Option<Vec3<f64>> {
        let a = self.opt_f64_array(key)?;
        if a.len() != 3 {
            self.err(key, format!("expected 3 numbers, got {}", a.len()));
            return None;
        }
        Some(Vec3::new(a[0], a[1], a[2]))
    }

    fn opt_str_array(&mut self, key: &str) -> Option<Vec<&'a str>> {
        let v = self.get(key)?;
        let Value::Array(items) = v else {
            self.err(key, format!("expected an array of strings, got {}", v.type_str()));
            return None;
        };
        let mut out = Vec::new();
        for it in items {
            let Value::String(s) = it else {
                self.err(key, "array entries must be strings");
                return None;
            };
            out.push(s.as_str());
        }
        Some(out)
    }

    /// Unknown-key errors plus everything collected so far.
    fn finish(mut self, skip: &[&str]) -> Vec<String> {
        if let Some(t) = self.table {
            for k in t.keys() {
                if !self.used.contains(k) && !skip.contains(&k.as_str()) {
                    let key = self.key(k);
                    self.errors.push(format!("{key}: unknown key"));
                }
            }
        }
        self.errors
    }
}

fn resolve(base: &Path, file: &str) -> PathBuf {
    let p = Path::new(file);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Reads whitespace-separated numeric rows, skipping blanks and `#` lines.
fn read_rows(path: &Path, width: usize) -> Result<Vec<Vec<f64>>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let mut rows = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row: Result<Vec<f64>, _> = line.split_whitespace().map(str::parse).collect();
        match row {
            Ok(r) if r.len() == width => rows.push(r),
            _ => return Err(format!("{}:{}: expected {width} numbers", path.display(), ln + 1)),
        }
    }
    Ok(rows)
}

fn table_of<'a>(root: &'a Table, name: &str, errors: &mut Vec<String>) -> Option<&'a Table> {
    match root.get(name) {
        Some(Value::Table(t)) => Some(t),
        Some(_) => {
            errors.push(format!("{name}: expected a table"));
            None
        }
        None => None,
    }
}

pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigErrors> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigErrors(vec![format!("cannot read {}: {e}", path.display())]))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config_str(&text, base)
}

/// Parses config text; files are looked up relative to `base`.
pub fn parse_config_str(text: &str, base: &Path) -> Result<RunConfig, ConfigErrors> {
    let root: Table = text.parse().map_err(|e: toml::de::Error| ConfigErrors(vec![e.to_string()]))?;
    let mut errors = Vec::new();

    let mut top = Reader::new("", Some(&root));
    let mode = top.opt_str("mode").and_then(|m| {
        let parsed = Mode::parse(m);
        if parsed.is_none() {
            top.err("mode", format!("unrecognized mode '{m}'"));
        }
        parsed
    });
    let seed = match top.opt_i64("seed") {
        Some(s) if s >= 0 => s as u64,
        Some(s) => {
            top.err("seed", format!("must be nonnegative, got {s}"));
            0
        }
        None => 0,
    };
    errors.extend(top.finish(&SECTIONS));
    let tables: Vec<Option<&Table>> = SECTIONS.iter().map(|s| table_of(&root, s, &mut errors)).collect();
    let tab = |name: &str| tables[SECTIONS.iter().position(|s| *s == name).unwrap()];

    // [rod]
    let mut r = Reader::new("rod", tab("rod"));
    let length = r.f64_where("length", 1.0, "positive", |v| v > 0.0);
    let mut n = r.usize("n", 100);
    let preset = r.opt_str("preset").unwrap_or("circle");
    let noise = r.f64_where("noise", 0.05, "nonnegative", |v| v >= 0.0);
    let turns = r.f64("turns", 1.0);
    let file = r.opt_str("file");
    let arrays = (r.opt_f64_array("kappa1"), r.opt_f64_array("kappa2"), r.opt_f64_array("omega"));
    let source = match preset {
        "circle" => RodSource::Circle,
        "perturbed-circle" => RodSource::PerturbedCircle { noise },
        "twisted-circle" => RodSource::TwistedCircle { turns },
        "doubled-circle" => RodSource::DoubledCircle,
        "arrays" => match arrays {
            (Some(a), Some(b), Some(c)) => {
                if a.len() != b.len() || a.len() != c.len() {
                    r.err("kappa1", "kappa1, kappa2 and omega differ in length");
                }
                if r.has("n") && n != a.len() {
                    r.err("n", format!("is {n} but the arrays have {} entries", a.len()));
                }
                n = a.len();
                RodSource::Arrays {
                    kappa1: a,
                    kappa2: b,
                    omega: c,
                }
            }
            _ => {
                r.err("preset", "'arrays' needs kappa1, kappa2 and omega");
                RodSource::Circle
            }
        },
        "file" => match file {
            Some(f) => match read_rows(&resolve(base, f), 3) {
                Ok(rows) => {
                    if r.has("n") && n != rows.len() {
                        r.err("n", format!("is {n} but the file has {} rows", rows.len()));
                    }
                    n = rows.len();
                    RodSource::Arrays {
                        kappa1: rows.iter().map(|x| x[0]).collect(),
                        kappa2: rows.iter().map(|x| x[1]).collect(),
                        omega: rows.iter().map(|x| x[2]).collect(),
                    }
                }
                Err(e) => {
                    r.err("file", e);
                    RodSource::Circle
                }
            },
            None => {
                r.err("preset", "'file' needs rod.file");
                RodSource::Circle
            }
        },
        other => {
            r.err("preset", format!("unknown preset '{other}'"));
            RodSource::Circle
        }
    };
    if n < 3 {
        r.err("n", format!("must be at least 3, got {n}"));
    }
    let std_clamp = ClampingParams::<f64>::standard();
    let x0 = r.opt_vec3("x0").unwrap_or(std_clamp.x0);
    let t0 = r.opt_vec3("t0").unwrap_or(std_clamp.t0);
    let d0 = r.opt_vec3("d0").unwrap_or(std_clamp.d0);
    let clamp = match ClampingParams::new(x0, t0, d0) {
        Ok(c) => c,
        Err(e) => {
            r.err("t0", e);
            std_clamp
        }
    };
    errors.extend(r.finish(&[]));

    // [section]
    let mut s = Reader::new("section", tab("section"));
    let regular = s.opt_f64_array("regular");
    let polygon = s.opt_str("polygon");
    let vertices = s.get("vertices");
    let chosen = [regular.is_some(), polygon.is_some(), vertices.is_some()]
        .iter()
        .filter(|&&b| b)
        .count();
    let section_vertices: Option<Vec<[f64; 2]>> = if chosen > 1 {
        s.err("regular", "give only one of regular, polygon, vertices");
        None
    } else if let Some(reg) = regular {
        if reg.len() != 2 || reg[0] < 3.0 || reg[0].fract() != 0.0 || !(reg[1] > 0.0) {
            s.err("regular", "expected [k, r] with integer k >= 3 and r > 0");
            None
        } else {
            match CrossSection::<f64>::regular(reg[0] as usize, reg[1]) {
                Ok(sec) => Some(sec.vertices().to_vec()),
                Err(e) => {
                    s.err("regular", e);
                    None
                }
            }
        }
    } else if let Some(f) = polygon {
        match read_rows(&resolve(base, f), 2) {
            Ok(rows) => Some(rows.iter().map(|r| [r[0], r[1]]).collect()),
            Err(e) => {
                s.err("polygon", e);
                None
            }
        }
    } else if let Some(v) = vertices {
        let parsed: Option<Vec<[f64; 2]>> = v.as_array().and_then(|items| {
            items
                .iter()
                .map(|p| {
                    let a = p.as_array()?;
                    let num = |x: &Value| x.as_float().or_else(|| x.as_integer().map(|i| i as f64));
                    if a.len() == 2 {
                        Some([num(&a[0])?, num(&a[1])?])
                    } else {
                        None
                    }
                })
                .collect()
        });
        if parsed.is_none() {
            s.err("vertices", "expected an array of [z1, z2] pairs");
        }
        parsed
    } else {
        Some(CrossSection::<f64>::regular(16, 0.01).unwrap().vertices().to_vec())
    };
    let section = section_vertices.and_then(|v| match CrossSection::new(v) {
        Ok(sec) => Some(sec),
        Err(e) => {
            s.err("vertices", e);
            None
        }
    });
    errors.extend(s.finish(&[]));

    // [material]
    let mut m = Reader::new("material", tab("material"));
    let positive = |v: f64| v > 0.0;
    let nonneg = |v: f64| v >= 0.0;
    let material = MaterialParams {
        a1: m.f64_where("a1", 1.0, "positive", positive),
        a2: m.f64_where("a2", 1.0, "positive", positive),
        a3: m.f64_where("a3", 1.0, "positive", positive),
        kappa1_0: m.f64("kappa1_0", 0.0),
        kappa2_0: m.f64("kappa2_0", 0.0),
        omega_0: m.f64("omega_0", 0.0),
        rho: m.f64_where("rho", 0.0, "nonnegative", nonneg),
        g: m.opt_vec3("g").unwrap_or(Vec3::new(0.0, 0.0, -9.81)),
        sigma: m.f64_where("sigma", 0.0, "nonnegative", nonneg),
        p_exponent: {
            let p = m.usize("p_exponent", 2);
            if p != 2 {
                m.err("p_exponent", format!("only 2 is supported, got {p}"));
            }
            2
        },
    };
    errors.extend(m.finish(&[]));

    // [constraints]
    let mut c = Reader::new("constraints", tab("constraints"));
    let glue_angle = c.f64("glue_angle", 0.0);
    let link = c.opt_i64("link");
    let template = c.opt_str("template").and_then(|f| match read_polylines(&resolve(base, f)) {
        Ok(mut polys) if polys.len() == 1 && polys[0].1.len() >= 3 => Some(polys.remove(0).1),
        Ok(_) => {
            c.err("template", "expected one closed polyline with at least 3 points");
            None
        }
        Err(e) => {
            c.err("template", e);
            None
        }
    });
    let energy_bound = c.opt_f64("energy_bound");
    errors.extend(c.finish(&[]));

    // [loops]
    let mut l = Reader::new("loops", tab("loops"));
    let mut loops = Vec::new();
    for f in l.opt_str_array("files").unwrap_or_default() {
        let path = resolve(base, f);
        match read_polylines(&path) {
            Ok(polys) => {
                for (k, (label, pts)) in polys.into_iter().enumerate() {
                    let label = label.unwrap_or_else(|| {
                        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                        if k == 0 {
                            stem
                        } else {
                            format!("{stem}-{k}")
                        }
                    });
                    match TestLoop::new(pts, label, "threading") {
                        Ok(lp) => loops.push(lp),
                        Err(e) => l.err("files", e),
                    }
                }
            }
            Err(e) => l.err("files", e),
        }
    }
    let canonical_loop = l.bool("canonical", true);
    errors.extend(l.finish(&[]));

    // [solver]
    let d = SolveOptions::default();
    let mut so = Reader::new("solver", tab("solver"));
    let solver = SolveOptions {
        mu_x: so.f64_where("mu_x", d.mu_x, "nonnegative", nonneg),
        mu_t: so.f64_where("mu_t", d.mu_t, "nonnegative", nonneg),
        mu_d: so.f64_where("mu_d", d.mu_d, "nonnegative", nonneg),
        beta: so.f64_where("beta", d.beta, "nonnegative", nonneg),
        beta_decay: so.f64_where("beta_decay", d.beta_decay, "in (0, 1]", |v| v > 0.0 && v <= 1.0),
        beta_min: so.f64_where("beta_min", d.beta_min, "nonnegative", nonneg),
        contact_stiffness: so.f64_where("contact_stiffness", d.contact_stiffness, "nonnegative", nonneg),
        max_outer: so.usize("max_outer", d.max_outer),
        h_fd: so.f64_where("h_fd", d.h_fd, "positive", positive),
        film_warm_start: so.bool("film_warm_start", d.film_warm_start),
        seed,
        gtol: so.f64_where("gtol", d.gtol, "nonnegative", nonneg),
        ftol: so.f64_where("ftol", d.ftol, "nonnegative", nonneg),
        stall_window: so.usize("stall_window", d.stall_window).max(1),
        closure_tol: so.f64_where("closure_tol", d.closure_tol, "positive", positive),
        inner_fd_iters: so.usize("inner_fd_iters", d.inner_fd_iters),
        max_step: so.f64_where("max_step", d.max_step, "positive", positive),
        film: RelaxOptions::default(),
    };
    errors.extend(so.finish(&[]));

    // [film]
    let fd = RelaxOptions::default();
    let mut fr = Reader::new("film", tab("film"));
    let film = RelaxOptions {
        max_iters: fr.usize("max_iters", fd.max_iters),
        tol_rel: fr.f64_where("tol_rel", fd.tol_rel, "nonnegative", nonneg),
        window: fr.usize("window", fd.window).max(1),
        maintenance_period: fr.usize("maintenance_period", fd.maintenance_period),
        length_max: fr.f64_where("length_max", fd.length_max, "positive", positive),
        length_min: fr.f64_where("length_min", fd.length_min, "nonnegative", nonneg),
        step: fr.f64_where("step", fd.step, "positive", positive),
        min_step: fr.f64_where("min_step", fd.min_step, "positive", positive),
    };
    errors.extend(fr.finish(&[]));
    let solver = SolveOptions {
        film: film.clone(),
        ..solver
    };

    // [check]
    let mut ch = Reader::new("check", tab("check"));
    let check = CheckOptions {
        voxel_h: ch.opt_f64("voxel_h"),
        scan_samples: ch.usize("scan_samples", 10_000),
        scan_param_tol: ch.f64_where("scan_param_tol", 1e-3, "positive", positive),
        scan_dist_tol: ch.f64_where("scan_dist_tol", 1e-9, "positive", positive),
    };
    if let Some(h) = check.voxel_h {
        if !(h > 0.0) {
            ch.err("voxel_h", format!("must be positive, got {h}"));
        }
    }
    errors.extend(ch.finish(&[]));

    // [lsc]
    let mut ls = Reader::new("lsc", tab("lsc"));
    let lsc = LscOptions {
        steps: ls.usize("steps", 8),
        tol_rel: ls.f64_where("tol_rel", 1e-3, "nonnegative", nonneg),
    };
    if lsc.steps == 0 {
        ls.err("steps", "must be at least 1");
    }
    errors.extend(ls.finish(&[]));

    // [output]
    let mut o = Reader::new("output", tab("output"));
    let out_dir = o.opt_str("dir").map(|d| resolve(base, d));
    errors.extend(o.finish(&[]));

    let needs_loops = mode.map_or(false, Mode::needs_loops);
    if needs_loops && loops.is_empty() && !canonical_loop {
        errors.push("loops: this mode needs at least one loop (files or canonical = true)".into());
    }
    if mode == Some(Mode::LscDiagnostic) && !matches!(source, RodSource::Circle) {
        errors.push("rod.preset: lsc-diagnostic builds its sequence from the circle preset".into());
    }

    if !errors.is_empty() {
        return Err(ConfigErrors(errors));
    }
    Ok(RunConfig {
        mode,
        seed,
        rod: RodSpec {
            source,
            n,
            length,
            clamp,
        },
        section: section.expect("section checked above"),
        material,
        constraints: ConstraintConfig {
            glue_angle,
            link,
            template,
            energy_bound,
        },
        loops,
        canonical_loop,
        solver,
        film,
        check,
        lsc,
        out_dir,
        raw: root,
    })
}

impl RunConfig {
    /// Checks the config against the mode requested on the command line.
    pub fn for_mode(mut self, mode: Mode) -> Result<Self, ConfigErrors> {
        let mut errors = Vec::new();
        if let Some(m) = self.mode {
            if m != mode {
                errors.push(format!("mode: config says '{m}' but '{mode}' was requested"));
            }
        }
        if mode.needs_loops() && self.loops.is_empty() && !self.canonical_loop {
            errors.push("loops: this mode needs at least one loop (files or canonical = true)".into());
        }
        if mode == Mode::LscDiagnostic && !matches!(self.rod.source, RodSource::Circle) {
            errors.push("rod.preset: lsc-diagnostic builds its sequence from the circle preset".into());
        }
        if !errors.is_empty() {
            return Err(ConfigErrors(errors));
        }
        self.mode = Some(mode);
        Ok(self)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.solver.seed = seed;
        self
    }
}
