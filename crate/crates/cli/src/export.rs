//! Text formats. Every float is written as `{:.16e}`, which round-trips
//! `f64` exactly.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use kp_core::energy::EnergyBreakdown;
use kp_core::rod::{BoundaryTag, ClosureResiduals};
use kp_core::{FilmMesh, TestLoop, Vec3};
use serde_json::ser::{Formatter, PrettyFormatter};
use serde_json::Value;

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "no file name"))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn push_vertex(out: &mut String, p: Vec3<f64>) {
    let _ = writeln!(out, "v {} {} {}", num(p.x), num(p.y), num(p.z));
}

fn push_faces(out: &mut String, tris: &[[usize; 3]]) {
    for t in tris {
        let _ = writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
    }
}

/// Plain triangle mesh as OBJ.
pub fn mesh_to_obj(vertices: &[Vec3<f64>], triangles: &[[usize; 3]]) -> String {
    let mut out = String::new();
    for &p in vertices {
        push_vertex(&mut out, p);
    }
    push_faces(&mut out, triangles);
    out
}

/// Film as OBJ; a tagged vertex is followed by `# tube segment edge u sigma`.
pub fn film_to_obj(film: &FilmMesh<f64>) -> String {
    let mut out = String::new();
    for (p, tag) in film.vertices.iter().zip(&film.tags) {
        push_vertex(&mut out, *p);
        if let Some(t) = tag {
            let _ = writeln!(out, "# tube {} {} {} {}", t.segment, t.edge, num(t.u), num(t.sigma));
        }
    }
    push_faces(&mut out, &film.triangles);
    out
}

/// Vertices, triangles and boundary tags read back from OBJ text.
pub type ObjData = (Vec<Vec3<f64>>, Vec<[usize; 3]>, Vec<Option<BoundaryTag<f64>>>);

pub fn parse_obj(text: &str) -> Result<ObjData, String> {
    let mut verts = Vec::new();
    let mut tags: Vec<Option<BoundaryTag<f64>>> = Vec::new();
    let mut tris = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let bad = |what: &str| format!("line {}: {what}", ln + 1);
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let c: Vec<f64> = it.map(str::parse).collect::<Result<_, _>>().map_err(|_| bad("bad vertex"))?;
                if c.len() != 3 {
                    return Err(bad("vertex needs 3 coordinates"));
                }
                verts.push(Vec3::new(c[0], c[1], c[2]));
                tags.push(None);
            }
            Some("f") => {
                let idx: Vec<usize> = it
                    .map(|s| s.split('/').next().unwrap_or("").parse::<usize>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| bad("bad face"))?;
                if idx.len() != 3 || idx.iter().any(|&i| i == 0 || i > verts.len()) {
                    return Err(bad("face needs 3 valid indices"));
                }
                tris.push([idx[0] - 1, idx[1] - 1, idx[2] - 1]);
            }
            Some("#") => {
                if it.next() == Some("tube") {
                    let f: Vec<&str> = it.collect();
                    if f.len() != 4 || verts.is_empty() {
                        return Err(bad("tube tag needs 4 fields after a vertex"));
                    }
                    let tag = BoundaryTag {
                        segment: f[0].parse().map_err(|_| bad("bad segment"))?,
                        edge: f[1].parse().map_err(|_| bad("bad edge"))?,
                        u: f[2].parse().map_err(|_| bad("bad u"))?,
                        sigma: f[3].parse().map_err(|_| bad("bad sigma"))?,
                    };
                    *tags.last_mut().unwrap() = Some(tag);
                }
            }
            _ => {}
        }
    }
    Ok((verts, tris, tags))
}

/// Closed polylines, one point per line; a blank line separates polylines
/// and `# loop LABEL` names the next one.
pub fn polylines_to_text(polys: &[(Option<&str>, &[Vec3<f64>])]) -> String {
    let mut out = String::new();
    for (i, (label, pts)) in polys.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        if let Some(l) = label {
            let _ = writeln!(out, "# loop {l}");
        }
        for p in pts.iter() {
            let _ = writeln!(out, "{} {} {}", num(p.x), num(p.y), num(p.z));
        }
    }
    out
}

pub fn parse_polylines(text: &str) -> Result<Vec<(Option<String>, Vec<Vec3<f64>>)>, String> {
    let mut out: Vec<(Option<String>, Vec<Vec3<f64>>)> = Vec::new();
    let mut label = None;
    let mut cur = Vec::new();
    let flush = |out: &mut Vec<_>, label: &mut Option<String>, cur: &mut Vec<Vec3<f64>>| {
        if !cur.is_empty() {
            out.push((label.take(), std::mem::take(cur)));
        }
    };
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            flush(&mut out, &mut label, &mut cur);
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let mut it = rest.split_whitespace();
            if it.next() == Some("loop") {
                flush(&mut out, &mut label, &mut cur);
                label = it.next().map(str::to_string);
            }
            continue;
        }
        let c: Vec<f64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|_| format!("line {}: bad number", ln + 1))?;
        if c.len() != 3 {
            return Err(format!("line {}: expected 3 numbers", ln + 1));
        }
        cur.push(Vec3::new(c[0], c[1], c[2]));
    }
    flush(&mut out, &mut label, &mut cur);
    Ok(out)
}

pub fn read_polylines(path: &Path) -> Result<Vec<(Option<String>, Vec<Vec3<f64>>)>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    parse_polylines(&text).map_err(|e| format!("{}: {e}", path.display()))
}

pub fn loops_to_text(loops: &[TestLoop<f64>]) -> String {
    let polys: Vec<(Option<&str>, &[Vec3<f64>])> = loops
        .iter()
        .map(|l| (Some(l.label.as_str()), l.points.as_slice()))
        .collect();
    polylines_to_text(&polys)
}

pub const TRACE_HEADER: &str = "iteration,e_shape,e_gravity,e_film,e_total,r_x,r_t,r_d,min_margin";

/// Iteration trace, one row per recorded state.
pub fn trace_csv(rows: &[(EnergyBreakdown<f64>, ClosureResiduals<f64>)]) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for (i, (e, r)) in rows.iter().enumerate() {
        let _ = writeln!(
            out,
            "{i},{},{},{},{},{},{},{},{}",
            num(e.e_shape),
            num(e.e_gravity),
            num(e.e_film),
            num(e.e_total),
            num(r.r_x),
            num(r.r_t),
            num(r.r_d),
            num(e.min_margin())
        );
    }
    out
}

/// Pretty JSON with floats in `{:.16e}` form.
struct SciFormatter(PrettyFormatter<'static>);

impl Formatter for SciFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{value:.16e}")
    }
    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        write!(w, "{:.16e}", value as f64)
    }
    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Serializes with sorted keys (serde_json's map is ordered) and exact floats.
pub fn json_to_string(v: &Value) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SciFormatter(PrettyFormatter::new()));
    serde::Serialize::serialize(v, &mut ser).expect("serializing a Value cannot fail");
    buf.push(b'\n');
    String::from_utf8(buf).expect("JSON is UTF-8")
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn obj_round_trip_is_exact() {
        let v = vec![
            Vec3::new(0.1, -2.0 / 3.0, 1e-300),
            Vec3::new(std::f64::consts::PI, 7.0, -0.0),
            Vec3::new(1.0 / 7.0, 2.5e10, 3.0),
        ];
        let tag = BoundaryTag {
            segment: 4,
            edge: 2,
            u: 1.0 / 3.0,
            sigma: 0.7,
        };
        let film = FilmMesh::new(v.clone(), vec![[0, 1, 2]], vec![Some(tag), None, None]).unwrap();
        let text = film_to_obj(&film);
        let (v2, t2, tags) = parse_obj(&text).unwrap();
        assert_eq!(v2, v);
        assert_eq!(t2, vec![[0, 1, 2]]);
        assert_eq!(tags[0], Some(tag));
        assert!(tags[1].is_none());
        assert_eq!(film_to_obj(&FilmMesh::new(v2, t2, tags).unwrap()), text);
    }

    #[test]
    fn polyline_round_trip_is_exact() {
        let a = vec![Vec3::new(0.1, 0.2, 0.3), Vec3::new(-1e-17, 5.0, 1.0 / 3.0)];
        let b = vec![Vec3::new(2.0, 2.0, 2.0)];
        let text = polylines_to_text(&[(Some("first"), &a), (None, &b)]);
        let back = parse_polylines(&text).unwrap();
        assert_eq!(back[0], (Some("first".to_string()), a));
        assert_eq!(back[1], (None, b));
    }

    #[test]
    fn json_reserialization_is_identical() {
        let v = json!({"b": 1.0 / 3.0, "a": [1, 2.5, -0.0, 1e-300], "c": {"z": true, "y": "s"}});
        let s = json_to_string(&v);
        assert!(s.find("\"a\"").unwrap() < s.find("\"b\"").unwrap());
        let back: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(json_to_string(&back), s);
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
