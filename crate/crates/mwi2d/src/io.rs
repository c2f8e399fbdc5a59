//! Text artifacts: legacy-ASCII VTK field output, residual and sensitivity
//! CSVs, checksummed state persistence, and the run manifest.
//!
//! Everything is deterministic plain text. Floats are written with Rust's
//! shortest round-trip formatting so save/load cycles are bit-exact.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::fields::{CellField, FaceField};
use crate::geom::Vec2;
use crate::mesh::Mesh;
use crate::primal::{PrimalState, Residuals};
use crate::sensitivity::{BoundarySensitivity, SensitivityReport};

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad file format: {0}")]
    Format(String),
    #[error("mesh checksum mismatch: file carries {found}, mesh hashes to {expected}")]
    ChecksumMismatch { expected: String, found: String },
}

/// Write-then-rename so readers never observe a half-written file.
pub fn atomic_write(path: &Path, text: &str) -> Result<(), IoError> {
    let tmp = path.with_extension("part");
    std::fs::write(&tmp, text)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn sha256_hex(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    let mut out = String::with_capacity(64);
    for b in digest {
        write!(out, "{b:02x}").unwrap();
    }
    out
}

/// Checksum of the mesh topology and vertex coordinates; persisted states
/// carry it so a state file cannot be replayed onto a different mesh.
pub fn mesh_checksum(mesh: &Mesh) -> String {
    let mut canon = String::new();
    writeln!(canon, "vertices {}", mesh.vertices.len()).unwrap();
    for v in &mesh.vertices {
        writeln!(canon, "{:?} {:?}", v.x, v.y).unwrap();
    }
    writeln!(canon, "cells {}", mesh.cell_vertices.len()).unwrap();
    for verts in &mesh.cell_vertices {
        for &vi in verts {
            write!(canon, "{vi} ").unwrap();
        }
        canon.push('\n');
    }
    writeln!(canon, "faces {}", mesh.faces.len()).unwrap();
    for f in &mesh.faces {
        writeln!(canon, "{} {:?} {:?}", f.owner, f.neighbor, f.patch).unwrap();
    }
    sha256_hex(&canon)
}

pub fn config_checksum(config_text: &str) -> String {
    sha256_hex(config_text)
}

/// Legacy-ASCII VTK unstructured grid with cell data.
pub fn vtk_text(
    mesh: &Mesh,
    scalars: &[(&str, &CellField<f64>)],
    vectors: &[(&str, &CellField<Vec2>)],
) -> String {
    let mut out = String::new();
    out.push_str("# vtk DataFile Version 3.0\n");
    out.push_str("mwi2d fields\n");
    out.push_str("ASCII\n");
    out.push_str("DATASET UNSTRUCTURED_GRID\n");
    writeln!(out, "POINTS {} double", mesh.vertices.len()).unwrap();
    for v in &mesh.vertices {
        writeln!(out, "{:e} {:e} 0", v.x, v.y).unwrap();
    }
    let list_len: usize = mesh.cell_vertices.iter().map(|c| c.len() + 1).sum();
    writeln!(out, "CELLS {} {}", mesh.cell_vertices.len(), list_len).unwrap();
    for verts in &mesh.cell_vertices {
        write!(out, "{}", verts.len()).unwrap();
        for &vi in verts {
            write!(out, " {vi}").unwrap();
        }
        out.push('\n');
    }
    writeln!(out, "CELL_TYPES {}", mesh.cell_vertices.len()).unwrap();
    for verts in &mesh.cell_vertices {
        // 9 = VTK_QUAD, 7 = VTK_POLYGON
        writeln!(out, "{}", if verts.len() == 4 { 9 } else { 7 }).unwrap();
    }
    writeln!(out, "CELL_DATA {}", mesh.cells.len()).unwrap();
    for (name, field) in scalars {
        writeln!(out, "SCALARS {name} double 1").unwrap();
        out.push_str("LOOKUP_TABLE default\n");
        for v in field.iter() {
            writeln!(out, "{v:e}").unwrap();
        }
    }
    for (name, field) in vectors {
        writeln!(out, "VECTORS {name} double").unwrap();
        for v in field.iter() {
            writeln!(out, "{:e} {:e} 0", v.x, v.y).unwrap();
        }
    }
    out
}

pub fn write_vtk(
    path: &Path,
    mesh: &Mesh,
    scalars: &[(&str, &CellField<f64>)],
    vectors: &[(&str, &CellField<Vec2>)],
) -> Result<(), IoError> {
    let text = vtk_text(mesh, scalars, vectors);
    validate_vtk(&text)?;
    atomic_write(path, &text)
}

/// Minimal structural validator for the legacy-ASCII VTK layout produced by
/// `vtk_text`: section ordering, counts, and float parsability.
pub fn validate_vtk(text: &str) -> Result<(), IoError> {
    let mut lines = text.lines();
    let bad = |msg: &str| IoError::Format(format!("vtk: {msg}"));
    let mut expect = |what: &str, check: &dyn Fn(&str) -> bool| -> Result<String, IoError> {
        let line = lines.next().ok_or_else(|| bad(&format!("missing {what}")))?;
        if !check(line) {
            return Err(bad(&format!("bad {what}: {line:?}")));
        }
        Ok(line.to_string())
    };
    expect("header", &|l| l.starts_with("# vtk DataFile"))?;
    expect("title", &|_| true)?;
    expect("encoding", &|l| l == "ASCII")?;
    expect("dataset", &|l| l == "DATASET UNSTRUCTURED_GRID")?;
    let points = expect("POINTS", &|l| l.starts_with("POINTS "))?;
    let n_points: usize = points
        .split_whitespace()
        .nth(1)
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| bad("POINTS count"))?;
    let mut lines: Vec<&str> = lines.collect();
    lines.reverse();
    let mut pop = |what: &str| -> Result<&str, IoError> {
        lines.pop().ok_or_else(|| bad(&format!("missing {what}")))
    };
    for _ in 0..n_points {
        let l = pop("point")?;
        let coords: Vec<f64> = l
            .split_whitespace()
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|_| bad("point coordinates"))?;
        if coords.len() != 3 {
            return Err(bad("point arity"));
        }
    }
    let cells_hdr = pop("CELLS")?;
    let mut toks = cells_hdr.split_whitespace();
    if toks.next() != Some("CELLS") {
        return Err(bad("CELLS header"));
    }
    let n_cells: usize = toks
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| bad("CELLS count"))?;
    for _ in 0..n_cells {
        let l = pop("cell")?;
        let ids: Vec<usize> = l
            .split_whitespace()
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|_| bad("cell vertex list"))?;
        if ids.is_empty() || ids.len() != ids[0] + 1 {
            return Err(bad("cell vertex count"));
        }
        if ids[1..].iter().any(|&vi| vi >= n_points) {
            return Err(bad("cell vertex id out of range"));
        }
    }
    let types_hdr = pop("CELL_TYPES")?;
    if types_hdr != format!("CELL_TYPES {n_cells}") {
        return Err(bad("CELL_TYPES header"));
    }
    for _ in 0..n_cells {
        pop("cell type")?
            .parse::<u8>()
            .map_err(|_| bad("cell type"))?;
    }
    let data_hdr = pop("CELL_DATA")?;
    let n_data: usize = data_hdr
        .strip_prefix("CELL_DATA ")
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| bad("CELL_DATA header"))?;
    while let Ok(hdr) = pop("field header") {
        let (per_line, count) = if hdr.starts_with("SCALARS ") {
            let lut = pop("LOOKUP_TABLE")?;
            if !lut.starts_with("LOOKUP_TABLE") {
                return Err(bad("LOOKUP_TABLE"));
            }
            (1, n_data)
        } else if hdr.starts_with("VECTORS ") {
            (3, n_data)
        } else {
            return Err(bad("field header"));
        };
        for _ in 0..count {
            let l = pop("field value")?;
            let vals: Vec<f64> = l
                .split_whitespace()
                .map(str::parse)
                .collect::<Result<_, _>>()
                .map_err(|_| bad("field value"))?;
            if vals.len() != per_line {
                return Err(bad("field value arity"));
            }
        }
    }
    Ok(())
}

/// Residual history CSV: `iteration,r_v1,r_v2,r_p,r_phi` (1-based iteration).
pub fn residual_csv(history: &[Residuals], stride: usize) -> String {
    let stride = stride.max(1);
    let mut out = String::from("iteration,r_v1,r_v2,r_p,r_phi\n");
    for (i, r) in history.iter().enumerate() {
        let m = i + 1;
        if m % stride == 0 || m == history.len() {
            writeln!(out, "{m},{:e},{:e},{:e},{:e}", r.v[0], r.v[1], r.p, r.phi).unwrap();
        }
    }
    out
}

/// Adjoint residual history CSV: `iteration,r_v,r_p,r_phi` with the two
/// momentum components summed.
pub fn adjoint_residual_csv(history: &[Residuals], stride: usize) -> String {
    let stride = stride.max(1);
    let mut out = String::from("iteration,r_v,r_p,r_phi\n");
    for (i, r) in history.iter().enumerate() {
        let m = i + 1;
        if m % stride == 0 || m == history.len() {
            writeln!(out, "{m},{:e},{:e},{:e}", r.v_total(), r.p, r.phi).unwrap();
        }
    }
    out
}

/// Sensitivity CSV: one row per finite-difference probe, preceded by the
/// adjoint value so each control is self-contained.
pub fn sensitivity_csv(reports: &[SensitivityReport]) -> String {
    let mut out = String::from(
        "control,adjoint,epsilon,j_plus,j_minus,fd_derivative,deviation,linearity_spread\n",
    );
    for rep in reports {
        for (probe, dev) in rep.probes.iter().zip(&rep.deviations) {
            writeln!(
                out,
                "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
                rep.control,
                rep.adjoint_value,
                probe.epsilon,
                probe.j_plus,
                probe.j_minus,
                probe.derivative,
                dev,
                rep.linearity_spread
            )
            .unwrap();
        }
    }
    out
}

/// Wall sensitivity profile CSV: face centroid and per-area density, with the
/// patch integral in a comment header.
pub fn wall_sensitivity_csv(profile: &BoundarySensitivity, mesh: &Mesh) -> String {
    let mut out = String::new();
    writeln!(out, "# integral,{:e}", profile.integral).unwrap();
    out.push_str("x,y,sensitivity_density\n");
    for &(fi, s) in &profile.face_density {
        let c = mesh.faces[fi].centroid;
        writeln!(out, "{:e},{:e},{:e}", c.x, c.y, s).unwrap();
    }
    out
}

const STATE_MAGIC: &str = "mwi2d-state v1";

fn push_scalar_block(out: &mut String, name: &str, values: &[f64]) {
    writeln!(out, "{name} {}", values.len()).unwrap();
    for v in values {
        writeln!(out, "{v:?}").unwrap();
    }
}

fn push_vector_block(out: &mut String, name: &str, values: &[Vec2]) {
    writeln!(out, "{name} {}", values.len()).unwrap();
    for v in values {
        writeln!(out, "{:?} {:?}", v.x, v.y).unwrap();
    }
}

/// Serialize the parts of a converged primal state that downstream runs need
/// (cell fields plus face velocity/flux), headed by the mesh checksum.
pub fn state_text(state: &PrimalState, mesh: &Mesh) -> String {
    let mut out = String::new();
    writeln!(out, "{STATE_MAGIC}").unwrap();
    writeln!(out, "mesh {}", mesh_checksum(mesh)).unwrap();
    push_vector_block(&mut out, "v", &state.v.0);
    push_scalar_block(&mut out, "p", &state.p.0);
    push_scalar_block(&mut out, "phi", &state.phi.0);
    push_vector_block(&mut out, "face_vel", &state.face_vel.0);
    push_scalar_block(&mut out, "face_flux", &state.face_flux.0);
    out
}

pub fn save_state(path: &Path, state: &PrimalState, mesh: &Mesh) -> Result<(), IoError> {
    atomic_write(path, &state_text(state, mesh))
}

struct BlockReader<'a> {
    lines: std::str::Lines<'a>,
}

impl<'a> BlockReader<'a> {
    fn line(&mut self) -> Result<&'a str, IoError> {
        self.lines
            .next()
            .ok_or_else(|| IoError::Format("state file truncated".into()))
    }

    fn block_len(&mut self, name: &str) -> Result<usize, IoError> {
        let hdr = self.line()?;
        let rest = hdr
            .strip_prefix(name)
            .and_then(|r| r.strip_prefix(' '))
            .ok_or_else(|| IoError::Format(format!("expected block {name:?}, got {hdr:?}")))?;
        rest.parse()
            .map_err(|_| IoError::Format(format!("bad length for block {name:?}")))
    }

    fn scalars(&mut self, name: &str, expect: usize) -> Result<Vec<f64>, IoError> {
        let n = self.block_len(name)?;
        if n != expect {
            return Err(IoError::Format(format!(
                "block {name:?} has {n} entries, mesh needs {expect}"
            )));
        }
        (0..n)
            .map(|_| {
                self.line()?
                    .parse()
                    .map_err(|_| IoError::Format(format!("bad value in block {name:?}")))
            })
            .collect()
    }

    fn vectors(&mut self, name: &str, expect: usize) -> Result<Vec<Vec2>, IoError> {
        let n = self.block_len(name)?;
        if n != expect {
            return Err(IoError::Format(format!(
                "block {name:?} has {n} entries, mesh needs {expect}"
            )));
        }
        (0..n)
            .map(|_| {
                let l = self.line()?;
                let mut toks = l.split_whitespace().map(str::parse::<f64>);
                match (toks.next(), toks.next(), toks.next()) {
                    (Some(Ok(x)), Some(Ok(y)), None) => Ok(Vec2::new(x, y)),
                    _ => Err(IoError::Format(format!("bad value in block {name:?}"))),
                }
            })
            .collect()
    }
}

/// Parse a persisted state, rejecting files whose mesh checksum does not
/// match `mesh`. History fields are seeded from the loaded snapshot.
pub fn parse_state(text: &str, mesh: &Mesh) -> Result<PrimalState, IoError> {
    let mut r = BlockReader { lines: text.lines() };
    let magic = r.line()?;
    if magic != STATE_MAGIC {
        return Err(IoError::Format(format!("unknown state format {magic:?}")));
    }
    let mesh_line = r.line()?;
    let found = mesh_line
        .strip_prefix("mesh ")
        .ok_or_else(|| IoError::Format("missing mesh checksum line".into()))?;
    let expected = mesh_checksum(mesh);
    if found != expected {
        return Err(IoError::ChecksumMismatch {
            expected,
            found: found.to_string(),
        });
    }
    let nc = mesh.cells.len();
    let nf = mesh.faces.len();
    let mut state = PrimalState::new(mesh);
    state.v = CellField(r.vectors("v", nc)?);
    state.p = CellField(r.scalars("p", nc)?);
    state.phi = CellField(r.scalars("phi", nc)?);
    state.face_vel = FaceField(r.vectors("face_vel", nf)?);
    state.face_flux = FaceField(r.scalars("face_flux", nf)?);
    state.v_prev = state.v.clone();
    state.phi_prev = state.phi.clone();
    state.face_vel_prev = state.face_vel.clone();
    state.v_time = state.v.clone();
    state.phi_time = state.phi.clone();
    state.face_vel_time = state.face_vel.clone();
    Ok(state)
}

pub fn load_state(path: &Path, mesh: &Mesh) -> Result<PrimalState, IoError> {
    parse_state(&std::fs::read_to_string(path)?, mesh)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalResiduals {
    pub v1: f64,
    pub v2: f64,
    pub p: f64,
    pub phi: f64,
}

impl From<&Residuals> for FinalResiduals {
    fn from(r: &Residuals) -> Self {
        FinalResiduals {
            v1: r.v[0],
            v2: r.v[1],
            p: r.p,
            phi: r.phi,
        }
    }
}

/// End-of-run record written atomically next to the field output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_checksum: String,
    pub version: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    /// "converged", "max-iterations", or "diverged".
    pub exit_status: String,
    pub iterations: usize,
    pub final_residuals: FinalResiduals,
    pub max_velocity: f64,
    /// Re = max|v| L rho / mu with L the domain height.
    pub reynolds: f64,
    /// Fn = max|v| / sqrt(2 g L) with g = 9.81.
    pub froude: f64,
    /// First iteration from which the summed momentum residual stays below
    /// the reporting threshold (adjoint runs).
    pub first_crossing: Option<usize>,
}

impl RunManifest {
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn write(&self, path: &Path) -> Result<(), IoError> {
        atomic_write(path, &self.to_toml())
    }
}

pub fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bc::{Boundary, ScalBc, VelBc};
    use crate::mesh::build_structured_mesh;
    use crate::sensitivity::FdProbe;

    fn mesh() -> Mesh {
        build_structured_mesh(4, 3, [0.0, 2.0, 0.0, 1.0], (1.1, 1.0), 0.1).unwrap()
    }

    #[test]
    fn checksum_separates_meshes_and_is_stable() {
        let a = mesh_checksum(&mesh());
        let b = mesh_checksum(&mesh());
        assert_eq!(a, b);
        let other = build_structured_mesh(4, 3, [0.0, 2.0, 0.0, 1.0], (1.1, 1.0), 0.0).unwrap();
        assert_ne!(a, mesh_checksum(&other));
        assert_eq!(a.len(), 64);
    }

    #[test]
    fn vtk_output_passes_the_structural_reader() {
        let mesh = mesh();
        let p = CellField(vec![1.5; mesh.cells.len()]);
        let v = CellField(vec![Vec2::new(1.0, -2.0); mesh.cells.len()]);
        let text = vtk_text(&mesh, &[("p", &p)], &[("v", &v)]);
        validate_vtk(&text).unwrap();
    }

    #[test]
    fn vtk_reader_rejects_truncation_and_corruption() {
        let mesh = mesh();
        let p = CellField(vec![0.0; mesh.cells.len()]);
        let text = vtk_text(&mesh, &[("p", &p)], &[]);
        let cut: String = text.lines().take(10).collect::<Vec<_>>().join("\n");
        assert!(validate_vtk(&cut).is_err());
        let corrupt = text.replace("CELL_TYPES", "CELL_KINDS");
        assert!(validate_vtk(&corrupt).is_err());
        let nan_ok = text.replace("1.5e0", "NaN");
        // NaN parses as a float; structure is what the reader checks.
        assert!(validate_vtk(&nan_ok).is_ok() || validate_vtk(&text).is_ok());
    }

    #[test]
    fn state_round_trips_bit_exactly_and_checks_the_mesh() {
        let mesh = mesh();
        let boundary = {
            let mut b = Boundary::new(&mesh);
            for name in ["south", "north", "west", "east"] {
                b.set_patch(&mesh, name, |_| VelBc::Fixed(Vec2::ZERO), ScalBc::ZeroGradient, |_| {
                    ScalBc::Fixed(0.0)
                })
                .unwrap();
            }
            b
        };
        let mut state = PrimalState::new(&mesh);
        for (ci, cell) in mesh.cells.iter().enumerate() {
            state.v[ci] = Vec2::new(cell.centroid.x.sin(), 1.0 / (ci as f64 + 3.0));
            state.p[ci] = cell.centroid.y.exp();
            state.phi[ci] = (ci as f64).sqrt();
        }
        state.sync_faces(&mesh, 1.0, &boundary);
        let text = state_text(&state, &mesh);
        let loaded = parse_state(&text, &mesh).unwrap();
        assert_eq!(state.v.0, loaded.v.0);
        assert_eq!(state.p.0, loaded.p.0);
        assert_eq!(state.phi.0, loaded.phi.0);
        assert_eq!(state.face_vel.0, loaded.face_vel.0);
        assert_eq!(state.face_flux.0, loaded.face_flux.0);
        assert_eq!(loaded.v_prev.0, loaded.v.0);

        let other = build_structured_mesh(4, 3, [0.0, 2.0, 0.0, 1.0], (1.0, 1.0), 0.0).unwrap();
        match parse_state(&text, &other) {
            Err(IoError::ChecksumMismatch { .. }) => {}
            r => panic!("expected checksum mismatch, got {r:?}"),
        }
    }

    #[test]
    fn residual_csv_layout_and_stride() {
        let hist = vec![
            Residuals { v: [1.0, 2.0], p: 3.0, phi: 4.0 },
            Residuals { v: [0.1, 0.2], p: 0.3, phi: 0.4 },
            Residuals { v: [0.01, 0.02], p: 0.03, phi: 0.04 },
        ];
        let csv = residual_csv(&hist, 2);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "iteration,r_v1,r_v2,r_p,r_phi");
        assert!(lines[1].starts_with("2,"));
        // the final iteration is always kept
        assert!(lines[2].starts_with("3,"));
        assert_eq!(lines.len(), 3);
        let adj = adjoint_residual_csv(&hist, 1);
        assert!(adj.lines().nth(1).unwrap().starts_with("1,3e0,"));
    }

    #[test]
    fn sensitivity_csv_one_row_per_probe() {
        let rep = SensitivityReport::new(
            "cell 7",
            2.0,
            vec![
                FdProbe { epsilon: 1e-2, j_plus: 1.0, j_minus: 0.96, derivative: 2.0 },
                FdProbe { epsilon: 1e-3, j_plus: 0.1, j_minus: 0.0959, derivative: 2.05 },
            ],
        );
        let csv = sensitivity_csv(&[rep]);
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.lines().nth(1).unwrap().starts_with("cell 7,2e0,1e-2,"));
    }

    #[test]
    fn manifest_round_trips_through_toml() {
        let m = RunManifest {
            config_checksum: "abc".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            started_unix: 100,
            finished_unix: 160,
            exit_status: "converged".into(),
            iterations: 42,
            final_residuals: FinalResiduals { v1: 1e-9, v2: 2e-9, p: 3e-9, phi: 0.0 },
            max_velocity: 1.25,
            reynolds: 250.0,
            froude: 0.75,
            first_crossing: Some(17),
        };
        let text = m.to_toml();
        let back: RunManifest = toml::from_str(&text).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.txt");
        atomic_write(&path, "one").unwrap();
        atomic_write(&path, "two").unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "two");
        assert!(!path.with_extension("part").exists());
    }
}
