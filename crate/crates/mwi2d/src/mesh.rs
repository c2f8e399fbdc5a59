//! Face-based finite-volume mesh for 2D polygonal cells.
//!
//! Cells are polygons with area ("volume") and centroid; faces are edges with
//! an outward area vector stored once, oriented from the owner cell towards
//! the neighbor. Boundary faces have no neighbor and carry `lambda = 1`.

use std::collections::HashMap;

use crate::geom::Vec2;

#[derive(Debug, thiserror::Error)]
pub enum MeshError {
    #[error("cell counts must be positive, got nx={0}, ny={1}")]
    ZeroCells(usize, usize),
    #[error("degenerate domain extents: [{0}, {1}] x [{2}, {3}]")]
    DegenerateExtents(f64, f64, f64, f64),
    #[error("stretching ratios must be positive, got ({0}, {1})")]
    BadStretching(f64, f64),
    #[error("|skew| must be < 0.5, got {0}")]
    BadSkew(f64),
    #[error("cell {cell} violates the closed-surface Gauss identity (defect {defect:e})")]
    GaussViolation { cell: usize, defect: f64 },
    #[error("cell {0} has non-positive volume {1}")]
    NonPositiveVolume(usize, f64),
    #[error("face between vertices {0} and {1} is shared by more than two cells")]
    NonManifoldEdge(usize, usize),
    #[error("patch '{0}' references edge ({1}, {2}) that is not a boundary edge")]
    BadPatchEdge(String, usize, usize),
    #[error("unknown patch '{0}'")]
    UnknownPatch(String),
    #[error("mesh file parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PatchKind {
    Wall,
    Inlet,
    Outlet,
    Slip,
    Symmetry,
}

impl PatchKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PatchKind::Wall => "wall",
            PatchKind::Inlet => "inlet",
            PatchKind::Outlet => "outlet",
            PatchKind::Slip => "slip",
            PatchKind::Symmetry => "symmetry",
        }
    }

    pub fn parse(s: &str) -> Option<PatchKind> {
        match s {
            "wall" => Some(PatchKind::Wall),
            "inlet" => Some(PatchKind::Inlet),
            "outlet" => Some(PatchKind::Outlet),
            "slip" => Some(PatchKind::Slip),
            "symmetry" => Some(PatchKind::Symmetry),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Patch {
    pub name: String,
    pub kind: PatchKind,
    pub faces: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct CellGeometry {
    pub centroid: Vec2,
    pub volume: f64,
    /// Face index plus orientation sign: +1 if this cell owns the face.
    pub faces: Vec<(usize, f64)>,
}

#[derive(Debug, Clone)]
pub struct FaceGeometry {
    pub centroid: Vec2,
    /// Outward area vector as seen from the owner (length = edge length).
    pub area: Vec2,
    pub owner: usize,
    pub neighbor: Option<usize>,
    /// Owner centroid to neighbor centroid; for boundary faces owner centroid
    /// to face centroid.
    pub d: Vec2,
    pub lambda: f64,
    /// lambda-weighted point on the owner-neighbor line.
    pub perp_point: Vec2,
    pub patch: Option<usize>,
}

impl FaceGeometry {
    pub fn is_interior(&self) -> bool {
        self.neighbor.is_some()
    }
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub vertices: Vec<Vec2>,
    pub cell_vertices: Vec<Vec<usize>>,
    pub cells: Vec<CellGeometry>,
    pub faces: Vec<FaceGeometry>,
    pub patches: Vec<Patch>,
    /// Cartesian cell counts when generated structured, used for structured
    /// output and odd-even diagnostics.
    pub structured_dims: Option<(usize, usize)>,
}

/// Boundary patch definition for `compute_geometry`: named vertex-pair edges.
#[derive(Debug, Clone)]
pub struct PatchSpec {
    pub name: String,
    pub kind: PatchKind,
    pub edges: Vec<(usize, usize)>,
}

impl Mesh {
    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn interior_faces(&self) -> impl Iterator<Item = (usize, &FaceGeometry)> {
        self.faces.iter().enumerate().filter(|(_, f)| f.is_interior())
    }

    pub fn boundary_faces(&self) -> impl Iterator<Item = (usize, &FaceGeometry)> {
        self.faces.iter().enumerate().filter(|(_, f)| !f.is_interior())
    }

    pub fn patch(&self, name: &str) -> Result<&Patch, MeshError> {
        self.patches
            .iter()
            .find(|p| p.name == name)
            .ok_or_else(|| MeshError::UnknownPatch(name.to_string()))
    }

    pub fn set_patch_kind(&mut self, name: &str, kind: PatchKind) -> Result<(), MeshError> {
        let p = self
            .patches
            .iter_mut()
            .find(|p| p.name == name)
            .ok_or_else(|| MeshError::UnknownPatch(name.to_string()))?;
        p.kind = kind;
        Ok(())
    }

    pub fn total_volume(&self) -> f64 {
        self.cells.iter().map(|c| c.volume).sum()
    }

    /// Max defect of the closed-surface identity sum_F dGamma = 0, relative to
    /// the cell perimeter scale.
    pub fn gauss_closure_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for cell in &self.cells {
            let mut sum = Vec2::ZERO;
            let mut perim = 0.0;
            for &(fi, sign) in &cell.faces {
                sum += self.faces[fi].area * sign;
                perim += self.faces[fi].area.norm();
            }
            worst = worst.max(sum.norm() / perim);
        }
        worst
    }

    /// Max relative defect of sum_F (x^F - x^P) dGamma_i = dOmega * delta_ki.
    pub fn gauss_moment_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for cell in &self.cells {
            let mut t = [[0.0f64; 2]; 2];
            for &(fi, sign) in &cell.faces {
                let f = &self.faces[fi];
                let dx = f.centroid - cell.centroid;
                let a = f.area * sign;
                for k in 0..2 {
                    for i in 0..2 {
                        t[k][i] += dx.comp(k) * a.comp(i);
                    }
                }
            }
            for k in 0..2 {
                for i in 0..2 {
                    let expect = if k == i { cell.volume } else { 0.0 };
                    worst = worst.max((t[k][i] - expect).abs() / cell.volume);
                }
            }
        }
        worst
    }
}

fn polygon_area_centroid(vertices: &[Vec2], ids: &[usize]) -> (f64, Vec2) {
    let n = ids.len();
    // Shoelace in coordinates relative to the first vertex: a small cell far
    // from the global origin would otherwise lose its cross products to
    // cancellation between large, nearly equal terms.
    let origin = vertices[ids[0]];
    let mut area2 = 0.0;
    let mut cx = 0.0;
    let mut cy = 0.0;
    for i in 0..n {
        let a = vertices[ids[i]] - origin;
        let b = vertices[ids[(i + 1) % n]] - origin;
        let cross = a.x * b.y - b.x * a.y;
        area2 += cross;
        cx += (a.x + b.x) * cross;
        cy += (a.y + b.y) * cross;
    }
    let area = 0.5 * area2;
    (area, origin + Vec2::new(cx / (3.0 * area2), cy / (3.0 * area2)))
}

/// Build all geometric quantities from a polygon soup with CCW-oriented cells.
pub fn compute_geometry(
    vertices: Vec<Vec2>,
    cell_vertices: Vec<Vec<usize>>,
    patch_specs: &[PatchSpec],
) -> Result<Mesh, MeshError> {
    let n_cells = cell_vertices.len();
    let mut cells: Vec<CellGeometry> = Vec::with_capacity(n_cells);
    for (ci, ids) in cell_vertices.iter().enumerate() {
        let (vol, centroid) = polygon_area_centroid(&vertices, ids);
        if !(vol > 0.0) {
            return Err(MeshError::NonPositiveVolume(ci, vol));
        }
        cells.push(CellGeometry {
            centroid,
            volume: vol,
            faces: Vec::new(),
        });
    }

    // Faces keyed by sorted vertex pair; owner is the first cell that
    // traverses the edge (CCW), orientation taken from the owner.
    let mut edge_map: HashMap<(usize, usize), usize> = HashMap::new();
    let mut faces: Vec<FaceGeometry> = Vec::new();
    let mut face_verts: Vec<(usize, usize)> = Vec::new();
    for (ci, ids) in cell_vertices.iter().enumerate() {
        let n = ids.len();
        for i in 0..n {
            let a = ids[i];
            let b = ids[(i + 1) % n];
            let key = (a.min(b), a.max(b));
            match edge_map.get(&key) {
                None => {
                    let pa = vertices[a];
                    let pb = vertices[b];
                    let e = pb - pa;
                    // Outward normal for CCW traversal.
                    let area = Vec2::new(e.y, -e.x);
                    let fi = faces.len();
                    edge_map.insert(key, fi);
                    face_verts.push((a, b));
                    faces.push(FaceGeometry {
                        centroid: (pa + pb) * 0.5,
                        area,
                        owner: ci,
                        neighbor: None,
                        d: Vec2::ZERO,
                        lambda: 1.0,
                        perp_point: Vec2::ZERO,
                        patch: None,
                    });
                    cells[ci].faces.push((fi, 1.0));
                }
                Some(&fi) => {
                    if faces[fi].neighbor.is_some() {
                        return Err(MeshError::NonManifoldEdge(key.0, key.1));
                    }
                    faces[fi].neighbor = Some(ci);
                    cells[ci].faces.push((fi, -1.0));
                }
            }
        }
    }

    // Geometric weights and connection vectors.
    for f in faces.iter_mut() {
        let xp = cells[f.owner].centroid;
        match f.neighbor {
            Some(nb) => {
                let d = cells[nb].centroid - xp;
                let mut lambda = (f.centroid - xp).dot(d) / d.norm_sq();
                // Faces centered to rounding error are treated as exactly
                // centered so both lever conventions coincide bitwise on
                // uniform meshes.
                if (lambda - 0.5).abs() < 1e-12 {
                    lambda = 0.5;
                }
                f.d = d;
                f.lambda = lambda;
                f.perp_point = xp + d * lambda;
            }
            None => {
                f.d = f.centroid - xp;
                f.lambda = 1.0;
                f.perp_point = f.centroid;
            }
        }
    }

    // Patch assignment.
    let mut patches = Vec::with_capacity(patch_specs.len());
    for (pi, spec) in patch_specs.iter().enumerate() {
        let mut pfaces = Vec::with_capacity(spec.edges.len());
        for &(a, b) in &spec.edges {
            let key = (a.min(b), a.max(b));
            let fi = *edge_map
                .get(&key)
                .ok_or_else(|| MeshError::BadPatchEdge(spec.name.clone(), a, b))?;
            if faces[fi].neighbor.is_some() {
                return Err(MeshError::BadPatchEdge(spec.name.clone(), a, b));
            }
            faces[fi].patch = Some(pi);
            pfaces.push(fi);
        }
        patches.push(Patch {
            name: spec.name.clone(),
            kind: spec.kind,
            faces: pfaces,
        });
    }

    let mesh = Mesh {
        vertices,
        cell_vertices,
        cells,
        faces,
        patches,
        structured_dims: None,
    };

    // Closed-surface invariant, reported for the first offending cell.
    for (ci, cell) in mesh.cells.iter().enumerate() {
        let mut sum = Vec2::ZERO;
        let mut perim = 0.0;
        for &(fi, sign) in &cell.faces {
            sum += mesh.faces[fi].area * sign;
            perim += mesh.faces[fi].area.norm();
        }
        let defect = sum.norm() / perim;
        if defect > 1e-12 {
            return Err(MeshError::GaussViolation { cell: ci, defect });
        }
    }

    let _ = face_verts;
    Ok(mesh)
}

fn stretched_coords(n: usize, lo: f64, hi: f64, ratio: f64) -> Vec<f64> {
    let mut widths = Vec::with_capacity(n);
    let mut w = 1.0;
    for _ in 0..n {
        widths.push(w);
        w *= ratio;
    }
    let total: f64 = widths.iter().sum();
    let scale = (hi - lo) / total;
    let mut xs = Vec::with_capacity(n + 1);
    let mut x = lo;
    xs.push(x);
    for wi in widths {
        x += wi * scale;
        xs.push(x);
    }
    // Pin the last node to the extent exactly.
    *xs.last_mut().unwrap() = hi;
    xs
}

/// Generate a structured quadrilateral mesh with optional per-axis geometric
/// stretching and a shear skew producing non-orthogonal faces.
///
/// Patch names are `west`, `east`, `south`, `north`, all created as walls.
pub fn build_structured_mesh(
    nx: usize,
    ny: usize,
    extents: [f64; 4],
    stretching: (f64, f64),
    skew: f64,
) -> Result<Mesh, MeshError> {
    let [x0, x1, y0, y1] = extents;
    if nx == 0 || ny == 0 {
        return Err(MeshError::ZeroCells(nx, ny));
    }
    if !(x1 > x0) || !(y1 > y0) {
        return Err(MeshError::DegenerateExtents(x0, x1, y0, y1));
    }
    if !(stretching.0 > 0.0) || !(stretching.1 > 0.0) {
        return Err(MeshError::BadStretching(stretching.0, stretching.1));
    }
    if skew.abs() >= 0.5 {
        return Err(MeshError::BadSkew(skew));
    }

    let xs = stretched_coords(nx, x0, x1, stretching.0);
    let ys = stretched_coords(ny, y0, y1, stretching.1);

    let nvx = nx + 1;
    let mut vertices = Vec::with_capacity(nvx * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            // Shear in x proportional to height: tilts vertical faces.
            vertices.push(Vec2::new(xs[i] + skew * (ys[j] - y0), ys[j]));
        }
    }
    let vid = |i: usize, j: usize| j * nvx + i;

    let mut cell_vertices = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            cell_vertices.push(vec![vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)]);
        }
    }

    let mut west = Vec::new();
    let mut east = Vec::new();
    let mut south = Vec::new();
    let mut north = Vec::new();
    for j in 0..ny {
        west.push((vid(0, j), vid(0, j + 1)));
        east.push((vid(nx, j), vid(nx, j + 1)));
    }
    for i in 0..nx {
        south.push((vid(i, 0), vid(i + 1, 0)));
        north.push((vid(i, ny), vid(i + 1, ny)));
    }
    let specs = [
        ("west", west),
        ("east", east),
        ("south", south),
        ("north", north),
    ]
    .into_iter()
    .map(|(name, edges)| PatchSpec {
        name: name.to_string(),
        kind: PatchKind::Wall,
        edges,
    })
    .collect::<Vec<_>>();

    let mut mesh = compute_geometry(vertices, cell_vertices, &specs)?;
    mesh.structured_dims = Some((nx, ny));
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_cell_row_geometry() {
        let m = build_structured_mesh(2, 1, [0.0, 1.0, 0.0, 1.0], (1.0, 1.0), 0.0).unwrap();
        assert_eq!(m.n_cells(), 2);
        for c in &m.cells {
            assert!((c.volume - 0.5).abs() < 1e-14);
        }
        let (_, f) = m.interior_faces().next().unwrap();
        assert!((f.lambda - 0.5).abs() < 1e-14);
        // Outward from the left cell: (+dy, 0).
        assert_eq!(f.owner, 0);
        assert!((f.area.x - 1.0).abs() < 1e-14 && f.area.y.abs() < 1e-14);
    }

    #[test]
    fn nonuniform_lambda_hand_geometry() {
        // Cell widths 1 and 2: x^P = 0.5, x^NB = 2.0, face at x = 1.
        let vertices = vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(3.0, 0.0),
            Vec2::new(0.0, 1.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(3.0, 1.0),
        ];
        let cells = vec![vec![0, 1, 4, 3], vec![1, 2, 5, 4]];
        let m = compute_geometry(vertices, cells, &[]).unwrap();
        let (_, f) = m.interior_faces().next().unwrap();
        assert!((f.d.x - 1.5).abs() < 1e-14 && f.d.y.abs() < 1e-14);
        assert!((f.lambda - 1.0 / 3.0).abs() < 1e-14);
        assert!((f.perp_point.x - 1.0).abs() < 1e-14);
    }

    #[test]
    fn skewed_mesh_is_nonorthogonal_with_valid_lambdas() {
        let m = build_structured_mesh(4, 4, [0.0, 1.0, 0.0, 1.0], (1.0, 1.0), 0.2).unwrap();
        let mut any_nonortho = false;
        for (_, f) in m.interior_faces() {
            assert!(f.lambda > 0.0 && f.lambda < 1.0);
            let cos = f.d.dot(f.area) / (f.d.norm() * f.area.norm());
            if cos < 1.0 - 1e-9 {
                any_nonortho = true;
            }
        }
        assert!(any_nonortho);
    }

    #[test]
    fn gauss_identities_on_generated_meshes() {
        for (stretch, skew) in [((1.0, 1.0), 0.0), ((1.2, 1.0), 0.0), ((1.2, 1.1), 0.2)] {
            let m = build_structured_mesh(16, 12, [0.0, 2.0, 0.0, 1.0], stretch, skew).unwrap();
            assert!(m.gauss_closure_defect() < 1e-12);
            assert!(m.gauss_moment_defect() < 1e-12);
        }
    }

    #[test]
    fn unit_square_single_cell() {
        let vertices = vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(0.0, 1.0),
        ];
        let m = compute_geometry(vertices, vec![vec![0, 1, 2, 3]], &[]).unwrap();
        assert!((m.cells[0].volume - 1.0).abs() < 1e-14);
        let sum: Vec2 = m.cells[0]
            .faces
            .iter()
            .fold(Vec2::ZERO, |acc, &(fi, s)| acc + m.faces[fi].area * s);
        assert!(sum.norm() < 1e-14);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(build_structured_mesh(0, 1, [0.0, 1.0, 0.0, 1.0], (1.0, 1.0), 0.0).is_err());
        assert!(build_structured_mesh(2, 2, [1.0, 1.0, 0.0, 1.0], (1.0, 1.0), 0.0).is_err());
        assert!(build_structured_mesh(2, 2, [0.0, 1.0, 0.0, 1.0], (-1.0, 1.0), 0.0).is_err());
        assert!(build_structured_mesh(2, 2, [0.0, 1.0, 0.0, 1.0], (1.0, 1.0), 0.6).is_err());
    }

    #[test]
    fn uniform_grid_lambda_is_half() {
        let m = build_structured_mesh(8, 8, [0.0, 1.0, 0.0, 1.0], (1.0, 1.0), 0.0).unwrap();
        for (_, f) in m.interior_faces() {
            assert_eq!(f.lambda, 0.5);
        }
    }

    #[test]
    fn construction_is_deterministic() {
        let a = build_structured_mesh(6, 5, [0.0, 3.0, 0.0, 1.0], (1.2, 1.1), 0.1).unwrap();
        let b = build_structured_mesh(6, 5, [0.0, 3.0, 0.0, 1.0], (1.2, 1.1), 0.1).unwrap();
        for (fa, fb) in a.faces.iter().zip(&b.faces) {
            assert_eq!(fa.centroid, fb.centroid);
            assert_eq!(fa.area, fb.area);
            assert_eq!(fa.lambda, fb.lambda);
        }
    }
}
