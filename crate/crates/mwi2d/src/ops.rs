//! Discrete operators: face interpolation with plain and reversed levers,
//! compact face-normal gradients, Green-Gauss cell gradients, and the signed
//! face-flux divergence.
//!
//! Linear interpolation weights the neighbor by lambda and the owner by
//! (1 - lambda); reversed levers swap the two. Boundary faces are not
//! interpolated: they carry the owner value unless a closure supplies a
//! boundary condition value.

use crate::fields::{CellField, FaceField, Linear};
use crate::geom::Vec2;
use crate::mesh::Mesh;

/// Face value = lambda * value(NB) + (1 - lambda) * value(P).
pub fn interp_linear<T: Linear>(field: &CellField<T>, mesh: &Mesh) -> FaceField<T> {
    FaceField(
        mesh.faces
            .iter()
            .map(|f| match f.neighbor {
                Some(nb) => field[nb] * f.lambda + field[f.owner] * (1.0 - f.lambda),
                None => field[f.owner],
            })
            .collect(),
    )
}

/// Face value with reversed (twisted) levers:
/// (1 - lambda) * value(NB) + lambda * value(P).
pub fn interp_reversed<T: Linear>(field: &CellField<T>, mesh: &Mesh) -> FaceField<T> {
    FaceField(
        mesh.faces
            .iter()
            .map(|f| match f.neighbor {
                Some(nb) => field[nb] * (1.0 - f.lambda) + field[f.owner] * f.lambda,
                None => field[f.owner],
            })
            .collect(),
    )
}

/// Compact two-point gradient (value^NB - value^P)/||d|| * d/||d|| per
/// interior face; zero on boundary faces.
pub fn face_normal_gradient(field: &CellField<f64>, mesh: &Mesh) -> FaceField<Vec2> {
    FaceField(
        mesh.faces
            .iter()
            .map(|f| match f.neighbor {
                Some(nb) => {
                    let dsq = f.d.norm_sq();
                    assert!(dsq > 0.0, "zero-length cell connection");
                    f.d * ((field[nb] - field[f.owner]) / dsq)
                }
                None => Vec2::ZERO,
            })
            .collect(),
    )
}

/// Green-Gauss cell gradient of a scalar field. Interior face values come
/// from linear interpolation; boundary face values from `boundary_value`,
/// which receives the face index and the owner cell value (identity closure
/// gives a one-sided zero-gradient closure).
pub fn green_gauss_gradient(
    field: &CellField<f64>,
    mesh: &Mesh,
    boundary_value: impl Fn(usize, f64) -> f64,
) -> CellField<Vec2> {
    let face_vals = interp_linear(field, mesh);
    let mut grad = CellField::zeros(mesh);
    for (ci, cell) in mesh.cells.iter().enumerate() {
        let mut sum = Vec2::ZERO;
        for &(fi, sign) in &cell.faces {
            let f = &mesh.faces[fi];
            let val = if f.is_interior() {
                face_vals[fi]
            } else {
                boundary_value(fi, field[f.owner])
            };
            sum += f.area * (sign * val);
        }
        grad[ci] = sum / cell.volume;
    }
    grad
}

/// Component-wise Green-Gauss gradient of a vector field. Returns the
/// gradient of each component; `grad[c][i]` is the gradient vector of
/// component `i` at cell `c`.
pub fn green_gauss_gradient_vec(
    field: &CellField<Vec2>,
    mesh: &Mesh,
    boundary_value: impl Fn(usize, Vec2) -> Vec2,
) -> [CellField<Vec2>; 2] {
    let face_vals = interp_linear(field, mesh);
    let mut gx = CellField::zeros(mesh);
    let mut gy = CellField::zeros(mesh);
    for (ci, cell) in mesh.cells.iter().enumerate() {
        let mut sx = Vec2::ZERO;
        let mut sy = Vec2::ZERO;
        for &(fi, sign) in &cell.faces {
            let f = &mesh.faces[fi];
            let val = if f.is_interior() {
                face_vals[fi]
            } else {
                boundary_value(fi, field[f.owner])
            };
            sx += f.area * (sign * val.x);
            sy += f.area * (sign * val.y);
        }
        gx[ci] = sx / cell.volume;
        gy[ci] = sy / cell.volume;
    }
    [gx, gy]
}

/// Signed per-cell sum of owner-oriented face fluxes; divided by the cell
/// volume when `per_volume` is set.
pub fn divergence_from_face_flux(
    flux: &FaceField<f64>,
    mesh: &Mesh,
    per_volume: bool,
) -> CellField<f64> {
    let mut div = CellField::zeros(mesh);
    for (ci, cell) in mesh.cells.iter().enumerate() {
        let mut sum = 0.0;
        for &(fi, sign) in &cell.faces {
            sum += sign * flux[fi];
        }
        div[ci] = if per_volume { sum / cell.volume } else { sum };
    }
    div
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_structured_mesh, compute_geometry};

    fn nonuniform_row() -> Mesh {
        // Cell widths 1 and 2, unit height: x^P = 0.5, x^NB = 2.0, lambda = 1/3.
        let vertices = vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(3.0, 0.0),
            Vec2::new(0.0, 1.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(3.0, 1.0),
        ];
        compute_geometry(vertices, vec![vec![0, 1, 4, 3], vec![1, 2, 5, 4]], &[]).unwrap()
    }

    #[test]
    fn interp_linear_midpoint_and_exactness() {
        let m = build_structured_mesh(2, 1, [0.0, 1.0, 0.0, 1.0], (1.0, 1.0), 0.0).unwrap();
        let f = CellField(vec![1.0, 3.0]);
        let face = interp_linear(&f, &m);
        let (fi, _) = m.interior_faces().next().unwrap();
        assert_eq!(face[fi], 2.0);

        // Linear field f(x) = x is reproduced at x^F on the nonuniform row.
        let m = nonuniform_row();
        let f = CellField(m.cells.iter().map(|c| c.centroid.x).collect());
        let face = interp_linear(&f, &m);
        let (fi, _) = m.interior_faces().next().unwrap();
        assert!((face[fi] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn interp_reversed_bias() {
        let m = nonuniform_row();
        let f = CellField(m.cells.iter().map(|c| c.centroid.x).collect());
        let face = interp_reversed(&f, &m);
        let (fi, _) = m.interior_faces().next().unwrap();
        // (2/3)*2.0 + (1/3)*0.5 = 1.5, intentionally biased away from x^F = 1.
        assert!((face[fi] - 1.5).abs() < 1e-14);
    }

    #[test]
    fn interps_agree_on_uniform_grid_and_preserve_constants() {
        let m = build_structured_mesh(5, 4, [0.0, 1.0, 0.0, 1.0], (1.0, 1.0), 0.0).unwrap();
        let f = CellField((0..m.n_cells()).map(|i| (i as f64).sin()).collect());
        let a = interp_linear(&f, &m);
        let b = interp_reversed(&f, &m);
        for fi in 0..m.n_faces() {
            assert_eq!(a[fi], b[fi]);
        }
        let c = interp_linear(&CellField::constant(&m, 7.5), &m);
        assert!(c.iter().all(|&v| (v - 7.5).abs() < 1e-14));
        let c = interp_reversed(&CellField::constant(&m, 7.5), &m);
        assert!(c.iter().all(|&v| (v - 7.5).abs() < 1e-14));
    }

    #[test]
    fn compact_gradient_arithmetic() {
        let m = build_structured_mesh(2, 1, [0.0, 1.0, 0.0, 1.0], (1.0, 1.0), 0.0).unwrap();
        let f = CellField(vec![1.0, 3.0]);
        let g = face_normal_gradient(&f, &m);
        let (fi, _) = m.interior_faces().next().unwrap();
        // d = (0.5, 0): (3-1)/0.5 = 4 in x.
        assert!((g[fi].x - 4.0).abs() < 1e-12 && g[fi].y.abs() < 1e-14);

        let g = face_normal_gradient(&CellField::constant(&m, 2.0), &m);
        assert!(g.iter().all(|v| v.norm() < 1e-14));
    }

    #[test]
    fn compact_gradient_exact_for_linear_field() {
        let m = build_structured_mesh(6, 3, [0.0, 2.0, 0.0, 1.0], (1.3, 1.0), 0.0).unwrap();
        let f = CellField(m.cells.iter().map(|c| c.centroid.x).collect());
        let g = face_normal_gradient(&f, &m);
        for (fi, face) in m.interior_faces() {
            if face.area.y.abs() < 1e-12 {
                // Orthogonal x-face: unit x-gradient exactly.
                assert!((g[fi].x - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn green_gauss_constant_and_affine() {
        let m = build_structured_mesh(8, 8, [0.0, 1.0, 0.0, 1.0], (1.0, 1.0), 0.0).unwrap();
        let g = green_gauss_gradient(&CellField::constant(&m, 3.0), &m, |_, v| v);
        assert!(g.iter().all(|v| v.norm() < 1e-12));

        // f = 2x + 3y with exact boundary closures.
        let f = CellField(m.cells.iter().map(|c| 2.0 * c.centroid.x + 3.0 * c.centroid.y).collect());
        let g = green_gauss_gradient(&f, &m, |fi, _| {
            let c = m.faces[fi].centroid;
            2.0 * c.x + 3.0 * c.y
        });
        for v in g.iter() {
            assert!((v.x - 2.0).abs() < 1e-12 && (v.y - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn green_gauss_matches_independent_reassembly() {
        // Brute-force oracle: assemble the same Gauss sum per cell directly.
        let m = build_structured_mesh(7, 5, [0.0, 2.0, 0.0, 1.0], (1.25, 1.1), 0.15).unwrap();
        let f = CellField(m.cells.iter().map(|c| c.centroid.x * c.centroid.x).collect());
        let g = green_gauss_gradient(&f, &m, |_, v| v);
        for (ci, cell) in m.cells.iter().enumerate() {
            let mut sum = Vec2::ZERO;
            for &(fi, sign) in &cell.faces {
                let face = &m.faces[fi];
                // The face value is owner/neighbor based, not cell based.
                let val = match face.neighbor {
                    Some(nb) => face.lambda * f[nb] + (1.0 - face.lambda) * f[face.owner],
                    None => f[ci],
                };
                sum += face.area * (sign * val);
            }
            let oracle = sum / cell.volume;
            assert!((g[ci] - oracle).norm() < 1e-13);
        }
    }

    #[test]
    fn divergence_sign_convention() {
        let m = build_structured_mesh(2, 1, [0.0, 1.0, 0.0, 1.0], (1.0, 1.0), 0.0).unwrap();
        let mut flux = FaceField::zeros(&m);
        let (fi, _) = m.interior_faces().next().unwrap();
        flux[fi] = 1.0;
        let div = divergence_from_face_flux(&flux, &m, true);
        assert!((div[0] - 1.0 / 0.5).abs() < 1e-14);
        assert!((div[1] + 1.0 / 0.5).abs() < 1e-14);
    }

    #[test]
    fn divergence_of_constant_velocity_fluxes_vanishes() {
        let m = build_structured_mesh(6, 4, [0.0, 1.5, 0.0, 1.0], (1.1, 1.0), 0.1).unwrap();
        let v = Vec2::new(0.7, -0.3);
        let flux = FaceField::from_fn(&m, |fi| v.dot(m.faces[fi].area));
        let div = divergence_from_face_flux(&flux, &m, false);
        for (ci, cell) in m.cells.iter().enumerate() {
            let perim: f64 = cell.faces.iter().map(|&(fi, _)| m.faces[fi].area.norm()).sum();
            assert!(div[ci].abs() < 1e-12 * perim);
        }
    }
}
