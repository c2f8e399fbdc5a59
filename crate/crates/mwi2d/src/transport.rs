//! Shared convection-diffusion assembly for cell-centered scalars.
//!
//! Momentum components, the auxiliary scalar, and their adjoint companions
//! all reduce to the same face-loop: blended upwind/central convection from a
//! given face flux plus over-relaxed orthogonal diffusion with optional
//! explicit non-orthogonality correction.

use crate::bc::ScalBc;
use crate::fields::{CellField, FaceField};
use crate::geom::Vec2;
use crate::linalg::SparseMatrix;
use crate::mesh::Mesh;

/// Three-point wall-normal stencil for quadratic Dirichlet wall fluxes:
/// second cell index plus the inward depths of the first and second cell.
#[derive(Debug, Clone, Copy)]
pub struct WallStencil {
    pub second_cell: usize,
    pub depth_first: f64,
    pub depth_second: f64,
}

/// Precompute wall stencils for every boundary face (best-aligned interior
/// neighbor of the owner).
pub fn wall_stencils(mesh: &Mesh) -> Vec<Option<WallStencil>> {
    let mut out = vec![None; mesh.n_faces()];
    for (fi, face) in mesh.faces.iter().enumerate() {
        if face.is_interior() {
            continue;
        }
        let n_hat = face.area / face.area.norm();
        let owner = face.owner;
        let mut best: Option<(f64, usize)> = None;
        for &(gi, _) in &mesh.cells[owner].faces {
            let g = &mesh.faces[gi];
            let other = if g.owner == owner {
                match g.neighbor {
                    Some(nb) => nb,
                    None => continue,
                }
            } else {
                g.owner
            };
            let dir = mesh.cells[other].centroid - mesh.cells[owner].centroid;
            let score = -n_hat.dot(dir) / dir.norm();
            if best.map_or(true, |(s, _)| score > s) {
                best = Some((score, other));
            }
        }
        if let Some((score, second)) = best {
            if score > 0.3 {
                let depth = |x: Vec2| (face.centroid - x).dot(n_hat);
                let a = depth(mesh.cells[owner].centroid);
                let b = depth(mesh.cells[second].centroid);
                if b > a && a > 0.0 {
                    out[fi] = Some(WallStencil {
                        second_cell: second,
                        depth_first: a,
                        depth_second: b,
                    });
                }
            }
        }
    }
    out
}

pub struct TransportOptions<'a> {
    /// Convective face flux, owner-oriented (volumetric or mass, matching
    /// the equation's form). Negate for adjoint transport.
    pub flux: &'a FaceField<f64>,
    pub diffusivity: f64,
    /// 0 = pure upwind, 1 = pure central.
    pub blend: f64,
    /// Cell gradient of the unknown, required for the explicit
    /// non-orthogonality correction.
    pub nonortho_grad: Option<&'a CellField<Vec2>>,
    /// Quadratic Dirichlet wall flux, assembled implicitly through the
    /// three-point wall-normal stencil.
    pub quad_wall: Option<&'a [Option<WallStencil>]>,
    /// Assemble the exact transpose of the convection operator instead
    /// (adjoint transport). `flux` is then the forward flux, not negated.
    pub transpose: bool,
}

/// Assemble the convection-diffusion operator and boundary right-hand side.
/// `closure(face)` supplies the condition on boundary faces.
pub fn assemble_convection_diffusion(
    mesh: &Mesh,
    opts: &TransportOptions,
    closure: impl Fn(usize) -> ScalBc,
) -> (SparseMatrix, Vec<f64>) {
    let n = mesh.n_cells();
    let mut a = SparseMatrix::new(n);
    let mut rhs = vec![0.0; n];
    let blend = opts.blend;
    let mu = opts.diffusivity;

    for (fi, face) in mesh.faces.iter().enumerate() {
        let m = opts.flux[fi];
        match face.neighbor {
            Some(nb) => {
                let p = face.owner;
                let lambda = face.lambda;
                // Convection: owner row takes + m * phi^F, neighbor row - m * phi^F.
                // Central share.
                let c_p = blend * m * (1.0 - lambda);
                let c_nb = blend * m * lambda;
                // Upwind share.
                let u = (1.0 - blend) * m;
                if opts.transpose {
                    // Entrywise transpose of the forward stencil below.
                    a.add(p, p, c_p);
                    a.add(nb, p, c_nb);
                    a.add(p, nb, -c_p);
                    a.add(nb, nb, -c_nb);
                    if m >= 0.0 {
                        a.add(p, p, u);
                        a.add(p, nb, -u);
                    } else {
                        a.add(nb, p, u);
                        a.add(nb, nb, -u);
                    }
                } else {
                    a.add(p, p, c_p);
                    a.add(p, nb, c_nb);
                    a.add(nb, p, -c_p);
                    a.add(nb, nb, -c_nb);
                    if m >= 0.0 {
                        a.add(p, p, u);
                        a.add(nb, p, -u);
                    } else {
                        a.add(p, nb, u);
                        a.add(nb, nb, -u);
                    }
                }
                // Diffusion, over-relaxed orthogonal part.
                let d = mu * face.area.norm_sq() / face.area.dot(face.d);
                a.add(p, p, d);
                a.add(p, nb, -d);
                a.add(nb, nb, d);
                a.add(nb, p, -d);
                if let Some(grad) = opts.nonortho_grad {
                    // Explicit remainder mu * grad^F . (dGamma - d * |dGamma|^2/(dGamma.d)).
                    let t = face.area - face.d * (face.area.norm_sq() / face.area.dot(face.d));
                    let gf = grad[nb] * lambda + grad[p] * (1.0 - lambda);
                    let corr = mu * gf.dot(t);
                    rhs[p] += corr;
                    rhs[nb] -= corr;
                }
            }
            None => {
                let p = face.owner;
                match closure(fi) {
                    ScalBc::Fixed(vb) => {
                        // Convective outflux m * vb is known. A Dirichlet face
                        // has no convective matrix entry, so its transpose
                        // contributes nothing.
                        if !opts.transpose {
                            rhs[p] -= m * vb;
                        }
                        let delta = face.centroid - mesh.cells[p].centroid;
                        let d = mu * face.area.norm_sq() / face.area.dot(delta);
                        a.add(p, p, d);
                        rhs[p] += d * vb;
                        if let Some(stencils) = opts.quad_wall {
                            if let Some(ws) = stencils[fi] {
                                // Quadratic wall-normal derivative through
                                // (0, vb), (da, phi_P), (db, phi_NB2), minus
                                // the linear two-point part already
                                // assembled: g_quad - g_lin =
                                // phi_P / (db - da)
                                //   - phi_NB2 da / (db (db - da)) - vb / db.
                                // Assembled implicitly; a deferred version
                                // lags one sweep and goes unstable without
                                // velocity under-relaxation.
                                let (da, db) = (ws.depth_first, ws.depth_second);
                                let an = mu * face.area.norm();
                                let diag = an / (db - da);
                                let second = -an * da / (db * (db - da));
                                if opts.transpose {
                                    a.add(p, p, diag);
                                    a.add(ws.second_cell, p, second);
                                } else {
                                    a.add(p, p, diag);
                                    a.add(p, ws.second_cell, second);
                                }
                                rhs[p] += an * vb / db;
                            }
                        }
                    }
                    ScalBc::ZeroGradient => {
                        a.add(p, p, m);
                    }
                }
            }
        }
    }
    (a, rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bc::ScalBc;
    use crate::mesh::build_structured_mesh;

    #[test]
    fn pure_diffusion_rows_sum_to_zero_with_neumann() {
        let m = build_structured_mesh(4, 4, [0.0, 1.0, 0.0, 1.0], (1.0, 1.0), 0.0).unwrap();
        let flux = FaceField::zeros(&m);
        let opts = TransportOptions {
            flux: &flux,
            diffusivity: 1.0,
            blend: 0.0,
            nonortho_grad: None,
            quad_wall: None,
            transpose: false,
        };
        let (a, rhs) = assemble_convection_diffusion(&m, &opts, |_| ScalBc::ZeroGradient);
        let dense = a.to_dense();
        for row in &dense {
            let s: f64 = row.iter().sum();
            assert!(s.abs() < 1e-12);
        }
        assert!(rhs.iter().all(|&v| v == 0.0));
        // Symmetric stencil for pure diffusion.
        for i in 0..a.n {
            for j in 0..a.n {
                assert!((dense[i][j] - dense[j][i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn upwind_direction() {
        // Two cells, flow left to right: downstream row picks up the
        // upstream value with a negative coefficient.
        let m = build_structured_mesh(2, 1, [0.0, 1.0, 0.0, 1.0], (1.0, 1.0), 0.0).unwrap();
        let (fi, _) = m.interior_faces().next().unwrap();
        let mut flux = FaceField::zeros(&m);
        flux[fi] = 2.0;
        let opts = TransportOptions {
            flux: &flux,
            diffusivity: 0.0,
            blend: 0.0,
            nonortho_grad: None,
            quad_wall: None,
            transpose: false,
        };
        let (a, _) = assemble_convection_diffusion(&m, &opts, |_| ScalBc::ZeroGradient);
        let dense = a.to_dense();
        assert!((dense[0][0] - 2.0).abs() < 1e-14);
        assert!((dense[1][0] + 2.0).abs() < 1e-14);
        assert!(dense[0][1].abs() < 1e-14);
    }

    #[test]
    fn transpose_mode_is_the_entrywise_transpose() {
        let m = build_structured_mesh(5, 4, [0.0, 2.0, 0.0, 1.0], (1.2, 1.1), 0.15).unwrap();
        let mut flux = FaceField::zeros(&m);
        for (fi, _) in m.faces.iter().enumerate() {
            // deterministic sign-varying flux
            flux[fi] = ((fi * 2654435761) % 97) as f64 / 48.0 - 1.0;
        }
        let stencils = wall_stencils(&m);
        for blend in [0.0, 0.37, 1.0] {
            let fwd = TransportOptions {
                flux: &flux,
                diffusivity: 0.3,
                blend,
                nonortho_grad: None,
                quad_wall: Some(&stencils),
                transpose: false,
            };
            let (a, _) = assemble_convection_diffusion(&m, &fwd, |_| ScalBc::Fixed(0.0));
            let adj = TransportOptions { transpose: true, ..fwd };
            let (b, _) = assemble_convection_diffusion(&m, &adj, |_| ScalBc::Fixed(0.0));
            let (da, db) = (a.to_dense(), b.to_dense());
            for i in 0..a.n {
                for j in 0..a.n {
                    assert_eq!(da[i][j], db[j][i], "blend {blend}, entry ({i},{j})");
                }
            }
        }
    }

    #[test]
    fn quadratic_wall_flux_exact_for_parabola() {
        // u(y) = y (1 - y), walls at y = 0 and 1: the deferred-corrected wall
        // flux reproduces the exact wall gradient.
        let m = build_structured_mesh(1, 8, [0.0, 1.0, 0.0, 1.0], (1.0, 1.0), 0.0).unwrap();
        let stencils = wall_stencils(&m);
        let u = CellField(m.cells.iter().map(|c| c.centroid.y * (1.0 - c.centroid.y)).collect());
        let flux = FaceField::zeros(&m);
        let opts = TransportOptions {
            flux: &flux,
            diffusivity: 1.0,
            blend: 0.0,
            nonortho_grad: None,
            quad_wall: Some(&stencils),
            transpose: false,
        };
        let (a, rhs) = assemble_convection_diffusion(&m, &opts, |fi| {
            let c = m.faces[fi].centroid;
            if c.y < 1e-12 || c.y > 1.0 - 1e-12 {
                ScalBc::Fixed(0.0)
            } else {
                ScalBc::ZeroGradient
            }
        });
        // A u - rhs must equal the volumetric source of -u'' = 2 per cell.
        let r = a.residual(&u.0, &rhs);
        for (ci, cell) in m.cells.iter().enumerate() {
            let source = 2.0 * cell.volume;
            assert!((r[ci] - source).abs() < 1e-11, "cell {ci}: r = {}, expected {}", r[ci], source);
        }
    }
}
