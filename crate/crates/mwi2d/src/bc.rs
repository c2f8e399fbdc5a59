//! Boundary conditions resolved to per-face closures.
//!
//! Patch-level choices are expanded once into per-boundary-face data so the
//! assembly loops never branch on patch names.

use crate::fields::FaceField;
use crate::geom::Vec2;
use crate::mesh::Mesh;

/// Velocity condition on one boundary face.
#[derive(Debug, Clone, Copy)]
pub enum VelBc {
    /// Prescribed velocity (walls, inlets, prescribed-slip lids).
    Fixed(Vec2),
    /// Zero normal gradient (outlets).
    ZeroGradient,
    /// Impermeable, shear-free. Only supported on axis-aligned faces; the
    /// stored axis is the wall-normal direction.
    Slip { normal_axis: usize },
}

/// Scalar condition on one boundary face (pressure or transported scalar).
#[derive(Debug, Clone, Copy)]
pub enum ScalBc {
    Fixed(f64),
    ZeroGradient,
}

/// Per-face boundary table; `None` on interior faces.
#[derive(Debug, Clone)]
pub struct Boundary {
    pub vel: Vec<Option<VelBc>>,
    pub p: Vec<Option<ScalBc>>,
    pub phi: Vec<Option<ScalBc>>,
}

impl Boundary {
    pub fn new(mesh: &Mesh) -> Self {
        let n = mesh.n_faces();
        Boundary {
            vel: vec![None; n],
            p: vec![None; n],
            phi: vec![None; n],
        }
    }

    /// Apply one patch's conditions. Velocity may vary along the patch via
    /// the profile closure.
    pub fn set_patch(
        &mut self,
        mesh: &Mesh,
        patch_name: &str,
        vel: impl Fn(Vec2) -> VelBc,
        p: ScalBc,
        phi: impl Fn(Vec2) -> ScalBc,
    ) -> Result<(), crate::mesh::MeshError> {
        let patch = mesh.patch(patch_name)?;
        for &fi in &patch.faces {
            let x = mesh.faces[fi].centroid;
            self.vel[fi] = Some(vel(x));
            self.p[fi] = Some(p);
            self.phi[fi] = Some(phi(x));
        }
        Ok(())
    }

    /// Every boundary face must be covered.
    pub fn assert_complete(&self, mesh: &Mesh) {
        for (fi, f) in mesh.faces.iter().enumerate() {
            if !f.is_interior() {
                assert!(
                    self.vel[fi].is_some() && self.p[fi].is_some() && self.phi[fi].is_some(),
                    "face {fi} has no boundary condition"
                );
            }
        }
    }

    pub fn has_pressure_dirichlet(&self) -> bool {
        self.p.iter().any(|b| matches!(b, Some(ScalBc::Fixed(_))))
    }

    /// Velocity condition reduced to a scalar closure for one Cartesian
    /// component.
    pub fn vel_component(&self, fi: usize, axis: usize) -> Option<ScalBc> {
        self.vel[fi].map(|bc| match bc {
            VelBc::Fixed(v) => ScalBc::Fixed(v.comp(axis)),
            VelBc::ZeroGradient => ScalBc::ZeroGradient,
            VelBc::Slip { normal_axis } => {
                if normal_axis == axis {
                    ScalBc::Fixed(0.0)
                } else {
                    ScalBc::ZeroGradient
                }
            }
        })
    }

    /// Boundary mass fluxes (rho v_b . dGamma) for prescribed faces; zero for
    /// slip, and rho v_P . dGamma for zero-gradient faces.
    pub fn boundary_mass_flux(
        &self,
        mesh: &Mesh,
        rho: f64,
        v_cells: &crate::fields::CellField<Vec2>,
        flux: &mut FaceField<f64>,
    ) {
        for (fi, f) in mesh.faces.iter().enumerate() {
            if f.is_interior() {
                continue;
            }
            flux[fi] = match self.vel[fi].expect("boundary face without velocity BC") {
                VelBc::Fixed(vb) => rho * vb.dot(f.area),
                VelBc::ZeroGradient => rho * v_cells[f.owner].dot(f.area),
                VelBc::Slip { .. } => 0.0,
            };
        }
    }

    /// The adjoint companion table: prescribed primal values become
    /// homogeneous Dirichlet conditions, gradient conditions stay.
    pub fn adjoint(&self) -> Boundary {
        Boundary {
            vel: self
                .vel
                .iter()
                .map(|b| {
                    b.map(|bc| match bc {
                        VelBc::Fixed(_) => VelBc::Fixed(Vec2::ZERO),
                        other => other,
                    })
                })
                .collect(),
            p: self
                .p
                .iter()
                .map(|b| {
                    b.map(|bc| match bc {
                        ScalBc::Fixed(_) => ScalBc::Fixed(0.0),
                        other => other,
                    })
                })
                .collect(),
            phi: self
                .phi
                .iter()
                .map(|b| {
                    b.map(|bc| match bc {
                        ScalBc::Fixed(_) => ScalBc::Fixed(0.0),
                        other => other,
                    })
                })
                .collect(),
        }
    }
}

/// Slip helper: pick the dominant axis of the face normal.
pub fn slip_for_face(area: Vec2) -> VelBc {
    let normal_axis = if area.x.abs() >= area.y.abs() { 0 } else { 1 };
    VelBc::Slip { normal_axis }
}
