//! Canned verification cases: hydrostatic two-layer tank, Poiseuille
//! channel, checkerboard Stokes box, manufactured vortex solution, and the
//! scalar-front box driving the adjoint/FD comparison.

use crate::bc::{Boundary, ScalBc, VelBc};
use crate::fields::CellField;
use crate::geom::Vec2;
use crate::mesh::{build_structured_mesh, Mesh};
use crate::primal::{BodyForceModel, MwiVariant, SolverConfig, SourceConcept};

/// A fully specified primal setup.
pub struct Case {
    pub mesh: Mesh,
    pub cfg: SolverConfig,
    pub bodyforce: BodyForceModel,
    pub scalar_source: CellField<f64>,
    pub boundary: Boundary,
}

fn closed_box_boundary(mesh: &Mesh) -> Boundary {
    let mut boundary = Boundary::new(mesh);
    for name in ["south", "north", "west", "east"] {
        boundary
            .set_patch(mesh, name, |_| VelBc::Fixed(Vec2::ZERO), ScalBc::ZeroGradient, |_| {
                ScalBc::Fixed(0.0)
            })
            .expect("structured patches exist");
    }
    boundary
}

/// Closed tank with a sharp two-layer density jump, modeled as a
/// piecewise-constant downward body force with its discontinuity aligned to
/// a face row. Returns the case and the velocity scale sqrt(g H).
pub fn hydrostatic_tank(concept: SourceConcept) -> (Case, f64) {
    let (nx, ny) = (32, 64);
    let height = 2.0;
    let g = 9.81;
    let mesh = build_structured_mesh(nx, ny, [0.0, 1.0, 0.0, height], (1.0, 1.0), 0.0).unwrap();
    let boundary = closed_box_boundary(&mesh);
    // Heavy fluid below y = 1, light above; the jump sits exactly on a face.
    let q = CellField(
        mesh.cells
            .iter()
            .map(|c| {
                let rho_local = if c.centroid.y < 1.0 { 2.0 } else { 1.0 };
                Vec2::new(0.0, -g * rho_local)
            })
            .collect(),
    );
    let cfg = SolverConfig {
        concept,
        mwi: MwiVariant::Classical,
        // Stokes-like problem: aggressive relaxation is stable and lets the
        // startup transient decay within the fixed 200-sweep budget.
        omega_v: 0.9,
        omega_p: 0.2,
        tol_v: 0.0,
        tol_p: 0.0,
        max_outer: 200,
        lin_tol: 1e-12,
        lin_max_iter: 4000,
        ..SolverConfig::default()
    };
    let bodyforce = BodyForceModel { q, concept, dq_dphi: None };
    let case = Case {
        scalar_source: CellField::zeros(&mesh),
        boundary,
        mesh,
        cfg,
        bodyforce,
    };
    (case, (g * height).sqrt())
}

/// Channel flow between no-slip walls driven by a constant axial force, with
/// zero-gradient in/outflow. The discrete solution is the exact parabola
/// when the quadratic wall-flux correction is on.
pub fn poiseuille(nx: usize, ny: usize, omega_v: f64, dt: f64, mwi: MwiVariant) -> Case {
    let mesh = build_structured_mesh(nx, ny, [0.0, 2.0, 0.0, 1.0], (1.0, 1.0), 0.0).unwrap();
    let mut boundary = Boundary::new(&mesh);
    for name in ["south", "north"] {
        boundary
            .set_patch(&mesh, name, |_| VelBc::Fixed(Vec2::ZERO), ScalBc::ZeroGradient, |_| {
                ScalBc::ZeroGradient
            })
            .unwrap();
    }
    for name in ["west", "east"] {
        boundary
            .set_patch(&mesh, name, |_| VelBc::ZeroGradient, ScalBc::Fixed(0.0), |_| {
                ScalBc::ZeroGradient
            })
            .unwrap();
    }
    let cfg = SolverConfig {
        mu: 0.1,
        omega_v,
        dt,
        mwi,
        quad_wall_correction: true,
        tol_v: 1e-12,
        tol_p: 1e-12,
        lin_tol: 1e-12,
        max_outer: 20000,
        ..SolverConfig::default()
    };
    let bodyforce = BodyForceModel {
        q: CellField::constant(&mesh, Vec2::new(1.0, 0.0)),
        concept: SourceConcept::C1,
        dq_dphi: None,
    };
    Case {
        scalar_source: CellField::zeros(&mesh),
        boundary,
        mesh,
        cfg,
        bodyforce,
    }
}

/// Exact Poiseuille profile for the case above (unit force, walls at
/// y = 0 and 1).
pub fn poiseuille_exact(mesh: &Mesh, mu: f64) -> CellField<Vec2> {
    CellField(
        mesh.cells
            .iter()
            .map(|c| Vec2::new(1.0 / (2.0 * mu) * c.centroid.y * (1.0 - c.centroid.y), 0.0))
            .collect(),
    )
}

/// Zero-source Stokes box used to expose checkerboard modes: everything is
/// at rest except the initial pressure, which carries an odd-even pattern.
pub fn checkerboard_stokes(mwi: MwiVariant) -> Case {
    let mesh = build_structured_mesh(32, 32, [0.0, 1.0, 0.0, 1.0], (1.0, 1.0), 0.0).unwrap();
    let boundary = closed_box_boundary(&mesh);
    let cfg = SolverConfig {
        mwi,
        convection_blend: 0.0,
        tol_v: 0.0,
        tol_p: 0.0,
        max_outer: 200,
        lin_tol: 1e-12,
        lin_max_iter: 4000,
        ..SolverConfig::default()
    };
    let bodyforce = BodyForceModel::none(&mesh);
    Case {
        scalar_source: CellField::zeros(&mesh),
        boundary,
        mesh,
        cfg,
        bodyforce,
    }
}

/// Signed odd-even amplitude of a cell scalar on a structured mesh: the mean
/// of (-1)^(i+j) (p - mean p).
pub fn odd_even_amplitude(p: &CellField<f64>, mesh: &Mesh) -> f64 {
    let (nx, _) = mesh.structured_dims.expect("structured mesh");
    let mean = p.iter().sum::<f64>() / p.0.len() as f64;
    let mut amp = 0.0;
    for ci in 0..mesh.n_cells() {
        let (i, j) = (ci % nx, ci / nx);
        let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
        amp += sign * (p[ci] - mean);
    }
    (amp / mesh.n_cells() as f64).abs()
}

/// Steady vortex array with a known closed form on [0, pi]^2:
/// v = (sin x cos y, -cos x sin y), p = rho/4 (cos 2x + cos 2y). Convection
/// balances the pressure gradient exactly, so the required body force is
/// just 2 mu v.
pub fn manufactured_vortex(n: usize) -> Case {
    let l = std::f64::consts::PI;
    let mesh = build_structured_mesh(n, n, [0.0, l, 0.0, l], (1.0, 1.0), 0.0).unwrap();
    let mu = 0.1;
    let mut boundary = Boundary::new(&mesh);
    for name in ["south", "north", "west", "east"] {
        boundary
            .set_patch(
                &mesh,
                name,
                |x| VelBc::Fixed(manufactured_velocity(x)),
                ScalBc::ZeroGradient,
                |_| ScalBc::ZeroGradient,
            )
            .unwrap();
    }
    let q = CellField(
        mesh.cells
            .iter()
            .map(|c| manufactured_velocity(c.centroid) * (2.0 * mu))
            .collect(),
    );
    let cfg = SolverConfig {
        mu,
        convection_blend: 1.0,
        mwi: MwiVariant::Classical,
        tol_v: 1e-11,
        tol_p: 1e-11,
        lin_tol: 1e-12,
        max_outer: 20000,
        ..SolverConfig::default()
    };
    let bodyforce = BodyForceModel { q, concept: SourceConcept::C1, dq_dphi: None };
    Case {
        scalar_source: CellField::zeros(&mesh),
        boundary,
        mesh,
        cfg,
        bodyforce,
    }
}

pub fn manufactured_velocity(x: Vec2) -> Vec2 {
    Vec2::new(x.x.sin() * x.y.cos(), -(x.x.cos()) * x.y.sin())
}

/// The adjoint/FD comparison case: a closed, mildly stretched 48x24 box with
/// a recirculating body force, a steep scalar front fed by a source blob,
/// and a scalar-mismatch objective downstream. The scalar gradient couples
/// into the adjoint momentum source, which is what distinguishes the
/// interpolation modes.
pub struct ChannelCase {
    pub case: Case,
    pub objective: crate::adjoint::Objective,
    /// Linearized primal-source couplings carried into the adjoint equations.
    pub sources: crate::adjoint::AdjointSourceModel,
    /// Control cells paired with unit perturbation directions.
    pub controls: Vec<(usize, Vec2)>,
    /// Perturbation magnitudes for the FD sweep.
    pub epsilons: Vec<f64>,
}

pub fn channel_case() -> ChannelCase {
    let mesh = build_structured_mesh(48, 24, [0.0, 3.0, 0.0, 1.0], (1.04, 1.03), 0.0).unwrap();
    let boundary = closed_box_boundary(&mesh);
    let q = CellField(
        mesh.cells
            .iter()
            .map(|c| {
                let (x, y) = (c.centroid.x / 3.0, c.centroid.y);
                Vec2::new(
                    (std::f64::consts::PI * x).sin() * (2.0 * std::f64::consts::PI * y).cos(),
                    -(std::f64::consts::PI * y).sin() * (2.0 * std::f64::consts::PI * x).cos(),
                )
            })
            .collect(),
    );
    let scalar_source = CellField(
        mesh.cells
            .iter()
            .map(|c| {
                let r2 = (c.centroid - Vec2::new(0.8, 0.5)).norm_sq();
                2.0 * (-r2 / 0.01).exp()
            })
            .collect(),
    );
    let cfg = SolverConfig {
        mu: 0.05,
        mu_phi: 0.01,
        convection_blend: 1.0,
        solve_scalar: true,
        // FD probes difference the objective at perturbations far above the
        // iteration noise floor, so both tolerances sit near round-off.
        tol_v: 1e-12,
        tol_p: 1e-12,
        tol_phi: 1e-12,
        lin_tol: 1e-13,
        max_outer: 12000,
        ..SolverConfig::default()
    };
    let bodyforce = BodyForceModel { q, concept: SourceConcept::C1, dq_dphi: None };
    let mut weight = CellField::zeros(&mesh);
    for ci in 0..mesh.n_cells() {
        if mesh.cells[ci].centroid.x > 2.2 {
            weight[ci] = 1.0;
        }
    }
    let objective = crate::adjoint::Objective::volume_only(
        crate::adjoint::ObjectiveKind::ScalarMismatch { target: 0.0 },
        weight,
    );
    // A spread of mid-domain probe positions with alternating directions.
    let positions = [
        (0.6, 0.3),
        (0.6, 0.7),
        (1.0, 0.5),
        (1.2, 0.25),
        (1.2, 0.75),
        (1.5, 0.5),
        (1.8, 0.35),
        (1.8, 0.65),
        (2.1, 0.5),
        (0.9, 0.5),
        (1.5, 0.2),
        (1.5, 0.8),
    ];
    let controls = positions
        .iter()
        .enumerate()
        .map(|(k, &(x, y))| {
            let target = Vec2::new(x, y);
            let ci = mesh
                .cells
                .iter()
                .enumerate()
                .min_by(|a, b| {
                    (a.1.centroid - target)
                        .norm()
                        .total_cmp(&(b.1.centroid - target).norm())
                })
                .unwrap()
                .0;
            let dir = if k % 2 == 0 { Vec2::new(1.0, 0.0) } else { Vec2::new(0.0, 1.0) };
            (ci, dir)
        })
        .collect();
    ChannelCase {
        case: Case {
            scalar_source,
            boundary,
            mesh,
            cfg,
            bodyforce,
        },
        objective,
        sources: crate::adjoint::AdjointSourceModel::default(),
        controls,
        epsilons: vec![1e-1, 3e-2, 1e-2],
    }
}
