//! Sensitivity evaluation and its finite-difference oracle.
//!
//! Volumetric sensitivities contract the adjoint velocity with a body-force
//! perturbation direction; the oracle re-solves the primal at plus and minus
//! epsilon and central-differences the objective. Residual histories feed
//! the convergence comparison between the adjoint interpolation modes.

use crate::adjoint::{AdjointState, Objective};
use crate::bc::Boundary;
use crate::fields::CellField;
use crate::geom::Vec2;
use crate::mesh::Mesh;
use crate::primal::{
    BodyForceModel, PrimalProblem, PrimalState, Residuals, SolverConfig, SolverError,
};

/// L1 mean of local residuals. The magnitudes are summed in sorted order, so
/// the result is exactly invariant under any permutation of the input.
pub fn residual_norm(r: &[f64]) -> f64 {
    assert!(!r.is_empty(), "residual vector must not be empty");
    let mut mags: Vec<f64> = r.iter().map(|v| v.abs()).collect();
    mags.sort_by(f64::total_cmp);
    mags.iter().sum::<f64>() / r.len() as f64
}

/// dJ/d(theta) for the body-force perturbation q -> q + theta e:
/// the negative adjoint-velocity contraction over the support of e.
pub fn volumetric_sensitivity(
    adjoint: &AdjointState,
    direction: &CellField<Vec2>,
    mesh: &Mesh,
) -> Result<f64, SolverError> {
    if direction.iter().all(|e| e.norm() == 0.0) {
        return Err(SolverError::BadConfig(
            "control region is empty (direction vanishes everywhere)".to_string(),
        ));
    }
    let mut s = 0.0;
    for (ci, cell) in mesh.cells.iter().enumerate() {
        s -= adjoint.v[ci].dot(direction[ci]) * cell.volume;
    }
    Ok(s)
}

/// Wall sensitivity over one design patch.
#[derive(Debug, Clone)]
pub struct BoundarySensitivity {
    /// (face index, density) along the patch, in patch face order.
    pub face_density: Vec<(usize, f64)>,
    /// Patch integral of the density.
    pub integral: f64,
}

/// Per-face wall sensitivity density s = -mu (dv/dn) . (dv_hat/dn) with
/// one-sided first-cell normal derivatives, and its integral over the patch.
/// Every face of the patch must carry a prescribed-velocity (wall) condition.
pub fn boundary_sensitivity(
    primal: &PrimalState,
    adjoint: &AdjointState,
    mesh: &Mesh,
    boundary: &Boundary,
    patch_name: &str,
    mu: f64,
) -> Result<BoundarySensitivity, SolverError> {
    let patch = mesh
        .patch(patch_name)
        .map_err(|e| SolverError::BadConfig(e.to_string()))?;
    let mut face_density = Vec::with_capacity(patch.faces.len());
    let mut integral = 0.0;
    for &fi in &patch.faces {
        let face = &mesh.faces[fi];
        let vb = match boundary.vel[fi] {
            Some(crate::bc::VelBc::Fixed(vb)) => vb,
            _ => {
                return Err(SolverError::BadConfig(format!(
                    "design patch '{patch_name}' face {fi} is not a wall (prescribed velocity)"
                )))
            }
        };
        let owner = face.owner;
        let delta = face.centroid - mesh.cells[owner].centroid;
        let depth = delta.dot(face.area) / face.area.norm();
        // One-sided normal derivatives toward the wall; the adjoint wall
        // value is homogeneous.
        let dv = (vb - primal.v[owner]) / depth;
        let dv_hat = (Vec2::ZERO - adjoint.v[owner]) / depth;
        let s = -mu * dv.dot(dv_hat);
        face_density.push((fi, s));
        integral += s * face.area.norm();
    }
    Ok(BoundarySensitivity { face_density, integral })
}

/// Outcome of one central-difference probe.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct FdProbe {
    pub epsilon: f64,
    pub j_plus: f64,
    pub j_minus: f64,
    pub derivative: f64,
}

/// Central difference (J(+eps) - J(-eps)) / (2 eps) of an arbitrary
/// objective evaluator.
pub fn fd_central<E>(
    mut objective: impl FnMut(f64) -> Result<f64, E>,
    epsilon: f64,
) -> Result<FdProbe, E> {
    let j_plus = objective(epsilon)?;
    let j_minus = objective(-epsilon)?;
    Ok(FdProbe {
        epsilon,
        j_plus,
        j_minus,
        derivative: (j_plus - j_minus) / (2.0 * epsilon),
    })
}

/// Central finite-difference derivative of the objective under the
/// body-force perturbation q -> q + theta e, re-solving the primal from the
/// supplied initial state at +/- epsilon. Non-converged perturbed solves
/// invalidate the probe.
#[allow(clippy::too_many_arguments)]
pub fn fd_oracle(
    mesh: &Mesh,
    cfg: &SolverConfig,
    bodyforce: &BodyForceModel,
    scalar_source: &CellField<f64>,
    boundary: &Boundary,
    objective: &Objective,
    direction: &CellField<Vec2>,
    initial: &PrimalState,
    epsilon: f64,
) -> Result<FdProbe, SolverError> {
    fd_central(
        |theta| -> Result<f64, SolverError> {
            let mut q = bodyforce.q.clone();
            for ci in 0..mesh.n_cells() {
                q[ci] += direction[ci] * theta;
            }
            let bf = BodyForceModel { q, concept: bodyforce.concept, dq_dphi: bodyforce.dq_dphi };
            let problem = PrimalProblem::new(
                mesh,
                cfg.clone(),
                bf,
                scalar_source.clone(),
                boundary.clone(),
            )?;
            let mut state = initial.clone();
            let (iters, residuals, converged) = problem.run(&mut state, |_, _| {})?;
            if !converged {
                return Err(SolverError::BadConfig(format!(
                    "perturbed solve (theta = {theta:e}) did not converge in {iters} iterations \
                     (residual {:e}); the probe is invalid",
                    residuals.max()
                )));
            }
            Ok(objective.value(&state, mesh, cfg.rho))
        },
        epsilon,
    )
}

/// One probe per epsilon.
#[allow(clippy::too_many_arguments)]
pub fn fd_sweep(
    mesh: &Mesh,
    cfg: &SolverConfig,
    bodyforce: &BodyForceModel,
    scalar_source: &CellField<f64>,
    boundary: &Boundary,
    objective: &Objective,
    direction: &CellField<Vec2>,
    initial: &PrimalState,
    epsilons: &[f64],
) -> Result<Vec<FdProbe>, SolverError> {
    epsilons
        .iter()
        .map(|&eps| {
            fd_oracle(mesh, cfg, bodyforce, scalar_source, boundary, objective, direction, initial, eps)
        })
        .collect()
}

/// Maximum pairwise relative spread of the FD derivatives across the sweep;
/// small spread certifies that the perturbation sits in the linear regime.
pub fn linearity_spread(probes: &[FdProbe]) -> f64 {
    let scale = probes
        .iter()
        .map(|p| p.derivative.abs())
        .fold(0.0, f64::max)
        .max(1e-300);
    let mut spread: f64 = 0.0;
    for a in probes {
        for b in probes {
            spread = spread.max((a.derivative - b.derivative).abs() / scale);
        }
    }
    spread
}

/// Equation tag of a residual history entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Equation {
    MomentumX,
    MomentumY,
    Continuity,
    Scalar,
}

/// One residual-history record: equation, outer iteration, L1-mean value.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct ResidualRecord {
    pub equation: Equation,
    pub iteration: usize,
    pub value: f64,
}

/// Expand one outer iteration's residuals into tagged records.
pub fn residual_records(iteration: usize, r: &Residuals) -> Vec<ResidualRecord> {
    vec![
        ResidualRecord { equation: Equation::MomentumX, iteration, value: r.v[0] },
        ResidualRecord { equation: Equation::MomentumY, iteration, value: r.v[1] },
        ResidualRecord { equation: Equation::Continuity, iteration, value: r.p },
        ResidualRecord { equation: Equation::Scalar, iteration, value: r.phi },
    ]
}

/// First outer iteration (1-based) whose history value drops to or below the
/// threshold; `None` for runs that never reach it (censored, not
/// extrapolated).
pub fn first_crossing(history: &[f64], threshold: f64) -> Option<usize> {
    history.iter().position(|&r| r <= threshold).map(|i| i + 1)
}

/// First iteration (1-based) from which the history stays at or below the
/// threshold for good. Robust against residuals that start at zero and grow
/// before the decay sets in.
pub fn sustained_crossing(history: &[f64], threshold: f64) -> Option<usize> {
    let last_above = history.iter().rposition(|&r| r > threshold);
    match last_above {
        None => {
            if history.is_empty() {
                None
            } else {
                Some(1)
            }
        }
        Some(i) if i + 1 < history.len() => Some(i + 2),
        Some(_) => None,
    }
}

/// Iteration counts of two runs and their relative change in percent,
/// (candidate - reference) / reference * 100.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceCompare {
    pub reference_iters: usize,
    pub candidate_iters: usize,
    pub percent_change: f64,
}

pub fn convergence_compare(reference_iters: usize, candidate_iters: usize) -> ConvergenceCompare {
    let percent_change =
        (candidate_iters as f64 - reference_iters as f64) / reference_iters as f64 * 100.0;
    ConvergenceCompare {
        reference_iters,
        candidate_iters,
        percent_change,
    }
}

/// Adjoint sensitivity against the FD sweep: per-probe relative deviations
/// and the sweep's linearity spread.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SensitivityReport {
    pub control: String,
    pub adjoint_value: f64,
    pub probes: Vec<FdProbe>,
    /// |adjoint - FD| / |FD| per probe.
    pub deviations: Vec<f64>,
    pub max_deviation: f64,
    pub linearity_spread: f64,
}

impl SensitivityReport {
    pub fn new(control: impl Into<String>, adjoint_value: f64, probes: Vec<FdProbe>) -> Self {
        let deviations: Vec<f64> = probes
            .iter()
            .map(|p| (adjoint_value - p.derivative).abs() / p.derivative.abs().max(1e-300))
            .collect();
        let max_deviation = deviations.iter().copied().fold(0.0, f64::max);
        let linearity_spread = linearity_spread(&probes);
        SensitivityReport {
            control: control.into(),
            adjoint_value,
            probes,
            deviations,
            max_deviation,
            linearity_spread,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_structured_mesh;
    use proptest::prelude::*;

    #[test]
    fn residual_norm_examples() {
        assert_eq!(residual_norm(&[0.0, 0.0, 0.0]), 0.0);
        assert_eq!(residual_norm(&[-2.0]), 2.0);
        assert!((residual_norm(&[1.0, -3.0, 2.0]) - 2.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn residual_norm_is_exactly_permutation_invariant(
            r in proptest::collection::vec(-1e6f64..1e6, 1..40),
            seed in 0u64..1000,
        ) {
            let mut shuffled = r.clone();
            // Deterministic Fisher-Yates from the seed.
            let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
            for i in (1..shuffled.len()).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let j = (s >> 33) as usize % (i + 1);
                shuffled.swap(i, j);
            }
            prop_assert_eq!(residual_norm(&r).to_bits(), residual_norm(&shuffled).to_bits());
        }

        #[test]
        fn residual_norm_is_absolutely_homogeneous(
            r in proptest::collection::vec(-1e3f64..1e3, 1..40),
            exp in -20i32..20,
            sign in proptest::bool::ANY,
        ) {
            // Power-of-2 factors scale without rounding, so the identity is
            // exact.
            let c = if sign { -(2f64.powi(exp)) } else { 2f64.powi(exp) };
            let scaled: Vec<f64> = r.iter().map(|v| c * v).collect();
            prop_assert_eq!(
                residual_norm(&scaled).to_bits(),
                (c.abs() * residual_norm(&r)).to_bits()
            );
        }
    }

    #[test]
    fn volumetric_contraction_arithmetic() {
        let mesh = build_structured_mesh(2, 2, [0.0, 1.0, 0.0, 1.0], (1.0, 1.0), 0.0).unwrap();
        let mut adj = AdjointState::new(&mesh);
        let mut e = CellField::zeros(&mesh);
        adj.v[1] = Vec2::new(2.0, -1.0);
        e[1] = Vec2::new(3.0, 4.0);
        // - (2*3 + (-1)*4) * 0.25 = -0.5
        let s = volumetric_sensitivity(&adj, &e, &mesh).unwrap();
        assert!((s + 0.5).abs() < 1e-14);

        assert!(volumetric_sensitivity(&adj, &CellField::zeros(&mesh), &mesh).is_err());
    }

    #[test]
    fn volumetric_sensitivity_is_linear_in_direction() {
        let mesh = build_structured_mesh(4, 3, [0.0, 2.0, 0.0, 1.0], (1.2, 1.0), 0.0).unwrap();
        let mut adj = AdjointState::new(&mesh);
        let mut e1 = CellField::zeros(&mesh);
        let mut e2 = CellField::zeros(&mesh);
        for ci in 0..mesh.n_cells() {
            let c = mesh.cells[ci].centroid;
            adj.v[ci] = Vec2::new(c.x, -c.y);
            e1[ci] = Vec2::new(c.y, 1.0);
            e2[ci] = Vec2::new(-1.0, c.x * c.y);
        }
        let combined = CellField(
            (0..mesh.n_cells())
                .map(|ci| e1[ci] * 2.0 + e2[ci] * -3.5)
                .collect(),
        );
        let lhs = volumetric_sensitivity(&adj, &combined, &mesh).unwrap();
        let rhs = 2.0 * volumetric_sensitivity(&adj, &e1, &mesh).unwrap()
            - 3.5 * volumetric_sensitivity(&adj, &e2, &mesh).unwrap();
        assert!((lhs - rhs).abs() < 1e-12 * rhs.abs().max(1.0));
    }

    #[test]
    fn wall_sensitivity_arithmetic_and_patch_guard() {
        use crate::bc::{ScalBc, VelBc};
        let mesh = build_structured_mesh(1, 1, [0.0, 1.0, 0.0, 1.0], (1.0, 1.0), 0.0).unwrap();
        let mut boundary = Boundary::new(&mesh);
        for name in ["south", "north", "west"] {
            boundary
                .set_patch(&mesh, name, |_| VelBc::Fixed(Vec2::ZERO), ScalBc::ZeroGradient, |_| {
                    ScalBc::ZeroGradient
                })
                .unwrap();
        }
        boundary
            .set_patch(&mesh, "east", |_| VelBc::ZeroGradient, ScalBc::Fixed(0.0), |_| {
                ScalBc::ZeroGradient
            })
            .unwrap();
        // Wall depth 0.5: dv/dn = (0 - v_P)/0.5.
        let mut primal = PrimalState::new(&mesh);
        primal.v[0] = Vec2::new(-1.0, 0.0); // dv/dn = (2, 0)
        let mut adj = AdjointState::new(&mesh);
        adj.v[0] = Vec2::new(-1.5, 0.0); // dv_hat/dn = (3, 0)
        let s = boundary_sensitivity(&primal, &adj, &mesh, &boundary, "south", 1.0).unwrap();
        assert_eq!(s.face_density.len(), 1);
        assert!((s.face_density[0].1 + 6.0).abs() < 1e-13);
        assert!((s.integral + 6.0).abs() < 1e-13);

        // dv_hat/dn = 0 on a face -> zero density.
        let s = boundary_sensitivity(&primal, &AdjointState::new(&mesh), &mesh, &boundary, "south", 1.0)
            .unwrap();
        assert_eq!(s.face_density[0].1, 0.0);

        assert!(boundary_sensitivity(&primal, &adj, &mesh, &boundary, "east", 1.0).is_err());
        assert!(boundary_sensitivity(&primal, &adj, &mesh, &boundary, "nowhere", 1.0).is_err());
    }

    #[test]
    fn central_difference_is_exact_for_linear_and_quadratic_objectives() {
        for eps in [1e-4, 1e-5, 1e-6] {
            let p = fd_central(|t| Ok::<_, ()>(3.25 * t), eps).unwrap();
            assert!((p.derivative - 3.25).abs() < 1e-9 * 3.25);
            // J = (1 + t)^2: odd-error cancellation leaves dJ/dt = 2 exactly
            // up to round-off.
            let p = fd_central(|t| Ok::<_, ()>((1.0 + t) * (1.0 + t)), eps).unwrap();
            assert!((p.derivative - 2.0).abs() < 1e-8, "eps {eps:e}: {:e}", p.derivative);
        }
    }

    #[test]
    fn linearity_spread_arithmetic() {
        let mk = |d| FdProbe { epsilon: 1e-5, j_plus: 0.0, j_minus: 0.0, derivative: d };
        assert_eq!(linearity_spread(&[mk(2.0), mk(2.0), mk(2.0)]), 0.0);
        let s = linearity_spread(&[mk(2.0), mk(1.9), mk(2.1)]);
        assert!((s - 0.2 / 2.1).abs() < 1e-14);
    }

    #[test]
    fn first_crossing_and_censoring() {
        let h = [1.0, 0.5, 1e-9, 1e-10];
        assert_eq!(first_crossing(&h, 1e-8), Some(3));
        assert_eq!(first_crossing(&h, 1e-12), None);
        assert_eq!(first_crossing(&h, 2.0), Some(1));

        // A residual that starts at zero and grows crosses only once it
        // stays below for good.
        let h = [0.0, 3.0, 1.0, 1e-9, 1e-10];
        assert_eq!(first_crossing(&h, 1e-8), Some(1));
        assert_eq!(sustained_crossing(&h, 1e-8), Some(4));
        assert_eq!(sustained_crossing(&h, 1e-12), None);
        assert_eq!(sustained_crossing(&h, 5.0), Some(1));
        assert_eq!(sustained_crossing(&[1.0, 0.5], 0.6), Some(2));
        // Censored: the history ends above the threshold.
        assert_eq!(sustained_crossing(&[1.0, 0.5, 0.7], 0.6), None);
    }

    #[test]
    fn adjoint_sensitivity_matches_fd_on_small_driven_box() {
        // Closed box driven by a vortex body force, kinetic-energy objective
        // in the right half, control = x-force in a handful of cells. The
        // adjoint contraction must reproduce the central FD derivative.
        use crate::adjoint::{AdjointProblem, AdjointState, MwiMode, Objective, ObjectiveKind};
        use crate::bc::{Boundary, VelBc};
        use crate::primal::{BodyForceModel, PrimalProblem, PrimalState};

        let mesh = build_structured_mesh(24, 16, [0.0, 1.5, 0.0, 1.0], (1.0, 1.0), 0.0).unwrap();
        let mut boundary = Boundary::new(&mesh);
        for name in ["south", "north", "west", "east"] {
            boundary
                .set_patch(
                    &mesh,
                    name,
                    |_| VelBc::Fixed(Vec2::ZERO),
                    crate::bc::ScalBc::ZeroGradient,
                    |_| crate::bc::ScalBc::Fixed(0.0),
                )
                .unwrap();
        }
        let q = CellField(
            mesh.cells
                .iter()
                .map(|c| {
                    let (x, y) = (c.centroid.x / 1.5, c.centroid.y);
                    Vec2::new(
                        (std::f64::consts::PI * x).sin() * (2.0 * std::f64::consts::PI * y).cos(),
                        -(std::f64::consts::PI * y).sin() * (2.0 * std::f64::consts::PI * x).cos(),
                    )
                })
                .collect(),
        );
        let cfg = SolverConfig {
            mu: 0.05,
            convection_blend: 1.0,
            tol_v: 1e-12,
            tol_p: 1e-12,
            lin_tol: 1e-12,
            max_outer: 4000,
            ..SolverConfig::default()
        };
        let bodyforce =
            BodyForceModel { q, concept: crate::primal::SourceConcept::C1, dq_dphi: None };
        let problem = PrimalProblem::new(
            &mesh,
            cfg.clone(),
            bodyforce.clone(),
            CellField::zeros(&mesh),
            boundary.clone(),
        )
        .unwrap();
        let mut state = PrimalState::new(&mesh);
        state.sync_faces(&mesh, cfg.rho, &boundary);
        let (_, _, converged) = problem.run(&mut state, |_, _| {}).unwrap();
        assert!(converged);

        let mut weight = CellField::zeros(&mesh);
        for ci in 0..mesh.n_cells() {
            if mesh.cells[ci].centroid.x > 0.9 {
                weight[ci] = 1.0;
            }
        }
        let objective = Objective::volume_only(ObjectiveKind::KineticEnergy, weight);
        let adj_problem = AdjointProblem::new(
            &mesh,
            cfg.clone(),
            MwiMode::E3,
            objective.clone(),
            &state,
            &boundary,
        )
        .unwrap();
        let mut adj = AdjointState::new(&mesh);
        let (_, _, adj_conv) = adj_problem.run(&mut adj, |_, _| {}).unwrap();
        assert!(adj_conv);

        // Probe a mid-domain cell.
        let control = mesh
            .cells
            .iter()
            .position(|c| (c.centroid - Vec2::new(0.55, 0.45)).norm() < 0.08)
            .unwrap();
        let mut e = CellField::zeros(&mesh);
        e[control] = Vec2::new(1.0, 0.0);
        let adj_val = volumetric_sensitivity(&adj, &e, &mesh).unwrap();
        let probe = fd_oracle(
            &mesh,
            &cfg,
            &bodyforce,
            &CellField::zeros(&mesh),
            &boundary,
            &objective,
            &e,
            &state,
            1e-4,
        )
        .unwrap();
        let rel = (adj_val - probe.derivative).abs() / probe.derivative.abs().max(1e-300);
        assert!(
            rel < 0.05,
            "adjoint {adj_val:e} vs FD {:e} (rel {rel:e})",
            probe.derivative
        );
    }

    #[test]
    fn adjoint_matches_fd_with_scalar_buoyancy_coupling() {
        // The scalar feeds back into the force (q_eff = q + c phi), so the
        // derivative only closes when the adjoint scalar carries the
        // v_hat . dq/dphi source.
        use crate::adjoint::{
            AdjointProblem, AdjointSourceModel, AdjointState, MwiMode, Objective, ObjectiveKind,
        };
        use crate::bc::{Boundary, ScalBc, VelBc};
        use crate::primal::{BodyForceModel, PrimalProblem, PrimalState};

        let mesh = build_structured_mesh(16, 12, [0.0, 1.5, 0.0, 1.0], (1.0, 1.0), 0.0).unwrap();
        let mut boundary = Boundary::new(&mesh);
        for name in ["south", "north", "west", "east"] {
            boundary
                .set_patch(&mesh, name, |_| VelBc::Fixed(Vec2::ZERO), ScalBc::ZeroGradient, |_| {
                    ScalBc::Fixed(0.0)
                })
                .unwrap();
        }
        let q = CellField(
            mesh.cells
                .iter()
                .map(|c| {
                    let (x, y) = (c.centroid.x / 1.5, c.centroid.y);
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
                    let r2 = (c.centroid - Vec2::new(0.4, 0.5)).norm_sq();
                    2.0 * (-r2 / 0.02).exp()
                })
                .collect(),
        );
        let coupling = Vec2::new(0.0, 0.6);
        let cfg = SolverConfig {
            mu: 0.05,
            mu_phi: 0.05,
            convection_blend: 1.0,
            solve_scalar: true,
            tol_v: 1e-12,
            tol_p: 1e-12,
            tol_phi: 1e-12,
            lin_tol: 1e-12,
            max_outer: 6000,
            ..SolverConfig::default()
        };
        let bodyforce = BodyForceModel {
            q,
            concept: crate::primal::SourceConcept::C1,
            dq_dphi: Some(coupling),
        };
        let problem = PrimalProblem::new(
            &mesh,
            cfg.clone(),
            bodyforce.clone(),
            scalar_source.clone(),
            boundary.clone(),
        )
        .unwrap();
        let mut state = PrimalState::new(&mesh);
        state.sync_faces(&mesh, cfg.rho, &boundary);
        let (_, _, converged) = problem.run(&mut state, |_, _| {}).unwrap();
        assert!(converged);

        let mut weight = CellField::zeros(&mesh);
        for ci in 0..mesh.n_cells() {
            if mesh.cells[ci].centroid.x > 0.9 {
                weight[ci] = 1.0;
            }
        }
        let objective = Objective::volume_only(ObjectiveKind::KineticEnergy, weight);
        let sources = AdjointSourceModel { dq_dphi: Some(coupling), ..Default::default() };
        let adj_problem = AdjointProblem::with_sources(
            &mesh,
            cfg.clone(),
            MwiMode::E3,
            objective.clone(),
            sources,
            &state,
            &boundary,
        )
        .unwrap();
        let mut adj = AdjointState::new(&mesh);
        let (_, _, adj_conv) = adj_problem.run(&mut adj, |_, _| {}).unwrap();
        assert!(adj_conv);

        let control = mesh
            .cells
            .iter()
            .position(|c| (c.centroid - Vec2::new(0.55, 0.45)).norm() < 0.1)
            .unwrap();
        let mut e = CellField::zeros(&mesh);
        e[control] = Vec2::new(1.0, 0.0);
        let adj_val = volumetric_sensitivity(&adj, &e, &mesh).unwrap();
        let probe = fd_oracle(
            &mesh, &cfg, &bodyforce, &scalar_source, &boundary, &objective, &e, &state, 1e-4,
        )
        .unwrap();
        let rel = (adj_val - probe.derivative).abs() / probe.derivative.abs().max(1e-300);
        assert!(
            rel < 0.15,
            "adjoint {adj_val:e} vs FD {:e} (rel {rel:e})",
            probe.derivative
        );
    }

    #[test]
    fn percent_change_formula() {
        // 22281 -> 20671 outer iterations is a 7.2 percent reduction.
        let c = convergence_compare(22281, 20671);
        assert!((c.percent_change + 7.2).abs() < 0.05);
    }

    #[test]
    fn report_deviations_are_relative_to_each_probe() {
        let mk = |d| FdProbe { epsilon: 1e-5, j_plus: 0.0, j_minus: 0.0, derivative: d };
        let r = SensitivityReport::new("cell 7, x", 1.02, vec![mk(1.0), mk(1.02)]);
        assert!((r.deviations[0] - 0.02).abs() < 1e-12);
        assert!(r.deviations[1] < 1e-15);
        assert!((r.max_deviation - 0.02).abs() < 1e-12);
        assert!((r.linearity_spread - 0.02 / 1.02).abs() < 1e-12);
    }
}
