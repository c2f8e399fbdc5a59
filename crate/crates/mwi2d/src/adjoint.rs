//! Hand-assembled discrete adjoint of the primal solver.
//!
//! The adjoint momentum equation is convection with the negated primal mass
//! flux plus the unchanged diffusion operator; the advective-transpose
//! coupling, the scalar coupling, and the objective derivative enter as an
//! explicit volumetric source. Adjoint continuity is volumetric and driven
//! by the pressure derivatives of objective and sources. The adjoint face
//! velocities use the same momentum-weighted interpolation machinery as the
//! primal; the treatment of the adjoint source term distinguishes the three
//! modes.

use crate::bc::{Boundary, ScalBc};
use crate::fields::{CellField, FaceField};
use crate::geom::Vec2;
use crate::linalg::{solve_bicgstab, SparseMatrix};
use crate::mesh::Mesh;
use crate::ops::{green_gauss_gradient, green_gauss_gradient_vec, interp_linear, interp_reversed};
use crate::primal::{
    apply_pressure_correction, eq20_residual, mwi_coefficients, pressure_gradient,
    solve_pressure_correction, MwiCoeffs, PrimalState, Residuals, SolverConfig, SolverError,
};
use crate::transport::{assemble_convection_diffusion, TransportOptions};

/// Treatment of the adjoint source inside the face-velocity interpolation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MwiMode {
    /// No source reconstruction: plain pressure-only correction.
    E1,
    /// Source reconstruction with plain linear levers on both terms.
    E2,
    /// Source reconstruction mirroring the primal: reversed levers against
    /// the compact gradient, cell-average interpolation against the
    /// interpolated one.
    E3,
}

/// Volume objective J = sum of w_c j(v, p, phi)_c dOmega_c, optionally plus
/// a constant boundary density over weighted boundary faces.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ObjectiveKind {
    /// j = 1 (region volume).
    Volume,
    Pressure,
    KineticEnergy,
    ScalarMismatch { target: f64 },
}

#[derive(Debug, Clone)]
pub struct Objective {
    pub kind: ObjectiveKind,
    /// Region weight per cell (an indicator or a smooth mask).
    pub weight: CellField<f64>,
    /// Optional boundary-face weights for a unit surface density
    /// (J += sum of w_f |dGamma_f|).
    pub surface_weight: Option<FaceField<f64>>,
}

impl Objective {
    pub fn volume_only(kind: ObjectiveKind, weight: CellField<f64>) -> Self {
        Objective { kind, weight, surface_weight: None }
    }

    /// The objective must act somewhere.
    pub fn validate(&self) -> Result<(), SolverError> {
        let vol: f64 = self.weight.iter().map(|w| w.abs()).sum();
        let surf: f64 = self
            .surface_weight
            .as_ref()
            .map_or(0.0, |s| s.iter().map(|w| w.abs()).sum());
        if vol + surf == 0.0 {
            return Err(SolverError::BadConfig(
                "objective region is empty (all weights zero)".to_string(),
            ));
        }
        Ok(())
    }

    pub fn value(&self, state: &PrimalState, mesh: &Mesh, rho: f64) -> f64 {
        let mut j = 0.0;
        for (ci, cell) in mesh.cells.iter().enumerate() {
            let density = match self.kind {
                ObjectiveKind::Volume => 1.0,
                ObjectiveKind::Pressure => state.p[ci],
                ObjectiveKind::KineticEnergy => 0.5 * rho * state.v[ci].norm_sq(),
                ObjectiveKind::ScalarMismatch { target } => {
                    let d = state.phi[ci] - target;
                    d * d
                }
            };
            j += self.weight[ci] * density * cell.volume;
        }
        if let Some(sw) = &self.surface_weight {
            for (fi, f) in mesh.faces.iter().enumerate() {
                if !f.is_interior() {
                    j += sw[fi] * f.area.norm();
                }
            }
        }
        j
    }

    /// d(w j)/dv per cell, a volumetric density.
    pub fn d_dv(&self, state: &PrimalState, mesh: &Mesh, rho: f64) -> CellField<Vec2> {
        let mut out = CellField::zeros(mesh);
        if let ObjectiveKind::KineticEnergy = self.kind {
            for ci in 0..mesh.n_cells() {
                out[ci] = state.v[ci] * (rho * self.weight[ci]);
            }
        }
        out
    }

    pub fn d_dp(&self, mesh: &Mesh) -> CellField<f64> {
        match self.kind {
            ObjectiveKind::Pressure => self.weight.clone(),
            _ => CellField::zeros(mesh),
        }
    }

    pub fn d_dphi(&self, state: &PrimalState, mesh: &Mesh) -> CellField<f64> {
        let mut out = CellField::zeros(mesh);
        if let ObjectiveKind::ScalarMismatch { target } = self.kind {
            for ci in 0..mesh.n_cells() {
                out[ci] = 2.0 * self.weight[ci] * (state.phi[ci] - target);
            }
        }
        out
    }
}

/// State-derivative slots of the primal sources. Absent couplings are exact
/// zeros; constant evaluators cover the case catalog (Boussinesq-style
/// buoyancy dq/dphi, pressure-coupled sources).
#[derive(Debug, Clone, Copy, Default)]
pub struct AdjointSourceModel {
    /// dq_i/dphi (buoyancy coupling), constant over the domain.
    pub dq_dphi: Option<Vec2>,
    /// dq_i/dp, constant.
    pub dq_dp: Option<Vec2>,
    /// ds^phi/dp, constant.
    pub ds_dp: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct AdjointState {
    pub v: CellField<Vec2>,
    pub p: CellField<f64>,
    pub phi: CellField<f64>,
    /// Volumetric adjoint face flux v_hat^F . dGamma, owner-oriented.
    pub face_flux: FaceField<f64>,
    pub face_vel: FaceField<Vec2>,
    pub grad_p: CellField<Vec2>,
    pub v_prev: CellField<Vec2>,
    pub phi_prev: CellField<f64>,
    pub v_time: CellField<Vec2>,
    pub phi_time: CellField<f64>,
}

impl AdjointState {
    pub fn new(mesh: &Mesh) -> Self {
        AdjointState {
            v: CellField::zeros(mesh),
            p: CellField::zeros(mesh),
            phi: CellField::zeros(mesh),
            face_flux: FaceField::zeros(mesh),
            face_vel: FaceField::zeros(mesh),
            grad_p: CellField::zeros(mesh),
            v_prev: CellField::zeros(mesh),
            phi_prev: CellField::zeros(mesh),
            v_time: CellField::zeros(mesh),
            phi_time: CellField::zeros(mesh),
        }
    }

    pub fn assert_finite(&self) {
        assert!(self.v.all_finite() && self.p.all_finite() && self.phi.all_finite());
        assert!(self.face_flux.all_finite());
    }
}

/// Frozen primal data the adjoint equations linearize around. All gradients
/// are precomputed once: the adjoint loop never touches the primal state
/// again.
pub struct FrozenPrimal {
    /// Primal mass fluxes, owner-oriented.
    pub mass_flux: FaceField<f64>,
    /// Green-Gauss gradients of the primal velocity components.
    pub grad_v: [CellField<Vec2>; 2],
    pub grad_phi: CellField<Vec2>,
    pub d_dv: CellField<Vec2>,
    pub d_dp: CellField<f64>,
    pub d_dphi: CellField<f64>,
}

impl FrozenPrimal {
    pub fn freeze(
        state: &PrimalState,
        mesh: &Mesh,
        boundary: &Boundary,
        objective: &Objective,
        rho: f64,
    ) -> Self {
        let grad_v = green_gauss_gradient_vec(&state.v, mesh, |fi, v_owner| {
            match boundary.vel[fi] {
                Some(crate::bc::VelBc::Fixed(vb)) => vb,
                _ => v_owner,
            }
        });
        let grad_phi = green_gauss_gradient(&state.phi, mesh, |fi, owner| {
            match boundary.phi[fi] {
                Some(ScalBc::Fixed(pb)) => pb,
                _ => owner,
            }
        });
        FrozenPrimal {
            mass_flux: state.face_flux.clone(),
            grad_v,
            grad_phi,
            d_dv: objective.d_dv(state, mesh, rho),
            d_dp: objective.d_dp(mesh),
            d_dphi: objective.d_dphi(state, mesh),
        }
    }
}

/// Total adjoint momentum source density (per volume): objective derivative
/// plus the pointwise transposes of the scalar and momentum convection
/// operators' dependence on the advecting velocity — the scalar-coupling
/// term phi_hat grad phi and the transposed-gradient convection term
/// rho (grad v)^T v_hat, both against frozen primal gradients.
pub fn adjoint_momentum_source(
    adjoint: &AdjointState,
    frozen: &FrozenPrimal,
    mesh: &Mesh,
    rho: f64,
) -> CellField<Vec2> {
    let mut q_hat = CellField::zeros(mesh);
    for ci in 0..mesh.n_cells() {
        let atc = Vec2::new(
            adjoint.v[ci].x * frozen.grad_v[0][ci].x + adjoint.v[ci].y * frozen.grad_v[1][ci].x,
            adjoint.v[ci].x * frozen.grad_v[0][ci].y + adjoint.v[ci].y * frozen.grad_v[1][ci].y,
        );
        q_hat[ci] = -frozen.d_dv[ci]
            - frozen.grad_phi[ci] * adjoint.phi[ci]
            - atc * rho;
    }
    q_hat
}

/// Adjoint momentum system for one component: convection with the negated
/// primal mass flux, unchanged diffusion, the same relaxation/transient
/// diagonal as the primal, and the explicit source (q_hat - grad p_hat) dOmega.
#[allow(clippy::too_many_arguments)]
pub fn assemble_adjoint_momentum(
    axis: usize,
    adjoint: &AdjointState,
    frozen: &FrozenPrimal,
    mesh: &Mesh,
    cfg: &SolverConfig,
    boundary: &Boundary,
    q_hat: &CellField<Vec2>,
    grad_p_hat: &CellField<Vec2>,
) -> Result<(SparseMatrix, Vec<f64>), SolverError> {
    let opts = TransportOptions {
        flux: &frozen.mass_flux,
        diffusivity: cfg.mu,
        blend: cfg.convection_blend,
        nonortho_grad: None,
        quad_wall: None,
        transpose: true,
    };
    let (mut a, mut rhs) = assemble_convection_diffusion(mesh, &opts, |fi| {
        boundary
            .vel_component(fi, axis)
            .expect("missing adjoint velocity BC")
    });
    let gamma = cfg.gamma();
    for (ci, cell) in mesh.cells.iter().enumerate() {
        let relaxed = a.diag[ci] / cfg.omega_v + gamma * cell.volume / cfg.omega_v;
        a.diag[ci] = relaxed;
        rhs[ci] += (1.0 - cfg.omega_v) * relaxed * adjoint.v_prev[ci].comp(axis);
        rhs[ci] += gamma * cell.volume * adjoint.v_time[ci].comp(axis);
        rhs[ci] += (q_hat[ci].comp(axis) - grad_p_hat[ci].comp(axis)) * cell.volume;
    }
    a.check_positive_diagonal()?;
    Ok((a, rhs))
}

/// Face and cell reconstructions of the adjoint momentum source: the direct
/// face value paired with the compact gradient, and the Gauss-theorem cell
/// average paired with the interpolated gradient.
pub struct SourceReconstruction {
    pub c1_face: FaceField<Vec2>,
    pub c2_cell: CellField<Vec2>,
    pub c2_face: FaceField<Vec2>,
}

/// Reconstruct per mode: E1 carries no sources; E3 uses reversed levers for
/// the face values feeding both the direct term and the Gauss assembly; E2
/// replaces every reversed lever with the plain linear one.
pub fn adjoint_source_reconstruct(
    q_hat: &CellField<Vec2>,
    mesh: &Mesh,
    mode: MwiMode,
) -> Option<SourceReconstruction> {
    let reversed = match mode {
        MwiMode::E1 => return None,
        MwiMode::E2 => false,
        MwiMode::E3 => true,
    };
    let lever_face = if reversed {
        interp_reversed(q_hat, mesh)
    } else {
        interp_linear(q_hat, mesh)
    };
    let mut c2_cell = CellField::zeros(mesh);
    for (ci, cell) in mesh.cells.iter().enumerate() {
        let mut sum = Vec2::ZERO;
        for &(fi, sign) in &cell.faces {
            let f = &mesh.faces[fi];
            let lever = (f.centroid - cell.centroid).dot(lever_face[fi]);
            sum += f.area * (sign * lever);
        }
        c2_cell[ci] = sum / cell.volume;
    }
    let c2_face = interp_linear(&c2_cell, mesh);
    Some(SourceReconstruction { c1_face: lever_face, c2_cell, c2_face })
}

/// Adjoint MWI face velocities and volumetric face fluxes. The optional
/// `grad_v_hat` enables the skewness term (interpolated gradient dotted with
/// the offset of the face centroid from the lambda-weighted point).
pub fn adjoint_mwi_face_velocity(
    adjoint: &AdjointState,
    mesh: &Mesh,
    mode: MwiMode,
    coeffs: &MwiCoeffs,
    grad_p: &CellField<Vec2>,
    q_hat: &CellField<Vec2>,
    boundary: &Boundary,
    grad_v_hat: Option<&[CellField<Vec2>; 2]>,
) -> (FaceField<Vec2>, FaceField<f64>) {
    let v_bar = interp_linear(&adjoint.v, mesh);
    let grad_p_bar = interp_linear(grad_p, mesh);
    let recon = adjoint_source_reconstruct(q_hat, mesh, mode);
    let grad_bars = grad_v_hat.map(|g| [interp_linear(&g[0], mesh), interp_linear(&g[1], mesh)]);

    let mut face_vel = FaceField::zeros(mesh);
    let mut flux = FaceField::zeros(mesh);
    for (fi, face) in mesh.faces.iter().enumerate() {
        match face.neighbor {
            Some(nb) => {
                let p = face.owner;
                let compact = face.d * ((adjoint.p[nb] - adjoint.p[p]) / face.d.norm_sq());
                let (q1, q2) = recon
                    .as_ref()
                    .map_or((Vec2::ZERO, Vec2::ZERO), |r| (r.c1_face[fi], r.c2_face[fi]));
                let corr = (compact - q1) - (grad_p_bar[fi] - q2);
                let mut vf = v_bar[fi] - corr * coeffs.beta_face[fi];
                if let Some(gb) = &grad_bars {
                    let offset = face.centroid - face.perp_point;
                    vf.x += gb[0][fi].dot(offset);
                    vf.y += gb[1][fi].dot(offset);
                }
                face_vel[fi] = vf;
                flux[fi] = vf.dot(face.area);
            }
            None => match boundary.vel[fi].expect("missing adjoint velocity BC") {
                crate::bc::VelBc::Fixed(vb) => {
                    face_vel[fi] = vb;
                    flux[fi] = vb.dot(face.area);
                }
                crate::bc::VelBc::ZeroGradient => {
                    face_vel[fi] = adjoint.v[face.owner];
                    flux[fi] = adjoint.v[face.owner].dot(face.area);
                }
                crate::bc::VelBc::Slip { normal_axis } => {
                    let mut vb = adjoint.v[face.owner];
                    vb.set_comp(normal_axis, 0.0);
                    face_vel[fi] = vb;
                    flux[fi] = 0.0;
                }
            },
        }
    }
    (face_vel, flux)
}

/// Per-cell target divergence of the adjoint velocity:
/// sum of fluxes = -[v_hat . dq/dp + phi_hat ds/dp - dJ/dp] dOmega.
pub fn adjoint_continuity_rhs(
    adjoint: &AdjointState,
    frozen: &FrozenPrimal,
    sources: &AdjointSourceModel,
    mesh: &Mesh,
) -> CellField<f64> {
    let mut target = CellField::zeros(mesh);
    for (ci, cell) in mesh.cells.iter().enumerate() {
        let mut s = frozen.d_dp[ci];
        if let Some(dq_dp) = sources.dq_dp {
            s -= adjoint.v[ci].dot(dq_dp);
        }
        if let Some(ds_dp) = sources.ds_dp {
            s -= adjoint.phi[ci] * ds_dp;
        }
        target[ci] = s * cell.volume;
    }
    target
}

/// A complete adjoint problem around a converged primal state.
pub struct AdjointProblem<'a> {
    pub mesh: &'a Mesh,
    pub cfg: SolverConfig,
    pub mode: MwiMode,
    pub objective: Objective,
    pub sources: AdjointSourceModel,
    pub frozen: FrozenPrimal,
    /// Adjoint boundary table (homogeneous Dirichlet on primal Dirichlet
    /// faces).
    pub boundary: Boundary,
}

impl<'a> AdjointProblem<'a> {
    pub fn new(
        mesh: &'a Mesh,
        cfg: SolverConfig,
        mode: MwiMode,
        objective: Objective,
        primal: &PrimalState,
        primal_boundary: &Boundary,
    ) -> Result<Self, SolverError> {
        Self::with_sources(
            mesh,
            cfg,
            mode,
            objective,
            AdjointSourceModel::default(),
            primal,
            primal_boundary,
        )
    }

    pub fn with_sources(
        mesh: &'a Mesh,
        cfg: SolverConfig,
        mode: MwiMode,
        objective: Objective,
        sources: AdjointSourceModel,
        primal: &PrimalState,
        primal_boundary: &Boundary,
    ) -> Result<Self, SolverError> {
        cfg.validate()?;
        objective.validate()?;
        primal_boundary.assert_complete(mesh);
        let frozen = FrozenPrimal::freeze(primal, mesh, primal_boundary, &objective, cfg.rho);
        Ok(AdjointProblem {
            mesh,
            cfg,
            mode,
            objective,
            sources,
            frozen,
            boundary: primal_boundary.adjoint(),
        })
    }

    /// One adjoint SIMPLE sweep: scalar first (the objective often enters
    /// through it), then momentum with negated fluxes, MWI face velocities,
    /// and the volumetric continuity projection.
    pub fn outer_iteration(&self, state: &mut AdjointState) -> Result<Residuals, SolverError> {
        let mesh = self.mesh;
        let cfg = &self.cfg;

        let mut residuals = Residuals::default();
        if cfg.solve_scalar {
            residuals.phi = self.adjoint_scalar_step(state)?;
        }

        state.grad_p = pressure_gradient(&state.p, mesh, &self.boundary, &state.grad_p);
        let q_hat = adjoint_momentum_source(state, &self.frozen, mesh, cfg.rho);

        let mut diag_mean = CellField::zeros(mesh);
        for axis in 0..2 {
            let (a, rhs) = assemble_adjoint_momentum(
                axis,
                state,
                &self.frozen,
                mesh,
                cfg,
                &self.boundary,
                &q_hat,
                &state.grad_p,
            )?;
            let prev = state.v.component(axis);
            residuals.v[axis] = eq20_residual(&a, &prev.0, &rhs);
            let mut x = prev.0.clone();
            solve_bicgstab(&a, &rhs, &mut x, cfg.lin_tol, 1e-300, cfg.lin_max_iter)?;
            state.v.set_component(axis, &CellField(x));
            for ci in 0..mesh.n_cells() {
                diag_mean[ci] += 0.5 * a.diag[ci];
            }
        }

        let coeffs = mwi_coefficients(mesh, &diag_mean, cfg.beta_form);
        let grad_v_hat = if cfg.nonortho_correction {
            Some(green_gauss_gradient_vec(&state.v, mesh, |fi, v_owner| {
                match self.boundary.vel[fi] {
                    Some(crate::bc::VelBc::Fixed(vb)) => vb,
                    _ => v_owner,
                }
            }))
        } else {
            None
        };
        let (face_vel, flux) = adjoint_mwi_face_velocity(
            state,
            mesh,
            self.mode,
            &coeffs,
            &state.grad_p,
            &q_hat,
            &self.boundary,
            grad_v_hat.as_ref(),
        );
        state.face_vel = face_vel;
        state.face_flux = flux;

        let target = adjoint_continuity_rhs(state, &self.frozen, &self.sources, mesh);
        let corr = solve_pressure_correction(
            mesh,
            &coeffs,
            1.0,
            &state.face_flux,
            Some(&target),
            &self.boundary.p,
            cfg.lin_tol,
            cfg.lin_max_iter,
        )?;
        residuals.p = corr.imbalance;
        let mut p = std::mem::replace(&mut state.p, CellField(Vec::new()));
        let mut v = std::mem::replace(&mut state.v, CellField(Vec::new()));
        let mut face_vel = std::mem::replace(&mut state.face_vel, FaceField(Vec::new()));
        let mut flux = std::mem::replace(&mut state.face_flux, FaceField(Vec::new()));
        apply_pressure_correction(
            mesh,
            &coeffs,
            1.0,
            cfg.omega_p,
            &self.boundary.p,
            &corr.p_prime,
            &mut p,
            &mut v,
            &mut face_vel,
            &mut flux,
        );
        state.p = p;
        state.v = v;
        state.face_vel = face_vel;
        state.face_flux = flux;

        state.v_prev = state.v.clone();
        state.phi_prev = state.phi.clone();
        Ok(residuals)
    }

    /// Adjoint scalar transport: negated volumetric flux, same diffusivity,
    /// driven by the scalar derivatives of objective and sources.
    pub fn adjoint_scalar_step(&self, state: &mut AdjointState) -> Result<f64, SolverError> {
        let mesh = self.mesh;
        let cfg = &self.cfg;
        let vol_flux = FaceField(
            self.frozen
                .mass_flux
                .iter()
                .map(|&m| m / cfg.rho)
                .collect(),
        );
        let opts = TransportOptions {
            flux: &vol_flux,
            diffusivity: cfg.mu_phi,
            blend: cfg.convection_blend,
            nonortho_grad: None,
            quad_wall: None,
            transpose: true,
        };
        let (mut a, mut rhs) = assemble_convection_diffusion(mesh, &opts, |fi| {
            self.boundary.phi[fi].expect("missing adjoint scalar BC")
        });
        let gamma_phi = if cfg.dt.is_finite() { 1.0 / cfg.dt } else { 0.0 };
        for (ci, cell) in mesh.cells.iter().enumerate() {
            let relaxed = a.diag[ci] / cfg.omega_phi + gamma_phi * cell.volume / cfg.omega_phi;
            a.diag[ci] = relaxed;
            rhs[ci] += (1.0 - cfg.omega_phi) * relaxed * state.phi_prev[ci];
            rhs[ci] += gamma_phi * cell.volume * state.phi_time[ci];
            rhs[ci] -= self.frozen.d_dphi[ci] * cell.volume;
            if let Some(dq_dphi) = self.sources.dq_dphi {
                rhs[ci] += state.v[ci].dot(dq_dphi) * cell.volume;
            }
        }
        let residual = eq20_residual(&a, &state.phi.0, &rhs);
        let mut phi = state.phi.0.clone();
        solve_bicgstab(&a, &rhs, &mut phi, cfg.lin_tol, 1e-300, cfg.lin_max_iter)?;
        state.phi = CellField(phi);
        Ok(residual)
    }

    pub fn converged(&self, r: &Residuals) -> bool {
        r.v_total() <= self.cfg.tol_v
            && r.p <= self.cfg.tol_p
            && (!self.cfg.solve_scalar || r.phi <= self.cfg.tol_phi)
    }

    pub fn run(
        &self,
        state: &mut AdjointState,
        mut observer: impl FnMut(usize, &Residuals),
    ) -> Result<(usize, Residuals, bool), SolverError> {
        let mut min_res = f64::INFINITY;
        let mut last = Residuals::default();
        for iter in 1..=self.cfg.max_outer {
            state.v_time = state.v.clone();
            state.phi_time = state.phi.clone();
            let r = self.outer_iteration(state)?;
            observer(iter, &r);
            let total = r.max();
            min_res = min_res.min(total.max(1e-300));
            if total > 1e6 * min_res && iter > 10 {
                return Err(SolverError::Diverged {
                    iter,
                    residual: total,
                    minimum: min_res,
                });
            }
            last = r;
            if self.converged(&r) {
                return Ok((iter, last, true));
            }
        }
        Ok((self.cfg.max_outer, last, false))
    }
}
