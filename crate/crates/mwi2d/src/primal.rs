//! Steady / pseudo-transient SIMPLE solver with the momentum-weighted
//! interpolation family: classical Rhie-Chow, body-force-aware C1/C2
//! treatment, and the relaxation/time-step-consistent variant.

use crate::bc::{Boundary, ScalBc};
use crate::fields::{CellField, FaceField};
use crate::geom::Vec2;
use crate::linalg::{solve_bicgstab, solve_cg, SolveStats, SparseMatrix};
use crate::mesh::Mesh;
use crate::ops::{green_gauss_gradient, green_gauss_gradient_vec, interp_linear, interp_reversed};
use crate::transport::{assemble_convection_diffusion, wall_stencils, TransportOptions, WallStencil};

#[derive(Debug, thiserror::Error)]
pub enum SolverError {
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Linalg(#[from] crate::linalg::LinalgError),
    #[error("solution diverged at outer iteration {iter}: residual {residual:e} grew more than 1e6 over its minimum {minimum:e}")]
    Diverged {
        iter: usize,
        residual: f64,
        minimum: f64,
    },
    #[error("pressure system is singular: all-Neumann pressure boundaries need a reference cell")]
    SingularPressure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MwiVariant {
    /// Linear face interpolation only; exposes checkerboarding.
    Off,
    Classical,
    RelaxationConsistent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceConcept {
    /// Direct cell value of the body force.
    C1,
    /// Gauss-theorem face-lever reconstruction.
    C2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaForm {
    /// beta^F = linear interpolation of (cell volume / momentum diagonal).
    VolumeOverDiag,
    /// beta^F = (d . dGamma) / linear interpolation of the diagonal.
    MainText,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SolverConfig {
    pub rho: f64,
    pub mu: f64,
    pub mu_phi: f64,
    pub omega_v: f64,
    pub omega_p: f64,
    pub omega_phi: f64,
    /// Pseudo-time step; `inf` runs fully steady.
    pub dt: f64,
    /// 0 = first-order upwind, 1 = central.
    pub convection_blend: f64,
    pub mwi: MwiVariant,
    pub concept: SourceConcept,
    pub beta_form: BetaForm,
    pub nonortho_correction: bool,
    /// Quadratic deferred-corrected Dirichlet wall fluxes for velocity.
    pub quad_wall_correction: bool,
    pub solve_scalar: bool,
    pub tol_v: f64,
    pub tol_p: f64,
    pub tol_phi: f64,
    pub max_outer: usize,
    pub lin_tol: f64,
    pub lin_max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            rho: 1.0,
            mu: 1.0,
            mu_phi: 1.0,
            omega_v: 0.7,
            omega_p: 0.3,
            omega_phi: 0.9,
            dt: f64::INFINITY,
            convection_blend: 0.9,
            mwi: MwiVariant::Classical,
            concept: SourceConcept::C1,
            beta_form: BetaForm::VolumeOverDiag,
            nonortho_correction: false,
            quad_wall_correction: false,
            solve_scalar: false,
            tol_v: 1e-8,
            tol_p: 1e-8,
            tol_phi: 1e-8,
            max_outer: 2000,
            lin_tol: 1e-8,
            lin_max_iter: 2000,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |msg: &str| Err(SolverError::BadConfig(msg.to_string()));
        if !(self.omega_v > 0.0 && self.omega_v <= 1.0) {
            return bad("omega_v must lie in (0, 1]");
        }
        if !(self.omega_p > 0.0 && self.omega_p <= 1.0) {
            return bad("omega_p must lie in (0, 1]");
        }
        if !(self.omega_phi > 0.0 && self.omega_phi <= 1.0) {
            return bad("omega_phi must lie in (0, 1]");
        }
        if !(self.dt > 0.0) {
            return bad("dt must be positive");
        }
        if !(self.rho > 0.0 && self.mu > 0.0) {
            return bad("rho and mu must be positive");
        }
        if !(0.0..=1.0).contains(&self.convection_blend) {
            return bad("convection_blend must lie in [0, 1]");
        }
        Ok(())
    }

    /// Transient weight gamma = rho / dt; zero for steady runs.
    pub fn gamma(&self) -> f64 {
        if self.dt.is_finite() {
            self.rho / self.dt
        } else {
            0.0
        }
    }
}

/// Analytic momentum source, fixed per case, optionally coupled linearly to
/// the transported scalar (Boussinesq-style buoyancy).
#[derive(Debug, Clone)]
pub struct BodyForceModel {
    pub q: CellField<Vec2>,
    pub concept: SourceConcept,
    /// dq/dphi: the momentum equation gains the pointwise cell source
    /// dq_dphi * phi * dOmega, kept outside the reconstructed force so the
    /// coupling has a plain cell-local transpose.
    pub dq_dphi: Option<Vec2>,
}

impl BodyForceModel {
    pub fn none(mesh: &Mesh) -> Self {
        BodyForceModel {
            q: CellField::zeros(mesh),
            concept: SourceConcept::C1,
            dq_dphi: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PrimalState {
    pub v: CellField<Vec2>,
    pub p: CellField<f64>,
    pub phi: CellField<f64>,
    /// Mass flux rho v^F . dGamma, owner-oriented.
    pub face_flux: FaceField<f64>,
    pub face_vel: FaceField<Vec2>,
    /// Lagged Green-Gauss pressure gradient (also the boundary closure).
    pub grad_p: CellField<Vec2>,
    // Previous outer iteration (superscript m-1).
    pub v_prev: CellField<Vec2>,
    pub phi_prev: CellField<f64>,
    pub face_vel_prev: FaceField<Vec2>,
    // Previous pseudo-time level (superscript t-1).
    pub v_time: CellField<Vec2>,
    pub phi_time: CellField<f64>,
    pub face_vel_time: FaceField<Vec2>,
}

impl PrimalState {
    pub fn new(mesh: &Mesh) -> Self {
        PrimalState {
            v: CellField::zeros(mesh),
            p: CellField::zeros(mesh),
            phi: CellField::zeros(mesh),
            face_flux: FaceField::zeros(mesh),
            face_vel: FaceField::zeros(mesh),
            grad_p: CellField::zeros(mesh),
            v_prev: CellField::zeros(mesh),
            phi_prev: CellField::zeros(mesh),
            face_vel_prev: FaceField::zeros(mesh),
            v_time: CellField::zeros(mesh),
            phi_time: CellField::zeros(mesh),
            face_vel_time: FaceField::zeros(mesh),
        }
    }

    /// Seed face velocities and fluxes from the cell field; call after
    /// setting the initial condition.
    pub fn sync_faces(&mut self, mesh: &Mesh, rho: f64, boundary: &Boundary) {
        self.face_vel = interp_linear(&self.v, mesh);
        for (fi, f) in mesh.faces.iter().enumerate() {
            if f.is_interior() {
                self.face_flux[fi] = rho * self.face_vel[fi].dot(f.area);
            }
        }
        boundary.boundary_mass_flux(mesh, rho, &self.v, &mut self.face_flux);
        self.v_prev = self.v.clone();
        self.phi_prev = self.phi.clone();
        self.face_vel_prev = self.face_vel.clone();
        self.v_time = self.v.clone();
        self.phi_time = self.phi.clone();
        self.face_vel_time = self.face_vel.clone();
    }

    pub fn assert_finite(&self) {
        assert!(self.v.all_finite() && self.p.all_finite() && self.phi.all_finite());
        assert!(self.face_flux.all_finite());
    }
}

/// Eq.-(20)-style global residuals: L1 mean of the local residuals of each
/// equation, evaluated with the previous iterate.
#[derive(Debug, Clone, Copy, Default)]
pub struct Residuals {
    pub v: [f64; 2],
    pub p: f64,
    pub phi: f64,
}

impl Residuals {
    pub fn v_total(&self) -> f64 {
        self.v[0] + self.v[1]
    }

    pub fn max(&self) -> f64 {
        self.v_total().max(self.p).max(self.phi)
    }
}

/// Volume-averaged body force per concept. C1 is the cell value; C2 is the
/// Gauss-theorem reconstruction with reversed-lever face values.
pub fn source_volume_average(
    bodyforce: &BodyForceModel,
    mesh: &Mesh,
    concept: SourceConcept,
) -> CellField<Vec2> {
    match concept {
        SourceConcept::C1 => bodyforce.q.clone(),
        SourceConcept::C2 => {
            let q_face = interp_reversed(&bodyforce.q, mesh);
            let mut out = CellField::zeros(mesh);
            for (ci, cell) in mesh.cells.iter().enumerate() {
                let mut sum = Vec2::ZERO;
                for &(fi, sign) in &cell.faces {
                    let f = &mesh.faces[fi];
                    let lever = (f.centroid - cell.centroid).dot(q_face[fi]);
                    sum += f.area * (sign * lever);
                }
                out[ci] = sum / cell.volume;
            }
            out
        }
    }
}

/// Green-Gauss pressure gradient with boundary closure: Dirichlet faces use
/// the prescribed value, gradient faces extrapolate with the lagged cell
/// gradient. Two passes tighten the lagged closure.
pub fn pressure_gradient(
    p: &CellField<f64>,
    mesh: &Mesh,
    boundary: &Boundary,
    grad_lagged: &CellField<Vec2>,
) -> CellField<Vec2> {
    let pass = |lag: &CellField<Vec2>| {
        green_gauss_gradient(p, mesh, |fi, p_owner| match boundary.p[fi] {
            Some(ScalBc::Fixed(pb)) => pb,
            _ => {
                let f = &mesh.faces[fi];
                p_owner + lag[f.owner].dot(f.centroid - mesh.cells[f.owner].centroid)
            }
        })
    };
    let g1 = pass(grad_lagged);
    pass(&g1)
}

/// One momentum component, assembled with the relaxation/transient diagonal
/// treatment.
pub struct MomentumSystem {
    pub matrix: SparseMatrix,
    pub rhs: Vec<f64>,
}

/// Assemble the momentum system for one velocity component. `q_avg` is the
/// concept-averaged body force and `grad_p` the current cell pressure
/// gradient. The matrix diagonal carries the under-relaxation and transient
/// contributions; the deferred relaxation and old-time terms sit in the rhs.
#[allow(clippy::too_many_arguments)]
pub fn assemble_momentum(
    axis: usize,
    state: &PrimalState,
    mesh: &Mesh,
    cfg: &SolverConfig,
    q_avg: &CellField<Vec2>,
    grad_p: &CellField<Vec2>,
    boundary: &Boundary,
    stencils: &[Option<WallStencil>],
) -> Result<MomentumSystem, SolverError> {
    let grad_component = if cfg.nonortho_correction {
        let grads = green_gauss_gradient_vec(&state.v, mesh, |fi, v_owner| {
            match boundary.vel[fi] {
                Some(crate::bc::VelBc::Fixed(vb)) => vb,
                _ => v_owner,
            }
        });
        Some(grads[axis].clone())
    } else {
        None
    };
    let opts = TransportOptions {
        flux: &state.face_flux,
        diffusivity: cfg.mu,
        blend: cfg.convection_blend,
        nonortho_grad: grad_component.as_ref(),
        quad_wall: if cfg.quad_wall_correction { Some(stencils) } else { None },
        transpose: false,
    };
    let (mut a, mut rhs) = assemble_convection_diffusion(mesh, &opts, |fi| {
        boundary.vel_component(fi, axis).expect("missing velocity BC")
    });

    let gamma = cfg.gamma();
    let omega = cfg.omega_v;
    for (ci, cell) in mesh.cells.iter().enumerate() {
        let bare = a.diag[ci];
        let relaxed = bare / omega + gamma * cell.volume / omega;
        a.diag[ci] = relaxed;
        rhs[ci] += (1.0 - omega) * relaxed * state.v_prev[ci].comp(axis);
        rhs[ci] += gamma * cell.volume * state.v_time[ci].comp(axis);
        rhs[ci] += (q_avg[ci].comp(axis) - grad_p[ci].comp(axis)) * cell.volume;
    }
    a.check_positive_diagonal()?;
    Ok(MomentumSystem { matrix: a, rhs })
}

/// Cell and face MWI coefficients derived from the momentum diagonal.
pub struct MwiCoeffs {
    /// Cell volume over relaxed momentum diagonal.
    pub b_eff: CellField<f64>,
    /// Face coefficient multiplying the gradient differences.
    pub beta_face: FaceField<f64>,
}

pub fn mwi_coefficients(mesh: &Mesh, diag: &CellField<f64>, form: BetaForm) -> MwiCoeffs {
    let b_eff = CellField(
        mesh.cells
            .iter()
            .zip(diag.iter())
            .map(|(c, &a)| c.volume / a)
            .collect(),
    );
    let beta_face = match form {
        BetaForm::VolumeOverDiag => interp_linear(&b_eff, mesh),
        BetaForm::MainText => {
            let diag_face = interp_linear(diag, mesh);
            FaceField::from_fn(mesh, |fi| {
                let f = &mesh.faces[fi];
                if f.is_interior() {
                    f.d.dot(f.area) / diag_face[fi]
                } else {
                    b_eff[f.owner]
                }
            })
        }
    };
    MwiCoeffs { b_eff, beta_face }
}

/// MWI face velocities and mass fluxes for the momentum predictor `state.v`.
///
/// The classical correction subtracts the difference between the compact and
/// interpolated pressure-minus-source gradients; the relaxation-consistent
/// variant adds the (1 - omega) previous-iteration and the transient
/// old-time face-velocity differences.
#[allow(clippy::too_many_arguments)]
pub fn mwi_face_velocity(
    state: &PrimalState,
    mesh: &Mesh,
    cfg: &SolverConfig,
    bodyforce: &BodyForceModel,
    coeffs: &MwiCoeffs,
    grad_p: &CellField<Vec2>,
    boundary: &Boundary,
) -> (FaceField<Vec2>, FaceField<f64>) {
    let v_bar = interp_linear(&state.v, mesh);
    let grad_p_bar = interp_linear(grad_p, mesh);
    // Skewness closure: shift the interpolated velocity from the
    // lambda-weighted point to the face centroid with the interpolated
    // gradient.
    let grad_v_bar = if cfg.nonortho_correction {
        let grads = green_gauss_gradient_vec(&state.v, mesh, |fi, v_owner| {
            match boundary.vel[fi] {
                Some(crate::bc::VelBc::Fixed(vb)) => vb,
                _ => v_owner,
            }
        });
        Some([interp_linear(&grads[0], mesh), interp_linear(&grads[1], mesh)])
    } else {
        None
    };

    // Source reconstructions: reversed levers against the compact gradient,
    // linear levers of the C2 cell averages against the interpolated one.
    let (q_c1_face, q_c2_face) = match cfg.concept {
        SourceConcept::C1 => (None, None),
        SourceConcept::C2 => {
            let c1 = interp_reversed(&bodyforce.q, mesh);
            let c2_cell = source_volume_average(bodyforce, mesh, SourceConcept::C2);
            let c2 = interp_linear(&c2_cell, mesh);
            (Some(c1), Some(c2))
        }
    };

    let relax_consistent = cfg.mwi == MwiVariant::RelaxationConsistent;
    let (v_prev_bar, b_v_time_bar) = if relax_consistent {
        let vp = interp_linear(&state.v_prev, mesh);
        let bv = CellField(
            state
                .v_time
                .iter()
                .zip(coeffs.b_eff.iter())
                .map(|(&v, &b)| v * b)
                .collect(),
        );
        (Some(vp), Some(interp_linear(&bv, mesh)))
    } else {
        (None, None)
    };
    let gamma = cfg.gamma();
    let omega = cfg.omega_v;

    let mut face_vel = FaceField::zeros(mesh);
    let mut flux = FaceField::zeros(mesh);
    for (fi, face) in mesh.faces.iter().enumerate() {
        if !face.is_interior() {
            continue;
        }
        let nb = face.neighbor.unwrap();
        let p = face.owner;
        let mut vf = v_bar[fi];
        if let Some(gb) = &grad_v_bar {
            let offset = face.centroid - face.perp_point;
            vf.x += gb[0][fi].dot(offset);
            vf.y += gb[1][fi].dot(offset);
        }
        if cfg.mwi != MwiVariant::Off {
            let dsq = face.d.norm_sq();
            let compact = face.d * ((state.p[nb] - state.p[p]) / dsq);
            let q1 = q_c1_face.as_ref().map_or(Vec2::ZERO, |q| q[fi]);
            let q2 = q_c2_face.as_ref().map_or(Vec2::ZERO, |q| q[fi]);
            let corr = (compact - q1) - (grad_p_bar[fi] - q2);
            vf -= corr * coeffs.beta_face[fi];
            if relax_consistent {
                let vpb = v_prev_bar.as_ref().unwrap();
                vf += (state.face_vel_prev[fi] - vpb[fi]) * (1.0 - omega);
                let bvb = b_v_time_bar.as_ref().unwrap();
                vf += (state.face_vel_time[fi] * coeffs.beta_face[fi] - bvb[fi]) * gamma;
            }
        }
        face_vel[fi] = vf;
        flux[fi] = cfg.rho * vf.dot(face.area);
    }
    // Boundary faces: velocities and fluxes straight from the conditions.
    for (fi, face) in mesh.faces.iter().enumerate() {
        if face.is_interior() {
            continue;
        }
        match boundary.vel[fi].expect("missing velocity BC") {
            crate::bc::VelBc::Fixed(vb) => {
                face_vel[fi] = vb;
                flux[fi] = cfg.rho * vb.dot(face.area);
            }
            crate::bc::VelBc::ZeroGradient => {
                face_vel[fi] = state.v[face.owner];
                flux[fi] = cfg.rho * state.v[face.owner].dot(face.area);
            }
            crate::bc::VelBc::Slip { normal_axis } => {
                let mut vb = state.v[face.owner];
                vb.set_comp(normal_axis, 0.0);
                face_vel[fi] = vb;
                flux[fi] = 0.0;
            }
        }
    }
    (face_vel, flux)
}

/// Outcome of a pressure-correction solve.
pub struct PressureCorrection {
    pub p_prime: CellField<f64>,
    pub stats: SolveStats,
    /// L1 mean of the pre-correction continuity imbalance.
    pub imbalance: f64,
}

/// Solve the pressure-correction Poisson system built from the face MWI
/// coefficients. `target_div` is the desired per-cell flux sum (zero for the
/// primal); `rho` scales velocity into flux. Without any Dirichlet pressure
/// face, the system is made consistent and pinned at cell 0.
pub fn solve_pressure_correction(
    mesh: &Mesh,
    coeffs: &MwiCoeffs,
    rho: f64,
    flux: &FaceField<f64>,
    target_div: Option<&CellField<f64>>,
    p_bc: &[Option<ScalBc>],
    lin_tol: f64,
    lin_max_iter: usize,
) -> Result<PressureCorrection, SolverError> {
    let n = mesh.n_cells();
    let mut a = SparseMatrix::new(n);
    let mut rhs = vec![0.0; n];
    let mut has_dirichlet = false;
    for (fi, face) in mesh.faces.iter().enumerate() {
        match face.neighbor {
            Some(nb) => {
                let p = face.owner;
                let t = rho * coeffs.beta_face[fi] * face.d.dot(face.area) / face.d.norm_sq();
                a.add(p, p, t);
                a.add(p, nb, -t);
                a.add(nb, nb, t);
                a.add(nb, p, -t);
            }
            None => {
                if let Some(ScalBc::Fixed(_)) = p_bc[fi] {
                    // p' = 0 on Dirichlet pressure boundaries.
                    let p = face.owner;
                    let delta = face.centroid - mesh.cells[p].centroid;
                    let t = rho * coeffs.b_eff[p] * delta.dot(face.area) / delta.norm_sq();
                    a.add(p, p, t);
                    has_dirichlet = true;
                }
            }
        }
    }
    for (ci, cell) in mesh.cells.iter().enumerate() {
        let mut sum = 0.0;
        for &(fi, sign) in &cell.faces {
            sum += sign * flux[fi];
        }
        rhs[ci] = target_div.map_or(0.0, |t| t[ci]) - sum;
    }
    let imbalance = rhs.iter().map(|r| r.abs()).sum::<f64>() / n as f64;
    if !has_dirichlet {
        // Remove the null-space component, then pin the level afterwards.
        let mean = rhs.iter().sum::<f64>() / n as f64;
        for r in rhs.iter_mut() {
            *r -= mean;
        }
    }
    let mut p_prime = vec![0.0; n];
    let stats = solve_cg(&a, &rhs, &mut p_prime, lin_tol, 1e-300, lin_max_iter)?;
    if !has_dirichlet {
        let p0 = p_prime[0];
        for v in p_prime.iter_mut() {
            *v -= p0;
        }
    }
    Ok(PressureCorrection {
        p_prime: CellField(p_prime),
        stats,
        imbalance,
    })
}

/// Apply a pressure correction: under-relaxed pressure update, cell velocity
/// correction from the Green-Gauss gradient of p', and compact face flux /
/// face velocity corrections.
#[allow(clippy::too_many_arguments)]
pub fn apply_pressure_correction(
    mesh: &Mesh,
    coeffs: &MwiCoeffs,
    rho: f64,
    omega_p: f64,
    p_bc: &[Option<ScalBc>],
    p_prime: &CellField<f64>,
    p: &mut CellField<f64>,
    v: &mut CellField<Vec2>,
    face_vel: &mut FaceField<Vec2>,
    flux: &mut FaceField<f64>,
) {
    let grad_pp = green_gauss_gradient(p_prime, mesh, |fi, owner_val| match p_bc[fi] {
        Some(ScalBc::Fixed(_)) => 0.0,
        _ => owner_val,
    });
    for ci in 0..mesh.n_cells() {
        p[ci] += omega_p * p_prime[ci];
        v[ci] -= grad_pp[ci] * coeffs.b_eff[ci];
    }
    for (fi, face) in mesh.faces.iter().enumerate() {
        match face.neighbor {
            Some(nb) => {
                let dv = face.d
                    * ((p_prime[nb] - p_prime[face.owner]) / face.d.norm_sq()
                        * coeffs.beta_face[fi]);
                face_vel[fi] -= dv;
                flux[fi] -= rho * dv.dot(face.area);
            }
            None => {
                if let Some(ScalBc::Fixed(_)) = p_bc[fi] {
                    let owner = face.owner;
                    let delta = face.centroid - mesh.cells[owner].centroid;
                    let dv = delta * ((0.0 - p_prime[owner]) / delta.norm_sq() * coeffs.b_eff[owner]);
                    face_vel[fi] -= dv;
                    flux[fi] -= rho * dv.dot(face.area);
                }
            }
        }
    }
}

/// One scalar-transport solve with the current mass fluxes. Returns the
/// Eq.-(20) residual of the previous iterate.
pub fn scalar_transport_step(
    state: &mut PrimalState,
    mesh: &Mesh,
    cfg: &SolverConfig,
    source: &CellField<f64>,
    boundary: &Boundary,
) -> Result<f64, SolverError> {
    // The transport equation is volumetric: divide the mass flux by rho.
    let vol_flux = FaceField(state.face_flux.iter().map(|&m| m / cfg.rho).collect());
    let opts = TransportOptions {
        flux: &vol_flux,
        diffusivity: cfg.mu_phi,
        blend: cfg.convection_blend,
        nonortho_grad: None,
        quad_wall: None,
        transpose: false,
    };
    let (mut a, mut rhs) = assemble_convection_diffusion(mesh, &opts, |fi| {
        boundary.phi[fi].expect("missing scalar BC")
    });
    let omega = cfg.omega_phi;
    let gamma_phi = if cfg.dt.is_finite() { 1.0 / cfg.dt } else { 0.0 };
    for (ci, cell) in mesh.cells.iter().enumerate() {
        let relaxed = a.diag[ci] / omega + gamma_phi * cell.volume / omega;
        a.diag[ci] = relaxed;
        rhs[ci] += (1.0 - omega) * relaxed * state.phi_prev[ci];
        rhs[ci] += gamma_phi * cell.volume * state.phi_time[ci];
        rhs[ci] += source[ci] * cell.volume;
    }
    let residual = eq20_residual(&a, &state.phi.0, &rhs);
    let mut phi = state.phi.0.clone();
    solve_bicgstab(&a, &rhs, &mut phi, cfg.lin_tol, 1e-300, cfg.lin_max_iter)?;
    state.phi = CellField(phi);
    Ok(residual)
}

/// L1 mean of A x - b with the previous iterate, canonically summed.
pub fn eq20_residual(a: &SparseMatrix, x_prev: &[f64], b: &[f64]) -> f64 {
    crate::sensitivity::residual_norm(&a.residual(x_prev, b))
}

/// A complete primal case: mesh, configuration, sources, and boundaries.
pub struct PrimalProblem<'a> {
    pub mesh: &'a Mesh,
    pub cfg: SolverConfig,
    pub bodyforce: BodyForceModel,
    pub scalar_source: CellField<f64>,
    pub boundary: Boundary,
    stencils: Vec<Option<WallStencil>>,
}

impl<'a> PrimalProblem<'a> {
    pub fn new(
        mesh: &'a Mesh,
        cfg: SolverConfig,
        bodyforce: BodyForceModel,
        scalar_source: CellField<f64>,
        boundary: Boundary,
    ) -> Result<Self, SolverError> {
        cfg.validate()?;
        boundary.assert_complete(mesh);
        let stencils = wall_stencils(mesh);
        Ok(PrimalProblem {
            mesh,
            cfg,
            bodyforce,
            scalar_source,
            boundary,
            stencils,
        })
    }

    /// Concept-averaged body force (the scalar coupling stays pointwise).
    pub fn q_avg(&self) -> CellField<Vec2> {
        source_volume_average(&self.bodyforce, self.mesh, self.bodyforce.concept)
    }

    /// One SIMPLE sweep: momentum predictor, MWI flux assembly, pressure
    /// correction, scalar transport. Returns the Eq.-(20) residuals of the
    /// incoming state.
    pub fn outer_iteration(&self, state: &mut PrimalState) -> Result<Residuals, SolverError> {
        let mesh = self.mesh;
        let cfg = &self.cfg;
        let q_avg = self.q_avg();

        state.grad_p = pressure_gradient(&state.p, mesh, &self.boundary, &state.grad_p);

        let mut residuals = Residuals::default();
        let mut diag_mean = CellField::zeros(mesh);
        for axis in 0..2 {
            let mut sys = assemble_momentum(
                axis,
                state,
                mesh,
                cfg,
                &q_avg,
                &state.grad_p,
                &self.boundary,
                &self.stencils,
            )?;
            // Scalar coupling enters as a pointwise cell source, outside the
            // reconstructed body force, so its transpose is a plain cell term.
            if let Some(c) = self.bodyforce.dq_dphi {
                for (ci, cell) in mesh.cells.iter().enumerate() {
                    sys.rhs[ci] += c.comp(axis) * state.phi[ci] * cell.volume;
                }
            }
            let prev = state.v.component(axis);
            residuals.v[axis] = eq20_residual(&sys.matrix, &prev.0, &sys.rhs);
            let mut x = prev.0.clone();
            solve_bicgstab(&sys.matrix, &sys.rhs, &mut x, cfg.lin_tol, 1e-300, cfg.lin_max_iter)?;
            state.v.set_component(axis, &CellField(x));
            for ci in 0..mesh.n_cells() {
                diag_mean[ci] += 0.5 * sys.matrix.diag[ci];
            }
        }

        let coeffs = mwi_coefficients(mesh, &diag_mean, cfg.beta_form);
        let (face_vel, flux) = mwi_face_velocity(
            state,
            mesh,
            cfg,
            &self.bodyforce,
            &coeffs,
            &state.grad_p,
            &self.boundary,
        );
        state.face_vel = face_vel;
        state.face_flux = flux;

        let corr = solve_pressure_correction(
            mesh,
            &coeffs,
            cfg.rho,
            &state.face_flux,
            None,
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
            cfg.rho,
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

        if cfg.solve_scalar {
            residuals.phi = scalar_transport_step(state, mesh, cfg, &self.scalar_source, &self.boundary)?;
        }

        state.v_prev = state.v.clone();
        state.phi_prev = state.phi.clone();
        state.face_vel_prev = state.face_vel.clone();
        Ok(residuals)
    }

    pub fn converged(&self, r: &Residuals) -> bool {
        r.v_total() <= self.cfg.tol_v
            && r.p <= self.cfg.tol_p
            && (!self.cfg.solve_scalar || r.phi <= self.cfg.tol_phi)
    }

    /// Drive the outer loop to convergence (or `max_outer`), advancing the
    /// pseudo-time level every sweep. The observer sees every residual
    /// record.
    pub fn run(
        &self,
        state: &mut PrimalState,
        mut observer: impl FnMut(usize, &Residuals),
    ) -> Result<(usize, Residuals, bool), SolverError> {
        let mut min_res = f64::INFINITY;
        let mut last = Residuals::default();
        for iter in 1..=self.cfg.max_outer {
            state.v_time = state.v.clone();
            state.phi_time = state.phi.clone();
            state.face_vel_time = state.face_vel.clone();
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
