//! Named verification suites shared by the CLI `verify` verb and the
//! integration tests. Each suite runs a canned scenario and reports
//! per-check pass/fail plus the measured numbers.

use serde::Serialize;

use crate::adjoint::{AdjointProblem, AdjointState, MwiMode};
use crate::cases;
use crate::fields::{rel_l2_vec, CellField, FaceField};
use crate::geom::Vec2;
use crate::linalg::SparseMatrix;
use crate::mesh::{build_structured_mesh, Mesh};
use crate::ops::{divergence_from_face_flux, green_gauss_gradient, interp_linear};
use crate::primal::{MwiVariant, PrimalProblem, PrimalState, SourceConcept};
use crate::sensitivity;

#[derive(Debug, Clone, Serialize)]
pub struct Measure {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub measures: Vec<Measure>,
}

impl Check {
    pub fn new(name: &str, passed: bool, measures: &[(&str, f64)]) -> Self {
        Check {
            name: name.to_string(),
            passed,
            measures: measures
                .iter()
                .map(|&(n, v)| Measure { name: n.to_string(), value: v })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    fn new(suite: &str, checks: Vec<Check>) -> Self {
        SuiteReport {
            suite: suite.to_string(),
            passed: checks.iter().all(|c| c.passed),
            checks,
        }
    }

    /// One line per check: `suite/check: pass|FAIL  name=value ...`
    pub fn render(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::new();
        for c in &self.checks {
            write!(out, "{}/{}: {}", self.suite, c.name, if c.passed { "pass" } else { "FAIL" })
                .unwrap();
            for m in &c.measures {
                write!(out, "  {}={:.3e}", m.name, m.value).unwrap();
            }
            out.push('\n');
        }
        out
    }
}

pub const SUITES: &[&str] = &[
    "geometry",
    "operators",
    "well-balanced",
    "checkerboard",
    "relaxation",
    "manufactured",
    "adjoint-fd",
    "mode-ordering",
];

pub fn run_suite(name: &str) -> Option<SuiteReport> {
    match name {
        "geometry" => Some(geometry_suite()),
        "operators" => Some(operators_suite()),
        "well-balanced" => Some(well_balanced_suite()),
        "checkerboard" => Some(checkerboard_suite()),
        "relaxation" => Some(relaxation_suite()),
        "manufactured" => Some(manufactured_suite()),
        "adjoint-fd" => Some(adjoint_fd_suite()),
        "mode-ordering" => Some(mode_ordering_suite()),
        _ => None,
    }
}

fn suite_meshes() -> Vec<(String, Mesh)> {
    let mut out = Vec::new();
    for &(nx, ny) in &[(8usize, 8usize), (17, 23), (64, 64)] {
        for &(stretch, skew) in &[((1.0, 1.0), 0.0), ((1.2, 1.2), 0.0), ((1.0, 1.0), 0.2), ((1.2, 1.15), 0.2)] {
            let name = format!("{nx}x{ny}-s{}-{}-k{}", stretch.0, stretch.1, skew);
            let mesh =
                build_structured_mesh(nx, ny, [0.0, 2.0, 0.0, 1.5], stretch, skew).unwrap();
            out.push((name, mesh));
        }
    }
    out
}

/// Per-cell Gauss closure identities: the face-area vectors of a closed cell
/// sum to zero, and the first moment of the area vectors reproduces the cell
/// volume times the identity.
pub fn geometry_suite() -> SuiteReport {
    let mut checks = Vec::new();
    for (name, mesh) in suite_meshes() {
        let mut worst_closure = 0.0f64;
        let mut worst_moment = 0.0f64;
        for cell in &mesh.cells {
            let mut closure = Vec2::ZERO;
            let mut moment = [[0.0f64; 2]; 2];
            let mut area_scale = 0.0;
            for &(fi, sign) in &cell.faces {
                let f = &mesh.faces[fi];
                let a = f.area * sign;
                closure += a;
                area_scale += f.area.norm();
                let x = f.centroid - cell.centroid;
                for i in 0..2 {
                    for k in 0..2 {
                        moment[k][i] += x.comp(k) * a.comp(i);
                    }
                }
            }
            worst_closure = worst_closure.max(closure.norm() / area_scale);
            for i in 0..2 {
                for k in 0..2 {
                    let expect = if i == k { cell.volume } else { 0.0 };
                    worst_moment =
                        worst_moment.max((moment[k][i] - expect).abs() / cell.volume);
                }
            }
        }
        checks.push(Check::new(
            &format!("closure-{name}"),
            worst_closure <= 1e-12,
            &[("max_rel_closure", worst_closure)],
        ));
        // Combining strong stretch with skew drives the smallest cells to
        // h ~ 1e-6 at coordinates ~ 2, where forming the face-to-centroid
        // offset from stored global positions cancels to eps * x / h ~ 4e-12.
        // That representation limit, not the discretization, sets the gate
        // for the combined mesh; the individual families hold 1e-12.
        let gate = if name.contains("s1.2-1.15-k") { 2e-11 } else { 1e-12 };
        checks.push(Check::new(
            &format!("moment-{name}"),
            worst_moment <= gate,
            &[("max_rel_moment", worst_moment)],
        ));
    }
    SuiteReport::new("geometry", checks)
}

/// Discrete operator identities: gradient exactness for affine fields,
/// divergence of a uniform flux, and the residual-norm arithmetic against a
/// dense oracle.
pub fn operators_suite() -> SuiteReport {
    let mut checks = Vec::new();

    let mesh = build_structured_mesh(24, 16, [0.0, 2.0, 0.0, 1.0], (1.0, 1.0), 0.0).unwrap();
    let field = CellField(mesh.cells.iter().map(|c| 2.0 * c.centroid.x - 0.7 * c.centroid.y + 1.0).collect());
    let grad = green_gauss_gradient(&field, &mesh, |fi, _| {
        let c = mesh.faces[fi].centroid;
        2.0 * c.x - 0.7 * c.y + 1.0
    });
    let err = grad
        .iter()
        .map(|g| (*g - Vec2::new(2.0, -0.7)).norm())
        .fold(0.0, f64::max);
    checks.push(Check::new("gradient-affine-exact", err <= 1e-12, &[("max_err", err)]));

    let v = CellField(vec![Vec2::new(0.8, -0.3); mesh.cells.len()]);
    let vf = interp_linear(&v, &mesh);
    let mut flux = FaceField::zeros(&mesh);
    for (fi, f) in mesh.faces.iter().enumerate() {
        flux[fi] = if f.is_interior() {
            vf[fi].dot(f.area)
        } else {
            Vec2::new(0.8, -0.3).dot(f.area)
        };
    }
    let div = divergence_from_face_flux(&flux, &mesh, true);
    let err = div.iter().map(|d| d.abs()).fold(0.0, f64::max);
    checks.push(Check::new("divergence-uniform-flux", err <= 1e-12, &[("max_err", err)]));

    // residual_norm against a dense oracle on pseudo-random 20x20 systems.
    let mut lcg: u64 = 0x2545F4914F6CDD1D;
    let mut next = move || {
        lcg = lcg.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (lcg >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    };
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let n = 20;
        let mut a = SparseMatrix::new(n);
        let mut dense = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                let v = next() + if i == j { 4.0 } else { 0.0 };
                a.add(i, j, v);
                dense[i][j] += v;
            }
        }
        let x: Vec<f64> = (0..n).map(|_| next()).collect();
        let b: Vec<f64> = (0..n).map(|_| next()).collect();
        let sparse_norm = sensitivity::residual_norm(&a.residual(&x, &b));
        let mut acc = 0.0;
        for i in 0..n {
            let mut r = -b[i];
            for j in 0..n {
                r += dense[i][j] * x[j];
            }
            acc += r.abs();
        }
        let oracle = acc / n as f64;
        worst = worst.max((sparse_norm - oracle).abs() / oracle);
    }
    checks.push(Check::new("residual-norm-dense-oracle", worst <= 1e-14, &[("max_rel_err", worst)]));

    // Exact permutation invariance and absolute homogeneity.
    let r: Vec<f64> = (0..257).map(|i| ((i * 2654435761u64 as usize) % 1000) as f64 / 7.0 - 60.0).collect();
    let base = sensitivity::residual_norm(&r);
    let mut rev = r.clone();
    rev.reverse();
    let perm_ok = sensitivity::residual_norm(&rev) == base;
    checks.push(Check::new("residual-norm-permutation-exact", perm_ok, &[]));
    let scaled: Vec<f64> = r.iter().map(|v| v * -8.0).collect();
    let homog_ok = sensitivity::residual_norm(&scaled) == 8.0 * base;
    checks.push(Check::new("residual-norm-homogeneity-exact", homog_ok, &[]));

    SuiteReport::new("operators", checks)
}

/// Hydrostatic two-layer tank: the face-lever source treatment keeps the
/// spurious velocity at round-off, the cell-value treatment does not.
pub fn well_balanced_suite() -> SuiteReport {
    let mut checks = Vec::new();
    for (concept, gate, want_below) in [
        (SourceConcept::C2, 1e-10, true),
        (SourceConcept::C1, 1e-4, false),
    ] {
        let (case, scale) = cases::hydrostatic_tank(concept);
        let problem = PrimalProblem::new(
            &case.mesh,
            case.cfg.clone(),
            case.bodyforce.clone(),
            case.scalar_source.clone(),
            case.boundary.clone(),
        )
        .unwrap();
        let mut state = PrimalState::new(&case.mesh);
        state.sync_faces(&case.mesh, case.cfg.rho, &case.boundary);
        problem.run(&mut state, |_, _| {}).unwrap();
        let vmax = state.v.iter().map(|v| v.norm()).fold(0.0, f64::max) / scale;
        let passed = if want_below { vmax <= gate } else { vmax > gate };
        checks.push(Check::new(
            &format!("{}", match concept { SourceConcept::C2 => "face-lever-balanced", SourceConcept::C1 => "cell-value-documented-failure" }),
            passed,
            &[("max_v_over_scale", vmax), ("gate", gate)],
        ));
    }
    SuiteReport::new("well-balanced", checks)
}

/// Odd-even pressure mode on a uniform Stokes box: suppressed monotonically
/// by the momentum-weighted interpolation, stagnant without it.
pub fn checkerboard_suite() -> SuiteReport {
    let mut checks = Vec::new();
    for (variant, name) in [(MwiVariant::Classical, "suppressed"), (MwiVariant::Off, "stagnates-without")] {
        let case = cases::checkerboard_stokes(variant);
        let problem = PrimalProblem::new(
            &case.mesh,
            case.cfg.clone(),
            case.bodyforce.clone(),
            case.scalar_source.clone(),
            case.boundary.clone(),
        )
        .unwrap();
        let mut state = PrimalState::new(&case.mesh);
        state.sync_faces(&case.mesh, case.cfg.rho, &case.boundary);
        let (nx, _) = case.mesh.structured_dims.unwrap();
        for ci in 0..case.mesh.n_cells() {
            let (i, j) = (ci % nx, ci / nx);
            state.p[ci] = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
        }
        let a0 = cases::odd_even_amplitude(&state.p, &case.mesh);
        let mut monotone_above_gate = true;
        let mut prev = a0;
        let mut final_ratio = 1.0;
        for _ in 0..case.cfg.max_outer {
            state.v_time = state.v.clone();
            state.phi_time = state.phi.clone();
            state.face_vel_time = state.face_vel.clone();
            problem.outer_iteration(&mut state).unwrap();
            let a = cases::odd_even_amplitude(&state.p, &case.mesh);
            // Monotone decay is only meaningful above the suppression gate;
            // below it the amplitude sits at solver noise.
            if prev / a0 > 1e-8 && a > prev * (1.0 + 1e-12) {
                monotone_above_gate = false;
            }
            prev = a;
            final_ratio = a / a0;
        }
        let passed = match variant {
            MwiVariant::Classical => monotone_above_gate && final_ratio <= 1e-8,
            _ => final_ratio > 1e-2,
        };
        checks.push(Check::new(
            name,
            passed,
            &[("final_over_initial", final_ratio), ("monotone", if monotone_above_gate { 1.0 } else { 0.0 })],
        ));
    }
    SuiteReport::new("checkerboard", checks)
}

/// Converged channel-flow states must not depend on the relaxation factor or
/// pseudo-time step when the relaxation-consistent interpolation is active;
/// the consistent form must also reduce bit-exactly to the classical one in
/// the no-relaxation steady limit.
pub fn relaxation_suite() -> SuiteReport {
    let mut checks = Vec::new();
    let mut states: Vec<(String, PrimalState)> = Vec::new();
    for &omega_v in &[0.3, 0.7, 1.0] {
        for &dt in &[0.1, 1.0, f64::INFINITY] {
            let case = cases::poiseuille(12, 10, omega_v, dt, MwiVariant::RelaxationConsistent);
            let problem = PrimalProblem::new(
                &case.mesh,
                case.cfg.clone(),
                case.bodyforce.clone(),
                case.scalar_source.clone(),
                case.boundary.clone(),
            )
            .unwrap();
            let mut state = PrimalState::new(&case.mesh);
            state.sync_faces(&case.mesh, case.cfg.rho, &case.boundary);
            let (_, _, conv) = problem.run(&mut state, |_, _| {}).unwrap();
            assert!(conv, "poiseuille omega_v={omega_v} dt={dt} did not converge");
            states.push((format!("w{omega_v}-dt{dt}"), state));
        }
    }
    let mesh = cases::poiseuille(12, 10, 0.7, 1.0, MwiVariant::RelaxationConsistent).mesh;
    let mut worst = 0.0f64;
    let mut worst_pair = String::new();
    for i in 0..states.len() {
        for j in (i + 1)..states.len() {
            let d = rel_l2_vec(&mesh, &states[i].1.v, &states[j].1.v);
            if d > worst {
                worst = d;
                worst_pair = format!("{}/{}", states[i].0, states[j].0);
            }
        }
    }
    checks.push(Check::new(
        &format!("states-agree-pairwise ({worst_pair})"),
        worst <= 1e-8,
        &[("max_pairwise_rel_l2", worst)],
    ));

    // Bit-identical limit: consistent interpolation at omega = 1, steady,
    // equals the classical interpolation sweep for sweep.
    let sweeps = 40;
    let mut limit_states = Vec::new();
    for variant in [MwiVariant::RelaxationConsistent, MwiVariant::Classical] {
        let case = cases::poiseuille(10, 8, 1.0, f64::INFINITY, variant);
        let problem = PrimalProblem::new(
            &case.mesh,
            case.cfg.clone(),
            case.bodyforce.clone(),
            case.scalar_source.clone(),
            case.boundary.clone(),
        )
        .unwrap();
        let mut state = PrimalState::new(&case.mesh);
        state.sync_faces(&case.mesh, case.cfg.rho, &case.boundary);
        for _ in 0..sweeps {
            problem.outer_iteration(&mut state).unwrap();
        }
        limit_states.push(state);
    }
    let identical = limit_states[0].v.0 == limit_states[1].v.0
        && limit_states[0].p.0 == limit_states[1].p.0
        && limit_states[0].face_flux.0 == limit_states[1].face_flux.0;
    checks.push(Check::new("consistent-reduces-to-classical-bitwise", identical, &[]));

    SuiteReport::new("relaxation", checks)
}

/// Manufactured vortex: observed L2 velocity convergence order across three
/// mesh levels.
pub fn manufactured_suite() -> SuiteReport {
    let mut checks = Vec::new();
    let mut prev: Option<(f64, f64)> = None;
    for n in [16usize, 32, 64] {
        let case = cases::manufactured_vortex(n);
        let problem = PrimalProblem::new(
            &case.mesh,
            case.cfg.clone(),
            case.bodyforce.clone(),
            case.scalar_source.clone(),
            case.boundary.clone(),
        )
        .unwrap();
        let mut state = PrimalState::new(&case.mesh);
        state.sync_faces(&case.mesh, case.cfg.rho, &case.boundary);
        let (_, _, conv) = problem.run(&mut state, |_, _| {}).unwrap();
        let exact = CellField(
            case.mesh
                .cells
                .iter()
                .map(|c| cases::manufactured_velocity(c.centroid))
                .collect(),
        );
        let err = rel_l2_vec(&case.mesh, &state.v, &exact);
        if let Some((h_prev, e_prev)) = prev {
            let h = 1.0 / n as f64;
            let order = (e_prev / err).ln() / (h_prev / h).ln();
            checks.push(Check::new(
                &format!("order-{}-to-{n}", n / 2),
                conv && order >= 1.8,
                &[("order", order), ("err", err)],
            ));
        }
        prev = Some((1.0 / n as f64, err));
    }
    SuiteReport::new("manufactured", checks)
}

/// Adjoint volumetric sensitivities against central finite differences on
/// the scalar-coupled channel, all controls, three perturbation magnitudes.
pub fn adjoint_fd_suite() -> SuiteReport {
    let ch = cases::channel_case();
    let mut checks = Vec::new();
    let problem = PrimalProblem::new(
        &ch.case.mesh,
        ch.case.cfg.clone(),
        ch.case.bodyforce.clone(),
        ch.case.scalar_source.clone(),
        ch.case.boundary.clone(),
    )
    .unwrap();
    let mut state = PrimalState::new(&ch.case.mesh);
    state.sync_faces(&ch.case.mesh, ch.case.cfg.rho, &ch.case.boundary);
    let (_, _, conv) = problem.run(&mut state, |_, _| {}).unwrap();
    checks.push(Check::new("primal-converged", conv, &[]));

    let adj_problem = AdjointProblem::with_sources(
        &ch.case.mesh,
        ch.case.cfg.clone(),
        MwiMode::E3,
        ch.objective.clone(),
        ch.sources.clone(),
        &state,
        &ch.case.boundary,
    )
    .unwrap();
    let mut adj = AdjointState::new(&ch.case.mesh);
    let (_, _, aconv) = adj_problem.run(&mut adj, |_, _| {}).unwrap();
    checks.push(Check::new("adjoint-converged", aconv, &[]));

    for (k, &(ci, dir)) in ch.controls.iter().enumerate() {
        let mut e = CellField::zeros(&ch.case.mesh);
        e[ci] = dir;
        let adj_val = sensitivity::volumetric_sensitivity(&adj, &e, &ch.case.mesh).unwrap();
        let probes = sensitivity::fd_sweep(
            &ch.case.mesh,
            &ch.case.cfg,
            &ch.case.bodyforce,
            &ch.case.scalar_source,
            &ch.case.boundary,
            &ch.objective,
            &e,
            &state,
            &ch.epsilons,
        )
        .unwrap();
        let rep = sensitivity::SensitivityReport::new(format!("cell {ci}"), adj_val, probes);
        checks.push(Check::new(
            &format!("control-{k}-cell-{ci}"),
            rep.max_deviation <= 0.02 && rep.linearity_spread < 0.01,
            &[
                ("adjoint", adj_val),
                ("max_deviation", rep.max_deviation),
                ("linearity_spread", rep.linearity_spread),
            ],
        ));
    }
    SuiteReport::new("adjoint-fd", checks)
}

/// Convergence ordering of the three source-reconstruction modes on the
/// channel, their exact limit coincidences, and the percent-change
/// arithmetic of the reference iteration counts.
pub fn mode_ordering_suite() -> SuiteReport {
    let mut checks = Vec::new();
    let ch = cases::channel_case();
    let problem = PrimalProblem::new(
        &ch.case.mesh,
        ch.case.cfg.clone(),
        ch.case.bodyforce.clone(),
        ch.case.scalar_source.clone(),
        ch.case.boundary.clone(),
    )
    .unwrap();
    let mut state = PrimalState::new(&ch.case.mesh);
    state.sync_faces(&ch.case.mesh, ch.case.cfg.rho, &ch.case.boundary);
    problem.run(&mut state, |_, _| {}).unwrap();

    let mut crossings = Vec::new();
    for mode in [MwiMode::E1, MwiMode::E2, MwiMode::E3] {
        let p = AdjointProblem::with_sources(
            &ch.case.mesh,
            ch.case.cfg.clone(),
            mode,
            ch.objective.clone(),
            ch.sources.clone(),
            &state,
            &ch.case.boundary,
        )
        .unwrap();
        let mut adj = AdjointState::new(&ch.case.mesh);
        let mut hist = Vec::new();
        p.run(&mut adj, |_, r| hist.push(r.v_total())).unwrap();
        let cross = sensitivity::sustained_crossing(&hist, 1e-8);
        crossings.push(cross);
    }
    let (m1, m2, m3) = (crossings[0], crossings[1], crossings[2]);
    let ordered = match (m1, m2, m3) {
        (Some(m1), Some(m2), Some(m3)) => m3 <= m1 && m1 < m2,
        _ => false,
    };
    checks.push(Check::new(
        "consistent-fastest-inconsistent-slowest",
        ordered,
        &[
            ("m_none", m1.map_or(-1.0, |v| v as f64)),
            ("m_plain_levers", m2.map_or(-1.0, |v| v as f64)),
            ("m_transposed_levers", m3.map_or(-1.0, |v| v as f64)),
        ],
    ));

    let cmp = sensitivity::convergence_compare(22281, 20671);
    checks.push(Check::new(
        "reference-percent-change",
        (cmp.percent_change + 7.2).abs() < 0.1,
        &[("percent_change", cmp.percent_change)],
    ));

    SuiteReport::new("mode-ordering", checks)
}
