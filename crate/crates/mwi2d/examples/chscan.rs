use mwi2d::adjoint::{AdjointProblem, AdjointSourceModel, AdjointState, MwiMode, Objective, ObjectiveKind};
use mwi2d::bc::{Boundary, ScalBc, VelBc};
use mwi2d::fields::CellField;
use mwi2d::geom::Vec2;
use mwi2d::mesh::build_structured_mesh;
use mwi2d::primal::{BodyForceModel, PrimalProblem, PrimalState, SolverConfig, SourceConcept};
use mwi2d::sensitivity;

struct Variant {
    name: &'static str,
    stretch: (f64, f64),
    skew: f64,
    amp: f64,
    buoy: f64,
    famp: f64,
    mu: f64,
    mu_phi: f64,
    region_x: f64,
    width_sq: f64,
    omega_v: f64,
    omega_p: f64,
    fd: bool,
}

fn main() {
    let variants = [
        Variant { name: "p0", stretch: (1.04, 1.03), skew: 0.0, amp: 40.0, buoy: 0.0, famp: 2.0, mu: 0.04, mu_phi: 0.003, region_x: 1.6, width_sq: 0.004, omega_v: 0.3, omega_p: 0.1, fd: false },
        Variant { name: "p15", stretch: (1.04, 1.03), skew: 0.0, amp: 40.0, buoy: 0.15, famp: 2.0, mu: 0.04, mu_phi: 0.003, region_x: 1.6, width_sq: 0.004, omega_v: 0.3, omega_p: 0.1, fd: false },
        Variant { name: "p30", stretch: (1.04, 1.03), skew: 0.0, amp: 40.0, buoy: 0.30, famp: 2.0, mu: 0.04, mu_phi: 0.003, region_x: 1.6, width_sq: 0.004, omega_v: 0.3, omega_p: 0.1, fd: false },
        Variant { name: "p45", stretch: (1.04, 1.03), skew: 0.0, amp: 40.0, buoy: 0.45, famp: 2.0, mu: 0.04, mu_phi: 0.003, region_x: 1.6, width_sq: 0.004, omega_v: 0.3, omega_p: 0.1, fd: false },
        Variant { name: "p30k", stretch: (1.04, 1.03), skew: 0.2, amp: 40.0, buoy: 0.30, famp: 2.0, mu: 0.04, mu_phi: 0.003, region_x: 1.6, width_sq: 0.004, omega_v: 0.3, omega_p: 0.1, fd: false },
        Variant { name: "p30re", stretch: (1.04, 1.03), skew: 0.0, amp: 40.0, buoy: 0.30, famp: 2.0, mu: 0.02, mu_phi: 0.003, region_x: 1.6, width_sq: 0.004, omega_v: 0.3, omega_p: 0.1, fd: false },
    ];
    for v in &variants {
        let mesh = build_structured_mesh(48, 24, [0.0, 3.0, 0.0, 1.0], v.stretch, v.skew).unwrap();
        let mut boundary = Boundary::new(&mesh);
        for name in ["south", "north", "west", "east"] {
            boundary.set_patch(&mesh, name, |_| VelBc::Fixed(Vec2::ZERO), ScalBc::ZeroGradient, |_| ScalBc::Fixed(0.0)).unwrap();
        }
        let q = CellField(mesh.cells.iter().map(|c| {
            let (x, y) = (c.centroid.x / 3.0, c.centroid.y);
            Vec2::new(v.famp * (std::f64::consts::PI * x).sin() * (2.0 * std::f64::consts::PI * y).cos(),
                      -v.famp * (std::f64::consts::PI * y).sin() * (2.0 * std::f64::consts::PI * x).cos())
        }).collect());
        let scalar_source = CellField(mesh.cells.iter().map(|c| {
            let r2 = (c.centroid - Vec2::new(0.8, 0.5)).norm_sq();
            v.amp * (-r2 / v.width_sq).exp()
        }).collect());
        let cfg = SolverConfig {
            mu: v.mu, mu_phi: v.mu_phi, convection_blend: 1.0, solve_scalar: true,
            omega_v: v.omega_v, omega_p: v.omega_p,
            tol_v: 1e-12, tol_p: 1e-12, tol_phi: 1e-12, lin_tol: 1e-13, max_outer: 20000,
            ..SolverConfig::default()
        };
        let dq = if v.buoy != 0.0 { Some(Vec2::new(0.0, v.buoy)) } else { None };
        let bodyforce = BodyForceModel { q, concept: SourceConcept::C1, dq_dphi: dq };
        let problem = PrimalProblem::new(&mesh, cfg.clone(), bodyforce.clone(), scalar_source.clone(), boundary.clone()).unwrap();
        let mut state = PrimalState::new(&mesh);
        state.sync_faces(&mesh, 1.0, &boundary);
        let run = problem.run(&mut state, |_, _| {});
        let (it, conv) = match run {
            Ok((it, _, c)) => (it, c),
            Err(e) => { println!("{} primal ERR: {e}", v.name); continue; }
        };
        let mut weight = CellField::zeros(&mesh);
        for ci in 0..mesh.n_cells() {
            if mesh.cells[ci].centroid.x > v.region_x { weight[ci] = 1.0; }
        }
        let objective = Objective::volume_only(ObjectiveKind::ScalarMismatch { target: 0.0 }, weight);
        let sources = AdjointSourceModel { dq_dphi: dq, ..Default::default() };
        print!("{} primal(it={it},conv={conv}) crossings:", v.name);
        let mut adj3 = None;
        for mode in [MwiMode::E1, MwiMode::E2, MwiMode::E3] {
            let p = AdjointProblem::with_sources(&mesh, cfg.clone(), mode, objective.clone(), sources.clone(), &state, &boundary).unwrap();
            let mut adj = AdjointState::new(&mesh);
            let mut hist = vec![];
            let r = p.run(&mut adj, |_, rr| hist.push(rr.v_total()));
            match r {
                Ok((_, _, c)) => {
                    let cross = sensitivity::sustained_crossing(&hist, 1e-8);
                    print!(" {mode:?}={cross:?}(conv={c})");
                    if mode == MwiMode::E3 { adj3 = Some(adj); }
                }
                Err(e) => print!(" {mode:?}=ERR({e})"),
            }
        }
        println!();
        if let Some(adj) = adj3.filter(|_| v.fd) {
            let positions = [(0.6, 0.3), (1.0, 0.5), (1.2, 0.75), (1.5, 0.5)];
            for (k, &(x, y)) in positions.iter().enumerate() {
                let target = Vec2::new(x, y);
                let ci = mesh.cells.iter().enumerate().min_by(|a, b| (a.1.centroid - target).norm().total_cmp(&(b.1.centroid - target).norm())).unwrap().0;
                let mut e = CellField::zeros(&mesh);
                e[ci] = if k % 2 == 0 { Vec2::new(1.0, 0.0) } else { Vec2::new(0.0, 1.0) };
                let adj_val = sensitivity::volumetric_sensitivity(&adj, &e, &mesh).unwrap();
                let probes = sensitivity::fd_sweep(&mesh, &cfg, &bodyforce, &scalar_source, &boundary, &objective, &e, &state, &[1e-1, 3e-2, 1e-2]).unwrap();
                let rep = sensitivity::SensitivityReport::new(format!("c{ci}"), adj_val, probes);
                println!("  {} ctrl{k}: adj={:e} fd={:e} dev={:e} spread={:e}", v.name, rep.adjoint_value, rep.probes[2].derivative, rep.max_deviation, rep.linearity_spread);
            }
        }
    }
}
