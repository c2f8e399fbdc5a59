use mwi2d::adjoint::{AdjointProblem, AdjointSourceModel, AdjointState, MwiMode, Objective, ObjectiveKind};
use mwi2d::bc::{Boundary, ScalBc, VelBc};
use mwi2d::fields::CellField;
use mwi2d::geom::Vec2;
use mwi2d::mesh::build_structured_mesh;
use mwi2d::primal::{BodyForceModel, PrimalProblem, PrimalState, SolverConfig, SourceConcept};
use mwi2d::sensitivity;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let stretch = (args[1].parse::<f64>().unwrap(), args[2].parse::<f64>().unwrap());
    let buoy: f64 = args[3].parse().unwrap();
    let famp: f64 = args[4].parse().unwrap();
    let mu: f64 = args[5].parse().unwrap();
    let amp: f64 = args[6].parse().unwrap();
    let mu_phi: f64 = args[7].parse().unwrap();
    let width_sq: f64 = args[8].parse().unwrap();
    let region_x: f64 = args[9].parse().unwrap();

    let mesh = build_structured_mesh(48, 24, [0.0, 3.0, 0.0, 1.0], stretch, 0.0).unwrap();
    let mut boundary = Boundary::new(&mesh);
    for name in ["south", "north", "west", "east"] {
        boundary.set_patch(&mesh, name, |_| VelBc::Fixed(Vec2::ZERO), ScalBc::ZeroGradient, |_| ScalBc::Fixed(0.0)).unwrap();
    }
    let q = CellField(mesh.cells.iter().map(|c| {
        let (x, y) = (c.centroid.x / 3.0, c.centroid.y);
        Vec2::new(famp * (std::f64::consts::PI * x).sin() * (2.0 * std::f64::consts::PI * y).cos(),
                  -famp * (std::f64::consts::PI * y).sin() * (2.0 * std::f64::consts::PI * x).cos())
    }).collect());
    let scalar_source = CellField(mesh.cells.iter().map(|c| {
        let r2 = (c.centroid - Vec2::new(0.8, 0.5)).norm_sq();
        amp * (-r2 / width_sq).exp()
    }).collect());
    let cfg = SolverConfig {
        mu, mu_phi, convection_blend: 1.0, solve_scalar: true,
        omega_v: 0.7,
        tol_v: 1e-12, tol_p: 1e-12, tol_phi: 1e-12, lin_tol: 1e-13, max_outer: 20000,
        ..SolverConfig::default()
    };
    let dq = if buoy != 0.0 { Some(Vec2::new(0.0, buoy)) } else { None };
    let bodyforce = BodyForceModel { q, concept: SourceConcept::C1, dq_dphi: dq };
    let problem = PrimalProblem::new(&mesh, cfg.clone(), bodyforce.clone(), scalar_source.clone(), boundary.clone()).unwrap();
    let mut state = PrimalState::new(&mesh);
    state.sync_faces(&mesh, 1.0, &boundary);
    let (it, _, conv) = problem.run(&mut state, |_, _| {}).unwrap();
    println!("primal it={it} conv={conv}");

    let mut weight = CellField::zeros(&mesh);
    for ci in 0..mesh.n_cells() {
        if mesh.cells[ci].centroid.x > region_x { weight[ci] = 1.0; }
    }
    let objective = Objective::volume_only(ObjectiveKind::ScalarMismatch { target: 0.0 }, weight);
    let sources = AdjointSourceModel { dq_dphi: dq, ..Default::default() };
    let p = AdjointProblem::with_sources(&mesh, cfg.clone(), MwiMode::E3, objective.clone(), sources, &state, &boundary).unwrap();
    let mut adj = AdjointState::new(&mesh);
    p.run(&mut adj, |_, _| {}).unwrap();

    let xs = [0.4, 0.7, 1.0, 1.3, 1.6, 2.0];
    let ys = [0.25, 0.5, 0.75];
    for (i, &x) in xs.iter().enumerate() {
        for (j, &y) in ys.iter().enumerate() {
            let target = Vec2::new(x, y);
            let ci = mesh.cells.iter().enumerate().min_by(|a, b| (a.1.centroid - target).norm().total_cmp(&(b.1.centroid - target).norm())).unwrap().0;
            let dir = if (i + j) % 2 == 0 { Vec2::new(1.0, 0.0) } else { Vec2::new(0.0, 1.0) };
            let mut e = CellField::zeros(&mesh);
            e[ci] = dir;
            let adj_val = sensitivity::volumetric_sensitivity(&adj, &e, &mesh).unwrap();
            let probes = sensitivity::fd_sweep(&mesh, &cfg, &bodyforce, &scalar_source, &boundary, &objective, &e, &state, &[1e-1, 3e-2, 1e-2]).unwrap();
            let rep = sensitivity::SensitivityReport::new(format!("c{ci}"), adj_val, probes);
            println!("({x},{y}) dir={} adj={:+.6e} fd={:+.6e} dev={:.3e} spread={:.2e}",
                if dir.x == 1.0 { "x" } else { "y" }, rep.adjoint_value, rep.probes[2].derivative, rep.max_deviation, rep.linearity_spread);
        }
    }
}
