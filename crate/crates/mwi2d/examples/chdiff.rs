use mwi2d::adjoint::{
    adjoint_momentum_source, adjoint_source_reconstruct, AdjointProblem, AdjointState, MwiMode,
};
use mwi2d::cases;
use mwi2d::primal::{PrimalProblem, PrimalState};
use mwi2d::sensitivity;

fn main() {
    let ch = cases::channel_case();
    let mesh = &ch.case.mesh;
    let problem = PrimalProblem::new(mesh, ch.case.cfg.clone(), ch.case.bodyforce.clone(), ch.case.scalar_source.clone(), ch.case.boundary.clone()).unwrap();
    let mut state = PrimalState::new(mesh);
    state.sync_faces(mesh, ch.case.cfg.rho, &ch.case.boundary);
    problem.run(&mut state, |_, _| {}).unwrap();

    let mut results = vec![];
    for mode in [MwiMode::E1, MwiMode::E2, MwiMode::E3] {
        let p = AdjointProblem::new(mesh, ch.case.cfg.clone(), mode, ch.objective.clone(), &state, &ch.case.boundary).unwrap();
        let mut adj = AdjointState::new(mesh);
        let mut hist = vec![];
        p.run(&mut adj, |_, r| hist.push(r.v_total())).unwrap();
        let q_hat = adjoint_momentum_source(&adj, &p.frozen, mesh, ch.case.cfg.rho);
        let qmax = q_hat.iter().map(|q| q.norm()).fold(0.0, f64::max);
        if let Some(r) = adjoint_source_reconstruct(&q_hat, mesh, mode) {
            let mism = mesh.interior_faces().map(|(fi, _)| (r.c1_face[fi] - r.c2_face[fi]).norm()).fold(0.0, f64::max);
            println!("{mode:?}: max|q_hat| = {qmax:e}, max|c1_face - c2_face| = {mism:e}");
        } else {
            println!("{mode:?}: max|q_hat| = {qmax:e} (no reconstruction)");
        }
        println!("  hist[100..=112] = {:?}", &hist[100..=112].iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>());
        println!("  cross = {:?}", sensitivity::sustained_crossing(&hist, 1e-8));
        results.push((mode, adj, hist));
    }
    for pair in [(0usize, 1usize), (1, 2)] {
        let (m1, a1, _) = &results[pair.0];
        let (m2, a2, _) = &results[pair.1];
        let dv = a1.v.iter().zip(a2.v.iter()).map(|(x, y)| (*x - *y).norm()).fold(0.0, f64::max);
        let vmax = a1.v.iter().map(|v| v.norm()).fold(0.0, f64::max);
        println!("max|v({m1:?}) - v({m2:?})| = {dv:e}  (max|v| = {vmax:e})");
    }
}
