use mwi2d::cases;
use mwi2d::primal::{MwiVariant, PrimalProblem, PrimalState};

fn main() {
    for &(variant, quad, omega_p) in &[
        (MwiVariant::RelaxationConsistent, true, 0.3),
        (MwiVariant::Classical, true, 0.3),
        (MwiVariant::RelaxationConsistent, false, 0.3),
        (MwiVariant::Classical, false, 0.3),
        (MwiVariant::RelaxationConsistent, true, 0.15),
    ] {
    println!("variant {variant:?} quad {quad} omega_p {omega_p}");
    for &omega_v in &[1.0] {
        for &dt in &[1.0, f64::INFINITY] {
            let mut case = cases::poiseuille(12, 10, omega_v, dt, variant);
            case.cfg.quad_wall_correction = quad;
            case.cfg.omega_p = omega_p;
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
            let mut hist = vec![];
            let r = problem.run(&mut state, |_, rr| hist.push(rr.v_total()));
            match r {
                Ok((it, rr, conv)) => println!(
                    "w{omega_v} dt{dt}: it={it} conv={conv} final={:.3e}",
                    rr.v_total()
                ),
                Err(e) => {
                    println!("w{omega_v} dt{dt}: ERR {e}");

                }
            }
        }
    }
    }
}
