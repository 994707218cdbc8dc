//! Recovering known simplex weights: the focal unit is 0.3·D0 + 0.7·D1 before
//! adoption, so the synthetic control should find exactly those weights.

use policy_eval::estimators::{scm_effects, scm_fit};
use policy_eval::fixtures;
use policy_eval::simplex::{solve_simplex_ls, SimplexLsProblem};

fn main() -> policy_eval::Result<()> {
    let f = fixtures::exact_convex(1, 4.0);
    let frame = f.frame()?;
    let w = scm_fit(&frame, "focal", false)?;
    for (donor, weight) in w.iter() {
        println!("{donor:>3} {weight:.6}");
    }
    println!("iterations {} converged {}", w.iterations_used, w.converged);
    let s = scm_effects(&frame, "focal", &w)?;
    println!("pre RMSPE {:.2e}", s.rmspe.unwrap());
    for (k, v) in s.post() {
        println!("k={k} effect {v:.6} (true {})", f.effect);
    }

    // The solver also works on bare matrices.
    let fit = solve_simplex_ls(&SimplexLsProblem::new(
        vec![1.0, 2.0, 3.0],
        vec![vec![0.0, 0.0, 0.0], vec![2.0, 4.0, 6.0]],
    )?);
    println!("\nmidpoint problem: weights {:?}, objective {:.2e}", fit.weights, fit.objective);
    Ok(())
}
