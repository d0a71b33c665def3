//! Solves a small water-filling problem with the barrier solver and prints
//! the certificate.

use ehwsn::solver::{solve, ConstraintClass, ConvexProblem, Expr, SolverOptions};

fn main() -> ehwsn::Result<()> {
    // maximize Σ log2(1 + g_i p_i)  s.t.  Σ p_i <= 2, p >= 0
    let gains = [1.0, 2.0, 4.0];
    let mut objective = Expr::new();
    for (i, &g) in gains.iter().enumerate() {
        objective = objective.log2_rate(i, g, 1.0);
    }
    let mut p = ConvexProblem::new(gains.len(), objective);
    let mut budget = Expr::constant(-2.0);
    for i in 0..gains.len() {
        budget = budget.linear(i, 1.0);
        p.bound(i, 0.0, f64::INFINITY);
    }
    p.constrain("budget", ConstraintClass::Affine, budget);

    let sol = solve(&p, &[0.1, 0.1, 0.1], &SolverOptions::default())?;
    let r = &sol.report;
    println!("status      {}", r.status.as_str());
    println!("powers      {:?}", sol.x);
    println!("objective   {:.9}", r.objective);
    println!("kkt         {:.2e}", r.kkt_residual);
    println!("newton      {} steps, {} centerings", r.iterations, r.outer_iterations);

    // water level from the closed form: p_i = max(0, ν − 1/g_i)
    let nu = (2.0 + gains.iter().map(|g| 1.0 / g).sum::<f64>()) / gains.len() as f64;
    let exact: Vec<f64> = gains.iter().map(|g| (nu - 1.0 / g).max(0.0)).collect();
    println!("closed form {exact:?}");
    Ok(())
}
