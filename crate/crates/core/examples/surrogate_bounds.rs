//! Evaluates the convex surrogates next to the functions they bound, at and
//! away from the expansion point.

use ehwsn::sca::{bilinear_upper, taylor_inv_lower, taylor_quad_over_lin_lower, PowerCoupling};

fn main() -> ehwsn::Result<()> {
    let x_bar = 0.4;
    println!("1/x and its lower bound around x = {x_bar}");
    for x in [0.1, 0.2, 0.4, 0.6, 0.9] {
        println!("  x = {x:.2}  exact {:8.4}  bound {:8.4}", 1.0 / x, taylor_inv_lower(x, x_bar)?);
    }

    let (xb, yb) = (0.5, 0.3);
    println!("x^2/y and its lower bound around ({xb}, {yb})");
    for (x, y) in [(0.5, 0.3), (0.2, 0.7), (0.9, 0.1)] {
        println!(
            "  ({x}, {y})  exact {:8.4}  bound {:8.4}",
            x * x / y,
            taylor_quad_over_lin_lower(x, y, xb, yb)?
        );
    }

    let (pb, ab) = (2.0, 0.25);
    println!("psi * alpha_hat and its upper bound around ({pb}, {ab})");
    for (p, a) in [(2.0, 0.25), (1.0, 0.5), (4.0, 0.1)] {
        println!("  ({p}, {a})  exact {:8.4}  bound {:8.4}", p * a, bilinear_upper(p, a, pb, ab)?);
    }

    let pc = PowerCoupling { e_over_tau: 0.2, a: 3.0 };
    println!("energy coupling right-hand side around (alpha, p_e) = (0.3, 0.5)");
    for (a, p) in [(0.3, 0.5), (0.1, 0.9), (0.6, 0.2)] {
        println!(
            "  ({a}, {p})  exact {:8.4}  surrogate {:8.4}",
            pc.rhs_exact(a, p),
            pc.rhs_surrogate(a, p, 0.3, 0.5)
        );
    }
    Ok(())
}
