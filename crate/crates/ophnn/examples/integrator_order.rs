//! Empirical convergence order of the explicit integrators on the
//! oscillator's right-hand side: the fitted slope of log(one-step error)
//! against log(step size) estimates the local order (classical order + 1).
//!
//! ```bash
//! cargo run --release --example integrator_order
//! ```

use ophnn::datagen::{msd_rhs, MsdConfig};
use ophnn::integrator::{empirical_order, IntegratorScheme, OrderEstimate};

fn main() -> ophnn::Result<()> {
    let cfg = MsdConfig::default();
    let f = |x: &[f64], u: &[f64]| msd_rhs(&cfg, x, u[0]);
    let x0 = [0.5, -0.3, 0.8, 0.2];
    let u = [0.7];
    let ts_list = [0.4, 0.2, 0.1, 0.05, 0.025];

    println!("one-step error decay on the two-mass oscillator:");
    for scheme in [IntegratorScheme::euler(), IntegratorScheme::rk4()] {
        match empirical_order(&scheme, f, &ts_list, &x0, &u)? {
            OrderEstimate::Slope(slope) => println!(
                "  {:6}  classical order {}  fitted local order {:.3}",
                scheme.name(),
                scheme.order(),
                slope
            ),
            OrderEstimate::Exact => println!("  {:6}  exact on this field", scheme.name()),
        }
    }

    // a zero field is integrated exactly: the sentinel case
    let zero = empirical_order(
        &IntegratorScheme::rk4(),
        |x, _| vec![0.0; x.len()],
        &ts_list,
        &x0,
        &u,
    )?;
    println!("  zero field reports {:?}", zero);
    Ok(())
}
