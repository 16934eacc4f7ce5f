//! Map raw critic outputs to Normal-Inverse-Gamma parameters, then inspect
//! the Student-t loss and the aleatoric/epistemic split as evidence grows.
//!
//! cargo run --example evidential_head

use eppo::evidential::{
    evl_loss, head_transform, hyperprior_log_density, nll_loss, predictive_variance,
    HyperpriorConfig,
};

fn main() -> anyhow::Result<()> {
    let cfg = HyperpriorConfig::default();
    println!(
        "{:>6} {:>8} {:>8} {:>10} {:>10} {:>9} {:>9}",
        "raw_nu", "nu", "alpha", "aleatoric", "epistemic", "nll(y=1)", "evl(y=1)"
    );
    for raw_nu in [-4.0, -1.0, 0.0, 1.0, 4.0] {
        let m = head_transform([0.0, raw_nu, 1.0, 0.0])?;
        let u = predictive_variance(&m)?;
        println!(
            "{raw_nu:>6.1} {:>8.4} {:>8.4} {:>10.4} {:>10.4} {:>9.4} {:>9.4}",
            m.nu,
            m.alpha,
            u.aleatoric,
            u.epistemic,
            nll_loss(&m, 1.0)?,
            evl_loss(&m, 1.0, &cfg)?
        );
    }

    let m = head_transform([0.0, 0.0, 0.0, 0.0])?;
    println!("\nparams at raw zeros: {m:?}");
    println!(
        "hyperprior log density: {:.5}",
        hyperprior_log_density(&m, &cfg)?
    );
    println!("NLL is smallest at y = omega:");
    for y in [-2.0, -1.0, 0.0, 1.0, 2.0] {
        println!("  y = {y:>4.1}  nll = {:.5}", nll_loss(&m, y)?);
    }
    Ok(())
}
