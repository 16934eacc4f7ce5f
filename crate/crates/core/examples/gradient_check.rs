//! Compare reverse-mode gradients of a layer-normalized MLP with central
//! finite differences, then take a few clipped Adam steps on a regression.
//!
//! cargo run --example gradient_check

use eppo::diffnet::{clip_global_norm, Adam, Mlp, MlpSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> anyhow::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let net = Mlp::new(MlpSpec::new(4, &[32, 32], 2))?;
    let mut params = net.init_params(&mut rng, 1.0);
    let x: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
    let target = [0.5, -0.25];

    let loss = |p: &[f64]| -> f64 {
        let out = net.forward(p, &x).expect("shapes match");
        out.iter()
            .zip(&target)
            .map(|(o, t)| 0.5 * (o - t) * (o - t))
            .sum()
    };
    let out = net.forward(&params, &x)?;
    let cot: Vec<f64> = out.iter().zip(&target).map(|(o, t)| o - t).collect();
    let (grads, _) = net.backward(&params, &x, &cot)?;

    let h = 1e-6;
    let mut worst = 0.0f64;
    let mut probe = params.0.clone();
    for i in 0..probe.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let up = loss(&probe);
        probe[i] = orig - h;
        let down = loss(&probe);
        probe[i] = orig;
        let fd = (up - down) / (2.0 * h);
        worst = worst.max((fd - grads[i]).abs() / fd.abs().max(grads[i].abs()).max(1e-6));
    }
    println!(
        "{} parameters, worst relative gradient error {worst:.2e}",
        net.num_params()
    );

    let mut adam = Adam::new(net.num_params(), 1e-2);
    for step in 0..=100 {
        let out = net.forward(&params, &x)?;
        let cot: Vec<f64> = out.iter().zip(&target).map(|(o, t)| o - t).collect();
        let (mut g, _) = net.backward(&params, &x, &cot)?;
        let norm = clip_global_norm(&mut g, 0.5)?;
        adam.step(&mut params, &g)?;
        if step % 25 == 0 {
            println!(
                "step {step:>3}  loss {:.6}  grad norm {norm:.4}",
                loss(&params)
            );
        }
    }
    Ok(())
}
