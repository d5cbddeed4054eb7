//! The selective scan on its own, then a full model run both ways:
//! parallel over the sequence, and one recurrent step at a time.

use ssm_tracegen::model::{discretize, selective_scan, ModelConfig, ModelParameters, ScanInputs};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // One channel, one state. With A = 0 the state is a running sum.
    let u = [1.0, 2.0, 3.0, 4.0];
    let delta = [1.0; 4];
    let ones = [1.0; 4];
    let y = selective_scan(&ScanInputs {
        u: &u,
        delta: &delta,
        a: &[0.0],
        b: &ones,
        c: &ones,
        d: &[0.0],
    });
    println!("A = 0 scan: {y:?}");

    let (a_bar, b_bar) = discretize(0.1, -1.0, 1.0);
    println!("discretize(Δ=0.1, A=-1, B=1) = ({a_bar:.6}, {b_bar:.6})");

    let cfg = ModelConfig::new(16, 2, 8, 267, 64).with_seed(5);
    let params = ModelParameters::init(&cfg)?;
    println!("model: {} parameters", cfg.parameter_count());
    let tokens = [257u16, 69, 0, 0, 60, 256, 1, 2, 3];
    let logits = params.forward(&tokens)?;
    let mut state = params.start_state();
    let mut worst: f64 = 0.0;
    for (t, &tok) in tokens.iter().enumerate() {
        let step = params.step(&mut state, tok)?;
        for (a, b) in step.iter().zip(logits.row(t)) {
            worst = worst.max((a - b).abs());
        }
    }
    println!("forward vs step: max |difference| = {worst:.2e}");
    Ok(())
}
