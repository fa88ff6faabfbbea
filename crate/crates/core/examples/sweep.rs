//! Runs every arm on the default synthetic task for a few seeds and prints
//! final target accuracies next to the Bayes accuracy.
//!
//! cargo run --release -p ccgan-core --example sweep -- [seeds] [steps] [residual] [decay_every]

use std::time::Instant;

use ccgan_core::ccgan::TrainConfig;
use ccgan_core::eval::{run_experiment, Arm, ExperimentConfig};
use ccgan_core::synth::{make_multisource_task, TaskSpec};

fn main() -> ccgan_core::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize| args.get(i).map(String::as_str);
    let seeds: u64 = arg(0).and_then(|s| s.parse().ok()).unwrap_or(3);
    let steps: usize = arg(1).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let residual = arg(2) == Some("residual");
    let mut base = TrainConfig { total_steps: steps, residual_generators: residual, ..TrainConfig::default() };
    if let Some(d) = arg(3).and_then(|s| s.parse().ok()) {
        base.adam.decay_every = d;
    }
    for seed in 0..seeds {
        let spec = TaskSpec { seed, ..TaskSpec::default() };
        let bayes = make_multisource_task(&spec)?.bayes_accuracy()?.value;
        print!("seed {seed} bayes {bayes:.4}");
        for arm in Arm::ALL {
            let train = TrainConfig { seed, ..base.clone() };
            let t = Instant::now();
            let out = run_experiment(&ExperimentConfig::synthetic(spec.clone(), arm, train))?;
            print!(" | {arm} {:.4} ({:.1}s)", out.summary.final_accuracy, t.elapsed().as_secs_f64());
        }
        println!();
    }
    Ok(())
}
