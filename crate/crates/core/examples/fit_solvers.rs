//! Fits one noiseless phantom with all three classical solvers and compares the
//! recovered f/R1a with the generating values.
//!
//! cargo run --release --example fit_solvers

use std::time::Instant;

use cestfit::models::ModelKind;
use cestfit::presets;
use cestfit::solvers::{fit, InitMode, SolverConfig, SolverKind};
use cestfit::synth::{generate, PhantomSpec};

fn main() -> cestfit::Result<()> {
    let spec = PhantomSpec {
        noise_sigma: 0.0,
        replicates: 1,
        ..PhantomSpec::default()
    };
    let data = generate(&spec)?;
    let phantom = 4; // 15 mM glucose, 15 mM lactate
    let truth = spec.truth(&spec.combinations()[phantom]);
    let set = &data.sets[phantom];

    let problem = presets::model_config(ModelKind::AnalyticalZ).compile()?;
    println!("fitted parameters: {:?}", problem.bounds().names);
    for solver in SolverKind::ALL {
        let t = Instant::now();
        let r = fit(&problem, set, solver, &SolverConfig::default(), InitMode::Center)?;
        let elapsed = t.elapsed();
        print!("{:<12} {:?} after {} iterations, {} evals, {:.1} ms;", solver, r.termination, r.iterations, r.function_evals, elapsed.as_secs_f64() * 1e3);
        for (i, pool) in truth.pools.iter().enumerate() {
            let got = problem.contrast(&r.params, i)?;
            print!("  pool {i}: {got:.4e} (true {:.4e})", pool.f_over_r1a);
        }
        println!();
    }
    Ok(())
}
