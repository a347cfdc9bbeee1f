//! The command-line workflow end to end, driven in-process:
//! synth -> preprocess -> fit -> eval.
//!
//! cargo run --release --example cli_pipeline [-- WORK_DIR]

use std::path::Path;

use cestfit::cli::run_from;

fn step(args: &[&str]) {
    println!("$ cestfit {}", args.join(" "));
    let code = run_from(std::iter::once("cestfit").chain(args.iter().copied()));
    assert_eq!(code, 0, "cestfit {} failed", args[0]);
}

fn main() {
    let work = std::env::args().nth(1).unwrap_or_else(|| "target/pipeline".into());
    let dir = Path::new(&work);
    let p = |name: &str| dir.join(name).to_string_lossy().into_owned();

    step(&["synth", "--out", &p("raw"), "--replicates", "5", "--b0-shift", "0.15", "--b0-jitter", "0.05"]);
    step(&["preprocess", &p("raw"), "--out", &p("corrected")]);
    step(&["fit", &p("corrected"), "--model", "mtrrex", "--solver", "lbfgsb", "--out", &p("fits")]);
    step(&["eval", &p("corrected"), "--fits", &p("fits/fits.json"), "--svg", "--out", &p("report")]);
}
