//! Cross-validated zero-intercept R^2 of fitted contrast against concentration,
//! as a results table plus one scatter plot per solute.
//!
//! cargo run --release --example evaluate [-- OUT_DIR]

use std::collections::BTreeMap;

use cestfit::cli::{evaluate_table, fit_dataset};
use cestfit::eval::{format_r2_table, scatter_svg, ContrastMode, StdKind};
use cestfit::io::{Dataset, FitTable};
use cestfit::models::ModelKind;
use cestfit::neural::fold_assignment;
use cestfit::presets;
use cestfit::solvers::{InitMode, SolverConfig, SolverKind};
use cestfit::synth::{generate, PhantomSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "target/evaluate".into());
    let spec = PhantomSpec {
        replicates: 5,
        ..PhantomSpec::default()
    };
    let d = generate(&spec)?;
    let data = Dataset {
        field: spec.field,
        names: d.records.iter().map(|r| r.id.clone()).collect(),
        sets: d.sets.clone(),
    };
    let labels: Vec<BTreeMap<String, f64>> = d.records.iter().map(|r| r.labels.clone()).collect();
    let folds = fold_assignment(data.len(), 5, 0)?;

    let mut reports = Vec::new();
    for kind in [ModelKind::AnalyticalZ, ModelKind::MtrRex] {
        let problem = presets::model_config(kind).compile()?;
        let table = FitTable {
            model: kind,
            method: SolverKind::Lbfgsb.name().into(),
            param_names: problem.bounds().names.clone(),
            rows: fit_dataset(&problem, &data, SolverKind::Lbfgsb, &SolverConfig::default(), InitMode::Center, 1),
        };
        let (report, points) =
            evaluate_table(&problem, &table, &labels, &folds, None, ContrastMode::Amplitude, StdKind::Sample)?;
        for (solute, x, y) in &points {
            let path = std::path::Path::new(&out).join(format!("{}_{solute}.svg", kind.name()));
            std::fs::create_dir_all(&out)?;
            std::fs::write(&path, scatter_svg(&format!("{kind} / {solute}"), x, y)?)?;
        }
        reports.push(report);
    }
    print!("{}", format_r2_table(&reports));
    println!("scatter plots -> {out}");
    Ok(())
}
