//! Self-supervised training on MTR_Rex spectra of a small phantom set: no
//! labels, only reconstruction through the physics model.
//!
//! cargo run --release --example train_network

use cestfit::eval::regress;
use cestfit::models::ModelKind;
use cestfit::neural::{predict, train, NetworkConfig, NetworkData, Preset, TrainConfig};
use cestfit::presets;
use cestfit::synth::{generate, PhantomSpec};

fn main() -> cestfit::Result<()> {
    let spec = PhantomSpec {
        replicates: 8,
        ..PhantomSpec::default()
    };
    let d = generate(&spec)?;
    let problem = presets::model_config(ModelKind::MtrRex).compile()?;
    let sets: Vec<_> = d.sets.iter().map(|s| s.unlabeled()).collect();
    let data = NetworkData::from_sets(&problem, &sets)?;

    let net = NetworkConfig::preset(Preset::Desk, data.tokens(), data.channels(), problem.bounds().len());
    let cfg = TrainConfig {
        epochs: 40,
        folds: 3,
        ..TrainConfig::desk()
    };
    println!(
        "{} sets, {} tokens x {} channels -> {} outputs; {} epochs, {} folds",
        data.len(),
        data.tokens(),
        data.channels(),
        net.outputs,
        cfg.epochs,
        cfg.folds
    );

    let folds = train(&data, &problem, &net, &cfg)?;
    for f in &folds {
        let first = &f.history[0];
        let last = f.history.last().unwrap();
        println!(
            "fold {}: train {:.3e} -> {:.3e}, held-out {:.3e} -> {:.3e}",
            f.fold, first.train_loss, last.train_loss, first.val_loss, last.val_loss
        );
    }

    // Held-out contrast against the concentrations the network never saw.
    let f = &folds[0];
    let p = predict(&f.state, &problem, &data)?;
    for (i, solute) in spec.solutes.iter().enumerate() {
        let x: Vec<f64> = f.held_out.iter().map(|&j| d.records[j].labels[&solute.name]).collect();
        let y = f
            .held_out
            .iter()
            .map(|&j| problem.contrast(&p.params[j], i))
            .collect::<cestfit::Result<Vec<f64>>>()?;
        let (slope, r2) = regress(&x, &y)?;
        println!("{:<8} f/R1a vs mM on fold 0: slope {slope:.3e} (true {:.3e}), R^2 {r2:.3}", solute.name, solute.scale);
    }
    Ok(())
}
