use std::collections::BTreeMap;

use cestfit::cli::{evaluate_table, fit_dataset};
use cestfit::eval::{ContrastMode, StdKind};
use cestfit::io::{self, Dataset, FitRow, FitTable};
use cestfit::models::ModelKind;
use cestfit::neural::{fold_assignment, predict, train, NetworkConfig, NetworkData, Preset, TrainConfig};
use cestfit::presets;
use cestfit::solvers::{InitMode, SolverConfig, SolverKind};
use cestfit::spectrum::{Spectrum, SpectrumSet};
use cestfit::synth::{generate, linspace, PhantomSpec, SynthDataset};

fn small_spec(replicates: usize) -> PhantomSpec {
    PhantomSpec {
        replicates,
        ..PhantomSpec::default()
    }
}

fn as_dataset(spec: &PhantomSpec, d: &SynthDataset) -> Dataset {
    Dataset {
        field: spec.field,
        names: d.records.iter().map(|r| r.id.clone()).collect(),
        sets: d.sets.clone(),
    }
}

fn labels(d: &SynthDataset) -> Vec<BTreeMap<String, f64>> {
    d.records.iter().map(|r| r.labels.clone()).collect()
}

#[test]
fn dataset_round_trip_is_lossless() {
    let spec = small_spec(2);
    let d = generate(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    io::write_synth(dir.path(), &spec, &d).unwrap();

    let back = io::read_dataset(dir.path()).unwrap();
    assert_eq!(back.names, as_dataset(&spec, &d).names);
    for (a, b) in back.sets.iter().zip(&d.sets) {
        for (sa, sb) in a.spectra().iter().zip(b.spectra()) {
            assert_eq!(sa.b1(), sb.b1());
            assert_eq!(sa.offsets_ppm(), sb.offsets_ppm());
            assert_eq!(sa.z(), sb.z());
        }
    }
    let manifest = io::read_manifest(dir.path()).unwrap();
    assert_eq!(manifest.spec, spec);
    assert_eq!(manifest.phantoms, d.records);
}

#[test]
fn same_seed_same_manifest_and_data() {
    let spec = small_spec(2);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    io::write_synth(a.path(), &spec, &generate(&spec).unwrap()).unwrap();
    io::write_synth(b.path(), &spec, &generate(&spec).unwrap()).unwrap();
    let read = |dir: &std::path::Path, rel: &str| std::fs::read(dir.join(rel)).unwrap();
    assert_eq!(read(a.path(), io::MANIFEST_FILE), read(b.path(), io::MANIFEST_FILE));
    let first = io::read_manifest(a.path()).unwrap().phantoms[0].id.clone();
    assert_eq!(read(a.path(), &format!("{first}/b1_0.csv")), read(b.path(), &format!("{first}/b1_0.csv")));

    let other = PhantomSpec { seed: 1, ..spec.clone() };
    assert_ne!(generate(&other).unwrap().sets, generate(&spec).unwrap().sets);
}

#[test]
fn desk_training_reduces_loss() {
    let spec = small_spec(6);
    let d = generate(&spec).unwrap();
    let problem = presets::model_config(ModelKind::MtrRex).compile().unwrap();
    let sets: Vec<_> = d.sets.iter().take(50).map(|s| s.unlabeled()).collect();
    let data = NetworkData::from_sets(&problem, &sets).unwrap();
    let net = NetworkConfig::preset(Preset::Desk, data.tokens(), data.channels(), problem.bounds().len());
    let cfg = TrainConfig {
        epochs: 30,
        folds: 2,
        ..TrainConfig::desk()
    };
    let folds = train(&data, &problem, &net, &cfg).unwrap();
    assert_eq!(folds.len(), 2);
    for f in &folds {
        assert_eq!(f.history.len(), 30);
        let (first, last) = (&f.history[0], f.history.last().unwrap());
        assert!(last.train_loss < first.train_loss, "fold {}: {first:?} -> {last:?}", f.fold);
        assert!(last.val_loss < first.val_loss, "fold {}: {first:?} -> {last:?}", f.fold);
        assert_eq!(f.bound_violations, 0);
        let p = predict(&f.state, &problem, &data).unwrap();
        assert!(p.params.iter().all(|x| problem.bounds().contains(x, 0.0)));
    }
}

#[test]
fn perfect_predictions_score_one() {
    let spec = small_spec(3);
    let d = generate(&spec).unwrap();
    let problem = presets::model_config(ModelKind::AnalyticalZ).compile().unwrap();
    let combos = spec.combinations();
    let rows = d
        .records
        .iter()
        .map(|r| {
            let truth = spec.truth(&combos[r.phantom]);
            let full = ModelKind::AnalyticalZ
                .flatten(&cestfit::models::ModelParams::Exchange(truth))
                .unwrap();
            let fitted: Vec<f64> = (0..full.len())
                .filter(|&i| problem.fitted_position(i).is_some())
                .map(|i| full[i])
                .collect();
            FitRow {
                id: r.id.clone(),
                params: fitted,
                objective_value: 0.0,
                iterations: 0,
                function_evals: 0,
                converged: true,
                termination: None,
                gradient: None,
                error: None,
            }
        })
        .collect();
    let table = FitTable {
        model: ModelKind::AnalyticalZ,
        method: "truth".into(),
        param_names: problem.bounds().names.clone(),
        rows,
    };
    let folds = fold_assignment(d.sets.len(), 5, 0).unwrap();
    let (report, _) =
        evaluate_table(&problem, &table, &labels(&d), &folds, None, ContrastMode::Amplitude, StdKind::Sample).unwrap();
    assert_eq!(report.solutes.len(), 2);
    for s in &report.solutes {
        assert!((s.r2_mean - 1.0).abs() < 1e-12, "{s:?}");
        assert!(s.r2_std < 1e-12);
        let scale = spec.solutes.iter().find(|t| t.name == s.solute).unwrap().scale;
        assert!((s.slope - scale).abs() < 1e-12 * scale);
    }
    assert!(report.excluded.is_empty());
}

#[test]
fn classical_fit_then_eval() {
    let spec = small_spec(2);
    let d = generate(&spec).unwrap();
    let data = as_dataset(&spec, &d);
    let problem = presets::model_config(ModelKind::MtrRex).compile().unwrap();
    let rows = fit_dataset(&problem, &data, SolverKind::Lbfgsb, &SolverConfig::default(), InitMode::Center, 2);
    // Threaded fitting keeps input order.
    assert_eq!(rows.iter().map(|r| r.id.clone()).collect::<Vec<_>>(), data.names);
    assert!(rows.iter().all(|r| r.error.is_none()));
    let table = FitTable {
        model: problem.kind(),
        method: "lbfgsb".into(),
        param_names: problem.bounds().names.clone(),
        rows,
    };
    let folds = fold_assignment(data.len(), 3, 0).unwrap();
    let (report, points) =
        evaluate_table(&problem, &table, &labels(&d), &folds, None, ContrastMode::Amplitude, StdKind::Sample).unwrap();
    assert_eq!(points.len(), 2);
    for s in &report.solutes {
        assert_eq!(s.r2_folds.len(), 3);
        assert!(s.r2_mean > 0.8, "{s:?}");
    }
}

#[test]
fn mtr_rex_without_negative_offsets_fails_per_row() {
    let positive = linspace(0.0, 5.0, 65);
    let z: Vec<f64> = positive.iter().map(|o| o * o / (o * o + 1.0)).collect();
    let bad = SpectrumSet::new(vec![Spectrum::new(positive, z, 1.2).unwrap()], None).unwrap();
    let d = generate(&small_spec(1)).unwrap();
    let data = Dataset {
        field: Default::default(),
        names: vec!["good".into(), "bad".into()],
        sets: vec![d.sets[0].clone(), bad],
    };
    let problem = presets::model_config(ModelKind::MtrRex).compile().unwrap();
    let rows = fit_dataset(&problem, &data, SolverKind::Lbfgsb, &SolverConfig::default(), InitMode::Center, 1);
    assert!(rows[0].error.is_none());
    let err = rows[1].error.as_deref().unwrap();
    assert!(err.contains("grid mismatch"), "{err}");
    assert!(!rows[1].converged);
}

#[test]
fn fit_table_survives_failed_rows() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fits.json");
    let table = FitTable {
        model: ModelKind::MtrRex,
        method: "lbfgsb".into(),
        param_names: vec!["a".into()],
        rows: vec![FitRow::failed("x", &cestfit::CestError::EdgeMinimum)],
    };
    table.save(&path).unwrap();
    let back = FitTable::load(&path).unwrap();
    assert!(back.rows[0].objective_value.is_nan());
    assert_eq!(back.rows[0].error, table.rows[0].error);
}
