//! Per-datapoint runtime of the classical solvers against batched network
//! inference on the analytical Z model.
//!
//! cargo run --release --example benchmark

use cestfit::cli::fit_dataset;
use cestfit::eval::{runtime_bench, BENCH_REPEATS, BENCH_WARMUPS};
use cestfit::io::Dataset;
use cestfit::models::ModelKind;
use cestfit::neural::{infer, NetworkConfig, NetworkData, NetworkState, Preset};
use cestfit::presets;
use cestfit::solvers::{InitMode, SolverConfig, SolverKind};
use cestfit::synth::{generate, PhantomSpec};

fn main() -> cestfit::Result<()> {
    let spec = PhantomSpec {
        replicates: 4,
        ..PhantomSpec::default()
    };
    let d = generate(&spec)?;
    let data = Dataset {
        field: spec.field,
        names: d.records.iter().map(|r| r.id.clone()).collect(),
        sets: d.sets,
    };
    let problem = presets::model_config(ModelKind::AnalyticalZ).compile()?;
    let n = data.len();

    for solver in SolverKind::ALL {
        let s = runtime_bench(
            || {
                std::hint::black_box(fit_dataset(&problem, &data, solver, &SolverConfig::default(), InitMode::Center, 1));
            },
            n,
            BENCH_REPEATS,
            BENCH_WARMUPS,
        )?;
        println!("{:<12} {:>9.3} ± {:.3} ms per spectrum set", solver, s.mean_ms, s.std_ms);
    }

    let net_data = NetworkData::from_sets(&problem, &data.sets)?;
    let net = NetworkConfig::preset(Preset::Desk, net_data.tokens(), net_data.channels(), problem.bounds().len());
    let state = NetworkState::init(net, 0)?;
    let s = runtime_bench(
        || {
            std::hint::black_box(infer(&state, &problem, &net_data).unwrap());
        },
        n,
        BENCH_REPEATS,
        BENCH_WARMUPS,
    )?;
    println!("{:<12} {:>9.3} ± {:.3} ms per spectrum set ({} weights)", "network", s.mean_ms, s.std_ms, state.parameter_count());
    Ok(())
}
