//! Model/bounds JSON: start from a preset, narrow a bound, fix a parameter and
//! round-trip the document.
//!
//! cargo run --release --example model_config

use cestfit::models::{ModelConfig, ModelKind, ParamSetting};
use cestfit::presets;

fn main() -> cestfit::Result<()> {
    let mut cfg = presets::model_config(ModelKind::AnalyticalZ);
    // Narrower exchange-rate window for glucose.
    cfg.pools[0].params.insert("k".into(), ParamSetting::fitted(1500.0, 2500.0));
    // Lactate transverse relaxation held fixed.
    cfg.pools[1].params.insert("r2".into(), ParamSetting::fixed(20.0));

    let text = cfg.to_json()?;
    println!("{text}");
    let back = ModelConfig::from_json(&text)?;
    assert_eq!(back.to_json()?, text);

    let problem = back.compile()?;
    let b = problem.bounds();
    println!("{} fitted parameters:", b.len());
    for ((name, lo), hi) in b.names.iter().zip(b.lower()).zip(b.upper()) {
        println!("  {name:<14} [{lo}, {hi}]");
    }
    Ok(())
}
