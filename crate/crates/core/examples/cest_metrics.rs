//! Model-free metrics (MTR, MTR_asym, MTR_Rex) of a noiseless phantom spectrum.
//!
//! cargo run --release --example cest_metrics

use cestfit::spectrum::{mtr, mtr_asym, mtr_rex, mtr_rex_lhs, Spectrum};
use cestfit::synth::{generate, PhantomSpec};

fn at(offsets: &[f64], values: &[f64], ppm: f64) -> f64 {
    let i = offsets
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - ppm).abs().total_cmp(&(b.1 - ppm).abs()))
        .map(|(i, _)| i)
        .unwrap();
    values[i]
}

fn main() -> cestfit::Result<()> {
    let spec = PhantomSpec {
        noise_sigma: 0.0,
        replicates: 1,
        ..PhantomSpec::default()
    };
    let data = generate(&spec)?;
    // Highest concentration of both solutes.
    let set = data.sets.last().unwrap();
    println!("labels {:?}", data.records.last().unwrap().labels);

    for s in set.spectra() {
        let m = mtr(s);
        let asym = mtr_asym(s)?;
        let rex = mtr_rex(s)?;
        let lhs = mtr_rex_lhs(s, &spec.field)?;
        println!("B1 {:.1} uT", s.b1());
        for ppm in [0.5, 1.2, 2.0] {
            println!(
                "  {ppm:>4} ppm  MTR {:.4}  MTR_asym {:+.5}  MTR_Rex {:+.5}  (x spillover {:+.6})",
                at(&m.offsets_ppm, &m.values, ppm),
                at(&asym.offsets_ppm, &asym.values, ppm),
                at(&rex.offsets_ppm, &rex.values, ppm),
                at(&lhs.offsets_ppm, &lhs.values, ppm),
            );
        }
    }

    // A spectrum without solutes is symmetric: both asymmetry metrics vanish.
    let water = Spectrum::new(spec.offsets_ppm.clone(), spec.offsets_ppm.iter().map(|o| o * o / (o * o + 0.5)).collect(), 1.2)?;
    let worst = mtr_asym(&water)?.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    println!("symmetric spectrum: max |MTR_asym| = {worst:e}");
    Ok(())
}
