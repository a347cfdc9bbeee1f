//! Generates a small synthetic phantom dataset and writes it to disk.
//!
//! cargo run --release --example synth_phantoms [-- OUT_DIR]

use cestfit::io;
use cestfit::synth::{generate, PhantomSpec};

fn main() -> cestfit::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "target/phantoms".into());
    let spec = PhantomSpec {
        replicates: 4,
        ..PhantomSpec::default()
    };
    let data = generate(&spec)?;

    println!(
        "{} sets = {} phantoms x {} replicates, {} B1 levels x {} offsets, noise sigma {}",
        data.sets.len(),
        spec.combinations().len(),
        spec.replicates,
        spec.b1.len(),
        spec.offsets_ppm.len(),
        spec.noise_sigma
    );
    for solute in &spec.solutes {
        println!(
            "  {:<8} {:.2} ppm  k {:>6} s^-1  f/R1a per mM {:.2e}  concentrations {:?}",
            solute.name, solute.d_omega_ppm, solute.k, solute.scale, solute.concentrations
        );
    }
    let first = &data.sets[0];
    let dip = first.spectra()[0].z().iter().cloned().fold(f64::INFINITY, f64::min);
    println!("{}: labels {:?}, water dip {dip:.3}", data.records[0].id, data.records[0].labels);

    io::write_synth(out.as_ref(), &spec, &data)?;
    println!("-> {out}");
    Ok(())
}
