//! Generates a synthetic floor and writes it in the dataset CSV layout.
//!
//! `cargo run --example radio_map -- [out_dir] [seed]`

use dnl::synth::{generate, write_radio_map, RadioMapConfig};

fn main() -> dnl::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().unwrap_or_else(|| "radio_map".into());
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(42);

    let cfg = RadioMapConfig { seed, ..Default::default() };
    let map = generate(&cfg)?;
    let heard: usize = map.fingerprints.iter().map(|f| f.observations.len()).sum();
    println!(
        "{} fingerprints, {} WAPs, {:.1} WAPs heard per scan on average",
        map.fingerprints.len(),
        map.waps.len(),
        heard as f64 / map.fingerprints.len() as f64
    );
    for d in [1.0, 10.0, 30.0, 60.0] {
        println!("mean RSS at {d:>4} m: {:.1} dBm", cfg.mean_rss(d));
    }
    write_radio_map(&map, &out)?;
    println!("written to {out}/");
    Ok(())
}
