//! Writes a small synthetic dataset to the directory given as the first argument.
use hgrnet_core::data::{generate_synthetic, write_split, SynthConfig};

fn main() -> hgrnet_core::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "synth_preview".into());
    let classes = 10;
    for split in generate_synthetic(&SynthConfig::new([classes, 0, 0], classes, 7))? {
        write_split(std::path::Path::new(&out), &split)?;
    }
    Ok(())
}
