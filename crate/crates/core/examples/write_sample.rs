//! Regenerates `data/sample.csv`.
//!
//! ```text
//! cargo run -p meltpoolnet --example write_sample
//! ```

use meltpoolnet::materials::Registry;
use meltpoolnet::synthetic::{generate, sample_config};

fn main() -> meltpoolnet::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/sample.csv");
    let ds = generate(&sample_config(), &Registry::bundled())?;
    let file = std::fs::File::create(path).map_err(|e| meltpoolnet::Error::Io {
        path: path.into(),
        source: e,
    })?;
    ds.write_csv(file)?;
    println!("wrote {} rows to {path}", ds.len());
    Ok(())
}
