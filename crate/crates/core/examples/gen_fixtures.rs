//! Regenerates the shipped fixture files.
//!
//! cargo run --example gen_fixtures [-- <dir>]

use std::path::PathBuf;

use polysemy::synth::{Fixture, FIXTURE_SEED};

fn main() -> polysemy::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures"));
    Fixture::new(FIXTURE_SEED).write_all(&dir)?;
    println!("wrote fixtures to {}", dir.display());
    Ok(())
}
