//! Shuffled bracket-language corpus generation.

use std::path::Path;

use anyhow::Result;
use posh_core::dyck::{generate_dyck, DyckConfig};

use crate::ioutil::write_lines;

/// `dyck`: write `n` generated strings, one per line.
pub fn generate(cfg: &DyckConfig, n: usize, seed: u64, out: &Path) -> Result<usize> {
    let strings = generate_dyck(cfg, n, seed)?;
    write_lines(out, &strings)?;
    Ok(strings.len())
}
