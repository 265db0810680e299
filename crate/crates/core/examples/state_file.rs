//! Write a construction to a state file, read it back and certify the copy.
//!
//! ```text
//! cargo run --release --example state_file -- 2 128
//! ```

use sector_hilbert::cli::{read_state, write_state};
use sector_hilbert::construction::{build, certify, default_kernel, BuildOptions};
use sector_hilbert::experiment::uniform_directions;
use sector_hilbert::grid::make_grid;

fn main() -> sector_hilbert::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let m = args.first().copied().unwrap_or(2) as u32;
    let grid = make_grid(args.get(1).copied().unwrap_or(128))?;
    let state = build(&uniform_directions(1 << m)?, &grid, &BuildOptions::default(), &default_kernel())?;
    let dir = std::env::temp_dir().join("sector-hilbert-example");
    std::fs::create_dir_all(&dir).map_err(|e| sector_hilbert::Error::Io { path: dir.clone(), source: e })?;
    let path = dir.join("state.txt");
    write_state(&path, &state)?;
    let size = std::fs::metadata(&path).map(|m| m.len()).unwrap_or(0);
    println!("wrote {} ({size} bytes)", path.display());
    let back = read_state(&path)?;
    let same = certify(&state) == certify(&back);
    println!("{} nodes read back; certificates identical: {same}", back.nodes.len());
    Ok(())
}
