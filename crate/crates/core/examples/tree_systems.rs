//! Tree indexing, the sorting permutation, and the one-third bound on a
//! seeded tree-system.
//!
//! ```text
//! cargo run --example tree_systems -- 4
//! ```

use sector_hilbert::grid::make_grid;
use sector_hilbert::tree::{
    haar_system, maximal_partial_sum, random_tree_system, sorting_permutation, split_index, tree_size,
    verify_tree_system, TreeIndex,
};

fn main() -> sector_hilbert::Result<()> {
    let m: u32 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(4);
    for n in 1..=tree_size(m.min(3)) {
        let i = TreeIndex::new(n)?;
        println!("n = {n}: level {}, position {}, tag {}", i.level(), i.position(), i.tag());
    }
    let sigma = sorting_permutation(m)?;
    println!("sigma({m}) = {:?}", sigma.as_slice());

    let grid = make_grid(64)?;
    let haar = haar_system(&grid, m)?;
    println!("haar system verifies: {}", verify_tree_system(&haar, 0.0).pass());

    let t = random_tree_system(&grid, m, 4, 11)?;
    let best = maximal_partial_sum(t.fields(), &sigma)?;
    let mut worst = f64::INFINITY;
    for i in 0..grid.len() {
        let total: f64 = t.fields().iter().map(|f| f.values()[i].abs()).sum();
        if total > 0.0 {
            worst = worst.min(best.values()[i] / total);
        }
    }
    println!("min over samples of max partial sum / sum |f_n| = {worst:.4} (bound 1/3)");
    let i = grid.len() / 3;
    let l = split_index(t.fields(), &sigma, i)?;
    let terms: Vec<f64> = (1..=sigma.len()).map(|k| t.fields()[sigma.apply(k) - 1].values()[i]).collect();
    println!("sample {i}: sigma-ordered values {terms:?}, split after position {l}");
    Ok(())
}
