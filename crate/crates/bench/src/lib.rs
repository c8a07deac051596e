//! Fixtures shared by the benchmarks.

use afem_core::{Cell, Partition};

/// Uniform level-2 mesh refined `rounds` times towards the corner `(0, 0)`.
pub fn corner_mesh(rounds: u32) -> Partition {
    let mut p = afem_core::uniform_partition(2);
    for _ in 0..rounds {
        let marked: Vec<Cell> = p
            .cells()
            .iter()
            .copied()
            .filter(|c| c.origin()[0] + c.origin()[1] < 2.0 * c.side())
            .collect();
        p = p.refine(&marked).expect("marked cells are active");
    }
    p
}
