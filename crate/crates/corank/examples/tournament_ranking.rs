//! Turning a pairwise probability matrix into a ranking: greedy row sums
//! versus the exact maximum-path-sum Hamiltonian oracle, on both a
//! score-derived (transitive) matrix and a hand-built intransitive one.
//!
//! Run: `cargo run -p corank --example tournament_ranking`

use corank::ranking::{
    consistency_check, exact_rank, greedy_rank, path_sum, Pdm,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    // Score-derived matrices are transitive tournaments: both rankers
    // recover the score order exactly.
    let scores = [0.1, 0.9, 0.5, 0.3];
    let pdm = Pdm::from_scores(&scores).unwrap();
    println!("per-document scores: {scores:?}");
    println!("R[0][1] = {:.4} (probability doc 0 beats doc 1)", pdm.get(0, 1));
    let greedy = greedy_rank(&pdm);
    let exact = exact_rank(&pdm).unwrap();
    println!("greedy ranks: {:?}", greedy.rank);
    println!("exact  ranks: {:?}", exact.rank);
    println!(
        "transitivity violations: {}",
        consistency_check(&pdm).violations
    );

    // A three-cycle (0 beats 1, 1 beats 2, 2 beats 0) admits no order
    // satisfying every pair; the oracle settles for 2 of 3 and takes the
    // lexicographically smallest optimal path.
    let cycle = Pdm::from_matrix(
        3,
        vec![
            0.5, 0.8, 0.3, //
            0.2, 0.5, 0.9, //
            0.7, 0.1, 0.5,
        ],
    )
    .unwrap();
    let report = consistency_check(&cycle);
    println!("\nthree-cycle: {} violating ordered triples", report.violations);
    let exact = exact_rank(&cycle).unwrap();
    println!(
        "exact visiting order {:?}, path sum {} of 2 edges",
        exact.order,
        path_sum(&cycle, &exact.order)
    );

    // On random (usually intransitive) matrices the oracle's path sum
    // never falls below greedy's.
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut greedy_total = 0u32;
    let mut exact_total = 0u32;
    let mut strictly_better = 0usize;
    for _ in 0..200 {
        let pdm = Pdm::random(10, &mut rng).unwrap();
        let g = path_sum(&pdm, &greedy_rank(&pdm).order);
        let e = path_sum(&pdm, &exact_rank(&pdm).unwrap().order);
        assert!(e >= g);
        greedy_total += g;
        exact_total += e;
        strictly_better += usize::from(e > g);
    }
    println!(
        "\n200 random 10-document matrices: greedy path sum {greedy_total}, \
         exact {exact_total} (strictly better on {strictly_better})"
    );
}
