//! Fixtures shared by the benchmarks.

use aap_core::{build_problem, Adaptivity, ColMatrix, FixedPointProblem, ProblemKind, ProblemOptions, SolverConfig, StaticMask};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Dense `rows x cols` matrix with entries uniform in `[-1, 1)`.
pub fn random_tall(rows: usize, cols: usize, seed: u64) -> ColMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ColMatrix::from_col_major(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

pub fn random_vector(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Sorted random subset of `0..n` holding `retention * n` indices (at least one).
pub fn retained_rows(n: usize, retention: f64, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = ((retention * n as f64).round() as usize).clamp(1, n);
    let mut rows = sample(&mut rng, n, l).into_vec();
    rows.sort_unstable();
    rows
}

pub fn problem(kind: ProblemKind, size: usize) -> FixedPointProblem {
    build_problem(kind, size, &ProblemOptions::default()).expect("benchmark problem builds")
}

pub fn config(problem: &FixedPointProblem, mask: Option<&str>, adaptivity: Adaptivity) -> SolverConfig {
    SolverConfig {
        window: problem.recommended_window(),
        static_mask: mask.map_or(StaticMask::Identity, |f| StaticMask::Field(f.into())),
        adaptivity,
        ..Default::default()
    }
}
