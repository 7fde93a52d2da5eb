//! Shared fixtures for the benchmarks.

use ecim_core::{generate, CouplingProblem, GeneratorKind, GeneratorSpec};

pub fn fixture(kind: GeneratorKind, n: usize) -> CouplingProblem {
    generate(&GeneratorSpec {
        n,
        kind,
        field_scale: 0.5,
        seed: 7,
    })
    .expect("fixture spec is valid")
}
