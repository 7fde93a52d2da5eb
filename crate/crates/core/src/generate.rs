//! Seeded instance families covering each curvature regime.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::problem::CouplingProblem;
use crate::rng::{substream, EcimRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    /// Symmetric `J` with i.i.d. `N(0, 1/n)` off-diagonal entries.
    SymmetricGaussian,
    /// Unsymmetric `J` with i.i.d. `N(0, 1/n)` off-diagonal entries.
    AsymmetricGaussian,
    PositiveDefinite,
    NegativeDefinite,
    /// Eigenvalue magnitudes in `[0.5, 2]`, the first `ceil(n/2)` positive.
    Indefinite,
}

impl GeneratorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            GeneratorKind::SymmetricGaussian => "symmetric_gaussian",
            GeneratorKind::AsymmetricGaussian => "asymmetric_gaussian",
            GeneratorKind::PositiveDefinite => "positive_definite",
            GeneratorKind::NegativeDefinite => "negative_definite",
            GeneratorKind::Indefinite => "indefinite",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub n: usize,
    pub kind: GeneratorKind,
    /// Euclidean norm of `h`; zero gives `h = 0`.
    pub field_scale: f64,
    pub seed: u64,
}

/// Builds the instance described by `spec`. The same spec always yields the
/// same problem.
pub fn generate(spec: &GeneratorSpec) -> Result<CouplingProblem> {
    let n = spec.n;
    if n == 0 {
        return Err(param("n", "must be at least 1"));
    }
    if !(spec.field_scale.is_finite() && spec.field_scale >= 0.0) {
        return Err(param(
            "field_scale",
            format!("must be finite and >= 0, got {}", spec.field_scale),
        ));
    }
    if spec.kind == GeneratorKind::Indefinite && n < 2 {
        return Err(param("n", "an indefinite instance needs at least 2 spins"));
    }
    let mut rng = substream(spec.seed, 0);
    let gauss = |rng: &mut EcimRng| -> f64 { rng.sample(StandardNormal) };

    let j = match spec.kind {
        GeneratorKind::SymmetricGaussian | GeneratorKind::AsymmetricGaussian => {
            let scale = 1.0 / (n as f64).sqrt();
            let mut j = vec![0.0; n * n];
            for r in 0..n {
                for c in 0..n {
                    if r == c {
                        continue;
                    }
                    if spec.kind == GeneratorKind::AsymmetricGaussian || c > r {
                        j[r * n + c] = scale * gauss(&mut rng);
                    }
                }
            }
            if spec.kind == GeneratorKind::SymmetricGaussian {
                for r in 0..n {
                    for c in 0..r {
                        j[r * n + c] = j[c * n + r];
                    }
                }
            }
            j
        }
        kind => {
            let a = DMatrix::from_fn(n, n, |_, _| gauss(&mut rng));
            let basis = a.qr().q();
            let eig: Vec<f64> = (0..n)
                .map(|i| {
                    let magnitude = rng.random_range(0.5..=2.0);
                    let positive = match kind {
                        GeneratorKind::PositiveDefinite => true,
                        GeneratorKind::NegativeDefinite => false,
                        _ => i < n.div_ceil(2),
                    };
                    if positive {
                        magnitude
                    } else {
                        -magnitude
                    }
                })
                .collect();
            let mut j = vec![0.0; n * n];
            for r in 0..n {
                for c in 0..n {
                    j[r * n + c] = (0..n).map(|k| basis[(r, k)] * eig[k] * basis[(c, k)]).sum();
                }
            }
            for r in 0..n {
                for c in 0..r {
                    let avg = 0.5 * (j[r * n + c] + j[c * n + r]);
                    j[r * n + c] = avg;
                    j[c * n + r] = avg;
                }
            }
            j
        }
    };

    let h = if spec.field_scale > 0.0 {
        let raw: Vec<f64> = (0..n).map(|_| gauss(&mut rng)).collect();
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        raw.iter().map(|v| spec.field_scale * v / norm).collect()
    } else {
        vec![0.0; n]
    };

    let label = format!("{}-n{}-seed{}", spec.kind.as_str(), n, spec.seed);
    CouplingProblem::new(n, j, h, Some(label))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::classify_definiteness;
    use crate::spectral::{spectral_summary, Definiteness};

    fn spec(kind: GeneratorKind, n: usize, seed: u64) -> GeneratorSpec {
        GeneratorSpec {
            n,
            kind,
            field_scale: 0.5,
            seed,
        }
    }

    #[test]
    fn definite_kinds_have_requested_spectrum() {
        for seed in 0..10 {
            let pd = spectral_summary(&generate(&spec(GeneratorKind::PositiveDefinite, 8, seed)).unwrap()).unwrap();
            assert_eq!(classify_definiteness(&pd).definiteness, Definiteness::PositiveDefinite);
            assert!(pd.lambda_min >= 0.5 - 1e-9 && pd.lambda_max <= 2.0 + 1e-9);

            let nd = spectral_summary(&generate(&spec(GeneratorKind::NegativeDefinite, 8, seed)).unwrap()).unwrap();
            assert_eq!(nd.definiteness, Definiteness::NegativeDefinite);
            assert!(nd.lambda_max <= -0.5 + 1e-9 && nd.lambda_min >= -2.0 - 1e-9);

            let ind = spectral_summary(&generate(&spec(GeneratorKind::Indefinite, 5, seed)).unwrap()).unwrap();
            assert_eq!(ind.definiteness, Definiteness::Indefinite);
        }
    }

    #[test]
    fn positive_definite_seed_seven() {
        let p = generate(&spec(GeneratorKind::PositiveDefinite, 8, 7)).unwrap();
        let class = classify_definiteness(&spectral_summary(&p).unwrap());
        assert_eq!(class.definiteness, Definiteness::PositiveDefinite);
    }

    #[test]
    fn asymmetric_kind_is_not_symmetric() {
        let p = generate(&spec(GeneratorKind::AsymmetricGaussian, 8, 3)).unwrap();
        assert!(!p.is_symmetric());
        let q = p.symmetrized();
        for r in 0..8 {
            for c in 0..8 {
                assert_eq!(q[r * 8 + c], q[c * 8 + r]);
            }
        }
        assert!(generate(&spec(GeneratorKind::SymmetricGaussian, 8, 3)).unwrap().is_symmetric());
    }

    #[test]
    fn generation_is_deterministic_and_scales_field() {
        let s = spec(GeneratorKind::Indefinite, 6, 11);
        assert_eq!(generate(&s).unwrap(), generate(&s).unwrap());
        let h_norm: f64 = generate(&s).unwrap().field().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((h_norm - 0.5).abs() < 1e-12);
        let zero = GeneratorSpec { field_scale: 0.0, ..s };
        assert!(generate(&zero).unwrap().field().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(generate(&spec(GeneratorKind::PositiveDefinite, 0, 0)).is_err());
        assert!(generate(&spec(GeneratorKind::Indefinite, 1, 0)).is_err());
        let neg = GeneratorSpec { field_scale: -1.0, ..spec(GeneratorKind::PositiveDefinite, 3, 0) };
        assert!(generate(&neg).is_err());
    }
}
