//! Spectral constants of the symmetrized coupling: extreme eigenvalues,
//! definiteness class and the gradient-norm bound over the box.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{EcimError, Result};
use crate::problem::CouplingProblem;

/// Largest `n` for which the dense eigendecomposition is attempted.
pub const MAX_EIGEN_DIM: usize = 512;
/// Largest `n` for which `c^2` is computed by enumerating box vertices.
pub const MAX_EXACT_C2_DIM: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Definiteness {
    PositiveDefinite,
    PositiveSemidefinite,
    NegativeDefinite,
    NegativeSemidefinite,
    Indefinite,
    Zero,
}

impl Definiteness {
    /// Classifies from the extreme eigenvalues. Eigenvalues within
    /// `1e-10 * max(1, |lambda_max|, |lambda_min|)` of zero count as zero.
    pub fn from_extremes(lambda_min: f64, lambda_max: f64) -> Self {
        let tol = 1e-10 * 1f64.max(lambda_max.abs()).max(lambda_min.abs());
        let min_zero = lambda_min.abs() <= tol;
        let max_zero = lambda_max.abs() <= tol;
        if min_zero && max_zero {
            Definiteness::Zero
        } else if lambda_min > tol {
            Definiteness::PositiveDefinite
        } else if min_zero {
            Definiteness::PositiveSemidefinite
        } else if lambda_max < -tol {
            Definiteness::NegativeDefinite
        } else if max_zero {
            Definiteness::NegativeSemidefinite
        } else {
            Definiteness::Indefinite
        }
    }

    /// True when the relaxed objective is convex.
    pub fn is_convex(self) -> bool {
        matches!(
            self,
            Definiteness::PositiveDefinite | Definiteness::PositiveSemidefinite | Definiteness::Zero
        )
    }

    /// True when the relaxed objective is concave (minimum on a vertex).
    pub fn is_concave(self) -> bool {
        matches!(
            self,
            Definiteness::NegativeDefinite | Definiteness::NegativeSemidefinite | Definiteness::Zero
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Definiteness::PositiveDefinite => "positive_definite",
            Definiteness::PositiveSemidefinite => "positive_semidefinite",
            Definiteness::NegativeDefinite => "negative_definite",
            Definiteness::NegativeSemidefinite => "negative_semidefinite",
            Definiteness::Indefinite => "indefinite",
            Definiteness::Zero => "zero",
        }
    }
}

/// Spectral data of `Q = (J + J^T) / 2` and the gradient bound `c^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSummary {
    pub q: Vec<f64>,
    pub n: usize,
    pub lambda_max: f64,
    pub lambda_min: f64,
    pub definiteness: Definiteness,
    /// `sup ||Q s + h||^2` over the box (or an upper bound on it).
    pub c_squared: f64,
    /// Whether `c_squared` came from vertex enumeration.
    pub c_squared_exact: bool,
}

impl SpectralSummary {
    /// Spectral norm of `Q`.
    pub fn q_norm(&self) -> f64 {
        self.lambda_max.abs().max(self.lambda_min.abs())
    }
}

/// All eigenvalues of the symmetric row-major matrix `q`, ascending.
pub fn symmetric_eigenvalues(n: usize, q: &[f64]) -> Vec<f64> {
    let m = DMatrix::from_row_slice(n, n, q);
    let mut values: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    values.sort_by(f64::total_cmp);
    values
}

pub fn spectral_summary(p: &CouplingProblem) -> Result<SpectralSummary> {
    let n = p.n();
    if n > MAX_EIGEN_DIM {
        return Err(EcimError::UnsupportedSize {
            what: "dense eigendecomposition",
            n,
            max: MAX_EIGEN_DIM,
        });
    }
    let q = p.symmetrized().to_vec();
    let eig = symmetric_eigenvalues(n, &q);
    let lambda_min = eig[0];
    let lambda_max = eig[n - 1];
    let definiteness = Definiteness::from_extremes(lambda_min, lambda_max);

    let (c_squared, c_squared_exact) = if n <= MAX_EXACT_C2_DIM {
        (max_gradient_norm_sq_at_vertices(p), true)
    } else {
        let q_norm = lambda_max.abs().max(lambda_min.abs());
        let h_norm = p.field().iter().map(|v| v * v).sum::<f64>().sqrt();
        let bound = 0.5 * (n as f64).sqrt() * q_norm + h_norm;
        (bound * bound, false)
    };

    Ok(SpectralSummary {
        q,
        n,
        lambda_max,
        lambda_min,
        definiteness,
        c_squared,
        c_squared_exact,
    })
}

/// Walks every vertex of `[-1/2, 1/2]^n` in Gray-code order. The callback
/// receives the current vertex and the index of the coordinate that was
/// flipped to reach it (`None` for the starting vertex `-1/2 * 1`).
pub(crate) fn for_each_vertex(n: usize, mut visit: impl FnMut(&[f64], Option<usize>)) {
    let mut s = vec![-0.5; n];
    visit(&s, None);
    let count: u64 = 1u64 << n;
    for i in 1..count {
        let bit = i.trailing_zeros() as usize;
        s[bit] = -s[bit];
        visit(&s, Some(bit));
    }
}

/// `max ||Q s + h||^2` over box vertices; the maximum of a convex function
/// over the box is attained at one of them.
fn max_gradient_norm_sq_at_vertices(p: &CouplingProblem) -> f64 {
    let n = p.n();
    let q = p.symmetrized();
    let mut g = vec![0.0; n];
    let mut best = f64::NEG_INFINITY;
    let mut best_vertex = vec![-0.5; n];
    let mut flips = 0usize;
    for_each_vertex(n, |s, flipped| {
        match flipped {
            None => p.gradient_into(s, &mut g),
            Some(b) => {
                flips += 1;
                if flips.is_multiple_of(1024) {
                    p.gradient_into(s, &mut g);
                } else {
                    // s[b] already flipped; the change was 2 * s[b]
                    let d = 2.0 * s[b];
                    for (r, gr) in g.iter_mut().enumerate() {
                        *gr += d * q[r * n + b];
                    }
                }
            }
        }
        let norm_sq: f64 = g.iter().map(|v| v * v).sum();
        if norm_sq > best {
            best = norm_sq;
            best_vertex.copy_from_slice(s);
        }
    });
    p.gradient_into(&best_vertex, &mut g);
    let exact: f64 = g.iter().map(|v| v * v).sum();
    exact.max(best)
}
