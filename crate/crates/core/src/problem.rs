//! Ising/QUBO instances, the relaxed and discrete objectives, and rounding
//! between the relaxed box and the spin hypercube.

use crate::error::{EcimError, Result};

/// Half-width of the relaxed box `[-1/2, 1/2]^n`.
pub const BOX_HALF_WIDTH: f64 = 0.5;

/// An Ising instance: coupling matrix `J` (not necessarily symmetric) and
/// external field `h`.
///
/// `J` is stored dense and row-major. The symmetrized matrix
/// `Q = (J + J^T) / 2`, which is the Hessian of the relaxed objective, is
/// computed once at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingProblem {
    n: usize,
    j: Vec<f64>,
    q: Vec<f64>,
    h: Vec<f64>,
    label: Option<String>,
}

impl CouplingProblem {
    /// Builds a problem from a row-major `n * n` coupling buffer and a field.
    pub fn new(n: usize, j: Vec<f64>, h: Vec<f64>, label: Option<String>) -> Result<Self> {
        if n == 0 {
            return Err(EcimError::Empty);
        }
        if j.len() != n * n {
            return Err(EcimError::DimensionMismatch {
                what: "J (n*n entries)",
                expected: n * n,
                found: j.len(),
            });
        }
        if h.len() != n {
            return Err(EcimError::DimensionMismatch {
                what: "h",
                expected: n,
                found: h.len(),
            });
        }
        if let Some(index) = j.iter().position(|v| !v.is_finite()) {
            return Err(EcimError::NonFinite { what: "J", index });
        }
        if let Some(index) = h.iter().position(|v| !v.is_finite()) {
            return Err(EcimError::NonFinite { what: "h", index });
        }
        let mut q = vec![0.0; n * n];
        for r in 0..n {
            for c in 0..n {
                q[r * n + c] = 0.5 * (j[r * n + c] + j[c * n + r]);
            }
        }
        Ok(Self { n, j, q, h, label })
    }

    /// Builds a problem from nested rows, rejecting ragged input.
    pub fn from_rows(rows: &[Vec<f64>], h: Vec<f64>, label: Option<String>) -> Result<Self> {
        let n = rows.len();
        let mut j = Vec::with_capacity(n * n);
        for (row, values) in rows.iter().enumerate() {
            if values.len() != n {
                return Err(EcimError::RaggedRow {
                    row,
                    expected: n,
                    found: values.len(),
                });
            }
            j.extend_from_slice(values);
        }
        Self::new(n, j, h, label)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Row-major coupling matrix.
    pub fn coupling(&self) -> &[f64] {
        &self.j
    }

    /// Row-major symmetrized coupling `Q`.
    pub fn symmetrized(&self) -> &[f64] {
        &self.q
    }

    pub fn field(&self) -> &[f64] {
        &self.h
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn coupling_rows(&self) -> Vec<Vec<f64>> {
        self.j.chunks(self.n).map(<[f64]>::to_vec).collect()
    }

    pub fn is_symmetric(&self) -> bool {
        self.j == self.q
    }

    fn check_len(&self, what: &'static str, len: usize) -> Result<()> {
        if len == self.n {
            Ok(())
        } else {
            Err(EcimError::DimensionMismatch {
                what,
                expected: self.n,
                found: len,
            })
        }
    }

    /// `E(s) = 1/2 s^T J s + h^T s`.
    pub fn relaxed_energy(&self, s: &SpinState) -> Result<f64> {
        self.check_len("spin state", s.len())?;
        Ok(self.energy_of(s.as_slice()))
    }

    /// Hamiltonian `H = 1/2 sum_ij J_ij sigma_i sigma_j + sum_i h_i sigma_i`.
    pub fn discrete_energy(&self, sigma: &DiscreteSpins) -> Result<f64> {
        self.check_len("discrete spins", sigma.len())?;
        let values: Vec<f64> = sigma.iter().map(f64::from).collect();
        Ok(self.energy_of(&values))
    }

    /// `grad E(s) = Q s + h`.
    pub fn gradient(&self, s: &SpinState) -> Result<Vec<f64>> {
        self.check_len("spin state", s.len())?;
        let mut out = vec![0.0; self.n];
        self.gradient_into(s.as_slice(), &mut out);
        Ok(out)
    }

    /// Energy of an arbitrary real vector of length `n`; no box check.
    pub fn energy_of(&self, s: &[f64]) -> f64 {
        debug_assert_eq!(s.len(), self.n);
        let n = self.n;
        let mut quad = 0.0;
        let mut lin = 0.0;
        for (r, (&sr, &hr)) in s.iter().zip(&self.h).enumerate() {
            let row = &self.j[r * n..(r + 1) * n];
            let js: f64 = row.iter().zip(s).map(|(a, b)| a * b).sum();
            quad += sr * js;
            lin += hr * sr;
        }
        0.5 * quad + lin
    }

    /// Writes `Q s + h` into `out`.
    pub fn gradient_into(&self, s: &[f64], out: &mut [f64]) {
        debug_assert_eq!(s.len(), self.n);
        let n = self.n;
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.q[r * n..(r + 1) * n];
            *o = row.iter().zip(s).map(|(a, b)| a * b).sum::<f64>() + self.h[r];
        }
    }

    /// Writes the raw coupling product `J s` into `out`.
    pub fn coupling_product_into(&self, s: &[f64], out: &mut [f64]) {
        let n = self.n;
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.j[r * n..(r + 1) * n];
            *o = row.iter().zip(s).map(|(a, b)| a * b).sum();
        }
    }
}

/// Relaxed decision vector confined to `[-1/2, 1/2]^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinState(Vec<f64>);

impl SpinState {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        for (index, &value) in values.iter().enumerate() {
            if !value.is_finite() {
                return Err(EcimError::NonFinite {
                    what: "spin state",
                    index,
                });
            }
            if value.abs() > BOX_HALF_WIDTH {
                return Err(EcimError::OutOfBox { index, value });
            }
        }
        Ok(Self(values))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    /// Clamps every coordinate into the box. Returns the state and how many
    /// coordinates were moved.
    pub fn clamped(mut values: Vec<f64>) -> (Self, usize) {
        let moved = clamp_to_box(&mut values);
        (Self(values), moved)
    }

    /// Wraps values already known to be in the box.
    pub(crate) fn from_box_unchecked(values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|v| v.abs() <= BOX_HALF_WIDTH));
        Self(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn in_box(&self) -> bool {
        self.0.iter().all(|v| v.abs() <= BOX_HALF_WIDTH)
    }
}

/// Clamps coordinates into `[-1/2, 1/2]`, returning the number clamped.
pub fn clamp_to_box(values: &mut [f64]) -> usize {
    let mut moved = 0;
    for v in values.iter_mut() {
        let c = v.clamp(-BOX_HALF_WIDTH, BOX_HALF_WIDTH);
        if c != *v {
            moved += 1;
            *v = c;
        }
    }
    moved
}

/// A spin configuration with entries in `{-1, +1}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DiscreteSpins(Vec<i8>);

impl DiscreteSpins {
    pub fn new(values: Vec<i8>) -> Result<Self> {
        if let Some(index) = values.iter().position(|&v| v != 1 && v != -1) {
            return Err(EcimError::InvalidSpin {
                index,
                value: f64::from(values[index]),
            });
        }
        Ok(Self(values))
    }

    /// Accepts real-valued spins; every entry must be exactly `-1.0` or `1.0`.
    pub fn from_reals(values: &[f64]) -> Result<Self> {
        values
            .iter()
            .enumerate()
            .map(|(index, &value)| {
                if value == 1.0 {
                    Ok(1)
                } else if value == -1.0 {
                    Ok(-1)
                } else {
                    Err(EcimError::InvalidSpin { index, value })
                }
            })
            .collect::<Result<Vec<i8>>>()
            .map(Self)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = i8> + '_ {
        self.0.iter().copied()
    }

    pub fn as_slice(&self) -> &[i8] {
        &self.0
    }

    /// Corner of the relaxed box corresponding to these spins (`sigma / 2`).
    pub fn to_box_corner(&self) -> SpinState {
        SpinState(self.0.iter().map(|&v| 0.5 * f64::from(v)).collect())
    }
}

/// Element-wise sign rounding; `sgn(0) = +1`.
pub fn round_to_spins(s: &SpinState) -> DiscreteSpins {
    DiscreteSpins(
        s.as_slice()
            .iter()
            .map(|&v| if v < 0.0 { -1 } else { 1 })
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(v: &[f64]) -> SpinState {
        SpinState::new(v.to_vec()).unwrap()
    }

    fn spins(v: &[i8]) -> DiscreteSpins {
        DiscreteSpins::new(v.to_vec()).unwrap()
    }

    fn problem(j: &[&[f64]], h: &[f64]) -> CouplingProblem {
        let rows: Vec<Vec<f64>> = j.iter().map(|r| r.to_vec()).collect();
        CouplingProblem::from_rows(&rows, h.to_vec(), None).unwrap()
    }

    #[test]
    fn relaxed_energy_examples() {
        let zero = problem(&[&[0.0, 0.0], &[0.0, 0.0]], &[0.0, 0.0]);
        assert_eq!(zero.relaxed_energy(&state(&[0.5, 0.5])).unwrap(), 0.0);

        let offdiag = problem(&[&[0.0, 1.0], &[1.0, 0.0]], &[0.0, 0.0]);
        assert_eq!(offdiag.relaxed_energy(&state(&[0.5, 0.5])).unwrap(), 0.25);

        let diag = problem(&[&[2.0, 0.0], &[0.0, 2.0]], &[1.0, 0.0]);
        assert_eq!(diag.relaxed_energy(&state(&[-0.5, 0.0])).unwrap(), -0.25);
    }

    #[test]
    fn relaxed_energy_rejects_wrong_length() {
        let p = problem(&[&[0.0, 1.0], &[1.0, 0.0]], &[0.0, 0.0]);
        assert!(matches!(
            p.relaxed_energy(&state(&[0.1, 0.1, 0.1])),
            Err(EcimError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn discrete_energy_examples() {
        let p = problem(&[&[0.0, 1.0], &[1.0, 0.0]], &[0.0, 0.0]);
        assert_eq!(p.discrete_energy(&spins(&[1, -1])).unwrap(), -1.0);

        let field = problem(&[&[0.0, 0.0], &[0.0, 0.0]], &[1.0, -1.0]);
        assert_eq!(field.discrete_energy(&spins(&[-1, 1])).unwrap(), -2.0);

        let both = problem(&[&[0.0, 1.0], &[1.0, 0.0]], &[1.0, 1.0]);
        assert_eq!(both.discrete_energy(&spins(&[1, 1])).unwrap(), 3.0);
    }

    #[test]
    fn discrete_spins_reject_non_unit_entries() {
        assert!(matches!(
            DiscreteSpins::new(vec![1, 0]),
            Err(EcimError::InvalidSpin { index: 1, .. })
        ));
        assert!(DiscreteSpins::from_reals(&[1.0, -0.5]).is_err());
        assert_eq!(
            DiscreteSpins::from_reals(&[1.0, -1.0]).unwrap(),
            spins(&[1, -1])
        );
    }

    #[test]
    fn gradient_examples() {
        let diag = problem(&[&[2.0, 0.0], &[0.0, 2.0]], &[1.0, 0.0]);
        assert_eq!(diag.gradient(&state(&[0.5, 0.0])).unwrap(), vec![2.0, 0.0]);

        let asym = problem(&[&[0.0, 2.0], &[0.0, 0.0]], &[0.0, 0.0]);
        assert_eq!(asym.symmetrized(), &[0.0, 1.0, 1.0, 0.0]);
        assert_eq!(asym.gradient(&state(&[0.5, 0.5])).unwrap(), vec![0.5, 0.5]);

        let field = problem(&[&[0.3, -1.0], &[0.7, 2.0]], &[0.25, -4.0]);
        assert_eq!(field.gradient(&SpinState::zeros(2)).unwrap(), vec![0.25, -4.0]);
    }

    #[test]
    fn rounding_examples() {
        assert_eq!(round_to_spins(&state(&[0.3, -0.2])), spins(&[1, -1]));
        assert_eq!(round_to_spins(&state(&[0.0, 0.0])), spins(&[1, 1]));
        assert_eq!(round_to_spins(&state(&[-0.5, 0.5])), spins(&[-1, 1]));
    }

    #[test]
    fn construction_validates_input() {
        assert!(matches!(
            CouplingProblem::from_rows(&[vec![0.0, 1.0], vec![1.0]], vec![0.0, 0.0], None),
            Err(EcimError::RaggedRow { row: 1, .. })
        ));
        assert!(matches!(
            CouplingProblem::new(2, vec![0.0, f64::NAN, 0.0, 0.0], vec![0.0; 2], None),
            Err(EcimError::NonFinite { what: "J", index: 1 })
        ));
        assert!(matches!(
            CouplingProblem::new(2, vec![0.0; 4], vec![f64::INFINITY, 0.0], None),
            Err(EcimError::NonFinite { what: "h", .. })
        ));
        assert!(matches!(
            CouplingProblem::new(2, vec![0.0; 4], vec![0.0; 3], None),
            Err(EcimError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            CouplingProblem::new(0, vec![], vec![], None),
            Err(EcimError::Empty)
        ));
        assert!(SpinState::new(vec![0.6]).is_err());
    }
}
