//! Reference solutions: the relaxed box optimum `E*`, the discrete ground
//! state, an empirical PL constant, and the stationary-point regime implied
//! by the definiteness of `Q`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{EcimError, Result};
use crate::problem::{clamp_to_box, CouplingProblem, DiscreteSpins, SpinState};
use crate::rng::substream;
use crate::spectral::{symmetric_eigenvalues, Definiteness, SpectralSummary};

/// Largest `n` for the exhaustive discrete search.
pub const MAX_DISCRETE_DIM: usize = 24;
/// Largest `n` for the relaxed vertex scan.
pub const MAX_VERTEX_SCAN_DIM: usize = 20;
/// Largest `n` for the grid oracle.
pub const MAX_GRID_DIM: usize = 4;

const GRID_RESOLUTION: f64 = 1e-3;
const GRID_POINT_CAP: f64 = 2e5;
const GRID_CANDIDATES: usize = 16;
const PG_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimumMethod {
    VertexScan,
    GridRefine,
    MultiStartProjGrad,
}

impl OptimumMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            OptimumMethod::VertexScan => "vertex_scan",
            OptimumMethod::GridRefine => "grid_refine",
            OptimumMethod::MultiStartProjGrad => "multi_start_proj_grad",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelaxedOptimum {
    pub s_star: SpinState,
    pub e_star: f64,
    pub method: OptimumMethod,
    /// Whether `e_star` is known to be the global box minimum.
    pub certified: bool,
}

/// Search budget for the multi-start projected-gradient oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleBudget {
    pub starts: usize,
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for OracleBudget {
    fn default() -> Self {
        Self {
            starts: 64,
            max_iterations: 100_000,
            seed: 0,
        }
    }
}

/// Final point of one projected-gradient start.
#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub state: SpinState,
    pub energy: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Global minimum of `E` over `[-1/2, 1/2]^n`.
///
/// Concave instances (`n <= 20`) are solved by a vertex scan, tiny instances
/// (`n <= 4`) by grid refinement, everything else by multi-start projected
/// gradient. The last is certified only for convex objectives whose best
/// start converged.
pub fn relaxed_optimum(p: &CouplingProblem, budget: &OracleBudget) -> Result<RelaxedOptimum> {
    let n = p.n();
    let eig = symmetric_eigenvalues(n, p.symmetrized());
    let definiteness = Definiteness::from_extremes(eig[0], eig[n - 1]);
    if definiteness.is_concave() && n <= MAX_VERTEX_SCAN_DIM {
        return vertex_scan(p);
    }
    if n <= MAX_GRID_DIM {
        return grid_refine(p);
    }
    let probes = multi_start_projected_gradient(p, budget)?;
    let best = best_probe(&probes);
    if !best.converged {
        log::warn!(
            "projected gradient did not converge within {} iterations; E* is uncertified",
            budget.max_iterations
        );
    }
    Ok(RelaxedOptimum {
        s_star: best.state.clone(),
        e_star: best.energy,
        method: OptimumMethod::MultiStartProjGrad,
        certified: definiteness.is_convex() && best.converged,
    })
}

/// Walks every vertex (coordinates `+-half`) in Gray-code order, reporting
/// the vertex bitmask (bit `i` set means coordinate `i` positive) and its
/// energy, maintained incrementally.
fn scan_vertices(p: &CouplingProblem, half: f64, mut visit: impl FnMut(u64, f64)) {
    let n = p.n();
    let q = p.symmetrized();
    let h = p.field();
    let mut s = vec![-half; n];
    let mut qs = vec![0.0; n];
    let mut bits = 0u64;
    let resync = |s: &[f64], qs: &mut [f64]| {
        for (r, out) in qs.iter_mut().enumerate() {
            *out = q[r * n..(r + 1) * n]
                .iter()
                .zip(s)
                .map(|(a, b)| a * b)
                .sum();
        }
    };
    resync(&s, &mut qs);
    let mut energy = p.energy_of(&s);
    visit(bits, energy);
    for i in 1..(1u64 << n) {
        let b = i.trailing_zeros() as usize;
        let d = -2.0 * s[b];
        energy += d * qs[b] + 0.5 * q[b * n + b] * d * d + h[b] * d;
        s[b] += d;
        bits ^= 1 << b;
        if i % 1024 == 0 {
            resync(&s, &mut qs);
            energy = p.energy_of(&s);
        } else {
            for (r, out) in qs.iter_mut().enumerate() {
                *out += d * q[r * n + b];
            }
        }
        visit(bits, energy);
    }
}

fn vertex_from_bits(n: usize, bits: u64, half: f64) -> Vec<f64> {
    (0..n)
        .map(|i| if bits >> i & 1 == 1 { half } else { -half })
        .collect()
}

/// Best box vertex. Exact for concave objectives, whose box minimum is
/// always attained at a vertex; an upper bound on `E*` otherwise.
pub fn vertex_scan(p: &CouplingProblem) -> Result<RelaxedOptimum> {
    let n = p.n();
    if n > MAX_VERTEX_SCAN_DIM {
        return Err(EcimError::UnsupportedSize {
            what: "vertex scan",
            n,
            max: MAX_VERTEX_SCAN_DIM,
        });
    }
    let mut best = (f64::INFINITY, 0u64);
    scan_vertices(p, 0.5, |bits, e| {
        if e < best.0 {
            best = (e, bits);
        }
    });
    let s = vertex_from_bits(n, best.1, 0.5);
    let e_star = p.energy_of(&s);
    let eig = symmetric_eigenvalues(n, p.symmetrized());
    let concave = Definiteness::from_extremes(eig[0], eig[n - 1]).is_concave();
    Ok(RelaxedOptimum {
        s_star: SpinState::from_box_unchecked(s),
        e_star,
        method: OptimumMethod::VertexScan,
        certified: concave,
    })
}

/// Grid oracle for `n <= 4`: scan a uniform grid, refine around each grid
/// local minimum down to spacing `1e-3`, then polish by solving the
/// stationarity system on every box face compatible with the refined point.
pub fn grid_refine(p: &CouplingProblem) -> Result<RelaxedOptimum> {
    let n = p.n();
    if n > MAX_GRID_DIM {
        return Err(EcimError::UnsupportedSize {
            what: "grid oracle",
            n,
            max: MAX_GRID_DIM,
        });
    }
    let per_dim = (GRID_POINT_CAP.powf(1.0 / n as f64).floor() as usize).clamp(3, 1001);
    let spacing = 1.0 / (per_dim - 1) as f64;
    let coord = |i: usize| (-0.5 + i as f64 * spacing).min(0.5);
    let total = per_dim.pow(n as u32);

    let mut point = vec![0.0; n];
    let decode = |mut idx: usize, point: &mut [f64]| {
        for x in point.iter_mut() {
            *x = coord(idx % per_dim);
            idx /= per_dim;
        }
    };
    let energies: Vec<f64> = (0..total)
        .map(|idx| {
            let mut pt = vec![0.0; n];
            decode(idx, &mut pt);
            p.energy_of(&pt)
        })
        .collect();

    // Grid local minima over the 3^n - 1 neighbourhood.
    let strides: Vec<usize> = (0..n).map(|d| per_dim.pow(d as u32)).collect();
    let offsets: Vec<Vec<isize>> = (0..3usize.pow(n as u32))
        .map(|mut o| {
            (0..n)
                .map(|_| {
                    let v = (o % 3) as isize - 1;
                    o /= 3;
                    v
                })
                .collect()
        })
        .filter(|o: &Vec<isize>| o.iter().any(|&v| v != 0))
        .collect();
    let mut minima: Vec<usize> = (0..total)
        .filter(|&idx| {
            let e = energies[idx];
            offsets.iter().all(|off| {
                let mut nb = idx as isize;
                for d in 0..n {
                    let c = (idx / strides[d] % per_dim) as isize + off[d];
                    if c < 0 || c >= per_dim as isize {
                        return true;
                    }
                    nb += off[d] * strides[d] as isize;
                }
                e <= energies[nb as usize]
            })
        })
        .collect();
    minima.sort_by(|&a, &b| energies[a].total_cmp(&energies[b]).then(a.cmp(&b)));
    minima.truncate(GRID_CANDIDATES);

    let mut best_s = vec![0.0; n];
    let mut best_e = f64::INFINITY;
    let mut consider = |s: &[f64], e: f64, best_s: &mut Vec<f64>| {
        if e < best_e {
            best_e = e;
            best_s.copy_from_slice(s);
        }
    };

    for &idx in &minima {
        decode(idx, &mut point);
        let mut centre = point.clone();
        let mut centre_e = energies[idx];
        let mut h = spacing;
        while h > GRID_RESOLUTION {
            h *= 0.5;
            let mut trial = vec![0.0; n];
            let mut best_local = (centre_e, centre.clone());
            for o in 0..5usize.pow(n as u32) {
                let mut rem = o;
                for d in 0..n {
                    let step = (rem % 5) as f64 - 2.0;
                    rem /= 5;
                    trial[d] = (centre[d] + step * h).clamp(-0.5, 0.5);
                }
                let e = p.energy_of(&trial);
                if e < best_local.0 {
                    best_local = (e, trial.clone());
                }
            }
            centre_e = best_local.0;
            centre = best_local.1;
        }
        consider(&centre, centre_e, &mut best_s);
        for (s, e) in polish_on_faces(p, &centre, 4.0 * h) {
            consider(&s, e, &mut best_s);
        }
    }

    Ok(RelaxedOptimum {
        e_star: p.energy_of(&best_s),
        s_star: SpinState::from_box_unchecked(best_s),
        method: OptimumMethod::GridRefine,
        certified: true,
    })
}

/// Stationary points of `E` restricted to every face whose active bounds
/// are within `band` of `centre`, keeping the feasible ones.
fn polish_on_faces(p: &CouplingProblem, centre: &[f64], band: f64) -> Vec<(Vec<f64>, f64)> {
    let n = p.n();
    let q = p.symmetrized();
    let h = p.field();
    // Per coordinate: candidate fixed values (None = free).
    let options: Vec<Vec<Option<f64>>> = centre
        .iter()
        .map(|&c| {
            let mut opts = vec![None];
            if (c + 0.5).abs() <= band {
                opts.push(Some(-0.5));
            }
            if (c - 0.5).abs() <= band {
                opts.push(Some(0.5));
            }
            opts
        })
        .collect();
    let combos: usize = options.iter().map(Vec::len).product();
    let mut out = Vec::new();
    for mut combo in 0..combos {
        let mut s = vec![0.0; n];
        let mut free = Vec::new();
        for (i, opts) in options.iter().enumerate() {
            match opts[combo % opts.len()] {
                Some(v) => s[i] = v,
                None => free.push(i),
            }
            combo /= opts.len();
        }
        if !free.is_empty() {
            let m = free.len();
            let a = DMatrix::from_fn(m, m, |r, c| q[free[r] * n + free[c]]);
            let rhs = DVector::from_fn(m, |r, _| {
                let i = free[r];
                let fixed: f64 = (0..n)
                    .filter(|j| !free.contains(j))
                    .map(|j| q[i * n + j] * s[j])
                    .sum();
                -(h[i] + fixed)
            });
            let scale = a.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
            let lu = a.clone().lu();
            if lu.determinant().abs() <= 1e-12 * scale.powi(m as i32) {
                continue;
            }
            let Some(x) = lu.solve(&rhs) else { continue };
            if x.iter().any(|v| !v.is_finite() || v.abs() > 0.5 + 1e-12) {
                continue;
            }
            for (k, &i) in free.iter().enumerate() {
                s[i] = x[k];
            }
            clamp_to_box(&mut s);
        }
        let e = p.energy_of(&s);
        out.push((s, e));
    }
    out
}

fn box_norm_projected_gradient(p: &CouplingProblem, s: &[f64], grad: &mut [f64]) -> f64 {
    p.gradient_into(s, grad);
    s.iter()
        .zip(grad.iter())
        .map(|(&x, &g)| {
            let d = x - (x - g).clamp(-0.5, 0.5);
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Projected gradient descent from one start; step `1/lambda_max` when
/// `lambda_max > 0`, otherwise `0.1`.
pub fn projected_gradient_descent(
    p: &CouplingProblem,
    start: &[f64],
    step: f64,
    max_iterations: usize,
) -> Probe {
    let n = p.n();
    let mut s = start.to_vec();
    clamp_to_box(&mut s);
    let mut grad = vec![0.0; n];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iterations {
        if box_norm_projected_gradient(p, &s, &mut grad) < PG_TOLERANCE {
            converged = true;
            break;
        }
        for (x, g) in s.iter_mut().zip(&grad) {
            *x = (*x - step * g).clamp(-0.5, 0.5);
        }
        iterations += 1;
    }
    if !converged {
        converged = box_norm_projected_gradient(p, &s, &mut grad) < PG_TOLERANCE;
    }
    Probe {
        energy: p.energy_of(&s),
        state: SpinState::from_box_unchecked(s),
        converged,
        iterations,
    }
}

/// Starting points: origin, `-+ sgn(h) / 2`, then box-uniform samples.
fn starting_points(p: &CouplingProblem, budget: &OracleBudget) -> Vec<Vec<f64>> {
    let n = p.n();
    let sign_of_h: Vec<f64> = p
        .field()
        .iter()
        .map(|&v| if v < 0.0 { -0.5 } else { 0.5 })
        .collect();
    let mut starts = vec![
        vec![0.0; n],
        sign_of_h.iter().map(|v| -v).collect(),
        sign_of_h,
    ];
    starts.truncate(budget.starts);
    let mut i = starts.len() as u64;
    while starts.len() < budget.starts {
        let mut rng = substream(budget.seed, i);
        starts.push((0..n).map(|_| rng.random_range(-0.5..=0.5)).collect());
        i += 1;
    }
    starts
}

/// Runs all starts concurrently; results are in start order.
pub fn multi_start_projected_gradient(
    p: &CouplingProblem,
    budget: &OracleBudget,
) -> Result<Vec<Probe>> {
    if budget.starts == 0 {
        return Err(crate::error::param("starts", "need at least one start"));
    }
    let n = p.n();
    let eig = symmetric_eigenvalues(n, p.symmetrized());
    let lambda_max = eig[n - 1];
    let step = if lambda_max > 0.0 { 1.0 / lambda_max } else { 0.1 };
    Ok(starting_points(p, budget)
        .par_iter()
        .map(|start| projected_gradient_descent(p, start, step, budget.max_iterations))
        .collect())
}

/// Lowest-energy probe; ties go to the earliest start.
pub fn best_probe(probes: &[Probe]) -> &Probe {
    probes
        .iter()
        .reduce(|best, p| if p.energy < best.energy { p } else { best })
        .expect("at least one probe")
}

/// Exact Ising ground state by enumeration. Among (numerically) tied
/// minima the lexicographically smallest spin vector, with `-1 < +1`, wins.
pub fn discrete_optimum(p: &CouplingProblem) -> Result<(DiscreteSpins, f64)> {
    let n = p.n();
    if n > MAX_DISCRETE_DIM {
        return Err(EcimError::UnsupportedSize {
            what: "discrete ground-state enumeration",
            n,
            max: MAX_DISCRETE_DIM,
        });
    }
    // Lexicographic rank: coordinate 0 is the most significant digit.
    let rank = |bits: u64| (0..n).fold(0u64, |acc, i| (acc << 1) | (bits >> i & 1));
    let mut best_e = f64::INFINITY;
    let mut best_bits = 0u64;
    let mut best_rank = u64::MAX;
    scan_vertices(p, 1.0, |bits, e| {
        let tol = 1e-9 * (1.0 + e.abs());
        if e < best_e - tol {
            best_e = e;
            best_bits = bits;
            best_rank = rank(bits);
        } else if e <= best_e + tol {
            let r = rank(bits);
            if r < best_rank {
                best_rank = r;
                best_bits = bits;
                best_e = best_e.min(e);
            }
        }
    });
    let sigma = vertex_from_bits(n, best_bits, 1.0);
    let energy = p.energy_of(&sigma);
    Ok((DiscreteSpins::from_reals(&sigma)?, energy))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlEstimate {
    /// `min` over samples of `||grad E||^2 / (2 (E - E*))`.
    pub mu_hat: f64,
    pub sample_count: usize,
    pub min_ratio_location: SpinState,
}

/// Gap below which a sample is treated as sitting at the optimum.
pub const PL_GAP_FLOOR: f64 = 1e-12;

/// Empirical PL constant from box-uniform samples.
pub fn pl_constant_estimate(
    p: &CouplingProblem,
    e_star: f64,
    sample_count: usize,
    seed: u64,
) -> Result<PlEstimate> {
    if sample_count < 1000 {
        return Err(crate::error::param(
            "sample_count",
            format!("need at least 1000 samples, got {sample_count}"),
        ));
    }
    let n = p.n();
    let mut rng = substream(seed, 0);
    let mut s = vec![0.0; n];
    let mut grad = vec![0.0; n];
    let mut best: Option<(f64, Vec<f64>)> = None;
    for _ in 0..sample_count {
        for x in s.iter_mut() {
            *x = rng.random_range(-0.5..=0.5);
        }
        let gap = p.energy_of(&s) - e_star;
        if gap < PL_GAP_FLOOR {
            continue;
        }
        p.gradient_into(&s, &mut grad);
        let ratio = 0.5 * grad.iter().map(|g| g * g).sum::<f64>() / gap;
        if best.as_ref().is_none_or(|(b, _)| ratio < *b) {
            best = Some((ratio, s.clone()));
        }
    }
    let (mu_hat, location) = best.ok_or(EcimError::FlatObjective)?;
    if mu_hat.is_nan() || mu_hat <= 0.0 {
        return Err(EcimError::NonPositivePl(mu_hat));
    }
    Ok(PlEstimate {
        mu_hat,
        sample_count,
        min_ratio_location: SpinState::from_box_unchecked(location),
    })
}

/// Stationary-point structure of the relaxed objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StationaryRegime {
    /// Strictly convex; a single stationary point, the global minimum.
    UniqueMinimum,
    /// Convex with a flat direction; multiple global minima.
    MultipleMinima,
    /// Concave; stationary points are maxima and the minimum is on the boundary.
    ConcaveBoundary,
    /// Mixed curvature; only saddle points, minimum on the boundary.
    SaddleOnly,
    /// `Q = 0`; the objective is linear.
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DefinitenessClass {
    pub definiteness: Definiteness,
    pub regime: StationaryRegime,
    /// Noise is needed to leave unstable stationary points.
    pub noise_required: bool,
}

pub fn classify_definiteness(summary: &SpectralSummary) -> DefinitenessClass {
    let definiteness = summary.definiteness;
    let regime = match definiteness {
        Definiteness::PositiveDefinite => StationaryRegime::UniqueMinimum,
        Definiteness::PositiveSemidefinite => StationaryRegime::MultipleMinima,
        Definiteness::NegativeDefinite | Definiteness::NegativeSemidefinite => {
            StationaryRegime::ConcaveBoundary
        }
        Definiteness::Indefinite => StationaryRegime::SaddleOnly,
        Definiteness::Zero => StationaryRegime::Linear,
    };
    let noise_required = matches!(
        definiteness,
        Definiteness::NegativeDefinite
            | Definiteness::NegativeSemidefinite
            | Definiteness::Indefinite
    );
    DefinitenessClass {
        definiteness,
        regime,
        noise_required,
    }
}
