//! Centralized reference computations: the mixing sweep, exhaustive MAXCUT,
//! hyperplane rounding and the relaxation bound.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::factor::{axpy, dot, norm, normalize, FactorState};
use crate::matrix::CoefficientMatrix;
use crate::partition::StepSizes;

/// Largest `n` accepted by [`brute_force_maxcut`].
pub const BRUTE_FORCE_MAX_N: usize = 24;

/// One Gauss–Seidel pass `j = 0..n` of
/// `v_j <- normalize(v_j - theta_j * sum_l M[j][l] v_l)`, always using the
/// newest available columns. Columns with an empty row or a zero sum stay put.
pub fn mixing_sweep(
    matrix: &CoefficientMatrix,
    v: &FactorState,
    steps: &StepSizes,
) -> Result<FactorState> {
    if matrix.n() != v.n() || steps.len() != v.n() {
        return Err(Error::DimensionMismatch(format!(
            "matrix n = {}, factor n = {}, {} step sizes",
            matrix.n(),
            v.n(),
            steps.len()
        )));
    }
    let mut out = v.clone();
    let p = v.p();
    for j in 0..v.n() {
        let row = matrix.row(j);
        if row.is_empty() {
            continue;
        }
        let mut g = vec![0.0; p];
        for item in row {
            axpy(&mut g, item.weight, out.column(item.col));
        }
        if g.iter().all(|&x| x == 0.0) {
            continue;
        }
        let theta = steps.get(j);
        let x: Vec<f64> = out
            .column(j)
            .iter()
            .zip(&g)
            .map(|(a, b)| a - theta * b)
            .collect();
        let unit = normalize(&x)?;
        out.column_mut(j).copy_from_slice(&unit);
    }
    Ok(out)
}

/// A `±1` label per node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CutAssignment {
    pub signs: Vec<i8>,
}

impl CutAssignment {
    pub fn len(&self) -> usize {
        self.signs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signs.is_empty()
    }

    /// The same cut with every label flipped.
    pub fn flipped(&self) -> Self {
        Self {
            signs: self.signs.iter().map(|s| -s).collect(),
        }
    }
}

/// `1/4 sum_{j,l} M[j][l] (1 - x_j x_l)`, i.e. the weight of cut entries.
pub fn cut_value(matrix: &CoefficientMatrix, cut: &CutAssignment) -> Result<f64> {
    if cut.len() != matrix.n() {
        return Err(Error::DimensionMismatch(format!(
            "{} labels for n = {}",
            cut.len(),
            matrix.n()
        )));
    }
    Ok(matrix
        .entries()
        .iter()
        .filter(|e| cut.signs[e.row] != cut.signs[e.col])
        .fold(0.0, |acc, e| acc + e.weight))
}

/// Exhaustive maximum cut with node 0 fixed to `+1`, enumerated in Gray-code
/// order so each step flips one label.
pub fn brute_force_maxcut(matrix: &CoefficientMatrix) -> Result<(f64, CutAssignment)> {
    let n = matrix.n();
    if n > BRUTE_FORCE_MAX_N {
        return Err(Error::TooLarge {
            n,
            max: BRUTE_FORCE_MAX_N,
        });
    }
    let mut signs = vec![1i8; n];
    let mut value = 0.0;
    let mut best_value = 0.0;
    let mut best = signs.clone();
    let steps: u64 = 1 << (n - 1);
    for step in 1..steps {
        // Flip node 1 + (index of the lowest set bit of `step`).
        let k = 1 + step.trailing_zeros() as usize;
        let delta: f64 = matrix
            .row(k)
            .iter()
            .map(|item| {
                if signs[item.col] == signs[k] {
                    item.weight
                } else {
                    -item.weight
                }
            })
            .sum();
        signs[k] = -signs[k];
        value += delta;
        if value > best_value {
            best_value = value;
            best.copy_from_slice(&signs);
        }
    }
    let best = CutAssignment { signs: best };
    // Recompute exactly to shed accumulated rounding.
    Ok((cut_value(matrix, &best)?, best))
}

/// Best cut over `trials` random hyperplanes: `x_j = sign(r . v_j)` with
/// `sign(0) = +1`. Trial `k` draws `r` from a ChaCha stream `k` seeded by
/// `seed`, so trials are independent of evaluation order.
pub fn hyperplane_round(
    v: &FactorState,
    matrix: &CoefficientMatrix,
    trials: usize,
    seed: u64,
) -> Result<(f64, CutAssignment)> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    if v.n() != matrix.n() {
        return Err(Error::DimensionMismatch(format!(
            "factor n = {}, matrix n = {}",
            v.n(),
            matrix.n()
        )));
    }
    let mut best: Option<(f64, CutAssignment)> = None;
    for trial in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(trial as u64);
        let r: Vec<f64> = (0..v.p()).map(|_| rng.sample(StandardNormal)).collect();
        let cut = CutAssignment {
            signs: v
                .columns()
                .map(|c| if dot(&r, c) >= 0.0 { 1 } else { -1 })
                .collect(),
        };
        let value = cut_value(matrix, &cut)?;
        if best.as_ref().is_none_or(|(b, _)| value > *b) {
            best = Some((value, cut));
        }
    }
    Ok(best.expect("at least one trial"))
}

/// `1/4 (sum_{j,l} M[j][l] - f_star)`.
pub fn sdp_cut_bound(matrix: &CoefficientMatrix, f_star: f64) -> f64 {
    (matrix.total_weight() - f_star) / 4.0
}

/// Centralized Jacobi step: every column moves using the same old factor.
pub fn jacobi_step(
    matrix: &CoefficientMatrix,
    v: &FactorState,
    steps: &StepSizes,
) -> Result<FactorState> {
    let mut out = v.clone();
    for j in 0..v.n() {
        let row = matrix.row(j);
        if row.is_empty() {
            continue;
        }
        let mut g = vec![0.0; v.p()];
        for item in row {
            axpy(&mut g, item.weight, v.column(item.col));
        }
        if norm(&g) == 0.0 {
            continue;
        }
        let theta = steps.get(j);
        let x: Vec<f64> = v
            .column(j)
            .iter()
            .zip(&g)
            .map(|(a, b)| a - theta * b)
            .collect();
        out.column_mut(j).copy_from_slice(&normalize(&x)?);
    }
    Ok(out)
}
