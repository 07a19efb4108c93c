//! The low-rank factor `V` (`X = V^T V`) and the global diagnostics on it.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::matrix::{CoefficientMatrix, DenseMatrix};

/// Vectors with norm at or below this are rejected by [`normalize`].
pub const ZERO_NORM: f64 = 1e-300;

/// Tolerance on `| ||v_j|| - 1 |` accepted by [`FactorState::new`].
pub const UNIT_TOL: f64 = 1e-12;

/// `p x n` factor with unit-norm columns, stored column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorState {
    p: usize,
    n: usize,
    data: Vec<f64>,
}

impl FactorState {
    /// Wraps column-major data, checking every column for unit norm.
    pub fn new(p: usize, n: usize, data: Vec<f64>) -> Result<Self> {
        if p == 0 || n == 0 {
            return Err(Error::DimensionMismatch(format!(
                "factor must have positive shape, got {p} x {n}"
            )));
        }
        if data.len() != p * n {
            return Err(Error::DimensionMismatch(format!(
                "expected {} values for a {p} x {n} factor, got {}",
                p * n,
                data.len()
            )));
        }
        let state = Self { p, n, data };
        for j in 0..n {
            let deviation = (norm(state.column(j)) - 1.0).abs();
            if deviation.is_nan() || deviation > UNIT_TOL {
                return Err(Error::NotUnitNorm {
                    index: j,
                    deviation,
                });
            }
        }
        Ok(state)
    }

    /// Builds a factor from a list of columns (each of length `p`).
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let p = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != p) {
            return Err(Error::DimensionMismatch(
                "columns have different lengths".into(),
            ));
        }
        Self::new(p, columns.len(), columns.concat())
    }

    /// I.i.d. standard normal columns, each normalized.
    pub fn random<R: Rng + ?Sized>(p: usize, n: usize, rng: &mut R) -> Result<Self> {
        let mut data = Vec::with_capacity(p * n);
        for _ in 0..n {
            let col = random_unit(p, rng)?;
            data.extend_from_slice(&col);
        }
        Self::new(p, n, data)
    }

    /// Every column equal to one random unit vector.
    pub fn common<R: Rng + ?Sized>(p: usize, n: usize, rng: &mut R) -> Result<Self> {
        let v0 = random_unit(p, rng)?;
        Self::new(p, n, v0.repeat(n))
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.data[j * self.p..(j + 1) * self.p]
    }

    pub(crate) fn column_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.p..(j + 1) * self.p]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.p)
    }

    /// Column-major raw values.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Column `forward[j]` of the result is column `j` of `self`.
    pub fn permuted(&self, forward: &[usize]) -> Result<Self> {
        if forward.len() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "permutation of length {} for n = {}",
                forward.len(),
                self.n
            )));
        }
        let mut data = vec![0.0; self.data.len()];
        for (j, &target) in forward.iter().enumerate() {
            data[target * self.p..(target + 1) * self.p].copy_from_slice(self.column(j));
        }
        Ok(Self {
            p: self.p,
            n: self.n,
            data,
        })
    }

    /// Largest `||v_j - w_j||` over columns.
    pub fn max_column_distance(&self, other: &FactorState) -> f64 {
        self.columns()
            .zip(other.columns())
            .map(|(a, b)| distance(a, b))
            .fold(0.0, f64::max)
    }
}

fn random_unit<R: Rng + ?Sized>(p: usize, rng: &mut R) -> Result<Vec<f64>> {
    loop {
        let x: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        match normalize(&x) {
            Ok(v) => return Ok(v),
            // A draw of exactly zero is possible only in principle; redraw.
            Err(Error::ZeroVector { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// `acc += w * x`
pub(crate) fn axpy(acc: &mut [f64], w: f64, x: &[f64]) {
    for (a, v) in acc.iter_mut().zip(x) {
        *a += w * v;
    }
}

/// `x / ||x||`.
pub fn normalize(x: &[f64]) -> Result<Vec<f64>> {
    let nrm = norm(x);
    if !nrm.is_finite() || nrm <= ZERO_NORM {
        return Err(Error::ZeroVector { norm: nrm });
    }
    Ok(x.iter().map(|v| v / nrm).collect())
}

fn check_dims(m: &CoefficientMatrix, v: &FactorState) -> Result<()> {
    if m.n() != v.n() {
        return Err(Error::DimensionMismatch(format!(
            "matrix has n = {}, factor has n = {}",
            m.n(),
            v.n()
        )));
    }
    Ok(())
}

/// `f(V) = <M, V^T V>`, summed over stored entries (each counted twice).
pub fn objective(m: &CoefficientMatrix, v: &FactorState) -> Result<f64> {
    check_dims(m, v)?;
    Ok(2.0
        * m.entries()
            .iter()
            .map(|e| e.weight * dot(v.column(e.row), v.column(e.col)))
            .fold(0.0, |acc, x| acc + x))
}

/// `g_j = sum_l M[j][l] v_l`.
pub fn row_product(m: &CoefficientMatrix, v: &FactorState, j: usize) -> Vec<f64> {
    let mut g = vec![0.0; v.p()];
    for item in m.row(j) {
        axpy(&mut g, item.weight, v.column(item.col));
    }
    g
}

/// `sqrt(sum_j ||g_j||^2 - <v_j, g_j>^2)`.
///
/// Evaluated as the norm of the tangent projection `g_j - <v_j, g_j> v_j`,
/// which avoids cancellation at critical points.
pub fn riemannian_grad_norm(m: &CoefficientMatrix, v: &FactorState) -> Result<f64> {
    check_dims(m, v)?;
    let mut total = 0.0;
    for j in 0..v.n() {
        let mut g = row_product(m, v, j);
        let vj = v.column(j);
        let along = dot(vj, &g);
        axpy(&mut g, -along, vj);
        total += dot(&g, &g);
    }
    Ok(total.sqrt())
}

/// `X = V^T V`.
pub fn gram(v: &FactorState) -> DenseMatrix {
    let n = v.n();
    let mut x = DenseMatrix::zeros(n);
    for i in 0..n {
        for j in i..n {
            let value = dot(v.column(i), v.column(j));
            x.set(i, j, value);
            x.set(j, i, value);
        }
    }
    x
}

/// `ceil(sqrt(2n)) + 1`.
pub fn choose_rank(n: usize) -> usize {
    let target = 2 * n;
    let mut r = (target as f64).sqrt() as usize;
    while r * r > target {
        r -= 1;
    }
    while r * r < target {
        r += 1;
    }
    r + 1
}

/// `p x p` matrix `A B^T` for column-major `p x n` factors.
fn outer(a: &[f64], b: &[f64], p: usize) -> Vec<f64> {
    let mut out = vec![0.0; p * p];
    for (ca, cb) in a.chunks_exact(p).zip(b.chunks_exact(p)) {
        for r in 0..p {
            for c in 0..p {
                out[r * p + c] += ca[r] * cb[c];
            }
        }
    }
    out
}

/// `||X_new - X_old||_F` without forming the `n x n` Gram matrices.
///
/// The square is accurate to rounding; near zero the root is only accurate
/// to about `1e-8`.
pub fn dx_fro(old: &FactorState, new: &FactorState) -> Result<f64> {
    if old.p() != new.p() || old.n() != new.n() {
        return Err(Error::DimensionMismatch(
            "factors have different shapes".into(),
        ));
    }
    let p = old.p();
    let u = old.as_slice();
    let v = new.as_slice();
    let d: Vec<f64> = v.iter().zip(u).map(|(a, b)| a - b).collect();
    let dd = outer(&d, &d, p);
    let vv = outer(v, v, p);
    let uu = outer(u, u, p);
    let vd = outer(v, &d, p);
    let du = outer(&d, u, p);
    let sq = dot(&dd, &vv) + dot(&uu, &dd) + 2.0 * dot(&vd, &du);
    Ok(sq.max(0.0).sqrt())
}

/// `p x p` Gram matrix `V V^T` of the factor (row-major).
pub(crate) fn small_gram(v: &FactorState) -> Vec<f64> {
    outer(v.as_slice(), v.as_slice(), v.p())
}

fn add_outer(out: &mut [f64], a: &[f64], b: &[f64], scale: f64) {
    let p = a.len();
    for r in 0..p {
        let ar = scale * a[r];
        for c in 0..p {
            out[r * p + c] += ar * b[c];
        }
    }
}

/// [`dx_fro`] when only some columns changed. `uu` is the small Gram of
/// `old`; the small Gram of `new` is returned alongside the distance.
pub(crate) fn dx_fro_incremental(
    old: &FactorState,
    new: &FactorState,
    uu: &[f64],
) -> (f64, Vec<f64>) {
    let p = old.p();
    let mut vv = uu.to_vec();
    let mut dd = vec![0.0; p * p];
    let mut vd = vec![0.0; p * p];
    let mut du = vec![0.0; p * p];
    let mut d = vec![0.0; p];
    for j in 0..old.n() {
        let (u, v) = (old.column(j), new.column(j));
        if u == v {
            continue;
        }
        for k in 0..p {
            d[k] = v[k] - u[k];
        }
        add_outer(&mut dd, &d, &d, 1.0);
        add_outer(&mut vd, v, &d, 1.0);
        add_outer(&mut du, &d, u, 1.0);
        add_outer(&mut vv, v, v, 1.0);
        add_outer(&mut vv, u, u, -1.0);
    }
    let sq = dot(&dd, &vv) + dot(uu, &dd) + 2.0 * dot(&vd, &du);
    (sq.max(0.0).sqrt(), vv)
}
