//! Dense reference computations written independently of the library kernels.
#![allow(dead_code)]

use diagsdp::instances::{self, Instance};
use diagsdp::{AgentPartition, CoefficientMatrix, FactorState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Cols = Vec<Vec<f64>>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn dense(m: &CoefficientMatrix) -> Vec<Vec<f64>> {
    let mut a = vec![vec![0.0; m.n()]; m.n()];
    for e in m.entries() {
        a[e.row][e.col] = e.weight;
        a[e.col][e.row] = e.weight;
    }
    a
}

pub fn cols(v: &FactorState) -> Cols {
    v.columns().map(|c| c.to_vec()).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn unit(x: &[f64]) -> Vec<f64> {
    let r = dot(x, x).sqrt();
    x.iter().map(|v| v / r).collect()
}

/// `sum_{j,l} A[j][l] <v_j, v_l>`.
pub fn dense_objective(a: &[Vec<f64>], v: &Cols) -> f64 {
    let n = a.len();
    let mut f = 0.0;
    for j in 0..n {
        for l in 0..n {
            f += a[j][l] * dot(&v[j], &v[l]);
        }
    }
    f
}

fn dense_row(a: &[Vec<f64>], v: &Cols, j: usize) -> Vec<f64> {
    let mut g = vec![0.0; v[0].len()];
    for (l, w) in a[j].iter().enumerate() {
        for k in 0..g.len() {
            g[k] += w * v[l][k];
        }
    }
    g
}

pub fn dense_grad_norm(a: &[Vec<f64>], v: &Cols) -> f64 {
    (0..a.len())
        .map(|j| {
            let g = dense_row(a, v, j);
            dot(&g, &g) - dot(&v[j], &g).powi(2)
        })
        .sum::<f64>()
        .max(0.0)
        .sqrt()
}

fn step(v: &[f64], g: &[f64], theta: f64) -> Option<Vec<f64>> {
    if g.iter().all(|&x| x == 0.0) {
        return None;
    }
    let x: Vec<f64> = v.iter().zip(g).map(|(a, b)| a - theta * b).collect();
    Some(unit(&x))
}

/// Gauss–Seidel pass visiting columns in `order`.
pub fn dense_mixing(a: &[Vec<f64>], v: &Cols, theta: &[f64], order: &[usize]) -> Cols {
    let mut out = v.clone();
    for &j in order {
        let g = dense_row(a, &out, j);
        if let Some(x) = step(&out[j], &g, theta[j]) {
            out[j] = x;
        }
    }
    out
}

/// Every column moves against the same old factor.
pub fn dense_jacobi(a: &[Vec<f64>], v: &Cols, theta: &[f64]) -> Cols {
    (0..a.len())
        .map(|j| step(&v[j], &dense_row(a, v, j), theta[j]).unwrap_or_else(|| v[j].clone()))
        .collect()
}

pub fn subtree(partition: &AgentPartition, agent: usize) -> Vec<usize> {
    let mut out = vec![agent];
    let mut k = 0;
    while k < out.len() {
        out.extend_from_slice(partition.children(out[k]));
        k += 1;
    }
    out
}

/// `sum of w * v_l` over entries `(j, l)` owned inside the subtree of `agent`.
pub fn subtree_row_sum(
    m: &CoefficientMatrix,
    partition: &AgentPartition,
    agent: usize,
    j: usize,
    v: &Cols,
) -> Vec<f64> {
    let agents = subtree(partition, agent);
    let mut acc = vec![0.0; v[0].len()];
    for (e, &owner) in m.entries().iter().zip(partition.owners()) {
        if !agents.contains(&owner) {
            continue;
        }
        let other = if e.row == j {
            e.col
        } else if e.col == j {
            e.row
        } else {
            continue;
        };
        for k in 0..acc.len() {
            acc[k] += e.weight * v[other][k];
        }
    }
    acc
}

pub fn max_col_diff(a: &Cols, b: &Cols) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}

pub fn example_one_random(seed: u64) -> Instance {
    let mut r = rng(seed);
    instances::example_one(|| r.random_range(0.05..1.0))
}

pub fn random_tree(seed: u64) -> Instance {
    instances::random_tree(&mut rng(seed))
}

/// Erdős–Rényi graph with U[0, 1] weights held by one agent.
pub fn random_graph(seed: u64, n: usize, density: f64) -> Instance {
    let mut r = rng(seed);
    let mut triples = Vec::new();
    for j in 0..n {
        for l in j + 1..n {
            if r.random_bool(density) {
                triples.push((j, l, r.random::<f64>()));
            }
        }
    }
    Instance::centralized(CoefficientMatrix::new(n, triples).unwrap()).unwrap()
}

/// Minimum of the unit-weight triangle objective over planar configurations,
/// with the first column fixed at angle 0.
pub fn triangle_grid_minimum(steps: usize) -> f64 {
    let mut best = f64::INFINITY;
    let h = std::f64::consts::TAU / steps as f64;
    for a in 0..steps {
        for b in 0..steps {
            let (x, y) = (a as f64 * h, b as f64 * h);
            let f = 2.0 * (x.cos() + y.cos() + (x - y).cos());
            best = best.min(f);
        }
    }
    best
}
