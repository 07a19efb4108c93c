//! Agent decomposition: index sets, entry ownership, the parent/child tree,
//! coupling (`S`) and uncoupling (`R`) sets, index reordering and step sizes.
//!
//! Agents and indices are 0-based throughout the library.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::factor::FactorState;
use crate::matrix::CoefficientMatrix;

/// An agent whose child shares a variable with its parent.
///
/// This breaks the "no shared variables between children and parent"
/// assumption used in some convergence arguments; the engines handle it, so it
/// is reported rather than rejected.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SharedThroughWarning {
    pub agent: usize,
    pub child: usize,
    pub parent: usize,
    pub indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentPartition {
    n: usize,
    sets: Vec<Vec<usize>>,
    owners: Vec<usize>,
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    coupling: Vec<Vec<usize>>,
    uncoupling: Vec<Vec<usize>>,
    home: Vec<usize>,
    warnings: Vec<SharedThroughWarning>,
}

fn sorted_unique(mut v: Vec<usize>) -> Vec<usize> {
    v.sort_unstable();
    v.dedup();
    v
}

fn intersect(a: &[usize], b: &[usize]) -> Vec<usize> {
    a.iter()
        .copied()
        .filter(|x| b.binary_search(x).is_ok())
        .collect()
}

impl AgentPartition {
    /// Validates the decomposition and builds the agent tree.
    ///
    /// `owners[k]` is the agent owning `matrix.entries()[k]`.
    ///
    /// The parent of agent `i > 0` is taken among lower-indexed agents that
    /// contain every index `i` shares with any lower-indexed agent. When
    /// several qualify, the one with the most neighbours in the overlap graph
    /// wins, then the lowest index.
    pub fn build(
        matrix: &CoefficientMatrix,
        sets: Vec<Vec<usize>>,
        owners: Vec<usize>,
    ) -> Result<Self> {
        let n = matrix.n();
        let m = sets.len();
        if m == 0 {
            return Err(Error::InvalidParameter(
                "at least one agent is required".into(),
            ));
        }
        let sets: Vec<Vec<usize>> = sets.into_iter().map(sorted_unique).collect();
        for (i, set) in sets.iter().enumerate() {
            if set.is_empty() {
                return Err(Error::InvalidParameter(format!(
                    "agent {i} has an empty index set"
                )));
            }
            if let Some(&j) = set.iter().find(|&&j| j >= n) {
                return Err(Error::InvalidParameter(format!(
                    "agent {i} lists index {j}, but n = {n}"
                )));
            }
        }

        let mut covered = vec![false; n];
        for set in &sets {
            for &j in set {
                covered[j] = true;
            }
        }
        if let Some(index) = covered.iter().position(|c| !c) {
            return Err(Error::OrphanIndex { index });
        }

        if owners.len() != matrix.nnz() {
            return Err(Error::DimensionMismatch(format!(
                "{} owners for {} matrix entries",
                owners.len(),
                matrix.nnz()
            )));
        }
        for (e, &owner) in matrix.entries().iter().zip(&owners) {
            let inside = |j: usize| sets.get(owner).is_some_and(|s| s.binary_search(&j).is_ok());
            if !inside(e.row) || !inside(e.col) {
                return Err(Error::OwnershipViolation {
                    row: e.row,
                    col: e.col,
                    owner,
                });
            }
        }

        // Overlap graph.
        let adjacent: Vec<Vec<usize>> = (0..m)
            .map(|i| {
                (0..m)
                    .filter(|&k| k != i && !intersect(&sets[i], &sets[k]).is_empty())
                    .collect()
            })
            .collect();
        let components = count_components(&adjacent);
        if components > 1 {
            return Err(Error::DisconnectedAgents { components });
        }

        let mut parent = vec![None; m];
        let mut seen: Vec<bool> = vec![false; n];
        for &j in &sets[0] {
            seen[j] = true;
        }
        for i in 1..m {
            let overlap: Vec<usize> = sets[i].iter().copied().filter(|&j| seen[j]).collect();
            let lower: Vec<usize> = (0..i)
                .filter(|&k| !intersect(&sets[i], &sets[k]).is_empty())
                .collect();
            let best = lower
                .iter()
                .copied()
                .filter(|&k| overlap.iter().all(|j| sets[k].binary_search(j).is_ok()))
                .max_by_key(|&k| (adjacent[k].len(), Reverse(k)));
            match best {
                Some(k) if !overlap.is_empty() => parent[i] = Some(k),
                _ => {
                    return Err(Error::MultipleParents {
                        agent: i,
                        overlaps: lower,
                    })
                }
            }
            for &j in &sets[i] {
                seen[j] = true;
            }
        }

        let mut children = vec![Vec::new(); m];
        for (i, p) in parent.iter().enumerate() {
            if let Some(p) = p {
                children[*p].push(i);
            }
        }
        let coupling: Vec<Vec<usize>> = (0..m)
            .map(|i| match parent[i] {
                Some(p) => intersect(&sets[i], &sets[p]),
                None => Vec::new(),
            })
            .collect();
        let uncoupling: Vec<Vec<usize>> = (0..m)
            .map(|i| {
                sets[i]
                    .iter()
                    .copied()
                    .filter(|j| coupling[i].binary_search(j).is_err())
                    .collect()
            })
            .collect();

        let mut home = vec![usize::MAX; n];
        for (i, r) in uncoupling.iter().enumerate() {
            for &j in r {
                if home[j] != usize::MAX {
                    // Cannot happen once the parent rule above has succeeded.
                    return Err(Error::MultipleParents {
                        agent: i,
                        overlaps: vec![home[j]],
                    });
                }
                home[j] = i;
            }
        }
        if let Some(index) = home.iter().position(|&h| h == usize::MAX) {
            return Err(Error::OrphanIndex { index });
        }

        let mut warnings = Vec::new();
        for i in 0..m {
            let Some(p) = parent[i] else { continue };
            for &c in &children[i] {
                let indices = intersect(&coupling[c], &coupling[i]);
                if !indices.is_empty() {
                    log::warn!("agent {i}: child {c} shares indices {indices:?} with parent {p}");
                    warnings.push(SharedThroughWarning {
                        agent: i,
                        child: c,
                        parent: p,
                        indices,
                    });
                }
            }
        }

        Ok(Self {
            n,
            sets,
            owners,
            parent,
            children,
            coupling,
            uncoupling,
            home,
            warnings,
        })
    }

    /// One agent holding every index and every entry.
    pub fn single(matrix: &CoefficientMatrix) -> Result<Self> {
        Self::build(
            matrix,
            vec![(0..matrix.n()).collect()],
            vec![0; matrix.nnz()],
        )
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of agents.
    pub fn m(&self) -> usize {
        self.sets.len()
    }

    pub fn set(&self, agent: usize) -> &[usize] {
        &self.sets[agent]
    }

    pub fn sets(&self) -> &[Vec<usize>] {
        &self.sets
    }

    /// Owner of each matrix entry, aligned with `CoefficientMatrix::entries`.
    pub fn owners(&self) -> &[usize] {
        &self.owners
    }

    pub fn parent(&self, agent: usize) -> Option<usize> {
        self.parent[agent]
    }

    pub fn children(&self, agent: usize) -> &[usize] {
        &self.children[agent]
    }

    /// `S`: indices shared with the parent.
    pub fn coupling(&self, agent: usize) -> &[usize] {
        &self.coupling[agent]
    }

    /// `R`: indices the agent updates.
    pub fn uncoupling(&self, agent: usize) -> &[usize] {
        &self.uncoupling[agent]
    }

    /// The agent that updates column `j`.
    pub fn home(&self, j: usize) -> usize {
        self.home[j]
    }

    pub fn warnings(&self) -> &[SharedThroughWarning] {
        &self.warnings
    }

    /// Number of shared variables, `sum_i |S_i|`.
    pub fn shared_count(&self) -> usize {
        self.coupling.iter().map(Vec::len).sum()
    }

    /// Agents in the subtree rooted at `agent` that hold index `j`.
    pub fn holders_below(&self, agent: usize, j: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack: Vec<usize> = self.children[agent].clone();
        while let Some(c) = stack.pop() {
            if self.coupling[c].binary_search(&j).is_ok() {
                out.push(c);
                stack.extend_from_slice(&self.children[c]);
            }
        }
        out.sort_unstable();
        out
    }

    /// First violation of the ordering `R_child < R_i < S_i`, if any.
    pub fn ordering_violation(&self) -> Option<String> {
        for i in 0..self.m() {
            let r = &self.uncoupling[i];
            let (Some(&r_min), Some(&r_max)) = (r.first(), r.last()) else {
                continue;
            };
            for &c in &self.children[i] {
                if let Some(&c_max) = self.subtree_uncoupled_max(c).as_ref() {
                    if c_max >= r_min {
                        return Some(format!(
                            "agent {i}: index {c_max} below child {c} is not before {r_min}"
                        ));
                    }
                }
            }
            if let Some(&s_min) = self.coupling[i].first() {
                if r_max >= s_min {
                    return Some(format!(
                        "agent {i}: uncoupled index {r_max} is not before coupled index {s_min}"
                    ));
                }
            }
        }
        None
    }

    fn subtree_uncoupled_max(&self, agent: usize) -> Option<usize> {
        let mut best = self.uncoupling[agent].last().copied();
        for &c in &self.children[agent] {
            best = best.max(self.subtree_uncoupled_max(c));
        }
        best
    }

    /// Renames index `j` to `perm.forward[j]`. Entry ownership is unchanged
    /// because [`CoefficientMatrix::relabel`] keeps entry order.
    pub fn relabel(&self, matrix: &CoefficientMatrix, perm: &Permutation) -> Result<Self> {
        let sets = self
            .sets
            .iter()
            .map(|s| s.iter().map(|&j| perm.forward[j]).collect())
            .collect();
        Self::build(&matrix.relabel(&perm.forward)?, sets, self.owners.clone())
    }
}

fn count_components(adjacent: &[Vec<usize>]) -> usize {
    let m = adjacent.len();
    let mut seen = vec![false; m];
    let mut components = 0;
    for start in 0..m {
        if seen[start] {
            continue;
        }
        components += 1;
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(i) = stack.pop() {
            for &k in &adjacent[i] {
                if !seen[k] {
                    seen[k] = true;
                    stack.push(k);
                }
            }
        }
    }
    components
}

/// A relabelling of `0..n`: old index `j` becomes `forward[j]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation {
    pub forward: Vec<usize>,
    pub inverse: Vec<usize>,
}

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Self {
            forward: (0..n).collect(),
            inverse: (0..n).collect(),
        }
    }

    pub fn from_forward(forward: Vec<usize>) -> Result<Self> {
        let n = forward.len();
        let mut inverse = vec![usize::MAX; n];
        for (j, &f) in forward.iter().enumerate() {
            if f >= n || inverse[f] != usize::MAX {
                return Err(Error::InvalidParameter("not a permutation".into()));
            }
            inverse[f] = j;
        }
        Ok(Self { forward, inverse })
    }

    pub fn is_identity(&self) -> bool {
        self.forward.iter().enumerate().all(|(j, &f)| j == f)
    }

    pub fn inverted(&self) -> Self {
        Self {
            forward: self.inverse.clone(),
            inverse: self.forward.clone(),
        }
    }
}

/// Finds a relabelling under which every agent's uncoupled indices come after
/// those of its whole subtree and before its coupled indices.
///
/// Ties are broken by the original index, so an order that already satisfies
/// the constraints maps to the identity.
pub fn reorder_indices(partition: &AgentPartition) -> Result<Permutation> {
    let n = partition.n();
    let m = partition.m();
    // Nodes 0..n are indices; n + i is a barrier meaning "subtree of i done".
    let total = n + m;
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); total];
    for i in 0..m {
        let barrier = n + i;
        for &j in partition.uncoupling(i) {
            succ[j].push(barrier);
        }
        for &j in partition.coupling(i) {
            succ[barrier].push(j);
        }
        for &c in partition.children(i) {
            succ[n + c].push(barrier);
            for &j in partition.uncoupling(i) {
                succ[n + c].push(j);
            }
        }
    }
    let mut indegree = vec![0usize; total];
    for list in &succ {
        for &v in list {
            indegree[v] += 1;
        }
    }
    // Barriers first, then indices by original label.
    let key = |v: usize| if v >= n { (0, v) } else { (1, v) };
    let mut ready: BinaryHeap<Reverse<(u8, usize)>> = (0..total)
        .filter(|&v| indegree[v] == 0)
        .map(|v| Reverse(key(v)))
        .collect();
    let mut forward = vec![usize::MAX; n];
    let mut next = 0;
    let mut visited = 0;
    while let Some(Reverse((_, v))) = ready.pop() {
        visited += 1;
        if v < n {
            forward[v] = next;
            next += 1;
        }
        for &w in &succ[v] {
            indegree[w] -= 1;
            if indegree[w] == 0 {
                ready.push(Reverse(key(w)));
            }
        }
    }
    if visited != total {
        return Err(Error::CyclicPrecedence);
    }
    Permutation::from_forward(forward)
}

/// Per-column step sizes `theta_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSizes {
    theta: Vec<f64>,
}

impl StepSizes {
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        if let Some(t) = theta.iter().find(|t| !t.is_finite() || **t <= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "step size {t} is not positive"
            )));
        }
        Ok(Self { theta })
    }

    pub fn uniform(n: usize, theta: f64) -> Result<Self> {
        Self::new(vec![theta; n])
    }

    pub fn get(&self, j: usize) -> f64 {
        self.theta[j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.theta
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn permuted(&self, perm: &Permutation) -> Self {
        let mut theta = vec![0.0; self.theta.len()];
        for (j, &t) in self.theta.iter().enumerate() {
            theta[perm.forward[j]] = t;
        }
        Self { theta }
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma < 1.0 {
        Ok(())
    } else {
        Err(Error::BadSigma(sigma))
    }
}

fn check_n(partition: &AgentPartition, matrix: &CoefficientMatrix) -> Result<()> {
    if partition.n() != matrix.n() {
        return Err(Error::DimensionMismatch(format!(
            "partition has n = {}, matrix has n = {}",
            partition.n(),
            matrix.n()
        )));
    }
    Ok(())
}

/// `theta_j = (1 - sigma) / ||M[j, :]||_1`, or 1 for an all-zero row.
///
/// The full row norm is used. It equals the sum over the home agent and its
/// children, except when a deeper descendant owns entries of row `j`, where
/// the full norm is the one that keeps the normalization well defined.
pub fn sync_step_sizes(
    partition: &AgentPartition,
    matrix: &CoefficientMatrix,
    sigma: f64,
) -> Result<StepSizes> {
    check_sigma(sigma)?;
    check_n(partition, matrix)?;
    let theta = (0..matrix.n())
        .map(|j| {
            let norm = matrix.row_l1_norm(j);
            if norm > 0.0 {
                (1.0 - sigma) / norm
            } else {
                1.0
            }
        })
        .collect();
    StepSizes::new(theta)
}

/// Largest row 1-norm of the entries each agent owns, doubled, over agents.
pub fn lipschitz_bound(partition: &AgentPartition, matrix: &CoefficientMatrix) -> f64 {
    let m = partition.m();
    let mut row_sums = vec![vec![0.0; matrix.n()]; m];
    for (e, &owner) in matrix.entries().iter().zip(partition.owners()) {
        row_sums[owner][e.row] += e.weight;
        row_sums[owner][e.col] += e.weight;
    }
    row_sums
        .iter()
        .flat_map(|rows| rows.iter().copied())
        .fold(0.0, f64::max)
        * 2.0
}

/// `theta = (1 - sigma) / ((1 + B + nB) L)` for every column, or 1 when `M = 0`.
pub fn async_step_sizes(
    partition: &AgentPartition,
    matrix: &CoefficientMatrix,
    b: usize,
    sigma: f64,
) -> Result<StepSizes> {
    check_sigma(sigma)?;
    check_n(partition, matrix)?;
    if b == 0 {
        return Err(Error::InvalidParameter("B must be at least 1".into()));
    }
    let n = matrix.n();
    let l = lipschitz_bound(partition, matrix);
    if l == 0.0 {
        return StepSizes::uniform(n, 1.0);
    }
    let theta = (1.0 - sigma) / ((1 + b + n * b) as f64 * l);
    StepSizes::uniform(n, theta)
}

/// Checks unit columns and matching shapes before a run.
pub(crate) fn check_run_inputs(
    matrix: &CoefficientMatrix,
    partition: &AgentPartition,
    steps: &StepSizes,
    init: &FactorState,
) -> Result<()> {
    check_n(partition, matrix)?;
    if steps.len() != matrix.n() || init.n() != matrix.n() {
        return Err(Error::DimensionMismatch(format!(
            "n = {}, but {} step sizes and {} columns",
            matrix.n(),
            steps.len(),
            init.n()
        )));
    }
    Ok(())
}
