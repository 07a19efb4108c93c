//! Distributed synchronous algorithm.
//!
//! One sweep visits agents from the highest index down to the root. Each
//! agent updates its uncoupled columns in increasing index order, combining
//! its own rows of `M` with the messages of its children, and pushes every new
//! column to the descendants that share it.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::factor::{self, axpy, distance, norm, FactorState};
use crate::matrix::CoefficientMatrix;
use crate::partition::{check_run_inputs, reorder_indices, AgentPartition, Permutation, StepSizes};
use crate::trace::{Trace, TraceRow};

/// Moves `v` to `normalize(v - theta * bracket)`.
///
/// Returns the pre-normalization norm `y`, or `None` when `v` is left in place
/// because the bracket is exactly zero.
pub(crate) fn sphere_step(v: &mut [f64], theta: f64, bracket: &[f64]) -> Result<Option<f64>> {
    if bracket.iter().all(|&b| b == 0.0) {
        return Ok(None);
    }
    let x: Vec<f64> = v.iter().zip(bracket).map(|(a, b)| a - theta * b).collect();
    let y = norm(&x);
    let unit = factor::normalize(&x)?;
    v.copy_from_slice(&unit);
    Ok(Some(y))
}

/// Per-agent owned rows: `rows[slot_j]` lists `(slot_l, weight)` in local slots.
pub(crate) fn owned_rows(
    matrix: &CoefficientMatrix,
    partition: &AgentPartition,
) -> Vec<Vec<Vec<(usize, f64)>>> {
    let mut rows: Vec<Vec<Vec<(usize, f64)>>> = partition
        .sets()
        .iter()
        .map(|s| vec![Vec::new(); s.len()])
        .collect();
    for (e, &owner) in matrix.entries().iter().zip(partition.owners()) {
        let set = partition.set(owner);
        let a = set.binary_search(&e.row).expect("owner holds row");
        let b = set.binary_search(&e.col).expect("owner holds col");
        rows[owner][a].push((b, e.weight));
        rows[owner][b].push((a, e.weight));
    }
    for agent in &mut rows {
        for row in agent {
            row.sort_by_key(|item| item.0);
        }
    }
    rows
}

/// State of the synchronous simulator on an already ordered problem.
#[derive(Debug, Clone)]
pub struct SyncEngine<'a> {
    matrix: &'a CoefficientMatrix,
    partition: &'a AgentPartition,
    steps: &'a StepSizes,
    p: usize,
    /// `cols[i]` holds agent `i`'s copies of the columns in `J_i`, in set order.
    cols: Vec<Vec<f64>>,
    owned: Vec<Vec<Vec<(usize, f64)>>>,
    done: Vec<bool>,
    y: Vec<f64>,
}

impl<'a> SyncEngine<'a> {
    pub fn new(
        matrix: &'a CoefficientMatrix,
        partition: &'a AgentPartition,
        steps: &'a StepSizes,
        init: &FactorState,
    ) -> Result<Self> {
        check_run_inputs(matrix, partition, steps, init)?;
        let p = init.p();
        let cols = partition
            .sets()
            .iter()
            .map(|s| {
                s.iter()
                    .flat_map(|&j| init.column(j).iter().copied())
                    .collect()
            })
            .collect();
        Ok(Self {
            matrix,
            partition,
            steps,
            p,
            cols,
            owned: owned_rows(matrix, partition),
            done: vec![true; partition.m()],
            y: vec![1.0; matrix.n()],
        })
    }

    fn slot(&self, agent: usize, j: usize) -> Result<usize> {
        self.partition
            .set(agent)
            .binary_search(&j)
            .map_err(|_| Error::NotCoupled { agent, index: j })
    }

    /// Agent `agent`'s current copy of column `j`.
    pub fn column(&self, agent: usize, j: usize) -> Result<&[f64]> {
        let s = self.slot(agent, j)?;
        Ok(&self.cols[agent][s * self.p..(s + 1) * self.p])
    }

    fn own_row_sum(&self, agent: usize, slot: usize) -> Vec<f64> {
        let mut acc = vec![0.0; self.p];
        let local = &self.cols[agent];
        for &(l, w) in &self.owned[agent][slot] {
            axpy(&mut acc, w, &local[l * self.p..(l + 1) * self.p]);
        }
        acc
    }

    /// Sum of the children's messages for index `j` at `agent`.
    fn children_sum(&self, agent: usize, j: usize) -> Result<Vec<f64>> {
        let mut acc = vec![0.0; self.p];
        for &c in self.partition.children(agent) {
            if self.partition.coupling(c).binary_search(&j).is_ok() {
                let msg = self.child_message(c, agent, j)?;
                axpy(&mut acc, 1.0, &msg);
            }
        }
        Ok(acc)
    }

    /// Message from child `child` to `parent` for index `j`: the child's own
    /// row `j` plus everything its subtree reports. Zero when the child does
    /// not hold `j`.
    pub fn child_message(&self, child: usize, parent: usize, j: usize) -> Result<Vec<f64>> {
        if self.partition.parent(child) != Some(parent) {
            return Err(Error::NotAChild {
                agent: child,
                parent,
            });
        }
        if self.partition.coupling(child).binary_search(&j).is_err() {
            return Ok(vec![0.0; self.p]);
        }
        if !self.done[child] {
            return Err(Error::MissingMessage {
                agent: child,
                index: j,
            });
        }
        let mut msg = self.own_row_sum(child, self.slot(child, j)?);
        axpy(&mut msg, 1.0, &self.children_sum(child, j)?);
        Ok(msg)
    }

    /// Message `agent` sends to its parent for a coupled index `j`.
    pub fn parent_message(&self, agent: usize, j: usize) -> Result<Vec<f64>> {
        let parent = self
            .partition
            .parent(agent)
            .ok_or(Error::NoParent { agent })?;
        if self.partition.coupling(agent).binary_search(&j).is_err() {
            return Err(Error::NotCoupled { agent, index: j });
        }
        self.child_message(agent, parent, j)
    }

    /// The full update bracket for home index `j` of `agent`.
    pub fn bracket(&self, agent: usize, j: usize) -> Result<Vec<f64>> {
        let mut b = self.own_row_sum(agent, self.slot(agent, j)?);
        axpy(&mut b, 1.0, &self.children_sum(agent, j)?);
        Ok(b)
    }

    /// Updates home column `j` of `agent` and pushes it down the tree.
    pub fn update_uncoupled(&mut self, agent: usize, j: usize) -> Result<Vec<f64>> {
        if self.partition.uncoupling(agent).binary_search(&j).is_err() {
            return Err(Error::NotHome { agent, index: j });
        }
        let slot = self.slot(agent, j)?;
        let p = self.p;
        if self.matrix.row(j).is_empty() {
            self.y[j] = 1.0;
            return Ok(self.cols[agent][slot * p..(slot + 1) * p].to_vec());
        }
        let bracket = self.bracket(agent, j)?;
        let v = &mut self.cols[agent][slot * p..(slot + 1) * p];
        self.y[j] = sphere_step(v, self.steps.get(j), &bracket)?.unwrap_or(1.0);
        let new = v.to_vec();
        for holder in self.partition.holders_below(agent, j) {
            let s = self.slot(holder, j)?;
            self.cols[holder][s * p..(s + 1) * p].copy_from_slice(&new);
        }
        Ok(new)
    }

    /// Marks every agent as pending, so messages become available only once
    /// the sending agent has been processed in this sweep.
    pub fn begin_sweep(&mut self) {
        self.done.iter_mut().for_each(|d| *d = false);
    }

    /// Updates all home columns of `agent` and releases its messages.
    pub fn process_agent(&mut self, agent: usize) -> Result<()> {
        for k in 0..self.partition.uncoupling(agent).len() {
            let j = self.partition.uncoupling(agent)[k];
            self.update_uncoupled(agent, j)?;
        }
        self.done[agent] = true;
        Ok(())
    }

    /// One outer iteration: agents from the highest id down to the root.
    pub fn sweep(&mut self) -> Result<()> {
        self.begin_sweep();
        for agent in (0..self.partition.m()).rev() {
            self.process_agent(agent)?;
        }
        Ok(())
    }

    /// The global factor, read from each column's home agent.
    pub fn state(&self) -> FactorState {
        let n = self.matrix.n();
        let mut data = Vec::with_capacity(n * self.p);
        for j in 0..n {
            let home = self.partition.home(j);
            data.extend_from_slice(self.column(home, j).expect("home holds its column"));
        }
        FactorState::new(self.p, n, data).expect("columns stay on the sphere")
    }

    /// Largest distance between a coupled copy and the parent's copy.
    pub fn consensus_gap(&self) -> f64 {
        let mut gap: f64 = 0.0;
        for agent in 0..self.partition.m() {
            let Some(parent) = self.partition.parent(agent) else {
                continue;
            };
            for &j in self.partition.coupling(agent) {
                let a = self.column(agent, j).expect("agent holds coupled column");
                let b = self.column(parent, j).expect("parent holds coupled column");
                gap = gap.max(distance(a, b));
            }
        }
        gap
    }

    /// Pre-normalization norms `y_j` from the latest sweep (1 for columns
    /// that did not move).
    pub fn last_y(&self) -> &[f64] {
        &self.y
    }
}

/// `|f(before) - f(after) - sum_j (1 + y_j) / theta_j * ||after_j - before_j||^2|`.
pub fn decrease_identity_check(
    matrix: &CoefficientMatrix,
    before: &FactorState,
    after: &FactorState,
    steps: &StepSizes,
    y: &[f64],
) -> Result<f64> {
    let drop = factor::objective(matrix, before)? - factor::objective(matrix, after)?;
    let predicted: f64 = (0..matrix.n())
        .map(|j| {
            let d = distance(before.column(j), after.column(j));
            (1.0 + y[j]) / steps.get(j) * d * d
        })
        .sum();
    Ok((drop - predicted).abs())
}

#[derive(Debug, Clone)]
pub struct SyncOptions {
    /// Sweep limit; `None` means `10 n`.
    pub max_iters: Option<usize>,
    pub grad_tol: f64,
    /// Fill `wall_ms` in the trace.
    pub timing: bool,
    /// Keep the factor after every sweep in [`SyncRun::iterates`].
    pub record_iterates: bool,
}

impl Default for SyncOptions {
    fn default() -> Self {
        Self {
            max_iters: None,
            grad_tol: 1e-6,
            timing: false,
            record_iterates: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyncRun {
    pub state: FactorState,
    pub trace: Trace,
    pub converged: bool,
    pub iterations: usize,
    /// Factor after each sweep, in original labels (when requested).
    pub iterates: Vec<FactorState>,
    /// The relabelling applied internally.
    pub permutation: Permutation,
}

/// Runs sweeps until the Riemannian gradient norm drops below `grad_tol` or
/// the sweep limit is reached. Indices are reordered internally and the result
/// is returned in the original labels.
pub fn run_sync(
    matrix: &CoefficientMatrix,
    partition: &AgentPartition,
    steps: &StepSizes,
    init: &FactorState,
    opts: &SyncOptions,
) -> Result<SyncRun> {
    check_run_inputs(matrix, partition, steps, init)?;
    let start = Instant::now();
    let elapsed = || opts.timing.then(|| start.elapsed().as_secs_f64() * 1e3);

    let perm = reorder_indices(partition)?;
    let pm = matrix.relabel(&perm.forward)?;
    let pp = partition.relabel(matrix, &perm)?;
    let ps = steps.permuted(&perm);
    let pinit = init.permuted(&perm.forward)?;
    let mut engine = SyncEngine::new(&pm, &pp, &ps, &pinit)?;

    let max_iters = opts.max_iters.unwrap_or(10 * matrix.n());
    let mut trace = Trace::default();
    let mut current = pinit.clone();
    trace.push(TraceRow {
        iter: 0,
        f: factor::objective(&pm, &current)?,
        grad_norm: factor::riemannian_grad_norm(&pm, &current)?,
        consensus_gap: engine.consensus_gap(),
        dx_fro: 0.0,
        max_s_norm: None,
        wall_ms: elapsed(),
        decrease_residual: None,
    });

    let mut iterates = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iters {
        engine.sweep()?;
        iterations += 1;
        let next = engine.state();
        let grad_norm = factor::riemannian_grad_norm(&pm, &next)?;
        trace.push(TraceRow {
            iter: iterations,
            f: factor::objective(&pm, &next)?,
            grad_norm,
            consensus_gap: engine.consensus_gap(),
            dx_fro: factor::dx_fro(&current, &next)?,
            max_s_norm: None,
            wall_ms: elapsed(),
            decrease_residual: Some(decrease_identity_check(
                &pm,
                &current,
                &next,
                &ps,
                engine.last_y(),
            )?),
        });
        if opts.record_iterates {
            iterates.push(next.permuted(&perm.inverse)?);
        }
        current = next;
        if grad_norm < opts.grad_tol {
            converged = true;
            break;
        }
    }
    log::debug!("sync run: {iterations} sweeps, converged = {converged}");

    Ok(SyncRun {
        state: current.permuted(&perm.inverse)?,
        trace,
        converged,
        iterations,
        iterates,
        permutation: perm,
    })
}
