//! Distributed asynchronous algorithm on a deterministic logical clock.
//!
//! At every tick the agents named by the [`DelaySchedule`] activate. All of
//! them read the state as it stood at the start of the tick:
//!
//! * coupled columns are refreshed from the history of the column's home
//!   agent, at the stamp the schedule allows;
//! * one message bundle per child is taken from that child's outbox history;
//! * every uncoupled column moves to
//!   `normalize(v_j - theta_j * (own row j + child messages))`;
//! * a new bundle for the parent is composed from the updated columns.
//!
//! Updates are committed together and stamped `t + 1`. A read at tick `t`
//! always resolves to a value produced in `[max(0, t - B + 1), t]`, and the
//! stamp an agent holds never moves backwards.

use std::collections::VecDeque;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::factor::{self, axpy, distance, dot, FactorState};
use crate::matrix::CoefficientMatrix;
use crate::partition::{check_run_inputs, AgentPartition, StepSizes};
use crate::schedule::DelaySchedule;
use crate::sync_engine::{owned_rows, sphere_step};
use crate::trace::{Trace, TraceRow};

/// `s . h + ||s||^2`; nonpositive for an admissible step.
pub fn descent_residual(s: &[f64], h: &[f64]) -> f64 {
    dot(s, h) + dot(s, s)
}

/// `-(1 + y) ||s||^2`, the exact value of `s . h` for a step whose
/// pre-normalization norm was `y`.
pub fn descent_closed_form(s: &[f64], y: f64) -> f64 {
    -(1.0 + y) * dot(s, s)
}

#[derive(Debug, Clone)]
struct Stamped {
    stamp: usize,
    value: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
enum Source {
    Home(usize),
    Copy(usize),
}

/// Latest entry stamped at most `tau` if it is inside the window, otherwise
/// the earliest entry inside the window.
fn pick(history: &VecDeque<Stamped>, tau: usize, lo: usize, t: usize) -> Option<&Stamped> {
    if let Some(e) = history.iter().rev().find(|e| e.stamp <= tau) {
        if e.stamp >= lo {
            return Some(e);
        }
    }
    history.iter().find(|e| e.stamp >= lo && e.stamp <= t)
}

fn prune(history: &mut VecDeque<Stamped>, lo: usize) {
    while history.len() >= 2 && history[1].stamp <= lo {
        history.pop_front();
    }
}

/// One home-column update.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateRecord {
    pub tick: usize,
    pub agent: usize,
    pub index: usize,
    /// `s_j . h_j` with `h_j = 2 * bracket`, the partial gradient.
    pub s_dot_h: f64,
    pub s_norm_sq: f64,
    pub h_norm_sq: f64,
    /// Pre-normalization norm.
    pub y: f64,
}

impl UpdateRecord {
    pub fn residual(&self) -> f64 {
        self.s_dot_h + self.s_norm_sq
    }

    pub fn closed_form(&self) -> f64 {
        -(1.0 + self.y) * self.s_norm_sq
    }
}

/// Run-wide worst cases of the per-update and per-read checks.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AsyncDiagnostics {
    pub updates: usize,
    pub reads: usize,
    /// Largest `t - stamp` over all reads.
    pub max_staleness: usize,
    /// Largest `(s . h + ||s||^2) / (1 + ||h||^2)`.
    pub worst_descent_ratio: f64,
    /// Largest `|s . h + (1 + y) ||s||^2|`.
    pub worst_closed_form_abs: f64,
    /// The same, divided by `1 + ||h||^2`.
    pub worst_closed_form_ratio: f64,
    /// Largest `||copy - v_j(t)|| - theta_j * sum_{tau=t-B}^{t-1} ||s_j(tau)||`
    /// over coupled reads.
    pub worst_gap_excess: f64,
    pub gap_checks: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickStats {
    pub active: usize,
    /// Largest `||s_j||` committed this tick.
    pub max_s_norm: f64,
}

#[derive(Debug, Clone)]
pub struct AsyncEngine<'a> {
    matrix: &'a CoefficientMatrix,
    partition: &'a AgentPartition,
    steps: &'a StepSizes,
    schedule: &'a DelaySchedule,
    p: usize,
    t: usize,
    home: FactorState,
    hist: Vec<VecDeque<Stamped>>,
    copies: Vec<Vec<Stamped>>,
    outbox: Vec<VecDeque<Stamped>>,
    mailbox: Vec<Vec<Stamped>>,
    owned: Vec<Vec<Vec<(usize, f64)>>>,
    sources: Vec<Vec<Source>>,
    /// `msg_terms[i][slot]`: `(child position, position in the child's S)`.
    msg_terms: Vec<Vec<Vec<(usize, usize)>>>,
    s_hist: Vec<VecDeque<f64>>,
    diag: AsyncDiagnostics,
    record_updates: bool,
    records: Vec<UpdateRecord>,
}

impl<'a> AsyncEngine<'a> {
    pub fn new(
        matrix: &'a CoefficientMatrix,
        partition: &'a AgentPartition,
        steps: &'a StepSizes,
        schedule: &'a DelaySchedule,
        init: &FactorState,
    ) -> Result<Self> {
        check_run_inputs(matrix, partition, steps, init)?;
        if schedule.m() != partition.m() || schedule.n() != matrix.n() {
            return Err(Error::DimensionMismatch(format!(
                "schedule is for {} agents and n = {}, problem has {} agents and n = {}",
                schedule.m(),
                schedule.n(),
                partition.m(),
                matrix.n()
            )));
        }
        let n = matrix.n();
        let m = partition.m();
        let p = init.p();

        let mut shared = vec![false; n];
        for i in 0..m {
            for &j in partition.coupling(i) {
                shared[j] = true;
            }
        }
        let hist = (0..n)
            .map(|j| {
                let mut h = VecDeque::new();
                if shared[j] {
                    h.push_back(Stamped {
                        stamp: 0,
                        value: init.column(j).to_vec(),
                    });
                }
                h
            })
            .collect();
        let copies = (0..m)
            .map(|i| {
                partition
                    .coupling(i)
                    .iter()
                    .map(|&j| Stamped {
                        stamp: 0,
                        value: init.column(j).to_vec(),
                    })
                    .collect()
            })
            .collect();
        let sources = (0..m)
            .map(|i| {
                partition
                    .set(i)
                    .iter()
                    .map(|&j| match partition.coupling(i).binary_search(&j) {
                        Ok(k) => Source::Copy(k),
                        Err(_) => Source::Home(j),
                    })
                    .collect()
            })
            .collect();
        let msg_terms = (0..m)
            .map(|i| {
                partition
                    .set(i)
                    .iter()
                    .map(|&j| {
                        partition
                            .children(i)
                            .iter()
                            .enumerate()
                            .filter_map(|(ci, &c)| {
                                partition
                                    .coupling(c)
                                    .binary_search(&j)
                                    .ok()
                                    .map(|k| (ci, k))
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();

        let mut engine = Self {
            matrix,
            partition,
            steps,
            schedule,
            p,
            t: 0,
            home: init.clone(),
            hist,
            copies,
            outbox: vec![VecDeque::new(); m],
            mailbox: vec![Vec::new(); m],
            owned: owned_rows(matrix, partition),
            sources,
            msg_terms,
            s_hist: vec![VecDeque::new(); n],
            diag: AsyncDiagnostics::default(),
            record_updates: false,
            records: Vec::new(),
        };

        // Initial bundles, children before parents.
        for i in (0..m).rev() {
            engine.mailbox[i] = partition
                .children(i)
                .iter()
                .map(|&c| {
                    engine.outbox[c]
                        .back()
                        .expect("child composed first")
                        .clone()
                })
                .collect();
            if partition.parent(i).is_some() {
                let view = engine.view(i);
                let bundle = engine.compose(i, &view);
                engine.outbox[i].push_back(Stamped {
                    stamp: 0,
                    value: bundle,
                });
            }
        }
        Ok(engine)
    }

    /// Keep an [`UpdateRecord`] for every home-column update.
    pub fn record_updates(&mut self, on: bool) {
        self.record_updates = on;
    }

    pub fn records(&self) -> &[UpdateRecord] {
        &self.records
    }

    /// Current tick.
    pub fn time(&self) -> usize {
        self.t
    }

    /// Home columns `v_j(t)`.
    pub fn state(&self) -> &FactorState {
        &self.home
    }

    pub fn diagnostics(&self) -> &AsyncDiagnostics {
        &self.diag
    }

    /// Latest bundle `agent` has composed for its parent, in `S` order, with
    /// its stamp.
    pub fn latest_message(&self, agent: usize) -> Option<(usize, &[f64])> {
        self.outbox[agent]
            .back()
            .map(|e| (e.stamp, e.value.as_slice()))
    }

    /// Agent's held copy of coupled column `j` and its stamp.
    pub fn copy(&self, agent: usize, j: usize) -> Result<(usize, &[f64])> {
        let k = self
            .partition
            .coupling(agent)
            .binary_search(&j)
            .map_err(|_| Error::NotCoupled { agent, index: j })?;
        let c = &self.copies[agent][k];
        Ok((c.stamp, &c.value))
    }

    /// Largest distance between a held copy and its home column.
    pub fn consensus_gap(&self) -> f64 {
        let mut gap: f64 = 0.0;
        for i in 0..self.partition.m() {
            for (k, &j) in self.partition.coupling(i).iter().enumerate() {
                gap = gap.max(distance(&self.copies[i][k].value, self.home.column(j)));
            }
        }
        gap
    }

    /// Agent's local view of `J_i`: home values for `R_i`, held copies for `S_i`.
    fn view(&self, i: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.sources[i].len() * self.p);
        for src in &self.sources[i] {
            match *src {
                Source::Home(j) => out.extend_from_slice(self.home.column(j)),
                Source::Copy(k) => out.extend_from_slice(&self.copies[i][k].value),
            }
        }
        out
    }

    /// Own row `slot` over `view` plus the received child messages.
    fn bracket(&self, i: usize, slot: usize, view: &[f64]) -> Vec<f64> {
        let p = self.p;
        let mut acc = vec![0.0; p];
        for &(l, w) in &self.owned[i][slot] {
            axpy(&mut acc, w, &view[l * p..(l + 1) * p]);
        }
        for &(ci, k) in &self.msg_terms[i][slot] {
            axpy(
                &mut acc,
                1.0,
                &self.mailbox[i][ci].value[k * p..(k + 1) * p],
            );
        }
        acc
    }

    /// Bundle for the parent: one bracket per coupled index, in `S` order.
    fn compose(&self, i: usize, view: &[f64]) -> Vec<f64> {
        let set = self.partition.set(i);
        let mut out = Vec::with_capacity(self.partition.coupling(i).len() * self.p);
        for &j in self.partition.coupling(i) {
            let slot = set.binary_search(&j).expect("coupled index is in J");
            out.extend(self.bracket(i, slot, view));
        }
        out
    }

    fn stale(&self, agent: usize, history: &VecDeque<Stamped>, tau: usize) -> Error {
        let t = self.t;
        Error::StaleBeyondB {
            agent,
            stamp: history
                .iter()
                .rev()
                .find(|e| e.stamp <= tau)
                .map_or(0, |e| e.stamp),
            tick: t,
            bound: self.schedule.window_start(t),
        }
    }

    /// Advances the clock by one tick.
    pub fn tick(&mut self) -> Result<TickStats> {
        let t = self.t;
        let n = self.matrix.n();
        let p = self.p;
        let lo = self.schedule.window_start(t);
        let b = self.schedule.bound();
        let mut new_cols: Vec<(usize, Vec<f64>, f64)> = Vec::new();
        let mut new_bundles: Vec<(usize, Vec<f64>)> = Vec::new();
        let mut active = 0;

        for i in 0..self.partition.m() {
            if !self.schedule.is_active(i, t)? {
                continue;
            }
            active += 1;

            for k in 0..self.partition.coupling(i).len() {
                let j = self.partition.coupling(i)[k];
                let tau = self.schedule.tau(i, j, t)?;
                let chosen = pick(&self.hist[j], tau, lo, t)
                    .ok_or_else(|| self.stale(i, &self.hist[j], tau))?;
                if chosen.stamp > self.copies[i][k].stamp {
                    self.copies[i][k] = chosen.clone();
                }
                let held = &self.copies[i][k];
                self.diag.reads += 1;
                self.diag.max_staleness = self.diag.max_staleness.max(t - held.stamp);
                let lhs = distance(&held.value, self.home.column(j));
                let rhs = self.steps.get(j) * self.s_hist[j].iter().sum::<f64>();
                let excess = lhs - rhs;
                if self.diag.gap_checks == 0 || excess > self.diag.worst_gap_excess {
                    self.diag.worst_gap_excess = excess;
                }
                self.diag.gap_checks += 1;
            }

            for ci in 0..self.partition.children(i).len() {
                let c = self.partition.children(i)[ci];
                let tau = self.schedule.tau(i, n + c, t)?;
                let chosen = pick(&self.outbox[c], tau, lo, t)
                    .ok_or_else(|| self.stale(i, &self.outbox[c], tau))?;
                if chosen.stamp > self.mailbox[i][ci].stamp {
                    self.mailbox[i][ci] = chosen.clone();
                }
                self.diag.reads += 1;
                self.diag.max_staleness =
                    self.diag.max_staleness.max(t - self.mailbox[i][ci].stamp);
            }

            let view = self.view(i);
            let mut updated = view.clone();
            let set = self.partition.set(i);
            for &j in self.partition.uncoupling(i) {
                let slot = set.binary_search(&j).expect("home index is in J");
                if self.matrix.row(j).is_empty() {
                    // Nothing to move, but the value is republished with a fresh stamp.
                    new_cols.push((j, view[slot * p..(slot + 1) * p].to_vec(), 0.0));
                    continue;
                }
                let bracket = self.bracket(i, slot, &view);
                let theta = self.steps.get(j);
                let old = &view[slot * p..(slot + 1) * p];
                let mut new = old.to_vec();
                let y = sphere_step(&mut new, theta, &bracket)?.unwrap_or(1.0);
                let s: Vec<f64> = new.iter().zip(old).map(|(a, b)| (a - b) / theta).collect();
                let h: Vec<f64> = bracket.iter().map(|x| 2.0 * x).collect();
                let record = UpdateRecord {
                    tick: t,
                    agent: i,
                    index: j,
                    s_dot_h: dot(&s, &h),
                    s_norm_sq: dot(&s, &s),
                    h_norm_sq: dot(&h, &h),
                    y,
                };
                let scale = 1.0 + record.h_norm_sq;
                let cf = (record.s_dot_h - record.closed_form()).abs();
                self.diag.updates += 1;
                if self.diag.updates == 1 {
                    self.diag.worst_descent_ratio = record.residual() / scale;
                }
                self.diag.worst_descent_ratio =
                    self.diag.worst_descent_ratio.max(record.residual() / scale);
                self.diag.worst_closed_form_abs = self.diag.worst_closed_form_abs.max(cf);
                self.diag.worst_closed_form_ratio =
                    self.diag.worst_closed_form_ratio.max(cf / scale);
                if self.record_updates {
                    self.records.push(record);
                }
                updated[slot * p..(slot + 1) * p].copy_from_slice(&new);
                new_cols.push((j, new, factor::norm(&s)));
            }

            if self.partition.parent(i).is_some() {
                new_bundles.push((i, self.compose(i, &updated)));
            }
        }

        let mut s_tick = vec![0.0; n];
        for (j, value, s_norm) in new_cols {
            self.home.column_mut(j).copy_from_slice(&value);
            if !self.hist[j].is_empty() {
                self.hist[j].push_back(Stamped {
                    stamp: t + 1,
                    value,
                });
            }
            s_tick[j] = s_norm;
        }
        for (j, s) in s_tick.iter().enumerate() {
            let ring = &mut self.s_hist[j];
            ring.push_back(*s);
            if ring.len() > b {
                ring.pop_front();
            }
        }
        for (i, value) in new_bundles {
            self.outbox[i].push_back(Stamped {
                stamp: t + 1,
                value,
            });
        }

        self.t += 1;
        let lo = self.schedule.window_start(self.t);
        self.hist.iter_mut().for_each(|h| prune(h, lo));
        self.outbox.iter_mut().for_each(|h| prune(h, lo));

        Ok(TickStats {
            active,
            max_s_norm: s_tick.into_iter().fold(0.0, f64::max),
        })
    }
}

#[derive(Debug, Clone)]
pub struct AsyncOptions {
    pub max_iters: usize,
    /// Stop once `max_j ||s_j||` stays below this for `B` consecutive ticks.
    pub tol: f64,
    pub timing: bool,
    /// Keep every [`UpdateRecord`] in the result.
    pub record_updates: bool,
}

impl Default for AsyncOptions {
    fn default() -> Self {
        Self {
            max_iters: 10_000,
            tol: 1e-7,
            timing: false,
            record_updates: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AsyncRun {
    pub state: FactorState,
    pub trace: Trace,
    pub converged: bool,
    pub ticks: usize,
    pub diagnostics: AsyncDiagnostics,
    pub records: Vec<UpdateRecord>,
}

const GRAM_REFRESH: usize = 256;

/// Runs ticks until the trailing-window step norm drops below `tol` or
/// `max_iters` ticks have elapsed. A problem without entries stops at once.
pub fn run_async(
    matrix: &CoefficientMatrix,
    partition: &AgentPartition,
    steps: &StepSizes,
    schedule: &DelaySchedule,
    init: &FactorState,
    opts: &AsyncOptions,
) -> Result<AsyncRun> {
    if schedule.horizon() < opts.max_iters {
        return Err(Error::BeyondHorizon {
            tick: opts.max_iters.saturating_sub(1),
            horizon: schedule.horizon(),
        });
    }
    let start = Instant::now();
    let elapsed = || opts.timing.then(|| start.elapsed().as_secs_f64() * 1e3);
    let mut engine = AsyncEngine::new(matrix, partition, steps, schedule, init)?;
    engine.record_updates(opts.record_updates);

    let mut trace = Trace::default();
    trace.push(TraceRow {
        iter: 0,
        f: factor::objective(matrix, init)?,
        grad_norm: factor::riemannian_grad_norm(matrix, init)?,
        consensus_gap: engine.consensus_gap(),
        dx_fro: 0.0,
        max_s_norm: Some(0.0),
        wall_ms: elapsed(),
        decrease_residual: None,
    });

    let b = schedule.bound();
    let mut window: VecDeque<f64> = VecDeque::with_capacity(b + 1);
    let mut converged = matrix.nnz() == 0;
    let mut small = factor::small_gram(init);
    while !converged && engine.time() < opts.max_iters {
        let before = engine.state().clone();
        let stats = engine.tick()?;
        let now = engine.state();
        let (dx, next) = factor::dx_fro_incremental(&before, now, &small);
        // Periodic refresh keeps rounding drift in the running Gram bounded.
        small = if engine.time() % GRAM_REFRESH == 0 {
            factor::small_gram(now)
        } else {
            next
        };
        trace.push(TraceRow {
            iter: engine.time(),
            f: factor::objective(matrix, now)?,
            grad_norm: factor::riemannian_grad_norm(matrix, now)?,
            consensus_gap: engine.consensus_gap(),
            dx_fro: dx,
            max_s_norm: Some(stats.max_s_norm),
            wall_ms: elapsed(),
            decrease_residual: None,
        });
        window.push_back(stats.max_s_norm);
        if window.len() > b {
            window.pop_front();
        }
        converged = window.len() == b && window.iter().all(|&s| s < opts.tol);
    }
    log::debug!(
        "async run: {} ticks, converged = {converged}",
        engine.time()
    );

    Ok(AsyncRun {
        state: engine.state().clone(),
        ticks: engine.time(),
        diagnostics: engine.diagnostics().clone(),
        records: engine.records().to_vec(),
        trace,
        converged,
    })
}
