//! Bounded-delay activation schedules for the asynchronous simulator.
//!
//! A schedule fixes, for a finite horizon of logical ticks, which agents are
//! active at each tick and how stale each value read by an agent may be. With
//! bound `B`, every agent is active at least once in every `B` consecutive
//! ticks, and every read at tick `t` carries a stamp in
//! `[max(0, t - B + 1), t]`.
//!
//! Reads are addressed by channel: `0..n` are columns and `n + c` is the
//! message from child agent `c`.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::rng::hash_words;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleMode {
    /// Random gaps between activations, random staleness.
    Uniform,
    /// Agents take turns; staleness cycles through the window.
    RoundRobin,
    /// Everyone is active every tick and reads the oldest value allowed.
    Adversarial,
}

impl ScheduleMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScheduleMode::Uniform => "uniform",
            ScheduleMode::RoundRobin => "roundrobin",
            ScheduleMode::Adversarial => "adversarial",
        }
    }

    pub const ALL: [ScheduleMode; 3] = [
        ScheduleMode::Uniform,
        ScheduleMode::RoundRobin,
        ScheduleMode::Adversarial,
    ];
}

impl fmt::Display for ScheduleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScheduleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" | "uniform-random" => Ok(ScheduleMode::Uniform),
            "roundrobin" | "round-robin" => Ok(ScheduleMode::RoundRobin),
            "adversarial" | "adversarial-max-delay" => Ok(ScheduleMode::Adversarial),
            other => Err(Error::InvalidParameter(format!(
                "unknown schedule mode '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DelaySchedule {
    m: usize,
    n: usize,
    b: usize,
    seed: u64,
    mode: ScheduleMode,
    horizon: usize,
    /// `active[i][t]`
    active: Vec<Vec<bool>>,
}

/// Builds a schedule for `m` agents and `n` columns over ticks `0..horizon`.
pub fn make_schedule(
    m: usize,
    n: usize,
    b: usize,
    seed: u64,
    mode: ScheduleMode,
    horizon: usize,
) -> Result<DelaySchedule> {
    if b == 0 {
        return Err(Error::InvalidParameter("B must be at least 1".into()));
    }
    if m == 0 {
        return Err(Error::InvalidParameter(
            "at least one agent is required".into(),
        ));
    }
    let active = (0..m)
        .map(|i| match mode {
            _ if b == 1 => vec![true; horizon],
            ScheduleMode::Adversarial => vec![true; horizon],
            ScheduleMode::RoundRobin => {
                let period = m.min(b);
                (0..horizon).map(|t| t % period == i % period).collect()
            }
            ScheduleMode::Uniform => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                let mut row = vec![false; horizon];
                let mut t = rng.random_range(0..b);
                while t < horizon {
                    row[t] = true;
                    t += rng.random_range(1..=b);
                }
                row
            }
        })
        .collect();
    Ok(DelaySchedule {
        m,
        n,
        b,
        seed,
        mode,
        horizon,
        active,
    })
}

impl DelaySchedule {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bound(&self) -> usize {
        self.b
    }

    pub fn mode(&self) -> ScheduleMode {
        self.mode
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Number of read channels: `n` columns plus one per agent.
    pub fn channels(&self) -> usize {
        self.n + self.m
    }

    fn check_tick(&self, t: usize) -> Result<()> {
        if t >= self.horizon {
            return Err(Error::BeyondHorizon {
                tick: t,
                horizon: self.horizon,
            });
        }
        Ok(())
    }

    pub fn is_active(&self, agent: usize, t: usize) -> Result<bool> {
        self.check_tick(t)?;
        Ok(self.active[agent][t])
    }

    /// Activation ticks of `agent`.
    pub fn activations(&self, agent: usize) -> Vec<usize> {
        (0..self.horizon)
            .filter(|&t| self.active[agent][t])
            .collect()
    }

    /// Oldest stamp allowed at tick `t`.
    pub fn window_start(&self, t: usize) -> usize {
        (t + 1).saturating_sub(self.b)
    }

    /// Stamp of the value agent `agent` reads on `channel` at tick `t`.
    pub fn tau(&self, agent: usize, channel: usize, t: usize) -> Result<usize> {
        self.check_tick(t)?;
        let lag = match self.mode {
            _ if self.b == 1 => 0,
            ScheduleMode::Adversarial => self.b - 1,
            ScheduleMode::RoundRobin => (t + agent + channel) % self.b,
            ScheduleMode::Uniform => {
                let h = hash_words(&[self.seed, agent as u64, channel as u64, t as u64]);
                (h % self.b as u64) as usize
            }
        };
        Ok(t.saturating_sub(lag))
    }

    /// Exhaustively checks the activation-window and staleness bounds over the
    /// whole horizon. Returns the number of `(agent, channel, tick)` reads
    /// checked.
    pub fn scan(&self) -> std::result::Result<usize, String> {
        for i in 0..self.m {
            // Every window {t, ..., t+B-1} fully inside the horizon.
            let mut last: Option<usize> = None;
            for t in 0..self.horizon {
                if self.active[i][t] {
                    last = Some(t);
                }
                if t + 1 >= self.b {
                    let start = t + 1 - self.b;
                    if last.is_none_or(|l| l < start) {
                        return Err(format!("agent {i} is idle throughout ticks {start}..={t}"));
                    }
                }
            }
        }
        let mut reads = 0;
        for i in 0..self.m {
            for ch in 0..self.channels() {
                for t in 0..self.horizon {
                    let tau = self.tau(i, ch, t).map_err(|e| e.to_string())?;
                    if tau < self.window_start(t) || tau > t {
                        return Err(format!(
                            "agent {i}, channel {ch}, tick {t}: stamp {tau} outside window"
                        ));
                    }
                    reads += 1;
                }
            }
        }
        Ok(reads)
    }
}
