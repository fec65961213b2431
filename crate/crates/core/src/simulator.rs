//! Discrete-event Monte Carlo execution of a net.
//!
//! Each replication runs the exponential race directly: every enabled timed
//! transition draws a fresh delay at its current rate after each marking
//! change, and the earliest one fires. Immediate transitions fire in zero
//! time, highest priority first, ties broken by weight. Rewards are time
//! averages over `[warmup, horizon]`.
//!
//! Replication `k` draws from ChaCha stream `k` of the configured seed, so
//! results do not depend on how replications are scheduled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use thiserror::Error;

use crate::expr::{CompiledExpr, Expr};
use crate::net::{Marking, Net, NetError, TransitionId, TransitionKind};
use crate::rewards::{CompiledReward, RewardError, RewardSpec};

/// Immediate firings allowed at a single instant before giving up.
const MAX_INSTANT_FIRINGS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub seed: u64,
    /// Simulated hours per replication.
    pub horizon: f64,
    /// Hours discarded at the start of each replication.
    pub warmup: f64,
    pub replications: usize,
}

impl SimConfig {
    /// Config with the default warmup of 10% of the horizon.
    pub fn new(seed: u64, horizon: f64, replications: usize) -> Self {
        SimConfig { seed, horizon, warmup: horizon / 10.0, replications }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.horizon.is_finite() && self.warmup >= 0.0 && self.horizon > self.warmup) {
            return Err(SimError::Config("horizon must exceed warmup, and warmup must be >= 0".into()));
        }
        if self.replications == 0 {
            return Err(SimError::Config("replications must be at least 1".into()));
        }
        Ok(())
    }
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig::new(42, 100_000.0, 10)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub name: String,
    pub mean: f64,
    pub std_error: f64,
    pub replications: usize,
}

impl Estimate {
    fn from_samples(name: &str, xs: &[f64]) -> Estimate {
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let std_error = if n > 1 {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Estimate { name: name.to_string(), mean, std_error, replications: n }
    }

    /// Whether `value` lies within `k` standard errors of the mean.
    pub fn covers(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.std_error
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimEstimate {
    pub estimates: Vec<Estimate>,
    /// Timed and immediate firings over all replications.
    pub events: u64,
    /// Replications that reached a marking with nothing enabled. The rest of
    /// such a replication is spent in that marking.
    pub deadlocked_replications: usize,
}

impl SimEstimate {
    pub fn get(&self, name: &str) -> Option<&Estimate> {
        self.estimates.iter().find(|e| e.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("net has no timed transitions")]
    NoTimedTransitions,
    #[error("more than {MAX_INSTANT_FIRINGS} immediate firings at time {time} from [{marking}]")]
    ImmediateLoop { time: f64, marking: String },
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Reward(#[from] RewardError),
}

struct Replication {
    averages: Vec<f64>,
    events: u64,
    deadlocked: bool,
}

pub fn simulate(net: &Net, rewards: &[RewardSpec], cfg: &SimConfig) -> Result<SimEstimate, SimError> {
    cfg.validate()?;
    if !(0..net.transitions().len()).any(|t| net.kind(t) == TransitionKind::Timed) {
        return Err(SimError::NoTimedTransitions);
    }
    let compiled = rewards.iter().map(|r| r.compile(net)).collect::<Result<Vec<_>, _>>()?;

    let runs: Vec<Replication> = (0..cfg.replications)
        .into_par_iter()
        .map(|k| Runner::new(net, cfg.seed, k as u64).replicate(&compiled, cfg))
        .collect::<Result<_, _>>()?;

    let estimates = rewards
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let xs: Vec<f64> = runs.iter().map(|run| run.averages[i]).collect();
            Estimate::from_samples(&r.name, &xs)
        })
        .collect();
    Ok(SimEstimate {
        estimates,
        events: runs.iter().map(|r| r.events).sum(),
        deadlocked_replications: runs.iter().filter(|r| r.deadlocked).count(),
    })
}

/// Mean first-passage time from the initial marking into a marking where
/// `target` holds. Every replication averages `passages` independent
/// passages, each restarted from the initial marking; a passage is cut off
/// at `cfg.horizon` hours. The warmup is ignored.
pub fn mean_passage_time(net: &Net, target: &Expr, passages: usize, cfg: &SimConfig) -> Result<Estimate, SimError> {
    cfg.validate()?;
    if passages == 0 {
        return Err(SimError::Config("passages must be at least 1".into()));
    }
    let target = net.compile(target).map_err(|source| RewardError::Eval { reward: "target".into(), source })?;
    let means: Vec<f64> = (0..cfg.replications)
        .into_par_iter()
        .map(|k| {
            let mut run = Runner::new(net, cfg.seed, k as u64);
            let mut total = 0.0;
            for _ in 0..passages {
                total += run.passage(&target, cfg.horizon)?;
            }
            Ok(total / passages as f64)
        })
        .collect::<Result<_, SimError>>()?;
    Ok(Estimate::from_samples("passage_time", &means))
}

struct Runner<'a> {
    net: &'a Net,
    rng: ChaCha8Rng,
    events: u64,
}

impl<'a> Runner<'a> {
    fn new(net: &'a Net, seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Runner { net, rng, events: 0 }
    }

    /// Fires immediate transitions until the marking is tangible.
    fn settle(&mut self, mut m: Marking, time: f64) -> Result<Marking, SimError> {
        for _ in 0..MAX_INSTANT_FIRINGS {
            let enabled = self.net.enabled(&m)?;
            let immediate: Vec<TransitionId> =
                enabled.into_iter().filter(|&t| self.net.kind(t) == TransitionKind::Immediate).collect();
            if immediate.is_empty() {
                return Ok(m);
            }
            let t = self.pick_weighted(&immediate);
            m = self.net.fire_unchecked(&m, t);
            self.events += 1;
        }
        Err(SimError::ImmediateLoop { time, marking: self.net.describe(&m) })
    }

    fn pick_weighted(&mut self, candidates: &[TransitionId]) -> TransitionId {
        if candidates.len() == 1 {
            return candidates[0];
        }
        let total: f64 = candidates.iter().map(|&t| self.net.weight(t)).sum();
        let mut u = self.rng.random::<f64>() * total;
        for &t in candidates {
            u -= self.net.weight(t);
            if u < 0.0 {
                return t;
            }
        }
        *candidates.last().unwrap()
    }

    /// Next timed firing from a tangible marking: (delay, transition), or
    /// `None` when nothing is enabled.
    fn race(&mut self, m: &Marking) -> Result<Option<(f64, TransitionId)>, SimError> {
        let mut best: Option<(f64, TransitionId)> = None;
        for t in self.net.enabled(m)? {
            let rate = self.net.rate_of(m, t)?;
            let delay = Exp::new(rate).expect("rate checked positive").sample(&mut self.rng);
            if best.is_none_or(|(d, _)| delay < d) {
                best = Some((delay, t));
            }
        }
        Ok(best)
    }

    fn replicate(mut self, rewards: &[CompiledReward], cfg: &SimConfig) -> Result<Replication, SimError> {
        let mut acc = vec![0.0; rewards.len()];
        let mut now = 0.0;
        let mut m = self.settle(self.net.initial_marking().clone(), 0.0)?;
        let mut deadlocked = false;
        let eval = |m: &Marking, out: &mut Vec<f64>| -> Result<(), SimError> {
            out.clear();
            for r in rewards {
                out.push(
                    r.value(m.tokens()).map_err(|source| RewardError::Eval { reward: "simulation".into(), source })?,
                );
            }
            Ok(())
        };
        let mut values = Vec::with_capacity(rewards.len());
        eval(&m, &mut values)?;
        loop {
            let step = self.race(&m)?;
            let next = step.map_or(cfg.horizon, |(d, _)| (now + d).min(cfg.horizon));
            let overlap = next.min(cfg.horizon) - now.max(cfg.warmup);
            if overlap > 0.0 {
                for (a, v) in acc.iter_mut().zip(&values) {
                    *a += v * overlap;
                }
            }
            let Some((_, t)) = step else {
                deadlocked = true;
                break;
            };
            if next >= cfg.horizon {
                break;
            }
            now = next;
            let fired = self.net.fire_unchecked(&m, t);
            self.events += 1;
            m = self.settle(fired, now)?;
            eval(&m, &mut values)?;
        }
        let span = cfg.horizon - cfg.warmup;
        Ok(Replication { averages: acc.into_iter().map(|a| a / span).collect(), events: self.events, deadlocked })
    }

    fn passage(&mut self, target: &CompiledExpr, limit: f64) -> Result<f64, SimError> {
        let mut now = 0.0;
        let mut m = self.settle(self.net.initial_marking().clone(), 0.0)?;
        while !hit(target, &m)? {
            let Some((d, t)) = self.race(&m)? else {
                return Ok(limit);
            };
            now += d;
            if now >= limit {
                return Ok(limit);
            }
            let fired = self.net.fire_unchecked(&m, t);
            m = self.settle(fired, now)?;
        }
        Ok(now)
    }
}

fn hit(target: &CompiledExpr, m: &Marking) -> Result<bool, SimError> {
    target
        .eval_bool(m.tokens())
        .map_err(|source| SimError::Reward(RewardError::Eval { reward: "target".into(), source }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{NetDef, Transition};

    fn two_state() -> Net {
        let mut d = NetDef::default();
        d.place("Up", 1)
            .place("Down", 0)
            .transition(Transition::timed("fail", Expr::num(1.0)))
            .transition(Transition::timed("repair", Expr::num(9.0)))
            .input("Up", "fail", 1)
            .output("fail", "Down", 1)
            .input("Down", "repair", 1)
            .output("repair", "Up", 1);
        Net::new(d).unwrap()
    }

    #[test]
    fn two_state_unavailability_is_covered() {
        let net = two_state();
        let down = RewardSpec::parse("down", "#Down >= 1").unwrap();
        let cfg = SimConfig::new(7, 10_000.0, 20);
        let est = simulate(&net, &[down], &cfg).unwrap();
        let e = est.get("down").unwrap();
        assert!(e.covers(0.1, 3.0), "{e:?}");
        assert!(e.std_error > 0.0);
        assert_eq!(e.replications, 20);
    }

    #[test]
    fn same_seed_same_result() {
        let net = two_state();
        let r = [RewardSpec::parse("up", "#Up >= 1").unwrap()];
        let cfg = SimConfig::new(3, 2_000.0, 8);
        assert_eq!(simulate(&net, &r, &cfg).unwrap(), simulate(&net, &r, &cfg).unwrap());
        let other = SimConfig { seed: 4, ..cfg };
        assert_ne!(simulate(&net, &r, &cfg).unwrap(), simulate(&net, &r, &other).unwrap());
    }

    #[test]
    fn invalid_configs() {
        let net = two_state();
        for cfg in [
            SimConfig { replications: 0, ..SimConfig::default() },
            SimConfig { warmup: 10.0, horizon: 10.0, ..SimConfig::default() },
            SimConfig { warmup: -1.0, ..SimConfig::default() },
        ] {
            assert!(matches!(simulate(&net, &[], &cfg), Err(SimError::Config(_))));
        }
    }

    #[test]
    fn deadlock_is_flagged_not_fatal() {
        let mut d = NetDef::default();
        d.place("A", 1)
            .place("B", 0)
            .transition(Transition::timed("t", Expr::num(1.0)))
            .input("A", "t", 1)
            .output("t", "B", 1);
        let net = Net::new(d).unwrap();
        let r = [RewardSpec::parse("b", "#B >= 1").unwrap()];
        let est = simulate(&net, &r, &SimConfig::new(1, 1_000.0, 4)).unwrap();
        assert_eq!(est.deadlocked_replications, 4);
        assert!((est.get("b").unwrap().mean - 1.0).abs() < 1e-9);
    }

    #[test]
    fn immediate_loop_is_an_error() {
        let mut d = NetDef::default();
        d.place("X", 1)
            .place("Y", 0)
            .transition(Transition::immediate("xy", 1.0, 0))
            .transition(Transition::immediate("yx", 1.0, 0))
            .transition(Transition::timed("t", Expr::num(1.0)))
            .input("X", "xy", 1)
            .output("xy", "Y", 1)
            .input("Y", "yx", 1)
            .output("yx", "X", 1)
            .input("X", "t", 1)
            .input("Y", "t", 1);
        let net = Net::new(d).unwrap();
        assert!(matches!(simulate(&net, &[], &SimConfig::new(1, 10.0, 1)), Err(SimError::ImmediateLoop { .. })));
    }

    #[test]
    fn passage_time_of_single_exponential() {
        let net = two_state();
        let target = Expr::parse("#Down >= 1").unwrap();
        let est = mean_passage_time(&net, &target, 200, &SimConfig::new(5, 1e6, 20)).unwrap();
        assert!(est.covers(1.0, 3.0), "{est:?}");
    }
}
