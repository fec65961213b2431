//! Steady-state rate rewards over tangible markings.

use thiserror::Error;

use crate::expr::{CompiledExpr, EvalError, Expr};
use crate::markov::SteadyState;
use crate::net::Net;
use crate::reachability::TangibleGraph;

/// Name of the reward whose value is taken as availability.
pub const UP_REWARD: &str = "up";

/// A reward: `weight` earned in every marking where `predicate` holds.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardSpec {
    pub name: String,
    pub predicate: Expr,
    pub weight: Expr,
}

impl RewardSpec {
    /// Indicator reward (weight 1).
    pub fn indicator(name: &str, predicate: Expr) -> Self {
        RewardSpec { name: name.to_string(), predicate, weight: Expr::num(1.0) }
    }

    pub fn parse(name: &str, predicate: &str) -> Result<Self, crate::expr::ParseError> {
        Ok(Self::indicator(name, Expr::parse(predicate)?))
    }

    pub fn with_weight(mut self, weight: Expr) -> Self {
        self.weight = weight;
        self
    }

    pub fn has_unit_weight(&self) -> bool {
        self.weight == Expr::Num(1.0)
    }

    pub fn compile(&self, net: &Net) -> Result<CompiledReward, RewardError> {
        let wrap = |source| RewardError::Eval { reward: self.name.clone(), source };
        Ok(CompiledReward {
            predicate: net.compile(&self.predicate).map_err(wrap)?,
            weight: net.compile(&self.weight).map_err(wrap)?,
        })
    }
}

#[derive(Debug, Clone)]
pub struct CompiledReward {
    predicate: CompiledExpr,
    weight: CompiledExpr,
}

impl CompiledReward {
    pub fn value(&self, tokens: &[u32]) -> Result<f64, EvalError> {
        if self.predicate.eval_bool(tokens)? {
            self.weight.eval_num(tokens)
        } else {
            Ok(0.0)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RewardError {
    #[error("reward {reward}: {source}")]
    Eval {
        reward: String,
        #[source]
        source: EvalError,
    },
    #[error("reward {0} must have weight 1 to be read as a probability")]
    NotIndicator(String),
}

/// Σ π(s)·weight(s) over tangible states where the predicate holds.
pub fn expected_reward(
    net: &Net,
    graph: &TangibleGraph,
    ss: &SteadyState,
    spec: &RewardSpec,
) -> Result<f64, RewardError> {
    let r = spec.compile(net)?;
    let mut sum = 0.0;
    for (m, p) in graph.states.iter().zip(&ss.pi) {
        if *p == 0.0 {
            continue;
        }
        let v = r.value(m.tokens()).map_err(|source| RewardError::Eval { reward: spec.name.clone(), source })?;
        sum += p * v;
    }
    Ok(sum)
}

/// Steady-state probability of the risky set.
pub fn riskscore(net: &Net, graph: &TangibleGraph, ss: &SteadyState, risky: &RewardSpec) -> Result<f64, RewardError> {
    if !risky.has_unit_weight() {
        return Err(RewardError::NotIndicator(risky.name.clone()));
    }
    Ok(clamp01(expected_reward(net, graph, ss, risky)?))
}

/// 1 − P(up).
pub fn unavailability(net: &Net, graph: &TangibleGraph, ss: &SteadyState, up: &RewardSpec) -> Result<f64, RewardError> {
    if !up.has_unit_weight() {
        return Err(RewardError::NotIndicator(up.name.clone()));
    }
    Ok(clamp01(1.0 - expected_reward(net, graph, ss, up)?))
}

fn clamp01(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// Report column for a reward: `up` becomes `unavailability` (1 − value),
/// `risky_<x>` becomes `riskscore_<x>`, anything else keeps its name.
pub fn metric_name(reward: &str) -> String {
    if reward == UP_REWARD {
        "unavailability".to_string()
    } else if let Some(rest) = reward.strip_prefix("risky_") {
        format!("riskscore_{rest}")
    } else {
        reward.to_string()
    }
}

/// Transforms a raw reward value into its report metric.
pub fn metric_value(reward: &str, value: f64) -> f64 {
    if reward == UP_REWARD {
        clamp01(1.0 - value)
    } else {
        value
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    /// Raw expected reward per spec, in spec order.
    pub rewards: Vec<(String, f64)>,
    pub availability: Option<f64>,
    pub unavailability: Option<f64>,
}

impl MetricReport {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.rewards.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    /// Report metrics (see [`metric_name`]) in spec order.
    pub fn metrics(&self) -> Vec<(String, f64)> {
        self.rewards.iter().map(|(n, v)| (metric_name(n), metric_value(n, *v))).collect()
    }
}

pub fn evaluate(
    net: &Net,
    graph: &TangibleGraph,
    ss: &SteadyState,
    specs: &[RewardSpec],
) -> Result<MetricReport, RewardError> {
    let mut rewards = Vec::with_capacity(specs.len());
    let mut availability = None;
    for s in specs {
        let v = expected_reward(net, graph, ss, s)?;
        if s.name == UP_REWARD && s.has_unit_weight() {
            availability = Some(clamp01(v));
        }
        rewards.push((s.name.clone(), v));
    }
    Ok(MetricReport { rewards, availability, unavailability: availability.map(|a| 1.0 - a) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::{build_generator, steady_state, SolverConfig};
    use crate::net::{NetDef, Transition};
    use crate::reachability::{explore, ExploreConfig};

    fn solved() -> (Net, TangibleGraph, SteadyState) {
        let mut d = NetDef::default();
        d.place("Up", 1)
            .place("Down", 0)
            .transition(Transition::timed("fail", Expr::num(1.0)))
            .transition(Transition::timed("repair", Expr::num(9.0)))
            .input("Up", "fail", 1)
            .output("fail", "Down", 1)
            .input("Down", "repair", 1)
            .output("repair", "Up", 1);
        let net = Net::new(d).unwrap();
        let g = explore(&net, &ExploreConfig::default()).unwrap();
        let ss = steady_state(&build_generator(&g).unwrap(), &SolverConfig::default()).unwrap();
        (net, g, ss)
    }

    #[test]
    fn always_and_never() {
        let (net, g, ss) = solved();
        let all = RewardSpec::parse("all", "true").unwrap();
        let none = RewardSpec::parse("none", "#Up > 5").unwrap();
        assert!((expected_reward(&net, &g, &ss, &all).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(expected_reward(&net, &g, &ss, &none).unwrap(), 0.0);
        assert_eq!(riskscore(&net, &g, &ss, &none).unwrap(), 0.0);
        assert!((riskscore(&net, &g, &ss, &all).unwrap() - 1.0).abs() < 1e-12);
        assert!(unavailability(&net, &g, &ss, &all).unwrap().abs() < 1e-12);
    }

    #[test]
    fn two_state_down_probability() {
        let (net, g, ss) = solved();
        let down = RewardSpec::parse("down", "#Down >= 1").unwrap();
        let up = RewardSpec::parse("up", "#Up >= 1").unwrap();
        assert!((expected_reward(&net, &g, &ss, &down).unwrap() - 0.1).abs() < 1e-12);
        assert!((unavailability(&net, &g, &ss, &up).unwrap() - 0.1).abs() < 1e-12);
        let report = evaluate(&net, &g, &ss, &[up, down]).unwrap();
        assert!((report.availability.unwrap() - 0.9).abs() < 1e-12);
        assert!((report.availability.unwrap() + report.unavailability.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(report.metrics()[0].0, "unavailability");
    }

    #[test]
    fn weighted_reward_and_linearity() {
        let (net, g, ss) = solved();
        let w1 = Expr::parse("#Up * 3").unwrap();
        let w2 = Expr::parse("#Down + 0.5").unwrap();
        let e =
            |w: Expr| expected_reward(&net, &g, &ss, &RewardSpec::parse("r", "true").unwrap().with_weight(w)).unwrap();
        let combo = Expr::parse("2 * (#Up * 3) - 0.25 * (#Down + 0.5)").unwrap();
        assert!((e(combo) - (2.0 * e(w1) - 0.25 * e(w2))).abs() < 1e-10);
    }

    #[test]
    fn weighted_spec_is_not_a_probability() {
        let (net, g, ss) = solved();
        let w = RewardSpec::parse("r", "true").unwrap().with_weight(Expr::num(2.0));
        assert_eq!(riskscore(&net, &g, &ss, &w), Err(RewardError::NotIndicator("r".into())));
    }

    #[test]
    fn evaluation_errors_surface() {
        let (net, g, ss) = solved();
        let bad = RewardSpec::parse("bad", "#Nope >= 1").unwrap();
        assert!(matches!(expected_reward(&net, &g, &ss, &bad), Err(RewardError::Eval { .. })));
        let div = RewardSpec::parse("div", "true").unwrap().with_weight(Expr::parse("1 / #Down").unwrap());
        assert!(expected_reward(&net, &g, &ss, &div).is_err());
    }

    #[test]
    fn metric_names() {
        assert_eq!(metric_name("up"), "unavailability");
        assert_eq!(metric_name("risky_dos"), "riskscore_dos");
        assert_eq!(metric_name("queue"), "queue");
        assert_eq!(metric_value("up", 0.75), 0.25);
    }
}
