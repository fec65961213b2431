//! Random bounded nets for property tests and solver cross-checks.
//!
//! Every generated net is token-conserving: each transition moves one token
//! from one place to another, so the state space is bounded by the number of
//! ways to spread the tokens over the places. A timed ring `P0 → P1 → … → P0`
//! keeps the tangible chain connected. Immediate transitions, when present,
//! only move tokens to higher-numbered places, so vanishing markings cannot
//! form a trap.

use std::ops::RangeInclusive;

use rand::Rng;

use crate::expr::Expr;
use crate::net::{NetDef, Transition};

#[derive(Debug, Clone)]
pub struct RandomNetConfig {
    pub places: RangeInclusive<usize>,
    pub tokens: RangeInclusive<u32>,
    /// Timed transitions beyond the ring.
    pub extra_timed: RangeInclusive<usize>,
    pub immediates: RangeInclusive<usize>,
    /// Probability that a timed rate is `r * #P` instead of a constant.
    pub marking_dependent: f64,
    /// Probability that an extra timed transition gets an inhibitor arc.
    pub inhibitors: f64,
}

impl Default for RandomNetConfig {
    fn default() -> Self {
        RandomNetConfig {
            places: 2..=5,
            tokens: 1..=4,
            extra_timed: 0..=4,
            immediates: 0..=0,
            marking_dependent: 0.3,
            inhibitors: 0.2,
        }
    }
}

impl RandomNetConfig {
    pub fn with_immediates(mut self, n: RangeInclusive<usize>) -> Self {
        self.immediates = n;
        self
    }
}

/// Number of markings of `tokens` tokens over `places` places.
pub fn marking_bound(places: usize, tokens: u32) -> u64 {
    // C(tokens + places - 1, places - 1)
    let (n, k) = (tokens as u64 + places as u64 - 1, places as u64 - 1);
    (0..k).fold(1u64, |acc, i| acc * (n - i) / (i + 1))
}

fn place(i: usize) -> String {
    format!("P{i}")
}

fn rate<R: Rng + ?Sized>(rng: &mut R, source: usize, cfg: &RandomNetConfig) -> Expr {
    let r = (rng.random_range(0.2..5.0f64) * 1000.0).round() / 1000.0;
    if rng.random_bool(cfg.marking_dependent) {
        Expr::binary(crate::expr::BinOp::Mul, Expr::num(r), Expr::tokens(&place(source)))
    } else {
        Expr::num(r)
    }
}

pub fn random_net<R: Rng + ?Sized>(rng: &mut R, cfg: &RandomNetConfig) -> NetDef {
    let n = rng.random_range(cfg.places.clone());
    let tokens = rng.random_range(cfg.tokens.clone());
    let mut initial = vec![0u32; n];
    for _ in 0..tokens {
        initial[rng.random_range(0..n)] += 1;
    }
    let mut d = NetDef::default();
    for (i, k) in initial.iter().enumerate() {
        d.place(&place(i), *k);
    }
    for i in 0..n {
        let name = format!("ring{i}");
        d.transition(Transition::timed(&name, rate(rng, i, cfg)));
        d.input(&place(i), &name, 1).output(&name, &place((i + 1) % n), 1);
    }
    for e in 0..rng.random_range(cfg.extra_timed.clone()) {
        let from = rng.random_range(0..n);
        let to = (from + rng.random_range(1..n)) % n;
        let name = format!("t{e}");
        d.transition(Transition::timed(&name, rate(rng, from, cfg)));
        d.input(&place(from), &name, 1).output(&name, &place(to), 1);
        if rng.random_bool(cfg.inhibitors) {
            let guard_place = rng.random_range(0..n);
            d.inhibitor(&place(guard_place), &name, rng.random_range(1..=tokens.max(1)));
        }
    }
    if n >= 2 {
        for e in 0..rng.random_range(cfg.immediates.clone()) {
            let from = rng.random_range(0..n - 1);
            let to = rng.random_range(from + 1..n);
            let name = format!("i{e}");
            let weight = rng.random_range(1..=4) as f64;
            let priority = rng.random_range(0..=2);
            d.transition(Transition::immediate(&name, weight, priority));
            d.input(&place(from), &name, 1).output(&name, &place(to), 1);
        }
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::Net;
    use crate::reachability::{explore, ExploreConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bound_counts() {
        assert_eq!(marking_bound(2, 3), 4);
        assert_eq!(marking_bound(5, 4), 70);
        assert_eq!(marking_bound(1, 7), 1);
    }

    #[test]
    fn generated_nets_are_valid_and_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cfg = RandomNetConfig::default().with_immediates(0..=3);
        for _ in 0..50 {
            let def = random_net(&mut rng, &cfg);
            let places = def.places.len();
            let tokens: u32 = def.places.iter().map(|p| p.initial_tokens).sum();
            let net = Net::new(def).unwrap();
            let g = explore(&net, &ExploreConfig::default()).unwrap();
            assert!(g.len() as u64 <= marking_bound(places, tokens));
        }
    }
}
