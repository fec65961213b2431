//! Acceptance checks. Each criterion prints one PASS/FAIL line with its
//! runtime against the budget; the process exits nonzero if any fails.

use std::process::Command;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use srn_core::analysis::solve_net;
use srn_core::markov::{build_generator, steady_state, throughput};
use srn_core::mtd::{build_mtd_net, default_rewards, default_sweep, run_sweep, MtdParams};
use srn_core::random::{random_net, RandomNetConfig};
use srn_core::{
    explore, simulate, ExploreConfig, Expr, Net, NetDef, RewardSpec, SimConfig, SolverConfig, SolverMethod, Transition,
};

type Check = fn() -> Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn solve_rewards(net: &Net, rewards: &[RewardSpec], method: SolverMethod) -> Result<Vec<(String, f64)>, String> {
    let cfg = SolverConfig { method, ..SolverConfig::default() };
    Ok(solve_net(net, rewards, &ExploreConfig::default(), &cfg).map_err(err)?.report.rewards)
}

fn closed_form_chains() -> Result<String, String> {
    let mut d = NetDef::default();
    d.place("Up", 1)
        .place("Down", 0)
        .transition(Transition::timed("fail", Expr::num(1.0)))
        .transition(Transition::timed("repair", Expr::num(9.0)))
        .input("Up", "fail", 1)
        .output("fail", "Down", 1)
        .input("Down", "repair", 1)
        .output("repair", "Up", 1);
    let net = Net::new(d).map_err(err)?;
    let up = RewardSpec::parse("up", "#Up >= 1").map_err(err)?;
    let sol = solve_net(&net, &[up], &ExploreConfig::default(), &SolverConfig::default()).map_err(err)?;
    let u = sol.report.unavailability.ok_or("no unavailability")?;
    ensure((u - 0.1).abs() < 1e-9, || format!("two-state unavailability {u}"))?;

    let mut d = NetDef::default();
    d.place("Q", 0)
        .place("Free", 3)
        .transition(Transition::timed("arrive", Expr::num(1.0)))
        .transition(Transition::timed("serve", Expr::num(2.0)))
        .input("Free", "arrive", 1)
        .output("arrive", "Q", 1)
        .input("Q", "serve", 1)
        .output("serve", "Free", 1);
    let net = Net::new(d).map_err(err)?;
    let occ: Vec<RewardSpec> =
        (0..=3).map(|n| RewardSpec::parse(&format!("q{n}"), &format!("#Q == {n}")).unwrap()).collect();
    let got = solve_rewards(&net, &occ, SolverMethod::Auto)?;
    let mut worst: f64 = 0.0;
    for ((_, v), w) in got.iter().zip([8.0, 4.0, 2.0, 1.0]) {
        worst = worst.max((v - w / 15.0).abs());
    }
    ensure(worst < 1e-9, || format!("M/M/1/3 max error {worst:e}"))?;
    Ok(format!("two-state error {:.1e}, M/M/1/3 max error {worst:.1e}", (u - 0.1).abs()))
}

fn vanishing_elimination() -> Result<String, String> {
    let mut d = NetDef::default();
    d.place("S", 1)
        .place("V", 0)
        .place("A", 0)
        .place("B", 0)
        .transition(Transition::timed("t", Expr::num(2.0)))
        .transition(Transition::immediate("toA", 1.0, 1))
        .transition(Transition::immediate("toB", 3.0, 1))
        .input("S", "t", 1)
        .output("t", "V", 1)
        .input("V", "toA", 1)
        .output("toA", "A", 1)
        .input("V", "toB", 1)
        .output("toB", "B", 1);
    let net = Net::new(d).map_err(err)?;
    let g = explore(&net, &ExploreConfig::default()).map_err(err)?;
    let (a, b) = (net.place_id("A").unwrap(), net.place_id("B").unwrap());
    let rate_into = |p| g.edges.iter().filter(|e| g.states[e.target].get(p) == 1).map(|e| e.rate).sum::<f64>();
    let (ra, rb) = (rate_into(a), rate_into(b));
    ensure((ra - 0.5).abs() < 1e-12 && (rb - 1.5).abs() < 1e-12 && (rb - 3.0 * ra).abs() < 1e-12, || {
        format!("branch rates {ra}, {rb}")
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cfg = RandomNetConfig::default();
    for i in 0..100 {
        let net = Net::new(random_net(&mut rng, &cfg)).map_err(err)?;
        let g = explore(&net, &ExploreConfig::default()).map_err(err)?;
        ensure(g.vanishing_count == 0, || format!("net {i}: vanishing markings"))?;
        let mut expected = Vec::new();
        for (s, m) in g.states.iter().enumerate() {
            for t in net.enabled(m).map_err(err)? {
                let target = net.fire(m, t).map_err(err)?;
                let j = g.states.iter().position(|x| *x == target).ok_or(format!("net {i}: successor missing"))?;
                expected.push((s, j, t, net.rate_of(m, t).map_err(err)?));
            }
        }
        let mut actual: Vec<(usize, usize, usize, f64)> =
            g.edges.iter().flat_map(|e| e.labels.iter().map(move |&(t, c)| (e.source, e.target, t, c))).collect();
        let key = |x: &(usize, usize, usize, f64)| (x.0, x.1, x.2);
        expected.sort_by_key(key);
        actual.sort_by_key(key);
        let same = expected.len() == actual.len()
            && expected.iter().zip(&actual).all(|(x, y)| key(x) == key(y) && (x.3 - y.3).abs() <= 1e-12 * x.3);
        ensure(same, || format!("net {i}: graph differs from raw reachability"))?;
    }
    Ok(format!("rates {ra} : {rb}; 100 immediate-free nets identical to raw reachability"))
}

fn cross_method() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cfg = RandomNetConfig { places: 3..=7, tokens: 2..=6, extra_timed: 0..=6, ..RandomNetConfig::default() }
        .with_immediates(0..=3);
    let (mut nets, mut worst, mut largest, mut tried) = (0, 0.0f64, 0, 0);
    while nets < 50 {
        tried += 1;
        ensure(tried < 10_000, || "too few ergodic nets generated".into())?;
        let net = Net::new(random_net(&mut rng, &cfg)).map_err(err)?;
        let g = explore(&net, &ExploreConfig::default()).map_err(err)?;
        if g.len() > 500 {
            continue;
        }
        let q = build_generator(&g).map_err(err)?;
        if q.recurrent_classes().len() != 1 {
            continue;
        }
        let solve = |method| steady_state(&q, &SolverConfig { method, ..SolverConfig::default() }).map_err(err);
        let (d, it) = (solve(SolverMethod::Direct)?, solve(SolverMethod::Iterative)?);
        for (a, b) in d.pi.iter().zip(&it.pi) {
            worst = worst.max((a - b).abs());
        }
        largest = largest.max(g.len());
        nets += 1;
    }
    ensure(worst < 1e-8, || format!("max elementwise difference {worst:e}"))?;
    Ok(format!("50 nets (largest {largest} states), max difference {worst:.1e}"))
}

fn flow_balance() -> Result<String, String> {
    let net = build_mtd_net(&MtdParams::default()).map_err(err)?;
    let sol = solve_net(&net, &default_rewards(), &ExploreConfig::default(), &SolverConfig::default()).map_err(err)?;
    let x = net
        .transitions()
        .iter()
        .map(|t| throughput(&sol.graph, &sol.steady_state, &t.name))
        .collect::<Result<Vec<f64>, _>>()
        .map_err(err)?;
    let mut worst: f64 = 0.0;
    for p in 0..net.places().len() {
        let imbalance: f64 = x.iter().enumerate().map(|(t, xt)| xt * net.token_delta(t, p) as f64).sum();
        ensure(imbalance.abs() < 1e-8, || format!("place {} imbalance {imbalance:e}", net.places()[p].name))?;
        worst = worst.max(imbalance.abs());
    }
    Ok(format!("{} places, max imbalance {worst:.1e} per hour", net.places().len()))
}

fn des_oracle() -> Result<String, String> {
    let sweep = default_sweep();
    let (lo, hi) = (sweep.values[0], *sweep.values.last().unwrap());
    let default = MtdParams::default().trigger_interval;
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    for t in [lo, default, hi] {
        let params = MtdParams { trigger_interval: t, ..MtdParams::default() };
        let net = build_mtd_net(&params).map_err(err)?;
        let sol =
            solve_net(&net, &default_rewards(), &ExploreConfig::default(), &SolverConfig::default()).map_err(err)?;
        let est = simulate(&net, &default_rewards(), &SimConfig::new(42, 50_000.0, 20)).map_err(err)?;
        for (name, v) in &sol.report.rewards {
            let e = est.get(name).ok_or("missing estimate")?;
            let z = (e.mean - v).abs() / e.std_error;
            worst = worst.max(z);
            if !e.covers(*v, 3.0) {
                failures.push(format!("T={t} {name}: {z:.2} SE"));
            }
        }
    }
    ensure(failures.is_empty(), || failures.join("; "))?;
    Ok(format!("T in {{{lo}, {default}, {hi}}}, 20 reps x 50000 h, worst deviation {worst:.2} SE"))
}

fn sweep_shape() -> Result<String, String> {
    let table = run_sweep(&MtdParams::default(), &default_sweep(), &SolverConfig::default()).map_err(err)?;
    let u = table.column("unavailability").ok_or("no unavailability column")?;
    let mitm = table.column("riskscore_mitm").ok_or("no riskscore_mitm column")?;
    let dos = table.column("riskscore_dos").ok_or("no riskscore_dos column")?;
    let values = table.values();
    let best = table.argmin("unavailability").ok_or("empty sweep")?;
    let increasing = u.windows(2).all(|w| w[0] <= w[1]);
    let decreasing = u.windows(2).all(|w| w[0] >= w[1]);
    ensure(!increasing && !decreasing, || "unavailability is monotone".into())?;
    ensure(best != values[0] && best != *values.last().unwrap(), || format!("minimizer {best} on the grid edge"))?;
    ensure(mitm.windows(2).all(|w| w[0] >= w[1]), || "riskscore_mitm increases somewhere".into())?;
    ensure(dos.windows(2).all(|w| w[0] <= w[1]), || "riskscore_dos decreases somewhere".into())?;
    Ok(format!(
        "{} points, unavailability minimized at T={best}; mitm {:.2e} -> {:.2e}, dos {:.2e} -> {:.2e}",
        values.len(),
        mitm[0],
        mitm[mitm.len() - 1],
        dos[0],
        dos[dos.len() - 1]
    ))
}

fn determinism() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(err)?;
    let run = |args: &[&str], file: &str| -> Result<(Vec<u8>, Vec<u8>), String> {
        let path = dir.path().join(file);
        let o = Command::new(env!("CARGO_BIN_EXE_srn")).args(args).arg("--output").arg(&path).output().map_err(err)?;
        ensure(o.status.success(), || String::from_utf8_lossy(&o.stderr).into_owned())?;
        Ok((o.stdout, std::fs::read(&path).map_err(err)?))
    };
    let sim = ["simulate", "mtd-cloud", "--seed", "7", "--horizon", "50000", "--reps", "8"];
    let (a, b) = (run(&sim, "sim1.csv")?, run(&sim, "sim2.csv")?);
    ensure(a == b, || "simulate outputs differ".into())?;
    let solve = ["solve", "mtd-cloud", "--param", "trigger_interval=36"];
    let (c, d) = (run(&solve, "solve1.csv")?, run(&solve, "solve2.csv")?);
    ensure(c == d, || "solve outputs differ".into())?;
    Ok(format!("simulate report {} bytes, solve CSV {} bytes identical across runs", a.0.len(), c.1.len()))
}

fn structural_invariants() -> Result<String, String> {
    let params = MtdParams::default();
    let net = build_mtd_net(&params).map_err(err)?;
    let g = explore(&net, &ExploreConfig::default()).map_err(err)?;
    let id = |n: &str| net.place_id(n).ok_or(format!("no place {n}"));
    let (lm, dw, acc, high) = (id("LM")?, id("DW_Mig")?, id("Accumulation")?, id("AgingHigh")?);
    for m in &g.states {
        ensure(m.get(lm) + m.get(dw) <= 1, || format!("two migrations in [{}]", net.describe(m)))?;
        ensure(m.get(acc) + m.get(high) <= params.aging_phases, || format!("aging overflow in [{}]", net.describe(m)))?;
    }
    Ok(format!("{} tangible markings checked", g.len()))
}

fn main() {
    let criteria: [(&str, u64, Check); 8] = [
        ("closed-form chains", 1, closed_form_chains),
        ("vanishing elimination", 10, vanishing_elimination),
        ("direct and iterative solvers agree", 30, cross_method),
        ("flow balance on the cloud model", 10, flow_balance),
        ("simulation covers analytic metrics", 300, des_oracle),
        ("sweep trade-off shape", 120, sweep_shape),
        ("determinism", 60, determinism),
        ("structural invariants", 10, structural_invariants),
    ];
    let mut failed = 0;
    for (i, (name, budget, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let budget = Duration::from_secs(*budget);
        let (ok, detail) = match result {
            Ok(d) if elapsed <= budget => (true, d),
            Ok(d) => (false, format!("{d}; over time budget")),
            Err(e) => (false, e),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "{} [{}] {name} ({:.2}s of {}s): {detail}",
            if ok { "PASS" } else { "FAIL" },
            i + 1,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
