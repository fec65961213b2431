use srn_core::analysis::{solve_net, Solution};
use srn_core::markov::throughput;
use srn_core::mtd::{build_mtd_net, default_rewards, default_sweep, run_sweep, MtdParams};
use srn_core::simulator::mean_passage_time;
use srn_core::{simulate, ExploreConfig, Expr, Net, SimConfig, SolverConfig};

fn solve(p: &MtdParams) -> (Net, Solution) {
    let net = build_mtd_net(p).unwrap();
    let sol = solve_net(&net, &default_rewards(), &ExploreConfig::default(), &SolverConfig::default()).unwrap();
    (net, sol)
}

fn at_interval(t: f64) -> MtdParams {
    MtdParams { trigger_interval: t, ..MtdParams::default() }
}

#[test]
fn structural_invariants_hold_in_every_tangible_marking() {
    for phases in [1, 2, 4, 6] {
        let p = MtdParams { aging_phases: phases, clock_phases: phases.min(3), ..MtdParams::default() };
        let (net, sol) = solve(&p);
        assert!(sol.graph.len() < 100_000);
        let id = |n: &str| net.place_id(n).unwrap();
        for m in &sol.graph.states {
            assert!(m.get(id("LM")) + m.get(id("DW_Mig")) <= 1, "{}", net.describe(m));
            let acc = m.get(id("Accumulation"));
            let high = m.get(id("AgingHigh"));
            let dw2 = m.get(id("DW2"));
            assert!(acc + high <= phases, "{}", net.describe(m));
            assert!(acc + phases * (high + dw2) <= phases, "{}", net.describe(m));
            for pair in [("MN_UP", "MN_DN"), ("SN_UP", "SN_DN"), ("VM_UP", "VM_DN")] {
                assert!(m.get(id(pair.0)) + m.get(id(pair.1)) <= 1);
            }
        }
    }
}

#[test]
fn flow_balances_on_default_net() {
    let (net, sol) = solve(&MtdParams::default());
    let x: Vec<f64> =
        net.transitions().iter().map(|t| throughput(&sol.graph, &sol.steady_state, &t.name).unwrap()).collect();
    for p in 0..net.places().len() {
        let (mut inflow, mut outflow) = (0.0, 0.0);
        for (t, xt) in x.iter().enumerate() {
            let d = net.token_delta(t, p) as f64;
            if d > 0.0 {
                inflow += xt * d;
            } else {
                outflow -= xt * d;
            }
        }
        assert!((inflow - outflow).abs() <= 1e-8 * inflow.max(1.0), "{}: {inflow} vs {outflow}", net.places()[p].name);
    }
    // A migration cycle starts and completes at the same frequency.
    let f = |n: &str| x[net.transition_id(n).unwrap()];
    assert!(f("StartLM") > 0.0);
    assert!((f("StartLM") - f("PC") - f("LM_Abort") - f("LM_HostLoss")).abs() < 1e-12);
}

#[test]
fn aging_failures_fall_with_more_frequent_rejuvenation() {
    let sweep = default_sweep();
    let rates: Vec<f64> = sweep
        .values
        .iter()
        .map(|&t| {
            let (_, sol) = solve(&at_interval(t));
            throughput(&sol.graph, &sol.steady_state, "AgingFailure").unwrap()
        })
        .collect();
    for w in rates.windows(2) {
        assert!(w[0] <= w[1], "{rates:?}");
    }
}

#[test]
fn sweep_shows_the_trade_off() {
    let table = run_sweep(&MtdParams::default(), &default_sweep(), &SolverConfig::default()).unwrap();
    assert_eq!(table.rows.len(), 28);
    assert_eq!(table.header(), "value,unavailability,riskscore_dos,riskscore_mitm,tangible_states,solver_iterations");
    let u = table.column("unavailability").unwrap();
    let best = table.argmin("unavailability").unwrap();
    assert!(best > 6.0 && best < 168.0, "minimizer {best} on the boundary");
    let mitm = table.column("riskscore_mitm").unwrap();
    let dos = table.column("riskscore_dos").unwrap();
    assert!(mitm.windows(2).all(|w| w[0] >= w[1]));
    assert!(dos.windows(2).all(|w| w[0] <= w[1]));
    assert!(u.iter().chain(&mitm).chain(&dos).all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn full_hourly_sweep_has_one_row_per_value() {
    let spec = srn_core::analysis::SweepSpec::range("trigger_interval", 1.0, 168.0, 1.0).unwrap();
    let table = run_sweep(&MtdParams::default(), &spec, &SolverConfig::default()).unwrap();
    assert_eq!(table.rows.len(), 168);
    assert_eq!(table.values(), spec.values);
    for r in &table.rows {
        assert!(r.metrics.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn des_confirms_minimizer_and_neighbours() {
    let table = run_sweep(&MtdParams::default(), &default_sweep(), &SolverConfig::default()).unwrap();
    let best = table.argmin("unavailability").unwrap();
    for t in [best - 6.0, best, best + 6.0] {
        let (net, sol) = solve(&at_interval(t));
        let est = simulate(&net, &default_rewards(), &SimConfig::new(11, 50_000.0, 20)).unwrap();
        let e = est.get("up").unwrap();
        let up = sol.report.get("up").unwrap();
        assert!(e.covers(up, 3.0), "T={t}: {e:?} vs {up}");
    }
}

#[test]
fn single_aging_stage_has_exponential_passage_time() {
    // Nodes never fail and migrations never start, so nothing interrupts aging.
    for (phases, rate) in [(1u32, 1.0 / 240.0), (4, 4.0 / 240.0)] {
        let p = MtdParams {
            aging_phases: phases,
            aging_rate: rate,
            mttf_main: 1e12,
            mttf_standby: 1e12,
            mttf_vm: 1e12,
            trigger_interval: 1e12,
            ..MtdParams::default()
        };
        let net = build_mtd_net(&p).unwrap();
        let target = Expr::parse("#AgingHigh >= 1").unwrap();
        let est = mean_passage_time(&net, &target, 200, &SimConfig::new(5, 1e7, 20)).unwrap();
        let expected = phases as f64 / rate;
        assert!((expected - 240.0).abs() < 1e-9);
        assert!(est.covers(expected, 3.0), "k={phases}: {est:?}");
    }
}

#[test]
fn faster_downtime_phase_lowers_unavailability_without_node_failures() {
    let base = MtdParams { mttf_main: 1e12, mttf_standby: 1e12, ..MtdParams::default() };
    let mut last = f64::INFINITY;
    let mut gaps = Vec::new();
    for rate in [50.0, 500.0, 5_000.0, 50_000.0, 500_000.0] {
        let (_, sol) = solve(&MtdParams { lm_downtime_rate: rate, ..base.clone() });
        let u = sol.report.unavailability.unwrap();
        assert!(u < last, "rate {rate}: {u} !< {last}");
        gaps.push(last - u);
        last = u;
    }
    // Converges: successive improvements shrink.
    for w in gaps[1..].windows(2) {
        assert!(w[1] < w[0]);
    }
}
