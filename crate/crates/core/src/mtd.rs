//! Availability and security model of a virtualized host pair using VM live
//! migration as both moving-target defense and VMM rejuvenation.
//!
//! One VM runs on the main node; a standby node is the migration target.
//! The model has four parts:
//!
//! * **Clock.** `Clock` holds the token of the migration cycle. It passes
//!   through `clock_phases` Erlang stages (`ClockTick`, counting in
//!   `ClockStage`) and `Trigger` moves it to `Schedule`, so the mean time
//!   between submissions is `trigger_interval`. `ResetClock` re-arms `Clock`
//!   once the cycle has finished.
//! * **Migration.** `StartLM` starts a live migration as soon as a migration
//!   is scheduled, the VM is up and both nodes are up. `PC` is the
//!   pre-copy phase (VM still serving, token in `LM`); `LM_dwt` is the
//!   stop-and-copy downtime (token in `DW_Mig`, VM down). When it completes
//!   the VM resumes on the former standby and the former main waits in
//!   `SN_W` while `Rej` rejuvenates its VMM. Node roles swap; because a
//!   migration only completes with both nodes up, the swap leaves the node
//!   places unchanged and node failure rates attach to roles.
//!   A node failure during the migration aborts it (`LM_Abort`,
//!   `LM_HostLoss`, `DW_Abort`) and leaves it scheduled.
//! * **Aging.** While the main node is up, `Aging` adds a token to
//!   `Accumulation` at `aging_rate`; when `aging_phases` tokens are present
//!   the immediate `AgingPhase` marks `AgingHigh`. From there
//!   `AgingFailure` crashes the VMM and the VM with it (`DW2`), and
//!   `AgingRepair` restarts both with a fresh VMM. When a migration cycle
//!   completes, `ClearAging1` and `ClearAging2` flush `Accumulation` and
//!   `AgingHigh`, since the VM now runs on a rejuvenated VMM.
//! * **Failures.** Main node, standby node and VM fail and are repaired
//!   with exponential times of the configured means. A main node failure
//!   takes the VM down immediately (`HostCrash`); the VM is repaired only
//!   on a working host.
//!
//! Token invariants: the cycle token sits in exactly one of `Clock`,
//! `Schedule`, `LM`, `DW_Mig`, `SN_W`, `Rejuvenated`; the VM token in exactly
//! one of `VM_UP`, `VM_DN`, `DW2`, `LM`, `DW_Mig`.

use std::fmt;

use thiserror::Error;

use crate::analysis::{sweep, SweepError, SweepSpec, SweepTable};
use crate::expr::Expr;
use crate::markov::SolverConfig;
use crate::net::{Net, NetDef, NetError, Transition};
use crate::reachability::ExploreConfig;
use crate::rewards::RewardSpec;

/// Default sweep of `trigger_interval`: every 6 hours up to a week.
pub const DEFAULT_SWEEP: (f64, f64, f64) = (6.0, 168.0, 6.0);

#[derive(Debug, Clone, PartialEq)]
pub struct MtdParams {
    /// Mean hours between migration submissions.
    pub trigger_interval: f64,
    pub clock_phases: u32,
    /// Rate of each aging stage, 1/hour.
    pub aging_rate: f64,
    pub aging_phases: u32,
    pub aging_failure_rate: f64,
    pub mttf_main: f64,
    pub mttr_main: f64,
    pub mttf_standby: f64,
    pub mttr_standby: f64,
    pub mttf_vm: f64,
    pub mttr_vm: f64,
    pub lm_precopy_rate: f64,
    pub lm_downtime_rate: f64,
    pub rejuvenation_rate: f64,
}

impl Default for MtdParams {
    fn default() -> Self {
        MtdParams {
            trigger_interval: 24.0,
            clock_phases: 1,
            // Mean time to AgingHigh: aging_phases / aging_rate = 240 h.
            aging_rate: 4.0 / 240.0,
            aging_phases: 4,
            aging_failure_rate: 1.0 / 24.0,
            mttf_main: 2000.0,
            mttr_main: 2.0,
            mttf_standby: 2000.0,
            mttr_standby: 2.0,
            mttf_vm: 1000.0,
            mttr_vm: 0.5,
            lm_precopy_rate: 1.0 / 0.05,
            lm_downtime_rate: 1.0 / 0.002,
            rejuvenation_rate: 1.0 / 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("unknown parameter {0}")]
    Unknown(String),
    #[error("parameter {name} must be positive, got {value}")]
    NotPositive { name: String, value: f64 },
    #[error("parameter {name} must be a whole number >= 1, got {value}")]
    NotCount { name: String, value: f64 },
}

/// Real-valued parameters, in declaration order.
const REAL_PARAMS: &[&str] = &[
    "trigger_interval",
    "aging_rate",
    "aging_failure_rate",
    "mttf_main",
    "mttr_main",
    "mttf_standby",
    "mttr_standby",
    "mttf_vm",
    "mttr_vm",
    "lm_precopy_rate",
    "lm_downtime_rate",
    "rejuvenation_rate",
];

const COUNT_PARAMS: &[&str] = &["clock_phases", "aging_phases"];

impl MtdParams {
    pub fn names() -> impl Iterator<Item = &'static str> {
        REAL_PARAMS.iter().chain(COUNT_PARAMS).copied()
    }

    fn real_mut(&mut self, name: &str) -> Option<&mut f64> {
        Some(match name {
            "trigger_interval" => &mut self.trigger_interval,
            "aging_rate" => &mut self.aging_rate,
            "aging_failure_rate" => &mut self.aging_failure_rate,
            "mttf_main" => &mut self.mttf_main,
            "mttr_main" => &mut self.mttr_main,
            "mttf_standby" => &mut self.mttf_standby,
            "mttr_standby" => &mut self.mttr_standby,
            "mttf_vm" => &mut self.mttf_vm,
            "mttr_vm" => &mut self.mttr_vm,
            "lm_precopy_rate" => &mut self.lm_precopy_rate,
            "lm_downtime_rate" => &mut self.lm_downtime_rate,
            "rejuvenation_rate" => &mut self.rejuvenation_rate,
            _ => return None,
        })
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        match name {
            "clock_phases" => Some(f64::from(self.clock_phases)),
            "aging_phases" => Some(f64::from(self.aging_phases)),
            _ => self.clone().real_mut(name).map(|v| *v),
        }
    }

    pub fn set(&mut self, name: &str, value: f64) -> Result<(), ParamError> {
        if !(value > 0.0 && value.is_finite()) {
            if Self::names().any(|n| n == name) {
                return Err(ParamError::NotPositive { name: name.to_string(), value });
            }
            return Err(ParamError::Unknown(name.to_string()));
        }
        if COUNT_PARAMS.contains(&name) {
            if value.fract() != 0.0 || value > f64::from(u32::MAX) {
                return Err(ParamError::NotCount { name: name.to_string(), value });
            }
            let n = value as u32;
            match name {
                "clock_phases" => self.clock_phases = n,
                _ => self.aging_phases = n,
            }
            return Ok(());
        }
        match self.real_mut(name) {
            Some(slot) => {
                *slot = value;
                Ok(())
            }
            None => Err(ParamError::Unknown(name.to_string())),
        }
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        for name in REAL_PARAMS {
            let v = self.get(name).unwrap();
            if !(v > 0.0 && v.is_finite()) {
                return Err(ParamError::NotPositive { name: name.to_string(), value: v });
            }
        }
        for (name, v) in [("clock_phases", self.clock_phases), ("aging_phases", self.aging_phases)] {
            if v == 0 {
                return Err(ParamError::NotCount { name: name.to_string(), value: 0.0 });
            }
        }
        Ok(())
    }
}

impl fmt::Display for MtdParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for name in Self::names() {
            writeln!(f, "{name} = {}", self.get(name).unwrap())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MtdError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Net(#[from] NetError),
}

fn e(src: &str) -> Expr {
    Expr::parse(src).expect("model expression")
}

/// Net definition of the model; parameters are declared in the net so the
/// rate expressions stay symbolic.
pub fn build_mtd_def(params: &MtdParams) -> Result<NetDef, ParamError> {
    params.validate()?;
    let k_clock = params.clock_phases;
    let k_aging = params.aging_phases;
    let mut d = NetDef::default();
    for name in REAL_PARAMS {
        d.param(name, params.get(name).unwrap());
    }
    d.param("clock_phases", f64::from(k_clock));

    d.place("Clock", 1);
    if k_clock > 1 {
        d.place("ClockStage", 0);
    }
    d.place("Schedule", 0)
        .place("LM", 0)
        .place("DW_Mig", 0)
        .place("SN_W", 0)
        .place("Rejuvenated", 0)
        .place("Accumulation", 0)
        .place("AgingHigh", 0)
        .place("DW2", 0)
        .place("MN_UP", 1)
        .place("MN_DN", 0)
        .place("SN_UP", 1)
        .place("SN_DN", 0)
        .place("VM_UP", 1)
        .place("VM_DN", 0);

    // Clock
    let clock_rate = e("clock_phases / trigger_interval");
    if k_clock > 1 {
        d.transition(Transition::timed("ClockTick", clock_rate.clone()))
            .input("Clock", "ClockTick", 1)
            .output("ClockTick", "Clock", 1)
            .output("ClockTick", "ClockStage", 1)
            .inhibitor("ClockStage", "ClockTick", k_clock - 1);
    }
    d.transition(Transition::timed("Trigger", clock_rate))
        .input("Clock", "Trigger", 1)
        .output("Trigger", "Schedule", 1);
    if k_clock > 1 {
        d.input("ClockStage", "Trigger", k_clock - 1);
    }
    d.transition(Transition::immediate("ResetClock", 1.0, 1));
    d.input("Rejuvenated", "ResetClock", 1).output("ResetClock", "Clock", 1);

    // Migration
    d.transition(Transition::immediate("StartLM", 1.0, 1).with_guard(e("#MN_UP >= 1 and #SN_UP >= 1")))
        .input("Schedule", "StartLM", 1)
        .input("VM_UP", "StartLM", 1)
        .output("StartLM", "LM", 1)
        .transition(Transition::timed("PC", e("lm_precopy_rate")))
        .input("LM", "PC", 1)
        .output("PC", "DW_Mig", 1)
        .transition(Transition::timed("LM_dwt", e("lm_downtime_rate")))
        .input("DW_Mig", "LM_dwt", 1)
        .output("LM_dwt", "VM_UP", 1)
        .output("LM_dwt", "SN_W", 1)
        .transition(Transition::timed("Rej", e("rejuvenation_rate")))
        .input("SN_W", "Rej", 1)
        .output("Rej", "Rejuvenated", 1)
        .transition(Transition::immediate("LM_Abort", 1.0, 3).with_guard(e("#SN_DN >= 1 and #MN_UP >= 1")))
        .input("LM", "LM_Abort", 1)
        .output("LM_Abort", "VM_UP", 1)
        .output("LM_Abort", "Schedule", 1)
        .transition(Transition::immediate("LM_HostLoss", 1.0, 3).with_guard(e("#MN_DN >= 1")))
        .input("LM", "LM_HostLoss", 1)
        .output("LM_HostLoss", "VM_DN", 1)
        .output("LM_HostLoss", "Schedule", 1)
        .transition(Transition::immediate("DW_Abort", 1.0, 3).with_guard(e("#MN_DN >= 1 or #SN_DN >= 1")))
        .input("DW_Mig", "DW_Abort", 1)
        .output("DW_Abort", "VM_DN", 1)
        .output("DW_Abort", "Schedule", 1);

    // Aging
    d.transition(Transition::timed("Aging", e("aging_rate")).with_guard(e("#MN_UP >= 1")))
        .output("Aging", "Accumulation", 1)
        .inhibitor("AgingHigh", "Aging", 1)
        .inhibitor("DW2", "Aging", 1)
        .transition(Transition::immediate("AgingPhase", 1.0, 2))
        .input("Accumulation", "AgingPhase", k_aging)
        .output("AgingPhase", "AgingHigh", 1)
        .transition(Transition::timed("AgingFailure", e("aging_failure_rate")))
        .input("AgingHigh", "AgingFailure", 1)
        .input("VM_UP", "AgingFailure", 1)
        .output("AgingFailure", "DW2", 1)
        .transition(Transition::timed("AgingRepair", e("1 / mttr_vm")).with_guard(e("#MN_UP >= 1")))
        .input("DW2", "AgingRepair", 1)
        .output("AgingRepair", "VM_UP", 1)
        .transition(Transition::immediate("ClearAging1", 1.0, 2))
        .input("Rejuvenated", "ClearAging1", 1)
        .output("ClearAging1", "Rejuvenated", 1)
        .input("Accumulation", "ClearAging1", 1)
        .transition(Transition::immediate("ClearAging2", 1.0, 2))
        .input("Rejuvenated", "ClearAging2", 1)
        .output("ClearAging2", "Rejuvenated", 1)
        .input("AgingHigh", "ClearAging2", 1);

    // Failures and repairs
    d.transition(Transition::timed("MN_Fail", e("1 / mttf_main")))
        .input("MN_UP", "MN_Fail", 1)
        .output("MN_Fail", "MN_DN", 1)
        .transition(Transition::timed("MN_Repair", e("1 / mttr_main")))
        .input("MN_DN", "MN_Repair", 1)
        .output("MN_Repair", "MN_UP", 1)
        .transition(Transition::timed("SN_Fail", e("1 / mttf_standby")))
        .input("SN_UP", "SN_Fail", 1)
        .output("SN_Fail", "SN_DN", 1)
        .transition(Transition::timed("SN_Repair", e("1 / mttr_standby")))
        .input("SN_DN", "SN_Repair", 1)
        .output("SN_Repair", "SN_UP", 1)
        .transition(Transition::timed("VM_Fail", e("1 / mttf_vm")))
        .input("VM_UP", "VM_Fail", 1)
        .output("VM_Fail", "VM_DN", 1)
        .transition(Transition::timed("VM_Repair", e("1 / mttr_vm")).with_guard(e("#MN_UP >= 1")))
        .input("VM_DN", "VM_Repair", 1)
        .output("VM_Repair", "VM_UP", 1)
        .transition(Transition::immediate("HostCrash", 1.0, 3).with_guard(e("#MN_DN >= 1")))
        .input("VM_UP", "HostCrash", 1)
        .output("HostCrash", "VM_DN", 1);
    Ok(d)
}

pub fn build_mtd_net(params: &MtdParams) -> Result<Net, MtdError> {
    Ok(Net::new(build_mtd_def(params)?)?)
}

/// `up`: the VM serves requests (running, possibly in pre-copy).
/// `risky_dos`: high VMM aging or no working standby.
/// `risky_mitm`: a migration is moving VM state over the network.
pub fn default_rewards() -> Vec<RewardSpec> {
    vec![
        RewardSpec::indicator("up", e("#VM_UP + #LM >= 1")),
        RewardSpec::indicator("risky_dos", e("#AgingHigh >= 1 or #SN_DN >= 1")),
        RewardSpec::indicator("risky_mitm", e("#LM + #DW_Mig >= 1")),
    ]
}

/// Solves the model at every sweep value. Columns: `unavailability`,
/// `riskscore_dos`, `riskscore_mitm`.
pub fn run_sweep(params: &MtdParams, spec: &SweepSpec, solver: &SolverConfig) -> Result<SweepTable, SweepError> {
    if params.get(&spec.parameter).is_none() {
        return Err(SweepError::Point {
            parameter: spec.parameter.clone(),
            value: spec.values.first().copied().unwrap_or(f64::NAN),
            message: ParamError::Unknown(spec.parameter.clone()).to_string(),
        });
    }
    sweep(spec, &ExploreConfig::default(), solver, |value| {
        let mut p = params.clone();
        p.set(&spec.parameter, value).map_err(|e| e.to_string())?;
        let net = build_mtd_net(&p).map_err(|e| e.to_string())?;
        Ok((net, default_rewards()))
    })
}

pub fn default_sweep() -> SweepSpec {
    let (start, stop, step) = DEFAULT_SWEEP;
    SweepSpec::range("trigger_interval", start, stop, step).expect("valid default sweep")
}
