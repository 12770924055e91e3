//! The slotted simulation loop: channel sampling, the four controllers,
//! queue updates, battery accounting and trace collection.
//!
//! Within a slot: (1) sample channels, (2) refresh the source's copy of `U`
//! if a report is due, (3) flow control per receiver, (4) max-weight
//! scheduling, (5) per-device credit generation, computation and energy
//! control, (6) queue updates, (7) battery drain from the actual transfers,
//! (8) record. Every controller reads start-of-slot queue values.
//!
//! Besides the full pipeline ([`Policy::Eacc`]) two baselines run on the
//! same queue machinery: no cooperation (each receiver served only over its
//! own source link) and relay-only cooperation (helpers forward unprocessed
//! packets which the receiver must process itself).

use thiserror::Error;

use crate::channel::{
    feasible_activations, sample_channels, ActivationSet, ChannelConfig, ChannelError,
    ChannelState, LinkId, NetworkMode,
};
use crate::control::{
    computation_control, energy_control, flow_control, schedule, ControlError, ControllerConstants,
    ScheduleOutcome, UtilitySpec,
};
use crate::energy::{drain_battery, generate_credits, BatteryModel, EnergyLedger};
use crate::model::{
    apply_decision_transfers, total_backlog, update_queue_raw, DecisionVector, NodeId, QueueMatrix,
    SlotTransfers, SystemState,
};

#[derive(Debug, Error, PartialEq)]
pub enum EngineError {
    #[error("invalid scenario: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Control(#[from] ControlError),
}

/// Which controller stack drives a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Policy {
    /// Full pipeline: cooperative computation with energy control.
    Eacc,
    /// Each receiver is served only over its own source link.
    NoCooperation,
    /// Helpers relay unprocessed packets; receivers process everything.
    CooperationOnly,
}

/// Complete description of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub n_devices: usize,
    pub mode: NetworkMode,
    pub constants: ControllerConstants,
    pub channel: ChannelConfig,
    pub battery: Vec<BatteryModel>,
    /// Rate shaper applied by the computation block (1 = no rate change).
    pub alpha: QueueMatrix,
    /// Per-packet work multiplier per device; scales battery/ledger cost and
    /// shrinks the effective processing budget `d_max / work_factor`.
    pub work_factor: Vec<f64>,
    /// Devices with demand; all other flows stay at zero.
    pub receivers: Vec<NodeId>,
    /// Queue reports reach the source every this many slots.
    pub report_period_slots: u64,
    pub slots: u64,
    pub seed: u64,
    pub policy: Policy,
    pub enumeration_limit: usize,
}

impl ScenarioConfig {
    /// A scenario with every parameter at its default: `M = 500`,
    /// `R_max = D_max = E_max = 100`, report period 5 slots, battery
    /// threshold 0.4, unit rate shaper, all devices receivers. Default link
    /// rates are 5 packets/slot on source links and 25 on D2D links
    /// (1 Mbps and 5 Mbps at 500-byte packets and 20 ms slots), always on.
    pub fn with_defaults(n: usize) -> Self {
        Self {
            n_devices: n,
            mode: NetworkMode::CellularPlusD2d,
            constants: ControllerConstants::uniform(n, 500.0, 100.0, 100.0, 100.0),
            channel: ChannelConfig::uniform(n, 1.0, 5.0, 1.0, 25.0),
            battery: vec![BatteryModel::default(); n],
            alpha: QueueMatrix::filled(n, 1.0),
            work_factor: vec![1.0; n],
            receivers: (0..n).map(NodeId).collect(),
            report_period_slots: 5,
            slots: 1000,
            seed: 0,
            policy: Policy::Eacc,
            enumeration_limit: 4,
        }
    }

    /// Processing budget after the work factor: `d_max[dev] / work_factor[dev]`.
    pub fn effective_d_max(&self, dev: usize) -> f64 {
        self.constants.d_max[dev] / self.work_factor[dev]
    }

    pub fn is_receiver(&self, dev: usize) -> bool {
        self.receivers.iter().any(|r| r.0 == dev)
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let n = self.n_devices;
        let bad = |msg: String| Err(EngineError::InvalidConfig(msg));
        if n == 0 {
            return bad("n_devices must be at least 1".into());
        }
        if self.constants.m < 1.0 {
            return bad(format!("constants.m is {}, must be >= 1", self.constants.m));
        }
        if self.constants.r_max.len() != n
            || self.constants.d_max.len() != n
            || self.constants.e_max.n() != n
        {
            return bad("constants dimensions do not match n_devices".into());
        }
        for (name, values) in [
            ("r_max", &self.constants.r_max),
            ("d_max", &self.constants.d_max),
        ] {
            if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return bad(format!(
                    "constants.{name} entries must be positive and finite"
                ));
            }
        }
        if self
            .constants
            .e_max
            .iter()
            .any(|(_, v)| !(v.is_finite() && v > 0.0))
        {
            return bad("constants.e_max entries must be positive and finite".into());
        }
        match self.constants.utility {
            UtilitySpec::Log { epsilon } => {
                if !(epsilon.is_finite() && epsilon > 0.0) {
                    return bad(format!(
                        "utility.log_epsilon is {epsilon}, must be positive"
                    ));
                }
            }
            UtilitySpec::Power { theta } => {
                if !(0.0 < theta && theta < 1.0) {
                    return bad(format!("utility.power_theta is {theta}, must be in (0,1)"));
                }
            }
        }
        self.channel.validate(n).map_err(EngineError::Channel)?;
        if self.battery.len() != n {
            return bad("battery list length does not match n_devices".into());
        }
        for model in &self.battery {
            model
                .validate()
                .map_err(|e| EngineError::InvalidConfig(e.to_string()))?;
        }
        if self.alpha.n() != n || self.alpha.iter().any(|(_, a)| !(a.is_finite() && a > 0.0)) {
            return bad("alpha must be an NxN grid of positive entries".into());
        }
        if self.work_factor.len() != n || self.work_factor.iter().any(|w| w.is_nan() || *w < 1.0) {
            return bad("work_factor must hold one entry >= 1 per device".into());
        }
        let mut seen = vec![false; n];
        for r in &self.receivers {
            if r.0 >= n {
                return bad(format!("receiver {r} is out of range for {n} devices"));
            }
            if seen[r.0] {
                return bad(format!("receiver {r} listed twice"));
            }
            seen[r.0] = true;
        }
        if self.report_period_slots == 0 {
            return bad("report_period_slots must be at least 1".into());
        }
        Ok(())
    }
}

/// Post-slot totals of each queue family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueueTotals {
    pub s: f64,
    pub u: f64,
    pub q: f64,
    pub z: f64,
}

/// Per-slot measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub slot: u64,
    pub decision: DecisionVector,
    pub delivered: Vec<f64>,
    /// Total backlog after the slot's updates.
    pub backlog_total: f64,
    pub queue_totals: QueueTotals,
    /// Battery levels after the slot.
    pub batteries: Vec<f64>,
    /// Joules consumed this slot, per device.
    pub joules: Vec<f64>,
    pub chosen: ActivationSet,
}

/// Run-level aggregates. A zero-slot run is all zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub slots: u64,
    /// Packets/slot handed to each device's application, averaged over the
    /// run (multiply by 200 kbit for bits/s at 500-byte packets and 20 ms
    /// slots).
    pub mean_delivered_rate: Vec<f64>,
    pub mean_admitted_rate: Vec<f64>,
    /// `Σ g(mean_admitted)` over the receivers.
    pub sum_utility: f64,
    pub mean_backlog: f64,
    pub cumulative_joules: Vec<f64>,
}

/// The all-zero-queues state a run starts from.
pub fn initial_state(config: &ScenarioConfig) -> SystemState {
    let mut state = SystemState::zeros(config.n_devices, config.seed);
    for (level, model) in state.batteries.iter_mut().zip(&config.battery) {
        *level = model.initial_level;
    }
    state
}

/// One slot's controller outputs before the queues are updated.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotDecision {
    pub decision: DecisionVector,
    pub chosen: ActivationSet,
    /// Energy-credit allowance generated for this slot, per pair.
    pub credits: QueueMatrix,
}

/// Runs the four controllers on a start-of-slot state. The schedule uses
/// `state.reported_u` as-is; the caller refreshes it first when a report is
/// due (as [`step`] does).
pub fn decide(
    state: &SystemState,
    config: &ScenarioConfig,
    channels: &ChannelState,
) -> Result<SlotDecision, EngineError> {
    let n = config.n_devices;

    let mut y = vec![0.0; n];
    for r in &config.receivers {
        y[r.0] = flow_control(
            state.s[r.0],
            config.constants.r_max[r.0],
            config.constants.m,
            &config.constants.utility,
        );
    }

    let outcome = match config.policy {
        Policy::Eacc => {
            let acts = feasible_activations(config.mode, channels, config.enumeration_limit)?;
            schedule(&state.s, &state.reported_u, &state.z, &acts)?
        }
        Policy::CooperationOnly => {
            let acts = feasible_activations(config.mode, channels, config.enumeration_limit)?;
            schedule(&state.s, &state.reported_u, &state.u, &acts)?
        }
        Policy::NoCooperation => schedule_no_coop(state, &state.reported_u, config.mode, channels),
    };

    let mut credits = QueueMatrix::zeros(n);
    let mut d = QueueMatrix::zeros(n);
    let mut e = QueueMatrix::zeros(n);
    for dev in 0..n {
        let allowance = generate_credits(state.batteries[dev], &config.battery[dev]);
        credits.row_mut(dev).fill(allowance);
        let d_budget = config.effective_d_max(dev);
        match config.policy {
            Policy::CooperationOnly => {
                // Only the device's own flow passes through computation and
                // the energy filter; relayed traffic bypasses both.
                let at = (dev, dev);
                if state.u[at] - state.q[at] * config.alpha[at] > 0.0 {
                    d[at] = d_budget;
                }
                if state.q[at] - state.z[at] > 0.0 {
                    e[at] = config.constants.e_max[at].min(allowance);
                }
            }
            _ => {
                let d_row = computation_control(
                    state.u.row(dev),
                    state.q.row(dev),
                    config.alpha.row(dev),
                    d_budget,
                );
                let e_row = energy_control(
                    state.q.row(dev),
                    state.z.row(dev),
                    credits.row(dev),
                    config.constants.e_max.row(dev),
                );
                d.row_mut(dev).copy_from_slice(&d_row);
                e.row_mut(dev).copy_from_slice(&e_row);
            }
        }
    }

    let decision = DecisionVector {
        y,
        d,
        e,
        x: outcome.x,
        h: outcome.h,
        alpha: config.alpha.clone(),
    };
    Ok(SlotDecision {
        decision,
        chosen: outcome.chosen,
        credits,
    })
}

/// Advances one slot. Pure: the successor state and record are a function
/// of `(state, config)` alone.
pub fn step(
    state: &SystemState,
    config: &ScenarioConfig,
) -> Result<(SystemState, TraceRecord), EngineError> {
    let n = config.n_devices;
    let channels = sample_channels(state.seed, state.slot, &config.channel)?;

    let mut working = state.clone();
    if state.slot.is_multiple_of(config.report_period_slots) {
        working.reported_u = state.u.clone();
    }

    let SlotDecision {
        decision,
        chosen,
        credits,
    } = decide(&working, config, &channels)?;
    working.credits = credits;

    let (mut next, transfers) = match config.policy {
        Policy::CooperationOnly => apply_coop_only(&working, &decision),
        _ => apply_decision_transfers(&working, &decision),
    };

    let mut joules = Vec::with_capacity(n);
    for dev in 0..n {
        let processed: f64 = transfers.served_d.row(dev).iter().sum();
        // Convert packets to work units; guard 0 * inf for degenerate factors.
        let work = if processed > 0.0 {
            processed * config.work_factor[dev]
        } else {
            0.0
        };
        let transmitted: f64 = (0..n)
            .filter(|&k| k != dev)
            .map(|k| transfers.served_h[(dev, k)])
            .sum();
        let (level, j) = drain_battery(
            state.batteries[dev],
            work,
            transmitted,
            &config.battery[dev],
        );
        next.batteries[dev] = level;
        joules.push(j);
    }
    next.slot = state.slot + 1;

    let record = TraceRecord {
        slot: state.slot,
        delivered: transfers.delivered,
        backlog_total: total_backlog(&next),
        queue_totals: QueueTotals {
            s: next.s.total(),
            u: next.u.total(),
            q: next.q.total(),
            z: next.z.total(),
        },
        batteries: next.batteries.clone(),
        joules,
        chosen,
        decision,
    };
    Ok((next, record))
}

/// Scheduling for the no-cooperation baseline: each receiver may only be
/// served over its own source link, no D2D transmissions.
fn schedule_no_coop(
    state: &SystemState,
    reported_u: &QueueMatrix,
    mode: NetworkMode,
    channels: &ChannelState,
) -> ScheduleOutcome {
    let n = state.n();
    let mut x = QueueMatrix::zeros(n);
    let mut links = Vec::new();
    match mode {
        NetworkMode::CellularPlusD2d => {
            for dev in 0..n {
                if channels.source_on(dev) && state.s[dev] - reported_u[(dev, dev)] > 0.0 {
                    x[(dev, dev)] = channels.source_rate(dev);
                    links.push((LinkId::Source(NodeId(dev)), channels.source_rate(dev)));
                }
            }
        }
        NetworkMode::WifiPlusD2d => {
            let mut best: Option<(usize, f64)> = None;
            for dev in 0..n {
                if !channels.source_on(dev) {
                    continue;
                }
                let w = (state.s[dev] - reported_u[(dev, dev)]) * channels.source_rate(dev);
                if w > 0.0 && best.is_none_or(|(_, bw)| w > bw) {
                    best = Some((dev, w));
                }
            }
            if let Some((dev, _)) = best {
                x[(dev, dev)] = channels.source_rate(dev);
                links.push((LinkId::Source(NodeId(dev)), channels.source_rate(dev)));
            }
        }
    }
    ScheduleOutcome {
        x,
        h: QueueMatrix::zeros(n),
        chosen: ActivationSet::from_links(links),
    }
}

/// Queue updates for the relay-only baseline. Packets a helper holds for
/// someone else never enter its computation block: the D2D rate `h[n,k]`
/// serves `U[n,k]` directly, and relayed packets join the receiver's own
/// `U[k,k]` to be processed there. Only diagonal pairs use `Q` and `Z`.
fn apply_coop_only(state: &SystemState, decision: &DecisionVector) -> (SystemState, SlotTransfers) {
    let n = state.n();
    let mut next = state.clone();
    let mut served_x = QueueMatrix::zeros(n);
    let mut served_d = QueueMatrix::zeros(n);
    let mut served_e = QueueMatrix::zeros(n);
    let mut served_h = QueueMatrix::zeros(n);
    let mut delivered = vec![0.0; n];

    for k in 0..n {
        let mut remaining = state.s[k];
        for dev in 0..n {
            let moved = remaining.min(decision.x[(dev, k)]);
            served_x[(dev, k)] = moved;
            remaining -= moved;
        }
        next.s[k] = remaining + decision.y[k];
    }

    // Relay transfers read start-of-slot snapshots before any arrivals land.
    for dev in 0..n {
        for k in 0..n {
            if dev != k {
                served_h[(dev, k)] = state.u[(dev, k)].min(decision.h[(dev, k)]);
            }
        }
    }

    for dev in 0..n {
        for k in 0..n {
            if dev == k {
                let relayed: f64 = (0..n)
                    .filter(|&m| m != dev)
                    .map(|m| served_h[(m, dev)])
                    .sum();
                let (u_next, d_act) = update_queue_raw(
                    state.u[(dev, dev)],
                    decision.d[(dev, dev)],
                    served_x[(dev, dev)] + relayed,
                );
                next.u[(dev, dev)] = u_next;
                served_d[(dev, dev)] = d_act;

                let (q_next, e_act) = update_queue_raw(
                    state.q[(dev, dev)],
                    decision.e[(dev, dev)],
                    d_act * decision.alpha[(dev, dev)],
                );
                next.q[(dev, dev)] = q_next;
                served_e[(dev, dev)] = e_act;

                delivered[dev] += state.z[(dev, dev)];
                next.z[(dev, dev)] = e_act;
            } else {
                next.u[(dev, k)] =
                    (state.u[(dev, k)] - decision.h[(dev, k)]).max(0.0) + served_x[(dev, k)];
            }
        }
    }

    (
        next,
        SlotTransfers {
            delivered,
            served_x,
            served_d,
            served_e,
            served_h,
        },
    )
}

/// Folds [`step`] over the configured horizon, passing each slot's
/// start-of-slot state and record to `observer`. Returns the run summary.
pub fn run_with<F>(config: &ScenarioConfig, mut observer: F) -> Result<Summary, EngineError>
where
    F: FnMut(&SystemState, &TraceRecord),
{
    config.validate()?;
    let n = config.n_devices;
    let mut state = initial_state(config);
    let mut delivered_total = vec![0.0; n];
    let mut admitted_total = vec![0.0; n];
    let mut backlog_sum = 0.0;
    let mut ledger = EnergyLedger::new(n);

    for _ in 0..config.slots {
        let (next, record) = step(&state, config)?;
        for dev in 0..n {
            delivered_total[dev] += record.delivered[dev];
            admitted_total[dev] += record.decision.y[dev];
        }
        backlog_sum += record.backlog_total;
        ledger.record(&record.joules);
        observer(&state, &record);
        state = next;
    }

    if config.slots == 0 {
        return Ok(Summary {
            slots: 0,
            mean_delivered_rate: vec![0.0; n],
            mean_admitted_rate: vec![0.0; n],
            sum_utility: 0.0,
            mean_backlog: 0.0,
            cumulative_joules: vec![0.0; n],
        });
    }

    let slots = config.slots as f64;
    let mean_delivered_rate: Vec<f64> = delivered_total.iter().map(|v| v / slots).collect();
    let mean_admitted_rate: Vec<f64> = admitted_total.iter().map(|v| v / slots).collect();
    let sum_utility = config
        .receivers
        .iter()
        .map(|r| config.constants.utility.value(mean_admitted_rate[r.0]))
        .sum();
    Ok(Summary {
        slots: config.slots,
        mean_delivered_rate,
        mean_admitted_rate,
        sum_utility,
        mean_backlog: backlog_sum / slots,
        cumulative_joules: ledger.cumulative().to_vec(),
    })
}

/// Runs the scenario, collecting the full per-slot trace.
pub fn run(config: &ScenarioConfig) -> Result<(Vec<TraceRecord>, Summary), EngineError> {
    let mut trace = Vec::with_capacity(config.slots.min(1 << 20) as usize);
    let summary = run_with(config, |_, record| trace.push(record.clone()))?;
    Ok((trace, summary))
}

/// Runs the scenario under the given baseline policy, ignoring
/// `config.policy`.
pub fn run_baseline(config: &ScenarioConfig, kind: Policy) -> Result<Summary, EngineError> {
    let mut config = config.clone();
    config.policy = kind;
    run_with(&config, |_, _| {})
}
