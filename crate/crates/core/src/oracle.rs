//! Offline references the controllers are tested against: stability-region
//! membership, a brute-force utility optimum, per-slot max-weight
//! verification and the drift-based queue bound.
//!
//! The oracle works on the average model: each link contributes its mean
//! capacity `p·c`, and the schedulable region is the time-shared convex hull
//! of the feasible activation rate vectors. Membership reduces to a small
//! linear feasibility problem over per-pair rates and activation time
//! shares, solved by a small dense elimination routine. Everything here
//! is deliberately independent of the controller implementations.

use thiserror::Error;

use crate::channel::{
    feasible_activations, ActivationSet, ChannelError, ChannelState, LinkId, NetworkMode,
};
use crate::control::{decision_objective, ControllerConstants, UtilitySpec};
use crate::energy::generate_credits;
use crate::engine::{ScenarioConfig, Summary, TraceRecord};
use crate::model::{DecisionVector, NodeId, QueueMatrix, SystemState};

mod lp;

/// Exhaustive enumeration is kept to small groups.
pub const MAX_ORACLE_DEVICES: usize = 4;
/// Decision-grid verification is exhaustive only for tiny systems.
pub const MAX_VERIFY_DEVICES: usize = 2;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("{n} devices exceed the oracle enumeration capacity of {max}")]
    TooManyDevices { n: usize, max: usize },
    #[error("rate vector has {have} entries, the model expects {want}")]
    DimensionMismatch { have: usize, want: usize },
    #[error("{what} must be finite and non-negative, got {value}")]
    BadInput { what: &'static str, value: f64 },
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

/// Time-average view of a scenario: mean link capacities and the per-device
/// processing and energy budgets the averages must respect.
#[derive(Debug, Clone, PartialEq)]
pub struct AverageModel {
    pub n: usize,
    pub mode: NetworkMode,
    /// `p·c` of each source link.
    pub source_capacity: Vec<f64>,
    /// `p·c` of each D2D link (diagonal unused).
    pub d2d_capacity: QueueMatrix,
    /// Work-factor-adjusted processing budgets.
    pub processing_cap: Vec<f64>,
    /// Per-pair energy caps.
    pub energy_pair_cap: QueueMatrix,
    /// Mean credit allowance per slot and device.
    pub credit_rate: Vec<f64>,
    pub alpha: QueueMatrix,
    /// Flows with demand; all other average rates are pinned to zero.
    pub receivers: Vec<NodeId>,
}

impl AverageModel {
    /// Average view of a scenario. The credit rate is read off the initial
    /// battery level; this matches scenarios whose batteries stay on one
    /// side of the threshold (in particular, zero-drain ones).
    pub fn from_config(config: &ScenarioConfig) -> Self {
        let n = config.n_devices;
        let source_capacity = (0..n)
            .map(|dev| config.channel.source_on_prob[dev] * config.channel.source_rate[dev])
            .collect();
        let mut d2d_capacity = QueueMatrix::zeros(n);
        for from in 0..n {
            for to in 0..n {
                if from != to {
                    d2d_capacity[(from, to)] = config.channel.d2d_on_prob[from * n + to]
                        * config.channel.d2d_rate[from * n + to];
                }
            }
        }
        let credit_rate = (0..n)
            .map(|dev| generate_credits(config.battery[dev].initial_level, &config.battery[dev]))
            .collect();
        Self {
            n,
            mode: config.mode,
            source_capacity,
            d2d_capacity,
            processing_cap: (0..n).map(|dev| config.effective_d_max(dev)).collect(),
            energy_pair_cap: config.constants.e_max.clone(),
            credit_rate,
            alpha: config.alpha.clone(),
            receivers: config.receivers.clone(),
        }
    }

    fn activation_sets(&self) -> Result<Vec<ActivationSet>, OracleError> {
        let mut d2d = vec![0.0; self.n * self.n];
        for ((from, to), c) in self.d2d_capacity.iter() {
            d2d[from * self.n + to] = c;
        }
        let channels = ChannelState::always_on(self.source_capacity.clone(), d2d);
        Ok(feasible_activations(self.mode, &channels, self.n)?)
    }
}

/// Whether the rate vector `y` (demand inflated by `slack` on every positive
/// flow) is supportable: there must exist non-negative averages
/// `x, d, e, h` and activation time shares with
///
/// * `y_n + slack ≤ Σ_dev x[dev,n]` for every flow with demand,
/// * `x ≤ d`, `d·α ≤ e`, `e ≤ h` along every pair's chain (the off-diagonal
///   `h` rides the D2D time shares; self-delivery needs no link),
/// * `Σ_k d[dev,k] ≤ processing_cap[dev]`, `e` within the per-pair caps and
///   per-device credit rates, and source-link loads within their time
///   shares.
///
/// Since enlarging `d, e, h` beyond their lower bounds only consumes budget,
/// the chain collapses to `d = x`, `e = x·α`, `h = x·α`, leaving a linear
/// feasibility problem in `x` and the time shares.
pub fn in_stability_region(
    y: &[f64],
    model: &AverageModel,
    slack: f64,
) -> Result<bool, OracleError> {
    let n = model.n;
    if n > MAX_ORACLE_DEVICES {
        return Err(OracleError::TooManyDevices {
            n,
            max: MAX_ORACLE_DEVICES,
        });
    }
    if y.len() != n {
        return Err(OracleError::DimensionMismatch {
            have: y.len(),
            want: n,
        });
    }
    for &v in y {
        if !v.is_finite() || v < 0.0 {
            return Err(OracleError::BadInput {
                what: "y",
                value: v,
            });
        }
    }
    if !slack.is_finite() || slack < 0.0 {
        return Err(OracleError::BadInput {
            what: "slack",
            value: slack,
        });
    }

    let acts = model.activation_sets()?;
    let n_x = n * n;
    let n_vars = n_x + acts.len();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();

    // Demand: flows reach their targets with the required margin.
    for flow in 0..n {
        if y[flow] <= 0.0 {
            continue;
        }
        let mut row = vec![0.0; n_vars];
        for dev in 0..n {
            row[dev * n + flow] = -1.0;
        }
        rows.push(row);
        rhs.push(-(y[flow] + slack));
    }

    for dev in 0..n {
        // Source link load within its time share.
        let mut row = vec![0.0; n_vars];
        for k in 0..n {
            row[dev * n + k] = 1.0;
        }
        for (a, set) in acts.iter().enumerate() {
            if let Some(rate) = set.rate_of(LinkId::Source(NodeId(dev))) {
                row[n_x + a] = -rate;
            }
        }
        rows.push(row);
        rhs.push(0.0);

        // Processing budget (d = x).
        let mut row = vec![0.0; n_vars];
        for k in 0..n {
            row[dev * n + k] = 1.0;
        }
        rows.push(row);
        rhs.push(model.processing_cap[dev]);

        // Credit rate bounds the device's total energy throughput (e = x·α).
        let mut row = vec![0.0; n_vars];
        for k in 0..n {
            row[dev * n + k] = model.alpha[(dev, k)];
        }
        rows.push(row);
        rhs.push(model.credit_rate[dev]);

        for k in 0..n {
            // Per-pair energy cap.
            let mut row = vec![0.0; n_vars];
            row[dev * n + k] = model.alpha[(dev, k)];
            rows.push(row);
            rhs.push(model.energy_pair_cap[(dev, k)]);

            // Relay load within the pair's D2D time share (h = x·α).
            if k != dev {
                let mut row = vec![0.0; n_vars];
                row[dev * n + k] = model.alpha[(dev, k)];
                let link = LinkId::D2d {
                    from: NodeId(dev),
                    to: NodeId(k),
                };
                for (a, set) in acts.iter().enumerate() {
                    if let Some(rate) = set.rate_of(link) {
                        row[n_x + a] = -rate;
                    }
                }
                rows.push(row);
                rhs.push(0.0);
            }
        }
    }

    // Time shares form a distribution (idling absorbs the remainder).
    let mut row = vec![0.0; n_vars];
    for a in 0..acts.len() {
        row[n_x + a] = 1.0;
    }
    rows.push(row);
    rhs.push(1.0);

    Ok(lp::feasible(&rows, &rhs))
}

/// Brute-force utility optimum: grid search over the receivers' rates at
/// the given resolution, keeping points inside the zero-slack stability
/// region and maximizing `Σ g(y)`. Returns the best grid point and its
/// utility. The search exploits that the region is downward closed: once a
/// grid value turns infeasible, larger values on that axis are skipped.
pub fn solve_num(
    model: &AverageModel,
    utility: &UtilitySpec,
    resolution: f64,
) -> Result<(Vec<f64>, f64), OracleError> {
    if model.n > MAX_ORACLE_DEVICES {
        return Err(OracleError::TooManyDevices {
            n: model.n,
            max: MAX_ORACLE_DEVICES,
        });
    }
    if !(resolution.is_finite() && resolution > 0.0) {
        return Err(OracleError::BadInput {
            what: "resolution",
            value: resolution,
        });
    }
    let receiver_flows: Vec<usize> = model.receivers.iter().map(|r| r.0).collect();
    let mut best_y = vec![0.0; model.n];
    if receiver_flows.is_empty() {
        return Ok((best_y, 0.0));
    }

    // Any flow is capped by the total of min(source, processing) across
    // devices; the grid only needs to cover that much.
    let cap: f64 = (0..model.n)
        .map(|dev| model.source_capacity[dev].min(model.processing_cap[dev]))
        .sum();
    let steps = (cap / resolution).floor() as usize;

    let utility_of =
        |y: &[f64]| -> f64 { receiver_flows.iter().map(|&r| utility.value(y[r])).sum() };

    let mut best_val = utility_of(&best_y);
    let mut y = vec![0.0; model.n];
    search_axis(
        model,
        &receiver_flows,
        0,
        steps,
        resolution,
        &utility_of,
        &mut y,
        &mut best_y,
        &mut best_val,
    )?;
    Ok((best_y, best_val))
}

#[allow(clippy::too_many_arguments)]
fn search_axis(
    model: &AverageModel,
    flows: &[usize],
    axis: usize,
    steps: usize,
    resolution: f64,
    utility_of: &dyn Fn(&[f64]) -> f64,
    y: &mut Vec<f64>,
    best_y: &mut Vec<f64>,
    best_val: &mut f64,
) -> Result<(), OracleError> {
    let flow = flows[axis];
    for i in 0..=steps {
        y[flow] = i as f64 * resolution;
        if !in_stability_region(y, model, 0.0)? {
            break; // downward closed: larger values stay infeasible
        }
        if axis + 1 == flows.len() {
            let val = utility_of(y);
            if val > *best_val {
                *best_val = val;
                best_y.clone_from(y);
            }
        } else {
            search_axis(
                model,
                flows,
                axis + 1,
                steps,
                resolution,
                utility_of,
                y,
                best_y,
                best_val,
            )?;
        }
    }
    y[flow] = 0.0;
    Ok(())
}

/// Grid-verification parameters for [`verify_maxweight`].
#[derive(Debug, Clone)]
pub struct VerifyParams<'a> {
    /// Controller constants with `d_max` already work-factor-adjusted.
    pub constants: &'a ControllerConstants,
    pub receivers: &'a [NodeId],
    /// Grid spacing for the alternative decisions.
    pub resolution: f64,
    /// Slack allowed when comparing objectives.
    pub tolerance: f64,
}

/// Checks that `decision` scores at least as high as every grid decision
/// compatible with the activation sets and caps, under the per-slot
/// objective of [`decision_objective`].
///
/// The objective is additively separable across admissions, each device's
/// processing row, each device's energy row and the link schedule, so the
/// grid maximum is the sum of exhaustive per-component maxima. Energy
/// alternatives follow the single-winner form of the energy controller's
/// constraint, capped per pair by `min(e_max, credits)` from the state.
pub fn verify_maxweight(
    state: &SystemState,
    decision: &DecisionVector,
    activations: &[ActivationSet],
    params: &VerifyParams<'_>,
) -> Result<bool, OracleError> {
    let n = state.n();
    if n > MAX_VERIFY_DEVICES {
        return Err(OracleError::TooManyDevices {
            n,
            max: MAX_VERIFY_DEVICES,
        });
    }
    let res = params.resolution;
    if !(res.is_finite() && res > 0.0) {
        return Err(OracleError::BadInput {
            what: "resolution",
            value: res,
        });
    }
    let constants = params.constants;
    let base = decision_objective(state, decision, constants);

    // Flow terms: receivers range over their admission grid; other flows
    // are pinned to zero.
    let mut alt = 0.0;
    for flow in 0..n {
        let is_receiver = params.receivers.iter().any(|r| r.0 == flow);
        if !is_receiver {
            alt += constants.m * constants.utility.value(0.0);
            continue;
        }
        let mut best = f64::NEG_INFINITY;
        let steps = (constants.r_max[flow] / res).floor() as usize;
        for i in 0..=steps {
            let v = i as f64 * res;
            best = best.max(constants.m * constants.utility.value(v) - state.s[flow] * v);
        }
        alt += best;
    }

    // Processing rows: exhaustive over the budget simplex at grid spacing.
    for dev in 0..n {
        let weights: Vec<f64> = (0..n)
            .map(|k| state.u[(dev, k)] - state.q[(dev, k)] * decision.alpha[(dev, k)])
            .collect();
        alt += best_simplex_value(&weights, constants.d_max[dev], res);
    }

    // Energy rows: zero, or one winning pair at any grid value under its cap.
    for dev in 0..n {
        let mut best = 0.0_f64;
        for k in 0..n {
            let cap = constants.e_max[(dev, k)].min(state.credits[(dev, k)]);
            let w = state.q[(dev, k)] - state.z[(dev, k)];
            let steps = (cap / res).floor() as usize;
            for i in 0..=steps {
                best = best.max(i as f64 * res * w);
            }
        }
        alt += best;
    }

    // Schedule: per activation the links are independent, so the best grid
    // assignment is the sum of per-link grid maxima.
    let mut best_sched = 0.0_f64;
    for set in activations {
        let mut score = 0.0;
        for &(link, rate) in set.iter() {
            let steps = (rate / res).floor() as usize;
            let mut link_best = 0.0_f64;
            match link {
                LinkId::Source(dev) => {
                    for k in 0..n {
                        let w = state.s[k] - state.u[(dev.0, k)];
                        for i in 0..=steps {
                            link_best = link_best.max(i as f64 * res * w);
                        }
                    }
                }
                LinkId::D2d { from, to } => {
                    let w = state.z[(from.0, to.0)];
                    for i in 0..=steps {
                        link_best = link_best.max(i as f64 * res * w);
                    }
                }
            }
            score += link_best;
        }
        best_sched = best_sched.max(score);
    }
    alt += best_sched;

    Ok(base + params.tolerance >= alt)
}

/// Best value of `Σ d_k w_k` over grid points of `{d ≥ 0 : Σ d ≤ budget}`.
fn best_simplex_value(weights: &[f64], budget: f64, res: f64) -> f64 {
    fn rec(weights: &[f64], k: usize, remaining_steps: usize, res: f64, acc: f64, best: &mut f64) {
        if k == weights.len() {
            *best = best.max(acc);
            return;
        }
        for i in 0..=remaining_steps {
            rec(
                weights,
                k + 1,
                remaining_steps - i,
                res,
                acc + i as f64 * res * weights[k],
                best,
            );
        }
    }
    let steps = (budget / res).floor() as usize;
    let mut best = 0.0;
    rec(weights, 0, steps, res, 0.0, &mut best);
    best
}

/// Drift constant and slack for the time-average queue bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundParams {
    /// Bound on the per-slot second-moment sum of the decision rates.
    pub b: f64,
    /// Stability-region slack of the arrival averages.
    pub delta: f64,
    /// Utility weight of the run (sets the utility gap bound `b / m`).
    pub m: f64,
}

/// The time-average total-backlog bound `B / (2δ)`.
pub fn queue_bound(params: &BoundParams) -> f64 {
    params.b / (2.0 * params.delta)
}

/// The convergence bound on the utility gap, `B / M`: growing the utility
/// weight shrinks the achievable distance from the offline optimum (at the
/// price of backlog growing with `M`).
pub fn utility_gap_bound(params: &BoundParams) -> f64 {
    params.b / params.m
}

/// Per-slot second-moment sum of a decision's rates: the quantity whose
/// expectation the drift constant `B` must dominate. Its running maximum
/// over a run is an empirical estimate `B̂`.
pub fn drift_term(decision: &DecisionVector) -> f64 {
    let n = decision.y.len();
    let mut total = 0.0;
    for flow in 0..n {
        let into_s: f64 = (0..n).map(|dev| decision.x[(dev, flow)]).sum();
        total += into_s * into_s + decision.y[flow] * decision.y[flow];
    }
    for dev in 0..n {
        for k in 0..n {
            let idx = (dev, k);
            let shaped = decision.d[idx] * decision.alpha[idx];
            total += decision.x[idx] * decision.x[idx]
                + decision.d[idx] * decision.d[idx]
                + shaped * shaped
                + 2.0 * decision.e[idx] * decision.e[idx]
                + decision.h[idx] * decision.h[idx];
        }
    }
    total
}

/// Empirical drift constant of a recorded run: the maximum per-slot
/// [`drift_term`].
pub fn estimate_drift_constant(trace: &[TraceRecord]) -> f64 {
    trace
        .iter()
        .map(|r| drift_term(&r.decision))
        .fold(0.0, f64::max)
}

/// Distance of a run's achieved utility from the offline optimum
/// `y_star_value − Σ g(ȳ)`. Shrinks as the utility weight `M` grows.
pub fn utility_gap(summary: &Summary, y_star_value: f64) -> f64 {
    y_star_value - summary.sum_utility
}
