//! Core domain types and the per-slot queue recursions.
//!
//! Packets are fluid (real-valued). Each device `n` keeps three queues per
//! target flow `k`: `U[n,k]` (received, unprocessed), `Q[n,k]` (processed,
//! waiting for energy credits) and `Z[n,k]` (cleared for delivery). The
//! source keeps one queue `S[k]` per flow. All recursions follow the
//! `max(backlog − service, 0) + arrival` form, with the actual transfer on
//! every edge equal to `min(backlog, offered service)`.

use std::fmt;
use std::ops::{Index, IndexMut};

use thiserror::Error;

/// Identifier of a device. The source is a distinct entity, not a `NodeId`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("{name} must be finite and non-negative, got {value}")]
    ContractViolation { name: &'static str, value: f64 },
}

/// Dense N×N grid of non-negative reals indexed `(device n, target k)`.
///
/// Used for the queue families `U`, `Q`, `Z`, for per-pair rate decisions
/// and for the rate-shaper grid.
#[derive(Debug, Clone, PartialEq)]
pub struct QueueMatrix {
    n: usize,
    values: Vec<f64>,
}

impl QueueMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            values: vec![0.0; n * n],
        }
    }

    /// Grid with every entry set to `value` (e.g. a uniform rate-shaper).
    pub fn filled(n: usize, value: f64) -> Self {
        Self {
            n,
            values: vec![value; n * n],
        }
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let n = rows.len();
        let mut values = Vec::with_capacity(n * n);
        for row in rows {
            assert_eq!(row.len(), n, "rows must form a square grid");
            values.extend_from_slice(row);
        }
        Self { n, values }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.values[n * self.n..(n + 1) * self.n]
    }

    pub fn row_mut(&mut self, n: usize) -> &mut [f64] {
        &mut self.values[n * self.n..(n + 1) * self.n]
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        let n = self.n;
        self.values
            .iter()
            .enumerate()
            .map(move |(i, &v)| ((i / n, i % n), v))
    }
}

impl Index<(usize, usize)> for QueueMatrix {
    type Output = f64;
    fn index(&self, (n, k): (usize, usize)) -> &f64 {
        &self.values[n * self.n + k]
    }
}

impl IndexMut<(usize, usize)> for QueueMatrix {
    fn index_mut(&mut self, (n, k): (usize, usize)) -> &mut f64 {
        &mut self.values[n * self.n + k]
    }
}

/// Per-flow queues at the source; `S[k]` stores packets admitted for flow `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceQueues {
    values: Vec<f64>,
}

impl SourceQueues {
    pub fn zeros(n: usize) -> Self {
        Self {
            values: vec![0.0; n],
        }
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

impl Index<usize> for SourceQueues {
    type Output = f64;
    fn index(&self, k: usize) -> &f64 {
        &self.values[k]
    }
}

impl IndexMut<usize> for SourceQueues {
    fn index_mut(&mut self, k: usize) -> &mut f64 {
        &mut self.values[k]
    }
}

/// Complete state of one run at the start of a slot.
///
/// `reported_u` is the source's possibly stale copy of `U`; it is refreshed
/// every report period by the engine. `credits` holds the current slot's
/// energy-credit allowance per pair. `seed` drives the per-slot channel
/// draws, so a state is reproducible from `(seed, slot)` alone.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub slot: u64,
    pub s: SourceQueues,
    pub u: QueueMatrix,
    pub q: QueueMatrix,
    pub z: QueueMatrix,
    pub batteries: Vec<f64>,
    pub credits: QueueMatrix,
    pub reported_u: QueueMatrix,
    pub seed: u64,
}

impl SystemState {
    pub fn zeros(n: usize, seed: u64) -> Self {
        Self {
            slot: 0,
            s: SourceQueues::zeros(n),
            u: QueueMatrix::zeros(n),
            q: QueueMatrix::zeros(n),
            z: QueueMatrix::zeros(n),
            batteries: vec![1.0; n],
            credits: QueueMatrix::zeros(n),
            reported_u: QueueMatrix::zeros(n),
            seed,
        }
    }

    pub fn n(&self) -> usize {
        self.s.len()
    }
}

/// One slot's control decision: admissions `y`, per-pair processing `d`,
/// energy transfers `e`, source-link rates `x`, relay rates `h`, and the
/// rate-shaper grid `alpha` in effect. `h[n,n]` is zero by convention —
/// self-delivery leaves `Z[n,n]` straight to the application.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionVector {
    pub y: Vec<f64>,
    pub d: QueueMatrix,
    pub e: QueueMatrix,
    pub x: QueueMatrix,
    pub h: QueueMatrix,
    pub alpha: QueueMatrix,
}

impl DecisionVector {
    /// All-zero decision with a unit rate shaper.
    pub fn zero(n: usize) -> Self {
        Self {
            y: vec![0.0; n],
            d: QueueMatrix::zeros(n),
            e: QueueMatrix::zeros(n),
            x: QueueMatrix::zeros(n),
            h: QueueMatrix::zeros(n),
            alpha: QueueMatrix::filled(n, 1.0),
        }
    }
}

/// Actual per-pair transfers realized by [`apply_decision`] in one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotTransfers {
    /// Packets handed to each device's application this slot.
    pub delivered: Vec<f64>,
    /// Actual source→device transfers (`min`-capped against `S`).
    pub served_x: QueueMatrix,
    /// Actual `U`→computation transfers.
    pub served_d: QueueMatrix,
    /// Actual `Q`→`Z` transfers through the energy filter.
    pub served_e: QueueMatrix,
    /// Actual device-to-device relays out of `Z` (off-diagonal only).
    pub served_h: QueueMatrix,
}

/// One queue-update step: `served = min(backlog, service)`,
/// `new_backlog = max(backlog − service, 0) + arrival`.
pub fn update_queue(backlog: f64, service: f64, arrival: f64) -> Result<(f64, f64), ModelError> {
    check_non_negative("backlog", backlog)?;
    check_non_negative("service", service)?;
    check_non_negative("arrival", arrival)?;
    Ok(update_queue_raw(backlog, service, arrival))
}

fn check_non_negative(name: &'static str, value: f64) -> Result<(), ModelError> {
    if !value.is_finite() || value < 0.0 {
        return Err(ModelError::ContractViolation { name, value });
    }
    Ok(())
}

#[inline]
pub(crate) fn update_queue_raw(backlog: f64, service: f64, arrival: f64) -> (f64, f64) {
    let served = backlog.min(service);
    ((backlog - service).max(0.0) + arrival, served)
}

/// Applies one slot's decision to the queue network.
///
/// Every service term reads the start-of-slot snapshot; arrivals land
/// afterwards. The stages are wired source → `U` → `Q` → `Z`:
///
/// * `S[k]` is served by `Σ_n x[n,k]` and receives `y[k]`. When the offered
///   rates exceed the backlog, receivers drain `S[k]` in ascending device
///   order.
/// * `U[n,k]` is served by `d[n,k]` and receives the actual source transfer.
/// * `Q[n,k]` is served by `e[n,k]` and receives `served_d·alpha` (the
///   rate-shaped output of the computation block).
/// * `Z[n,k]` with `k ≠ n` is served by `h[n,k]`; `Z[n,n]` drains without
///   bound to device `n`'s application.
///
/// `delivered[k]` counts the start-of-slot `Z[k,k]` content plus every relay
/// that reached `k` this slot (relayed packets are already processed and go
/// straight to the application).
pub fn apply_decision(state: &SystemState, decision: &DecisionVector) -> (SystemState, Vec<f64>) {
    let (next, transfers) = apply_decision_transfers(state, decision);
    (next, transfers.delivered)
}

/// [`apply_decision`] plus the per-pair actual transfers (used by the engine
/// for battery accounting and by conservation tests).
pub fn apply_decision_transfers(
    state: &SystemState,
    decision: &DecisionVector,
) -> (SystemState, SlotTransfers) {
    let n = state.n();
    debug_assert_eq!(decision.y.len(), n);

    let mut next = state.clone();
    let mut served_x = QueueMatrix::zeros(n);
    let mut served_d = QueueMatrix::zeros(n);
    let mut served_e = QueueMatrix::zeros(n);
    let mut served_h = QueueMatrix::zeros(n);
    let mut delivered = vec![0.0; n];

    // Source stage: each flow k is drained by its receivers in device order.
    for k in 0..n {
        let mut remaining = state.s[k];
        for dev in 0..n {
            let moved = remaining.min(decision.x[(dev, k)]);
            served_x[(dev, k)] = moved;
            remaining -= moved;
        }
        next.s[k] = remaining + decision.y[k];
    }

    for dev in 0..n {
        for k in 0..n {
            // U stage: received packets move into the computation block.
            let (u_next, d_act) =
                update_queue_raw(state.u[(dev, k)], decision.d[(dev, k)], served_x[(dev, k)]);
            next.u[(dev, k)] = u_next;
            served_d[(dev, k)] = d_act;

            // Q stage: processed (rate-shaped) packets wait for energy credits.
            let alpha = decision.alpha[(dev, k)];
            debug_assert!(alpha > 0.0, "rate shaper must be positive");
            let (q_next, e_act) =
                update_queue_raw(state.q[(dev, k)], decision.e[(dev, k)], d_act * alpha);
            next.q[(dev, k)] = q_next;
            served_e[(dev, k)] = e_act;

            // Z stage: self-delivery is unbounded, relays move at h.
            if dev == k {
                delivered[k] += state.z[(dev, k)];
                next.z[(dev, k)] = e_act;
            } else {
                debug_assert!(decision.h[(dev, dev)] == 0.0);
                let (z_next, h_act) =
                    update_queue_raw(state.z[(dev, k)], decision.h[(dev, k)], e_act);
                next.z[(dev, k)] = z_next;
                served_h[(dev, k)] = h_act;
                delivered[k] += h_act;
            }
        }
    }

    let transfers = SlotTransfers {
        delivered,
        served_x,
        served_d,
        served_e,
        served_h,
    };
    (next, transfers)
}

/// Sum of all queue contents: `Σ S + Σ (U + Q + Z)`.
pub fn total_backlog(state: &SystemState) -> f64 {
    state.s.total() + state.u.total() + state.q.total() + state.z.total()
}
