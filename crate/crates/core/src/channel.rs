//! Per-slot channel realization and feasible link activations.
//!
//! Links are two-state: independently ON with a per-link probability, at a
//! fixed per-link rate when ON. The interference model is the protocol
//! model with one collision domain per shared medium: source links occupy
//! orthogonal cellular spectrum in [`NetworkMode::CellularPlusD2d`] and may
//! all run concurrently, while the device-to-device links always share one
//! Wi-Fi Direct channel. In [`NetworkMode::WifiPlusD2d`] everything shares
//! one spectrum and at most one link is active per slot.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::NodeId;

/// Which spectrum the source↔device links use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetworkMode {
    /// Source links are cellular (orthogonal to the D2D channel).
    CellularPlusD2d,
    /// Source links are Wi-Fi on the same spectrum as the D2D channel.
    WifiPlusD2d,
}

/// A directed link: source→device, or device→device.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LinkId {
    Source(NodeId),
    D2d { from: NodeId, to: NodeId },
}

impl fmt::Display for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LinkId::Source(n) => write!(f, "src->{n}"),
            LinkId::D2d { from, to } => write!(f, "{from}->{to}"),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error("on-probability for {link} is {value}, must be in [0,1]")]
    BadProbability { link: String, value: f64 },
    #[error("rate for {link} is {value}, must be positive where the link can be on")]
    BadRate { link: String, value: f64 },
    #[error(
        "{n} devices exceed the activation enumeration limit {limit}; \
         scheduling beyond this size needs a greedy activation search"
    )]
    EnumerationLimit { n: usize, limit: usize },
    #[error("channel config holds {have} devices, expected {want}")]
    DimensionMismatch { have: usize, want: usize },
}

/// Per-link ON probabilities and ON rates. A device without an Internet
/// connection is modeled with a zero source-link probability.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelConfig {
    pub source_on_prob: Vec<f64>,
    pub source_rate: Vec<f64>,
    /// Row-major N×N grids; the diagonal is unused.
    pub d2d_on_prob: Vec<f64>,
    pub d2d_rate: Vec<f64>,
}

impl ChannelConfig {
    /// Uniform config: every source link `(p_src, c_src)`, every D2D link
    /// `(p_d2d, c_d2d)`.
    pub fn uniform(n: usize, p_src: f64, c_src: f64, p_d2d: f64, c_d2d: f64) -> Self {
        Self {
            source_on_prob: vec![p_src; n],
            source_rate: vec![c_src; n],
            d2d_on_prob: vec![p_d2d; n * n],
            d2d_rate: vec![c_d2d; n * n],
        }
    }

    pub fn n(&self) -> usize {
        self.source_on_prob.len()
    }

    pub fn validate(&self, n: usize) -> Result<(), ChannelError> {
        if self.source_on_prob.len() != n
            || self.source_rate.len() != n
            || self.d2d_on_prob.len() != n * n
            || self.d2d_rate.len() != n * n
        {
            return Err(ChannelError::DimensionMismatch {
                have: self.source_on_prob.len(),
                want: n,
            });
        }
        for dev in 0..n {
            let link = LinkId::Source(NodeId(dev));
            check_link(link, self.source_on_prob[dev], self.source_rate[dev])?;
            for k in 0..n {
                if k == dev {
                    continue;
                }
                let link = LinkId::D2d {
                    from: NodeId(dev),
                    to: NodeId(k),
                };
                check_link(
                    link,
                    self.d2d_on_prob[dev * n + k],
                    self.d2d_rate[dev * n + k],
                )?;
            }
        }
        Ok(())
    }
}

fn check_link(link: LinkId, p: f64, rate: f64) -> Result<(), ChannelError> {
    if !(0.0..=1.0).contains(&p) || p.is_nan() {
        return Err(ChannelError::BadProbability {
            link: link.to_string(),
            value: p,
        });
    }
    if p > 0.0 && !(rate > 0.0 && rate.is_finite()) {
        return Err(ChannelError::BadRate {
            link: link.to_string(),
            value: rate,
        });
    }
    Ok(())
}

/// One slot's channel realization: which links are ON and at what rate.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelState {
    n: usize,
    source_on: Vec<bool>,
    source_rate: Vec<f64>,
    d2d_on: Vec<bool>,
    d2d_rate: Vec<f64>,
}

impl ChannelState {
    /// State with the given links always ON at the given rates (links with a
    /// non-positive rate stay OFF). Used by tests and the average-model oracle.
    pub fn always_on(source_rate: Vec<f64>, d2d_rate: Vec<f64>) -> Self {
        let n = source_rate.len();
        assert_eq!(d2d_rate.len(), n * n);
        let source_on = source_rate.iter().map(|&c| c > 0.0).collect();
        let d2d_on = (0..n * n)
            .map(|i| i / n != i % n && d2d_rate[i] > 0.0)
            .collect();
        Self {
            n,
            source_on,
            source_rate,
            d2d_on,
            d2d_rate,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn source_on(&self, dev: usize) -> bool {
        self.source_on[dev]
    }

    pub fn source_rate(&self, dev: usize) -> f64 {
        self.source_rate[dev]
    }

    pub fn d2d_on(&self, from: usize, to: usize) -> bool {
        self.d2d_on[from * self.n + to]
    }

    pub fn d2d_rate(&self, from: usize, to: usize) -> f64 {
        self.d2d_rate[from * self.n + to]
    }

    /// ON links in enumeration order: source links ascending, then D2D links
    /// row-major.
    pub fn on_links(&self) -> Vec<(LinkId, f64)> {
        let mut links = Vec::new();
        for dev in 0..self.n {
            if self.source_on[dev] {
                links.push((LinkId::Source(NodeId(dev)), self.source_rate[dev]));
            }
        }
        for from in 0..self.n {
            for to in 0..self.n {
                if from != to && self.d2d_on(from, to) {
                    links.push((
                        LinkId::D2d {
                            from: NodeId(from),
                            to: NodeId(to),
                        },
                        self.d2d_rate(from, to),
                    ));
                }
            }
        }
        links
    }
}

/// A set of links that may transmit simultaneously, with their rates.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ActivationSet {
    links: Vec<(LinkId, f64)>,
}

impl ActivationSet {
    pub fn empty() -> Self {
        Self { links: Vec::new() }
    }

    pub fn from_links(links: Vec<(LinkId, f64)>) -> Self {
        Self { links }
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn contains(&self, link: LinkId) -> bool {
        self.links.iter().any(|(l, _)| *l == link)
    }

    pub fn rate_of(&self, link: LinkId) -> Option<f64> {
        self.links.iter().find(|(l, _)| *l == link).map(|(_, r)| *r)
    }

    pub fn iter(&self) -> impl Iterator<Item = &(LinkId, f64)> {
        self.links.iter()
    }
}

impl fmt::Display for ActivationSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.links.is_empty() {
            return write!(f, "idle");
        }
        let mut first = true;
        for (link, _) in &self.links {
            if !first {
                write!(f, "+")?;
            }
            write!(f, "{link}")?;
            first = false;
        }
        Ok(())
    }
}

/// Draws one slot's channel realization. Each link is ON independently with
/// its configured probability; the draw is a pure function of
/// `(seed, slot, link index)`, so runs are reproducible and slots can be
/// resampled out of order.
pub fn sample_channels(
    seed: u64,
    slot: u64,
    config: &ChannelConfig,
) -> Result<ChannelState, ChannelError> {
    let n = config.n();
    config.validate(n)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(slot.wrapping_add(1));

    let source_on: Vec<bool> = (0..n)
        .map(|dev| rng.random::<f64>() < config.source_on_prob[dev])
        .collect();
    let mut d2d_on = vec![false; n * n];
    for from in 0..n {
        for to in 0..n {
            let draw = rng.random::<f64>();
            if from != to {
                d2d_on[from * n + to] = draw < config.d2d_on_prob[from * n + to];
            }
        }
    }
    Ok(ChannelState {
        n,
        source_on,
        source_rate: config.source_rate.clone(),
        d2d_on,
        d2d_rate: config.d2d_rate.clone(),
    })
}

/// Enumerates the feasible activation sets for one slot.
///
/// Cellular + D2D: the ON source links are orthogonal and all run
/// concurrently; the shared D2D channel adds at most one ON D2D link. The
/// enumeration is `{all ON source links} × {no D2D, each ON D2D link}`.
/// Wi-Fi + D2D: one collision domain; the empty set or any single ON link.
///
/// The first entry is always the most idle choice (no links, or source links
/// only), so the list is never empty.
pub fn feasible_activations(
    mode: NetworkMode,
    channels: &ChannelState,
    enumeration_limit: usize,
) -> Result<Vec<ActivationSet>, ChannelError> {
    let n = channels.n();
    if n > enumeration_limit {
        return Err(ChannelError::EnumerationLimit {
            n,
            limit: enumeration_limit,
        });
    }

    let mut sets = Vec::new();
    match mode {
        NetworkMode::CellularPlusD2d => {
            let mut base = Vec::new();
            for dev in 0..n {
                if channels.source_on(dev) {
                    base.push((LinkId::Source(NodeId(dev)), channels.source_rate(dev)));
                }
            }
            sets.push(ActivationSet::from_links(base.clone()));
            for from in 0..n {
                for to in 0..n {
                    if from != to && channels.d2d_on(from, to) {
                        let mut links = base.clone();
                        links.push((
                            LinkId::D2d {
                                from: NodeId(from),
                                to: NodeId(to),
                            },
                            channels.d2d_rate(from, to),
                        ));
                        sets.push(ActivationSet::from_links(links));
                    }
                }
            }
        }
        NetworkMode::WifiPlusD2d => {
            sets.push(ActivationSet::empty());
            for (link, rate) in channels.on_links() {
                sets.push(ActivationSet::from_links(vec![(link, rate)]));
            }
        }
    }
    Ok(sets)
}
