use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::qos::{Durability, QosProfile, Reliability};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CommsError {
    #[error("unknown channel {domain}/{channel}")]
    UnknownChannel { domain: String, channel: String },
    #[error("unknown link {0}")]
    UnknownLink(String),
    #[error("invalid link configuration: {0}")]
    InvalidLink(&'static str),
}

/// Overrides the link's loss probability during `[start, end)`. A window with
/// `p_loss >= 1` is a blackout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWindow {
    pub start: f64,
    pub end: f64,
    pub p_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinkConfig {
    /// s
    pub base_latency: f64,
    /// s per metre of separation
    pub latency_per_meter: f64,
    pub p_loss: f64,
    pub windows: Vec<LossWindow>,
    /// Delay before a lost reliable attempt is resent, s.
    pub retransmit_timeout: f64,
    /// Extra latency per retransmission outstanding on the link, s.
    pub congestion_penalty: f64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            base_latency: 0.020,
            latency_per_meter: 1e-5,
            p_loss: 0.0,
            windows: Vec::new(),
            retransmit_timeout: 0.050,
            congestion_penalty: 0.005,
        }
    }
}

impl LinkConfig {
    pub fn with_loss(mut self, p_loss: f64) -> Self {
        self.p_loss = p_loss;
        self
    }

    pub fn with_blackout(mut self, start: f64, end: f64) -> Self {
        self.windows.push(LossWindow {
            start,
            end,
            p_loss: 1.0,
        });
        self
    }

    pub fn validate(&self) -> Result<(), CommsError> {
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !finite_nonneg(self.base_latency) || !finite_nonneg(self.latency_per_meter) {
            return Err(CommsError::InvalidLink(
                "latency must be finite and non-negative",
            ));
        }
        if !(0.0..=1.0).contains(&self.p_loss) {
            return Err(CommsError::InvalidLink("p_loss must lie in [0, 1]"));
        }
        if !(self.retransmit_timeout.is_finite() && self.retransmit_timeout > 0.0) {
            return Err(CommsError::InvalidLink(
                "retransmit timeout must be positive",
            ));
        }
        if !finite_nonneg(self.congestion_penalty) {
            return Err(CommsError::InvalidLink(
                "congestion penalty must be non-negative",
            ));
        }
        for w in &self.windows {
            if !(w.start.is_finite() && w.end.is_finite() && w.start <= w.end)
                || !(0.0..=1.0).contains(&w.p_loss)
            {
                return Err(CommsError::InvalidLink("malformed loss window"));
            }
        }
        Ok(())
    }

    /// Loss probability at time `t`; the last matching window wins.
    pub fn loss_at(&self, t: f64) -> f64 {
        self.windows
            .iter()
            .rev()
            .find(|w| w.start <= t && t < w.end)
            .map_or(self.p_loss, |w| w.p_loss)
    }

    /// Blackout intervals, for bulk transfers that cannot tolerate partial loss.
    pub fn outages(&self) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = self
            .windows
            .iter()
            .filter(|w| w.p_loss >= 1.0)
            .map(|w| (w.start, w.end))
            .collect();
        if self.p_loss >= 1.0 {
            out.push((f64::NEG_INFINITY, f64::INFINITY));
        }
        out.sort_by(|a, b| a.0.total_cmp(&b.0));
        out
    }

    pub fn is_up(&self, t: f64) -> bool {
        self.loss_at(t) < 1.0
    }

    pub fn latency(&self, distance: f64) -> f64 {
        self.base_latency + self.latency_per_meter * distance.max(0.0)
    }

    fn blackout_end(&self, t: f64) -> f64 {
        self.windows
            .iter()
            .filter(|w| w.p_loss >= 1.0 && w.start <= t && t < w.end)
            .map(|w| w.end)
            .fold(t, f64::max)
    }
}

/// Relays a fixed set of channels from one domain into another, optionally
/// rewriting their QoS on the way.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainBridge {
    pub source: String,
    pub target: String,
    /// Channel name to QoS used in the target domain (`None` keeps the source QoS).
    pub relay: BTreeMap<String, Option<QosProfile>>,
    /// Link the relayed copy travels over; `None` when both domains share a host.
    #[serde(default)]
    pub link: Option<String>,
}

impl DomainBridge {
    pub fn new(source: impl Into<String>, target: impl Into<String>, link: Option<String>) -> Self {
        Self {
            source: source.into(),
            target: target.into(),
            relay: BTreeMap::new(),
            link,
        }
    }

    pub fn relay(mut self, channel: impl Into<String>, rewrite: Option<QosProfile>) -> Self {
        self.relay.insert(channel.into(), rewrite);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Envelope<P> {
    pub domain: String,
    pub channel: String,
    pub sender: String,
    pub payload: P,
    pub bytes: usize,
    pub sent_at: f64,
    /// `None` when the envelope was dropped.
    pub deliver_at: Option<f64>,
    /// Underlying transmissions, including the successful one.
    pub attempts: u32,
}

impl<P> Envelope<P> {
    pub fn dropped(&self) -> bool {
        self.deliver_at.is_none()
    }

    pub fn latency(&self) -> Option<f64> {
        self.deliver_at.map(|d| d - self.sent_at)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ChannelStats {
    pub channel: String,
    pub reliable: bool,
    pub sent: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub retransmissions: u64,
    pub bytes: u64,
    pub total_latency: f64,
    pub max_latency: f64,
}

impl ChannelStats {
    pub fn mean_latency(&self) -> Option<f64> {
        (self.delivered > 0).then(|| self.total_latency / self.delivered as f64)
    }

    pub fn delivered_fraction(&self) -> Option<f64> {
        (self.sent > 0).then(|| self.delivered as f64 / self.sent as f64)
    }
}

struct ChannelState<P> {
    qos: QosProfile,
    latest: Option<P>,
    stats: ChannelStats,
}

#[derive(Default)]
struct LinkState {
    config: LinkConfig,
    /// Delivery times of reliable messages that needed retransmission.
    retransmitting_until: Vec<f64>,
}

impl LinkState {
    fn outstanding(&mut self, now: f64) -> usize {
        self.retransmitting_until.retain(|t| *t > now);
        self.retransmitting_until.len()
    }
}

/// Where a message goes: channel within a domain, the sending endpoint, and
/// the radio link it crosses (`None` for host-local traffic).
#[derive(Debug, Clone, Copy)]
pub struct Route<'a> {
    pub domain: &'a str,
    pub channel: &'a str,
    pub sender: &'a str,
    pub link: Option<&'a str>,
    /// Separation between the endpoints, m.
    pub distance: f64,
}

type ChannelKey = (String, String);

/// All channels, links and bridges of one mission.
pub struct Network<P> {
    channels: BTreeMap<ChannelKey, ChannelState<P>>,
    links: BTreeMap<String, LinkState>,
    bridges: Vec<DomainBridge>,
    last_delivery: BTreeMap<(String, String, String), f64>,
    rng: ChaCha8Rng,
}

impl<P: Clone> Network<P> {
    pub fn new(seed: u64) -> Self {
        Self {
            channels: BTreeMap::new(),
            links: BTreeMap::new(),
            bridges: Vec::new(),
            last_delivery: BTreeMap::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn register_channel(&mut self, domain: &str, channel: &str, qos: QosProfile) {
        self.channels.insert(
            (domain.to_owned(), channel.to_owned()),
            ChannelState {
                qos,
                latest: None,
                stats: ChannelStats {
                    channel: format!("{domain}/{channel}"),
                    reliable: qos.is_reliable(),
                    ..ChannelStats::default()
                },
            },
        );
    }

    pub fn qos(&self, domain: &str, channel: &str) -> Option<QosProfile> {
        self.channels
            .get(&(domain.to_owned(), channel.to_owned()))
            .map(|c| c.qos)
    }

    pub fn set_link(&mut self, name: &str, config: LinkConfig) -> Result<(), CommsError> {
        config.validate()?;
        self.links.entry(name.to_owned()).or_default().config = config;
        Ok(())
    }

    pub fn link(&self, name: &str) -> Option<&LinkConfig> {
        self.links.get(name).map(|l| &l.config)
    }

    /// Adds a bridge. Relayed channels must exist in the source domain; they
    /// are registered in the target domain with the rewritten QoS.
    pub fn add_bridge(&mut self, bridge: DomainBridge) -> Result<(), CommsError> {
        for (channel, rewrite) in &bridge.relay {
            let key = (bridge.source.clone(), channel.clone());
            let source_qos = self.channels.get(&key).map(|c| c.qos).ok_or_else(|| {
                CommsError::UnknownChannel {
                    domain: bridge.source.clone(),
                    channel: channel.clone(),
                }
            })?;
            if !self
                .channels
                .contains_key(&(bridge.target.clone(), channel.clone()))
            {
                self.register_channel(&bridge.target, channel, rewrite.unwrap_or(source_qos));
            }
        }
        if let Some(link) = &bridge.link {
            if !self.links.contains_key(link) {
                return Err(CommsError::UnknownLink(link.clone()));
            }
        }
        self.bridges.push(bridge);
        Ok(())
    }

    /// Sends one message. Returns one envelope for the addressed domain
    /// followed by one per bridge that relays the channel onward.
    pub fn send(
        &mut self,
        route: Route<'_>,
        payload: P,
        bytes: usize,
        now: f64,
    ) -> Result<Vec<Envelope<P>>, CommsError> {
        let mut out = Vec::new();
        let first = self.transmit(route, payload, bytes, now)?;
        let relay_from = first.deliver_at;
        let payload = first.payload.clone();
        out.push(first);

        if let Some(at) = relay_from {
            let bridges: Vec<DomainBridge> = self
                .bridges
                .iter()
                .filter(|b| b.source == route.domain && b.relay.contains_key(route.channel))
                .cloned()
                .collect();
            for b in bridges {
                let hop = Route {
                    domain: &b.target,
                    channel: route.channel,
                    sender: route.sender,
                    link: b.link.as_deref(),
                    distance: route.distance,
                };
                out.push(self.transmit(hop, payload.clone(), bytes, at)?);
            }
        }
        Ok(out)
    }

    fn transmit(
        &mut self,
        route: Route<'_>,
        payload: P,
        bytes: usize,
        now: f64,
    ) -> Result<Envelope<P>, CommsError> {
        let key = (route.domain.to_owned(), route.channel.to_owned());
        let qos = self
            .channels
            .get(&key)
            .ok_or_else(|| CommsError::UnknownChannel {
                domain: route.domain.to_owned(),
                channel: route.channel.to_owned(),
            })?
            .qos;

        let (deliver_at, attempts) = match route.link {
            None => (Some(now), 1),
            Some(name) => {
                let link = self
                    .links
                    .get_mut(name)
                    .ok_or_else(|| CommsError::UnknownLink(name.to_owned()))?;
                let congestion = link.outstanding(now) as f64 * link.config.congestion_penalty;
                let latency = link.config.latency(route.distance) + congestion;
                match qos.reliability {
                    Reliability::BestEffort => {
                        let lost = self.rng.random::<f64>() < link.config.loss_at(now);
                        ((!lost).then_some(now + latency), 1)
                    }
                    Reliability::Reliable => {
                        let mut t = now;
                        let mut attempts = 1;
                        loop {
                            let p = link.config.loss_at(t);
                            if p >= 1.0 {
                                t = link
                                    .config
                                    .blackout_end(t)
                                    .max(t + link.config.retransmit_timeout);
                            } else if self.rng.random::<f64>() < p {
                                t += link.config.retransmit_timeout;
                            } else {
                                break;
                            }
                            attempts += 1;
                        }
                        let at = t + latency;
                        if attempts > 1 {
                            link.retransmitting_until.push(at);
                        }
                        (Some(at), attempts)
                    }
                }
            }
        };

        let deliver_at = deliver_at.map(|at| {
            let order_key = (key.0.clone(), key.1.clone(), route.sender.to_owned());
            let last = self
                .last_delivery
                .entry(order_key)
                .or_insert(f64::NEG_INFINITY);
            *last = last.max(at);
            *last
        });

        let channel = self.channels.get_mut(&key).expect("checked above");
        let stats = &mut channel.stats;
        stats.sent += 1;
        stats.bytes += bytes as u64;
        stats.retransmissions += u64::from(attempts - 1);
        match deliver_at {
            Some(at) => {
                stats.delivered += 1;
                stats.total_latency += at - now;
                stats.max_latency = stats.max_latency.max(at - now);
            }
            None => stats.dropped += 1,
        }
        if qos.durability == Durability::TransientLocal {
            channel.latest = Some(payload.clone());
        }

        Ok(Envelope {
            domain: route.domain.to_owned(),
            channel: route.channel.to_owned(),
            sender: route.sender.to_owned(),
            payload,
            bytes,
            sent_at: now,
            deliver_at,
            attempts,
        })
    }

    /// Latest payload kept for late joiners on a transient-local channel.
    pub fn late_join(&self, domain: &str, channel: &str) -> Result<Option<&P>, CommsError> {
        let c = self
            .channels
            .get(&(domain.to_owned(), channel.to_owned()))
            .ok_or_else(|| CommsError::UnknownChannel {
                domain: domain.to_owned(),
                channel: channel.to_owned(),
            })?;
        Ok(match c.qos.durability {
            Durability::TransientLocal => c.latest.as_ref(),
            Durability::Volatile => None,
        })
    }

    pub fn stats(&self) -> Vec<ChannelStats> {
        self.channels.values().map(|c| c.stats.clone()).collect()
    }
}
