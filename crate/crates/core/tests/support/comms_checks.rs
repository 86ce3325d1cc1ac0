//! Seeded channel experiments shared by the comms tests and the acceptance suite.

use std::collections::BTreeMap;

use mosaic_core::comms::{max_in_window, LinkConfig, Network, QosProfile, Route, Throttle};

pub const MESSAGES: usize = 10_000;

fn lossy_network(seed: u64, p_loss: f64) -> Network<usize> {
    let mut net = Network::new(seed);
    net.register_channel("team", "poi_cmd", QosProfile::reliable());
    net.register_channel("team", "pose", QosProfile::best_effort());
    net.set_link("r1", LinkConfig::default().with_loss(p_loss))
        .unwrap();
    net
}

fn route(channel: &str) -> Route<'_> {
    Route {
        domain: "team",
        channel,
        sender: "r1",
        link: Some("r1"),
        distance: 25.0,
    }
}

pub struct BestEffortRun {
    pub delivered: usize,
    pub sent: usize,
    pub reordered: usize,
    pub mean_latency: f64,
}

/// Sends `MESSAGES` best-effort messages at 100 Hz.
pub fn best_effort(seed: u64, p_loss: f64) -> BestEffortRun {
    let mut net = lossy_network(seed, p_loss);
    let mut deliveries = Vec::new();
    for i in 0..MESSAGES {
        let env = net
            .send(route("pose"), i, 64, i as f64 * 0.01)
            .unwrap()
            .remove(0);
        if let Some(at) = env.deliver_at {
            deliveries.push((at, i));
        }
    }
    let reordered = deliveries.windows(2).filter(|w| w[1].0 < w[0].0).count();
    let mean_latency = deliveries
        .iter()
        .map(|(at, i)| at - *i as f64 * 0.01)
        .sum::<f64>()
        / deliveries.len() as f64;
    BestEffortRun {
        delivered: deliveries.len(),
        sent: MESSAGES,
        reordered,
        mean_latency,
    }
}

pub struct ReliableRun {
    pub delivered: usize,
    pub sent: usize,
    pub in_order: bool,
    pub duplicates: usize,
    pub mean_latency: f64,
}

/// Sends `MESSAGES` reliable messages at 100 Hz and orders them by delivery
/// time (ties broken by send order, as the event queue does).
pub fn reliable(seed: u64, p_loss: f64) -> ReliableRun {
    let mut net = lossy_network(seed, p_loss);
    let mut deliveries = Vec::new();
    for i in 0..MESSAGES {
        let env = net
            .send(route("poi_cmd"), i, 64, i as f64 * 0.01)
            .unwrap()
            .remove(0);
        if let Some(at) = env.deliver_at {
            deliveries.push((at, i));
        }
    }
    let mean_latency = deliveries
        .iter()
        .map(|(at, i)| at - *i as f64 * 0.01)
        .sum::<f64>()
        / deliveries.len() as f64;
    deliveries.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let order: Vec<usize> = deliveries.iter().map(|(_, i)| *i).collect();
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for i in &order {
        *counts.entry(*i).or_default() += 1;
    }
    ReliableRun {
        delivered: order.len(),
        sent: MESSAGES,
        in_order: order.windows(2).all(|w| w[0] < w[1]),
        duplicates: counts.values().filter(|c| **c > 1).count(),
        mean_latency,
    }
}

/// Busiest one-second window of a 500 Hz stream throttled to 100 Hz, plus the
/// number of batches missing one of two keys that both update at 300 Hz.
pub fn throttle_checks() -> (usize, usize, usize) {
    let mut th = Throttle::new(100.0);
    let mut times = Vec::new();
    for i in 0..5000u64 {
        let t = i as f64 / 500.0;
        th.push("tf", i);
        if let Some(b) = th.poll(t) {
            times.push(b.t);
        }
    }
    let peak = max_in_window(&times, 1.0);

    let mut th = Throttle::new(100.0);
    let mut batches = 0;
    let mut starved = 0;
    for i in 0..3000u64 {
        let t = i as f64 / 300.0;
        th.push("scout-1", i);
        th.push("scout-2", i);
        if let Some(b) = th.poll(t) {
            batches += 1;
            if b.items.len() != 2 {
                starved += 1;
            }
        }
    }
    (peak, batches, starved)
}
