use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataProduct {
    pub name: String,
    pub bytes: u64,
}

/// A scheduled bulk transfer. `attempts` lists the start time of every try,
/// the last of which completes at `completes_at`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncTicket {
    pub id: u64,
    pub robot: String,
    pub product: DataProduct,
    pub attempts: Vec<f64>,
    pub completes_at: f64,
}

/// Out-of-band file sync with its own bandwidth budget per robot. A transfer
/// interrupted by a link outage restarts from scratch after an exponential
/// backoff. Transfers from one robot run one after another.
#[derive(Debug, Clone)]
pub struct DataSync {
    /// bytes/s
    pub bandwidth: f64,
    pub initial_backoff: f64,
    pub max_backoff: f64,
    next_id: u64,
    busy_until: BTreeMap<String, f64>,
    active: BTreeMap<u64, SyncTicket>,
}

impl DataSync {
    pub fn new(bandwidth: f64) -> Self {
        assert!(
            bandwidth.is_finite() && bandwidth > 0.0,
            "bandwidth must be positive"
        );
        Self {
            bandwidth,
            initial_backoff: 1.0,
            max_backoff: 60.0,
            next_id: 1,
            busy_until: BTreeMap::new(),
            active: BTreeMap::new(),
        }
    }

    /// Schedules a transfer given the link's blackout intervals, sorted by start.
    pub fn submit(
        &mut self,
        robot: &str,
        product: DataProduct,
        now: f64,
        outages: &[(f64, f64)],
    ) -> SyncTicket {
        let start = self.busy_until.get(robot).copied().unwrap_or(now).max(now);
        let duration = product.bytes as f64 / self.bandwidth;
        let mut attempts = Vec::new();
        let mut t = start;
        let mut backoff = self.initial_backoff;
        let completes_at = loop {
            attempts.push(t);
            let blocking = outages
                .iter()
                .filter(|(s, e)| *e > t && *s < t + duration)
                .min_by(|a, b| a.0.max(t).total_cmp(&b.0.max(t)));
            let Some(&(s, e)) = blocking else {
                break t + duration;
            };
            if e.is_infinite() {
                break f64::INFINITY;
            }
            let blocked = s.max(t);
            t = blocked + backoff;
            backoff = (backoff * 2.0).min(self.max_backoff);
        };
        self.busy_until.insert(robot.to_owned(), completes_at);
        let ticket = SyncTicket {
            id: self.next_id,
            robot: robot.to_owned(),
            product,
            attempts,
            completes_at,
        };
        self.next_id += 1;
        self.active.insert(ticket.id, ticket.clone());
        ticket
    }

    /// Marks a transfer complete. Returns `None` if it was abandoned.
    pub fn complete(&mut self, id: u64) -> Option<SyncTicket> {
        self.active.remove(&id)
    }

    /// Abandons every transfer of a dead robot.
    pub fn abandon_robot(&mut self, robot: &str) -> Vec<u64> {
        let ids: Vec<u64> = self
            .active
            .values()
            .filter(|t| t.robot == robot)
            .map(|t| t.id)
            .collect();
        for id in &ids {
            self.active.remove(id);
        }
        self.busy_until.remove(robot);
        ids
    }

    pub fn pending(&self) -> usize {
        self.active.len()
    }
}
