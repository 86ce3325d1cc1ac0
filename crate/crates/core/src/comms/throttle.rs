use std::collections::BTreeMap;

/// One republished message: the latest value of every key updated since the
/// previous batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<K, V> {
    pub t: f64,
    pub items: BTreeMap<K, V>,
}

/// Keyed rate limiter. Updates are merged per key and republished as at most
/// one batch per `1 / cap_hz` seconds. A value equal to the one last published
/// for its key is dropped as a duplicate.
#[derive(Debug, Clone)]
pub struct Throttle<K, V> {
    period: f64,
    pending: BTreeMap<K, V>,
    published: BTreeMap<K, V>,
    last_emit: Option<f64>,
}

impl<K: Ord + Clone, V: Clone + PartialEq> Throttle<K, V> {
    /// Panics unless `cap_hz` is finite and positive.
    pub fn new(cap_hz: f64) -> Self {
        assert!(
            cap_hz.is_finite() && cap_hz > 0.0,
            "throttle cap must be positive"
        );
        Self {
            // Margin against float rounding at the window edge.
            period: (1.0 + 1e-9) / cap_hz,
            pending: BTreeMap::new(),
            published: BTreeMap::new(),
            last_emit: None,
        }
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn push(&mut self, key: K, value: V) {
        if self.published.get(&key) == Some(&value) {
            self.pending.remove(&key);
            return;
        }
        self.pending.insert(key, value);
    }

    /// Earliest time a pending batch may go out, or `None` when nothing waits.
    /// `now` is the time of the most recent push.
    pub fn next_emit(&self, now: f64) -> Option<f64> {
        if self.pending.is_empty() {
            return None;
        }
        Some(match self.last_emit {
            Some(last) => now.max(last + self.period),
            None => now,
        })
    }

    /// Emits the pending batch if the rate cap allows it at `now`.
    pub fn poll(&mut self, now: f64) -> Option<Batch<K, V>> {
        if self.pending.is_empty() {
            return None;
        }
        if let Some(last) = self.last_emit {
            if now < last + self.period {
                return None;
            }
        }
        self.last_emit = Some(now);
        let items = std::mem::take(&mut self.pending);
        for (k, v) in &items {
            self.published.insert(k.clone(), v.clone());
        }
        Some(Batch { t: now, items })
    }
}

/// Largest number of timestamps falling in any half-open window of `width`.
pub fn max_in_window(times: &[f64], width: f64) -> usize {
    let mut sorted = times.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut best = 0;
    let mut lo = 0;
    for hi in 0..sorted.len() {
        while sorted[hi] - sorted[lo] >= width {
            lo += 1;
        }
        best = best.max(hi - lo + 1);
    }
    best
}
