use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Percentiles {
    pub count: usize,
    pub p50: f64,
    pub p95: f64,
    pub p99: f64,
    pub max: f64,
}

impl Percentiles {
    /// Nearest-rank percentiles; `None` for an empty sample.
    pub fn of(samples: &[f64]) -> Option<Percentiles> {
        if samples.is_empty() {
            return None;
        }
        let mut v = samples.to_vec();
        v.sort_by(f64::total_cmp);
        let rank = |q: f64| {
            let idx = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1;
            v[idx]
        };
        Some(Percentiles { count: v.len(), p50: rank(0.50), p95: rank(0.95), p99: rank(0.99), max: v[v.len() - 1] })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlertDelivery {
    pub alert: String,
    /// Users the oracle says should have been reached.
    pub expected: usize,
    /// Distinct users that got at least one push.
    pub delivered: usize,
    pub true_positives: usize,
    pub duplicates: usize,
    pub precision: f64,
    pub recall: f64,
    pub missing: Vec<String>,
    pub unexpected: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Delivery {
    pub precision: f64,
    pub recall: f64,
    pub duplicates: usize,
    pub per_alert: Vec<AlertDelivery>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Latency {
    /// Timeline steps between the triggering event and the push showing up.
    pub logical_steps: Option<Percentiles>,
    /// Milliseconds from the triggering request to the push being accepted.
    /// Machine-dependent, so left out of determinism comparisons.
    pub wall_ms: Option<Percentiles>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssertionResult {
    pub name: String,
    /// Scenario time of the assertion.
    pub t: u64,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub scenario: String,
    pub seed: u64,
    pub users: usize,
    pub steps: usize,
    pub delivery: Delivery,
    pub latency: Latency,
    pub assertions: Vec<AssertionResult>,
    pub passed: bool,
}

impl Report {
    /// The report without its wall-clock figures.
    pub fn deterministic(&self) -> Report {
        let mut r = self.clone();
        r.latency.wall_ms = None;
        r
    }

    pub fn failed_assertions(&self) -> impl Iterator<Item = &AssertionResult> {
        self.assertions.iter().filter(|a| !a.passed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        let p = Percentiles::of(&v).unwrap();
        assert_eq!((p.p50, p.p95, p.p99, p.max), (50.0, 95.0, 99.0, 100.0));
        let one = Percentiles::of(&[7.0]).unwrap();
        assert_eq!((one.p50, one.p99), (7.0, 7.0));
        assert!(Percentiles::of(&[]).is_none());
    }
}
