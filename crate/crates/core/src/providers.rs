//! Integration-layer interfaces: SMS dispatch, push delivery and reverse
//! geocoding, plus deterministic in-memory fakes.
//!
//! Production adapters would implement these traits over the vendor APIs
//! (Twilio for SMS, Firebase Cloud Messaging for push, Google Maps for
//! geocoding). Nothing outside this module names a vendor; the service only
//! sees the traits. Failures are returned as [`Dispatch::Failed`] values so
//! callers decide their own retry policy.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::time::Instant;

use parking_lot::Mutex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geo::Coordinate;
use crate::model::Phone;
use crate::time::{Clock, SystemClock};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    Injected,
    UnknownToken,
    Dropped,
    Vendor(String),
}

impl fmt::Display for FailureReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FailureReason::Injected => f.write_str("injected"),
            FailureReason::UnknownToken => f.write_str("unknown_token"),
            FailureReason::Dropped => f.write_str("dropped"),
            FailureReason::Vendor(msg) => write!(f, "vendor: {msg}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "result", content = "reason", rename_all = "snake_case")]
pub enum Dispatch {
    Accepted,
    Failed(FailureReason),
}

impl Dispatch {
    pub fn is_accepted(&self) -> bool {
        matches!(self, Dispatch::Accepted)
    }
}

pub trait SmsProvider: Send + Sync {
    fn sms_send(&self, phone: &Phone, text: &str) -> Dispatch;
}

pub trait PushProvider: Send + Sync {
    fn push_send(&self, push_token: &str, payload: &[u8]) -> Dispatch;
}

pub trait Geocoder: Send + Sync {
    fn reverse_geocode(&self, p: Coordinate) -> String;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmsRecord {
    pub seq: u64,
    pub phone: String,
    pub text: String,
    /// Microseconds since the fake was created.
    pub mono_us: u64,
}

/// Records every message in an outbox instead of sending it.
#[derive(Debug)]
pub struct FakeSms {
    started: Instant,
    outbox: Mutex<Vec<SmsRecord>>,
    fail: AtomicBool,
}

impl Default for FakeSms {
    fn default() -> Self {
        Self { started: Instant::now(), outbox: Mutex::new(Vec::new()), fail: AtomicBool::new(false) }
    }
}

impl FakeSms {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_fail(&self, fail: bool) {
        self.fail.store(fail, Ordering::SeqCst);
    }

    pub fn outbox(&self) -> Vec<SmsRecord> {
        self.outbox.lock().clone()
    }

    pub fn sent_to(&self, phone: &str) -> Vec<SmsRecord> {
        self.outbox.lock().iter().filter(|r| r.phone == phone).cloned().collect()
    }
}

impl SmsProvider for FakeSms {
    fn sms_send(&self, phone: &Phone, text: &str) -> Dispatch {
        if self.fail.load(Ordering::SeqCst) {
            return Dispatch::Failed(FailureReason::Injected);
        }
        tracing::info!(%phone, text, "sms");
        let mut outbox = self.outbox.lock();
        let seq = outbox.len() as u64 + 1;
        outbox.push(SmsRecord {
            seq,
            phone: phone.to_string(),
            text: text.to_owned(),
            mono_us: self.started.elapsed().as_micros() as u64,
        });
        Dispatch::Accepted
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PushRecord {
    pub seq: u64,
    pub token: String,
    pub payload: String,
    /// Wall-clock receipt time, milliseconds since the epoch.
    pub received_ms: i64,
}

struct PushState {
    devices: HashSet<String>,
    queues: HashMap<String, Vec<PushRecord>>,
    log: Vec<PushRecord>,
    attempts: u64,
    rng: ChaCha8Rng,
}

/// Per-token delivery queues with an optional seeded drop rate.
pub struct FakePush {
    state: Mutex<PushState>,
    drop_rate_bits: AtomicU64,
    /// Accept tokens that were never registered.
    permissive: AtomicBool,
    clock: Box<dyn Clock>,
}

impl fmt::Debug for FakePush {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FakePush").field("drop_rate", &self.drop_rate()).finish()
    }
}

impl Default for FakePush {
    fn default() -> Self {
        Self::with_seed(0)
    }
}

impl FakePush {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            state: Mutex::new(PushState {
                devices: HashSet::new(),
                queues: HashMap::new(),
                log: Vec::new(),
                attempts: 0,
                rng: ChaCha8Rng::seed_from_u64(seed),
            }),
            drop_rate_bits: AtomicU64::new(0f64.to_bits()),
            permissive: AtomicBool::new(false),
            clock: Box::new(SystemClock),
        }
    }

    /// Makes `token` deliverable, as a device registering with the carrier.
    pub fn register_device(&self, token: &str) {
        self.state.lock().devices.insert(token.to_owned());
    }

    /// When on, every token counts as a registered device.
    pub fn set_permissive(&self, on: bool) {
        self.permissive.store(on, Ordering::SeqCst);
    }

    pub fn set_drop_rate(&self, rate: f64) {
        self.drop_rate_bits.store(rate.clamp(0.0, 1.0).to_bits(), Ordering::SeqCst);
    }

    pub fn drop_rate(&self) -> f64 {
        f64::from_bits(self.drop_rate_bits.load(Ordering::SeqCst))
    }

    pub fn queue(&self, token: &str) -> Vec<PushRecord> {
        self.state.lock().queues.get(token).cloned().unwrap_or_default()
    }

    /// Every delivered push in delivery order.
    pub fn delivered(&self) -> Vec<PushRecord> {
        self.state.lock().log.clone()
    }

    pub fn delivered_after(&self, seq: u64) -> Vec<PushRecord> {
        self.state.lock().log.iter().filter(|r| r.seq > seq).cloned().collect()
    }

    /// Total calls, including failed ones.
    pub fn attempts(&self) -> u64 {
        self.state.lock().attempts
    }
}

impl PushProvider for FakePush {
    fn push_send(&self, push_token: &str, payload: &[u8]) -> Dispatch {
        let drop_rate = self.drop_rate();
        let mut st = self.state.lock();
        st.attempts += 1;
        if !st.devices.contains(push_token) && !self.permissive.load(Ordering::SeqCst) {
            return Dispatch::Failed(FailureReason::UnknownToken);
        }
        if drop_rate > 0.0 && st.rng.random::<f64>() < drop_rate {
            return Dispatch::Failed(FailureReason::Dropped);
        }
        let rec = PushRecord {
            seq: st.log.len() as u64 + 1,
            token: push_token.to_owned(),
            payload: String::from_utf8_lossy(payload).into_owned(),
            received_ms: self.clock.now().as_millis(),
        };
        st.queues.entry(push_token.to_owned()).or_default().push(rec.clone());
        st.log.push(rec);
        Dispatch::Accepted
    }
}

/// Labels a point by its 0.01-degree grid cell.
#[derive(Debug, Default, Clone, Copy)]
pub struct GridGeocoder;

impl Geocoder for GridGeocoder {
    fn reverse_geocode(&self, p: Coordinate) -> String {
        let lat_cell = (p.lat() * 100.0).floor() as i64;
        let lon_cell = (p.lon() * 100.0).floor() as i64;
        format!("Sector {lat_cell:+06}/{lon_cell:+06}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn phone() -> Phone {
        Phone::parse("+306900000001").unwrap()
    }

    #[test]
    fn sms_outbox_records_in_order() {
        let sms = FakeSms::new();
        assert!(sms.sms_send(&phone(), "first").is_accepted());
        assert!(sms.sms_send(&phone(), "second").is_accepted());
        let out = sms.outbox();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].text, "first");
        assert_eq!(out[1].text, "second");
        assert!(out[0].mono_us <= out[1].mono_us);
    }

    #[test]
    fn sms_fault_injection() {
        let sms = FakeSms::new();
        sms.set_fail(true);
        assert_eq!(sms.sms_send(&phone(), "x"), Dispatch::Failed(FailureReason::Injected));
        assert!(sms.outbox().is_empty());
    }

    #[test]
    fn push_queues_and_failures() {
        let push = FakePush::default();
        push.register_device("tok-a");
        assert!(push.push_send("tok-a", b"{}").is_accepted());
        assert_eq!(push.queue("tok-a").len(), 1);
        assert_eq!(push.push_send("tok-b", b"{}"), Dispatch::Failed(FailureReason::UnknownToken));
        push.set_drop_rate(1.0);
        assert_eq!(push.push_send("tok-a", b"{}"), Dispatch::Failed(FailureReason::Dropped));
        assert_eq!(push.queue("tok-a").len(), 1);
        assert_eq!(push.attempts(), 3);
        push.set_drop_rate(0.0);
        push.set_permissive(true);
        assert!(push.push_send("tok-b", b"{}").is_accepted());
    }

    #[test]
    fn seeded_drops_are_reproducible() {
        let run = |seed| {
            let push = FakePush::with_seed(seed);
            push.register_device("t");
            push.set_drop_rate(0.5);
            (0..64).map(|_| push.push_send("t", b"x").is_accepted()).collect::<Vec<_>>()
        };
        assert_eq!(run(9), run(9));
    }

    #[test]
    fn geocoder_is_stable() {
        let g = GridGeocoder;
        let p = Coordinate::new(38.2466, 21.7346).unwrap();
        assert_eq!(g.reverse_geocode(p), g.reverse_geocode(p));
        assert_ne!(g.reverse_geocode(p), g.reverse_geocode(Coordinate::new(38.2566, 21.7346).unwrap()));
        assert_eq!(g.reverse_geocode(Coordinate::new(0.0, 0.0).unwrap()), "Sector +00000/+00000");
    }
}
