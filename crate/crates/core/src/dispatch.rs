//! Asynchronous push dispatch behind the delivery ledger.
//!
//! Ledger rows are committed before jobs reach this worker. The worker keeps a
//! due-time queue, so a failing push waits out its backoff without holding up
//! other deliveries. Outcomes and attempt counts are written back to the
//! ledger in one store batch per round.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use parking_lot::{Condvar, Mutex};

use crate::alerting::{DeliveryOutcome, DeliveryRecord};
use crate::config::DeliveryConfig;
use crate::providers::{Dispatch, FailureReason, PushProvider};
use crate::store::{Expect, Op, Store, StoreExt};
use crate::time::Clock;

#[derive(Debug, Clone)]
pub(crate) struct PushJob {
    pub ledger_key: String,
    pub token: String,
    pub payload: Vec<u8>,
    pub attempts_made: u32,
}

struct Due {
    at: Instant,
    order: u64,
    job: PushJob,
}

impl PartialEq for Due {
    fn eq(&self, other: &Self) -> bool {
        (self.at, self.order) == (other.at, other.order)
    }
}
impl Eq for Due {}
impl PartialOrd for Due {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Due {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.at, self.order).cmp(&(other.at, other.order))
    }
}

#[derive(Default)]
struct InFlight {
    count: Mutex<usize>,
    idle: Condvar,
}

impl InFlight {
    fn add(&self, n: usize) {
        *self.count.lock() += n;
    }

    fn done(&self, n: usize) {
        let mut c = self.count.lock();
        *c -= n;
        if *c == 0 {
            self.idle.notify_all();
        }
    }

    fn wait_zero(&self) {
        let mut c = self.count.lock();
        while *c > 0 {
            self.idle.wait(&mut c);
        }
    }
}

pub(crate) struct Dispatcher {
    tx: Mutex<Option<Sender<Vec<PushJob>>>>,
    in_flight: Arc<InFlight>,
    worker: Mutex<Option<JoinHandle<()>>>,
}

struct Worker {
    store: Arc<dyn Store>,
    push: Arc<dyn PushProvider>,
    clock: Arc<dyn Clock>,
    config: DeliveryConfig,
    in_flight: Arc<InFlight>,
    queue: BinaryHeap<Reverse<Due>>,
    order: u64,
}

impl Dispatcher {
    pub fn start(
        store: Arc<dyn Store>,
        push: Arc<dyn PushProvider>,
        clock: Arc<dyn Clock>,
        config: DeliveryConfig,
    ) -> Self {
        let (tx, rx) = mpsc::channel();
        let in_flight = Arc::new(InFlight::default());
        let mut worker = Worker {
            store,
            push,
            clock,
            config,
            in_flight: in_flight.clone(),
            queue: BinaryHeap::new(),
            order: 0,
        };
        let handle = std::thread::Builder::new()
            .name("e112-push".into())
            .spawn(move || worker.run(rx))
            .expect("spawn push worker");
        Self { tx: Mutex::new(Some(tx)), in_flight, worker: Mutex::new(Some(handle)) }
    }

    pub fn enqueue(&self, jobs: Vec<PushJob>) {
        if jobs.is_empty() {
            return;
        }
        self.in_flight.add(jobs.len());
        let n = jobs.len();
        let sent = self.tx.lock().as_ref().map(|tx| tx.send(jobs).is_ok()).unwrap_or(false);
        if !sent {
            self.in_flight.done(n);
        }
    }

    pub fn wait_idle(&self) {
        self.in_flight.wait_zero();
    }
}

impl Drop for Dispatcher {
    fn drop(&mut self) {
        self.tx.lock().take();
        if let Some(h) = self.worker.lock().take() {
            let _ = h.join();
        }
    }
}

impl Worker {
    fn run(&mut self, rx: Receiver<Vec<PushJob>>) {
        let mut open = true;
        while open || !self.queue.is_empty() {
            let wait = match self.queue.peek() {
                Some(Reverse(d)) => d.at.saturating_duration_since(Instant::now()),
                None => Duration::from_secs(3600),
            };
            match rx.recv_timeout(wait) {
                Ok(jobs) => self.schedule(jobs, Instant::now()),
                Err(RecvTimeoutError::Timeout) => {}
                Err(RecvTimeoutError::Disconnected) => {
                    open = false;
                }
            }
            while let Ok(jobs) = rx.try_recv() {
                self.schedule(jobs, Instant::now());
            }
            self.run_due();
            if !open && !self.queue.is_empty() {
                // Shutting down: let remaining backoffs elapse.
                if let Some(Reverse(d)) = self.queue.peek() {
                    std::thread::sleep(d.at.saturating_duration_since(Instant::now()));
                }
            }
        }
    }

    fn schedule(&mut self, jobs: Vec<PushJob>, at: Instant) {
        for job in jobs {
            self.order += 1;
            self.queue.push(Reverse(Due { at, order: self.order, job }));
        }
    }

    fn run_due(&mut self) {
        let now = Instant::now();
        let mut updates = Vec::new();
        let mut finished = 0;
        let mut retry = Vec::new();
        while let Some(Reverse(d)) = self.queue.peek() {
            if d.at > now {
                break;
            }
            let Reverse(Due { mut job, .. }) = self.queue.pop().unwrap();
            let result = self.push.push_send(&job.token, &job.payload);
            job.attempts_made += 1;
            let outcome = match &result {
                Dispatch::Accepted => Some(DeliveryOutcome::Delivered),
                Dispatch::Failed(FailureReason::UnknownToken) => Some(DeliveryOutcome::Failed),
                Dispatch::Failed(_) if job.attempts_made >= self.config.max_attempts => {
                    Some(DeliveryOutcome::Failed)
                }
                Dispatch::Failed(_) => None,
            };
            updates.push((job.ledger_key.clone(), job.attempts_made, outcome));
            match outcome {
                Some(_) => finished += 1,
                None => retry.push(job),
            }
        }
        for job in retry {
            let at = now + self.config.backoff(job.attempts_made);
            self.schedule(vec![job], at);
        }
        if !updates.is_empty() {
            self.record(updates);
        }
        if finished > 0 {
            self.in_flight.done(finished);
        }
    }

    fn record(&self, updates: Vec<(String, u32, Option<DeliveryOutcome>)>) {
        let now = self.clock.now();
        let mut ops = Vec::with_capacity(updates.len());
        for (key, attempts, outcome) in updates {
            let Ok(current) = self.store.load::<DeliveryRecord>(&key) else { continue };
            let mut rec = current.value;
            rec.attempt_count = attempts;
            if let Some(o) = outcome {
                rec.outcome = o;
                if o == DeliveryOutcome::Delivered {
                    rec.delivered_at = Some(now);
                }
            }
            ops.push(Op::put(&rec, Expect::Any));
        }
        if let Err(e) = self.store.atomically(ops) {
            tracing::error!(error = %e, "failed to record push outcomes");
        }
    }
}
