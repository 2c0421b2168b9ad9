use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use e112_core::identity::ProvisionedUser;
use e112_core::model::{Phone, Role};
use e112_core::providers::{FakePush, FakeSms};
use e112_core::store::{FileStore, MemoryStore, Store};
use e112_core::{Providers, Service};
use tokio::net::TcpListener;
use tokio::sync::oneshot;

use crate::config::{Settings, StoreSpec};
use crate::state::{AppState, Fakes};

#[derive(Debug, thiserror::Error)]
pub enum StartError {
    #[error("store: {0}")]
    Store(#[from] e112_core::store::StoreError),
    #[error("service: {0}")]
    Service(#[from] e112_core::Error),
    #[error("operator phone {0:?} is invalid")]
    OperatorPhone(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Builds the service with fake providers and provisions configured operators.
pub fn build_state(settings: &Settings) -> Result<AppState, StartError> {
    let store: Arc<dyn Store> = match &settings.store {
        StoreSpec::Memory => Arc::new(MemoryStore::new()),
        StoreSpec::File(dir) => Arc::new(FileStore::open(dir)?),
    };
    let sms = Arc::new(FakeSms::new());
    let push = Arc::new(FakePush::with_seed(settings.push_seed));
    push.set_permissive(!settings.fault_injection);
    let svc = Service::new(settings.service.clone(), store, Providers::new(sms.clone(), push.clone()))?;
    for raw in &settings.operators {
        let phone = Phone::parse(raw).map_err(|_| StartError::OperatorPhone(raw.clone()))?;
        svc.provision_user(ProvisionedUser {
            phone,
            display_name: "Operator".into(),
            role: Role::Operator,
            verified: false,
            push_token: None,
            location: None,
        })?;
    }
    let fakes = settings.fault_injection.then(|| Arc::new(Fakes { sms, push }));
    Ok(AppState { svc: Arc::new(svc), fakes })
}

/// Serves until `shutdown` resolves, sweeping expired alerts in the background.
pub async fn serve(
    listener: TcpListener,
    state: AppState,
    sweep_every: Duration,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let svc = state.svc.clone();
    let sweeper = tokio::spawn(async move {
        let mut tick = tokio::time::interval(sweep_every.max(Duration::from_millis(10)));
        tick.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
        loop {
            tick.tick().await;
            let svc = svc.clone();
            let swept = tokio::task::spawn_blocking(move || svc.expire_sweep(svc.now())).await;
            match swept {
                Ok(Ok(n)) if n > 0 => tracing::info!(expired = n, "alert sweep"),
                Ok(Err(e)) => tracing::warn!(error = %e, "alert sweep failed"),
                _ => {}
            }
        }
    });
    let result = axum::serve(listener, crate::router(state)).with_graceful_shutdown(shutdown).await;
    sweeper.abort();
    result
}

/// An in-process server on its own runtime thread, for tests and the
/// acceptance harness.
pub struct Server {
    addr: SocketAddr,
    state: AppState,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<std::io::Result<()>>>,
}

impl Server {
    /// Binds 127.0.0.1 on `settings.port` (0 picks a free port).
    pub fn start(settings: Settings) -> Result<Server, StartError> {
        let state = build_state(&settings)?;
        let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().worker_threads(4).build()?;
        let listener = runtime.block_on(TcpListener::bind(("127.0.0.1", settings.port)))?;
        let addr = listener.local_addr()?;
        let (stop, stopped) = oneshot::channel::<()>();
        let served = state.clone();
        let sweep_every = Duration::from_secs(settings.sweep_every_secs);
        let thread = std::thread::Builder::new().name("e112-server".into()).spawn(move || {
            runtime.block_on(serve(listener, served, sweep_every, async {
                stopped.await.ok();
            }))
        })?;
        Ok(Server { addr, state, stop: Some(stop), thread: Some(thread) })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn state(&self) -> &AppState {
        &self.state
    }

    pub fn stop(mut self) {
        self.shutdown();
    }

    fn shutdown(&mut self) {
        if let Some(stop) = self.stop.take() {
            stop.send(()).ok();
        }
        if let Some(t) = self.thread.take() {
            t.join().ok();
        }
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        self.shutdown();
    }
}
