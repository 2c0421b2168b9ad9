use std::sync::Arc;

use e112_core::providers::{FakePush, FakeSms};
use e112_core::Service;

/// Handles on the provider fakes, exposed only when fault injection is on.
pub struct Fakes {
    pub sms: Arc<FakeSms>,
    pub push: Arc<FakePush>,
}

#[derive(Clone)]
pub struct AppState {
    pub svc: Arc<Service>,
    pub fakes: Option<Arc<Fakes>>,
}
