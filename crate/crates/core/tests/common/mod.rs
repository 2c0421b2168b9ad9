#![allow(dead_code)]

use std::sync::Arc;
use std::time::Duration;

use e112_core::config::Config;
use e112_core::geo::{Coordinate, Geofence};
use e112_core::identity::ProvisionedUser;
use e112_core::ids::UserId;
use e112_core::model::{AlertDraft, AlertSource, Hazard, Phone, Role, Severity};
use e112_core::providers::{FakePush, FakeSms};
use e112_core::store::{MemoryStore, Store};
use e112_core::time::{ManualClock, Timestamp};
use e112_core::{Principal, Providers, Service};

pub const T0: Timestamp = Timestamp(1_750_000_000_000);

pub struct World {
    pub svc: Service,
    pub sms: Arc<FakeSms>,
    pub push: Arc<FakePush>,
    pub clock: Arc<ManualClock>,
    next_phone: std::sync::atomic::AtomicU64,
}

pub fn fast_config() -> Config {
    let mut c = Config::default();
    c.delivery.base_backoff_ms = 1;
    c
}

pub fn c(lat: f64, lon: f64) -> Coordinate {
    Coordinate::new(lat, lon).unwrap()
}

/// 1 km circle around Patras harbour.
pub fn harbour() -> Geofence {
    Geofence::circle(c(38.25, 21.73), 1_000.0).unwrap()
}

pub fn inside() -> Coordinate {
    c(38.2505, 21.7305)
}

pub fn outside() -> Coordinate {
    c(38.30, 21.80)
}

impl World {
    pub fn new() -> Self {
        Self::with_store(Arc::new(MemoryStore::new()))
    }

    pub fn with_store(store: Arc<dyn Store>) -> Self {
        Self::with_store_config(store, fast_config())
    }

    pub fn with_store_config(store: Arc<dyn Store>, config: Config) -> Self {
        let sms = Arc::new(FakeSms::new());
        let push = Arc::new(FakePush::with_seed(7));
        let clock = Arc::new(ManualClock::new(T0));
        let svc = Service::with_clock(config, store, Providers::new(sms.clone(), push.clone()), clock.clone()).unwrap();
        World { svc, sms, push, clock, next_phone: std::sync::atomic::AtomicU64::new(1) }
    }

    fn phone(&self) -> Phone {
        let n = self.next_phone.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
        Phone::parse(&format!("+3069{n:08}")).unwrap()
    }

    fn provision(&self, role: Role, verified: bool, token: bool, at: Option<Coordinate>) -> UserId {
        let phone = self.phone();
        let push_token = token.then(|| format!("tok-{phone}"));
        if let Some(t) = &push_token {
            self.push.register_device(t);
        }
        self.svc
            .provision_user(ProvisionedUser {
                phone,
                display_name: "Test".into(),
                role,
                verified,
                push_token,
                location: at,
            })
            .unwrap()
    }

    fn principal(&self, id: UserId) -> Principal {
        let grant = self.svc.issue_session(&id).unwrap();
        self.svc.authenticate(&grant.token).unwrap()
    }

    pub fn operator(&self) -> Principal {
        let id = self.provision(Role::Operator, true, false, None);
        self.principal(id)
    }

    /// Verified citizen with a registered push device.
    pub fn citizen_at(&self, p: Coordinate) -> Principal {
        let id = self.provision(Role::Citizen, true, true, Some(p));
        self.principal(id)
    }

    pub fn citizen_nowhere(&self) -> Principal {
        let id = self.provision(Role::Citizen, true, true, None);
        self.principal(id)
    }

    /// Provisioned but never verified. Not a session holder.
    pub fn unverified_at(&self, p: Coordinate) -> UserId {
        self.provision(Role::Citizen, false, true, Some(p))
    }

    pub fn draft(&self, area: Geofence) -> AlertDraft {
        AlertDraft {
            hazard: Hazard::Flood,
            area,
            severity: Severity::Warning,
            short_text: "Flash flood: move to higher ground now".into(),
            guidance_text: "Avoid underpasses and river banks.".into(),
            source: AlertSource { operator_id: UserId::from("usr_placeholder"), authority: "Civil Protection".into() },
            effective_from: T0,
            expires_at: T0.plus(Duration::from_secs(6 * 3600)),
        }
    }
}
