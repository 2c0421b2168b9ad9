//! The service facade that ties storage, providers, the subscriber index,
//! event streams and push dispatch together. Operations live in the
//! `identity`, `alerting`, `intake`, `chat`, `catalog` and `ops` modules as
//! further `impl Service` blocks.

use std::sync::Arc;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};

use crate::alerting::DeliveryRecord;
use crate::config::Config;
use crate::dispatch::{Dispatcher, PushJob};
use crate::error::{Error, Result};
use crate::events::EventHub;
use crate::geo::{Coordinate, GeoError, GeoIndex};
use crate::ids::UserId;
use crate::model::{Alert, LocationFix, Role, UserAccount};
use crate::providers::{Geocoder, GridGeocoder, PushProvider, SmsProvider};
use crate::store::{Expect, Filter, Page, Store, StoreError, StoreExt};
use crate::time::{Clock, SystemClock, Timestamp};

const CHAT_LOCK_STRIPES: usize = 64;

/// An authenticated caller.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Principal {
    pub user_id: UserId,
    pub role: Role,
}

impl Principal {
    pub fn is_operator(&self) -> bool {
        self.role == Role::Operator
    }

    pub fn require_operator(&self) -> Result<()> {
        if self.is_operator() {
            Ok(())
        } else {
            Err(Error::Forbidden)
        }
    }
}

#[derive(Clone)]
pub struct Providers {
    pub sms: Arc<dyn SmsProvider>,
    pub push: Arc<dyn PushProvider>,
    pub geocoder: Arc<dyn Geocoder>,
}

impl Providers {
    pub fn new(sms: Arc<dyn SmsProvider>, push: Arc<dyn PushProvider>) -> Self {
        Self { sms, push, geocoder: Arc::new(GridGeocoder) }
    }
}

pub struct Service {
    pub(crate) config: Config,
    pub(crate) store: Arc<dyn Store>,
    pub(crate) providers: Providers,
    pub(crate) clock: Arc<dyn Clock>,
    pub(crate) index: RwLock<GeoIndex<UserId>>,
    pub(crate) events: EventHub,
    pub(crate) dispatcher: Dispatcher,
    pub(crate) registration: parking_lot::Mutex<()>,
    /// Striped locks serializing appends and moderation within a chat group.
    pub(crate) chat_locks: Vec<parking_lot::Mutex<()>>,
}

impl std::fmt::Debug for Service {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Service").field("config", &self.config).finish()
    }
}

/// Outcome of a location update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationUpdate {
    pub place: String,
    /// Active alerts newly delivered because the user entered their area.
    pub new_alerts: Vec<crate::ids::AlertId>,
}

impl Service {
    pub fn new(config: Config, store: Arc<dyn Store>, providers: Providers) -> Result<Self> {
        Self::with_clock(config, store, providers, Arc::new(SystemClock))
    }

    /// Builds the service and rebuilds in-memory state (subscriber index,
    /// unfinished deliveries) from the store.
    pub fn with_clock(
        config: Config,
        store: Arc<dyn Store>,
        providers: Providers,
        clock: Arc<dyn Clock>,
    ) -> Result<Self> {
        let mut index = GeoIndex::new(config.cell_deg).map_err(|e| Error::BadRequest(e.to_string()))?;
        for user in store.list_of::<UserAccount>(&Filter::all(), Page::ALL)? {
            if let (true, Some(fix)) = (user.verified, user.last_location) {
                index.upsert(user.id.clone(), fix.coordinate, fix.at).ok();
            }
        }
        let dispatcher = Dispatcher::start(
            store.clone(),
            providers.push.clone(),
            clock.clone(),
            config.delivery.clone(),
        );
        let svc = Self {
            events: EventHub::new(config.event_retention),
            config,
            store,
            providers,
            clock,
            index: RwLock::new(index),
            dispatcher,
            registration: parking_lot::Mutex::new(()),
            chat_locks: (0..CHAT_LOCK_STRIPES).map(|_| parking_lot::Mutex::new(())).collect(),
        };
        svc.resume_pending_deliveries()?;
        Ok(svc)
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn store(&self) -> &Arc<dyn Store> {
        &self.store
    }

    pub fn events(&self) -> &EventHub {
        &self.events
    }

    pub fn now(&self) -> Timestamp {
        self.clock.now()
    }

    /// Blocks until every queued push has either succeeded or used up its
    /// attempts.
    pub fn flush_deliveries(&self) {
        self.dispatcher.wait_idle();
    }

    pub(crate) fn user(&self, id: &UserId) -> Result<UserAccount> {
        match self.store.load::<UserAccount>(id.as_str()) {
            Ok(v) => Ok(v.value),
            Err(StoreError::NotFound { .. }) => Err(Error::NotFound { kind: "user", id: id.to_string() }),
            Err(e) => Err(e.into()),
        }
    }

    pub fn account(&self, who: &Principal) -> Result<UserAccount> {
        self.user(&who.user_id)
    }

    /// Verified caller check shared by citizen-facing operations.
    pub(crate) fn require_verified(&self, who: &Principal) -> Result<UserAccount> {
        match self.user(&who.user_id) {
            Ok(u) if u.verified => Ok(u),
            Ok(_) | Err(Error::NotFound { .. }) => Err(Error::Unauthenticated),
            Err(e) => Err(e),
        }
    }

    pub(crate) fn operator_ids(&self) -> Result<Vec<UserId>> {
        Ok(self
            .store
            .list_of::<UserAccount>(&Filter::status("operator"), Page::ALL)?
            .into_iter()
            .map(|u| u.id)
            .collect())
    }

    /// Records the caller's device position, keeps the subscriber index in
    /// step, and delivers any active alert whose area the user just entered.
    pub fn update_location(
        &self,
        who: &Principal,
        p: Coordinate,
        at: Option<Timestamp>,
    ) -> Result<LocationUpdate> {
        let at = at.unwrap_or_else(|| self.now());
        self.require_verified(who)?;
        self.record_location(&who.user_id, p, at)?;
        let new_alerts = self.deliver_on_entry(&who.user_id, p)?;
        Ok(LocationUpdate { place: self.providers.geocoder.reverse_geocode(p), new_alerts })
    }

    pub(crate) fn record_location(&self, user: &UserId, p: Coordinate, at: Timestamp) -> Result<()> {
        loop {
            let current = self.store.load::<UserAccount>(user.as_str())?;
            let mut account = current.value;
            if let Some(prev) = account.last_location {
                if at < prev.at {
                    return Err(Error::StaleLocation);
                }
            }
            account.last_location = Some(LocationFix { coordinate: p, at });
            // The index write happens under its lock after the store commit so
            // concurrent updates for one user land in timestamp order.
            let mut index = self.index.write();
            match self.store.put(&account, Expect::Version(current.version)) {
                Ok(_) => {}
                Err(StoreError::Conflict { .. }) => continue,
                Err(e) => return Err(e.into()),
            }
            if account.verified {
                match index.upsert(user.clone(), p, at) {
                    Ok(()) | Err(GeoError::StaleUpdate { .. }) => {}
                    Err(e) => return Err(Error::InvalidLocation(e)),
                }
            }
            return Ok(());
        }
    }

    fn resume_pending_deliveries(&self) -> Result<()> {
        let pending = self.store.list_of::<DeliveryRecord>(&Filter::status("pending"), Page::ALL)?;
        for rec in pending {
            let Some(alert) = self.store.find::<Alert>(rec.alert_id.as_str())? else { continue };
            let Ok(payload) = crate::model::compose_alert_payload(&alert.value) else { continue };
            let Some(user) = self.store.find::<UserAccount>(rec.user_id.as_str())? else { continue };
            if let Some(token) = user.value.push_token {
                self.dispatcher.enqueue(vec![PushJob {
                    ledger_key: rec.key(),
                    token,
                    payload: payload.to_bytes(),
                    attempts_made: rec.attempt_count,
                }]);
            }
        }
        Ok(())
    }
}
