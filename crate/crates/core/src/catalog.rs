//! Map content curated by operators: zones, resource points and evacuation
//! routes, plus the nearest-resource lookup for citizens.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{k_nearest, Coordinate, Geofence};
use crate::ids::{AlertId, ResourceId, RouteId, ZoneId};
use crate::model::{
    Alert, AlertStatus, EvacuationRoute, MapColor, ResourceKind, ResourcePoint, Zone, ZoneCategory,
};
use crate::service::{Principal, Service};
use crate::store::{Expect, Filter, Page, StoreExt};

pub const NAME_MAX_CHARS: usize = 120;
pub const MAX_WAYPOINTS: usize = 500;

/// A zone with its display color resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneView {
    #[serde(flatten)]
    pub zone: Zone,
    pub color: MapColor,
    pub color_hex: String,
}

impl From<Zone> for ZoneView {
    fn from(zone: Zone) -> Self {
        let color = zone.category.color();
        ZoneView { color_hex: color.hex().to_owned(), color, zone }
    }
}

impl Service {
    /// Citizens never see content attached to an unpublished draft.
    fn alert_visible(&self, who: &Principal, id: &AlertId) -> Result<bool> {
        match self.store.find::<Alert>(id.as_str())? {
            Some(a) => Ok(who.is_operator() || a.value.status != AlertStatus::Draft),
            None => Ok(false),
        }
    }

    fn require_alert(&self, id: &AlertId) -> Result<()> {
        match self.store.find::<Alert>(id.as_str())? {
            Some(_) => Ok(()),
            None => Err(Error::UnknownAlert(id.to_string())),
        }
    }

    pub fn create_zone(
        &self,
        who: &Principal,
        alert_id: Option<AlertId>,
        category: ZoneCategory,
        area: Geofence,
    ) -> Result<ZoneView> {
        who.require_operator()?;
        if let Some(a) = &alert_id {
            self.require_alert(a)?;
        }
        let zone = Zone { id: ZoneId::generate(), alert_id, category, area, created_at: self.now() };
        self.store.put(&zone, Expect::Absent)?;
        Ok(zone.into())
    }

    /// Zones for one alert, or every zone when no alert is given.
    pub fn zones(&self, who: &Principal, alert_id: Option<&AlertId>) -> Result<Vec<ZoneView>> {
        let zones = match alert_id {
            Some(a) => {
                if !self.alert_visible(who, a)? {
                    return Ok(Vec::new());
                }
                self.store.list_of::<Zone>(&Filter::owner(a.as_str()), Page::ALL)?
            }
            None => {
                let mut out = Vec::new();
                for z in self.store.list_of::<Zone>(&Filter::all(), Page::ALL)? {
                    let visible = match &z.alert_id {
                        Some(a) => self.alert_visible(who, a)?,
                        None => true,
                    };
                    if visible {
                        out.push(z);
                    }
                }
                out
            }
        };
        Ok(zones.into_iter().map(ZoneView::from).collect())
    }

    pub fn create_resource(
        &self,
        who: &Principal,
        kind: ResourceKind,
        name: &str,
        location: Coordinate,
    ) -> Result<ResourcePoint> {
        who.require_operator()?;
        let name = name.trim();
        let len = name.chars().count();
        if len == 0 || len > NAME_MAX_CHARS {
            return Err(Error::BadRequest(format!("name must be 1..={NAME_MAX_CHARS} characters")));
        }
        let r = ResourcePoint { id: ResourceId::generate(), kind, name: name.to_owned(), location, created_at: self.now() };
        self.store.put(&r, Expect::Absent)?;
        Ok(r)
    }

    /// The `k` resources nearest to `p`, optionally of one kind, nearest first.
    pub fn nearest_resources(&self, kind: Option<ResourceKind>, p: Coordinate, k: usize) -> Result<Vec<ResourcePoint>> {
        let k = k.min(self.config.max_page);
        let filter = match kind {
            Some(kind) => Filter::status(serde_json::to_value(kind).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default()),
            None => Filter::all(),
        };
        let all = self.store.list_of::<ResourcePoint>(&filter, Page::ALL)?;
        let keyed: Vec<(ResourceId, Coordinate)> = all.iter().map(|r| (r.id.clone(), r.location)).collect();
        let mut by_id: HashMap<ResourceId, ResourcePoint> = all.into_iter().map(|r| (r.id.clone(), r)).collect();
        Ok(k_nearest(&keyed, p, k).into_iter().filter_map(|id| by_id.remove(&id)).collect())
    }

    pub fn create_route(
        &self,
        who: &Principal,
        alert_id: AlertId,
        waypoints: Vec<Coordinate>,
        destination: ResourceId,
    ) -> Result<EvacuationRoute> {
        who.require_operator()?;
        EvacuationRoute::validate_waypoints(&waypoints)?;
        if waypoints.len() > MAX_WAYPOINTS {
            return Err(Error::BadRequest(format!("at most {MAX_WAYPOINTS} waypoints")));
        }
        self.require_alert(&alert_id)?;
        if self.store.find::<ResourcePoint>(destination.as_str())?.is_none() {
            return Err(Error::BadRequest(format!("unknown destination resource {destination}")));
        }
        let route = EvacuationRoute { id: RouteId::generate(), alert_id, waypoints, destination, created_at: self.now() };
        self.store.put(&route, Expect::Absent)?;
        Ok(route)
    }

    pub fn routes(&self, who: &Principal, alert_id: &AlertId) -> Result<Vec<EvacuationRoute>> {
        if !self.alert_visible(who, alert_id)? {
            return Ok(Vec::new());
        }
        Ok(self.store.list_of::<EvacuationRoute>(&Filter::owner(alert_id.as_str()), Page::ALL)?)
    }
}
