//! Dashboard statistics.

use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{Lifecycle, ReportStatus, SosStatus};
use crate::service::{Principal, Service};
use crate::store::{Filter, Kind};
use crate::time::Timestamp;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpsSummary {
    /// SOS requests not yet closed.
    pub open_sos: usize,
    pub sos_by_status: BTreeMap<String, usize>,
    pub reports_by_status: BTreeMap<String, usize>,
    pub active_alerts: usize,
    pub open_groups: usize,
    /// Ledger rows enqueued in the hour before `as_of`.
    pub deliveries_last_hour: usize,
    pub as_of: Timestamp,
}

impl Service {
    /// All figures come from one store snapshot, so they agree with each other.
    pub fn ops_summary(&self, who: &Principal) -> Result<OpsSummary> {
        who.require_operator()?;
        let now = self.now();
        let sos: Vec<SosStatus> = SosStatus::all().to_vec();
        let reports: Vec<ReportStatus> = ReportStatus::all().to_vec();
        let mut queries: Vec<(Kind, Filter)> = Vec::new();
        queries.extend(sos.iter().map(|s| (Kind::Sos, Filter::status(s.as_str()))));
        queries.extend(reports.iter().map(|s| (Kind::Report, Filter::status(s.as_str()))));
        queries.push((Kind::Alert, Filter::status("active")));
        queries.push((Kind::Group, Filter::status("open")));
        queries.push((Kind::Delivery, Filter::all().between(now.minus(Duration::from_secs(3600)), Timestamp(i64::MAX))));
        let counts = self.store.counts(&queries)?;

        let mut it = counts.into_iter();
        let sos_by_status: BTreeMap<String, usize> =
            sos.iter().map(|s| (s.as_str().to_owned(), it.next().unwrap_or(0))).collect();
        let reports_by_status: BTreeMap<String, usize> =
            reports.iter().map(|s| (s.as_str().to_owned(), it.next().unwrap_or(0))).collect();
        let active_alerts = it.next().unwrap_or(0);
        let open_groups = it.next().unwrap_or(0);
        let deliveries_last_hour = it.next().unwrap_or(0);
        let open_sos = sos
            .iter()
            .filter(|s| !s.is_terminal())
            .map(|s| sos_by_status[s.as_str()])
            .sum();
        Ok(OpsSummary {
            open_sos,
            sos_by_status,
            reports_by_status,
            active_alerts,
            open_groups,
            deliveries_last_hour,
            as_of: now,
        })
    }
}
