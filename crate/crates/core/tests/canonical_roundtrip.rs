use std::collections::BTreeSet;

use e112_core::alerting::{Channel, DeliveryOutcome, DeliveryRecord, DeliveryTrigger};
use e112_core::geo::{Coordinate, Geofence};
use e112_core::identity::{Session, VerificationChallenge};
use e112_core::ids::*;
use e112_core::model::*;
use e112_core::store::{Entity, Expect, MemoryStore, Op, Store, StoreExt};
use e112_core::time::Timestamp;
use proptest::prelude::*;

fn coord() -> impl Strategy<Value = Coordinate> {
    (-90.0f64..=90.0, -180.0f64..=180.0).prop_map(|(a, b)| Coordinate::new(a, b).unwrap())
}

fn fence() -> impl Strategy<Value = Geofence> {
    prop_oneof![
        (coord(), 1.0f64..100_000.0).prop_map(|(c, r)| Geofence::circle(c, r).unwrap()),
        (-60.0f64..60.0, -170.0f64..170.0, 0.01f64..2.0).prop_map(|(lat, lon, d)| {
            let p = |a: f64, b: f64| Coordinate::new(a, b).unwrap();
            Geofence::polygon(vec![p(lat, lon), p(lat, lon + d), p(lat + d, lon + d), p(lat + d, lon)]).unwrap()
        }),
    ]
}

fn ts() -> impl Strategy<Value = Timestamp> {
    (0i64..4_000_000_000_000).prop_map(Timestamp)
}

fn text() -> impl Strategy<Value = String> {
    "\\PC{0,40}"
}

fn uid() -> impl Strategy<Value = UserId> {
    "[a-z0-9]{1,12}".prop_map(|s| UserId::new(format!("usr_{s}")))
}

fn phone() -> impl Strategy<Value = Phone> {
    "[1-9][0-9]{7,14}".prop_map(|d| Phone::parse(&format!("+{d}")).unwrap())
}

fn hash() -> impl Strategy<Value = ContentHash> {
    any::<Vec<u8>>().prop_map(|b| ContentHash::of(&b))
}

fn media_kind() -> impl Strategy<Value = MediaKind> {
    prop_oneof![Just(MediaKind::Image), Just(MediaKind::Video), Just(MediaKind::Audio)]
}

fn pick<T: Copy + std::fmt::Debug + 'static>(all: &'static [T]) -> impl Strategy<Value = T> {
    (0..all.len()).prop_map(move |i| all[i])
}

fn round_trip<E>(e: &E) -> Result<(), TestCaseError>
where
    E: Entity + PartialEq + std::fmt::Debug,
{
    let store = MemoryStore::new();
    store.atomically(vec![Op::put(e, Expect::Absent)]).unwrap();
    let back = store.load::<E>(&e.entity_id()).unwrap().value;
    prop_assert_eq!(&back, e);
    // The canonical form is a fixed point.
    let a = canonical::to_vec(e);
    let b = canonical::to_vec(&back);
    prop_assert_eq!(a, b);
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn users(id in uid(), p in phone(), v in any::<bool>(), name in text(), op in any::<bool>(),
             tok in proptest::option::of("[a-z0-9]{1,20}"), loc in proptest::option::of((coord(), ts())), t in ts()) {
        round_trip(&UserAccount {
            id, phone: p, verified: v, display_name: name,
            role: if op { Role::Operator } else { Role::Citizen },
            push_token: tok,
            last_location: loc.map(|(coordinate, at)| LocationFix { coordinate, at }),
            created_at: t,
        })?;
    }

    #[test]
    fn challenges_and_sessions(p in phone(), d in "[0-9a-f]{64}", t in ts(), n in 0u8..4, c in any::<bool>(), u in uid()) {
        round_trip(&VerificationChallenge {
            id: ChallengeId::generate(), phone: p, code_digest: d.clone(), issued_at: t, expires_at: t, attempts_left: n, consumed: c,
        })?;
        round_trip(&Session { token_digest: d, user_id: u, role: Role::Citizen, issued_at: t, expires_at: t })?;
    }

    #[test]
    fn alerts(area in fence(), short in text(), guide in text(), auth in text(), t in ts(), u in uid(),
              hz in pick(&[Hazard::Wildfire, Hazard::Flood, Hazard::Earthquake, Hazard::Landslide, Hazard::Storm, Hazard::Other]),
              sev in pick(&[Severity::Advisory, Severity::Watch, Severity::Warning, Severity::Emergency]),
              st in pick(AlertStatus::all())) {
        round_trip(&Alert {
            id: AlertId::generate(), hazard: hz, area, severity: sev, short_text: short, guidance_text: guide,
            source: AlertSource { operator_id: u, authority: auth },
            effective_from: t, expires_at: t, status: st, created_at: t,
        })?;
    }

    #[test]
    fn deliveries(u in uid(), t in ts(), n in 0u32..10, d in proptest::option::of(ts()),
                  o in pick(&[DeliveryOutcome::Pending, DeliveryOutcome::Delivered, DeliveryOutcome::Failed, DeliveryOutcome::NoToken]),
                  entry in any::<bool>()) {
        round_trip(&DeliveryRecord {
            alert_id: AlertId::generate(), user_id: u, enqueued_at: t, channel: Channel::Push, attempt_count: n,
            outcome: o, delivered_at: d,
            trigger: if entry { DeliveryTrigger::AreaEntry } else { DeliveryTrigger::Activation },
        })?;
    }

    #[test]
    fn cases(u in uid(), p in coord(), t in ts(), note in proptest::option::of(text()), desc in text(),
             media in proptest::collection::vec((hash(), media_kind()), 0..4),
             ss in pick(SosStatus::all()), rs in pick(ReportStatus::all())) {
        round_trip(&SosRequest { id: SosId::generate(), user_id: u.clone(), location: p, created_at: t, note, status: ss })?;
        round_trip(&IncidentReport {
            id: ReportId::generate(), reporter_id: u, location: p, description: desc,
            media: media.into_iter().map(|(hash, kind)| MediaRef { hash, kind }).collect(),
            created_at: t, status: rs,
        })?;
    }

    #[test]
    fn media_objects(h in hash(), kinds in proptest::collection::btree_set(media_kind(), 1..3),
                     size in any::<u32>(), ups in proptest::collection::btree_set(uid(), 1..4), t in ts()) {
        round_trip(&MediaObject { hash: h, kinds, size: size as u64, uploaders: ups, created_at: t })?;
    }

    #[test]
    fn chat(area in fence(), title in text(), u in uid(), muted in proptest::collection::btree_set(uid(), 0..3),
            seq in 1u64..1_000_000, body in text(), t in ts(), gs in pick(GroupStatus::all()), ms in pick(MessageState::all())) {
        let gid = GroupId::generate();
        round_trip(&ChatGroup {
            id: gid.clone(), alert_id: AlertId::generate(), title, area, status: gs, created_by: u.clone(),
            muted_users: muted, next_seq: seq + 1, created_at: t,
        })?;
        round_trip(&Membership { group_id: gid.clone(), user_id: u.clone(), joined_at: t })?;
        round_trip(&ChatMessage { id: MessageId::for_seq(&gid, seq), group_id: gid, seq, author_id: u, body, created_at: t, state: ms })?;
    }

    #[test]
    fn map_content(area in fence(), p in coord(), name in text(), t in ts(), linked in any::<bool>(),
                   ws in proptest::collection::vec(coord(), 2..8),
                   cat in pick(&[ZoneCategory::Affected, ZoneCategory::Safe, ZoneCategory::EvacuationPointArea]),
                   kind in pick(&[ResourceKind::Shelter, ResourceKind::Hospital, ResourceKind::Police, ResourceKind::ProtectedSpace, ResourceKind::EvacuationPoint])) {
        round_trip(&Zone { id: ZoneId::generate(), alert_id: linked.then(AlertId::generate), category: cat, area, created_at: t })?;
        let r = ResourcePoint { id: ResourceId::generate(), kind, name, location: p, created_at: t };
        round_trip(&r)?;
        round_trip(&EvacuationRoute { id: RouteId::generate(), alert_id: AlertId::generate(), waypoints: ws, destination: r.id, created_at: t })?;
    }
}

#[test]
fn every_kind_is_covered() {
    // Keeps this file honest when a kind is added.
    use e112_core::store::Kind;
    let covered: BTreeSet<Kind> = [
        UserAccount::KIND, VerificationChallenge::KIND, Session::KIND, Alert::KIND, DeliveryRecord::KIND,
        SosRequest::KIND, IncidentReport::KIND, MediaObject::KIND, ChatGroup::KIND, Membership::KIND,
        ChatMessage::KIND, Zone::KIND, ResourcePoint::KIND, EvacuationRoute::KIND,
    ]
    .into();
    assert_eq!(covered.len(), 14);
}
