//! Seeded generator for the flood drill scenario around Patras.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::oracle::{Area, LatLon};
use crate::scenario::{Check, Event, ModerationOp, Role, Scenario, TimedEvent, TracePoint, UserSpec};

const CENTER: LatLon = LatLon { lat: 38.2466, lon: 21.7346 };
/// Points are kept at least this far (degrees) from the outline so that
/// nobody sits on a boundary the oracle and service might round differently.
const MARGIN_DEG: f64 = 0.0005;

pub struct FloodParams {
    pub inside: usize,
    pub outside: usize,
    /// Citizens outside the area who walk into it after activation.
    pub movers: usize,
}

impl Default for FloodParams {
    fn default() -> Self {
        FloodParams { inside: 60, outside: 40, movers: 3 }
    }
}

/// An irregular ring of 8 to 11 vertices around the city center.
fn flood_polygon(rng: &mut ChaCha8Rng) -> Area {
    let n = rng.random_range(8..12);
    let ring = (0..n)
        .map(|i| {
            let angle = std::f64::consts::TAU * (i as f64 + rng.random_range(-0.3..0.3)) / n as f64;
            let r = rng.random_range(0.010..0.018);
            LatLon::new(CENTER.lat + r * angle.sin(), CENTER.lon + r * angle.cos() * 1.27)
        })
        .collect();
    Area::Polygon { ring }
}

fn sample(rng: &mut ChaCha8Rng, area: &Area, inside: bool) -> LatLon {
    loop {
        let p = LatLon::new(CENTER.lat + rng.random_range(-0.03..0.03), CENTER.lon + rng.random_range(-0.04..0.04));
        if area.contains(p) == inside && area.clearance(p) > MARGIN_DEG {
            return p;
        }
    }
}

fn at(t: u64, event: Event) -> TimedEvent {
    TimedEvent { t, event }
}

fn expect(t: u64, check: Check) -> TimedEvent {
    at(t, Event::Expect { name: None, check })
}

pub fn flood(seed: u64) -> Scenario {
    flood_with(seed, &FloodParams::default())
}

pub fn flood_with(seed: u64, params: &FloodParams) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let area = flood_polygon(&mut rng);

    let mut sides: Vec<bool> = std::iter::repeat_n(true, params.inside).chain(std::iter::repeat_n(false, params.outside)).collect();
    sides.shuffle(&mut rng);

    let mut population = vec![
        UserSpec { id: "op1".into(), role: Role::Operator, display_name: Some("Duty officer".into()), push: false, trace: vec![] },
        UserSpec { id: "op2".into(), role: Role::Operator, display_name: Some("Shift lead".into()), push: false, trace: vec![] },
    ];
    let mut insiders = Vec::new();
    let mut outsiders = Vec::new();
    for (i, inside) in sides.iter().enumerate() {
        let id = format!("c{i:03}");
        let start = sample(&mut rng, &area, *inside);
        let mut trace = vec![TracePoint { t: 0, lat: start.lat, lon: start.lon }];
        // Some people wander a little without crossing the outline.
        if rng.random_bool(0.2) {
            let p = sample(&mut rng, &area, *inside);
            trace.push(TracePoint { t: 40, lat: p.lat, lon: p.lon });
        }
        if *inside {
            insiders.push((id.clone(), start));
        } else {
            outsiders.push((id.clone(), start));
        }
        population.push(UserSpec { id, role: Role::Citizen, display_name: None, push: true, trace });
    }

    let movers: Vec<String> = outsiders.iter().take(params.movers).map(|(id, _)| id.clone()).collect();
    for m in &movers {
        let p = sample(&mut rng, &area, true);
        let u = population.iter_mut().find(|u| &u.id == m).expect("mover exists");
        u.trace.retain(|tp| tp.t == 0);
        u.trace.push(TracePoint { t: 60, lat: p.lat, lon: p.lon });
    }

    let who = |i: usize| insiders[i % insiders.len()].0.clone();
    let sos_user = who(0);
    let sos_at = insiders[0].1;
    let group_members: Vec<String> = (0..5.min(insiders.len())).map(who).collect();
    let muted = who(2);
    let far = outsiders.iter().rev().find(|(id, _)| !movers.contains(id)).map(|(_, p)| *p).unwrap_or(LatLon::new(CENTER.lat + 0.5, CENTER.lon));

    let mut timeline = vec![
        at(0, Event::Register { users: None, parallel: Some(8) }),
        at(
            10,
            Event::IssueAlert {
                id: "flood".into(),
                by: Some("op1".into()),
                hazard: "flood".into(),
                severity: "emergency".into(),
                short_text: "Flash flood in central Patras. Move to upper floors now.".into(),
                guidance_text: "Avoid underpasses and riverbanks. Do not drive through water. Call 112 if trapped.".into(),
                authority: "Civil Protection".into(),
                area: area.clone(),
                duration_s: 6 * 3600,
            },
        ),
        at(11, Event::Activate { alert: "flood".into(), by: Some("op1".into()) }),
        expect(12, Check::DeliveriesMatchOracle { alert: "flood".into() }),
        at(20, Event::SubmitSos { id: "sos1".into(), user: sos_user.clone(), at: Some(sos_at), note: Some("Water rising at the door".into()) }),
        expect(21, Check::Receipt { case: "sos1".into() }),
        at(
            22,
            Event::SubmitReport { id: "rep1".into(), user: who(1), at: None, description: "Road blocked by debris".into() },
        ),
        expect(22, Check::Receipt { case: "rep1".into() }),
        at(23, Event::SetStatus { case: "sos1".into(), status: "acknowledged".into(), by: Some("op2".into()) }),
        expect(24, Check::CaseStatusEvent { case: "sos1".into(), status: "acknowledged".into() }),
        expect(25, Check::OpenSosCount { equals: 1 }),
        at(30, Event::OpenGroup { id: "street".into(), alert: "flood".into(), title: "Neighbourhood help".into(), area: None, by: Some("op1".into()) }),
        at(31, Event::Join { group: "street".into(), users: group_members.clone() }),
        at(
            32,
            Event::Burst {
                parallel: 3,
                events: vec![
                    Event::PostMessage { id: Some("m1".into()), group: "street".into(), user: group_members[0].clone(), body: "Anyone near the market?".into(), expect_error: None },
                    Event::PostMessage { id: Some("m2".into()), group: "street".into(), user: group_members[1].clone(), body: "Sell your car now, best price".into(), expect_error: None },
                    Event::PostMessage { id: Some("m3".into()), group: "street".into(), user: muted.clone(), body: "Spam spam spam".into(), expect_error: None },
                ],
            },
        ),
        at(35, Event::Moderate { group: "street".into(), by: Some("op2".into()), op: ModerationOp::RemoveMessage { message: "m2".into() } }),
        at(36, Event::Moderate { group: "street".into(), by: Some("op2".into()), op: ModerationOp::MuteUser { user: muted.clone() } }),
        at(37, Event::PostMessage { id: None, group: "street".into(), user: muted, body: "more spam".into(), expect_error: Some("muted".into()) }),
        expect(38, Check::MessageHidden { message: "m2".into(), viewer: group_members[0].clone() }),
        expect(45, Check::ActiveAlertsAt { lat: sos_at.lat, lon: sos_at.lon, alerts: vec!["flood".into()] }),
        expect(45, Check::ActiveAlertsAt { lat: far.lat, lon: far.lon, alerts: vec![] }),
    ];
    for m in &movers {
        timeline.push(expect(61, Check::Delivered { alert: "flood".into(), user: m.clone() }));
    }
    if let Some((stay, _)) = outsiders.iter().find(|(id, _)| !movers.contains(id)) {
        timeline.push(expect(61, Check::NotDelivered { alert: "flood".into(), user: stay.clone() }));
    }
    timeline.extend([
        at(70, Event::SetStatus { case: "sos1".into(), status: "responding".into(), by: Some("op2".into()) }),
        at(80, Event::SetStatus { case: "sos1".into(), status: "closed".into(), by: Some("op2".into()) }),
        expect(81, Check::CaseStatusEvent { case: "sos1".into(), status: "closed".into() }),
        expect(82, Check::OpenSosCount { equals: 0 }),
        expect(90, Check::DeliveriesMatchOracle { alert: "flood".into() }),
    ]);

    Scenario { name: format!("flood-patras-{seed}"), seed, population, timeline }
}
