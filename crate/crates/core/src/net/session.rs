//! In-process multi-client session over emulated links.
//!
//! Every client owns one moving object and publishes it at a fixed rate to
//! the relay over its own uplink; the relay fans accepted records back out
//! over per-client downlinks; each client feeds what it receives into an
//! interpolation buffer. After the publishers stop, every client's sampled
//! scene is compared with the relay's authoritative scene.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};
use std::time::Instant;

use serde::Serialize;

use super::codec::{UpdatePacket, UpdateRecord};
use super::emulator::{Link, NetProfile};
use super::interp::{InterpBuffer, DEFAULT_RENDER_DELAY_MS, DEFAULT_SNAP_THRESHOLD_MS};
use super::relay::SessionState;
use crate::geom::{Motor, Pose, Quat, Vec3};

/// Object ids are `OBJECT_BASE + client id`.
pub const OBJECT_BASE: u32 = 1000;

#[derive(Clone, Debug)]
pub struct SessionSimConfig {
    pub clients: u32,
    pub updates_per_s: f64,
    pub duration_s: f64,
    pub relay_tick_ms: f64,
    /// Publishes of the final (unchanged) pose after an object stops moving.
    pub settle_repeats: u32,
    pub render_delay_ms: f64,
    pub snap_threshold_ms: f64,
    pub profile: NetProfile,
    /// Tolerance per motor coefficient for the convergence check.
    pub tolerance: f64,
}

impl Default for SessionSimConfig {
    fn default() -> Self {
        SessionSimConfig {
            clients: 8,
            updates_per_s: 10.0,
            duration_s: 5.0,
            relay_tick_ms: 20.0,
            settle_repeats: 10,
            render_delay_ms: DEFAULT_RENDER_DELAY_MS,
            snap_threshold_ms: DEFAULT_SNAP_THRESHOLD_MS,
            profile: NetProfile::ideal(20.0, 1),
            tolerance: 1e-5,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SessionSimReport {
    pub clients: u32,
    pub simulated_s: f64,
    pub records_published: u64,
    pub records_accepted: u64,
    pub records_fanned_out: u64,
    pub packets_sent: u64,
    pub packets_dropped: u64,
    pub bytes_sent: u64,
    pub max_relay_backlog: usize,
    pub max_link_queue: usize,
    pub max_interp_entries: usize,
    pub converged: bool,
    pub max_coefficient_error: f64,
    /// Time from the last publish until every client matched the relay.
    pub convergence_lag_ms: Option<f64>,
    pub wall_ms: f64,
}

struct Pending {
    arrival: f64,
    seq: u64,
    bytes: Vec<u8>,
}

impl PartialEq for Pending {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Pending {}
impl PartialOrd for Pending {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Pending {
    // reversed: BinaryHeap pops the earliest arrival first
    fn cmp(&self, o: &Self) -> Ordering {
        o.arrival.total_cmp(&self.arrival).then(o.seq.cmp(&self.seq))
    }
}

struct Client {
    id: u32,
    uplink: Link,
    downlink: Link,
    inbound: VecDeque<(f64, Vec<u8>)>,
    interp: InterpBuffer,
    next_publish_ms: f64,
    publishes_after_stop: u32,
    tick: u32,
    last_sent: Option<Motor>,
}

/// Scripted trajectory of a client's object: a slow orbit with a bob.
pub fn scripted_motor(client: u32, t_ms: f64) -> Motor {
    let phase = client as f64 * 0.618_033_988_7 * std::f64::consts::TAU;
    let w = 0.5 + (client % 7) as f64 * 0.05;
    let a = w * t_ms / 1000.0 + phase;
    let radius = 1.0 + (client % 11) as f64 * 0.2;
    let pos = Vec3::new(radius * a.cos(), 1.0 + 0.1 * (2.0 * a).sin(), radius * a.sin());
    let rot = Quat::from_axis_angle(Vec3::new(0.0, 1.0, 0.2), a);
    Motor::from_pose(&Pose::new(pos, rot)).expect("unit rotation")
}

pub fn run_session(cfg: &SessionSimConfig) -> SessionSimReport {
    let started = Instant::now();
    let session_id = (cfg.profile.seed as u32) ^ 0x5e55;
    let period_ms = 1000.0 / cfg.updates_per_s;
    let stop_ms = cfg.duration_s * 1000.0;

    let mut relay = SessionState::new(session_id);
    let mut clients: Vec<Client> = (1..=cfg.clients)
        .map(|id| {
            relay.join(id);
            relay.spawn(OBJECT_BASE + id, id, scripted_motor(id, 0.0).to_f32_precision()).expect("fresh object");
            Client {
                id,
                uplink: Link::new(cfg.profile.clone(), 2 * id as u64),
                downlink: Link::new(cfg.profile.clone(), 2 * id as u64 + 1),
                inbound: VecDeque::new(),
                interp: InterpBuffer::new(cfg.render_delay_ms, cfg.snap_threshold_ms),
                next_publish_ms: period_ms * (id as f64 - 1.0) / cfg.clients as f64,
                publishes_after_stop: 0,
                tick: 0,
                last_sent: None,
            }
        })
        .collect();
    // every client starts with the relay's initial scene
    let initial: Vec<(u32, Motor)> = relay.motors().iter().map(|(&k, &v)| (k, v)).collect();
    for c in &mut clients {
        for &(id, m) in &initial {
            c.interp.push(id, 0.0, m);
        }
    }

    let mut inbox: BinaryHeap<Pending> = BinaryHeap::new();
    let mut seq = 0u64;
    let mut published = 0u64;
    let mut max_backlog = 0usize;
    let mut last_publish_ms = 0.0f64;
    let mut first_converged: Option<f64> = None;
    let mut max_err = f64::INFINITY;

    let worst_latency = cfg.profile.latency_ms + cfg.profile.jitter_ms;
    let settle_ms = cfg.settle_repeats as f64 * period_ms;
    let end_ms = stop_ms + settle_ms + 2.0 * worst_latency + cfg.render_delay_ms + 4.0 * cfg.relay_tick_ms + 500.0;

    let mut k: u64 = 1;
    loop {
        let now = k as f64 * cfg.relay_tick_ms;
        if now > end_ms {
            break;
        }

        // publish
        for c in &mut clients {
            while c.next_publish_ms <= now {
                let t_pub = c.next_publish_ms;
                c.next_publish_ms += period_ms;
                let motor = scripted_motor(c.id, t_pub.min(stop_ms));
                let moving = t_pub <= stop_ms;
                let changed = c.last_sent.is_none_or(|prev| prev.differs_from(&motor, super::PUBLISH_TRANSLATION_M, super::PUBLISH_ROTATION_DEG.to_radians()));
                let send = if moving {
                    changed
                } else if c.publishes_after_stop < cfg.settle_repeats {
                    c.publishes_after_stop += 1;
                    true
                } else {
                    false
                };
                if !send {
                    continue;
                }
                c.tick += 1;
                c.last_sent = Some(motor);
                let packet = UpdatePacket::update(session_id, c.id, c.tick, vec![UpdateRecord { object_id: OBJECT_BASE + c.id, motor }]);
                let bytes = packet.encode().expect("single record");
                published += 1;
                last_publish_ms = last_publish_ms.max(t_pub);
                if let Some(arrival) = c.uplink.transmit(t_pub, bytes.len()) {
                    seq += 1;
                    inbox.push(Pending { arrival, seq, bytes });
                }
            }
        }

        // relay
        max_backlog = max_backlog.max(inbox.len());
        let mut incoming = Vec::new();
        while inbox.peek().is_some_and(|p| p.arrival <= now) {
            let p = inbox.pop().expect("peeked");
            incoming.push(UpdatePacket::decode(&p.bytes).expect("relay-bound packet"));
        }
        let outgoing = relay.relay_tick(incoming);
        for (client, packets) in outgoing {
            let c = &mut clients[(client - 1) as usize];
            for p in packets {
                let bytes = p.encode().expect("bounded fan-out");
                if let Some(arrival) = c.downlink.transmit(now, bytes.len()) {
                    c.inbound.push_back((arrival, bytes));
                }
            }
        }

        // clients
        for c in &mut clients {
            while c.inbound.front().is_some_and(|(a, _)| *a <= now) {
                let (_, bytes) = c.inbound.pop_front().expect("peeked");
                let p = UpdatePacket::decode(&bytes).expect("relay packet");
                let stamp = p.tick as f64 * cfg.relay_tick_ms;
                for r in p.records {
                    c.interp.push(r.object_id, stamp, r.motor);
                }
            }
            c.interp.prune(now);
        }

        if now > stop_ms + settle_ms {
            let err = scene_error(&clients, &relay, now);
            if err <= cfg.tolerance {
                first_converged.get_or_insert(now);
            } else {
                first_converged = None;
            }
            max_err = err;
        }
        k += 1;
    }

    let max_link_queue = clients.iter().map(|c| c.uplink.max_queue.max(c.downlink.max_queue)).max().unwrap_or(0);
    let max_interp_entries = clients.iter().flat_map(|c| c.interp.objects().map(|o| c.interp.len(o)).collect::<Vec<_>>()).max().unwrap_or(0);
    SessionSimReport {
        clients: cfg.clients,
        simulated_s: end_ms / 1000.0,
        records_published: published,
        records_accepted: relay.counters.accepted,
        records_fanned_out: relay.counters.fanned_out,
        packets_sent: clients.iter().map(|c| c.uplink.sent + c.downlink.sent).sum(),
        packets_dropped: clients.iter().map(|c| c.uplink.dropped + c.downlink.dropped).sum(),
        bytes_sent: clients.iter().map(|c| c.uplink.bytes + c.downlink.bytes).sum(),
        max_relay_backlog: max_backlog,
        max_link_queue,
        max_interp_entries,
        converged: max_err <= cfg.tolerance,
        max_coefficient_error: max_err,
        convergence_lag_ms: first_converged.map(|t| t - last_publish_ms),
        wall_ms: started.elapsed().as_secs_f64() * 1000.0,
    }
}

/// Worst coefficient error between any client's view and the relay.
fn scene_error(clients: &[Client], relay: &SessionState, now: f64) -> f64 {
    let mut worst = 0.0f64;
    for c in clients {
        for (&object, authoritative) in relay.motors() {
            let seen = if object == OBJECT_BASE + c.id { c.last_sent.map(|m| m.to_f32_precision()) } else { c.interp.sample(object, now) };
            let err = seen.map_or(f64::INFINITY, |m| m.max_coefficient_diff_up_to_sign(authoritative));
            worst = worst.max(err);
        }
    }
    worst
}
