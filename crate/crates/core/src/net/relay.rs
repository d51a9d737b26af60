//! Authoritative relay for a single session (star topology).

use std::collections::{BTreeMap, BTreeSet, HashMap};

use thiserror::Error;

use super::codec::{PacketKind, UpdatePacket, UpdateRecord};
use crate::geom::Motor;

/// Sender id the relay uses for packets it originates.
pub const RELAY_ID: u32 = 0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RelayError {
    #[error("object {0} already exists")]
    DuplicateObject(u32),
    #[error("client {0} is not in the session")]
    UnknownClient(u32),
    #[error("motor for object {0} is not on the motor manifold")]
    InvalidMotor(u32),
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RelayCounters {
    pub accepted: u64,
    pub stale_dropped: u64,
    pub non_owner_rejected: u64,
    pub unknown_sender: u64,
    pub foreign_session: u64,
    pub invalid_motor: u64,
    pub fanned_out: u64,
}

/// Authoritative replica of a multi-user scene.
#[derive(Clone, Debug)]
pub struct SessionState {
    pub session_id: u32,
    clients: BTreeSet<u32>,
    owners: BTreeMap<u32, u32>,
    motors: BTreeMap<u32, Motor>,
    last_tick: HashMap<(u32, u32), u32>,
    tick: u32,
    pub counters: RelayCounters,
}

impl SessionState {
    pub fn new(session_id: u32) -> Self {
        SessionState {
            session_id,
            clients: BTreeSet::new(),
            owners: BTreeMap::new(),
            motors: BTreeMap::new(),
            last_tick: HashMap::new(),
            tick: 0,
            counters: RelayCounters::default(),
        }
    }

    pub fn join(&mut self, client: u32) {
        self.clients.insert(client);
    }

    /// Remove a client together with every object it owns.
    pub fn leave(&mut self, client: u32) {
        self.clients.remove(&client);
        let owned: Vec<u32> = self.owners.iter().filter(|(_, &o)| o == client).map(|(&id, _)| id).collect();
        for id in owned {
            self.owners.remove(&id);
            self.motors.remove(&id);
        }
        self.last_tick.retain(|&(c, _), _| c != client);
    }

    pub fn spawn(&mut self, object: u32, owner: u32, motor: Motor) -> Result<(), RelayError> {
        if !self.clients.contains(&owner) {
            return Err(RelayError::UnknownClient(owner));
        }
        if self.owners.contains_key(&object) {
            return Err(RelayError::DuplicateObject(object));
        }
        if !motor.is_valid() {
            return Err(RelayError::InvalidMotor(object));
        }
        self.owners.insert(object, owner);
        self.motors.insert(object, motor);
        Ok(())
    }

    pub fn clients(&self) -> impl Iterator<Item = u32> + '_ {
        self.clients.iter().copied()
    }

    pub fn client_count(&self) -> usize {
        self.clients.len()
    }

    pub fn owner_of(&self, object: u32) -> Option<u32> {
        self.owners.get(&object).copied()
    }

    pub fn motor(&self, object: u32) -> Option<&Motor> {
        self.motors.get(&object)
    }

    pub fn motors(&self) -> &BTreeMap<u32, Motor> {
        &self.motors
    }

    pub fn tick(&self) -> u32 {
        self.tick
    }

    /// Process one batch of incoming packets and produce per-client outgoing
    /// packets. Accepted transform records are batched into a single update
    /// packet per recipient (sender id [`RELAY_ID`], tick = relay tick);
    /// event packets are forwarded verbatim.
    pub fn relay_tick(&mut self, incoming: Vec<UpdatePacket>) -> BTreeMap<u32, Vec<UpdatePacket>> {
        self.tick = self.tick.wrapping_add(1);
        // (sender, record) in acceptance order
        let mut accepted: Vec<(u32, UpdateRecord)> = Vec::new();
        let mut forwarded: Vec<UpdatePacket> = Vec::new();

        for packet in incoming {
            if packet.session_id != self.session_id {
                self.counters.foreign_session += 1;
                continue;
            }
            match packet.kind {
                PacketKind::Join => {
                    self.join(packet.sender_id);
                    continue;
                }
                PacketKind::Leave => {
                    self.leave(packet.sender_id);
                    continue;
                }
                _ => {}
            }
            if !self.clients.contains(&packet.sender_id) {
                self.counters.unknown_sender += 1;
                continue;
            }
            if packet.kind == PacketKind::Event {
                forwarded.push(packet);
                continue;
            }
            for record in packet.records {
                if self.accept(packet.sender_id, packet.tick, &record) {
                    accepted.push((packet.sender_id, record));
                }
            }
        }

        let mut out: BTreeMap<u32, Vec<UpdatePacket>> = BTreeMap::new();
        for &client in &self.clients {
            let records: Vec<UpdateRecord> = accepted.iter().filter(|(sender, _)| *sender != client).map(|(_, r)| *r).collect();
            let mut packets = Vec::new();
            if !records.is_empty() {
                self.counters.fanned_out += records.len() as u64;
                packets.push(UpdatePacket::update(self.session_id, RELAY_ID, self.tick, records));
            }
            packets.extend(forwarded.iter().filter(|p| p.sender_id != client).cloned());
            if !packets.is_empty() {
                out.insert(client, packets);
            }
        }
        out
    }

    fn accept(&mut self, sender: u32, tick: u32, record: &UpdateRecord) -> bool {
        let object = record.object_id;
        match self.owners.get(&object) {
            Some(&owner) if owner != sender => {
                self.counters.non_owner_rejected += 1;
                return false;
            }
            Some(_) => {}
            None => {
                // first writer claims an unowned object
                self.owners.insert(object, sender);
            }
        }
        if let Some(&last) = self.last_tick.get(&(sender, object)) {
            if tick <= last {
                self.counters.stale_dropped += 1;
                return false;
            }
        }
        let motor = match record.motor.renormalized() {
            Ok(m) if m.max_coefficient_diff(&record.motor) < 1e-3 => m,
            _ => {
                self.counters.invalid_motor += 1;
                if !self.motors.contains_key(&object) {
                    self.owners.remove(&object);
                }
                return false;
            }
        };
        self.last_tick.insert((sender, object), tick);
        self.motors.insert(object, motor);
        self.counters.accepted += 1;
        true
    }
}

/// Value-style wrapper around [`SessionState::relay_tick`].
pub fn relay_tick(mut state: SessionState, incoming: Vec<UpdatePacket>) -> (SessionState, BTreeMap<u32, Vec<UpdatePacket>>) {
    let out = state.relay_tick(incoming);
    (state, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec3;

    fn rec(id: u32, x: f64) -> UpdateRecord {
        UpdateRecord { object_id: id, motor: Motor::from_translation(Vec3::new(x, 0.0, 0.0)) }
    }

    fn session(clients: &[u32]) -> SessionState {
        let mut s = SessionState::new(9);
        for &c in clients {
            s.join(c);
        }
        s
    }

    #[test]
    fn single_client_updates_state_without_outgoing() {
        let mut s = session(&[1]);
        let out = s.relay_tick(vec![UpdatePacket::update(9, 1, 1, vec![rec(5, 1.0)])]);
        assert!(out.is_empty());
        assert_eq!(s.motor(5).unwrap().translation(), Vec3::new(1.0, 0.0, 0.0));
    }

    #[test]
    fn fan_out_to_everyone_but_sender() {
        let mut s = session(&[1, 2, 3]);
        s.spawn(10, 1, Motor::IDENTITY).unwrap();
        let r = rec(10, 2.0);
        let out = s.relay_tick(vec![UpdatePacket::update(9, 1, 4, vec![r])]);
        // enumerate expected recipients independently
        let expected: Vec<u32> = [1u32, 2, 3].into_iter().filter(|&c| c != 1).collect();
        assert_eq!(out.keys().copied().collect::<Vec<_>>(), expected);
        for c in expected {
            assert_eq!(out[&c].len(), 1);
            assert_eq!(out[&c][0].records, vec![r]);
        }
    }

    #[test]
    fn stale_ticks_are_dropped() {
        let mut s = session(&[1, 2]);
        s.relay_tick(vec![UpdatePacket::update(9, 1, 9, vec![rec(5, 1.0)])]);
        let out = s.relay_tick(vec![UpdatePacket::update(9, 1, 5, vec![rec(5, 7.0)])]);
        assert!(out.is_empty());
        assert_eq!(s.motor(5).unwrap().translation().x, 1.0);
        assert_eq!(s.counters.stale_dropped, 1);
    }

    #[test]
    fn non_owner_writes_rejected() {
        let mut s = session(&[1, 2]);
        s.spawn(5, 1, Motor::IDENTITY).unwrap();
        s.relay_tick(vec![UpdatePacket::update(9, 2, 1, vec![rec(5, 3.0)])]);
        assert_eq!(*s.motor(5).unwrap(), Motor::IDENTITY);
        assert_eq!(s.counters.non_owner_rejected, 1);
    }

    #[test]
    fn unknown_sender_counted_not_fatal() {
        let mut s = session(&[1]);
        let out = s.relay_tick(vec![UpdatePacket::update(9, 44, 1, vec![rec(5, 3.0)])]);
        assert!(out.is_empty());
        assert_eq!(s.counters.unknown_sender, 1);
        assert!(s.motor(5).is_none());
    }

    #[test]
    fn join_and_leave_packets() {
        let mut s = session(&[]);
        s.relay_tick(vec![UpdatePacket::control(PacketKind::Join, 9, 1, 0), UpdatePacket::control(PacketKind::Join, 9, 2, 0)]);
        assert_eq!(s.client_count(), 2);
        s.relay_tick(vec![UpdatePacket::update(9, 2, 1, vec![rec(8, 1.0)])]);
        assert_eq!(s.owner_of(8), Some(2));
        s.relay_tick(vec![UpdatePacket::control(PacketKind::Leave, 9, 2, 2)]);
        assert_eq!(s.client_count(), 1);
        assert_eq!(s.owner_of(8), None);
    }

    #[test]
    fn fan_out_conservation() {
        let clients: Vec<u32> = (1..=6).collect();
        let mut s = session(&clients);
        let incoming: Vec<UpdatePacket> = clients.iter().map(|&c| UpdatePacket::update(9, c, 1, vec![rec(100 + c, c as f64), rec(200 + c, 0.5)])).collect();
        let out = s.relay_tick(incoming);
        let total: usize = out.values().flatten().map(|p| p.records.len()).sum();
        assert_eq!(total as u64, s.counters.accepted * (clients.len() as u64 - 1));
    }
}
