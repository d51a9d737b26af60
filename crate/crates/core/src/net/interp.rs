//! Per-object interpolation buffers sampled at a fixed render delay.

use std::collections::{BTreeMap, VecDeque};

use crate::geom::Motor;

pub const DEFAULT_RENDER_DELAY_MS: f64 = 100.0;
pub const DEFAULT_SNAP_THRESHOLD_MS: f64 = 250.0;
pub const MAX_ENTRIES: usize = 64;

#[derive(Clone, Debug)]
pub struct InterpBuffer {
    pub render_delay_ms: f64,
    pub snap_threshold_ms: f64,
    queues: BTreeMap<u32, VecDeque<(f64, Motor)>>,
}

impl Default for InterpBuffer {
    fn default() -> Self {
        InterpBuffer::new(DEFAULT_RENDER_DELAY_MS, DEFAULT_SNAP_THRESHOLD_MS)
    }
}

impl InterpBuffer {
    pub fn new(render_delay_ms: f64, snap_threshold_ms: f64) -> Self {
        InterpBuffer { render_delay_ms, snap_threshold_ms, queues: BTreeMap::new() }
    }

    /// Insert keeping the queue sorted by timestamp; a duplicate timestamp
    /// replaces the existing entry. Drops the oldest entry beyond [`MAX_ENTRIES`].
    pub fn push(&mut self, object: u32, t_ms: f64, motor: Motor) {
        let q = self.queues.entry(object).or_default();
        match q.back() {
            Some(&(last, _)) if t_ms > last => q.push_back((t_ms, motor)),
            None => q.push_back((t_ms, motor)),
            _ => {
                let idx = q.partition_point(|&(t, _)| t < t_ms);
                if idx < q.len() && q[idx].0 == t_ms {
                    q[idx].1 = motor;
                } else {
                    q.insert(idx, (t_ms, motor));
                }
            }
        }
        while q.len() > MAX_ENTRIES {
            q.pop_front();
        }
    }

    pub fn len(&self, object: u32) -> usize {
        self.queues.get(&object).map_or(0, VecDeque::len)
    }

    pub fn is_empty(&self) -> bool {
        self.queues.values().all(VecDeque::is_empty)
    }

    pub fn objects(&self) -> impl Iterator<Item = u32> + '_ {
        self.queues.keys().copied()
    }

    /// Drop entries that can no longer bracket any sample at or after `now_ms`.
    pub fn prune(&mut self, now_ms: f64) {
        let target = now_ms - self.render_delay_ms;
        for q in self.queues.values_mut() {
            while q.len() >= 2 && q[1].0 <= target {
                q.pop_front();
            }
        }
    }

    /// Sample one object at `now_ms - render_delay`. `None` means no data.
    pub fn sample(&self, object: u32, now_ms: f64) -> Option<Motor> {
        let q = self.queues.get(&object)?;
        let (first, last) = (q.front()?, q.back()?);
        let target = now_ms - self.render_delay_ms;
        if target <= first.0 {
            return Some(first.1);
        }
        if target >= last.0 {
            return Some(last.1);
        }
        let idx = q.partition_point(|&(t, _)| t <= target);
        let (t0, m0) = q[idx - 1];
        let (t1, m1) = q[idx];
        if t1 - t0 > self.snap_threshold_ms {
            return Some(m1);
        }
        let u = (target - t0) / (t1 - t0);
        // a degenerate blend can only come from corrupt input; hold the older sample
        Some(m0.interpolate(&m1, u).unwrap_or(m0))
    }

    pub fn sample_all(&self, now_ms: f64) -> BTreeMap<u32, Motor> {
        self.queues.keys().filter_map(|&id| self.sample(id, now_ms).map(|m| (id, m))).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec3;

    fn at(x: f64) -> Motor {
        Motor::from_translation(Vec3::new(x, 0.0, 0.0))
    }

    #[test]
    fn empty_is_no_data() {
        assert!(InterpBuffer::default().sample(1, 0.0).is_none());
    }

    #[test]
    fn single_entry_holds() {
        let mut b = InterpBuffer::default();
        b.push(1, 50.0, at(3.0));
        for now in [-1000.0, 0.0, 150.0, 1e6] {
            assert_eq!(b.sample(1, now), Some(at(3.0)));
        }
    }

    #[test]
    fn midway_sample_is_pose_lerp() {
        let mut b = InterpBuffer::default();
        b.push(1, 0.0, at(0.0));
        b.push(1, 100.0, at(2.0));
        let m = b.sample(1, 50.0 + b.render_delay_ms).unwrap();
        let expected = Vec3::ZERO.lerp(Vec3::new(2.0, 0.0, 0.0), 0.5);
        assert!(m.translation().distance(expected) < 1e-12);
    }

    #[test]
    fn long_gap_snaps() {
        let mut b = InterpBuffer::default();
        b.push(1, 0.0, at(0.0));
        b.push(1, 300.0, at(5.0));
        for k in 1..30 {
            let now = k as f64 * 10.0 + b.render_delay_ms;
            let x = b.sample(1, now).unwrap().translation().x;
            assert!(x == 0.0 || x == 5.0, "intermediate position {x} at {now}");
        }
    }

    #[test]
    fn out_of_order_insert_stays_sorted_and_bounded() {
        let mut b = InterpBuffer::default();
        b.push(1, 20.0, at(2.0));
        b.push(1, 10.0, at(1.0));
        b.push(1, 30.0, at(3.0));
        let m = b.sample(1, 15.0 + b.render_delay_ms).unwrap();
        assert!((m.translation().x - 1.5).abs() < 1e-12);
        for i in 0..200 {
            b.push(1, 100.0 + i as f64, at(0.0));
        }
        assert_eq!(b.len(1), MAX_ENTRIES);
    }

    #[test]
    fn prune_keeps_bracketing_entry() {
        let mut b = InterpBuffer::default();
        for i in 0..10 {
            b.push(1, i as f64 * 10.0, at(i as f64));
        }
        let now = 55.0 + b.render_delay_ms;
        let before = b.sample(1, now);
        b.prune(now);
        assert_eq!(b.sample(1, now), before);
        assert!(b.len(1) < 10);
    }
}
