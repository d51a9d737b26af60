//! Deterministic link emulation: loss, latency, uniform jitter and a
//! token-bucket bandwidth limit, with per-link FIFO delivery.

use std::collections::VecDeque;
use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::stream;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProfileError {
    #[error("network profile field {0} must be non-negative")]
    Negative(&'static str),
    #[error("loss probability must be in [0, 1), got {0}")]
    Loss(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetProfile {
    pub latency_ms: f64,
    /// Half-width of the uniform jitter distribution.
    pub jitter_ms: f64,
    pub loss_prob: f64,
    /// `f64::INFINITY` disables the bandwidth limit.
    pub bandwidth_bytes_per_s: f64,
    /// Token-bucket depth; 0 means packets are paced strictly at the link rate.
    #[serde(default)]
    pub burst_bytes: f64,
    pub seed: u64,
}

impl Default for NetProfile {
    fn default() -> Self {
        NetProfile::ideal(0.0, 0)
    }
}

impl NetProfile {
    /// Lossless, jitter-free, unlimited bandwidth.
    pub fn ideal(latency_ms: f64, seed: u64) -> Self {
        NetProfile { latency_ms, jitter_ms: 0.0, loss_prob: 0.0, bandwidth_bytes_per_s: f64::INFINITY, burst_bytes: 0.0, seed }
    }

    pub fn validate(&self) -> Result<(), ProfileError> {
        for (name, v) in [
            ("latency_ms", self.latency_ms),
            ("jitter_ms", self.jitter_ms),
            ("bandwidth_bytes_per_s", self.bandwidth_bytes_per_s),
            ("burst_bytes", self.burst_bytes),
        ] {
            if !(v >= 0.0) {
                return Err(ProfileError::Negative(name));
            }
        }
        if !(0.0..1.0).contains(&self.loss_prob) {
            return Err(ProfileError::Loss(self.loss_prob));
        }
        Ok(())
    }
}

/// One direction of one link. Owns its random stream.
#[derive(Clone, Debug)]
pub struct Link {
    profile: NetProfile,
    rng: ChaCha8Rng,
    tokens: f64,
    bucket_time_ms: f64,
    last_arrival_ms: f64,
    in_flight: VecDeque<f64>,
    pub sent: u64,
    pub dropped: u64,
    pub bytes: u64,
    pub max_queue: usize,
}

impl Link {
    /// `link_index` selects an independent random stream under the profile seed.
    pub fn new(profile: NetProfile, link_index: u64) -> Self {
        let rng = stream(profile.seed, "net", link_index);
        Link {
            tokens: profile.burst_bytes,
            profile,
            rng,
            bucket_time_ms: f64::NEG_INFINITY,
            last_arrival_ms: f64::NEG_INFINITY,
            in_flight: VecDeque::new(),
            sent: 0,
            dropped: 0,
            bytes: 0,
            max_queue: 0,
        }
    }

    pub fn profile(&self) -> &NetProfile {
        &self.profile
    }

    /// Packets sent but not yet arrived as of `now_ms`.
    pub fn queue_len(&mut self, now_ms: f64) -> usize {
        while self.in_flight.front().is_some_and(|&a| a <= now_ms) {
            self.in_flight.pop_front();
        }
        self.in_flight.len()
    }

    /// Push a packet of `size` bytes at `send_ms`; returns the arrival time,
    /// or `None` if the packet is lost. Send times must be non-decreasing.
    pub fn transmit(&mut self, send_ms: f64, size: usize) -> Option<f64> {
        self.sent += 1;
        // both draws happen for every packet so the stream stays aligned
        let lose: f64 = self.rng.gen();
        let jitter_u: f64 = self.rng.gen();
        if lose < self.profile.loss_prob {
            self.dropped += 1;
            return None;
        }
        self.bytes += size as u64;
        let queue_delay = self.queue_delay(send_ms, size as f64);
        let jitter = if self.profile.jitter_ms > 0.0 { (2.0 * jitter_u - 1.0) * self.profile.jitter_ms } else { 0.0 };
        let raw = send_ms + self.profile.latency_ms + jitter + queue_delay;
        let arrival = raw.max(send_ms).max(self.last_arrival_ms);
        self.last_arrival_ms = arrival;
        let q = self.queue_len(send_ms);
        self.in_flight.push_back(arrival);
        self.max_queue = self.max_queue.max(q + 1);
        Some(arrival)
    }

    fn queue_delay(&mut self, now_ms: f64, size: f64) -> f64 {
        let rate = self.profile.bandwidth_bytes_per_s;
        if !rate.is_finite() {
            return 0.0;
        }
        let rate_per_ms = rate / 1000.0;
        if self.bucket_time_ms.is_finite() {
            self.tokens = (self.tokens + (now_ms - self.bucket_time_ms) * rate_per_ms).min(self.profile.burst_bytes);
        }
        self.bucket_time_ms = now_ms;
        self.tokens -= size;
        if self.tokens < 0.0 {
            -self.tokens / rate_per_ms
        } else {
            0.0
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Delivery<P> {
    pub send_ms: f64,
    pub arrival_ms: Option<f64>,
    pub size: usize,
    pub packet: P,
}

/// Run a list of `(send_time_ms, packet bytes)` through one link.
pub fn emulate<P: AsRef<[u8]>>(profile: &NetProfile, sent: Vec<(f64, P)>) -> Vec<Delivery<P>> {
    let mut link = Link::new(profile.clone(), 0);
    sent.into_iter()
        .map(|(send_ms, packet)| {
            let size = packet.as_ref().len();
            let arrival_ms = link.transmit(send_ms, size);
            Delivery { send_ms, arrival_ms, size, packet }
        })
        .collect()
}

/// Trace rows: `send_time,arrival_time,size,dropped` (times in ms; empty arrival when dropped).
pub fn write_trace_csv<P, W: Write>(deliveries: &[Delivery<P>], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["send_time", "arrival_time", "size", "dropped"])?;
    for d in deliveries {
        let arrival = d.arrival_ms.map(|a| format!("{a:.6}")).unwrap_or_default();
        w.write_record([format!("{:.6}", d.send_ms), arrival, d.size.to_string(), d.arrival_ms.is_none().to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn packets(n: usize, size: usize, spacing_ms: f64) -> Vec<(f64, Vec<u8>)> {
        (0..n).map(|i| (i as f64 * spacing_ms, vec![0u8; size])).collect()
    }

    #[test]
    fn ideal_link_adds_latency_only() {
        let out = emulate(&NetProfile::ideal(20.0, 1), packets(100, 54, 3.0));
        for d in out {
            assert_eq!(d.arrival_ms, Some(d.send_ms + 20.0));
        }
    }

    #[test]
    fn loss_rate_matches_binomial() {
        let eps = 0.05;
        let n = 10_000usize;
        let profile = NetProfile { loss_prob: 1.0 - eps, ..NetProfile::ideal(5.0, 77) };
        let delivered = emulate(&profile, packets(n, 10, 1.0)).iter().filter(|d| d.arrival_ms.is_some()).count();
        let frac = delivered as f64 / n as f64;
        let sigma = (eps * (1.0 - eps) / n as f64).sqrt();
        assert!((frac - eps).abs() <= 3.0 * sigma, "delivered fraction {frac}");
    }

    #[test]
    fn token_bucket_paces_back_to_back_packets() {
        let profile = NetProfile { bandwidth_bytes_per_s: 1000.0, ..NetProfile::ideal(0.0, 0) };
        let out = emulate(&profile, vec![(0.0, vec![0u8; 500]), (0.0, vec![0u8; 500])]);
        let (a, b) = (out[0].arrival_ms.unwrap(), out[1].arrival_ms.unwrap());
        assert!(b - a >= 500.0 - 1e-9, "gap {}", b - a);
    }

    #[test]
    fn burst_allows_immediate_send() {
        let profile = NetProfile { bandwidth_bytes_per_s: 1000.0, burst_bytes: 1000.0, ..NetProfile::ideal(0.0, 0) };
        let out = emulate(&profile, vec![(0.0, vec![0u8; 500]), (0.0, vec![0u8; 500]), (0.0, vec![0u8; 500])]);
        assert_eq!(out[0].arrival_ms, Some(0.0));
        assert_eq!(out[1].arrival_ms, Some(0.0));
        assert!((out[2].arrival_ms.unwrap() - 500.0).abs() < 1e-9);
    }

    #[test]
    fn jitter_keeps_fifo_and_is_seeded() {
        let profile = NetProfile { jitter_ms: 15.0, ..NetProfile::ideal(20.0, 3) };
        let a = emulate(&profile, packets(500, 40, 1.0));
        let b = emulate(&profile, packets(500, 40, 1.0));
        assert_eq!(a, b);
        let arrivals: Vec<f64> = a.iter().filter_map(|d| d.arrival_ms).collect();
        assert!(arrivals.windows(2).all(|w| w[0] <= w[1]));
        for d in &a {
            let arr = d.arrival_ms.unwrap();
            assert!(arr >= d.send_ms + 5.0 - 1e-9);
        }
    }

    #[test]
    fn trace_csv_has_one_row_per_packet() {
        let profile = NetProfile { loss_prob: 0.5, ..NetProfile::ideal(1.0, 9) };
        let out = emulate(&profile, packets(20, 8, 1.0));
        let mut buf = Vec::new();
        write_trace_csv(&out, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 21);
        assert!(text.starts_with("send_time,arrival_time,size,dropped"));
    }

    #[test]
    fn profile_validation() {
        assert!(NetProfile { loss_prob: 1.0, ..NetProfile::default() }.validate().is_err());
        assert!(NetProfile { latency_ms: -1.0, ..NetProfile::default() }.validate().is_err());
        assert!(NetProfile::default().validate().is_ok());
    }
}
