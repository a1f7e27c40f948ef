use std::collections::VecDeque;

use crate::aoi::AoiTracker;
use crate::error::{Error, Result};
use crate::mac::packet::{Endpoint, Packet, PacketKind};

/// Gateway-side knowledge about one loop: the estimated age of its freshest
/// delivered sample and a sliding-window count of polls and replies.
#[derive(Debug, Clone)]
pub struct GwLoopView {
    loop_idx: usize,
    age: AoiTracker,
    window_us: u64,
    polls: VecDeque<u64>,
    replies: VecDeque<u64>,
    stale: u64,
}

impl GwLoopView {
    pub fn new(loop_idx: usize, window_us: u64) -> Self {
        Self {
            loop_idx,
            age: AoiTracker::new(),
            window_us,
            polls: VecDeque::new(),
            replies: VecDeque::new(),
            stale: 0,
        }
    }

    /// Moves the gateway clock to sampling step `gw_step`.
    pub fn tick(&mut self, gw_step: u64) {
        self.age.set_step(gw_step);
    }

    pub fn est_age(&self) -> u64 {
        self.age.age()
    }

    pub fn last_gen(&self) -> u64 {
        self.age.last_gen()
    }

    pub fn stale_count(&self) -> u64 {
        self.stale
    }

    fn prune(&mut self, now_us: u64) {
        let cutoff = now_us.saturating_sub(self.window_us);
        for q in [&mut self.polls, &mut self.replies] {
            while q.front().is_some_and(|&t| t < cutoff) {
                q.pop_front();
            }
        }
    }

    pub fn record_poll(&mut self, now_us: u64) {
        self.polls.push_back(now_us);
    }

    /// Counts a reply, stamped with the time of the poll that triggered it
    /// so a reply never outlives its poll in the window.
    pub fn record_reply(&mut self, poll_us: u64) {
        self.replies.push_back(poll_us);
    }

    /// `(RX, TX)` within the window ending at `now_us`.
    pub fn counts(&mut self, now_us: u64) -> (usize, usize) {
        self.prune(now_us);
        (self.replies.len(), self.polls.len())
    }

    /// Channel reliability `(RX + 1) / (TX + 1)` over the window.
    pub fn reliability(&mut self, now_us: u64) -> f64 {
        let (rx, tx) = self.counts(now_us);
        (rx as f64 + 1.0) / (tx as f64 + 1.0)
    }
}

/// Result of handing a data packet to the gateway.
#[derive(Debug, Clone, PartialEq)]
pub struct DataOutcome {
    pub fresh: bool,
    pub est_age: u64,
    pub ack: Packet,
}

/// Processes a received data packet: refreshes the age estimate when the
/// packet is strictly fresher, counts stale ones, and builds the ack.
pub fn gw_on_data(view: &mut GwLoopView, pkt: &Packet, gw_step: u64, ack_duration_us: u64) -> Result<DataOutcome> {
    let gen = match (pkt.kind, pkt.gen_step) {
        (PacketKind::Data, Some(gen)) => gen,
        _ => return Err(Error::Invariant(format!("gateway got a non-data packet: {:?}", pkt.kind))),
    };
    if pkt.src != Endpoint::Loop(view.loop_idx) {
        return Err(Error::Invariant(format!(
            "packet from {:?} routed to view of loop {}",
            pkt.src, view.loop_idx
        )));
    }
    view.tick(gw_step);
    let fresh = view.age.update(gen);
    if !fresh {
        view.stale += 1;
    }
    Ok(DataOutcome { fresh, est_age: view.est_age(), ack: Packet::ack(view.loop_idx, gen, ack_duration_us) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    fn data(gen: u64) -> Packet {
        Packet::data(0, gen, DVector::zeros(1), 3000)
    }

    #[test]
    fn age_from_generation_step() {
        let mut v = GwLoopView::new(0, 500_000);
        let out = gw_on_data(&mut v, &data(7), 10, 0).unwrap();
        assert!(out.fresh);
        assert_eq!(out.est_age, 3);
        assert_eq!(out.ack.gen_step, Some(7));
    }

    #[test]
    fn duplicate_is_stale() {
        let mut v = GwLoopView::new(0, 500_000);
        gw_on_data(&mut v, &data(7), 10, 0).unwrap();
        let out = gw_on_data(&mut v, &data(7), 10, 0).unwrap();
        assert!(!out.fresh);
        assert_eq!(out.est_age, 3);
        assert_eq!(v.stale_count(), 1);
    }

    #[test]
    fn age_grows_per_tick_and_floors_at_one() {
        let mut v = GwLoopView::new(0, 500_000);
        assert_eq!(v.est_age(), 1);
        gw_on_data(&mut v, &data(4), 4, 0).unwrap();
        assert_eq!(v.est_age(), 1);
        for k in 1..=6 {
            v.tick(4 + k);
            assert_eq!(v.est_age(), k);
        }
    }

    #[test]
    fn wrong_kind_or_source_rejected() {
        let mut v = GwLoopView::new(1, 500_000);
        assert!(gw_on_data(&mut v, &Packet::poll(1, 10), 3, 0).is_err());
        assert!(gw_on_data(&mut v, &data(1), 3, 0).is_err());
    }

    #[test]
    fn reliability_window() {
        let mut v = GwLoopView::new(0, 500_000);
        assert_eq!(v.reliability(0), 1.0);
        for i in 0..9u64 {
            v.record_poll(i * 1000);
            if i < 5 {
                v.record_reply(i * 1000);
            }
        }
        assert!((v.reliability(9000) - 0.6).abs() < 1e-15);
        // Everything ages out of the window.
        assert_eq!(v.counts(1_000_000), (0, 0));
        assert_eq!(v.reliability(1_000_000), 1.0);
    }
}
