use nalgebra::DVector;

/// Sender or receiver of a packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Endpoint {
    Gateway,
    /// Zero-based loop index.
    Loop(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PacketKind {
    Data,
    Poll,
    Ack,
    Beacon,
}

/// A simulated over-the-air message.
#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    pub kind: PacketKind,
    pub src: Endpoint,
    pub dst: Endpoint,
    /// Sampling step at which the carried state was generated. Data packets
    /// always carry it; acks echo it back.
    pub gen_step: Option<u64>,
    pub payload: Option<DVector<f64>>,
    /// Zero-based loop indices, one per slot of the frame (beacons only).
    pub schedule: Vec<usize>,
    /// First slot of the frame the beacon announces.
    pub slot_index: u64,
    pub tx_duration_us: u64,
}

impl Packet {
    fn bare(kind: PacketKind, src: Endpoint, dst: Endpoint, tx_duration_us: u64) -> Self {
        Self {
            kind,
            src,
            dst,
            gen_step: None,
            payload: None,
            schedule: Vec::new(),
            slot_index: 0,
            tx_duration_us,
        }
    }

    pub fn data(loop_idx: usize, gen_step: u64, state: DVector<f64>, tx_duration_us: u64) -> Self {
        Self {
            gen_step: Some(gen_step),
            payload: Some(state),
            ..Self::bare(PacketKind::Data, Endpoint::Loop(loop_idx), Endpoint::Gateway, tx_duration_us)
        }
    }

    pub fn poll(loop_idx: usize, tx_duration_us: u64) -> Self {
        Self::bare(PacketKind::Poll, Endpoint::Gateway, Endpoint::Loop(loop_idx), tx_duration_us)
    }

    pub fn ack(loop_idx: usize, gen_step: u64, tx_duration_us: u64) -> Self {
        Self {
            gen_step: Some(gen_step),
            ..Self::bare(PacketKind::Ack, Endpoint::Gateway, Endpoint::Loop(loop_idx), tx_duration_us)
        }
    }

    pub fn beacon(schedule: Vec<usize>, slot_index: u64) -> Self {
        Self {
            schedule,
            slot_index,
            ..Self::bare(PacketKind::Beacon, Endpoint::Gateway, Endpoint::Gateway, 0)
        }
    }
}

/// Single-slot last-come-first-served queue: a newer sample evicts the
/// queued one.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LcfsQueue {
    slot: Option<Packet>,
}

impl LcfsQueue {
    pub fn new() -> Self {
        Self::default()
    }

    /// Enqueues `pkt` unless the queued packet is at least as fresh. Returns
    /// the packet that did not make it into the queue, if any.
    pub fn push(&mut self, pkt: Packet) -> Option<Packet> {
        match &self.slot {
            Some(old) if old.gen_step >= pkt.gen_step => Some(pkt),
            _ => self.slot.replace(pkt),
        }
    }

    pub fn pop(&mut self) -> Option<Packet> {
        self.slot.take()
    }

    pub fn peek(&self) -> Option<&Packet> {
        self.slot.as_ref()
    }

    pub fn len(&self) -> usize {
        usize::from(self.slot.is_some())
    }

    pub fn is_empty(&self) -> bool {
        self.slot.is_none()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data(gen: u64) -> Packet {
        Packet::data(0, gen, DVector::from_element(1, gen as f64), 3000)
    }

    #[test]
    fn newer_sample_replaces_older() {
        let mut q = LcfsQueue::new();
        assert!(q.push(data(1)).is_none());
        let evicted = q.push(data(2)).unwrap();
        assert_eq!(evicted.gen_step, Some(1));
        assert_eq!(q.len(), 1);
        assert_eq!(q.pop().unwrap().gen_step, Some(2));
        assert!(q.is_empty());
    }

    #[test]
    fn older_sample_is_rejected() {
        let mut q = LcfsQueue::new();
        q.push(data(5));
        assert_eq!(q.push(data(3)).unwrap().gen_step, Some(3));
        assert_eq!(q.push(data(5)).unwrap().gen_step, Some(5));
        assert_eq!(q.peek().unwrap().gen_step, Some(5));
    }

    #[test]
    fn constructors_fill_kind_fields() {
        let d = data(4);
        assert_eq!(d.kind, PacketKind::Data);
        assert!(d.payload.is_some());
        let b = Packet::beacon(vec![0, 1, 2], 40);
        assert_eq!(b.kind, PacketKind::Beacon);
        assert_eq!(b.schedule.len(), 3);
        assert_eq!(Packet::ack(2, 9, 0).gen_step, Some(9));
        assert_eq!(Packet::poll(2, 3000).dst, Endpoint::Loop(2));
    }
}
