//! Priority queue of timed events with a deterministic total order.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::error::EngineError;
use crate::radio::NodeId;
use crate::time::SimTime;

/// Tie-breaker among events at the same instant: engine events (no node)
/// first, then by node id, then by a per-kind rank such as a packet
/// sequence number, then by insertion order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Ordinal {
    pub node: Option<NodeId>,
    pub rank: u64,
    pub counter: u64,
}

#[derive(Debug)]
struct Entry<E> {
    at: SimTime,
    ordinal: Ordinal,
    event: E,
}

impl<E> PartialEq for Entry<E> {
    fn eq(&self, other: &Self) -> bool {
        (self.at, self.ordinal) == (other.at, other.ordinal)
    }
}

impl<E> Eq for Entry<E> {}

impl<E> PartialOrd for Entry<E> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Entry<E> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.at, self.ordinal).cmp(&(other.at, other.ordinal))
    }
}

#[derive(Debug)]
pub struct EventQueue<E> {
    heap: BinaryHeap<Reverse<Entry<E>>>,
    now: SimTime,
    counter: u64,
}

impl<E> Default for EventQueue<E> {
    fn default() -> Self {
        EventQueue {
            heap: BinaryHeap::new(),
            now: SimTime::ZERO,
            counter: 0,
        }
    }
}

impl<E> EventQueue<E> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Time of the last dequeued event.
    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn schedule(&mut self, at: SimTime, node: Option<NodeId>, rank: u64, event: E) -> Result<(), EngineError> {
        if at < self.now {
            return Err(EngineError::CausalityViolation { at, now: self.now });
        }
        let ordinal = Ordinal {
            node,
            rank,
            counter: self.counter,
        };
        self.counter += 1;
        self.heap.push(Reverse(Entry { at, ordinal, event }));
        Ok(())
    }

    pub fn peek_time(&self) -> Option<SimTime> {
        self.heap.peek().map(|Reverse(e)| e.at)
    }

    pub fn next_event(&mut self) -> Option<(SimTime, Ordinal, E)> {
        let Reverse(entry) = self.heap.pop()?;
        self.now = entry.at;
        Some((entry.at, entry.ordinal, entry.event))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn lower_ordinal_first_on_ties() {
        let mut q = EventQueue::new();
        let t = SimTime::from_secs(1.0);
        q.schedule(t, Some(NodeId::Vehicle(5)), 0, "five").unwrap();
        q.schedule(t, Some(NodeId::Vehicle(3)), 0, "three").unwrap();
        assert_eq!(q.next_event().unwrap().2, "three");
        assert_eq!(q.next_event().unwrap().2, "five");
    }

    #[test]
    fn engine_events_precede_node_events() {
        let mut q = EventQueue::new();
        let t = SimTime::from_secs(1.0);
        q.schedule(t, Some(NodeId::Rsu(0)), 0, "node").unwrap();
        q.schedule(t, None, 9, "engine").unwrap();
        assert_eq!(q.next_event().unwrap().2, "engine");
    }

    #[test]
    fn insertion_order_breaks_remaining_ties() {
        let mut q = EventQueue::new();
        let t = SimTime::from_secs(2.0);
        for i in 0..5 {
            q.schedule(t, Some(NodeId::Vehicle(1)), 7, i).unwrap();
        }
        let order: Vec<i32> = std::iter::from_fn(|| q.next_event().map(|e| e.2)).collect();
        assert_eq!(order, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn scheduling_into_the_past_fails() {
        let mut q = EventQueue::new();
        q.schedule(SimTime::from_secs(2.0), None, 0, ()).unwrap();
        q.next_event();
        let err = q.schedule(SimTime::from_secs(1.0), None, 0, ()).unwrap_err();
        assert!(matches!(err, EngineError::CausalityViolation { .. }));
        assert!(q.schedule(SimTime::from_secs(2.0), None, 0, ()).is_ok());
    }

    fn arb_key() -> impl Strategy<Value = (u64, Option<u32>, u64)> {
        (0u64..50, proptest::option::of(0u32..4), 0u64..3)
    }

    proptest! {
        /// Interleaved schedule/pop matches a sort of everything inserted,
        /// restricted to what was available at each pop.
        #[test]
        fn matches_sort_oracle(ops in proptest::collection::vec((arb_key(), any::<bool>()), 1..120)) {
            let mut q = EventQueue::new();
            let mut pool: Vec<(SimTime, Ordinal, usize)> = Vec::new();
            let mut counter = 0u64;
            for (i, ((dt, node, rank), pop)) in ops.into_iter().enumerate() {
                let at = SimTime::from_nanos(q.now().as_nanos() + dt);
                let node = node.map(NodeId::Vehicle);
                q.schedule(at, node, rank, i).unwrap();
                pool.push((at, Ordinal { node, rank, counter }, i));
                counter += 1;
                if pop {
                    pool.sort();
                    let want = pool.remove(0);
                    let got = q.next_event().unwrap();
                    prop_assert_eq!((got.0, got.1, got.2), want);
                }
            }
            pool.sort();
            let mut last = q.now();
            for want in pool {
                let got = q.next_event().unwrap();
                prop_assert!(got.0 >= last);
                last = got.0;
                prop_assert_eq!((got.0, got.1, got.2), want);
            }
            prop_assert!(q.is_empty());
        }
    }
}
