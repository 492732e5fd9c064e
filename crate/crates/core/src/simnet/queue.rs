use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// Tie-break class at equal timestamps: deliveries run before agent events,
/// and the scenario end runs last.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum EventClass {
    Delivery = 0,
    Agent = 1,
    End = 2,
}

struct Entry<T> {
    t: f64,
    class: EventClass,
    counter: u64,
    payload: T,
}

impl<T> Entry<T> {
    fn key(&self) -> (f64, EventClass, u64) {
        (self.t, self.class, self.counter)
    }
}

impl<T> PartialEq for Entry<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<T> Eq for Entry<T> {}

impl<T> PartialOrd for Entry<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T> Ord for Entry<T> {
    // Reversed so the max-heap pops the smallest key.
    fn cmp(&self, other: &Self) -> Ordering {
        let (a, b) = (self.key(), other.key());
        b.0.total_cmp(&a.0).then(b.1.cmp(&a.1)).then(b.2.cmp(&a.2))
    }
}

/// Min-queue ordered by `(t, class, insertion counter)`.
pub struct EventQueue<T> {
    heap: BinaryHeap<Entry<T>>,
    counter: u64,
}

impl<T> Default for EventQueue<T> {
    fn default() -> Self {
        Self {
            heap: BinaryHeap::new(),
            counter: 0,
        }
    }
}

impl<T> EventQueue<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, t: f64, class: EventClass, payload: T) {
        assert!(t.is_finite(), "event time must be finite");
        self.counter += 1;
        self.heap.push(Entry {
            t,
            class,
            counter: self.counter,
            payload,
        });
    }

    pub fn pop(&mut self) -> Option<(f64, EventClass, T)> {
        self.heap.pop().map(|e| (e.t, e.class, e.payload))
    }

    pub fn peek_time(&self) -> Option<f64> {
        self.heap.peek().map(|e| e.t)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn deliveries_precede_agent_events_at_equal_time() {
        let mut q = EventQueue::new();
        q.push(1.0, EventClass::Agent, "tick");
        q.push(1.0, EventClass::End, "end");
        q.push(1.0, EventClass::Delivery, "msg");
        q.push(0.5, EventClass::End, "early");
        let order: Vec<_> = std::iter::from_fn(|| q.pop().map(|e| e.2)).collect();
        assert_eq!(order, vec!["early", "msg", "tick", "end"]);
    }

    proptest! {
        #[test]
        fn pops_in_nondecreasing_key_order(events in prop::collection::vec((0u32..50, 0u8..3), 0..200)) {
            let mut q = EventQueue::new();
            for (i, (t, c)) in events.iter().enumerate() {
                let class = match c { 0 => EventClass::Delivery, 1 => EventClass::Agent, _ => EventClass::End };
                q.push(*t as f64 * 0.01, class, i);
            }
            let mut last: Option<(f64, EventClass, usize)> = None;
            while let Some((t, c, i)) = q.pop() {
                if let Some((lt, lc, li)) = last {
                    prop_assert!(t > lt || (t == lt && (c > lc || (c == lc && i > li))));
                }
                last = Some((t, c, i));
            }
        }
    }
}
