//! Event queue, virtual clock and the per-run random source.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::ops::{Add, Sub};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Virtual time in integer microseconds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms * 1_000)
    }

    pub const fn from_secs(s: u64) -> Self {
        SimTime(s * 1_000_000)
    }

    pub const fn as_micros(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    /// Multiplies a duration by `num / den`, truncating.
    pub const fn scale(self, num: u64, den: u64) -> Self {
        SimTime(self.0 * num / den)
    }

    pub const fn saturating_sub(self, rhs: SimTime) -> Self {
        SimTime(self.0.saturating_sub(rhs.0))
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A scheduled entry. Ordering is `(fire_at, tiebreak)` with the earliest
/// first, so `BinaryHeap` comparisons are reversed.
#[derive(Debug, Clone)]
pub struct Event<P> {
    pub fire_at: SimTime,
    pub tiebreak: u64,
    pub payload: P,
}

impl<P> PartialEq for Event<P> {
    fn eq(&self, other: &Self) -> bool {
        self.fire_at == other.fire_at && self.tiebreak == other.tiebreak
    }
}

impl<P> Eq for Event<P> {}

impl<P> Ord for Event<P> {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.fire_at, self.tiebreak)
            .cmp(&(other.fire_at, other.tiebreak))
            .reverse()
    }
}

impl<P> PartialOrd for Event<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Min-ordered event queue that owns the virtual clock.
#[derive(Debug)]
pub struct EventQueue<P> {
    heap: BinaryHeap<Event<P>>,
    now: SimTime,
    next_tiebreak: u64,
}

impl<P> Default for EventQueue<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P> EventQueue<P> {
    pub fn new() -> Self {
        Self {
            heap: BinaryHeap::new(),
            now: SimTime::ZERO,
            next_tiebreak: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Schedules `payload` at `fire_at`.
    ///
    /// # Panics
    /// Scheduling before the current clock is a logic error in the caller and
    /// aborts the run.
    pub fn schedule(&mut self, fire_at: SimTime, payload: P) {
        assert!(
            fire_at >= self.now,
            "event scheduled in the past: fire_at={} now={}",
            fire_at,
            self.now
        );
        let tiebreak = self.next_tiebreak;
        self.next_tiebreak += 1;
        self.heap.push(Event {
            fire_at,
            tiebreak,
            payload,
        });
    }

    pub fn schedule_after(&mut self, delay: SimTime, payload: P) {
        self.schedule(self.now + delay, payload);
    }

    /// Pops the earliest event and advances the clock to it. `None` signals
    /// that the run has nothing left to do.
    pub fn pop_next(&mut self) -> Option<Event<P>> {
        let ev = self.heap.pop()?;
        debug_assert!(ev.fire_at >= self.now);
        self.now = ev.fire_at;
        Some(ev)
    }
}

/// Seedable uniform source; one per run, consumed in event order.
#[derive(Debug, Clone)]
pub struct RandomSource {
    seed: u64,
    rng: ChaCha8Rng,
    draws: u64,
}

impl RandomSource {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
            draws: 0,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of values drawn so far.
    pub fn draws(&self) -> u64 {
        self.draws
    }

    /// Uniform value in `[0, 1)`.
    pub fn uniform_draw(&mut self) -> f64 {
        self.draws += 1;
        self.rng.gen::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_event_pops() {
        let mut q = EventQueue::new();
        q.schedule(SimTime(5), "a");
        let ev = q.pop_next().unwrap();
        assert_eq!(ev.fire_at, SimTime(5));
        assert_eq!(ev.payload, "a");
        assert!(q.pop_next().is_none());
    }

    #[test]
    fn earlier_event_first() {
        let mut q = EventQueue::new();
        q.schedule(SimTime(5), 5);
        q.schedule(SimTime(3), 3);
        assert_eq!(q.pop_next().unwrap().payload, 3);
        assert_eq!(q.now(), SimTime(3));
        assert_eq!(q.pop_next().unwrap().payload, 5);
    }

    #[test]
    fn equal_times_are_fifo() {
        let mut q = EventQueue::new();
        q.schedule(SimTime(7), 'A');
        q.schedule(SimTime(7), 'B');
        assert_eq!(q.pop_next().unwrap().payload, 'A');
        assert_eq!(q.pop_next().unwrap().payload, 'B');
    }

    #[test]
    fn clock_follows_pops_and_equal_time_schedule_is_legal() {
        let mut q = EventQueue::new();
        q.schedule(SimTime(1), ());
        q.schedule(SimTime(9), ());
        assert_eq!(q.pop_next().unwrap().fire_at, SimTime(1));
        assert_eq!(q.now(), SimTime(1));
        q.pop_next().unwrap();
        assert_eq!(q.now(), SimTime(9));
        q.schedule(SimTime(9), ());
        assert_eq!(q.pop_next().unwrap().fire_at, SimTime(9));
    }

    #[test]
    fn empty_queue_yields_none() {
        let mut q: EventQueue<()> = EventQueue::new();
        assert!(q.pop_next().is_none());
    }

    #[test]
    #[should_panic(expected = "scheduled in the past")]
    fn scheduling_in_the_past_aborts() {
        let mut q = EventQueue::new();
        q.schedule(SimTime(10), ());
        q.pop_next();
        q.schedule(SimTime(4), ());
    }

    #[test]
    fn same_seed_same_draws() {
        let mut a = RandomSource::new(42);
        let mut b = RandomSource::new(42);
        let pa = (a.uniform_draw(), a.uniform_draw());
        let pb = (b.uniform_draw(), b.uniform_draw());
        assert_eq!(pa, pb);
        assert_eq!(a.draws(), 2);
    }

    #[test]
    fn uniform_moments() {
        let mut rng = RandomSource::new(7);
        let n = 100_000;
        let mut sum = 0.0;
        let mut below = 0u32;
        for _ in 0..n {
            let u = rng.uniform_draw();
            assert!((0.0..1.0).contains(&u));
            sum += u;
            if u < 0.25 {
                below += 1;
            }
        }
        let mean = sum / n as f64;
        let frac = below as f64 / n as f64;
        assert!((0.49..=0.51).contains(&mean), "mean {mean}");
        assert!((0.24..=0.26).contains(&frac), "frac {frac}");
    }

    proptest! {
        #[test]
        fn pops_are_sorted_and_stable(times in proptest::collection::vec(0u64..50, 0..200)) {
            let mut q = EventQueue::new();
            for (i, t) in times.iter().enumerate() {
                q.schedule(SimTime(*t), i);
            }
            let mut last: Option<(SimTime, usize)> = None;
            while let Some(ev) = q.pop_next() {
                if let Some((lt, li)) = last {
                    prop_assert!(ev.fire_at >= lt);
                    if ev.fire_at == lt {
                        prop_assert!(ev.payload > li);
                    }
                }
                last = Some((ev.fire_at, ev.payload));
            }
        }
    }
}
