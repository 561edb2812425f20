//! Discrete-event engine: virtual clock, ordered future-event queue and the
//! seeded random source every stochastic choice draws from.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::fmt;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Virtual time in integer milliseconds since simulation start.
#[derive(
    Debug, Default, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub fn millis(self) -> u64 {
        self.0
    }

    pub fn after(self, delay_ms: u64) -> SimTime {
        SimTime(self.0 + delay_ms)
    }

    pub fn since(self, earlier: SimTime) -> u64 {
        self.0
            .checked_sub(earlier.0)
            .expect("SimTime::since called with a later instant")
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ms", self.0)
    }
}

/// Handle returned by [`Engine::schedule`]; used to cancel an occurrence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Handle(u64);

/// An occurrence popped from the queue.
#[derive(Debug, Clone, PartialEq)]
pub struct Occurrence<P> {
    pub fire_at: SimTime,
    pub seq: u64,
    pub payload: P,
}

/// One processed occurrence as recorded in the replay log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogEntry {
    pub fire_at: SimTime,
    pub seq: u64,
    pub label: String,
}

/// Single-owner event queue ordered by `(fire_at, seq)`.
///
/// Cancellation marks the handle as a tombstone; cancelled occurrences are
/// dropped when they reach the head of the queue.
pub struct Engine<P> {
    now: SimTime,
    next_seq: u64,
    queue: BinaryHeap<Reverse<(SimTime, u64)>>,
    payloads: HashMap<u64, P>,
    cancelled: HashSet<u64>,
    log: Option<Vec<LogEntry>>,
    last_fired: SimTime,
}

impl<P> Default for Engine<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P> Engine<P> {
    pub fn new() -> Self {
        Engine {
            now: SimTime::ZERO,
            next_seq: 0,
            queue: BinaryHeap::new(),
            payloads: HashMap::new(),
            cancelled: HashSet::new(),
            log: None,
            last_fired: SimTime::ZERO,
        }
    }

    /// Starts recording every processed occurrence.
    pub fn with_log(mut self) -> Self {
        self.log = Some(Vec::new());
        self
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Number of live (non-cancelled) occurrences still queued.
    pub fn pending(&self) -> usize {
        self.payloads.len()
    }

    pub fn log(&self) -> Option<&[LogEntry]> {
        self.log.as_deref()
    }

    /// Enqueues `payload` to fire at `at`.
    ///
    /// Panics when `at` lies in the past; use [`Engine::try_schedule`] to get
    /// the violation as an error instead.
    pub fn schedule(&mut self, at: SimTime, payload: P) -> Handle {
        match self.try_schedule(at, payload) {
            Ok(handle) => handle,
            Err(err) => panic!("{err}"),
        }
    }

    pub fn try_schedule(&mut self, at: SimTime, payload: P) -> Result<Handle, Error> {
        if at < self.now {
            return Err(Error::ScheduleInPast { at, now: self.now });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Reverse((at, seq)));
        self.payloads.insert(seq, payload);
        Ok(Handle(seq))
    }

    /// Schedules `payload` `delay_ms` after the current time.
    pub fn schedule_in(&mut self, delay_ms: u64, payload: P) -> Handle {
        self.schedule(self.now.after(delay_ms), payload)
    }

    /// Cancels a pending occurrence. Returns false if it already fired or was
    /// cancelled before.
    pub fn cancel(&mut self, handle: Handle) -> bool {
        if self.payloads.remove(&handle.0).is_some() {
            self.cancelled.insert(handle.0);
            true
        } else {
            false
        }
    }

    /// Fire time of the next live occurrence.
    pub fn peek_time(&mut self) -> Option<SimTime> {
        self.skip_tombstones();
        self.queue.peek().map(|Reverse((at, _))| *at)
    }

    fn skip_tombstones(&mut self) {
        while let Some(Reverse((_, seq))) = self.queue.peek() {
            if self.cancelled.remove(seq) {
                self.queue.pop();
            } else {
                break;
            }
        }
    }

    /// Pops the next live occurrence and advances the clock to its fire time.
    pub fn step(&mut self) -> Option<Occurrence<P>>
    where
        P: fmt::Debug,
    {
        self.skip_tombstones();
        let Reverse((fire_at, seq)) = self.queue.pop()?;
        let payload = self
            .payloads
            .remove(&seq)
            .expect("queued occurrence without payload");
        debug_assert!(fire_at >= self.last_fired);
        self.now = fire_at;
        self.last_fired = fire_at;
        if let Some(log) = self.log.as_mut() {
            log.push(LogEntry {
                fire_at,
                seq,
                label: format!("{payload:?}"),
            });
        }
        Some(Occurrence {
            fire_at,
            seq,
            payload,
        })
    }

    /// Processes every occurrence with `fire_at <= horizon` in order, handing
    /// each to `handler`, which may schedule further occurrences. On return
    /// the clock reads `horizon`.
    pub fn run_until<F>(&mut self, horizon: SimTime, mut handler: F) -> usize
    where
        P: fmt::Debug,
        F: FnMut(&mut Engine<P>, Occurrence<P>),
    {
        assert!(
            horizon >= self.now,
            "run_until horizon {horizon} is before now {}",
            self.now
        );
        let mut processed = 0;
        while self.peek_time().is_some_and(|at| at <= horizon) {
            let occ = self.step().expect("peeked occurrence vanished");
            handler(self, occ);
            processed += 1;
        }
        self.now = horizon;
        processed
    }
}

/// Seeded ChaCha8 generator. ChaCha8 output depends only on the seed, so a
/// given seed yields the same draw sequence on every platform.
#[derive(Debug, Clone)]
pub struct RandomSource {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RandomSource {
    pub const ALGORITHM: &'static str = "ChaCha8";

    pub fn new(seed: u64) -> Self {
        RandomSource {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform index in `0..n`. Panics if `n == 0`.
    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    /// Uniform float in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn drain(engine: &mut Engine<&'static str>) -> Vec<(u64, &'static str)> {
        let mut fired = Vec::new();
        engine.run_until(SimTime(u64::MAX), |_, occ| {
            fired.push((occ.fire_at.0, occ.payload))
        });
        fired
    }

    #[test]
    fn zero_delay_fires_at_current_time() {
        let mut engine = Engine::new();
        engine.run_until(SimTime(40), |_, _: Occurrence<&str>| {});
        engine.schedule(engine.now(), "x");
        let occ = engine.step().unwrap();
        assert_eq!(occ.fire_at, SimTime(40));
        assert_eq!(engine.now(), SimTime(40));
    }

    #[test]
    fn equal_times_fire_in_scheduling_order() {
        let mut engine = Engine::new();
        engine.schedule(SimTime(5), "a");
        engine.schedule(SimTime(5), "b");
        assert_eq!(drain(&mut engine), vec![(5, "a"), (5, "b")]);
    }

    #[test]
    fn firing_order_matches_sort_over_time_and_seq() {
        let plan = [(3, "a"), (1, "b"), (2, "c")];
        let mut engine = Engine::new();
        for (at, p) in plan {
            engine.schedule(SimTime(at), p);
        }
        // oracle: stable sort by time keeps insertion order for ties
        let mut expected: Vec<_> = plan.to_vec();
        expected.sort_by_key(|(at, _)| *at);
        assert_eq!(drain(&mut engine), expected);
        assert_eq!(expected.iter().map(|e| e.1).collect::<Vec<_>>(), ["b", "c", "a"]);
    }

    #[test]
    fn empty_queue_processes_nothing() {
        let mut engine: Engine<&str> = Engine::new();
        assert_eq!(engine.run_until(SimTime(1000), |_, _| {}), 0);
        assert_eq!(engine.now(), SimTime(1000));
    }

    #[test]
    fn horizon_is_inclusive() {
        let mut engine = Engine::new();
        for t in 1..=3 {
            engine.schedule(SimTime(t), t);
        }
        assert_eq!(engine.run_until(SimTime(2), |_, _| {}), 2);
        assert_eq!(engine.pending(), 1);
    }

    #[test]
    fn clock_reads_zero_then_horizon() {
        let mut engine = Engine::new();
        assert_eq!(engine.now(), SimTime::ZERO);
        engine.schedule(SimTime(400), ());
        engine.run_until(SimTime(500), |_, _| {});
        assert_eq!(engine.now(), SimTime(500));
    }

    #[test]
    fn handler_observes_fire_time() {
        let mut engine = Engine::new();
        engine.schedule(SimTime(123), ());
        let mut seen = None;
        engine.run_until(SimTime(1000), |eng, _| seen = Some(eng.now()));
        assert_eq!(seen, Some(SimTime(123)));
    }

    #[test]
    fn scheduling_in_the_past_fails() {
        let mut engine: Engine<()> = Engine::new();
        engine.run_until(SimTime(10), |_, _| {});
        assert!(matches!(
            engine.try_schedule(SimTime(9), ()),
            Err(Error::ScheduleInPast { .. })
        ));
    }

    #[test]
    #[should_panic(expected = "in the past")]
    fn schedule_panics_on_past_time() {
        let mut engine: Engine<()> = Engine::new();
        engine.run_until(SimTime(10), |_, _| {});
        engine.schedule(SimTime(3), ());
    }

    #[test]
    fn cancelled_occurrences_are_skipped() {
        let mut engine = Engine::new();
        let a = engine.schedule(SimTime(1), "a");
        engine.schedule(SimTime(2), "b");
        assert!(engine.cancel(a));
        assert!(!engine.cancel(a));
        assert_eq!(drain(&mut engine), vec![(2, "b")]);
    }

    #[test]
    fn handlers_can_chain_occurrences() {
        let mut engine = Engine::new().with_log();
        engine.schedule(SimTime(0), 0u32);
        let n = engine.run_until(SimTime(50), |eng, occ| {
            if occ.payload < 10 {
                eng.schedule_in(7, occ.payload + 1);
            }
        });
        assert_eq!(n, 8);
        let times: Vec<u64> = engine.log().unwrap().iter().map(|e| e.fire_at.0).collect();
        assert!(times.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn random_source_replays_from_seed() {
        let mut a = RandomSource::new(42);
        let mut b = RandomSource::new(42);
        let xs: Vec<u64> = (0..16).map(|_| a.next_u64()).collect();
        let ys: Vec<u64> = (0..16).map(|_| b.next_u64()).collect();
        assert_eq!(xs, ys);
        assert_ne!(xs, (0..16).map(|_| RandomSource::new(43).next_u64()).collect::<Vec<_>>());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn fire_times_never_decrease(times in proptest::collection::vec(0u64..1000, 0..64)) {
                let mut engine = Engine::new();
                for (i, t) in times.iter().enumerate() {
                    engine.schedule(SimTime(*t), i);
                }
                let mut fired = Vec::new();
                engine.run_until(SimTime(1000), |_, occ| fired.push((occ.fire_at, occ.payload)));
                prop_assert_eq!(fired.len(), times.len());
                for w in fired.windows(2) {
                    prop_assert!(w[0].0 <= w[1].0);
                    if w[0].0 == w[1].0 {
                        prop_assert!(w[0].1 < w[1].1);
                    }
                }
            }
        }
    }
}
