//! Per-thread phase accounting for the decoder.
//!
//! Each worker thread may install its own [`PhaseTimer`]. Instrumented code opens
//! a [`scope`] around a unit of work; when no timer is installed on the current
//! thread the scope is a single thread-local flag read and never touches the clock.
//!
//! Scopes nest. Elapsed time is always charged to the innermost open phase, so the
//! phase totals are disjoint. Time spent while the timer is installed but no scope is
//! open is charged to [`Phase::Other`].

use std::cell::{Cell, RefCell};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    QuantizeActivations,
    Matmul,
    Transcendental,
    Embedding,
    SearchOverhead,
    Other,
}

impl Phase {
    pub const ALL: [Phase; 6] = [
        Phase::QuantizeActivations,
        Phase::Matmul,
        Phase::Transcendental,
        Phase::Embedding,
        Phase::SearchOverhead,
        Phase::Other,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Phase::QuantizeActivations => "quantize-activations",
            Phase::Matmul => "matmul",
            Phase::Transcendental => "transcendental",
            Phase::Embedding => "embedding",
            Phase::SearchOverhead => "search-overhead",
            Phase::Other => "other",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// Wall-clock accumulators, one per [`Phase`].
#[derive(Clone, Debug, Default)]
pub struct PhaseTimer {
    totals: [Duration; 6],
    stack: Vec<Phase>,
    mark: Option<Instant>,
}

impl PhaseTimer {
    pub fn new() -> Self {
        Self::default()
    }

    fn charge(&mut self, now: Instant) {
        if let Some(mark) = self.mark {
            let phase = self.stack.last().copied().unwrap_or(Phase::Other);
            self.totals[phase.index()] += now - mark;
        }
        self.mark = Some(now);
    }

    pub fn enter(&mut self, phase: Phase) {
        self.charge(Instant::now());
        self.stack.push(phase);
    }

    pub fn exit(&mut self) {
        self.charge(Instant::now());
        self.stack.pop();
    }

    /// Charges any pending time and stops the clock.
    pub fn finish(&mut self) {
        if self.mark.is_some() {
            self.charge(Instant::now());
        }
        self.mark = None;
        self.stack.clear();
    }

    pub fn get(&self, phase: Phase) -> Duration {
        self.totals[phase.index()]
    }

    pub fn total(&self) -> Duration {
        self.totals.iter().sum()
    }

    pub fn merge(&mut self, other: &PhaseTimer) {
        for (a, b) in self.totals.iter_mut().zip(other.totals.iter()) {
            *a += *b;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (Phase, Duration)> + '_ {
        Phase::ALL.iter().map(move |&p| (p, self.get(p)))
    }
}

thread_local! {
    static ACTIVE: Cell<bool> = const { Cell::new(false) };
    static TIMER: RefCell<PhaseTimer> = RefCell::new(PhaseTimer::new());
}

/// Installs a fresh timer on the current thread and starts its clock.
pub fn install() {
    TIMER.with(|t| {
        let mut t = t.borrow_mut();
        *t = PhaseTimer::new();
        t.mark = Some(Instant::now());
    });
    ACTIVE.with(|a| a.set(true));
}

/// Stops and removes the current thread's timer, returning its totals.
pub fn uninstall() -> PhaseTimer {
    ACTIVE.with(|a| a.set(false));
    TIMER.with(|t| {
        let mut t = t.take();
        t.finish();
        t
    })
}

pub fn is_active() -> bool {
    ACTIVE.with(|a| a.get())
}

/// Open phase scope; closes on drop.
#[must_use]
pub struct PhaseGuard {
    active: bool,
}

impl Drop for PhaseGuard {
    #[inline]
    fn drop(&mut self) {
        if self.active {
            TIMER.with(|t| t.borrow_mut().exit());
        }
    }
}

#[inline]
pub fn scope(phase: Phase) -> PhaseGuard {
    let active = is_active();
    if active {
        TIMER.with(|t| t.borrow_mut().enter(phase));
    }
    PhaseGuard { active }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spin(d: Duration) {
        let start = Instant::now();
        while start.elapsed() < d {}
    }

    #[test]
    fn inactive_scope_records_nothing() {
        {
            let _g = scope(Phase::Matmul);
            spin(Duration::from_millis(1));
        }
        install();
        let t = uninstall();
        assert!(t.get(Phase::Matmul) < Duration::from_millis(1));
    }

    #[test]
    fn nested_time_goes_to_innermost() {
        install();
        {
            let _outer = scope(Phase::Transcendental);
            spin(Duration::from_millis(2));
            {
                let _inner = scope(Phase::Matmul);
                spin(Duration::from_millis(10));
            }
        }
        let t = uninstall();
        assert!(t.get(Phase::Matmul) >= Duration::from_millis(10));
        assert!(t.get(Phase::Transcendental) >= Duration::from_millis(2));
        assert!(t.get(Phase::Transcendental) < Duration::from_millis(10));
    }

    #[test]
    fn merge_adds_totals() {
        let mut a = PhaseTimer::new();
        a.totals[Phase::Matmul.index()] = Duration::from_millis(3);
        let mut b = PhaseTimer::new();
        b.totals[Phase::Matmul.index()] = Duration::from_millis(4);
        a.merge(&b);
        assert_eq!(a.get(Phase::Matmul), Duration::from_millis(7));
        assert_eq!(a.total(), Duration::from_millis(7));
    }
}
