//! Wall-clock breakdown of a computation into assembly, linear solves and
//! network evaluation.
//!
//! Recording is thread-local and only active inside [`capture`]. Nested timed
//! sections are attributed to the outermost one.

use std::cell::RefCell;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Assembly,
    LinearSolve,
    NnCorrection,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub total_ms: f64,
    pub assembly_ms: f64,
    pub linear_solve_ms: f64,
    pub nn_correction_ms: f64,
    pub rest_ms: f64,
    pub assembly_count: usize,
    pub solve_count: usize,
}

#[derive(Default)]
struct Recorder {
    assembly: Duration,
    linear_solve: Duration,
    nn: Duration,
    assembly_count: usize,
    solve_count: usize,
    depth: usize,
}

thread_local! {
    static RECORDER: RefCell<Option<Recorder>> = const { RefCell::new(None) };
}

/// Runs `f` and reports where its time went.
pub fn capture<R>(f: impl FnOnce() -> R) -> (R, Timings) {
    let previous = RECORDER.with(|r| r.borrow_mut().replace(Recorder::default()));
    let start = Instant::now();
    let out = f();
    let total = start.elapsed();
    let rec = RECORDER.with(|r| std::mem::replace(&mut *r.borrow_mut(), previous)).unwrap_or_default();
    let ms = |d: Duration| d.as_secs_f64() * 1e3;
    let total_ms = ms(total);
    let phases = ms(rec.assembly) + ms(rec.linear_solve) + ms(rec.nn);
    let timings = Timings {
        total_ms,
        assembly_ms: ms(rec.assembly),
        linear_solve_ms: ms(rec.linear_solve),
        nn_correction_ms: ms(rec.nn),
        rest_ms: (total_ms - phases).max(0.0),
        assembly_count: rec.assembly_count,
        solve_count: rec.solve_count,
    };
    (out, timings)
}

/// Attributes the time spent in `f` to `phase` when a capture is active.
pub fn timed<R>(phase: Phase, f: impl FnOnce() -> R) -> R {
    let active = RECORDER.with(|r| {
        let mut r = r.borrow_mut();
        match r.as_mut() {
            Some(rec) => {
                rec.depth += 1;
                rec.depth == 1
            }
            None => false,
        }
    });
    let start = Instant::now();
    let out = f();
    let elapsed = start.elapsed();
    RECORDER.with(|r| {
        if let Some(rec) = r.borrow_mut().as_mut() {
            rec.depth -= 1;
            if active {
                match phase {
                    Phase::Assembly => {
                        rec.assembly += elapsed;
                        rec.assembly_count += 1;
                    }
                    Phase::LinearSolve => {
                        rec.linear_solve += elapsed;
                        rec.solve_count += 1;
                    }
                    Phase::NnCorrection => rec.nn += elapsed,
                }
            }
        }
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phases_are_attributed_once() {
        let ((), t) = capture(|| {
            timed(Phase::Assembly, || {
                timed(Phase::LinearSolve, || std::thread::sleep(Duration::from_millis(2)));
            });
            timed(Phase::LinearSolve, || std::thread::sleep(Duration::from_millis(1)));
        });
        assert_eq!(t.assembly_count, 1);
        assert_eq!(t.solve_count, 1);
        assert!(t.assembly_ms >= 2.0 && t.linear_solve_ms >= 1.0);
        assert!(t.assembly_ms + t.linear_solve_ms + t.nn_correction_ms + t.rest_ms <= t.total_ms * 1.05 + 1e-9);
    }

    #[test]
    fn outside_capture_nothing_is_recorded() {
        assert_eq!(timed(Phase::Assembly, || 3), 3);
        let ((), t) = capture(|| {});
        assert_eq!(t.assembly_count, 0);
    }
}
