//! Independent jobs on a bounded pool of scoped threads.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

pub const THREADS_ENV: &str = "GBLEND_THREADS";

/// Worker cap: `GBLEND_THREADS` when set to a positive integer, else the
/// available parallelism.
pub fn worker_count() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .filter(|&n: &usize| n > 0)
        .unwrap_or_else(|| thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs `job(0..n)` on at most `workers` threads and returns the results in
/// job order.
pub fn run_jobs<T, F>(n: usize, workers: usize, job: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..n).map(|_| None).collect());
    thread::scope(|s| {
        for _ in 0..workers.clamp(1, n.max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let out = job(i);
                slots.lock().expect("no job panicked while holding the lock")[i] = Some(out);
            });
        }
    });
    slots.into_inner().expect("workers joined").into_iter().map(|r| r.expect("every job ran")).collect()
}
