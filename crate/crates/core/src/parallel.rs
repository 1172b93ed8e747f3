//! Per-agent fan-out over scoped threads. Results are collected in index order, so
//! the output never depends on scheduling.

use std::sync::OnceLock;

/// Below this much work a fan-out costs more than it saves.
pub const PARALLEL_WORK_THRESHOLD: usize = 1 << 16;

static CAP: OnceLock<usize> = OnceLock::new();

/// Worker cap: `MSGNE_THREADS` when set to a positive integer, otherwise the
/// available hardware parallelism.
pub fn thread_cap() -> usize {
    *CAP.get_or_init(|| {
        std::env::var("MSGNE_THREADS")
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
            .filter(|&v| v > 0)
            .unwrap_or_else(|| {
                std::thread::available_parallelism().map_or(1, |n| n.get())
            })
    })
}

pub fn map_indices<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync) -> Vec<T> {
    let workers = thread_cap().min(n);
    if workers <= 1 {
        return (0..n).map(f).collect();
    }
    let chunk = n.div_ceil(workers);
    let f = &f;
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                s.spawn(move || {
                    (w * chunk..((w + 1) * chunk).min(n))
                        .map(f)
                        .collect::<Vec<T>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}
