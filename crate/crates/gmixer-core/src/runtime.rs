use std::sync::atomic::{AtomicUsize, Ordering};

static THREAD_CAP: AtomicUsize = AtomicUsize::new(0);

/// Worker-thread budget for forward-only kernels and evaluation sharding.
///
/// Resolution order: explicit [`set_thread_cap`] call, then the
/// `GMIXER_THREADS` environment variable, then machine parallelism.
pub fn thread_cap() -> usize {
    let set = THREAD_CAP.load(Ordering::Relaxed);
    if set > 0 {
        return set;
    }
    let resolved = std::env::var("GMIXER_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        });
    THREAD_CAP.store(resolved, Ordering::Relaxed);
    resolved
}

/// Pin the worker budget for this process (the benchmark forces 1 so that
/// timings are not skewed by sibling threads).
pub fn set_thread_cap(n: usize) {
    THREAD_CAP.store(n.max(1), Ordering::Relaxed);
}
