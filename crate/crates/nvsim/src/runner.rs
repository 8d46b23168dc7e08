//! Deterministic parallel map over fixed-size chunks.
//!
//! Work is split into chunks whose boundaries depend only on the item count,
//! threads pull chunk indices from a shared counter, and results come back in
//! chunk order. Combined with per-item RNG streams this makes every output
//! independent of the thread count.

use std::ops::Range;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

pub const CHUNK: u64 = 4096;

pub fn chunks(n_items: u64, chunk: u64) -> Vec<Range<u64>> {
    let chunk = chunk.max(1);
    (0..n_items.div_ceil(chunk)).map(|k| k * chunk..((k + 1) * chunk).min(n_items)).collect()
}

/// Applies `f` to every chunk of `0..n_items` on up to `threads` threads and
/// returns the results in chunk order. Stops at the first error, reporting
/// the one from the lowest chunk.
pub fn map_chunks<T, E, F>(n_items: u64, chunk: u64, threads: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(Range<u64>) -> Result<T, E> + Sync,
{
    let ranges = chunks(n_items, chunk);
    let threads = threads.clamp(1, ranges.len().max(1));
    if threads == 1 {
        return ranges.into_iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let failed = std::sync::atomic::AtomicBool::new(false);
    let slots: Vec<Mutex<Option<Result<T, E>>>> = ranges.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..threads {
            s.spawn(|| loop {
                if failed.load(Ordering::Relaxed) {
                    break;
                }
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some(r) = ranges.get(k) else { break };
                let out = f(r.clone());
                if out.is_err() {
                    failed.store(true, Ordering::Relaxed);
                }
                *slots[k].lock().unwrap() = Some(out);
            });
        }
    });
    let mut out = Vec::with_capacity(slots.len());
    for slot in slots {
        match slot.into_inner().unwrap() {
            Some(Ok(v)) => out.push(v),
            Some(Err(e)) => return Err(e),
            // skipped after another chunk failed
            None => continue,
        }
    }
    Ok(out)
}
