//! Fixed-shard work partitioning.
//!
//! Work over `n` items is split into a worker-count-independent set of
//! contiguous shards; threads claim shards from an atomic counter and the
//! caller merges per-shard results in ascending shard order. Because the
//! shard boundaries and the merge order never depend on the number of
//! workers, results are bitwise identical for any thread count.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

/// Shard count used regardless of worker count (clamped to the item count).
pub const SHARDS: u64 = 512;

pub fn shard_bounds(n_items: u64, shard: u64, n_shards: u64) -> std::ops::Range<u64> {
    let lo = shard * n_items / n_shards;
    let hi = (shard + 1) * n_items / n_shards;
    lo..hi
}

/// Apply `shard_fn` to every shard of `0..n_items`, on `workers` threads,
/// and return the per-shard outputs in shard order. The first error
/// cancels outstanding work.
pub fn run_sharded<S, E, F>(n_items: u64, workers: usize, shard_fn: F) -> Result<Vec<S>, E>
where
    S: Send,
    E: Send,
    F: Fn(std::ops::Range<u64>) -> Result<S, E> + Sync,
{
    let n_shards = SHARDS.min(n_items.max(1));
    let workers = workers.max(1).min(n_shards as usize);
    let next = AtomicU64::new(0);
    let failed = std::sync::atomic::AtomicBool::new(false);
    let slots: Vec<Mutex<Option<Result<S, E>>>> = (0..n_shards).map(|_| Mutex::new(None)).collect();

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let s = next.fetch_add(1, Ordering::Relaxed);
                if s >= n_shards || failed.load(Ordering::Relaxed) {
                    break;
                }
                let out = shard_fn(shard_bounds(n_items, s, n_shards));
                if out.is_err() {
                    failed.store(true, Ordering::Relaxed);
                }
                *slots[s as usize].lock().unwrap() = Some(out);
            });
        }
    });

    let mut results = Vec::with_capacity(n_shards as usize);
    for slot in slots {
        match slot.into_inner().unwrap() {
            Some(Ok(s)) => results.push(s),
            Some(Err(e)) => return Err(e),
            // A shard can be skipped only after another shard failed.
            None => continue,
        }
    }
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shards_cover_everything_once() {
        for n in [1u64, 7, 511, 512, 513, 100_000] {
            let n_shards = SHARDS.min(n);
            let mut total = 0u64;
            let mut prev_end = 0u64;
            for s in 0..n_shards {
                let r = shard_bounds(n, s, n_shards);
                assert_eq!(r.start, prev_end);
                prev_end = r.end;
                total += r.end - r.start;
            }
            assert_eq!(prev_end, n);
            assert_eq!(total, n);
        }
    }

    #[test]
    fn worker_count_does_not_change_the_sum() {
        let sum = |workers: usize| -> u64 {
            run_sharded::<u64, (), _>(10_000, workers, |r| Ok(r.map(|i| i * i).sum()))
                .unwrap()
                .iter()
                .sum()
        };
        let s1 = sum(1);
        assert_eq!(s1, sum(2));
        assert_eq!(s1, sum(7));
    }

    #[test]
    fn first_error_is_reported() {
        let out = run_sharded::<u64, String, _>(1000, 4, |r| {
            if r.contains(&500) {
                Err("boom".to_string())
            } else {
                Ok(0)
            }
        });
        assert_eq!(out.unwrap_err(), "boom");
    }
}
