//! Fixed-chunk work splitting.
//!
//! Work over a point set is always cut into the same chunks, and per-chunk
//! results are returned in chunk order, so any reduction done by the caller is
//! independent of how many workers ran.

use std::ops::Range;
use std::sync::OnceLock;

/// Environment variable selecting the number of worker threads.
pub const WORKERS_ENV: &str = "GKPINN_WORKERS";

static WORKERS: OnceLock<usize> = OnceLock::new();

/// Worker count from [`WORKERS_ENV`], default 1.
pub fn workers() -> usize {
    *WORKERS.get_or_init(|| {
        std::env::var(WORKERS_ENV)
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
            .filter(|&w| w >= 1)
            .unwrap_or(1)
    })
}

pub fn chunk_ranges(n: usize, chunk: usize) -> Vec<Range<usize>> {
    let chunk = chunk.max(1);
    (0..n.div_ceil(chunk))
        .map(|i| i * chunk..((i + 1) * chunk).min(n))
        .collect()
}

/// Applies `f` to every chunk of `0..n` and returns the results in chunk order.
pub fn map_chunks<T, F>(n: usize, chunk: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(Range<usize>) -> T + Sync,
{
    map_chunks_with(workers(), n, chunk, f)
}

pub fn map_chunks_with<T, F>(workers: usize, n: usize, chunk: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(Range<usize>) -> T + Sync,
{
    let ranges = chunk_ranges(n, chunk);
    if workers <= 1 || ranges.len() <= 1 {
        return ranges.into_iter().map(f).collect();
    }
    let workers = workers.min(ranges.len());
    let mut slots: Vec<Option<T>> = (0..ranges.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let ranges = &ranges;
                let f = &f;
                scope.spawn(move || {
                    (w..ranges.len())
                        .step_by(workers)
                        .map(|i| (i, f(ranges[i].clone())))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, v) in h.join().expect("worker panicked") {
                slots[i] = Some(v);
            }
        }
    });
    slots.into_iter().map(|s| s.expect("every chunk computed")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges_cover_everything() {
        let r = chunk_ranges(10, 4);
        assert_eq!(r, vec![0..4, 4..8, 8..10]);
        assert!(chunk_ranges(0, 4).is_empty());
    }

    #[test]
    fn order_is_independent_of_workers() {
        let f = |r: Range<usize>| r.map(|i| (i as f64).sqrt()).sum::<f64>();
        let a = map_chunks_with(1, 1000, 64, f);
        let b = map_chunks_with(3, 1000, 64, f);
        assert_eq!(a, b);
    }
}
