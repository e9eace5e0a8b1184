//! Per-point random streams, bounded parallelism and timing.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub const WARMUP_RUNS: usize = 3;
pub const TIMED_RUNS: usize = 7;

/// Stream `index` of the generator seeded with `seed`; independent of execution order.
pub fn point_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Worker count from `BENCH_THREADS` (default: all cores).
pub fn thread_cap() -> usize {
    std::env::var("BENCH_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|n| *n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Maps `f` over `items` on at most [`thread_cap`] threads, preserving order.
pub fn par_map<I: Sync, O: Send>(items: &[I], f: impl Fn(usize, &I) -> O + Sync + Send) -> Vec<O> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_cap())
        .build()
        .expect("thread pool");
    pool.install(|| items.par_iter().enumerate().map(|(i, x)| f(i, x)).collect())
}

/// Median wall time in milliseconds of [`TIMED_RUNS`] runs after [`WARMUP_RUNS`] warmups.
pub fn median_ms(mut f: impl FnMut()) -> f64 {
    for _ in 0..WARMUP_RUNS {
        f();
    }
    let mut t: Vec<f64> = (0..TIMED_RUNS)
        .map(|_| {
            let start = Instant::now();
            f();
            start.elapsed().as_secs_f64() * 1e3
        })
        .collect();
    t.sort_by(f64::total_cmp);
    t[TIMED_RUNS / 2]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_independent_of_order() {
        let a: Vec<u64> = (0..4).map(|i| point_rng(9, i).gen()).collect();
        let b: Vec<u64> = (0..4).rev().map(|i| point_rng(9, i).gen()).collect::<Vec<_>>().into_iter().rev().collect();
        assert_eq!(a, b);
        assert_ne!(a[0], a[1]);
    }

    #[test]
    fn par_map_keeps_order() {
        let v: Vec<usize> = (0..20).collect();
        assert_eq!(par_map(&v, |_, x| x * 2), v.iter().map(|x| x * 2).collect::<Vec<_>>());
    }
}
