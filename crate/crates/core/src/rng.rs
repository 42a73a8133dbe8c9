//! Reproducible random streams.
//!
//! Every Monte Carlo workload is cut into fixed-size chunks and chunk `i`
//! draws from its own ChaCha stream keyed by `(master seed, label, i)`.
//! Results are gathered in chunk order, so the output depends on the seed and
//! the configuration only: not on how rayon schedules the chunks, and not on
//! the number of worker threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub type StreamRng = ChaCha8Rng;

/// Default number of trials per chunk.
pub const CHUNK: u64 = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Seeder {
    master: u64,
}

impl Seeder {
    pub fn new(master: u64) -> Self {
        Seeder { master }
    }

    /// Derive a seeder from a caller-provided generator (one `u64` draw).
    pub fn from_rng<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Seeder { master: rng.random() }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    pub fn child(&self, label: &str) -> Seeder {
        Seeder {
            master: splitmix(self.master ^ fnv1a(label)),
        }
    }

    pub fn stream(&self, label: &str, index: u64) -> StreamRng {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix(self.master ^ fnv1a(label)));
        rng.set_stream(index);
        rng
    }
}

/// FNV-1a; stable across platforms and toolchains, unlike `DefaultHasher`.
pub fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Run `f(rng, first_trial, n_trials)` over `total` trials split in chunks of
/// `chunk`, in parallel, returning per-chunk outputs in chunk order.
pub fn par_chunks<T, F>(seeder: &Seeder, label: &str, total: u64, chunk: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut StreamRng, u64, u64) -> T + Sync + Send,
{
    let chunk = chunk.max(1);
    let n_chunks = total.div_ceil(chunk);
    (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let start = c * chunk;
            let len = chunk.min(total - start);
            let mut rng = seeder.stream(label, c);
            f(&mut rng, start, len)
        })
        .collect()
}

/// Run `f` once per item index with an independent stream; ordered output.
pub fn par_items<T, F>(seeder: &Seeder, label: &str, count: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut StreamRng, u64) -> T + Sync + Send,
{
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = seeder.stream(label, i);
            f(&mut rng, i)
        })
        .collect()
}

/// Execute `op` on a dedicated pool with `workers` threads (0 = rayon default).
pub fn with_workers<T: Send>(workers: usize, op: impl FnOnce() -> T + Send) -> T {
    if workers == 0 {
        return op();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(op),
        Err(_) => op(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunked_output_ignores_worker_count() {
        let s = Seeder::new(7);
        let run = |w| {
            with_workers(w, || {
                par_chunks(&s, "t", 10_000, 333, |rng, _, len| {
                    (0..len).map(|_| rng.random::<u32>() as u64).sum::<u64>()
                })
            })
        };
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn labels_give_distinct_streams() {
        let s = Seeder::new(1);
        let a: u64 = s.stream("a", 0).random();
        let b: u64 = s.stream("b", 0).random();
        let c: u64 = s.stream("a", 1).random();
        assert_ne!(a, b);
        assert_ne!(a, c);
    }
}
