//! Compensated and deterministic parallel summation.

use rayon::prelude::*;

/// Work is split into fixed-size chunks whose boundaries depend only on the
/// problem size, never on the number of worker threads.
pub const CHUNK: usize = 4096;

/// Neumaier's variant of Kahan summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    values.into_iter().collect::<CompensatedSum>().value()
}

/// Sums `f(i)` for `i in 0..len`. Each chunk of `CHUNK` consecutive indices
/// is summed sequentially; chunk totals are then combined in index order.
/// The result is bit-identical for any rayon pool size.
pub fn par_sum<F>(len: usize, f: F) -> f64
where
    F: Fn(std::ops::Range<usize>) -> CompensatedSum + Sync,
{
    let chunks = len.div_ceil(CHUNK);
    let partials: Vec<f64> = (0..chunks)
        .into_par_iter()
        .map(|c| f(c * CHUNK..((c + 1) * CHUNK).min(len)).value())
        .collect();
    compensated_sum(partials)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensation_recovers_small_terms() {
        let mut s = CompensatedSum::new();
        s.add(1e16);
        for _ in 0..1000 {
            s.add(1.0);
        }
        s.add(-1e16);
        assert_eq!(s.value(), 1000.0);
    }

    #[test]
    fn par_sum_is_pool_size_independent() {
        let f = |r: std::ops::Range<usize>| r.map(|i| ((i as f64) * 0.37).sin()).collect();
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let many = rayon::ThreadPoolBuilder::new()
            .num_threads(7)
            .build()
            .unwrap();
        let a = one.install(|| par_sum(50_000, f));
        let b = many.install(|| par_sum(50_000, f));
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
