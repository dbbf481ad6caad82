//! Delete-1 and delete-d jackknife variance estimators.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::Serialize;

use crate::combinatorics::{binom, binom_u64, next_combination, unrank_combination};
use crate::data::DataView;
use crate::error::{Error, Result};
use crate::stream::{self, tag};
use crate::sum::{compensated_sum, CHUNK};

pub const DEFAULT_DELETION_BUDGET: u64 = 1_000_000;

/// A real-valued statistic of a dataset.
///
/// `apply` sees a view that may omit deleted rows; any internal randomness
/// must be keyed on `view.original(..)` so that deletion does not redraw it.
pub trait Estimator<T>: Sync {
    /// Smallest view size the estimator accepts.
    fn min_n(&self) -> usize;

    fn apply(&self, view: DataView<'_, T>) -> Result<f64>;
}

pub struct FnEstimator<F> {
    min_n: usize,
    f: F,
}

impl<F> FnEstimator<F> {
    pub fn new(min_n: usize, f: F) -> Self {
        FnEstimator { min_n, f }
    }
}

impl<T, F> Estimator<T> for FnEstimator<F>
where
    F: Fn(DataView<'_, T>) -> Result<f64> + Sync,
{
    fn min_n(&self) -> usize {
        self.min_n
    }

    fn apply(&self, view: DataView<'_, T>) -> Result<f64> {
        (self.f)(view)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum JackknifeMode {
    Exact,
    /// `b` deletion sets drawn uniformly without replacement.
    Subsampled {
        b: u64,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JackknifeReport {
    pub variance: f64,
    pub d: usize,
    pub replicates: u64,
    pub mode: JackknifeMode,
    /// Statistic on the full dataset.
    pub estimate: f64,
}

#[derive(Debug, Clone)]
enum Sets {
    Exact { count: u64 },
    Sampled { flat: Vec<usize> },
}

/// The deletion sets a delete-d jackknife visits.
#[derive(Debug, Clone)]
pub struct DeletionPlan {
    n: usize,
    d: usize,
    mode: JackknifeMode,
    sets: Sets,
}

impl DeletionPlan {
    pub fn new(n: usize, d: usize, mode: JackknifeMode, budget: u64) -> Result<Self> {
        if d == 0 || d >= n {
            return Err(Error::InvalidArgument(format!(
                "need 1 <= d < n, got d = {d}, n = {n}"
            )));
        }
        let total = binom_u64(n as u64, d as u64);
        let sets = match mode {
            JackknifeMode::Exact => {
                let count =
                    total
                        .filter(|&c| c <= budget)
                        .ok_or_else(|| Error::BudgetExceeded {
                            needed: binom(n as u64, d as u64).to_string(),
                            budget,
                        })?;
                Sets::Exact { count }
            }
            JackknifeMode::Subsampled { b, seed } => Sets::Sampled {
                flat: sample_sets(n, d, b, total, seed)?,
            },
        };
        Ok(DeletionPlan { n, d, mode, sets })
    }

    pub fn len(&self) -> u64 {
        match &self.sets {
            Sets::Exact { count } => *count,
            Sets::Sampled { flat } => (flat.len() / self.d) as u64,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Applies `f` to every deletion set (sorted 0-based rows), in parallel,
    /// returning results in lexicographic order of the sets.
    pub fn evaluate<F>(&self, f: F) -> Result<Vec<f64>>
    where
        F: Fn(&[usize]) -> Result<f64> + Sync,
    {
        let (n, d) = (self.n, self.d);
        let chunks: Vec<Result<Vec<f64>>> = match &self.sets {
            Sets::Exact { count } => {
                let count = *count;
                (0..count.div_ceil(CHUNK as u64))
                    .into_par_iter()
                    .map(|c| {
                        let start = c * CHUNK as u64;
                        let len = (CHUNK as u64).min(count - start);
                        let mut del = unrank_combination(n, d, start);
                        let mut out = Vec::with_capacity(len as usize);
                        for step in 0..len {
                            if step > 0 {
                                next_combination(&mut del, n);
                            }
                            out.push(f(&del)?);
                        }
                        Ok(out)
                    })
                    .collect()
            }
            Sets::Sampled { flat } => flat
                .par_chunks(CHUNK * d)
                .map(|block| block.chunks_exact(d).map(&f).collect())
                .collect(),
        };
        let mut values = Vec::with_capacity(self.len() as usize);
        for c in chunks {
            values.extend(c?);
        }
        Ok(values)
    }

    /// ((n - d) / d) times the mean squared deviation of the deletion values.
    /// For the exact plan the mean runs over all C(n, d) sets, which is the
    /// delete-d formula verbatim.
    pub fn report(&self, estimate: f64, values: &[f64]) -> JackknifeReport {
        let ss = compensated_sum(values.iter().map(|v| (v - estimate) * (v - estimate)));
        let factor = (self.n - self.d) as f64 / self.d as f64;
        JackknifeReport {
            variance: factor * (ss / values.len() as f64),
            d: self.d,
            replicates: values.len() as u64,
            mode: self.mode,
            estimate,
        }
    }
}

fn sample_sets(n: usize, d: usize, b: u64, total: Option<u64>, seed: u64) -> Result<Vec<usize>> {
    if b == 0 {
        return Err(Error::InvalidArgument(
            "subsampled jackknife needs b >= 1".into(),
        ));
    }
    if total.is_some_and(|t| b > t) {
        return Err(Error::InvalidArgument(format!(
            "b = {b} exceeds the {} available deletion sets",
            total.unwrap()
        )));
    }
    let mut rng = stream::replicate_rng(seed, tag::DELETE, &[n as u64, d as u64, b]);
    let mut flat = Vec::with_capacity(b as usize * d);
    match total {
        Some(t) if t <= usize::MAX as u64 && t <= 4 * b.max(1 << 16) => {
            let mut ranks = rand::seq::index::sample(&mut rng, t as usize, b as usize).into_vec();
            ranks.sort_unstable();
            for r in ranks {
                flat.extend(unrank_combination(n, d, r as u64));
            }
        }
        _ => {
            let mut chosen = BTreeSet::new();
            while (chosen.len() as u64) < b {
                let mut t = rand::seq::index::sample(&mut rng, n, d).into_vec();
                t.sort_unstable();
                chosen.insert(t);
            }
            flat.extend(chosen.into_iter().flatten());
        }
    }
    Ok(flat)
}

fn survivors(n: usize, deleted: &[usize]) -> Vec<usize> {
    let mut rows = Vec::with_capacity(n - deleted.len());
    let mut k = 0;
    for i in 0..n {
        if k < deleted.len() && deleted[k] == i {
            k += 1;
        } else {
            rows.push(i);
        }
    }
    rows
}

pub fn jkd_variance_with_budget<T: Sync, E: Estimator<T> + ?Sized>(
    est: &E,
    data: &[T],
    d: usize,
    mode: JackknifeMode,
    budget: u64,
) -> Result<JackknifeReport> {
    let n = data.len();
    if d == 0 || n < d + est.min_n().max(1) {
        return Err(Error::DatasetTooSmall {
            n,
            needed: d.max(1) + est.min_n().max(1),
        });
    }
    let plan = DeletionPlan::new(n, d, mode, budget)?;
    let estimate = est.apply(DataView::full(data))?;
    let values = plan.evaluate(|del| {
        let rows = survivors(n, del);
        est.apply(DataView::subset(data, &rows))
    })?;
    Ok(plan.report(estimate, &values))
}

pub fn jkd_variance<T: Sync, E: Estimator<T> + ?Sized>(
    est: &E,
    data: &[T],
    d: usize,
    mode: JackknifeMode,
) -> Result<JackknifeReport> {
    jkd_variance_with_budget(est, data, d, mode, DEFAULT_DELETION_BUDGET)
}

/// ((n - 1) / n) * sum_i (U(D_{-i}) - U(D))^2.
pub fn jk_variance<T: Sync, E: Estimator<T> + ?Sized>(
    est: &E,
    data: &[T],
) -> Result<JackknifeReport> {
    jkd_variance(est, data, 1, JackknifeMode::Exact)
}

/// Sample-mean estimator over scalar data.
pub fn sample_mean() -> FnEstimator<impl Fn(DataView<'_, f64>) -> Result<f64> + Sync> {
    FnEstimator::new(1, |v: DataView<'_, f64>| {
        Ok(v.iter().sum::<f64>() / v.len() as f64)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unbiased_var(z: &[f64]) -> f64 {
        let n = z.len() as f64;
        let m = z.iter().sum::<f64>() / n;
        z.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
    }

    #[test]
    fn mean_of_one_two_three() {
        let r = jk_variance(&sample_mean(), &[1.0, 2.0, 3.0]).unwrap();
        assert!((r.variance - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.replicates, 3);
        assert_eq!(r.estimate, 2.0);
    }

    #[test]
    fn constant_estimator_has_zero_variance() {
        let c = FnEstimator::new(1, |_: DataView<'_, f64>| Ok(7.0));
        assert_eq!(
            jk_variance(&c, &[1.0, 4.0, 2.0, 9.0]).unwrap().variance,
            0.0
        );
        assert_eq!(
            jkd_variance(&c, &[1.0, 4.0, 2.0, 9.0], 2, JackknifeMode::Exact)
                .unwrap()
                .variance,
            0.0
        );
    }

    #[test]
    fn delete_two_on_one_to_four() {
        // hand evaluation: the six pair deletions leave means
        // 3.5, 3, 2.5, 2.5, 2, 1.5 around U = 2.5; squares sum to 2.5
        let r = jkd_variance(
            &sample_mean(),
            &[1.0, 2.0, 3.0, 4.0],
            2,
            JackknifeMode::Exact,
        )
        .unwrap();
        let expected = (4.0 - 2.0) / 2.0 * (2.5 / 6.0);
        assert!((r.variance - expected).abs() < 1e-15);
        assert_eq!(r.replicates, 6);
    }

    #[test]
    fn delete_one_is_the_basic_jackknife_bitwise() {
        let z = [0.3, 1.9, -2.2, 4.1, 0.0, 3.3, 1.1];
        let a = jk_variance(&sample_mean(), &z).unwrap();
        let b = jkd_variance(&sample_mean(), &z, 1, JackknifeMode::Exact).unwrap();
        assert_eq!(a.variance.to_bits(), b.variance.to_bits());
    }

    #[test]
    fn full_coverage_subsampling_equals_exact() {
        let z = [0.3, 1.9, -2.2, 4.1, 0.0, 3.3, 1.1];
        let exact = jkd_variance(&sample_mean(), &z, 3, JackknifeMode::Exact).unwrap();
        let sub = jkd_variance(
            &sample_mean(),
            &z,
            3,
            JackknifeMode::Subsampled { b: 35, seed: 4 },
        )
        .unwrap();
        assert_eq!(exact.variance.to_bits(), sub.variance.to_bits());
        assert!(jkd_variance(
            &sample_mean(),
            &z,
            3,
            JackknifeMode::Subsampled { b: 36, seed: 4 }
        )
        .is_err());
    }

    #[test]
    fn subsampled_plan_draws_distinct_sorted_sets() {
        let plan = DeletionPlan::new(
            200,
            3,
            JackknifeMode::Subsampled { b: 500, seed: 1 },
            DEFAULT_DELETION_BUDGET,
        )
        .unwrap();
        assert_eq!(plan.len(), 500);
        let sets = match &plan.sets {
            Sets::Sampled { flat } => flat.chunks_exact(3).map(|c| c.to_vec()).collect::<Vec<_>>(),
            _ => unreachable!(),
        };
        assert!(sets.windows(2).all(|w| w[0] < w[1]));
        assert!(sets.iter().all(|s| s[0] < s[1] && s[1] < s[2]));
    }

    #[test]
    fn guards() {
        assert!(matches!(
            jk_variance(&sample_mean(), &[1.0]),
            Err(Error::DatasetTooSmall { .. })
        ));
        let z: Vec<f64> = (0..60).map(f64::from).collect();
        assert!(matches!(
            jkd_variance(&sample_mean(), &z, 30, JackknifeMode::Exact),
            Err(Error::BudgetExceeded { .. })
        ));
    }

    proptest! {
        #[test]
        fn mean_identity(z in prop::collection::vec(-100.0f64..100.0, 2..40)) {
            let r = jk_variance(&sample_mean(), &z).unwrap();
            let expected = unbiased_var(&z) / z.len() as f64;
            prop_assert!((r.variance - expected).abs() <= 1e-12 * expected.max(1.0));
        }

        #[test]
        fn nonnegative_shift_and_scale(
            z in prop::collection::vec(-10.0f64..10.0, 5..12),
            d in 1usize..3,
            shift in -50.0f64..50.0,
            scale in -4.0f64..4.0,
        ) {
            let base = FnEstimator::new(1, |v: DataView<'_, f64>| {
                Ok(v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64)
            });
            let moved = FnEstimator::new(1, |v: DataView<'_, f64>| {
                Ok(scale * v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64 + shift)
            });
            let a = jkd_variance(&base, &z, d, JackknifeMode::Exact).unwrap().variance;
            let b = jkd_variance(&moved, &z, d, JackknifeMode::Exact).unwrap().variance;
            prop_assert!(a >= 0.0 && b >= 0.0);
            prop_assert!((b - scale * scale * a).abs() <= 1e-9 * (1.0 + b.abs()));
        }
    }
}
