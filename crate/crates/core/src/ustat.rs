//! Complete, Bernoulli-incomplete and Horvitz–Thompson U-statistics.
//!
//! Subsamples are always identified by their original row indices. Kernel
//! randomness and selection indicators are keyed on those indices, so a
//! statistic evaluated on a deletion view sees exactly the subsamples (and
//! draws) of the full dataset that avoid the deleted rows.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use rand_distr::{Binomial, Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::combinatorics::{binom, binom_f64, binom_u64, next_combination, unrank_combination};
use crate::data::DataView;
use crate::error::{Error, Result};
use crate::jackknife::Estimator;
use crate::kernel::Kernel;
use crate::stream::{self, tag};
use crate::sum::{par_sum, CompensatedSum};
use num_traits::ToPrimitive;

pub const DEFAULT_BUDGET: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingPlan {
    Complete,
    Bernoulli { target_n: f64 },
    HorvitzThompson { target_n: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    /// Maximum number of subsamples that may be enumerated.
    pub budget: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            budget: DEFAULT_BUDGET,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UStatResult {
    pub value: f64,
    /// Number of subsamples that entered the statistic (N-hat).
    pub selected: u64,
    pub plan: SamplingPlan,
    pub seed: u64,
    /// Set when a Horvitz–Thompson statistic saw no subsample.
    pub empty: bool,
}

fn check_order(n: usize, s: usize) -> Result<()> {
    if s == 0 {
        return Err(Error::InvalidOrder { n, s });
    }
    if s > n {
        return Err(Error::OrderExceedsSample { n, s });
    }
    Ok(())
}

#[inline]
fn omega_key(randomized: bool, seed: u64, tuple: &[usize]) -> u64 {
    if randomized {
        stream::tuple_key(seed, tag::OMEGA, tuple)
    } else {
        0
    }
}

/// Sum of the kernel over all size-s subsamples of the view, in lexicographic
/// order of view positions.
fn complete_sum<T: Sync, K: Kernel<T>>(
    kernel: &K,
    view: DataView<'_, T>,
    omega_seed: u64,
    count: u64,
) -> f64 {
    let n = view.len();
    let s = kernel.order();
    let randomized = kernel.randomized();
    par_sum(count as usize, |range| {
        let mut acc = CompensatedSum::new();
        let mut pos = unrank_combination(n, s, range.start as u64);
        let mut orig = vec![0usize; s];
        let mut refs: Vec<&T> = Vec::with_capacity(s);
        for step in 0..range.len() {
            if step > 0 {
                next_combination(&mut pos, n);
            }
            refs.clear();
            for (o, &p) in orig.iter_mut().zip(&pos) {
                *o = view.original(p);
                refs.push(view.get(p));
            }
            acc.add(kernel.eval(&refs, omega_key(randomized, omega_seed, &orig)));
        }
        acc
    })
}

pub fn eval_complete<T: Sync, K: Kernel<T>>(
    kernel: &K,
    view: DataView<'_, T>,
    omega_seed: u64,
    opts: &EvalOptions,
) -> Result<UStatResult> {
    let n = view.len();
    let s = kernel.order();
    check_order(n, s)?;
    let count = binom_u64(n as u64, s as u64)
        .filter(|&c| c <= opts.budget)
        .ok_or_else(|| Error::BudgetExceeded {
            needed: binom(n as u64, s as u64).to_string(),
            budget: opts.budget,
        })?;
    let sum = complete_sum(kernel, view, omega_seed, count);
    Ok(UStatResult {
        value: sum / count as f64,
        selected: count,
        plan: SamplingPlan::Complete,
        seed: omega_seed,
        empty: false,
    })
}

/// Subsamples selected by independent Bernoulli(p) indicators over all
/// size-s subsets of a dataset of `universe` rows.
#[derive(Debug, Clone)]
pub struct Selection {
    universe: usize,
    order: usize,
    target_n: f64,
    p: f64,
    /// Flattened tuples of original indices, lexicographically sorted.
    tuples: Vec<usize>,
}

impl Selection {
    /// Draws the selection. When C(universe, s) fits the budget every subset
    /// gets its own keyed uniform and is kept iff it falls below p. Otherwise
    /// N-hat is drawn first and that many distinct subsets are sampled
    /// uniformly, which has the same law.
    pub fn draw(
        universe: usize,
        order: usize,
        target_n: f64,
        seed: u64,
        opts: &EvalOptions,
    ) -> Result<Selection> {
        check_order(universe, order)?;
        let total = binom(universe as u64, order as u64);
        let total_f = total.to_f64().unwrap_or(f64::INFINITY);
        if !(target_n > 0.0) || target_n > total_f {
            return Err(Error::InvalidSampling(format!(
                "target N = {target_n} must lie in (0, C({universe},{order}) = {total}]"
            )));
        }
        let p = if target_n == total_f {
            1.0
        } else {
            target_n / total_f
        };
        let tuples = match total.to_u64().filter(|&c| c <= opts.budget) {
            Some(count) => Self::enumerate(universe, order, p, seed, count),
            None => Self::sparse(universe, order, &total, p, target_n, seed)?,
        };
        Ok(Selection {
            universe,
            order,
            target_n,
            p,
            tuples,
        })
    }

    fn enumerate(n: usize, s: usize, p: f64, seed: u64, count: u64) -> Vec<usize> {
        use rayon::prelude::*;
        let chunk = crate::sum::CHUNK as u64;
        let parts: Vec<Vec<usize>> = (0..count.div_ceil(chunk))
            .into_par_iter()
            .map(|c| {
                let start = c * chunk;
                let len = chunk.min(count - start);
                let mut pos = unrank_combination(n, s, start);
                let mut out = Vec::new();
                for step in 0..len {
                    if step > 0 {
                        next_combination(&mut pos, n);
                    }
                    if stream::unit_uniform(stream::tuple_key(seed, tag::SELECT, &pos)) < p {
                        out.extend_from_slice(&pos);
                    }
                }
                out
            })
            .collect();
        parts.concat()
    }

    fn sparse(
        n: usize,
        s: usize,
        total: &num_bigint::BigUint,
        p: f64,
        target_n: f64,
        seed: u64,
    ) -> Result<Vec<usize>> {
        let mut rng = stream::replicate_rng(seed, tag::SPARSE, &[n as u64, s as u64]);
        let count = match total.to_u64() {
            Some(t) => Binomial::new(t, p)
                .map_err(|e| Error::InvalidSampling(e.to_string()))?
                .sample(&mut rng),
            // p < 2^-64: the binomial is Poisson to far below double precision
            None => Poisson::new(target_n)
                .map_err(|e| Error::InvalidSampling(e.to_string()))?
                .sample(&mut rng) as u64,
        };
        let mut chosen: BTreeSet<Vec<usize>> = BTreeSet::new();
        while (chosen.len() as u64) < count {
            let mut t = rand::seq::index::sample(&mut rng, n, s).into_vec();
            t.sort_unstable();
            chosen.insert(t);
        }
        Ok(chosen.into_iter().flatten().collect())
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn target_n(&self) -> f64 {
        self.target_n
    }

    pub fn universe(&self) -> usize {
        self.universe
    }

    pub fn len(&self) -> usize {
        self.tuples.len() / self.order.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    pub fn tuples(&self) -> impl Iterator<Item = &[usize]> {
        self.tuples.chunks_exact(self.order)
    }

    /// Kernel sum and count over the selected subsamples lying inside `view`.
    pub fn sum_over<T: Sync, K: Kernel<T>>(
        &self,
        kernel: &K,
        view: DataView<'_, T>,
        omega_seed: u64,
    ) -> (f64, u64) {
        let s = self.order;
        let mask = view.mask();
        let data = view.all();
        let randomized = kernel.randomized();
        let inside = |t: &[usize]| t.iter().all(|&i| mask[i]);
        let count = self.tuples().filter(|t| inside(t)).count() as u64;
        let sum = par_sum(self.len(), |range| {
            let mut acc = CompensatedSum::new();
            let mut refs: Vec<&T> = Vec::with_capacity(s);
            for t in self.tuples[range.start * s..range.end * s].chunks_exact(s) {
                if !inside(t) {
                    continue;
                }
                refs.clear();
                refs.extend(t.iter().map(|&i| &data[i]));
                acc.add(kernel.eval(&refs, omega_key(randomized, omega_seed, t)));
            }
            acc
        });
        (sum, count)
    }
}

fn check_selection<T>(sel: &Selection, view: &DataView<'_, T>, s: usize) -> Result<()> {
    if sel.universe != view.universe() || sel.order != s {
        return Err(Error::InvalidSampling(
            "selection was drawn for a different dataset or order".into(),
        ));
    }
    check_order(view.len(), s)
}

/// N-hat-normalized statistic over a pre-drawn selection.
pub fn incomplete_with<T: Sync, K: Kernel<T>>(
    kernel: &K,
    view: DataView<'_, T>,
    sel: &Selection,
    omega_seed: u64,
    rng_seed: u64,
) -> Result<UStatResult> {
    check_selection(sel, &view, kernel.order())?;
    let (sum, count) = sel.sum_over(kernel, view, omega_seed);
    if count == 0 {
        return Err(Error::EmptySelection);
    }
    Ok(UStatResult {
        value: sum / count as f64,
        selected: count,
        plan: SamplingPlan::Bernoulli {
            target_n: sel.target_n,
        },
        seed: rng_seed,
        empty: false,
    })
}

/// Horvitz–Thompson statistic over a pre-drawn selection:
/// C(n_view, s)^{-1} * sum of (rho / p) h, p fixed by the full dataset.
pub fn ht_with<T: Sync, K: Kernel<T>>(
    kernel: &K,
    view: DataView<'_, T>,
    sel: &Selection,
    omega_seed: u64,
    rng_seed: u64,
) -> Result<UStatResult> {
    let s = kernel.order();
    check_selection(sel, &view, s)?;
    let (sum, count) = sel.sum_over(kernel, view, omega_seed);
    // p * C(n_view, s) = N * C(n_view, s) / C(n_full, s); exactly N on the full view
    let shrink = if view.len() == view.universe() {
        1.0
    } else {
        binom_f64(view.len() as u64, s as u64) / binom_f64(view.universe() as u64, s as u64)
    };
    let expected = sel.target_n * shrink;
    Ok(UStatResult {
        value: if count == 0 { 0.0 } else { sum / expected },
        selected: count,
        plan: SamplingPlan::HorvitzThompson {
            target_n: sel.target_n,
        },
        seed: rng_seed,
        empty: count == 0,
    })
}

pub fn eval_incomplete<T: Sync, K: Kernel<T>>(
    kernel: &K,
    view: DataView<'_, T>,
    target_n: f64,
    rng_seed: u64,
    omega_seed: u64,
    opts: &EvalOptions,
) -> Result<UStatResult> {
    check_order(view.len(), kernel.order())?;
    let sel = Selection::draw(view.universe(), kernel.order(), target_n, rng_seed, opts)?;
    incomplete_with(kernel, view, &sel, omega_seed, rng_seed)
}

pub fn eval_ht<T: Sync, K: Kernel<T>>(
    kernel: &K,
    view: DataView<'_, T>,
    target_n: f64,
    rng_seed: u64,
    omega_seed: u64,
    opts: &EvalOptions,
) -> Result<UStatResult> {
    check_order(view.len(), kernel.order())?;
    let sel = Selection::draw(view.universe(), kernel.order(), target_n, rng_seed, opts)?;
    ht_with(kernel, view, &sel, omega_seed, rng_seed)
}

pub fn eval<T: Sync, K: Kernel<T>>(
    kernel: &K,
    view: DataView<'_, T>,
    plan: SamplingPlan,
    rng_seed: u64,
    omega_seed: u64,
    opts: &EvalOptions,
) -> Result<UStatResult> {
    match plan {
        SamplingPlan::Complete => eval_complete(kernel, view, omega_seed, opts),
        SamplingPlan::Bernoulli { target_n } => {
            eval_incomplete(kernel, view, target_n, rng_seed, omega_seed, opts)
        }
        SamplingPlan::HorvitzThompson { target_n } => {
            eval_ht(kernel, view, target_n, rng_seed, omega_seed, opts)
        }
    }
}

/// A U-statistic as a jackknife-able estimator. The selection is drawn once
/// over the full dataset and reused for every deletion view.
pub struct UStatEstimator<K> {
    pub kernel: K,
    pub plan: SamplingPlan,
    pub rng_seed: u64,
    pub omega_seed: u64,
    pub opts: EvalOptions,
    selection: OnceLock<Result<Selection>>,
}

impl<K> UStatEstimator<K> {
    pub fn new(kernel: K, plan: SamplingPlan, rng_seed: u64, omega_seed: u64) -> Self {
        UStatEstimator {
            kernel,
            plan,
            rng_seed,
            omega_seed,
            opts: EvalOptions::default(),
            selection: OnceLock::new(),
        }
    }

    pub fn with_options(mut self, opts: EvalOptions) -> Self {
        self.opts = opts;
        self
    }

    fn selection(&self, universe: usize, order: usize, target_n: f64) -> Result<&Selection> {
        let sel = self
            .selection
            .get_or_init(|| Selection::draw(universe, order, target_n, self.rng_seed, &self.opts));
        match sel {
            Ok(s) if s.universe == universe => Ok(s),
            Ok(_) => Err(Error::InvalidSampling(
                "estimator reused on a different dataset".into(),
            )),
            Err(e) => Err(e.clone()),
        }
    }

    pub fn evaluate<T: Sync>(&self, view: DataView<'_, T>) -> Result<UStatResult>
    where
        K: Kernel<T>,
    {
        match self.plan {
            SamplingPlan::Complete => {
                eval_complete(&self.kernel, view, self.omega_seed, &self.opts)
            }
            SamplingPlan::Bernoulli { target_n } => {
                let sel = self.selection(view.universe(), self.kernel.order(), target_n)?;
                incomplete_with(&self.kernel, view, sel, self.omega_seed, self.rng_seed)
            }
            SamplingPlan::HorvitzThompson { target_n } => {
                let sel = self.selection(view.universe(), self.kernel.order(), target_n)?;
                ht_with(&self.kernel, view, sel, self.omega_seed, self.rng_seed)
            }
        }
    }
}

impl<T: Sync, K: Kernel<T>> Estimator<T> for UStatEstimator<K> {
    fn min_n(&self) -> usize {
        self.kernel.order()
    }

    fn apply(&self, view: DataView<'_, T>) -> Result<f64> {
        self.evaluate(view).map(|r| r.value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{ConstantKernel, MeanKernel, SignFlipKernel, VarianceKernel};
    use rand::seq::SliceRandom;
    use rand::Rng;

    const OPTS: EvalOptions = EvalOptions {
        budget: DEFAULT_BUDGET,
    };

    #[test]
    fn complete_worked_examples() {
        let z = [1.0, 2.0, 3.0];
        let v = DataView::full(&z);
        assert_eq!(
            eval_complete(&MeanKernel { order: 1 }, v, 0, &OPTS)
                .unwrap()
                .value,
            2.0
        );
        let var = eval_complete(&VarianceKernel { order: 2 }, v, 0, &OPTS).unwrap();
        assert!((var.value - 1.0).abs() < 1e-15);
        assert_eq!(var.selected, 3);
        let c = eval_complete(
            &ConstantKernel {
                order: 2,
                value: 4.5,
            },
            v,
            0,
            &OPTS,
        )
        .unwrap();
        assert_eq!(c.value, 4.5);
    }

    #[test]
    fn complete_errors() {
        let z = [1.0, 2.0];
        let v = DataView::full(&z);
        assert!(matches!(
            eval_complete(&MeanKernel { order: 3 }, v, 0, &OPTS),
            Err(Error::OrderExceedsSample { .. })
        ));
        let big: Vec<f64> = (0..40).map(f64::from).collect();
        let tight = EvalOptions { budget: 1000 };
        assert!(matches!(
            eval_complete(&MeanKernel { order: 5 }, DataView::full(&big), 0, &tight),
            Err(Error::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn variance_kernel_of_any_order_gives_sample_variance() {
        let mut rng = stream::rng(3);
        let z: Vec<f64> = (0..9).map(|_| rng.random::<f64>()).collect();
        let mean = z.iter().sum::<f64>() / 9.0;
        let s2 = z.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 8.0;
        for s in 2..=6 {
            let u =
                eval_complete(&VarianceKernel { order: s }, DataView::full(&z), 0, &OPTS).unwrap();
            assert!((u.value - s2).abs() < 1e-13, "s = {s}");
        }
    }

    #[test]
    fn complete_is_invariant_to_row_order() {
        let mut rng = stream::rng(11);
        let z: Vec<f64> = (0..8).map(|_| rng.random::<f64>()).collect();
        let k = VarianceKernel { order: 3 };
        let a = eval_complete(&k, DataView::full(&z), 0, &OPTS)
            .unwrap()
            .value;
        let mut shuffled = z.clone();
        shuffled.shuffle(&mut rng);
        let b = eval_complete(&k, DataView::full(&shuffled), 0, &OPTS)
            .unwrap()
            .value;
        assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn p_one_collapses_to_complete() {
        let z: Vec<f64> = (0..6).map(|i| (i as f64).sqrt()).collect();
        let v = DataView::full(&z);
        let k = VarianceKernel { order: 2 };
        let full = eval_complete(&k, v, 7, &OPTS).unwrap();
        let inc = eval_incomplete(&k, v, 15.0, 1, 7, &OPTS).unwrap();
        let ht = eval_ht(&k, v, 15.0, 1, 7, &OPTS).unwrap();
        assert_eq!(inc.value.to_bits(), full.value.to_bits());
        assert_eq!(ht.value.to_bits(), full.value.to_bits());
        assert_eq!(inc.selected, 15);

        let four = [1.0, 5.0, 2.0, 8.0];
        let v4 = DataView::full(&four);
        let a = eval_complete(&k, v4, 0, &OPTS).unwrap().value;
        let b = eval_incomplete(&k, v4, 6.0, 99, 0, &OPTS).unwrap().value;
        assert_eq!(a.to_bits(), b.to_bits());

        // the same holds for a randomized kernel since omega is keyed by the tuple
        let sf = SignFlipKernel { order: 3 };
        let a = eval_complete(&sf, v, 5, &OPTS).unwrap().value;
        let b = eval_incomplete(&sf, v, 20.0, 8, 5, &OPTS).unwrap().value;
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn ht_and_nhat_coincide_when_nhat_hits_target() {
        let z: Vec<f64> = (0..7).map(|i| ((i * 7 % 5) as f64) - 1.5).collect();
        let v = DataView::full(&z);
        let k = VarianceKernel { order: 3 };
        let mut hits = 0;
        for seed in 0..200 {
            let inc = eval_incomplete(&k, v, 10.0, seed, 0, &OPTS);
            let ht = eval_ht(&k, v, 10.0, seed, 0, &OPTS).unwrap();
            if let Ok(inc) = inc {
                assert_eq!(inc.selected, ht.selected);
                if inc.selected == 10 {
                    hits += 1;
                    assert_eq!(inc.value.to_bits(), ht.value.to_bits());
                }
            }
        }
        assert!(hits > 5);
    }

    #[test]
    fn empty_selection_behaviour() {
        let z: Vec<f64> = (0..10).map(f64::from).collect();
        let v = DataView::full(&z);
        let k = MeanKernel { order: 5 };
        // find a seed with no selected subsample at a tiny target
        let seed = (0..1000)
            .find(|&sd| Selection::draw(10, 5, 0.01, sd, &OPTS).unwrap().is_empty())
            .unwrap();
        assert_eq!(
            eval_incomplete(&k, v, 0.01, seed, 0, &OPTS),
            Err(Error::EmptySelection)
        );
        let ht = eval_ht(&k, v, 0.01, seed, 0, &OPTS).unwrap();
        assert!(ht.empty);
        assert_eq!(ht.value, 0.0);
    }

    #[test]
    fn sampling_plan_validation() {
        let z = [1.0, 2.0, 3.0, 4.0];
        let v = DataView::full(&z);
        let k = MeanKernel { order: 2 };
        assert!(matches!(
            eval_incomplete(&k, v, 7.0, 0, 0, &OPTS),
            Err(Error::InvalidSampling(_))
        ));
        assert!(matches!(
            eval_ht(&k, v, 0.0, 0, 0, &OPTS),
            Err(Error::InvalidSampling(_))
        ));
    }

    #[test]
    fn sparse_selection_when_enumeration_is_too_large() {
        let sel = Selection::draw(60, 10, 500.0, 4, &OPTS).unwrap();
        assert!((sel.len() as f64 - 500.0).abs() < 5.0 * 500f64.sqrt());
        let tuples: Vec<&[usize]> = sel.tuples().collect();
        assert!(tuples.windows(2).all(|w| w[0] < w[1]));
        assert!(tuples
            .iter()
            .all(|t| t.windows(2).all(|w| w[0] < w[1]) && t[9] < 60));
        // order of magnitude beyond u64 switches to the Poisson count
        let huge = Selection::draw(240, 40, 300.0, 4, &OPTS).unwrap();
        assert!((huge.len() as f64 - 300.0).abs() < 5.0 * 300f64.sqrt());
    }

    #[test]
    fn deletion_view_keeps_surviving_selected_subsamples() {
        let mut rng = stream::rng(21);
        let z: Vec<f64> = (0..9).map(|_| rng.random::<f64>()).collect();
        let k = VarianceKernel { order: 3 };
        let est = UStatEstimator::new(k, SamplingPlan::Bernoulli { target_n: 30.0 }, 5, 0);
        let sel = Selection::draw(9, 3, 30.0, 5, &OPTS).unwrap();
        let rows: Vec<usize> = (0..9).filter(|&i| i != 4).collect();
        let view = DataView::subset(&z, &rows);
        let got = est.evaluate(view).unwrap();
        let kept: Vec<&[usize]> = sel.tuples().filter(|t| !t.contains(&4)).collect();
        let manual = kept
            .iter()
            .map(|t| k.eval(&t.iter().map(|&i| &z[i]).collect::<Vec<_>>(), 0))
            .sum::<f64>()
            / kept.len() as f64;
        assert_eq!(got.selected, kept.len() as u64);
        assert!((got.value - manual).abs() < 1e-14);
    }

    /// Empirical unbiasedness over many selection seeds on fixed data.
    fn mean_and_se(values: &[f64]) -> (f64, f64) {
        let m = values.len() as f64;
        let mean = values.iter().sum::<f64>() / m;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
        (mean, (var / m).sqrt())
    }

    #[test]
    fn incomplete_and_ht_are_unbiased_over_selection() {
        let z = [0.2, 1.7, -0.4, 2.2, 0.9, -1.3];
        let v = DataView::full(&z);
        let k = VarianceKernel { order: 2 };
        let complete = eval_complete(&k, v, 0, &OPTS).unwrap().value;
        let mut inc = Vec::new();
        let mut ht = Vec::new();
        for seed in 0..10_000u64 {
            if let Ok(r) = eval_incomplete(&k, v, 8.0, seed, 0, &OPTS) {
                inc.push(r.value);
            }
            ht.push(eval_ht(&k, v, 8.0, seed, 0, &OPTS).unwrap().value);
        }
        let (m, se) = mean_and_se(&inc);
        assert!((m - complete).abs() < 3.0 * se, "{m} {complete} {se}");
        let (m, se) = mean_and_se(&ht);
        assert!((m - complete).abs() < 3.0 * se, "{m} {complete} {se}");
    }

    #[test]
    fn results_do_not_depend_on_pool_size() {
        let mut rng = stream::rng(8);
        let z: Vec<f64> = (0..18).map(|_| rng.random::<f64>()).collect();
        let k = SignFlipKernel { order: 5 };
        let run = |threads| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| {
                let c = eval_complete(&k, DataView::full(&z), 3, &OPTS)
                    .unwrap()
                    .value;
                let i = eval_incomplete(&k, DataView::full(&z), 500.0, 4, 3, &OPTS)
                    .unwrap()
                    .value;
                (c.to_bits(), i.to_bits())
            })
        };
        assert_eq!(run(1), run(6));
    }
}
