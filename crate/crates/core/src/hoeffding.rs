//! Hoeffding decomposition of a kernel under a finite discrete distribution,
//! Monte Carlo estimates of the covariance terms zeta^c, and the Hájek
//! dominance diagnostics built from them.
//!
//! With a finite support every expectation is a finite weighted sum, so the
//! projections h^(c), their variances V^c and the zeta^c are exact for
//! deterministic kernels. Randomized kernels are integrated over `omega_reps`
//! common draws of their randomness.

use rayon::prelude::*;
use serde::Serialize;

use crate::combinatorics::{binom_f64, first_combination, next_combination};
use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::stream::{self, tag, StreamRng};
use crate::sum::{compensated_sum, CompensatedSum};

#[derive(Debug, Clone)]
pub struct DiscreteDistribution<T> {
    support: Vec<T>,
    probs: Vec<f64>,
}

impl<T: PartialEq> DiscreteDistribution<T> {
    pub fn new(support: Vec<T>, probs: Vec<f64>) -> Result<Self> {
        if support.is_empty() || support.len() != probs.len() {
            return Err(Error::InvalidDistribution(format!(
                "{} support points with {} probabilities",
                support.len(),
                probs.len()
            )));
        }
        if probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidDistribution(
                "probabilities must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidDistribution(format!(
                "probabilities sum to {total}"
            )));
        }
        for i in 0..support.len() {
            if support[i + 1..].contains(&support[i]) {
                return Err(Error::InvalidDistribution(
                    "support points must be distinct".into(),
                ));
            }
        }
        Ok(DiscreteDistribution { support, probs })
    }

    pub fn uniform(support: Vec<T>) -> Result<Self> {
        let m = support.len();
        Self::new(support, vec![1.0 / m as f64; m])
    }
}

impl<T> DiscreteDistribution<T> {
    pub fn support(&self) -> &[T] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct OracleOptions {
    /// Cap on |support|^(s - c) * omega_reps kernel evaluations per projection.
    pub budget: u64,
    /// Draws used to integrate a randomized kernel over its randomness.
    pub omega_reps: usize,
    pub omega_seed: u64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions {
            budget: 10_000_000,
            omega_reps: 1,
            omega_seed: 0,
        }
    }
}

/// Mixed-radix walk over support^len, yielding index tuples.
fn for_each_tuple<F: FnMut(&[usize])>(m: usize, len: usize, mut f: F) {
    let mut t = vec![0usize; len];
    loop {
        f(&t);
        let mut k = len;
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            t[k] += 1;
            if t[k] < m {
                break;
            }
            t[k] = 0;
        }
    }
}

fn omega_keys<T, K: Kernel<T>>(kernel: &K, opts: &OracleOptions) -> Vec<u64> {
    if kernel.randomized() {
        (0..opts.omega_reps.max(1))
            .map(|r| stream::key(opts.omega_seed, tag::OMEGA, &[r as u64]))
            .collect()
    } else {
        vec![0]
    }
}

fn check_budget(m: usize, free: usize, reps: usize, budget: u64) -> Result<()> {
    let need = (m as f64).powi(free as i32) * reps as f64;
    if need > budget as f64 {
        return Err(Error::BudgetExceeded {
            needed: format!("{need:.0}"),
            budget,
        });
    }
    Ok(())
}

/// E[h(fixed, D_{s-c}; omega)] for the given `c = fixed.len()` observations,
/// the expectation running over the remaining `s - c` draws and the kernel's
/// randomness.
pub fn psi<T: Sync, K: Kernel<T>>(
    kernel: &K,
    dist: &DiscreteDistribution<T>,
    fixed: &[&T],
    opts: &OracleOptions,
) -> Result<f64> {
    let s = kernel.order();
    let c = fixed.len();
    if c == 0 || c > s {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= c <= s, got c = {c}, s = {s}"
        )));
    }
    let omegas = omega_keys(kernel, opts);
    check_budget(dist.len(), s - c, omegas.len(), opts.budget)?;
    Ok(conditional_mean(kernel, dist, fixed, &omegas))
}

fn conditional_mean<T, K: Kernel<T>>(
    kernel: &K,
    dist: &DiscreteDistribution<T>,
    fixed: &[&T],
    omegas: &[u64],
) -> f64 {
    let s = kernel.order();
    let free = s - fixed.len();
    let mut acc = CompensatedSum::new();
    let mut sample: Vec<&T> = fixed.to_vec();
    for_each_tuple(dist.len(), free, |t| {
        sample.truncate(fixed.len());
        let mut w = 1.0;
        for &i in t {
            sample.push(&dist.support[i]);
            w *= dist.probs[i];
        }
        let avg =
            omegas.iter().map(|&o| kernel.eval(&sample, o)).sum::<f64>() / omegas.len() as f64;
        acc.add(w * avg);
    });
    acc.value()
}

/// Exact Hoeffding decomposition of a kernel under a discrete distribution.
#[derive(Debug, Clone, Serialize)]
pub struct HoeffdingTable {
    pub order: usize,
    pub support_size: usize,
    pub theta: f64,
    /// `components[c - 1]` holds h^(c) on support^c in mixed-radix order.
    pub components: Vec<Vec<f64>>,
    /// V^c for c = 1..=s.
    pub variances: Vec<f64>,
    /// zeta^c for c = 1..=s; zeta^s is the kernel variance.
    pub zetas: Vec<f64>,
}

fn radix_index(m: usize, t: &[usize]) -> usize {
    t.iter().fold(0, |acc, &i| acc * m + i)
}

fn tuple_weight(probs: &[f64], t: &[usize]) -> f64 {
    t.iter().map(|&i| probs[i]).product()
}

impl HoeffdingTable {
    /// h^(c) at the support points with indices `points`.
    pub fn component(&self, points: &[usize]) -> f64 {
        let c = points.len();
        self.components[c - 1][radix_index(self.support_size, points)]
    }

    /// Sum over all proper nonempty sub-tuples of `points` of their components.
    fn lower_orders(&self, points: &[usize], upto: usize) -> f64 {
        let mut acc = CompensatedSum::new();
        let mut sub = Vec::with_capacity(points.len());
        for j in 1..upto {
            let mut pos = first_combination(j);
            loop {
                sub.clear();
                sub.extend(pos.iter().map(|&p| points[p]));
                acc.add(self.components[j - 1][radix_index(self.support_size, &sub)]);
                if !next_combination(&mut pos, points.len()) {
                    break;
                }
            }
        }
        acc.value()
    }

    /// theta + sum_j C(s, j) H^j on a dataset given as support indices; this
    /// equals the complete U-statistic of the dataset for deterministic
    /// kernels.
    pub fn reconstruct(&self, dataset: &[usize]) -> Result<f64> {
        let n = dataset.len();
        if n < self.order {
            return Err(Error::NTooSmall { n, s: self.order });
        }
        let mut total = self.theta;
        let mut sub = Vec::with_capacity(self.order);
        for j in 1..=self.order {
            let mut acc = CompensatedSum::new();
            let mut pos = first_combination(j);
            loop {
                sub.clear();
                sub.extend(pos.iter().map(|&p| dataset[p]));
                acc.add(self.component(&sub));
                if !next_combination(&mut pos, n) {
                    break;
                }
            }
            total += binom_f64(self.order as u64, j as u64) * acc.value()
                / binom_f64(n as u64, j as u64);
        }
        Ok(total)
    }
}

pub fn build_table<T: Sync, K: Kernel<T>>(
    kernel: &K,
    dist: &DiscreteDistribution<T>,
    opts: &OracleOptions,
) -> Result<HoeffdingTable> {
    let s = kernel.order();
    if s == 0 {
        return Err(Error::InvalidOrder { n: 0, s });
    }
    let m = dist.len();
    let omegas = omega_keys(kernel, opts);
    check_budget(m, s, omegas.len(), opts.budget)?;

    // psi_c on support^c for c < s, exact by enumeration of the free draws
    let psis: Vec<Vec<f64>> = (1..s)
        .map(|c| {
            let count = m.pow(c as u32);
            (0..count)
                .into_par_iter()
                .map(|idx| {
                    let t = unradix(m, c, idx);
                    let fixed: Vec<&T> = t.iter().map(|&i| &dist.support[i]).collect();
                    conditional_mean(kernel, dist, &fixed, &omegas)
                })
                .collect()
        })
        .collect();

    // kernel values on support^s, one column per omega draw
    let full_count = m.pow(s as u32);
    let raw: Vec<Vec<f64>> = (0..full_count)
        .into_par_iter()
        .map(|idx| {
            let t = unradix(m, s, idx);
            let sample: Vec<&T> = t.iter().map(|&i| &dist.support[i]).collect();
            omegas.iter().map(|&o| kernel.eval(&sample, o)).collect()
        })
        .collect();
    let reps = omegas.len() as f64;
    let theta = compensated_sum((0..full_count).map(|idx| {
        let w = tuple_weight(&dist.probs, &unradix(m, s, idx));
        w * raw[idx].iter().sum::<f64>() / reps
    }));

    let mut table = HoeffdingTable {
        order: s,
        support_size: m,
        theta,
        components: Vec::with_capacity(s),
        variances: Vec::with_capacity(s),
        zetas: Vec::with_capacity(s),
    };

    for c in 1..=s {
        let count = m.pow(c as u32);
        let mut comp = vec![0.0; count];
        let mut var = CompensatedSum::new();
        let mut zeta = CompensatedSum::new();
        for (idx, slot) in comp.iter_mut().enumerate() {
            let t = unradix(m, c, idx);
            let w = tuple_weight(&dist.probs, &t);
            let lower = table.lower_orders(&t, c);
            if c < s {
                let centered = psis[c - 1][idx] - theta;
                *slot = centered - lower;
                var.add(w * *slot * *slot);
                zeta.add(w * centered * centered);
            } else {
                let draws = &raw[idx];
                let mean = draws.iter().sum::<f64>() / reps;
                *slot = mean - theta - lower;
                var.add(
                    w * draws
                        .iter()
                        .map(|h| (h - theta - lower).powi(2))
                        .sum::<f64>()
                        / reps,
                );
                zeta.add(w * draws.iter().map(|h| (h - theta).powi(2)).sum::<f64>() / reps);
            }
        }
        table.components.push(comp);
        table.variances.push(var.value());
        table.zetas.push(zeta.value());
    }
    Ok(table)
}

fn unradix(m: usize, len: usize, mut idx: usize) -> Vec<usize> {
    let mut t = vec![0usize; len];
    for k in (0..len).rev() {
        t[k] = idx % m;
        idx /= m;
    }
    t
}

/// h^(c) at the given support points, via the full table.
pub fn hoeffding_component<T: Sync, K: Kernel<T>>(
    kernel: &K,
    dist: &DiscreteDistribution<T>,
    points: &[usize],
    opts: &OracleOptions,
) -> Result<f64> {
    let c = points.len();
    if c == 0 || c > kernel.order() {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= c <= s, got c = {c}"
        )));
    }
    if points.iter().any(|&i| i >= dist.len()) {
        return Err(Error::InvalidArgument("support index out of range".into()));
    }
    Ok(build_table(kernel, dist, opts)?.component(points))
}

/// Var(U_n) = sum_{j<s} C(s,j)^2 C(n,j)^{-1} V^j + C(n,s)^{-1} V^s.
pub fn variance_decomposition(table: &HoeffdingTable, n: usize) -> Result<f64> {
    let s = table.order;
    if n < s {
        return Err(Error::NTooSmall { n, s });
    }
    let (n64, s64) = (n as u64, s as u64);
    let mut acc = CompensatedSum::new();
    for j in 1..s {
        let cs = binom_f64(s64, j as u64);
        acc.add(cs * cs * table.variances[j - 1] / binom_f64(n64, j as u64));
    }
    acc.add(table.variances[s - 1] / binom_f64(n64, s64));
    Ok(acc.value())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub value: f64,
    pub se: f64,
    pub reps: usize,
}

/// Monte Carlo estimate of zeta^c = Cov(h(D_c, D_{s-c}; w), h(D_c, D'_{s-c}; w')).
///
/// Each replicate draws a shared block of `c` observations and two
/// independent blocks of `s - c`, evaluates the kernel on both with
/// independent randomness, and the unbiased cross-moment estimator is taken
/// over replicates. For `c = s` the two evaluations coincide (same data, same
/// draw) and the estimate is the sample variance of the kernel.
pub fn estimate_zeta<T, K, S>(
    kernel: &K,
    sampler: S,
    c: usize,
    reps: usize,
    seed: u64,
) -> Result<McEstimate>
where
    T: Send,
    K: Kernel<T>,
    S: Fn(&mut StreamRng) -> T + Sync,
{
    let s = kernel.order();
    if c == 0 || c > s {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= c <= s, got c = {c}, s = {s}"
        )));
    }
    if reps < 2 {
        return Err(Error::InvalidArgument(
            "estimate_zeta needs reps >= 2".into(),
        ));
    }
    let pairs: Vec<(f64, f64)> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream::replicate_rng(seed, tag::ZETA, &[c as u64, r as u64]);
            let shared: Vec<T> = (0..c).map(|_| sampler(&mut rng)).collect();
            let a_rest: Vec<T> = (0..s - c).map(|_| sampler(&mut rng)).collect();
            let omega_a = stream::key(seed, tag::OMEGA, &[r as u64, 0]);
            let a_refs: Vec<&T> = shared.iter().chain(&a_rest).collect();
            let a = kernel.eval(&a_refs, omega_a);
            if c == s {
                return (a, a);
            }
            let b_rest: Vec<T> = (0..s - c).map(|_| sampler(&mut rng)).collect();
            let omega_b = stream::key(seed, tag::OMEGA, &[r as u64, 1]);
            let b_refs: Vec<&T> = shared.iter().chain(&b_rest).collect();
            (a, kernel.eval(&b_refs, omega_b))
        })
        .collect();
    let m = reps as f64;
    let mean_a = compensated_sum(pairs.iter().map(|p| p.0)) / m;
    let mean_b = compensated_sum(pairs.iter().map(|p| p.1)) / m;
    let prods: Vec<f64> = pairs
        .iter()
        .map(|(a, b)| (a - mean_a) * (b - mean_b))
        .collect();
    let value = compensated_sum(prods.iter().copied()) / (m - 1.0);
    let mean_prod = compensated_sum(prods.iter().copied()) / m;
    let spread =
        compensated_sum(prods.iter().map(|p| (p - mean_prod) * (p - mean_prod))) / (m - 1.0);
    Ok(McEstimate {
        value,
        se: (spread / m).sqrt(),
        reps,
    })
}

/// Nested Monte Carlo estimate of zeta^c = Var(psi_c) for c < s.
///
/// Each of `outer` replicates draws `c` shared observations and averages the
/// kernel over `inner` independent completions. The between-replicate
/// variance of those averages, less the mean within-replicate variance over
/// `inner`, is unbiased for zeta^c and far less noisy than the paired
/// estimator when zeta^c is small relative to the kernel variance.
pub fn estimate_zeta_nested<T, K, S>(
    kernel: &K,
    sampler: S,
    c: usize,
    outer: usize,
    inner: usize,
    seed: u64,
) -> Result<McEstimate>
where
    T: Send,
    K: Kernel<T>,
    S: Fn(&mut StreamRng) -> T + Sync,
{
    let s = kernel.order();
    if c == 0 || c >= s {
        return Err(Error::InvalidArgument(format!(
            "nested estimate needs 1 <= c < s, got c = {c}, s = {s}"
        )));
    }
    if outer < 2 || inner < 2 {
        return Err(Error::InvalidArgument(
            "nested estimate needs outer >= 2 and inner >= 2".into(),
        ));
    }
    let stats: Vec<(f64, f64)> = (0..outer)
        .into_par_iter()
        .map(|r| {
            let mut rng =
                stream::replicate_rng(seed, tag::ZETA, &[c as u64, r as u64, inner as u64]);
            let shared: Vec<T> = (0..c).map(|_| sampler(&mut rng)).collect();
            let values: Vec<f64> = (0..inner)
                .map(|j| {
                    let rest: Vec<T> = (0..s - c).map(|_| sampler(&mut rng)).collect();
                    let refs: Vec<&T> = shared.iter().chain(&rest).collect();
                    kernel.eval(&refs, stream::key(seed, tag::OMEGA, &[r as u64, j as u64]))
                })
                .collect();
            let b = inner as f64;
            let mean = compensated_sum(values.iter().copied()) / b;
            let within =
                compensated_sum(values.iter().map(|v| (v - mean) * (v - mean))) / (b - 1.0);
            (mean, within)
        })
        .collect();
    let (m, b) = (outer as f64, inner as f64);
    let grand = compensated_sum(stats.iter().map(|t| t.0)) / m;
    let terms: Vec<f64> = stats
        .iter()
        .map(|(mean, within)| (mean - grand) * (mean - grand) * m / (m - 1.0) - within / b)
        .collect();
    let est = compensated_sum(terms.iter().copied()) / m;
    let spread = compensated_sum(terms.iter().map(|t| (t - est) * (t - est))) / (m - 1.0);
    Ok(McEstimate {
        value: est,
        se: (spread / m).sqrt(),
        reps: outer * inner,
    })
}

fn positive_zeta1(zeta1: f64) -> Result<()> {
    if zeta1 > 0.0 {
        Ok(())
    } else {
        Err(Error::NonPositiveZeta1(zeta1))
    }
}

/// (s / n) * (zeta^s / (s zeta^1) - 1); tends to zero under Hájek dominance.
pub fn dominance_stat(n: usize, s: usize, zeta_s: f64, zeta1: f64) -> Result<f64> {
    positive_zeta1(zeta1)?;
    let (n, s) = (n as f64, s as f64);
    Ok((s / n) * (zeta_s / (s * zeta1) - 1.0))
}

/// n / (N s zeta^1); tends to zero under asymptotically sufficient sampling.
pub fn sampling_stat(n: usize, big_n: f64, s: usize, zeta1: f64) -> Result<f64> {
    positive_zeta1(zeta1)?;
    Ok(n as f64 / (big_n * s as f64 * zeta1))
}

/// (n / s^2) Var(U) / zeta^1; tends to one when the Hájek projection dominates.
pub fn hajek_ratio(n: usize, s: usize, var_u: f64, zeta1: f64) -> Result<f64> {
    positive_zeta1(zeta1)?;
    let s = s as f64;
    Ok(n as f64 / (s * s) * var_u / zeta1)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DominanceDiagnostic {
    pub n: usize,
    pub s: usize,
    pub zeta1: f64,
    pub zeta_s: f64,
    pub dominance_stat: f64,
    pub sampling_stat: Option<f64>,
    pub hajek_ratio: Option<f64>,
}

impl DominanceDiagnostic {
    pub fn new(n: usize, s: usize, zeta1: f64, zeta_s: f64) -> Result<Self> {
        Ok(DominanceDiagnostic {
            n,
            s,
            zeta1,
            zeta_s,
            dominance_stat: dominance_stat(n, s, zeta_s, zeta1)?,
            sampling_stat: None,
            hajek_ratio: None,
        })
    }

    pub fn with_sampling(mut self, big_n: f64) -> Result<Self> {
        self.sampling_stat = Some(sampling_stat(self.n, big_n, self.s, self.zeta1)?);
        Ok(self)
    }

    pub fn with_variance(mut self, var_u: f64) -> Result<Self> {
        self.hajek_ratio = Some(hajek_ratio(self.n, self.s, var_u, self.zeta1)?);
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{
        ConstantKernel, FixedOmega, MeanKernel, ProductKernel, SignFlipKernel, VarianceKernel,
    };
    use rand_distr::{Distribution, StandardNormal};

    fn coin() -> DiscreteDistribution<f64> {
        DiscreteDistribution::uniform(vec![0.0, 1.0]).unwrap()
    }

    fn skewed() -> DiscreteDistribution<f64> {
        DiscreteDistribution::new(vec![-1.0, 0.5, 2.0], vec![0.2, 0.5, 0.3]).unwrap()
    }

    const OPTS: OracleOptions = OracleOptions {
        budget: 10_000_000,
        omega_reps: 1,
        omega_seed: 0,
    };

    #[test]
    fn distribution_validation() {
        assert!(DiscreteDistribution::new(vec![0.0, 1.0], vec![0.5, 0.6]).is_err());
        assert!(DiscreteDistribution::new(vec![0.0, 0.0], vec![0.5, 0.5]).is_err());
        assert!(DiscreteDistribution::new(vec![0.0, 1.0], vec![-0.5, 1.5]).is_err());
        assert!(DiscreteDistribution::<f64>::new(vec![], vec![]).is_err());
    }

    #[test]
    fn psi_worked_examples() {
        assert_eq!(
            psi(&MeanKernel { order: 1 }, &coin(), &[&0.7], &OPTS).unwrap(),
            0.7
        );
        let v = VarianceKernel { order: 2 };
        assert!((psi(&v, &coin(), &[&0.0], &OPTS).unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(psi(&v, &coin(), &[&0.0, &1.0], &OPTS).unwrap(), 0.5);
        assert!(psi(&v, &coin(), &[], &OPTS).is_err());
    }

    #[test]
    fn mean_kernel_table() {
        let t = build_table(&MeanKernel { order: 1 }, &coin(), &OPTS).unwrap();
        assert_eq!(t.theta, 0.5);
        assert_eq!(t.component(&[0]), -0.5);
        assert_eq!(t.component(&[1]), 0.5);
        assert_eq!(t.variances, vec![0.25]);
        assert_eq!(t.zetas, vec![0.25]);
        assert!((variance_decomposition(&t, 10).unwrap() - 0.025).abs() < 1e-15);
    }

    #[test]
    fn variance_kernel_table_is_first_order_degenerate() {
        let t = build_table(&VarianceKernel { order: 2 }, &coin(), &OPTS).unwrap();
        assert!((t.theta - 0.25).abs() < 1e-15);
        assert!(t.component(&[0]).abs() < 1e-15 && t.component(&[1]).abs() < 1e-15);
        assert!(t.variances[0].abs() < 1e-15 && t.zetas[0].abs() < 1e-15);
        assert!((t.zetas[1] - 1.0 / 16.0).abs() < 1e-15);
        assert!((t.zetas[1] - (2.0 * t.variances[0] + t.variances[1])).abs() < 1e-15);
        let v4 = variance_decomposition(&t, 4).unwrap();
        assert!((v4 - 1.0 / 96.0).abs() < 1e-15);
        assert!(matches!(
            variance_decomposition(&t, 1),
            Err(Error::NTooSmall { .. })
        ));
        assert!(matches!(
            dominance_stat(4, 2, t.zetas[1], t.zetas[0]),
            Err(Error::NonPositiveZeta1(_))
        ));
    }

    #[test]
    fn constant_kernel_has_no_variance() {
        let t = build_table(
            &ConstantKernel {
                order: 3,
                value: 2.0,
            },
            &skewed(),
            &OPTS,
        )
        .unwrap();
        assert!(t.variances.iter().chain(&t.zetas).all(|v| v.abs() < 1e-15));
        assert!((t.theta - 2.0).abs() < 1e-15);
    }

    fn kernels() -> Vec<Box<dyn Kernel<f64>>> {
        vec![
            Box::new(MeanKernel { order: 1 }),
            Box::new(VarianceKernel { order: 2 }),
            Box::new(VarianceKernel { order: 3 }),
            Box::new(ProductKernel { order: 2 }),
            Box::new(ProductKernel { order: 3 }),
            Box::new(FixedOmega {
                kernel: SignFlipKernel { order: 3 },
                omega: 17,
            }),
        ]
    }

    #[test]
    fn components_are_centered_and_additive() {
        for dist in [coin(), skewed()] {
            for k in kernels() {
                let t = build_table(&k, &dist, &OPTS).unwrap();
                let s = t.order;
                for c in 1..=s {
                    let mut mean = 0.0;
                    for_each_tuple(dist.len(), c, |p| {
                        mean += tuple_weight(dist.probs(), p) * t.component(p)
                    });
                    assert!(mean.abs() < 1e-12, "E h^({c}) = {mean}");
                }
                let additive: f64 = (1..=s)
                    .map(|j| binom_f64(s as u64, j as u64) * t.variances[j - 1])
                    .sum();
                assert!((t.zetas[s - 1] - additive).abs() < 1e-10);
                assert!(t.variances.iter().all(|&v| v >= -1e-15));
                assert!(
                    t.zetas.windows(2).all(|w| w[0] <= w[1] + 1e-12),
                    "{:?}",
                    t.zetas
                );
            }
        }
    }

    /// E[h^(c)(D_I) h^(c')(D_J)] over the product measure on the index
    /// union, for index sets drawn from a small universe.
    #[test]
    fn projections_are_orthogonal() {
        let dist = skewed();
        for k in kernels() {
            let t = build_table(&k, &dist, &OPTS).unwrap();
            let s = t.order;
            let universe = 4usize;
            let mut sets = Vec::new();
            for c in 1..=s {
                let mut pos = first_combination(c);
                loop {
                    sets.push(pos.clone());
                    if !next_combination(&mut pos, universe) {
                        break;
                    }
                }
            }
            for a in &sets {
                for b in &sets {
                    if a == b {
                        continue;
                    }
                    let mut e = 0.0;
                    for_each_tuple(dist.len(), universe, |x| {
                        let w = tuple_weight(dist.probs(), x);
                        let pa: Vec<usize> = a.iter().map(|&i| x[i]).collect();
                        let pb: Vec<usize> = b.iter().map(|&i| x[i]).collect();
                        e += w * t.component(&pa) * t.component(&pb);
                    });
                    assert!(e.abs() < 1e-10, "{a:?} {b:?} {e}");
                }
            }
        }
    }

    #[test]
    fn randomized_kernel_with_many_draws() {
        let k = SignFlipKernel { order: 2 };
        let opts = OracleOptions {
            omega_reps: 64,
            omega_seed: 3,
            ..OPTS
        };
        let t = build_table(&k, &skewed(), &opts).unwrap();
        // the sign has mean ~0 so theta and the lower projections are small,
        // while zeta^s keeps the full E[(z1 + z2)^2]
        let second_moment: f64 = {
            let d = skewed();
            let mut acc = 0.0;
            for_each_tuple(3, 2, |p| {
                acc += tuple_weight(d.probs(), p) * (d.support()[p[0]] + d.support()[p[1]]).powi(2)
            });
            acc
        };
        assert!((t.zetas[1] + t.theta * t.theta - second_moment).abs() < 1e-12);
        let additive = 2.0 * t.variances[0] + t.variances[1];
        assert!((t.zetas[1] - additive).abs() < 1e-10);
    }

    #[test]
    fn budget_is_enforced() {
        let tight = OracleOptions { budget: 10, ..OPTS };
        assert!(matches!(
            build_table(&ProductKernel { order: 3 }, &skewed(), &tight),
            Err(Error::BudgetExceeded { .. })
        ));
    }

    fn normal(rng: &mut StreamRng) -> f64 {
        StandardNormal.sample(rng)
    }

    #[test]
    fn zeta_of_mean_kernel_under_standard_normal() {
        let z = estimate_zeta(&MeanKernel { order: 1 }, normal, 1, 10_000, 5).unwrap();
        assert!((z.value - 1.0).abs() < 3.0 * z.se, "{z:?}");
    }

    #[test]
    fn zeta_of_degenerate_variance_kernel_is_zero() {
        let coin_sampler = |rng: &mut StreamRng| {
            if rand::Rng::random::<bool>(rng) {
                1.0
            } else {
                0.0
            }
        };
        let z = estimate_zeta(&VarianceKernel { order: 2 }, coin_sampler, 1, 10_000, 9).unwrap();
        assert!(z.value.abs() < 3.0 * z.se, "{z:?}");
        let full = estimate_zeta(&VarianceKernel { order: 2 }, coin_sampler, 2, 20_000, 9).unwrap();
        // every squared deviation is exactly 1/16 here, so the SE is zero
        assert!(
            (full.value - 1.0 / 16.0).abs() < 3.0 * full.se + 1e-3,
            "{full:?}"
        );
    }

    #[test]
    fn zeta_se_halves_when_reps_quadruple() {
        let k = ProductKernel { order: 2 };
        let a = estimate_zeta(&k, normal, 1, 4_000, 1).unwrap();
        let b = estimate_zeta(&k, normal, 1, 16_000, 2).unwrap();
        let ratio = a.se / b.se;
        assert!((1.6..2.5).contains(&ratio), "{ratio}");
    }

    #[test]
    fn nested_zeta_agrees_with_paired() {
        let k = ProductKernel { order: 3 };
        let shifted = |rng: &mut StreamRng| 1.0 + normal(rng);
        // psi_1(z) = z, so zeta^1 = Var(1 + Z) = 1
        let nested = estimate_zeta_nested(&k, shifted, 1, 4_000, 16, 3).unwrap();
        assert!((nested.value - 1.0).abs() < 3.0 * nested.se, "{nested:?}");
        let paired = estimate_zeta(&k, shifted, 1, 20_000, 4).unwrap();
        assert!(nested.se < paired.se);
        assert!(estimate_zeta_nested(&k, shifted, 3, 10, 10, 1).is_err());
    }

    #[test]
    fn diagnostics() {
        assert_eq!(dominance_stat(100, 4, 4.0 * 0.3, 0.3).unwrap(), 0.0);
        let t = build_table(&MeanKernel { order: 1 }, &coin(), &OPTS).unwrap();
        let var = variance_decomposition(&t, 12).unwrap();
        assert!((hajek_ratio(12, 1, var, t.zetas[0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((sampling_stat(10, 50.0, 2, 0.5).unwrap() - 0.2).abs() < 1e-15);
        let d = DominanceDiagnostic::new(50, 5, 0.1, 0.7)
            .unwrap()
            .with_sampling(100.0)
            .unwrap();
        assert!((d.dominance_stat - (5.0 / 50.0) * (0.7 / 0.5 - 1.0)).abs() < 1e-15);
        assert!(d.sampling_stat.is_some() && d.hajek_ratio.is_none());
    }
}
