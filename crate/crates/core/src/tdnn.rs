//! Distributional nearest-neighbour (DNN) and two-scale DNN regression
//! estimators at a query point, with delete-d jackknife variance and
//! studentized confidence intervals.
//!
//! The DNN estimator is the complete U-statistic whose kernel returns the
//! response of the subsample's nearest neighbour to the query. Averaging over
//! subsamples gives an L-statistic of the responses in distance order, with
//! weights w_i = C(n - i, s - 1) / C(n, s).

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::DataView;
use crate::error::{Error, Result};
use crate::jackknife::{
    DeletionPlan, Estimator, JackknifeMode, JackknifeReport, DEFAULT_DELETION_BUDGET,
};
use crate::kernel::Kernel;
use crate::sum::compensated_sum;

/// One row: features and response.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Observation {
    pub x: Vec<f64>,
    pub y: f64,
}

/// Design matrix (row-major, `k` columns) and responses.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionDataset {
    x: Vec<f64>,
    k: usize,
    y: Vec<f64>,
}

impl RegressionDataset {
    pub fn new(x: Vec<f64>, k: usize, y: Vec<f64>) -> Result<Self> {
        if k == 0 || y.is_empty() {
            return Err(Error::InvalidArgument(
                "dataset needs n >= 1 rows and k >= 1 columns".into(),
            ));
        }
        if x.len() != y.len() * k {
            return Err(Error::DimensionMismatch {
                expected: y.len() * k,
                got: x.len(),
            });
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "dataset contains non-finite values".into(),
            ));
        }
        Ok(RegressionDataset { x, k, y })
    }

    pub fn from_observations(obs: &[Observation]) -> Result<Self> {
        let k = obs.first().map_or(0, |o| o.x.len());
        if obs.iter().any(|o| o.x.len() != k) {
            return Err(Error::InvalidArgument(
                "rows have differing dimensions".into(),
            ));
        }
        Self::new(
            obs.iter().flat_map(|o| o.x.iter().copied()).collect(),
            k,
            obs.iter().map(|o| o.y).collect(),
        )
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.k..(i + 1) * self.k]
    }

    pub fn observations(&self) -> Vec<Observation> {
        (0..self.n())
            .map(|i| Observation {
                x: self.row(i).to_vec(),
                y: self.y[i],
            })
            .collect()
    }

    /// Same design, responses replaced.
    pub fn with_responses(&self, y: Vec<f64>) -> Result<Self> {
        Self::new(self.x.clone(), self.k, y)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
}

/// Row indices sorted by Euclidean distance to `query`, ties by index.
pub fn rank_order(query: &[f64], x: &[f64], k: usize) -> Result<Vec<usize>> {
    if query.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            got: query.len(),
        });
    }
    if k == 0 || !x.len().is_multiple_of(k) {
        return Err(Error::DimensionMismatch {
            expected: k,
            got: x.len(),
        });
    }
    let dist: Vec<f64> = x.chunks_exact(k).map(|row| sq_dist(row, query)).collect();
    let mut order: Vec<usize> = (0..dist.len()).collect();
    order.sort_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b)));
    Ok(order)
}

/// w_i = C(n - i, s - 1) / C(n, s) for i = 1..=n, by the recurrence
/// w_{i+1} = w_i (n - i - s + 1) / (n - i).
pub fn dnn_weights(n: usize, s: usize) -> Result<Vec<f64>> {
    if s == 0 || n == 0 {
        return Err(Error::InvalidOrder { n, s });
    }
    if s > n {
        return Err(Error::OrderExceedsSample { n, s });
    }
    let mut w = vec![0.0; n];
    w[0] = s as f64 / n as f64;
    for i in 1..=n - s {
        w[i] = w[i - 1] * ((n - i - s + 1) as f64 / (n - i) as f64);
    }
    Ok(w)
}

pub fn dnn_estimate(query: &[f64], data: &RegressionDataset, s: usize) -> Result<f64> {
    let w = dnn_weights(data.n(), s)?;
    let order = rank_order(query, data.x(), data.k())?;
    Ok(compensated_sum(
        order.iter().zip(&w).map(|(&i, wi)| wi * data.y()[i]),
    ))
}

/// Nearest-neighbour kernel on a subsample: the response of the point
/// closest to the query, ties going to the earlier point of the subsample.
#[derive(Debug, Clone)]
pub struct DnnKernel {
    pub order: usize,
    pub query: Vec<f64>,
}

fn nearest<'a>(query: &[f64], sample: &[&'a Observation]) -> &'a Observation {
    let mut best = sample[0];
    let mut best_d = sq_dist(&best.x, query);
    for o in &sample[1..] {
        let d = sq_dist(&o.x, query);
        if d < best_d {
            best = o;
            best_d = d;
        }
    }
    best
}

impl Kernel<Observation> for DnnKernel {
    fn order(&self) -> usize {
        self.order
    }

    fn eval(&self, sample: &[&Observation], _: u64) -> f64 {
        nearest(&self.query, sample).y
    }
}

/// (w1, w2) with w1 = 1 / (1 - (s1/s2)^(-2/k)) and w2 = 1 - w1.
pub fn tdnn_weights(s1: usize, s2: usize, k: usize) -> Result<(f64, f64)> {
    if s1 == s2 {
        return Err(Error::EqualScales { s1, s2 });
    }
    if s1 == 0 || s1 > s2 || k == 0 {
        return Err(Error::InvalidArgument(format!(
            "need 0 < s1 < s2 and k >= 1, got s1 = {s1}, s2 = {s2}, k = {k}"
        )));
    }
    let r = (s1 as f64 / s2 as f64).powf(-2.0 / k as f64);
    let w2 = 1.0 - 1.0 / (1.0 - r);
    // 1 - w2 is exact for w2 >= 1, so the pair sums to one exactly
    Ok((1.0 - w2, w2))
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct TdnnConfig {
    pub s1: usize,
    pub s2: usize,
    pub query: Vec<f64>,
    /// Warn unless ratio_guard <= s1/s2 <= 1 - ratio_guard.
    #[serde(default = "default_ratio_guard")]
    pub ratio_guard: f64,
}

fn default_ratio_guard() -> f64 {
    0.05
}

impl TdnnConfig {
    pub fn new(s1: usize, s2: usize, query: Vec<f64>) -> Self {
        TdnnConfig {
            s1,
            s2,
            query,
            ratio_guard: default_ratio_guard(),
        }
    }

    /// Checks the scales against a sample of size `n` in dimension `k`.
    pub fn validate(&self, n: usize, k: usize) -> Result<()> {
        if self.query.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: self.query.len(),
            });
        }
        if self.s1 == self.s2 {
            return Err(Error::EqualScales {
                s1: self.s1,
                s2: self.s2,
            });
        }
        if self.s1 == 0 || self.s1 > self.s2 {
            return Err(Error::InvalidOrder { n, s: self.s1 });
        }
        if self.s2 > n {
            return Err(Error::OrderExceedsSample { n, s: self.s2 });
        }
        let ratio = self.s1 as f64 / self.s2 as f64;
        if ratio < self.ratio_guard || ratio > 1.0 - self.ratio_guard {
            log::warn!(
                "s1/s2 = {ratio:.3} is outside [{}, {}]",
                self.ratio_guard,
                1.0 - self.ratio_guard
            );
        }
        if self.s2 == n {
            log::warn!("s2 equals the sample size {n}");
        }
        Ok(())
    }
}

/// Per-rank weights of the TDNN L-statistic on a sample of size `n`.
pub fn tdnn_rank_weights(n: usize, k: usize, s1: usize, s2: usize) -> Result<Vec<f64>> {
    let (w1, w2) = tdnn_weights(s1, s2, k)?;
    let a = dnn_weights(n, s1)?;
    let b = dnn_weights(n, s2)?;
    Ok(a.iter().zip(&b).map(|(x, y)| w1 * x + w2 * y).collect())
}

pub fn tdnn_estimate(data: &RegressionDataset, config: &TdnnConfig) -> Result<f64> {
    config.validate(data.n(), data.k())?;
    let w = tdnn_rank_weights(data.n(), data.k(), config.s1, config.s2)?;
    let order = rank_order(&config.query, data.x(), data.k())?;
    Ok(compensated_sum(
        order.iter().zip(&w).map(|(&i, wi)| wi * data.y()[i]),
    ))
}

/// The TDNN kernel on an s2-subsample: w1 * DNN_{s1}(subsample) + w2 * nearest Y.
#[derive(Debug, Clone)]
pub struct TdnnKernel {
    query: Vec<f64>,
    inner: Vec<f64>,
    w1: f64,
    w2: f64,
}

impl TdnnKernel {
    pub fn new(config: &TdnnConfig) -> Result<Self> {
        let (w1, w2) = tdnn_weights(config.s1, config.s2, config.query.len())?;
        Ok(TdnnKernel {
            query: config.query.clone(),
            inner: dnn_weights(config.s2, config.s1)?,
            w1,
            w2,
        })
    }
}

impl Kernel<Observation> for TdnnKernel {
    fn order(&self) -> usize {
        self.inner.len()
    }

    fn eval(&self, sample: &[&Observation], _: u64) -> f64 {
        let dist: Vec<f64> = sample.iter().map(|o| sq_dist(&o.x, &self.query)).collect();
        let mut order: Vec<usize> = (0..sample.len()).collect();
        order.sort_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b)));
        let sub: f64 = order
            .iter()
            .zip(&self.inner)
            .map(|(&i, w)| w * sample[i].y)
            .sum();
        self.w1 * sub + self.w2 * sample[order[0]].y
    }
}

/// TDNN as a generic estimator over observation views; re-sorts each view.
#[derive(Debug, Clone)]
pub struct TdnnEstimator {
    pub config: TdnnConfig,
}

impl Estimator<Observation> for TdnnEstimator {
    fn min_n(&self) -> usize {
        self.config.s2
    }

    fn apply(&self, view: DataView<'_, Observation>) -> Result<f64> {
        let obs: Vec<Observation> = view.iter().cloned().collect();
        tdnn_estimate(&RegressionDataset::from_observations(&obs)?, &self.config)
    }
}

/// Delete-d jackknife variance of the TDNN estimate.
///
/// The sample is ranked once. Deleting rows at sorted positions
/// p_1 < ... < p_d shifts every survivor between p_j and p_{j+1} up by j
/// ranks, so with prefix sums of W'[i - j] y_(i) for each shift j each
/// deletion costs O(d), W' being the rank weights at size n - d.
pub fn tdnn_jackknife(
    data: &RegressionDataset,
    config: &TdnnConfig,
    d: usize,
    mode: JackknifeMode,
) -> Result<JackknifeReport> {
    let n = data.n();
    if d == 0 || n < d + config.s2 {
        return Err(Error::DatasetTooSmall {
            n,
            needed: d.max(1) + config.s2,
        });
    }
    config.validate(n, data.k())?;
    let plan = DeletionPlan::new(n, d, mode, DEFAULT_DELETION_BUDGET)?;
    let order = rank_order(&config.query, data.x(), data.k())?;
    let y_sorted: Vec<f64> = order.iter().map(|&i| data.y()[i]).collect();
    let mut position = vec![0usize; n];
    for (p, &i) in order.iter().enumerate() {
        position[i] = p;
    }
    let full = tdnn_rank_weights(n, data.k(), config.s1, config.s2)?;
    let estimate = compensated_sum(full.iter().zip(&y_sorted).map(|(w, y)| w * y));

    let m = n - d;
    let reduced = tdnn_rank_weights(m, data.k(), config.s1, config.s2)?;
    let prefix: Vec<Vec<f64>> = (0..=d)
        .map(|shift| {
            let mut p = Vec::with_capacity(n + 1);
            let mut acc = 0.0;
            p.push(acc);
            for (i, y) in y_sorted.iter().enumerate() {
                if i >= shift && i - shift < m {
                    acc += reduced[i - shift] * y;
                }
                p.push(acc);
            }
            p
        })
        .collect();

    let values = plan.evaluate(|deleted| {
        let mut pos: Vec<usize> = deleted.iter().map(|&r| position[r]).collect();
        pos.sort_unstable();
        let mut total = 0.0;
        let mut start = 0;
        for (shift, &p) in pos.iter().enumerate() {
            total += prefix[shift][p] - prefix[shift][start];
            start = p + 1;
        }
        total += prefix[d][n] - prefix[d][start];
        Ok(total)
    })?;
    Ok(plan.report(estimate, &values))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InferenceResult {
    pub estimate: f64,
    pub variance: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub level: f64,
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// estimate -/+ z_{(1 + level)/2} * sqrt(variance).
pub fn studentized_ci(estimate: f64, variance: f64, level: f64) -> Result<InferenceResult> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidLevel(level));
    }
    if !(variance >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "variance must be nonnegative, got {variance}"
        )));
    }
    let half = normal_quantile(0.5 + level / 2.0) * variance.sqrt();
    Ok(InferenceResult {
        estimate,
        variance,
        ci_lo: estimate - half,
        ci_hi: estimate + half,
        level,
    })
}
