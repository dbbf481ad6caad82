//! Data-generating processes, Monte Carlo ground truth and the headline
//! experiments: jackknife ratio consistency, interval coverage and the decay
//! of the dominance statistic.
//!
//! Every replicate draws its data from a stream keyed by (experiment seed,
//! n, replicate index), so outputs do not depend on scheduling or on the
//! size of the thread pool.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::combinatorics::nearest_indicator_probability;
use crate::error::{Error, Result};
use crate::hoeffding::{dominance_stat, estimate_zeta, estimate_zeta_nested, McEstimate};
use crate::jackknife::{jkd_variance, sample_mean, JackknifeMode};
use crate::kernel::{CenteredKernel, VarianceKernel};
use crate::stream::{self, tag, StreamRng};
use crate::sum::compensated_sum;
use crate::tdnn::{
    studentized_ci, tdnn_estimate, tdnn_jackknife, Observation, RegressionDataset, TdnnConfig,
    TdnnKernel,
};
use crate::ustat::{SamplingPlan, UStatEstimator};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Design {
    /// Uniform on [0, 1]^k.
    Uniform,
    /// Independent coordinates, normal(mean, sd) truncated to [0, 1].
    TruncatedNormal { mean: f64, sd: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanFunction {
    /// sum_j x_j
    Linear,
    /// prod_j sin(2 pi x_j) (1 + x_j)
    SineProduct,
    /// exp(-8 |x - 1/2|^2)
    GaussianBump,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Noise {
    Homoskedastic {
        sigma: f64,
    },
    /// sigma(x) = base + slope * mean_j x_j
    Heteroskedastic {
        base: f64,
        slope: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpConfig {
    #[serde(default = "one")]
    pub k: usize,
    #[serde(default = "default_design")]
    pub design: Design,
    #[serde(default = "default_mu")]
    pub mu: MeanFunction,
    #[serde(default = "default_noise")]
    pub noise: Noise,
}

fn one() -> usize {
    1
}

fn default_design() -> Design {
    Design::Uniform
}

fn default_mu() -> MeanFunction {
    MeanFunction::SineProduct
}

fn default_noise() -> Noise {
    Noise::Heteroskedastic {
        base: 0.5,
        slope: 0.25,
    }
}

impl Default for DgpConfig {
    fn default() -> Self {
        DgpConfig {
            k: 1,
            design: default_design(),
            mu: default_mu(),
            noise: default_noise(),
        }
    }
}

impl DgpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidArgument(
                "dgp dimension k must be >= 1".into(),
            ));
        }
        if let Design::TruncatedNormal { mean, sd } = self.design {
            if !(sd > 0.0) || !mean.is_finite() {
                return Err(Error::InvalidArgument(
                    "truncated normal design needs sd > 0".into(),
                ));
            }
        }
        let ok = match self.noise {
            Noise::Homoskedastic { sigma } => sigma >= 0.0,
            Noise::Heteroskedastic { base, slope } => base > 0.0 && base + slope.min(0.0) > 0.0,
        };
        if !ok {
            return Err(Error::InvalidArgument(
                "noise scale must stay positive on [0, 1]^k".into(),
            ));
        }
        Ok(())
    }

    pub fn mu(&self, x: &[f64]) -> f64 {
        match self.mu {
            MeanFunction::Linear => x.iter().sum(),
            MeanFunction::SineProduct => x
                .iter()
                .map(|&t| (2.0 * PI * t).sin() * (1.0 + t))
                .product(),
            MeanFunction::GaussianBump => {
                (-8.0 * x.iter().map(|t| (t - 0.5) * (t - 0.5)).sum::<f64>()).exp()
            }
        }
    }

    pub fn sigma(&self, x: &[f64]) -> f64 {
        match self.noise {
            Noise::Homoskedastic { sigma } => sigma,
            Noise::Heteroskedastic { base, slope } => {
                base + slope * x.iter().sum::<f64>() / x.len() as f64
            }
        }
    }

    /// E[mu(X)] under the uniform design.
    pub fn mean_response(&self) -> Result<f64> {
        if self.design != Design::Uniform {
            return Err(Error::InvalidArgument(
                "closed-form mean only under the uniform design".into(),
            ));
        }
        let k = self.k as i32;
        Ok(match self.mu {
            MeanFunction::Linear => self.k as f64 / 2.0,
            MeanFunction::SineProduct => (-1.0 / (2.0 * PI)).powi(k),
            MeanFunction::GaussianBump => ((PI / 8.0).sqrt() * erf(8f64.sqrt() / 2.0)).powi(k),
        })
    }

    fn coordinate(&self, rng: &mut StreamRng) -> f64 {
        match self.design {
            Design::Uniform => rng.random::<f64>(),
            Design::TruncatedNormal { mean, sd } => loop {
                let z: f64 = StandardNormal.sample(rng);
                let v = mean + sd * z;
                if (0.0..=1.0).contains(&v) {
                    return v;
                }
            },
        }
    }

    pub fn draw(&self, rng: &mut StreamRng) -> Observation {
        let x: Vec<f64> = (0..self.k).map(|_| self.coordinate(rng)).collect();
        let eps: f64 = StandardNormal.sample(rng);
        let y = self.mu(&x) + self.sigma(&x) * eps;
        Observation { x, y }
    }
}

/// n i.i.d. draws from the model, a pure function of (cfg, n, seed).
pub fn dgp_sample(cfg: &DgpConfig, n: usize, seed: u64) -> Result<RegressionDataset> {
    cfg.validate()?;
    if n == 0 {
        return Err(Error::InvalidArgument("dgp_sample needs n >= 1".into()));
    }
    let mut rng = stream::replicate_rng(seed, tag::REPLICATE, &[n as u64]);
    let mut x = Vec::with_capacity(n * cfg.k);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let o = cfg.draw(&mut rng);
        x.extend(o.x);
        y.push(o.y);
    }
    RegressionDataset::new(x, cfg.k, y)
}

/// n standard normal scalars.
pub fn normal_sample(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = stream::replicate_rng(seed, tag::REPLICATE, &[n as u64]);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// Sample variance with a delete-1 jackknife standard error.
pub fn variance_with_se(values: &[f64]) -> Result<McEstimate> {
    let m = values.len();
    if m < 2 {
        return Err(Error::InvalidArgument(
            "need at least two replicates".into(),
        ));
    }
    let mf = m as f64;
    let mean = compensated_sum(values.iter().copied()) / mf;
    let q = compensated_sum(values.iter().map(|v| (v - mean) * (v - mean)));
    let value = q / (mf - 1.0);
    if m < 3 {
        return Ok(McEstimate {
            value,
            se: f64::NAN,
            reps: m,
        });
    }
    // leave-one-out variances in closed form
    let loo: Vec<f64> = values
        .iter()
        .map(|v| (q - (v - mean) * (v - mean) * mf / (mf - 1.0)) / (mf - 2.0))
        .collect();
    let loo_mean = compensated_sum(loo.iter().copied()) / mf;
    let spread = compensated_sum(loo.iter().map(|l| (l - loo_mean) * (l - loo_mean)));
    Ok(McEstimate {
        value,
        se: ((mf - 1.0) / mf * spread).sqrt(),
        reps: m,
    })
}

pub fn mean_with_se(values: &[f64]) -> McEstimate {
    let m = values.len() as f64;
    let mean = compensated_sum(values.iter().copied()) / m;
    let var = compensated_sum(values.iter().map(|v| (v - mean) * (v - mean))) / (m - 1.0);
    McEstimate {
        value: mean,
        se: (var / m).sqrt(),
        reps: values.len(),
    }
}

/// Variance of `estimator` across `reps` independent datasets of size `n`.
pub fn mc_truth_variance<F>(
    estimator: F,
    dgp: &DgpConfig,
    n: usize,
    reps: usize,
    seed: u64,
) -> Result<McEstimate>
where
    F: Fn(&RegressionDataset) -> Result<f64> + Sync,
{
    let values: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|r| {
            estimator(&dgp_sample(
                dgp,
                n,
                stream::key(seed, tag::TRUTH, &[n as u64, r as u64]),
            )?)
        })
        .collect::<Result<_>>()?;
    variance_with_se(&values)
}

/// Type-7 sample quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Median with an order-statistic standard error.
pub fn median_with_se(values: &[f64]) -> McEstimate {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let delta = 0.5 / (sorted.len() as f64).sqrt();
    let se = 0.5 * (quantile(&sorted, 0.5 + delta) - quantile(&sorted, 0.5 - delta));
    McEstimate {
        value: quantile(&sorted, 0.5),
        se,
        reps: values.len(),
    }
}

/// One output row. Optional columns are left empty in the CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CsvRow {
    pub experiment: String,
    pub n: usize,
    pub s1: Option<usize>,
    pub s2: Option<usize>,
    pub d: Option<usize>,
    pub method: String,
    pub metric: String,
    pub value: f64,
    pub mc_se: f64,
    pub seed: u64,
}

pub const CSV_HEADER: [&str; 10] = [
    "experiment",
    "n",
    "s1",
    "s2",
    "d",
    "method",
    "metric",
    "value",
    "mc_se",
    "seed",
];

impl CsvRow {
    /// Fields as written, floats with 17 significant digits.
    pub fn record(&self) -> [String; 10] {
        let opt = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
        [
            self.experiment.clone(),
            self.n.to_string(),
            opt(self.s1),
            opt(self.s2),
            opt(self.d),
            self.method.clone(),
            self.metric.clone(),
            format!("{:.16e}", self.value),
            format!("{:.16e}", self.mc_se),
            self.seed.to_string(),
        ]
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Table {
    pub rows: Vec<CsvRow>,
}

impl Table {
    pub fn find(&self, n: usize, d: Option<usize>, method: &str, metric: &str) -> Option<&CsvRow> {
        self.rows
            .iter()
            .find(|r| r.n == n && r.d == d && r.method == method && r.metric == metric)
    }

    pub fn select<'a>(
        &'a self,
        method: &'a str,
        metric: &'a str,
    ) -> impl Iterator<Item = &'a CsvRow> + 'a {
        self.rows
            .iter()
            .filter(move |r| r.method == method && r.metric == metric)
    }

    fn extend(&mut self, other: Table) {
        self.rows.extend(other.rows);
    }
}

struct RowBuilder<'a> {
    experiment: &'a str,
    seed: u64,
    n: usize,
    s1: Option<usize>,
    s2: Option<usize>,
}

impl RowBuilder<'_> {
    fn row(&self, d: Option<usize>, method: &str, metric: &str, value: f64, se: f64) -> CsvRow {
        CsvRow {
            experiment: self.experiment.to_string(),
            n: self.n,
            s1: self.s1,
            s2: self.s2,
            d,
            method: method.to_string(),
            metric: metric.to_string(),
            value,
            mc_se: se,
            seed: self.seed,
        }
    }
}

/// Scale rule s2 = ceil(n^gamma), s1 = ceil(ratio * s2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleRule {
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_ratio")]
    pub s1_ratio: f64,
}

fn default_gamma() -> f64 {
    0.6
}

fn default_ratio() -> f64 {
    0.5
}

impl Default for ScaleRule {
    fn default() -> Self {
        ScaleRule {
            gamma: default_gamma(),
            s1_ratio: default_ratio(),
        }
    }
}

impl ScaleRule {
    pub fn scales(&self, n: usize) -> Result<(usize, usize)> {
        if !(self.s1_ratio > 0.0 && self.s1_ratio < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "s1_ratio must lie in (0, 1), got {}",
                self.s1_ratio
            )));
        }
        let s2 = ceil_pow(n, self.gamma);
        let s1 = s1_for(s2, self.s1_ratio);
        if s2 >= n || s1 == 0 || s1 >= s2 {
            return Err(Error::InvalidArgument(format!(
                "scale rule gives s1 = {s1}, s2 = {s2} at n = {n}"
            )));
        }
        Ok((s1, s2))
    }
}

/// ceil(n^g), robust to n^g landing a hair above an integer.
pub fn ceil_pow(n: usize, g: f64) -> usize {
    let v = (n as f64).powf(g);
    let r = v.round();
    if (v - r).abs() < 1e-9 {
        r as usize
    } else {
        v.ceil() as usize
    }
}

fn s1_for(s2: usize, ratio: f64) -> usize {
    (ratio * s2 as f64 - 1e-9).ceil() as usize
}

fn default_query() -> Vec<f64> {
    vec![0.5]
}

fn default_d() -> Vec<usize> {
    vec![1, 2]
}

fn default_level() -> f64 {
    0.95
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TdnnRatioConfig {
    pub n_grid: Vec<usize>,
    #[serde(default)]
    pub scale: ScaleRule,
    #[serde(default = "default_d")]
    pub d: Vec<usize>,
    pub reps: usize,
    /// Defaults to 4 * reps.
    #[serde(default)]
    pub truth_reps: Option<usize>,
    #[serde(default = "default_query")]
    pub query: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeanRatioConfig {
    pub n_grid: Vec<usize>,
    #[serde(default = "default_d")]
    pub d: Vec<usize>,
    pub reps: usize,
    #[serde(default)]
    pub truth_reps: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IncompleteRatioConfig {
    pub n_grid: Vec<usize>,
    /// s = ceil(n^order_exponent)
    #[serde(default = "half")]
    pub order_exponent: f64,
    /// N = ceil(n^target_exponent)
    #[serde(default = "default_target_exponent")]
    pub target_exponent: f64,
    #[serde(default = "default_incomplete_d")]
    pub d: usize,
    pub reps: usize,
    #[serde(default)]
    pub truth_reps: Option<usize>,
}

fn half() -> f64 {
    0.5
}

fn default_target_exponent() -> f64 {
    1.2
}

fn default_incomplete_d() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoverageEstimator {
    Tdnn,
    SampleMean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverageConfig {
    pub n_grid: Vec<usize>,
    #[serde(default)]
    pub scale: ScaleRule,
    #[serde(default = "default_incomplete_d")]
    pub d: usize,
    pub reps: usize,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default = "default_query")]
    pub query: Vec<f64>,
    #[serde(default = "default_coverage_estimator")]
    pub estimator: CoverageEstimator,
}

fn default_coverage_estimator() -> CoverageEstimator {
    CoverageEstimator::Tdnn
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DominanceConfig {
    pub n_grid: Vec<usize>,
    #[serde(default)]
    pub scale: ScaleRule,
    /// Replicates for zeta^{s2}, the kernel variance.
    pub zeta_reps: usize,
    /// Shared-observation draws and completions per draw for zeta^1.
    pub zeta1_outer: usize,
    pub zeta1_inner: usize,
    /// Fixed s2 values for the s2 * zeta^1 trend, with s1 = ceil(s1_ratio * s2).
    #[serde(default)]
    pub s2_grid: Vec<usize>,
    /// Sample size reported alongside the s2 trend.
    #[serde(default = "default_trend_n")]
    pub trend_n: usize,
    #[serde(default = "default_query")]
    pub query: Vec<f64>,
}

fn default_trend_n() -> usize {
    500
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KappaCheckConfig {
    /// Orders checked exactly by enumeration of orderings.
    #[serde(default = "default_exact_orders")]
    pub exact_orders: Vec<usize>,
    pub s: usize,
    pub reps: usize,
    #[serde(default = "default_query")]
    pub query: Vec<f64>,
}

fn default_exact_orders() -> Vec<usize> {
    (1..=6).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Experiment {
    TdnnRatio(TdnnRatioConfig),
    MeanRatio(MeanRatioConfig),
    IncompleteRatio(IncompleteRatioConfig),
    Coverage(CoverageConfig),
    Dominance(DominanceConfig),
    KappaCheck(KappaCheckConfig),
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::TdnnRatio(_) => "tdnn_ratio",
            Experiment::MeanRatio(_) => "mean_ratio",
            Experiment::IncompleteRatio(_) => "incomplete_ratio",
            Experiment::Coverage(_) => "coverage",
            Experiment::Dominance(_) => "dominance",
            Experiment::KappaCheck(_) => "kappa_check",
        }
    }

    /// Cheap parameter checks, so a bad config fails before any work starts.
    pub fn validate(&self, dgp: &DgpConfig) -> Result<()> {
        let query = |q: &[f64]| -> Result<()> {
            if q.len() != dgp.k {
                return Err(Error::InvalidArgument(format!(
                    "query has {} coordinates but the dgp has k = {}",
                    q.len(),
                    dgp.k
                )));
            }
            Ok(())
        };
        match self {
            Experiment::TdnnRatio(c) => query(&c.query)?,
            Experiment::Coverage(c) => query(&c.query)?,
            Experiment::Dominance(c) => query(&c.query)?,
            Experiment::KappaCheck(c) => {
                if dgp.k != 1 || dgp.design != Design::Uniform || c.query.len() != 1 {
                    return Err(Error::InvalidArgument(
                        "kappa check needs the uniform design with k = 1".into(),
                    ));
                }
            }
            Experiment::MeanRatio(_) | Experiment::IncompleteRatio(_) => {}
        }
        let scaled = |grid: &[usize], scale: &ScaleRule, reps: usize| -> Result<()> {
            check_grid(grid, reps)?;
            grid.iter().try_for_each(|&n| scale.scales(n).map(|_| ()))
        };
        match self {
            Experiment::TdnnRatio(c) => scaled(&c.n_grid, &c.scale, c.reps),
            Experiment::MeanRatio(c) => check_grid(&c.n_grid, c.reps),
            Experiment::IncompleteRatio(c) => check_grid(&c.n_grid, c.reps),
            Experiment::Coverage(c) => {
                scaled(&c.n_grid, &c.scale, c.reps)?;
                if !(c.level > 0.0 && c.level < 1.0) {
                    return Err(Error::InvalidArgument(format!(
                        "level must lie in (0, 1), got {}",
                        c.level
                    )));
                }
                Ok(())
            }
            Experiment::Dominance(c) => scaled(&c.n_grid, &c.scale, c.zeta_reps),
            Experiment::KappaCheck(c) => {
                if c.s == 0 || c.reps < 2 {
                    return Err(Error::InvalidArgument(
                        "kappa check needs s >= 1 and reps >= 2".into(),
                    ));
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedExperiment {
    /// Defaults to the experiment kind; also keys the experiment's seed.
    #[serde(default)]
    pub name: Option<String>,
    #[serde(flatten)]
    pub experiment: Experiment,
}

impl NamedExperiment {
    pub fn name(&self) -> &str {
        self.name.as_deref().unwrap_or(self.experiment.kind())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default)]
    pub dgp: DgpConfig,
    pub experiments: Vec<NamedExperiment>,
}

/// Seed of one experiment: a function of the master seed and its name.
pub fn experiment_seed(master: u64, name: &str) -> u64 {
    let words: Vec<u64> = name.bytes().map(u64::from).collect();
    stream::key(master, tag::REPLICATE, &words)
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.dgp.validate()?;
        let mut names: Vec<&str> = self.experiments.iter().map(|e| e.name()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument(
                "experiment names must be unique".into(),
            ));
        }
        for exp in &self.experiments {
            exp.experiment.validate(&self.dgp).map_err(|e| match e {
                Error::InvalidArgument(m) => Error::InvalidArgument(format!("{}: {m}", exp.name())),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn run_one(&self, exp: &NamedExperiment) -> Result<Table> {
        let name = exp.name();
        let seed = experiment_seed(self.seed, name);
        match &exp.experiment {
            Experiment::TdnnRatio(c) => ratio_experiment(name, c, &self.dgp, seed),
            Experiment::MeanRatio(c) => mean_ratio_experiment(name, c, &self.dgp, seed),
            Experiment::IncompleteRatio(c) => incomplete_ratio_experiment(name, c, seed),
            Experiment::Coverage(c) => coverage_experiment(name, c, &self.dgp, seed),
            Experiment::Dominance(c) => dominance_experiment(name, c, &self.dgp, seed),
            Experiment::KappaCheck(c) => kappa_check(name, c, &self.dgp, seed),
        }
    }

    pub fn run(&self) -> Result<Table> {
        self.validate()?;
        let mut table = Table::default();
        for exp in &self.experiments {
            table.extend(self.run_one(exp)?);
        }
        Ok(table)
    }
}

fn check_grid(n_grid: &[usize], reps: usize) -> Result<()> {
    if n_grid.is_empty() || reps == 0 {
        return Err(Error::InvalidArgument(
            "experiment needs a nonempty n grid and reps >= 1".into(),
        ));
    }
    Ok(())
}

fn replicate_seed(seed: u64, n: usize, r: usize) -> u64 {
    stream::key(seed, tag::REPLICATE, &[n as u64, r as u64])
}

/// Summary rows of a set of variance ratios against a Monte Carlo truth.
fn ratio_rows(
    b: &RowBuilder<'_>,
    d: usize,
    method: &str,
    estimates: &[f64],
    truth: &McEstimate,
) -> Vec<CsvRow> {
    let ratios: Vec<f64> = estimates.iter().map(|v| v / truth.value).collect();
    let mut sorted = ratios.clone();
    sorted.sort_by(f64::total_cmp);
    let rel = truth.se / truth.value;
    let with_truth = |v: f64, se: f64| (se * se + (v * rel) * (v * rel)).sqrt();
    let med = median_with_se(&ratios);
    let mean = mean_with_se(&ratios);
    let q25 = quantile(&sorted, 0.25);
    let q75 = quantile(&sorted, 0.75);
    vec![
        b.row(
            Some(d),
            method,
            "median_ratio",
            med.value,
            with_truth(med.value, med.se),
        ),
        b.row(
            Some(d),
            method,
            "mean_ratio",
            mean.value,
            with_truth(mean.value, mean.se),
        ),
        b.row(Some(d), method, "q25_ratio", q25, with_truth(q25, med.se)),
        b.row(Some(d), method, "q75_ratio", q75, with_truth(q75, med.se)),
        b.row(
            Some(d),
            method,
            "iqr_ratio",
            q75 - q25,
            with_truth(q75 - q25, 2.0 * med.se),
        ),
        b.row(
            Some(d),
            method,
            "abs_median_dev",
            (med.value - 1.0).abs(),
            with_truth(med.value, med.se),
        ),
    ]
}

/// Jackknife ratio consistency for the TDNN estimator at the query point.
pub fn ratio_experiment(
    name: &str,
    cfg: &TdnnRatioConfig,
    dgp: &DgpConfig,
    seed: u64,
) -> Result<Table> {
    check_grid(&cfg.n_grid, cfg.reps)?;
    let truth_reps = cfg.truth_reps.unwrap_or(4 * cfg.reps);
    let mut table = Table::default();
    for &n in &cfg.n_grid {
        let (s1, s2) = cfg.scale.scales(n)?;
        let tc = TdnnConfig::new(s1, s2, cfg.query.clone());
        let b = RowBuilder {
            experiment: name,
            seed,
            n,
            s1: Some(s1),
            s2: Some(s2),
        };
        let truth = mc_truth_variance(|data| tdnn_estimate(data, &tc), dgp, n, truth_reps, seed)?;
        table
            .rows
            .push(b.row(None, "tdnn", "truth_variance", truth.value, truth.se));
        let per_rep: Vec<Vec<f64>> = (0..cfg.reps)
            .into_par_iter()
            .map(|r| {
                let data = dgp_sample(dgp, n, replicate_seed(seed, n, r))?;
                cfg.d
                    .iter()
                    .map(|&d| Ok(tdnn_jackknife(&data, &tc, d, JackknifeMode::Exact)?.variance))
                    .collect()
            })
            .collect::<Result<_>>()?;
        for (j, &d) in cfg.d.iter().enumerate() {
            let est: Vec<f64> = per_rep.iter().map(|v| v[j]).collect();
            table.rows.extend(ratio_rows(&b, d, "tdnn", &est, &truth));
        }
    }
    Ok(table)
}

/// The classical case: jackknife of the sample mean of Y.
pub fn mean_ratio_experiment(
    name: &str,
    cfg: &MeanRatioConfig,
    dgp: &DgpConfig,
    seed: u64,
) -> Result<Table> {
    check_grid(&cfg.n_grid, cfg.reps)?;
    let truth_reps = cfg.truth_reps.unwrap_or(4 * cfg.reps);
    let mean = sample_mean();
    let mut table = Table::default();
    for &n in &cfg.n_grid {
        let b = RowBuilder {
            experiment: name,
            seed,
            n,
            s1: None,
            s2: None,
        };
        let truth = mc_truth_variance(
            |data| Ok(data.y().iter().sum::<f64>() / n as f64),
            dgp,
            n,
            truth_reps,
            seed,
        )?;
        table
            .rows
            .push(b.row(None, "sample_mean", "truth_variance", truth.value, truth.se));
        let per_rep: Vec<Vec<f64>> = (0..cfg.reps)
            .into_par_iter()
            .map(|r| {
                let data = dgp_sample(dgp, n, replicate_seed(seed, n, r))?;
                cfg.d
                    .iter()
                    .map(|&d| Ok(jkd_variance(&mean, data.y(), d, JackknifeMode::Exact)?.variance))
                    .collect()
            })
            .collect::<Result<_>>()?;
        for (j, &d) in cfg.d.iter().enumerate() {
            let est: Vec<f64> = per_rep.iter().map(|v| v[j]).collect();
            table
                .rows
                .extend(ratio_rows(&b, d, "sample_mean", &est, &truth));
        }
    }
    Ok(table)
}

/// Bernoulli-incomplete variance-kernel U-statistics on standard normal data.
///
/// Methods: `incomplete` (normalised by the realised count), `ht`
/// (Horvitz-Thompson, normalised by N) on the kernel centred at its known
/// mean 1, and `ht_uncentered` on the raw kernel as a diagnostic. The two
/// centred methods share each replicate's subsample selection.
pub fn incomplete_ratio_experiment(
    name: &str,
    cfg: &IncompleteRatioConfig,
    seed: u64,
) -> Result<Table> {
    check_grid(&cfg.n_grid, cfg.reps)?;
    let truth_reps = cfg.truth_reps.unwrap_or(4 * cfg.reps);
    const METHODS: [&str; 3] = ["incomplete", "ht", "ht_uncentered"];
    let mut table = Table::default();
    for &n in &cfg.n_grid {
        let s = ceil_pow(n, cfg.order_exponent);
        let target = ceil_pow(n, cfg.target_exponent) as f64;
        if s >= n {
            return Err(Error::InvalidArgument(format!(
                "order {s} must be below n = {n}"
            )));
        }
        let b = RowBuilder {
            experiment: name,
            seed,
            n,
            s1: None,
            s2: Some(s),
        };
        let raw = VarianceKernel { order: s };
        let centered = CenteredKernel {
            kernel: raw,
            theta: 1.0,
        };
        let estimators = |sel_seed: u64| {
            (
                UStatEstimator::new(
                    centered,
                    SamplingPlan::Bernoulli { target_n: target },
                    sel_seed,
                    0,
                ),
                UStatEstimator::new(
                    centered,
                    SamplingPlan::HorvitzThompson { target_n: target },
                    sel_seed,
                    0,
                ),
                UStatEstimator::new(
                    raw,
                    SamplingPlan::HorvitzThompson { target_n: target },
                    sel_seed,
                    0,
                ),
            )
        };
        let point = |data: &[f64], sel_seed: u64| -> Result<[f64; 3]> {
            let (a, h, u) = estimators(sel_seed);
            let view = crate::DataView::full(data);
            Ok([
                a.evaluate(view)?.value,
                h.evaluate(view)?.value,
                u.evaluate(view)?.value,
            ])
        };

        let truth_values: Vec<[f64; 3]> = (0..truth_reps)
            .into_par_iter()
            .map(|r| {
                let rs = stream::key(seed, tag::TRUTH, &[n as u64, r as u64]);
                point(&normal_sample(n, rs), stream::key(rs, tag::SELECT, &[]))
            })
            .collect::<Result<_>>()?;
        let truths: Vec<McEstimate> = (0..3)
            .map(|j| variance_with_se(&truth_values.iter().map(|v| v[j]).collect::<Vec<_>>()))
            .collect::<Result<_>>()?;
        for (j, m) in METHODS.iter().enumerate() {
            table
                .rows
                .push(b.row(None, m, "truth_variance", truths[j].value, truths[j].se));
        }

        let per_rep: Vec<([f64; 3], [f64; 3])> = (0..cfg.reps)
            .into_par_iter()
            .map(|r| {
                let rs = replicate_seed(seed, n, r);
                let data = normal_sample(n, rs);
                let sel_seed = stream::key(rs, tag::SELECT, &[]);
                let (a, h, u) = estimators(sel_seed);
                let jk = |e: &dyn crate::jackknife::Estimator<f64>| -> Result<f64> {
                    Ok(jkd_variance(e, &data, cfg.d, JackknifeMode::Exact)?.variance)
                };
                Ok(([jk(&a)?, jk(&h)?, jk(&u)?], point(&data, sel_seed)?))
            })
            .collect::<Result<_>>()?;
        let mut medians = Vec::new();
        for (j, m) in METHODS.iter().enumerate() {
            let est: Vec<f64> = per_rep.iter().map(|v| v.0[j]).collect();
            let rows = ratio_rows(&b, cfg.d, m, &est, &truths[j]);
            medians.push((rows[0].value, rows[0].mc_se));
            table.rows.extend(rows);
        }
        // agreement of the two centred methods
        let (mi, si) = medians[0];
        let (mh, sh) = medians[1];
        let agree = mh / mi;
        let agree_se = agree * ((si / mi).powi(2) + (sh / mh).powi(2)).sqrt();
        table.rows.push(b.row(
            Some(cfg.d),
            "ht_vs_incomplete",
            "median_ratio_quotient",
            agree,
            agree_se,
        ));
        table.rows.push(b.row(
            Some(cfg.d),
            "ht_vs_incomplete",
            "median_ratio_rel_diff",
            (agree - 1.0).abs(),
            agree_se,
        ));
        let point_rel: Vec<f64> = per_rep
            .iter()
            .map(|v| ((v.1[1] - v.1[0]) / v.1[0]).abs())
            .collect();
        let med = median_with_se(&point_rel);
        table.rows.push(b.row(
            None,
            "ht_vs_incomplete",
            "median_point_rel_diff",
            med.value,
            med.se,
        ));
    }
    Ok(table)
}

/// Empirical coverage of studentized jackknife intervals.
pub fn coverage_experiment(
    name: &str,
    cfg: &CoverageConfig,
    dgp: &DgpConfig,
    seed: u64,
) -> Result<Table> {
    check_grid(&cfg.n_grid, cfg.reps)?;
    let mut table = Table::default();
    let mean = sample_mean();
    for &n in &cfg.n_grid {
        let (scales, truth, method) = match cfg.estimator {
            CoverageEstimator::Tdnn => {
                let (s1, s2) = cfg.scale.scales(n)?;
                (Some((s1, s2)), dgp.mu(&cfg.query), "tdnn")
            }
            CoverageEstimator::SampleMean => (None, dgp.mean_response()?, "sample_mean"),
        };
        let b = RowBuilder {
            experiment: name,
            seed,
            n,
            s1: scales.map(|s| s.0),
            s2: scales.map(|s| s.1),
        };
        let hits: Vec<(f64, f64)> = (0..cfg.reps)
            .into_par_iter()
            .map(|r| {
                let data = dgp_sample(dgp, n, replicate_seed(seed, n, r))?;
                let report = match scales {
                    Some((s1, s2)) => tdnn_jackknife(
                        &data,
                        &TdnnConfig::new(s1, s2, cfg.query.clone()),
                        cfg.d,
                        JackknifeMode::Exact,
                    )?,
                    None => jkd_variance(&mean, data.y(), cfg.d, JackknifeMode::Exact)?,
                };
                let ci = studentized_ci(report.estimate, report.variance, cfg.level)?;
                let covered = (ci.ci_lo <= truth && truth <= ci.ci_hi) as u8 as f64;
                Ok((covered, ci.ci_hi - ci.ci_lo))
            })
            .collect::<Result<_>>()?;
        let m = cfg.reps as f64;
        let cov = hits.iter().map(|h| h.0).sum::<f64>() / m;
        table.rows.push(b.row(
            Some(cfg.d),
            method,
            "coverage",
            cov,
            (cov * (1.0 - cov) / m).sqrt(),
        ));
        let width = mean_with_se(&hits.iter().map(|h| h.1).collect::<Vec<_>>());
        table
            .rows
            .push(b.row(Some(cfg.d), method, "mean_width", width.value, width.se));
        table
            .rows
            .push(b.row(Some(cfg.d), method, "nominal_level", cfg.level, 0.0));
    }
    Ok(table)
}

fn tdnn_zetas(
    dgp: &DgpConfig,
    s1: usize,
    s2: usize,
    cfg: &DominanceConfig,
    seed: u64,
) -> Result<(McEstimate, McEstimate)> {
    let kernel = TdnnKernel::new(&TdnnConfig::new(s1, s2, cfg.query.clone()))?;
    let sampler = |rng: &mut StreamRng| dgp.draw(rng);
    let zeta_seed = stream::key(seed, tag::ZETA, &[s1 as u64, s2 as u64]);
    let z1 = estimate_zeta_nested(
        &kernel,
        sampler,
        1,
        cfg.zeta1_outer,
        cfg.zeta1_inner,
        zeta_seed,
    )?;
    let zs = estimate_zeta(&kernel, sampler, s2, cfg.zeta_reps, zeta_seed)?;
    Ok((z1, zs))
}

/// zeta^1 and zeta^{s2} of the TDNN kernel, the dominance statistic along
/// the n grid, and the s2 * zeta^1 trend over a fixed s2 grid.
pub fn dominance_experiment(
    name: &str,
    cfg: &DominanceConfig,
    dgp: &DgpConfig,
    seed: u64,
) -> Result<Table> {
    check_grid(&cfg.n_grid, cfg.zeta_reps)?;
    dgp.validate()?;
    let mut table = Table::default();
    for &n in &cfg.n_grid {
        let (s1, s2) = cfg.scale.scales(n)?;
        let b = RowBuilder {
            experiment: name,
            seed,
            n,
            s1: Some(s1),
            s2: Some(s2),
        };
        let (z1, zs) = tdnn_zetas(dgp, s1, s2, cfg, seed)?;
        let stat = dominance_stat(n, s2, zs.value, z1.value)?;
        // delta method, treating the two estimates as independent
        let (sf, nf) = (s2 as f64, n as f64);
        let d_z1 = (sf / nf) * zs.value / (sf * z1.value * z1.value);
        let d_zs = (sf / nf) / (sf * z1.value);
        let stat_se = ((d_z1 * z1.se).powi(2) + (d_zs * zs.se).powi(2)).sqrt();
        table
            .rows
            .push(b.row(None, "tdnn", "zeta1", z1.value, z1.se));
        table
            .rows
            .push(b.row(None, "tdnn", "zeta_s", zs.value, zs.se));
        table
            .rows
            .push(b.row(None, "tdnn", "dominance_stat", stat, stat_se));
        table
            .rows
            .push(b.row(None, "tdnn", "s2_zeta1", sf * z1.value, sf * z1.se));
    }
    let mut trend = Vec::new();
    for &s2 in &cfg.s2_grid {
        let s1 = s1_for(s2, cfg.scale.s1_ratio);
        if s1 == 0 || s1 >= s2 {
            return Err(Error::InvalidArgument(format!(
                "s2 = {s2} leaves no valid s1"
            )));
        }
        let b = RowBuilder {
            experiment: name,
            seed,
            n: cfg.trend_n,
            s1: Some(s1),
            s2: Some(s2),
        };
        let (z1, _) = tdnn_zetas(dgp, s1, s2, cfg, seed)?;
        let v = s2 as f64 * z1.value;
        let se = s2 as f64 * z1.se;
        table.rows.push(b.row(None, "s2_trend", "s2_zeta1", v, se));
        trend.push((v, se));
    }
    if trend.len() >= 2 {
        let (hi, hi_se) =
            trend
                .iter()
                .copied()
                .fold((f64::MIN, 0.0), |a, t| if t.0 > a.0 { t } else { a });
        let (lo, lo_se) =
            trend
                .iter()
                .copied()
                .fold((f64::MAX, 0.0), |a, t| if t.0 < a.0 { t } else { a });
        let r = hi / lo;
        let se = r * ((hi_se / hi).powi(2) + (lo_se / lo).powi(2)).sqrt();
        let b = RowBuilder {
            experiment: name,
            seed,
            n: cfg.trend_n,
            s1: None,
            s2: None,
        };
        table
            .rows
            .push(b.row(None, "s2_trend", "max_min_ratio", r, se));
    }
    Ok(table)
}

/// Lebesgue measure of [x - r, x + r] intersected with [0, 1].
fn interval_mass(x: f64, r: f64) -> f64 {
    ((x + r).min(1.0) - (x - r).max(0.0)).max(0.0)
}

/// Exact E[kappa] = 1/s by enumeration of orderings, and a Monte Carlo check
/// that E[f(X1) s E[kappa | X1]] recovers f(x) for f = mu under the uniform
/// one-dimensional design, where E[kappa | X1] = (1 - P(B(x, |X1 - x|)))^(s-1).
pub fn kappa_check(
    name: &str,
    cfg: &KappaCheckConfig,
    dgp: &DgpConfig,
    seed: u64,
) -> Result<Table> {
    if dgp.k != 1 || dgp.design != Design::Uniform || cfg.query.len() != 1 {
        return Err(Error::InvalidArgument(
            "kappa check needs the uniform design with k = 1".into(),
        ));
    }
    if cfg.s == 0 || cfg.reps < 2 {
        return Err(Error::InvalidArgument(
            "kappa check needs s >= 1 and reps >= 2".into(),
        ));
    }
    let mut table = Table::default();
    for &s in &cfg.exact_orders {
        let p = nearest_indicator_probability(s)?;
        let b = RowBuilder {
            experiment: name,
            seed,
            n: s,
            s1: None,
            s2: Some(s),
        };
        let v = num_traits::ToPrimitive::to_f64(&p).unwrap_or(f64::NAN);
        table.rows.push(b.row(None, "exact", "e_kappa", v, 0.0));
        table.rows.push(b.row(
            None,
            "exact",
            "e_kappa_minus_inv_s",
            v - 1.0 / s as f64,
            0.0,
        ));
    }
    let x = cfg.query[0];
    let s = cfg.s;
    let values: Vec<f64> = (0..cfg.reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream::replicate_rng(seed, tag::REPLICATE, &[s as u64, r as u64]);
            let x1: f64 = rng.random();
            let cond = (1.0 - interval_mass(x, (x1 - x).abs())).powi(s as i32 - 1);
            dgp.mu(&[x1]) * s as f64 * cond
        })
        .collect();
    let est = mean_with_se(&values);
    let b = RowBuilder {
        experiment: name,
        seed,
        n: cfg.reps,
        s1: None,
        s2: Some(s),
    };
    table
        .rows
        .push(b.row(None, "monte_carlo", "weighted_mean", est.value, est.se));
    table
        .rows
        .push(b.row(None, "monte_carlo", "target", dgp.mu(&[x]), 0.0));
    table.rows.push(b.row(
        None,
        "monte_carlo",
        "z_score",
        (est.value - dgp.mu(&[x])) / est.se,
        0.0,
    ));
    Ok(table)
}
