//! Oracle suites: each check compares an implementation against an
//! independent computation (exhaustive enumeration, exact arithmetic or a
//! classical identity) and reports measured against expected.

use std::fmt;
use std::str::FromStr;

use num_rational::BigRational;
use num_traits::One;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::combinatorics::{
    chu_vandermonde_check, kernel_product_probability, nearest_indicator_probability,
    new_new_alternative_form, new_new_closed_form, shared_new_closed_form,
    shared_shared_closed_form, KernelPairing, ORDERING_BOUND,
};
use crate::data::DataView;
use crate::error::Result;
use crate::hoeffding::{build_table, variance_decomposition, DiscreteDistribution, OracleOptions};
use crate::jackknife::{jk_variance, jkd_variance, sample_mean, JackknifeMode};
use crate::kernel::{
    FixedOmega, Kernel, MeanKernel, ProductKernel, SignFlipKernel, VarianceKernel,
};
use crate::simulation::{kappa_check, DgpConfig, KappaCheckConfig};
use crate::tdnn::{
    dnn_estimate, studentized_ci, tdnn_estimate, tdnn_jackknife, tdnn_weights, DnnKernel,
    RegressionDataset, TdnnConfig, TdnnEstimator,
};
use crate::ustat::{eval_complete, EvalOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Combinatorics,
    Hoeffding,
    Jackknife,
    Tdnn,
}

impl Suite {
    pub const ALL: [Suite; 4] = [
        Suite::Combinatorics,
        Suite::Hoeffding,
        Suite::Jackknife,
        Suite::Tdnn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Combinatorics => "combinatorics",
            Suite::Hoeffding => "hoeffding",
            Suite::Jackknife => "jackknife",
            Suite::Tdnn => "tdnn",
        }
    }

    pub fn run(self) -> Result<Vec<Check>> {
        match self {
            Suite::Combinatorics => combinatorics_suite(),
            Suite::Hoeffding => hoeffding_suite(),
            Suite::Jackknife => jackknife_suite(),
            Suite::Tdnn => tdnn_suite(),
        }
    }
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| format!("unknown suite `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub suite: &'static str,
    pub name: String,
    pub measured: String,
    pub expected: String,
    pub pass: bool,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.pass { "PASS" } else { "FAIL" };
        write!(
            f,
            "{status} [{}] {}: measured {} expected {}",
            self.suite, self.name, self.measured, self.expected
        )
    }
}

fn check(
    suite: Suite,
    name: impl Into<String>,
    measured: impl fmt::Display,
    expected: impl fmt::Display,
    pass: bool,
) -> Check {
    Check {
        suite: suite.name(),
        name: name.into(),
        measured: measured.to_string(),
        expected: expected.to_string(),
        pass,
    }
}

fn within(suite: Suite, name: impl Into<String>, max_err: f64, tol: f64) -> Check {
    check(
        suite,
        name,
        format!("max error {max_err:.3e}"),
        format!("<= {tol:.0e}"),
        max_err <= tol,
    )
}

fn ratio(n: i64, d: i64) -> BigRational {
    BigRational::new(n.into(), d.into())
}

pub fn combinatorics_suite() -> Result<Vec<Check>> {
    let suite = Suite::Combinatorics;
    let mut out = Vec::new();
    for (pairing, expected) in [
        (KernelPairing::SharedShared, ratio(1, 3)),
        (KernelPairing::SharedNew, ratio(1, 6)),
        (KernelPairing::NewNew, ratio(1, 3)),
    ] {
        let got = kernel_product_probability(2, 1, pairing)?;
        out.push(check(
            suite,
            format!("{pairing:?} at s=2, c=1"),
            &got,
            &expected,
            got == expected,
        ));
    }

    let (mut ss, mut sn, mut nn, mut mass, mut cases) = (true, true, true, true, 0);
    for s in 1..=ORDERING_BOUND {
        for c in 1..=s {
            if 2 * s - c > ORDERING_BOUND {
                continue;
            }
            cases += 1;
            let shared = kernel_product_probability(s, c, KernelPairing::SharedShared)?;
            ss &=
                shared == shared_shared_closed_form(s, c) && shared == ratio(1, (2 * s - c) as i64);
            // summed over every pair of nearest-neighbour candidates the
            // probabilities account for all orderings
            let mut total = &shared * ratio(c as i64, 1);
            if c < s {
                let new = kernel_product_probability(s, c, KernelPairing::SharedNew)?;
                let both = kernel_product_probability(s, c, KernelPairing::NewNew)?;
                sn &= new == shared_new_closed_form(s, c);
                nn &= both == new_new_closed_form(s, c);
                total += new * ratio((2 * c * (s - c)) as i64, 1)
                    + both * ratio(((s - c) * (s - c)) as i64, 1);
            }
            mass &= total == BigRational::one();
        }
    }
    out.push(check(
        suite,
        "SharedShared = 1/(2s-c) for all 2s-c <= 12",
        format!("{cases} cases"),
        "all equal",
        ss,
    ));
    out.push(check(
        suite,
        "SharedNew matches closed-form sum for all 2s-c <= 12",
        format!("{cases} cases"),
        "all equal",
        sn,
    ));
    out.push(check(
        suite,
        "NewNew matches proof-version formula for all 2s-c <= 12",
        format!("{cases} cases"),
        "all equal",
        nn,
    ));
    out.push(check(
        suite,
        "pairing probabilities sum to one",
        format!("{cases} cases"),
        "all equal",
        mass,
    ));

    let both = kernel_product_probability(2, 1, KernelPairing::NewNew)?;
    let alt = new_new_alternative_form(2, 1);
    out.push(check(
        suite,
        "alternative NewNew form C(2s-c-1, s-1+i) refuted at s=2, c=1",
        format!("oracle {both} vs form {alt}"),
        "different",
        both != alt,
    ));

    for s in 1..=6 {
        let p = nearest_indicator_probability(s)?;
        let expected = ratio(1, s as i64);
        out.push(check(
            suite,
            format!("E[kappa] = 1/s by ordering enumeration, s={s}"),
            &p,
            &expected,
            p == expected,
        ));
    }

    let mut cv = true;
    for m in 0..=12 {
        for n in 0..=12 {
            for r in 0..=12 {
                cv &= chu_vandermonde_check(m, n, r);
            }
        }
    }
    out.push(check(suite, "Chu-Vandermonde on [0,12]^3", cv, true, cv));
    Ok(out)
}

fn oracle_kernels() -> Vec<(String, Box<dyn Kernel<f64>>)> {
    let mut ks: Vec<(String, Box<dyn Kernel<f64>>)> = Vec::new();
    for s in 1..=3 {
        ks.push((format!("mean s={s}"), Box::new(MeanKernel { order: s })));
        ks.push((
            format!("sign-flip s={s} fixed omega"),
            Box::new(FixedOmega {
                kernel: SignFlipKernel { order: s },
                omega: 0x5eed + s as u64,
            }),
        ));
    }
    for s in 2..=3 {
        ks.push((
            format!("variance s={s}"),
            Box::new(VarianceKernel { order: s }),
        ));
        ks.push((
            format!("product s={s}"),
            Box::new(ProductKernel { order: s }),
        ));
    }
    ks
}

fn oracle_distributions() -> Vec<(String, DiscreteDistribution<f64>)> {
    vec![
        (
            "uniform {0,1}".into(),
            DiscreteDistribution::uniform(vec![0.0, 1.0]).unwrap(),
        ),
        (
            "{-1,0.5,2} w.p. (0.2,0.5,0.3)".into(),
            DiscreteDistribution::new(vec![-1.0, 0.5, 2.0], vec![0.2, 0.5, 0.3]).unwrap(),
        ),
    ]
}

/// Exact mean and variance of the complete U-statistic over all datasets in
/// support^n, each weighted by its product-measure probability, together
/// with the worst reconstruction error seen along the way.
fn exhaustive_moments<K: Kernel<f64>>(
    kernel: &K,
    dist: &DiscreteDistribution<f64>,
    table: &crate::hoeffding::HoeffdingTable,
    n: usize,
) -> Result<(f64, f64, f64)> {
    let m = dist.len();
    let opts = EvalOptions::default();
    let mut idx = vec![0usize; n];
    let (mut e1, mut e2, mut worst) = (0.0, 0.0, 0.0f64);
    let mut values = vec![0.0; n];
    loop {
        let w: f64 = idx.iter().map(|&i| dist.probs()[i]).product();
        for (v, &i) in values.iter_mut().zip(&idx) {
            *v = dist.support()[i];
        }
        let u = eval_complete(kernel, DataView::full(&values), 0, &opts)?.value;
        worst = worst.max((u - table.reconstruct(&idx)?).abs());
        e1 += w * u;
        e2 += w * u * u;
        let mut k = n;
        loop {
            if k == 0 {
                return Ok((e1, e2 - e1 * e1, worst));
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < m {
                break;
            }
            idx[k] = 0;
        }
    }
}

pub fn hoeffding_suite() -> Result<Vec<Check>> {
    let suite = Suite::Hoeffding;
    let opts = OracleOptions::default();
    let mut out = Vec::new();
    for (dname, dist) in oracle_distributions() {
        for (kname, kernel) in oracle_kernels() {
            let table = build_table(&kernel, &dist, &opts)?;
            let s = table.order;
            let (mut recon, mut var_err, mut mean_err) = (0.0f64, 0.0f64, 0.0f64);
            for n in s..=8 {
                let (mean, var, worst) = exhaustive_moments(&kernel, &dist, &table, n)?;
                recon = recon.max(worst);
                var_err = var_err.max((var - variance_decomposition(&table, n)?).abs());
                mean_err = mean_err.max((mean - table.theta).abs());
            }
            let tag = format!("{kname}, {dname}, n={s}..8");
            out.push(within(
                suite,
                format!("reconstruction identity ({tag})"),
                recon,
                1e-10,
            ));
            out.push(within(
                suite,
                format!("variance decomposition vs exhaustive ({tag})"),
                var_err,
                1e-10,
            ));
            out.push(within(
                suite,
                format!("E[U] = theta ({tag})"),
                mean_err,
                1e-10,
            ));
        }
    }
    let coin = DiscreteDistribution::uniform(vec![0.0, 1.0])?;
    let t = build_table(&VarianceKernel { order: 2 }, &coin, &opts)?;
    let v4 = variance_decomposition(&t, 4)?;
    out.push(check(
        suite,
        "variance kernel on a fair coin: Var(U_4)",
        v4,
        1.0 / 96.0,
        (v4 - 1.0 / 96.0).abs() < 1e-15,
    ));
    Ok(out)
}

pub fn jackknife_suite() -> Result<Vec<Check>> {
    let suite = Suite::Jackknife;
    let mut out = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0x6a6b);
    let mean = sample_mean();
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(2..=50);
        let z: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let m = z.iter().sum::<f64>() / n as f64;
        let s2 = z.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64;
        worst = worst.max((jk_variance(&mean, &z)?.variance - s2 / n as f64).abs());
    }
    out.push(within(
        suite,
        "JK(sample mean) = S^2/n on 100 datasets, n in [2,50]",
        worst,
        1e-12,
    ));

    let toy = [1.0, 2.0, 3.0];
    let v = jk_variance(&mean, &toy)?.variance;
    out.push(check(
        suite,
        "JK(sample mean) on (1,2,3)",
        v,
        1.0 / 3.0,
        (v - 1.0 / 3.0).abs() < 1e-15,
    ));

    let four = [1.0, 2.0, 3.0, 4.0];
    let v = jkd_variance(&mean, &four, 2, JackknifeMode::Exact)?.variance;
    // six pair deletions leave means 3.5, 3, 2.5, 2.5, 2, 1.5 around 2.5; (n-d)/d = 1
    let hand = (1.0 + 0.25 + 0.0 + 0.0 + 0.25 + 1.0) / 6.0;
    out.push(check(
        suite,
        "delete-2 JK of the mean on (1,2,3,4)",
        v,
        hand,
        (v - hand).abs() < 1e-15,
    ));

    let z: Vec<f64> = (0..30).map(|_| rng.random_range(-1.0..1.0)).collect();
    let a = jk_variance(&mean, &z)?.variance;
    let b = jkd_variance(&mean, &z, 1, JackknifeMode::Exact)?.variance;
    out.push(check(
        suite,
        "delete-d with d=1 equals delete-1",
        b,
        a,
        a == b,
    ));
    Ok(out)
}

fn random_dataset(rng: &mut ChaCha8Rng, n: usize, k: usize) -> RegressionDataset {
    let x = (0..n * k).map(|_| rng.random::<f64>()).collect();
    let y = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    RegressionDataset::new(x, k, y).expect("finite data")
}

pub fn tdnn_suite() -> Result<Vec<Check>> {
    let suite = Suite::Tdnn;
    let mut out = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0x7464);
    let opts = EvalOptions::default();
    for k in [1, 2] {
        let mut worst = 0.0f64;
        let mut cases = 0;
        for n in 1..=10 {
            for s in 1..=n.min(4) {
                for _ in 0..20 {
                    let data = random_dataset(&mut rng, n, k);
                    let query: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
                    let obs = data.observations();
                    let kernel = DnnKernel {
                        order: s,
                        query: query.clone(),
                    };
                    let brute = eval_complete(&kernel, DataView::full(&obs), 0, &opts)?.value;
                    worst = worst.max((brute - dnn_estimate(&query, &data, s)?).abs());
                    cases += 1;
                }
            }
        }
        out.push(within(
            suite,
            format!("DNN closed form vs subset enumeration, k={k}, {cases} cases"),
            worst,
            1e-12,
        ));
    }

    let toy = RegressionDataset::new(vec![1.0, 2.0, 3.0], 1, vec![10.0, 20.0, 30.0])?;
    let d = dnn_estimate(&[0.0], &toy, 2)?;
    out.push(check(
        suite,
        "DNN worked example n=3, s=2",
        d,
        40.0 / 3.0,
        (d - 40.0 / 3.0).abs() < 1e-12,
    ));
    let (w1, w2) = tdnn_weights(1, 2, 1)?;
    let t = tdnn_estimate(&toy, &TdnnConfig::new(1, 2, vec![0.0]))?;
    let expected = w1 * 20.0 + w2 * (40.0 / 3.0);
    out.push(check(
        suite,
        "TDNN worked example s1=1, s2=2",
        t,
        expected,
        (t - expected).abs() < 1e-12,
    ));

    let data = random_dataset(&mut rng, 8, 1);
    let cfg = TdnnConfig::new(2, 3, vec![0.5]);
    let fast = tdnn_jackknife(&data, &cfg, 1, JackknifeMode::Exact)?.variance;
    let naive = jkd_variance(
        &TdnnEstimator { config: cfg },
        &data.observations(),
        1,
        JackknifeMode::Exact,
    )?
    .variance;
    out.push(check(
        suite,
        "TDNN jackknife fast path vs full re-sort",
        fast,
        naive,
        (fast - naive).abs() < 1e-12,
    ));

    let ci = studentized_ci(0.0, 1.0, 0.95)?;
    out.push(check(
        suite,
        "95% normal interval half-width",
        ci.ci_hi,
        1.959964,
        (ci.ci_hi - 1.959964).abs() < 1e-5,
    ));

    let kc = KappaCheckConfig {
        exact_orders: vec![],
        s: 64,
        reps: 10_000,
        query: vec![0.5],
    };
    let table = kappa_check("kappa", &kc, &DgpConfig::default(), 0x6b61)?;
    let est = table
        .find(10_000, None, "monte_carlo", "weighted_mean")
        .expect("row present");
    let target = table
        .find(10_000, None, "monte_carlo", "target")
        .expect("row present")
        .value;
    out.push(check(
        suite,
        "E[mu(X1) s E[kappa|X1]] recovers mu(x), s=64",
        format!("{:.5} (se {:.5})", est.value, est.mc_se),
        format!("{target:.5} within 3 se"),
        (est.value - target).abs() <= 3.0 * est.mc_se,
    ));
    Ok(out)
}

pub fn run_all() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for s in Suite::ALL {
        out.extend(s.run()?);
    }
    Ok(out)
}
