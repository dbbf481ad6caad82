use proptest::prelude::*;

use ustat::combinatorics::binom_f64;
use ustat::hoeffding::{build_table, DiscreteDistribution, OracleOptions};
use ustat::jackknife::{jk_variance, jkd_variance, JackknifeMode};
use ustat::kernel::{MeanKernel, ProductKernel, VarianceKernel};
use ustat::tdnn::{tdnn_estimate, tdnn_jackknife, RegressionDataset, TdnnConfig};
use ustat::ustat::{eval, eval_complete, EvalOptions, SamplingPlan, UStatEstimator};
use ustat::DataView;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

fn sample_variance(z: &[f64]) -> f64 {
    let n = z.len() as f64;
    let m = z.iter().sum::<f64>() / n;
    z.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0)
}

fn data(min: usize, max: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0..10.0f64, min..=max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn variance_kernel_gives_sample_variance(z in data(2, 12), s in 2usize..=4) {
        prop_assume!(s <= z.len());
        let u = eval_complete(&VarianceKernel { order: s }, DataView::full(&z), 0, &EvalOptions::default()).unwrap();
        prop_assert!(close(u.value, sample_variance(&z), 1e-10));
    }

    #[test]
    fn complete_statistic_ignores_data_order(z in data(3, 10), rot in 0usize..10) {
        let mut w = z.clone();
        w.rotate_left(rot % z.len());
        w.reverse();
        let k = ProductKernel { order: 3 };
        let a = eval_complete(&k, DataView::full(&z), 0, &EvalOptions::default()).unwrap().value;
        let b = eval_complete(&k, DataView::full(&w), 0, &EvalOptions::default()).unwrap().value;
        prop_assert!(close(a, b, 1e-10));
    }

    #[test]
    fn full_selection_matches_complete(z in data(3, 9), seed in any::<u64>()) {
        let k = ProductKernel { order: 2 };
        let all = binom_f64(z.len() as u64, 2);
        let opts = EvalOptions::default();
        let complete = eval_complete(&k, DataView::full(&z), 0, &opts).unwrap().value;
        for plan in [SamplingPlan::Bernoulli { target_n: all }, SamplingPlan::HorvitzThompson { target_n: all }] {
            let u = eval(&k, DataView::full(&z), plan, seed, 0, &opts).unwrap();
            prop_assert!(close(u.value, complete, 1e-12));
        }
    }

    #[test]
    fn incomplete_statistic_is_reproducible(z in data(6, 14), seed in any::<u64>()) {
        let k = VarianceKernel { order: 2 };
        let plan = SamplingPlan::Bernoulli { target_n: z.len() as f64 };
        let opts = EvalOptions::default();
        let a = eval(&k, DataView::full(&z), plan, seed, 1, &opts);
        let b = eval(&k, DataView::full(&z), plan, seed, 1, &opts);
        prop_assert_eq!(a.ok(), b.ok());
    }

    #[test]
    fn hoeffding_reconstruction_matches_direct_evaluation(
        support in prop::collection::vec(-3.0..3.0f64, 2..=3),
        raw in prop::collection::vec(0.1..1.0f64, 3),
        picks in prop::collection::vec(0usize..3, 2..=6),
    ) {
        let m = support.len();
        let total: f64 = raw[..m].iter().sum();
        let probs: Vec<f64> = raw[..m].iter().map(|p| p / total).collect();
        let dist = DiscreteDistribution::new(support.clone(), probs).unwrap();
        let idx: Vec<usize> = picks.iter().map(|&p| p % m).collect();
        let values: Vec<f64> = idx.iter().map(|&i| support[i]).collect();
        let k = ProductKernel { order: 2 };
        let table = build_table(&k, &dist, &OracleOptions::default()).unwrap();
        let direct = eval_complete(&k, DataView::full(&values), 0, &EvalOptions::default()).unwrap().value;
        prop_assert!(close(table.reconstruct(&idx).unwrap(), direct, 1e-10));
    }

    #[test]
    fn jackknife_of_u_statistic_is_nonnegative(z in data(4, 12)) {
        let est = UStatEstimator::new(VarianceKernel { order: 2 }, SamplingPlan::Complete, 0, 0);
        let one = jk_variance(&est, &z).unwrap();
        let d1 = jkd_variance(&est, &z, 1, JackknifeMode::Exact).unwrap();
        prop_assert!(one.variance >= 0.0);
        prop_assert!(close(one.variance, d1.variance, 1e-12));
    }

    #[test]
    fn order_one_mean_kernel_jackknife_is_classical(z in data(2, 30)) {
        let est = UStatEstimator::new(MeanKernel { order: 1 }, SamplingPlan::Complete, 0, 0);
        let v = jk_variance(&est, &z).unwrap().variance;
        prop_assert!(close(v, sample_variance(&z) / z.len() as f64, 1e-10));
    }

    #[test]
    fn tdnn_is_translation_equivariant(
        x in prop::collection::vec(0.0..1.0f64, 24..=40),
        y in prop::collection::vec(-5.0..5.0f64, 40),
        shift in -100.0..100.0f64,
        q in 0.0..1.0f64,
    ) {
        let n = x.len();
        let data = RegressionDataset::new(x.clone(), 1, y[..n].to_vec()).unwrap();
        let shifted = data.with_responses(y[..n].iter().map(|v| v + shift).collect()).unwrap();
        let cfg = TdnnConfig::new(3, 7, vec![q]);
        let a = tdnn_jackknife(&data, &cfg, 2, JackknifeMode::Exact).unwrap();
        let b = tdnn_jackknife(&shifted, &cfg, 2, JackknifeMode::Exact).unwrap();
        prop_assert!(close(b.estimate, a.estimate + shift, 1e-9));
        prop_assert!((b.variance - a.variance).abs() <= 1e-8 * (1.0 + a.variance));
        prop_assert!(close(tdnn_estimate(&data, &cfg).unwrap(), a.estimate, 1e-12));
    }
}
