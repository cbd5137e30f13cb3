mod support;

use bridgevol::diagram::DiagramEngine;
use bridgevol::estimators::*;
use bridgevol::stochastic::{monte_carlo_fold, stream_rng, OhlcSample, ProcessConfig, Ticks};
use proptest::prelude::*;
use rayon::prelude::*;

/// `n` continuous-time samples of the bridge with coefficient `kappa`.
fn continuous_samples(kappa: f64, n: usize, seed: u64) -> Vec<OhlcSample> {
    (0..n.div_ceil(4096))
        .into_par_iter()
        .flat_map_iter(|p| {
            let mut rng = stream_rng(seed, p as u64);
            let mut buf = Vec::new();
            let count = 4096.min(n - p * 4096);
            (0..count)
                .map(|_| {
                    let (h, l, c) = support::continuous_ohlc(0.0, kappa, 64, &mut rng, &mut buf);
                    OhlcSample { h, l, c, kappa }
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let (m, se) = support::mean_se(xs);
    (m, se * se * xs.len() as f64)
}

#[test]
fn most_efficient_complete_bridge_by_simulation() {
    let d = DiagramEngine::new().build_most_efficient(2.0, 1.0, 0.0).unwrap();
    let s = continuous_samples(1.0, 1_000_000, 71);
    let req = EstimateRequest {
        samples: s.iter().map(|x| (*x, 1.0)).collect(),
        diagram: &d,
        scale: OutputScale::Canonical,
    };
    let out = batch_report(&req).unwrap();
    assert_eq!(out.rejected, 0);
    let r = out.report;
    assert!((r.mean - 1.0).abs() < 0.002, "mean {}", r.mean);
    assert!((r.mean - 1.0).abs() < 3.0 * r.standard_error + 1e-3);
    assert!((r.variance - 0.1794).abs() < 0.003, "var {}", r.variance);
}

#[test]
fn classic_estimators_by_simulation() {
    let s = continuous_samples(0.0, 1_000_000, 72);
    let gk: Vec<f64> = s.iter().map(classic_gk).collect();
    let pk: Vec<f64> = s.iter().map(classic_parkinson).collect();
    let (m, v) = mean_var(&gk);
    assert!((m - 1.0).abs() < 0.005 && (v - 0.2693).abs() < 0.003, "GK {m} {v}");
    let (m, v) = mean_var(&pk);
    assert!(
        (m - 1.0).abs() < 0.005 && (v - 0.4073).abs() < 0.004,
        "Parkinson {m} {v}"
    );
}

#[test]
fn sample_panels_order_the_estimators() {
    // 100 panels of 200 walks at κ = 0.99: the most efficient diagram,
    // the normalized bridge Parkinson and the classic G&K on the raw
    // process, all on the same walks.
    let kappa = 0.99;
    let engine = DiagramEngine::new().with_grid(100);
    let me = engine.build_most_efficient(2.0, kappa, 0.0).unwrap();
    let pk = engine.build_parkinson(2.0, kappa).unwrap();
    let cfg = ProcessConfig::new(0.0, kappa, Ticks::Continuous);
    let mut ordered = 0;
    for panel in 0..100u64 {
        let rows = monte_carlo_fold(
            &cfg,
            &[kappa, 0.0],
            200,
            900 + panel,
            0,
            Vec::new,
            |acc: &mut Vec<[f64; 3]>, s| {
                acc.push([
                    estimate_one(&s[0], 1.0, &me, OutputScale::Canonical).unwrap(),
                    estimate_one(&s[0], 1.0, &pk, OutputScale::Canonical).unwrap(),
                    classic_gk(&s[1]),
                ])
            },
            |mut a, b| {
                a.extend(b);
                a
            },
        )
        .unwrap();
        let var = |k: usize| mean_var(&rows.iter().map(|r| r[k]).collect::<Vec<_>>()).1;
        if var(0) < var(1) && var(1) < var(2) {
            ordered += 1;
        }
    }
    assert!(ordered >= 95, "ordering held in {ordered} of 100 panels");
}

fn support_sample() -> impl Strategy<Value = OhlcSample> {
    (0.0f64..=1.0, -2.0f64..2.0, 0.01f64..2.0, 0.01f64..2.0).prop_map(|(kappa, c, u, v)| {
        let y = (1.0 - kappa) * c;
        OhlcSample {
            h: y.max(0.0) + u,
            l: y.min(0.0) - v,
            c,
            kappa,
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn estimates_scale_with_the_power_lambda(s in support_sample(), k in 0.1f64..10.0, lambda in 0.5f64..3.0) {
        let d = DiagramEngine::new().with_points_per_panel(4).build_parkinson(lambda, s.kappa).unwrap();
        let a = estimate_one(&s, 1.0, &d, OutputScale::Canonical).unwrap();
        let b = estimate_one(&s.scaled(k), 1.0, &d, OutputScale::Canonical).unwrap();
        prop_assert!((b - k.powf(lambda) * a).abs() <= 1e-12 * b.abs());
    }

    #[test]
    fn parkinson_ignores_the_close(s in support_sample()) {
        let flipped = OhlcSample { c: -s.c, kappa: 1.0, ..s };
        let s = OhlcSample { kappa: 1.0, ..s };
        prop_assert_eq!(classic_parkinson(&s), classic_parkinson(&flipped));
        let d = DiagramEngine::new().with_points_per_panel(4).build_parkinson(2.0, 1.0).unwrap();
        let a = estimate_one(&s, 1.0, &d, OutputScale::Canonical).unwrap();
        let b = estimate_one(&flipped, 1.0, &d, OutputScale::Canonical).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs());
    }
}
