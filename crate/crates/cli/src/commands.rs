//! One function per subcommand. Each writes CSV output plus a JSON sidecar.

use std::path::PathBuf;

use bridgevol::diagram::{phi_of_u, Diagram, DiagramEngine, DomainSkappa, GridTable};
use bridgevol::empirical::{table1_benchmark, write_table1_csv, Table1Config, EVAL_STREAM_BASE};
use bridgevol::estimators::{estimate_one, sample_report, Design, OutputScale};
use bridgevol::specialfn::SeriesPolicy;
use bridgevol::stochastic::{
    monte_carlo_fold, simulate_path_with, stream_rng, OhlcSample, ProcessConfig, Ticks, PARTITION_SIZE,
};
use serde_json::{json, Value};

use crate::config::{Estimator, RunConfig};
use crate::fail::Failure;
use crate::input::read_intervals;
use crate::output::{num, write_csv, Run};

fn engine(cfg: &RunConfig) -> DiagramEngine {
    let mut e = DiagramEngine::new()
        .with_grid(cfg.grid)
        .with_points_per_panel(cfg.numerics.points_per_panel);
    e.series = SeriesPolicy {
        abs_tol: cfg.numerics.abs_tol,
        rel_tol: cfg.numerics.rel_tol,
        max_terms: cfg.numerics.max_terms,
    };
    e
}

/// Diagram of `est` at `(λ, κ)`; the most-efficient one is designed for `γ`.
fn build(engine: &DiagramEngine, est: Estimator, lambda: f64, kappa: f64, gamma: f64) -> Result<Diagram, Failure> {
    Ok(match est {
        Estimator::Me => engine.build_most_efficient(lambda, kappa, gamma)?,
        Estimator::Gk => engine.build_garman_klass(lambda, kappa)?,
        Estimator::Park => engine.build_parkinson(lambda, kappa)?,
    })
}

fn seeds_none() -> Value {
    json!({ "note": "deterministic quadrature, no random numbers" })
}

/// `kappa,var_me,var_gk,var_park` from the analytic moments.
pub fn variance_curve(cfg: &RunConfig) -> Result<PathBuf, Failure> {
    let mut run = Run::start(cfg, "variance-curve")?;
    let eng = engine(cfg);
    let (lambda, gamma) = (cfg.lambda, cfg.gamma);
    let mut rows = Vec::new();
    let mut me = Vec::new();
    for &kappa in &cfg.curves.kappa {
        let v_me = 1.0 / eng.efficiency(lambda, kappa, gamma)? - 1.0;
        let v_gk = eng.moments(&eng.build_garman_klass(lambda, kappa)?, gamma)?.variance;
        let v_p = eng.moments(&eng.build_parkinson(lambda, kappa)?, gamma)?.variance;
        me.push((kappa, v_me));
        rows.push(vec![num(kappa), num(v_me), num(v_gk), num(v_p)]);
    }
    let path = run.path("variance_curve.csv");
    write_csv(&path, &["kappa", "var_me", "var_gk", "var_park"], &rows)?;
    // Monotonicity is observed, not guaranteed, so it is reported only.
    let mut sorted = me.clone();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let rise = sorted
        .windows(2)
        .map(|w| w[1].1 - w[0].1)
        .fold(f64::NEG_INFINITY, f64::max);
    let slack = cfg.curves.monotone_slack;
    let monotone = sorted.len() < 2 || rise <= slack;
    if !monotone {
        eprintln!("note: var_me rises by {rise:e} between neighbouring kappa values (slack {slack:e})");
    }
    run.finish(
        seeds_none(),
        json!({
            "var_me_nonincreasing": monotone,
            "largest_rise": if sorted.len() < 2 { Value::Null } else { json!(rise) },
            "slack": slack,
        }),
    )
}

/// `kappa,mean_gk,mean_park`: means of the classic (un-normalized) forms.
pub fn bias_curve(cfg: &RunConfig) -> Result<PathBuf, Failure> {
    let mut run = Run::start(cfg, "bias-curve")?;
    let eng = engine(cfg);
    let mut rows = Vec::new();
    for &kappa in &cfg.curves.kappa {
        let gk = eng.build_garman_klass(cfg.lambda, kappa)?;
        let p = eng.build_parkinson(cfg.lambda, kappa)?;
        // Diagrams carry 1/ℳ(κ, 0); undo it to get the raw mean.
        let m_gk = gk.normalizer * eng.moments(&gk, cfg.gamma)?.mean;
        let m_p = p.normalizer * eng.moments(&p, cfg.gamma)?.mean;
        rows.push(vec![num(kappa), num(m_gk), num(m_p)]);
    }
    let path = run.path("bias_curve.csv");
    write_csv(&path, &["kappa", "mean_gk", "mean_park"], &rows)?;
    run.finish(seeds_none(), json!({}))
}

/// Per-walk estimates on shared paths.
///
/// `me` and `park` are applied to the `κ`-bridge; `gk` is the classic
/// estimator on the raw walk (`κ = 0`), as an analyst would use it. All
/// three are unbiased at zero drift.
pub fn sample_panel(cfg: &RunConfig) -> Result<PathBuf, Failure> {
    let mut run = Run::start(cfg, "sample-panel")?;
    let p = &cfg.sample_panel;
    let eng = engine(cfg);
    let kappas = [p.kappa, 0.0];
    let mut diagrams = Vec::new();
    for &e in &p.estimators {
        let (kappa, which) = match e {
            Estimator::Gk => (0.0, 1),
            _ => (p.kappa, 0),
        };
        diagrams.push((build(&eng, e, cfg.lambda, kappa, cfg.gamma)?, which));
    }
    let process = ProcessConfig::new(cfg.gamma, 0.0, p.ticks.0);
    let rows = monte_carlo_fold(
        &process,
        &kappas,
        p.n,
        cfg.seed,
        0,
        Vec::new,
        |acc: &mut Vec<bridgevol::Result<Vec<f64>>>, s: &[OhlcSample]| {
            acc.push(
                diagrams
                    .iter()
                    .map(|(d, k)| estimate_one(&s[*k], 1.0, d, OutputScale::Canonical))
                    .collect(),
            )
        },
        |mut a, b| {
            a.extend(b);
            a
        },
    )?;
    let rows: Vec<Vec<f64>> = rows.into_iter().collect::<bridgevol::Result<_>>()?;
    let mut header = vec!["idx"];
    header.extend(p.estimators.iter().map(|e| e.name()));
    let text: Vec<Vec<String>> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            std::iter::once(i.to_string())
                .chain(r.iter().map(|&v| num(v)))
                .collect()
        })
        .collect();
    let path = run.path("sample_panel.csv");
    write_csv(&path, &header, &text)?;
    let mut summary = serde_json::Map::new();
    for (c, e) in p.estimators.iter().enumerate() {
        let col: Vec<f64> = rows.iter().map(|r| r[c]).collect();
        let design = Design {
            lambda: cfg.lambda,
            kappa: kappas[diagrams[c].1],
            gamma0: cfg.gamma,
        };
        let v = match sample_report(&col, design) {
            Ok(r) => json!({ "mean": r.mean, "variance": r.variance, "standard_error": r.standard_error }),
            Err(_) => json!({ "mean": col[0], "variance": Value::Null }),
        };
        summary.insert(e.name().to_string(), v);
    }
    run.finish(
        json!({ "base": cfg.seed, "streams": format!("partition p uses stream p, {PARTITION_SIZE} walks each") }),
        Value::Object(summary),
    )
}

/// Per-interval estimates from a tick or OHLC file.
pub fn estimate(cfg: &RunConfig) -> Result<PathBuf, Failure> {
    let e = &cfg.estimate;
    let parsed = read_intervals(&e.input, e.kappa)?;
    let mut run = Run::start(cfg, "estimate")?;
    for w in &parsed.warnings {
        eprintln!("warning: {w}");
    }
    let eng = engine(cfg);
    let d = build(&eng, e.estimator, cfg.lambda, e.kappa, cfg.gamma)?;
    let half = cfg.lambda / 2.0;
    let mut rows = Vec::new();
    let mut values = Vec::new();
    let mut per_time = Vec::new();
    let mut rejected = Vec::new();
    for iv in &parsed.intervals {
        let t = iv.t_end - iv.t_start;
        match estimate_one(&iv.sample, t, &d, OutputScale::Canonical) {
            Ok(v) => {
                let u = v / t.powf(half);
                rows.push(vec![iv.label.clone(), num(iv.t_start), num(iv.t_end), num(v), num(u)]);
                values.push(v);
                per_time.push(u);
            }
            Err(err) => {
                eprintln!("warning: interval {}: {err}", iv.label);
                rejected.push(format!("interval {}: {err}", iv.label));
            }
        }
    }
    if values.is_empty() {
        return Err(Failure::input("every interval was rejected"));
    }
    let path = run.path("estimates.csv");
    write_csv(
        &path,
        &["interval", "t_start", "t_end", "estimate", "per_unit_time"],
        &rows,
    )?;
    let design = Design {
        lambda: cfg.lambda,
        kappa: e.kappa,
        gamma0: cfg.gamma,
    };
    let stats = |v: &[f64]| match sample_report(v, design) {
        Ok(r) => json!({ "mean": r.mean, "variance": r.variance, "standard_error": r.standard_error }),
        Err(_) => json!({ "mean": v[0], "variance": Value::Null, "standard_error": Value::Null }),
    };
    let mut warnings = parsed.warnings.clone();
    warnings.extend(rejected.iter().cloned());
    warnings.truncate(50);
    run.finish(
        json!({ "note": "no random numbers" }),
        json!({
            "estimator": e.estimator.name(),
            "intervals": parsed.intervals.len(),
            "estimates": values.len(),
            "bad_rows": parsed.bad_rows,
            "rejected": rejected.len(),
            "estimate": stats(&values),
            "per_unit_time": stats(&per_time),
            "warnings": warnings,
        }),
    )
}

/// The finite-tick benchmark table.
pub fn table1(cfg: &RunConfig) -> Result<PathBuf, Failure> {
    let mut run = Run::start(cfg, "table1")?;
    let t = &cfg.table1;
    let tc = Table1Config {
        ticks: t.ticks.iter().map(|k| k.0).collect(),
        m_diagram: t.m,
        n_eval: t.n,
        seed: cfg.seed,
        bins: t.bins,
    };
    let rows = table1_benchmark(&tc, &engine(cfg))?;
    let path = run.path("table1.csv");
    let file = std::fs::File::create(&path)?;
    write_table1_csv(&rows, std::io::BufWriter::new(file))?;
    // Ordering claims with 2-SE intervals.
    let checks: Vec<Value> = rows
        .iter()
        .map(|r| {
            let sep = |a: usize, b: usize| {
                r.variance[a] + 2.0 * r.standard_error[a] < r.variance[b] - 2.0 * r.standard_error[b]
            };
            json!({
                "K": r.ticks,
                "me_below_gk_kappa0": sep(1, 0),
                "me_below_gk_kappa1": sep(3, 2),
                "variance": r.variance,
                "standard_error": r.standard_error,
                "mean": r.mean,
            })
        })
        .collect();
    run.finish(
        json!({
            "base": cfg.seed,
            "diagram_streams": "0 ..",
            "evaluation_streams": format!("{EVAL_STREAM_BASE} .."),
        }),
        json!({ "rows": checks }),
    )
}

/// A diagram in its exact CSV form plus a `phi,theta,psi` table for plots.
pub fn diagram_dump(cfg: &RunConfig) -> Result<PathBuf, Failure> {
    let mut run = Run::start(cfg, "diagram-dump")?;
    let dd = &cfg.diagram_dump;
    let eng = engine(cfg);
    let d = build(&eng, dd.estimator, cfg.lambda, dd.kappa, cfg.gamma)?;
    let name = d.kind.as_str();
    let exact = run.path(&format!("diagram_{name}.csv"));
    d.write_csv(std::io::BufWriter::new(std::fs::File::create(&exact)?))?;
    let dom = DomainSkappa::new(dd.kappa)?;
    let n = cfg.grid;
    let mut rows = Vec::with_capacity(n * n);
    for i in 0..n {
        let phi = phi_of_u(GridTable::centre(i, n));
        for j in 0..n {
            let theta = dom.theta_at(phi, GridTable::centre(j, n));
            rows.push(vec![num(phi), num(theta), num(d.psi(theta, phi)?)]);
        }
    }
    let table = run.path(&format!("diagram_{name}_grid.csv"));
    write_csv(&table, &["phi", "theta", "psi"], &rows)?;
    run.finish(
        seeds_none(),
        json!({ "kind": name, "normalizer": d.normalizer, "clamped_fraction": d.clamped_fraction }),
    )
}

/// Tick file of a drifting log-normal price, one walk per interval.
pub fn simulate(cfg: &RunConfig) -> Result<PathBuf, Failure> {
    let mut run = Run::start(cfg, "simulate")?;
    let s = &cfg.simulate;
    let process = ProcessConfig::new(cfg.gamma, 0.0, s.ticks.0);
    let k = s.ticks.0.steps();
    let scale = s.sigma * s.horizon.sqrt();
    let path = run.path("ticks.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["interval", "time", "price"])?;
    let mut open = s.start_price;
    for i in 0..s.n {
        // Stream i belongs to interval i.
        let mut rng = stream_rng(cfg.seed, i as u64);
        let walk = simulate_path_with(&process, &mut rng)?;
        let t0 = i as f64 * s.horizon;
        let label = i.to_string();
        for (j, x) in walk.values.iter().enumerate() {
            let t = t0 + s.horizon * (j as f64 / k as f64);
            w.write_record([label.as_str(), &num(t), &num(open * (scale * x).exp())])?;
        }
        open *= (scale * walk.close()).exp();
    }
    w.flush()?;
    let drift = cfg.gamma * s.sigma / s.horizon.sqrt();
    run.finish(
        json!({ "base": cfg.seed, "streams": "interval i uses stream i" }),
        json!({
            "intervals": s.n,
            "ticks_per_interval": k,
            "continuous_limit": s.ticks.0 == Ticks::Continuous,
            "drift_per_time_unit": drift,
            "variance_per_interval": s.sigma * s.sigma * s.horizon,
        }),
    )
}
