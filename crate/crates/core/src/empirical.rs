//! Monte Carlo synthesis of diagrams for tick walks.
//!
//! For a walk with finitely many ticks the joint density of `(H, L, C)` is
//! unknown, but `g_λ cos θ dθ dφ` over a bin is estimated by
//! `(1/M) Σ R_m^λ` over the simulated samples falling in that bin. Bins
//! live in the same `(u, s)` coordinates as tabulated diagrams, with
//! `φ = −u π/2` and `s` the position of `θ` inside its `φ`-slice.

use std::io::Write;

use serde::Serialize;

use crate::diagram::{to_spherical, Diagram, DiagramEngine, DiagramKind, DomainSkappa, GridTable, Payload};
use crate::estimators::{classic_gk, estimate_one, OutputScale};
use crate::stochastic::{monte_carlo_fold, OhlcSample, ProcessConfig, Ticks};
use crate::{Error, Result};

/// Default number of bins per axis.
pub const DEFAULT_BINS: usize = 50;
/// Bins with fewer samples are treated as empty.
pub const MIN_BIN_COUNT: u64 = 10;
/// Largest share of unusable bins accepted by [`synthesize_diagram`].
pub const MAX_UNUSABLE_FRACTION: f64 = 0.2;
/// Smallest number of simulated walks accepted for synthesis.
pub const MIN_SIMULATIONS: usize = 10_000;
/// First generator stream used for evaluation runs; diagram synthesis uses
/// streams below it, so the two never share random numbers.
pub const EVAL_STREAM_BASE: u64 = 1 << 40;
/// Batches used for batch-means standard errors.
pub const SE_BATCHES: usize = 20;

/// Histogram estimate of `g_λ` over `S_κ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinnedWeight {
    pub kappa: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub ticks: String,
    pub innovation: String,
    pub n_u: usize,
    pub n_s: usize,
    #[serde(skip)]
    pub counts: Vec<u64>,
    /// `Σ R^λ` per bin.
    #[serde(skip)]
    pub sums: Vec<f64>,
    /// Number of simulated walks.
    pub m: usize,
    pub seed: u64,
    pub stream_offset: u64,
    /// Samples that could not be placed (degenerate or off the domain).
    pub outside: u64,
}

impl BinnedWeight {
    fn index(&self, i: usize, j: usize) -> usize {
        i * self.n_s + j
    }

    pub fn count(&self, i: usize, j: usize) -> u64 {
        self.counts[self.index(i, j)]
    }

    /// `(1/M) Σ R^λ` over the bin.
    pub fn mass(&self, i: usize, j: usize) -> f64 {
        self.sums[self.index(i, j)] / self.m as f64
    }

    pub fn total_mass(&self) -> f64 {
        self.sums.iter().sum::<f64>() / self.m as f64
    }

    pub fn usable(&self, i: usize, j: usize) -> bool {
        self.count(i, j) >= MIN_BIN_COUNT && self.mass(i, j) > 0.0
    }

    /// Writes `phi_bin,s_bin,count,mass` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let io = |e: std::io::Error| Error::InvalidParameter(format!("write failed: {e}"));
        writeln!(out, "phi_bin,s_bin,count,mass").map_err(io)?;
        for i in 0..self.n_u {
            for j in 0..self.n_s {
                writeln!(out, "{i},{j},{},{:.16e}", self.count(i, j), self.mass(i, j)).map_err(io)?;
            }
        }
        Ok(())
    }
}

/// Bin of `(θ, φ)` on an `n_u × n_s` grid.
pub fn bin_of(dom: &DomainSkappa, theta: f64, phi: f64, n_u: usize, n_s: usize) -> (usize, usize) {
    let u = (-phi / std::f64::consts::FRAC_PI_2).clamp(0.0, 1.0);
    let s = dom.s_of(theta, phi);
    let i = ((u * n_u as f64) as usize).min(n_u - 1);
    let j = ((s * n_s as f64) as usize).min(n_s - 1);
    (i, j)
}

/// What to accumulate in one pass over simulated walks.
#[derive(Debug, Clone)]
pub struct SynthesisPlan {
    pub kappas: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub n_u: usize,
    pub n_s: usize,
    pub m: usize,
    pub seed: u64,
    pub stream_offset: u64,
}

#[derive(Debug, Clone)]
struct Hist {
    counts: Vec<u64>,
    sums: Vec<f64>,
    outside: Vec<u64>,
}

fn power(r: f64, lambda: f64) -> f64 {
    if lambda == lambda.round() && lambda.abs() < 64.0 {
        r.powi(lambda as i32)
    } else {
        r.powf(lambda)
    }
}

/// Histograms for every `(κ, λ)` of the plan from one set of walks,
/// indexed `[κ][λ]`. The walks for different `κ` are the same.
pub fn synthesize_weights(config: &ProcessConfig, plan: &SynthesisPlan) -> Result<Vec<Vec<BinnedWeight>>> {
    if plan.m < MIN_SIMULATIONS {
        return Err(Error::InvalidParameter(format!(
            "M = {} below the minimum of {MIN_SIMULATIONS} walks",
            plan.m
        )));
    }
    if plan.n_u == 0 || plan.n_s == 0 || plan.lambdas.is_empty() {
        return Err(Error::InvalidParameter("need at least one bin and one lambda".into()));
    }
    let doms = plan
        .kappas
        .iter()
        .map(|&k| DomainSkappa::new(k))
        .collect::<Result<Vec<_>>>()?;
    let (nk, nl, nb) = (plan.kappas.len(), plan.lambdas.len(), plan.n_u * plan.n_s);
    let hist = monte_carlo_fold(
        config,
        &plan.kappas,
        plan.m,
        plan.seed,
        plan.stream_offset,
        || Hist {
            counts: vec![0; nk * nb],
            sums: vec![0.0; nk * nl * nb],
            outside: vec![0; nk],
        },
        |h: &mut Hist, samples: &[OhlcSample]| {
            for (ki, s) in samples.iter().enumerate() {
                let p = match to_spherical(s) {
                    Ok(p) if doms[ki].contains(p.theta, p.phi) => p,
                    _ => {
                        h.outside[ki] += 1;
                        continue;
                    }
                };
                let (i, j) = bin_of(&doms[ki], p.theta, p.phi, plan.n_u, plan.n_s);
                let b = i * plan.n_s + j;
                h.counts[ki * nb + b] += 1;
                for (li, &lam) in plan.lambdas.iter().enumerate() {
                    h.sums[(ki * nl + li) * nb + b] += power(p.r, lam);
                }
            }
        },
        |mut a, b| {
            a.counts.iter_mut().zip(&b.counts).for_each(|(x, y)| *x += y);
            a.sums.iter_mut().zip(&b.sums).for_each(|(x, y)| *x += y);
            a.outside.iter_mut().zip(&b.outside).for_each(|(x, y)| *x += y);
            a
        },
    )?;
    let mut out = Vec::with_capacity(nk);
    for (ki, &kappa) in plan.kappas.iter().enumerate() {
        let mut row = Vec::with_capacity(nl);
        for (li, &lambda) in plan.lambdas.iter().enumerate() {
            row.push(BinnedWeight {
                kappa,
                lambda,
                gamma: config.gamma,
                ticks: config.ticks.to_string(),
                innovation: config.innovation.name().to_string(),
                n_u: plan.n_u,
                n_s: plan.n_s,
                counts: hist.counts[ki * nb..(ki + 1) * nb].to_vec(),
                sums: hist.sums[(ki * nl + li) * nb..(ki * nl + li + 1) * nb].to_vec(),
                m: plan.m,
                seed: plan.seed,
                stream_offset: plan.stream_offset,
                outside: hist.outside[ki],
            });
        }
        out.push(row);
    }
    Ok(out)
}

/// Histogram of `R^λ` on `bins × bins` bins for the bridge with
/// `config.kappa`.
pub fn synthesize_weight(
    config: &ProcessConfig,
    lambda: f64,
    bins: usize,
    m: usize,
    seed: u64,
) -> Result<BinnedWeight> {
    let plan = SynthesisPlan {
        kappas: vec![config.kappa],
        lambdas: vec![lambda],
        n_u: bins,
        n_s: bins,
        m,
        seed,
        stream_offset: 0,
    };
    Ok(synthesize_weights(config, &plan)?.remove(0).remove(0))
}

/// `ψ = (ĝ_λ / ĝ_{2λ}) / ℰ̂` on the bin grid, with `ℰ̂ = Σ ĝ_λ² / ĝ_{2λ}`
/// over usable bins. Unusable bins are filled from their neighbours and
/// counted in the table's `filled`.
pub fn synthesize_diagram(glambda: &BinnedWeight, g2lambda: &BinnedWeight) -> Result<Diagram> {
    let (a, b) = (glambda, g2lambda);
    if a.n_u != b.n_u || a.n_s != b.n_s || a.kappa != b.kappa {
        return Err(Error::InvalidParameter("weights are on different grids".into()));
    }
    if (b.lambda - 2.0 * a.lambda).abs() > 1e-12 {
        return Err(Error::InvalidParameter(format!(
            "second weight has lambda {} instead of {}",
            b.lambda,
            2.0 * a.lambda
        )));
    }
    let mut eff = 0.0;
    let mut unusable = 0;
    let mut ratios = Vec::with_capacity(a.n_u * a.n_s);
    for i in 0..a.n_u {
        for j in 0..a.n_s {
            if a.usable(i, j) && b.usable(i, j) {
                let (x, y) = (a.mass(i, j), b.mass(i, j));
                eff += x * x / y;
                ratios.push(Some(x / y));
            } else {
                unusable += 1;
                ratios.push(None);
            }
        }
    }
    let frac = unusable as f64 / ratios.len() as f64;
    if frac > MAX_UNUSABLE_FRACTION {
        return Err(Error::InsufficientData(format!(
            "{unusable} of {} bins have fewer than {MIN_BIN_COUNT} samples; increase M",
            ratios.len()
        )));
    }
    let cells = ratios.into_iter().map(|r| r.map(|r| r / eff)).collect();
    Ok(Diagram {
        lambda: a.lambda,
        kappa: a.kappa,
        gamma0: a.gamma,
        kind: DiagramKind::CustomGrid,
        payload: Payload::Grid(GridTable::from_cells(a.n_u, a.n_s, cells)?),
        normalizer: eff,
        clamped_fraction: 0.0,
    })
}

/// Inputs of the finite-tick benchmark.
#[derive(Debug, Clone)]
pub struct Table1Config {
    /// Tick counts; `Ticks::Continuous` rows come from the analytic pipeline.
    pub ticks: Vec<Ticks>,
    pub m_diagram: usize,
    pub n_eval: usize,
    pub seed: u64,
    pub bins: usize,
}

/// One row: estimator variances at `κ = 0` and `κ = 1`.
///
/// Columns are ordered `gk κ=0, me κ=0, gk κ=1, me κ=1`. G&K variances are
/// of the estimator normalized by its mean; most-efficient variances are
/// raw, the diagram being unbiased by construction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table1Row {
    pub ticks: String,
    pub variance: [f64; 4],
    pub standard_error: [f64; 4],
    pub mean: [f64; 4],
}

#[derive(Debug, Clone, Default)]
struct Moments {
    n: [f64; SE_BATCHES],
    sum: [[f64; 4]; SE_BATCHES],
    sq: [[f64; 4]; SE_BATCHES],
    visits: usize,
    rejected: usize,
}

impl Moments {
    fn stats(n: f64, sum: &[f64; 4], sq: &[f64; 4]) -> ([f64; 4], [f64; 4]) {
        let mut mean = [0.0; 4];
        let mut var = [0.0; 4];
        for c in 0..4 {
            mean[c] = sum[c] / n;
            let v = (sq[c] - n * mean[c] * mean[c]) / (n - 1.0);
            // G&K columns are normalized by their mean.
            var[c] = if c % 2 == 0 { v / (mean[c] * mean[c]) } else { v };
        }
        (mean, var)
    }
}

fn tick_label(t: Ticks) -> String {
    t.to_string()
}

/// Builds synthetic diagrams from `m_diagram` walks and evaluates G&K and
/// the synthetic diagram on `n_eval` fresh walks from disjoint streams.
pub fn table1_benchmark(cfg: &Table1Config, engine: &DiagramEngine) -> Result<Vec<Table1Row>> {
    if cfg.n_eval < SE_BATCHES * 2 {
        return Err(Error::InvalidParameter(format!(
            "N = {} too small for {SE_BATCHES} batches",
            cfg.n_eval
        )));
    }
    let kappas = [0.0, 1.0];
    let mut rows = Vec::with_capacity(cfg.ticks.len());
    for &ticks in &cfg.ticks {
        if ticks == Ticks::Continuous {
            rows.push(table1_limit(engine)?);
            continue;
        }
        let config = ProcessConfig::new(0.0, 0.0, ticks);
        let plan = SynthesisPlan {
            kappas: kappas.to_vec(),
            lambdas: vec![2.0, 4.0],
            n_u: cfg.bins,
            n_s: cfg.bins,
            m: cfg.m_diagram,
            seed: cfg.seed,
            stream_offset: 0,
        };
        if cfg.m_diagram.div_ceil(crate::stochastic::PARTITION_SIZE) as u64 > EVAL_STREAM_BASE {
            return Err(Error::InvalidParameter("M too large for disjoint streams".into()));
        }
        let w = synthesize_weights(&config, &plan)?;
        let diagrams = [
            synthesize_diagram(&w[0][0], &w[0][1])?,
            synthesize_diagram(&w[1][0], &w[1][1])?,
        ];
        let m = monte_carlo_fold(
            &config,
            &kappas,
            cfg.n_eval,
            cfg.seed,
            EVAL_STREAM_BASE,
            Moments::default,
            |acc: &mut Moments, s: &[OhlcSample]| {
                let b = acc.visits % SE_BATCHES;
                acc.visits += 1;
                let mut x = [0.0; 4];
                for k in 0..2 {
                    x[2 * k] = classic_gk(&s[k]);
                    match estimate_one(&s[k], 1.0, &diagrams[k], OutputScale::Canonical) {
                        Ok(v) => x[2 * k + 1] = v,
                        Err(_) => {
                            acc.rejected += 1;
                            return;
                        }
                    }
                }
                acc.n[b] += 1.0;
                for (c, v) in x.into_iter().enumerate() {
                    acc.sum[b][c] += v;
                    acc.sq[b][c] += v * v;
                }
            },
            |mut a, b| {
                for k in 0..SE_BATCHES {
                    a.n[k] += b.n[k];
                    for c in 0..4 {
                        a.sum[k][c] += b.sum[k][c];
                        a.sq[k][c] += b.sq[k][c];
                    }
                }
                a.visits += b.visits;
                a.rejected += b.rejected;
                a
            },
        )?;
        if m.rejected as f64 > 1e-3 * cfg.n_eval as f64 {
            return Err(Error::InsufficientData(format!(
                "{} of {} evaluation walks rejected",
                m.rejected, cfg.n_eval
            )));
        }
        let n: f64 = m.n.iter().sum();
        let mut sum = [0.0; 4];
        let mut sq = [0.0; 4];
        for k in 0..SE_BATCHES {
            for c in 0..4 {
                sum[c] += m.sum[k][c];
                sq[c] += m.sq[k][c];
            }
        }
        let (mean, variance) = Moments::stats(n, &sum, &sq);
        // Batch means of the same statistic.
        let mut spread = [0.0; 4];
        let batch: Vec<[f64; 4]> = (0..SE_BATCHES)
            .map(|k| Moments::stats(m.n[k], &m.sum[k], &m.sq[k]).1)
            .collect();
        for c in 0..4 {
            let avg = batch.iter().map(|b| b[c]).sum::<f64>() / SE_BATCHES as f64;
            let ss = batch.iter().map(|b| (b[c] - avg).powi(2)).sum::<f64>();
            spread[c] = (ss / (SE_BATCHES - 1) as f64 / SE_BATCHES as f64).sqrt();
        }
        rows.push(Table1Row {
            ticks: tick_label(ticks),
            variance,
            standard_error: spread,
            mean,
        });
    }
    Ok(rows)
}

/// Continuous-limit row from the analytic weights.
fn table1_limit(engine: &DiagramEngine) -> Result<Table1Row> {
    let mut variance = [0.0; 4];
    for (k, kappa) in [0.0, 1.0].into_iter().enumerate() {
        let gk = engine.build_garman_klass(2.0, kappa)?;
        variance[2 * k] = engine.moments(&gk, 0.0)?.variance;
        variance[2 * k + 1] = 1.0 / engine.efficiency(2.0, kappa, 0.0)? - 1.0;
    }
    Ok(Table1Row {
        ticks: tick_label(Ticks::Continuous),
        variance,
        standard_error: [0.0; 4],
        mean: [1.0; 4],
    })
}

/// Writes `K,var_gk_k0,var_me_k0,var_gk_k1,var_me_k1`.
pub fn write_table1_csv<W: Write>(rows: &[Table1Row], mut out: W) -> Result<()> {
    let io = |e: std::io::Error| Error::InvalidParameter(format!("write failed: {e}"));
    writeln!(out, "K,var_gk_k0,var_me_k0,var_gk_k1,var_me_k1").map_err(io)?;
    for r in rows {
        let v = r.variance;
        writeln!(out, "{},{:.6},{:.6},{:.6},{:.6}", r.ticks, v[0], v[1], v[2], v[3]).map_err(io)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stochastic::Innovation;

    #[test]
    fn single_step_walk_fills_two_bins() {
        let mut config = ProcessConfig::new(0.0, 0.0, Ticks::Finite(1));
        config.innovation = Innovation::Rademacher;
        let w = synthesize_weight(&config, 0.0, 10, 20_000, 3).unwrap();
        let up = w.count(0, 9);
        let down = w.count(9, 0);
        assert_eq!(up + down, 20_000);
        assert!(up > 9_000 && down > 9_000);
        assert!((w.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_small_runs_and_mismatched_grids() {
        let config = ProcessConfig::new(0.0, 0.0, Ticks::Finite(4));
        assert!(synthesize_weight(&config, 2.0, 10, 100, 1).is_err());
        let a = synthesize_weight(&config, 2.0, 10, 10_000, 1).unwrap();
        let b = synthesize_weight(&config, 4.0, 8, 10_000, 1).unwrap();
        assert!(synthesize_diagram(&a, &b).is_err());
        assert!(synthesize_diagram(&a, &a).is_err());
    }

    #[test]
    fn sparse_histograms_are_refused() {
        let config = ProcessConfig::new(0.0, 0.0, Ticks::Finite(4));
        let a = synthesize_weight(&config, 2.0, 200, 10_000, 1).unwrap();
        let b = synthesize_weight(&config, 4.0, 200, 10_000, 1).unwrap();
        assert!(matches!(synthesize_diagram(&a, &b), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn synthetic_diagram_is_normalized_in_sample() {
        let config = ProcessConfig::new(0.0, 0.0, Ticks::Finite(8));
        let plan = SynthesisPlan {
            kappas: vec![0.0],
            lambdas: vec![2.0, 4.0],
            n_u: 10,
            n_s: 10,
            m: 50_000,
            seed: 9,
            stream_offset: 0,
        };
        let w = synthesize_weights(&config, &plan).unwrap().remove(0);
        let d = synthesize_diagram(&w[0], &w[1]).unwrap();
        let Payload::Grid(t) = &d.payload else {
            panic!("grid expected")
        };
        // Σ ψ ĝ_λ over bins is one when no bin was filled.
        let mut total = 0.0;
        for i in 0..10 {
            for j in 0..10 {
                assert!(t.get(i, j) >= 0.0);
                if w[0].usable(i, j) {
                    total += t.get(i, j) * w[0].mass(i, j);
                }
            }
        }
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn csv_layout() {
        let rows = vec![Table1Row {
            ticks: "10".into(),
            variance: [0.5, 0.4, 0.3, 0.2],
            standard_error: [0.0; 4],
            mean: [1.0; 4],
        }];
        let mut buf = Vec::new();
        write_table1_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "K,var_gk_k0,var_me_k0,var_gk_k1,var_me_k1\n10,0.500000,0.400000,0.300000,0.200000\n"
        );
    }
}
