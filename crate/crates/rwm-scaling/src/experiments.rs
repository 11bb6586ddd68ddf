//! Orchestrated studies confronting the symbolic analyzer's predictions with
//! sampler measurements: proposal-constant sweeps, dimension scans,
//! demonstrations of the broken-balance regime, roughness-statistic
//! convergence, and chain-versus-diffusion comparison.
//!
//! Cells (one chain at one `(d, ell, replicate)`) are independent tasks run
//! on a work pool; every cell's RNG stream is derived from the master seed
//! and the cell key, so results do not depend on scheduling. Aggregation
//! happens in sorted key order, which makes re-runs byte-identical.

use crate::asymptotics::{
    analyze, ComponentRef, ProposalRegime, ScalingAnalysis, ScalingError, ScalingVector,
};
use crate::diffusion::{self, DiffusionError, DiffusionParams};
use crate::exponent::Exponent;
use crate::sampler::{
    acceptance_with_se, derive_seed, empirical_r, run_chain, ChainDiagnostics, ChainSetup,
    ProposalMode, ProposalSpec, RecordOptions, SamplerError,
};
use crate::target::{
    fisher_term, instantiate_product, spectrum, ComponentLayout, DensityFamily, TargetError,
    TargetModel,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Scaling(#[from] ScalingError),
    #[error(transparent)]
    Target(#[from] TargetError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Diffusion(#[from] DiffusionError),
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("manifest error: {0}")]
    Manifest(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Where the scaling structure comes from: declared directly, or inferred
/// from the covariance spectra of a built-in Gaussian model.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingSource {
    Declared(ScalingVector),
    Spectrum {
        covariance: CovarianceKind,
        d_grid: Vec<usize>,
    },
}

/// Built-in covariance families for the spectrum route.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceKind {
    Intraclass { diag: f64, offdiag: f64 },
    Hierarchical,
    Identity,
}

impl CovarianceKind {
    pub fn builder(&self) -> Box<dyn Fn(usize) -> nalgebra::DMatrix<f64> + Sync> {
        match *self {
            CovarianceKind::Intraclass { diag, offdiag } => {
                Box::new(move |d| spectrum::intraclass_covariance(d, diag, offdiag))
            }
            CovarianceKind::Hierarchical => Box::new(spectrum::hierarchical_covariance),
            CovarianceKind::Identity => Box::new(|d| nalgebra::DMatrix::identity(d, d)),
        }
    }
}

/// The studies a plan can request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Study {
    /// Per-chain diagnostic rows over the `(d, ell)` grid.
    Simulate,
    /// Acceptance/efficiency sweep over the `ell` grid with theory overlay.
    Sweep,
    /// Empirical-optimal acceptance across dimensions, against the predicted
    /// optimum.
    Scan,
    /// Broken-balance demonstration: sweep with no theory columns.
    Violation,
    /// Rescaled-chain autocorrelation against the limiting diffusion.
    Compare,
    /// Convergence of the summed group-roughness statistic.
    Roughness,
}

impl Study {
    pub fn name(&self) -> &'static str {
        match self {
            Study::Simulate => "simulate",
            Study::Sweep => "sweep",
            Study::Scan => "scan",
            Study::Violation => "violation",
            Study::Compare => "compare",
            Study::Roughness => "roughness",
        }
    }

    fn tag(&self) -> u64 {
        fnv1a(self.name().as_bytes())
    }
}

/// A fully specified, reproducible experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub family: DensityFamily,
    pub scaling: ScalingSource,
    /// Overrides the scaling source's component of interest.
    pub component: Option<ComponentRef>,
    pub regime: ProposalRegime,
    pub studies: Vec<Study>,
    pub ell_grid: Vec<f64>,
    pub d_list: Vec<usize>,
    pub iterations: u64,
    pub replicates: u32,
    pub seed: u64,
    pub record: RecordOptions,
    /// Proposal constant for the diffusion comparison (defaults to the
    /// predicted optimum).
    pub compare_ell: Option<f64>,
    /// Integrator step for the diffusion comparison.
    pub compare_dt: f64,
    /// Stationary draws per dimension for the roughness study.
    pub roughness_draws: u32,
}

impl ExperimentPlan {
    /// Basic structural validation.
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.studies.is_empty() {
            return Err(ExperimentError::InvalidPlan("no studies requested".into()));
        }
        if self.d_list.is_empty() {
            return Err(ExperimentError::InvalidPlan("empty dimension list".into()));
        }
        let needs_ell = self
            .studies
            .iter()
            .any(|s| !matches!(s, Study::Roughness | Study::Compare));
        if needs_ell && self.ell_grid.is_empty() {
            return Err(ExperimentError::InvalidPlan("empty ell grid".into()));
        }
        if self.ell_grid.iter().any(|&l| !(l >= 0.0 && l.is_finite())) {
            return Err(ExperimentError::InvalidPlan(
                "ell grid entries must be nonnegative and finite".into(),
            ));
        }
        if self.replicates == 0 {
            return Err(ExperimentError::InvalidPlan(
                "replicates must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Plan with its scaling analysis resolved (spectrum classification done,
/// component pinned, vector normalized).
#[derive(Debug, Clone, Serialize)]
pub struct ResolvedPlan {
    pub plan: ExperimentPlan,
    pub analysis: ScalingAnalysis,
    pub fisher: f64,
    /// Iteration-count advisories and similar non-fatal notes.
    pub warnings: Vec<String>,
}

/// Resolves the scaling source, applies the component override, normalizes,
/// and runs the symbolic analysis.
pub fn resolve_plan(plan: &ExperimentPlan) -> Result<ResolvedPlan, ExperimentError> {
    plan.validate()?;
    let mut warnings = Vec::new();
    let vector = match &plan.scaling {
        ScalingSource::Declared(v) => v.clone(),
        ScalingSource::Spectrum { covariance, d_grid } => {
            let c = spectrum::classify_spectrum(covariance.builder().as_ref(), d_grid)?;
            c.vector
        }
    };
    let vector = match plan.component {
        Some(c) => {
            ScalingVector::new(vector.finite_terms().to_vec(), vector.groups().to_vec(), c)?
        }
        None => vector,
    };
    let fisher = fisher_term(&plan.family)?;
    let analysis = analyze(&vector, fisher, plan.regime)?;
    let alpha = analysis.alpha.as_f64();
    for &d in &plan.d_list {
        let recommended = 10.0 * (d as f64).powf(alpha);
        if (plan.iterations as f64) < recommended {
            warnings.push(format!(
                "d = {d}: {} iterations is below the recommended 10 * d^alpha = {:.0}",
                plan.iterations, recommended
            ));
        }
    }
    Ok(ResolvedPlan {
        plan: plan.clone(),
        analysis,
        fisher,
        warnings,
    })
}

impl ResolvedPlan {
    fn proposal(&self, ell: f64) -> ProposalSpec {
        let mode = match self.plan.regime {
            ProposalRegime::Homogeneous => ProposalMode::Homogeneous {
                alpha: self.analysis.alpha,
            },
            ProposalRegime::Inhomogeneous => ProposalMode::Inhomogeneous {
                alpha_finite: self.analysis.alpha,
                alpha_groups: self.analysis.alpha_per_group.clone(),
            },
        };
        ProposalSpec { ell, mode }
    }

    /// Instantiates the finite-`d` product target for a study,
    /// deterministically in the master seed.
    fn instantiate(
        &self,
        study: Study,
        d: usize,
    ) -> Result<(TargetModel, ComponentLayout), ExperimentError> {
        let seed = derive_seed(
            self.plan.seed,
            &[study.tag(), d as u64, fnv1a(b"instantiate")],
        );
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(instantiate_product(
            &self.analysis.normalized,
            d,
            self.plan.family.clone(),
            &mut rng,
        )?)
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// One aggregated sweep cell.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub d: usize,
    pub ell: f64,
    pub accept_emp: f64,
    pub accept_se: f64,
    pub esjd_rescaled: f64,
    pub esjd_se: f64,
    /// Limiting acceptance at this `ell`; absent when the balance condition
    /// fails.
    pub a_theory: Option<f64>,
    /// Limiting speed at this `ell`; absent when the balance condition fails.
    pub v_theory: Option<f64>,
}

/// Location of the empirical efficiency optimum at one dimension.
#[derive(Debug, Clone, Serialize)]
pub struct ArgmaxSummary {
    pub d: usize,
    /// Argmax of the rescaled ESJD, refined by a local quadratic fit in
    /// `ln ell` around the best grid point.
    pub ell_star: f64,
    pub esjd_at_optimum: f64,
    /// Acceptance rate interpolated at `ell_star`.
    pub acceptance_at_optimum: f64,
    /// Bootstrap standard error of `acceptance_at_optimum` over replicates.
    pub acceptance_se: f64,
    pub acceptance_ci_lower: f64,
    pub acceptance_ci_upper: f64,
    /// True when the argmax sat on the grid boundary.
    pub at_grid_edge: bool,
}

/// Sweep output: per-cell rows plus the per-dimension optimum summaries.
#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub argmax: Vec<ArgmaxSummary>,
    /// Seeds of every cell, keyed `(d, ell_index, replicate)`.
    pub cell_seeds: Vec<((usize, usize, u32), u64)>,
    /// Per-cell failures (recorded, not fatal).
    pub failures: Vec<String>,
}

#[derive(Debug, Clone)]
struct CellStats {
    accept: f64,
    accept_se: f64,
    esjd_rescaled: f64,
}

type CellSeeds = Vec<((usize, usize, u32), u64)>;

fn run_cells(
    resolved: &ResolvedPlan,
    study: Study,
    d: usize,
    ells: &[f64],
    record: &RecordOptions,
) -> Result<(Vec<Vec<CellStats>>, CellSeeds, Vec<String>), ExperimentError> {
    let (target, layout) = resolved.instantiate(study, d)?;
    let reps = resolved.plan.replicates;
    let mut keys = Vec::new();
    for (ei, _) in ells.iter().enumerate() {
        for r in 0..reps {
            keys.push((ei, r));
        }
    }
    let seeds: Vec<u64> = keys
        .iter()
        .map(|&(ei, r)| {
            derive_seed(
                resolved.plan.seed,
                &[study.tag(), d as u64, ei as u64, r as u64],
            )
        })
        .collect();

    let results: Vec<((usize, u32), Result<CellStats, String>)> = keys
        .par_iter()
        .zip(&seeds)
        .map(|(&(ei, r), &seed)| {
            let setup = ChainSetup {
                target: &target,
                layout: Some(&layout),
                proposal: resolved.proposal(ells[ei]),
                istar: layout.istar,
                iterations: resolved.plan.iterations,
                record: record.clone(),
                seed,
            };
            let out = run_chain(&setup)
                .and_then(|diag| {
                    let (acc, se) = acceptance_with_se(&diag)?;
                    Ok(CellStats {
                        accept: acc,
                        accept_se: se,
                        esjd_rescaled: diag.esjd_rescaled(),
                    })
                })
                .map_err(|e| format!("d={d} ell={} rep={r}: {e}", ells[ei]));
            ((ei, r), out)
        })
        .collect();

    let mut by_cell: Vec<Vec<CellStats>> = vec![Vec::new(); ells.len()];
    let mut failures = Vec::new();
    let mut ordered: Vec<_> = results;
    ordered.sort_by_key(|((ei, r), _)| (*ei, *r));
    for ((ei, _), res) in ordered {
        match res {
            Ok(stats) => by_cell[ei].push(stats),
            Err(msg) => failures.push(msg),
        }
    }
    let cell_seeds = keys
        .iter()
        .zip(&seeds)
        .map(|(&(ei, r), &s)| ((d, ei, r), s))
        .collect();
    Ok((by_cell, cell_seeds, failures))
}

fn mean_se(values: &[f64], fallback_se: f64) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() >= 2 {
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        (mean, (var / n).sqrt())
    } else {
        (mean, fallback_se)
    }
}

/// Vertex of the parabola through three points, clamped into the bracket.
fn quadratic_vertex(x: [f64; 3], y: [f64; 3]) -> f64 {
    let d21 = x[1] - x[0];
    let d23 = x[1] - x[2];
    let num = d21 * d21 * (y[1] - y[2]) - d23 * d23 * (y[1] - y[0]);
    let den = d21 * (y[1] - y[2]) - d23 * (y[1] - y[0]);
    if den.abs() < 1e-30 {
        return x[1];
    }
    (x[1] - 0.5 * num / den).clamp(x[0].min(x[2]), x[0].max(x[2]))
}

fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[xs.len() - 1] {
        return ys[ys.len() - 1];
    }
    let k = xs.partition_point(|&v| v < x).max(1);
    let t = (x - xs[k - 1]) / (xs[k] - xs[k - 1]);
    ys[k - 1] + t * (ys[k] - ys[k - 1])
}

/// Finds the efficiency argmax on the grid; `ln ell` is the fit coordinate.
/// Returns `(ell_star, esjd_at_star, acceptance_at_star, at_edge)`.
fn locate_argmax(ells: &[f64], esjd: &[f64], accept: &[f64]) -> (f64, f64, f64, bool) {
    let k = esjd
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap();
    let lns: Vec<f64> = ells.iter().map(|l| l.max(1e-12).ln()).collect();
    if k == 0 || k == ells.len() - 1 {
        return (ells[k], esjd[k], accept[k], true);
    }
    let lx = quadratic_vertex(
        [lns[k - 1], lns[k], lns[k + 1]],
        [esjd[k - 1], esjd[k], esjd[k + 1]],
    );
    let ell_star = lx.exp();
    let acc = interp(&lns, accept, lx);
    let ev = interp(&lns, esjd, lx);
    (ell_star, ev, acc, false)
}

/// Runs the sweep study at every dimension of the plan.
pub fn sweep_ell(resolved: &ResolvedPlan) -> Result<SweepResult, ExperimentError> {
    let plan = &resolved.plan;
    let record = RecordOptions {
        trajectory_budget: 16,
        record_group_roughness: false,
        ..plan.record.clone()
    };
    let mut rows = Vec::new();
    let mut argmax = Vec::new();
    let mut cell_seeds = Vec::new();
    let mut failures = Vec::new();

    for &d in &plan.d_list {
        let (cells, seeds, fails) = run_cells(resolved, Study::Sweep, d, &plan.ell_grid, &record)?;
        cell_seeds.extend(seeds);
        failures.extend(fails);

        let mut acc_mean = Vec::new();
        let mut esjd_mean = Vec::new();
        for (ei, stats) in cells.iter().enumerate() {
            if stats.is_empty() {
                continue;
            }
            let fallback = stats[0].accept_se;
            let (am, ase) = mean_se(
                &stats.iter().map(|s| s.accept).collect::<Vec<_>>(),
                fallback,
            );
            let (em, ese) = mean_se(
                &stats.iter().map(|s| s.esjd_rescaled).collect::<Vec<_>>(),
                f64::NAN,
            );
            let ell = plan.ell_grid[ei];
            let (a_theory, v_theory) = if resolved.analysis.balance.holds() {
                let e_r = resolved.analysis.e_r();
                (
                    Some(diffusion::limiting_acceptance(ell, e_r)),
                    Some(diffusion::speed(ell, e_r)),
                )
            } else {
                (None, None)
            };
            acc_mean.push(am);
            esjd_mean.push(em);
            rows.push(SweepRow {
                d,
                ell,
                accept_emp: am,
                accept_se: ase,
                esjd_rescaled: em,
                esjd_se: ese,
                a_theory,
                v_theory,
            });
        }
        if acc_mean.len() != plan.ell_grid.len() {
            continue; // cells failed; rows already record what succeeded
        }

        let (ell_star, esjd_star, acc_star, at_edge) =
            locate_argmax(&plan.ell_grid, &esjd_mean, &acc_mean);

        // bootstrap over replicates for the optimum-acceptance uncertainty
        let (se, lo, hi) = if plan.replicates >= 2 {
            let mut boot = ChaCha8Rng::seed_from_u64(derive_seed(
                plan.seed,
                &[Study::Sweep.tag(), d as u64, fnv1a(b"bootstrap")],
            ));
            let reps = plan.replicates as usize;
            let mut samples = Vec::with_capacity(400);
            for _ in 0..400 {
                let mut acc_b = Vec::with_capacity(cells.len());
                let mut esjd_b = Vec::with_capacity(cells.len());
                for stats in &cells {
                    let mut am = 0.0;
                    let mut em = 0.0;
                    for _ in 0..reps {
                        let pick = (rand::Rng::random::<f64>(&mut boot) * reps as f64) as usize;
                        let s = &stats[pick.min(reps - 1)];
                        am += s.accept;
                        em += s.esjd_rescaled;
                    }
                    acc_b.push(am / reps as f64);
                    esjd_b.push(em / reps as f64);
                }
                let (_, _, a, _) = locate_argmax(&plan.ell_grid, &esjd_b, &acc_b);
                samples.push(a);
            }
            samples.sort_by(f64::total_cmp);
            let mean = samples.iter().sum::<f64>() / samples.len() as f64;
            let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>()
                / (samples.len() - 1) as f64;
            (
                var.sqrt(),
                samples[(samples.len() as f64 * 0.025) as usize],
                samples[(samples.len() as f64 * 0.975) as usize],
            )
        } else {
            let k = plan
                .ell_grid
                .iter()
                .position(|&l| (l - ell_star).abs() < 1e-12)
                .unwrap_or(0);
            let se = rows
                .iter()
                .rev()
                .find(|r| r.d == d && r.ell == plan.ell_grid[k])
                .map_or(f64::NAN, |r| r.accept_se);
            (se, acc_star - 2.0 * se, acc_star + 2.0 * se)
        };

        argmax.push(ArgmaxSummary {
            d,
            ell_star,
            esjd_at_optimum: esjd_star,
            acceptance_at_optimum: acc_star,
            acceptance_se: se,
            acceptance_ci_lower: lo,
            acceptance_ci_upper: hi,
            at_grid_edge: at_edge,
        });
    }
    Ok(SweepResult {
        rows,
        argmax,
        cell_seeds,
        failures,
    })
}

/// One row of the dimension scan.
#[derive(Debug, Clone, Serialize)]
pub struct ScanRow {
    pub d: usize,
    /// Predicted optimal proposal constant (dimension-independent).
    pub ell_hat: f64,
    /// Empirical acceptance at the predicted optimum.
    pub accept_at_ell_hat: f64,
    pub accept_at_ell_hat_se: f64,
    /// Empirical optimum from the sweep.
    pub optimal_ell: f64,
    pub optimal_acceptance: f64,
    pub optimal_acceptance_se: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanReport {
    pub rows: Vec<ScanRow>,
    pub sweep: SweepResult,
    pub cell_seeds: CellSeeds,
}

/// For each dimension: the empirical-optimal acceptance and the acceptance
/// measured at the predicted optimum. Demonstrates how fast (or slowly) the
/// optimum approaches the asymptotic rate.
pub fn dimension_scan(resolved: &ResolvedPlan) -> Result<ScanReport, ExperimentError> {
    let ell_hat = resolved.analysis.ell_hat.ok_or_else(|| {
        ExperimentError::InvalidPlan(
            "dimension scan needs the balance condition to hold (no predicted optimum otherwise)"
                .into(),
        )
    })?;
    let sweep = sweep_ell(resolved)?;
    let record = RecordOptions {
        trajectory_budget: 16,
        record_group_roughness: false,
        ..resolved.plan.record.clone()
    };
    let mut rows = Vec::new();
    let mut cell_seeds = Vec::new();
    for &d in &resolved.plan.d_list {
        let (cells, seeds, _fails) = run_cells(resolved, Study::Scan, d, &[ell_hat], &record)?;
        cell_seeds.extend(seeds);
        let stats = &cells[0];
        if stats.is_empty() {
            continue;
        }
        let (acc, se) = mean_se(
            &stats.iter().map(|s| s.accept).collect::<Vec<_>>(),
            stats[0].accept_se,
        );
        let opt = sweep.argmax.iter().find(|a| a.d == d);
        rows.push(ScanRow {
            d,
            ell_hat,
            accept_at_ell_hat: acc,
            accept_at_ell_hat_se: se,
            optimal_ell: opt.map_or(f64::NAN, |a| a.ell_star),
            optimal_acceptance: opt.map_or(f64::NAN, |a| a.acceptance_at_optimum),
            optimal_acceptance_se: opt.map_or(f64::NAN, |a| a.acceptance_se),
        });
    }
    Ok(ScanReport {
        rows,
        sweep,
        cell_seeds,
    })
}

/// Broken-balance demonstration report.
#[derive(Debug, Clone, Serialize)]
pub struct ViolationReport {
    /// Always `Violated` for a well-formed demo.
    pub verdict: crate::asymptotics::Balance,
    pub sweep: SweepResult,
}

/// Runs the sweep on a plan whose analyzer verdict is `Violated` and reports
/// the empirical optimum. No theoretical acceptance is attached anywhere.
pub fn violation_demo(resolved: &ResolvedPlan) -> Result<ViolationReport, ExperimentError> {
    if resolved.analysis.balance.holds() {
        return Err(ExperimentError::InvalidPlan(
            "violation demo requires a scaling vector with a dominating finite term".into(),
        ));
    }
    let sweep = sweep_ell(resolved)?;
    debug_assert!(sweep.rows.iter().all(|r| r.a_theory.is_none()));
    Ok(ViolationReport {
        verdict: resolved.analysis.balance.verdict,
        sweep,
    })
}

/// One autocorrelation lag of the chain/diffusion comparison.
#[derive(Debug, Clone, Serialize)]
pub struct CompareRow {
    pub d: usize,
    /// Rescaled lag.
    pub tau: f64,
    pub acf_chain: f64,
    pub acf_integrator: f64,
    pub acf_theory: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareReport {
    pub ell: f64,
    pub speed: f64,
    pub rows: Vec<CompareRow>,
    /// Max |chain - theory| per dimension.
    pub max_deviation_chain: Vec<(usize, f64)>,
    /// Max |integrator - theory| per dimension.
    pub max_deviation_integrator: Vec<(usize, f64)>,
    /// Degenerate comparison (zero speed: flat unit autocorrelation).
    pub degenerate: bool,
    pub warnings: Vec<String>,
}

fn sample_acf(series: &[f64], lag: usize) -> f64 {
    let n = series.len();
    let mean = series.iter().sum::<f64>() / n as f64;
    let var = series.iter().map(|z| (z - mean) * (z - mean)).sum::<f64>() / n as f64;
    if var == 0.0 {
        return 1.0;
    }
    let mut cov = 0.0;
    for i in 0..n - lag {
        cov += (series[i] - mean) * (series[i + lag] - mean);
    }
    cov / (n - lag) as f64 / var
}

/// Compares the sped-up chain's component autocorrelation against the
/// limiting diffusion, both analytically and against an Euler-Maruyama
/// trajectory. Requires the standard normal family (the limit is then an
/// Ornstein-Uhlenbeck process with known autocorrelation).
pub fn diffusion_compare(resolved: &ResolvedPlan) -> Result<CompareReport, ExperimentError> {
    use crate::target::FamilyKind;
    let plan = &resolved.plan;
    if plan.family.kind() != FamilyKind::Normal || plan.family.scale() != 1.0 {
        return Err(ExperimentError::InvalidPlan(
            "diffusion comparison supports only the standard normal family (analytic \
             autocorrelation reference)"
                .into(),
        ));
    }
    if !resolved.analysis.balance.holds() {
        return Err(ExperimentError::InvalidPlan(
            "diffusion comparison requires the balance condition to hold".into(),
        ));
    }
    let ell = plan
        .compare_ell
        .or(resolved.analysis.ell_hat)
        .expect("balance holds implies a predicted optimum");
    let e_r = resolved.analysis.e_r();
    let v = diffusion::speed(ell, e_r);
    let degenerate = v == 0.0;
    let taus: Vec<f64> = (1..=20).map(|i| i as f64 * 0.1).collect();

    let skel_dt = plan.record.trajectory_dt;
    let mut warnings = Vec::new();
    let mut rows = Vec::new();
    let mut max_chain = Vec::new();
    let mut max_integrator = Vec::new();

    for &d in &plan.d_list {
        let (target, layout) = resolved.instantiate(Study::Compare, d)?;
        let speedup = (d as f64).powf(resolved.analysis.alpha.as_f64());
        let total_time = plan.iterations as f64 / speedup;
        if !degenerate && total_time * v < 100.0 {
            warnings.push(format!(
                "d = {d}: only {total_time:.0} rescaled time units; autocorrelation estimates \
                 will be noisy"
            ));
        }
        let budget = (total_time / skel_dt).ceil() as usize + 2;
        let setup = ChainSetup {
            target: &target,
            layout: Some(&layout),
            proposal: resolved.proposal(ell),
            istar: layout.istar,
            iterations: plan.iterations,
            record: RecordOptions {
                trajectory_dt: skel_dt,
                trajectory_budget: budget,
                record_group_roughness: false,
            },
            seed: derive_seed(plan.seed, &[Study::Compare.tag(), d as u64, 0]),
        };
        let diag = run_chain(&setup)?;
        let chain_series: Vec<f64> = diag.trajectory.iter().map(|p| p.z).collect();
        let actual_dt = if diag.trajectory.len() >= 2 {
            diag.trajectory[1].t - diag.trajectory[0].t
        } else {
            skel_dt
        };

        // reference integrator trajectory over the same rescaled horizon
        let em_params = DiffusionParams {
            speed: v,
            family: plan.family.clone(),
            dt: plan.compare_dt,
        };
        let em_steps = (total_time / plan.compare_dt).ceil() as usize;
        let mut em_rng = ChaCha8Rng::seed_from_u64(derive_seed(
            plan.seed,
            &[Study::Compare.tag(), d as u64, 1],
        ));
        let em_traj = if degenerate {
            vec![0.0; em_steps.max(2)]
        } else {
            diffusion::euler_maruyama(&em_params, 0.0, em_steps, &mut em_rng)?
        };

        let mut dev_c: f64 = 0.0;
        let mut dev_i: f64 = 0.0;
        for &tau in &taus {
            let chain_lag = (tau / actual_dt).round().max(1.0) as usize;
            let em_lag = (tau / plan.compare_dt).round().max(1.0) as usize;
            let acf_chain = sample_acf(&chain_series, chain_lag.min(chain_series.len() - 1));
            let acf_em = if degenerate {
                1.0
            } else {
                sample_acf(&em_traj, em_lag.min(em_traj.len() - 1))
            };
            let acf_theory = if degenerate {
                1.0
            } else {
                (-v * tau / 2.0).exp()
            };
            dev_c = dev_c.max((acf_chain - acf_theory).abs());
            dev_i = dev_i.max((acf_em - acf_theory).abs());
            rows.push(CompareRow {
                d,
                tau,
                acf_chain,
                acf_integrator: acf_em,
                acf_theory,
            });
        }
        max_chain.push((d, dev_c));
        max_integrator.push((d, dev_i));
    }
    if degenerate {
        warnings.push("zero proposal constant: degenerate flat autocorrelation".into());
    }
    Ok(CompareReport {
        ell,
        speed: v,
        rows,
        max_deviation_chain: max_chain,
        max_deviation_integrator: max_integrator,
        degenerate,
        warnings,
    })
}

/// One dimension of the roughness-convergence study.
#[derive(Debug, Clone, Serialize)]
pub struct RoughnessRow {
    pub d: usize,
    pub sum_r: f64,
    pub sum_r_se: f64,
    pub e_r: f64,
    pub abs_error: f64,
    pub per_group: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RoughnessReport {
    pub rows: Vec<RoughnessRow>,
}

/// Estimates the summed group-roughness statistic across the plan's
/// dimensions and reports convergence toward the analyzer's constant.
pub fn er_convergence(resolved: &ResolvedPlan) -> Result<RoughnessReport, ExperimentError> {
    let e_r = resolved.analysis.e_r_homogeneous;
    let mut rows = Vec::new();
    for &d in &resolved.plan.d_list {
        let (target, layout) = resolved.instantiate(Study::Roughness, d)?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
            resolved.plan.seed,
            &[Study::Roughness.tag(), d as u64],
        ));
        let est = empirical_r(
            &target,
            &layout,
            resolved.analysis.alpha,
            resolved.plan.roughness_draws as usize,
            &mut rng,
        )?;
        rows.push(RoughnessRow {
            d,
            sum_r: est.total.mean,
            sum_r_se: est.total.se,
            e_r,
            abs_error: (est.total.mean - e_r).abs(),
            per_group: est.per_group.iter().map(|g| g.mean).collect(),
        });
    }
    Ok(RoughnessReport { rows })
}

/// Per-chain row of the plain simulation study.
#[derive(Debug, Clone, Serialize)]
pub struct SimulateRow {
    pub ell: f64,
    pub d: usize,
    pub alpha: Exponent,
    pub iterations: u64,
    pub accept_rate: f64,
    pub accept_se: f64,
    pub esjd_istar: f64,
    pub esjd_rescaled: f64,
    pub sum_r: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateReport {
    pub rows: Vec<SimulateRow>,
    /// Full diagnostics of the first chain (serialized alongside the CSV).
    pub first_chain: Option<ChainDiagnostics>,
}

/// Runs plain chains over the `(d, ell)` grid, one row per chain.
pub fn simulate(resolved: &ResolvedPlan) -> Result<SimulateReport, ExperimentError> {
    let plan = &resolved.plan;
    let record = RecordOptions {
        record_group_roughness: true,
        ..plan.record.clone()
    };
    let mut rows = Vec::new();
    let mut first_chain = None;
    for &d in &plan.d_list {
        let (target, layout) = resolved.instantiate(Study::Simulate, d)?;
        let cells: Vec<(usize, u32, u64)> = (0..plan.ell_grid.len())
            .flat_map(|ei| (0..plan.replicates).map(move |r| (ei, r)))
            .map(|(ei, r)| {
                (
                    ei,
                    r,
                    derive_seed(
                        plan.seed,
                        &[Study::Simulate.tag(), d as u64, ei as u64, r as u64],
                    ),
                )
            })
            .collect();
        let mut diags: Vec<(usize, u32, u64, ChainDiagnostics)> = cells
            .par_iter()
            .map(|&(ei, r, seed)| {
                let setup = ChainSetup {
                    target: &target,
                    layout: Some(&layout),
                    proposal: resolved.proposal(plan.ell_grid[ei]),
                    istar: layout.istar,
                    iterations: plan.iterations,
                    record: record.clone(),
                    seed,
                };
                run_chain(&setup).map(|diag| (ei, r, seed, diag))
            })
            .collect::<Result<_, _>>()?;
        diags.sort_by_key(|(ei, r, _, _)| (*ei, *r));
        for (ei, _r, seed, diag) in diags {
            let (acc, se) = acceptance_with_se(&diag)?;
            rows.push(SimulateRow {
                ell: plan.ell_grid[ei],
                d,
                alpha: diag.alpha,
                iterations: diag.iterations,
                accept_rate: acc,
                accept_se: se,
                esjd_istar: diag.esjd(diag.istar),
                esjd_rescaled: diag.esjd_rescaled(),
                sum_r: diag.mean_total_roughness(),
                seed,
            });
            if first_chain.is_none() {
                first_chain = Some(diag);
            }
        }
    }
    Ok(SimulateReport { rows, first_chain })
}

// ---------------------------------------------------------------------------
// archiving
// ---------------------------------------------------------------------------

/// Schema version stamped into every JSON artifact.
pub const SCHEMA_VERSION: u32 = 1;

/// Tolerance policy constants used by reports; recorded in the manifest.
#[derive(Debug, Clone, Serialize)]
pub struct TolerancePolicy {
    /// Relative tolerance when comparing rescaled ESJD to the limiting speed.
    pub esjd_speed_rel: f64,
    /// Window the optimum acceptance rate is expected to fall into at
    /// moderate dimension.
    pub optimum_acceptance_window: (f64, f64),
    /// Standard-error multiplier for inequality checks.
    pub comparison_se_multiplier: f64,
}

impl Default for TolerancePolicy {
    fn default() -> Self {
        TolerancePolicy {
            esjd_speed_rel: 0.15,
            optimum_acceptance_window: (0.18, 0.30),
            comparison_se_multiplier: 2.0,
        }
    }
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    schema_version: u32,
    generator: &'static str,
    config_hash: String,
    master_seed: u64,
    plan: &'a ExperimentPlan,
    analysis: &'a ScalingAnalysis,
    fisher: f64,
    policy: TolerancePolicy,
    cell_seeds: BTreeMap<String, u64>,
    warnings: &'a [String],
}

/// Everything `run_plan` leaves behind.
#[derive(Debug)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub failures: Vec<String>,
    pub verdict_line: String,
}

fn write_file(path: &Path, contents: &str) -> Result<(), ExperimentError> {
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(contents.as_bytes()).map_err(io_err(path))?;
    Ok(())
}

fn csv_from_rows(header: &[&str], rows: Vec<Vec<String>>) -> String {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn fmt(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else {
        format!("{x}")
    }
}

fn sweep_csv(result: &SweepResult, with_theory: bool) -> String {
    let mut header = vec![
        "d",
        "ell",
        "accept_emp",
        "accept_se",
        "esjd_rescaled",
        "esjd_se",
    ];
    if with_theory {
        header.push("a_theory");
        header.push("v_theory");
    }
    let rows = result
        .rows
        .iter()
        .map(|r| {
            let mut row = vec![
                r.d.to_string(),
                fmt(r.ell),
                fmt(r.accept_emp),
                fmt(r.accept_se),
                fmt(r.esjd_rescaled),
                fmt(r.esjd_se),
            ];
            if with_theory {
                row.push(fmt(r.a_theory.unwrap_or(f64::NAN)));
                row.push(fmt(r.v_theory.unwrap_or(f64::NAN)));
            }
            row
        })
        .collect();
    csv_from_rows(&header, rows)
}

fn argmax_csv(result: &SweepResult) -> String {
    csv_from_rows(
        &[
            "d",
            "ell_star",
            "esjd_at_optimum",
            "acceptance_at_optimum",
            "acceptance_se",
            "ci_lower",
            "ci_upper",
            "at_grid_edge",
        ],
        result
            .argmax
            .iter()
            .map(|a| {
                vec![
                    a.d.to_string(),
                    fmt(a.ell_star),
                    fmt(a.esjd_at_optimum),
                    fmt(a.acceptance_at_optimum),
                    fmt(a.acceptance_se),
                    fmt(a.acceptance_ci_lower),
                    fmt(a.acceptance_ci_upper),
                    a.at_grid_edge.to_string(),
                ]
            })
            .collect(),
    )
}

/// Executes every requested study, writing CSV outputs, a JSON summary, a
/// plain-text verdict report, and a manifest sufficient for bit-exact
/// re-runs.
pub fn run_plan(resolved: &ResolvedPlan, out_dir: &Path) -> Result<RunSummary, ExperimentError> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let plan = &resolved.plan;
    let mut files = Vec::new();
    let mut failures = Vec::new();
    let mut cell_seeds: BTreeMap<String, u64> = BTreeMap::new();
    let mut summary = serde_json::Map::new();
    summary.insert("schema_version".into(), SCHEMA_VERSION.into());
    summary.insert(
        "analysis".into(),
        serde_json::to_value(&resolved.analysis)
            .map_err(|e| ExperimentError::Manifest(e.to_string()))?,
    );

    fn record_seeds(cell_seeds: &mut BTreeMap<String, u64>, study: &str, seeds: &CellSeeds) {
        for ((d, ei, r), s) in seeds {
            cell_seeds.insert(format!("{study}.d{d}.ell{ei}.rep{r}"), *s);
        }
    }

    for &study in &plan.studies {
        match study {
            Study::Sweep => {
                let result = sweep_ell(resolved)?;
                record_seeds(&mut cell_seeds, "sweep", &result.cell_seeds);
                failures.extend(result.failures.iter().cloned());
                let path = out_dir.join("sweep.csv");
                write_file(&path, &sweep_csv(&result, resolved.analysis.balance.holds()))?;
                files.push(path);
                let path = out_dir.join("sweep_argmax.csv");
                write_file(&path, &argmax_csv(&result))?;
                files.push(path);
                summary.insert("sweep".into(), serde_json::to_value(&result.argmax).unwrap());
            }
            Study::Scan => {
                let report = dimension_scan(resolved)?;
                record_seeds(&mut cell_seeds, "scan", &report.cell_seeds);
                record_seeds(&mut cell_seeds, "scan.sweep", &report.sweep.cell_seeds);
                failures.extend(report.sweep.failures.iter().cloned());
                let path = out_dir.join("scan.csv");
                write_file(
                    &path,
                    &csv_from_rows(
                        &[
                            "d",
                            "ell_hat",
                            "accept_at_ell_hat",
                            "accept_at_ell_hat_se",
                            "optimal_ell",
                            "optimal_acceptance",
                            "optimal_acceptance_se",
                        ],
                        report
                            .rows
                            .iter()
                            .map(|r| {
                                vec![
                                    r.d.to_string(),
                                    fmt(r.ell_hat),
                                    fmt(r.accept_at_ell_hat),
                                    fmt(r.accept_at_ell_hat_se),
                                    fmt(r.optimal_ell),
                                    fmt(r.optimal_acceptance),
                                    fmt(r.optimal_acceptance_se),
                                ]
                            })
                            .collect(),
                    ),
                )?;
                files.push(path);
                summary.insert("scan".into(), serde_json::to_value(&report.rows).unwrap());
            }
            Study::Violation => {
                let report = violation_demo(resolved)?;
                record_seeds(&mut cell_seeds, "violation", &report.sweep.cell_seeds);
                failures.extend(report.sweep.failures.iter().cloned());
                let path = out_dir.join("violation.csv");
                write_file(&path, &sweep_csv(&report.sweep, false))?;
                files.push(path);
                let path = out_dir.join("violation_argmax.csv");
                write_file(&path, &argmax_csv(&report.sweep))?;
                files.push(path);
                summary.insert(
                    "violation".into(),
                    serde_json::to_value(&report.sweep.argmax).unwrap(),
                );
            }
            Study::Compare => {
                let report = diffusion_compare(resolved)?;
                let path = out_dir.join("compare.csv");
                write_file(
                    &path,
                    &csv_from_rows(
                        &["d", "tau", "acf_chain", "acf_integrator", "acf_theory"],
                        report
                            .rows
                            .iter()
                            .map(|r| {
                                vec![
                                    r.d.to_string(),
                                    fmt(r.tau),
                                    fmt(r.acf_chain),
                                    fmt(r.acf_integrator),
                                    fmt(r.acf_theory),
                                ]
                            })
                            .collect(),
                    ),
                )?;
                files.push(path);
                summary.insert(
                    "compare".into(),
                    serde_json::json!({
                        "ell": report.ell,
                        "speed": report.speed,
                        "max_deviation_chain": report.max_deviation_chain,
                        "max_deviation_integrator": report.max_deviation_integrator,
                        "degenerate": report.degenerate,
                        "warnings": report.warnings,
                    }),
                );
            }
            Study::Roughness => {
                let report = er_convergence(resolved)?;
                let path = out_dir.join("roughness.csv");
                write_file(
                    &path,
                    &csv_from_rows(
                        &["d", "sum_r", "sum_r_se", "e_r", "abs_error"],
                        report
                            .rows
                            .iter()
                            .map(|r| {
                                vec![
                                    r.d.to_string(),
                                    fmt(r.sum_r),
                                    fmt(r.sum_r_se),
                                    fmt(r.e_r),
                                    fmt(r.abs_error),
                                ]
                            })
                            .collect(),
                    ),
                )?;
                files.push(path);
                summary.insert(
                    "roughness".into(),
                    serde_json::to_value(&report.rows).unwrap(),
                );
            }
            Study::Simulate => {
                let report = simulate(resolved)?;
                let path = out_dir.join("simulate.csv");
                write_file(
                    &path,
                    &csv_from_rows(
                        &[
                            "ell",
                            "d",
                            "alpha",
                            "iterations",
                            "accept_rate",
                            "accept_se",
                            "esjd_istar",
                            "esjd_rescaled",
                            "sum_R",
                            "seed",
                        ],
                        report
                            .rows
                            .iter()
                            .map(|r| {
                                vec![
                                    fmt(r.ell),
                                    r.d.to_string(),
                                    r.alpha.to_string(),
                                    r.iterations.to_string(),
                                    fmt(r.accept_rate),
                                    fmt(r.accept_se),
                                    fmt(r.esjd_istar),
                                    fmt(r.esjd_rescaled),
                                    r.sum_r.map_or("nan".into(), fmt),
                                    r.seed.to_string(),
                                ]
                            })
                            .collect(),
                    ),
                )?;
                files.push(path);
                for row in &report.rows {
                    cell_seeds.insert(format!("simulate.d{}.ell{}", row.d, row.ell), row.seed);
                }
                if let Some(diag) = &report.first_chain {
                    let path = out_dir.join("chain.json");
                    let doc = serde_json::json!({
                        "schema_version": SCHEMA_VERSION,
                        "diagnostics": diag,
                    });
                    write_file(&path, &serde_json::to_string_pretty(&doc).unwrap())?;
                    files.push(path);
                }
            }
        }
    }

    // manifest: everything needed to reproduce this run bit for bit
    let plan_json =
        serde_json::to_string(plan).map_err(|e| ExperimentError::Manifest(e.to_string()))?;
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        generator: concat!("rwm-scaling ", env!("CARGO_PKG_VERSION")),
        config_hash: format!("{:016x}", fnv1a(plan_json.as_bytes())),
        master_seed: plan.seed,
        plan,
        analysis: &resolved.analysis,
        fisher: resolved.fisher,
        policy: TolerancePolicy::default(),
        cell_seeds,
        warnings: &resolved.warnings,
    };
    let path = out_dir.join("manifest.json");
    write_file(&path, &serde_json::to_string_pretty(&manifest).unwrap())?;
    files.push(path);

    let verdict_line = format!(
        "balance={} alpha={} e_r={:.6} ell_hat={} aoar={}",
        if resolved.analysis.balance.holds() {
            "holds"
        } else {
            "violated"
        },
        resolved.analysis.alpha,
        resolved.analysis.e_r(),
        resolved
            .analysis
            .ell_hat
            .map_or("n/a".into(), |v| format!("{v:.4}")),
        resolved
            .analysis
            .aoar
            .map_or("n/a".into(), |v| format!("{v:.4}")),
    );
    let mut verdict = String::new();
    verdict.push_str(&verdict_line);
    verdict.push('\n');
    for w in &resolved.warnings {
        verdict.push_str(&format!("warning: {w}\n"));
    }
    for f in &failures {
        verdict.push_str(&format!("cell failure: {f}\n"));
    }
    let path = out_dir.join("verdict.txt");
    write_file(&path, &verdict)?;
    files.push(path);

    let summary_json = serde_json::Value::Object(summary);
    let path = out_dir.join("summary.json");
    write_file(&path, &serde_json::to_string_pretty(&summary_json).unwrap())?;
    files.push(path);

    Ok(RunSummary {
        out_dir: out_dir.to_path_buf(),
        files,
        failures,
        verdict_line,
    })
}

/// Reloads the plan embedded in a manifest, for bit-exact re-runs.
pub fn plan_from_manifest(path: &Path) -> Result<ExperimentPlan, ExperimentError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let doc: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| ExperimentError::Manifest(e.to_string()))?;
    let plan = doc
        .get("plan")
        .ok_or_else(|| ExperimentError::Manifest("manifest has no plan field".into()))?;
    serde_json::from_value(plan.clone()).map_err(|e| ExperimentError::Manifest(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asymptotics::Balance;
    use crate::target::iid_scaling_vector;

    fn small_plan(studies: Vec<Study>) -> ExperimentPlan {
        ExperimentPlan {
            family: DensityFamily::standard_normal(),
            scaling: ScalingSource::Declared(iid_scaling_vector()),
            component: None,
            regime: ProposalRegime::Homogeneous,
            studies,
            ell_grid: vec![0.8, 1.4, 2.4, 4.2, 7.0],
            d_list: vec![16],
            iterations: 20_000,
            replicates: 2,
            seed: 42,
            record: RecordOptions::default(),
            compare_ell: None,
            compare_dt: 0.01,
            roughness_draws: 50,
        }
    }

    #[test]
    fn sweep_attaches_theory_and_finds_interior_optimum() {
        let resolved = resolve_plan(&small_plan(vec![Study::Sweep])).unwrap();
        let result = sweep_ell(&resolved).unwrap();
        assert_eq!(result.rows.len(), 5);
        assert!(result.rows.iter().all(|r| r.a_theory.is_some()));
        assert!(result.failures.is_empty());
        let opt = &result.argmax[0];
        assert!(!opt.at_grid_edge, "optimum should be interior");
        assert!(
            opt.ell_star > 1.4 && opt.ell_star < 4.2,
            "ell* = {}",
            opt.ell_star
        );
        // finite-d with a coarse grid: generous bracket around 0.234
        assert!(
            opt.acceptance_at_optimum > 0.1 && opt.acceptance_at_optimum < 0.45,
            "acc@opt = {}",
            opt.acceptance_at_optimum
        );
    }

    #[test]
    fn sweep_is_deterministic() {
        let resolved = resolve_plan(&small_plan(vec![Study::Sweep])).unwrap();
        let a = sweep_ell(&resolved).unwrap();
        let b = sweep_ell(&resolved).unwrap();
        assert_eq!(
            serde_json::to_string(&a.rows).unwrap(),
            serde_json::to_string(&b.rows).unwrap()
        );
        assert_eq!(
            serde_json::to_string(&a.argmax).unwrap(),
            serde_json::to_string(&b.argmax).unwrap()
        );
    }

    #[test]
    fn tiny_ell_cell_accepts_everything() {
        let mut plan = small_plan(vec![Study::Sweep]);
        plan.ell_grid = vec![1e-6, 2.4, 7.0];
        plan.iterations = 2_000;
        let resolved = resolve_plan(&plan).unwrap();
        let result = sweep_ell(&resolved).unwrap();
        let first = &result.rows[0];
        assert!(first.accept_emp > 0.999, "acceptance {}", first.accept_emp);
        assert!((first.a_theory.unwrap() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn violation_demo_contract() {
        use crate::asymptotics::{ConstantModel, GroupSpec, OrderTerm};
        // orders d, 1/d and a unit bulk: the balance condition fails
        let sv = ScalingVector::new(
            vec![
                OrderTerm::new(1.0, Exponent::from_integer(1)),
                OrderTerm::new(1.0, Exponent::from_integer(-1)),
            ],
            vec![GroupSpec {
                constant: ConstantModel::Fixed { k: 1.0 },
                gamma: Exponent::ZERO,
                card_coeff: 1.0,
                card_exponent: Exponent::from_integer(1),
            }],
            ComponentRef::GroupMember(0),
        )
        .unwrap();
        let mut plan = small_plan(vec![Study::Violation]);
        plan.scaling = ScalingSource::Declared(sv);
        plan.d_list = vec![24];
        plan.iterations = 5_000;
        let resolved = resolve_plan(&plan).unwrap();
        assert_eq!(resolved.analysis.balance.verdict, Balance::Violated);
        let report = violation_demo(&resolved).unwrap();
        assert!(report.sweep.rows.iter().all(|r| r.a_theory.is_none()));
        // the violation CSV must not contain theory columns at all
        let csv = sweep_csv(&report.sweep, false);
        assert!(!csv.contains("a_theory"));

        // a balanced plan refuses the violation demo
        let ok = resolve_plan(&small_plan(vec![Study::Violation])).unwrap();
        assert!(violation_demo(&ok).is_err());
    }

    #[test]
    fn compare_requires_standard_normal_family() {
        let mut plan = small_plan(vec![Study::Compare]);
        plan.family = DensityFamily::logistic();
        let resolved = resolve_plan(&plan).unwrap();
        assert!(matches!(
            diffusion_compare(&resolved),
            Err(ExperimentError::InvalidPlan(_))
        ));
    }

    #[test]
    fn compare_zero_ell_is_degenerate_and_flagged() {
        let mut plan = small_plan(vec![Study::Compare]);
        plan.compare_ell = Some(0.0);
        plan.iterations = 2_000;
        let resolved = resolve_plan(&plan).unwrap();
        let report = diffusion_compare(&resolved).unwrap();
        assert!(report.degenerate);
        assert!(report.rows.iter().all(|r| r.acf_theory == 1.0));
        assert!(!report.warnings.is_empty());
    }

    #[test]
    fn roughness_study_reports_convergence() {
        let mut plan = small_plan(vec![Study::Roughness]);
        plan.d_list = vec![200, 2_000];
        plan.roughness_draws = 100;
        let resolved = resolve_plan(&plan).unwrap();
        let report = er_convergence(&resolved).unwrap();
        assert_eq!(report.rows.len(), 2);
        assert!(report.rows[1].abs_error < 0.05);
    }

    #[test]
    fn run_plan_writes_archive_and_reruns_identically() {
        let dir = tempfile::tempdir().unwrap();
        let mut plan = small_plan(vec![Study::Sweep, Study::Simulate, Study::Roughness]);
        plan.iterations = 3_000;
        plan.ell_grid = vec![1.0, 2.4, 5.0];
        let resolved = resolve_plan(&plan).unwrap();

        let out_a = dir.path().join("a");
        let summary = run_plan(&resolved, &out_a).unwrap();
        assert!(summary.failures.is_empty());
        assert!(out_a.join("manifest.json").exists());
        assert!(out_a.join("sweep.csv").exists());
        assert!(out_a.join("simulate.csv").exists());
        assert!(out_a.join("verdict.txt").exists());

        // rerun from the manifest into a second directory: byte-identical CSVs
        let plan_b = plan_from_manifest(&out_a.join("manifest.json")).unwrap();
        let resolved_b = resolve_plan(&plan_b).unwrap();
        let out_b = dir.path().join("b");
        run_plan(&resolved_b, &out_b).unwrap();
        for name in [
            "sweep.csv",
            "sweep_argmax.csv",
            "simulate.csv",
            "roughness.csv",
        ] {
            let a = fs::read(out_a.join(name)).unwrap();
            let b = fs::read(out_b.join(name)).unwrap();
            assert_eq!(a, b, "{name} differs between runs");
        }
        // manifest records every cell seed
        let manifest: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(out_a.join("manifest.json")).unwrap())
                .unwrap();
        let seeds = manifest["cell_seeds"].as_object().unwrap();
        assert!(!seeds.is_empty());
    }

    #[test]
    fn resolve_warns_on_low_iteration_budget() {
        let mut plan = small_plan(vec![Study::Sweep]);
        plan.d_list = vec![4_000];
        plan.iterations = 1_000;
        let resolved = resolve_plan(&plan).unwrap();
        assert!(!resolved.warnings.is_empty());
    }

    #[test]
    fn spectrum_route_resolves_intraclass() {
        let mut plan = small_plan(vec![Study::Sweep]);
        plan.scaling = ScalingSource::Spectrum {
            covariance: CovarianceKind::Intraclass {
                diag: 2.0,
                offdiag: 1.0,
            },
            d_grid: vec![50, 100, 200, 400],
        };
        let resolved = resolve_plan(&plan).unwrap();
        assert!(resolved.analysis.balance.holds());
        assert_eq!(resolved.analysis.alpha, Exponent::from_integer(1));
        assert_eq!(
            resolved.analysis.mixing_order_exponent,
            Exponent::from_integer(1)
        );
    }
}
