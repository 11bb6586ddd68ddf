//! Random-walk Metropolis kernel with Gaussian proposals, homogeneous or
//! per-group proposal scalings, and streaming chain diagnostics.
//!
//! Chains start in stationarity (exact draws from the target), so no burn-in
//! is applied anywhere. All randomness flows through a caller-provided seed;
//! a step consumes exactly `d` standard normals (component order) followed
//! by one uniform, which makes every accept decision replayable.

use crate::asymptotics::ProposalRegime;
use crate::exponent::Exponent;
use crate::target::{ComponentLayout, TargetModel, TargetError};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Open01, StandardNormal};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SamplerError {
    #[error(transparent)]
    Target(#[from] TargetError),
    #[error("proposal constant ell must be nonnegative and finite (got {0})")]
    BadEll(f64),
    #[error("per-group proposal scalings need a layout with {expected} groups (got {got})")]
    LayoutMismatch { expected: usize, got: usize },
    #[error("inhomogeneous proposals require a product target with a component layout")]
    MissingLayout,
    #[error("need at least {needed} iterations (got {got})")]
    TooFewIterations { needed: u64, got: u64 },
    #[error("group-roughness statistics require a product target with a layout")]
    NotProduct,
}

/// Proposal exponents: one shared `alpha`, or a personalized exponent per
/// replicated group (finite-part components keep the shared `alpha`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ProposalMode {
    Homogeneous {
        alpha: Exponent,
    },
    Inhomogeneous {
        alpha_finite: Exponent,
        alpha_groups: Vec<Exponent>,
    },
}

impl ProposalMode {
    pub fn regime(&self) -> ProposalRegime {
        match self {
            ProposalMode::Homogeneous { .. } => ProposalRegime::Homogeneous,
            ProposalMode::Inhomogeneous { .. } => ProposalRegime::Inhomogeneous,
        }
    }
}

/// Gaussian random-walk proposal `y_j = x_j + s_j N(0,1)` with
/// `s_j = ell * d^(-alpha_j / 2)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProposalSpec {
    pub ell: f64,
    pub mode: ProposalMode,
}

impl ProposalSpec {
    pub fn homogeneous(ell: f64, alpha: Exponent) -> Self {
        ProposalSpec {
            ell,
            mode: ProposalMode::Homogeneous { alpha },
        }
    }

    /// The exponent governing the component of interest's time scale. The
    /// component of interest always sits in the finite part, which keeps the
    /// shared exponent in both regimes.
    pub fn istar_alpha(&self) -> Exponent {
        match &self.mode {
            ProposalMode::Homogeneous { alpha } => *alpha,
            ProposalMode::Inhomogeneous { alpha_finite, .. } => *alpha_finite,
        }
    }

    /// Realized per-component proposal standard deviations at dimension `d`.
    pub fn stddevs(
        &self,
        d: usize,
        layout: Option<&ComponentLayout>,
    ) -> Result<Vec<f64>, SamplerError> {
        if !(self.ell >= 0.0 && self.ell.is_finite()) {
            return Err(SamplerError::BadEll(self.ell));
        }
        let df = d as f64;
        match &self.mode {
            ProposalMode::Homogeneous { alpha } => {
                let s = self.ell * df.powf(-alpha.as_f64() / 2.0);
                Ok(vec![s; d])
            }
            ProposalMode::Inhomogeneous {
                alpha_finite,
                alpha_groups,
            } => {
                let layout = layout.ok_or(SamplerError::MissingLayout)?;
                if layout.cardinalities.len() != alpha_groups.len() {
                    return Err(SamplerError::LayoutMismatch {
                        expected: layout.cardinalities.len(),
                        got: alpha_groups.len(),
                    });
                }
                let s_of = |alpha: &Exponent| self.ell * df.powf(-alpha.as_f64() / 2.0);
                Ok(layout
                    .group_of
                    .iter()
                    .map(|g| match g {
                        None => s_of(alpha_finite),
                        Some(i) => s_of(&alpha_groups[*i]),
                    })
                    .collect())
            }
        }
    }
}

/// What `run_chain` records beyond acceptance counts.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RecordOptions {
    /// Rescaled-time spacing of the stored trajectory skeleton.
    pub trajectory_dt: f64,
    /// Maximum number of stored skeleton points; the stride grows to fit.
    pub trajectory_budget: usize,
    /// Accumulate the per-group roughness statistic along the chain
    /// (product targets with a layout only).
    pub record_group_roughness: bool,
}

impl Default for RecordOptions {
    fn default() -> Self {
        RecordOptions {
            trajectory_dt: 0.05,
            trajectory_budget: 10_000,
            record_group_roughness: false,
        }
    }
}

/// One stored point of the sped-up trajectory of the component of interest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectoryPoint {
    /// Rescaled time `iteration / d^alpha`.
    pub t: f64,
    pub z: f64,
}

/// Streaming diagnostics accumulated over one chain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainDiagnostics {
    pub d: usize,
    pub iterations: u64,
    pub accept_count: u64,
    pub ell: f64,
    /// Time-rescaling exponent of the component of interest.
    pub alpha: Exponent,
    pub istar: usize,
    pub seed: u64,
    /// Per-component sums of squared accepted jumps.
    pub esjd_sum: Vec<f64>,
    /// Skeleton of the rescaled trajectory of the component of interest;
    /// timestamps strictly increasing.
    pub trajectory: Vec<TrajectoryPoint>,
    /// Per-batch accept counts for batch-means standard errors.
    pub batch_accepts: Vec<u64>,
    pub batch_size: u64,
    /// Per-group running sums of the roughness statistic, with the number of
    /// evaluation points.
    pub group_roughness_sums: Option<Vec<f64>>,
    pub roughness_samples: u64,
}

impl ChainDiagnostics {
    pub fn acceptance_rate(&self) -> f64 {
        self.accept_count as f64 / self.iterations as f64
    }

    /// Mean squared jump distance of component `j` (rejected steps count 0).
    pub fn esjd(&self, j: usize) -> f64 {
        self.esjd_sum[j] / self.iterations as f64
    }

    /// `d^alpha` times the ESJD of the component of interest: the finite-`d`
    /// estimate of the diffusion speed.
    pub fn esjd_rescaled(&self) -> f64 {
        (self.d as f64).powf(self.alpha.as_f64()) * self.esjd(self.istar)
    }

    /// Mean of the summed group-roughness statistic along the chain.
    pub fn mean_total_roughness(&self) -> Option<f64> {
        self.group_roughness_sums
            .as_ref()
            .map(|s| s.iter().sum::<f64>() / self.roughness_samples as f64)
    }

    /// Builds a synthetic diagnostics record from raw acceptance flags;
    /// everything except acceptance bookkeeping is left empty.
    pub fn from_acceptance_flags(flags: &[bool]) -> ChainDiagnostics {
        let iterations = flags.len() as u64;
        let batch_size = batch_size_for(iterations);
        let n_batches = iterations.div_ceil(batch_size);
        let mut batch_accepts = vec![0u64; n_batches as usize];
        let mut accept_count = 0;
        for (t, &a) in flags.iter().enumerate() {
            if a {
                accept_count += 1;
                batch_accepts[t / batch_size as usize] += 1;
            }
        }
        ChainDiagnostics {
            d: 0,
            iterations,
            accept_count,
            ell: f64::NAN,
            alpha: Exponent::ZERO,
            istar: 0,
            seed: 0,
            esjd_sum: vec![],
            trajectory: vec![],
            batch_accepts,
            batch_size,
            group_roughness_sums: None,
            roughness_samples: 0,
        }
    }
}

fn batch_size_for(iterations: u64) -> u64 {
    let b = (iterations as f64).sqrt().ceil() as u64;
    iterations.div_ceil(b.max(1))
}

/// Acceptance rate with a batch-means standard error (about sqrt(n) batches).
pub fn acceptance_with_se(diag: &ChainDiagnostics) -> Result<(f64, f64), SamplerError> {
    if diag.iterations < 100 {
        return Err(SamplerError::TooFewIterations {
            needed: 100,
            got: diag.iterations,
        });
    }
    let rate = diag.acceptance_rate();
    let mut means = Vec::with_capacity(diag.batch_accepts.len());
    let mut remaining = diag.iterations;
    for &acc in &diag.batch_accepts {
        let size = remaining.min(diag.batch_size);
        if size == 0 {
            break;
        }
        means.push(acc as f64 / size as f64);
        remaining -= size;
    }
    let b = means.len() as f64;
    let mean = means.iter().sum::<f64>() / b;
    let var = means.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / (b - 1.0);
    Ok((rate, (var / b).sqrt()))
}

/// One Metropolis step from `x` with per-component proposal scales
/// `stddevs`.
///
/// Consumes exactly `x.len()` standard normals then one uniform; returns the
/// new state, the accept flag, and the log density ratio. A state of zero
/// target density accepts unconditionally.
pub fn rwm_step<R: Rng + ?Sized>(
    target: &TargetModel,
    x: &[f64],
    stddevs: &[f64],
    rng: &mut R,
) -> Result<(Vec<f64>, bool, f64), SamplerError> {
    let lp_x = target.log_density(x)?;
    let y: Vec<f64> = x
        .iter()
        .zip(stddevs)
        .map(|(&xi, &s)| {
            let z: f64 = rng.sample(StandardNormal);
            xi + s * z
        })
        .collect();
    let lp_y = target.log_density_unchecked(&y);
    let log_ratio = if lp_x == f64::NEG_INFINITY {
        f64::INFINITY
    } else {
        lp_y - lp_x
    };
    let u: f64 = rng.sample(Open01);
    let accepted = u.ln() < log_ratio;
    if accepted {
        Ok((y, true, log_ratio))
    } else {
        Ok((x.to_vec(), false, log_ratio))
    }
}

/// Everything needed to run one chain.
#[derive(Debug, Clone)]
pub struct ChainSetup<'a> {
    pub target: &'a TargetModel,
    pub layout: Option<&'a ComponentLayout>,
    pub proposal: ProposalSpec,
    /// Component of interest (trajectory and rescaled-ESJD component).
    pub istar: usize,
    pub iterations: u64,
    pub record: RecordOptions,
    pub seed: u64,
}

/// Runs a chain started from an exact stationary draw, accumulating
/// acceptance counts, per-component ESJD sums, the rescaled trajectory
/// skeleton of the component of interest, and (optionally) the running
/// group-roughness sums. Fully deterministic given the seed.
pub fn run_chain(setup: &ChainSetup) -> Result<ChainDiagnostics, SamplerError> {
    let d = setup.target.dim();
    if setup.iterations < 1 {
        return Err(SamplerError::TooFewIterations {
            needed: 1,
            got: setup.iterations,
        });
    }
    if setup.record.record_group_roughness && setup.layout.is_none() {
        return Err(SamplerError::NotProduct);
    }
    let stddevs = setup.proposal.stddevs(d, setup.layout)?;
    let alpha = setup.proposal.istar_alpha();
    let speedup = (d as f64).powf(alpha.as_f64());

    let mut rng = ChaCha8Rng::seed_from_u64(setup.seed);
    let mut x = setup.target.sample_stationary(&mut rng);

    // skeleton stride: trajectory_dt units of rescaled time, widened to fit
    // the point budget
    let stride_time = ((speedup * setup.record.trajectory_dt).ceil() as u64).max(1);
    let stride_budget = setup
        .iterations
        .div_ceil(setup.record.trajectory_budget.max(2) as u64 - 1)
        .max(1);
    let stride = stride_time.max(stride_budget);

    let batch_size = batch_size_for(setup.iterations);
    let n_batches = setup.iterations.div_ceil(batch_size) as usize;

    let mut diag = ChainDiagnostics {
        d,
        iterations: setup.iterations,
        accept_count: 0,
        ell: setup.proposal.ell,
        alpha,
        istar: setup.istar,
        seed: setup.seed,
        esjd_sum: vec![0.0; d],
        trajectory: Vec::new(),
        batch_accepts: vec![0; n_batches],
        batch_size,
        group_roughness_sums: setup
            .record
            .record_group_roughness
            .then(|| vec![0.0; setup.layout.map_or(0, |l| l.cardinalities.len())]),
        roughness_samples: 0,
    };

    // cached current log density: per component for products (so each step
    // evaluates the family once per component), scalar otherwise
    enum Cache {
        PerComponent(Vec<f64>),
        Scalar(f64),
    }
    let mut cache = match setup.target {
        TargetModel::Product { theta, family } => Cache::PerComponent(
            theta
                .iter()
                .zip(&x)
                .map(|(&t, &xi)| family.log_f(t * xi))
                .collect(),
        ),
        other => Cache::Scalar(other.log_density_unchecked(&x)),
    };

    let mut y = vec![0.0f64; d];
    let mut y_logf = vec![0.0f64; d];

    let record_state = |diag: &mut ChainDiagnostics, iter: u64, x: &[f64]| {
        diag.trajectory.push(TrajectoryPoint {
            t: iter as f64 / speedup,
            z: x[setup.istar],
        });
        if let (Some(sums), Some(layout)) =
            (diag.group_roughness_sums.as_mut(), setup.layout)
        {
            if let TargetModel::Product { theta, family } = setup.target {
                for ((&g, &t), &xi) in layout.group_of.iter().zip(theta).zip(x) {
                    if let Some(i) = g {
                        let dl = t * family.dlog_f(t * xi);
                        sums[i] += dl * dl / speedup;
                    }
                }
                diag.roughness_samples += 1;
            }
        }
    };
    record_state(&mut diag, 0, &x);

    for iter in 0..setup.iterations {
        let log_ratio = match (&mut cache, setup.target) {
            (Cache::PerComponent(x_logf), TargetModel::Product { theta, family }) => {
                let mut lr = 0.0;
                for j in 0..d {
                    let z: f64 = rng.sample(StandardNormal);
                    y[j] = x[j] + stddevs[j] * z;
                    y_logf[j] = family.log_f(theta[j] * y[j]);
                    lr += y_logf[j] - x_logf[j];
                }
                lr
            }
            (Cache::Scalar(lp_x), other) => {
                for j in 0..d {
                    let z: f64 = rng.sample(StandardNormal);
                    y[j] = x[j] + stddevs[j] * z;
                }
                let lp_y = other.log_density_unchecked(&y);
                if *lp_x == f64::NEG_INFINITY {
                    f64::INFINITY
                } else {
                    lp_y - *lp_x
                }
            }
            _ => unreachable!("cache kind fixed by target kind"),
        };
        let u: f64 = rng.sample(Open01);
        if u.ln() < log_ratio {
            diag.accept_count += 1;
            diag.batch_accepts[(iter / batch_size) as usize] += 1;
            for j in 0..d {
                let jump = y[j] - x[j];
                diag.esjd_sum[j] += jump * jump;
            }
            std::mem::swap(&mut x, &mut y);
            match &mut cache {
                Cache::PerComponent(x_logf) => std::mem::swap(x_logf, &mut y_logf),
                Cache::Scalar(lp_x) => {
                    *lp_x = setup.target.log_density_unchecked(&x);
                }
            }
        }
        if (iter + 1) % stride == 0 {
            record_state(&mut diag, iter + 1, &x);
        }
    }
    Ok(diag)
}

/// Mean and standard error of a Monte Carlo estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct REstimate {
    pub mean: f64,
    pub se: f64,
}

/// Per-group and total estimates of the roughness statistic under exact
/// stationary draws.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoughnessEstimates {
    pub per_group: Vec<REstimate>,
    pub total: REstimate,
    pub n_draws: usize,
}

/// Estimates the per-group roughness statistic
/// `R_i = d^(-alpha) * sum_{j in group i} (theta_j (log f)'(theta_j X_j))^2`
/// over `n_draws` exact stationary draws. The summed statistic converges to
/// the aggregate roughness constant as `d` grows.
pub fn empirical_r<R: Rng + ?Sized>(
    target: &TargetModel,
    layout: &ComponentLayout,
    alpha: Exponent,
    n_draws: usize,
    rng: &mut R,
) -> Result<RoughnessEstimates, SamplerError> {
    let TargetModel::Product { theta, family } = target else {
        return Err(SamplerError::NotProduct);
    };
    let m = layout.cardinalities.len();
    let speedup = (target.dim() as f64).powf(alpha.as_f64());
    let mut sums = vec![0.0f64; m];
    let mut sq_sums = vec![0.0f64; m];
    let mut tot_sum = 0.0f64;
    let mut tot_sq = 0.0f64;
    for _ in 0..n_draws {
        let x = target.sample_stationary(rng);
        let mut r = vec![0.0f64; m];
        for ((&g, &t), &xi) in layout.group_of.iter().zip(theta).zip(&x) {
            if let Some(i) = g {
                let dl = t * family.dlog_f(t * xi);
                r[i] += dl * dl / speedup;
            }
        }
        let total: f64 = r.iter().sum();
        tot_sum += total;
        tot_sq += total * total;
        for i in 0..m {
            sums[i] += r[i];
            sq_sums[i] += r[i] * r[i];
        }
    }
    let n = n_draws as f64;
    let est = |sum: f64, sq: f64| {
        let mean = sum / n;
        let var = (sq / n - mean * mean).max(0.0) / (n - 1.0).max(1.0);
        REstimate {
            mean,
            se: var.sqrt(),
        }
    };
    Ok(RoughnessEstimates {
        per_group: (0..m).map(|i| est(sums[i], sq_sums[i])).collect(),
        total: est(tot_sum, tot_sq),
        n_draws,
    })
}

/// Splitmix64 finalizer.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent stream seed from a master seed and a path of
/// tags (study, dimension, grid index, replicate, ...). Deterministic and
/// scheduling-independent, so parallel sweeps reproduce exactly.
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    let mut s = splitmix64(master ^ 0x6A09_E667_F3BC_C909);
    for &t in tags {
        s = splitmix64(s ^ splitmix64(t));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::target::{instantiate_product, iid_scaling_vector, DensityFamily};
    use approx::assert_relative_eq;

    fn iid_normal(d: usize) -> (TargetModel, ComponentLayout) {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        instantiate_product(
            &iid_scaling_vector(),
            d,
            DensityFamily::standard_normal(),
            &mut rng,
        )
        .unwrap()
    }

    fn alpha_one() -> Exponent {
        Exponent::from_integer(1)
    }

    #[test]
    fn uphill_moves_always_accept() {
        let (target, _) = iid_normal(3);
        // from a point of very low density every proposal toward the mode
        // has log_ratio > 0; force tiny proposals from far out
        let x = vec![50.0, 50.0, 50.0];
        let stddevs = vec![1e-6; 3];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut accepted_all = true;
        let mut xcur = x;
        for _ in 0..50 {
            let (xn, acc, lr) = rwm_step(&target, &xcur, &stddevs, &mut rng).unwrap();
            // moves toward the mode dominate at this distance
            if lr >= 0.0 {
                accepted_all &= acc;
            }
            xcur = xn;
        }
        assert!(accepted_all);
    }

    #[test]
    fn zero_ell_chain_is_stationary_and_always_accepts() {
        let (target, layout) = iid_normal(5);
        let setup = ChainSetup {
            target: &target,
            layout: Some(&layout),
            proposal: ProposalSpec::homogeneous(0.0, alpha_one()),
            istar: layout.istar,
            iterations: 500,
            record: RecordOptions::default(),
            seed: 9,
        };
        let diag = run_chain(&setup).unwrap();
        assert_eq!(diag.accept_count, 500);
        assert!(diag.esjd_sum.iter().all(|&s| s == 0.0));
        assert!(diag.trajectory.windows(2).all(|w| w[0].t < w[1].t));
        assert!(diag
            .trajectory
            .windows(2)
            .all(|w| w[0].z == w[1].z));
    }

    #[test]
    fn acceptance_decision_is_replayable_from_the_seed() {
        let (target, _) = iid_normal(4);
        let stddevs = vec![0.5; 4];
        let x = vec![0.1, -0.4, 0.7, 0.0];
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut replay = rng.clone();
        let (_, accepted, log_ratio) = rwm_step(&target, &x, &stddevs, &mut rng).unwrap();
        // replay: d normals then one uniform
        let mut y = vec![0.0; 4];
        for j in 0..4 {
            let z: f64 = replay.sample(StandardNormal);
            y[j] = x[j] + stddevs[j] * z;
        }
        let u: f64 = replay.sample(Open01);
        let lr = target.log_density(&y).unwrap() - target.log_density(&x).unwrap();
        assert_relative_eq!(lr, log_ratio, epsilon = 1e-12);
        assert_eq!(u.ln() < lr, accepted);
    }

    #[test]
    fn chains_are_bitwise_identical_under_fixed_seed() {
        let (target, layout) = iid_normal(8);
        let setup = ChainSetup {
            target: &target,
            layout: Some(&layout),
            proposal: ProposalSpec::homogeneous(2.38, alpha_one()),
            istar: layout.istar,
            iterations: 2_000,
            record: RecordOptions {
                record_group_roughness: true,
                ..RecordOptions::default()
            },
            seed: 4242,
        };
        let a = run_chain(&setup).unwrap();
        let b = run_chain(&setup).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn marginal_of_interest_matches_family_moments() {
        let (target, layout) = iid_normal(20);
        let setup = ChainSetup {
            target: &target,
            layout: Some(&layout),
            proposal: ProposalSpec::homogeneous(2.38, alpha_one()),
            istar: layout.istar,
            iterations: 200_000,
            record: RecordOptions {
                trajectory_dt: 0.5,
                trajectory_budget: 100_000,
                record_group_roughness: false,
            },
            seed: 7,
        };
        let diag = run_chain(&setup).unwrap();
        let zs: Vec<f64> = diag.trajectory.iter().map(|p| p.z).collect();
        let n = zs.len() as f64;
        let mean = zs.iter().sum::<f64>() / n;
        let var = zs.iter().map(|z| (z - mean) * (z - mean)).sum::<f64>() / n;
        // thinned samples remain correlated; batch-means error bars
        let batches = 40;
        let bsize = zs.len() / batches;
        let bmeans: Vec<f64> = (0..batches)
            .map(|b| zs[b * bsize..(b + 1) * bsize].iter().sum::<f64>() / bsize as f64)
            .collect();
        let bmean = bmeans.iter().sum::<f64>() / batches as f64;
        let bvar =
            bmeans.iter().map(|m| (m - bmean) * (m - bmean)).sum::<f64>() / (batches - 1) as f64;
        let se_mean = (bvar / batches as f64).sqrt();
        assert!(mean.abs() < 4.0 * se_mean, "mean {mean}, se {se_mean}");
        assert!((var - 1.0).abs() < 0.06, "var {var}");
    }

    #[test]
    fn acceptance_monotone_nonincreasing_in_ell() {
        let (target, layout) = iid_normal(20);
        let mut prev = f64::INFINITY;
        let mut prev_se = 0.0;
        for (i, ell) in [0.5, 1.0, 2.0, 4.0].into_iter().enumerate() {
            let setup = ChainSetup {
                target: &target,
                layout: Some(&layout),
                proposal: ProposalSpec::homogeneous(ell, alpha_one()),
                istar: layout.istar,
                iterations: 40_000,
                record: RecordOptions::default(),
                seed: 100 + i as u64,
            };
            let diag = run_chain(&setup).unwrap();
            let (rate, se) = acceptance_with_se(&diag).unwrap();
            assert!(
                rate <= prev + 2.0 * (se + prev_se),
                "acceptance not nonincreasing: {rate} after {prev}"
            );
            prev = rate;
            prev_se = se;
        }
    }

    #[test]
    fn rescaled_esjd_matches_ell_squared_times_acceptance() {
        let (target, layout) = iid_normal(200);
        let setup = ChainSetup {
            target: &target,
            layout: Some(&layout),
            proposal: ProposalSpec::homogeneous(2.38, alpha_one()),
            istar: layout.istar,
            iterations: 200_000,
            record: RecordOptions::default(),
            seed: 31,
        };
        let diag = run_chain(&setup).unwrap();
        let lhs = diag.esjd_rescaled();
        let rhs = 2.38 * 2.38 * diag.acceptance_rate();
        assert!(
            (lhs - rhs).abs() / rhs < 0.10,
            "esjd identity off: {lhs} vs {rhs}"
        );
    }

    #[test]
    fn detailed_balance_on_coarse_bins() {
        // reversibility: transition counts between bins match within MC error
        let (target, layout) = iid_normal(2);
        let stddevs = ProposalSpec::homogeneous(1.0, Exponent::ZERO)
            .stddevs(2, None)
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut x = target.sample_stationary(&mut rng);
        let bin = |v: f64| ((v + 2.0).clamp(0.0, 3.999) as usize).min(3);
        let mut flows = [[0u64; 4]; 4];
        for _ in 0..200_000 {
            let (xn, _, _) = rwm_step(&target, &x, &stddevs, &mut rng).unwrap();
            flows[bin(x[0])][bin(xn[0])] += 1;
            x = xn;
        }
        let _ = layout;
        for a in 0..4 {
            for b in (a + 1)..4 {
                let (f, g) = (flows[a][b] as f64, flows[b][a] as f64);
                if f + g < 100.0 {
                    continue;
                }
                let z = (f - g).abs() / (f + g).sqrt();
                assert!(z < 4.0, "flow imbalance {a}->{b}: z = {z}");
            }
        }
    }

    #[test]
    fn batch_means_on_synthetic_diagnostics() {
        let all = ChainDiagnostics::from_acceptance_flags(&vec![true; 400]);
        assert_eq!(acceptance_with_se(&all).unwrap(), (1.0, 0.0));

        let alternating: Vec<bool> = (0..10_000).map(|i| i % 2 == 0).collect();
        let (rate, _) = acceptance_with_se(&ChainDiagnostics::from_acceptance_flags(&alternating))
            .unwrap();
        assert_relative_eq!(rate, 0.5);

        // i.i.d. Bernoulli(0.3): batch-means se should be near sqrt(p(1-p)/n)
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let flags: Vec<bool> = (0..1_000_000).map(|_| rng.random::<f64>() < 0.3).collect();
        let (rate, se) =
            acceptance_with_se(&ChainDiagnostics::from_acceptance_flags(&flags)).unwrap();
        let iid_se = (0.3f64 * 0.7 / 1_000_000.0).sqrt();
        assert!((rate - 0.3).abs() < 4.0 * iid_se);
        assert!(se < 2.0 * iid_se, "batch se {se} vs iid {iid_se}");
        assert!(se > 0.5 * iid_se, "batch se {se} vs iid {iid_se}");

        let short = ChainDiagnostics::from_acceptance_flags(&[true; 10]);
        assert!(acceptance_with_se(&short).is_err());
    }

    #[test]
    fn empirical_roughness_iid_normal() {
        let (target, layout) = iid_normal(10_000);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let est = empirical_r(&target, &layout, alpha_one(), 200, &mut rng).unwrap();
        // unit Fisher constant: the total must sit near 1
        assert!(
            (est.total.mean - 1.0).abs() < 0.05,
            "total {}",
            est.total.mean
        );
        assert!(est.total.se < 0.01);
    }

    #[test]
    fn empirical_roughness_vanishes_for_subdominant_group() {
        use crate::asymptotics::{
            ComponentRef, ConstantModel, GroupSpec, OrderTerm, ScalingVector,
        };
        // second group has scaling 1/d: variance d, aggregate exponent 0 < 1
        let sv = ScalingVector::new(
            vec![OrderTerm::new(1.0, Exponent::ZERO)],
            vec![
                GroupSpec {
                    constant: ConstantModel::Fixed { k: 1.0 },
                    gamma: Exponent::ZERO,
                    card_coeff: 0.5,
                    card_exponent: Exponent::from_integer(1),
                },
                GroupSpec {
                    constant: ConstantModel::Fixed { k: 1.0 },
                    gamma: Exponent::from_integer(-1),
                    card_coeff: 0.5,
                    card_exponent: Exponent::from_integer(1),
                },
            ],
            ComponentRef::FiniteTerm(0),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (target, layout) =
            instantiate_product(&sv, 4000, DensityFamily::standard_normal(), &mut rng).unwrap();
        let est = empirical_r(&target, &layout, alpha_one(), 100, &mut rng).unwrap();
        assert!((est.per_group[0].mean - 0.5).abs() < 0.05);
        assert!(est.per_group[1].mean < 1e-3, "subdominant group should vanish");
    }

    #[test]
    fn roughness_deviation_shrinks_with_dimension() {
        // RMS deviation of the summed statistic over seeds roughly halves
        // when d doubles twice (variance ~ 1/d)
        let rms = |d: usize| {
            let (target, layout) = iid_normal(d);
            let mut acc = 0.0;
            let seeds = 50;
            for s in 0..seeds {
                let mut rng = ChaCha8Rng::seed_from_u64(1000 + s);
                let est = empirical_r(&target, &layout, alpha_one(), 1, &mut rng).unwrap();
                acc += (est.total.mean - 1.0).powi(2);
            }
            (acc / seeds as f64).sqrt()
        };
        let coarse = rms(500);
        let fine = rms(2_000);
        assert!(
            fine < 0.75 * coarse,
            "rms at d=2000 ({fine}) should clearly beat d=500 ({coarse})"
        );
    }

    #[test]
    fn inhomogeneous_stddevs_follow_group_exponents() {
        use crate::asymptotics::{
            ComponentRef, ConstantModel, GroupSpec, OrderTerm, ScalingVector,
        };
        let sv = ScalingVector::new(
            vec![OrderTerm::new(1.0, Exponent::ZERO)],
            vec![
                GroupSpec {
                    constant: ConstantModel::Fixed { k: 1.0 },
                    gamma: Exponent::ZERO,
                    card_coeff: 0.5,
                    card_exponent: Exponent::from_integer(1),
                },
                GroupSpec {
                    constant: ConstantModel::Fixed { k: 1.0 },
                    gamma: Exponent::from_integer(-1),
                    card_coeff: 0.5,
                    card_exponent: Exponent::from_integer(1),
                },
            ],
            ComponentRef::FiniteTerm(0),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (_, layout) =
            instantiate_product(&sv, 100, DensityFamily::standard_normal(), &mut rng).unwrap();
        let spec = ProposalSpec {
            ell: 1.0,
            mode: ProposalMode::Inhomogeneous {
                alpha_finite: Exponent::from_integer(1),
                alpha_groups: vec![Exponent::from_integer(1), Exponent::ZERO],
            },
        };
        let s = spec.stddevs(100, Some(&layout)).unwrap();
        assert_relative_eq!(s[layout.istar], 0.1);
        // group 1 members keep exponent 0: stddev 1
        let g1_member = layout
            .group_of
            .iter()
            .position(|g| *g == Some(1))
            .unwrap();
        assert_relative_eq!(s[g1_member], 1.0);
        // missing layout is an error for inhomogeneous proposals
        assert!(spec.stddevs(100, None).is_err());
    }

    #[test]
    fn derive_seed_separates_streams() {
        let a = derive_seed(42, &[1, 2, 3]);
        let b = derive_seed(42, &[1, 2, 4]);
        let c = derive_seed(43, &[1, 2, 3]);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, derive_seed(42, &[1, 2, 3]));
    }
}
