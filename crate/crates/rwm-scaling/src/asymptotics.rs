//! Symbolic analysis of the asymptotic scaling structure of a target family.
//!
//! A target's per-component scaling terms are described symbolically as
//! constants times exact powers of the dimension `d`: finitely many
//! individual terms plus replicated groups whose cardinality grows
//! polynomially in `d`. From that description this module derives, by exact
//! rational arithmetic on the exponents:
//!
//! * the proposal-variance exponent `alpha` (proposal variance `ell^2 / d^alpha`),
//! * whether any finite-multiplicity term asymptotically dominates the
//!   replicated groups (in which case the usual 0.234 tuning rule no longer
//!   applies and no optimal acceptance rate is reported),
//! * the aggregate roughness constant `E_R` under homogeneous and per-group
//!   (inhomogeneous) proposal scalings,
//! * the optimal proposal constant `ell_hat` and the asymptotically optimal
//!   acceptance rate, and
//! * the mixing order of the component of interest, `O(d^alpha)` iterations.
//!
//! A numeric brute-force evaluator of the same limits doubles as an
//! independent oracle for the symbolic rules.

use crate::diffusion;
use crate::exponent::Exponent;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;
use thiserror::Error;

/// One scaling term `constant / d^exponent` occurring a bounded number of
/// times as `d` grows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderTerm {
    pub constant: f64,
    pub exponent: Exponent,
}

impl OrderTerm {
    pub fn new(constant: f64, exponent: Exponent) -> Self {
        OrderTerm { constant, exponent }
    }
}

/// Constant model for the members of a replicated group: either every member
/// shares one constant, or member constants are i.i.d. draws summarized by
/// the mean of their inverses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ConstantModel {
    Fixed { k: f64 },
    Random { inverse_mean: f64 },
}

impl ConstantModel {
    /// The factor each group contributes to the roughness sum: `1/K` for a
    /// shared constant, the declared mean inverse for random constants.
    pub fn inverse_weight(&self) -> f64 {
        match *self {
            ConstantModel::Fixed { k } => 1.0 / k,
            ConstantModel::Random { inverse_mean } => inverse_mean,
        }
    }

    /// Representative constant used when a member of the group is singled
    /// out and normalized away.
    fn representative(&self) -> f64 {
        match *self {
            ConstantModel::Fixed { k } => k,
            ConstantModel::Random { inverse_mean } => 1.0 / inverse_mean,
        }
    }

    fn divided_by(&self, k_star: f64) -> ConstantModel {
        match *self {
            ConstantModel::Fixed { k } => ConstantModel::Fixed { k: k / k_star },
            ConstantModel::Random { inverse_mean } => ConstantModel::Random {
                inverse_mean: inverse_mean * k_star,
            },
        }
    }

    fn is_random(&self) -> bool {
        matches!(self, ConstantModel::Random { .. })
    }

    fn value(&self) -> f64 {
        match *self {
            ConstantModel::Fixed { k } => k,
            ConstantModel::Random { inverse_mean } => inverse_mean,
        }
    }
}

/// A group of components sharing the scaling order `K / d^gamma`, with
/// cardinality `card_coeff * d^card_exponent` growing without bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub constant: ConstantModel,
    pub gamma: Exponent,
    pub card_coeff: f64,
    pub card_exponent: Exponent,
}

impl GroupSpec {
    /// Exponent of the group's aggregate contribution, `gamma + beta`. This
    /// is also the group's personalized proposal exponent.
    pub fn aggregate_exponent(&self) -> Exponent {
        self.gamma + self.card_exponent
    }
}

/// Designates the component whose mixing is being studied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentRef {
    FiniteTerm(usize),
    GroupMember(usize),
}

/// Symbolic description of the vector of scaling terms.
///
/// Canonical form: finite terms sorted by descending exponent, groups sorted
/// by descending growth exponent; indices in `component_of_interest` (and in
/// analysis results) refer to this canonical order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingVector {
    finite_terms: Vec<OrderTerm>,
    groups: Vec<GroupSpec>,
    component_of_interest: ComponentRef,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ScalingError {
    #[error("scaling vector must contain at least one replicated group")]
    NoGroups,
    #[error("scaling constants must be positive and finite (got {0})")]
    NonPositiveConstant(f64),
    #[error("cardinality coefficient must be positive and finite (got {0})")]
    NonPositiveCardinality(f64),
    #[error("cardinality exponent must be positive (got {0}); every group must grow with d")]
    NonGrowingGroup(Exponent),
    #[error("group growth exponents must be pairwise distinct (duplicate {0})")]
    DuplicateGamma(Exponent),
    #[error(
        "finite-term exponent {lambda} equals group exponent {gamma}; with random group \
         constants all infinite-multiplicity orders must belong to a single group"
    )]
    FiniteGroupOrderCollision { lambda: Exponent, gamma: Exponent },
    #[error("component of interest {0:?} is out of range")]
    ComponentOutOfRange(ComponentRef),
    #[error("fisher term must be positive and finite (got {0})")]
    BadFisher(f64),
    #[error(
        "aggregate roughness must be positive; a dominating finite-multiplicity scaling term \
         pushes the optimal acceptance rate below 0.234 and no rate is reported"
    )]
    NonPositiveRoughness,
    #[error("brute-force grid must be strictly increasing with at least 3 points")]
    BadGrid,
}

impl ScalingVector {
    /// Builds a canonical, validated scaling vector. Input order is free;
    /// terms and groups are re-sorted and `component` is remapped to the
    /// canonical indices.
    pub fn new(
        finite_terms: Vec<OrderTerm>,
        groups: Vec<GroupSpec>,
        component: ComponentRef,
    ) -> Result<Self, ScalingError> {
        if groups.is_empty() {
            return Err(ScalingError::NoGroups);
        }
        for t in &finite_terms {
            if !(t.constant > 0.0 && t.constant.is_finite()) {
                return Err(ScalingError::NonPositiveConstant(t.constant));
            }
        }
        for g in &groups {
            let c = g.constant.value();
            if !(c > 0.0 && c.is_finite()) {
                return Err(ScalingError::NonPositiveConstant(c));
            }
            if !(g.card_coeff > 0.0 && g.card_coeff.is_finite()) {
                return Err(ScalingError::NonPositiveCardinality(g.card_coeff));
            }
            if !g.card_exponent.is_positive() {
                return Err(ScalingError::NonGrowingGroup(g.card_exponent));
            }
        }
        match component {
            ComponentRef::FiniteTerm(j) if j >= finite_terms.len() => {
                return Err(ScalingError::ComponentOutOfRange(component))
            }
            ComponentRef::GroupMember(i) if i >= groups.len() => {
                return Err(ScalingError::ComponentOutOfRange(component))
            }
            _ => {}
        }

        // canonical order: descending exponents, stable in ties
        let mut finite_idx: Vec<usize> = (0..finite_terms.len()).collect();
        finite_idx.sort_by(|&a, &b| finite_terms[b].exponent.cmp(&finite_terms[a].exponent));
        let mut group_idx: Vec<usize> = (0..groups.len()).collect();
        group_idx.sort_by(|&a, &b| groups[b].gamma.cmp(&groups[a].gamma));

        let component = match component {
            ComponentRef::FiniteTerm(j) => {
                ComponentRef::FiniteTerm(finite_idx.iter().position(|&k| k == j).unwrap())
            }
            ComponentRef::GroupMember(i) => {
                ComponentRef::GroupMember(group_idx.iter().position(|&k| k == i).unwrap())
            }
        };
        let finite_terms: Vec<OrderTerm> = finite_idx.iter().map(|&k| finite_terms[k]).collect();
        let groups: Vec<GroupSpec> = group_idx.iter().map(|&k| groups[k]).collect();

        for w in groups.windows(2) {
            if w[0].gamma == w[1].gamma {
                return Err(ScalingError::DuplicateGamma(w[0].gamma));
            }
        }
        // With random constants, all terms of one asymptotic order must sit in
        // one group, so no declared finite term may share an order with a
        // group. The component of interest itself is exempt: singling a
        // member out of its group legitimately leaves a finite term of the
        // group's order behind.
        if groups.iter().any(|g| g.constant.is_random()) {
            for (j, t) in finite_terms.iter().enumerate() {
                if component == ComponentRef::FiniteTerm(j) {
                    continue;
                }
                if let Some(g) = groups.iter().find(|g| g.gamma == t.exponent) {
                    return Err(ScalingError::FiniteGroupOrderCollision {
                        lambda: t.exponent,
                        gamma: g.gamma,
                    });
                }
            }
        }

        Ok(ScalingVector {
            finite_terms,
            groups,
            component_of_interest: component,
        })
    }

    pub fn finite_terms(&self) -> &[OrderTerm] {
        &self.finite_terms
    }

    pub fn groups(&self) -> &[GroupSpec] {
        &self.groups
    }

    pub fn component_of_interest(&self) -> ComponentRef {
        self.component_of_interest
    }

    /// Largest finite-term exponent, if any finite terms are present.
    pub fn largest_finite_exponent(&self) -> Option<Exponent> {
        self.finite_terms.first().map(|t| t.exponent)
    }

    /// Largest aggregate group exponent `max_i(gamma_i + beta_i)`.
    pub fn largest_group_exponent(&self) -> Exponent {
        self.groups
            .iter()
            .map(|g| g.aggregate_exponent())
            .max()
            .expect("at least one group")
    }

    /// Multiplies every scaling term by `d^c` (shifts all exponents by `c`).
    /// Rescalings of this kind change `alpha` by exactly `c` and leave every
    /// verdict and optimum invariant.
    pub fn shift_exponents(&self, c: Exponent) -> ScalingVector {
        let mut out = self.clone();
        for t in &mut out.finite_terms {
            t.exponent = t.exponent + c;
        }
        for g in &mut out.groups {
            g.gamma = g.gamma + c;
        }
        out
    }

    /// Rescales the target so the component of interest has unit scaling
    /// term: every exponent is shifted by minus the exponent of the chosen
    /// component's term and every constant is divided by its constant. A
    /// chosen group member is pulled out into the finite part as the term
    /// `(1, 0)`; the group's cardinality is unchanged at leading order.
    ///
    /// Idempotent: normalizing an already-normalized vector returns it
    /// unchanged.
    pub fn normalize_component(&self) -> Result<ScalingVector, ScalingError> {
        let (k_star, lambda_star, pulled_from_group) = match self.component_of_interest {
            ComponentRef::FiniteTerm(j) => {
                let t = self.finite_terms[j];
                (t.constant, t.exponent, None)
            }
            ComponentRef::GroupMember(i) => {
                let g = self.groups[i];
                (g.constant.representative(), g.gamma, Some(i))
            }
        };

        let mut finite: Vec<OrderTerm> = self
            .finite_terms
            .iter()
            .map(|t| OrderTerm::new(t.constant / k_star, t.exponent - lambda_star))
            .collect();
        let groups: Vec<GroupSpec> = self
            .groups
            .iter()
            .map(|g| GroupSpec {
                constant: g.constant.divided_by(k_star),
                gamma: g.gamma - lambda_star,
                card_coeff: g.card_coeff,
                card_exponent: g.card_exponent,
            })
            .collect();

        let component = match pulled_from_group {
            None => {
                let j = match self.component_of_interest {
                    ComponentRef::FiniteTerm(j) => j,
                    _ => unreachable!(),
                };
                // make the unit term exact
                finite[j] = OrderTerm::new(1.0, Exponent::ZERO);
                ComponentRef::FiniteTerm(j)
            }
            Some(_) => {
                finite.push(OrderTerm::new(1.0, Exponent::ZERO));
                ComponentRef::FiniteTerm(finite.len() - 1)
            }
        };
        ScalingVector::new(finite, groups, component)
    }
}

impl fmt::Display for ScalingVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts: Vec<String> = Vec::new();
        for t in &self.finite_terms {
            parts.push(format!("{}*d^{}", t.constant, -t.exponent));
        }
        for g in &self.groups {
            let c = match g.constant {
                ConstantModel::Fixed { k } => format!("{k}"),
                ConstantModel::Random { inverse_mean } => format!("random(b={inverse_mean})"),
            };
            parts.push(format!(
                "[{}*d^{}] x {}*d^{}",
                c,
                -g.gamma,
                g.card_coeff,
                g.card_exponent
            ));
        }
        write!(f, "({})", parts.join(", "))
    }
}

/// Whether the replicated groups dominate every finite-multiplicity term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Balance {
    /// No finite term dominates: the limiting diffusion and the 0.234 rule apply.
    Holds,
    /// A finite term matches or outgrows every group: the 0.234 rule does not apply.
    Violated,
}

/// Verdict plus the exponents that decide it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BalanceVerdict {
    pub verdict: Balance,
    /// Largest finite-term exponent (absent when there are no finite terms).
    pub largest_finite_exponent: Option<Exponent>,
    /// Largest aggregate group exponent `max_i(gamma_i + beta_i)`.
    pub largest_group_exponent: Exponent,
}

impl BalanceVerdict {
    pub fn holds(&self) -> bool {
        self.verdict == Balance::Holds
    }
}

/// Homogeneous proposals use one exponent `alpha` for every component;
/// inhomogeneous proposals personalize the exponent per replicated group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProposalRegime {
    Homogeneous,
    Inhomogeneous,
}

/// Smallest proposal exponent keeping every aggregate scaling ratio bounded:
/// `alpha = max(lambda_1, max_i(gamma_i + beta_i))`.
pub fn compute_alpha(sv: &ScalingVector) -> Exponent {
    let group_max = sv.largest_group_exponent();
    match sv.largest_finite_exponent() {
        Some(l) if l > group_max => l,
        _ => group_max,
    }
}

/// Personalized proposal exponents, one per group: `alpha_i = gamma_i + beta_i`.
pub fn alpha_per_group(sv: &ScalingVector) -> Vec<Exponent> {
    sv.groups.iter().map(|g| g.aggregate_exponent()).collect()
}

/// Decides whether any finite-multiplicity term dominates the aggregate.
///
/// Holds iff there are no finite terms or the largest finite exponent is
/// strictly below the largest aggregate group exponent. Equality means the
/// limiting ratio is a positive constant rather than zero, so it counts as
/// violated.
pub fn check_balance(sv: &ScalingVector) -> BalanceVerdict {
    let largest_group = sv.largest_group_exponent();
    let largest_finite = sv.largest_finite_exponent();
    let verdict = match largest_finite {
        None => Balance::Holds,
        Some(l) if l < largest_group => Balance::Holds,
        Some(_) => Balance::Violated,
    };
    BalanceVerdict {
        verdict,
        largest_finite_exponent: largest_finite,
        largest_group_exponent: largest_group,
    }
}

/// Indices (canonical order) of groups whose aggregate exponent attains `alpha`.
pub fn dominating_groups(sv: &ScalingVector) -> BTreeSet<usize> {
    let alpha = compute_alpha(sv);
    sv.groups
        .iter()
        .enumerate()
        .filter(|(_, g)| g.aggregate_exponent() == alpha)
        .map(|(i, _)| i)
        .collect()
}

/// Aggregate roughness constant `E_R`.
///
/// Homogeneous proposals: only groups whose aggregate exponent attains
/// `alpha` contribute (the others vanish in the limit); each contributes
/// `card_coeff * inverse_weight * fisher`. Inhomogeneous proposals match
/// every group's exponent individually, so every group contributes.
pub fn compute_er(
    sv: &ScalingVector,
    fisher: f64,
    regime: ProposalRegime,
) -> Result<f64, ScalingError> {
    if !(fisher > 0.0 && fisher.is_finite()) {
        return Err(ScalingError::BadFisher(fisher));
    }
    let alpha = compute_alpha(sv);
    let sum = sv
        .groups
        .iter()
        .filter(|g| regime == ProposalRegime::Inhomogeneous || g.aggregate_exponent() == alpha)
        .map(|g| g.card_coeff * g.constant.inverse_weight() * fisher)
        .sum();
    Ok(sum)
}

/// Optimal proposal constant and the acceptance rate it induces.
///
/// `ell_hat = u_hat / sqrt(e_r)` where `u_hat` maximizes
/// `g(u) = 2 u^2 Phi(-u/2)`; the acceptance rate at the optimum,
/// `2 Phi(-u_hat / 2)`, is 0.234 to three decimals and does not depend on
/// `e_r`.
pub fn optimal_ell(e_r: f64) -> Result<(f64, f64), ScalingError> {
    if !(e_r > 0.0 && e_r.is_finite()) {
        return Err(ScalingError::NonPositiveRoughness);
    }
    let (u_hat, _) = diffusion::unit_speed_maximizer();
    Ok((u_hat / e_r.sqrt(), diffusion::limiting_acceptance(u_hat, 1.0)))
}

/// Number of iterations for the component of interest to mix, as the
/// exponent `alpha` of `O(d^alpha)`. Expects the vector normalized for that
/// component.
pub fn mixing_order(sv: &ScalingVector) -> Exponent {
    compute_alpha(sv)
}

/// Classification of a limit evaluated numerically along a grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitClass {
    Zero,
    FinitePositive,
    Infinite,
}

/// Numeric verdicts from evaluating the defining limits on a dimension grid.
#[derive(Debug, Clone, Serialize)]
pub struct BruteForceReport {
    /// Limit of (largest finite term) / (sum of all terms): zero iff the
    /// balance condition holds.
    pub balance_ratio: LimitClass,
    /// Limit of the finite-part ratio `d^(lambda_1 - alpha)` at the symbolic
    /// `alpha` (absent when there are no finite terms).
    pub finite_ratio: Option<LimitClass>,
    /// Per-group limits of `c_i(d) d^(gamma_i - alpha)` at the symbolic `alpha`.
    pub group_ratios: Vec<LimitClass>,
    /// All ratios bounded at the symbolic `alpha`.
    pub alpha_admissible: bool,
    /// At least one ratio converges to a positive constant.
    pub alpha_attained: bool,
    /// Decreasing `alpha` slightly makes some ratio diverge.
    pub alpha_minimal: bool,
}

impl BruteForceReport {
    pub fn balance_holds(&self) -> bool {
        self.balance_ratio == LimitClass::Zero
    }

    pub fn alpha_confirmed(&self) -> bool {
        self.alpha_admissible && self.alpha_attained && self.alpha_minimal
    }
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

fn classify_slope(slope: f64, tol: f64) -> LimitClass {
    if slope < -tol {
        LimitClass::Zero
    } else if slope > tol {
        LimitClass::Infinite
    } else {
        LimitClass::FinitePositive
    }
}

/// Log-log slope between the two largest grid points of a log-ratio
/// evaluated on the grid.
fn tail_slope(d_grid: &[u64], log_ratio: impl Fn(f64) -> f64) -> f64 {
    let k = d_grid.len();
    let (d0, d1) = (d_grid[k - 2] as f64, d_grid[k - 1] as f64);
    (log_ratio(d1) - log_ratio(d0)) / (d1.ln() - d0.ln())
}

/// Evaluates the defining ratios numerically on `d_grid` (log-domain, so
/// arbitrarily large dimensions do not overflow) and classifies each limit
/// from the tail log-log slope. Used as an independent check of the symbolic
/// analyzer.
pub fn brute_force_limits(
    sv: &ScalingVector,
    d_grid: &[u64],
    slope_tol: f64,
) -> Result<BruteForceReport, ScalingError> {
    if d_grid.len() < 3 || d_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ScalingError::BadGrid);
    }
    let alpha = compute_alpha(sv).as_f64();

    // balance ratio: numerator d^{lambda_1}, denominator the full aggregate
    let balance_ratio = match sv.largest_finite_exponent() {
        None => LimitClass::Zero,
        Some(l1) => {
            let ratio = |d: f64| {
                let ln_d = d.ln();
                let mut terms: Vec<f64> =
                    sv.finite_terms.iter().map(|t| t.exponent.as_f64() * ln_d).collect();
                terms.extend(sv.groups.iter().map(|g| {
                    g.card_coeff.ln() + g.aggregate_exponent().as_f64() * ln_d
                }));
                l1.as_f64() * ln_d - log_sum_exp(&terms)
            };
            classify_slope(tail_slope(d_grid, ratio), slope_tol)
        }
    };

    let ratios_at = |a: f64| -> (Option<LimitClass>, Vec<LimitClass>) {
        let finite = sv.largest_finite_exponent().map(|l1| {
            classify_slope(
                tail_slope(d_grid, |d| (l1.as_f64() - a) * d.ln()),
                slope_tol,
            )
        });
        let groups = sv
            .groups
            .iter()
            .map(|g| {
                let e = g.aggregate_exponent().as_f64();
                let c = g.card_coeff.ln();
                classify_slope(tail_slope(d_grid, |d| c + (e - a) * d.ln()), slope_tol)
            })
            .collect();
        (finite, groups)
    };

    let (finite_ratio, group_ratios) = ratios_at(alpha);
    let all = finite_ratio.iter().chain(group_ratios.iter());
    let alpha_admissible = all.clone().all(|c| *c != LimitClass::Infinite);
    let alpha_attained = all.clone().any(|c| *c == LimitClass::FinitePositive);

    let probe = alpha - 4.0 * slope_tol.max(0.025);
    let (pf, pg) = ratios_at(probe);
    let alpha_minimal = pf
        .iter()
        .chain(pg.iter())
        .any(|c| *c == LimitClass::Infinite);

    Ok(BruteForceReport {
        balance_ratio,
        finite_ratio,
        group_ratios,
        alpha_admissible,
        alpha_attained,
        alpha_minimal,
    })
}

/// Complete symbolic analysis of a scaling vector.
#[derive(Debug, Clone, Serialize)]
pub struct ScalingAnalysis {
    /// The vector after normalizing the component of interest to unit scale.
    pub normalized: ScalingVector,
    pub alpha: Exponent,
    pub alpha_per_group: Vec<Exponent>,
    pub balance: BalanceVerdict,
    pub dominating_groups: BTreeSet<usize>,
    pub e_r_homogeneous: f64,
    pub e_r_inhomogeneous: f64,
    /// Proposal regime the reported `ell_hat` refers to.
    pub regime: ProposalRegime,
    /// Optimal proposal constant; absent when the balance condition fails.
    pub ell_hat: Option<f64>,
    /// Asymptotically optimal acceptance rate; absent when the balance
    /// condition fails.
    pub aoar: Option<f64>,
    /// The component of interest mixes in `O(d^mixing_order_exponent)` iterations.
    pub mixing_order_exponent: Exponent,
}

impl ScalingAnalysis {
    /// The roughness constant for the selected regime.
    pub fn e_r(&self) -> f64 {
        match self.regime {
            ProposalRegime::Homogeneous => self.e_r_homogeneous,
            ProposalRegime::Inhomogeneous => self.e_r_inhomogeneous,
        }
    }
}

/// Runs the full pipeline: normalize, derive `alpha` and the balance
/// verdict, evaluate both roughness constants, and (when the balance
/// condition holds) the optimal proposal constant and acceptance rate.
pub fn analyze(
    sv: &ScalingVector,
    fisher: f64,
    regime: ProposalRegime,
) -> Result<ScalingAnalysis, ScalingError> {
    let normalized = sv.normalize_component()?;
    let alpha = compute_alpha(&normalized);
    debug_assert!(!alpha.as_f64().is_sign_negative() || alpha.is_zero());
    let balance = check_balance(&normalized);
    let e_r_homogeneous = compute_er(&normalized, fisher, ProposalRegime::Homogeneous)?;
    let e_r_inhomogeneous = compute_er(&normalized, fisher, ProposalRegime::Inhomogeneous)?;
    let (ell_hat, aoar) = if balance.holds() {
        let e_r = match regime {
            ProposalRegime::Homogeneous => e_r_homogeneous,
            ProposalRegime::Inhomogeneous => e_r_inhomogeneous,
        };
        let (ell, a) = optimal_ell(e_r)?;
        (Some(ell), Some(a))
    } else {
        (None, None)
    };
    Ok(ScalingAnalysis {
        alpha,
        alpha_per_group: alpha_per_group(&normalized),
        balance,
        dominating_groups: dominating_groups(&normalized),
        e_r_homogeneous,
        e_r_inhomogeneous,
        regime,
        ell_hat,
        aoar,
        mixing_order_exponent: mixing_order(&normalized),
        normalized,
    })
}
