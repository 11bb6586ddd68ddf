//! Declarative experiment configuration.
//!
//! Configs are TOML with a strict schema: unknown keys are rejected and all
//! power-of-`d` exponents are strings parsed as exact fractions (`"3/4"`,
//! `"-1"`, `"0.75"`), never floats, so the analyzer's exact comparisons
//! survive the trip through the file format.

use crate::asymptotics::{
    ComponentRef, ConstantModel, GroupSpec, OrderTerm, ProposalRegime, ScalingVector,
};
use crate::exponent::Exponent;
use crate::experiments::{CovarianceKind, ExperimentPlan, ScalingSource, Study};
use crate::sampler::RecordOptions;
use crate::target::{DensityFamily, FamilyKind};
use serde::Deserialize;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config error: {0}")]
    Invalid(String),
    #[error(transparent)]
    Scaling(#[from] crate::asymptotics::ScalingError),
}

/// Top-level configuration file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub schema_version: u32,
    pub target: TargetSection,
    /// Declared scaling vector; exactly one of `scaling` / `spectrum`.
    pub scaling: Option<ScalingSection>,
    /// Covariance-spectrum classification request.
    pub spectrum: Option<SpectrumSection>,
    pub component: Option<ComponentSection>,
    pub proposal: Option<ProposalSection>,
    pub experiment: Option<ExperimentSection>,
    pub output: Option<OutputSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSection {
    pub family: FamilyKind,
    pub scale: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingSection {
    #[serde(default)]
    pub finite_terms: Vec<FiniteTermEntry>,
    #[serde(default)]
    pub groups: Vec<GroupEntry>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiniteTermEntry {
    pub constant: f64,
    /// Exponent of `d` in the scaling term `constant / d^exponent`.
    pub exponent: Exponent,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupEntry {
    /// Shared constant of the group's scaling term `K / d^gamma`.
    pub constant: Option<f64>,
    /// Alternative to `constant`: members draw random constants with this
    /// mean inverse.
    pub inverse_mean: Option<f64>,
    pub gamma: Exponent,
    pub card_coeff: f64,
    pub card_exponent: Exponent,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumSection {
    pub covariance: String,
    pub diag: Option<f64>,
    pub offdiag: Option<f64>,
    pub d_grid: Vec<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentSection {
    pub finite_term: Option<usize>,
    pub group: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProposalSection {
    pub mode: ProposalRegime,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    #[serde(default)]
    pub studies: Vec<Study>,
    pub ell_grid: Option<Vec<f64>>,
    pub ell_min: Option<f64>,
    pub ell_max: Option<f64>,
    pub ell_points: Option<usize>,
    pub d_list: Vec<usize>,
    pub iterations: u64,
    #[serde(default = "default_replicates")]
    pub replicates: u32,
    #[serde(default)]
    pub seed: u64,
    pub trajectory_dt: Option<f64>,
    pub trajectory_budget: Option<usize>,
    pub compare_ell: Option<f64>,
    pub compare_dt: Option<f64>,
    pub roughness_draws: Option<u32>,
}

fn default_replicates() -> u32 {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: String,
}

impl ConfigFile {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_str(&text)
    }

    pub fn from_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: ConfigFile = toml::from_str(text)?;
        if cfg.schema_version != 1 {
            return Err(ConfigError::Invalid(format!(
                "unsupported schema_version {} (expected 1)",
                cfg.schema_version
            )));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        match (&self.scaling, &self.spectrum) {
            (None, None) => Err(ConfigError::Invalid(
                "one of [scaling] or [spectrum] is required".into(),
            )),
            (Some(_), Some(_)) => Err(ConfigError::Invalid(
                "[scaling] and [spectrum] are mutually exclusive".into(),
            )),
            _ => Ok(()),
        }?;
        if let Some(c) = &self.component {
            match (c.finite_term, c.group) {
                (Some(_), Some(_)) | (None, None) => {
                    return Err(ConfigError::Invalid(
                        "[component] needs exactly one of finite_term / group".into(),
                    ))
                }
                _ => {}
            }
        }
        if let Some(s) = &self.scaling {
            for g in &s.groups {
                match (g.constant, g.inverse_mean) {
                    (Some(_), Some(_)) | (None, None) => {
                        return Err(ConfigError::Invalid(
                            "each group needs exactly one of constant / inverse_mean".into(),
                        ))
                    }
                    _ => {}
                }
            }
        }
        if let Some(e) = &self.experiment {
            let explicit = e.ell_grid.is_some();
            let spaced = e.ell_min.is_some() || e.ell_max.is_some() || e.ell_points.is_some();
            if explicit && spaced {
                return Err(ConfigError::Invalid(
                    "use either ell_grid or ell_min/ell_max/ell_points, not both".into(),
                ));
            }
            if spaced && (e.ell_min.is_none() || e.ell_max.is_none() || e.ell_points.is_none()) {
                return Err(ConfigError::Invalid(
                    "log-spaced grids need all of ell_min, ell_max, ell_points".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn family(&self) -> DensityFamily {
        DensityFamily::new(self.target.family, self.target.scale.unwrap_or(1.0))
    }

    pub fn component_ref(&self) -> Option<ComponentRef> {
        self.component.as_ref().map(|c| match (c.finite_term, c.group) {
            (Some(j), _) => ComponentRef::FiniteTerm(j),
            (_, Some(i)) => ComponentRef::GroupMember(i),
            _ => unreachable!("validated"),
        })
    }

    pub fn regime(&self) -> ProposalRegime {
        self.proposal
            .as_ref()
            .map_or(ProposalRegime::Homogeneous, |p| p.mode)
    }

    /// Builds the scaling source (declared vector or spectrum request).
    pub fn scaling_source(&self) -> Result<ScalingSource, ConfigError> {
        if let Some(s) = &self.scaling {
            let finite = s
                .finite_terms
                .iter()
                .map(|t| OrderTerm::new(t.constant, t.exponent))
                .collect();
            let groups = s
                .groups
                .iter()
                .map(|g| GroupSpec {
                    constant: match (g.constant, g.inverse_mean) {
                        (Some(k), _) => ConstantModel::Fixed { k },
                        (_, Some(b)) => ConstantModel::Random { inverse_mean: b },
                        _ => unreachable!("validated"),
                    },
                    gamma: g.gamma,
                    card_coeff: g.card_coeff,
                    card_exponent: g.card_exponent,
                })
                .collect();
            // the component reference is rebound later if [component] is set;
            // default to the first group's bulk
            let component = self
                .component_ref()
                .unwrap_or(ComponentRef::GroupMember(0));
            let vector = ScalingVector::new(finite, groups, component)?;
            return Ok(ScalingSource::Declared(vector));
        }
        let s = self.spectrum.as_ref().expect("validated");
        let covariance = match s.covariance.as_str() {
            "intraclass" => CovarianceKind::Intraclass {
                diag: s.diag.ok_or_else(|| {
                    ConfigError::Invalid("intraclass spectrum needs diag".into())
                })?,
                offdiag: s.offdiag.ok_or_else(|| {
                    ConfigError::Invalid("intraclass spectrum needs offdiag".into())
                })?,
            },
            "hierarchical" => CovarianceKind::Hierarchical,
            "identity" => CovarianceKind::Identity,
            other => {
                return Err(ConfigError::Invalid(format!(
                    "unknown covariance kind {other:?} (expected intraclass, hierarchical or identity)"
                )))
            }
        };
        Ok(ScalingSource::Spectrum {
            covariance,
            d_grid: s.d_grid.clone(),
        })
    }

    /// Assembles the full experiment plan. `studies_override` replaces the
    /// config's study list (used by the single-study subcommands);
    /// `seed_override` replaces the seed.
    pub fn to_plan(
        &self,
        studies_override: Option<Vec<Study>>,
        seed_override: Option<u64>,
    ) -> Result<ExperimentPlan, ConfigError> {
        let e = self.experiment.as_ref().ok_or_else(|| {
            ConfigError::Invalid("this command needs an [experiment] section".into())
        })?;
        let ell_grid = match (&e.ell_grid, e.ell_min, e.ell_max, e.ell_points) {
            (Some(g), ..) => g.clone(),
            (None, Some(lo), Some(hi), Some(n)) => {
                if !(lo > 0.0 && hi > lo && n >= 2) {
                    return Err(ConfigError::Invalid(
                        "need 0 < ell_min < ell_max and ell_points >= 2".into(),
                    ));
                }
                let (lo, hi) = (lo.ln(), hi.ln());
                (0..n)
                    .map(|i| (lo + (hi - lo) * i as f64 / (n - 1) as f64).exp())
                    .collect()
            }
            _ => Vec::new(),
        };
        let studies = studies_override.unwrap_or_else(|| e.studies.clone());
        if studies.is_empty() {
            return Err(ConfigError::Invalid(
                "no studies requested (set [experiment] studies or use a study subcommand)".into(),
            ));
        }
        let mut record = RecordOptions::default();
        if let Some(dt) = e.trajectory_dt {
            record.trajectory_dt = dt;
        }
        if let Some(b) = e.trajectory_budget {
            record.trajectory_budget = b;
        }
        Ok(ExperimentPlan {
            family: self.family(),
            scaling: self.scaling_source()?,
            component: self.component_ref(),
            regime: self.regime(),
            studies,
            ell_grid,
            d_list: e.d_list.clone(),
            iterations: e.iterations,
            replicates: e.replicates,
            seed: seed_override.unwrap_or(e.seed),
            record,
            compare_ell: e.compare_ell,
            compare_dt: e.compare_dt.unwrap_or(0.01),
            roughness_draws: e.roughness_draws.unwrap_or(200),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema_version = 1

[target]
family = "normal"

[scaling]
finite_terms = [{ constant = 1.0, exponent = "-1" }]

[[scaling.groups]]
constant = 1.0
gamma = "0"
card_coeff = 1.0
card_exponent = "1"

[component]
group = 0
"#;

    #[test]
    fn parses_minimal_config() {
        let cfg = ConfigFile::from_str(MINIMAL).unwrap();
        let source = cfg.scaling_source().unwrap();
        match source {
            ScalingSource::Declared(v) => {
                assert_eq!(v.finite_terms().len(), 1);
                assert_eq!(v.finite_terms()[0].exponent, Exponent::from_integer(-1));
            }
            _ => panic!("expected declared vector"),
        }
        assert_eq!(cfg.regime(), ProposalRegime::Homogeneous);
    }

    #[test]
    fn rejects_unknown_keys_with_location() {
        let bad = MINIMAL.replace("card_coeff", "card_coefficient");
        let err = ConfigFile::from_str(&bad).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("card_coefficient"), "message was: {msg}");
    }

    #[test]
    fn rejects_float_exponents() {
        // exponents must be exact-fraction strings
        let bad = MINIMAL.replace("\"-1\"", "-1.0");
        assert!(ConfigFile::from_str(&bad).is_err());
    }

    #[test]
    fn parses_fractional_exponent_strings_exactly() {
        let cfg = ConfigFile::from_str(&MINIMAL.replace("\"-1\"", "\"-3/4\"")).unwrap();
        match cfg.scaling_source().unwrap() {
            ScalingSource::Declared(v) => {
                assert_eq!(v.finite_terms()[0].exponent, Exponent::new(-3, 4));
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn requires_exactly_one_scaling_source() {
        let none = "schema_version = 1\n[target]\nfamily = \"normal\"\n";
        assert!(ConfigFile::from_str(none).is_err());
        let both = format!(
            "{MINIMAL}\n[spectrum]\ncovariance = \"identity\"\nd_grid = [50, 100, 200, 400]\n"
        );
        assert!(ConfigFile::from_str(&both).is_err());
    }

    #[test]
    fn group_constant_is_exclusive_with_inverse_mean() {
        let bad = MINIMAL.replace("constant = 1.0\ngamma", "constant = 1.0\ninverse_mean = 2.0\ngamma");
        assert!(ConfigFile::from_str(&bad).is_err());
    }

    #[test]
    fn builds_log_spaced_ell_grid() {
        let cfg = format!(
            "{MINIMAL}\n[experiment]\nstudies = [\"sweep\"]\nell_min = 0.5\nell_max = 8.0\nell_points = 13\nd_list = [100]\niterations = 1000\n"
        );
        let cfg = ConfigFile::from_str(&cfg).unwrap();
        let plan = cfg.to_plan(None, None).unwrap();
        assert_eq!(plan.ell_grid.len(), 13);
        assert!((plan.ell_grid[0] - 0.5).abs() < 1e-12);
        assert!((plan.ell_grid[12] - 8.0).abs() < 1e-12);
        let ratio = plan.ell_grid[1] / plan.ell_grid[0];
        for w in plan.ell_grid.windows(2) {
            assert!((w[1] / w[0] - ratio).abs() < 1e-9);
        }
    }

    #[test]
    fn spectrum_config_resolves_kind() {
        let cfg = r#"
schema_version = 1

[target]
family = "normal"

[spectrum]
covariance = "hierarchical"
d_grid = [50, 100, 200, 400]
"#;
        let cfg = ConfigFile::from_str(cfg).unwrap();
        assert!(matches!(
            cfg.scaling_source().unwrap(),
            ScalingSource::Spectrum {
                covariance: CovarianceKind::Hierarchical,
                ..
            }
        ));
    }

    #[test]
    fn seed_and_study_overrides_apply() {
        let cfg = format!(
            "{MINIMAL}\n[experiment]\nell_grid = [1.0]\nd_list = [10]\niterations = 500\nseed = 7\n"
        );
        let cfg = ConfigFile::from_str(&cfg).unwrap();
        let plan = cfg
            .to_plan(Some(vec![Study::Simulate]), Some(99))
            .unwrap();
        assert_eq!(plan.seed, 99);
        assert_eq!(plan.studies, vec![Study::Simulate]);
        // no studies anywhere is an error
        assert!(cfg.to_plan(None, None).is_err());
    }
}
