//! Command-line interface: one binary exposing the analyzer, the sampler
//! studies, and a fast self-test.
//!
//! Exit codes: 0 = success with the balance condition holding, 2 = success
//! with the balance condition violated, 3 = run completed but some cells
//! failed, 1 = error. Scripts can branch on the verdict directly.

use crate::asymptotics::{self, Balance, ComponentRef, ScalingAnalysis};
use crate::config::ConfigFile;
use crate::diffusion;
use crate::experiments::{self, plan_from_manifest, resolve_plan, Study, SCHEMA_VERSION};
use crate::exponent::Exponent;
use crate::target::{fisher_term, DensityFamily};
use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(
    name = "rwm-scaling",
    version,
    about = "Proposal-scaling analysis and validation for random-walk Metropolis"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Debug, Parser)]
struct RunArgs {
    /// Configuration file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for CSV/JSON artifacts and the manifest.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the configured master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for the cell pool (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Symbolic scaling analysis: alpha, balance verdict, roughness,
    /// optimal proposal constant and acceptance rate.
    Analyze {
        #[arg(long)]
        config: PathBuf,
        /// Output format on stdout.
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Plain chains over the (d, ell) grid; one diagnostics row per chain.
    Simulate(RunArgs),
    /// Acceptance/efficiency sweep over the ell grid with theory overlay.
    Sweep(RunArgs),
    /// Empirical optimum across dimensions versus the predicted optimum.
    Scan(RunArgs),
    /// Rescaled-chain autocorrelation against the limiting diffusion.
    Compare(RunArgs),
    /// All studies listed in the config's [experiment] studies.
    Run(RunArgs),
    /// Re-executes a previous run from its manifest, bit for bit.
    Rerun {
        /// Path to a manifest.json produced by an earlier run.
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Fast internal consistency checks (constants, analyzer oracle,
    /// quadrature); finishes in seconds.
    Selftest,
}

/// Runs the CLI and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints its own usage/diagnostics
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            1
        }
    }
}

fn init_threads(threads: Option<usize>) {
    if let Some(n) = threads {
        // ignore failure: the global pool may already exist in tests
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global();
    }
}

fn run(cli: Cli) -> Result<i32, String> {
    match cli.command {
        Command::Analyze { config, format } => cmd_analyze(&config, format),
        Command::Simulate(args) => cmd_study(args, Some(vec![Study::Simulate])),
        Command::Sweep(args) => cmd_study(args, Some(vec![Study::Sweep])),
        Command::Scan(args) => cmd_study(args, Some(vec![Study::Scan])),
        Command::Compare(args) => cmd_study(args, Some(vec![Study::Compare])),
        Command::Run(args) => cmd_study(args, None),
        Command::Rerun {
            manifest,
            out,
            threads,
        } => {
            init_threads(threads);
            let plan = plan_from_manifest(&manifest).map_err(|e| e.to_string())?;
            let resolved = resolve_plan(&plan).map_err(|e| e.to_string())?;
            let summary = experiments::run_plan(&resolved, &out).map_err(|e| e.to_string())?;
            println!("{}", summary.verdict_line);
            Ok(exit_code(&resolved.analysis, &summary.failures))
        }
        Command::Selftest => cmd_selftest(),
    }
}

fn exit_code(analysis: &ScalingAnalysis, failures: &[String]) -> i32 {
    if !failures.is_empty() {
        3
    } else if analysis.balance.verdict == Balance::Violated {
        2
    } else {
        0
    }
}

/// The analyze report as a JSON document.
pub fn analysis_json(analysis: &ScalingAnalysis, fisher: f64) -> serde_json::Value {
    serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "fisher": fisher,
        "analysis": analysis,
    })
}

fn cmd_analyze(config: &PathBuf, format: Format) -> Result<i32, String> {
    let cfg = ConfigFile::from_path(config).map_err(|e| e.to_string())?;
    let source = cfg.scaling_source().map_err(|e| e.to_string())?;
    let vector = match source {
        experiments::ScalingSource::Declared(v) => v,
        experiments::ScalingSource::Spectrum { covariance, d_grid } => {
            crate::target::spectrum::classify_spectrum(covariance.builder().as_ref(), &d_grid)
                .map_err(|e| e.to_string())?
                .vector
        }
    };
    let vector = match cfg.component_ref() {
        Some(c) => asymptotics::ScalingVector::new(
            vector.finite_terms().to_vec(),
            vector.groups().to_vec(),
            c,
        )
        .map_err(|e| e.to_string())?,
        None => vector,
    };
    let family = cfg.family();
    let fisher = fisher_term(&family).map_err(|e| e.to_string())?;
    let analysis =
        asymptotics::analyze(&vector, fisher, cfg.regime()).map_err(|e| e.to_string())?;

    match format {
        Format::Json => {
            println!(
                "{}",
                serde_json::to_string_pretty(&analysis_json(&analysis, fisher)).unwrap()
            );
        }
        Format::Csv => {
            println!("key,value");
            println!("balance,{}", if analysis.balance.holds() { "holds" } else { "violated" });
            println!("alpha,{}", analysis.alpha);
            println!("mixing_order_exponent,{}", analysis.mixing_order_exponent);
            println!("e_r_homogeneous,{}", analysis.e_r_homogeneous);
            println!("e_r_inhomogeneous,{}", analysis.e_r_inhomogeneous);
            println!("fisher,{fisher}");
            println!(
                "ell_hat,{}",
                analysis.ell_hat.map_or("".into(), |v| v.to_string())
            );
            println!(
                "aoar,{}",
                analysis.aoar.map_or("".into(), |v| v.to_string())
            );
        }
        Format::Text => {
            println!("normalized scaling vector: {}", analysis.normalized);
            println!("family fisher term: {fisher:.9}");
            println!("proposal exponent alpha = {}", analysis.alpha);
            let per_group: Vec<String> = analysis
                .alpha_per_group
                .iter()
                .map(|a| a.to_string())
                .collect();
            println!("per-group exponents: [{}]", per_group.join(", "));
            match analysis.balance.verdict {
                Balance::Holds => {
                    println!(
                        "balance: holds (largest finite exponent {} < largest group exponent {})",
                        analysis
                            .balance
                            .largest_finite_exponent
                            .map_or("-inf".into(), |e| e.to_string()),
                        analysis.balance.largest_group_exponent
                    );
                }
                Balance::Violated => {
                    println!(
                        "balance: violated (finite term of exponent {} matches or outgrows every \
                         group, max group exponent {}); no optimal acceptance rate is reported \
                         and the empirical optimum falls below 0.234",
                        analysis
                            .balance
                            .largest_finite_exponent
                            .map_or("-inf".into(), |e| e.to_string()),
                        analysis.balance.largest_group_exponent
                    );
                }
            }
            println!(
                "dominating groups: {:?}",
                analysis.dominating_groups.iter().collect::<Vec<_>>()
            );
            println!(
                "aggregate roughness: homogeneous {:.9}, inhomogeneous {:.9}",
                analysis.e_r_homogeneous, analysis.e_r_inhomogeneous
            );
            match (analysis.ell_hat, analysis.aoar) {
                (Some(ell), Some(aoar)) => {
                    println!("optimal proposal constant ell_hat = {ell:.6}");
                    println!("asymptotically optimal acceptance rate = {aoar:.6}");
                }
                _ => println!("optimal proposal constant: not reported (balance violated)"),
            }
            println!(
                "mixing order of the component of interest: O(d^{})",
                analysis.mixing_order_exponent
            );
        }
    }
    Ok(exit_code(&analysis, &[]))
}

fn cmd_study(args: RunArgs, studies: Option<Vec<Study>>) -> Result<i32, String> {
    init_threads(args.threads);
    let cfg = ConfigFile::from_path(&args.config).map_err(|e| e.to_string())?;
    let plan = cfg.to_plan(studies, args.seed).map_err(|e| e.to_string())?;
    let resolved = resolve_plan(&plan).map_err(|e| e.to_string())?;
    for w in &resolved.warnings {
        eprintln!("warning: {w}");
    }
    let summary = experiments::run_plan(&resolved, &args.out).map_err(|e| e.to_string())?;
    println!("{}", summary.verdict_line);
    for f in &summary.files {
        println!("wrote {}", f.display());
    }
    for f in &summary.failures {
        eprintln!("cell failure: {f}");
    }
    Ok(exit_code(&resolved.analysis, &summary.failures))
}

/// One self-test check.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// The fast acceptance checks behind `selftest`, parameterized over the
/// normal CDF so a perturbed implementation is detectable.
pub fn selftest_checks(cdf: fn(f64) -> f64) -> Vec<CheckResult> {
    let mut out = Vec::new();
    let mut push = |name: &'static str, passed: bool, detail: String| {
        out.push(CheckResult {
            name,
            passed,
            detail,
        })
    };

    // optimal constants from the supplied CDF
    let g = |u: f64| 2.0 * u * u * cdf(-u / 2.0);
    let (u_hat, _) = diffusion::golden_section_max(g, 0.0, 10.0, 1e-10);
    let aoar = 2.0 * cdf(-u_hat / 2.0);
    push(
        "unit maximizer in [2.37, 2.39]",
        (2.37..=2.39).contains(&u_hat),
        format!("u_hat = {u_hat:.6}"),
    );
    push(
        "optimal acceptance in [0.2330, 0.2350]",
        (0.2330..=0.2350).contains(&aoar),
        format!("aoar = {aoar:.6}"),
    );

    // fisher constants from quadrature
    let fisher_normal = fisher_term(&DensityFamily::standard_normal());
    let fisher_logistic = fisher_term(&DensityFamily::logistic());
    push(
        "normal fisher term = 1",
        matches!(&fisher_normal, Ok(v) if (v - 1.0).abs() < 1e-6),
        format!("{fisher_normal:?}"),
    );
    push(
        "logistic fisher term = 1/3",
        matches!(&fisher_logistic, Ok(v) if (v - 1.0 / 3.0).abs() < 1e-6),
        format!("{fisher_logistic:?}"),
    );

    // named worked examples
    let intraclass = |comp| {
        asymptotics::ScalingVector::new(
            vec![asymptotics::OrderTerm::new(1.0, Exponent::from_integer(-1))],
            vec![asymptotics::GroupSpec {
                constant: asymptotics::ConstantModel::Fixed { k: 1.0 },
                gamma: Exponent::ZERO,
                card_coeff: 1.0,
                card_exponent: Exponent::from_integer(1),
            }],
            comp,
        )
        .unwrap()
    };
    let bulk = asymptotics::analyze(
        &intraclass(ComponentRef::GroupMember(0)),
        1.0,
        asymptotics::ProposalRegime::Homogeneous,
    );
    push(
        "intraclass bulk: alpha 1, balance holds",
        matches!(&bulk, Ok(a) if a.alpha == Exponent::from_integer(1) && a.balance.holds()),
        format!("{:?}", bulk.map(|a| (a.alpha, a.balance.verdict))),
    );
    let first = asymptotics::analyze(
        &intraclass(ComponentRef::FiniteTerm(0)),
        1.0,
        asymptotics::ProposalRegime::Homogeneous,
    );
    push(
        "intraclass first component: alpha 2",
        matches!(&first, Ok(a) if a.alpha == Exponent::from_integer(2)),
        format!("{:?}", first.map(|a| a.alpha)),
    );
    let hierarchical = asymptotics::ScalingVector::new(
        vec![
            asymptotics::OrderTerm::new(1.0, Exponent::from_integer(1)),
            asymptotics::OrderTerm::new(1.0, Exponent::from_integer(-1)),
        ],
        vec![asymptotics::GroupSpec {
            constant: asymptotics::ConstantModel::Fixed { k: 1.0 },
            gamma: Exponent::ZERO,
            card_coeff: 1.0,
            card_exponent: Exponent::from_integer(1),
        }],
        ComponentRef::GroupMember(0),
    )
    .unwrap();
    let h = asymptotics::analyze(&hierarchical, 1.0, asymptotics::ProposalRegime::Homogeneous);
    push(
        "hierarchical orders: balance violated, no rate reported",
        matches!(&h, Ok(a) if !a.balance.holds() && a.aoar.is_none()),
        format!("{:?}", h.map(|a| a.balance.verdict)),
    );

    // analyzer vs numeric-limit oracle on seeded random vectors
    let mut rng = ChaCha8Rng::seed_from_u64(0x5e1f);
    let mut agree = true;
    let mut tested = 0;
    while tested < 40 {
        let Some(sv) = random_vector(&mut rng) else {
            continue;
        };
        tested += 1;
        let n = sv.normalize_component().unwrap();
        let report =
            asymptotics::brute_force_limits(&n, &[10_000, 100_000_000, 1_000_000_000_000], 0.1)
                .unwrap();
        if asymptotics::check_balance(&n).holds() != report.balance_holds()
            || !report.alpha_confirmed()
        {
            agree = false;
            break;
        }
    }
    push(
        "analyzer agrees with numeric-limit oracle (40 random vectors)",
        agree,
        format!("tested = {tested}"),
    );

    out
}

fn random_vector(rng: &mut ChaCha8Rng) -> Option<asymptotics::ScalingVector> {
    use rand::Rng;
    let exp = |rng: &mut ChaCha8Rng| {
        let den = rng.random_range(1..=4i64);
        Exponent::new(rng.random_range(-3 * den..=3 * den), den)
    };
    let n_finite = rng.random_range(0..=2usize);
    let finite: Vec<asymptotics::OrderTerm> = (0..n_finite)
        .map(|_| asymptotics::OrderTerm::new(rng.random_range(0.2..5.0), exp(rng)))
        .collect();
    let n_groups = rng.random_range(1..=3usize);
    let groups: Vec<asymptotics::GroupSpec> = (0..n_groups)
        .map(|_| asymptotics::GroupSpec {
            constant: asymptotics::ConstantModel::Fixed {
                k: rng.random_range(0.2..5.0),
            },
            gamma: exp(rng),
            card_coeff: rng.random_range(0.2..5.0),
            card_exponent: {
                let den = rng.random_range(1..=4i64);
                Exponent::new(rng.random_range(1..=3 * den), den)
            },
        })
        .collect();
    let pick = rng.random_range(0..finite.len() + groups.len());
    let comp = if pick < finite.len() {
        ComponentRef::FiniteTerm(pick)
    } else {
        ComponentRef::GroupMember(pick - finite.len())
    };
    let sv = asymptotics::ScalingVector::new(finite, groups, comp).ok()?;
    // keep the decisive gap well separated for the finite-d oracle
    if let Some(l1) = sv.largest_finite_exponent() {
        let gap = (l1 - sv.largest_group_exponent()).as_f64().abs();
        if gap != 0.0 && gap < 0.25 {
            return None;
        }
    }
    Some(sv)
}

fn cmd_selftest() -> Result<i32, String> {
    let checks = selftest_checks(crate::special::normal_cdf);
    let mut failed = 0;
    for c in &checks {
        println!(
            "{} {} ({})",
            if c.passed { "pass" } else { "FAIL" },
            c.name,
            c.detail
        );
        if !c.passed {
            failed += 1;
        }
    }
    if failed > 0 {
        eprintln!("{failed} of {} checks failed", checks.len());
        Ok(1)
    } else {
        println!("all {} checks passed", checks.len());
        Ok(0)
    }
}
