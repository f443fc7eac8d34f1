use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use contract_sa::bounds::{AveragedRegime, ProblemConstants};
use contract_sa::envelope::EnvelopeSpec;
use contract_sa::harness::bound_curves::{bound_curve, BoundRequest, StepChoice};
use contract_sa::harness::config::{sha256_hex, ExperimentSpec};
use contract_sa::harness::experiments::{run_experiment, write_outputs};
use contract_sa::harness::output::write_atomic;
use contract_sa::harness::verify::{run_suite, Suite};
use contract_sa::norms::Norm;

/// Contractive stochastic approximation: experiments, property suites,
/// bound curves and envelope evaluation.
#[derive(Parser)]
#[command(name = "contract-sa", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment spec and write `<name>*.csv`, `<name>.svg` and `<name>.summary.toml`.
    Run {
        spec: PathBuf,
        /// Output directory; overrides the spec's output_dir, which overrides CONTRACT_SA_OUT.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run property suites; exits 1 if any property fails.
    Verify {
        #[arg(value_enum, required = true)]
        suites: Vec<SuiteArg>,
        #[arg(long, default_value_t = 20240601)]
        seed: u64,
    },
    /// Emit a bound curve as CSV.
    Bounds(BoundsArgs),
    /// Evaluate the envelope, its gradient and the sandwich check at a point.
    Envelope {
        /// Contraction norm: linf, l2, lp:P, logd or weighted:W1,W2,...
        #[arg(long = "c")]
        contraction: String,
        /// Smoothing norm (same syntax; not linf).
        #[arg(long = "s")]
        smoothing: String,
        #[arg(long)]
        mu: f64,
        /// Comma-separated point.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        x: Vec<f64>,
        #[arg(long)]
        tol: Option<f64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    All,
    Sandwich,
    Drift,
    Contraction,
    Noise,
    Lipschitz,
    Tightness,
}

#[derive(Clone, Copy, ValueEnum)]
enum Theorem {
    Theorem1,
    Corollary1,
    Corollary2,
    Theorem2,
    Theorem3,
    Theorem4,
    Theorem5a,
    Theorem5b,
}

#[derive(Clone, Copy, ValueEnum)]
enum RegimeArg {
    Constant,
    InvSqrt,
    InvK,
}

#[derive(Args)]
struct BoundsArgs {
    #[arg(value_enum)]
    theorem: Theorem,
    #[arg(long, default_value_t = 1000)]
    k_max: usize,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Dimension d of the log-dimension instantiation (theorem1, corollaries).
    #[arg(long)]
    dim: Option<usize>,
    /// TD(n) horizon.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    states: Option<usize>,
    /// Number of state-action pairs.
    #[arg(long)]
    pairs: Option<usize>,
    #[arg(long)]
    noise_a: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    noise_b: f64,
    /// Initial squared error ||x_0 - x*||^2.
    #[arg(long, default_value_t = 1.0)]
    e0: f64,
    /// Norm of the fixed point.
    #[arg(long, default_value_t = 1.0)]
    x_star_norm: f64,
    #[arg(long, conflicts_with = "eps_over_alpha2")]
    eps: Option<f64>,
    /// Stepsize as a multiple of 1/alpha2.
    #[arg(long)]
    eps_over_alpha2: Option<f64>,
    #[arg(long)]
    xi: Option<f64>,
    /// Initial distance to the fixed-point set (theorem2).
    #[arg(long)]
    distance: Option<f64>,
    #[arg(long, value_enum)]
    regime: Option<RegimeArg>,
}

fn need<T>(value: Option<T>, flag: &str) -> Result<T> {
    value.ok_or_else(|| anyhow!("--{flag} is required for this bound"))
}

impl BoundsArgs {
    fn step(&self) -> Result<StepChoice> {
        match (self.eps, self.eps_over_alpha2) {
            (Some(e), None) => Ok(StepChoice::Value(e)),
            (None, Some(c)) => Ok(StepChoice::OverAlpha2(c)),
            _ => bail!("give exactly one of --eps and --eps-over-alpha2"),
        }
    }

    fn problem(&self) -> Result<ProblemConstants> {
        Ok(ProblemConstants {
            initial_error_sq: self.e0,
            a: need(self.noise_a, "noise-a")?,
            b: self.noise_b,
            x_star_norm: self.x_star_norm,
        })
    }

    fn request(&self) -> Result<BoundRequest> {
        Ok(match self.theorem {
            Theorem::Theorem1 => BoundRequest::Theorem1 {
                gamma: need(self.gamma, "gamma")?,
                dim: need(self.dim, "dim")?,
                problem: self.problem()?,
                eps: self.step()?,
                xi: self.xi,
            },
            Theorem::Corollary1 => BoundRequest::Corollary1 {
                gamma: need(self.gamma, "gamma")?,
                dim: need(self.dim, "dim")?,
                problem: self.problem()?,
                eps: self.step()?,
            },
            Theorem::Corollary2 => BoundRequest::Corollary2 {
                gamma: need(self.gamma, "gamma")?,
                dim: need(self.dim, "dim")?,
                problem: self.problem()?,
                eps: self.step()?,
                xi: need(self.xi, "xi")?,
            },
            Theorem::Theorem2 => BoundRequest::Theorem2 {
                distance: need(self.distance, "distance")?,
                noise_a: need(self.noise_a, "noise-a")?,
                eps: need(self.eps, "eps")?,
                regime: match need(self.regime, "regime")? {
                    RegimeArg::Constant => AveragedRegime::Constant,
                    RegimeArg::InvSqrt => AveragedRegime::InvSqrt,
                    RegimeArg::InvK => AveragedRegime::InvK,
                },
            },
            Theorem::Theorem3 => BoundRequest::Theorem3 {
                gamma: need(self.gamma, "gamma")?,
                noise_a: need(self.noise_a, "noise-a")?,
                n_states: need(self.states, "states")?,
                initial_error_sq: self.e0,
                fixed_point_norm: self.x_star_norm,
            },
            Theorem::Theorem4 => BoundRequest::Theorem4 {
                beta: need(self.beta, "beta")?,
                n: need(self.n, "n")?,
                eps: need(self.eps, "eps")?,
                initial_error_sq: self.e0,
                fixed_point_norm: self.x_star_norm,
            },
            Theorem::Theorem5a => BoundRequest::Theorem5a {
                beta: need(self.beta, "beta")?,
                n_pairs: need(self.pairs, "pairs")?,
                eps: need(self.eps, "eps")?,
                initial_error_sq: self.e0,
                fixed_point_norm: self.x_star_norm,
            },
            Theorem::Theorem5b => BoundRequest::Theorem5b {
                beta: need(self.beta, "beta")?,
                n_pairs: need(self.pairs, "pairs")?,
                initial_error_sq: self.e0,
                fixed_point_norm: self.x_star_norm,
            },
        })
    }
}

fn parse_norm(text: &str, d: usize) -> Result<Norm> {
    let norm = match text.split_once(':') {
        None if text == "linf" => Norm::LInf,
        None if text == "l2" => Norm::l2(),
        None if text == "logd" => Norm::log_dimension_lp(d)?,
        Some(("lp", p)) => Norm::lp(p.parse().with_context(|| format!("bad exponent in {text:?}"))?)?,
        Some(("weighted", w)) => Norm::weighted_l2(
            w.split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .with_context(|| format!("bad weights in {text:?}"))?,
        )?,
        _ => bail!("unknown norm {text:?}; expected linf, l2, lp:P, logd or weighted:W1,W2,..."),
    };
    Ok(norm)
}

/// Errors from the experiment itself (bad spec, violated preconditions) are
/// usage errors; only failed verifications map to exit code 1.
enum Failure {
    Verification,
    Usage(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Usage(e)
    }
}

fn cmd_run(spec_path: &Path, out: Option<PathBuf>) -> Result<()> {
    let bytes = std::fs::read(spec_path).with_context(|| format!("reading {}", spec_path.display()))?;
    let text = std::str::from_utf8(&bytes).context("spec is not UTF-8")?;
    let spec = ExperimentSpec::from_toml(text).with_context(|| format!("parsing {}", spec_path.display()))?;
    let base = spec_path.parent().unwrap_or(Path::new("."));
    let dir = out
        .or_else(|| spec.output_dir.as_ref().map(|d| base.join(d)))
        .or_else(|| std::env::var_os("CONTRACT_SA_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    let output = run_experiment(&spec, base, &sha256_hex(&bytes)).with_context(|| format!("running {}", spec.name))?;
    for path in write_outputs(&output, &dir)? {
        println!("wrote {}", path.display());
    }
    for (name, value) in &output.summary.metrics {
        println!("{name} = {value}");
    }
    for note in &output.summary.notes {
        println!("note: {note}");
    }
    Ok(())
}

fn cmd_verify(suites: &[SuiteArg], seed: u64) -> Result<bool, Failure> {
    let mut selected: Vec<Suite> = Vec::new();
    for s in suites {
        match s {
            SuiteArg::All => selected.extend(Suite::ALL),
            SuiteArg::Sandwich => selected.push(Suite::Sandwich),
            SuiteArg::Drift => selected.push(Suite::Drift),
            SuiteArg::Contraction => selected.push(Suite::Contraction),
            SuiteArg::Noise => selected.push(Suite::Noise),
            SuiteArg::Lipschitz => selected.push(Suite::Lipschitz),
            SuiteArg::Tightness => selected.push(Suite::Tightness),
        }
    }
    selected.dedup();
    let mut all_passed = true;
    for suite in selected {
        let results = run_suite(suite, seed).with_context(|| format!("suite {suite}"))?;
        for r in results {
            all_passed &= r.passed;
            println!("{}", r.line());
        }
    }
    Ok(all_passed)
}

fn cmd_bounds(args: &BoundsArgs) -> Result<()> {
    let (table, info) = bound_curve(&args.request()?, args.k_max)?;
    for (name, value) in info {
        eprintln!("# {name} = {value}");
    }
    let csv = table.to_csv();
    match &args.out {
        Some(path) => write_atomic(path, csv.as_bytes())?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn cmd_envelope(c: &str, s: &str, mu: f64, x: &[f64], tol: Option<f64>) -> Result<()> {
    let spec = EnvelopeSpec::new(parse_norm(c, x.len())?, parse_norm(s, x.len())?, mu)?;
    let tol = tol.unwrap_or_else(|| spec.default_tol(x));
    let value = spec.evaluate(x, tol)?;
    let grad = spec.gradient(x, tol)?;
    println!("value = {:e}", value.value);
    println!("residual = {:e}", value.residual);
    println!("f = {:e}", spec.f(x)?);
    println!("minimizer = {:?}", value.minimizer);
    println!("gradient = {grad:?}");
    match spec.sandwich_check(x, tol) {
        Ok(check) => println!(
            "sandwich = {} (l = {}, u = {})",
            if check.lower_ok && check.upper_ok { "ok" } else { "violated" },
            check.constants.lower,
            check.constants.upper
        ),
        Err(e) => println!("sandwich = unavailable ({e})"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result: Result<(), Failure> = match cli.command {
        Command::Run { spec, out } => cmd_run(&spec, out).map_err(Failure::from),
        Command::Verify { suites, seed } => match cmd_verify(&suites, seed) {
            Ok(true) => Ok(()),
            Ok(false) => Err(Failure::Verification),
            Err(e) => Err(e),
        },
        Command::Bounds(args) => cmd_bounds(&args).map_err(Failure::from),
        Command::Envelope {
            contraction,
            smoothing,
            mu,
            x,
            tol,
        } => cmd_envelope(&contraction, &smoothing, mu, &x, tol).map_err(Failure::from),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verification) => {
            eprintln!("verification failed");
            ExitCode::from(1)
        }
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
