mod output;
mod plot;

use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use shrinktest::bounds::{run_suite, BoundCheckParams, BoundReport, Suite, Verdict};
use shrinktest::full_bayes::{FbEngine, GridSpec, HyperGrid, QUANTILE_LEVELS};
use shrinktest::oracle::{derive_oracle, oracle_asymptotic_risk, oracle_exact_errors, AsymptoticSequence, TwoGroupsParams};
use shrinktest::posterior::{mean_shrinkage_weight, posterior_mean_mu, PosteriorQuery};
use shrinktest::priors::check_invariants;
use shrinktest::rules::{PreparedProcedure, ProcedureKind, ProcedureSpec, TauRule};
use shrinktest::simulation::{run_mp_study_with_progress, SimConfig};
use shrinktest::{PriorConfig, QuadratureSettings, ShrinkagePriorSpec};

use output::{emit, fmt_f64, to_json, unix_time, write_manifest, CsvOut};

const SEED_ENV: &str = "SHRINKTEST_SEED";

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    Core(shrinktest::Error),
    Verification(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Io(_) => 1,
            CliError::Core(e) if e.is_numeric() => 2,
            CliError::Core(_) => 1,
            CliError::Verification(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Io(m) | CliError::Verification(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<shrinktest::Error> for CliError {
    fn from(e: shrinktest::Error) -> Self {
        CliError::Core(e)
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Parser)]
#[command(name = "shrinktest", version, about = "Sparse normal-means testing with global-local shrinkage priors")]
struct Cli {
    /// Worker threads for simulation and bound checks (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Suppress progress messages.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Inspect a prior.
    Priors {
        #[command(subcommand)]
        action: PriorsAction,
    },
    /// Shrinkage weight and posterior mean at one (x, τ, σ).
    Weight(WeightArgs),
    /// Weight and posterior mean over a grid of x.
    Profile(ProfileArgs),
    /// Bayes Oracle quantities and risks.
    Oracle(OracleArgs),
    /// Apply a testing procedure to data.
    Classify(ClassifyArgs),
    /// Monte Carlo misclassification study.
    Simulate(SimulateArgs),
    /// Grid posterior of the global scale.
    TauPosterior(TauPosteriorArgs),
    /// Numerically check the concentration and error bounds.
    VerifyBounds(VerifyArgs),
    /// Render a simulate CSV as an SVG chart.
    Plot(PlotArgs),
}

#[derive(Subcommand)]
enum PriorsAction {
    /// Print derived constants and invariant checks as JSON.
    Check(PriorArgs),
}

#[derive(Args, Clone)]
struct PriorArgs {
    /// tpbn, gdp, or a preset: horseshoe, strawderman-berger, neg, sdp.
    #[arg(long)]
    family: String,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
}

impl PriorArgs {
    fn config(&self) -> PriorConfig {
        PriorConfig {
            family: self.family.clone(),
            alpha: self.alpha,
            beta: self.beta,
        }
    }

    fn resolve(&self) -> CliResult<ShrinkagePriorSpec> {
        Ok(self.config().resolve()?)
    }
}

#[derive(Args)]
struct WeightArgs {
    #[command(flatten)]
    prior: PriorArgs,
    #[arg(long, allow_hyphen_values = true)]
    x: f64,
    #[arg(long)]
    tau: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
}

#[derive(Args)]
struct ProfileArgs {
    #[command(flatten)]
    prior: PriorArgs,
    #[arg(long)]
    tau: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 10.0)]
    xmax: f64,
    /// Number of intervals; the CSV has steps + 1 rows.
    #[arg(long, default_value_t = 200)]
    steps: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    m: usize,
    #[arg(long)]
    p: f64,
    #[arg(long)]
    psi2: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma2: f64,
}

#[derive(Args)]
struct ClassifyArgs {
    /// tuned-tau, empirical-bayes, full-bayes, oracle or bh.
    #[arg(long = "proc")]
    procedure: String,
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// One observation per row in the first column; a header row is allowed.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, conflicts_with = "tau_rule")]
    tau: Option<f64>,
    /// p, p^A or K*p.
    #[arg(long)]
    tau_rule: Option<String>,
    #[arg(long)]
    p: Option<f64>,
    /// Signal variance; defaults to 2 log m.
    #[arg(long)]
    psi2: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    sigma2: f64,
    #[arg(long)]
    bh_alpha: Option<f64>,
    #[arg(long, default_value_t = 2.0)]
    c1: f64,
    #[arg(long, default_value_t = 1.0)]
    c2: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TauPosteriorArgs {
    #[command(flatten)]
    prior: PriorArgs,
    #[arg(long)]
    data: PathBuf,
    /// Fix σ instead of integrating it out.
    #[arg(long)]
    sigma: Option<f64>,
    /// CSV of (tau, density); quantiles go to stdout as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    prior: PriorArgs,
    #[arg(long, default_value = "all")]
    suite: String,
    #[arg(long)]
    report: Option<PathBuf>,
    /// JSON file overriding the default check parameters.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Replace every slack and tolerance with this value.
    #[arg(long)]
    slack: Option<f64>,
    #[arg(long = "C", default_value_t = 1.0)]
    c: f64,
    #[arg(long, default_value_t = 0.5)]
    epsilon: f64,
    #[arg(long, default_value_t = 1.0)]
    k: f64,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "Misclassification probability")]
    title: String,
}

fn main() -> ExitCode {
    ExitCode::from(dispatch(std::env::args_os()))
}

/// Parse `argv` (program name first), run the subcommand and map the outcome
/// to an exit code.
pub fn dispatch<I, T>(argv: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    print!("{}", e.render());
                    0
                }
                _ => {
                    eprint!("{}", e.render());
                    1
                }
            };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        // a second call in the same process keeps the first pool
        if rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() && rayon::current_num_threads() != n {
            eprintln!("warning: thread pool already running with {} threads", rayon::current_num_threads());
        }
    }
    let quiet = cli.quiet;
    match cli.command {
        Command::Priors {
            action: PriorsAction::Check(a),
        } => priors_check(&a),
        Command::Weight(a) => weight(&a),
        Command::Profile(a) => profile(&a),
        Command::Oracle(a) => oracle(&a),
        Command::Classify(a) => classify(&a),
        Command::Simulate(a) => simulate(&a, quiet),
        Command::TauPosterior(a) => tau_posterior(&a),
        Command::VerifyBounds(a) => verify_bounds(&a, quiet),
        Command::Plot(a) => plot_cmd(&a),
    }
}

fn seed_override() -> CliResult<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Usage(format!("{SEED_ENV} must be an unsigned integer, got '{s}'"))),
        Err(_) => Ok(None),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("reading {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("parsing {}: {e}", path.display())))
}

/// First column of a CSV file, skipping one non-numeric header row.
fn read_data(path: &Path) -> CliResult<Vec<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Usage(format!("reading {}: {e}", path.display())))?;
    let mut xs = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Usage(format!("reading {}: {e}", path.display())))?;
        let Some(field) = rec.get(0).filter(|f| !f.is_empty()) else {
            continue;
        };
        match field.parse::<f64>() {
            Ok(v) if v.is_finite() => xs.push(v),
            Err(_) if i == 0 => {}
            _ => {
                return Err(CliError::Usage(format!(
                    "{} line {}: '{field}' is not a finite number",
                    path.display(),
                    i + 1
                )))
            }
        }
    }
    if xs.is_empty() {
        return Err(CliError::Usage(format!("{} holds no observations", path.display())));
    }
    Ok(xs)
}

#[derive(Serialize)]
struct PriorSummary {
    prior: String,
    family: shrinktest::Family,
    alpha: f64,
    beta: f64,
    a: f64,
    #[serde(rename = "K")]
    k: f64,
    l_limit: f64,
    l_sup: f64,
    invariants: shrinktest::priors::PriorInvariantReport,
    all_ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    warning: Option<String>,
}

fn priors_check(a: &PriorArgs) -> CliResult<()> {
    let spec = a.resolve()?;
    let inv = check_invariants(&spec)?;
    let summary = PriorSummary {
        prior: spec.to_string(),
        family: spec.family,
        alpha: spec.alpha,
        beta: spec.beta,
        a: spec.tail_index,
        k: spec.norm_const,
        l_limit: spec.l_limit,
        l_sup: spec.l_sup,
        all_ok: inv.all_ok(),
        invariants: inv,
        warning: spec.risk_theory_warning(),
    };
    emit(None, to_json(&summary)?.as_bytes())
}

#[derive(Serialize)]
struct WeightOut {
    prior: String,
    x: f64,
    tau: f64,
    sigma: f64,
    weight: f64,
    posterior_mean: f64,
}

fn weight(a: &WeightArgs) -> CliResult<()> {
    let spec = a.prior.resolve()?;
    let s = QuadratureSettings::default();
    let q = PosteriorQuery::new(a.x, a.tau, a.sigma)?;
    let out = WeightOut {
        prior: spec.to_string(),
        x: a.x,
        tau: a.tau,
        sigma: a.sigma,
        weight: mean_shrinkage_weight(&spec, &q, &s)?,
        posterior_mean: posterior_mean_mu(&spec, &q, &s)?,
    };
    emit(None, to_json(&out)?.as_bytes())
}

fn profile(a: &ProfileArgs) -> CliResult<()> {
    if a.steps == 0 || !(a.xmax > 0.0 && a.xmax.is_finite()) {
        return Err(CliError::Usage("need --steps ≥ 1 and a positive finite --xmax".into()));
    }
    let started = unix_time();
    let spec = a.prior.resolve()?;
    let s = QuadratureSettings::default();
    let mut csv = CsvOut::new(&["x", "weight", "posterior_mean"])?;
    for i in 0..=a.steps {
        let x = a.xmax * i as f64 / a.steps as f64;
        let q = PosteriorQuery::new(x, a.tau, a.sigma)?;
        let w = mean_shrinkage_weight(&spec, &q, &s)?;
        let mu = posterior_mean_mu(&spec, &q, &s)?;
        csv.row([fmt_f64(x), fmt_f64(w), fmt_f64(mu)])?;
    }
    let bytes = csv.finish()?;
    emit(a.out.as_deref(), &bytes)?;
    if let Some(p) = &a.out {
        #[derive(Serialize)]
        struct Cfg<'a> {
            prior: PriorConfig,
            tau: f64,
            sigma: f64,
            xmax: f64,
            steps: usize,
            resolved: &'a ShrinkagePriorSpec,
        }
        let cfg = Cfg {
            prior: a.prior.config(),
            tau: a.tau,
            sigma: a.sigma,
            xmax: a.xmax,
            steps: a.steps,
            resolved: &spec,
        };
        write_manifest("profile", cfg, None, started, &[(p, &bytes)])?;
    }
    Ok(())
}

#[derive(Serialize)]
struct Asymptotic {
    #[serde(rename = "C")]
    c: f64,
    t1: f64,
    t2: f64,
    risk: f64,
}

#[derive(Serialize)]
struct OracleOut {
    m: usize,
    p: f64,
    psi2: f64,
    sigma2: f64,
    u: f64,
    f: f64,
    v: f64,
    c2: f64,
    t1: f64,
    t2: f64,
    risk: f64,
    asymptotic: Asymptotic,
}

fn oracle(a: &OracleArgs) -> CliResult<()> {
    let params = TwoGroupsParams::new(a.m, a.p, a.psi2, a.sigma2)?;
    let oq = derive_oracle(&params)?;
    let exact = oracle_exact_errors(&params, &oq);
    // finite-m stand-in for the limit of log v / u
    let c = oq.v.ln() / oq.u;
    let asy = oracle_asymptotic_risk(&oq.with_limit(c), a.m, a.p)?;
    let out = OracleOut {
        m: a.m,
        p: a.p,
        psi2: a.psi2,
        sigma2: a.sigma2,
        u: oq.u,
        f: oq.f,
        v: oq.v,
        c2: oq.c2,
        t1: exact.t1,
        t2: exact.t2,
        risk: exact.risk,
        asymptotic: Asymptotic {
            c,
            t1: asy.t1,
            t2: asy.t2,
            risk: asy.risk,
        },
    };
    emit(None, to_json(&out)?.as_bytes())
}

fn classify(a: &ClassifyArgs) -> CliResult<()> {
    let started = unix_time();
    let kind: ProcedureKind = a.procedure.parse()?;
    let xs = read_data(&a.data)?;
    let tau_rule = match (a.tau, &a.tau_rule) {
        (Some(t), _) => Some(TauRule::Fixed { tau: t }),
        (None, Some(r)) => Some(r.parse::<TauRule>()?),
        (None, None) => None,
    };
    let spec = ProcedureSpec {
        prior: a.family.as_ref().map(|f| PriorConfig {
            family: f.clone(),
            alpha: a.alpha,
            beta: a.beta,
        }),
        tau_rule,
        c1: a.c1,
        c2: a.c2,
        bh_alpha: a.bh_alpha,
        ..ProcedureSpec::new(kind)
    };
    let m = xs.len();
    let params = match a.p {
        Some(p) => Some(TwoGroupsParams::new(
            m,
            p,
            a.psi2.unwrap_or(2.0 * (m.max(2) as f64).ln()),
            a.sigma2,
        )?),
        None => None,
    };
    let pp = PreparedProcedure::new(&spec, &QuadratureSettings::default())?;
    let dec = pp.run(&xs, params.as_ref())?;
    let mut csv = CsvOut::new(&["index", "x", "statistic", "reject"])?;
    for (i, ((x, s), r)) in xs.iter().zip(&dec.statistics).zip(&dec.rejections).enumerate() {
        csv.row([i.to_string(), fmt_f64(*x), fmt_f64(*s), u8::from(*r).to_string()])?;
    }
    let bytes = csv.finish()?;
    emit(a.out.as_deref(), &bytes)?;
    if let Some(p) = &a.out {
        #[derive(Serialize)]
        struct Cfg<'a> {
            procedure: &'a ProcedureSpec,
            data: String,
            data_sha256: String,
            params: Option<TwoGroupsParams>,
        }
        let raw = fs::read(&a.data).map_err(|e| CliError::Io(e.to_string()))?;
        let cfg = Cfg {
            procedure: &spec,
            data: a.data.display().to_string(),
            data_sha256: output::sha256_hex(&raw),
            params,
        };
        write_manifest("classify", cfg, None, started, &[(p, &bytes)])?;
    }
    Ok(())
}

fn simulate(a: &SimulateArgs, quiet: bool) -> CliResult<()> {
    let started = unix_time();
    let mut config: SimConfig = read_json(&a.config)?;
    if let Some(seed) = seed_override()? {
        config.seed = seed;
    }
    config.validate()?;
    let progress = |done: usize, total: usize| {
        if !quiet {
            eprintln!("simulate: p grid {done}/{total}");
        }
    };
    let study = run_mp_study_with_progress(&config, &progress)?;
    for d in &study.dropped {
        eprintln!(
            "warning: dropped {} replicate(s) at p = {}: {}",
            d.count,
            d.p,
            d.first_error.as_deref().unwrap_or("numeric failure")
        );
    }
    let mut csv = CsvOut::new(&["p", "procedure", "mp_mean", "mp_se", "n_reps", "m", "psi2", "seed"])?;
    for e in &study.estimates {
        csv.row([
            fmt_f64(e.p),
            e.procedure.clone(),
            fmt_f64(e.mp_mean),
            fmt_f64(e.mp_se),
            e.n_reps.to_string(),
            e.m.to_string(),
            fmt_f64(e.psi2),
            e.seed.to_string(),
        ])?;
    }
    let bytes = csv.finish()?;
    emit(Some(&a.out), &bytes)?;
    let seed = config.seed;
    write_manifest("simulate", &config, Some(seed), started, &[(&a.out, &bytes)])
}

fn tau_posterior(a: &TauPosteriorArgs) -> CliResult<()> {
    let started = unix_time();
    let spec = a.prior.resolve()?;
    let xs = read_data(&a.data)?;
    let gs = GridSpec::default();
    let grid = match a.sigma {
        Some(s) => HyperGrid::with_fixed_sigma((gs.tau_min, gs.tau_max), gs.n_tau, s)?,
        None => gs.build()?,
    };
    let engine = FbEngine::new(&spec, grid, &QuadratureSettings::default())?;
    let post = engine.posterior(&xs)?;
    post.check_bounds()?;
    let mut csv = CsvOut::new(&["tau", "density"])?;
    for (t, d) in post.tau_density() {
        csv.row([fmt_f64(t), fmt_f64(d)])?;
    }
    let bytes = csv.finish()?;

    #[derive(Serialize)]
    struct Quantile {
        level: f64,
        tau: f64,
    }
    #[derive(Serialize)]
    struct Summary {
        prior: String,
        n: usize,
        quantiles: Vec<Quantile>,
        tau_boundary_mass: f64,
    }
    let summary = Summary {
        prior: spec.to_string(),
        n: xs.len(),
        quantiles: QUANTILE_LEVELS
            .iter()
            .zip(post.tau_quantiles)
            .map(|(&level, tau)| Quantile { level, tau })
            .collect(),
        tau_boundary_mass: post.tau_boundary_mass,
    };
    match &a.out {
        Some(p) => {
            emit(Some(p), &bytes)?;
            emit(None, to_json(&summary)?.as_bytes())?;
            #[derive(Serialize)]
            struct Cfg {
                prior: PriorConfig,
                data: String,
                sigma: Option<f64>,
                grid: GridSpec,
            }
            let cfg = Cfg {
                prior: a.prior.config(),
                data: a.data.display().to_string(),
                sigma: a.sigma,
                grid: gs,
            };
            write_manifest("tau-posterior", cfg, None, started, &[(p, &bytes)])
        }
        None => emit(None, &bytes),
    }
}

fn verify_bounds(a: &VerifyArgs, quiet: bool) -> CliResult<()> {
    let started = unix_time();
    let spec = a.prior.resolve()?;
    let suite: Suite = a.suite.parse()?;
    let mut params: BoundCheckParams = match &a.params {
        Some(p) => read_json(p)?,
        None => BoundCheckParams::default(),
    };
    if let Some(s) = a.slack {
        params = params.with_uniform_slack(s);
    }
    if let Some(seed) = seed_override()? {
        params.seed = seed;
    }
    let seq = AsymptoticSequence::new(a.c, a.epsilon, a.k)?;
    let reports: Vec<BoundReport> = run_suite(&spec, suite, &seq, &params)?;
    if !quiet {
        for r in &reports {
            let v = if r.verdict == Verdict::Pass { "PASS" } else { "FAIL" };
            eprintln!("{v} {:<34} worst {:.4e} slack {}", r.check, r.worst_ratio, r.slack);
        }
    }
    let bytes = to_json(&reports)?.into_bytes();
    emit(a.report.as_deref(), &bytes)?;
    if let Some(p) = &a.report {
        #[derive(Serialize)]
        struct Cfg<'a> {
            prior: PriorConfig,
            suite: String,
            sequence: AsymptoticSequence,
            params: &'a BoundCheckParams,
        }
        let cfg = Cfg {
            prior: a.prior.config(),
            suite: suite.to_string(),
            sequence: seq,
            params: &params,
        };
        write_manifest("verify-bounds", cfg, Some(params.seed), started, &[(p, &bytes)])?;
    }
    let failed: Vec<&str> = reports.iter().filter(|r| !r.passed()).map(|r| r.check.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verification(format!("failed checks: {}", failed.join(", "))))
    }
}

fn plot_cmd(a: &PlotArgs) -> CliResult<()> {
    let started = unix_time();
    let mut rdr = csv::Reader::from_path(&a.input).map_err(|e| CliError::Usage(format!("reading {}: {e}", a.input.display())))?;
    let headers = rdr.headers().map_err(|e| CliError::Usage(e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Usage(format!("{} has no '{name}' column", a.input.display())))
    };
    let (ip, iproc, imp) = (col("p")?, col("procedure")?, col("mp_mean")?);
    let mut series = plot::Series::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::Usage(e.to_string()))?;
        let num = |i: usize| {
            rec.get(i)
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| CliError::Usage(format!("bad number in row {:?}", rec.position().map(|p| p.line()))))
        };
        let name = rec.get(iproc).unwrap_or("").to_string();
        series.entry(name).or_default().push((num(ip)?, num(imp)?));
    }
    if series.is_empty() {
        return Err(CliError::Usage(format!("{} has no rows", a.input.display())));
    }
    let svg = plot::render_svg(&series, &a.title);
    emit(Some(&a.out), svg.as_bytes())?;
    #[derive(Serialize)]
    struct Cfg {
        input: String,
        title: String,
    }
    let cfg = Cfg {
        input: a.input.display().to_string(),
        title: a.title.clone(),
    };
    write_manifest("plot", cfg, None, started, &[(&a.out, svg.as_bytes())])
}
