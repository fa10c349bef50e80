//! Batch front end for the return-time statistics crate.
//!
//! Four verbs, all driven by JSON config files and emitting machine-readable
//! reports (JSON) plus plot-ready tables (CSV):
//!
//! * `check`    — run the three index-family non-degeneracy checks over a
//!   list of horizons;
//! * `simulate` — run Monte Carlo experiments and compare the empirical
//!   laws against their Poisson/geometric references in total variation;
//! * `bound`    — evaluate (and optionally grid-optimize, or sweep) the
//!   explicit error bounds;
//! * `oracle`   — for i.i.d. instances, verify the oracle inequality chain
//!   `tv(exact law, Poisson) <= exact neighborhood sums <= closed form`.
//!
//! Exit codes: 0 everything passed; 1 an assertion failed (a check failed,
//! the oracle inequality was violated, or the requested bound is
//! mathematically infeasible); 2 the configuration was invalid.  Every
//! command is deterministic given its config, including under `--threads`.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use nonconv::bounds::{
    bound_geometric_process, bound_geometric_shift, bound_poisson_process, bound_poisson_shift,
    chen_stein_exact_iid, optimize_params, BoundBreakdown, BoundParams, ShiftTerms, TailForm,
};
use nonconv::par;
use nonconv::processes::{MixingProfile, ProcessModel};
use nonconv::q_families::QFamily;
use nonconv::shift_space::{ShiftModel, Word};
use nonconv::statistics::{
    exact_law_small, monte_carlo, tv_to_reference, ExperimentSpec, Mode, ReferenceLaw,
};

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;

#[derive(Parser)]
#[command(
    name = "nonconv",
    version,
    about = "Return-time statistics over nonconventional index arrays: \
             checks, simulation, explicit bounds, and exact oracles"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the index-family non-degeneracy checks over a list of horizons.
    Check(CommonArgs),
    /// Run Monte Carlo experiments and compare against reference laws.
    Simulate(SimulateArgs),
    /// Evaluate, optimize, or sweep the explicit error bounds.
    Bound(CommonArgs),
    /// Verify the exact Chen-Stein oracle inequality on i.i.d. instances.
    Oracle(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for reports (created if missing; default ".").
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (falls back to the NONCONV_THREADS environment
    /// variable, then to one per core).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Override the seed of every experiment in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the trial count of every experiment in the config.
    #[arg(long)]
    trials: Option<u64>,
}

/// Error carrying its process exit code.
struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn config(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }
}

impl From<nonconv::Error> for CliError {
    fn from(e: nonconv::Error) -> Self {
        use nonconv::Error::*;
        let code = match e {
            // Malformed or oversized requests.
            Config(_) | Intractable { .. } | PathTooShort { .. } | PsiUnavailable { .. }
            | NegativeIndex { .. } | IndexOverflow { .. } => EXIT_CONFIG,
            // Mathematically infeasible requests: the run happened, the
            // answer is "no".
            InfeasiblePsi { .. } | NoFeasibleParams { .. } => EXIT_FAILURE,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::config(format!("i/o: {e}"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_FAILURE),
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn run(cli: Cli) -> Result<bool, CliError> {
    match cli.command {
        Command::Check(args) => with_threads(&args, cmd_check),
        Command::Simulate(args) => {
            let overrides = (args.seed, args.trials);
            with_threads(&args.common, move |cfg, out| {
                cmd_simulate(cfg, out, overrides)
            })
        }
        Command::Bound(args) => with_threads(&args, cmd_bound),
        Command::Oracle(args) => with_threads(&args, cmd_oracle),
    }
}

/// Resolves the thread count (flag, then NONCONV_THREADS), prepares the
/// output directory, and runs the command inside the sized thread pool.
fn with_threads<F>(args: &CommonArgs, body: F) -> Result<bool, CliError>
where
    F: FnOnce(&Path, &Path) -> Result<bool, CliError> + Send,
{
    let threads = match args.threads {
        Some(t) => Some(t),
        None => match std::env::var("NONCONV_THREADS") {
            Ok(raw) => Some(raw.parse::<usize>().map_err(|_| {
                CliError::config(format!("NONCONV_THREADS must be a thread count, got {raw:?}"))
            })?),
            Err(_) => None,
        },
    };
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&out)?;
    let config = args.config.clone();
    par::with_thread_count(threads, move || body(&config, &out))
}

fn load_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let raw = fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&raw)
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(out: &Path, name: &str, value: &T) -> Result<PathBuf, CliError> {
    let path = out.join(name);
    let mut body = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::config(format!("serialization: {e}")))?;
    body.push('\n');
    fs::write(&path, body)?;
    Ok(path)
}

fn check_name(name: &str) -> Result<(), CliError> {
    if name.is_empty()
        || !name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'))
    {
        return Err(CliError::config(format!(
            "name {name:?} must be nonempty and use only alphanumerics, '.', '_', '-'"
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------- check --

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckConfig {
    qf: QFamily,
    #[serde(rename = "N_list")]
    n_list: Vec<u64>,
}

#[derive(Serialize)]
struct CheckAtN {
    #[serde(rename = "N")]
    n: u64,
    /// Largest multiplicity of a difference or level value.
    max_value_multiplicity: u64,
    separate_reading_pass: bool,
    /// Permutation with the most pair-system solutions, and that count.
    worst_permutation: Vec<usize>,
    pair_system_count: u64,
    pair_systems_pass: bool,
    nesting_pair_count: usize,
    nesting_pass: bool,
    pass: bool,
}

#[derive(Serialize)]
struct CheckReport {
    ell: usize,
    #[serde(rename = "K")]
    k: u64,
    results: Vec<CheckAtN>,
    all_pass: bool,
}

fn cmd_check(config: &Path, out: &Path) -> Result<bool, CliError> {
    let cfg: CheckConfig = load_config(config)?;
    cfg.qf.validate()?;
    if cfg.n_list.is_empty() {
        return Err(CliError::config("N_list must be nonempty"));
    }
    let mut results = Vec::new();
    for &n in &cfg.n_list {
        let i = cfg.qf.check_assumption_i(n)?;
        let ii = cfg.qf.check_assumption_ii(n)?;
        let iii = cfg.qf.check_assumption_iii(n)?;
        let pass = i.pass && ii.pass && iii.pass;
        println!(
            "N={n}: separate-reading max {} ({}), pair systems {} ({}), nesting pairs {} ({})",
            i.max_count,
            verdict(i.pass),
            ii.count,
            verdict(ii.pass),
            iii.pairs.len(),
            verdict(iii.pass),
        );
        results.push(CheckAtN {
            n,
            max_value_multiplicity: i.max_count,
            separate_reading_pass: i.pass,
            worst_permutation: ii.worst_permutation,
            pair_system_count: ii.count,
            pair_systems_pass: ii.pass,
            nesting_pair_count: iii.pairs.len(),
            nesting_pass: iii.pass,
            pass,
        });
    }
    let all_pass = results.iter().all(|r| r.pass);
    let report = CheckReport {
        ell: cfg.qf.ell,
        k: cfg.qf.k,
        results,
        all_pass,
    };
    write_json(out, "check_report.json", &report)?;
    println!("overall: {}", verdict(all_pass));
    Ok(all_pass)
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "pass"
    } else {
        "fail"
    }
}

// ------------------------------------------------------------- simulate --

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateConfig {
    experiments: Vec<NamedExperiment>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NamedExperiment {
    name: String,
    spec: ExperimentSpec,
}

#[derive(Serialize)]
struct SimulateReportEntry {
    name: String,
    mode: Mode,
    #[serde(rename = "N")]
    n: u64,
    trials: u64,
    seed: u64,
    reference: ReferenceLaw,
    /// Distance of the empirical law (conditional on stopping, in
    /// geometric mode) to the reference.
    tv: f64,
    /// Geometric mode: `tv` plus the censored fraction, the honest error
    /// bar once never-stopped trials are accounted for.
    #[serde(skip_serializing_if = "Option::is_none")]
    tv_plus_censored: Option<f64>,
    censored_trials: u64,
    censored_fraction: f64,
    pmf_file: String,
}

#[derive(Serialize)]
struct SimulateReport {
    experiments: Vec<SimulateReportEntry>,
}

fn cmd_simulate(
    config: &Path,
    out: &Path,
    overrides: (Option<u64>, Option<u64>),
) -> Result<bool, CliError> {
    let cfg: SimulateConfig = load_config(config)?;
    if cfg.experiments.is_empty() {
        return Err(CliError::config("experiments must be nonempty"));
    }
    let mut seen = std::collections::BTreeSet::new();
    for e in &cfg.experiments {
        check_name(&e.name)?;
        if !seen.insert(&e.name) {
            return Err(CliError::config(format!("duplicate name {:?}", e.name)));
        }
    }
    let (seed_override, trials_override) = overrides;
    let mut entries = Vec::new();
    let mut sweep_csv = String::from("name,N,tv,censored_fraction\n");
    for e in &cfg.experiments {
        let mut spec = e.spec.clone();
        if let Some(s) = seed_override {
            spec.seed = s;
        }
        if let Some(t) = trials_override {
            spec.trials = t;
        }
        let reference = spec.reference_law()?;
        let pmf = monte_carlo(&spec)?;
        let (tv, tv_plus_censored) = match spec.mode {
            Mode::Poisson => (tv_to_reference(&pmf.pmf(), &reference), None),
            Mode::Geometric => {
                let tv = tv_to_reference(&pmf.conditional_pmf(), &reference);
                (tv, Some(tv + pmf.censored_fraction()))
            }
        };
        let pmf_file = format!("{}.pmf.csv", e.name);
        fs::write(out.join(&pmf_file), pmf.to_csv())?;
        sweep_csv.push_str(&format!(
            "{},{},{},{}\n",
            e.name,
            spec.n,
            tv,
            pmf.censored_fraction()
        ));
        println!(
            "{}: N={} trials={} tv={:.6} censored={}",
            e.name, spec.n, spec.trials, tv, pmf.censored_trials
        );
        entries.push(SimulateReportEntry {
            name: e.name.clone(),
            mode: spec.mode,
            n: spec.n,
            trials: spec.trials,
            seed: spec.seed,
            reference,
            tv,
            tv_plus_censored,
            censored_trials: pmf.censored_trials,
            censored_fraction: pmf.censored_fraction(),
            pmf_file,
        });
    }
    fs::write(out.join("sweep.csv"), sweep_csv)?;
    write_json(out, "report.json", &SimulateReport { experiments: entries })?;
    Ok(true)
}

// ---------------------------------------------------------------- bound --

#[derive(Clone, Copy, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
enum BoundKind {
    PoissonProcess,
    GeometricProcess,
    PoissonShift,
    GeometricShift,
}

impl BoundKind {
    fn evaluator(self) -> fn(&BoundParams) -> nonconv::Result<BoundBreakdown> {
        match self {
            BoundKind::PoissonProcess => bound_poisson_process,
            BoundKind::GeometricProcess => bound_geometric_process,
            BoundKind::PoissonShift => bound_poisson_shift,
            BoundKind::GeometricShift => bound_geometric_shift,
        }
    }

    fn is_shift(self) -> bool {
        matches!(self, BoundKind::PoissonShift | BoundKind::GeometricShift)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BoundConfig {
    kind: BoundKind,
    base: BoundParams,
    #[serde(default)]
    shift: Option<ShiftConfig>,
    #[serde(default)]
    optimize: Option<Grids>,
    #[serde(default)]
    sweep: Vec<SweepPoint>,
}

#[derive(Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ShiftConfig {
    model: ShiftModel,
    v: String,
    #[serde(default)]
    w: Option<String>,
    #[serde(default)]
    tail_form: TailForm,
}

#[derive(Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct Grids {
    m_grid: Vec<u64>,
    r_grid: Vec<u64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepPoint {
    #[serde(rename = "N")]
    n: u64,
    #[serde(default)]
    phi_gamma: Option<f64>,
    #[serde(default)]
    phi_delta: Option<f64>,
    #[serde(default)]
    v: Option<String>,
    #[serde(default)]
    w: Option<String>,
    #[serde(default)]
    m_grid: Option<Vec<u64>>,
    #[serde(default)]
    r_grid: Option<Vec<u64>>,
}

fn build_shift_terms(
    cfg: &ShiftConfig,
    kind: BoundKind,
    v_override: Option<&str>,
    w_override: Option<&str>,
) -> Result<ShiftTerms, CliError> {
    let v = Word::parse(v_override.unwrap_or(&cfg.v))?;
    match kind {
        BoundKind::PoissonShift => Ok(ShiftTerms::poisson(&cfg.model, &v, cfg.tail_form)?),
        BoundKind::GeometricShift => {
            let w_raw = w_override
                .map(str::to_owned)
                .or_else(|| cfg.w.clone())
                .ok_or_else(|| {
                    CliError::config("geometric shift bounds need the stop word w")
                })?;
            let w = Word::parse(&w_raw)?;
            Ok(ShiftTerms::geometric(&cfg.model, &v, &w, cfg.tail_form)?)
        }
        _ => Err(CliError::config(
            "shift words were supplied for a process-source bound",
        )),
    }
}

fn cmd_bound(config: &Path, out: &Path) -> Result<bool, CliError> {
    let cfg: BoundConfig = load_config(config)?;
    let evaluate = cfg.kind.evaluator();

    let mut base = cfg.base.clone();
    if cfg.kind.is_shift() {
        if base.shift_terms.is_none() {
            let shift = cfg.shift.as_ref().ok_or_else(|| {
                CliError::config("shift bounds need a shift section (model and words)")
            })?;
            base.shift_terms = Some(build_shift_terms(shift, cfg.kind, None, None)?);
        }
    } else if cfg.shift.is_some() {
        return Err(CliError::config(
            "a shift section was supplied for a process-source bound",
        ));
    }

    if cfg.sweep.is_empty() {
        let breakdown = match &cfg.optimize {
            Some(grids) => optimize_params(evaluate, &base, &grids.m_grid, &grids.r_grid)?,
            None => evaluate(&base)?,
        };
        println!(
            "total {:.6e} at M={} R={}",
            breakdown.total, breakdown.params.m, breakdown.params.r
        );
        write_json(out, "breakdown.json", &breakdown)?;
        return Ok(true);
    }

    let mut sweep_csv = String::from("N,total,M,R\n");
    for (idx, point) in cfg.sweep.iter().enumerate() {
        let mut params = base.clone();
        params.n = point.n;
        if let Some(pg) = point.phi_gamma {
            params.phi_gamma = pg;
        }
        if let Some(pd) = point.phi_delta {
            params.phi_delta = pd;
        }
        if point.v.is_some() || point.w.is_some() {
            let shift = cfg.shift.as_ref().ok_or_else(|| {
                CliError::config("sweep overrides words but no shift section is present")
            })?;
            params.shift_terms = Some(build_shift_terms(
                shift,
                cfg.kind,
                point.v.as_deref(),
                point.w.as_deref(),
            )?);
        }
        let m_grid = point
            .m_grid
            .as_ref()
            .or(cfg.optimize.as_ref().map(|g| &g.m_grid))
            .ok_or_else(|| CliError::config("sweep points need m_grid (point or optimize)"))?;
        let r_grid = point
            .r_grid
            .as_ref()
            .or(cfg.optimize.as_ref().map(|g| &g.r_grid))
            .ok_or_else(|| CliError::config("sweep points need r_grid (point or optimize)"))?;
        let best = optimize_params(evaluate, &params, m_grid, r_grid)?;
        println!(
            "N={}: total {:.6e} at M={} R={}",
            point.n, best.total, best.params.m, best.params.r
        );
        sweep_csv.push_str(&format!(
            "{},{},{},{}\n",
            point.n, best.total, best.params.m, best.params.r
        ));
        write_json(out, &format!("bound_{:02}_N{}.json", idx, point.n), &best)?;
    }
    fs::write(out.join("sweep.csv"), sweep_csv)?;
    Ok(true)
}

// --------------------------------------------------------------- oracle --

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OracleConfig {
    instances: Vec<OracleInstance>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OracleInstance {
    name: String,
    model: ProcessModel,
    qf: QFamily,
    gamma: Vec<u8>,
    #[serde(rename = "N")]
    n: u64,
    #[serde(rename = "M")]
    m: u64,
    #[serde(rename = "R")]
    r: u64,
}

#[derive(Serialize)]
struct OracleResult {
    name: String,
    lambda_agg: f64,
    lambda_limit: f64,
    lambda_gap: f64,
    tv_exact_vs_poisson: f64,
    exact_bound: f64,
    closed_form_total: f64,
    /// `exact_bound - tv`: slack of the first inequality.
    margin_exact: f64,
    /// `closed_form_total - exact_bound`: slack of the second.
    margin_closed: f64,
    pass: bool,
}

fn cmd_oracle(config: &Path, out: &Path) -> Result<bool, CliError> {
    let cfg: OracleConfig = load_config(config)?;
    if cfg.instances.is_empty() {
        return Err(CliError::config("instances must be nonempty"));
    }
    let mut results = Vec::new();
    for inst in &cfg.instances {
        check_name(&inst.name)?;
        let spec = ExperimentSpec {
            mode: Mode::Poisson,
            source: nonconv::statistics::Source::Process(inst.model.clone()),
            qf: inst.qf.clone(),
            n: inst.n,
            gamma: Some(inst.gamma.clone()),
            delta: None,
            v: None,
            w: None,
            trials: 1,
            seed: 0,
        };
        let exact = exact_law_small(&spec)?;
        let cs = chen_stein_exact_iid(&inst.model, &inst.qf, &inst.gamma, inst.n, inst.r)?;
        let closed = bound_poisson_process(&BoundParams {
            n: inst.n,
            m: inst.m,
            r: inst.r,
            ell: inst.qf.ell as u32,
            k: inst.qf.k,
            phi_gamma: inst.model.phi_of(&inst.gamma)?,
            phi_delta: 0.0,
            psi: MixingProfile::Zero,
            shift_terms: None,
        })?;
        let tv = tv_to_reference(
            &exact.pmf,
            &ReferenceLaw::Poisson {
                lambda: cs.lambda_agg,
            },
        );
        let pass = tv <= cs.agg_bound && cs.agg_bound <= closed.total;
        if pass {
            println!(
                "{}: inequality holds (tv {:.3e} <= exact {:.3e} <= closed-form {:.3e})",
                inst.name, tv, cs.agg_bound, closed.total
            );
        } else {
            println!(
                "{}: VIOLATION (tv {:.6e}, exact {:.6e}, closed-form {:.6e})",
                inst.name, tv, cs.agg_bound, closed.total
            );
        }
        results.push(OracleResult {
            name: inst.name.clone(),
            lambda_agg: cs.lambda_agg,
            lambda_limit: cs.lambda_limit,
            lambda_gap: cs.lambda_gap,
            tv_exact_vs_poisson: tv,
            exact_bound: cs.agg_bound,
            closed_form_total: closed.total,
            margin_exact: cs.agg_bound - tv,
            margin_closed: closed.total - cs.agg_bound,
            pass,
        });
    }
    let all_pass = results.iter().all(|r| r.pass);
    write_json(out, "oracle_report.json", &results)?;
    println!("overall: {}", verdict(all_pass));
    Ok(all_pass)
}
