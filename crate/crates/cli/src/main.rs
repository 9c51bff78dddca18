//! `adtape`: record the case studies, run the adjoint strategies, verify
//! against finite differences, dump tapes and benchmark memory use.

mod config;

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use adtape::adjoint::{max_rel_error, propagate};
use adtape::cases::{BsFd, Burgers, Intro, LiborMc, Problem, PROBLEM_IDS};
use adtape::metrics::{emit_report, MemoryReport};
use adtape::program::{fd_gradient, record, Recording};
use adtape::{
    AdjointError, Mode, Program, ProgramError, StoreConfig, StoreError, Strategy, Tape, TapeError,
};
use clap::{Args, Parser, Subcommand, ValueEnum};

use config::ConfigFile;

/// Largest relative disagreement tolerated between the L-value sweep and the
/// flat sweep under `--strategy all`.
const CROSS_CHECK_TOL: f64 = 1e-12;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Program(#[from] ProgramError),
    #[error(transparent)]
    Adjoint(#[from] AdjointError),
    #[error(transparent)]
    Tape(#[from] TapeError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    /// Gradients disagree; reported after the normal output.
    #[error("{0}")]
    Check(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Check(_) => 1,
            _ => 2,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "adtape",
    version,
    about = "Reverse-mode AD with compact adjoint storage"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Record, sweep and report memory use.
    Run(RunArgs),
    /// Compare adjoint gradients with central differences.
    Verify(VerifyArgs),
    /// Print the tape streams, optionally as a graph.
    Dump(DumpArgs),
    /// Run every case study under every strategy.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StrategyArg {
    Flat,
    Bandwidth,
    Lvalue,
    All,
}

impl StrategyArg {
    fn strategies(self) -> Vec<Strategy> {
        match self {
            StrategyArg::Flat => vec![Strategy::Flat],
            StrategyArg::Bandwidth => vec![Strategy::Bandwidth],
            StrategyArg::Lvalue => vec![Strategy::LValue],
            StrategyArg::All => Strategy::ALL.to_vec(),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
enum Format {
    #[default]
    Table,
    Structured,
}

#[derive(Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
enum ModeArg {
    #[default]
    Dag,
    Dcg,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Dag => Mode::Dag,
            ModeArg::Dcg => Mode::Dcg,
        }
    }
}

#[derive(Args, Default)]
struct ProblemArgs {
    /// Case study: intro, bs_mc, bs_fd, burgers or libor_mc.
    #[arg(value_name = "PROBLEM")]
    positional: Option<String>,
    #[arg(long = "problem", value_name = "PROBLEM")]
    problem: Option<String>,
    /// `key = value` file with defaults for any long flag.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Monte Carlo paths (bs_mc, libor_mc).
    #[arg(long)]
    paths: Option<usize>,
    /// Time steps per path (bs_mc).
    #[arg(long)]
    steps: Option<usize>,
    /// Grid as SPACExTIME (bs_fd, burgers).
    #[arg(long, value_name = "NSxNT")]
    grid: Option<String>,
    /// Spatial points (burgers).
    #[arg(long)]
    nx: Option<usize>,
    /// Time steps (burgers).
    #[arg(long)]
    nt: Option<usize>,
    /// Time step (burgers).
    #[arg(long, allow_hyphen_values = true)]
    dt: Option<f64>,
    /// Viscosity (burgers).
    #[arg(long, allow_hyphen_values = true)]
    nu: Option<f64>,
    /// Forward rates (libor_mc).
    #[arg(long)]
    rates: Option<usize>,
    /// Loop length (intro).
    #[arg(long)]
    length: Option<usize>,
    /// Random seed (bs_mc, libor_mc).
    #[arg(long)]
    seed: Option<u64>,
    /// Evaluation point, comma separated.
    #[arg(long, value_name = "X1,X2,...", allow_hyphen_values = true)]
    at: Option<String>,
}

#[derive(Args, Default, Clone)]
struct StoreArgs {
    /// Entries per tape block.
    #[arg(long)]
    block_entries: Option<usize>,
    /// Resident blocks per stream before spilling to disk.
    #[arg(long)]
    budget_blocks: Option<usize>,
    /// Read the next block ahead during the reverse sweep.
    #[arg(long)]
    prefetch: bool,
    /// Directory for spilled blocks.
    #[arg(long)]
    spill_dir: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[command(flatten)]
    store: StoreArgs,
    /// flat, bandwidth, lvalue or all [default: all]
    #[arg(long, value_enum)]
    strategy: Option<StrategyArg>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Also compare against central differences.
    #[arg(long)]
    check: bool,
    /// Relative finite difference step for --check.
    #[arg(long, allow_hyphen_values = true)]
    fd_step: Option<f64>,
    /// Output adjoint seed, comma separated; defaults to all ones.
    #[arg(long, value_name = "Y1,Y2,...", allow_hyphen_values = true)]
    ybar: Option<String>,
    /// Write the recorded tape to FILE (single strategy only).
    #[arg(long, value_name = "FILE")]
    save: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[command(flatten)]
    store: StoreArgs,
    /// flat, bandwidth, lvalue or all [default: all]
    #[arg(long, value_enum)]
    strategy: Option<StrategyArg>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Relative finite difference step.
    #[arg(long, allow_hyphen_values = true)]
    fd_step: Option<f64>,
    /// Override the problem's tolerance.
    #[arg(long, allow_hyphen_values = true)]
    tolerance: Option<f64>,
    #[arg(long, value_name = "Y1,Y2,...", allow_hyphen_values = true)]
    ybar: Option<String>,
}

#[derive(Args)]
struct DumpArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[command(flatten)]
    store: StoreArgs,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Also print a DOT rendering of the tape.
    #[arg(long)]
    dot: bool,
    /// Dump a saved tape instead of recording.
    #[arg(long, value_name = "FILE")]
    load: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Case studies to run; all when empty.
    #[arg(value_name = "PROBLEM")]
    problems: Vec<String>,
    #[command(flatten)]
    store: StoreArgs,
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long)]
    check: bool,
}

/// Everything resolved from flags plus the optional config file.
struct Setup {
    problem: Problem,
    point: Vec<f64>,
    store: StoreConfig,
}

fn parse_list(flag: &str, text: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|e| CliError::Usage(format!("--{flag}: {t:?}: {e}")))
        })
        .collect()
}

fn parse_grid(text: &str) -> Result<(usize, usize), CliError> {
    let bad = || CliError::Usage(format!("--grid expects NSxNT, got {text:?}"));
    let (a, b) = text.split_once(['x', 'X']).ok_or_else(bad)?;
    Ok((
        a.trim().parse().map_err(|_| bad())?,
        b.trim().parse().map_err(|_| bad())?,
    ))
}

fn open_config(path: &Option<PathBuf>) -> Result<ConfigFile, CliError> {
    match path {
        Some(p) => ConfigFile::load(p),
        None => Ok(ConfigFile::default()),
    }
}

/// Fill unset problem flags from the config file.
fn merge_problem(args: &mut ProblemArgs, cfg: &mut ConfigFile) -> Result<(), CliError> {
    cfg.fill("problem", &mut args.problem)?;
    cfg.fill("paths", &mut args.paths)?;
    cfg.fill("steps", &mut args.steps)?;
    cfg.fill("grid", &mut args.grid)?;
    cfg.fill("nx", &mut args.nx)?;
    cfg.fill("nt", &mut args.nt)?;
    cfg.fill("dt", &mut args.dt)?;
    cfg.fill("nu", &mut args.nu)?;
    cfg.fill("rates", &mut args.rates)?;
    cfg.fill("length", &mut args.length)?;
    cfg.fill("seed", &mut args.seed)?;
    cfg.fill("at", &mut args.at)
}

fn merge_store(args: &mut StoreArgs, cfg: &mut ConfigFile) -> Result<(), CliError> {
    cfg.fill("block_entries", &mut args.block_entries)?;
    cfg.fill("budget_blocks", &mut args.budget_blocks)?;
    cfg.fill("spill_dir", &mut args.spill_dir)?;
    if let Some(p) = cfg.take::<bool>("prefetch")? {
        args.prefetch |= p;
    }
    Ok(())
}

fn store_config(args: &StoreArgs) -> Result<StoreConfig, CliError> {
    let mut config = StoreConfig::in_memory();
    if let Some(be) = args.block_entries {
        config.block_entries = be;
    }
    config.budget_blocks = args.budget_blocks;
    config.prefetch = args.prefetch;
    config.spill_dir = args.spill_dir.clone();
    config.validate()?;
    Ok(config)
}

fn build_problem(args: &ProblemArgs) -> Result<Problem, CliError> {
    let id = match (&args.positional, &args.problem) {
        (Some(a), Some(b)) if a != b => {
            return Err(CliError::Usage(format!("problem given twice: {a} and {b}")))
        }
        (Some(p), _) | (None, Some(p)) => p.as_str(),
        (None, None) => {
            return Err(CliError::Usage(format!(
                "no problem given; choose one of {}",
                PROBLEM_IDS.join(", ")
            )))
        }
    };
    let mut problem = Problem::desk(id).ok_or_else(|| {
        CliError::Usage(format!(
            "unknown problem {id:?}; choose one of {}",
            PROBLEM_IDS.join(", ")
        ))
    })?;

    let set: [(&str, bool); 10] = [
        ("paths", args.paths.is_some()),
        ("steps", args.steps.is_some()),
        ("grid", args.grid.is_some()),
        ("nx", args.nx.is_some()),
        ("nt", args.nt.is_some()),
        ("dt", args.dt.is_some()),
        ("nu", args.nu.is_some()),
        ("rates", args.rates.is_some()),
        ("length", args.length.is_some()),
        ("seed", args.seed.is_some()),
    ];
    let accepted: &[&str] = match problem {
        Problem::Intro(_) => &["length"],
        Problem::BsMc(_) => &["paths", "steps", "seed"],
        Problem::BsFd(_) => &["grid"],
        Problem::Burgers(_) => &["grid", "nx", "nt", "dt", "nu"],
        Problem::Libor(_) => &["paths", "rates", "seed"],
    };
    if let Some((flag, _)) = set.iter().find(|(f, on)| *on && !accepted.contains(f)) {
        return Err(CliError::Usage(format!("--{flag} does not apply to {id}")));
    }

    match &mut problem {
        Problem::Intro(p) => {
            if let Some(l) = args.length {
                *p = Intro { l, ..p.clone() };
            }
        }
        Problem::BsMc(p) => {
            if let Some(n) = args.paths {
                p.paths = n;
            }
            if let Some(s) = args.steps {
                p.steps = s;
            }
            if let Some(s) = args.seed {
                p.seed = s;
            }
        }
        Problem::BsFd(p) => {
            if let Some(g) = &args.grid {
                let (ns, nt) = parse_grid(g)?;
                *p = BsFd::with_grid(ns, nt);
            }
        }
        Problem::Burgers(p) => {
            if args.grid.is_some() && (args.nx.is_some() || args.nt.is_some()) {
                return Err(CliError::Usage("use either --grid or --nx/--nt".into()));
            }
            let (nx, nt) = match &args.grid {
                Some(g) => parse_grid(g)?,
                None => (args.nx.unwrap_or(p.nx), args.nt.unwrap_or(p.nt)),
            };
            if nx == 0 {
                return Err(CliError::Usage(
                    "burgers needs at least one grid point".into(),
                ));
            }
            let mut b = Burgers::with_grid(nx, nt);
            if let Some(dt) = args.dt {
                b.dt = dt;
            }
            if let Some(nu) = args.nu {
                b.nu = nu;
            }
            *p = b;
        }
        Problem::Libor(p) => {
            let rates = args.rates.unwrap_or(p.rates);
            let paths = args.paths.unwrap_or(p.paths);
            let seed = args.seed.unwrap_or(p.seed);
            *p = LiborMc {
                seed,
                ..LiborMc::with_size(rates, paths)
            };
        }
    }
    Ok(problem)
}

fn setup(
    args: &mut ProblemArgs,
    store: &mut StoreArgs,
    cfg: &mut ConfigFile,
) -> Result<Setup, CliError> {
    merge_problem(args, cfg)?;
    merge_store(store, cfg)?;
    let problem = build_problem(args)?;
    let point = match &args.at {
        Some(text) => parse_list("at", text)?,
        None => problem.default_point(),
    };
    problem.check_inputs(&point)?;
    Ok(Setup {
        problem,
        point,
        store: store_config(store)?,
    })
}

fn fill_enum<T: ValueEnum>(
    cfg: &mut ConfigFile,
    key: &str,
    slot: &mut Option<T>,
) -> Result<(), CliError> {
    if let Some(text) = cfg.take::<String>(key)? {
        let value = T::from_str(&text, true)
            .map_err(|e| CliError::Usage(format!("config key {key}: {e}")))?;
        slot.get_or_insert(value);
    }
    Ok(())
}

fn seed_for(ybar: &Option<Vec<f64>>, m: usize) -> Vec<f64> {
    ybar.clone().unwrap_or_else(|| vec![1.0; m])
}

fn check_fd_step(h: f64) -> Result<f64, CliError> {
    if h.is_finite() && h > 0.0 {
        Ok(h)
    } else {
        Err(CliError::Usage(format!(
            "--fd-step must be positive and finite, got {h}"
        )))
    }
}

/// One strategy on a freshly recorded tape of its preferred mode.
fn run_strategy(
    setup: &Setup,
    strategy: Strategy,
    ybar: &Option<Vec<f64>>,
) -> Result<(Recording, MemoryReport, Vec<f64>), CliError> {
    let rec = record(
        &setup.problem,
        &setup.point,
        strategy.preferred_mode(),
        setup.store.clone(),
    )?;
    let seed = seed_for(ybar, rec.outputs.len());
    let start = Instant::now();
    let gradient = propagate(strategy, &rec.tape, &seed)?;
    let sweep = start.elapsed().as_secs_f64();
    let report = MemoryReport::new(setup.problem.id(), strategy, rec.tape.stats())
        .with_timing(rec.record_seconds, sweep)
        .with_gradient(gradient.clone());
    Ok((rec, report, gradient))
}

fn save_tape(tape: &Tape, path: &PathBuf) -> Result<(), CliError> {
    let file = File::create(path).map_err(|source| CliError::Io {
        path: path.clone(),
        source,
    })?;
    let mut w = BufWriter::new(file);
    tape.write_to(&mut w)?;
    w.flush().map_err(|source| CliError::Io {
        path: path.clone(),
        source,
    })
}

fn print(text: &str) {
    print!("{text}");
    if !text.ends_with('\n') {
        println!();
    }
}

fn cmd_run(mut args: RunArgs) -> Result<(), CliError> {
    let mut cfg = open_config(&args.problem.config)?;
    let setup = setup(&mut args.problem, &mut args.store, &mut cfg)?;
    cfg.fill("fd_step", &mut args.fd_step)?;
    cfg.fill("ybar", &mut args.ybar)?;
    fill_enum(&mut cfg, "format", &mut args.format)?;
    fill_enum(&mut cfg, "strategy", &mut args.strategy)?;
    if let Some(c) = cfg.take::<bool>("check")? {
        args.check |= c;
    }
    cfg.finish()?;

    let strategy = args.strategy.unwrap_or(StrategyArg::All);
    let strategies = strategy.strategies();
    if args.save.is_some() && strategies.len() != 1 {
        return Err(CliError::Usage("--save needs a single --strategy".into()));
    }
    let ybar = args
        .ybar
        .as_deref()
        .map(|t| parse_list("ybar", t))
        .transpose()?;
    let h = check_fd_step(args.fd_step.unwrap_or(setup.problem.fd_step()))?;

    let mut reports = Vec::new();
    let mut gradients = Vec::new();
    for &strategy in &strategies {
        let (rec, mut report, gradient) = run_strategy(&setup, strategy, &ybar)?;
        if let Some(path) = &args.save {
            save_tape(&rec.tape, path)?;
        }
        if args.check {
            let seed = seed_for(&ybar, rec.outputs.len());
            let fd = fd_gradient(&setup.problem, &setup.point, &seed, h)?;
            report = report.with_grad_check(max_rel_error(&gradient, &fd), h);
        }
        reports.push(report);
        gradients.push((strategy, gradient));
    }
    print(&emit_report(
        &reports,
        args.format == Some(Format::Structured),
    ));

    if strategy == StrategyArg::All {
        cross_check(&gradients)?;
    }
    if args.check {
        let tol = setup.problem.tolerance();
        if let Some(r) = reports.iter().find(|r| {
            r.grad_check
                .as_ref()
                .is_some_and(|g| g.max_rel_err.is_nan() || g.max_rel_err > tol)
        }) {
            return Err(CliError::Check(format!(
                "{} {}: finite difference error exceeds {tol:e}",
                r.problem, r.strategy
            )));
        }
    }
    Ok(())
}

/// Flat and bandwidth sweep the same tape in the same order and must agree
/// bitwise; the L-value sweep reads a different tape.
fn cross_check(gradients: &[(Strategy, Vec<f64>)]) -> Result<(), CliError> {
    let find = |s: Strategy| gradients.iter().find(|(t, _)| *t == s).map(|(_, g)| g);
    let (Some(flat), Some(band), Some(lv)) = (
        find(Strategy::Flat),
        find(Strategy::Bandwidth),
        find(Strategy::LValue),
    ) else {
        return Ok(());
    };
    let same_bits = flat.len() == band.len()
        && flat
            .iter()
            .zip(band)
            .all(|(a, b)| a.to_bits() == b.to_bits());
    if !same_bits {
        return Err(CliError::Check(
            "gradient mismatch: flat and bandwidth sweeps differ".into(),
        ));
    }
    let err = max_rel_error(lv, flat);
    if flat.len() != lv.len() || err.is_nan() || err > CROSS_CHECK_TOL {
        return Err(CliError::Check(format!(
            "gradient mismatch: lvalue differs from flat by {err:e}"
        )));
    }
    Ok(())
}

fn cmd_verify(mut args: VerifyArgs) -> Result<(), CliError> {
    let mut cfg = open_config(&args.problem.config)?;
    let setup = setup(&mut args.problem, &mut args.store, &mut cfg)?;
    cfg.fill("fd_step", &mut args.fd_step)?;
    cfg.fill("tolerance", &mut args.tolerance)?;
    cfg.fill("ybar", &mut args.ybar)?;
    fill_enum(&mut cfg, "format", &mut args.format)?;
    fill_enum(&mut cfg, "strategy", &mut args.strategy)?;
    cfg.finish()?;

    let h = check_fd_step(args.fd_step.unwrap_or(setup.problem.fd_step()))?;
    let tol = args.tolerance.unwrap_or(setup.problem.tolerance());
    if !(tol.is_finite() && tol > 0.0) {
        return Err(CliError::Usage(format!(
            "--tolerance must be positive, got {tol}"
        )));
    }
    let ybar = args
        .ybar
        .as_deref()
        .map(|t| parse_list("ybar", t))
        .transpose()?;

    let mut fd: Option<Vec<f64>> = None;
    let mut reports = Vec::new();
    let mut failed = Vec::new();
    let mut lines = String::new();
    for strategy in args.strategy.unwrap_or(StrategyArg::All).strategies() {
        let (rec, report, gradient) = run_strategy(&setup, strategy, &ybar)?;
        let reference = match &fd {
            Some(r) => r,
            None => {
                let seed = seed_for(&ybar, rec.outputs.len());
                fd.insert(fd_gradient(&setup.problem, &setup.point, &seed, h)?)
            }
        };
        let err = max_rel_error(&gradient, reference);
        let pass = err <= tol;
        if !pass {
            failed.push(strategy.name());
        }
        let _ = writeln!(
            lines,
            "{} {} {}: max_rel_err {err:.3e} (tolerance {tol:e}, fd_step {h:e})",
            if pass { "PASS" } else { "FAIL" },
            setup.problem.id(),
            strategy.name(),
        );
        reports.push(report.with_grad_check(err, h));
    }
    if args.format == Some(Format::Structured) {
        print(&emit_report(&reports, true));
    } else {
        print(&lines);
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Check(format!(
            "verification failed for {}",
            failed.join(", ")
        )))
    }
}

fn cmd_dump(mut args: DumpArgs) -> Result<(), CliError> {
    let mut cfg = open_config(&args.problem.config)?;
    let tape = match &args.load {
        Some(path) => {
            merge_store(&mut args.store, &mut cfg)?;
            cfg.finish()?;
            if args.problem.positional.is_some() || args.problem.problem.is_some() {
                return Err(CliError::Usage(
                    "--load replaces the problem argument".into(),
                ));
            }
            if args.mode.is_some() {
                return Err(CliError::Usage("--mode comes from the loaded tape".into()));
            }
            let file = File::open(path).map_err(|source| CliError::Io {
                path: path.clone(),
                source,
            })?;
            Tape::read_from(BufReader::new(file), store_config(&args.store)?)?
        }
        None => {
            let setup = setup(&mut args.problem, &mut args.store, &mut cfg)?;
            fill_enum(&mut cfg, "mode", &mut args.mode)?;
            cfg.finish()?;
            let mode = args.mode.unwrap_or_default().into();
            record(&setup.problem, &setup.point, mode, setup.store)?.tape
        }
    };

    let stats = tape.stats();
    let (s, d) = tape.dump()?;
    let join = |items: Vec<String>| items.join(" ");
    let mut out = String::new();
    let _ = writeln!(
        out,
        "mode {}  n {}  m {}  |V| {}  |E| {}  p_L {}  beta {}  beta_R {}",
        stats.mode,
        stats.num_inputs,
        stats.num_outputs,
        stats.num_vertices,
        stats.num_edges,
        stats.p_l,
        stats.beta,
        stats.beta_r
    );
    let _ = writeln!(
        out,
        "s ({}): {}",
        s.len(),
        join(s.iter().map(i64::to_string).collect())
    );
    let _ = writeln!(
        out,
        "d ({}): {}",
        d.len(),
        join(d.iter().map(|x| format!("{x:?}")).collect())
    );
    let _ = writeln!(
        out,
        "d ~2 ({}): {}",
        d.len(),
        join(d.iter().map(|x| format!("{x:.2}")).collect())
    );
    if args.dot {
        out.push_str(&adtape::dot::to_dot(&tape)?);
    }
    print(&out);
    Ok(())
}

fn cmd_bench(mut args: BenchArgs) -> Result<(), CliError> {
    let ids: Vec<String> = if args.problems.is_empty() {
        PROBLEM_IDS.iter().map(|s| s.to_string()).collect()
    } else {
        std::mem::take(&mut args.problems)
    };
    let store = store_config(&args.store)?;
    let mut reports = Vec::new();
    for id in ids {
        let problem =
            Problem::desk(&id).ok_or_else(|| CliError::Usage(format!("unknown problem {id:?}")))?;
        let setup = Setup {
            point: problem.default_point(),
            problem,
            store: store.clone(),
        };
        let mut gradients = Vec::new();
        for strategy in Strategy::ALL {
            let (rec, mut report, gradient) = run_strategy(&setup, strategy, &None)?;
            if args.check {
                let seed = vec![1.0; rec.outputs.len()];
                let h = setup.problem.fd_step();
                let fd = fd_gradient(&setup.problem, &setup.point, &seed, h)?;
                report = report.with_grad_check(max_rel_error(&gradient, &fd), h);
            }
            reports.push(report);
            gradients.push((strategy, gradient));
        }
        cross_check(&gradients)?;
    }
    print(&emit_report(
        &reports,
        args.format == Some(Format::Structured),
    ));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Dump(a) => cmd_dump(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("adtape: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
