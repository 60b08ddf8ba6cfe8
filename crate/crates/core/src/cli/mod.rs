//! Command-line front end. Every command exits with 0 on success, 2 on
//! invalid input, 3 when a bit budget aborts the computation and 1 on I/O
//! failure.

mod config;
pub mod plot;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use num_bigint::BigUint;
use serde::Serialize;
use sha2::{Digest, Sha256};

pub use config::RunConfig;

use crate::abcdiag::{abc_quality, conductor_reading, granville_scan, AbcError, AbcTriple, GranvilleDegree, GranvilleTable};
use crate::dynamics::{
    bad_reduction_primes, classify_zero, orbit, precondition_report, s_f, DynamicsError,
    Hypothesis, Poly, DEFAULT_BIT_BUDGET,
};
use crate::exactnum::{parse_rational, ExactError, PrimeSet};
use crate::heights::{canonical_height_with_budget, naive_height, CANONICAL_BIT_BUDGET};
use crate::powerrel::{canonical_witness, power_representations, PowerError, RelationContext};
use crate::search::{
    default_workers, pell_family, search_tilde_v, search_u, search_v, PellMember, PellVariant,
    ScanOptions, SearchError, SearchReport, DEFAULT_MAX_DEPTH,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;

const DEFAULT_EPS: f64 = 0.5;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Budget(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Budget(_) => EXIT_BUDGET,
            CliError::Io(_) => EXIT_IO,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Budget(m) | CliError::Io(m) => m,
        }
    }
}

impl From<DynamicsError> for CliError {
    fn from(e: DynamicsError) -> Self {
        match e {
            DynamicsError::BitsizeExceeded { .. } => CliError::Budget(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<ExactError> for CliError {
    fn from(e: ExactError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<PowerError> for CliError {
    fn from(e: PowerError) -> Self {
        match e {
            PowerError::Dynamics(d) => d.into(),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<SearchError> for CliError {
    fn from(e: SearchError) -> Self {
        match e {
            SearchError::Dynamics(d) => d.into(),
            SearchError::Power(p) => p.into(),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<AbcError> for CliError {
    fn from(e: AbcError) -> Self {
        match e {
            AbcError::Dynamics(d) => d.into(),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

type CliResult = Result<(), CliError>;

#[derive(Parser, Debug)]
#[command(name = "orbitpow", version, about = "Perfect powers in polynomial orbits over Q")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Weil height of a rational and optionally its canonical height under f.
    Height {
        #[arg(long, allow_hyphen_values = true)]
        alpha: String,
        #[arg(long)]
        poly: Option<String>,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[arg(long, default_value_t = CANONICAL_BIT_BUDGET)]
        bit_budget: u64,
    },
    /// Orbit values alpha, f(alpha), ..., f^(n)(alpha) with their heights.
    Orbit {
        #[arg(long)]
        poly: String,
        #[arg(long, allow_hyphen_values = true)]
        alpha: String,
        #[arg(long, default_value_t = 5)]
        n: usize,
        #[arg(long, default_value_t = DEFAULT_BIT_BUDGET)]
        bit_budget: u64,
    },
    /// Periodic, strictly preperiodic or wandering orbit of 0.
    ClassifyZero {
        #[arg(long)]
        poly: String,
    },
    /// Hypotheses of the finiteness theorems: U, V0, Vm(m) or abc.
    CheckConditions {
        #[arg(long)]
        poly: String,
        #[arg(long)]
        theorem: String,
    },
    /// Primes of bad reduction and S_f.
    Reduction {
        #[arg(long)]
        poly: String,
        #[arg(long, default_value = "")]
        s: String,
    },
    /// All representations of beta as a^l with a an S-integer.
    PowerTest {
        #[arg(long, allow_hyphen_values = true)]
        beta: String,
        #[arg(long, default_value = "")]
        s: String,
    },
    SearchU(RunArgs),
    SearchV(RunArgs),
    SearchTildeV(RunArgs),
    /// Relations built from solutions of r^2 - 2 s^2 = 1.
    PellFamily(RunArgs),
    /// Quality log c / log rad(abc) of a triple.
    AbcQuality {
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: String,
        #[arg(long)]
        c: String,
    },
    GranvilleScan(RunArgs),
    /// Conductor chain for the V relation of one starting point.
    ConductorCheck {
        #[arg(long)]
        poly: String,
        #[arg(long, default_value = "")]
        s: String,
        #[arg(long, allow_hyphen_values = true)]
        alpha: String,
        #[arg(long, default_value_t = 1)]
        n_max: u32,
        #[arg(long, default_value_t = DEFAULT_EPS)]
        eps: f64,
    },
    /// Render curve or Granville CSV tables as SVG.
    Plot {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

/// Flags shared by the commands that write run directories. Any flag left
/// out falls back to `--config`, then to the built-in default.
#[derive(Args, Debug, Default)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    poly: Option<String>,
    #[arg(long)]
    s: Option<String>,
    #[arg(long)]
    bound: Option<u64>,
    #[arg(long)]
    m: Option<u32>,
    #[arg(long)]
    n_max: Option<u32>,
    #[arg(long)]
    k_max: Option<u32>,
    #[arg(long)]
    eps: Option<f64>,
    /// `d-1` or `d-2`
    #[arg(long)]
    degree: Option<String>,
    #[arg(long)]
    count: Option<usize>,
    /// `U` or `V`
    #[arg(long)]
    variant: Option<String>,
    /// cofactor g of the U family
    #[arg(long)]
    g: Option<String>,
    #[arg(long)]
    bit_budget: Option<u64>,
    #[arg(long)]
    max_depth: Option<u32>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}

fn dispatch(command: Command) -> CliResult {
    match command {
        Command::Height {
            alpha,
            poly,
            tol,
            bit_budget,
        } => cmd_height(&alpha, poly.as_deref(), tol, bit_budget),
        Command::Orbit {
            poly,
            alpha,
            n,
            bit_budget,
        } => cmd_orbit(&poly, &alpha, n, bit_budget),
        Command::ClassifyZero { poly } => {
            let c = classify_zero(&parse_poly(&poly)?)?;
            print_json_pretty(&c)
        }
        Command::CheckConditions { poly, theorem } => {
            let f = parse_poly(&poly)?;
            let hypothesis: Hypothesis = theorem.parse()?;
            let report = precondition_report(&f, hypothesis)?;
            print_json_pretty(&report)?;
            println!("all_ok: {}", report.all_ok());
            Ok(())
        }
        Command::Reduction { poly, s } => {
            let f = parse_poly(&poly)?;
            let s: PrimeSet = s.parse()?;
            println!("bad_reduction: {{{}}}", bad_reduction_primes(&f)?);
            println!("s_f: {{{}}}", s_f(&f, &s)?);
            Ok(())
        }
        Command::PowerTest { beta, s } => cmd_power_test(&beta, &s),
        Command::SearchU(args) => cmd_search("search-u", args),
        Command::SearchV(args) => cmd_search("search-v", args),
        Command::SearchTildeV(args) => cmd_search("search-tilde-v", args),
        Command::PellFamily(args) => cmd_pell(args),
        Command::AbcQuality { a, b, c } => {
            let t = AbcTriple::new(parse_uint(&a)?, parse_uint(&b)?, parse_uint(&c)?)?;
            println!("quality: {}", sig12(abc_quality(&t)));
            println!("radical: {}", t.radical());
            Ok(())
        }
        Command::GranvilleScan(args) => cmd_granville(args),
        Command::ConductorCheck {
            poly,
            s,
            alpha,
            n_max,
            eps,
        } => cmd_conductor(&poly, &s, &alpha, n_max, eps),
        Command::Plot { inputs, out_dir } => cmd_plot(&inputs, out_dir.as_deref()),
    }
}

/// 12 significant digits, fixed point unless the magnitude is extreme.
pub fn sig12(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    if !(-4..15).contains(&magnitude) {
        return format!("{x:.11e}");
    }
    let decimals = (11 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

fn parse_poly(s: &str) -> Result<Poly, CliError> {
    s.parse::<Poly>()
        .map_err(|e| CliError::Usage(format!("bad polynomial {s:?}: {e}")))
}

fn parse_uint(s: &str) -> Result<BigUint, CliError> {
    s.trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("not a nonnegative integer: {s:?}")))
}

fn print_json_pretty<T: Serialize>(value: &T) -> CliResult {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn cmd_height(alpha: &str, poly: Option<&str>, tol: f64, budget: u64) -> CliResult {
    let alpha = parse_rational(alpha)?;
    println!("h: {}", sig12(naive_height(&alpha)));
    if let Some(poly) = poly {
        if !(tol > 0.0) {
            return Err(CliError::Usage("tolerance must be positive".into()));
        }
        let f = parse_poly(poly)?;
        let est = canonical_height_with_budget(&f, &alpha, tol, budget)?;
        println!("canonical: {}", sig12(est.value));
        println!("error: {}", sig12(est.error));
        println!("iterations: {}", est.iterations);
    }
    Ok(())
}

fn cmd_orbit(poly: &str, alpha: &str, n: usize, budget: u64) -> CliResult {
    let f = parse_poly(poly)?;
    let alpha = parse_rational(alpha)?;
    for (i, value) in orbit(&f, &alpha, n, budget)?.iter().enumerate() {
        println!("{i}\t{value}\t{}", sig12(naive_height(value)));
    }
    Ok(())
}

fn cmd_power_test(beta: &str, s: &str) -> CliResult {
    let beta = parse_rational(beta)?;
    let s: PrimeSet = s.parse()?;
    let witnesses = power_representations(&beta, &s);
    for w in &witnesses {
        println!("witness {w}");
    }
    match canonical_witness(&witnesses) {
        Some(w) => println!("canonical {w}"),
        None => println!("no witness"),
    }
    Ok(())
}

fn cmd_conductor(poly: &str, s: &str, alpha: &str, n_max: u32, eps: f64) -> CliResult {
    let f = parse_poly(poly)?;
    let s: PrimeSet = s.parse()?;
    let alpha = parse_rational(alpha)?;
    let ctx = RelationContext::new(f.clone(), s.clone());
    match ctx.v_membership(&alpha, n_max)? {
        None => println!("no V relation for alpha = {alpha} with n <= {n_max}"),
        Some(hit) => {
            println!("{}", serde_json::to_string(&hit)?);
            let reading = conductor_reading(&f, &s, &hit, eps)?;
            print_json_pretty(&reading)?;
        }
    }
    Ok(())
}

/// Effective configuration: flags over `--config` over defaults.
fn resolve(command: &str, args: &RunArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            let cfg = RunConfig::from_toml(&text)
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            if cfg.command != command {
                return Err(CliError::Usage(format!(
                    "config is for {:?}, not {command:?}",
                    cfg.command
                )));
            }
            cfg
        }
        None => RunConfig {
            command: command.to_string(),
            ..RunConfig::default()
        },
    };
    if let Some(p) = &args.poly {
        cfg.polynomial = Some(p.clone());
    }
    if let Some(s) = &args.s {
        cfg.s = s.parse::<PrimeSet>()?.iter().collect();
    }
    // validates primality of config-supplied sets too
    PrimeSet::new(cfg.s.iter().copied())?;
    macro_rules! take {
        ($($field:ident),*) => {$( if args.$field.is_some() { cfg.$field = args.$field.clone(); } )*};
    }
    take!(bound, m, n_max, k_max, eps, count, variant, bit_budget, max_depth, workers);
    if args.degree.is_some() {
        cfg.granville_degree = args.degree.clone();
    }
    if let Some(out) = &args.out {
        cfg.out_dir = Some(out.to_string_lossy().into_owned());
    }
    if let Some(g) = &args.g {
        cfg.polynomial = Some(g.clone());
    }
    cfg.bit_budget.get_or_insert(DEFAULT_BIT_BUDGET);
    cfg.workers.get_or_insert_with(default_workers);
    match command {
        "search-v" => {
            cfg.m.get_or_insert(1);
            cfg.eps.get_or_insert(DEFAULT_EPS);
            cfg.max_depth.get_or_insert(DEFAULT_MAX_DEPTH);
        }
        "search-tilde-v" => {
            cfg.n_max.get_or_insert(1);
            cfg.k_max.get_or_insert(0);
            cfg.eps.get_or_insert(DEFAULT_EPS);
            cfg.max_depth.get_or_insert(DEFAULT_MAX_DEPTH);
        }
        "granville-scan" => {
            cfg.eps.get_or_insert(DEFAULT_EPS);
            cfg.granville_degree.get_or_insert_with(|| "d-1".into());
        }
        "pell-family" => {
            cfg.count.get_or_insert(10);
            cfg.variant.get_or_insert_with(|| "U".into());
        }
        _ => {}
    }
    // canonical polynomial spelling so equivalent inputs hash alike
    if let Some(p) = &cfg.polynomial {
        cfg.polynomial = Some(parse_poly(p)?.to_string());
    }
    Ok(cfg)
}

fn require<T: Clone>(value: &Option<T>, name: &str) -> Result<T, CliError> {
    value
        .clone()
        .ok_or_else(|| CliError::Usage(format!("missing --{name}")))
}

fn scan_options(cfg: &RunConfig) -> ScanOptions {
    ScanOptions {
        workers: cfg.workers.unwrap_or(1).max(1),
        bit_budget: cfg.bit_budget.unwrap_or(DEFAULT_BIT_BUDGET),
        max_depth: cfg.max_depth.unwrap_or(DEFAULT_MAX_DEPTH),
        eps: cfg.eps.unwrap_or(DEFAULT_EPS),
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config_hash: String,
    orbitpow_version: &'static str,
    workers: usize,
    wall_time_seconds: f64,
    /// SHA-256 of every output file
    files: Vec<(String, String)>,
}

/// Run directory writer; records file digests for the manifest.
struct RunDir {
    dir: PathBuf,
    files: Vec<(String, String)>,
}

impl RunDir {
    fn create(dir: &str) -> Result<Self, CliError> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: PathBuf::from(dir),
            files: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult {
        fs::write(self.dir.join(name), bytes)?;
        self.files
            .push((name.to_string(), hex::encode(Sha256::digest(bytes))));
        Ok(())
    }

    fn finish(self, cfg: &RunConfig, started: Instant) -> CliResult {
        let manifest = Manifest {
            command: &cfg.command,
            config_hash: cfg.input_hash(),
            orbitpow_version: env!("CARGO_PKG_VERSION"),
            workers: cfg.workers.unwrap_or(1),
            wall_time_seconds: started.elapsed().as_secs_f64(),
            files: self.files,
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(self.dir.join("manifest.json"), text)?;
        Ok(())
    }
}

fn cmd_search(command: &str, args: RunArgs) -> CliResult {
    let started = Instant::now();
    let cfg = resolve(command, &args)?;
    let f = parse_poly(&require(&cfg.polynomial, "poly")?)?;
    let s = PrimeSet::new(cfg.s.iter().copied())?;
    let bound = require(&cfg.bound, "bound")?;
    let options = scan_options(&cfg);
    let report = match command {
        "search-u" => search_u(&f, &s, bound, &options)?,
        "search-v" => search_v(&f, &s, bound, cfg.m.unwrap_or(1), &options)?,
        _ => search_tilde_v(
            &f,
            &s,
            bound,
            cfg.n_max.unwrap_or(1),
            cfg.k_max.unwrap_or(0),
            &options,
        )?,
    };
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    if report.skipped > 0 {
        eprintln!(
            "warning: {} starting points skipped on the bit budget",
            report.skipped
        );
    }
    let mut hits = Vec::new();
    report.write_jsonl(&mut hits)?;
    match &cfg.out_dir {
        Some(dir) => {
            let mut run = RunDir::create(dir)?;
            run.write("config.toml", cfg.to_canonical_toml().as_bytes())?;
            run.write("hits.jsonl", &hits)?;
            let mut curve = Vec::new();
            report.write_curve_csv(&mut curve)?;
            run.write("curve.csv", &curve)?;
            let mut full = serde_json::to_vec_pretty(&report)?;
            full.push(b'\n');
            run.write("report.json", &full)?;
            run.finish(&cfg, started)?;
        }
        None => io::stdout().write_all(&hits)?,
    }
    print_summary(&report);
    Ok(())
}

fn print_summary(report: &SearchReport) {
    eprintln!(
        "{} search: {} points, {} hits, {} nontrivial ({} with l = -1), {} skipped",
        report.kind,
        report.visited,
        report.hits.len(),
        report.nontrivial_count(),
        report.minus_one_count(),
        report.skipped
    );
    let curve: Vec<String> = report
        .counts
        .iter()
        .map(|(b, c)| format!("{b}:{c}"))
        .collect();
    eprintln!("stabilization (evidence only, not a bound): {}", curve.join(" "));
    for v in &report.invariant_violations {
        eprintln!("invariant violation: {v}");
    }
}

fn cmd_pell(args: RunArgs) -> CliResult {
    let started = Instant::now();
    let cfg = resolve("pell-family", &args)?;
    let variant = match cfg.variant.as_deref().unwrap_or("U") {
        "U" | "u" => PellVariant::U,
        "V" | "v" => PellVariant::V,
        other => return Err(CliError::Usage(format!("unknown variant {other:?}"))),
    };
    let g = cfg.polynomial.as_deref().map(parse_poly).transpose()?;
    if variant == PellVariant::V && g.is_some() {
        return Err(CliError::Usage("--g applies to the U variant only".into()));
    }
    let count = cfg.count.unwrap_or(10);
    let members = pell_family(count, g.as_ref(), variant)?;
    let mut lines = Vec::new();
    for m in &members {
        serde_json::to_writer(&mut lines, m)?;
        lines.push(b'\n');
    }
    match &cfg.out_dir {
        Some(dir) => {
            let mut run = RunDir::create(dir)?;
            run.write("config.toml", cfg.to_canonical_toml().as_bytes())?;
            run.write("hits.jsonl", &lines)?;
            run.finish(&cfg, started)?;
        }
        None => io::stdout().write_all(&lines)?,
    }
    let verified = members.iter().filter(|m: &&PellMember| m.verified).count();
    println!("{verified} of {} hits verified", members.len());
    if verified != members.len() {
        return Err(CliError::Usage("a family member failed to replay".into()));
    }
    Ok(())
}

fn granville_csv(table: &GranvilleTable) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in &table.rows {
        w.serialize(row)?;
    }
    if table.rows.is_empty() {
        w.write_record(["alpha", "height", "radical_sum", "lhs", "gap"])?;
    }
    w.into_inner().map_err(|e| CliError::Io(e.to_string()))
}

fn cmd_granville(args: RunArgs) -> CliResult {
    let started = Instant::now();
    let cfg = resolve("granville-scan", &args)?;
    let f = parse_poly(&require(&cfg.polynomial, "poly")?)?;
    let s = PrimeSet::new(cfg.s.iter().copied())?;
    let bound = require(&cfg.bound, "bound")?;
    let degree = match cfg.granville_degree.as_deref().unwrap_or("d-1") {
        "d-1" => GranvilleDegree::DMinus1,
        "d-2" => GranvilleDegree::DMinus2,
        other => return Err(CliError::Usage(format!("degree must be d-1 or d-2, got {other:?}"))),
    };
    let options = scan_options(&cfg);
    let table = granville_scan(&f, &s, bound, options.eps, degree, &options)?;
    let csv_bytes = granville_csv(&table)?;
    match &cfg.out_dir {
        Some(dir) => {
            let mut run = RunDir::create(dir)?;
            run.write("config.toml", cfg.to_canonical_toml().as_bytes())?;
            run.write("granville.csv", &csv_bytes)?;
            run.finish(&cfg, started)?;
        }
        None => io::stdout().write_all(&csv_bytes)?,
    }
    eprintln!(
        "granville scan: {} rows, {} roots skipped, max gap {}",
        table.rows.len(),
        table.roots_skipped,
        table.max_gap().map_or("none".to_string(), sig12)
    );
    Ok(())
}

fn cmd_plot(inputs: &[PathBuf], out_dir: Option<&Path>) -> CliResult {
    for input in inputs {
        if !input.exists() {
            return Err(CliError::Usage(format!("missing input {}", input.display())));
        }
        let table = plot::read_table(input).map_err(CliError::Usage)?;
        if table.is_empty() {
            eprintln!("warning: {} has no rows; nothing to plot", input.display());
            continue;
        }
        let dir = out_dir
            .map(Path::to_path_buf)
            .or_else(|| input.parent().map(Path::to_path_buf))
            .unwrap_or_default();
        fs::create_dir_all(&dir)?;
        let stem = input.file_stem().unwrap_or_default().to_string_lossy();
        let output = dir.join(format!("{stem}.svg"));
        plot::render(&table, &output).map_err(|e| CliError::Io(e.to_string()))?;
        println!("wrote {}", output.display());
    }
    Ok(())
}
