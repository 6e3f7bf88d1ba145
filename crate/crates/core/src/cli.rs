//! Command-line front end: input files, CSV outputs, run manifests.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bench::{
    app_costs, bench_threshold, bench_two_level, odd_distances, summarize, SearchSpace,
};
use crate::composer::{
    best_volume, compose_specs, front_producers, sequential_corner, single_level_front,
    sweep_two_level, AppRequirements, ComposeOptions, ParetoFront,
};
use crate::error::Error;
use crate::failure::{expected_delay, monte_carlo_delay};
use crate::model::{build_levels, PhysicalParams, Preset, Producer, Protocol};
use crate::simulator::{simulate_two_level, TwoLevelConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_INVARIANT: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "magicpipe",
    version,
    about = "Dynamic magic-state distillation pipeline simulator and optimizer"
)]
pub struct Cli {
    /// Parameter preset: table1, supercond or majorana
    #[arg(long, global = true)]
    pub preset: Option<String>,
    /// Output directory
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads (0 = all cores)
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    /// Budgets tried per buffer size
    #[arg(long = "budget-grid", global = true, default_value_t = 24)]
    pub budget_grid: usize,
    /// Seed for the Monte Carlo delay estimate
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Monte Carlo samples for the delay estimate (0 = skip)
    #[arg(long = "mc-samples", global = true, default_value_t = 0)]
    pub mc_samples: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one pipeline and write its trace
    Simulate(SimulateArgs),
    /// Sweep budgets and buffer sizes and write the Pareto front
    Pareto { spec: PathBuf },
    /// Compare against the baselines over all odd distance pairs
    BenchTwoLevel {
        #[arg(long, default_value_t = 3)]
        d_min: u32,
        #[arg(long, default_value_t = 21)]
        d_max: u32,
    },
    /// Minimum volume per output-error target over distance sequences
    BenchThreshold {
        #[arg(long, value_delimiter = ',', default_values_t = [1e-10, 1e-15, 1e-20, 1e-25, 1e-30])]
        targets: Vec<f64>,
        #[arg(long, default_value_t = 3)]
        max_levels: usize,
        #[arg(long, default_value_t = 47)]
        d_max: u32,
    },
    /// Distillation cost of an application
    App { requirements: PathBuf },
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    pub spec: PathBuf,
    /// Run every stage in its forced-sequential configuration
    #[arg(long)]
    pub sequential_corner: bool,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsInput {
    pub t_2q_ns: f64,
    pub t_meas_ns: f64,
    pub p_phys: f64,
    pub eps_raw: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineSpec {
    #[serde(default)]
    pub physical_params: Option<ParamsInput>,
    pub code_distances: Vec<u32>,
    #[serde(default = "default_protocol")]
    pub protocol: String,
    #[serde(default)]
    pub budget: Option<u64>,
    #[serde(default)]
    pub buffer_size: Option<u64>,
    #[serde(default)]
    pub preset: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppSpec {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub physical_params: Option<ParamsInput>,
    pub code_distances: Vec<u32>,
    #[serde(default = "default_protocol")]
    pub protocol: String,
    #[serde(default)]
    pub preset: Option<String>,
    pub required_fidelity: f64,
    pub magic_count: u64,
    pub runtime_s: f64,
}

fn default_protocol() -> String {
    "15to1".into()
}

/// A failure carrying its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidParameter(_)
            | Error::NoSuppression { .. }
            | Error::InstanceTooLarge(_) => EXIT_VALIDATION,
            Error::Invariant(_) | Error::IllegalTransition { .. } => EXIT_INVARIANT,
            _ => EXIT_INFEASIBLE,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

fn validation(message: String) -> CliError {
    CliError {
        code: EXIT_VALIDATION,
        message,
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError {
        code: EXIT_IO,
        message: format!("{}: {e}", path.display()),
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Format with six significant digits; integral values print without a
/// fractional part.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    if !(-4..15).contains(&mag) {
        return format!("{x:.5e}");
    }
    let decimals = (5 - mag).max(0) as usize;
    let s = format!("{x:.decimals$}");
    if s.contains('.') {
        let s = s.trim_end_matches('0').trim_end_matches('.');
        s.to_string()
    } else {
        s
    }
}

fn resolve_params(
    file_params: Option<ParamsInput>,
    file_preset: Option<&str>,
    flag_preset: Option<&str>,
) -> CliResult<(PhysicalParams, Preset)> {
    let preset: Preset = file_preset
        .or(flag_preset)
        .unwrap_or("supercond")
        .parse()
        .map_err(|e: Error| validation(format!("field `preset`: {e}")))?;
    let params = match file_params {
        Some(p) => PhysicalParams::new(p.t_2q_ns, p.t_meas_ns, p.p_phys, p.eps_raw)
            .map_err(|e| validation(format!("field `physical_params`: {e}")))?,
        None => preset.params(),
    };
    Ok((params, preset))
}

fn check_distances(ds: &[u32], preset: Preset) -> CliResult<()> {
    if ds.is_empty() {
        return Err(validation(
            "field `code_distances`: must not be empty".into(),
        ));
    }
    let min = if preset.allows_unit_distance() { 1 } else { 3 };
    for &d in ds {
        if d < min || d % 2 == 0 {
            return Err(validation(format!(
                "field `code_distances`: {d} is not an odd distance >= {min}"
            )));
        }
    }
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<(T, Vec<u8>)> {
    let bytes = fs::read(path).map_err(|e| CliError {
        code: EXIT_VALIDATION,
        message: format!("{}: {e}", path.display()),
    })?;
    // serde_json reports the line and column itself
    let value = serde_json::from_slice(&bytes)
        .map_err(|e| validation(format!("{}: {e}", path.display())))?;
    Ok((value, bytes))
}

struct Output {
    dir: PathBuf,
}

impl Output {
    fn new(dir: &Path) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
        })
    }

    fn write(&self, name: &str, contents: &str) -> CliResult<()> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| io_err(&path, e))
    }

    fn csv(&self, name: &str, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
        let mut s = header.join(",");
        s.push('\n');
        for r in rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        self.write(name, &s)
    }
}

#[derive(Debug, Serialize)]
struct InputRecord {
    path: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest {
    command: String,
    args: Vec<String>,
    inputs: Vec<InputRecord>,
    preset: String,
    out_dir: String,
    version: String,
    digest: String,
    outputs: Vec<String>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write_manifest(
    out: &Output,
    command: &str,
    args: &[String],
    inputs: &[(&Path, &[u8])],
    preset: Preset,
    outputs: &[&str],
) -> CliResult<()> {
    let mut all = Sha256::new();
    let records = inputs
        .iter()
        .map(|(p, b)| {
            all.update(b);
            InputRecord {
                path: p.display().to_string(),
                sha256: sha256_hex(b),
            }
        })
        .collect();
    let m = Manifest {
        command: command.into(),
        args: args.to_vec(),
        inputs: records,
        preset: preset.name().into(),
        out_dir: out.dir.display().to_string(),
        version: env!("CARGO_PKG_VERSION").into(),
        digest: hex::encode(all.finalize()),
        outputs: outputs.iter().map(|s| s.to_string()).collect(),
    };
    let mut s = serde_json::to_string_pretty(&m).expect("manifest serializes");
    s.push('\n');
    out.write("manifest.json", &s)
}

fn compose_options(cli: &Cli) -> ComposeOptions {
    ComposeOptions {
        budget_points: cli.budget_grid.max(1),
        ..Default::default()
    }
}

fn front_rows(front: &ParetoFront, params: &PhysicalParams) -> Vec<Vec<String>> {
    let best = best_volume(front).map(|p| (p.q, p.t.to_bits()));
    front
        .points
        .iter()
        .map(|p| {
            vec![
                p.q.to_string(),
                fmt_num(p.t),
                fmt_num(params.rounds_to_seconds(p.t)),
                p.config.buffer_size.to_string(),
                p.config.budget.to_string(),
                fmt_num(p.volume()),
                u8::from(best == Some((p.q, p.t.to_bits()))).to_string(),
            ]
        })
        .collect()
}

fn cmd_simulate(cli: &Cli, a: &SimulateArgs, argv: &[String]) -> CliResult<String> {
    let (spec, bytes): (PipelineSpec, _) = read_json(&a.spec)?;
    let (params, preset) = resolve_params(
        spec.physical_params,
        spec.preset.as_deref(),
        cli.preset.as_deref(),
    )?;
    check_distances(&spec.code_distances, preset)?;
    if spec.code_distances.len() < 2 {
        return Err(validation(
            "field `code_distances`: simulation needs at least two levels".into(),
        ));
    }
    let protocol: Protocol = spec
        .protocol
        .parse()
        .map_err(|e: Error| validation(format!("field `protocol`: {e}")))?;
    let specs = build_levels(&spec.code_distances, protocol, &params)?;
    let opts = compose_options(cli);
    let n = specs.len();
    let burst = specs[n - 1].burst_demand;
    if let Some(n_buf) = spec.buffer_size.filter(|&b| b < burst) {
        return Err(Error::BufferTooSmall { n_buf, burst }.into());
    }

    let producers: Vec<Producer> = if a.sequential_corner {
        let mut producer = specs[0].producer();
        for w in specs[..n - 1].windows(2) {
            let p = sequential_corner(&[producer], &w[1], &params, true)?;
            producer = Producer {
                cost: crate::model::FactoryCost {
                    qubits: p.q,
                    duration: p.t.ceil() as u64,
                    outputs: 1,
                },
                ..w[1].producer()
            };
        }
        vec![producer]
    } else {
        let below = compose_specs(&specs[..n - 1], &params, &opts)?;
        if n == 2 {
            vec![specs[0].producer()]
        } else {
            front_producers(&below, &specs[n - 2])?
        }
    };
    let high = specs[n - 1].clone();
    let cfg = if a.sequential_corner {
        TwoLevelConfig::forced_sequential(producers, high, params)
    } else {
        match (spec.budget, spec.buffer_size) {
            (Some(b), Some(n_buf)) => TwoLevelConfig::new(producers, high, b, n_buf, params),
            (budget, buffer) => {
                // search whatever was left open and keep the best volume
                let opts = ComposeOptions {
                    buffer_range: buffer.map(|n| (n, n)),
                    ..opts.clone()
                };
                let pts = sweep_two_level(&producers, &high, &params, &opts)?;
                let best = pts
                    .iter()
                    .filter(|p| budget.is_none_or(|b| p.budget <= b))
                    .min_by(|x, y| x.volume().total_cmp(&y.volume()).then(x.q.cmp(&y.q)))
                    .ok_or_else(|| Error::NoFeasibleConfig("no configuration fits".into()))?;
                TwoLevelConfig::new(producers, high, best.budget, best.n_buf, params)
            }
        }
    };
    let trace = simulate_two_level(&cfg)?;
    trace.check_invariants(cfg.n_buf)?;
    let delay = expected_delay(&trace)?.expected_delay;
    let mc = if cli.mc_samples > 0 {
        Some(monte_carlo_delay(&trace, cli.mc_samples, cli.seed)?)
    } else {
        None
    };

    let out = Output::new(&cli.out)?;
    let mut csv = Vec::new();
    trace
        .write_csv(&mut csv)
        .map_err(|e| io_err(&cli.out.join("trace.csv"), e))?;
    out.write("trace.csv", &String::from_utf8(csv).expect("ascii"))?;
    let total = trace.total_rounds as f64 + delay;
    let header = [
        "q_physical",
        "t_rounds",
        "t_seconds",
        "expected_delay_rounds",
        "t_total_rounds",
        "t_total_seconds",
        "volume",
        "stall_count",
        "launch_round",
        "budget",
        "buffer_size",
        "mc_delay_rounds",
    ];
    let row = vec![
        trace.qubits_used.to_string(),
        trace.total_rounds.to_string(),
        fmt_num(params.rounds_to_seconds(trace.total_rounds as f64)),
        fmt_num(delay),
        fmt_num(total),
        fmt_num(params.rounds_to_seconds(total)),
        fmt_num(trace.qubits_used as f64 * total),
        trace.stall_count.to_string(),
        trace.launch_round.to_string(),
        cfg.q_budget.to_string(),
        cfg.n_buf.to_string(),
        mc.map(fmt_num).unwrap_or_default(),
    ];
    out.csv("summary.csv", &header, std::slice::from_ref(&row))?;
    write_manifest(
        &out,
        "simulate",
        argv,
        &[(&a.spec, &bytes)],
        preset,
        &["trace.csv", "summary.csv"],
    )?;
    let mut s = String::new();
    for (h, v) in header.iter().zip(&row) {
        let _ = writeln!(s, "{h}: {v}");
    }
    Ok(s)
}

fn cmd_pareto(cli: &Cli, path: &Path, argv: &[String]) -> CliResult<String> {
    let (spec, bytes): (PipelineSpec, _) = read_json(path)?;
    let (params, preset) = resolve_params(
        spec.physical_params,
        spec.preset.as_deref(),
        cli.preset.as_deref(),
    )?;
    check_distances(&spec.code_distances, preset)?;
    let protocol: Protocol = spec
        .protocol
        .parse()
        .map_err(|e: Error| validation(format!("field `protocol`: {e}")))?;
    let specs = build_levels(&spec.code_distances, protocol, &params)?;
    let mut opts = compose_options(cli);
    if let Some(n) = spec.buffer_size {
        opts.buffer_range = Some((n, n));
    }
    let front = if specs.len() == 1 {
        single_level_front(&specs[0])
    } else {
        compose_specs(&specs, &params, &opts)?
    };
    let out = Output::new(&cli.out)?;
    let header = [
        "q_physical",
        "t_rounds",
        "t_seconds",
        "buffer_size",
        "budget",
        "volume",
        "best",
    ];
    let rows = front_rows(&front, &params);
    out.csv("front.csv", &header, &rows)?;
    write_manifest(
        &out,
        "pareto",
        argv,
        &[(path, &bytes)],
        preset,
        &["front.csv"],
    )?;
    let best = best_volume(&front).expect("non-empty front");
    Ok(format!(
        "{} front points; best volume {} at q={} t={} rounds, buffer {}\n",
        front.len(),
        fmt_num(best.volume()),
        best.q,
        fmt_num(best.t),
        best.config.buffer_size
    ))
}

fn cmd_bench_two_level(cli: &Cli, d_min: u32, d_max: u32, argv: &[String]) -> CliResult<String> {
    let preset = parse_flag_preset(cli)?;
    if d_min > d_max {
        return Err(validation(format!(
            "--d-min {d_min} exceeds --d-max {d_max}"
        )));
    }
    let min = if preset.allows_unit_distance() { 1 } else { 3 };
    if d_min < min {
        return Err(validation(format!("--d-min must be >= {min}")));
    }
    let params = preset.params();
    let rows = bench_two_level(d_min, d_max, &params, &compose_options(cli))?;
    let header = [
        "d1",
        "d2",
        "dynamic_q",
        "dynamic_t_rounds",
        "dynamic_buffer",
        "dynamic_volume",
        "corner_volume",
        "sequential_volume",
        "parallel_volume",
        "reduction_vs_sequential",
        "reduction_vs_parallel",
    ];
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.d1.to_string(),
                r.d2.to_string(),
                r.dynamic_q.to_string(),
                fmt_num(r.dynamic_t),
                r.dynamic_buffer.to_string(),
                fmt_num(r.dynamic_volume),
                fmt_num(r.corner_volume),
                fmt_num(r.sequential_volume),
                fmt_num(r.parallel_volume),
                fmt_num(r.reduction_vs_sequential),
                fmt_num(r.reduction_vs_parallel),
            ]
        })
        .collect();
    let out = Output::new(&cli.out)?;
    out.csv("two_level.csv", &header, &table)?;
    write_manifest(
        &out,
        "bench-two-level",
        argv,
        &[],
        preset,
        &["two_level.csv"],
    )?;
    let s = summarize(&rows);
    Ok(format!(
        "{} pairs; mean reduction vs sequential {}, vs parallel {}; negative pairs {} (worst {})\n",
        s.pairs,
        fmt_num(s.mean_reduction_vs_sequential),
        fmt_num(s.mean_reduction_vs_parallel),
        s.negative_either,
        fmt_num(s.worst_reduction)
    ))
}

fn cmd_bench_threshold(
    cli: &Cli,
    targets: &[f64],
    max_levels: usize,
    d_max: u32,
    argv: &[String],
) -> CliResult<String> {
    let preset = parse_flag_preset(cli)?;
    if !(1..=3).contains(&max_levels) {
        return Err(validation("--max-levels must be 1, 2 or 3".into()));
    }
    let params = preset.params();
    let d_min = if preset.allows_unit_distance() { 1 } else { 3 };
    let space = SearchSpace {
        distances: odd_distances(d_min, d_max),
        max_levels,
    };
    let rows =
        bench_threshold(targets, &params, &space, &compose_options(cli)).map_err(CliError::from)?;
    let header = [
        "target",
        "dynamic_distances",
        "dynamic_volume",
        "sequential_distances",
        "sequential_volume",
        "parallel_distances",
        "parallel_volume",
    ];
    let cell = |c: &Option<crate::bench::Choice>| -> [String; 2] {
        match c {
            Some(c) => [
                c.distances
                    .iter()
                    .map(|d| d.to_string())
                    .collect::<Vec<_>>()
                    .join("-"),
                fmt_num(c.volume),
            ],
            None => [String::new(), String::new()],
        }
    };
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut row = vec![fmt_num(r.target)];
            row.extend(cell(&r.dynamic));
            row.extend(cell(&r.sequential));
            row.extend(cell(&r.parallel));
            row
        })
        .collect();
    let out = Output::new(&cli.out)?;
    out.csv("threshold.csv", &header, &table)?;
    write_manifest(
        &out,
        "bench-threshold",
        argv,
        &[],
        preset,
        &["threshold.csv"],
    )?;
    let mut s = String::new();
    for r in &rows {
        match &r.dynamic {
            Some(c) => {
                let _ = writeln!(
                    s,
                    "{}: {:?} volume {}",
                    fmt_num(r.target),
                    c.distances,
                    fmt_num(c.volume)
                );
            }
            None => {
                let _ = writeln!(s, "{}: no feasible sequence", fmt_num(r.target));
            }
        }
    }
    Ok(s)
}

fn cmd_app(cli: &Cli, path: &Path, argv: &[String]) -> CliResult<String> {
    let (spec, bytes): (AppSpec, _) = read_json(path)?;
    let (params, preset) = resolve_params(
        spec.physical_params,
        spec.preset.as_deref(),
        cli.preset.as_deref(),
    )?;
    check_distances(&spec.code_distances, preset)?;
    let _: Protocol = spec
        .protocol
        .parse()
        .map_err(|e: Error| validation(format!("field `protocol`: {e}")))?;
    let app = AppRequirements {
        required_fidelity: spec.required_fidelity,
        magic_count: spec.magic_count,
        runtime_s: spec.runtime_s,
        preset: preset.name().into(),
    };
    app.validate().map_err(CliError::from)?;
    let name = spec.name.clone().unwrap_or_else(|| {
        path.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    });
    let row = app_costs(
        &name,
        &spec.code_distances,
        &app,
        &params,
        &compose_options(cli),
    )?;
    if row.output_error > app.required_fidelity {
        return Err(Error::NoFeasibleConfig(format!(
            "distances {:?} reach {:.3e}, above the required {:.3e}",
            spec.code_distances, row.output_error, app.required_fidelity
        ))
        .into());
    }
    let header = [
        "name",
        "distances",
        "output_error",
        "required_fidelity",
        "sequential_qubits",
        "parallel_qubits",
        "dynamic_qubits",
        "reduction_vs_sequential",
        "reduction_vs_parallel",
    ];
    let cells = vec![
        row.name.clone(),
        row.distances
            .iter()
            .map(|d| d.to_string())
            .collect::<Vec<_>>()
            .join("-"),
        fmt_num(row.output_error),
        fmt_num(app.required_fidelity),
        row.sequential_qubits.to_string(),
        row.parallel_qubits.to_string(),
        row.dynamic_qubits.to_string(),
        fmt_num(row.reduction_vs_sequential),
        fmt_num(row.reduction_vs_parallel),
    ];
    let out = Output::new(&cli.out)?;
    out.csv("app.csv", &header, &[cells])?;
    write_manifest(&out, "app", argv, &[(path, &bytes)], preset, &["app.csv"])?;
    Ok(format!(
        "{}: sequential {} parallel {} dynamic {} qubits\n",
        row.name, row.sequential_qubits, row.parallel_qubits, row.dynamic_qubits
    ))
}

fn parse_flag_preset(cli: &Cli) -> CliResult<Preset> {
    cli.preset
        .as_deref()
        .unwrap_or("supercond")
        .parse()
        .map_err(|e: Error| validation(format!("--preset: {e}")))
}

/// Run a parsed command. `argv` is recorded in the manifest.
pub fn execute(cli: &Cli, argv: &[String]) -> CliResult<String> {
    let run = || match &cli.command {
        Command::Simulate(a) => cmd_simulate(cli, a, argv),
        Command::Pareto { spec } => cmd_pareto(cli, spec, argv),
        Command::BenchTwoLevel { d_min, d_max } => cmd_bench_two_level(cli, *d_min, *d_max, argv),
        Command::BenchThreshold {
            targets,
            max_levels,
            d_max,
        } => cmd_bench_threshold(cli, targets, *max_levels, *d_max, argv),
        Command::App { requirements } => cmd_app(cli, requirements, argv),
    };
    if cli.jobs > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build()
            .map_err(|e| CliError {
                code: EXIT_IO,
                message: e.to_string(),
            })?;
        pool.install(run)
    } else {
        run()
    }
}

/// Parse arguments, run, print, and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args: Vec<std::ffi::OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    EXIT_OK
                }
                _ => EXIT_VALIDATION,
            };
        }
    };
    let argv: Vec<String> = args
        .iter()
        .skip(1)
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    match execute(&cli, &argv) {
        Ok(msg) => {
            print!("{msg}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_format() {
        assert_eq!(fmt_num(0.0), "0");
        assert_eq!(fmt_num(65280.0), "65280");
        assert_eq!(fmt_num(118.8), "118.8");
        assert_eq!(fmt_num(1.0 / 3.0), "0.333333");
        assert_eq!(fmt_num(2.1347e-9), "2.13470e-9");
        assert_eq!(fmt_num(123456789.0), "123456789");
        assert_eq!(fmt_num(-0.0123456789), "-0.0123457");
    }

    #[test]
    fn error_codes() {
        assert_eq!(CliError::from(Error::InvalidParameter("x".into())).code, 2);
        assert_eq!(
            CliError::from(Error::BufferTooSmall { n_buf: 3, burst: 4 }).code,
            3
        );
        assert_eq!(CliError::from(Error::Invariant("x".into())).code, 4);
    }
}
