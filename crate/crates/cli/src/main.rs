use std::fs;
use std::io::Write;
use std::path::{Component, Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use enpart_core::bench::{find_suite, registry, SuiteParams, Workload};
use enpart_core::dsl::{parse_program, validate, Program};
use enpart_core::partitioner::{
    compute_images, decode_image, emit, image_listing, parse_interface, PartitionError, PartitionPlan, Side,
    INTERFACE_FILE, TRUSTED_FILE, UNTRUSTED_FILE,
};
use enpart_core::runtime::{CostModel, DualRuntime, ExecutionResult, RuntimeConfig, ScanPolicy};

/// Partition annotated programs into trusted and untrusted images and run them.
#[derive(Parser)]
#[command(name = "enpart", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a program and write its two images and interface descriptor.
    Partition {
        file: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Run `main` from a partitioned plan directory.
    Run {
        plan: PathBuf,
        #[command(flatten)]
        opts: RunOpts,
        /// Arguments passed to `main`.
        #[arg(last = true)]
        args: Vec<String>,
    },
    /// Run a whole program inside the enclave, with I/O through the shim.
    RunUnpartitioned {
        file: PathBuf,
        /// Run outside any enclave instead: the plain reference interpreter.
        #[arg(long)]
        no_enclave: bool,
        #[command(flatten)]
        opts: RunOpts,
        #[arg(last = true)]
        args: Vec<String>,
    },
    /// Check partitioned output against the reference interpreter.
    Compare {
        file: PathBuf,
        /// Use this plan directory instead of partitioning `file` afresh.
        #[arg(long)]
        plan: Option<PathBuf>,
    },
    /// Run a benchmark suite and print its CSV report.
    Bench {
        /// Suite name; omit with `--list`.
        #[arg(required_unless_present = "list")]
        suite: Option<String>,
        #[arg(long)]
        list: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        iterations: Option<u64>,
        #[arg(long)]
        payload_items: Option<usize>,
        #[arg(long)]
        workload: Option<Workload>,
        /// Comma-separated untrusted percentages for class_sweep.
        #[arg(long, value_delimiter = ',')]
        steps: Option<Vec<u32>>,
        #[arg(long)]
        classes: Option<usize>,
    },
    /// Print the classes, proxies, entry points and interface of one image.
    Inspect {
        plan: PathBuf,
        #[arg(long, value_enum, default_value_t = ImageArg::Trusted)]
        image: ImageArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ImageArg {
    Trusted,
    Untrusted,
}

#[derive(Clone, Copy, ValueEnum)]
enum TraceArg {
    Transitions,
}

#[derive(Args)]
struct RunOpts {
    /// Cost model file of `key = value` lines.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Print one line per transition to stderr.
    #[arg(long, value_enum)]
    trace: Option<TraceArg>,
    /// Scan only at deterministic points (the default).
    #[arg(long, conflicts_with = "live_gc_ms")]
    deterministic_gc: bool,
    /// Scan from a timer every this many milliseconds instead.
    #[arg(long)]
    live_gc_ms: Option<u64>,
    /// `after-each-gc`, `every-k=<n>` or `manual`.
    #[arg(long, value_parser = parse_scan, default_value = "after-each-gc")]
    gc_scan: ScanPolicy,
    /// Write the virtual file system into this directory.
    #[arg(long)]
    dump_fs: Option<PathBuf>,
    /// Write the metrics report to this file.
    #[arg(long)]
    metrics: Option<PathBuf>,
}

fn parse_scan(s: &str) -> Result<ScanPolicy, String> {
    match s {
        "after-each-gc" => Ok(ScanPolicy::AfterEachGc),
        "manual" => Ok(ScanPolicy::Manual),
        _ => match s.strip_prefix("every-k=").map(str::parse::<u64>) {
            Some(Ok(k)) if k > 0 => Ok(ScanPolicy::EveryK(k)),
            _ => Err(format!("expected after-each-gc, manual or every-k=<n>, got `{s}`")),
        },
    }
}

/// An error with the process exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

/// Bad input files, unreadable plans, I/O.
const EXIT_IO: u8 = 1;
/// Programs that do not parse or validate.
const EXIT_INVALID: u8 = 2;
/// Runtime errors and oracle divergence.
const EXIT_RUNTIME: u8 = 3;

fn fail(code: u8) -> impl FnOnce(anyhow::Error) -> Failure {
    move |error| Failure { code, error }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Failure { code: EXIT_IO, error }
    }
}

type CliResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn dispatch(command: Command) -> CliResult {
    match command {
        Command::Partition { file, out } => partition(&file, &out),
        Command::Run { plan, opts, args } => {
            let config = runtime_config(&opts)?;
            let rt = DualRuntime::load(&plan, config).map_err(|e| anyhow!(e)).map_err(fail(EXIT_IO))?;
            execute(rt, &opts, &args)
        }
        Command::RunUnpartitioned { file, no_enclave, opts, args } => {
            let program = load_program(&file)?;
            let config = runtime_config(&opts)?;
            let rt = if no_enclave {
                DualRuntime::reference(&program, config)
            } else {
                DualRuntime::unpartitioned(&program, config)
            };
            execute(rt, &opts, &args)
        }
        Command::Compare { file, plan } => compare(&file, plan.as_deref()),
        Command::Bench { suite, list, seed, model, out, iterations, payload_items, workload, steps, classes } => {
            if list {
                for s in registry() {
                    println!("{:<18} {}", s.name(), s.describe());
                }
                return Ok(());
            }
            let name = suite.expect("clap requires a suite without --list");
            let suite = find_suite(&name).ok_or_else(|| anyhow!("unknown suite `{name}` (see --list)"))?;
            let params = SuiteParams {
                cost: load_model(model.as_deref())?,
                seed,
                iterations,
                payload_items,
                workload,
                steps,
                n_classes: classes,
            };
            let report = suite.run(&params).map_err(|e| anyhow!(e)).map_err(fail(EXIT_RUNTIME))?;
            write_output(out.as_deref(), &report.to_csv())
        }
        Command::Inspect { plan, image } => inspect(&plan, image),
    }
}

fn load_program(file: &Path) -> Result<Program, Failure> {
    let src = fs::read_to_string(file).with_context(|| format!("cannot read {}", file.display()))?;
    let program = parse_program(&src)
        .map_err(|e| anyhow!("{}: {e}", file.display()))
        .map_err(fail(EXIT_INVALID))?;
    let report = validate(&program);
    if !report.is_ok() {
        for v in &report.violations {
            eprintln!("{}: {v}", file.display());
        }
        return Err(Failure {
            code: EXIT_INVALID,
            error: anyhow!("{} validation violation(s)", report.violations.len()),
        });
    }
    Ok(program)
}

fn load_model(path: Option<&Path>) -> Result<CostModel, Failure> {
    let Some(path) = path else { return Ok(CostModel::default()) };
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(CostModel::parse(&text).map_err(|e| anyhow!("{}: {e}", path.display()))?)
}

fn plan_for(program: &Program) -> Result<PartitionPlan, Failure> {
    compute_images(program).map_err(|e| match e {
        PartitionError::Invalid(_) => Failure { code: EXIT_INVALID, error: anyhow!(e) },
        other => Failure { code: EXIT_IO, error: anyhow!(other) },
    })
}

fn partition(file: &Path, out: &Path) -> CliResult {
    let program = load_program(file)?;
    let plan = plan_for(&program)?;
    emit(&plan, out).map_err(|e| anyhow!(e))?;
    let set = |names: &[String]| format!("{} [{}]", names.len(), names.join(", "));
    println!("wrote {TRUSTED_FILE}, {UNTRUSTED_FILE}, {INTERFACE_FILE} to {}", out.display());
    println!("T: {}", set(&plan.trusted_classes));
    println!("U: {}", set(&plan.untrusted_classes));
    println!("N: {}", set(&plan.neutral_classes));
    println!("interface records: {}", plan.interface.records.len());
    if !plan.trusted.pruned_proxies.is_empty() {
        println!("pruned from trusted image: {}", plan.trusted.pruned_proxies.join(", "));
    }
    if !plan.untrusted.pruned_proxies.is_empty() {
        println!("pruned from untrusted image: {}", plan.untrusted.pruned_proxies.join(", "));
    }
    Ok(())
}

fn runtime_config(opts: &RunOpts) -> Result<RuntimeConfig, Failure> {
    Ok(RuntimeConfig {
        cost: load_model(opts.model.as_deref())?,
        scan: opts.gc_scan,
        live_scan_period: opts.live_gc_ms.map(Duration::from_millis),
        trace: opts.trace.is_some(),
        ..RuntimeConfig::default()
    })
}

fn execute(mut rt: DualRuntime, opts: &RunOpts, args: &[String]) -> CliResult {
    let result = rt.run_main(args);
    print!("{}", result.stdout);
    std::io::stdout().flush().context("cannot write stdout")?;
    if opts.trace.is_some() {
        for event in rt.trace() {
            eprintln!("{event}");
        }
    }
    if let Some(dir) = &opts.dump_fs {
        dump_fs(dir, &result)?;
    }
    if let Some(path) = &opts.metrics {
        fs::write(path, result.metrics_report()).with_context(|| format!("cannot write {}", path.display()))?;
    }
    match result.error {
        None => Ok(()),
        Some(e) => Err(Failure { code: EXIT_RUNTIME, error: anyhow!("{e}") }),
    }
}

/// Writes every virtual file under `dir`. Paths that would escape it are
/// refused.
fn dump_fs(dir: &Path, result: &ExecutionResult) -> CliResult {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    for (name, bytes) in &result.vfs {
        let rel = Path::new(name);
        if name.is_empty() || !rel.components().all(|c| matches!(c, Component::Normal(_))) {
            return Err(anyhow!("virtual path `{name}` cannot be dumped").into());
        }
        let path = dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).with_context(|| format!("cannot create {}", parent.display()))?;
        }
        fs::write(&path, bytes).with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(())
}

fn compare(file: &Path, plan_dir: Option<&Path>) -> CliResult {
    let program = load_program(file)?;
    let split = match plan_dir {
        Some(dir) => DualRuntime::load(dir, RuntimeConfig::default()).map_err(|e| anyhow!(e))?,
        None => DualRuntime::from_plan(&plan_for(&program)?, RuntimeConfig::default()).map_err(|e| anyhow!(e))?,
    }
    .run_main(&[]);
    let reference = DualRuntime::reference(&program, RuntimeConfig::default()).run_main(&[]);
    let counts = format!("ecalls={} ocalls={} shim_calls={}", split.ecalls(), split.ocalls(), split.stats.shim_calls);
    match divergence(&reference, &split) {
        None => {
            println!("PASS {counts}");
            Ok(())
        }
        Some(why) => {
            println!("FAIL {why}");
            Err(Failure { code: EXIT_RUNTIME, error: anyhow!("partitioned run diverges from the reference") })
        }
    }
}

fn divergence(reference: &ExecutionResult, split: &ExecutionResult) -> Option<String> {
    if reference.error != split.error {
        let show = |e: &Option<_>| e.as_ref().map_or("none".to_string(), |e: &enpart_core::runtime::RuntimeError| e.kind.to_string());
        return Some(format!("error: reference {}, partitioned {}", show(&reference.error), show(&split.error)));
    }
    let (a, b) = (reference.stdout.as_bytes(), split.stdout.as_bytes());
    if a != b {
        let at = a.iter().zip(b).position(|(x, y)| x != y).unwrap_or(a.len().min(b.len()));
        return Some(format!("transcript differs at byte {at}"));
    }
    let paths = reference.vfs.keys().chain(split.vfs.keys());
    for path in paths {
        if reference.vfs.get(path) != split.vfs.get(path) {
            return Some(format!("file `{path}` differs"));
        }
    }
    None
}

fn inspect(dir: &Path, image: ImageArg) -> CliResult {
    let (file, side) = match image {
        ImageArg::Trusted => (TRUSTED_FILE, Side::Trusted),
        ImageArg::Untrusted => (UNTRUSTED_FILE, Side::Untrusted),
    };
    let read = |name: &str| {
        let path = dir.join(name);
        fs::read(&path).with_context(|| format!("format error: {} is not a plan directory (no {name})", dir.display()))
    };
    let spec = decode_image(&read(file)?).map_err(|e| anyhow!("format error: {file}: {e}"))?;
    if spec.side != side {
        return Err(anyhow!("{file}: holds the {} image", spec.side).into());
    }
    let text = String::from_utf8(read(INTERFACE_FILE)?).map_err(|_| anyhow!("{INTERFACE_FILE}: not UTF-8"))?;
    let interface = parse_interface(&text).map_err(|(line, msg)| anyhow!("{INTERFACE_FILE}:{line}: {msg}"))?;
    print!("{}", image_listing(&spec, &interface));
    Ok(())
}

fn write_output(out: Option<&Path>, text: &str) -> CliResult {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}
