//! `tlump` — compress finite Markov target problems and certify the error.
//!
//! The pipeline has four stages, one subcommand each:
//!
//! 1. `generate` writes a benchmark chain (`coupon`, `random`, or `lifted`)
//!    plus a `.meta.json` sidecar describing how it was produced.
//! 2. `refine` runs a resolution schedule against a chain and writes the
//!    resulting filtration as JSON, printing per-step block counts.
//! 3. `aggregate` averages the chain over one filtration step under a state
//!    measure, writing the block-level chain and a `.blockmap.json` sidecar
//!    that ties chain, filtration, and aggregate together by digest.
//! 4. `distance` evaluates the certified discounted distance between a
//!    chain and an aggregated chain through a block map.
//!
//! Exit codes: 0 success, 2 usage error (bad flags or parameters),
//! 3 data error (unreadable, invalid, or inconsistent files).
//!
//! All outputs are deterministic: rerunning a command with the same inputs
//! produces byte-identical files regardless of `--threads`.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use tlump::{
    aggregate, coupon_collector, distance_d, geometric_block_measure, lifted_chain, random_chain,
    run_target_algorithm, uniform_measure, AggregatedTargetProblem, Error as CoreError, Filtration,
    StateMeasure, TargetProblem,
};
use tlump_cli::error::{CliError, CliResult};
use tlump_cli::formats::{read_chain, write_chain};
use tlump_cli::hash::sha256_hex;
use tlump_cli::json::{render, BlockmapFile, FiltrationFile, MetaFile, PartitionFile, ReportFile};

#[derive(Parser)]
#[command(
    name = "tlump",
    version,
    about = "Compress finite Markov target problems and certify the error"
)]
struct Cli {
    /// Worker threads for parallel kernels (0 = automatic). Falls back to
    /// the TL_THREADS environment variable. Affects speed only, never
    /// results.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Print the machine-readable JSON summary instead of the text one.
    #[arg(long, global = true)]
    json: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a benchmark chain plus a .meta.json sidecar.
    Generate {
        #[command(subcommand)]
        kind: GenerateKind,
    },
    /// Refine a chain along a resolution schedule into a filtration.
    Refine(RefineArgs),
    /// Average a chain over one filtration step into a block-level chain.
    Aggregate(AggregateArgs),
    /// Certified distance between a chain and an aggregated chain.
    Distance(DistanceArgs),
}

#[derive(Subcommand)]
enum GenerateKind {
    /// Coupon-collector chain on the non-empty coupon subsets.
    Coupon(CouponArgs),
    /// Seeded sparse random chain with absorbing trailing target states.
    Random(RandomArgs),
    /// Chain lifted from a block-level chain by splitting every block.
    Lifted(LiftedArgs),
}

#[derive(Args)]
struct CouponArgs {
    /// Number of coupon types (2..=24); the chain has 2^n - 1 states.
    #[arg(long)]
    n: usize,

    /// Comma-separated draw probabilities, one per coupon (default:
    /// uniform). Must sum to 1.
    #[arg(long)]
    p: Option<String>,

    /// Discount factor in (0, 1).
    #[arg(long, default_value_t = 0.5)]
    beta: f64,

    /// Output chain file; `<out>.meta.json` is written alongside.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RandomArgs {
    /// Number of states.
    #[arg(long)]
    states: usize,

    /// Fraction of columns given mass in each non-target row, in (0, 1].
    #[arg(long)]
    density: f64,

    /// Number of absorbing target states (the trailing states).
    #[arg(long)]
    target_size: usize,

    /// RNG seed; the same seed always produces the same chain.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Discount factor in (0, 1).
    #[arg(long, default_value_t = 0.5)]
    beta: f64,

    /// Output chain file; `<out>.meta.json` is written alongside.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct LiftedArgs {
    /// Block-level chain file. Its target must be exactly state 0 and its
    /// first row absorbing; its discount factor is inherited.
    #[arg(long)]
    block_chain: PathBuf,

    /// Comma-separated number of states per block, one per block-chain
    /// state, each in 1..=1000.
    #[arg(long)]
    sizes: String,

    /// RNG seed for splitting block mass across member states.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Output chain file; `<out>.meta.json` and `<out>.partition.json`
    /// (the generating partition) are written alongside.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RefineArgs {
    /// Input chain file.
    #[arg(long)]
    chain: PathBuf,

    /// Comma-separated resolutions, positive and non-increasing; a trailing
    /// 0 refines on to the exact fixpoint.
    #[arg(long)]
    schedule: String,

    /// Slack when comparing block-restricted rows in exact steps.
    #[arg(long, default_value_t = 0.0)]
    delta: f64,

    /// Output filtration JSON file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AggregateArgs {
    /// Input chain file (the one the filtration was computed from).
    #[arg(long)]
    chain: PathBuf,

    /// Filtration JSON file produced by `refine`.
    #[arg(long)]
    filtration: PathBuf,

    /// Filtration step to aggregate at: a 0-based index or "last".
    #[arg(long, default_value = "last")]
    step: String,

    /// State measure weighting the rows of each block.
    #[arg(long, value_enum, default_value_t = MeasureKind::Uniform)]
    measure: MeasureKind,

    /// Output block-level chain file; `<out>.blockmap.json` is written
    /// alongside.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MeasureKind {
    /// Every state weighs 1/N.
    Uniform,
    /// Mass halves along the refinement tree, then splits the same way
    /// inside each final block.
    Geometric,
}

impl MeasureKind {
    fn name(self) -> &'static str {
        match self {
            MeasureKind::Uniform => "uniform",
            MeasureKind::Geometric => "geometric",
        }
    }
}

#[derive(Args)]
struct DistanceArgs {
    /// Original chain file.
    #[arg(long)]
    chain: PathBuf,

    /// Aggregated chain file produced by `aggregate`.
    #[arg(long)]
    aggregated: PathBuf,

    /// Block map tying the two together (written by `aggregate`).
    #[arg(long)]
    blockmap: PathBuf,

    /// Certified bound on the truncated series tail.
    #[arg(long, default_value_t = 1e-6)]
    tail_tol: f64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help and --version land here too; they exit 0.
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    configure_threads(cli.threads)?;
    match cli.command {
        Command::Generate { kind } => match kind {
            GenerateKind::Coupon(args) => cmd_generate_coupon(args, cli.json),
            GenerateKind::Random(args) => cmd_generate_random(args, cli.json),
            GenerateKind::Lifted(args) => cmd_generate_lifted(args, cli.json),
        },
        Command::Refine(args) => cmd_refine(args, cli.json),
        Command::Aggregate(args) => cmd_aggregate(args, cli.json),
        Command::Distance(args) => cmd_distance(args, cli.json),
    }
}

/// Applies `--threads`, falling back to `TL_THREADS`. `0` (or neither
/// source set) keeps the automatic pool size.
fn configure_threads(flag: Option<usize>) -> CliResult<()> {
    let requested = match flag {
        Some(n) => Some(n),
        None => match std::env::var("TL_THREADS") {
            Ok(text) => {
                let n = text.trim().parse().map_err(|_| {
                    CliError::usage(format!(
                        "TL_THREADS must be a non-negative integer, got {text:?}"
                    ))
                })?;
                Some(n)
            }
            Err(std::env::VarError::NotPresent) => None,
            Err(std::env::VarError::NotUnicode(_)) => {
                return Err(CliError::usage(
                    "TL_THREADS must be a non-negative integer",
                ))
            }
        },
    };
    if let Some(n) = requested {
        if n > 0 {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| CliError::usage(format!("cannot use {n} threads: {e}")))?;
        }
    }
    Ok(())
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
}

fn sidecar(out: &Path, suffix: &str) -> PathBuf {
    PathBuf::from(format!("{}{suffix}", out.display()))
}

fn parse_csv_f64(text: &str, what: &str) -> CliResult<Vec<f64>> {
    text.split(',')
        .map(|tok| {
            let tok = tok.trim();
            tok.parse()
                .map_err(|_| CliError::usage(format!("bad {what} entry {tok:?}")))
        })
        .collect()
}

fn parse_csv_usize(text: &str, what: &str) -> CliResult<Vec<usize>> {
    text.split(',')
        .map(|tok| {
            let tok = tok.trim();
            tok.parse()
                .map_err(|_| CliError::usage(format!("bad {what} entry {tok:?}")))
        })
        .collect()
}

/// Writes the chain and its metadata sidecar; prints the summary.
fn emit_generated(
    problem: &TargetProblem,
    out: &Path,
    kind: &str,
    seed: Option<u64>,
    params: serde_json::Value,
    json: bool,
) -> CliResult<String> {
    let chain_text = write_chain(problem);
    write_text(out, &chain_text)?;
    let meta = MetaFile {
        format: tlump_cli::json::META_FORMAT.to_string(),
        version: 1,
        kind: kind.to_string(),
        n_states: problem.n_states(),
        n_entries: problem.nnz(),
        beta: problem.beta(),
        seed,
        params,
    };
    let meta_path = sidecar(out, ".meta.json");
    write_text(&meta_path, &render(&meta))?;
    if json {
        print!("{}", render(&meta));
    } else {
        println!(
            "wrote {}: {} states, {} transitions, beta {}",
            out.display(),
            problem.n_states(),
            problem.nnz(),
            problem.beta()
        );
        println!("wrote {}", meta_path.display());
    }
    Ok(sha256_hex(chain_text.as_bytes()))
}

fn cmd_generate_coupon(args: CouponArgs, json: bool) -> CliResult<()> {
    let p = match &args.p {
        Some(text) => {
            let p = parse_csv_f64(text, "--p")?;
            if p.len() != args.n {
                return Err(CliError::usage(format!(
                    "--p lists {} probabilities for {} coupons",
                    p.len(),
                    args.n
                )));
            }
            p
        }
        None => {
            if args.n == 0 {
                return Err(CliError::usage("--n must be at least 2"));
            }
            vec![1.0 / args.n as f64; args.n]
        }
    };
    let problem = coupon_collector(args.n, &p, args.beta).map_err(CliError::usage)?;
    emit_generated(
        &problem,
        &args.out,
        "coupon",
        None,
        serde_json::json!({ "n": args.n, "p": p }),
        json,
    )?;
    Ok(())
}

fn cmd_generate_random(args: RandomArgs, json: bool) -> CliResult<()> {
    let problem = random_chain(
        args.states,
        args.density,
        args.target_size,
        args.seed,
        args.beta,
    )
    .map_err(CliError::usage)?;
    emit_generated(
        &problem,
        &args.out,
        "random",
        Some(args.seed),
        serde_json::json!({
            "density": args.density,
            "states": args.states,
            "target_size": args.target_size,
        }),
        json,
    )?;
    Ok(())
}

fn cmd_generate_lifted(args: LiftedArgs, json: bool) -> CliResult<()> {
    let sizes = parse_csv_usize(&args.sizes, "--sizes")?;
    let block_text = read_text(&args.block_chain)?;
    let block = read_chain(&block_text)?;
    if block.target() != [0] {
        return Err(CliError::data(format!(
            "block chain target must be exactly state 0, got {:?}",
            block.target()
        )));
    }
    let k = block.n_states();
    let mut matrix = vec![vec![0.0; k]; k];
    for (x, row) in matrix.iter_mut().enumerate() {
        let (cols, vals) = block.row(x);
        for (&y, &p) in cols.iter().zip(vals) {
            row[y as usize] = p;
        }
    }
    let (problem, partition) =
        lifted_chain(&matrix, &sizes, block.beta(), args.seed).map_err(|e| match e {
            CoreError::BadBlockSize { .. } | CoreError::LengthMismatch { .. } => {
                CliError::usage(e)
            }
            other => CliError::data(other),
        })?;
    let chain_sha256 = emit_generated(
        &problem,
        &args.out,
        "lifted",
        Some(args.seed),
        serde_json::json!({
            "block_chain_sha256": sha256_hex(block_text.as_bytes()),
            "sizes": sizes,
        }),
        json,
    )?;

    let partition_path = sidecar(&args.out, ".partition.json");
    write_text(
        &partition_path,
        &render(&PartitionFile::new(&partition, chain_sha256)),
    )?;
    if !json {
        println!("wrote {}", partition_path.display());
    }
    Ok(())
}

fn cmd_refine(args: RefineArgs, json: bool) -> CliResult<()> {
    let schedule = parse_csv_f64(&args.schedule, "--schedule")?;
    let chain_text = read_text(&args.chain)?;
    let problem = read_chain(&chain_text)?;
    let filtration =
        run_target_algorithm(&problem, &schedule, args.delta).map_err(|e| match e {
            CoreError::EmptySchedule
            | CoreError::BadScheduleEntry { .. }
            | CoreError::InvalidDelta(_)
            | CoreError::InvalidEpsilon(_) => CliError::usage(e),
            other => CliError::data(other),
        })?;
    let file = FiltrationFile::new(&filtration, problem.beta(), sha256_hex(chain_text.as_bytes()));
    write_text(&args.out, &render(&file))?;
    if json {
        print!("{}", render(&file));
    } else {
        println!("step  epsilon                 blocks");
        for (i, step) in filtration.steps().iter().enumerate() {
            let eps = if step.epsilon.is_infinite() {
                "infinity".to_string()
            } else {
                format!("{}", step.epsilon)
            };
            println!("{i:<5} {eps:<23} {}", step.partition.n_blocks());
        }
        println!(
            "fixpoint reached: {}",
            if filtration.reached_fixpoint() { "yes" } else { "no" }
        );
        println!("wrote {}", args.out.display());
    }
    Ok(())
}

fn cmd_aggregate(args: AggregateArgs, json: bool) -> CliResult<()> {
    let chain_text = read_text(&args.chain)?;
    let problem = read_chain(&chain_text)?;
    let chain_sha256 = sha256_hex(chain_text.as_bytes());

    let filtration_text = read_text(&args.filtration)?;
    let filtration_file = FiltrationFile::parse(&filtration_text)?;
    if filtration_file.chain_sha256 != chain_sha256 {
        return Err(CliError::data(format!(
            "filtration {} was computed from a different chain (digest {} != {})",
            args.filtration.display(),
            filtration_file.chain_sha256,
            chain_sha256
        )));
    }
    let filtration = filtration_file.to_filtration()?;
    if filtration.n_states() != problem.n_states() {
        return Err(CliError::data(format!(
            "filtration covers {} states but the chain has {}",
            filtration.n_states(),
            problem.n_states()
        )));
    }

    let step = parse_step(&args.step, filtration.steps().len())?;
    let partition = &filtration.steps()[step].partition;
    let measure = build_measure(args.measure, &problem, &filtration, step)?;
    let aggregated = aggregate(&problem, partition, &measure).map_err(CliError::data)?;

    let mut rows = Vec::with_capacity(aggregated.n_blocks());
    for i in 0..aggregated.n_blocks() {
        rows.push(aggregated.row(i));
    }
    let target_blocks: Vec<usize> = aggregated
        .target_blocks()
        .iter()
        .map(|&b| b as usize)
        .collect();
    let block_problem =
        TargetProblem::new(aggregated.n_blocks(), rows, target_blocks, aggregated.beta())
            .expect("aggregated chain is structurally sound");
    let aggregated_text = write_chain(&block_problem);
    write_text(&args.out, &aggregated_text)?;

    let blockmap = BlockmapFile {
        format: tlump_cli::json::BLOCKMAP_FORMAT.to_string(),
        version: 1,
        chain_sha256,
        filtration_sha256: sha256_hex(filtration_text.as_bytes()),
        aggregated_sha256: sha256_hex(aggregated_text.as_bytes()),
        step_index: step,
        measure: args.measure.name().to_string(),
        n_states: problem.n_states(),
        n_blocks: aggregated.n_blocks(),
        beta: aggregated.beta(),
        target_blocks: aggregated.target_blocks().to_vec(),
        block_of: partition.assignments().to_vec(),
    };
    let blockmap_path = sidecar(&args.out, ".blockmap.json");
    write_text(&blockmap_path, &render(&blockmap))?;

    if json {
        print!("{}", render(&blockmap));
    } else {
        println!(
            "aggregated {} states into {} blocks (step {}, {} measure)",
            problem.n_states(),
            aggregated.n_blocks(),
            step,
            args.measure.name()
        );
        println!("wrote {}", args.out.display());
        println!("wrote {}", blockmap_path.display());
    }
    Ok(())
}

fn parse_step(text: &str, n_steps: usize) -> CliResult<usize> {
    if text == "last" {
        return Ok(n_steps - 1);
    }
    let idx: usize = text.parse().map_err(|_| {
        CliError::usage(format!("step must be a 0-based index or \"last\", got {text:?}"))
    })?;
    if idx >= n_steps {
        return Err(CliError::usage(format!(
            "step {idx} out of range; the filtration has steps 0..={}",
            n_steps - 1
        )));
    }
    Ok(idx)
}

/// The measure never depends on filtration steps after the one being
/// aggregated, so the geometric measure is built on the truncated run.
fn build_measure(
    kind: MeasureKind,
    problem: &TargetProblem,
    filtration: &Filtration,
    step: usize,
) -> CliResult<StateMeasure> {
    match kind {
        MeasureKind::Uniform => Ok(uniform_measure(problem)),
        MeasureKind::Geometric => {
            let steps = filtration.steps()[..=step].to_vec();
            let truncated = Filtration::new(steps, false).map_err(CliError::data)?;
            Ok(geometric_block_measure(&truncated))
        }
    }
}

fn cmd_distance(args: DistanceArgs, json: bool) -> CliResult<()> {
    if !args.tail_tol.is_finite() || args.tail_tol <= 0.0 {
        return Err(CliError::usage(format!(
            "--tail-tol must be positive and finite, got {}",
            args.tail_tol
        )));
    }

    let chain_text = read_text(&args.chain)?;
    let problem = read_chain(&chain_text)?;
    let chain_sha256 = sha256_hex(chain_text.as_bytes());

    let aggregated_text = read_text(&args.aggregated)?;
    let block_problem = read_chain(&aggregated_text)?;
    let aggregated_sha256 = sha256_hex(aggregated_text.as_bytes());

    let blockmap = BlockmapFile::parse(&read_text(&args.blockmap)?)?;
    if blockmap.chain_sha256 != chain_sha256 {
        return Err(CliError::data(format!(
            "block map {} refers to a different chain (digest {} != {})",
            args.blockmap.display(),
            blockmap.chain_sha256,
            chain_sha256
        )));
    }
    if blockmap.aggregated_sha256 != aggregated_sha256 {
        return Err(CliError::data(format!(
            "block map {} refers to a different aggregated chain (digest {} != {})",
            args.blockmap.display(),
            blockmap.aggregated_sha256,
            aggregated_sha256
        )));
    }
    let partition = blockmap.to_partition()?;

    let k = block_problem.n_states();
    let mut matrix = vec![vec![0.0; k]; k];
    for (x, row) in matrix.iter_mut().enumerate() {
        let (cols, vals) = block_problem.row(x);
        for (&y, &p) in cols.iter().zip(vals) {
            row[y as usize] = p;
        }
    }
    let target_blocks: Vec<usize> = block_problem.target().iter().map(|&b| b as usize).collect();
    let aggregated =
        AggregatedTargetProblem::new(matrix, target_blocks, block_problem.beta())
            .map_err(CliError::data)?;

    let report = distance_d(&problem, &aggregated, &partition, args.tail_tol)
        .map_err(CliError::data)?;
    let (lo, hi) = report.interval();

    if json {
        let file = ReportFile {
            format: tlump_cli::json::REPORT_FORMAT.to_string(),
            version: 1,
            chain_sha256,
            aggregated_sha256,
            beta: problem.beta(),
            tail_tol: args.tail_tol,
            horizon: report.horizon,
            value: report.value,
            tail_bound: report.tail_bound,
            upper_bound: hi,
        };
        print!("{}", render(&file));
    } else {
        println!("value:      {}", report.value);
        println!("interval:   [{lo}, {hi}]");
        println!("horizon:    {}", report.horizon);
        println!("tail bound: {}", report.tail_bound);
    }
    Ok(())
}
