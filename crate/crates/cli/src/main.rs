use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anchorseek::baselines::{exact_dca, spa};
use anchorseek::datagen::{generate, read_sidecar, write_instance, GenerateParams};
use anchorseek::fas::{fas_run_seeded, DerivedParams, FasConfig};
use anchorseek::fkv::{fkv_sketch_view, FkvParams};
use anchorseek::io::load_matrix;
use anchorseek::{Error, SampledMatrix, Side};
use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "anchorseek", version, about = "Anchor detection for separable nonnegative matrices")]
struct Cli {
    /// Print diagnostics (acceptance rates, access counts) to stderr.
    #[arg(long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic separable instance and its JSON sidecar.
    Generate(GenerateArgs),
    /// Find the anchors of a matrix with the sampling pipeline.
    Solve(SolveArgs),
    /// Run a dense reference method.
    Baseline(BaselineArgs),
    /// Benchmark the pipeline over a grid of generated instances (CSV).
    Bench(BenchArgs),
    /// Sketch a matrix and write the short description as JSON.
    Index(IndexArgs),
    /// Compare a solve report against a generator sidecar.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(short = 'k', long = "rank")]
    k: usize,
    #[arg(short = 'm', long)]
    m: usize,
    #[arg(short = 'n', long)]
    n: usize,
    /// Largest mixing weight of an interior row is `1 - margin`.
    #[arg(long, default_value_t = 0.2)]
    margin: f64,
    /// Target condition number.
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output prefix; writes `<prefix>.mtx` and `<prefix>.json`.
    #[arg(short = 'o', long, default_value = "instance")]
    output: PathBuf,
}

#[derive(Args, Clone, Serialize)]
struct SolverArgs {
    #[arg(short = 'k', long = "rank")]
    k: usize,
    /// Upper bound on the condition number of the input.
    #[arg(long, default_value_t = 10.0)]
    kappa: f64,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    /// Override the total-variation budget.
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(short = 's', long)]
    projections: Option<usize>,
    #[arg(short = 'N', long)]
    votes: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    coverage_alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    c_v: f64,
    #[arg(long, default_value_t = 1.0)]
    c_u: f64,
    #[arg(long, default_value_t = 1.0)]
    c_zeta: f64,
    #[arg(long, default_value_t = 1.0)]
    fkv_oversampling: f64,
}

impl SolverArgs {
    fn config(&self) -> FasConfig {
        let mut cfg = FasConfig::new(self.k, self.kappa, self.delta);
        cfg.epsilon = self.epsilon;
        cfg.projections = self.projections;
        cfg.votes = self.votes;
        cfg.seed = self.seed;
        cfg.coverage_alpha = self.coverage_alpha;
        cfg.c_v = self.c_v;
        cfg.c_u = self.c_u;
        cfg.c_zeta = self.c_zeta;
        cfg.fkv_oversampling = self.fkv_oversampling;
        cfg
    }
}

#[derive(Args)]
struct SolveArgs {
    #[arg(short = 'i', long)]
    input: PathBuf,
    #[command(flatten)]
    solver: SolverArgs,
    /// Print the derived tolerances without solving.
    #[arg(long)]
    dry_run: bool,
    /// Report path; stdout when omitted.
    #[arg(short = 'o', long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Method {
    Spa,
    ExactDca,
}

#[derive(Args)]
struct BaselineArgs {
    #[arg(short = 'i', long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    method: Method,
    #[arg(short = 'k', long = "rank")]
    k: usize,
    /// Directions for exact-dca; defaults to `max(k, ⌈(3/α) k ln k⌉)`.
    #[arg(short = 's', long)]
    projections: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    coverage_alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short = 'o', long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Row counts of the grid (comma separated).
    #[arg(short = 'm', long = "m", value_delimiter = ',', num_args = 0.., default_values_t = [250, 500, 1000, 2000])]
    m_values: Vec<usize>,
    #[arg(short = 'n', long = "n", value_delimiter = ',', num_args = 0.., default_values_t = [300])]
    n_values: Vec<usize>,
    #[arg(short = 'k', long = "rank", value_delimiter = ',', num_args = 0.., default_values_t = [4])]
    k_values: Vec<usize>,
    /// Instances per grid cell.
    #[arg(long, default_value_t = 3)]
    trials: usize,
    #[arg(long, default_value_t = 0.2)]
    margin: f64,
    /// Condition-number target for generated instances and the solver bound.
    #[arg(long, default_value_t = 10.0)]
    kappa: f64,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(short = 's', long)]
    projections: Option<usize>,
    #[arg(short = 'N', long)]
    votes: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    c_zeta: f64,
    #[arg(long, default_value_t = 1.0)]
    fkv_oversampling: f64,
    #[arg(short = 'o', long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SideArg {
    Rows,
    Columns,
}

#[derive(Args)]
struct IndexArgs {
    #[arg(short = 'i', long)]
    input: PathBuf,
    #[arg(short = 'k', long = "rank")]
    k: usize,
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long, value_enum, default_value = "rows")]
    side: SideArg,
    #[arg(long, default_value_t = 1.0)]
    fkv_oversampling: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short = 'o', long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Generator sidecar JSON.
    #[arg(long)]
    sidecar: PathBuf,
    /// Report written by `solve` or `baseline`.
    #[arg(long)]
    report: PathBuf,
}

/// Failure with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn usage(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: 2,
        error: error.into(),
    }
}

fn solver(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: 1,
        error: error.into(),
    }
}

/// Library errors caused by bad input or parameters are usage errors.
fn classify(e: Error) -> Failure {
    match e {
        Error::InvalidParameter(_)
        | Error::Io(_)
        | Error::Parse { .. }
        | Error::Format(_)
        | Error::EmptyInput
        | Error::NonFinite { .. }
        | Error::DimensionMismatch { .. }
        | Error::ZeroRow(_) => usage(e),
        _ => solver(e),
    }
}

#[derive(Serialize)]
struct RunManifest {
    subcommand: &'static str,
    args: Vec<String>,
    input: Option<PathBuf>,
    output: Option<PathBuf>,
    config: Value,
    seed: u64,
    versions: Value,
    started_at: f64,
    finished_at: f64,
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

fn manifest_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// Writes the manifest next to `output`, or to stderr when output went to stdout.
fn emit_manifest(m: &RunManifest) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(m).map_err(usage)?;
    match &m.output {
        Some(path) => fs::write(manifest_path(path), text + "\n")
            .with_context(|| format!("writing manifest for {}", path.display()))
            .map_err(usage),
        None => {
            eprintln!("{text}");
            Ok(())
        }
    }
}

fn write_output(output: Option<&Path>, text: &str) -> Result<(), Failure> {
    match output {
        Some(path) => fs::write(path, text)
            .with_context(|| format!("writing {}", path.display()))
            .map_err(usage),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).map_err(usage)?;
            out.flush().map_err(usage)
        }
    }
}

fn load(path: &Path) -> Result<SampledMatrix, Failure> {
    load_matrix(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(usage)
}

fn to_json<T: Serialize>(v: &T) -> Result<String, Failure> {
    serde_json::to_string_pretty(v)
        .map(|s| s + "\n")
        .map_err(usage)
}

struct Ctx {
    args: Vec<String>,
    started_at: f64,
    verbose: bool,
}

impl Ctx {
    fn manifest(
        &self,
        subcommand: &'static str,
        input: Option<&Path>,
        output: Option<&Path>,
        config: Value,
        seed: u64,
    ) -> RunManifest {
        RunManifest {
            subcommand,
            args: self.args.clone(),
            input: input.map(Path::to_path_buf),
            output: output.map(Path::to_path_buf),
            config,
            seed,
            versions: json!({
                "anchorseek": anchorseek_version(),
                "anchorseek-cli": env!("CARGO_PKG_VERSION"),
            }),
            started_at: self.started_at,
            finished_at: unix_now(),
        }
    }
}

fn anchorseek_version() -> &'static str {
    // both crates are versioned together in this workspace
    env!("CARGO_PKG_VERSION")
}

fn cmd_generate(ctx: &Ctx, a: GenerateArgs) -> Result<(), Failure> {
    let mut params = GenerateParams::new(a.k, a.m, a.n, a.seed);
    params.margin = a.margin;
    params.kappa_target = a.kappa;
    let inst = generate(&params).map_err(classify)?;
    for w in &inst.warnings {
        eprintln!("warning: {w}");
    }
    let (mtx, json) = write_instance(&inst, &a.output).map_err(classify)?;
    if ctx.verbose {
        eprintln!(
            "wrote {} and {} (kappa {:.4}, anchors {:?})",
            mtx.display(),
            json.display(),
            inst.kappa,
            inst.anchors
        );
    }
    let config = serde_json::to_value(&params).map_err(usage)?;
    emit_manifest(&ctx.manifest("generate", None, Some(&a.output), config, a.seed))
}

fn cmd_solve(ctx: &Ctx, a: SolveArgs) -> Result<(), Failure> {
    let matrix = load(&a.input)?;
    let cfg = a.solver.config();
    let derived =
        DerivedParams::new(matrix.nrows(), matrix.ncols(), &cfg).map_err(classify)?;
    let config = serde_json::to_value(&cfg).map_err(usage)?;
    if a.dry_run {
        let text = to_json(&json!({
            "epsilon": derived.epsilon,
            "epsilon_v": derived.epsilon_v,
            "epsilon_u": derived.epsilon_u,
            "zeta": derived.zeta,
            "projections": derived.projections,
            "votes": derived.votes,
            "derived": derived,
        }))?;
        write_output(a.output.as_deref(), &text)?;
        return emit_manifest(&ctx.manifest("solve", Some(&a.input), a.output.as_deref(), config, cfg.seed));
    }
    let result = fas_run_seeded(&matrix, &cfg);
    let outcome = match result {
        Ok(report) => {
            if ctx.verbose {
                eprintln!(
                    "acceptance rate {:.4} over {} proposals; matrix accesses {:?}",
                    report.rejection.acceptance_rate, report.rejection.proposed, report.access
                );
                for w in &report.warnings {
                    eprintln!("warning: {w}");
                }
            }
            write_output(a.output.as_deref(), &to_json(&report)?)?;
            Ok(())
        }
        Err(e) => {
            let partial = json!({
                "status": "failed",
                "error": e.to_string(),
                "config": config,
                "derived": derived,
                "seed": cfg.seed,
            });
            write_output(a.output.as_deref(), &to_json(&partial)?)?;
            Err(classify(e))
        }
    };
    emit_manifest(&ctx.manifest("solve", Some(&a.input), a.output.as_deref(), config, cfg.seed))?;
    outcome
}

#[derive(Serialize)]
struct BaselineProjection {
    x: Vec<f64>,
    winner: usize,
}

#[derive(Serialize)]
struct BaselineReport {
    method: Method,
    anchors: Vec<usize>,
    /// Selection order for SPA.
    order: Vec<usize>,
    projections: Vec<BaselineProjection>,
    incomplete: bool,
    k: usize,
    seed: u64,
}

fn cmd_baseline(ctx: &Ctx, a: BaselineArgs) -> Result<(), Failure> {
    let dense = load(&a.input)?.to_dense();
    let report = match a.method {
        Method::Spa => {
            let r = spa(&dense, a.k).map_err(classify)?;
            let mut anchors = r.anchors.clone();
            anchors.sort_unstable();
            BaselineReport {
                method: a.method,
                incomplete: r.rank_deficient || anchors.len() < a.k,
                anchors,
                order: r.anchors,
                projections: Vec::new(),
                k: a.k,
                seed: a.seed,
            }
        }
        Method::ExactDca => {
            let s = a.projections.unwrap_or_else(|| {
                anchorseek::fas::required_projections(a.k, a.coverage_alpha).max(a.k)
            });
            let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
            let r = exact_dca(&dense, a.k, s, &mut rng).map_err(classify)?;
            BaselineReport {
                method: a.method,
                incomplete: r.anchors.len() < a.k,
                order: Vec::new(),
                projections: r
                    .directions
                    .into_iter()
                    .zip(r.winners)
                    .map(|(x, winner)| BaselineProjection { x, winner })
                    .collect(),
                anchors: r.anchors,
                k: a.k,
                seed: a.seed,
            }
        }
    };
    write_output(a.output.as_deref(), &to_json(&report)?)?;
    let config = json!({ "method": a.method, "k": a.k, "projections": a.projections });
    emit_manifest(&ctx.manifest("baseline", Some(&a.input), a.output.as_deref(), config, a.seed))
}

#[derive(Serialize)]
struct BenchRow {
    m: usize,
    n: usize,
    k: usize,
    trials: usize,
    recovery_rate: f64,
    mean_wall_ms: f64,
    mean_queries: f64,
    mean_samples: f64,
    mean_norm_lookups: f64,
    mean_accesses: f64,
    failures: usize,
}

const BENCH_HEADER: [&str; 11] = [
    "m",
    "n",
    "k",
    "trials",
    "recovery_rate",
    "mean_wall_ms",
    "mean_queries",
    "mean_samples",
    "mean_norm_lookups",
    "mean_accesses",
    "failures",
];

fn cmd_bench(ctx: &Ctx, a: BenchArgs) -> Result<(), Failure> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(BENCH_HEADER).map_err(usage)?;
    for &m in &a.m_values {
        for &n in &a.n_values {
            for &k in &a.k_values {
                let mut row = BenchRow {
                    m,
                    n,
                    k,
                    trials: a.trials,
                    recovery_rate: 0.0,
                    mean_wall_ms: 0.0,
                    mean_queries: 0.0,
                    mean_samples: 0.0,
                    mean_norm_lookups: 0.0,
                    mean_accesses: 0.0,
                    failures: 0,
                };
                let mut done = 0usize;
                for t in 0..a.trials {
                    let seed = a.seed.wrapping_add(t as u64);
                    let mut params = GenerateParams::new(k, m, n, seed);
                    params.margin = a.margin;
                    params.kappa_target = Some(a.kappa);
                    let inst = generate(&params).map_err(classify)?;
                    let matrix = SampledMatrix::from_dense(&inst.a).map_err(classify)?;
                    let mut cfg = FasConfig::new(k, a.kappa.max(inst.kappa), a.delta);
                    cfg.epsilon = a.epsilon;
                    cfg.projections = a.projections;
                    cfg.votes = a.votes;
                    cfg.seed = seed;
                    cfg.c_zeta = a.c_zeta;
                    cfg.fkv_oversampling = a.fkv_oversampling;
                    let start = Instant::now();
                    match fas_run_seeded(&matrix, &cfg) {
                        Ok(report) => {
                            row.mean_wall_ms += start.elapsed().as_secs_f64() * 1e3;
                            row.mean_queries += report.access.queries as f64;
                            row.mean_samples += report.access.samples as f64;
                            row.mean_norm_lookups += report.access.norm_lookups as f64;
                            row.mean_accesses += report.access.total() as f64;
                            if report.anchors == inst.anchors {
                                row.recovery_rate += 1.0;
                            }
                            done += 1;
                        }
                        Err(e) => {
                            if ctx.verbose {
                                eprintln!("m={m} n={n} k={k} seed={seed}: {e}");
                            }
                            row.failures += 1;
                        }
                    }
                }
                if a.trials > 0 {
                    row.recovery_rate /= a.trials as f64;
                }
                if done > 0 {
                    let d = done as f64;
                    row.mean_wall_ms /= d;
                    row.mean_queries /= d;
                    row.mean_samples /= d;
                    row.mean_norm_lookups /= d;
                    row.mean_accesses /= d;
                }
                w.serialize(&row).map_err(usage)?;
            }
        }
    }
    let bytes = w.into_inner().map_err(|e| usage(anyhow!("{e}")))?;
    let text = String::from_utf8(bytes).map_err(usage)?;
    write_output(a.output.as_deref(), &text)?;
    let config = json!({
        "m": a.m_values, "n": a.n_values, "k": a.k_values, "trials": a.trials,
        "margin": a.margin, "kappa": a.kappa, "delta": a.delta, "epsilon": a.epsilon,
        "projections": a.projections, "votes": a.votes, "c_zeta": a.c_zeta,
        "fkv_oversampling": a.fkv_oversampling,
    });
    emit_manifest(&ctx.manifest("bench", None, a.output.as_deref(), config, a.seed))
}

fn cmd_index(ctx: &Ctx, a: IndexArgs) -> Result<(), Failure> {
    let matrix = load(&a.input)?;
    let params = FkvParams::new(a.k, a.epsilon, a.delta).with_oversampling(a.fkv_oversampling);
    let side = match a.side {
        SideArg::Rows => Side::Rows,
        SideArg::Columns => Side::Columns,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut sketch = fkv_sketch_view(matrix.view(side), &params, &mut rng).map_err(classify)?;
    sketch.seed = Some(a.seed);
    if ctx.verbose {
        eprintln!(
            "rank {} from {} sampled lines; accesses {:?}",
            sketch.rank(),
            sketch.rows.len(),
            sketch.access
        );
    }
    write_output(a.output.as_deref(), &(sketch.to_json().map_err(classify)? + "\n"))?;
    let config = serde_json::to_value(params).map_err(usage)?;
    emit_manifest(&ctx.manifest("index", Some(&a.input), a.output.as_deref(), config, a.seed))
}

fn cmd_verify(ctx: &Ctx, a: VerifyArgs) -> Result<(), Failure> {
    let sidecar = read_sidecar(&a.sidecar)
        .with_context(|| format!("reading {}", a.sidecar.display()))
        .map_err(usage)?;
    let text = fs::read_to_string(&a.report)
        .with_context(|| format!("reading {}", a.report.display()))
        .map_err(usage)?;
    let report: Value = serde_json::from_str(&text).map_err(usage)?;
    let anchors: Vec<usize> = report
        .get("anchors")
        .cloned()
        .ok_or_else(|| usage(anyhow!("report has no anchors field")))
        .and_then(|v| serde_json::from_value(v).map_err(usage))?;
    let matches = anchors == sidecar.anchors;
    let summary = json!({
        "matches": matches,
        "expected": sidecar.anchors,
        "found": anchors,
    });
    write_output(None, &to_json(&summary)?)?;
    if ctx.verbose {
        eprintln!("verified {} against {}", a.report.display(), a.sidecar.display());
    }
    if matches {
        Ok(())
    } else {
        Err(solver(anyhow!("anchors differ from the sidecar")))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let ctx = Ctx {
        args: std::env::args().collect(),
        started_at: unix_now(),
        verbose: cli.verbose,
    };
    let result = match cli.command {
        Command::Generate(a) => cmd_generate(&ctx, a),
        Command::Solve(a) => cmd_solve(&ctx, a),
        Command::Baseline(a) => cmd_baseline(&ctx, a),
        Command::Bench(a) => cmd_bench(&ctx, a),
        Command::Index(a) => cmd_index(&ctx, a),
        Command::Verify(a) => cmd_verify(&ctx, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
