//! `lb2`: compress dense matrices into scaled-binary layers and poke at
//! the results: decay-rate sweeps, rotation-refinement traces, memory
//! budgets, spectrum reports, and kernel timings, all emitted as CSV for
//! external plotting.
//!
//! Exit codes: 0 success, 1 usage, 2 I/O or corrupt file, 3 numeric
//! failure (starved budget, degenerate input, non-convergence).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use lb2_cli::container::{
    load_layer, load_matrix, save_matrix, ContainerError, MatrixDtype,
};
use lb2_core::budget::{littlebit_path_bits, model_aggregate, parse_manifest, LayerDims};
use lb2_core::factorize::truncated_factorize;
use lb2_core::kernel::bench_forward;
use lb2_core::metrics::{coherence, distortion_profile, mse};
use lb2_core::quantize::{compress_layer_traced, decompress, CompressOptions, Method};
use lb2_core::spectral::{estimate_gamma, synth_power_law, SpectrumModel};
use lb2_core::sweep::{gamma_grid, run_cell, Arm, SweepConfig};
use lb2_core::ndarray::s;

#[derive(Parser)]
#[command(name = "lb2", version, about = "Scaled-binary matrix compression toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Compress an LB2M matrix file into an LB2C layer file.
    Compress(CompressArgs),
    /// Reconstruct a dense LB2M matrix from an LB2C layer file.
    Decompress(DecompressArgs),
    /// Generate a matrix with a power-law singular spectrum.
    Synth(SynthArgs),
    /// Grid of (gamma, bpp, method, seed) compression cells, as CSV.
    SweepBreakeven(SweepArgs),
    /// Per-iteration rotation-refinement trace at a fixed rank, as CSV.
    ItqTrace(TraceArgs),
    /// Memory accounting for a layer manifest.
    Budget(BudgetArgs),
    /// Spectrum, coherence, and distortion report for a matrix file.
    Analyze(AnalyzeArgs),
    /// Time the packed forward kernel of a compressed file.
    MatvecBench(BenchArgs),
}

#[derive(Args)]
struct CompressArgs {
    /// Input matrix (LB2M).
    input: PathBuf,
    /// Total bit budget per original parameter.
    #[arg(long)]
    bpp: f64,
    /// Latent rotation: standard, rotate, or itq.
    #[arg(long, default_value = "standard")]
    method: String,
    /// Fit a second path to the first path's quantization error.
    #[arg(long)]
    residual: bool,
    /// Refinement rounds; read only by --method itq.
    #[arg(long, default_value_t = 50)]
    iters: usize,
    /// RNG seed; omitted, a random one is drawn and printed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output path; defaults to the input with extension .lb2c.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DecompressArgs {
    /// Input layer (LB2C).
    input: PathBuf,
    /// Output path; defaults to the input with extension .rec.lb2m.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Matrix file to report reconstruction MSE against.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Element type of the output payload.
    #[arg(long, default_value = "f64")]
    dtype: String,
}

#[derive(Args)]
struct SynthArgs {
    /// Output rows.
    #[arg(long)]
    d_out: usize,
    /// Output columns.
    #[arg(long)]
    d_in: usize,
    /// Spectral decay exponent: singular value k is scale * k^(-gamma).
    #[arg(long)]
    gamma: f64,
    /// Leading spectrum coefficient.
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    /// Modeled spectrum length; defaults to min(d_out, d_in).
    #[arg(long)]
    rank: Option<usize>,
    /// RNG seed; omitted, a random one is drawn and printed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    /// Element type of the output payload.
    #[arg(long, default_value = "f64")]
    dtype: String,
}

#[derive(Args)]
struct SweepArgs {
    /// Decay-rate grid: a comma list (0.1,0.3) or start:end:step (0.1:0.8:0.05).
    #[arg(long)]
    gammas: String,
    /// Square matrix edge length.
    #[arg(long)]
    size: usize,
    /// Comma list of bit budgets.
    #[arg(long)]
    bpp: String,
    /// Comma list of arms: standard, rotate, itq, fp16.
    #[arg(long, default_value = "standard,rotate,itq,fp16")]
    methods: String,
    /// Comma list of seeds; omitted, one random seed is drawn and printed.
    #[arg(long)]
    seeds: Option<String>,
    /// Two-path layout for the binary arms.
    #[arg(long)]
    residual: bool,
    /// Refinement rounds for itq arms.
    #[arg(long, default_value_t = 50)]
    iters: usize,
    /// Leading spectrum coefficient of the synthetic matrices.
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    /// Worker threads; defaults to LB2_JOBS, then the machine's parallelism.
    #[arg(long)]
    jobs: Option<usize>,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TraceArgs {
    /// Input matrix (LB2M).
    input: PathBuf,
    /// Factorization rank of the refined latent space.
    #[arg(long)]
    rank: usize,
    /// Refinement rounds to trace.
    #[arg(long, default_value_t = 100)]
    iters: usize,
    /// RNG seed; omitted, a random one is drawn and printed.
    #[arg(long)]
    seed: Option<u64>,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BudgetArgs {
    /// Manifest file: one `name d_out d_in method bpp` per line, # comments.
    #[arg(long)]
    manifest: PathBuf,
    /// Output style: table or csv.
    #[arg(long, default_value = "table")]
    format: String,
    /// Parameters outside the listed layers, charged at 16 bits each.
    #[arg(long, default_value_t = 0)]
    extra_params: u64,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Input matrix (LB2M).
    input: PathBuf,
    /// Rank of the latent factor whose distortion profile is reported;
    /// defaults to the full min(d_out, d_in).
    #[arg(long)]
    rank: Option<usize>,
    /// How many leading singular values to report.
    #[arg(long, default_value_t = 16)]
    top_k: usize,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Input layer (LB2C).
    input: PathBuf,
    /// Timed kernel invocations.
    #[arg(long, default_value_t = 200)]
    trials: usize,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum CliError {
    Usage(String),
    Io(String),
    Numeric(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Io(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Io(m) | CliError::Numeric(m) => m,
        }
    }
}

fn core_err(e: lb2_core::Error) -> CliError {
    match e {
        lb2_core::Error::Parse(m) => CliError::Usage(m),
        other => CliError::Numeric(other.to_string()),
    }
}

fn container_err(path: &Path, e: ContainerError) -> CliError {
    let message = format!("{}: {e}", path.display());
    match e {
        ContainerError::Io(_) | ContainerError::Corrupt(_) => CliError::Io(message),
        ContainerError::Numeric(_) => CliError::Numeric(message),
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn load_matrix_at(path: &Path) -> Result<lb2_core::WeightMatrix, CliError> {
    Ok(load_matrix(path).map_err(|e| container_err(path, e))?.0)
}

fn load_layer_at(path: &Path) -> Result<lb2_core::quantize::CompressedLayer, CliError> {
    load_layer(path).map_err(|e| container_err(path, e))
}

fn save_matrix_at(
    path: &Path,
    m: &lb2_core::WeightMatrix,
    dtype: MatrixDtype,
) -> Result<(), CliError> {
    save_matrix(path, m, dtype).map_err(|e| container_err(path, e))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp
                | clap::error::ErrorKind::DisplayVersion => 0u8,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.cmd {
        Cmd::Compress(a) => run_compress(a),
        Cmd::Decompress(a) => run_decompress(a),
        Cmd::Synth(a) => run_synth(a),
        Cmd::SweepBreakeven(a) => run_sweep(a),
        Cmd::ItqTrace(a) => run_itq_trace(a),
        Cmd::Budget(a) => run_budget(a),
        Cmd::Analyze(a) => run_analyze(a),
        Cmd::MatvecBench(a) => run_matvec_bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

/// Explicit seed, or a fresh random one printed so the run can be redone.
fn resolve_seed(explicit: Option<u64>) -> u64 {
    match explicit {
        Some(s) => s,
        None => {
            let s: u64 = rand::random();
            println!("seed {s}");
            s
        }
    }
}

fn parse_method(token: &str) -> Result<Method, CliError> {
    token.parse().map_err(|e: lb2_core::Error| CliError::Usage(e.to_string()))
}

fn parse_dtype(token: &str) -> Result<MatrixDtype, CliError> {
    token.parse().map_err(CliError::Usage)
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| io_err(path, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run_compress(a: CompressArgs) -> Result<(), CliError> {
    let method = parse_method(&a.method)?;
    let seed = resolve_seed(a.seed);
    let w = load_matrix_at(&a.input)?;
    let opts = CompressOptions {
        budget_bpp: a.bpp,
        method,
        residual: a.residual,
        seed,
        iterations: a.iters,
        reuse_rotation: false,
    };
    let (layer, stats) = compress_layer_traced(&w, &opts).map_err(core_err)?;

    // Round-trip through the encoded bytes before measuring, so the
    // printed MSE is the error of the file as stored (f32 scales), which
    // an offline recompute from disk reproduces exactly.
    let bytes = lb2_cli::container::encode_layer(&layer);
    let stored = lb2_cli::container::decode_layer(&bytes).map_err(|e| match e {
        ContainerError::Numeric(inner) => {
            CliError::Numeric(format!("scales do not survive f32 storage: {inner}"))
        }
        other => CliError::Io(other.to_string()),
    })?;
    let err = mse(&decompress(&stored), &w).map_err(core_err)?;

    let out = a.out.unwrap_or_else(|| a.input.with_extension("lb2c"));
    fs::write(&out, &bytes).map_err(|e| io_err(&out, e))?;

    let dims = LayerDims::new(w.nrows(), w.ncols()).map_err(core_err)?;
    let spent = littlebit_path_bits(dims, layer.rank(), layer.paths().len());
    println!("wrote {} ({} bytes)", out.display(), bytes.len());
    let mut summary = format!(
        "seed {seed} rank {} paths {} achieved_bpp {:.6} mse {:.9e}",
        layer.rank(),
        layer.paths().len(),
        spent.bpp(),
        err
    );
    for (i, p) in stats.paths.iter().enumerate() {
        write!(
            summary,
            " p{n}_u_lambda {:.6}/{:.6} p{n}_v_lambda {:.6}/{:.6}",
            p.u_mean_lambda,
            p.u_max_lambda,
            p.v_mean_lambda,
            p.v_max_lambda,
            n = i + 1
        )
        .expect("formatting into a String cannot fail");
    }
    println!("{summary}");
    Ok(())
}

fn run_decompress(a: DecompressArgs) -> Result<(), CliError> {
    let dtype = parse_dtype(&a.dtype)?;
    let layer = load_layer_at(&a.input)?;
    // Read the reference before writing anything, in case the caller
    // points the output at it.
    let reference = match &a.reference {
        Some(path) => Some(load_matrix_at(path)?),
        None => None,
    };
    let w = decompress(&layer);
    let out = a
        .out
        .unwrap_or_else(|| a.input.with_extension("rec.lb2m"));
    save_matrix_at(&out, &w, dtype)?;
    println!("wrote {} ({}x{} {})", out.display(), w.nrows(), w.ncols(), dtype.name());
    if let Some(reference) = reference {
        let err = mse(&w, &reference).map_err(core_err)?;
        println!("mse {err:.9e}");
    }
    Ok(())
}

fn run_synth(a: SynthArgs) -> Result<(), CliError> {
    let dtype = parse_dtype(&a.dtype)?;
    let seed = resolve_seed(a.seed);
    let rank = a.rank.unwrap_or_else(|| a.d_out.min(a.d_in));
    let model = SpectrumModel::new(a.gamma, a.scale, rank).map_err(core_err)?;
    let w = synth_power_law(a.d_out, a.d_in, &model, seed).map_err(core_err)?;
    save_matrix_at(&a.out, &w, dtype)?;
    println!(
        "wrote {} ({}x{} {}, gamma {}, seed {seed})",
        a.out.display(),
        a.d_out,
        a.d_in,
        dtype.name(),
        a.gamma
    );
    Ok(())
}

fn parse_f64_list(spec: &str, what: &str) -> Result<Vec<f64>, CliError> {
    spec.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Usage(format!("bad {what} value '{t}'")))
        })
        .collect()
}

fn parse_gammas(spec: &str) -> Result<Vec<f64>, CliError> {
    if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(CliError::Usage(format!(
                "gamma range '{spec}' must be start:end:step"
            )));
        }
        let nums = parse_f64_list(&parts.join(","), "gamma")?;
        gamma_grid(nums[0], nums[1], nums[2])
            .map_err(|e| CliError::Usage(e.to_string()))
    } else {
        parse_f64_list(spec, "gamma")
    }
}

fn parse_seeds(spec: Option<&str>) -> Result<Vec<u64>, CliError> {
    match spec {
        Some(list) => list
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<u64>()
                    .map_err(|_| CliError::Usage(format!("bad seed '{t}'")))
            })
            .collect(),
        None => Ok(vec![resolve_seed(None)]),
    }
}

fn parse_arms(spec: &str) -> Result<Vec<Arm>, CliError> {
    let mut arms = Vec::new();
    for token in spec.split(',') {
        let arm = match token.trim() {
            "fp16" => Arm::Fp16,
            other => Arm::Binary(parse_method(other)?),
        };
        if !arms.contains(&arm) {
            arms.push(arm);
        }
    }
    if arms.is_empty() {
        return Err(CliError::Usage("no arms given".into()));
    }
    Ok(arms)
}

fn job_count(flag: Option<usize>) -> Result<usize, CliError> {
    if let Some(j) = flag {
        if j == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        return Ok(j);
    }
    if let Ok(var) = std::env::var("LB2_JOBS") {
        return match var.parse::<usize>() {
            Ok(j) if j >= 1 => Ok(j),
            _ => Err(CliError::Usage(format!("bad LB2_JOBS value '{var}'"))),
        };
    }
    Ok(std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn run_sweep(a: SweepArgs) -> Result<(), CliError> {
    let gammas = parse_gammas(&a.gammas)?;
    let bpps = parse_f64_list(&a.bpp, "bpp")?;
    let arms = parse_arms(&a.methods)?;
    let seeds = parse_seeds(a.seeds.as_deref())?;
    let jobs = job_count(a.jobs)?;

    let mut cells = Vec::new();
    for &gamma in &gammas {
        for &bpp in &bpps {
            for &seed in &seeds {
                cells.push((gamma, bpp, seed));
            }
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Io(format!("worker pool: {e}")))?;
    let cell_results: Result<Vec<_>, lb2_core::Error> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(gamma, bpp, seed)| {
                let cfg = SweepConfig {
                    d_out: a.size,
                    d_in: a.size,
                    bpp,
                    arms: arms.clone(),
                    residual: a.residual,
                    iterations: a.iters,
                    spectrum_scale: a.scale,
                };
                run_cell(gamma, seed, &cfg).map(|rs| (gamma, bpp, seed, rs))
            })
            .collect()
    });
    let cell_results = cell_results.map_err(core_err)?;

    let mut rows: Vec<(f64, f64, &'static str, f64, usize, u64)> = cell_results
        .iter()
        .flat_map(|(gamma, bpp, seed, results)| {
            results
                .iter()
                .map(move |r| (*gamma, *bpp, r.arm.name(), r.mse, r.rank, *seed))
        })
        .collect();
    rows.sort_by(|x, y| {
        x.0.total_cmp(&y.0)
            .then(x.1.total_cmp(&y.1))
            .then(x.2.cmp(y.2))
            .then(x.5.cmp(&y.5))
    });

    let mut csv = String::from("gamma,bpp,method,mse,rank,seed\n");
    for (gamma, bpp, method, err, rank, seed) in rows {
        writeln!(csv, "{gamma},{bpp},{method},{err:.9e},{rank},{seed}")
            .expect("formatting into a String cannot fail");
    }
    emit(a.out.as_deref(), &csv)
}

fn run_itq_trace(a: TraceArgs) -> Result<(), CliError> {
    let seed = resolve_seed(a.seed);
    let w = load_matrix_at(&a.input)?;
    let full = w.nrows().min(w.ncols());
    if a.rank == 0 || a.rank > full {
        return Err(CliError::Usage(format!("--rank {} outside 1..={full}", a.rank)));
    }
    let factors = truncated_factorize(&w, a.rank).map_err(core_err)?;
    let trace =
        lb2_core::factorize::joint_itq_trace(&factors, a.iters, seed, false).map_err(core_err)?;

    let mut csv = String::from("iter,l1_objective,mean_lambda,max_lambda,wall_ms\n");
    for t in 0..trace.l1_objective.len() {
        writeln!(
            csv,
            "{t},{:.9e},{:.9e},{:.9e},{:.3}",
            trace.l1_objective[t], trace.mean_lambda[t], trace.max_lambda[t], trace.wall_ms[t]
        )
        .expect("formatting into a String cannot fail");
    }
    emit(a.out.as_deref(), &csv)
}

fn run_budget(a: BudgetArgs) -> Result<(), CliError> {
    if !matches!(a.format.as_str(), "table" | "csv") {
        return Err(CliError::Usage(format!(
            "unknown format '{}' (expected table|csv)",
            a.format
        )));
    }
    let text = fs::read_to_string(&a.manifest).map_err(|e| io_err(&a.manifest, e))?;
    let entries = parse_manifest(&text).map_err(core_err)?;
    if entries.is_empty() {
        return Err(CliError::Usage(format!(
            "manifest {} lists no layers",
            a.manifest.display()
        )));
    }
    let report = model_aggregate(&entries, a.extra_params).map_err(core_err)?;

    let gb = |bits: u64| bits as f64 / 8e9;
    match a.format.as_str() {
        "csv" => {
            let mut csv = String::from("name,d_out,d_in,method,rank,total_bits,bpp\n");
            for layer in &report.layers {
                writeln!(
                    csv,
                    "{},{},{},{},{},{},{:.6}",
                    layer.name,
                    layer.dims.d_out(),
                    layer.dims.d_in(),
                    layer.method.name(),
                    layer.rank.map_or(String::new(), |r| r.to_string()),
                    layer.report.total_bits(),
                    layer.report.bpp()
                )
                .expect("formatting into a String cannot fail");
            }
            writeln!(csv, "body,,,,,{},{:.6}", report.body.total_bits(), report.body.bpp())
                .expect("formatting into a String cannot fail");
            writeln!(csv, "total,,,,,{},{:.6}", report.total.total_bits(), report.total.bpp())
                .expect("formatting into a String cannot fail");
            print!("{csv}");
        }
        "table" => {
            let name_width = report
                .layers
                .iter()
                .map(|l| l.name.len())
                .max()
                .unwrap_or(4)
                .max(4);
            println!(
                "{:<name_width$}  {:>7} {:>7}  {:<9} {:>6} {:>14} {:>9}",
                "name", "d_out", "d_in", "method", "rank", "total_bits", "bpp"
            );
            for layer in &report.layers {
                println!(
                    "{:<name_width$}  {:>7} {:>7}  {:<9} {:>6} {:>14} {:>9.6}",
                    layer.name,
                    layer.dims.d_out(),
                    layer.dims.d_in(),
                    layer.method.name(),
                    layer.rank.map_or("-".to_string(), |r| r.to_string()),
                    layer.report.total_bits(),
                    layer.report.bpp()
                );
            }
            println!(
                "body: {} bits, {:.3} GB, {:.6} bpp",
                report.body.total_bits(),
                gb(report.body.total_bits()),
                report.body.bpp()
            );
            println!(
                "total: {} bits, {:.3} GB, {:.6} bpp ({} extra params @16)",
                report.total.total_bits(),
                gb(report.total.total_bits()),
                report.total.bpp(),
                a.extra_params
            );
        }
        _ => unreachable!("format validated on entry"),
    }
    Ok(())
}

fn run_analyze(a: AnalyzeArgs) -> Result<(), CliError> {
    let w = load_matrix_at(&a.input)?;
    let full = w.nrows().min(w.ncols());
    let rank = a.rank.unwrap_or(full);
    if rank == 0 || rank > full {
        return Err(CliError::Usage(format!(
            "--rank {rank} outside 1..={full}"
        )));
    }
    let factors = truncated_factorize(&w, full).map_err(core_err)?;

    // Both latent factors carry sigma^(1/2) per column, so a column's
    // energy is its singular value.
    let sigma: Vec<f64> = (0..full)
        .map(|k| factors.u().column(k).iter().map(|x| x * x).sum())
        .collect();
    let positive: Vec<f64> = sigma.iter().copied().take_while(|&s| s > 0.0).collect();
    let gamma_hat = estimate_gamma(&positive).map_err(core_err)?;

    let unit_basis = |m: &lb2_core::ndarray::Array2<f64>| -> Result<_, CliError> {
        let mut b = m.slice(s![.., ..rank]).to_owned();
        for k in 0..rank {
            let norm = b.column(k).iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(CliError::Numeric(format!(
                    "factor column {k} is zero; pass --rank at most the matrix's effective rank"
                )));
            }
            b.column_mut(k).iter_mut().for_each(|x| *x /= norm);
        }
        Ok(b)
    };
    let coherence_u = coherence(unit_basis(factors.u())?.view()).map_err(core_err)?;
    let coherence_v = coherence(unit_basis(factors.v())?.view()).map_err(core_err)?;
    let profile = distortion_profile(factors.u().slice(s![.., ..rank])).map_err(core_err)?;

    let top_k = a.top_k.min(full);
    let mut csv = String::from("key,value\n");
    let mut line = |key: &str, value: String| {
        writeln!(csv, "{key},{value}").expect("formatting into a String cannot fail");
    };
    line("d_out", w.nrows().to_string());
    line("d_in", w.ncols().to_string());
    line("rank", rank.to_string());
    line("gamma_hat", format!("{gamma_hat:.8e}"));
    line("coherence_u", format!("{coherence_u:.8e}"));
    line("coherence_v", format!("{coherence_v:.8e}"));
    line("u_mean_lambda", format!("{:.8e}", profile.mean_lambda));
    line("u_max_lambda", format!("{:.8e}", profile.max_lambda));
    line("u_argmax_row", profile.argmax_row.to_string());
    for (k, &s) in sigma.iter().take(top_k).enumerate() {
        line(&format!("sigma_{:04}", k + 1), format!("{s:.8e}"));
    }
    emit(a.out.as_deref(), &csv)
}

fn run_matvec_bench(a: BenchArgs) -> Result<(), CliError> {
    let layer = load_layer_at(&a.input)?;
    let report = bench_forward(&layer, a.trials).map_err(core_err)?;
    let csv = format!(
        "d_out,d_in,rank,paths,median_ns,p95_ns,dense_median_ns,dense_flops,packed_add_ops\n\
         {},{},{},{},{:.1},{:.1},{:.1},{},{}\n",
        report.d_out,
        report.d_in,
        report.rank,
        report.paths,
        report.median_ns,
        report.p95_ns,
        report.dense_median_ns,
        report.dense_flops,
        report.packed_add_ops
    );
    emit(a.out.as_deref(), &csv)
}
