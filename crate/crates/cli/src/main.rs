//! `spconv`: spectra, clipping, normalization and tensor-train compression
//! of periodic convolution kernels stored as `SPCK1` files.
//!
//! Exit codes: 0 success, 1 verification (or numerical) failure, 2 malformed
//! input or arguments, 3 dimension or rank violation, 4 degenerate input.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use spconv::bench::{run_bench, BenchConfig, RankSpec};
use spconv::control::{
    clip_to_threshold, divide_to_target, empirical_lipschitz, power_iteration_sigma1,
};
use spconv::io::{load, save, KernelFile};
use spconv::random::{identity_kernel, random_kernel, random_tt_kernel};
use spconv::spectrum::{spectrum, Spectrum};
use spconv::tensor::ConvKernel;
use spconv::tt::{
    ortho_report, orthogonalize, reconstruction_error, tt_decompose, tt_reconstruct, tt_spectrum,
    TTKernel,
};
use spconv::verify::{verify, Grid};
use spconv::{Error, TensorD};

#[derive(Parser)]
#[command(
    name = "spconv",
    version,
    about = "Exact singular values of periodic convolution layers"
)]
struct Cli {
    /// Worker threads for the numerical kernels (0 = one per core).
    #[arg(long, global = true, env = "SPCONV_THREADS", default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Singular values of a FULL or TT kernel file.
    Spectrum(SpectrumArgs),
    /// Clip singular values at a threshold and write the rebuilt kernels.
    Clip(ClipArgs),
    /// Rescale a kernel to a target largest singular value.
    Divide(DivideArgs),
    /// Compress a FULL kernel into a TT file.
    Decompose(DecomposeArgs),
    /// Compare fast spectra against the dense oracle over a grid.
    Verify(VerifyArgs),
    /// Time full against TT spectra and report parameter counts.
    Bench(BenchArgs),
    /// Write a generated kernel file.
    Gen(GenArgs),
    /// Empirical Lipschitz ratios on random probe directions.
    Lipschitz(LipschitzArgs),
}

#[derive(Args)]
struct Geometry {
    /// Override the signal size stored in the file.
    #[arg(long)]
    n: Option<usize>,
    /// Override the stride stored in the file.
    #[arg(long)]
    s: Option<usize>,
}

#[derive(Args)]
struct SpectrumArgs {
    input: PathBuf,
    #[command(flatten)]
    geometry: Geometry,
    /// Emit `p1,p2,value` rows per frequency instead of a flat sorted list.
    #[arg(long)]
    grouped: bool,
    /// CSV destination (stdout if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ClipArgs {
    input: PathBuf,
    #[command(flatten)]
    geometry: Geometry,
    #[arg(long, default_value_t = 1.0)]
    delta: f64,
    /// Training-loop cadence recorded in the report; one invocation clips once.
    #[arg(long, default_value_t = 100)]
    every: usize,
    /// Directory receiving expanded.spck, truncated.spck and report.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DivideArgs {
    input: PathBuf,
    #[command(flatten)]
    geometry: Geometry,
    #[arg(long)]
    target: f64,
    #[arg(long, default_value_t = 1)]
    iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DecomposeArgs {
    input: PathBuf,
    #[arg(long)]
    r1: usize,
    #[arg(long)]
    r2: usize,
    /// Make the frame matrices orthonormal, absorbing the rest into the core.
    #[arg(long)]
    orthogonalize: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, value_enum, default_value_t = GridArg::Small)]
    grid: GridArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Perturb the kernel seen by the fast path (negative control).
    #[arg(long, hide = true)]
    inject_corruption: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum GridArg {
    Small,
    Full,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 16)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    s: usize,
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, value_delimiter = ',', default_value = "64,128")]
    c_list: Vec<usize>,
    /// Ranks as integers or fractions of c, e.g. `32,c/2,c/3`.
    #[arg(long, value_delimiter = ',', default_value = "c/2,c/3")]
    r_list: Vec<String>,
    #[arg(long, default_value_t = 5)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Identity,
    Random,
    Zero,
    Tt,
}

#[derive(Args)]
struct GenArgs {
    #[arg(value_enum)]
    kind: Kind,
    #[arg(long, default_value_t = 3)]
    k: usize,
    /// Input channels (also the channel count of identity kernels).
    #[arg(long, default_value_t = 1)]
    c_in: usize,
    #[arg(long, default_value_t = 1)]
    c_out: usize,
    #[arg(long, default_value_t = 1)]
    s: usize,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    r1: usize,
    #[arg(long, default_value_t = 1)]
    r2: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Multiply all weights by this factor.
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct LipschitzArgs {
    input: PathBuf,
    #[command(flatten)]
    geometry: Geometry,
    #[arg(long, default_value_t = 1000)]
    probes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(e) = err.downcast_ref::<Error>() {
        return match e {
            Error::Format(_)
            | Error::NonFinite { .. }
            | Error::InvalidArgument(_)
            | Error::Io(_) => 2,
            Error::Shape(_) | Error::Dimension(_) | Error::Rank(_) => 3,
            Error::Degenerate(_) => 4,
            Error::TooLarge { .. } | Error::Svd(_) | Error::ImaginaryResidue { .. } => 1,
        };
    }
    if err.downcast_ref::<io::Error>().is_some() {
        return 2;
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(err) = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
    {
        eprintln!("error: cannot configure thread pool: {err}");
        return ExitCode::from(1);
    }
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn run(command: Command) -> Result<u8> {
    match command {
        Command::Spectrum(a) => cmd_spectrum(a),
        Command::Clip(a) => cmd_clip(a),
        Command::Divide(a) => cmd_divide(a),
        Command::Decompose(a) => cmd_decompose(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Gen(a) => cmd_gen(a),
        Command::Lipschitz(a) => cmd_lipschitz(a),
    }
}

/// Loads a kernel file and applies geometry overrides, revalidating them.
fn load_with(path: &Path, geometry: &Geometry) -> Result<KernelFile> {
    let file = load(path).with_context(|| format!("reading {}", path.display()))?;
    let s = geometry.s.unwrap_or(file.stride());
    let n = geometry.n.unwrap_or(file.signal_size());
    Ok(match file {
        KernelFile::Full(k) => KernelFile::Full(ConvKernel::new(k.into_weights(), s, n)?),
        KernelFile::Tt(t) => KernelFile::Tt(TTKernel::new(
            t.k1().clone(),
            t.k2().clone(),
            t.k3().clone(),
            s,
            n,
        )?),
    })
}

/// The full kernel of a file, multiplying out TT factors.
fn full_kernel(file: KernelFile) -> Result<ConvKernel> {
    Ok(match file {
        KernelFile::Full(k) => k,
        KernelFile::Tt(t) => tt_reconstruct(&t)?,
    })
}

/// Shortest representation that parses back to the same value.
fn num(v: f64) -> String {
    format!("{v:?}")
}

fn csv_writer(out: Option<&Path>) -> Result<csv::Writer<Box<dyn Write>>> {
    let sink: Box<dyn Write> = match out {
        Some(p) => Box::new(io::BufWriter::new(
            fs::File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    };
    Ok(csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(sink))
}

fn write_spectrum(sp: &Spectrum, grouped: bool, out: Option<&Path>) -> Result<()> {
    let mut w = csv_writer(out)?;
    match sp.grouping().filter(|_| grouped) {
        Some(groups) => {
            w.write_record(["p1", "p2", "value"])?;
            for g in groups {
                for &v in &g.values {
                    w.write_record([g.p1.to_string(), g.p2.to_string(), num(v)])?;
                }
            }
        }
        None => {
            for &v in sp.values() {
                w.write_record([num(v)])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn cmd_spectrum(a: SpectrumArgs) -> Result<u8> {
    let sp = match load_with(&a.input, &a.geometry)? {
        KernelFile::Full(k) => spectrum(&k)?,
        KernelFile::Tt(t) => {
            let sp = tt_spectrum(&t)?;
            eprintln!(
                "implied zero singular values (not listed): {}",
                sp.implied_zeros()
            );
            sp
        }
    };
    write_spectrum(&sp, a.grouped, a.out.as_deref())?;
    Ok(0)
}

fn cmd_clip(a: ClipArgs) -> Result<u8> {
    let kern = full_kernel(load_with(&a.input, &a.geometry)?)?;
    let outcome = clip_to_threshold(&kern, a.delta)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    save(
        &KernelFile::Full(outcome.expanded),
        a.out.join("expanded.spck"),
    )?;
    save(
        &KernelFile::Full(outcome.truncated),
        a.out.join("truncated.spck"),
    )?;
    let r = outcome.report;
    let mut w = csv_writer(Some(&a.out.join("report.csv")))?;
    w.write_record([
        "delta",
        "every",
        "sigma1_pre",
        "sigma1_expanded",
        "sigma1_truncated",
    ])?;
    w.write_record([
        num(a.delta),
        a.every.to_string(),
        num(r.sigma1_pre),
        num(r.sigma1_expanded),
        num(r.sigma1_truncated),
    ])?;
    w.flush()?;
    println!(
        "sigma1 pre={} expanded={} truncated={}",
        num(r.sigma1_pre),
        num(r.sigma1_expanded),
        num(r.sigma1_truncated)
    );
    Ok(0)
}

fn cmd_divide(a: DivideArgs) -> Result<u8> {
    let kern = full_kernel(load_with(&a.input, &a.geometry)?)?;
    let scaled = divide_to_target(&kern, a.target, a.iters, a.seed)?;
    let est = power_iteration_sigma1(&kern, a.iters, a.seed)?.estimate;
    save(&KernelFile::Full(scaled), &a.out)?;
    println!(
        "sigma1 estimate={} iters={} scale={}",
        num(est),
        a.iters,
        num(a.target / est)
    );
    Ok(0)
}

fn cmd_decompose(a: DecomposeArgs) -> Result<u8> {
    let kern = match load(&a.input).with_context(|| format!("reading {}", a.input.display()))? {
        KernelFile::Full(k) => k,
        KernelFile::Tt(_) => {
            return Err(
                Error::InvalidArgument("decompose expects a FULL kernel file".into()).into(),
            )
        }
    };
    let mut tt = tt_decompose(&kern, a.r1, a.r2)?;
    if a.orthogonalize {
        let out = orthogonalize(&tt)?;
        for d in &out.deficiencies {
            eprintln!(
                "warning: {:?} frame is rank deficient (smallest singular value {:e})",
                d.frame, d.smallest_singular_value
            );
        }
        tt = out.tt;
    }
    let report = ortho_report(&tt);
    let err = reconstruction_error(&kern, &tt)?;
    save(&KernelFile::Tt(tt), &a.out)?;
    let mut w = csv_writer(None)?;
    w.write_record(["reconstruction_error", "left_residual", "right_residual"])?;
    w.write_record([
        num(err),
        num(report.left_residual),
        num(report.right_residual),
    ])?;
    w.flush()?;
    Ok(0)
}

fn cmd_verify(a: VerifyArgs) -> Result<u8> {
    let grid = match a.grid {
        GridArg::Small => Grid::Small,
        GridArg::Full => Grid::Full,
    };
    let report = verify(grid, a.seed, a.inject_corruption)?;
    let mut w = csv_writer(a.out.as_deref())?;
    w.write_record(["case_id", "max_rel_deviation"])?;
    for c in &report.cases {
        w.write_record([c.id.clone(), num(c.max_deviation)])?;
    }
    w.flush()?;
    let failed = report.cases.iter().filter(|c| !c.passed).count();
    if failed == 0 {
        eprintln!("verify: {} cases passed", report.cases.len());
        return Ok(0);
    }
    let worst = report.worst().expect("failed cases exist");
    eprintln!(
        "verify: {failed} of {} cases failed; worst {} (deviation {:e})",
        report.cases.len(),
        worst.id,
        worst.max_deviation
    );
    Ok(1)
}

fn cmd_bench(a: BenchArgs) -> Result<u8> {
    let r_list = a
        .r_list
        .iter()
        .map(|t| t.parse::<RankSpec>())
        .collect::<spconv::Result<Vec<_>>>()?;
    let cfg = BenchConfig {
        n: a.n,
        s: a.s,
        k: a.k,
        c_list: a.c_list,
        r_list,
        reps: a.reps,
        seed: a.seed,
    };
    let records = run_bench(&cfg)?;
    let mut w = csv_writer(a.out.as_deref())?;
    w.write_record([
        "method",
        "n",
        "k",
        "c",
        "r",
        "s",
        "wall_seconds",
        "params",
        "bytes_f32",
        "bytes_f64",
        "speedup",
        "memory_ratio",
    ])?;
    for r in &records {
        w.write_record([
            r.method.as_str().to_string(),
            r.n.to_string(),
            r.k.to_string(),
            r.c.to_string(),
            r.r.to_string(),
            r.s.to_string(),
            num(r.wall_seconds),
            r.params.to_string(),
            r.bytes_f32().to_string(),
            r.bytes_f64().to_string(),
            num(r.speedup),
            num(r.memory_ratio),
        ])?;
    }
    w.flush()?;
    Ok(0)
}

fn cmd_gen(a: GenArgs) -> Result<u8> {
    let file = match a.kind {
        Kind::Identity => KernelFile::Full(identity_kernel(a.c_in, a.s, a.n)?.scaled(a.scale)?),
        Kind::Random => KernelFile::Full(
            random_kernel(a.k, a.c_in, a.c_out, a.s, a.n, a.seed)?.scaled(a.scale)?,
        ),
        Kind::Zero => KernelFile::Full(ConvKernel::new(
            TensorD::zeros(vec![a.k, a.k, a.c_in, a.c_out])?,
            a.s,
            a.n,
        )?),
        Kind::Tt => {
            let t = random_tt_kernel(a.k, a.c_in, a.c_out, a.r1, a.r2, a.s, a.n, a.seed)?;
            KernelFile::Tt(TTKernel::new(
                t.k1().clone(),
                t.k2().scale(a.scale)?,
                t.k3().clone(),
                a.s,
                a.n,
            )?)
        }
    };
    save(&file, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    Ok(0)
}

fn cmd_lipschitz(a: LipschitzArgs) -> Result<u8> {
    let kern = full_kernel(load_with(&a.input, &a.geometry)?)?;
    let lip = empirical_lipschitz(&kern, a.probes, a.seed)?;
    let sigma1 = spectrum(&kern)?.sigma1();
    let mut w = csv_writer(None)?;
    w.write_record(["probes", "max_ratio", "sigma1"])?;
    w.write_record([a.probes.to_string(), num(lip.max_ratio), num(sigma1)])?;
    w.flush()?;
    Ok(0)
}
