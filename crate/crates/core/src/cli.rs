//! Command-line front end. `main.rs` only forwards to [`main_entry`].
//!
//! Exit codes: 0 success, 1 a verification check failed, 2 usage or
//! configuration error, 3 parameter or domain error, 4 overflow or
//! divergence, 5 quadrature or series failure, 6 growth or stability
//! violation, 7 missing input, I/O or artifact error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::cauchy::{solve_homogeneous_with, solve_inhomogeneous_with, InitialData, SourceTerm};
use crate::config::{parse_config, CompareKernel, RunConfig};
use crate::error::{Error, Result};
use crate::kernels::{bessel_kernel, KernelArgs};
use crate::montecarlo::{
    histogram, ks_one_sample, ks_two_sample, reflected_bm_cdf, sample_bm_norm, simulate, BinSpec, SimConfig,
};
use crate::parametrix::{assemble_fs, fit_constants, write_atomic, FundamentalSolutionApprox};
use crate::specfun::{bessel_i, bessel_i_scaled, g_alpha, gamma, mittag_leffler, BesselOrder, MittagLefflerParams};
use crate::verify::{density_cdf, run_battery, Density, VerifyContext};

#[derive(Debug, Parser)]
#[command(name = "singular-heat", version, about = "Singular heat equation toolkit")]
pub struct Cli {
    /// TOML run configuration; built-in defaults when absent.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Random seed (overrides the config).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 1 gives bit-reproducible runs.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Tolerance profile: default, fast or strict.
    #[arg(long, global = true)]
    pub tol_profile: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate a special function.
    #[command(hide = true)]
    Specfun {
        #[command(subcommand)]
        op: SpecfunCmd,
    },
    /// Closed-form Bessel kernels.
    Kernel {
        #[command(subcommand)]
        op: KernelCmd,
    },
    /// Build, save and evaluate the parametrix approximation.
    Fs {
        #[command(subcommand)]
        op: FsCmd,
    },
    /// Solve the Cauchy problem on the configured grid.
    Solve(ArtifactArg),
    /// Simulate the process and write an ensemble summary.
    Simulate,
    /// Monte Carlo comparisons.
    Mc {
        #[command(subcommand)]
        op: McCmd,
    },
    /// Run verification checks and write a JSON report.
    Verify {
        /// Check names or `all`; repeat or separate with commas.
        #[arg(long, value_delimiter = ',')]
        battery: Vec<String>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SpecialFn {
    Gamma,
    BesselI,
    BesselIScaled,
    MittagLeffler,
    GAlpha,
}

#[derive(Debug, Subcommand)]
pub enum SpecfunCmd {
    Eval {
        #[arg(long = "fn", value_enum)]
        func: SpecialFn,
        /// Order, first Mittag-Leffler parameter or α.
        #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
        a: f64,
        /// Second Mittag-Leffler parameter.
        #[arg(long, allow_hyphen_values = true, default_value_t = 1.0)]
        b: f64,
        #[arg(long, allow_hyphen_values = true)]
        z: f64,
    },
}

#[derive(Debug, Subcommand)]
pub enum KernelCmd {
    /// Print `p_a(t,x,s,y)`.
    Eval {
        #[arg(long, allow_hyphen_values = true)]
        a: f64,
        #[arg(long)]
        t: f64,
        #[arg(long)]
        x: f64,
        #[arg(long, default_value_t = 0.0)]
        s: f64,
        #[arg(long)]
        y: f64,
    },
    /// Write `kernel_table.csv` over the `[kernel]` grid.
    Table,
}

#[derive(Debug, Args)]
pub struct ArtifactArg {
    /// Artifact to load instead of building from the config.
    #[arg(long)]
    pub artifact: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum FsCmd {
    /// Build caches for `[fs] sources` and save the artifact.
    Build,
    /// Evaluate `[fs] points` from a saved artifact into `fs_eval.csv`.
    Eval(ArtifactArg),
}

#[derive(Debug, Subcommand)]
pub enum McCmd {
    /// KS distance and histogram z-scores against a reference kernel.
    Compare,
}

/// Parse arguments, run, and map the outcome to an exit code.
pub fn main_entry<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", p.display()))))?;
            parse_config(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(p) = &cli.tol_profile {
        cfg.tol_profile = p.clone();
        cfg.tolerance_table()?;
    }
    Ok(cfg)
}

/// Run one command; `Ok(false)` means a verification check failed.
pub fn run(cli: Cli) -> Result<bool> {
    let cfg = load_config(&cli)?;
    match cli.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Config(e.to_string()))?;
            pool.install(|| dispatch(&cli.command, &cfg))
        }
        None => dispatch(&cli.command, &cfg),
    }
}

fn out_path(cfg: &RunConfig, name: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(&cfg.out)?;
    Ok(if name.is_absolute() { name.to_path_buf() } else { cfg.out.join(name) })
}

fn csv_bytes<R: Serialize>(rows: &[R]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    }
    w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

fn json_bytes<T: Serialize + ?Sized>(v: &T) -> Result<Vec<u8>> {
    let mut b = serde_json::to_vec_pretty(v).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    b.push(b'\n');
    Ok(b)
}

#[derive(Serialize)]
struct KernelRow {
    t: f64,
    x: f64,
    s: f64,
    y: f64,
    p: f64,
}

fn dispatch(cmd: &Command, cfg: &RunConfig) -> Result<bool> {
    match cmd {
        Command::Specfun { op: SpecfunCmd::Eval { func, a, b, z } } => {
            let v = match func {
                SpecialFn::Gamma => gamma(*z)?,
                SpecialFn::BesselI => bessel_i(BesselOrder::new(*a)?, *z)?,
                SpecialFn::BesselIScaled => bessel_i_scaled(BesselOrder::new(*a)?, *z)?,
                SpecialFn::MittagLeffler => mittag_leffler(MittagLefflerParams::new(*a, *b)?, *z)?,
                SpecialFn::GAlpha => g_alpha(*a, *z)?,
            };
            println!("{v:.17e}");
        }
        Command::Kernel { op: KernelCmd::Eval { a, t, x, s, y } } => {
            let v = bessel_kernel(BesselOrder::new(*a)?, KernelArgs::new(*t, *x, *s, *y)?)?;
            println!("{v:.17e}");
        }
        Command::Kernel { op: KernelCmd::Table } => {
            let k = &cfg.kernel;
            let ord = BesselOrder::new(k.a)?;
            let mut rows = Vec::new();
            for &t in &k.times {
                for &x in &k.xs {
                    let p = bessel_kernel(ord, KernelArgs::new(k.s + t, x, k.s, k.y)?)?;
                    rows.push(KernelRow { t: k.s + t, x, s: k.s, y: k.y, p });
                }
            }
            let path = out_path(cfg, Path::new("kernel_table.csv"))?;
            write_atomic(&path, &csv_bytes(&rows)?)?;
            println!("kernel table: {} rows -> {}", rows.len(), path.display());
        }
        Command::Fs { op: FsCmd::Build } => {
            let field = cfg.build_field()?;
            let fs = assemble_fs(&field, cfg.quad, cfg.series, cfg.fs.horizon)?;
            let sources: Vec<(f64, f64)> = cfg.fs.sources.iter().map(|s| (s[0], s[1])).collect();
            fs.prebuild(&sources)?;
            if cfg.fs.fit {
                let pts: Vec<KernelArgs> = cfg
                    .fs
                    .points
                    .iter()
                    .map(|p| KernelArgs::new(p[0], p[1], p[2], p[3]))
                    .collect::<Result<_>>()?;
                fs.prebuild(&pts.iter().map(|a| (a.s, a.y)).collect::<Vec<_>>())?;
                fs.set_constants(fit_constants(&fs, &pts, cfg.fs.delta, 2.0)?);
            }
            let path = out_path(cfg, &cfg.fs.artifact)?;
            fs.save(&path)?;
            println!(
                "fs build: field {} sources {} terms {} tail {:.3e} -> {}",
                field.name(),
                fs.cached_sources(),
                fs.terms_used(),
                fs.tail_estimate(),
                path.display()
            );
        }
        Command::Fs { op: FsCmd::Eval(arg) } => {
            let fs = load_fs(cfg, arg, true)?;
            let mut rows = Vec::new();
            for p in &cfg.fs.points {
                let v = fs.evaluate(p[0], p[1], p[2], p[3])?;
                rows.push(KernelRow { t: p[0], x: p[1], s: p[2], y: p[3], p: v });
            }
            let path = out_path(cfg, Path::new("fs_eval.csv"))?;
            write_atomic(&path, &csv_bytes(&rows)?)?;
            println!("fs eval: {} points -> {}", rows.len(), path.display());
        }
        Command::Solve(arg) => {
            let fs = load_fs(cfg, arg, false)?;
            let sc = &cfg.solve;
            let grid = sc.grid();
            let sol = match &sc.source {
                Some(src) => solve_inhomogeneous_with(&fs, &SourceTerm::from_expr(src, sc.delta)?, sc.s, &grid, &sc.options())?,
                None => {
                    let data = match InitialData::preset(&sc.initial, sc.delta) {
                        Ok(d) => d,
                        Err(_) => InitialData::from_expr(&sc.initial, sc.delta)?,
                    };
                    solve_homogeneous_with(&fs, &data, sc.s, &grid, &sc.options())?
                }
            };
            let path = out_path(cfg, Path::new("solution.csv"))?;
            write_atomic(&path, sol.to_csv().as_bytes())?;
            println!("solve: {} points -> {}", sol.points.len(), path.display());
        }
        Command::Simulate => {
            let ens = simulate(&sim_config(cfg)?)?;
            let rows = ensemble_summary(&ens);
            let path = out_path(cfg, Path::new("ensemble_summary.csv"))?;
            write_atomic(&path, &csv_bytes(&rows)?)?;
            if cfg.sim.dump {
                let dump = out_path(cfg, Path::new("paths.bin"))?;
                ens.write_binary(&dump)?;
                println!("simulate: raw paths -> {}", dump.display());
            }
            println!(
                "simulate: {} paths, {} recorded times -> {}",
                ens.n_paths,
                ens.n_times(),
                path.display()
            );
        }
        Command::Mc { op: McCmd::Compare } => {
            let report = mc_compare(cfg)?;
            let path = out_path(cfg, Path::new("mc_compare.json"))?;
            write_atomic(&path, &json_bytes(&report)?)?;
            let table = out_path(cfg, Path::new("mc_histogram.csv"))?;
            write_atomic(&table, &csv_bytes(&report.bins)?)?;
            println!(
                "mc compare: {} KS = {:.4e}, max |z| = {:.2} -> {}",
                report.kernel,
                report.ks,
                report.max_abs_z,
                path.display()
            );
        }
        Command::Verify { battery } => {
            let names = if battery.is_empty() { cfg.verify.battery.clone() } else { battery.clone() };
            let ctx = VerifyContext::from_config(cfg)?;
            let reports = run_battery(&names, &ctx)?;
            let dir = out_path(cfg, Path::new("verify"))?;
            std::fs::create_dir_all(&dir)?;
            for r in &reports {
                write_atomic(&dir.join(format!("{}.csv", r.check_name)), r.residual_csv()?.as_bytes())?;
                println!("verify: {:<20} {} ({:.2}s)", r.check_name, if r.pass { "pass" } else { "FAIL" }, r.runtime_s);
            }
            let path = out_path(cfg, Path::new("verify_report.json"))?;
            write_atomic(&path, &json_bytes(&reports)?)?;
            let ok = reports.iter().all(|r| r.pass);
            println!("verify: {} checks, {} -> {}", reports.len(), if ok { "all passed" } else { "failures" }, path.display());
            return Ok(ok);
        }
    }
    Ok(true)
}

/// The artifact named on the command line or in the config; otherwise a
/// fresh build when `require` is false.
fn load_fs(cfg: &RunConfig, arg: &ArtifactArg, require: bool) -> Result<Arc<FundamentalSolutionApprox>> {
    let path = match &arg.artifact {
        Some(p) => Some(p.clone()),
        None => {
            let p = if cfg.fs.artifact.is_absolute() { cfg.fs.artifact.clone() } else { cfg.out.join(&cfg.fs.artifact) };
            (require || p.exists()).then_some(p)
        }
    };
    match path {
        Some(p) => {
            if !p.exists() {
                return Err(Error::Io(std::io::Error::new(
                    std::io::ErrorKind::NotFound,
                    format!("artifact {} not found", p.display()),
                )));
            }
            Ok(Arc::new(FundamentalSolutionApprox::load(&p)?))
        }
        None => Ok(Arc::new(assemble_fs(&cfg.build_field()?, cfg.quad, cfg.series, cfg.fs.horizon)?)),
    }
}

fn sim_config(cfg: &RunConfig) -> Result<SimConfig> {
    let s = &cfg.sim;
    let mut c = SimConfig::new(cfg.build_field()?, s.x0, s.t_start, s.t_end, s.dt, s.n_paths, cfg.seed);
    c.drift = s.drift.into();
    c.record_stride = s.record_stride;
    c.noise_scale = s.noise_scale;
    Ok(c)
}

#[derive(Serialize)]
struct SummaryRow {
    t: f64,
    mean: f64,
    std: f64,
    min: f64,
    q50: f64,
    max: f64,
}

fn ensemble_summary(ens: &crate::montecarlo::PathEnsemble) -> Vec<SummaryRow> {
    let n = ens.n_times();
    (0..n)
        .map(|j| {
            let mut col: Vec<f64> = (0..ens.n_paths).map(|i| ens.positions[i * n + j]).collect();
            col.sort_by(f64::total_cmp);
            let m = col.iter().sum::<f64>() / col.len() as f64;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / col.len() as f64;
            SummaryRow {
                t: ens.times[j],
                mean: m,
                std: var.sqrt(),
                min: col[0],
                q50: col[col.len() / 2],
                max: col[col.len() - 1],
            }
        })
        .collect()
}

#[derive(Debug, Serialize)]
struct BinRow {
    lo: f64,
    hi: f64,
    density: f64,
    std_err: f64,
    z: f64,
}

#[derive(Debug, Serialize)]
struct CompareReport {
    kernel: String,
    t: f64,
    x0: f64,
    n_paths: usize,
    dt: f64,
    seed: u64,
    ks: f64,
    max_abs_z: f64,
    bins: Vec<BinRow>,
}

fn mc_compare(cfg: &RunConfig) -> Result<CompareReport> {
    let s = &cfg.sim;
    let tau = s.t_end - s.t_start;
    let field = cfg.build_field()?;
    let mut sim = sim_config(cfg)?;
    let kind = cfg.compare.kernel;
    let cdf: Box<dyn Fn(f64) -> f64> = match kind {
        CompareKernel::ReflectedBm => Box::new(move |y| reflected_bm_cdf(tau, s.x0, y)),
        CompareKernel::Bessel => {
            let a = field
                .constant_value()
                .ok_or_else(|| Error::Config("the bessel reference needs a CONST field".into()))?;
            let x0 = s.x0;
            Box::new(move |y| crate::kernels::bessel_kernel_cdf(a, tau, x0, y).unwrap_or(f64::NAN))
        }
        CompareKernel::BmNorm2 => {
            let mut reference = sample_bm_norm(2, s.x0, tau, s.n_paths, cfg.seed.wrapping_add(1));
            reference.sort_by(f64::total_cmp);
            let n = reference.len() as f64;
            Box::new(move |y| reference.partition_point(|v| *v <= y) as f64 / n)
        }
        CompareKernel::Fs => {
            sim.field = field.time_reversed(s.t_end);
            let fs = Arc::new(assemble_fs(&field, cfg.quad, cfg.series, cfg.fs.horizon.max(tau))?);
            let table = density_cdf(&Density::for_fs(fs), s.t_end, s.x0, s.t_start, 0.25)?;
            Box::new(move |y| table.eval(y))
        }
    };
    let ens = simulate(&sim)?;
    let fin = ens.final_positions();
    let ks = match kind {
        CompareKernel::BmNorm2 => ks_two_sample(&fin, &sample_bm_norm(2, s.x0, tau, s.n_paths, cfg.seed.wrapping_add(1))),
        _ => ks_one_sample(&fin, &cdf),
    };
    let table = histogram(
        &fin,
        BinSpec {
            lo: 0.0,
            hi: cfg.compare.y_max,
            n: cfg.compare.bins,
        },
    )?;
    let z = table.z_scores(&cdf);
    let bins: Vec<BinRow> = (0..table.density.len())
        .map(|k| BinRow {
            lo: table.edges[k],
            hi: table.edges[k + 1],
            density: table.density[k],
            std_err: table.std_err[k],
            z: z[k],
        })
        .collect();
    let max_abs_z = z.iter().filter(|v| v.is_finite()).fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(CompareReport {
        kernel: format!("{kind:?}"),
        t: s.t_end,
        x0: s.x0,
        n_paths: s.n_paths,
        dt: s.dt,
        seed: cfg.seed,
        ks,
        max_abs_z,
        bins,
    })
}
