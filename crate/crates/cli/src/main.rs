use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ntk_eigen::config::{ExperimentConfig, ExperimentKind};
use ntk_eigen::experiments::run_experiment;
use ntk_eigen::io::{self as fmt_io, Params};
use ntk_eigen::report::SweepReport;
use ntk_eigen::{HarnessError, Result};
use ntk_eigen_core::bounds::{uniform_bounds, BoundConstants, BoundReport};
use ntk_eigen_core::kernel::{limiting_kernel_matrix, limiting_kernel_mc, mercer_series_entry, KernelMatrix};
use ntk_eigen_core::ntk;
use ntk_eigen_core::specfun::SpectrumTable;
use ntk_eigen_core::sphere::{operator_norm, sample_uniform_sphere, separation_stats};
use ntk_eigen_core::{Activation, Dataset};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "ntk-eigen", version, about = "Smallest-eigenvalue bounds and checks for ReLU neural tangent kernels")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON). Other commands read only its `constants`.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Worker threads; rayon's default when omitted.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Sample uniform points on the sphere.
    GenData {
        #[arg(long)]
        d0: usize,
        #[arg(long)]
        n: usize,
    },
    /// Evaluate the eigenvalue bound formulas.
    #[command(subcommand)]
    Bounds(BoundsCmd),
    /// Infinite-width kernel matrices.
    #[command(subcommand)]
    Kernel(KernelCmd),
    /// Finite-width NTK Gram matrices.
    #[command(subcommand)]
    Ntk(NtkCmd),
    /// Run a verification sweep.
    Verify {
        #[arg(value_parser = parse_kind)]
        experiment: ExperimentKind,
    },
    /// Audits of the special-function layer.
    #[command(subcommand)]
    Audit(AuditCmd),
}

#[derive(Args)]
struct Separation {
    /// Dataset (JSON or CSV); supplies n, d0, δ, δ′ and ‖X‖².
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    d0: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
}

#[derive(Subcommand)]
enum BoundsCmd {
    Shallow {
        #[command(flatten)]
        sep: Separation,
        #[arg(long)]
        delta_prime: Option<f64>,
        #[arg(long)]
        opnorm_sq: Option<f64>,
        /// Also compute λ_min of a seeded network of this width on `--data`.
        #[arg(long)]
        empirical_width: Option<usize>,
    },
    Deep {
        #[command(flatten)]
        sep: Separation,
        #[arg(long)]
        depth: usize,
    },
    Uniform {
        #[arg(long)]
        d: usize,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
    },
}

#[derive(Args)]
struct KernelInput {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_parser = parse_activation)]
    activation: Activation,
    /// Write the eigenvalue report (JSON) here.
    #[arg(long)]
    eigen_out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum KernelCmd {
    Closed {
        #[command(flatten)]
        input: KernelInput,
    },
    Mc {
        #[command(flatten)]
        input: KernelInput,
        #[arg(long, default_value_t = 1_000_000)]
        samples: usize,
    },
    Series {
        #[command(flatten)]
        input: KernelInput,
        #[arg(long, default_value_t = 200)]
        truncation: usize,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Part {
    K,
    K1,
    K2,
}

#[derive(Subcommand)]
enum NtkCmd {
    Shallow {
        #[arg(long)]
        data: PathBuf,
        /// Hidden width; ignored with `--params`.
        #[arg(long)]
        width: Option<usize>,
        /// Parameters (`.json` or NTKP binary) instead of seeded ones.
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        params_out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Part::K)]
        part: Part,
        #[arg(long)]
        eigen_out: Option<PathBuf>,
    },
    Deep {
        #[arg(long)]
        data: PathBuf,
        /// Hidden widths, comma separated; ignored with `--params`.
        #[arg(long, value_delimiter = ',')]
        widths: Vec<usize>,
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        params_out: Option<PathBuf>,
        /// Layer diagnostics CSV (`layer,quantity,value`).
        #[arg(long)]
        trace_out: Option<PathBuf>,
        /// Use the finite-difference Jacobian instead of the decomposition.
        #[arg(long)]
        fd: bool,
        #[arg(long)]
        eigen_out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum AuditCmd {
    FunkHecke {
        #[arg(long, default_value_t = 12)]
        d_max: usize,
        #[arg(long, default_value_t = 30)]
        r_max: usize,
        /// Spectrum table CSV (`activation,d,r,c_rd`).
        #[arg(long)]
        spectrum_out: Option<PathBuf>,
    },
}

fn parse_kind(s: &str) -> std::result::Result<ExperimentKind, String> {
    s.parse().map_err(|e: HarnessError| e.to_string())
}

fn parse_activation(s: &str) -> std::result::Result<Activation, String> {
    s.parse().map_err(|_| format!("unknown activation {s:?} (relu_derivative | scaled_relu)"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(k) = cli.common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config_error() { 2 } else { 1 })
        }
    }
}

/// `Ok(false)` means a property check failed.
fn run(cli: Cli) -> Result<bool> {
    let c = &cli.common;
    match cli.command {
        Command::GenData { d0, n } => {
            let data = sample_uniform_sphere(d0, n, c.seed.unwrap_or(0))?;
            let sep = separation_stats(&data);
            eprintln!("delta={} delta_prime={} opnorm_sq={}", sep.delta, sep.delta_prime, operator_norm(&data).powi(2));
            with_output(c, |w| match c.format {
                Format::Json => fmt_io::write_dataset_json(&data, w),
                Format::Csv => fmt_io::write_dataset_csv(&data, w),
            })?;
            Ok(true)
        }
        Command::Bounds(cmd) => bounds(c, cmd).map(|()| true),
        Command::Kernel(cmd) => kernel(c, cmd).map(|()| true),
        Command::Ntk(cmd) => ntk_cmd(c, cmd).map(|()| true),
        Command::Verify { experiment } => {
            let mut cfg = match &c.config {
                Some(path) => ExperimentConfig::from_path(path)?,
                None => ExperimentConfig::defaults(experiment),
            };
            if cfg.kind != experiment {
                return Err(HarnessError::Config(format!("config is for {}, not {experiment}", cfg.kind)));
            }
            if let Some(seed) = c.seed {
                cfg.seed = seed;
            }
            let report = run_experiment(&cfg)?;
            emit_report(c, &cfg, &report)?;
            Ok(report.passed)
        }
        Command::Audit(AuditCmd::FunkHecke { d_max, r_max, spectrum_out }) => {
            let mut cfg = ExperimentConfig::defaults(ExperimentKind::FunkHeckeAudit);
            cfg.d0 = (3..=d_max).collect();
            cfg.r_max = r_max;
            if let Some(path) = spectrum_out {
                let tables = cfg
                    .d0
                    .iter()
                    .flat_map(|&d| Activation::ALL.map(|psi| SpectrumTable::new(d, psi, r_max)))
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                fmt_io::write_spectrum_csv(&tables, create(&path)?)?;
            }
            let report = run_experiment(&cfg)?;
            emit_report(c, &cfg, &report)?;
            Ok(report.passed)
        }
    }
}

fn emit_report(c: &Common, cfg: &ExperimentConfig, report: &SweepReport) -> Result<()> {
    let failed = report.rows.iter().filter(|r| !r.passed()).count();
    eprintln!(
        "{}: {} of {} cells passed in {:.2}s",
        report.kind,
        report.rows.len() - failed,
        report.rows.len(),
        report.metadata.wall_time_secs
    );
    if let Some(path) = &cfg.output.csv {
        report.write_csv(create(path)?)?;
    }
    if let Some(path) = &cfg.output.json {
        report.write_json(create(path)?)?;
    }
    with_output(c, |w| match c.format {
        Format::Csv => report.write_csv(w),
        Format::Json => report.write_json(w),
    })
}

fn constants(c: &Common) -> Result<BoundConstants> {
    Ok(match &c.config {
        Some(path) => ExperimentConfig::from_path(path)?.constants,
        None => BoundConstants::default(),
    })
}

struct Resolved {
    data: Option<Dataset>,
    n: usize,
    d0: usize,
    delta: f64,
}

fn resolve(sep: &Separation) -> Result<Resolved> {
    let data = sep.data.as_deref().map(read_dataset).transpose()?;
    let from_data = data.as_ref().map(|d| (d.n(), d.dim(), separation_stats(d).delta));
    let pick = |given: Option<usize>, derived: Option<usize>, name: &str| {
        given.or(derived).ok_or_else(|| HarnessError::Config(format!("--{name} or --data is required")))
    };
    let n = pick(sep.n, from_data.map(|t| t.0), "n")?;
    let d0 = pick(sep.d0, from_data.map(|t| t.1), "d0")?;
    let delta = sep
        .delta
        .or(from_data.map(|t| t.2))
        .ok_or_else(|| HarnessError::Config("--delta or --data is required".into()))?;
    Ok(Resolved { data, n, d0, delta })
}

fn bounds(c: &Common, cmd: BoundsCmd) -> Result<()> {
    let consts = constants(c)?;
    match cmd {
        BoundsCmd::Shallow { sep, delta_prime, opnorm_sq, empirical_width } => {
            let r = resolve(&sep)?;
            let delta_prime = delta_prime
                .or(r.data.as_ref().map(|d| separation_stats(d).delta_prime))
                .ok_or_else(|| HarnessError::Config("--delta-prime or --data is required".into()))?;
            let opnorm_sq = opnorm_sq
                .or(r.data.as_ref().map(|d| operator_norm(d).powi(2)))
                .ok_or_else(|| HarnessError::Config("--opnorm-sq or --data is required".into()))?;
            let mut report = BoundReport::shallow(r.n, r.d0, r.delta, delta_prime, opnorm_sq, sep.eps, consts)?;
            if let Some(width) = empirical_width {
                let data = r.data.as_ref().ok_or_else(|| HarnessError::Config("--empirical-width needs --data".into()))?;
                let k = ntk::shallow_ntk_seeded(width, c.seed.unwrap_or(0), data)?.k;
                report = report.with_empirical(ntk::min_eigenvalue(&k).lambda_min);
            }
            write_structured(c, &report)
        }
        BoundsCmd::Deep { sep, depth } => {
            let r = resolve(&sep)?;
            write_structured(c, &BoundReport::deep(r.n, r.d0, r.delta, depth, sep.eps, consts)?)
        }
        BoundsCmd::Uniform { d, n, eps } => write_structured(c, &uniform_bounds(d, n, eps)?),
    }
}

fn kernel(c: &Common, cmd: KernelCmd) -> Result<()> {
    let (input, k) = match cmd {
        KernelCmd::Closed { input } => {
            let data = read_dataset(&input.data)?;
            let k = limiting_kernel_matrix(input.activation, &data);
            (input, k)
        }
        KernelCmd::Mc { input, samples } => {
            let data = read_dataset(&input.data)?;
            let mc = limiting_kernel_mc(input.activation, &data, samples, c.seed.unwrap_or(0))?;
            (input, mc.kernel)
        }
        KernelCmd::Series { input, truncation } => {
            let data = read_dataset(&input.data)?;
            let (psi, d) = (input.activation, data.dim());
            let mut err = None;
            let k = KernelMatrix::from_fn(data.n(), |i, j| {
                let t = if i == j { 1.0 } else { data.inner(i, j) };
                mercer_series_entry(psi, d, t, truncation).unwrap_or_else(|e| {
                    err.get_or_insert(e);
                    f64::NAN
                })
            });
            if let Some(e) = err {
                return Err(e.into());
            }
            (input, k)
        }
    };
    emit_kernel(c, &k, input.eigen_out.as_deref())
}

fn emit_kernel(c: &Common, k: &KernelMatrix, eigen_out: Option<&Path>) -> Result<()> {
    let eig = k.eigen_report();
    eprintln!("lambda_min={} clamped={}", eig.lambda_min, eig.clamped);
    if let Some(path) = eigen_out {
        fmt_io::write_eigen_json(eig, create(path)?)?;
    }
    with_output(c, |w| match c.format {
        Format::Json => fmt_io::write_kernel_json(k, w),
        Format::Csv => fmt_io::write_kernel_csv(k, w),
    })
}

fn ntk_cmd(c: &Common, cmd: NtkCmd) -> Result<()> {
    let seed = c.seed.unwrap_or(0);
    match cmd {
        NtkCmd::Shallow { data, width, params, params_out, part, eigen_out } => {
            let data = read_dataset(&data)?;
            let p = match params {
                Some(path) => match read_params(&path)? {
                    Params::Shallow(p) => p,
                    Params::Deep(_) => return Err(HarnessError::Config("expected shallow parameters".into())),
                },
                None => {
                    let width = width.ok_or_else(|| HarnessError::Config("--width or --params is required".into()))?;
                    ntk::init_shallow(data.dim(), width, seed)?
                }
            };
            let parts = ntk::shallow_ntk(&p, &data)?;
            if let Some(path) = params_out {
                write_params(&path, &Params::Shallow(p))?;
            }
            let k = match part {
                Part::K => parts.k,
                Part::K1 => parts.k1,
                Part::K2 => parts.k2,
            };
            emit_kernel(c, &k, eigen_out.as_deref())
        }
        NtkCmd::Deep { data, widths, params, params_out, trace_out, fd, eigen_out } => {
            let data = read_dataset(&data)?;
            let p = match params {
                Some(path) => match read_params(&path)? {
                    Params::Deep(p) => p,
                    Params::Shallow(_) => return Err(HarnessError::Config("expected deep parameters".into())),
                },
                None => {
                    if widths.is_empty() {
                        return Err(HarnessError::Config("--widths or --params is required".into()));
                    }
                    let all: Vec<usize> = std::iter::once(data.dim()).chain(widths).chain(std::iter::once(1)).collect();
                    ntk::init_deep(&all, seed)?
                }
            };
            let k = if fd {
                ntk::deep_ntk_fd(&p, &data, ntk::FD_STEP)?
            } else {
                ntk::deep_ntk_decomposed(&p, &data)?.normalized
            };
            if let Some(path) = trace_out {
                let trace = ntk::deep_trace(&p, &data)?;
                fmt_io::write_layer_trace_csv(&p, &trace, &data, create(&path)?)?;
            }
            if let Some(path) = params_out {
                write_params(&path, &Params::Deep(p))?;
            }
            emit_kernel(c, &k, eigen_out.as_deref())
        }
    }
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn read_dataset(path: &Path) -> Result<Dataset> {
    if is_csv(path) {
        fmt_io::read_dataset_csv(open(path)?)
    } else {
        fmt_io::read_dataset_json(open(path)?)
    }
}

fn read_params(path: &Path) -> Result<Params> {
    if is_json(path) {
        fmt_io::read_params_json(open(path)?)
    } else {
        fmt_io::read_params_binary(open(path)?)
    }
}

fn write_params(path: &Path, p: &Params) -> Result<()> {
    if is_json(path) {
        fmt_io::write_params_json(p, create(path)?)
    } else {
        fmt_io::write_params_binary(p, create(path)?)
    }
}

fn with_output(c: &Common, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match &c.out {
        Some(path) => {
            let mut w = create(path)?;
            f(&mut w)?;
            w.flush()?;
        }
        None => {
            let mut w = io::stdout().lock();
            f(&mut w)?;
            if c.format == Format::Json {
                writeln!(w)?;
            }
        }
    }
    Ok(())
}

/// JSON as is; CSV as flattened `field,value` pairs.
fn write_structured<T: Serialize>(c: &Common, value: &T) -> Result<()> {
    let json = serde_json::to_value(value)?;
    with_output(c, |w| match c.format {
        Format::Json => Ok(serde_json::to_writer_pretty(w, &json)?),
        Format::Csv => {
            let mut out = csv::Writer::from_writer(w);
            out.write_record(["field", "value"])?;
            let mut rows = Vec::new();
            flatten("", &json, &mut rows);
            for (k, v) in rows {
                out.write_record([k, v])?;
            }
            out.flush()?;
            Ok(())
        }
    })
}

fn flatten(prefix: &str, v: &serde_json::Value, out: &mut Vec<(String, String)>) {
    use serde_json::Value as J;
    let key = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match v {
        J::Object(map) => map.iter().for_each(|(k, v)| flatten(&key(k), v, out)),
        J::Array(items) => items.iter().enumerate().for_each(|(i, v)| flatten(&key(&i.to_string()), v, out)),
        J::Null => out.push((prefix.to_string(), String::new())),
        J::String(s) => out.push((prefix.to_string(), s.clone())),
        J::Number(n) => out.push((prefix.to_string(), n.as_f64().map_or_else(|| n.to_string(), fmt_io::fmt_f64))),
        J::Bool(b) => out.push((prefix.to_string(), b.to_string())),
    }
}
