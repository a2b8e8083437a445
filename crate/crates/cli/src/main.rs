//! `mudich`: spectra, μ-Lyapunov exponents and block-diagonal normal forms of
//! `x' = A(t) x` from the command line.

mod commands;
mod config;
mod error;
mod io;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mudich_core::Params;

use crate::config::{Layer, Setup};
use crate::error::{CliError, CliResult, EXIT_USAGE};

#[derive(Parser)]
#[command(name = "mudich", version, about = "Nonuniform mu-dichotomy spectra of linear nonautonomous systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Spectral intervals, anchors and fibres; writes spectrum.json and scan_trace.csv.
    Spectrum {
        #[command(flatten)]
        run: RunArgs,
        /// Also write envelope.csv with the fitted envelopes of every anchor.
        #[arg(long)]
        envelope: bool,
    },
    /// μ-Lyapunov exponents of given vectors; writes exponents.json and trace_<k>.csv.
    Lyapunov {
        #[command(flatten)]
        run: RunArgs,
        /// Starting vector as comma-separated entries; repeatable. Defaults to the standard basis.
        #[arg(long = "vector", allow_hyphen_values = true)]
        vectors: Vec<String>,
        /// Start time s.
        #[arg(long, allow_hyphen_values = true)]
        s: Option<f64>,
        /// Check every spectral fibre's exponents against its interval.
        #[arg(long)]
        bounds: bool,
    },
    /// Block-diagonalizing change of variables; writes transform.json and transform.csv.
    Reduce {
        #[command(flatten)]
        run: RunArgs,
        /// Number of log-mu-uniform sample times.
        #[arg(long)]
        samples: Option<usize>,
        /// Sample window `a,b`; the whole horizon by default.
        #[arg(long, allow_hyphen_values = true)]
        window: Option<String>,
        /// Random (s, t) pairs for the conjugacy check.
        #[arg(long)]
        pairs: Option<usize>,
    },
    /// Recompute the worked examples and compare with stored reference values.
    Verify {
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Builtin systems and growth rates.
    ListSystems,
}

#[derive(Args)]
struct RunArgs {
    /// TOML config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    system: Option<String>,
    /// System parameters `k=v,...`.
    #[arg(long, allow_hyphen_values = true)]
    params: Option<String>,
    /// CSV for `--system table`: rows `t, a11, a12, ..., ann`.
    #[arg(long)]
    table: Option<PathBuf>,
    /// Interpolate table systems with monotone cubics instead of linearly.
    #[arg(long)]
    cubic: bool,
    #[arg(long)]
    rate: Option<String>,
    /// CSV `t,log_mu` for `--rate custom`.
    #[arg(long)]
    rate_table: Option<PathBuf>,
    /// full-line or half-line.
    #[arg(long)]
    domain: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    tmin: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    tmax: Option<f64>,
    /// Integrator tolerance, in [1e-12, 1e-3].
    #[arg(long)]
    tol: Option<f64>,
    /// Bisection width of spectrum endpoints.
    #[arg(long)]
    tol_gamma: Option<f64>,
    /// Tail-slope threshold of the membership tests.
    #[arg(long)]
    tol_slope: Option<f64>,
    /// Required slack of a dichotomy fit.
    #[arg(long)]
    margin: Option<f64>,
    /// Require a uniform dichotomy (no nonuniform term).
    #[arg(long)]
    uniform: bool,
    /// Extra log-mu-uniform grid nodes.
    #[arg(long)]
    dense: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

fn parse_list(name: &str, text: &str) -> CliResult<Vec<f64>> {
    text.split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|_| CliError::Usage(format!("{name}: `{x}` is not a number"))))
        .collect()
}

impl RunArgs {
    fn layer(&self) -> CliResult<Layer> {
        let base = match &self.config {
            Some(path) => Layer::from_file(path)?,
            None => Layer::default(),
        };
        let mut flags = Layer {
            system: self.system.clone(),
            table: self.table.clone(),
            cubic: self.cubic.then_some(true),
            rate: self.rate.clone(),
            rate_table: self.rate_table.clone(),
            domain: self.domain.clone(),
            tmin: self.tmin,
            tmax: self.tmax,
            tol: self.tol,
            dense: self.dense,
            seed: self.seed,
            out: self.out.clone(),
            ..Layer::default()
        };
        if let Some(p) = &self.params {
            let parsed = Params::parse(p).map_err(CliError::Config)?;
            flags.params = parsed.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        }
        flags.spectrum.tol_gamma = self.tol_gamma;
        flags.spectrum.tol_slope = self.tol_slope;
        flags.spectrum.margin = self.margin;
        flags.spectrum.uniform = self.uniform.then_some(true);
        Ok(base.overlay(flags))
    }
}

fn list_systems() {
    println!("systems:");
    let rows = [
        ("example1", "diagonal, exponents oscillating in [alpha-theta, alpha+theta] and [beta-nu, beta+nu]; alpha, beta, theta, nu, rate"),
        ("example2", "example1 with the polynomial-full rate and (-2, 2, 1, 1); spectrum [-3,-1] U [1,3]"),
        ("triangular-halfline", "upper triangular 2x2 on t >= 0, spectrum {-1/2, 1/2} for sqrt-exp-half"),
        ("constant", "constant coefficient; matrix=a11;a12;...;ann, domain"),
        ("rotation2d", "x' = [[0,1],[-1,0]] x; domain"),
        ("zero", "A = 0; n (default 2), domain"),
        ("table", "CSV rows t, a11, ..., ann via --table; linear or --cubic interpolation"),
    ];
    for (name, doc) in rows {
        println!("  {name:<21}{doc}");
    }
    println!("rates:");
    let rates = [
        ("exponential", "mu = e^t, full or half line"),
        ("polynomial-full", "mu = (1+|t|)^sign(t), full line"),
        ("polynomial-half", "mu = 1+t, half line"),
        ("sqrt-exp-half", "mu = e^(sqrt(1+t)-1), half line"),
        ("custom", "CSV t,log_mu via --rate-table"),
    ];
    for (name, doc) in rates {
        println!("  {name:<21}{doc}");
    }
}

fn run(command: Command) -> CliResult<i32> {
    match command {
        Command::Spectrum { run, envelope } => {
            let mut layer = run.layer()?;
            if envelope {
                layer.spectrum.envelope = Some(true);
            }
            commands::run_spectrum(&Setup::resolve(layer)?)
        }
        Command::Lyapunov { run, vectors, s, bounds } => {
            let mut layer = run.layer()?;
            if !vectors.is_empty() {
                layer.lyapunov.vectors = Some(vectors.iter().map(|v| parse_list("--vector", v)).collect::<CliResult<_>>()?);
            }
            if s.is_some() {
                layer.lyapunov.s = s;
            }
            if bounds {
                layer.lyapunov.bounds = Some(true);
            }
            commands::run_lyapunov(&Setup::resolve(layer)?)
        }
        Command::Reduce { run, samples, window, pairs } => {
            let mut layer = run.layer()?;
            if samples.is_some() {
                layer.reduce.samples = samples;
            }
            if let Some(w) = window {
                match parse_list("--window", &w)?[..] {
                    [a, b] => layer.reduce.window = Some((a, b)),
                    _ => return Err(CliError::Usage("--window: expected a,b".into())),
                }
            }
            if pairs.is_some() {
                layer.reduce.pairs = pairs;
            }
            commands::run_reduce(&Setup::resolve(layer)?)
        }
        Command::Verify { out, seed } => verify::run_verify(&out, seed),
        Command::ListSystems => {
            list_systems();
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("mudich: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
