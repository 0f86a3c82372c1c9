use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use euler_extremes::invariants::{self, SUITES};
use euler_extremes::model::ConstantRow;
use euler_extremes::monte_carlo::{estimate_tail_plain, estimate_tail_tilted, McEstimate, SamplerConfig};
use euler_extremes::report::{write_csv, write_json, ConstantsCache, RunManifest, TableRow};
use euler_extremes::saddle::{self, SaddleSolution, Tail};
use euler_extremes::tail::{self, ExpansionRoute, SmoothingParams, TailEstimate};
use euler_extremes::{Error, QuadratureSpec, Result};

#[derive(Parser)]
#[command(name = "euler-extremes", version, about = "Tail probabilities of random Euler products under the Sato-Tate measure")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Gauss-Legendre nodes per panel for angle integrals.
    #[arg(long, global = true, default_value_t = 32)]
    quad_nodes: usize,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Write to this file instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Saddle,
    Expansion,
    Perron,
    Mc,
    All,
}

#[derive(Subcommand)]
enum Command {
    /// Expansion constants with error estimates (cached).
    Constants {
        #[arg(long = "J", default_value_t = 2)]
        j: usize,
    },
    /// Solve for the saddle point kappa(t, y).
    Saddle {
        #[arg(long)]
        t: f64,
        #[arg(long)]
        y: f64,
        #[arg(long, default_value_t = saddle::DEFAULT_TOL)]
        tol: f64,
        /// Lower tail (Psi) instead of the upper tail (Phi).
        #[arg(long)]
        lower: bool,
    },
    /// Estimate log Phi(t, y) or log Psi(t, y).
    Tail {
        #[arg(long)]
        t: f64,
        #[arg(long)]
        y: f64,
        #[arg(long, value_enum, default_value_t = MethodArg::Saddle)]
        method: MethodArg,
        #[command(flatten)]
        opts: TailOpts,
    },
    /// Monte Carlo estimate of the tail.
    Mc {
        #[arg(long)]
        t: f64,
        #[arg(long)]
        y: f64,
        #[command(flatten)]
        opts: TailOpts,
    },
    /// Run an invariant suite, or all of them.
    Verify {
        #[arg(default_value = "all")]
        suite: String,
    },
    /// Compare methods over a grid of t.
    Table {
        /// Comma-separated values of t.
        #[arg(long, value_delimiter = ',', default_values_t = vec![1.5, 2.0, 2.5, 3.0])]
        t_grid: Vec<f64>,
        #[arg(long)]
        y: f64,
        #[arg(long, value_delimiter = ',', value_enum, default_values_t = vec![MethodArg::Saddle, MethodArg::Perron])]
        methods: Vec<MethodArg>,
        #[command(flatten)]
        opts: TailOpts,
    },
}

#[derive(Args, Clone)]
struct TailOpts {
    #[arg(long = "J", default_value_t = 2)]
    j: usize,
    /// Expand in powers of 1/t instead of 1/log kappa.
    #[arg(long)]
    powers_of_t: bool,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long = "N", default_value_t = 1)]
    n: u32,
    #[arg(long)]
    tau_max: Option<f64>,
    #[arg(long, default_value_t = 1_000_000)]
    n_samples: u64,
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    /// Importance sampling with the saddle-point tilt.
    #[arg(long)]
    tilt: bool,
    #[arg(long)]
    lower: bool,
}

impl TailOpts {
    fn tail(&self) -> Tail {
        if self.lower {
            Tail::Lower
        } else {
            Tail::Upper
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

struct Output {
    manifest: RunManifest,
    started: Instant,
    format: Format,
    out: Option<PathBuf>,
}

impl Output {
    fn writer(&self) -> Result<Box<dyn Write>> {
        Ok(match &self.out {
            Some(p) => Box::new(BufWriter::new(File::create(p)?)),
            None => Box::new(io::stdout().lock()),
        })
    }

    fn finish(&mut self, timed: bool) {
        if timed {
            self.manifest.wall_time = Some(self.started.elapsed());
        }
    }

    fn rows(mut self, rows: &[TableRow]) -> Result<()> {
        self.finish(true);
        let w = self.writer()?;
        match self.format {
            Format::Csv => write_csv(w, &self.manifest, rows),
            Format::Json => write_json(w, &self.manifest, rows),
        }
    }

    fn json<T: Serialize>(mut self, rows: &[T], timed: bool) -> Result<()> {
        self.finish(timed);
        write_json(self.writer()?, &self.manifest, rows)
    }
}

fn run(cli: Cli) -> Result<u8> {
    let quad = QuadratureSpec::gauss_legendre(cli.common.quad_nodes);
    quad.validate(None)?;
    let mut manifest = RunManifest::new(std::env::args().collect::<Vec<_>>().join(" "));
    manifest.quadrature.push(quad.clone());
    let default_format = match cli.command {
        Command::Constants { .. } | Command::Saddle { .. } | Command::Verify { .. } => Format::Json,
        _ => Format::Csv,
    };
    let mut out = Output {
        manifest,
        started: Instant::now(),
        format: cli.common.format.unwrap_or(default_format),
        out: cli.common.out,
    };
    match cli.command {
        Command::Constants { j } => {
            let mut cache = ConstantsCache::open(&ConstantsCache::default_dir());
            let (rows, hit) = cache.coefficient_rows(j, &quad)?;
            if !hit {
                // the cache is advisory
                if let Err(e) = cache.save() {
                    eprintln!("warning: could not write constants cache: {e}");
                }
            }
            out.manifest.constants = rows.clone();
            // untimed so that a cached run reproduces the same bytes
            match out.format {
                Format::Json => out.json(&rows, false)?,
                Format::Csv => write_constants_csv(&mut out.writer()?, &out.manifest, &rows)?,
            }
        }
        Command::Saddle { t, y, tol, lower } => {
            saddle::check_regime(t, y)?;
            let sol = if lower {
                saddle::solve_saddle_lower(t, y, tol)?
            } else {
                saddle::solve_saddle(t, y, tol)?
            };
            out.json(&[SaddleRow::from(&sol)], true)?;
        }
        Command::Tail { t, y, method, opts } => {
            let mut rows = Vec::new();
            let failure = tail_rows(t, y, method, &opts, &quad, &mut out.manifest, &mut rows);
            if !rows.is_empty() || failure.is_none() {
                out.rows(&rows)?;
            }
            if let Some(e) = failure {
                return Err(e);
            }
        }
        Command::Mc { t, y, opts } => {
            let mut rows = Vec::new();
            if let Some(e) = tail_rows(t, y, MethodArg::Mc, &opts, &quad, &mut out.manifest, &mut rows) {
                return Err(e);
            }
            out.rows(&rows)?;
        }
        Command::Verify { suite } => {
            let names: Vec<&str> = if suite == "all" { SUITES.to_vec() } else { vec![suite.as_str()] };
            let mut reports = Vec::new();
            for name in names {
                let r = invariants::run_suite(name, &quad)?;
                eprintln!("{} {} ({} checks)", if r.passed() { "PASS" } else { "FAIL" }, r.name, r.checks);
                for f in &r.failures {
                    eprintln!("  {f}");
                }
                reports.push(r);
            }
            let ok = reports.iter().all(|r| r.passed());
            out.json(&reports, true)?;
            return Ok(if ok { 0 } else { 2 });
        }
        Command::Table { t_grid, y, methods, opts } => {
            let mut rows = Vec::new();
            let mut failures = Vec::new();
            for &t in &t_grid {
                for &m in &methods {
                    if let Some(e) = tail_rows(t, y, m, &opts, &quad, &mut out.manifest, &mut rows) {
                        eprintln!("t={t}: {e}");
                        failures.push(e);
                    }
                }
            }
            out.rows(&rows)?;
            if let Some(code) = failures.iter().map(Error::exit_code).max() {
                return Ok(code as u8);
            }
        }
    }
    Ok(0)
}

/// Appends rows for `method`; returns the first error instead of stopping so
/// that `all` still reports the methods that succeeded.
fn tail_rows(
    t: f64,
    y: f64,
    method: MethodArg,
    opts: &TailOpts,
    quad: &QuadratureSpec,
    manifest: &mut RunManifest,
    rows: &mut Vec<TableRow>,
) -> Option<Error> {
    let methods: &[MethodArg] = match method {
        MethodArg::All => &[MethodArg::Saddle, MethodArg::Expansion, MethodArg::Perron, MethodArg::Mc],
        _ => std::slice::from_ref(&method),
    };
    let mut first = None;
    for &m in methods {
        match one_method(t, y, m, opts, quad, manifest) {
            Ok(mut r) => rows.append(&mut r),
            Err(e) => {
                if method == MethodArg::All {
                    eprintln!("{}: {e}", method_name(m));
                }
                first.get_or_insert(e);
            }
        }
    }
    first
}

fn method_name(m: MethodArg) -> &'static str {
    match m {
        MethodArg::Saddle => "saddle",
        MethodArg::Expansion => "expansion",
        MethodArg::Perron => "perron",
        MethodArg::Mc => "mc",
        MethodArg::All => "all",
    }
}

fn one_method(t: f64, y: f64, m: MethodArg, opts: &TailOpts, quad: &QuadratureSpec, manifest: &mut RunManifest) -> Result<Vec<TableRow>> {
    let tail = opts.tail();
    let row = |e: &TailEstimate| TableRow::from_estimate(e, None);
    Ok(match m {
        MethodArg::Saddle => {
            let e = match tail {
                Tail::Upper => tail::tail_saddle(t, y)?,
                Tail::Lower => tail::tail_saddle_lower(t, y)?,
            };
            vec![row(&e)]
        }
        MethodArg::Expansion => {
            if tail == Tail::Lower {
                return Err(Error::Domain("the expansion route covers the upper tail only".into()));
            }
            let route = if opts.powers_of_t { ExpansionRoute::PowersOfT } else { ExpansionRoute::LogKappa };
            let e = tail::tail_expansion(t, y, opts.j, route, quad)?;
            if manifest.constants.is_empty() {
                let mut cache = ConstantsCache::open(&ConstantsCache::default_dir());
                manifest.constants = cache.coefficient_rows(opts.j.max(2), quad)?.0;
            }
            vec![row(&e)]
        }
        MethodArg::Perron => {
            let params = SmoothingParams {
                lambda: opts.lambda.unwrap_or(0.25 * (-t).exp()),
                n: opts.n,
                tau_max: opts.tau_max,
            };
            let b = match tail {
                Tail::Upper => tail::tail_perron(t, y, &params)?,
                Tail::Lower => tail::tail_perron_lower(t, y, &params)?,
            };
            vec![row(&b.upper), row(&b.lower)]
        }
        MethodArg::Mc => {
            let cfg = SamplerConfig::new(opts.seed, opts.n_samples, y);
            manifest.seed = Some(opts.seed);
            let est: McEstimate = if opts.tilt {
                saddle::check_regime(t, y)?;
                let sol = match tail {
                    Tail::Upper => saddle::solve_saddle(t, y, saddle::DEFAULT_TOL)?,
                    Tail::Lower => saddle::solve_saddle_lower(t, y, saddle::DEFAULT_TOL)?,
                };
                estimate_tail_tilted(t, tail, sol.kappa, &cfg)?
            } else {
                estimate_tail_plain(t, tail, &cfg)?
            };
            if est.bound_only {
                eprintln!("mc: no sample hit the threshold; log_value is a 95% upper bound");
            }
            vec![TableRow::from_estimate(&est.to_tail_estimate(t, y, tail), Some(opts.seed))]
        }
        MethodArg::All => unreachable!(),
    })
}

#[derive(Serialize)]
struct SaddleRow {
    t: f64,
    y: f64,
    tail: Tail,
    kappa: f64,
    log_kappa: f64,
    residual: f64,
    iterations: usize,
    bracket: (f64, f64),
}

impl From<&SaddleSolution> for SaddleRow {
    fn from(s: &SaddleSolution) -> Self {
        SaddleRow {
            t: s.t,
            y: s.y,
            tail: s.tail,
            kappa: s.kappa,
            log_kappa: s.log_kappa,
            residual: s.residual,
            iterations: s.iterations,
            bracket: s.bracket,
        }
    }
}

fn write_constants_csv(w: &mut dyn Write, manifest: &RunManifest, rows: &[ConstantRow]) -> Result<()> {
    writeln!(w, "# manifest: {}", manifest.to_json()?)?;
    writeln!(w, "name,j,n,value,abs_error_estimate")?;
    for r in rows {
        let n = r.n.map(|n| n.to_string()).unwrap_or_default();
        let e = r.abs_error_estimate.map(|e| format!("{e:e}")).unwrap_or_default();
        writeln!(w, "{},{},{},{:.17e},{}", r.name, r.j, n, r.value, e)?;
    }
    w.flush()?;
    Ok(())
}
