use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use classcount::affinity::AffinityResult;
use classcount::envelope::{lower_confidence_limit, EnvelopeConfig, EnvelopeStatus, DEFAULT_KS_REPS};
use classcount::hankel::{ladder, DEFAULT_K_CAP};
use classcount::ingest::{parse_frequencies, parse_raw_counts};
use classcount::montecarlo::{
    bootstrap_quantiles, replicate_rng, sample_population, BootstrapConfig, Estimator, ResampleSummary, ResampleTarget,
    DEFAULT_SEED,
};
use classcount::npmle::{fit_npmle, NpmleConfig};
use classcount::pathology::blowup_trace;
use classcount::report::{analyze, AnalysisConfig};
use classcount::{FrequencyData, MixingDistribution, PopulationModel};

/// Estimate the number of classes from frequency-of-frequencies data.
#[derive(Debug, Parser)]
#[command(name = "classcount", version)]
struct Cli {
    /// Worker threads for Monte Carlo work (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Emit JSON instead of a text table.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Ladder, closed-form estimators, NPMLE, envelope limit and optional bootstrap.
    Analyze {
        #[command(flatten)]
        input: Input,
        #[arg(long, default_value_t = DEFAULT_K_CAP)]
        kmax: usize,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[command(flatten)]
        envelope: EnvelopeArgs,
        /// Bootstrap replicates; omit to skip the bootstrap.
        #[arg(long)]
        bootstrap: Option<usize>,
        #[command(flatten)]
        resample: ResampleArgs,
    },
    /// Envelope lower confidence limit for the undetected odds.
    Envelope {
        #[command(flatten)]
        input: Input,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[command(flatten)]
        envelope: EnvelopeArgs,
    },
    /// Model-based bootstrap quantiles from the NPMLE.
    Bootstrap {
        #[command(flatten)]
        input: Input,
        #[arg(long, default_value_t = DEFAULT_K_CAP)]
        kmax: usize,
        #[arg(long, short = 'B', default_value_t = 400)]
        replicates: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[command(flatten)]
        resample: ResampleArgs,
        /// Evaluate estimators on each resample's own frequencies instead of a refit NPMLE.
        #[arg(long)]
        empirical: bool,
    },
    /// Draw a frequency dataset from a population of `c` classes.
    Simulate {
        #[arg(long)]
        c: u64,
        #[arg(long, value_delimiter = ',', required = true)]
        atoms: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true)]
        weights: Vec<f64>,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Write the dataset here instead of stdout.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Testing affinity between c and c + 1 classes, as CSV.
    Affinity {
        #[arg(long, value_delimiter = ',', required = true)]
        c: Vec<u64>,
        #[arg(long, value_delimiter = ',', required = true)]
        rho: Vec<f64>,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
    },
    /// Trace of the contamination family Q_s = (1 - s) Q + s δ(s²).
    DemoDiscontinuity {
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.01,0.001,0.0001")]
        s: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "1")]
        atoms: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "1")]
        weights: Vec<f64>,
    },
}

#[derive(Debug, Args)]
struct Input {
    /// Frequency file with `x n_x` lines.
    file: PathBuf,
    /// Read one per-class count per line instead.
    #[arg(long)]
    raw: bool,
}

#[derive(Debug, Args)]
struct EnvelopeArgs {
    #[arg(long, default_value_t = 400)]
    grid_size: usize,
    #[arg(long, default_value_t = 1e-4)]
    grid_min: f64,
    /// Defaults to x_max + 10 sqrt(x_max).
    #[arg(long)]
    grid_max: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_KS_REPS)]
    ks_reps: usize,
    #[arg(long = "seed", default_value_t = DEFAULT_SEED)]
    seed: u64,
}

#[derive(Debug, Args)]
struct ResampleArgs {
    #[arg(long, default_value_t = 0.05)]
    alpha_q: f64,
    /// Redraw n through a simulated population.
    #[arg(long)]
    unconditional: bool,
    /// Write every replicate value to this CSV file.
    #[arg(long)]
    dump_replicates: Option<PathBuf>,
}

impl EnvelopeArgs {
    fn config(&self) -> EnvelopeConfig {
        EnvelopeConfig {
            grid_size: self.grid_size,
            grid_min: self.grid_min,
            grid_max: self.grid_max,
            ks_reps: self.ks_reps,
            seed: self.seed,
        }
    }
}

impl ResampleArgs {
    fn config(&self, replicates: usize, seed: u64, target: ResampleTarget) -> BootstrapConfig {
        BootstrapConfig {
            replicates,
            alpha_q: self.alpha_q,
            seed,
            unconditional: self.unconditional,
            keep_values: self.dump_replicates.is_some(),
            target,
        }
    }
}

#[derive(Debug)]
enum Failure {
    Usage(String),
}

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Usage(e.to_string())
    }
}

type Outcome = std::result::Result<bool, Failure>;

fn read_input(input: &Input) -> std::result::Result<FrequencyData, Failure> {
    let text = fs::read_to_string(&input.file).map_err(|e| Failure::Usage(format!("{}: {e}", input.file.display())))?;
    let parsed = if input.raw {
        parse_raw_counts(&text)
    } else {
        parse_frequencies(&text)
    };
    parsed.map_err(|e| Failure::Usage(format!("{}: {e}", input.file.display())))
}

fn echo_config<T: Serialize>(config: &T) -> std::result::Result<(), Failure> {
    eprintln!("config: {}", serde_json::to_string(config)?);
    Ok(())
}

fn print_json<T: Serialize>(value: &T) -> std::result::Result<(), Failure> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn dump_replicates(path: &Path, summary: &ResampleSummary) -> std::result::Result<(), Failure> {
    let mut out = String::from("replicate");
    for e in &summary.estimators {
        let _ = write!(out, ",{}", e.name);
    }
    out.push('\n');
    for b in 0..summary.replicates {
        let _ = write!(out, "{b}");
        for e in &summary.estimators {
            let v = e.values.as_ref().and_then(|v| v[b]);
            let _ = write!(out, ",{}", v.map_or_else(String::new, |x| x.to_string()));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> Outcome {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()?;
    }
    match cli.command {
        Command::Analyze {
            input,
            kmax,
            alpha,
            envelope,
            bootstrap,
            resample,
        } => {
            let d = read_input(&input)?;
            let config = AnalysisConfig {
                k_max: kmax,
                alpha,
                npmle: NpmleConfig::default(),
                envelope: envelope.config(),
                bootstrap: bootstrap
                    .map(|b| resample.config(b, envelope.seed, ResampleTarget::Refit(NpmleConfig::default()))),
            };
            echo_config(&config)?;
            let report = analyze(&d, &config)?;
            if let (Some(path), Some(summary)) = (&resample.dump_replicates, &report.bootstrap) {
                dump_replicates(path, summary)?;
            }
            if cli.json {
                print_json(&report)?;
            } else {
                print!("{}", report.table());
            }
            Ok(!report.is_degraded())
        }
        Command::Envelope { input, alpha, envelope } => {
            let d = read_input(&input)?;
            let config = envelope.config();
            echo_config(&config)?;
            let limit = lower_confidence_limit(&d, alpha, &config)?;
            let feasible = limit.solution.status != EnvelopeStatus::Infeasible;
            if cli.json {
                print_json(&limit)?;
            } else {
                println!("epsilon = {:.6}", limit.epsilon);
                match limit.theta_lower() {
                    Some(t) => {
                        println!("theta lower limit ({:.0}%) = {t:.6}", (1.0 - alpha) * 100.0);
                        println!("c lower limit = {}", limit.class_lower_limit.unwrap_or(d.n()));
                    }
                    None => println!("envelope LP infeasible on this grid"),
                }
                if let Some(q) = limit.solution.mixing() {
                    for (a, w) in q.iter() {
                        println!("  atom {a:.6} weight {w:.6}");
                    }
                }
            }
            Ok(feasible)
        }
        Command::Bootstrap {
            input,
            kmax,
            replicates,
            seed,
            resample,
            empirical,
        } => {
            let d = read_input(&input)?;
            let npmle = NpmleConfig::default();
            let target = if empirical {
                ResampleTarget::Empirical
            } else {
                ResampleTarget::Refit(npmle.clone())
            };
            let config = resample.config(replicates, seed, target);
            echo_config(&config)?;
            let fit = fit_npmle(&d, &npmle)?;
            let k = ladder(&d, kmax)?.len();
            let summary = bootstrap_quantiles(&fit.mixing, d.n(), &Estimator::table_set(k), &config)?;
            if let Some(path) = &resample.dump_replicates {
                dump_replicates(path, &summary)?;
            }
            if cli.json {
                print_json(&summary)?;
            } else {
                let cell = |v: Option<f64>| v.map_or_else(|| "-".into(), |x| format!("{x:.3}"));
                println!(
                    "{:<10} {:>10} {:>10} {:>8}",
                    "estimator",
                    "f_Q",
                    format!("q{}", summary.alpha_q),
                    "missing"
                );
                for e in &summary.estimators {
                    println!(
                        "{:<10} {:>10} {:>10} {:>8}",
                        e.name,
                        cell(e.point),
                        cell(e.quantile),
                        e.missing
                    );
                }
            }
            Ok(fit.converged && summary.estimators.iter().all(|e| !e.flagged))
        }
        Command::Simulate {
            c,
            atoms,
            weights,
            seed,
            out,
        } => {
            #[derive(Serialize)]
            struct SimulateConfig<'a> {
                c: u64,
                atoms: &'a [f64],
                weights: &'a [f64],
                seed: u64,
            }
            echo_config(&SimulateConfig {
                c,
                atoms: &atoms,
                weights: &weights,
                seed,
            })?;
            let model = PopulationModel::new(c, MixingDistribution::new(atoms.clone(), weights.clone())?)?;
            let sample = sample_population(&model, &mut replicate_rng(seed, 0))?;
            let mut text = format!(
                "# simulated: c = {c}, seed = {seed}, undetected = {}\n",
                sample.undetected
            );
            for (x, nx) in sample.data.counts() {
                let _ = writeln!(text, "{x} {nx}");
            }
            match out {
                Some(path) => fs::write(&path, text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?,
                None => print!("{text}"),
            }
            Ok(true)
        }
        Command::Affinity { c, rho, alpha } => {
            #[derive(Serialize)]
            struct AffinityConfig<'a> {
                c: &'a [u64],
                rho: &'a [f64],
                alpha: f64,
            }
            echo_config(&AffinityConfig {
                c: &c,
                rho: &rho,
                alpha,
            })?;
            let rows = c
                .iter()
                .flat_map(|&ci| rho.iter().map(move |&r| AffinityResult::evaluate(ci, r, alpha)))
                .collect::<classcount::Result<Vec<_>>>()?;
            if cli.json {
                print_json(&rows)?;
            } else {
                println!("c,rho,affinity,floor_bound,infinite_ucl_lower_bound");
                for r in rows {
                    let floor = r.floor_bound.map_or_else(String::new, |v| format!("{v:.6}"));
                    println!(
                        "{},{},{:.6},{floor},{:.6}",
                        r.c, r.rho, r.affinity, r.infinite_ucl_lower_bound
                    );
                }
            }
            Ok(true)
        }
        Command::DemoDiscontinuity { s, atoms, weights } => {
            #[derive(Serialize)]
            struct DemoConfig<'a> {
                s: &'a [f64],
                atoms: &'a [f64],
                weights: &'a [f64],
            }
            echo_config(&DemoConfig {
                s: &s,
                atoms: &atoms,
                weights: &weights,
            })?;
            let q = MixingDistribution::new(atoms.clone(), weights.clone())?;
            let trace = blowup_trace(&q, &s)?;
            if cli.json {
                print_json(&trace)?;
            } else {
                println!("theta(f_Q) = {:.6}", trace.base_odds);
                println!(
                    "{:>10} {:>14} {:>14} {:>12} {:>12} {:>12}",
                    "s", "theta(Q_s)", "closed form", "tau", "2 pi(s)", "hellinger"
                );
                for r in &trace.rows {
                    println!(
                        "{:>10.3e} {:>14.6} {:>14.6} {:>12.4e} {:>12.4e} {:>12.4e}",
                        r.s, r.theta_mixed, r.theta_closed_form, r.tv_exact.upper, r.tv_bound, r.hellinger.upper
                    );
                }
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
