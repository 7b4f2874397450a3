use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qswitch::config::{InitName, PartialConfig, RuleName};
use qswitch::error::{AppError, AppResult};
use qswitch::io::{write_csv, write_json, CouplingFile, MatrixFile};
use qswitch::pipeline::{run_pipeline, write_outputs, RunReport};
use qswitch::study::{decade_grid, sweep, timesteps_study, SweepParam};
use qswitch::validate::validate;
use qswitch_core::random::{random_coupling, random_unitary, seeded};

#[derive(Parser)]
#[command(name = "qswitch", version, about = "Binary quantum control with switching-time optimization")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Relax, round, extract and optimize switching times for one instance.
    Run(RunArgs),
    /// Sweep the switching penalty over a grid and several seeds.
    Sweep(SweepArgs),
    /// Repeat the pipeline for several numbers of time steps.
    Timesteps(TimestepArgs),
    /// Check unitarity, extraction and file round trips.
    Validate(ValidateArgs),
    /// Write a seeded coupling matrix or target unitary.
    GenInstance(GenArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum RoundArg {
    Obj,
    Cdiff,
    Sur,
}

#[derive(Clone, Copy, ValueEnum)]
enum RuleArg {
    Verbatim,
    Delta,
}

#[derive(Clone, Copy, ValueEnum)]
enum InitArg {
    Uniform,
    Random,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// TOML configuration; flags override its settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Table instance (e.g. Energy2, NOT10, CircuitH2) or a family name.
    #[arg(long)]
    instance: Option<String>,
    /// Family of an inline instance: energy, cnot, not, circuit.
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    q: Option<usize>,
    #[arg(long)]
    t_f: Option<f64>,
    /// Number of time steps T.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long, value_enum)]
    round: Option<RoundArg>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, value_enum)]
    obj_rule: Option<RuleArg>,
    #[arg(long, value_enum)]
    init: Option<InitArg>,
    #[arg(long)]
    seed: Option<u64>,
    /// Target unitary JSON for circuit instances.
    #[arg(long)]
    target: Option<PathBuf>,
    /// Coupling matrix JSON for energy instances.
    #[arg(long)]
    coupling: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    skip_round: bool,
    #[arg(long)]
    skip_sto: bool,
    /// Keep zero-length intervals after switching-time optimization.
    #[arg(long)]
    no_compress: bool,
    /// Write per-iteration trace CSVs.
    #[arg(long)]
    traces: bool,
}

impl RunArgs {
    fn partial(&self) -> AppResult<PartialConfig> {
        let file = match &self.config {
            Some(path) => PartialConfig::load(path)?,
            None => PartialConfig::default(),
        };
        let flag = |b: bool| b.then_some(true);
        let flags = PartialConfig {
            instance: self.instance.clone(),
            family: self.family.clone(),
            q: self.q,
            t_f: self.t_f,
            steps: self.steps,
            rho: self.rho,
            round: self.round.map(|r| {
                match r {
                    RoundArg::Obj => "obj",
                    RoundArg::Cdiff => "cdiff",
                    RoundArg::Sur => "sur",
                }
                .to_string()
            }),
            alpha: self.alpha,
            beta: self.beta,
            obj_rule: self.obj_rule.map(|r| match r {
                RuleArg::Verbatim => RuleName::Verbatim,
                RuleArg::Delta => RuleName::Delta,
            }),
            init: self.init.map(|i| match i {
                InitArg::Uniform => InitName::Uniform,
                InitArg::Random => InitName::Random,
            }),
            seed: self.seed,
            target: self.target.clone(),
            coupling: self.coupling.clone(),
            out: self.out.clone(),
            skip_round: flag(self.skip_round),
            skip_sto: flag(self.skip_sto),
            compress: self.no_compress.then_some(false),
            traces: flag(self.traces),
            ..Default::default()
        };
        Ok(file.overlay(flags))
    }
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, value_enum, default_value = "alpha")]
    param: ParamArg,
    /// Comma-separated values; defaults to four decades from 1e-4 to 1.
    #[arg(long, value_delimiter = ',')]
    values: Vec<f64>,
    /// Comma-separated seeds, one instance per seed.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    seeds: Vec<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ParamArg {
    Alpha,
    Beta,
}

#[derive(Args)]
struct TimestepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Comma-separated numbers of time steps.
    #[arg(long = "steps-list", value_delimiter = ',', required = true)]
    steps_list: Vec<usize>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Keep the round-trip files here instead of a temporary directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum GenKind {
    /// Symmetric zero-diagonal coupling matrix with entries in [-1, 1].
    Coupling,
    /// Haar-random target unitary of dimension 2^q.
    Target,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    kind: GenKind,
    #[arg(long)]
    q: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn print_report(r: &RunReport) {
    println!("instance    {}", r.config.instance);
    println!("continuous  objective {:.6e}  TV {:.3}", r.continuous.objective, r.continuous.tv);
    if let Some(b) = &r.binary {
        println!("binary      objective {:.6e}  TV {:.1}  switches {}", b.objective, b.tv, b.switches);
    }
    if let Some(o) = &r.optimized {
        println!(
            "optimized   objective {:.6e}  TV {:.1}  switches {}  kkt {:.2e}  ({})",
            o.objective, o.tv, o.switches, o.kkt, o.status
        );
    }
    if let Some(e) = &r.energy {
        if let Some(fe) = e.first_excited_gap {
            println!("energy gap  {:.4e}  (first excited {:.4e})", e.obtained_gap, fe);
        }
    }
    println!("time        {:.3} s", r.timings.total);
}

fn out_dir(run: &RunArgs, default: &str) -> PathBuf {
    run.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn execute(cli: Cli) -> AppResult<bool> {
    match cli.command {
        Command::Run(args) => {
            let cfg = args.partial()?.resolve()?;
            let (report, art) = run_pipeline(&cfg)?;
            print_report(&report);
            if let Some(dir) = &cfg.out {
                write_outputs(dir, &report, &art)?;
            }
            Ok(true)
        }
        Command::Sweep(args) => {
            let cfg = args.run.partial()?.resolve()?;
            let values = if args.values.is_empty() { decade_grid() } else { args.values.clone() };
            let param = match args.param {
                ParamArg::Alpha => SweepParam::Alpha,
                ParamArg::Beta => SweepParam::Beta,
            };
            let (rows, summary) = sweep(&cfg, param, &values, &args.seeds)?;
            let dir = out_dir(&args.run, "sweep-out");
            write_csv(&dir.join("sweep.csv"), &rows)?;
            write_csv(&dir.join("tradeoff.csv"), &summary)?;
            println!("{:>10} {:>14} {:>8} {:>14} {:>8}", "param", "objective", "TV", "energy gap", "<E_fe");
            for s in &summary {
                let gap = s.mean_energy_gap.map_or("-".into(), |g| format!("{g:.4e}"));
                let below = s.below_first_excited.map_or("-".into(), |b| format!("{b}/{}", s.runs));
                println!("{:>10} {:>14.6e} {:>8.2} {:>14} {:>8}", s.param, s.mean_objective, s.mean_tv, gap, below);
            }
            Ok(true)
        }
        Command::Timesteps(args) => {
            let cfg = args.run.partial()?.resolve()?;
            let rows = timesteps_study(&cfg, &args.steps_list)?;
            write_csv(&out_dir(&args.run, "timesteps-out").join("timesteps.csv"), &rows)?;
            println!("{:>6} {:>14} {:>14} {:>6} {:>9}", "T", "relaxed", "optimized", "TV", "seconds");
            for r in &rows {
                println!("{:>6} {:>14.6e} {:>14.6e} {:>6.1} {:>9.3}", r.steps, r.relaxed, r.objective, r.tv, r.seconds);
            }
            Ok(true)
        }
        Command::Validate(args) => {
            let tmp;
            let dir: &Path = match &args.out {
                Some(d) => d,
                None => {
                    tmp = tempfile::tempdir().map_err(|source| AppError::Io {
                        path: std::env::temp_dir(),
                        source,
                    })?;
                    tmp.path()
                }
            };
            let report = validate(args.seed, dir)?;
            for c in &report.checks {
                let mark = if c.pass { "PASS" } else { "FAIL" };
                println!("{mark}  {:<40} {:.3e} (tol {:.0e})", c.name, c.value, c.tol);
            }
            Ok(report.passed())
        }
        Command::GenInstance(args) => {
            let mut rng = seeded(args.seed);
            match args.kind {
                GenKind::Coupling => {
                    if args.q < 2 {
                        return Err(AppError::config("a coupling matrix needs q >= 2"));
                    }
                    let j = random_coupling(&mut rng, args.q);
                    write_json(&args.out, &CouplingFile { q: args.q, j })?;
                }
                GenKind::Target => {
                    if args.q == 0 || args.q > 8 {
                        return Err(AppError::config("target q must be between 1 and 8"));
                    }
                    let u = random_unitary(&mut rng, 1 << args.q);
                    write_json(&args.out, &MatrixFile::from_matrix(&u))?;
                }
            }
            println!("wrote {}", args.out.display());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        // failed invariants are a numerical failure
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
