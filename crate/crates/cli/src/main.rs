use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::Value;

use vaxmpc_core::certificates::{check_eta_bound, check_invariance, check_lyapunov_decrease, CertificateParams};
use vaxmpc_core::scenario::config::resolve;
use vaxmpc_core::scenario::output::{read_run, write_json_file, write_run};
use vaxmpc_core::scenario::{compare, load_config, ScenarioConfig, ScenarioMetrics};
use vaxmpc_core::{simulate, Error, PolicyKind};

#[derive(Parser, Debug)]
#[command(name = "vaxmpc", version, about = "Age-structured SIRD scenarios with MPC vaccination allocation")]
struct Cli {
    /// Overrides the solver seed of the scenario, and seeds certificate sampling.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Only print errors.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one scenario and write its output directory.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Defaults to the policy named in the config.
        #[arg(long)]
        policy: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tabulate metrics of previously written runs.
    Compare {
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        /// Also write the report as JSON to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample the terminal-set, Lyapunov and growth-bound checks.
    Certify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        /// Random rollouts for the growth bound.
        #[arg(long, default_value_t = 100)]
        rollouts: usize,
        /// Write all reports as JSON to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-run a scenario for each value of one config field.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// `field=v1,v2,...`, where field is a dotted path such as `mpc.horizon`.
        #[arg(long)]
        vary: String,
        #[arg(long)]
        policy: Option<String>,
        #[arg(long, default_value = "sweep")]
        out: PathBuf,
    },
}

enum Failure {
    Core(Error),
    Certificate(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::Solver { .. } => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = if cli.quiet { "error" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
        Err(Failure::Certificate(msg)) => {
            eprintln!("certificate violation: {msg}");
            ExitCode::from(3)
        }
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Simulate { config, policy, out } => {
            let cfg = prepare(load_config(config)?, policy.as_deref(), cli.seed)?;
            let metrics = run_one(&cfg, out)?;
            if !cli.quiet {
                print_metrics(&metrics);
            }
            Ok(())
        }
        Command::Compare { runs, out } => {
            let loaded = runs.iter().map(|d| read_run(d)).collect::<Result<Vec<_>, _>>()?;
            let report = compare(&loaded)?;
            if let Some(path) = out {
                write_json_file(&report, path)?;
            }
            if !cli.quiet {
                print!("{}", report.to_text());
            }
            Ok(())
        }
        Command::Certify { config, samples, rollouts, out } => {
            let cfg = load_config(config)?;
            let seed = cli.seed.unwrap_or(0);
            let cert = CertificateParams::new(cfg.mpc.epsilon, &cfg.params)?;
            let v_bar = cfg.mpc.v_bar;
            let reports = vec![
                check_invariance(&cert, &cfg.params, v_bar, *samples, seed)?,
                check_lyapunov_decrease(&cert, &cfg.params, v_bar, *samples, seed)?,
                check_eta_bound(&cfg.params, cert.eta, v_bar, *rollouts, cfg.mpc.strategy_horizon, seed)?,
            ];
            if let Some(path) = out {
                write_json_file(&reports, path)?;
            }
            if !cli.quiet {
                println!("eta = {}", cert.eta);
                for r in &reports {
                    println!(
                        "{:<24} samples {:>6}  violations {:>4}  worst margin {:.3e}",
                        r.check, r.n_samples, r.n_violations, r.worst_margin
                    );
                }
            }
            let failed: Vec<&str> = reports.iter().filter(|r| !r.passed()).map(|r| r.check.as_str()).collect();
            if failed.is_empty() {
                Ok(())
            } else {
                Err(Failure::Certificate(failed.join(", ")))
            }
        }
        Command::Sweep { config, vary, policy, out } => {
            let base = load_config(config)?;
            let base_dir = config.parent().unwrap_or(Path::new("."));
            let (field, values) = parse_vary(vary)?;
            let mut summary = Vec::new();
            for value in values {
                let mut doc = serde_json::to_value(base.to_config_file()).expect("config serializes");
                set_field(&mut doc, &field, value.clone())?;
                let file = serde_json::from_value(doc).map_err(|e| Error::Validation(format!("{field}: {e}")))?;
                let cfg = prepare(resolve(file, base_dir)?, policy.as_deref(), cli.seed)?;
                let label = match &value {
                    Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                let metrics = run_one(&cfg, &out.join(format!("{field}={label}")))?;
                if !cli.quiet {
                    println!("{field} = {label}");
                    print_metrics(&metrics);
                }
                summary.push(serde_json::json!({ "field": field, "value": value, "metrics": metrics }));
            }
            write_json_file(&summary, &out.join("sweep.json"))?;
            Ok(())
        }
    }
}

fn prepare(mut cfg: ScenarioConfig, policy: Option<&str>, seed: Option<u64>) -> Result<ScenarioConfig, Error> {
    if let Some(p) = policy {
        cfg.policy = p.parse::<PolicyKind>()?;
    }
    if let Some(s) = seed {
        cfg.mpc.solver.rng_seed = s;
    }
    Ok(cfg)
}

fn run_one(cfg: &ScenarioConfig, out: &Path) -> Result<ScenarioMetrics, Error> {
    let run = simulate(cfg.policy, &cfg.initial_state()?, &cfg.mpc, &cfg.params)?;
    let metrics = write_run(&run, out)?;
    let config_path = out.join("config.json");
    std::fs::write(&config_path, cfg.to_json() + "\n").map_err(|e| Error::Io { path: config_path, source: e })?;
    Ok(metrics)
}

fn print_metrics(m: &ScenarioMetrics) {
    println!("policy               {}", m.policy);
    println!("deaths total         {:.2}", m.deaths_total);
    println!("deaths since start   {:.2}", m.deaths_since_vax);
    println!("cumulative infected  {:.2}", m.cumulative_incidence);
    match m.eradication_day {
        Some(d) => println!("eradication day      {d}"),
        None => println!("eradication day      not reached"),
    }
    println!("vaccines used        {:.0}", m.vaccines_used);
}

fn parse_vary(arg: &str) -> Result<(String, Vec<Value>), Error> {
    let (field, list) =
        arg.split_once('=').ok_or_else(|| Error::Validation(format!("--vary '{arg}' must look like field=v1,v2")))?;
    let values: Vec<Value> = list
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string())))
        .collect();
    if values.is_empty() {
        return Err(Error::Validation(format!("--vary '{arg}' lists no values")));
    }
    Ok((field.trim().to_string(), values))
}

fn set_field(doc: &mut Value, field: &str, value: Value) -> Result<(), Error> {
    let mut node = doc;
    let parts: Vec<&str> = field.split('.').collect();
    for (idx, part) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::Validation(format!("{field}: '{part}' is not inside an object")))?;
        if idx + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("split yields at least one part")
}
