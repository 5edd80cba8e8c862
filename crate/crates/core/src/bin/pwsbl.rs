use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pwsbl::certify::{certificate_gap_bound, wcert_search, SearchOutcome};
use pwsbl::harness::{run_experiment, AlgorithmSpec, ExperimentConfig, OutputSpec, SCHEMA};
use pwsbl::problems::{InstanceOracle, InstanceSpec, ProblemInstance};
use pwsbl::suite::{run_all, SuiteOptions};
use pwsbl::{Error, Point, Result};

#[derive(Parser)]
#[command(
    name = "pwsbl",
    version,
    about = "Bundle-level methods for piecewise-smooth minimization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Base seed for perturbed oracles and randomized checks.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Exit with a non-zero status when a run or check fails.
    #[arg(long, global = true)]
    assert: bool,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Projection tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every algorithm of a JSON config.
    Run { config: PathBuf },
    /// Bundle-level against Polyak steps on `||x||^2 + |x_1|`.
    Demo,
    /// Search for a stationarity certificate at a point.
    Certify {
        /// Instance: `demo`, `abs`, an inline JSON instance description, or a path to one.
        instance: String,
        /// Comma-separated coordinates.
        point: String,
        #[arg(long)]
        delta: f64,
        #[arg(long, default_value_t = 4)]
        m: usize,
        /// Radius cap for the search.
        #[arg(long)]
        iota_max: Option<f64>,
    },
    /// Run the acceptance battery.
    Suite,
}

fn parse_instance(text: &str) -> Result<InstanceSpec> {
    match text {
        "demo" => return Ok(InstanceSpec::Demo),
        "abs" => return Ok(InstanceSpec::Abs),
        _ => {}
    }
    let json = if Path::new(text).is_file() {
        std::fs::read_to_string(text).map_err(|source| Error::Io {
            path: text.into(),
            source,
        })?
    } else {
        text.to_owned()
    };
    Ok(serde_json::from_str(&json)?)
}

fn parse_point(text: &str) -> Result<Point> {
    text.split(',')
        .map(|s| {
            s.trim().parse::<f64>().map_err(|e| Error::Config {
                field: "point".into(),
                reason: format!("`{s}`: {e}"),
            })
        })
        .collect::<Result<Vec<_>>>()
        .map(Point)
}

fn run(cli: &Cli, path: &Path) -> Result<bool> {
    let mut config = ExperimentConfig::load(path)?;
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    if cli.tol.is_some() {
        config.tol = cli.tol;
    }
    let out_dir = config
        .output
        .dir
        .clone()
        .unwrap_or_else(|| cli.out_dir.clone());
    let report = run_experiment(&config, &out_dir)?;
    for r in &report.runs {
        let gap = r.final_gap.map_or("-".into(), |g| format!("{g:.3e}"));
        let dist = r.final_dist.map_or("-".into(), |d| format!("{d:.3e}"));
        let status = r.error.as_deref().unwrap_or("ok");
        println!(
            "{:<12} calls {:>7}  gap {gap:>10}  dist {dist:>10}  {status}",
            r.label, r.oracle_calls
        );
    }
    println!(
        "summary written to {}",
        out_dir.join("summary.json").display()
    );
    Ok(report.aggregate.failed == 0)
}

fn demo(cli: &Cli) -> Result<bool> {
    let mut bl = AlgorithmSpec::new("bl");
    bl.m = 3;
    bl.max_iters = Some(100);
    let mut polyak = AlgorithmSpec::new("polyak_sgd");
    polyak.max_iters = Some(2000);
    let config = ExperimentConfig {
        schema: SCHEMA.into(),
        problem: InstanceSpec::Demo,
        algorithms: vec![bl, polyak],
        budget: None,
        output: OutputSpec {
            dir: None,
            csv: true,
        },
        tol: cli.tol,
        seed: cli.seed.unwrap_or(0),
    };
    let report = run_experiment(&config, &cli.out_dir)?;
    let mut calls = Vec::new();
    for (r, spec) in report.runs.iter().zip(&config.algorithms) {
        let path = cli.out_dir.join(&r.trace_file);
        let text = std::fs::read_to_string(&path).map_err(|source| Error::Io {
            path: path.clone(),
            source,
        })?;
        let hit = text
            .lines()
            .skip(1)
            .filter_map(|l| serde_json::from_str::<pwsbl::bundle::TraceRecord>(l).ok())
            .find(|rec| rec.dist_to_xstar.is_some_and(|d| d <= 1e-8))
            .map(|rec| rec.oracle_calls);
        match hit {
            Some(c) => println!(
                "{:<12} reaches distance 1e-8 after {c} oracle calls",
                spec.name
            ),
            None => println!(
                "{:<12} does not reach distance 1e-8 in {} oracle calls",
                spec.name, r.oracle_calls
            ),
        }
        calls.push(hit);
    }
    println!("traces written to {}", cli.out_dir.display());
    Ok(match (calls[0], calls[1]) {
        (Some(b), Some(p)) => b <= 100 && b < p,
        (Some(b), None) => b <= 100,
        _ => false,
    })
}

fn certify(
    cli: &Cli,
    instance: &str,
    point: &str,
    delta: f64,
    m: usize,
    iota_max: Option<f64>,
) -> Result<bool> {
    let inst = ProblemInstance::from_spec(&parse_instance(instance)?)?;
    let x = parse_point(point)?;
    if x.dim() != inst.dim() {
        return Err(Error::Dimension {
            expected: inst.dim(),
            got: x.dim(),
        });
    }
    let mut oracle = InstanceOracle::exact(&inst);
    let tol = cli.tol.unwrap_or(pwsbl::geometry::DEFAULT_QP_TOL);
    match wcert_search(&mut oracle, &inst.region, &x, delta, m, iota_max, tol)? {
        SearchOutcome::Certificate(cert) => {
            let summary = serde_json::json!({
                "iota": cert.iota,
                "nu": cert.nu,
                "kind": cert.kind,
                "smoothness": cert.smoothness,
                "gap_bound_for_mu": inst.truth.mu.map(|mu| certificate_gap_bound(&cert, mu)),
                "points": cert.points.iter().map(|s| &s.query).collect::<Vec<_>>(),
                "oracle_calls": pwsbl::problems::FirstOrderOracle::calls(&oracle),
            });
            println!("{}", serde_json::to_string_pretty(&summary)?);
            Ok(true)
        }
        SearchOutcome::False {
            distance,
            smoothness,
        } => {
            println!("False: final distance {distance:.3e} is below sqrt(delta / L) / 2 with L = {smoothness:.3e}");
            Ok(false)
        }
    }
}

fn suite(cli: &Cli) -> bool {
    let opts = SuiteOptions {
        seed: cli.seed.unwrap_or(0),
        tol: cli.tol.unwrap_or(SuiteOptions::default().tol),
    };
    let results = run_all(&opts);
    for r in &results {
        println!("{}", r.line());
    }
    results.iter().all(|r| r.passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run { config } => run(&cli, config),
        Command::Demo => demo(&cli),
        Command::Certify {
            instance,
            point,
            delta,
            m,
            iota_max,
        } => certify(&cli, instance, point, *delta, *m, *iota_max),
        Command::Suite => Ok(suite(&cli)),
    };
    match outcome {
        Ok(ok) if ok || !cli.assert => ExitCode::SUCCESS,
        Ok(_) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
