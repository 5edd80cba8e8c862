use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{AlgorithmSpec, ExperimentConfig, SCHEMA};
use super::output::{config_hash, write_csv, write_jsonl};
use super::polyak::{polyak_subgradient, PolyakOptions};
use crate::adaptive::{pf_bl_mu, pf_ippm, PfBlOptions, PfIppmOptions};
use crate::bundle::{
    detect_matching_pairs, matching_stats, run_bl, BlOptions, MatchingStats, Trace,
};
use crate::certify::WCertificate;
use crate::error::{Error, Result};
use crate::gapred::{bl_mu, BlMuOptions};
use crate::geometry::DEFAULT_QP_TOL;
use crate::linalg::Point;
use crate::problems::{FirstOrderOracle, InstanceOracle, InstanceSpec, ProblemInstance};
use crate::proximal::{ippm, IppmOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertRecord {
    pub iota: Option<f64>,
    pub nu: f64,
    pub delta: f64,
}

impl From<&WCertificate> for CertRecord {
    fn from(c: &WCertificate) -> Self {
        CertRecord {
            iota: c.iota.finite(),
            nu: c.nu,
            delta: c.delta_used,
        }
    }
}

/// Result of one algorithm run; solver errors are kept as text next to whatever trace exists.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub trace: Trace,
    pub oracle_calls: u64,
    pub restarts: Option<usize>,
    pub guesses: Vec<f64>,
    pub certificates: Vec<CertRecord>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub algorithm: String,
    pub label: String,
    /// Relative to the output directory.
    pub trace_file: PathBuf,
    pub csv_file: Option<PathBuf>,
    pub oracle_calls: u64,
    pub final_f: Option<f64>,
    pub final_gap: Option<f64>,
    pub final_dist: Option<f64>,
    pub matching: MatchingStats,
    pub restarts: Option<usize>,
    pub guesses: Vec<f64>,
    pub certificates: Vec<CertRecord>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub runs: usize,
    pub failed: usize,
    pub total_oracle_calls: u64,
    pub best_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryReport {
    pub schema: String,
    pub config_hash: String,
    pub problem: InstanceSpec,
    pub runs: Vec<RunSummary>,
    pub aggregate: Aggregate,
}

#[derive(Serialize)]
struct Header<'a> {
    schema: &'a str,
    config_hash: &'a str,
    algorithm: &'a str,
    label: &'a str,
}

pub fn default_x0(instance: &ProblemInstance) -> Point {
    match instance.spec {
        InstanceSpec::Demo => Point(vec![1e-4, 1e-2]),
        _ => instance.region.project(&vec![1.0; instance.dim()]),
    }
}

/// Gap target used when stopping the known-value methods.
const STOP_GAP: f64 = 1e-17;

pub fn run_algorithm(
    instance: &ProblemInstance,
    spec: &AlgorithmSpec,
    budget: Option<u64>,
    tol: Option<f64>,
    seed: u64,
) -> Result<RunOutcome> {
    let x0 = match &spec.x0 {
        Some(v) => Point(v.clone()),
        None => default_x0(instance),
    };
    if x0.dim() != instance.dim() {
        return Err(Error::Config {
            field: "x0".into(),
            reason: format!("expected {} coordinates, got {}", instance.dim(), x0.dim()),
        });
    }
    let tol = tol.unwrap_or(DEFAULT_QP_TOL);
    let region = &instance.region;
    let mut oracle = InstanceOracle::perturbed(instance, spec.radius, seed).with_budget(budget);
    let fstar = || {
        spec.fstar
            .or(instance.truth.fstar)
            .ok_or_else(|| Error::Config {
                field: "fstar".into(),
                reason: format!("required by `{}` on this instance", spec.name),
            })
    };
    let need = |v: Option<f64>, field: &str| {
        v.ok_or_else(|| Error::Config {
            field: field.into(),
            reason: format!("required by `{}`", spec.name),
        })
    };
    let mut out = RunOutcome {
        trace: Trace::default(),
        oracle_calls: 0,
        restarts: None,
        guesses: vec![],
        certificates: vec![],
        error: None,
    };
    let res: Result<()> = match spec.name.as_str() {
        "bl" | "apx_bl" => {
            let mut o = BlOptions::new(spec.m, fstar()?);
            o.tol = tol;
            o.stop_gap = STOP_GAP;
            if let Some(n) = spec.max_iters {
                o.max_iters = n;
            }
            run_bl(&mut oracle, region, &x0, &o).map(|r| out.trace = r.trace)
        }
        "polyak_sgd" => {
            let mut o = PolyakOptions::new(fstar()?, spec.max_iters.unwrap_or(1000));
            o.stop_gap = STOP_GAP;
            polyak_subgradient(&mut oracle, region, &x0, &o).map(|t| out.trace = t)
        }
        "bl_mu" => {
            let mut o = BlMuOptions::new(need(spec.mu, "mu")?, spec.m, need(spec.eps, "eps")?);
            o.tol = tol;
            if let Some(n) = spec.max_iters {
                o.max_outer = n;
            }
            bl_mu(&mut oracle, region, &x0, &o).map(|r| out.trace = r.trace)
        }
        "ippm" => {
            let mut o = IppmOptions::new(need(spec.rho, "rho")?, spec.m, need(spec.eps, "eps")?);
            o.tol = tol;
            o.max_outer = spec.max_iters;
            ippm(&mut oracle, region, &x0, &o).map(|r| out.trace = r.trace)
        }
        "pf_bl_mu" => {
            let mut o = PfBlOptions::new(need(spec.mu, "mu")?, spec.m);
            o.tol = tol;
            o.target_eps = spec.eps;
            if let Some(n) = spec.max_iters {
                o.max_outer = n;
            }
            pf_bl_mu(&mut oracle, region, &x0, &o).map(|r| {
                out.restarts = Some(r.state.restart_count);
                out.guesses = r.state.guesses();
                out.certificates = r.certificates.iter().map(CertRecord::from).collect();
                out.trace = r.trace;
            })
        }
        "pf_ippm" => {
            let mut o = PfIppmOptions::new(need(spec.rho, "rho")?, spec.m, need(spec.eps, "eps")?);
            o.tol = tol;
            o.max_outer = spec.max_iters;
            pf_ippm(&mut oracle, region, &x0, &o).map(|r| {
                out.restarts = Some(r.state.restart_count);
                out.guesses = r.state.guesses();
                out.certificates = vec![CertRecord::from(&r.certificate)];
                out.trace = r.trace;
            })
        }
        other => Err(Error::Config {
            field: "name".into(),
            reason: format!("unknown algorithm `{other}`"),
        }),
    };
    out.oracle_calls = oracle.calls();
    match res {
        Ok(()) => {}
        Err(e @ Error::Config { .. }) => return Err(e),
        Err(Error::LevelSetEmpty { iteration, trace }) => {
            out.error = Some(format!("level set became empty at iteration {iteration}"));
            out.trace = *trace;
        }
        Err(e) => out.error = Some(e.to_string()),
    }
    Ok(out)
}

fn summarize(
    instance: &ProblemInstance,
    spec: &AlgorithmSpec,
    out: &RunOutcome,
    trace_file: PathBuf,
    csv_file: Option<PathBuf>,
) -> RunSummary {
    let best = out
        .trace
        .records
        .iter()
        .min_by(|a, b| a.fx.total_cmp(&b.fx));
    let labels = out.trace.labels();
    let horizon = labels.len().saturating_sub(1);
    let pairs = detect_matching_pairs(&labels, spec.m, horizon);
    let fstar = spec.fstar.or(instance.truth.fstar);
    RunSummary {
        algorithm: spec.name.clone(),
        label: spec.display_name().to_owned(),
        trace_file,
        csv_file,
        oracle_calls: out.oracle_calls,
        final_f: best.map(|r| r.fx),
        final_gap: best.and_then(|r| fstar.map(|f| r.fx - f)),
        final_dist: best.and_then(|r| r.dist_to_xstar),
        matching: matching_stats(&pairs, horizon, None),
        restarts: out.restarts,
        guesses: out.guesses.clone(),
        certificates: out.certificates.clone(),
        error: out.error.clone(),
    }
}

fn file_stem(i: usize, spec: &AlgorithmSpec) -> String {
    let label: String = spec
        .display_name()
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '_' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{i:02}_{label}")
}

/// Runs every algorithm of the config and writes `<NN>_<label>.jsonl` traces, optional
/// CSV exports and `summary.json` into `out_dir`.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<SummaryReport> {
    config.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|source| Error::Io {
        path: out_dir.to_owned(),
        source,
    })?;
    let hash = config_hash(config)?;
    let instance = ProblemInstance::from_spec(&config.problem)?;
    let mut runs = Vec::new();
    for (i, spec) in config.algorithms.iter().enumerate() {
        let out = run_algorithm(
            &instance,
            spec,
            config.budget,
            config.tol,
            config.seed.wrapping_add(i as u64),
        )
        .map_err(|e| match e {
            Error::Config { field, reason } => Error::Config {
                field: format!("algorithms[{i}].{field}"),
                reason,
            },
            other => other,
        })?;
        let stem = file_stem(i, spec);
        let trace_file = PathBuf::from(format!("{stem}.jsonl"));
        let header = Header {
            schema: SCHEMA,
            config_hash: &hash,
            algorithm: &spec.name,
            label: spec.display_name(),
        };
        write_jsonl(&out_dir.join(&trace_file), &header, &out.trace)?;
        let csv_file = if config.output.csv {
            let p = PathBuf::from(format!("{stem}.csv"));
            write_csv(
                &out_dir.join(&p),
                &out.trace,
                spec.fstar.or(instance.truth.fstar),
            )?;
            Some(p)
        } else {
            None
        };
        runs.push(summarize(&instance, spec, &out, trace_file, csv_file));
    }
    let aggregate = Aggregate {
        runs: runs.len(),
        failed: runs.iter().filter(|r| r.error.is_some()).count(),
        total_oracle_calls: runs.iter().map(|r| r.oracle_calls).sum(),
        best_gap: runs
            .iter()
            .filter_map(|r| r.final_gap)
            .min_by(f64::total_cmp),
    };
    let report = SummaryReport {
        schema: SCHEMA.into(),
        config_hash: hash,
        problem: config.problem.clone(),
        runs,
        aggregate,
    };
    let path = out_dir.join("summary.json");
    let text = serde_json::to_string_pretty(&report)?;
    std::fs::write(&path, text).map_err(|source| Error::Io { path, source })?;
    Ok(report)
}
