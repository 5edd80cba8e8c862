//! Acceptance battery shared by the `acceptance` test target and `pwsbl suite`.
//!
//! Each criterion runs a scaled-down experiment with fixed seeds and reports
//! whether the measured quantities stay within the stated tolerances.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adaptive::{pf_bl_mu, pf_ippm, PfBlOptions, PfIppmOptions};
use crate::bundle::{
    bridged_three_point_check, detect_matching_pairs, matching_stats, run_bl, BlOptions, Trace,
};
use crate::certify::{
    certificate_distance_bound, certificate_gap_bound, moreau_bound_from_cert,
    validate_certificate, wcert_search, CertificateKind, Radius, SearchOutcome, WCertificate,
};
use crate::error::Result;
use crate::gapred::{bl_mu, gap_reduction, BlMuOptions, GrOptions};
use crate::geometry::{eval_wgap, min_max_affine, Region, DEFAULT_QP_TOL};
use crate::harness::{polyak_subgradient, PolyakOptions};
use crate::linalg::{dist_sq, norm, norm_sq, Point};
use crate::problems::{
    demo_pws, induced_delta, max_of_quadratics, uniform_in_ball, weakly_convex_max, Cut,
    FirstOrderOracle, InstanceOracle, OracleRng, ProblemInstance,
};
use crate::proximal::{ippm, moreau_residual, IppmOptions, ProxOracle, ProxSurrogate};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionResult {
    pub id: u32,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        format!(
            "{} {:>2} {}: {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteOptions {
    /// Added to every seed, so `0` reproduces the frozen battery.
    pub seed: u64,
    pub tol: f64,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions {
            seed: 0,
            tol: DEFAULT_QP_TOL,
        }
    }
}

type Check = fn(&SuiteOptions) -> Result<(bool, String)>;

pub const CRITERIA: [(u32, &str, Check); 16] = [
    (1, "demo reproduction", demo_reproduction),
    (2, "bridged three-point", bridged_three_point),
    (3, "matching-pair contraction", matching_pair_contraction),
    (4, "linear convergence", linear_convergence),
    (5, "approximate oracle floor", apx_floor),
    (6, "gap reduction contract", gap_reduction_contract),
    (7, "restarted gap reduction", restarted_gap_reduction),
    (8, "W-gap properties", wgap_properties),
    (9, "certificate soundness", certificate_soundness),
    (10, "no false negatives", no_false_negatives),
    (11, "Moreau chain", moreau_chain),
    (12, "inexact proximal point", inexact_proximal_point),
    (13, "adaptive growth guess", adaptive_growth),
    (14, "adaptive weak-convexity guess", adaptive_weak_convexity),
    (15, "perturbed cut accuracy", perturbed_cut_accuracy),
    (16, "initial lower bounds", initial_bounds),
];

pub fn run_criterion(id: u32, opts: &SuiteOptions) -> Option<CriterionResult> {
    let (id, name, check) = CRITERIA.iter().find(|c| c.0 == id)?;
    let (passed, detail) = match check(opts) {
        Ok(r) => r,
        Err(e) => (false, format!("error: {e}")),
    };
    Some(CriterionResult {
        id: *id,
        name: name.to_string(),
        passed,
        detail,
    })
}

pub fn run_all(opts: &SuiteOptions) -> Vec<CriterionResult> {
    CRITERIA
        .iter()
        .filter_map(|c| run_criterion(c.0, opts))
        .collect()
}

fn rng(opts: &SuiteOptions, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(opts.seed.wrapping_mul(1_000_003).wrapping_add(stream))
}

fn random_point(rng: &mut ChaCha8Rng, center: &[f64], radius: f64) -> Point {
    Point(uniform_in_ball(center, radius, rng))
}

fn fstar(inst: &ProblemInstance) -> f64 {
    inst.truth
        .fstar
        .expect("convex suite has known optimal value")
}

fn xstar(inst: &ProblemInstance) -> &Point {
    &inst.truth.xstar[0]
}

/// Convex quadratic-growth suite: `k` in 2..=4, `n` in 3..=10, condition number up to 10.
fn qg_suite(opts: &SuiteOptions, count: usize, stream: u64) -> Result<Vec<ProblemInstance>> {
    let mut r = rng(opts, stream);
    (0..count)
        .map(|i| {
            let k = 2 + i % 3;
            let n = r.gen_range(3..=10);
            let mu = r.gen_range(0.5..1.0);
            let l = mu * r.gen_range(2.0..10.0);
            max_of_quadratics(k, n, l, mu, 1 + opts.seed * 1000 + stream * 100 + i as u64)
        })
        .collect()
}

/// Weakly convex suite on boxes in the plane, small enough for a grid lower bound.
fn wc_suite(opts: &SuiteOptions, count: usize, stream: u64) -> Result<Vec<ProblemInstance>> {
    let mut r = rng(opts, stream);
    (0..count)
        .map(|i| {
            let k = r.gen_range(3..=5);
            let rho = [0.5, 1.0, 2.0][i % 3];
            weakly_convex_max(
                k,
                2,
                rho,
                1 + opts.seed * 1000 + stream * 100 + i as u64,
                2.0,
            )
        })
        .collect()
}

fn calls_to_distance(trace: &Trace, target: f64) -> Option<u64> {
    trace
        .records
        .iter()
        .find(|r| r.dist_to_xstar.is_some_and(|d| d <= target))
        .map(|r| r.oracle_calls)
}

fn demo_reproduction(_: &SuiteOptions) -> Result<(bool, String)> {
    let inst = demo_pws();
    let x0 = Point(vec![1e-4, 1e-2]);
    let mut o = InstanceOracle::exact(&inst);
    let mut bo = BlOptions::new(3, 0.0);
    bo.max_iters = 100;
    bo.stop_gap = 1e-17;
    let bl = run_bl(&mut o, &inst.region, &x0, &bo)?;
    let bl_calls = calls_to_distance(&bl.trace, 1e-8);
    let mut o = InstanceOracle::exact(&inst);
    let mut po = PolyakOptions::new(0.0, 5000);
    po.stop_gap = 1e-17;
    let pk = polyak_subgradient(&mut o, &inst.region, &x0, &po)?;
    let pk_calls = calls_to_distance(&pk, 1e-8);
    let flips = pk
        .records
        .windows(2)
        .filter(|w| w[0].x[0] * w[1].x[0] < 0.0)
        .count();
    let fewer = match (bl_calls, pk_calls) {
        (Some(b), Some(p)) => b < p,
        (Some(_), None) => true,
        _ => false,
    };
    let ok = bl_calls.is_some_and(|c| c <= 100) && fewer && flips >= 10;
    Ok((ok, format!("bl calls to 1e-8: {bl_calls:?}, polyak calls: {pk_calls:?}, polyak sign flips: {flips}")))
}

fn bl_run(inst: &ProblemInstance, x0: &Point, m: usize, iters: usize) -> Result<Trace> {
    let mut o = InstanceOracle::exact(inst);
    let mut bo = BlOptions::new(m, fstar(inst));
    bo.max_iters = iters;
    bo.stop_gap = 1e-13;
    Ok(run_bl(&mut o, &inst.region, x0, &bo)?.trace)
}

fn bridged_three_point(opts: &SuiteOptions) -> Result<(bool, String)> {
    let suite = qg_suite(opts, 20, 2)?;
    let mut r = rng(opts, 20);
    let mut worst = f64::NEG_INFINITY;
    for inst in &suite {
        let x0 = random_point(&mut r, xstar(inst), 2.0);
        let m = inst.truth.pieces + 1;
        let tr = bl_run(inst, &x0, m, 200)?;
        let d0 = dist_sq(&x0, xstar(inst));
        worst = worst.max(bridged_three_point_check(&tr, xstar(inst), m) / d0);
    }
    Ok((
        worst <= 1e-8,
        format!("worst violation / dist0^2 = {worst:.3e} over 20 runs"),
    ))
}

fn matching_pair_contraction(opts: &SuiteOptions) -> Result<(bool, String)> {
    let suite = qg_suite(opts, 10, 3)?;
    let mut r = rng(opts, 30);
    let (mut pairs, mut worst) = (0, f64::NEG_INFINITY);
    for inst in &suite {
        let k = inst.truth.pieces;
        let (l, mu) = (inst.truth.smoothness.unwrap(), inst.truth.mu.unwrap());
        let x0 = random_point(&mut r, xstar(inst), 2.0);
        let tr = bl_run(inst, &x0, k + 1, 300)?;
        let q = k as f64 * l / (k as f64 * l + mu);
        let dist2 = |t: usize| tr.records[t].dist_to_xstar.unwrap().powi(2);
        for (a, b) in detect_matching_pairs(&tr.labels(), k, tr.len() - 1) {
            pairs += 1;
            worst = worst.max(dist2(b) - q * dist2(a));
        }
    }
    Ok((
        pairs > 0 && worst <= 1e-10,
        format!("{pairs} pairs, worst excess {worst:.3e}"),
    ))
}

fn linear_convergence(opts: &SuiteOptions) -> Result<(bool, String)> {
    let suite = qg_suite(opts, 10, 3)?;
    let mut r = rng(opts, 30);
    let mut worst: f64 = 0.0;
    let mut horizons = Vec::new();
    for inst in &suite {
        let k = inst.truth.pieces;
        let (l, mu) = (inst.truth.smoothness.unwrap(), inst.truth.mu.unwrap());
        let x0 = random_point(&mut r, xstar(inst), 2.0);
        let tr = bl_run(inst, &x0, k + 1, 300)?;
        let labels = tr.labels();
        let d0 = dist_sq(&x0, xstar(inst));
        for n in 1..tr.len() {
            let pairs = detect_matching_pairs(&labels, k, n);
            let st = matching_stats(&pairs, n, None);
            let kappa = st.sigma_bar * st.kappa_bar * (std::f64::consts::E * l / mu + 1.0);
            let bound = std::f64::consts::E * (1.0 + 1.0 / kappa).powi(-(n as i32)) * d0;
            let d = tr.records[n].dist_to_xstar.unwrap().powi(2);
            worst = worst.max(d / bound);
        }
        horizons.push(tr.len() - 1);
    }
    Ok((
        worst <= 2.0,
        format!("worst dist^2 / bound = {worst:.3e}, horizons {horizons:?}"),
    ))
}

fn apx_floor(opts: &SuiteOptions) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    let mut r = rng(opts, 50);
    let radius = 1e-4;
    for s in 0..20u64 {
        let inst = max_of_quadratics(3, 5, 4.0, 1.0, 500 + opts.seed * 1000 + s)?;
        let x0 = random_point(&mut r, xstar(&inst), 1.0);
        let reach = x0.dist(xstar(&inst)) + radius;
        let m_lip = inst.objective.lipschitz_on_ball(xstar(&inst), reach);
        let delta = induced_delta(radius, inst.truth.smoothness.unwrap(), m_lip);
        let mut o = InstanceOracle::perturbed(&inst, radius, opts.seed + s);
        let mut bo = BlOptions::new(4, fstar(&inst));
        bo.max_iters = 300;
        let res = run_bl(&mut o, &inst.region, &x0, &bo)?;
        worst = worst.max((res.f_best - fstar(&inst)) / delta);
    }
    Ok((
        worst <= 10.0,
        format!("worst final gap / delta = {worst:.3e} over 20 seeds"),
    ))
}

/// Outcome of the randomized gap-reduction battery.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrContractStats {
    pub calls: usize,
    /// Largest `(delta_out - 1e-12) / delta_in`.
    pub worst_ratio: f64,
    /// Largest `funder_out - f*`.
    pub worst_lower: f64,
    /// Calls above `ceil(3 kappa sigma L / mu) + m`.
    pub over_bound: usize,
    /// Largest `iterations / (ceil(3 kappa sigma L / mu) + m)`.
    pub worst_iteration_ratio: f64,
    /// Calls above `ceil(6 kappa sigma L / mu) + m`, the bound matching the `6 / mu` trigger.
    pub over_doubled_bound: usize,
}

/// 200 gap-reduction calls from random points with random valid lower bounds.
pub fn gap_reduction_stats(opts: &SuiteOptions) -> Result<GrContractStats> {
    let suite = qg_suite(opts, 20, 6)?;
    let mut r = rng(opts, 60);
    let mut st = GrContractStats {
        calls: 200,
        worst_ratio: 0.0,
        worst_lower: f64::NEG_INFINITY,
        over_bound: 0,
        worst_iteration_ratio: 0.0,
        over_doubled_bound: 0,
    };
    for call in 0..st.calls {
        let inst = &suite[call % suite.len()];
        let m = r.gen_range(inst.truth.pieces..=inst.truth.pieces + 4);
        let mu = inst.truth.mu.unwrap();
        let rad = r.gen_range(0.01..2.0);
        let x0 = random_point(&mut r, xstar(inst), rad);
        let mut o = InstanceOracle::exact(inst);
        let start = o.sample(&x0)?;
        let gap = start.fx - fstar(inst);
        let funder = fstar(inst) - r.gen_range(0.0..2.0) * gap;
        let mut go = GrOptions::new(mu, m);
        go.tol = opts.tol;
        let fbar = start.fx;
        let out = gap_reduction(&mut o, &inst.region, start, fbar, funder, &go, None)?;
        st.worst_ratio = st.worst_ratio.max((out.delta_out - 1e-12) / out.delta_in);
        st.worst_lower = st.worst_lower.max(out.funder - fstar(inst));
        let iters = out.iterations as f64;
        let bound = out.iteration_bound + m as f64;
        st.worst_iteration_ratio = st.worst_iteration_ratio.max(iters / bound);
        if iters > bound {
            st.over_bound += 1;
        }
        let d = out.dp_stats;
        let doubled = d.l_bar.map_or(f64::INFINITY, |l| {
            (6.0 * d.kappa_bar * d.sigma_bar * l / mu).ceil()
        });
        if iters > doubled + m as f64 {
            st.over_doubled_bound += 1;
        }
    }
    Ok(st)
}

fn gap_reduction_contract(opts: &SuiteOptions) -> Result<(bool, String)> {
    let st = gap_reduction_stats(opts)?;
    let ok = st.worst_ratio <= 2.0 / 3.0 && st.worst_lower <= 1e-10 && st.over_bound == 0;
    Ok((
        ok,
        format!(
            "worst delta_out / delta_in = {:.4}, worst funder - f* = {:.3e}; {} of {} calls exceed ceil(3 kappa sigma L / mu) + m (worst ratio {:.2}), {} exceed ceil(6 kappa sigma L / mu) + m",
            st.worst_ratio, st.worst_lower, st.over_bound, st.calls, st.worst_iteration_ratio, st.over_doubled_bound
        ),
    ))
}

/// Criteria whose stated constant cannot be met by the algorithm as specified.
pub const KNOWN_UNATTAINABLE: [u32; 1] = [6];

fn restarted_gap_reduction(opts: &SuiteOptions) -> Result<(bool, String)> {
    let suite = qg_suite(opts, 10, 7)?;
    let mut r = rng(opts, 70);
    let eps = 1e-6;
    let (mut ok, mut worst_gap, mut worst_outer) = (true, 0.0f64, 0.0f64);
    for inst in &suite {
        let x0 = random_point(&mut r, xstar(inst), 2.0);
        let mut o = InstanceOracle::exact(inst);
        let mut bo = BlMuOptions::new(inst.truth.mu.unwrap(), inst.truth.pieces + 2, eps);
        bo.tol = opts.tol;
        let res = bl_mu(&mut o, &inst.region, &x0, &bo)?;
        let gap = res.best.fx - fstar(inst);
        worst_gap = worst_gap.max(gap);
        worst_outer = worst_outer.max(res.outer_calls as f64 / res.outer_bound as f64);
        ok &= gap <= eps && res.outer_calls <= res.outer_bound;
    }
    Ok((ok, format!("worst gap {worst_gap:.3e} (eps {eps:.0e}), worst outer calls / bound = {worst_outer:.3}")))
}

/// Exact `min_{box} max_i cut_i` by enumerating vertices of the epigraph LP.
fn brute_min_max(cuts: &[Cut], lower: &[f64], upper: &[f64]) -> f64 {
    let n = lower.len();
    // Rows `a . (x, t) <= b`.
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    for c in cuts {
        let mut a = c.gradient.clone();
        a.push(-1.0);
        rows.push((a, -c.intercept()));
    }
    for j in 0..n {
        let mut a = vec![0.0; n + 1];
        a[j] = 1.0;
        rows.push((a.clone(), upper[j]));
        a[j] = -1.0;
        rows.push((a, -lower[j]));
    }
    let mut best = f64::INFINITY;
    let mut idx: Vec<usize> = (0..=n).collect();
    let total = rows.len();
    loop {
        let a = DMatrix::from_fn(n + 1, n + 1, |i, j| rows[idx[i]].0[j]);
        let b = DVector::from_fn(n + 1, |i, _| rows[idx[i]].1);
        if let Some(z) = a.lu().solve(&b) {
            let feasible = rows.iter().all(|(r, rhs)| {
                r.iter().zip(z.iter()).map(|(p, q)| p * q).sum::<f64>() <= rhs + 1e-9
            });
            if feasible && z.iter().all(|v| v.is_finite()) {
                best = best.min(z[n]);
            }
        }
        // Next combination in lexicographic order.
        let mut i = n + 1;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if idx[i] < total - (n + 1 - i) {
                idx[i] += 1;
                for j in i + 1..=n {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}

fn random_cuts(r: &mut ChaCha8Rng, n: usize, count: usize) -> Vec<Cut> {
    (0..count)
        .map(|_| Cut {
            center: Point((0..n).map(|_| r.gen_range(-1.0..1.0)).collect()),
            value: r.gen_range(-1.0..1.0),
            gradient: (0..n).map(|_| r.gen_range(-2.0..2.0)).collect(),
        })
        .collect()
}

fn convex_certificates(
    opts: &SuiteOptions,
    trials: usize,
    stream: u64,
) -> Result<(Vec<WCertificate>, usize)> {
    let suite = qg_suite(opts, 25, stream)?;
    let mut r = rng(opts, stream * 10);
    let mut certs = Vec::new();
    let mut falses = 0;
    for trial in 0..trials {
        let inst = &suite[trial % suite.len()];
        let rad = r.gen_range(0.01..3.0);
        let x = random_point(&mut r, xstar(inst), rad);
        let gap = inst.value(&x) - fstar(inst);
        let delta = if trial % 5 == 0 {
            gap
        } else {
            gap * (1.0 + r.gen_range(0.0..1.0))
        };
        let m = r.gen_range(1..=8);
        let mut o = InstanceOracle::exact(inst);
        match wcert_search(&mut o, &inst.region, &x, delta, m, None, opts.tol)? {
            SearchOutcome::Certificate(c) => certs.push(*c),
            SearchOutcome::False { .. } => falses += 1,
        }
    }
    Ok((certs, falses))
}

fn wgap_properties(opts: &SuiteOptions) -> Result<(bool, String)> {
    let (certs, _) = convex_certificates(opts, 100, 8)?;
    let mut worst_valid = f64::NEG_INFINITY;
    let mut checked = 0;
    for c in &certs {
        if let Radius::Finite(_) = c.iota {
            let v = validate_certificate(c, opts.tol, None)?;
            worst_valid = worst_valid.max(v.value - c.nu);
            checked += 1;
        }
    }
    let mut r = rng(opts, 81);
    let radii = [0.1, 0.3, 1.0, 3.0, 10.0];
    let mut worst_mono = f64::NEG_INFINITY;
    for _ in 0..20 {
        let cuts = random_cuts(&mut r, 3, 5);
        let center = random_point(&mut r, &[0.0; 3], 1.0);
        let mut prev = f64::INFINITY;
        for &iota in &radii {
            let v = eval_wgap(&center, &cuts, iota, &Region::WholeSpace, opts.tol)?.value;
            worst_mono = worst_mono.max(v - prev);
            prev = v;
        }
    }
    let mut worst_brute: f64 = 0.0;
    for n in 1..=2 {
        for _ in 0..20 {
            let count = r.gen_range(1..=6);
            let cuts = random_cuts(&mut r, n, count);
            let (lower, upper) = (vec![-1.0; n], vec![1.0; n]);
            let region = Region::Box {
                lower: lower.clone(),
                upper: upper.clone(),
            };
            let mm = min_max_affine(&cuts, &region, None, opts.tol)?;
            worst_brute = worst_brute.max((mm.value - brute_min_max(&cuts, &lower, &upper)).abs());
        }
    }
    let ok = worst_valid <= 1e-8 && worst_mono <= 1e-9 && worst_brute <= 1e-6;
    Ok((
        ok,
        format!("{checked} certificates, worst V - nu = {worst_valid:.3e}; worst monotonicity excess {worst_mono:.3e}; worst min-max error vs enumeration {worst_brute:.3e}"),
    ))
}

fn certificate_soundness(opts: &SuiteOptions) -> Result<(bool, String)> {
    let suite = qg_suite(opts, 25, 9)?;
    let mut r = rng(opts, 90);
    let (mut ok, mut certs, mut unbounded, mut falses) = (true, 0, 0, 0);
    let (mut worst_upper, mut worst_lower, mut worst_dist) = (0.0f64, f64::INFINITY, f64::INFINITY);
    for trial in 0..100 {
        let inst = &suite[trial % suite.len()];
        let mu = inst.truth.mu.unwrap();
        let rad = r.gen_range(0.01..3.0);
        let x = random_point(&mut r, xstar(inst), rad);
        let gap = inst.value(&x) - fstar(inst);
        let m = r.gen_range(1..=8);
        let mut o = InstanceOracle::exact(inst);
        let cert = match wcert_search(&mut o, &inst.region, &x, gap, m, None, opts.tol)? {
            SearchOutcome::Certificate(c) => *c,
            SearchOutcome::False { .. } => {
                falses += 1;
                ok = false;
                continue;
            }
        };
        certs += 1;
        let bound = certificate_gap_bound(&cert, mu);
        let lt = cert.smoothness.unwrap_or(0.0);
        let cap = (2.0f64).max(32.0 * lt / mu) * gap + 1e-8;
        worst_lower = worst_lower.min(bound / gap);
        worst_upper = worst_upper.max(bound / cap);
        ok &= bound >= gap && bound <= cap;
        match certificate_distance_bound(&cert, mu) {
            Some(d) => {
                let truth = x.dist(xstar(inst));
                worst_dist = worst_dist.min(d / truth);
                ok &= d >= truth;
            }
            None => unbounded += 1,
        }
    }
    Ok((
        ok,
        format!(
            "{certs} certificates ({unbounded} unbounded, {falses} False); min bound/gap {worst_lower:.3}, max bound/cap {worst_upper:.3}, min distance bound/true {worst_dist:.3}"
        ),
    ))
}

fn no_false_negatives(opts: &SuiteOptions) -> Result<(bool, String)> {
    let (certs, falses) = convex_certificates(opts, 500, 10)?;
    let kinds = |k: CertificateKind| certs.iter().filter(|c| c.kind == k).count();
    Ok((
        falses == 0,
        format!(
            "{falses} False out of 500 ({} completed, {} empty level set)",
            kinds(CertificateKind::Completed),
            kinds(CertificateKind::EmptyLevelSet)
        ),
    ))
}

/// Certificate for `f` built from a surrogate search at `x`: same points and radius,
/// `nu` recomputed on the lowered cuts.
fn lowered_certificate(
    o: &mut dyn FirstOrderOracle,
    region: &Region,
    x: &Point,
    rho: f64,
    delta: f64,
    m: usize,
    tol: f64,
) -> Result<Option<WCertificate>> {
    let surrogate = ProxSurrogate::new(x.clone(), rho)?;
    let out = {
        let mut prox = ProxOracle::new(o, x.clone(), rho)?;
        wcert_search(
            &mut prox,
            region,
            x,
            delta,
            m,
            Some((delta / rho).sqrt()),
            tol,
        )?
    };
    let Some(mut cert) = out.certificate() else {
        return Ok(None);
    };
    let iota = cert
        .iota
        .finite()
        .expect("radius cap keeps the radius finite");
    cert.model = cert.model.iter().map(|c| surrogate.lower_cut(c)).collect();
    cert.points = cert.points.iter().map(|s| surrogate.lower(s)).collect();
    cert.center_value = cert.points[0].fx;
    cert.nu = eval_wgap(x, &cert.model, iota, region, tol)?.value;
    cert.kind = CertificateKind::Transferred;
    Ok(Some(cert))
}

fn moreau_chain(opts: &SuiteOptions) -> Result<(bool, String)> {
    let suite = wc_suite(opts, 6, 11)?;
    let mut r = rng(opts, 110);
    let (mut worst_gap, mut worst_tight, mut worst_cert) =
        (f64::NEG_INFINITY, 0.0f64, f64::NEG_INFINITY);
    let mut certs = 0;
    for (i, inst) in suite.iter().enumerate() {
        let rho = inst.truth.rho.unwrap();
        for _ in 0..4 {
            let x = inst.region.project(&random_point(&mut r, &[0.0, 0.0], 2.5));
            let mut o = InstanceOracle::exact(inst);
            let mr = moreau_residual(&mut o, &inst.region, &x, rho, 1e-12)?;
            let descent = mr.f_xbar - mr.min_upper;
            worst_gap = worst_gap.max(mr.residual.powi(2) - 8.0 * rho * descent);
            if descent > 1e-6 {
                worst_tight = worst_tight.max((2.0 * mr.residual).powi(2) / (8.0 * rho * descent));
            }
            let delta = (mr.f_xbar - mr.min_lower).max(1e-12);
            let mut o = InstanceOracle::exact(inst);
            if let Some(cert) =
                lowered_certificate(&mut o, &inst.region, &x, rho, delta, 2 + i % 4, opts.tol)?
            {
                certs += 1;
                let bound = moreau_bound_from_cert(&cert, rho).unwrap();
                worst_cert = worst_cert.max(mr.residual - bound);
            }
        }
    }
    let ok = worst_gap <= 1e-8 && worst_cert <= 0.0 && certs > 0;
    Ok((
        ok,
        format!(
            "worst residual^2 - 8 rho gap = {worst_gap:.3e} (envelope-gradient ratio {worst_tight:.4}); {certs} certificates, worst residual - bound = {worst_cert:.3e}"
        ),
    ))
}

/// Lower bound on `min f` over the box by a grid with a Lipschitz correction.
fn grid_lower_bound(inst: &ProblemInstance) -> f64 {
    let Region::Box { lower, upper } = &inst.region else {
        unreachable!("weakly convex suite lives on boxes")
    };
    let steps = 400;
    let h: Vec<f64> = lower
        .iter()
        .zip(upper)
        .map(|(a, b)| (b - a) / steps as f64)
        .collect();
    let mut best = f64::INFINITY;
    for i in 0..=steps {
        for j in 0..=steps {
            let x = [lower[0] + i as f64 * h[0], lower[1] + j as f64 * h[1]];
            best = best.min(inst.value(&x));
        }
    }
    best - inst.truth.lipschitz.unwrap() * 0.5 * norm(&h)
}

fn inexact_proximal_point(opts: &SuiteOptions) -> Result<(bool, String)> {
    let suite = wc_suite(opts, 5, 12)?;
    let mut r = rng(opts, 120);
    let eps = 0.05;
    let (mut ok, mut worst_descent, mut worst_res, mut loops) =
        (true, f64::NEG_INFINITY, 0.0f64, Vec::new());
    for inst in &suite {
        let rho = inst.truth.rho.unwrap();
        let x0 = inst.region.project(&random_point(&mut r, &[0.0, 0.0], 2.0));
        let mut o = InstanceOracle::exact(inst);
        let mut io = IppmOptions::new(rho, 6, eps);
        io.tol = opts.tol;
        let res = ippm(&mut o, &inst.region, &x0, &io)?;
        let delta_f = inst.value(&x0) - grid_lower_bound(inst);
        let cap = (16.0 * rho * delta_f / (eps * eps)).ceil() as usize;
        for st in &res.outer {
            worst_descent = worst_descent.max(st.delta_bar / 2.0 - (st.f_center - st.f_next));
        }
        let mut o = InstanceOracle::exact(inst);
        let mr = moreau_residual(&mut o, &inst.region, &res.xbar, rho, 1e-12)?;
        worst_res = worst_res.max(mr.residual);
        ok &= res.outer.len() <= cap && mr.residual <= eps + 1e-6;
        loops.push((res.outer.len(), cap));
    }
    ok &= worst_descent <= 1e-10;
    Ok((ok, format!("(outer loops, cap) {loops:?}; worst descent shortfall {worst_descent:.3e}; worst residual {worst_res:.3e} (eps {eps})")))
}

fn adaptive_growth(opts: &SuiteOptions) -> Result<(bool, String)> {
    let eps = 1e-6;
    let mut r = rng(opts, 130);
    let (mut ok, mut max_restarts, mut exact_restarts, mut worst_gap) = (true, 0, 0, 0.0f64);
    for s in 0..20u64 {
        let inst = max_of_quadratics(
            3,
            5,
            r.gen_range(4.0..10.0),
            1.0,
            1300 + opts.seed * 1000 + s,
        )?;
        let x0 = random_point(&mut r, xstar(&inst), 2.0);
        let mu = inst.truth.mu.unwrap();
        for (guess, correct) in [(64.0 * mu, false), (mu, true)] {
            let mut o = InstanceOracle::exact(&inst).with_budget(Some(200_000));
            let mut po = PfBlOptions::new(guess, 6);
            po.target_eps = Some(eps);
            po.tol = opts.tol;
            let res = pf_bl_mu(&mut o, &inst.region, &x0, &po)?;
            let gap = res.best.fx - fstar(&inst);
            worst_gap = worst_gap.max(gap);
            ok &= gap <= eps;
            if correct {
                exact_restarts += res.state.restart_count;
            } else {
                max_restarts = max_restarts.max(res.state.restart_count);
            }
        }
    }
    ok &= max_restarts <= 7 && exact_restarts == 0;
    Ok((ok, format!("max restarts from 64 mu: {max_restarts}; restarts with mu: {exact_restarts}; worst gap {worst_gap:.3e} (eps {eps:.0e})")))
}

fn adaptive_weak_convexity(opts: &SuiteOptions) -> Result<(bool, String)> {
    let suite = wc_suite(opts, 5, 14)?;
    let mut r = rng(opts, 140);
    let eps = 0.05;
    let (mut ok, mut max_guesses, mut worst_valid, mut worst) =
        (true, 0, f64::NEG_INFINITY, (0.0f64, 0.0f64));
    for inst in &suite {
        let rho = inst.truth.rho.unwrap();
        let x0 = inst.region.project(&random_point(&mut r, &[0.0, 0.0], 2.0));
        let mut o = InstanceOracle::exact(inst).with_budget(Some(500_000));
        let mut po = PfIppmOptions::new(rho / 8.0, 6, eps);
        po.tol = opts.tol;
        let res = pf_ippm(&mut o, &inst.region, &x0, &po)?;
        let iota = res.certificate.iota.finite().unwrap_or(f64::INFINITY);
        let v = validate_certificate(&res.certificate, opts.tol, None)?;
        max_guesses = max_guesses.max(res.state.history.len());
        worst_valid = worst_valid.max(v.value - res.certificate.nu);
        worst = (worst.0.max(iota), worst.1.max(res.certificate.nu));
        ok &= iota <= eps && res.certificate.nu <= eps;
    }
    ok &= max_guesses <= 4 && worst_valid <= 1e-8;
    Ok((ok, format!("max guesses {max_guesses}; worst iota {:.3e}, nu {:.3e} (eps {eps}); worst V - nu {worst_valid:.3e}", worst.0, worst.1)))
}

fn perturbed_cut_accuracy(opts: &SuiteOptions) -> Result<(bool, String)> {
    let suite = qg_suite(opts, 10, 15)?;
    let mut r = rng(opts, 150);
    let radius = 1e-2;
    let (mut pairs, mut worst) = (0, f64::NEG_INFINITY);
    let mut attempts = 0;
    while pairs < 10_000 && attempts < 200_000 {
        attempts += 1;
        let inst = &suite[attempts % suite.len()];
        let c = xstar(inst);
        let x = random_point(&mut r, c, 2.0);
        let y = if r.gen_bool(0.5) {
            random_point(&mut r, &x, 0.3)
        } else {
            random_point(&mut r, c, 2.0)
        };
        let mut orng = OracleRng::new(r.gen());
        let s = crate::problems::evaluate(inst, &y, radius, &mut orng)?;
        if s.piece != Some(crate::problems::piece_label(inst, &x)) {
            continue;
        }
        pairs += 1;
        let l = inst.truth.smoothness.unwrap();
        let m_lip = inst.objective.lipschitz_on_ball(c, 2.0 + radius);
        let rhs = l * dist_sq(&x, &y) + induced_delta(radius, l, m_lip) + 1e-10;
        worst = worst.max(inst.value(&x) - s.cut.support(&x) - rhs);
    }
    Ok((
        pairs >= 10_000 && worst <= 0.0,
        format!("{pairs} same-piece pairs, worst excess {worst:.3e}"),
    ))
}

fn initial_bounds(opts: &SuiteOptions) -> Result<(bool, String)> {
    let mut suite = qg_suite(opts, 30, 16)?;
    suite.push(demo_pws());
    let mut r = rng(opts, 160);
    let (mut qg_excess, mut sc_excess, mut samples) = (f64::NEG_INFINITY, f64::NEG_INFINITY, 0);
    for inst in &suite {
        let mu = inst.truth.mu.unwrap();
        for _ in 0..10 {
            let rad = r.gen_range(0.01..5.0);
            let x = random_point(&mut r, xstar(inst), rad);
            let mut o = InstanceOracle::exact(inst);
            let s = o.sample(&x)?;
            let g2 = norm_sq(&s.cut.gradient);
            // Every generated convex instance is mu-strongly convex as well as mu-QG.
            qg_excess = qg_excess.max(s.fx - 2.0 * g2 / mu - fstar(inst));
            sc_excess = sc_excess.max(s.fx - g2 / (2.0 * mu) - fstar(inst));
            samples += 1;
        }
    }
    Ok((qg_excess <= 0.0 && sc_excess <= 0.0, format!("{samples} samples; worst excess over f*: growth {qg_excess:.3e}, strong convexity {sc_excess:.3e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enumeration_matches_hand_value() {
        // max(x, -x) on [-1, 1] is minimized at 0.
        let cuts = vec![
            Cut {
                center: Point(vec![0.0]),
                value: 0.0,
                gradient: vec![1.0],
            },
            Cut {
                center: Point(vec![0.0]),
                value: 0.0,
                gradient: vec![-1.0],
            },
        ];
        assert_eq!(brute_min_max(&cuts, &[-1.0], &[1.0]), 0.0);
        let one = vec![Cut {
            center: Point(vec![0.0, 0.0]),
            value: 1.0,
            gradient: vec![1.0, 2.0],
        }];
        assert!((brute_min_max(&one, &[-1.0, -1.0], &[1.0, 1.0]) + 2.0).abs() < 1e-12);
    }
}
