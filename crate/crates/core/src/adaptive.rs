//! Drivers that adapt an unknown growth or weak-convexity modulus.
//!
//! [`pf_bl_mu`] starts from a guess `mu_tilde` that may overestimate the quadratic
//! growth modulus and halves it whenever a certificate search exposes the guess.
//! [`pf_ippm`] starts from a guess `rho_tilde` of the weak-convexity modulus and
//! doubles it when the surrogate certificate does not carry over to `f`.

use serde::{Deserialize, Serialize};

use crate::bundle::{Trace, TraceEvent, TraceRecord};
use crate::certify::{
    certificate_gap_bound, wcert_search, CertificateKind, Radius, SearchOutcome, WCertificate,
};
use crate::error::{Error, Result};
use crate::gapred::{gap_reduction, initial_lower_bound, GrOptions, GrTermination};
use crate::geometry::{eval_wgap, Region, DEFAULT_QP_TOL};
use crate::linalg::Point;
use crate::problems::{FirstOrderOracle, OracleSample};
use crate::proximal::{
    solve_subproblem, strong_convexity_lower_bound, ProxOracle, ProxSurrogate, SubproblemOptions,
    SubproblemStop,
};

pub const DEFAULT_MAX_RESTARTS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuessRecord {
    pub guess: f64,
    pub outer_iterations: usize,
    pub certificates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveRunState {
    pub guess: f64,
    pub restart_count: usize,
    /// Outer index and gap of the last halving anchor.
    pub tau_anchor: (usize, f64),
    /// One entry per guess tried, in order.
    pub history: Vec<GuessRecord>,
}

impl AdaptiveRunState {
    fn new(guess: f64) -> Self {
        AdaptiveRunState {
            guess,
            restart_count: 0,
            tau_anchor: (0, f64::INFINITY),
            history: vec![GuessRecord {
                guess,
                outer_iterations: 0,
                certificates: 0,
            }],
        }
    }

    fn current(&mut self) -> &mut GuessRecord {
        self.history.last_mut().expect("history starts non-empty")
    }

    fn restart(&mut self, guess: f64, cap: usize) -> Result<()> {
        if self.restart_count >= cap {
            return Err(Error::IterationCap {
                stage: "adaptive restarts",
                cap,
            });
        }
        self.restart_count += 1;
        self.guess = guess;
        self.history.push(GuessRecord {
            guess,
            outer_iterations: 0,
            certificates: 0,
        });
        Ok(())
    }

    pub fn guesses(&self) -> Vec<f64> {
        self.history.iter().map(|h| h.guess).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PfBlOptions {
    pub mu_tilde: f64,
    pub m: usize,
    /// Stop once a certificate bounds the gap by this value under the current guess.
    pub target_eps: Option<f64>,
    pub max_restarts: usize,
    /// Cap on gap-reduction calls over the whole run.
    pub max_outer: usize,
    pub max_inner: usize,
    pub tol: f64,
}

impl PfBlOptions {
    pub fn new(mu_tilde: f64, m: usize) -> Self {
        PfBlOptions {
            mu_tilde,
            m,
            target_eps: None,
            max_restarts: DEFAULT_MAX_RESTARTS,
            max_outer: 100_000,
            max_inner: 10_000,
            tol: DEFAULT_QP_TOL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PfStop {
    /// A certificate met the target.
    Target,
    /// The bounds closed completely.
    ZeroGap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Iterate {
    pub outer: usize,
    pub guess: f64,
    pub fbar: f64,
    pub funder: f64,
}

#[derive(Debug, Clone)]
pub struct PfBlResult {
    pub best: OracleSample,
    pub fbar: f64,
    pub funder: f64,
    pub stop: PfStop,
    pub state: AdaptiveRunState,
    pub iterates: Vec<Iterate>,
    pub certificates: Vec<WCertificate>,
    pub trace: Trace,
}

fn push_event(
    trace: &mut Trace,
    oracle: &dyn FirstOrderOracle,
    s: &OracleSample,
    event: TraceEvent,
    bounds: Option<(f64, f64)>,
) {
    let mut rec = TraceRecord::from_sample(
        s,
        oracle.calls(),
        oracle.distance_to_solution(&s.query),
        event,
    );
    if let Some((fbar, funder)) = bounds {
        rec.fbar = Some(fbar);
        rec.funder = Some(funder);
    }
    trace.push(rec);
}

/// Restarted gap reduction with a halving growth guess. Without a target the run
/// only ends on budget exhaustion, zero gap, or a cap.
pub fn pf_bl_mu(
    oracle: &mut dyn FirstOrderOracle,
    region: &Region,
    x0: &Point,
    opts: &PfBlOptions,
) -> Result<PfBlResult> {
    if !(opts.mu_tilde > 0.0 && opts.mu_tilde.is_finite()) {
        return Err(Error::param("mu_tilde", "must be positive"));
    }
    if let Some(e) = opts.target_eps {
        if !(e > 0.0) {
            return Err(Error::param("target_eps", "must be positive"));
        }
    }
    let mut state = AdaptiveRunState::new(opts.mu_tilde);
    let mut trace = Trace::default();
    let mut iterates = Vec::new();
    let mut certificates = Vec::new();
    let mut best = oracle.sample(&region.project(x0))?;
    let mut fbar = best.fx;
    let mut funder = initial_lower_bound(&best, state.guess);
    push_event(
        &mut trace,
        oracle,
        &best,
        TraceEvent::Step,
        Some((fbar, funder)),
    );
    state.tau_anchor = (0, fbar - funder);
    let mut s = 0;
    loop {
        if fbar - funder <= 0.0 {
            return Ok(PfBlResult {
                best,
                fbar,
                funder,
                stop: PfStop::ZeroGap,
                state,
                iterates,
                certificates,
                trace,
            });
        }
        if s >= opts.max_outer {
            return Err(Error::IterationCap {
                stage: "adaptive gap reduction",
                cap: opts.max_outer,
            });
        }
        let gr = GrOptions {
            mu: state.guess,
            m: opts.m,
            max_iters: opts.max_inner,
            tol: opts.tol,
        };
        let out = gap_reduction(
            oracle,
            region,
            best.clone(),
            fbar,
            funder,
            &gr,
            Some(&mut trace),
        )?;
        s += 1;
        state.current().outer_iterations += 1;
        best = out.best;
        fbar = out.fbar;
        funder = out.funder;
        iterates.push(Iterate {
            outer: s,
            guess: state.guess,
            fbar,
            funder,
        });
        let delta = fbar - funder;
        if out.termination == GrTermination::ZeroGap || delta > 0.5 * state.tau_anchor.1 {
            continue;
        }
        state.tau_anchor = (s, delta);
        if delta <= 0.0 {
            continue;
        }
        if !oracle.has_budget() {
            return Err(Error::BudgetExhausted {
                budget: oracle.calls(),
                best_x: best.query,
                best_f: best.fx,
            });
        }
        match wcert_search(oracle, region, &best.query, delta, opts.m, None, opts.tol)? {
            SearchOutcome::False { .. } => {
                let guess = state.guess / 2.0;
                state.restart(guess, opts.max_restarts)?;
                let fresh = oracle.sample(&best.query)?;
                fbar = fresh.fx;
                funder = initial_lower_bound(&fresh, guess);
                best = fresh;
                state.tau_anchor = (s, fbar - funder);
                push_event(
                    &mut trace,
                    oracle,
                    &best,
                    TraceEvent::Restart,
                    Some((fbar, funder)),
                );
            }
            SearchOutcome::Certificate(cert) => {
                state.current().certificates += 1;
                push_event(
                    &mut trace,
                    oracle,
                    &best,
                    TraceEvent::Certificate,
                    Some((fbar, funder)),
                );
                let bound = certificate_gap_bound(&cert, state.guess);
                certificates.push(*cert);
                if opts.target_eps.is_some_and(|e| bound <= e) {
                    return Ok(PfBlResult {
                        best,
                        fbar,
                        funder,
                        stop: PfStop::Target,
                        state,
                        iterates,
                        certificates,
                        trace,
                    });
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PfIppmOptions {
    pub rho_tilde: f64,
    pub m: usize,
    pub eps: f64,
    pub max_restarts: usize,
    /// Outer iterations allowed per guess; by default `ceil(16 rho (f(x0) - lowest bound) / eps^2) + 10`.
    pub max_outer: Option<usize>,
    pub max_gr_calls: usize,
    pub tol: f64,
}

impl PfIppmOptions {
    pub fn new(rho_tilde: f64, m: usize, eps: f64) -> Self {
        PfIppmOptions {
            rho_tilde,
            m,
            eps,
            max_restarts: DEFAULT_MAX_RESTARTS,
            max_outer: None,
            max_gr_calls: 500,
            tol: DEFAULT_QP_TOL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PfIppmStep {
    pub guess: f64,
    pub delta: f64,
    pub iota: Option<f64>,
    pub nu: Option<f64>,
    pub nu_plus: Option<f64>,
    pub restarted: bool,
}

#[derive(Debug, Clone)]
pub struct PfIppmResult {
    pub xbar: Point,
    pub f_xbar: f64,
    /// Certificate for `f`: the search points and radius with the surrogate quadratic removed.
    pub certificate: WCertificate,
    /// The surrogate certificate it came from.
    pub surrogate_certificate: WCertificate,
    pub state: AdaptiveRunState,
    pub steps: Vec<PfIppmStep>,
    pub trace: Trace,
}

/// Proximal point method with a doubling weak-convexity guess. Returns once the
/// certificate carried over to `f` has `nu <= eps` and `iota <= eps`.
pub fn pf_ippm(
    base: &mut dyn FirstOrderOracle,
    region: &Region,
    x0: &Point,
    opts: &PfIppmOptions,
) -> Result<PfIppmResult> {
    if !(opts.rho_tilde > 0.0 && opts.rho_tilde.is_finite()) {
        return Err(Error::param("rho_tilde", "must be positive"));
    }
    if !(opts.eps > 0.0) {
        return Err(Error::param("eps", "must be positive"));
    }
    let mut state = AdaptiveRunState::new(opts.rho_tilde);
    let mut trace = Trace::default();
    let mut steps = Vec::new();
    let mut xbar = region.project(x0);
    let mut f0 = None;
    let mut lowest = f64::INFINITY;
    let mut scale = 1.0;
    loop {
        let rho = state.guess;
        let sub_opts = SubproblemOptions {
            m: opts.m,
            small_gap: 1e-14 * scale,
            max_gr_calls: opts.max_gr_calls,
            tol: opts.tol,
        };
        let sub = solve_subproblem(base, region, &xbar, rho, &sub_opts, Some(&mut trace))?;
        let f_center = sub.pbar0;
        scale = 1.0 + f_center.abs();
        let f0 = *f0.get_or_insert(f_center);
        lowest = lowest
            .min(strong_convexity_lower_bound(&sub.center, rho))
            .min(sub.punder);
        state.current().outer_iterations += 1;
        let next = sub.next.query.clone();
        let delta = sub.delta_bar.max(1e-16 * scale);
        let surrogate = ProxSurrogate::new(xbar.clone(), rho)?;
        let outcome = {
            let mut prox = ProxOracle::new(base, xbar.clone(), rho)?;
            wcert_search(
                &mut prox,
                region,
                &xbar,
                delta,
                opts.m,
                Some((delta / rho).sqrt()),
                opts.tol,
            )?
        };
        let center_sample = surrogate.lower(&sub.center);
        let mut step = PfIppmStep {
            guess: rho,
            delta,
            iota: None,
            nu: None,
            nu_plus: None,
            restarted: false,
        };
        let mut restart = true;
        if let SearchOutcome::Certificate(cert) = outcome {
            state.current().certificates += 1;
            let iota = cert
                .iota
                .finite()
                .expect("search with a radius cap gives a finite radius");
            let cuts: Vec<_> = cert.model.iter().map(|c| surrogate.lower_cut(c)).collect();
            let nu_plus = eval_wgap(&xbar, &cuts, iota, region, opts.tol)?.value;
            step.iota = Some(iota);
            step.nu = Some(cert.nu);
            step.nu_plus = Some(nu_plus);
            restart = nu_plus >= 2.0 * cert.nu;
            if !restart {
                push_event(
                    &mut trace,
                    base,
                    &center_sample,
                    TraceEvent::Certificate,
                    None,
                );
                if nu_plus <= opts.eps && iota <= opts.eps {
                    steps.push(step);
                    let certificate = WCertificate {
                        center: xbar.clone(),
                        center_value: center_sample.fx,
                        points: cert.points.iter().map(|s| surrogate.lower(s)).collect(),
                        iota: Radius::Finite(iota),
                        nu: nu_plus,
                        model: cuts,
                        delta_used: delta,
                        smoothness: cert.smoothness,
                        region: region.clone(),
                        kind: CertificateKind::Transferred,
                    };
                    return Ok(PfIppmResult {
                        xbar,
                        f_xbar: center_sample.fx,
                        certificate,
                        surrogate_certificate: *cert,
                        state,
                        steps,
                        trace,
                    });
                }
            }
        }
        step.restarted = restart;
        steps.push(step);
        if restart {
            state.restart(2.0 * rho, opts.max_restarts)?;
            push_event(&mut trace, base, &center_sample, TraceEvent::Restart, None);
        } else {
            let cap = opts.max_outer.unwrap_or_else(|| {
                (16.0 * rho * (f0 - lowest).max(0.0) / (opts.eps * opts.eps)).ceil() as usize + 10
            });
            if state.history.last().map_or(0, |h| h.outer_iterations) >= cap {
                return Err(Error::IterationCap {
                    stage: "adaptive proximal outer loop",
                    cap,
                });
            }
        }
        if sub.stop == SubproblemStop::SmallGap && !restart && next == xbar {
            // Exact surrogate minimizer but the certificate is still too coarse; only a larger guess helps.
            state.restart(2.0 * rho, opts.max_restarts)?;
        }
        xbar = next;
        if !base.has_budget() {
            let f = base.sample(&xbar)?;
            return Err(Error::BudgetExhausted {
                budget: base.calls(),
                best_x: xbar,
                best_f: f.fx,
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{max_of_quadratics, weakly_convex_max, InstanceOracle};

    #[test]
    fn correct_guess_never_restarts() {
        let inst = max_of_quadratics(3, 3, 4.0, 1.0, 2).unwrap();
        let mut o = InstanceOracle::exact(&inst);
        let mut opts = PfBlOptions::new(1.0, 6);
        opts.target_eps = Some(1e-6);
        let res = pf_bl_mu(
            &mut o,
            &Region::WholeSpace,
            &Point(vec![1.0, -1.0, 0.5]),
            &opts,
        )
        .unwrap();
        assert_eq!(res.state.restart_count, 0);
        assert!(res.fbar - inst.truth.fstar.unwrap() <= 1e-6);
    }

    #[test]
    fn overestimate_halves() {
        let inst = max_of_quadratics(3, 3, 4.0, 1.0, 2).unwrap();
        let mut o = InstanceOracle::exact(&inst);
        let mut opts = PfBlOptions::new(64.0, 6);
        opts.target_eps = Some(1e-6);
        let res = pf_bl_mu(
            &mut o,
            &Region::WholeSpace,
            &Point(vec![1.0, -1.0, 0.5]),
            &opts,
        )
        .unwrap();
        assert!(res.state.restart_count <= 7);
        for w in res.state.guesses().windows(2) {
            assert_eq!(w[1], w[0] / 2.0);
        }
        assert!(res.fbar - inst.truth.fstar.unwrap() <= 1e-6);
    }

    #[test]
    fn pf_ippm_small_guess() {
        let inst = weakly_convex_max(3, 2, 1.0, 4, 2.0).unwrap();
        let mut o = InstanceOracle::exact(&inst);
        let res = pf_ippm(
            &mut o,
            &inst.region,
            &Point(vec![1.5, -1.5]),
            &PfIppmOptions::new(0.125, 6, 1e-2),
        )
        .unwrap();
        assert!(res.state.history.len() <= 4, "{:?}", res.state.guesses());
        assert!(res.certificate.nu <= 1e-2);
        assert!(res.certificate.iota.finite().unwrap() <= 1e-2);
    }
}
