//! Gap reduction for an unknown optimal value, and the restarted method built on it.
//!
//! One call starts from bounds `funder <= f* <= fbar = f(x0)` and returns bounds whose
//! gap is at most two thirds of the input gap. Levels sit one third of the way up the
//! gap; the lower bound is refreshed from the bundle model, and a dynamic program over
//! iterate pairs decides when the levels themselves may serve as the lower bound.

use serde::{Deserialize, Serialize};

use crate::bundle::{
    empirical_smoothness, matching_stats, Bundle, MatchingStats, Trace, TraceEvent, TraceRecord,
};
use crate::error::{Error, Result};
use crate::geometry::{
    min_max_affine, project_onto_level_set, LevelProjection, Region, DEFAULT_QP_TOL,
};
use crate::linalg::{norm, Point};
use crate::problems::{FirstOrderOracle, OracleSample};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrTermination {
    /// The gap fell to two thirds of its input value.
    GapReduced,
    /// The pair statistic crossed `6 / mu`; the smallest level became the lower bound.
    LevelLowerBound,
    /// The level set was empty, which certifies the level as a lower bound.
    EmptyLevelSet,
    /// The input gap was already zero.
    ZeroGap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapState {
    pub t: usize,
    pub fbar: f64,
    pub funder: f64,
    pub delta: f64,
    pub delta0: f64,
    /// Best pair-sum over sequences ending at `t` with a pair whose right end is `t`.
    pub s_r: Vec<f64>,
    /// Best pair-sum over sequences whose last pair ends no later than `t`.
    pub s_l: Vec<f64>,
    pub levels: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrOptions {
    pub mu: f64,
    pub m: usize,
    pub max_iters: usize,
    pub tol: f64,
}

impl GrOptions {
    pub fn new(mu: f64, m: usize) -> Self {
        GrOptions {
            mu,
            m,
            max_iters: 10_000,
            tol: DEFAULT_QP_TOL,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GrOutput {
    pub best: OracleSample,
    pub fbar: f64,
    pub funder: f64,
    pub delta_in: f64,
    pub delta_out: f64,
    pub iterations: usize,
    pub termination: GrTermination,
    pub state: GapState,
    /// Pair sequence chosen by the dynamic program up to the iteration before termination.
    pub dp_pairs: Vec<(usize, usize)>,
    pub dp_stats: MatchingStats,
    /// `ceil(3 kappa sigma L / mu)` for the chosen pairs; infinite when no pair was chosen.
    pub iteration_bound: f64,
}

/// Back-pointer of a dynamic-program entry: the left end of its last pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Back {
    pub from: usize,
    pub smoothness: Option<f64>,
}

fn check_inputs(start: &OracleSample, fbar: f64, funder: f64, opts: &GrOptions) -> Result<()> {
    if !(opts.mu > 0.0 && opts.mu.is_finite()) {
        return Err(Error::param("mu", "must be positive"));
    }
    if opts.m == 0 {
        return Err(Error::param("m", "bundle size must be at least 1"));
    }
    if !(fbar.is_finite() && funder.is_finite()) {
        return Err(Error::param("bounds", "fbar and funder must be finite"));
    }
    if funder > fbar {
        return Err(Error::param(
            "funder",
            format!("lower bound {funder} exceeds upper bound {fbar}"),
        ));
    }
    if !start.fx.is_finite() {
        return Err(Error::Domain("non-finite value at the start point".into()));
    }
    Ok(())
}

/// One gap-reduction call. `start` is the oracle answer at `x0`; `fbar` is normally `start.fx`.
pub fn gap_reduction(
    oracle: &mut dyn FirstOrderOracle,
    region: &Region,
    start: OracleSample,
    fbar: f64,
    funder: f64,
    opts: &GrOptions,
    mut trace: Option<&mut Trace>,
) -> Result<GrOutput> {
    check_inputs(&start, fbar, funder, opts)?;
    let mu = opts.mu;
    let m = opts.m;
    let delta0 = fbar - funder;
    let mut state = GapState {
        t: 0,
        fbar,
        funder,
        delta: delta0,
        delta0,
        s_r: vec![0.0],
        s_l: vec![0.0],
        levels: vec![],
    };
    let mut points = vec![start.clone()];
    let mut best = start.clone();
    let mut back_r: Vec<Option<Back>> = vec![None];
    let mut back_l: Vec<usize> = vec![0];
    let mut bundle = Bundle::new(m)?;
    bundle.push(start.cut.clone());

    let finish = |state: GapState,
                  best: OracleSample,
                  termination,
                  back_r: &[Option<Back>],
                  back_l: &[usize]| {
        let t = state.t;
        let horizon = t.saturating_sub(1);
        let (dp_pairs, lts) = backtrack(back_r, back_l, horizon);
        let dp_stats = matching_stats(&dp_pairs, horizon, Some(&lts));
        let denom: f64 = dp_pairs
            .iter()
            .zip(&lts)
            .map(|((l, r), lt)| 1.0 / ((r - l) as f64 * lt))
            .sum();
        let iteration_bound = if dp_pairs.is_empty() || denom == 0.0 {
            f64::INFINITY
        } else {
            (3.0 * horizon as f64 / (mu * denom)).ceil()
        };
        GrOutput {
            best,
            fbar: state.fbar,
            funder: state.funder,
            delta_in: state.delta0,
            delta_out: state.delta,
            iterations: t,
            termination,
            state,
            dp_pairs,
            dp_stats,
            iteration_bound,
        }
    };

    if delta0 == 0.0 {
        return Ok(finish(
            state,
            best,
            GrTermination::ZeroGap,
            &back_r,
            &back_l,
        ));
    }

    loop {
        let t = state.t;
        if t >= opts.max_iters {
            return Err(Error::IterationCap {
                stage: "gap reduction",
                cap: opts.max_iters,
            });
        }
        if !oracle.has_budget() {
            return Err(Error::BudgetExhausted {
                budget: oracle.calls(),
                best_x: best.query,
                best_f: best.fx,
            });
        }
        let delta_t = state.delta;
        let level = 2.0 / 3.0 * state.funder + 1.0 / 3.0 * state.fbar;
        state.levels.push(level);
        let proj =
            project_onto_level_set(&points[t].query, &bundle.cuts(), level, region, opts.tol)?;
        let (x_next, kkt) = match proj {
            LevelProjection::Feasible {
                point,
                kkt_residual,
                ..
            } => (point, kkt_residual),
            LevelProjection::Infeasible { .. } => {
                state.funder = level;
                state.delta = state.fbar - state.funder;
                if let Some(tr) = trace.as_deref_mut() {
                    let mut rec = TraceRecord::from_sample(
                        &best,
                        oracle.calls(),
                        oracle.distance_to_solution(&best.query),
                        TraceEvent::BoundUpdate,
                    );
                    rec.level = Some(level);
                    rec.fbar = Some(state.fbar);
                    rec.funder = Some(state.funder);
                    tr.push(rec);
                }
                return Ok(finish(
                    state,
                    best,
                    GrTermination::EmptyLevelSet,
                    &back_r,
                    &back_l,
                ));
            }
        };
        let s = oracle.sample(&x_next)?;
        if s.fx < state.fbar {
            state.fbar = s.fx;
            best = s.clone();
        }
        bundle.push(s.cut.clone());
        let model = min_max_affine(&bundle.cuts(), region, None, opts.tol)?;
        if !model.is_unbounded() && model.lower > state.funder {
            state.funder = model.lower.min(state.fbar);
        }
        state.delta = state.fbar - state.funder;
        points.push(s.clone());
        state.t = t + 1;
        let r = t + 1;

        let tau = r.saturating_sub(m);
        let (sr, arg) = dp_right(&state.s_l, r, tau, |q| {
            empirical_smoothness(
                &s.query,
                s.fx,
                &points[q].query,
                &points[q].cut,
                delta_t / 6.0,
            )
            .ok()
        });
        state.s_r.push(sr);
        back_r.push(Some(arg));
        let (mut sl, mut argl) = (f64::NEG_INFINITY, r);
        for q in tau..=r {
            if state.s_r[q] > sl {
                sl = state.s_r[q];
                argl = q;
            }
        }
        state.s_l.push(sl);
        back_l.push(argl);

        if let Some(tr) = trace.as_deref_mut() {
            let mut rec = TraceRecord::from_sample(
                &s,
                oracle.calls(),
                oracle.distance_to_solution(&s.query),
                TraceEvent::Step,
            );
            rec.level = Some(level);
            rec.kkt_residual = Some(kkt);
            rec.fbar = Some(state.fbar);
            rec.funder = Some(state.funder);
            tr.push(rec);
        }

        if state.delta <= 2.0 / 3.0 * delta0 {
            return Ok(finish(
                state,
                best,
                GrTermination::GapReduced,
                &back_r,
                &back_l,
            ));
        }
        if sr >= 6.0 / mu {
            let lowest = state.levels.iter().copied().fold(f64::INFINITY, f64::min);
            state.funder = state.funder.max(lowest);
            state.delta = state.fbar - state.funder;
            if let Some(tr) = trace.as_deref_mut() {
                let mut rec = TraceRecord::from_sample(
                    &best,
                    oracle.calls(),
                    oracle.distance_to_solution(&best.query),
                    TraceEvent::BoundUpdate,
                );
                rec.fbar = Some(state.fbar);
                rec.funder = Some(state.funder);
                tr.push(rec);
            }
            return Ok(finish(
                state,
                best,
                GrTermination::LevelLowerBound,
                &back_r,
                &back_l,
            ));
        }
    }
}

/// `S_r(r) = max_{tau <= q < r} S_l(q) + 1 / ((r - q) Ltilde(r, q))`.
///
/// `smoothness(q)` is `None` for coincident points, which contribute no pair;
/// `Ltilde = 0` contributes an infinite term.
pub fn dp_right(
    s_l: &[f64],
    r: usize,
    tau: usize,
    smoothness: impl Fn(usize) -> Option<f64>,
) -> (f64, Back) {
    let mut best = f64::NEG_INFINITY;
    let mut arg = Back {
        from: r - 1,
        smoothness: None,
    };
    for q in tau..r {
        let lt = smoothness(q);
        let term = match lt {
            Some(l) if l == 0.0 => f64::INFINITY,
            Some(l) => 1.0 / ((r - q) as f64 * l),
            None => 0.0,
        };
        if s_l[q] + term > best {
            best = s_l[q] + term;
            arg = Back {
                from: q,
                smoothness: lt,
            };
        }
    }
    (best, arg)
}

/// Pairs chosen by the dynamic program for the best sequence ending by `horizon`.
fn backtrack(
    back_r: &[Option<Back>],
    back_l: &[usize],
    horizon: usize,
) -> (Vec<(usize, usize)>, Vec<f64>) {
    let mut pairs = Vec::new();
    let mut lts = Vec::new();
    if horizon == 0 || horizon >= back_l.len() {
        return (pairs, lts);
    }
    let mut r = back_l[horizon];
    while r > 0 {
        let Some(b) = back_r[r] else { break };
        if let Some(lt) = b.smoothness {
            pairs.push((b.from, r));
            lts.push(lt);
        }
        let next = back_l[b.from];
        if next >= r {
            break;
        }
        r = next;
    }
    pairs.reverse();
    lts.reverse();
    (pairs, lts)
}

/// Lower bound on `f*` from one oracle answer under quadratic growth `mu`.
///
/// With an exact cut this is `f(x0) - 2 ||g||^2 / mu`. A perturbed cut that
/// underestimates `f(x0)` by `e` gives `f(x0) - e - ||g|| d` with
/// `d = (||g|| + sqrt(||g||^2 + 2 mu e)) / mu`.
pub fn initial_lower_bound(sample: &OracleSample, mu: f64) -> f64 {
    let e = (sample.fx - sample.cut.support(&sample.query)).max(0.0);
    let g = norm(&sample.cut.gradient);
    let d = (g + (g * g + 2.0 * mu * e).sqrt()) / mu;
    sample.fx - e - g * d
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlMuOptions {
    pub mu: f64,
    pub m: usize,
    pub eps: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub tol: f64,
}

impl BlMuOptions {
    pub fn new(mu: f64, m: usize, eps: f64) -> Self {
        BlMuOptions {
            mu,
            m,
            eps,
            max_outer: 10_000,
            max_inner: 10_000,
            tol: DEFAULT_QP_TOL,
        }
    }

    fn gr(&self) -> GrOptions {
        GrOptions {
            mu: self.mu,
            m: self.m,
            max_iters: self.max_inner,
            tol: self.tol,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BlMuResult {
    pub best: OracleSample,
    pub fbar: f64,
    pub funder: f64,
    pub delta0: f64,
    pub outer_calls: usize,
    /// `ceil(log_{3/2}(delta0 / eps)) + 1`.
    pub outer_bound: usize,
    pub inner: Vec<GrSummary>,
    pub trace: Trace,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrSummary {
    pub delta_in: f64,
    pub delta_out: f64,
    pub iterations: usize,
    pub iteration_bound: f64,
    pub termination: GrTermination,
}

impl From<&GrOutput> for GrSummary {
    fn from(o: &GrOutput) -> Self {
        GrSummary {
            delta_in: o.delta_in,
            delta_out: o.delta_out,
            iterations: o.iterations,
            iteration_bound: o.iteration_bound,
            termination: o.termination,
        }
    }
}

pub fn outer_bound(delta0: f64, eps: f64) -> usize {
    if delta0 <= eps {
        return 1;
    }
    ((delta0 / eps).ln() / 1.5f64.ln()).ceil() as usize + 1
}

/// Repeated gap reduction until `fbar - funder <= eps`, starting from the
/// quadratic-growth lower bound at `x0`.
pub fn bl_mu(
    oracle: &mut dyn FirstOrderOracle,
    region: &Region,
    x0: &Point,
    opts: &BlMuOptions,
) -> Result<BlMuResult> {
    if !(opts.eps > 0.0) {
        return Err(Error::param("eps", "must be positive"));
    }
    let x0 = region.project(x0);
    let start = oracle.sample(&x0)?;
    let funder = initial_lower_bound(&start, opts.mu);
    bl_mu_from(oracle, region, start, funder, opts)
}

/// As [`bl_mu`], from an existing oracle answer and lower bound.
pub fn bl_mu_from(
    oracle: &mut dyn FirstOrderOracle,
    region: &Region,
    start: OracleSample,
    funder: f64,
    opts: &BlMuOptions,
) -> Result<BlMuResult> {
    let mut trace = Trace::default();
    let mut rec = TraceRecord::from_sample(
        &start,
        oracle.calls(),
        oracle.distance_to_solution(&start.query),
        TraceEvent::Step,
    );
    rec.fbar = Some(start.fx);
    rec.funder = Some(funder);
    trace.push(rec);
    let delta0 = start.fx - funder;
    let mut best = start;
    let mut fbar = best.fx;
    let mut funder = funder;
    let mut inner = Vec::new();
    let gr = opts.gr();
    while fbar - funder > opts.eps {
        if inner.len() >= opts.max_outer {
            return Err(Error::IterationCap {
                stage: "restarted gap reduction",
                cap: opts.max_outer,
            });
        }
        let out = gap_reduction(
            oracle,
            region,
            best.clone(),
            fbar,
            funder,
            &gr,
            Some(&mut trace),
        )?;
        inner.push(GrSummary::from(&out));
        best = out.best;
        fbar = out.fbar;
        funder = out.funder;
    }
    Ok(BlMuResult {
        best,
        fbar,
        funder,
        delta0,
        outer_calls: inner.len(),
        outer_bound: outer_bound(delta0, opts.eps),
        inner,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{max_of_quadratics, InstanceOracle};

    #[test]
    fn square_gap_shrinks_by_two_thirds() {
        let inst = max_of_quadratics(1, 1, 2.0, 2.0, 0).unwrap();
        let mut oracle = InstanceOracle::exact(&inst);
        let start = oracle.sample(&Point(vec![1.0])).unwrap();
        let out = gap_reduction(
            &mut oracle,
            &Region::WholeSpace,
            start,
            1.0,
            -1.0,
            &GrOptions::new(2.0, 3),
            None,
        )
        .unwrap();
        assert!(out.delta_out <= 4.0 / 3.0 + 1e-15);
        assert!(out.funder <= 0.0 && out.fbar >= 0.0);
    }

    #[test]
    fn first_dp_entry_matches_hand_value() {
        // x0 = 1, x1 = 0.5 on x^2 with no slack: Ltilde = 2 and S_r(1) = 1 / (1 * 2).
        let inst = max_of_quadratics(1, 1, 2.0, 2.0, 0).unwrap();
        let mut oracle = InstanceOracle::exact(&inst);
        let s0 = oracle.sample(&Point(vec![1.0])).unwrap();
        let lt = empirical_smoothness(&[0.5], 0.25, &[1.0], &s0.cut, 0.0).unwrap();
        assert_eq!(lt, 2.0);
        let (sr, back) = dp_right(&[0.0], 1, 0, |_| Some(lt));
        assert_eq!(sr, 0.5);
        assert_eq!(back.from, 0);
        let (sr, _) = dp_right(&[0.0], 1, 0, |_| Some(0.0));
        assert!(sr.is_infinite());
    }

    #[test]
    fn initial_bound_for_square() {
        let inst = max_of_quadratics(1, 1, 2.0, 2.0, 0).unwrap();
        let mut oracle = InstanceOracle::exact(&inst);
        let s = oracle.sample(&Point(vec![1.0])).unwrap();
        assert_eq!(initial_lower_bound(&s, 2.0), -3.0);
    }

    #[test]
    fn bl_mu_reaches_eps() {
        let inst = max_of_quadratics(3, 4, 8.0, 1.0, 5).unwrap();
        let mut oracle = InstanceOracle::exact(&inst);
        let res = bl_mu(
            &mut oracle,
            &Region::WholeSpace,
            &Point(vec![1.0; 4]),
            &BlMuOptions::new(1.0, 6, 1e-6),
        )
        .unwrap();
        assert!(res.fbar - inst.truth.fstar.unwrap() <= 1e-6);
        assert!(res.outer_calls <= res.outer_bound);
    }
}
