//! Piecewise-smooth test objectives and first-order oracles.
//!
//! Every objective here is a max of quadratic pieces
//! `q_i(x) = c_i + <g_i, x - a_i> + 0.5 (x - a_i)' H_i (x - a_i)`.
//! The piece label of a point is the lowest index attaining the max, so labels
//! partition the space and the oracle gradient is always the gradient of the
//! labelled piece.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Region;
use crate::linalg::{axpy, dot, norm, Point};

/// Affine minorant `value + <gradient, x - center>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cut {
    pub center: Point,
    pub value: f64,
    pub gradient: Vec<f64>,
}

impl Cut {
    pub fn support(&self, x: &[f64]) -> f64 {
        let mut s = self.value;
        for i in 0..x.len() {
            s += self.gradient[i] * (x[i] - self.center[i]);
        }
        s
    }

    /// Constant term `c` in `support(x) = <gradient, x> + c`.
    pub fn intercept(&self) -> f64 {
        self.value - dot(&self.gradient, &self.center)
    }
}

/// One oracle answer: `fx` is the exact value at the query and `cut` is
/// generated at `sample` (equal to the query for the exact oracle).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSample {
    pub query: Point,
    pub sample: Point,
    pub fx: f64,
    pub cut: Cut,
    pub piece: Option<usize>,
}

/// Counter-based generator: draw `i` for a given seed depends only on `(seed, i)`.
#[derive(Debug, Clone)]
pub struct OracleRng {
    seed: u64,
    counter: u64,
}

impl OracleRng {
    pub fn new(seed: u64) -> Self {
        OracleRng { seed, counter: 0 }
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    pub fn next_stream(&mut self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.counter);
        self.counter += 1;
        rng
    }
}

/// Uniform draw from the closed ball of radius `r` around `x`.
pub fn uniform_in_ball<R: Rng>(x: &[f64], r: f64, rng: &mut R) -> Vec<f64> {
    let n = x.len();
    if r == 0.0 || n == 0 {
        return x.to_vec();
    }
    let mut dir: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
    let mut len = norm(&dir);
    while len == 0.0 {
        dir = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        len = norm(&dir);
    }
    let u: f64 = rng.gen();
    let scale = r * u.powf(1.0 / n as f64) / len;
    let mut out = x.to_vec();
    axpy(scale, &dir, &mut out);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadPiece {
    pub offset: f64,
    pub linear: Vec<f64>,
    /// Row-major `n x n` symmetric matrix.
    pub hessian: Vec<f64>,
    pub anchor: Vec<f64>,
    /// Spectral norm of the hessian.
    pub curvature: f64,
}

impl QuadPiece {
    fn n(&self) -> usize {
        self.anchor.len()
    }

    fn hess_times(&self, d: &[f64]) -> Vec<f64> {
        let n = self.n();
        (0..n)
            .map(|i| dot(&self.hessian[i * n..(i + 1) * n], d))
            .collect()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let d: Vec<f64> = x.iter().zip(&self.anchor).map(|(a, b)| a - b).collect();
        let hd = self.hess_times(&d);
        self.offset + dot(&self.linear, &d) + 0.5 * dot(&d, &hd)
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let d: Vec<f64> = x.iter().zip(&self.anchor).map(|(a, b)| a - b).collect();
        let mut g = self.hess_times(&d);
        axpy(1.0, &self.linear, &mut g);
        g
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxOfQuadratics {
    pub pieces: Vec<QuadPiece>,
}

impl MaxOfQuadratics {
    pub fn dim(&self) -> usize {
        self.pieces[0].n()
    }

    /// Value and 1-based label of the lowest-index maximal piece.
    pub fn value_and_piece(&self, x: &[f64]) -> (f64, usize) {
        let mut best = f64::NEG_INFINITY;
        let mut label = 1;
        for (i, p) in self.pieces.iter().enumerate() {
            let v = p.value(x);
            if v > best {
                best = v;
                label = i + 1;
            }
        }
        (best, label)
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.value_and_piece(x).0
    }

    pub fn gradient_of_piece(&self, label: usize, x: &[f64]) -> Vec<f64> {
        self.pieces[label - 1].gradient(x)
    }

    /// Lipschitz constant of `f` on the ball `B(center, radius)`.
    pub fn lipschitz_on_ball(&self, center: &[f64], radius: f64) -> f64 {
        self.pieces
            .iter()
            .map(|p| norm(&p.gradient(center)) + p.curvature * radius)
            .fold(0.0, f64::max)
    }
}

/// Known facts about an instance; `None` where no closed form is available.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub fstar: Option<f64>,
    /// Finite representation of the solution set.
    pub xstar: Vec<Point>,
    pub mu: Option<f64>,
    #[serde(rename = "L")]
    pub smoothness: Option<f64>,
    /// Lipschitz constant on `B(xstar, lipschitz_radius)` (or on the region when bounded).
    #[serde(rename = "M")]
    pub lipschitz: Option<f64>,
    pub lipschitz_radius: f64,
    pub rho: Option<f64>,
    pub pieces: usize,
}

impl GroundTruth {
    pub fn distance(&self, x: &[f64]) -> Option<f64> {
        self.xstar
            .iter()
            .map(|s| crate::linalg::dist(x, s))
            .fold(None, |acc: Option<f64>, d| {
                Some(acc.map_or(d, |a| a.min(d)))
            })
    }
}

fn default_box_radius() -> f64 {
    2.0
}

/// Serializable description of a generated instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case", deny_unknown_fields)]
pub enum InstanceSpec {
    MaxOfQuadratics {
        k: usize,
        n: usize,
        #[serde(rename = "L")]
        l: f64,
        mu: f64,
        seed: u64,
    },
    WeaklyConvexMax {
        k: usize,
        n: usize,
        rho: f64,
        seed: u64,
        #[serde(default = "default_box_radius")]
        box_radius: f64,
    },
    /// `||x||^2 + |x_1|` on the plane.
    Demo,
    /// `|x|` on the line.
    Abs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    pub spec: InstanceSpec,
    pub objective: MaxOfQuadratics,
    pub region: Region,
    pub truth: GroundTruth,
}

impl ProblemInstance {
    pub fn from_spec(spec: &InstanceSpec) -> Result<Self> {
        match *spec {
            InstanceSpec::MaxOfQuadratics { k, n, l, mu, seed } => {
                max_of_quadratics(k, n, l, mu, seed)
            }
            InstanceSpec::WeaklyConvexMax {
                k,
                n,
                rho,
                seed,
                box_radius,
            } => weakly_convex_max(k, n, rho, seed, box_radius),
            InstanceSpec::Demo => Ok(demo_pws()),
            InstanceSpec::Abs => Ok(abs_1d()),
        }
    }

    pub fn dim(&self) -> usize {
        self.objective.dim()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.objective.value(x)
    }
}

pub fn piece_label(instance: &ProblemInstance, x: &[f64]) -> usize {
    instance.objective.value_and_piece(x).1
}

fn check_point(instance: &ProblemInstance, x: &[f64]) -> Result<()> {
    if x.len() != instance.dim() {
        return Err(Error::Dimension {
            expected: instance.dim(),
            got: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite coordinate".into()));
    }
    Ok(())
}

/// Exact oracle when `radius == 0`, otherwise the cut is taken at a uniform
/// point of `B(x, radius)`.
pub fn evaluate(
    instance: &ProblemInstance,
    x: &Point,
    radius: f64,
    rng: &mut OracleRng,
) -> Result<OracleSample> {
    check_point(instance, x)?;
    if !(radius >= 0.0) || !radius.is_finite() {
        return Err(Error::param("radius", "must be finite and non-negative"));
    }
    let mut stream = rng.next_stream();
    let (fx, label_x) = instance.objective.value_and_piece(x);
    let (sample, fs, label) = if radius == 0.0 {
        (x.clone(), fx, label_x)
    } else {
        let s = uniform_in_ball(x, radius, &mut stream);
        let (fs, ls) = instance.objective.value_and_piece(&s);
        (Point(s), fs, ls)
    };
    let gradient = instance.objective.gradient_of_piece(label, &sample);
    Ok(OracleSample {
        query: x.clone(),
        sample: sample.clone(),
        fx,
        cut: Cut {
            center: sample,
            value: fs,
            gradient,
        },
        piece: Some(label),
    })
}

/// Largest perturbation radius for which cuts are `delta`-accurate on same-piece pairs,
/// `min{ sqrt(delta / (8 L)), delta / (4 M) }`.
pub fn radius_for_delta(delta: f64, smoothness: f64, lipschitz: f64) -> f64 {
    let a = (delta / (8.0 * smoothness)).sqrt();
    let b = if lipschitz > 0.0 {
        delta / (4.0 * lipschitz)
    } else {
        f64::INFINITY
    };
    a.min(b)
}

/// Additive cut error `2 M r + 4 L r^2` induced by perturbation radius `r`.
pub fn induced_delta(radius: f64, smoothness: f64, lipschitz: f64) -> f64 {
    2.0 * lipschitz * radius + 4.0 * smoothness * radius * radius
}

/// Source of cuts for the algorithms; implemented by instances and by the
/// proximal surrogate.
pub trait FirstOrderOracle {
    fn dim(&self) -> usize;
    fn sample(&mut self, x: &Point) -> Result<OracleSample>;
    fn calls(&self) -> u64;
    /// False once the call budget is used up.
    fn has_budget(&self) -> bool {
        true
    }
    fn distance_to_solution(&self, _x: &[f64]) -> Option<f64> {
        None
    }
    fn optimal_value(&self) -> Option<f64> {
        None
    }
}

/// Counting oracle over a [`ProblemInstance`].
#[derive(Debug, Clone)]
pub struct InstanceOracle<'a> {
    pub instance: &'a ProblemInstance,
    pub radius: f64,
    rng: OracleRng,
    calls: u64,
    budget: Option<u64>,
}

impl<'a> InstanceOracle<'a> {
    pub fn exact(instance: &'a ProblemInstance) -> Self {
        Self::perturbed(instance, 0.0, 0)
    }

    pub fn perturbed(instance: &'a ProblemInstance, radius: f64, seed: u64) -> Self {
        InstanceOracle {
            instance,
            radius,
            rng: OracleRng::new(seed),
            calls: 0,
            budget: None,
        }
    }

    pub fn with_budget(mut self, budget: Option<u64>) -> Self {
        self.budget = budget;
        self
    }
}

impl FirstOrderOracle for InstanceOracle<'_> {
    fn dim(&self) -> usize {
        self.instance.dim()
    }

    fn sample(&mut self, x: &Point) -> Result<OracleSample> {
        self.calls += 1;
        evaluate(self.instance, x, self.radius, &mut self.rng)
    }

    fn calls(&self) -> u64 {
        self.calls
    }

    fn has_budget(&self) -> bool {
        self.budget.map_or(true, |b| self.calls < b)
    }

    fn distance_to_solution(&self, x: &[f64]) -> Option<f64> {
        self.instance.truth.distance(x)
    }

    fn optimal_value(&self) -> Option<f64> {
        self.instance.truth.fstar
    }
}

fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g: DMatrix<f64> = DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            for i in 0..n {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    q
}

fn spd_with_spectrum(eigs: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = eigs.len();
    let q = random_orthogonal(n, rng);
    let h = &q * DMatrix::from_diagonal(&DVector::from_column_slice(eigs)) * q.transpose();
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = 0.5 * (h[(i, j)] + h[(j, i)]);
        }
    }
    out
}

fn scaled_identity(n: usize, s: f64) -> Vec<f64> {
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        h[i * n + i] = s;
    }
    h
}

fn check_sizes(k: usize, n: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::param("k", "need at least one piece"));
    }
    if n == 0 {
        return Err(Error::param("n", "dimension must be positive"));
    }
    Ok(())
}

/// Max of `k` strongly convex quadratics sharing the minimizer `x*`.
///
/// The linear terms average to zero, so `0` lies in the convex hull of the
/// piece gradients at `x*`; each hessian has spectrum in `[mu, L]`, giving
/// quadratic growth `mu` and piece smoothness `L`. Seed 0 places `x* = 0`
/// and `f* = 0`.
pub fn max_of_quadratics(
    k: usize,
    n: usize,
    smoothness: f64,
    mu: f64,
    seed: u64,
) -> Result<ProblemInstance> {
    check_sizes(k, n)?;
    if !(mu > 0.0 && smoothness >= mu && smoothness.is_finite()) {
        return Err(Error::param("mu", "need 0 < mu <= L"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (xstar, fstar) = if seed == 0 {
        (vec![0.0; n], 0.0)
    } else {
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        (x, rng.gen_range(-1.0..1.0))
    };
    let mut linear: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..n).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();
    let mean: Vec<f64> = (0..n)
        .map(|j| linear.iter().map(|g| g[j]).sum::<f64>() / k as f64)
        .collect();
    for g in &mut linear {
        axpy(-1.0, &mean, g);
    }
    let pieces = linear
        .into_iter()
        .map(|g| {
            let mut eigs: Vec<f64> = (0..n).map(|_| rng.gen_range(mu..=smoothness)).collect();
            eigs[0] = mu;
            if n > 1 {
                eigs[n - 1] = smoothness;
            }
            QuadPiece {
                offset: fstar,
                linear: g,
                hessian: spd_with_spectrum(&eigs, &mut rng),
                anchor: xstar.clone(),
                curvature: smoothness,
            }
        })
        .collect();
    let objective = MaxOfQuadratics { pieces };
    let lipschitz_radius = 10.0;
    let lipschitz = objective.lipschitz_on_ball(&xstar, lipschitz_radius);
    Ok(ProblemInstance {
        spec: InstanceSpec::MaxOfQuadratics {
            k,
            n,
            l: smoothness,
            mu,
            seed,
        },
        objective,
        region: Region::WholeSpace,
        truth: GroundTruth {
            fstar: Some(fstar),
            xstar: vec![Point(xstar)],
            mu: Some(mu),
            smoothness: Some(smoothness),
            lipschitz: Some(lipschitz),
            lipschitz_radius,
            rho: Some(0.0),
            pieces: k,
        },
    })
}

/// Max of `k` concave quadratics with curvature `-rho` on the box `[-R, R]^n`.
///
/// The box keeps the function bounded below; `f*` is not available in closed form.
pub fn weakly_convex_max(
    k: usize,
    n: usize,
    rho: f64,
    seed: u64,
    box_radius: f64,
) -> Result<ProblemInstance> {
    check_sizes(k, n)?;
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::param("rho", "must be positive"));
    }
    if !(box_radius > 0.0 && box_radius.is_finite()) {
        return Err(Error::param("box_radius", "must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pieces: Vec<QuadPiece> = (0..k)
        .map(|_| QuadPiece {
            offset: rng.gen_range(-1.0..1.0),
            linear: (0..n).map(|_| StandardNormal.sample(&mut rng)).collect(),
            hessian: scaled_identity(n, -rho),
            anchor: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            curvature: rho,
        })
        .collect();
    let objective = MaxOfQuadratics { pieces };
    let half_diag = box_radius * (n as f64).sqrt();
    let lipschitz = objective.lipschitz_on_ball(&vec![0.0; n], half_diag);
    Ok(ProblemInstance {
        spec: InstanceSpec::WeaklyConvexMax {
            k,
            n,
            rho,
            seed,
            box_radius,
        },
        objective,
        region: Region::Box {
            lower: vec![-box_radius; n],
            upper: vec![box_radius; n],
        },
        truth: GroundTruth {
            fstar: None,
            xstar: vec![],
            mu: None,
            smoothness: Some(rho),
            lipschitz: Some(lipschitz),
            lipschitz_radius: half_diag,
            rho: Some(rho),
            pieces: k,
        },
    })
}

/// `||x||^2 + |x_1|` with pieces `{x_1 <= 0}` (label 1) and `{x_1 > 0}` (label 2).
pub fn demo_pws() -> ProblemInstance {
    let piece = |sign: f64| QuadPiece {
        offset: 0.0,
        linear: vec![sign, 0.0],
        hessian: scaled_identity(2, 2.0),
        anchor: vec![0.0, 0.0],
        curvature: 2.0,
    };
    let objective = MaxOfQuadratics {
        pieces: vec![piece(-1.0), piece(1.0)],
    };
    let lipschitz_radius = 10.0;
    let lipschitz = objective.lipschitz_on_ball(&[0.0, 0.0], lipschitz_radius);
    ProblemInstance {
        spec: InstanceSpec::Demo,
        objective,
        region: Region::WholeSpace,
        truth: GroundTruth {
            fstar: Some(0.0),
            xstar: vec![Point(vec![0.0, 0.0])],
            mu: Some(2.0),
            smoothness: Some(2.0),
            lipschitz: Some(lipschitz),
            lipschitz_radius,
            rho: Some(0.0),
            pieces: 2,
        },
    }
}

/// `|x| = max(-x, x)`; the tie at zero resolves to the first piece, gradient `-1`.
pub fn abs_1d() -> ProblemInstance {
    let piece = |sign: f64| QuadPiece {
        offset: 0.0,
        linear: vec![sign],
        hessian: vec![0.0],
        anchor: vec![0.0],
        curvature: 0.0,
    };
    ProblemInstance {
        spec: InstanceSpec::Abs,
        objective: MaxOfQuadratics {
            pieces: vec![piece(-1.0), piece(1.0)],
        },
        region: Region::WholeSpace,
        truth: GroundTruth {
            fstar: Some(0.0),
            xstar: vec![Point(vec![0.0])],
            mu: None,
            smoothness: None,
            lipschitz: Some(1.0),
            lipschitz_radius: f64::INFINITY,
            rho: Some(0.0),
            pieces: 2,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn abs_at_kink_uses_first_piece() {
        let inst = abs_1d();
        let s = evaluate(&inst, &Point(vec![0.0]), 0.0, &mut OracleRng::new(0)).unwrap();
        assert_eq!(s.fx, 0.0);
        assert_eq!(s.cut.gradient, vec![-1.0]);
        assert_eq!(s.piece, Some(1));
    }

    #[test]
    fn canonical_single_quadratic_is_x_squared() {
        let inst = max_of_quadratics(1, 1, 2.0, 2.0, 0).unwrap();
        for &x in &[-1.5, 0.0, 0.3, 2.0] {
            assert_abs_diff_eq!(inst.value(&[x]), x * x, epsilon = 1e-12);
        }
        assert_eq!(inst.truth.fstar, Some(0.0));
        assert_eq!(inst.truth.xstar, vec![Point(vec![0.0])]);
    }

    #[test]
    fn demo_value_near_origin() {
        let inst = demo_pws();
        assert_abs_diff_eq!(inst.value(&[1e-4, 1e-2]), 2.0001e-4, epsilon = 1e-12);
        assert_eq!(piece_label(&inst, &[0.0, 1.0]), 1);
        assert_eq!(piece_label(&inst, &[1e-12, 1.0]), 2);
    }

    #[test]
    fn generated_minimizer_is_optimal() {
        for seed in 0..5 {
            let inst = max_of_quadratics(4, 3, 5.0, 1.0, seed).unwrap();
            let fstar = inst.truth.fstar.unwrap();
            let xs = inst.truth.xstar[0].clone();
            assert_abs_diff_eq!(inst.value(&xs), fstar, epsilon = 1e-12);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            for _ in 0..200 {
                let x = uniform_in_ball(&xs, 2.0, &mut rng);
                let d2 = crate::linalg::dist_sq(&x, &xs);
                assert!(inst.value(&x) - fstar >= 0.5 * 1.0 * d2 - 1e-12);
            }
        }
    }

    #[test]
    fn perturbed_cut_is_at_sample_and_reproducible() {
        let inst = demo_pws();
        let x = Point(vec![0.5, -0.25]);
        let a = evaluate(&inst, &x, 0.1, &mut OracleRng::new(7)).unwrap();
        let b = evaluate(&inst, &x, 0.1, &mut OracleRng::new(7)).unwrap();
        assert_eq!(a, b);
        assert!(a.sample.dist(&x) <= 0.1);
        assert_eq!(a.cut.center, a.sample);
        assert_eq!(a.piece, Some(piece_label(&inst, &a.sample)));
        assert_abs_diff_eq!(a.fx, inst.value(&x), epsilon = 0.0);
    }

    #[test]
    fn rejects_bad_points() {
        let inst = demo_pws();
        let mut rng = OracleRng::new(0);
        assert!(matches!(
            evaluate(&inst, &Point(vec![0.0]), 0.0, &mut rng),
            Err(Error::Dimension { .. })
        ));
        assert!(matches!(
            evaluate(&inst, &Point(vec![f64::NAN, 0.0]), 0.0, &mut rng),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn radius_helper_induces_at_most_delta() {
        let r = radius_for_delta(1e-3, 4.0, 7.0);
        assert!(induced_delta(r, 4.0, 7.0) <= 1e-3 * (1.0 + 1e-12));
    }
}
