use crate::bundle::{Trace, TraceEvent, TraceRecord};
use crate::error::{Error, Result};
use crate::geometry::Region;
use crate::linalg::{axpy, norm_sq, Point};
use crate::problems::FirstOrderOracle;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolyakOptions {
    pub fstar: f64,
    pub max_iters: usize,
    /// Stop once `f(x) - fstar` drops to this value.
    pub stop_gap: f64,
}

impl PolyakOptions {
    pub fn new(fstar: f64, max_iters: usize) -> Self {
        PolyakOptions {
            fstar,
            max_iters,
            stop_gap: 0.0,
        }
    }
}

/// Projected subgradient descent with the Polyak step `(f(x) - f*) / ||g||^2`.
/// Stops at a zero subgradient or a zero gap.
pub fn polyak_subgradient(
    oracle: &mut dyn FirstOrderOracle,
    region: &Region,
    x0: &Point,
    opts: &PolyakOptions,
) -> Result<Trace> {
    if x0.dim() != oracle.dim() {
        return Err(Error::Dimension {
            expected: oracle.dim(),
            got: x0.dim(),
        });
    }
    let mut trace = Trace::default();
    let mut x = region.project(x0);
    for t in 0..=opts.max_iters {
        if !oracle.has_budget() {
            break;
        }
        let s = oracle.sample(&x)?;
        let mut rec = TraceRecord::from_sample(
            &s,
            oracle.calls(),
            oracle.distance_to_solution(&x),
            TraceEvent::Step,
        );
        rec.level = Some(opts.fstar);
        trace.push(rec);
        let gap = s.fx - opts.fstar;
        let g2 = norm_sq(&s.cut.gradient);
        if gap <= opts.stop_gap || g2 == 0.0 || t == opts.max_iters {
            break;
        }
        let mut y = x.0.clone();
        axpy(-gap / g2, &s.cut.gradient, &mut y);
        x = region.project(&y);
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{abs_1d, demo_pws, InstanceOracle};

    #[test]
    fn abs_in_one_step() {
        let inst = abs_1d();
        let mut o = InstanceOracle::exact(&inst);
        let tr = polyak_subgradient(
            &mut o,
            &Region::WholeSpace,
            &Point(vec![1.0]),
            &PolyakOptions::new(0.0, 10),
        )
        .unwrap();
        assert_eq!(tr.records[1].x.0, vec![0.0]);
        assert_eq!(tr.len(), 2);
    }

    #[test]
    fn stays_at_the_minimizer() {
        let inst = abs_1d();
        let mut o = InstanceOracle::exact(&inst);
        let tr = polyak_subgradient(
            &mut o,
            &Region::WholeSpace,
            &Point(vec![0.0]),
            &PolyakOptions::new(0.0, 10),
        )
        .unwrap();
        assert_eq!(tr.len(), 1);
    }

    #[test]
    fn demo_zigzags() {
        let inst = demo_pws();
        let mut o = InstanceOracle::exact(&inst);
        let tr = polyak_subgradient(
            &mut o,
            &Region::WholeSpace,
            &Point(vec![1e-4, 1e-2]),
            &PolyakOptions::new(0.0, 40),
        )
        .unwrap();
        let flips = tr
            .records
            .windows(2)
            .filter(|w| w[0].x[0] * w[1].x[0] < 0.0)
            .count();
        assert!(flips >= 10, "{flips}");
    }
}
