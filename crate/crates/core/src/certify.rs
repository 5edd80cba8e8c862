//! Model-based stationarity certificates.
//!
//! A certificate `(iota, nu)` at `xbar` states that the piecewise-linear model
//! `psi` (the max of the certificate's cuts) cannot decrease faster than `nu`
//! per unit distance within `B(xbar, iota)`:
//! `V_iota = (psi(xbar) - min_{B(xbar, iota) ∩ X} psi) / iota <= nu`.

use serde::{Deserialize, Serialize};

use crate::bundle::empirical_smoothness;
use crate::error::{Error, Result};
use crate::geometry::{
    eval_wgap, project_onto_level_set, LevelProjection, Region, WGap, DEFAULT_QP_TOL,
};
use crate::linalg::{axpy, norm, Point};
use crate::problems::{Cut, FirstOrderOracle, OracleSample};
use crate::proximal::ProxSurrogate;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Radius {
    Finite(f64),
    /// The level set was empty: the model stays above the level everywhere on the region.
    Unbounded,
}

impl Radius {
    pub fn finite(self) -> Option<f64> {
        match self {
            Radius::Finite(r) => Some(r),
            Radius::Unbounded => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateKind {
    RadiusCap,
    EmptyLevelSet,
    Completed,
    Transferred,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WCertificate {
    pub center: Point,
    pub center_value: f64,
    /// Oracle answers at the center and the search points.
    pub points: Vec<OracleSample>,
    pub iota: Radius,
    /// Zero for unbounded certificates.
    pub nu: f64,
    pub model: Vec<Cut>,
    pub delta_used: f64,
    pub smoothness: Option<f64>,
    pub region: Region,
    pub kind: CertificateKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SearchOutcome {
    Certificate(Box<WCertificate>),
    /// The gap estimate was too small: `||xbar - x^{m+1}|| < sqrt(Delta / Ltilde) / 2`.
    False {
        distance: f64,
        smoothness: f64,
    },
}

impl SearchOutcome {
    pub fn certificate(self) -> Option<WCertificate> {
        match self {
            SearchOutcome::Certificate(c) => Some(*c),
            SearchOutcome::False { .. } => None,
        }
    }

    pub fn is_false(&self) -> bool {
        matches!(self, SearchOutcome::False { .. })
    }
}

/// Search for a certificate at `xbar` from the gap estimate `delta >= f(xbar) - f*`.
///
/// Projects `xbar` onto `{psi_t <= f(xbar) - 2 delta} ∩ X` for `t = 0..=m`, where
/// `psi_t` holds the center cut and the cuts at the previous projections.
pub fn wcert_search(
    oracle: &mut dyn FirstOrderOracle,
    region: &Region,
    xbar: &Point,
    delta: f64,
    m: usize,
    iota_max: Option<f64>,
    tol: f64,
) -> Result<SearchOutcome> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::param(
            "delta",
            "gap estimate must be positive and finite",
        ));
    }
    if m == 0 {
        return Err(Error::param("m", "need at least one search step"));
    }
    if let Some(r) = iota_max {
        if !(r > 0.0) {
            return Err(Error::param("iota_max", "must be positive"));
        }
    }
    let c = oracle.sample(xbar)?;
    let level = c.fx - 2.0 * delta;
    let mut samples = vec![c.clone()];
    let mut cuts = vec![c.cut.clone()];
    let certificate =
        |samples: Vec<OracleSample>, cuts: Vec<Cut>, iota: Radius, nu: f64, kind, smoothness| {
            SearchOutcome::Certificate(Box::new(WCertificate {
                center: xbar.clone(),
                center_value: c.fx,
                points: samples,
                iota,
                nu,
                model: cuts,
                delta_used: delta,
                smoothness,
                region: region.clone(),
                kind,
            }))
        };
    let mut last = None;
    for t in 0..=m {
        let proj = project_onto_level_set(xbar, &cuts, level, region, tol)?;
        let (point, d) = match proj {
            LevelProjection::Feasible { point, .. } => {
                let d = point.dist(xbar);
                (Some(point), d)
            }
            LevelProjection::Infeasible { .. } => (None, f64::INFINITY),
        };
        if let Some(r) = iota_max {
            if d > r {
                return Ok(certificate(
                    samples,
                    cuts,
                    Radius::Finite(r),
                    2.0 * delta / r,
                    CertificateKind::RadiusCap,
                    None,
                ));
            }
        }
        let Some(point) = point else {
            return Ok(certificate(
                samples,
                cuts,
                Radius::Unbounded,
                0.0,
                CertificateKind::EmptyLevelSet,
                None,
            ));
        };
        let s = oracle.sample(&point)?;
        if t < m {
            cuts.push(s.cut.clone());
            samples.push(s);
        } else {
            last = Some(s);
        }
    }
    let last = last.expect("loop ran m + 1 times");
    let mut all: Vec<&OracleSample> = samples.iter().collect();
    all.push(&last);
    let mut lt = f64::INFINITY;
    for r in 1..all.len() {
        for l in 0..r {
            if let Ok(v) = empirical_smoothness(
                &all[r].query,
                all[r].fx,
                &all[l].query,
                &all[l].cut,
                delta / 6.0,
            ) {
                lt = lt.min(v);
            }
        }
    }
    let iota = last.query.dist(xbar);
    let threshold = 0.5 * (delta / lt).sqrt();
    if iota < threshold || iota == 0.0 {
        return Ok(SearchOutcome::False {
            distance: iota,
            smoothness: lt,
        });
    }
    Ok(certificate(
        samples,
        cuts,
        Radius::Finite(iota),
        2.0 * delta / iota,
        CertificateKind::Completed,
        Some(lt),
    ))
}

/// Recomputes `V_iota` for the certificate model; for unbounded certificates the
/// caller supplies the radius.
pub fn validate_certificate(
    cert: &WCertificate,
    tol: f64,
    unbounded_radius: Option<f64>,
) -> Result<WGap> {
    let iota = match cert.iota {
        Radius::Finite(r) => r,
        Radius::Unbounded => unbounded_radius.ok_or_else(|| {
            Error::param("unbounded_radius", "required for unbounded certificates")
        })?,
    };
    eval_wgap(&cert.center, &cert.model, iota, &cert.region, tol)
}

/// `max{iota nu, 2 nu^2 / mu}`, or `2 delta` for unbounded certificates.
pub fn certificate_gap_bound(cert: &WCertificate, mu: f64) -> f64 {
    match cert.iota {
        Radius::Finite(iota) => (iota * cert.nu).max(2.0 * cert.nu * cert.nu / mu),
        Radius::Unbounded => 2.0 * cert.delta_used,
    }
}

/// `max{iota, nu / mu}`.
///
/// The bound holds for certificates emitted by [`wcert_search`] with a valid gap
/// estimate, where `nu iota = 2 delta >= 2 (f(xbar) - f*)`.
pub fn certificate_distance_bound(cert: &WCertificate, mu: f64) -> Option<f64> {
    cert.iota.finite().map(|iota| iota.max(cert.nu / mu))
}

/// `2 nu + 4 iota rho`.
pub fn moreau_bound_from_cert(cert: &WCertificate, rho: f64) -> Option<f64> {
    cert.iota
        .finite()
        .map(|iota| 2.0 * cert.nu + 4.0 * iota * rho)
}

/// Norm of the aggregate gradient `sum_i lambda_i g_i` for the dual weights of the W-gap problem.
pub fn goldstein_norm_from_cert(cert: &WCertificate, tol: f64) -> Result<f64> {
    if !cert.region.is_whole_space() {
        return Err(Error::ConstrainedRegion);
    }
    let gap = validate_certificate(cert, tol, None)?;
    let weights = gap
        .weights
        .ok_or_else(|| Error::param("certificate", "no dual weights available"))?;
    let mut g = vec![0.0; cert.center.dim()];
    for (w, cut) in weights.iter().zip(&cert.model) {
        axpy(*w, &cut.gradient, &mut g);
    }
    Ok(norm(&g))
}

/// A certificate for `P = f + rho ||. - xbar||^2` read as one for `f`: same points
/// and radius, `nu` doubled, cuts with the quadratic removed.
pub fn transfer_cert_to_f(cert: &WCertificate, surrogate: &ProxSurrogate) -> Result<WCertificate> {
    let iota = cert
        .iota
        .finite()
        .ok_or_else(|| Error::param("iota", "transfer needs a finite radius"))?;
    if cert.nu < 2.0 * iota * surrogate.rho {
        return Err(Error::TransferPrecondition {
            nu: cert.nu,
            iota,
            rho: surrogate.rho,
        });
    }
    Ok(WCertificate {
        center: cert.center.clone(),
        center_value: cert.center_value
            - surrogate.rho * cert.center.dist(&surrogate.center).powi(2),
        points: cert.points.iter().map(|s| surrogate.lower(s)).collect(),
        iota: cert.iota,
        nu: 2.0 * cert.nu,
        model: cert.model.iter().map(|c| surrogate.lower_cut(c)).collect(),
        delta_used: cert.delta_used,
        smoothness: cert.smoothness,
        region: cert.region.clone(),
        kind: CertificateKind::Transferred,
    })
}

/// Default tolerance for certificate validation.
pub const VALIDATION_TOL: f64 = 1e-12;

pub fn default_search_tol() -> f64 {
    DEFAULT_QP_TOL
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{abs_1d, max_of_quadratics, InstanceOracle};

    #[test]
    fn abs_at_minimizer_gives_unbounded_certificate() {
        let inst = abs_1d();
        let mut o = InstanceOracle::exact(&inst);
        let out = wcert_search(
            &mut o,
            &Region::WholeSpace,
            &Point(vec![0.0]),
            0.1,
            1,
            None,
            1e-14,
        )
        .unwrap();
        let cert = out.certificate().expect("certificate");
        assert_eq!(cert.iota, Radius::Unbounded);
        assert!((cert.points[1].query[0] - 0.2).abs() < 1e-15);
        assert!((certificate_gap_bound(&cert, 1.0) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn square_at_minimizer_never_fails() {
        let inst = max_of_quadratics(1, 1, 2.0, 2.0, 0).unwrap();
        for &delta in &[1e-6, 1e-3, 0.1, 1.0, 10.0] {
            for m in 1..5 {
                let mut o = InstanceOracle::exact(&inst);
                let out = wcert_search(
                    &mut o,
                    &Region::WholeSpace,
                    &Point(vec![0.0]),
                    delta,
                    m,
                    None,
                    1e-14,
                )
                .unwrap();
                assert!(!out.is_false());
            }
        }
    }

    fn cert_with(iota: f64, nu: f64) -> WCertificate {
        WCertificate {
            center: Point(vec![0.0]),
            center_value: 0.0,
            points: vec![],
            iota: Radius::Finite(iota),
            nu,
            model: vec![
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
            ],
            delta_used: 0.1,
            smoothness: None,
            region: Region::WholeSpace,
            kind: CertificateKind::Completed,
        }
    }

    #[test]
    fn bound_formulas() {
        assert!((certificate_gap_bound(&cert_with(1.0, 0.1), 2.0) - 0.1).abs() < 1e-15);
        assert!(
            (certificate_distance_bound(&cert_with(0.01, 0.1), 2.0).unwrap() - 0.05).abs() < 1e-15
        );
        assert!((moreau_bound_from_cert(&cert_with(0.05, 0.1), 1.0).unwrap() - 0.4).abs() < 1e-15);
        assert_eq!(
            certificate_distance_bound(&cert_with(0.3, 0.0), 2.0),
            Some(0.3)
        );
    }

    #[test]
    fn goldstein_of_abs_kink_is_zero() {
        let g = goldstein_norm_from_cert(&cert_with(1.0, 0.0), 1e-12).unwrap();
        assert!(g < 1e-9);
    }

    #[test]
    fn transfer_requires_large_nu() {
        let s = ProxSurrogate::new(Point(vec![0.0]), 1.0).unwrap();
        assert!(matches!(
            transfer_cert_to_f(&cert_with(1.0, 1.0), &s),
            Err(Error::TransferPrecondition { .. })
        ));
        let t = transfer_cert_to_f(&cert_with(0.5, 1.0), &s).unwrap();
        assert_eq!(t.nu, 2.0);
    }
}
