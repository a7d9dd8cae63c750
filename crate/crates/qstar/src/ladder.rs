//! Refinement-ladder diagnostics.
//!
//! A ladder evaluates one named quantity on a family of instances indexed
//! by grid size and fits the slope of log(value) against log(n). A clearly
//! positive slope with a good fit certifies divergence: the desk-scale
//! signature of unboundedness or non-representability in the continuum
//! limit. Bounded data stays flat.

use std::sync::Arc;

use nalgebra::DVector;

use crate::algebra::{AlgebraInstance, Element, Functional};
use crate::error::{BuildError, LadderError};
use crate::functionals::{gns_construct, uniform_constant};
use crate::hilbert::{bounded_element, HilbertInstance};
use crate::instances::{
    build_grid_l2, build_lp_grid, grid_density_functional, grid_nodes, sample_grid_function,
    GridSubalgebra,
};
use crate::linops;

/// One ladder level: the instance plus the sampled inputs a quantity may
/// need. Hilbert-specific quantities require `hilbert`.
pub struct LadderLevel {
    pub instance: Arc<AlgebraInstance>,
    pub hilbert: Option<HilbertInstance>,
    pub functional: Option<Functional>,
    pub element: Option<Element>,
}

/// The named diagnostics a ladder can trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LadderQuantity {
    /// uniform representability constant of the level functional
    UniformConstant,
    /// bounded-element norm of the level element
    BoundedElementBound,
    /// multiplication-operator norm of the level element
    Norm0,
    /// `1 +` the number of multiplication directions whose generalized
    /// singular value exceeds the cutoff; a growing count certifies a
    /// shrinking adjoint domain in the limit
    AdjointDomainDim { cutoff: f64 },
}

impl LadderQuantity {
    pub fn name(&self) -> &'static str {
        match self {
            LadderQuantity::UniformConstant => "uniform_constant",
            LadderQuantity::BoundedElementBound => "bounded_element_bound",
            LadderQuantity::Norm0 => "norm0",
            LadderQuantity::AdjointDomainDim { .. } => "adjoint_domain_dim",
        }
    }
}

/// Classification of a ladder trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Classification {
    Stable,
    Diverging { slope: f64 },
    Inconclusive,
}

impl std::fmt::Display for Classification {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Classification::Stable => write!(f, "stable"),
            Classification::Diverging { slope } => write!(f, "diverging (slope {slope:.3})"),
            Classification::Inconclusive => write!(f, "inconclusive"),
        }
    }
}

/// Classification thresholds: diverging needs `slope > slope_tol` with
/// `r2 > r2_tol`; stable needs `|slope| <= slope_tol`.
#[derive(Debug, Clone, Copy)]
pub struct LadderThresholds {
    pub slope_tol: f64,
    pub r2_tol: f64,
}

impl Default for LadderThresholds {
    fn default() -> Self {
        Self { slope_tol: 0.05, r2_tol: 0.9 }
    }
}

/// Per-level values with the log-log fit and its classification.
#[derive(Debug, Clone)]
pub struct LadderReport {
    pub quantity: &'static str,
    pub levels: Vec<(usize, f64)>,
    pub classification: Classification,
    pub slope: f64,
    pub r2: f64,
    /// true when any level value came from a flagged estimator
    pub estimates: bool,
}

impl LadderReport {
    pub fn render(&self) -> String {
        let mut s = format!("ladder quantity: {}\n", self.quantity);
        for (n, v) in &self.levels {
            s.push_str(&format!("  n = {n:>6}  value = {v:.12e}\n"));
        }
        s.push_str(&format!(
            "slope {:.4}  r2 {:.4}  classification: {}{}\n",
            self.slope,
            self.r2,
            self.classification,
            if self.estimates { "  (estimated values)" } else { "" }
        ));
        s
    }
}

/// Evaluate `quantity` on each level produced by `family` and classify the
/// growth. Levels must be strictly increasing; per-level failures are
/// annotated with their level.
pub fn ladder_trace<F>(
    family: F,
    quantity: LadderQuantity,
    levels: &[usize],
    thresholds: LadderThresholds,
) -> Result<LadderReport, LadderError>
where
    F: Fn(usize) -> Result<LadderLevel, BuildError>,
{
    if levels.is_empty() || levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(LadderError::BadLevels);
    }
    let mut values = Vec::with_capacity(levels.len());
    let mut estimates = false;
    for &n in levels {
        let level = family(n).map_err(|e| LadderError::Level { level: n, source: Box::new(e) })?;
        let value = match quantity {
            LadderQuantity::UniformConstant => {
                let omega = level.functional.as_ref().ok_or_else(|| LadderError::MissingInput {
                    quantity: quantity.name().into(),
                    needs: "a functional".into(),
                    level: n,
                })?;
                let g = gns_construct(omega)
                    .map_err(|e| LadderError::Level { level: n, source: Box::new(e) })?;
                let uc = uniform_constant(&g)
                    .map_err(|e| LadderError::Level { level: n, source: Box::new(e) })?;
                estimates |= !uc.exact;
                uc.gamma
            }
            LadderQuantity::BoundedElementBound => {
                let (h, xi) = hilbert_element(&level, quantity.name(), n)?;
                bounded_element(h, xi)
                    .map_err(|e| LadderError::Level { level: n, source: Box::new(e) })?
                    .bound
            }
            LadderQuantity::Norm0 => {
                let xi = level.element.as_ref().ok_or_else(|| LadderError::MissingInput {
                    quantity: quantity.name().into(),
                    needs: "an element".into(),
                    level: n,
                })?;
                let r = level
                    .instance
                    .norm0(xi)
                    .map_err(|e| LadderError::Level { level: n, source: Box::new(e) })?;
                estimates |= !r.exact;
                r.value
            }
            LadderQuantity::AdjointDomainDim { cutoff } => {
                let (h, xi) = hilbert_element(&level, quantity.name(), n)?;
                adjoint_domain_value(h, xi, cutoff)
                    .map_err(|e| LadderError::Level { level: n, source: Box::new(e) })?
            }
        };
        values.push((n, value));
    }

    let (slope, r2, classification) = classify(&values, thresholds);
    Ok(LadderReport { quantity: quantity.name(), levels: values, classification, slope, r2, estimates })
}

fn hilbert_element<'a>(
    level: &'a LadderLevel,
    quantity: &str,
    n: usize,
) -> Result<(&'a HilbertInstance, &'a Element), LadderError> {
    let h = level.hilbert.as_ref().ok_or_else(|| LadderError::MissingInput {
        quantity: quantity.into(),
        needs: "a Hilbert instance".into(),
        level: n,
    })?;
    let xi = level.element.as_ref().ok_or_else(|| LadderError::MissingInput {
        quantity: quantity.into(),
        needs: "an element".into(),
        level: n,
    })?;
    Ok((h, xi))
}

/// `1 + #{generalized singular values of L_xi above the cutoff}`: the
/// number of directions multiplication already stretches beyond the cutoff
/// at this level. Stays at 1 for bounded data.
fn adjoint_domain_value(
    h: &HilbertInstance,
    xi: &Element,
    cutoff: f64,
) -> Result<f64, crate::error::HilbertError> {
    let inst = h.algebra();
    let ops = crate::hilbert::mult_operators(h, xi)?;
    let l = &ops.left;
    // eigenvalues of the pencil (L^H G L, G00) are the squared generalized
    // singular values
    let lhgl = linops::sandwich(&l.entries, &l.codomain_gram);
    let vals = linops::pencil_eigenvalues(&lhgl, &l.domain_gram, inst.rank_tol())?;
    let count = vals.iter().filter(|&&v| v.max(0.0).sqrt() > cutoff).count();
    Ok(1.0 + count as f64)
}

fn classify(values: &[(usize, f64)], th: LadderThresholds) -> (f64, f64, Classification) {
    let vmax = values.iter().fold(0.0f64, |a, &(_, v)| a.max(v.abs()));
    if vmax <= 1e-12 {
        return (0.0, 1.0, Classification::Stable);
    }
    if values.iter().any(|&(_, v)| !(v > 0.0) || !v.is_finite()) {
        return (f64::NAN, f64::NAN, Classification::Inconclusive);
    }
    let xs: Vec<f64> = values.iter().map(|&(n, _)| (n as f64).ln()).collect();
    let ys: Vec<f64> = values.iter().map(|&(_, v)| v.ln()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    // all-equal values have a perfect flat fit
    let r2 = if syy <= 1e-300 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    let class = if slope.abs() <= th.slope_tol {
        Classification::Stable
    } else if slope > th.slope_tol && r2 > th.r2_tol {
        Classification::Diverging { slope }
    } else {
        Classification::Inconclusive
    };
    (slope, r2, class)
}

/// Family of full grid algebras with the integration functional against
/// the sampled density `f` and the sampled element for element quantities.
pub fn grid_family(
    f: impl Fn(f64) -> f64 + Clone + 'static,
    interval: (f64, f64),
) -> impl Fn(usize) -> Result<LadderLevel, BuildError> {
    move |n: usize| {
        let h = build_grid_l2(n, interval, GridSubalgebra::All)?;
        let inst = Arc::clone(h.algebra());
        let nodes = grid_nodes(n, interval);
        let hvals: Vec<f64> = nodes.iter().map(|&t| f(t)).collect();
        let functional = grid_density_functional(&inst, &hvals);
        let element = sample_grid_function(&inst, &nodes, &f);
        Ok(LadderLevel { instance: inst, hilbert: Some(h), functional: Some(functional), element: Some(element) })
    }
}

/// Same sampled data on the p-norm grid (no Hilbert structure).
pub fn lp_grid_family(
    p: f64,
    f: impl Fn(f64) -> f64 + Clone + 'static,
    interval: (f64, f64),
) -> impl Fn(usize) -> Result<LadderLevel, BuildError> {
    move |n: usize| {
        let inst = build_lp_grid(p, n, interval)?;
        let nodes = grid_nodes(n, interval);
        let hvals: Vec<f64> = nodes.iter().map(|&t| f(t)).collect();
        let functional = grid_density_functional(&inst, &hvals);
        let element = sample_grid_function(&inst, &nodes, &f);
        Ok(LadderLevel { instance: inst, hilbert: None, functional: Some(functional), element: Some(element) })
    }
}

/// The named sample densities used by the command line and the examples.
pub fn named_density(name: &str) -> Option<fn(f64) -> f64> {
    match name {
        "one" => Some(|_t| 1.0),
        "zero" => Some(|_t| 0.0),
        "t" => Some(|t| t),
        "t2" => Some(|t| t * t),
        "sin" => Some(|t| (3.0 * t).sin()),
        "t-half" => Some(|t| t - 0.5),
        "tinv3" => Some(|t| t.abs().powf(-1.0 / 3.0)),
        _ => None,
    }
}

/// A vector of functional values per level, for tests that track how a
/// fixed continuous function behaves under refinement.
pub fn sample_density(n: usize, interval: (f64, f64), f: impl Fn(f64) -> f64) -> DVector<f64> {
    DVector::from_iterator(n, grid_nodes(n, interval).into_iter().map(f))
}

#[cfg(test)]
mod tests {
    use super::*;

    const LEVELS: [usize; 5] = [16, 32, 64, 128, 256];

    #[test]
    fn bounded_density_gives_stable_gamma() {
        let report = ladder_trace(
            grid_family(|t| t, (0.0, 1.0)),
            LadderQuantity::UniformConstant,
            &LEVELS,
            LadderThresholds::default(),
        )
        .unwrap();
        assert_eq!(report.classification, Classification::Stable, "{}", report.render());
        assert!(!report.estimates);
    }

    #[test]
    fn unbounded_density_gives_diverging_gamma() {
        let report = ladder_trace(
            grid_family(|t| t.powf(-1.0 / 3.0), (0.0, 1.0)),
            LadderQuantity::UniformConstant,
            &LEVELS,
            LadderThresholds::default(),
        )
        .unwrap();
        match report.classification {
            Classification::Diverging { slope } => {
                // gamma_n = max h^{1/2} grows like n^{1/6} on midpoint grids
                assert!((slope - 1.0 / 6.0).abs() < 0.02, "slope {slope}");
                assert!(report.r2 > 0.99);
            }
            other => panic!("expected diverging, got {other:?}\n{}", report.render()),
        }
    }

    #[test]
    fn zero_density_is_stable() {
        let report = ladder_trace(
            grid_family(|_| 0.0, (0.0, 1.0)),
            LadderQuantity::UniformConstant,
            &LEVELS,
            LadderThresholds::default(),
        )
        .unwrap();
        assert_eq!(report.classification, Classification::Stable);
    }

    #[test]
    fn lp_grid_constant_density_diverges() {
        let report = ladder_trace(
            lp_grid_family(1.5, |_| 1.0, (0.0, 1.0)),
            LadderQuantity::UniformConstant,
            &[16, 32, 64, 128],
            LadderThresholds::default(),
        )
        .unwrap();
        match report.classification {
            Classification::Diverging { slope } => {
                assert!(slope > 0.05, "slope {slope}");
                assert!(report.estimates, "p-norm constants are estimates");
            }
            other => panic!("expected diverging, got {other:?}\n{}", report.render()),
        }
    }

    #[test]
    fn bounded_element_norm_tracks_sup() {
        let report = ladder_trace(
            grid_family(|t| t, (0.0, 1.0)),
            LadderQuantity::BoundedElementBound,
            &[16, 32, 64],
            LadderThresholds::default(),
        )
        .unwrap();
        assert_eq!(report.classification, Classification::Stable);
        for &(n, v) in &report.levels {
            let expected = 1.0 - 0.5 / n as f64;
            assert!((v - expected).abs() < 1e-10, "n={n}: {v} vs {expected}");
        }
    }

    #[test]
    fn adjoint_domain_counts_grow_for_unbounded_data() {
        let report = ladder_trace(
            grid_family(|t| t.powf(-1.0 / 3.0), (0.0, 1.0)),
            LadderQuantity::AdjointDomainDim { cutoff: 2.0 },
            &[64, 128, 256, 512],
            LadderThresholds::default(),
        )
        .unwrap();
        match report.classification {
            Classification::Diverging { slope } => assert!(slope > 0.5, "slope {slope}"),
            other => panic!("expected diverging, got {other:?}\n{}", report.render()),
        }
        let flat = ladder_trace(
            grid_family(|t| t, (0.0, 1.0)),
            LadderQuantity::AdjointDomainDim { cutoff: 2.0 },
            &[16, 32, 64],
            LadderThresholds::default(),
        )
        .unwrap();
        assert_eq!(flat.classification, Classification::Stable);
    }

    #[test]
    fn bad_levels_are_rejected() {
        let fam = grid_family(|t| t, (0.0, 1.0));
        assert!(matches!(
            ladder_trace(&fam, LadderQuantity::Norm0, &[], LadderThresholds::default()),
            Err(LadderError::BadLevels)
        ));
        assert!(matches!(
            ladder_trace(&fam, LadderQuantity::Norm0, &[16, 16], LadderThresholds::default()),
            Err(LadderError::BadLevels)
        ));
    }

    #[test]
    fn refinement_consistency_for_lipschitz_data() {
        // bounded-element norms at levels n and 2n differ by at most the
        // Lipschitz constant times the coarse spacing
        let cases: [(fn(f64) -> f64, f64); 2] = [(|t| t, 1.0), (|t| (3.0 * t).cos(), 3.0)];
        for (f, lip) in cases {
            let fam = grid_family(f, (0.0, 1.0));
            for &n in &[8usize, 16, 32] {
                let b1 = {
                    let l = fam(n).unwrap();
                    bounded_element(l.hilbert.as_ref().unwrap(), l.element.as_ref().unwrap())
                        .unwrap()
                        .bound
                };
                let b2 = {
                    let l = fam(2 * n).unwrap();
                    bounded_element(l.hilbert.as_ref().unwrap(), l.element.as_ref().unwrap())
                        .unwrap()
                        .bound
                };
                assert!((b1 - b2).abs() <= lip / n as f64 + 1e-12);
            }
        }
    }

    #[test]
    fn ladder_is_deterministic() {
        let run = || {
            ladder_trace(
                lp_grid_family(1.5, |_| 1.0, (0.0, 1.0)),
                LadderQuantity::UniformConstant,
                &[16, 32, 64],
                LadderThresholds::default(),
            )
            .unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.levels, b.levels);
    }
}
