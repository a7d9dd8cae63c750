//! Builders for the bundled instance families: square matrices with the
//! trace inner product, discretized function algebras on a grid, cyclic
//! group algebras, and the p-norm grid used for divergence demonstrations.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use crate::algebra::{AlgebraInstance, ConeOracle, Element, Functional, NormSpec, StructConsts};
use crate::error::BuildError;
use crate::hilbert::HilbertInstance;
use crate::linops::DEFAULT_RANK_TOL;

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Subalgebra flavor of the grid builders.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridSubalgebra {
    /// all grid functions (the discretized essentially-bounded model)
    All,
    /// the lowest `2k+1` Fourier modes (the discretized continuous-function
    /// model); the builder refuses when the projected products break
    /// associativity, i.e. unless `k = 0` or the modes fill the grid
    Trig(usize),
}

/// Supported group families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupKind {
    Cyclic,
}

/// n x n complex matrices with the trace inner product `<a, b> = tr(b* a)`,
/// subalgebra everything, unit the identity matrix.
pub fn build_matrix_hs(n: usize) -> Result<HilbertInstance, BuildError> {
    build_matrix_hs_tol(n, DEFAULT_RANK_TOL)
}

pub fn build_matrix_hs_tol(n: usize, rank_tol: f64) -> Result<HilbertInstance, BuildError> {
    if n < 1 {
        return Err(BuildError::InvalidParameter("matrix dimension must be at least 1".into()));
    }
    let dim = n * n;
    let idx = |i: usize, j: usize| i * n + j;
    let mut entries = Vec::with_capacity(n * n * n);
    for i in 0..n {
        for j in 0..n {
            for l in 0..n {
                entries.push((idx(i, j), idx(j, l), idx(i, l), C64::ONE));
            }
        }
    }
    let consts = StructConsts::from_entries(dim, &entries)?;
    let mut invol = DMatrix::zeros(dim, dim);
    for i in 0..n {
        for j in 0..n {
            invol[(idx(j, i), idx(i, j))] = C64::ONE;
        }
    }
    let gram = DMatrix::identity(dim, dim);
    let mut unit = DVector::zeros(dim);
    for i in 0..n {
        unit[idx(i, i)] = C64::ONE;
    }
    let inst = AlgebraInstance::new(
        format!("matrix_hs n={n}"),
        dim,
        (0..dim).collect(),
        consts,
        invol,
        NormSpec::Hilbert { gram },
        Some(unit),
        ConeOracle::PsdMatrix { n },
        rank_tol,
    )?;
    Ok(HilbertInstance::new(inst)?)
}

/// Midpoint nodes of a uniform grid on `[lo, hi]`.
pub fn grid_nodes(n: usize, interval: (f64, f64)) -> Vec<f64> {
    let (lo, hi) = interval;
    let h = (hi - lo) / n as f64;
    (0..n).map(|j| lo + (j as f64 + 0.5) * h).collect()
}

/// Discretized function algebra on an n-point midpoint grid with quadrature
/// weights `(hi-lo)/n`: inner product `sum_i f_i conj(g_i) w_i`, pointwise
/// multiplication, unit the constant-one function.
pub fn build_grid_l2(
    n: usize,
    interval: (f64, f64),
    subalgebra: GridSubalgebra,
) -> Result<HilbertInstance, BuildError> {
    build_grid_l2_tol(n, interval, subalgebra, DEFAULT_RANK_TOL)
}

pub fn build_grid_l2_tol(
    n: usize,
    interval: (f64, f64),
    subalgebra: GridSubalgebra,
    rank_tol: f64,
) -> Result<HilbertInstance, BuildError> {
    let (lo, hi) = interval;
    if n < 1 {
        return Err(BuildError::InvalidParameter("grid needs at least one node".into()));
    }
    if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(BuildError::InvalidParameter(format!("bad interval [{lo}, {hi}]")));
    }
    match subalgebra {
        GridSubalgebra::All => {
            let w = (hi - lo) / n as f64;
            let entries: Vec<_> = (0..n).map(|i| (i, i, i, C64::ONE)).collect();
            let consts = StructConsts::from_entries(n, &entries)?;
            let gram = DMatrix::from_diagonal(&DVector::from_element(n, c(w)));
            let unit = DVector::from_element(n, C64::ONE);
            let inst = AlgebraInstance::new(
                format!("grid_l2 n={n} [{lo},{hi}]"),
                n,
                (0..n).collect(),
                consts,
                DMatrix::identity(n, n),
                NormSpec::Hilbert { gram },
                Some(unit),
                ConeOracle::PointwiseNonneg,
                rank_tol,
            )?;
            Ok(HilbertInstance::new(inst)?)
        }
        GridSubalgebra::Trig(k) => build_grid_trig(n, interval, k, rank_tol),
    }
}

/// Signed frequency of basis index: 0, +1, -1, +2, -2, ...
fn trig_freq(idx: usize) -> i64 {
    if idx == 0 {
        0
    } else if idx % 2 == 1 {
        ((idx + 1) / 2) as i64
    } else {
        -((idx / 2) as i64)
    }
}

fn trig_idx(freq: i64) -> usize {
    if freq == 0 {
        0
    } else if freq > 0 {
        (2 * freq - 1) as usize
    } else {
        (-2 * freq) as usize
    }
}

/// Alias a frequency into the canonical signed set of an n-point midpoint
/// grid; returns the canonical frequency and the sign picked up by the
/// half-step shift (frequency shifts by n flip the sample signs).
fn trig_alias(freq: i64, n: usize) -> (i64, f64) {
    let ni = n as i64;
    let lo = if ni % 2 == 1 { -(ni - 1) / 2 } else { -(ni / 2 - 1) };
    let hi = if ni % 2 == 1 { (ni - 1) / 2 } else { ni / 2 };
    let mut f = freq;
    let mut q: i64 = 0;
    while f > hi {
        f -= ni;
        q += 1;
    }
    while f < lo {
        f += ni;
        q -= 1;
    }
    (f, if q % 2 == 0 { 1.0 } else { -1.0 })
}

fn build_grid_trig(
    n: usize,
    interval: (f64, f64),
    k: usize,
    rank_tol: f64,
) -> Result<HilbertInstance, BuildError> {
    let (lo, hi) = interval;
    let modes = 2 * k + 1;
    if modes > n {
        return Err(BuildError::InvalidParameter(format!(
            "{modes} trigonometric modes do not fit an {n}-point grid"
        )));
    }
    let w = (hi - lo) / n as f64;
    let mut entries = Vec::new();
    let mut projected = false;
    for i in 0..n {
        for j in 0..n {
            let in_a0 = i < modes || j < modes;
            if !in_a0 {
                continue;
            }
            let (f, sign) = trig_alias(trig_freq(i) + trig_freq(j), n);
            let kk = trig_idx(f);
            if i < modes && j < modes && kk >= modes {
                // internal product of subalgebra modes escaping the
                // subalgebra: projected away
                projected = true;
                continue;
            }
            entries.push((i, j, kk, c(sign)));
        }
    }
    let consts = StructConsts::from_entries(n, &entries)?;
    let mut invol = DMatrix::zeros(n, n);
    for i in 0..n {
        let (f, sign) = trig_alias(-trig_freq(i), n);
        invol[(trig_idx(f), i)] = c(sign);
    }
    let gram = DMatrix::from_diagonal(&DVector::from_element(n, c(w * n as f64)));
    let mut unit = DVector::zeros(n);
    unit[0] = C64::ONE;
    let inst = AlgebraInstance::new(
        format!("grid_trig n={n} k={k} [{lo},{hi}]"),
        n,
        (0..modes).collect(),
        consts,
        invol,
        NormSpec::Hilbert { gram },
        Some(unit),
        ConeOracle::SampleSquares,
        rank_tol,
    )?;
    if projected {
        let report = inst.check_axioms();
        let assoc = report
            .item("module_associativity")
            .map(|it| it.worst)
            .unwrap_or(f64::INFINITY);
        if assoc > 1e-9 {
            return Err(BuildError::TrigSubalgebraNotClosed { modes, grid: n, violation: assoc });
        }
    }
    Ok(HilbertInstance::new(inst)?)
}

/// Group algebra of the cyclic group of the given order: convolution
/// product, involution `g -> g^{-1}`, orthonormal group basis.
pub fn build_group_algebra(order: usize, kind: GroupKind) -> Result<HilbertInstance, BuildError> {
    build_group_algebra_tol(order, kind, DEFAULT_RANK_TOL)
}

pub fn build_group_algebra_tol(
    order: usize,
    kind: GroupKind,
    rank_tol: f64,
) -> Result<HilbertInstance, BuildError> {
    let GroupKind::Cyclic = kind;
    if order < 1 {
        return Err(BuildError::InvalidParameter("group order must be at least 1".into()));
    }
    let mut entries = Vec::with_capacity(order * order);
    for g in 0..order {
        for h in 0..order {
            entries.push((g, h, (g + h) % order, C64::ONE));
        }
    }
    let consts = StructConsts::from_entries(order, &entries)?;
    let mut invol = DMatrix::zeros(order, order);
    for g in 0..order {
        invol[((order - g) % order, g)] = C64::ONE;
    }
    let mut unit = DVector::zeros(order);
    unit[0] = C64::ONE;
    let inst = AlgebraInstance::new(
        format!("group_cyclic order={order}"),
        order,
        (0..order).collect(),
        consts,
        invol,
        NormSpec::Hilbert { gram: DMatrix::identity(order, order) },
        Some(unit),
        ConeOracle::SampleSquares,
        rank_tol,
    )?;
    Ok(HilbertInstance::new(inst)?)
}

/// Same grid data as [`build_grid_l2`] but with a weighted p-norm instead
/// of the Hilbert norm; used for divergence demonstrations, not a Hilbert
/// instance.
pub fn build_lp_grid(p: f64, n: usize, interval: (f64, f64)) -> Result<Arc<AlgebraInstance>, BuildError> {
    build_lp_grid_tol(p, n, interval, DEFAULT_RANK_TOL)
}

pub fn build_lp_grid_tol(
    p: f64,
    n: usize,
    interval: (f64, f64),
    rank_tol: f64,
) -> Result<Arc<AlgebraInstance>, BuildError> {
    if p < 1.0 || !p.is_finite() {
        return Err(BuildError::InvalidParameter(format!("p-norm grid needs p >= 1, got {p}")));
    }
    let (lo, hi) = interval;
    if n < 1 || !(hi > lo) {
        return Err(BuildError::InvalidParameter("bad grid parameters".into()));
    }
    let w = (hi - lo) / n as f64;
    let entries: Vec<_> = (0..n).map(|i| (i, i, i, C64::ONE)).collect();
    let consts = StructConsts::from_entries(n, &entries)?;
    let inst = AlgebraInstance::new(
        format!("lp_grid p={p} n={n} [{lo},{hi}]"),
        n,
        (0..n).collect(),
        consts,
        DMatrix::identity(n, n),
        NormSpec::PNorm { p, weights: DVector::from_element(n, w) },
        Some(DVector::from_element(n, C64::ONE)),
        ConeOracle::PointwiseNonneg,
        rank_tol,
    )?;
    Ok(inst)
}

/// Sample a real function at the grid nodes into an element (point-value
/// basis instances only).
pub fn sample_grid_function(
    inst: &Arc<AlgebraInstance>,
    nodes: &[f64],
    f: impl Fn(f64) -> f64,
) -> Element {
    let v = DVector::from_fn(inst.dim(), |i, _| c(f(nodes[i])));
    inst.element(v).expect("node count matches instance dimension")
}

/// The integration functional against density `h` on a grid instance:
/// `omega_h(f) = sum_i f_i h_i w_i` with `w` the quadrature weights.
pub fn grid_density_functional(inst: &Arc<AlgebraInstance>, h: &[f64]) -> Functional {
    let weights: Vec<f64> = match inst.norm_spec() {
        NormSpec::Hilbert { gram } => (0..inst.dim()).map(|i| gram[(i, i)].re).collect(),
        NormSpec::PNorm { weights, .. } | NormSpec::SupNorm { weights } => {
            weights.iter().copied().collect()
        }
    };
    let dual = DVector::from_fn(inst.dim(), |i, _| c(h[i] * weights[i]));
    inst.functional(dual).expect("length checked")
}

/// Trace-type canonical functional per family: the normalized matrix trace,
/// the total integral on grids, or the unit-coefficient functional on group
/// algebras.
pub fn canonical_trace_functional(inst: &Arc<AlgebraInstance>) -> Functional {
    match inst.cone_oracle() {
        ConeOracle::PsdMatrix { n } => {
            let mut dual = DVector::zeros(inst.dim());
            for i in 0..*n {
                dual[i * n + i] = c(1.0 / *n as f64);
            }
            inst.functional(dual).expect("length checked")
        }
        _ => {
            // integral against 1 on grids, delta at the identity on groups
            match inst.norm_spec() {
                NormSpec::Hilbert { gram } => {
                    if inst.is_pointwise() {
                        let dual = DVector::from_fn(inst.dim(), |i, _| gram[(i, i)]);
                        inst.functional(dual).expect("length checked")
                    } else {
                        let mut dual = DVector::zeros(inst.dim());
                        dual[0] = C64::ONE;
                        inst.functional(dual).expect("length checked")
                    }
                }
                NormSpec::PNorm { weights, .. } | NormSpec::SupNorm { weights } => {
                    let dual = DVector::from_fn(inst.dim(), |i, _| c(weights[i]));
                    inst.functional(dual).expect("length checked")
                }
            }
        }
    }
}

/// The state functional `a -> tr(rho a)` on a matrix instance.
pub fn matrix_state_functional(
    inst: &Arc<AlgebraInstance>,
    rho: &DMatrix<C64>,
) -> Result<Functional, BuildError> {
    let n = match inst.cone_oracle() {
        ConeOracle::PsdMatrix { n } => *n,
        _ => {
            return Err(BuildError::InvalidParameter(
                "state functionals need a matrix instance".into(),
            ))
        }
    };
    if rho.nrows() != n || rho.ncols() != n {
        return Err(BuildError::InvalidParameter("density matrix has wrong shape".into()));
    }
    // omega(E_ij) = tr(rho E_ij) = rho[j, i]
    let dual = DVector::from_fn(n * n, |idx, _| rho[(idx % n, idx / n)]);
    inst.functional(dual).map_err(Into::into)
}

/// Coefficient view of a matrix-instance element as an n x n matrix.
pub fn matrix_of_element(el: &Element) -> Option<DMatrix<C64>> {
    match el.instance().cone_oracle() {
        ConeOracle::PsdMatrix { n } => {
            let n = *n;
            Some(DMatrix::from_fn(n, n, |i, j| el.coeffs()[i * n + j]))
        }
        _ => None,
    }
}

/// Element of a matrix instance from its n x n matrix representative.
pub fn element_of_matrix(
    inst: &Arc<AlgebraInstance>,
    m: &DMatrix<C64>,
) -> Result<Element, BuildError> {
    let n = match inst.cone_oracle() {
        ConeOracle::PsdMatrix { n } => *n,
        _ => return Err(BuildError::InvalidParameter("needs a matrix instance".into())),
    };
    if m.nrows() != n || m.ncols() != n {
        return Err(BuildError::InvalidParameter("matrix has wrong shape".into()));
    }
    let v = DVector::from_fn(n * n, |idx, _| m[(idx / n, idx % n)]);
    inst.element(v).map_err(Into::into)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_hs_axioms_pass() {
        for n in 1..=4 {
            let h = build_matrix_hs(n).unwrap();
            let report = h.algebra().check_axioms();
            assert!(report.passed(), "n={n}:\n{report}");
            assert!(report.worst() < 1e-12);
        }
    }

    #[test]
    fn grid_axioms_pass() {
        let h = build_grid_l2(8, (0.0, 1.0), GridSubalgebra::All).unwrap();
        let report = h.algebra().check_axioms();
        assert!(report.passed(), "{report}");
    }

    #[test]
    fn group_axioms_pass() {
        for order in 1..=6 {
            let h = build_group_algebra(order, GroupKind::Cyclic).unwrap();
            let report = h.algebra().check_axioms();
            assert!(report.passed(), "order={order}:\n{report}");
        }
    }

    #[test]
    fn trig_constant_subalgebra_works() {
        let h = build_grid_l2(8, (0.0, 1.0), GridSubalgebra::Trig(0)).unwrap();
        assert_eq!(h.algebra().a0_len(), 1);
        let report = h.algebra().check_axioms();
        assert!(report.passed(), "{report}");
    }

    #[test]
    fn trig_full_modes_work() {
        // 2k+1 = n: the mode set closes under aliased products
        let h = build_grid_l2(9, (0.0, 1.0), GridSubalgebra::Trig(4)).unwrap();
        let report = h.algebra().check_axioms();
        assert!(report.passed(), "{report}");
    }

    #[test]
    fn trig_partial_modes_refused() {
        match build_grid_l2(16, (0.0, 1.0), GridSubalgebra::Trig(2)) {
            Err(BuildError::TrigSubalgebraNotClosed { violation, .. }) => {
                assert!(violation > 1e-9);
            }
            other => panic!("expected TrigSubalgebraNotClosed, got {other:?}"),
        }
    }

    #[test]
    fn lp_grid_p2_matches_l2_norms() {
        let lp = build_lp_grid(2.0, 16, (0.0, 1.0)).unwrap();
        let l2 = build_grid_l2(16, (0.0, 1.0), GridSubalgebra::All).unwrap();
        let nodes = grid_nodes(16, (0.0, 1.0));
        let f = |t: f64| 1.0 + t * t;
        let a = sample_grid_function(&lp, &nodes, f);
        let b = sample_grid_function(l2.algebra(), &nodes, f);
        assert!((a.norm() - b.norm()).abs() < 1e-12);
    }

    #[test]
    fn lp_grid_unit_norm_is_interval_length() {
        let lp = build_lp_grid(1.0, 16, (0.0, 2.5)).unwrap();
        let one = lp.unit_element().unwrap();
        assert!((one.norm() - 2.5).abs() < 1e-12);
    }

    #[test]
    fn lp_grid_rejects_small_p() {
        assert!(build_lp_grid(0.5, 8, (0.0, 1.0)).is_err());
    }

    #[test]
    fn group_shift_has_unit_bound() {
        let h = build_group_algebra(4, GroupKind::Cyclic).unwrap();
        let shift = h.algebra().basis_element(1);
        let b = crate::hilbert::bounded_element(&h, &shift).unwrap();
        assert!((b.bound - 1.0).abs() < 1e-10, "bound {}", b.bound);
    }
}
