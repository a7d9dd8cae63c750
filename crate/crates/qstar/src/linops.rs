//! Gram-geometry linear operator substrate.
//!
//! All operators here are plain coordinate matrices together with Hermitian
//! positive-semidefinite gram matrices fixing the inner products of their
//! domain and codomain. Adjoints, operator norms, positivity and square
//! roots are always taken with respect to those grams, never the raw
//! coordinates. A single relative rank tolerance governs every rank /
//! range / kernel decision so that null spaces, range tests and
//! pseudo-inverses stay mutually coherent.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use crate::error::LinopsError;

/// Default relative rank tolerance: singular values below this multiple of
/// the largest one are treated as zero.
pub const DEFAULT_RANK_TOL: f64 = 1e-9;

/// Gram matrices must be Hermitian to this absolute tolerance (relative to
/// their largest entry) to be accepted.
pub const GRAM_HERMITIAN_ATOL: f64 = 1e-12;

pub(crate) fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Max absolute entry of a matrix.
pub(crate) fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().fold(0.0f64, |acc, z| acc.max(z.norm()))
}

pub(crate) fn hermitian_deviation(m: &DMatrix<C64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in i..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

fn hermitianize(m: &DMatrix<C64>) -> DMatrix<C64> {
    (m + m.adjoint()).scale(0.5)
}

fn is_exactly_diagonal(m: &DMatrix<C64>) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if i != j && m[(i, j)] != C64::ZERO {
                return false;
            }
        }
    }
    true
}

/// Product with fast paths for exactly diagonal factors; the shapes grid
/// instances produce. Falls back to the dense product.
pub(crate) fn mul_diag_aware(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    if is_exactly_diagonal(a) {
        let mut out = b.clone();
        for i in 0..b.nrows() {
            let s = a[(i, i)];
            for j in 0..b.ncols() {
                out[(i, j)] *= s;
            }
        }
        return out;
    }
    if is_exactly_diagonal(b) {
        let mut out = a.clone();
        for j in 0..a.ncols() {
            let s = b[(j, j)];
            for i in 0..a.nrows() {
                out[(i, j)] *= s;
            }
        }
        return out;
    }
    a * b
}

/// `L^H G L` computed through sparse column lists when `L` is sparse (at
/// most a few nonzeros per column), as multiplication operators on grid
/// instances are.
pub(crate) fn sandwich(l: &DMatrix<C64>, g: &DMatrix<C64>) -> DMatrix<C64> {
    let ncols = l.ncols();
    let nrows = l.nrows();
    let mut nnz = 0usize;
    for j in 0..ncols {
        for i in 0..nrows {
            if l[(i, j)] != C64::ZERO {
                nnz += 1;
            }
        }
    }
    if nnz <= 2 * ncols {
        let cols: Vec<Vec<(usize, C64)>> = (0..ncols)
            .map(|j| {
                (0..nrows)
                    .filter_map(|i| {
                        let v = l[(i, j)];
                        (v != C64::ZERO).then_some((i, v))
                    })
                    .collect()
            })
            .collect();
        let mut out = DMatrix::<C64>::zeros(ncols, ncols);
        for i in 0..ncols {
            for j in 0..ncols {
                let mut acc = C64::ZERO;
                for &(r1, v1) in &cols[i] {
                    for &(r2, v2) in &cols[j] {
                        let gv = g[(r1, r2)];
                        if gv != C64::ZERO {
                            acc += v1.conj() * gv * v2;
                        }
                    }
                }
                out[(i, j)] = acc;
            }
        }
        return out;
    }
    l.adjoint() * mul_diag_aware(g, l)
}

/// Eigendecomposition of a Hermitian matrix: returns (eigenvalues,
/// eigenvectors) with real eigenvalues in no particular order. The input is
/// symmetrized first. Exactly diagonal matrices are decomposed without
/// iteration, which keeps grid instances cheap at large dimension.
pub(crate) fn hermitian_eigen(m: &DMatrix<C64>) -> (DVector<f64>, DMatrix<C64>) {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "hermitian_eigen needs a square matrix");
    if n == 0 {
        return (DVector::zeros(0), DMatrix::identity(0, 0));
    }
    if is_exactly_diagonal(m) {
        let vals = DVector::from_fn(n, |i, _| m[(i, i)].re);
        return (vals, DMatrix::identity(n, n));
    }
    let h = hermitianize(m);
    let se = h.symmetric_eigen();
    (se.eigenvalues, se.eigenvectors)
}

/// Largest singular value with a fast path for matrices whose nonzero
/// pattern has at most one entry per row and per column (then the columns
/// are mutually orthogonal and the norm is the largest entry magnitude).
pub(crate) fn sigma_max(m: &DMatrix<C64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    let mut row_count = vec![0usize; m.nrows()];
    let mut col_count = vec![0usize; m.ncols()];
    let mut sparse = true;
    let mut best = 0.0f64;
    'scan: for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if m[(i, j)] != C64::ZERO {
                row_count[i] += 1;
                col_count[j] += 1;
                if row_count[i] > 1 || col_count[j] > 1 {
                    sparse = false;
                    break 'scan;
                }
                best = best.max(m[(i, j)].norm());
            }
        }
    }
    if sparse {
        return best;
    }
    match m.clone().try_svd(false, false, 1e-14, 0) {
        Some(svd) => svd.singular_values.max(),
        None => {
            // Rare convergence failure: fall back to the Hermitian square.
            let (vals, _) = hermitian_eigen(&(m.adjoint() * m));
            vals.iter().fold(0.0f64, |a, &v| a.max(v.max(0.0))).sqrt()
        }
    }
}

/// G^{1/2} for a Hermitian PSD gram; eigenvalues below `rank_tol * max` are
/// clipped to zero.
pub(crate) fn herm_sqrt_psd_matrix(g: &DMatrix<C64>, rank_tol: f64) -> DMatrix<C64> {
    let (vals, vecs) = hermitian_eigen(g);
    let vmax = vals.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let cut = rank_tol * vmax;
    let d = DVector::from_fn(vals.len(), |i, _| {
        let v = vals[i];
        if v > cut {
            c(v.sqrt())
        } else {
            C64::ZERO
        }
    });
    &vecs * DMatrix::from_diagonal(&d) * vecs.adjoint()
}

/// G^{-1/2} for a Hermitian positive-definite gram. Errors if the smallest
/// eigenvalue falls below `rank_tol` times the largest.
pub(crate) fn herm_inv_sqrt(g: &DMatrix<C64>, rank_tol: f64, context: &str) -> Result<DMatrix<C64>, LinopsError> {
    let (vals, vecs) = hermitian_eigen(g);
    let vmax = vals.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    if vmax == 0.0 {
        return Err(LinopsError::SingularGram { context: context.to_string() });
    }
    let cut = rank_tol * vmax;
    let mut d = DVector::zeros(vals.len());
    for i in 0..vals.len() {
        if vals[i] <= cut {
            return Err(LinopsError::SingularGram { context: context.to_string() });
        }
        d[i] = c(1.0 / vals[i].sqrt());
    }
    if vecs == DMatrix::identity(vals.len(), vals.len()) {
        // diagonal gram: avoid two dense products
        return Ok(DMatrix::from_diagonal(&d));
    }
    Ok(&vecs * DMatrix::from_diagonal(&d) * vecs.adjoint())
}

/// Moore-Penrose pseudo-inverse of a Hermitian PSD matrix at the shared
/// rank tolerance.
pub(crate) fn pinv_hermitian_psd(g: &DMatrix<C64>, rank_tol: f64) -> DMatrix<C64> {
    let (vals, vecs) = hermitian_eigen(g);
    let vmax = vals.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let cut = rank_tol * vmax;
    let d = DVector::from_fn(vals.len(), |i, _| {
        let v = vals[i];
        if v > cut {
            c(1.0 / v)
        } else {
            C64::ZERO
        }
    });
    &vecs * DMatrix::from_diagonal(&d) * vecs.adjoint()
}

/// Least-squares solve `m x = b` through an SVD with the shared rank
/// tolerance. Returns (solution, rank).
pub(crate) fn lstsq(m: &DMatrix<C64>, b: &DVector<C64>, rank_tol: f64) -> (DVector<C64>, usize) {
    let svd = m
        .clone()
        .try_svd(true, true, 1e-14, 0)
        .expect("svd convergence in least squares solve");
    let smax = svd.singular_values.iter().fold(0.0f64, |a, &v| a.max(v));
    let cut = rank_tol * smax;
    let u = svd.u.as_ref().expect("svd u");
    let vt = svd.v_t.as_ref().expect("svd v_t");
    let mut x = DVector::zeros(m.ncols());
    let mut rank = 0usize;
    let ub = u.adjoint() * b;
    for k in 0..svd.singular_values.len() {
        let s = svd.singular_values[k];
        if s > cut {
            rank += 1;
            let coef = ub[k] / c(s);
            for j in 0..m.ncols() {
                x[j] += vt[(k, j)].conj() * coef;
            }
        }
    }
    (x, rank)
}

/// Minimum eigenvalue of the Hermitian pencil (h, g) with g positive
/// definite: min over x of <h x, x> / <g x, x> in plain coordinates.
pub(crate) fn pencil_min_eig(h: &DMatrix<C64>, g: &DMatrix<C64>, rank_tol: f64) -> Result<f64, LinopsError> {
    let vals = pencil_eigenvalues(h, g, rank_tol)?;
    Ok(vals.iter().fold(f64::INFINITY, |a, &v| a.min(v)))
}

pub(crate) fn pencil_eigenvalues(h: &DMatrix<C64>, g: &DMatrix<C64>, rank_tol: f64) -> Result<DVector<f64>, LinopsError> {
    let w = herm_inv_sqrt(g, rank_tol, "pencil gram")?;
    let b = mul_diag_aware(&mul_diag_aware(&w, &hermitianize(h)), &w);
    let (vals, _) = hermitian_eigen(&b);
    Ok(vals)
}

/// A linear map between two finite-dimensional inner-product spaces, stored
/// as a coordinate matrix plus the grams of its domain and codomain.
#[derive(Debug, Clone)]
pub struct OperatorMatrix {
    pub entries: DMatrix<C64>,
    pub domain_gram: DMatrix<C64>,
    pub codomain_gram: DMatrix<C64>,
}

impl OperatorMatrix {
    /// Builds an operator, checking shapes and that both grams are Hermitian
    /// within `GRAM_HERMITIAN_ATOL` (relative to their largest entry).
    pub fn new(
        entries: DMatrix<C64>,
        domain_gram: DMatrix<C64>,
        codomain_gram: DMatrix<C64>,
    ) -> Result<Self, LinopsError> {
        if domain_gram.nrows() != entries.ncols() || domain_gram.ncols() != entries.ncols() {
            return Err(LinopsError::ShapeMismatch(format!(
                "domain gram is {}x{}, operator has {} columns",
                domain_gram.nrows(),
                domain_gram.ncols(),
                entries.ncols()
            )));
        }
        if codomain_gram.nrows() != entries.nrows() || codomain_gram.ncols() != entries.nrows() {
            return Err(LinopsError::ShapeMismatch(format!(
                "codomain gram is {}x{}, operator has {} rows",
                codomain_gram.nrows(),
                codomain_gram.ncols(),
                entries.nrows()
            )));
        }
        for (g, name) in [(&domain_gram, "domain"), (&codomain_gram, "codomain")] {
            let dev = hermitian_deviation(g);
            let scale = max_abs(g).max(1.0);
            if dev > GRAM_HERMITIAN_ATOL * scale {
                return Err(LinopsError::ShapeMismatch(format!(
                    "{name} gram is not Hermitian (deviation {dev:.3e})"
                )));
            }
        }
        Ok(Self { entries, domain_gram, codomain_gram })
    }

    /// Square operator on a single space with gram `g`.
    pub fn on_space(entries: DMatrix<C64>, g: DMatrix<C64>) -> Result<Self, LinopsError> {
        let gd = g.clone();
        Self::new(entries, gd, g)
    }

    /// Operator in plain coordinates (identity grams).
    pub fn plain(entries: DMatrix<C64>) -> Self {
        let dg = DMatrix::identity(entries.ncols(), entries.ncols());
        let cg = DMatrix::identity(entries.nrows(), entries.nrows());
        Self { entries, domain_gram: dg, codomain_gram: cg }
    }

    pub fn nrows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.entries.ncols()
    }
}

/// Adjoint of `t` with respect to its grams: the matrix `m` with
/// `<t u, v>_cod = <u, m v>_dom` for all u, v. With G_dom possibly singular
/// the defining equation is solved in the least-squares sense and a
/// `SingularGram` error is raised when it is not exactly solvable, i.e.
/// when `t^H G_cod` has components outside the range of `G_dom`.
pub fn adjoint_wrt_gram(t: &OperatorMatrix, rank_tol: f64) -> Result<OperatorMatrix, LinopsError> {
    // G_dom M = T^H G_cod
    let rhs = t.entries.adjoint() * &t.codomain_gram;
    let gd = hermitianize(&t.domain_gram);
    let pinv = pinv_hermitian_psd(&gd, rank_tol);
    let m = &pinv * &rhs;
    let residual = max_abs(&(&gd * &m - &rhs));
    let scale = max_abs(&rhs).max(max_abs(&gd) * max_abs(&m)).max(1e-300);
    if residual > 1e-9 * scale.max(1.0) {
        return Err(LinopsError::SingularGram {
            context: format!("adjoint solve residual {residual:.3e} exceeds tolerance"),
        });
    }
    OperatorMatrix::new(m, t.codomain_gram.clone(), t.domain_gram.clone())
}

/// Operator norm of `t` between its gram geometries: the largest
/// generalized singular value. Requires a positive-definite domain gram.
pub fn operator_norm(t: &OperatorMatrix, rank_tol: f64) -> Result<f64, LinopsError> {
    let w_dom = herm_inv_sqrt(&t.domain_gram, rank_tol, "operator norm domain gram")?;
    let s_cod = herm_sqrt_psd_matrix(&t.codomain_gram, rank_tol);
    let id_cod = DMatrix::identity(t.nrows(), t.nrows());
    let id_dom = DMatrix::identity(t.ncols(), t.ncols());
    let left = if s_cod == id_cod { t.entries.clone() } else { mul_diag_aware(&s_cod, &t.entries) };
    let b = if w_dom == id_dom { left } else { mul_diag_aware(&left, &w_dom) };
    Ok(sigma_max(&b))
}

/// Result of a PSD square root in gram geometry.
#[derive(Debug, Clone)]
pub struct SqrtResult {
    pub sqrt: OperatorMatrix,
    pub is_psd: bool,
    /// Smallest eigenvalue of the input in its gram geometry (before clipping).
    pub min_eig: f64,
    /// Magnitude of the largest negative eigenvalue clipped to zero.
    pub clip_magnitude: f64,
}

/// Unique PSD square root of a self-adjoint operator in its gram geometry.
/// Negative eigenvalues are clipped at zero and reported; when the smallest
/// eigenvalue is below `-1e-8 * ||t||` the result is flagged not PSD but the
/// square root of the clipped operator is still returned.
pub fn hermitian_sqrt_psd(t: &OperatorMatrix, rank_tol: f64) -> Result<SqrtResult, LinopsError> {
    if t.nrows() != t.ncols() {
        return Err(LinopsError::ShapeMismatch("square root needs a square operator".into()));
    }
    let g = hermitianize(&t.domain_gram);
    // self-adjointness w.r.t. the gram: G T must be Hermitian
    let gt = &g * &t.entries;
    let dev = hermitian_deviation(&gt);
    let scale = max_abs(&gt).max(1.0);
    if dev > 1e-9 * scale {
        return Err(LinopsError::NotSelfAdjoint { deviation: dev });
    }
    let w_inv = herm_inv_sqrt(&g, rank_tol, "square root gram")?;
    let w = herm_sqrt_psd_matrix(&g, rank_tol);
    let b = hermitianize(&(&w * &t.entries * &w_inv));
    let (vals, vecs) = hermitian_eigen(&b);
    let vmax = vals.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let min_eig = vals.iter().fold(f64::INFINITY, |a, &v| a.min(v));
    let clip_magnitude = (-min_eig).max(0.0);
    let d = DVector::from_fn(vals.len(), |i, _| c(vals[i].max(0.0).sqrt()));
    let bs = &vecs * DMatrix::from_diagonal(&d) * vecs.adjoint();
    let s = &w_inv * bs * &w;
    let is_psd = min_eig >= -1e-8 * vmax.max(1e-300);
    Ok(SqrtResult {
        sqrt: OperatorMatrix::new(s, t.domain_gram.clone(), t.codomain_gram.clone())?,
        is_psd,
        min_eig,
        clip_magnitude,
    })
}

/// Outcome of a range-membership test for a Hermitian PSD matrix.
#[derive(Debug, Clone)]
pub struct RangeMembership {
    pub in_range: bool,
    pub solution: DVector<C64>,
    pub residual: f64,
}

/// Least-squares solve of `g s = v` for Hermitian PSD `g`; `in_range` holds
/// iff the residual is below `rank_tol * (||g|| ||s|| + ||v||)`.
pub fn range_membership_solve(g: &DMatrix<C64>, v: &DVector<C64>, rank_tol: f64) -> RangeMembership {
    let gh = hermitianize(g);
    let (vals, vecs) = hermitian_eigen(&gh);
    let vmax = vals.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
    let cut = rank_tol * vmax;
    let coords = vecs.adjoint() * v;
    let mut s = DVector::zeros(g.ncols());
    let mut res_sq = 0.0f64;
    for k in 0..vals.len() {
        if vals[k].abs() > cut {
            let coef = coords[k] / c(vals[k]);
            for i in 0..g.ncols() {
                s[i] += vecs[(i, k)] * coef;
            }
        } else {
            // component of v orthogonal to the numerical range
            res_sq += coords[k].norm_sqr();
        }
    }
    let residual = res_sq.sqrt();
    let in_range = residual <= rank_tol * (vmax * s.norm() + v.norm());
    RangeMembership { in_range, solution: s, residual }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cx(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_matrix(n: usize, m: usize, seed: u64) -> DMatrix<C64> {
        // small deterministic generator, good enough for test fixtures
        let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(1);
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        DMatrix::from_fn(n, m, |_, _| cx(next(), next()))
    }

    fn random_pd_gram(n: usize, seed: u64) -> DMatrix<C64> {
        let b = random_matrix(n, n, seed);
        b.adjoint() * &b + DMatrix::identity(n, n).scale(0.5)
    }

    #[test]
    fn adjoint_identity_grams_is_conjugate_transpose() {
        let a = random_matrix(4, 3, 7);
        let t = OperatorMatrix::plain(a.clone());
        let adj = adjoint_wrt_gram(&t, DEFAULT_RANK_TOL).unwrap();
        assert!(max_abs(&(adj.entries - a.adjoint())) < 1e-12);
    }

    #[test]
    fn adjoint_diagonal_gram_diagonal_operator() {
        let w = DMatrix::from_diagonal(&DVector::from_vec(vec![c(1.0), c(2.0), c(0.5)]));
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![cx(1.0, 1.0), cx(0.0, -2.0), cx(3.0, 0.5)]));
        let t = OperatorMatrix::new(d.clone(), w.clone(), w.clone()).unwrap();
        let adj = adjoint_wrt_gram(&t, DEFAULT_RANK_TOL).unwrap();
        // verify the defining identity <T u, v>_w = <u, M v>_w on basis pairs
        for i in 0..3 {
            for j in 0..3 {
                let u = DVector::from_fn(3, |k, _| if k == i { C64::ONE } else { C64::ZERO });
                let v = DVector::from_fn(3, |k, _| if k == j { C64::ONE } else { C64::ZERO });
                let lhs = (v.adjoint() * &w * (&d * &u))[(0, 0)];
                let rhs = ((&adj.entries * &v).adjoint() * &w * &u)[(0, 0)];
                assert!((lhs - rhs).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn double_adjoint_returns_original() {
        let a = random_matrix(5, 5, 21);
        let gd = random_pd_gram(5, 22);
        let gc = random_pd_gram(5, 23);
        let t = OperatorMatrix::new(a.clone(), gd, gc).unwrap();
        let adj = adjoint_wrt_gram(&t, DEFAULT_RANK_TOL).unwrap();
        let back = adjoint_wrt_gram(&adj, DEFAULT_RANK_TOL).unwrap();
        assert!(max_abs(&(back.entries - a)) < 1e-10);
    }

    #[test]
    fn adjoint_reverses_composition() {
        let a = random_matrix(4, 4, 31);
        let b = random_matrix(4, 4, 32);
        let g1 = random_pd_gram(4, 33);
        let g2 = random_pd_gram(4, 34);
        let g3 = random_pd_gram(4, 35);
        let ta = OperatorMatrix::new(a.clone(), g1.clone(), g2.clone()).unwrap();
        let tb = OperatorMatrix::new(b.clone(), g2.clone(), g3.clone()).unwrap();
        let comp = OperatorMatrix::new(&b * &a, g1.clone(), g3.clone()).unwrap();
        let lhs = adjoint_wrt_gram(&comp, DEFAULT_RANK_TOL).unwrap();
        let rhs = adjoint_wrt_gram(&ta, DEFAULT_RANK_TOL).unwrap().entries
            * adjoint_wrt_gram(&tb, DEFAULT_RANK_TOL).unwrap().entries;
        assert!(max_abs(&(lhs.entries - rhs)) < 1e-10);
    }

    #[test]
    fn operator_norm_identity_is_one() {
        let t = OperatorMatrix::plain(DMatrix::identity(4, 4));
        let n = operator_norm(&t, DEFAULT_RANK_TOL).unwrap();
        assert!((n - 1.0).abs() < 1e-12);
    }

    #[test]
    fn operator_norm_diagonal() {
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![c(3.0), c(-4.0)]));
        let t = OperatorMatrix::plain(d);
        let n = operator_norm(&t, DEFAULT_RANK_TOL).unwrap();
        assert!((n - 4.0).abs() < 1e-12);
    }

    #[test]
    fn operator_norm_matches_power_iteration() {
        let a = random_matrix(6, 6, 99);
        let gd = random_pd_gram(6, 100);
        let gc = random_pd_gram(6, 101);
        let t = OperatorMatrix::new(a.clone(), gd.clone(), gc.clone()).unwrap();
        let n = operator_norm(&t, DEFAULT_RANK_TOL).unwrap();
        // power iteration oracle on the generalized eigenproblem
        // G_dom^{-1} A^H G_cod A x = lambda x
        let gd_lu = gd.clone().lu();
        let mut x = DVector::from_fn(6, |i, _| cx(1.0 + i as f64, 0.3 * i as f64));
        let mut lambda = 0.0f64;
        for _ in 0..2000 {
            let y = &a * &x;
            let z = a.adjoint() * (&gc * y);
            let w = gd_lu.solve(&z).unwrap();
            let norm = w.norm();
            lambda = norm;
            x = w.unscale(norm);
        }
        // Rayleigh refinement
        let y = &a * &x;
        let num = (y.adjoint() * &gc * &y)[(0, 0)].re;
        let den = (x.adjoint() * &gd * &x)[(0, 0)].re;
        let oracle = (num / den).sqrt();
        let _ = lambda;
        assert!((n - oracle).abs() <= 1e-8 * oracle.max(1.0), "svd {n} vs power {oracle}");
    }

    #[test]
    fn operator_norm_submultiplicative() {
        for seed in 0..8u64 {
            let a = random_matrix(5, 5, 200 + seed);
            let b = random_matrix(5, 5, 300 + seed);
            let g1 = random_pd_gram(5, 400 + seed);
            let g2 = random_pd_gram(5, 500 + seed);
            let g3 = random_pd_gram(5, 600 + seed);
            let ta = OperatorMatrix::new(a.clone(), g1.clone(), g2.clone()).unwrap();
            let tb = OperatorMatrix::new(b.clone(), g2.clone(), g3.clone()).unwrap();
            let comp = OperatorMatrix::new(&b * &a, g1, g3).unwrap();
            let na = operator_norm(&ta, DEFAULT_RANK_TOL).unwrap();
            let nb = operator_norm(&tb, DEFAULT_RANK_TOL).unwrap();
            let nc = operator_norm(&comp, DEFAULT_RANK_TOL).unwrap();
            assert!(nc <= na * nb * (1.0 + 1e-8));
        }
    }

    #[test]
    fn sqrt_of_diagonal() {
        let t = OperatorMatrix::plain(DMatrix::from_diagonal(&DVector::from_vec(vec![c(4.0), c(9.0)])));
        let r = hermitian_sqrt_psd(&t, DEFAULT_RANK_TOL).unwrap();
        assert!(r.is_psd);
        assert!((r.sqrt.entries[(0, 0)].re - 2.0).abs() < 1e-12);
        assert!((r.sqrt.entries[(1, 1)].re - 3.0).abs() < 1e-12);
    }

    #[test]
    fn sqrt_of_zero_is_zero() {
        let t = OperatorMatrix::plain(DMatrix::zeros(3, 3));
        let r = hermitian_sqrt_psd(&t, DEFAULT_RANK_TOL).unwrap();
        assert!(r.is_psd);
        assert!(max_abs(&r.sqrt.entries) == 0.0);
    }

    #[test]
    fn sqrt_squares_back_and_commutes() {
        let b = random_matrix(5, 5, 77);
        let a = b.adjoint() * &b;
        let g = random_pd_gram(5, 78);
        // make a self-adjoint w.r.t. g: use g^{-1} a which satisfies g (g^{-1} a) = a Hermitian
        let glu = g.clone().lu();
        let mut cols = Vec::new();
        for j in 0..5 {
            cols.push(glu.solve(&a.column(j).into_owned()).unwrap());
        }
        let t_entries = DMatrix::from_columns(&cols);
        let t = OperatorMatrix::on_space(t_entries.clone(), g).unwrap();
        let r = hermitian_sqrt_psd(&t, DEFAULT_RANK_TOL).unwrap();
        assert!(r.is_psd, "min eig {}", r.min_eig);
        let sq = &r.sqrt.entries * &r.sqrt.entries;
        let scale = operator_norm(&t, DEFAULT_RANK_TOL).unwrap();
        assert!(max_abs(&(sq - &t_entries)) <= 1e-8 * scale.max(1.0));
        let comm = &r.sqrt.entries * &t_entries - &t_entries * &r.sqrt.entries;
        assert!(max_abs(&comm) <= 1e-8 * scale.max(1.0));
    }

    #[test]
    fn sqrt_rejects_non_self_adjoint() {
        let t = OperatorMatrix::plain(DMatrix::from_row_slice(2, 2, &[c(0.0), c(1.0), c(0.0), c(0.0)]));
        match hermitian_sqrt_psd(&t, DEFAULT_RANK_TOL) {
            Err(LinopsError::NotSelfAdjoint { .. }) => {}
            other => panic!("expected NotSelfAdjoint, got {other:?}"),
        }
    }

    #[test]
    fn sqrt_flags_indefinite_input() {
        let t = OperatorMatrix::plain(DMatrix::from_diagonal(&DVector::from_vec(vec![c(1.0), c(-1.0)])));
        let r = hermitian_sqrt_psd(&t, DEFAULT_RANK_TOL).unwrap();
        assert!(!r.is_psd);
        assert!((r.min_eig + 1.0).abs() < 1e-12);
        assert!((r.clip_magnitude - 1.0).abs() < 1e-12);
    }

    #[test]
    fn range_membership_examples() {
        let g = DMatrix::from_diagonal(&DVector::from_vec(vec![c(1.0), c(0.0)]));
        let r1 = range_membership_solve(&g, &DVector::from_vec(vec![c(1.0), c(0.0)]), DEFAULT_RANK_TOL);
        assert!(r1.in_range);
        assert!((r1.solution[0].re - 1.0).abs() < 1e-12 && r1.solution[1].norm() < 1e-12);

        let r2 = range_membership_solve(&g, &DVector::from_vec(vec![c(0.0), c(1.0)]), DEFAULT_RANK_TOL);
        assert!(!r2.in_range);
        assert!((r2.residual - 1.0).abs() < 1e-12);
    }

    #[test]
    fn range_membership_constructed_low_rank() {
        let b = random_matrix(3, 5, 55);
        let g = b.adjoint() * &b; // rank 3 PSD 5x5
        let x = random_matrix(5, 1, 56).column(0).into_owned();
        let v = &g * &x;
        let r = range_membership_solve(&g, &v, DEFAULT_RANK_TOL);
        assert!(r.in_range);
        assert!(r.residual < 1e-10);
    }
}
