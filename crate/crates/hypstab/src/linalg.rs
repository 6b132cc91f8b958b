//! Dense complex linear algebra on top of nalgebra: full eigendecompositions,
//! ordered Schur forms, spectral projectors and eigenspace restrictions.
//!
//! nalgebra provides the complex Schur iteration; everything that needs an
//! ordering or an invariant-subspace frame (eigenvector back-substitution,
//! Givens reordering, Sylvester solves for projectors) is implemented here.

use crate::error::{Error, Result};
use crate::scalar::{cmod, cmod2, complexify, real, to_f64, CMat, CVec, Cplx, RMat, Real};
use nalgebra::DMatrix;
use num_complex::Complex;

/// Complex Schur decomposition `m = q t q^*` with `t` upper triangular.
pub fn schur<T: Real>(m: &CMat<T>) -> Result<(CMat<T>, CMat<T>)> {
    let n = m.nrows();
    if n == 0 {
        return Ok((CMat::zeros(0, 0), CMat::zeros(0, 0)));
    }
    let sch = m
        .clone()
        .try_schur(T::default_epsilon() * real(16.0), 10_000)
        .ok_or_else(|| Error::Convergence("complex Schur iteration stalled".into()))?;
    let (q, mut t) = sch.unpack();
    // The iteration leaves strictly-lower entries at rounding level; zero them.
    for i in 0..n {
        for j in 0..i {
            t[(i, j)] = Complex::new(T::zero(), T::zero());
        }
    }
    Ok((q, t))
}

/// Full eigendecomposition of a general complex matrix.
pub struct Eigen<T: Real> {
    pub values: Vec<Cplx<T>>,
    /// Column k is a unit eigenvector for `values[k]`.
    pub vectors: CMat<T>,
}

/// Eigenvalues and eigenvectors via Schur form plus triangular back-substitution.
pub fn eigen<T: Real>(m: &CMat<T>) -> Result<Eigen<T>> {
    let n = m.nrows();
    let (q, t) = schur(m)?;
    let scale = t.norm().max(T::default_epsilon());
    let tiny = scale * T::default_epsilon() * real(4.0);
    let mut vectors = CMat::zeros(n, n);
    let mut values = Vec::with_capacity(n);
    for k in 0..n {
        let lam = t[(k, k)];
        values.push(lam);
        // Solve (T - lam I) y = 0 with y_k = 1 by back-substitution.
        let mut y = CVec::<T>::zeros(n);
        y[k] = Complex::new(T::one(), T::zero());
        for i in (0..k).rev() {
            let mut s = Complex::new(T::zero(), T::zero());
            for j in (i + 1)..=k {
                s += t[(i, j)] * y[j];
            }
            let mut d = t[(i, i)] - lam;
            if cmod(d) < tiny {
                // Defective or clustered pair: perturb the pivot to keep the
                // vector finite; the caller judges conditioning separately.
                d = Complex::new(tiny, T::zero());
            }
            y[i] = -s / d;
        }
        let v = &q * y;
        let nv = v.norm();
        vectors.set_column(k, &(v / Complex::new(nv, T::zero())));
    }
    Ok(Eigen { values, vectors })
}

pub fn eigenvalues<T: Real>(m: &CMat<T>) -> Result<Vec<Cplx<T>>> {
    let (_, t) = schur(m)?;
    Ok((0..m.nrows()).map(|i| t[(i, i)]).collect())
}

pub fn eigen_real<T: Real>(m: &RMat<T>) -> Result<Eigen<T>> {
    eigen(&complexify(m))
}

pub fn eigenvalues_real<T: Real>(m: &RMat<T>) -> Result<Vec<Cplx<T>>> {
    eigenvalues(&complexify(m))
}

/// Condition number of the eigenvector matrix; large values flag departure
/// from semi-simplicity.
pub fn eigenvector_condition<T: Real>(e: &Eigen<T>) -> T {
    let svd = e.vectors.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smin <= T::zero() {
        T::max_value().unwrap()
    } else {
        smax / smin
    }
}

pub fn smallest_singular_value<T: Real>(m: &CMat<T>) -> T {
    m.clone().svd(false, false).singular_values.min()
}

/// Schur form reordered so the eigenvalues satisfying `select` occupy the
/// leading `k` diagonal positions. Returns `(q, t, k)`.
pub fn schur_select<T: Real, F: Fn(Cplx<T>) -> bool>(
    m: &CMat<T>,
    select: F,
) -> Result<(CMat<T>, CMat<T>, usize)> {
    let (mut q, mut t) = schur(m)?;
    let n = m.nrows();
    let mut chosen: Vec<bool> = (0..n).map(|i| select(t[(i, i)])).collect();
    let k = chosen.iter().filter(|&&c| c).count();
    // Bubble selected eigenvalues upward with unitary adjacent swaps.
    loop {
        let mut moved = false;
        for i in 0..n.saturating_sub(1) {
            if !chosen[i] && chosen[i + 1] {
                swap_adjacent(&mut q, &mut t, i)?;
                chosen.swap(i, i + 1);
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
    Ok((q, t, k))
}

/// Swap diagonal entries (i, i+1) of the triangular factor by a unitary
/// similarity, updating q accordingly.
fn swap_adjacent<T: Real>(q: &mut CMat<T>, t: &mut CMat<T>, i: usize) -> Result<()> {
    let a = t[(i, i)];
    let b = t[(i, i + 1)];
    let c = t[(i + 1, i + 1)];
    // Eigenvector of [[a, b], [0, c]] for eigenvalue c is (b, c - a).
    let v1 = b;
    let v2 = c - a;
    let r = (cmod2(v1) + cmod2(v2)).sqrt();
    if r <= (cmod(a) + cmod(c) + cmod(b)) * T::default_epsilon() * real(16.0) {
        // a == c and b == 0: nothing to swap.
        return Ok(());
    }
    let rr = Complex::new(r, T::zero());
    let g11 = v1 / rr;
    let g21 = v2 / rr;
    // Unitary G = [[g11, -conj(g21)], [g21, conj(g11)]]; columns orthonormal.
    let g = nalgebra::Matrix2::new(g11, -g21.conj(), g21, g11.conj());
    let n = t.nrows();
    // T <- G^* T G on rows/cols (i, i+1)
    for col in 0..n {
        let x = t[(i, col)];
        let y = t[(i + 1, col)];
        t[(i, col)] = g[(0, 0)].conj() * x + g[(1, 0)].conj() * y;
        t[(i + 1, col)] = g[(0, 1)].conj() * x + g[(1, 1)].conj() * y;
    }
    for row in 0..n {
        let x = t[(row, i)];
        let y = t[(row, i + 1)];
        t[(row, i)] = x * g[(0, 0)] + y * g[(1, 0)];
        t[(row, i + 1)] = x * g[(0, 1)] + y * g[(1, 1)];
    }
    for row in 0..n {
        let x = q[(row, i)];
        let y = q[(row, i + 1)];
        q[(row, i)] = x * g[(0, 0)] + y * g[(1, 0)];
        q[(row, i + 1)] = x * g[(0, 1)] + y * g[(1, 1)];
    }
    t[(i + 1, i)] = Complex::new(T::zero(), T::zero());
    Ok(())
}

/// Invariant-subspace data for the eigenvalues selected by a predicate.
pub struct SubspaceSplit<T: Real> {
    /// Orthonormal frame (n x k) spanning the invariant subspace.
    pub frame: CMat<T>,
    /// Selected eigenvalues (leading Schur diagonal).
    pub values: Vec<Cplx<T>>,
    /// Complementary eigenvalues.
    pub complement: Vec<Cplx<T>>,
    /// Spectral (oblique) projector onto the subspace.
    pub projector: CMat<T>,
}

pub fn invariant_subspace<T: Real, F: Fn(Cplx<T>) -> bool>(
    m: &CMat<T>,
    select: F,
) -> Result<SubspaceSplit<T>> {
    let n = m.nrows();
    let (q, t, k) = schur_select(m, select)?;
    let frame = q.columns(0, k).into_owned();
    let values = (0..k).map(|i| t[(i, i)]).collect();
    let complement = (k..n).map(|i| t[(i, i)]).collect();
    let projector = projector_from_ordered_schur(&q, &t, k)?;
    Ok(SubspaceSplit { frame, values, complement, projector })
}

/// Spectral projector from an ordered Schur form: solve the triangular
/// Sylvester equation T11 Y - Y T22 = T12, then P = Q [[I, Y], [0, 0]] Q^*.
fn projector_from_ordered_schur<T: Real>(q: &CMat<T>, t: &CMat<T>, k: usize) -> Result<CMat<T>> {
    let n = t.nrows();
    let m = n - k;
    let zero = Complex::new(T::zero(), T::zero());
    let mut y = CMat::<T>::zeros(k, m);
    let scale = t.norm().max(T::one());
    for i in (0..k).rev() {
        for j in 0..m {
            let mut rhs = t[(i, k + j)];
            for l in (i + 1)..k {
                rhs -= t[(i, l)] * y[(l, j)];
            }
            for l in 0..j {
                rhs += y[(i, l)] * t[(k + l, k + j)];
            }
            let d = t[(i, i)] - t[(k + j, k + j)];
            if cmod(d) <= scale * T::default_epsilon() * real(64.0) {
                return Err(Error::EigenspaceCluster(format!(
                    "selected and complementary eigenvalues nearly coincide (gap {:.3e})",
                    to_f64(cmod(d))
                )));
            }
            y[(i, j)] = rhs / d;
        }
    }
    let mut p_t = CMat::<T>::zeros(n, n);
    for i in 0..k {
        p_t[(i, i)] = Complex::new(T::one(), T::zero());
        for j in 0..m {
            p_t[(i, k + j)] = y[(i, j)];
        }
    }
    let _ = zero;
    Ok(q * p_t * q.adjoint())
}

/// Group eigenvalue indices whose pairwise distance is below `tol`
/// (single-linkage union-find). Returns groups sorted by the real part of
/// their representative value, then by imaginary part.
pub fn cluster_eigenvalues<T: Real>(values: &[Cplx<T>], tol: T) -> Vec<Vec<usize>> {
    let n = values.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        let mut i = i;
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if cmod(values[i] - values[j]) < tol {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri] = rj;
                }
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    let mut out: Vec<Vec<usize>> = groups.into_values().collect();
    out.sort_by(|a, b| {
        let va = values[a[0]];
        let vb = values[b[0]];
        to_f64(va.re)
            .partial_cmp(&to_f64(vb.re))
            .unwrap()
            .then(to_f64(va.im).partial_cmp(&to_f64(vb.im)).unwrap())
    });
    out
}

/// Restriction of `w` to the invariant subspace of `m` whose eigenvalues lie
/// within `tol` of `center`: returns `L w R` with `R` an orthonormal frame and
/// `L = R^* P` the dual left basis (`L R = I`).
pub struct Restriction<T: Real> {
    pub matrix: CMat<T>,
    pub frame: CMat<T>,
    pub eigenvalue: Cplx<T>,
    pub multiplicity: usize,
}

pub fn restrict_to_eigengroup<T: Real>(
    m: &CMat<T>,
    w: &CMat<T>,
    center: Cplx<T>,
    tol: T,
) -> Result<Restriction<T>> {
    let split = invariant_subspace(m, |lam| cmod(lam - center) < tol)?;
    let mult = split.values.len();
    if mult == 0 {
        return Err(Error::EigenspaceCluster(format!(
            "no eigenvalue within {:.3e} of {:.6e}+{:.6e}i",
            to_f64(tol),
            to_f64(center.re),
            to_f64(center.im)
        )));
    }
    let r = &split.frame;
    let l = r.adjoint() * &split.projector;
    Ok(Restriction { matrix: &l * w * r, frame: r.clone(), eigenvalue: center, multiplicity: mult })
}

/// Largest real part over the spectrum.
pub fn max_re_spectrum<T: Real>(m: &CMat<T>) -> Result<T> {
    let vals = eigenvalues(m)?;
    Ok(vals.iter().fold(real(f64::NEG_INFINITY), |acc: T, v| acc.max(v.re)))
}

/// Largest eigenvalue of the Hermitian part (m + m^*)/2.
pub fn max_hermitian_part<T: Real>(m: &CMat<T>) -> T {
    let h = (m + m.adjoint()) * Complex::new(real::<T>(0.5), T::zero());
    // Hermitian: symmetric eigen on the complex matrix via SVD of shifted form
    // would lose signs; run the general eigensolver and take real parts.
    let vals = eigenvalues(&h).expect("hermitian eigenvalues");
    vals.iter().fold(real(f64::NEG_INFINITY), |acc: T, v| acc.max(v.re))
}

/// Square root and inverse square root of a symmetric positive definite matrix.
pub fn spd_sqrt<T: Real>(m: &RMat<T>, label: &str) -> Result<(RMat<T>, RMat<T>)> {
    let sym = m.clone().symmetric_eigen();
    let min = sym.eigenvalues.min();
    let scale = sym.eigenvalues.max().max(T::one());
    if min <= scale * real(1e-12) {
        return Err(Error::SingularA0(format!(
            "{label}: minimal eigenvalue {:.3e} not positive",
            to_f64(min)
        )));
    }
    let mut d_sqrt = DMatrix::zeros(m.nrows(), m.nrows());
    let mut d_isqrt = DMatrix::zeros(m.nrows(), m.nrows());
    for i in 0..m.nrows() {
        let s = sym.eigenvalues[i].sqrt();
        d_sqrt[(i, i)] = s;
        d_isqrt[(i, i)] = T::one() / s;
    }
    let v = &sym.eigenvectors;
    Ok((v * d_sqrt * v.transpose(), v * d_isqrt * v.transpose()))
}

/// Solve `m x = b` for complex dense matrices.
pub fn solve<T: Real>(m: &CMat<T>, b: &CVec<T>) -> Result<CVec<T>> {
    m.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::Convergence("singular linear system".into()))
}

pub fn determinant<T: Real>(m: &CMat<T>) -> Cplx<T> {
    m.clone().lu().determinant()
}

pub fn inverse_real<T: Real>(m: &RMat<T>, label: &str) -> Result<RMat<T>> {
    m.clone()
        .try_inverse()
        .ok_or_else(|| Error::Domain(format!("{label} is singular")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    type C = Complex<f64>;
    fn c(re: f64, im: f64) -> C {
        Complex::new(re, im)
    }

    fn test_matrix() -> CMat<f64> {
        DMatrix::from_row_slice(
            4,
            4,
            &[
                c(1.0, 0.5),
                c(2.0, -1.0),
                c(0.0, 0.3),
                c(0.2, 0.0),
                c(0.0, 1.0),
                c(-1.0, 0.0),
                c(1.5, 0.0),
                c(0.0, -0.4),
                c(0.5, 0.0),
                c(0.0, 0.0),
                c(2.0, 2.0),
                c(1.0, 0.0),
                c(0.1, 0.1),
                c(0.3, 0.0),
                c(0.0, 0.0),
                c(-2.0, 1.0),
            ],
        )
    }

    #[test]
    fn eigen_satisfies_definition() {
        let m = test_matrix();
        let e = eigen(&m).unwrap();
        for k in 0..4 {
            let v = e.vectors.column(k).into_owned();
            let res = (&m * &v - v * e.values[k]).norm();
            assert!(res < 1e-10, "eigenpair {k} residual {res}");
        }
    }

    #[test]
    fn schur_select_moves_chosen_eigenvalues_first() {
        let m = test_matrix();
        let vals = eigenvalues(&m).unwrap();
        let n_neg = vals.iter().filter(|v| v.re < 0.0).count();
        let (q, t, k) = schur_select(&m, |lam| lam.re < 0.0).unwrap();
        assert_eq!(k, n_neg);
        for i in 0..k {
            assert!(t[(i, i)].re < 0.0);
        }
        let recon = &q * &t * q.adjoint();
        assert!((recon - &m).norm() < 1e-10);
        // Orthonormality of q
        let id = q.adjoint() * &q;
        assert!((id - DMatrix::<C>::identity(4, 4)).norm() < 1e-12);
    }

    #[test]
    fn projector_is_idempotent_and_commutes() {
        let m = test_matrix();
        let split = invariant_subspace(&m, |lam| lam.re < 0.0).unwrap();
        let p = &split.projector;
        assert!((p * p - p).norm() < 1e-10, "idempotent");
        assert!((&m * p - p * &m).norm() < 1e-9, "commutes with m");
        // Projector acts as identity on the frame columns.
        assert!((p * &split.frame - &split.frame).norm() < 1e-10);
    }

    #[test]
    fn restriction_reproduces_block_eigenvalues() {
        // m = block diag(2x2 A, 1x1 B); restriction of w to A-eigenspace of
        // eigenvalue 3 must equal the known coupling block in that basis.
        let m = DMatrix::from_row_slice(
            3,
            3,
            &[c(3.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(3.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)],
        );
        let w = DMatrix::from_row_slice(
            3,
            3,
            &[c(1.0, 0.0), c(0.0, 0.0), c(5.0, 0.0), c(0.0, 0.0), c(2.0, 0.0), c(0.0, 0.0), c(7.0, 0.0), c(0.0, 0.0), c(9.0, 0.0)],
        );
        let r = restrict_to_eigengroup(&m, &w, c(3.0, 0.0), 0.5).unwrap();
        assert_eq!(r.multiplicity, 2);
        // The invariant subspace is span(e1, e2); restriction is the leading
        // 2x2 block of w, whose eigenvalues are 1 and 2.
        let mut eigs: Vec<f64> = eigenvalues(&r.matrix).unwrap().iter().map(|v| v.re).collect();
        eigs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((eigs[0] - 1.0).abs() < 1e-10);
        assert!((eigs[1] - 2.0).abs() < 1e-10);
    }

    #[test]
    fn spd_sqrt_roundtrip() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let (s, si) = spd_sqrt(&m, "test").unwrap();
        assert!((&s * &s - &m).norm() < 1e-12);
        assert!((&s * &si - DMatrix::<f64>::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn clustering_groups_close_values() {
        let vals = vec![c(1.0, 0.0), c(1.0 + 1e-12, 0.0), c(2.0, 0.0)];
        let groups = cluster_eigenvalues(&vals, 1e-8);
        assert_eq!(groups.len(), 2);
        assert_eq!(groups[0].len(), 2);
    }
}
