//! Independent grid eigensolve of the 1-D linearized operator.
//!
//! The quadratic pencil `lambda^2 A u + lambda (A~0 u - (C^1 u)_x) +
//! (-(B^11 u_x)_x + (A~1 u)_x) = 0` about the profile is discretized by
//! fourth-order central differences on [-L, L] with Dirichlet ends, and the
//! rightmost spectrum is located by shift-invert Arnoldi along the imaginary
//! axis. This is a verification path deliberately independent of the Evans
//! integration.

use crate::error::{Error, Result};
use crate::evans::Frequency;
use crate::model::ModelDef;
use crate::profile::Profile;
use crate::scalar::{cmod, real, to_f64, CVec, Cplx, Real};
use nalgebra::DMatrix;
use num_complex::Complex;

/// Complex banded matrix in LAPACK-style band storage with room for fill-in:
/// row index `ku + kl + i - j`, column `j`.
pub struct Banded<T: Real> {
    pub n: usize,
    pub kl: usize,
    pub ku: usize,
    data: DMatrix<Cplx<T>>,
}

impl<T: Real> Banded<T> {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        Self { n, kl, ku, data: DMatrix::zeros(2 * kl + ku + 1, n) }
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: Cplx<T>) {
        debug_assert!(i + self.ku >= j && j + self.kl >= i, "outside band");
        let r = self.ku + self.kl + i - j;
        self.data[(r, j)] += v;
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> Cplx<T> {
        // Upper extent includes the fill-in region (ku + kl) produced by
        // row pivoting during factorization.
        if i + self.ku + self.kl < j || j + self.kl < i {
            Complex::new(T::zero(), T::zero())
        } else {
            self.data[(self.ku + self.kl + i - j, j)]
        }
    }

    /// In-place LU with partial pivoting (gbtrf-style); returns a factor
    /// object sharing the storage.
    pub fn factor(mut self) -> Result<BandedLu<T>> {
        let n = self.n;
        let kl = self.kl;
        let ku_eff = self.kl + self.ku; // fill-in widens the upper band
        let mut pivots = vec![0usize; n];
        for k in 0..n {
            // Pivot search in column k, rows k..=min(k+kl, n-1).
            let i_max = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = cmod(self.get(k, k));
            for i in (k + 1)..=i_max {
                let v = cmod(self.get(i, k));
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == T::zero() {
                return Err(Error::Convergence("banded LU: zero pivot".into()));
            }
            pivots[k] = p;
            if p != k {
                // Swap rows k and p within the band.
                let j_hi = (k + ku_eff).min(n - 1);
                for j in k..=j_hi {
                    let a = self.get(k, j);
                    let b = self.get(p, j);
                    self.set(k, j, b);
                    self.set(p, j, a);
                }
            }
            let pivot = self.get(k, k);
            for i in (k + 1)..=i_max {
                let m = self.get(i, k) / pivot;
                self.set(i, k, m);
                if m != Complex::new(T::zero(), T::zero()) {
                    let j_hi = (k + ku_eff).min(n - 1);
                    for j in (k + 1)..=j_hi {
                        let v = self.get(i, j) - m * self.get(k, j);
                        self.set(i, j, v);
                    }
                }
            }
        }
        Ok(BandedLu { band: self, pivots })
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, v: Cplx<T>) {
        let r = self.ku + self.kl + i - j;
        self.data[(r, j)] = v;
    }
}

pub struct BandedLu<T: Real> {
    band: Banded<T>,
    pivots: Vec<usize>,
}

impl<T: Real> BandedLu<T> {
    pub fn solve(&self, b: &CVec<T>) -> CVec<T> {
        let n = self.band.n;
        let kl = self.band.kl;
        let ku_eff = self.band.kl + self.band.ku;
        let mut x = b.clone();
        // Forward: apply pivots and L.
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                x.swap_rows(k, p);
            }
            let i_max = (k + kl).min(n - 1);
            let xk = x[k];
            for i in (k + 1)..=i_max {
                let m = self.band.get(i, k);
                x[i] -= m * xk;
            }
        }
        // Backward: solve U x = y.
        for k in (0..n).rev() {
            let j_hi = (k + ku_eff).min(n - 1);
            let mut s = x[k];
            for j in (k + 1)..=j_hi {
                s -= self.band.get(k, j) * x[j];
            }
            x[k] = s / self.band.get(k, k);
        }
        x
    }
}

/// Second-order central difference weights. Higher-order central interiors
/// with reduced-order closures at the Dirichlet ends generate spurious
/// right-half-plane boundary modes (the closure is not GKS-stable), so the
/// oracle uses the uniformly second-order scheme and a fine grid instead.
const D1_W2: [f64; 3] = [-0.5, 0.0, 0.5];
const D2_W2: [f64; 3] = [1.0, -2.0, 1.0];

/// The 1-D linearized pencil P(sigma) = L0 + sigma L1 + sigma^2 A as a banded
/// matrix over the interior grid points, plus the banded forms of L1 and A.
pub struct GridPencil<T: Real> {
    pub n_x: usize,
    pub n: usize,
    pub h: T,
    /// Per-node coefficient data for assembling P(sigma).
    b11: Vec<DMatrix<T>>,
    b11_x: Vec<DMatrix<T>>,
    a1t: Vec<DMatrix<T>>,
    a1t_x: Vec<DMatrix<T>>,
    a0t: Vec<DMatrix<T>>,
    c1: Vec<DMatrix<T>>,
    c1_x: Vec<DMatrix<T>>,
    a_wave: Vec<DMatrix<T>>,
}

impl<T: Real> GridPencil<T> {
    /// Sample the profile-linearized coefficients on a uniform interior grid
    /// of `n_x` points.
    pub fn new(model: &ModelDef<T>, profile: &Profile<T>, n_x: usize) -> Result<Self> {
        let n = model.n;
        let l = profile.half_length;
        let h = l * real::<T>(2.0) / real((n_x + 1) as f64);
        let freq0 = Frequency::new(Complex::new(T::zero(), T::zero()), vec![T::zero(); model.d - 1]);
        let mut b11 = Vec::with_capacity(n_x);
        let mut a1t = Vec::with_capacity(n_x);
        let mut a0t = Vec::with_capacity(n_x);
        let mut c1 = Vec::with_capacity(n_x);
        let mut a_wave = Vec::with_capacity(n_x);
        for i in 0..n_x {
            let x = -l + h * real((i + 1) as f64);
            let co = crate::evans::linearized_coeffs(model, profile, x, &freq0)?;
            let u = profile.value_at(x)?;
            b11.push(co.b11);
            a1t.push(co.a_tilde[0].clone());
            a0t.push(co.a0_tilde);
            c1.push(model.coef_c(&u, 0));
            a_wave.push(model.coef_a(&u));
        }
        let ddx = |f: &Vec<DMatrix<T>>| -> Vec<DMatrix<T>> {
            (0..n_x)
                .map(|i| {
                    let im = i.saturating_sub(1);
                    let ip = (i + 1).min(n_x - 1);
                    (&f[ip] - &f[im]) / (h * real((ip - im) as f64))
                })
                .collect()
        };
        let b11_x = ddx(&b11);
        let a1t_x = ddx(&a1t);
        let c1_x = ddx(&c1);
        Ok(Self { n_x, n, h, b11, b11_x, a1t, a1t_x, a0t, c1, c1_x, a_wave })
    }

    fn bandwidth(&self) -> usize {
        self.n + (self.n - 1)
    }

    /// Assemble P(sigma) in banded form. Block row i couples nodes i-2..i+2.
    pub fn assemble(&self, sigma: Cplx<T>) -> Banded<T> {
        let n = self.n;
        let size = n * self.n_x;
        let kw = self.bandwidth();
        let mut band = Banded::zeros(size, kw, kw);
        let h = self.h;
        let h2 = h * h;
        let cplx = |x: T| Complex::new(x, T::zero());
        for i in 0..self.n_x {
            let (d1w, d2w, off): (&[f64], &[f64], isize) = (&D1_W2, &D2_W2, -1);
            // Zeroth-order blocks:
            // sigma^2 A + sigma A~0 + (A~1)_x - sigma (C^1)_x.
            let m0 = self.a_wave[i].map(|v| cplx(v) * sigma * sigma)
                + self.a0t[i].map(|v| cplx(v) * sigma)
                + self.a1t_x[i].map(cplx)
                - self.c1_x[i].map(|v| cplx(v) * sigma);
            for r in 0..n {
                for c in 0..n {
                    band.add(i * n + r, i * n + c, m0[(r, c)]);
                }
            }
            // First-derivative blocks: (A~1 - (B11)_x - sigma C^1) u_x.
            let m1 = self.a1t[i].map(cplx) - self.b11_x[i].map(cplx)
                - self.c1[i].map(|v| cplx(v) * sigma);
            // Second-derivative blocks: -B11 u_xx.
            let m2 = -self.b11[i].map(cplx);
            for (k, (&w1, &w2)) in d1w.iter().zip(d2w.iter()).enumerate() {
                let j = i as isize + off + k as isize;
                if j < 0 || j >= self.n_x as isize {
                    continue; // Dirichlet: u = 0 outside
                }
                let j = j as usize;
                let w1 = real::<T>(w1) / h;
                let w2 = real::<T>(w2) / h2;
                for r in 0..n {
                    for c in 0..n {
                        band.add(i * n + r, j * n + c, m1[(r, c)] * cplx(w1) + m2[(r, c)] * cplx(w2));
                    }
                }
            }
        }
        band
    }

    /// Apply L1 = A~0 - (C^1 .)_x in physical space.
    fn apply_l1(&self, u: &CVec<T>) -> CVec<T> {
        let n = self.n;
        let mut out = CVec::zeros(n * self.n_x);
        let cplx = |x: T| Complex::new(x, T::zero());
        for i in 0..self.n_x {
            let (d1w, off): (&[f64], isize) = (&D1_W2, -1);
            for r in 0..n {
                let mut acc = Complex::new(T::zero(), T::zero());
                for c in 0..n {
                    acc += cplx(self.a0t[i][(r, c)] - self.c1_x[i][(r, c)]) * u[i * n + c];
                }
                for (k, &w1) in d1w.iter().enumerate() {
                    let j = i as isize + off + k as isize;
                    if j < 0 || j >= self.n_x as isize {
                        continue;
                    }
                    let j = j as usize;
                    let w = real::<T>(w1) / self.h;
                    for c in 0..n {
                        acc -= cplx(self.c1[i][(r, c)] * w) * u[j * n + c];
                    }
                }
                out[i * n + r] = acc;
            }
        }
        out
    }

    fn apply_a(&self, u: &CVec<T>) -> CVec<T> {
        let n = self.n;
        let mut out = CVec::zeros(n * self.n_x);
        for i in 0..self.n_x {
            for r in 0..n {
                let mut acc = Complex::new(T::zero(), T::zero());
                for c in 0..n {
                    acc += Complex::new(self.a_wave[i][(r, c)], T::zero()) * u[i * n + c];
                }
                out[i * n + r] = acc;
            }
        }
        out
    }
}

/// Shift-invert Arnoldi on the companion form of the quadratic pencil: Ritz
/// values near each shift, with residual-based convergence filtering.
pub fn rightmost_eigenvalues<T: Real>(
    pencil: &GridPencil<T>,
    shifts: &[Cplx<T>],
    krylov_dim: usize,
    tol: T,
) -> Result<Vec<Cplx<T>>> {
    let size = pencil.n * pencil.n_x;
    let mut found: Vec<Cplx<T>> = Vec::new();
    for &sigma in shifts {
        let lu = pencil.assemble(sigma).factor()?;
        // Companion action: w = (T - sigma)^{-1} r for the linearization
        // T (u, v) = (v, -A^{-1}(L0 u + L1 v)); the solve reduces to
        // P(sigma) w1 = -A (r2 + sigma r1) - L1 r1, w2 = r1 + sigma w1.
        let apply = |r1: &CVec<T>, r2: &CVec<T>| -> (CVec<T>, CVec<T>) {
            let rhs = -(pencil.apply_a(&(r2 + r1 * sigma)) + pencil.apply_l1(r1));
            let w1 = lu.solve(&rhs);
            let w2 = r1 + &w1 * sigma;
            (w1, w2)
        };
        // Arnoldi with modified Gram-Schmidt on the doubled vector.
        let m = krylov_dim.min(2 * size);
        let mut basis: Vec<(CVec<T>, CVec<T>)> = Vec::with_capacity(m + 1);
        let mut hess = DMatrix::<Cplx<T>>::zeros(m + 1, m);
        // Deterministic pseudo-random start vector.
        let mut v1 = CVec::<T>::zeros(size);
        let mut v2 = CVec::<T>::zeros(size);
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut rngf = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            real::<T>(((state >> 11) as f64) / ((1u64 << 53) as f64) - 0.5)
        };
        for i in 0..size {
            v1[i] = Complex::new(rngf(), rngf());
            v2[i] = Complex::new(rngf(), rngf());
        }
        let nrm = (v1.norm_squared() + v2.norm_squared()).sqrt();
        v1 /= Complex::new(nrm, T::zero());
        v2 /= Complex::new(nrm, T::zero());
        basis.push((v1, v2));
        let mut mk = 0;
        for k in 0..m {
            let (w1, w2) = apply(&basis[k].0, &basis[k].1);
            let mut w1 = w1;
            let mut w2 = w2;
            for (j, (b1, b2)) in basis.iter().enumerate() {
                let hjk = b1.dotc(&w1) + b2.dotc(&w2);
                hess[(j, k)] = hjk;
                w1 -= b1 * hjk;
                w2 -= b2 * hjk;
            }
            let nrm = (w1.norm_squared() + w2.norm_squared()).sqrt();
            hess[(k + 1, k)] = Complex::new(nrm, T::zero());
            mk = k + 1;
            if nrm < real(1e-12) {
                break;
            }
            w1 /= Complex::new(nrm, T::zero());
            w2 /= Complex::new(nrm, T::zero());
            basis.push((w1, w2));
        }
        let hk = hess.view((0, 0), (mk, mk)).into_owned();
        let sub = if mk < basis.len() { cmod(hess[(mk, mk - 1)]) } else { T::zero() };
        let eig = crate::linalg::eigen(&hk)?;
        for (idx, theta) in eig.values.iter().enumerate() {
            let tm = cmod(*theta);
            if tm < real(1e-10) {
                continue;
            }
            // Residual estimate |h_{m+1,m}| |last component| / |theta|.
            let last = cmod(eig.vectors[(mk - 1, idx)]);
            if sub * last > tol * tm {
                continue;
            }
            let lam = sigma + Complex::new(T::one(), T::zero()) / theta;
            if found.iter().all(|f| cmod(f - lam) > real::<T>(1e-7) * (T::one() + cmod(lam))) {
                found.push(lam);
            }
        }
    }
    found.sort_by(|a, b| to_f64(b.re).partial_cmp(&to_f64(a.re)).unwrap());
    Ok(found)
}

/// Default shift ladder hugging the imaginary axis.
pub fn default_shifts<T: Real>(tau_max: T, n_shifts: usize) -> Vec<Cplx<T>> {
    let mut out = Vec::new();
    let gamma = real::<T>(0.05);
    out.push(Complex::new(gamma, T::zero()));
    for k in 1..=n_shifts {
        let t = tau_max * real::<T>(k as f64 / n_shifts as f64);
        out.push(Complex::new(gamma, t));
        out.push(Complex::new(gamma, -t));
    }
    out
}

/// Smallest singular value of P(lambda) estimated by inverse power iteration
/// via the banded LU (pseudospectrum probe of the right half plane).
pub fn sigma_min_estimate<T: Real>(pencil: &GridPencil<T>, lambda: Cplx<T>) -> Result<T> {
    let lu = pencil.assemble(lambda).factor()?;
    let size = pencil.n * pencil.n_x;
    let mut v = CVec::<T>::from_element(size, Complex::new(T::one(), T::zero()));
    v /= Complex::new(v.norm(), T::zero());
    let mut inv_norm = T::zero();
    for _ in 0..12 {
        // Alternate P^{-1} and (P^*)^{-1} approximated by conjugate tricks is
        // unnecessary here: power iteration on P^{-1} estimates 1/|smallest
        // eigenvalue|, a lower bound proxy adequate for a clearance sweep.
        let w = lu.solve(&v);
        inv_norm = w.norm();
        v = w / Complex::new(inv_norm, T::zero());
    }
    Ok(T::one() / inv_norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelDef;
    use crate::profile::{solve_profile, SolveOpts};
    use nalgebra::DVector;

    #[test]
    fn banded_lu_matches_dense() {
        let n = 12;
        let mut band = Banded::<f64>::zeros(n, 2, 2);
        let mut dense = DMatrix::<Cplx<f64>>::zeros(n, n);
        let mut state = 99u64;
        let mut rng = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            ((state >> 11) as f64) / ((1u64 << 53) as f64) - 0.5
        };
        for i in 0..n {
            for j in i.saturating_sub(2)..(i + 3).min(n) {
                // Deliberately NOT diagonally dominant so pivoting and
                // fill-in are exercised.
                let v = Complex::new(rng() + if i + 1 == j { 2.5 } else { 0.0 }, rng());
                band.add(i, j, v);
                dense[(i, j)] = v;
            }
        }
        let b = CVec::<f64>::from_fn(n, |i, _| Complex::new(i as f64 + 1.0, -0.5));
        let x_band = band.factor().unwrap().solve(&b);
        let x_dense = dense.lu().solve(&b).unwrap();
        assert!((x_band - x_dense).norm() < 1e-10);
    }

    #[test]
    fn constant_state_spectrum_matches_dispersion() {
        // A constant "profile" makes the grid operator a constant-coefficient
        // pencil; with Dirichlet ends its eigenvalues approach the dispersion
        // roots at xi_1 = k pi / (2L). Check the least-damped branch.
        let m = ModelDef::<f64>::burgers_dw(0.5, 1);
        let u0 = 0.25;
        let l = 30.0;
        let n_x = 400;
        // Constant profile built directly.
        let n_pts = 501;
        let h = 2.0 * l / (n_pts - 1) as f64;
        let xs: Vec<f64> = (0..n_pts).map(|i| -l + h * i as f64).collect();
        let profile = Profile {
            xs: xs.clone(),
            values: vec![DVector::from_vec(vec![u0]); n_pts],
            derivs: vec![DVector::zeros(1); n_pts],
            u_minus: DVector::from_vec(vec![u0]),
            u_plus: DVector::from_vec(vec![u0]),
            delta: 1.0,
            decay_c: 1.0,
            k_checked: 0,
            h,
            half_length: l,
        };
        let pencil = GridPencil::new(&m, &profile, n_x).unwrap();
        let shifts = default_shifts(0.5, 3);
        let eigs = rightmost_eigenvalues(&pencil, &shifts, 40, 1e-8).unwrap();
        assert!(!eigs.is_empty());
        // Exact oracle: the discrete Dirichlet advection-diffusion operator is
        // tridiagonal Toeplitz with eigenvalues
        // nu_k = 2/h^2 - 2 sqrt(1/h^4 - u^2/(4 h^2)) cos(k pi/(N+1)); the
        // pencil roots solve a lambda^2 + lambda + nu_k = 0.
        let a = 0.5;
        let h = 2.0 * l / (n_x + 1) as f64;
        let mut targets = Vec::new();
        for k in 1..=n_x {
            let nu = 2.0 / (h * h)
                - 2.0 * (1.0 / h.powi(4) - u0 * u0 / (4.0 * h * h)).sqrt()
                    * (k as f64 * std::f64::consts::PI / (n_x + 1) as f64).cos();
            let disc = Complex::new(1.0 - 4.0 * a * nu, 0.0).sqrt();
            targets.push((-Complex::new(1.0, 0.0) + disc) / (2.0 * a));
            targets.push((-Complex::new(1.0, 0.0) - disc) / (2.0 * a));
        }
        for lam in eigs.iter().take(6) {
            let best = targets.iter().map(|t| (t - lam).norm()).fold(f64::MAX, f64::min);
            assert!(best < 1e-6, "Ritz value {lam} off the discrete set by {best:.2e}");
        }
    }

    #[test]
    fn stable_profile_translation_eigenvalue() {
        let m = ModelDef::<f64>::burgers_dw(0.2, 2);
        let p = solve_profile(
            &m,
            &DVector::from_vec(vec![0.3]),
            &DVector::from_vec(vec![-0.3]),
            40.0,
            &SolveOpts { n_points: 2001, ..SolveOpts::default() },
        )
        .unwrap();
        let pencil = GridPencil::new(&m, &p, 1024).unwrap();
        let eigs = rightmost_eigenvalues(&pencil, &default_shifts(1.5, 4), 50, 1e-8).unwrap();
        // Exactly one eigenvalue within 1e-3 of the origin (translation),
        // nothing else with Re >= 1e-3.
        let near_zero: Vec<_> = eigs.iter().filter(|l| l.norm() <= 1e-3).collect();
        assert_eq!(near_zero.len(), 1, "eigs near zero: {near_zero:?}");
        for l in &eigs {
            assert!(l.re < 1e-3 || l.norm() <= 1e-3, "unstable eigenvalue {l}");
        }
    }

    #[test]
    fn sigma_min_positive_off_spectrum() {
        let m = ModelDef::<f64>::burgers_dw(0.2, 2);
        let p = solve_profile(
            &m,
            &DVector::from_vec(vec![0.3]),
            &DVector::from_vec(vec![-0.3]),
            30.0,
            &SolveOpts { n_points: 1001, ..SolveOpts::default() },
        )
        .unwrap();
        let pencil = GridPencil::new(&m, &p, 400).unwrap();
        let s = sigma_min_estimate(&pencil, Complex::new(0.5, 0.3)).unwrap();
        assert!(s > 1e-4, "sigma_min = {s:.3e}");
    }
}
