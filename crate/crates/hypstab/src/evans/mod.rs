//! The linearized eigenvalue ODE about a profile, its limiting splitting, and
//! the Evans function.
//!
//! The linearization about the wave, after Laplace transform in t and Fourier
//! transform in the transverse variables, is the first-order system
//! `V_x = G(x, zeta) V` in `V = (u, B^11 u_x)`; its limits `G_pm(zeta)` as
//! `x -> +-infinity` control consistent splitting. The Evans function is the
//! determinant of stable/unstable solution frames matched at x = 0.

mod eval;

pub use eval::{
    translation_mode_residual, write_contour_csv, ContourSample, ContourSpec, EvansOpts,
    EvansSample, EvansSolver, FrameCarrier, S7Opts, S7Report,
};

use crate::dissipativity::kappa;
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::ModelDef;
use crate::profile::Profile;
use crate::scalar::{cmod, complexify, norm2, real, to_f64, CMat, Cplx, RMat, RVec, Real};
use num_complex::Complex;

/// Which endstate a limiting quantity refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Plus,
    Minus,
}

impl Side {
    /// Orientation sign of the doubled boundary-value problem: +G at plus,
    /// -G at minus (both endstates pushed to x -> +infinity).
    pub fn orientation<T: Real>(self) -> T {
        match self {
            Side::Plus => T::one(),
            Side::Minus => -T::one(),
        }
    }
}

/// A frequency point zeta = (lambda, eta) with polar bookkeeping.
#[derive(Clone, Debug, PartialEq)]
pub struct Frequency<T: Real> {
    pub lambda: Cplx<T>,
    pub eta: Vec<T>,
}

impl<T: Real> Frequency<T> {
    pub fn new(lambda: Cplx<T>, eta: Vec<T>) -> Self {
        Self { lambda, eta }
    }

    pub fn gamma(&self) -> T {
        self.lambda.re
    }

    pub fn tau(&self) -> T {
        self.lambda.im
    }

    /// rho = |(tau, gamma, eta)|.
    pub fn rho(&self) -> T {
        let mut s = self.lambda.re * self.lambda.re + self.lambda.im * self.lambda.im;
        for &e in &self.eta {
            s += e * e;
        }
        s.sqrt()
    }

    /// Unit direction (tau_hat, gamma_hat, eta_hat); zero frequency has none.
    pub fn zeta_hat(&self) -> Option<(T, T, Vec<T>)> {
        let r = self.rho();
        if r == T::zero() {
            return None;
        }
        Some((self.tau() / r, self.gamma() / r, self.eta.iter().map(|&e| e / r).collect()))
    }

    pub fn from_polar(rho: T, tau_hat: T, gamma_hat: T, eta_hat: &[T]) -> Self {
        Self {
            lambda: Complex::new(gamma_hat * rho, tau_hat * rho),
            eta: eta_hat.iter().map(|&e| e * rho).collect(),
        }
    }

    /// Membership in M_c: gamma >= -c kappa(|(eta, tau)|) and zeta != 0.
    pub fn in_m_c(&self, c: T) -> bool {
        if self.rho() == T::zero() {
            return false;
        }
        let mut s = self.tau() * self.tau();
        for &e in &self.eta {
            s += e * e;
        }
        self.gamma() >= -c * kappa(s.sqrt())
    }

    /// Linear interpolation toward another frequency (for continuation paths).
    pub fn lerp(&self, other: &Frequency<T>, t: T) -> Frequency<T> {
        let one = T::one();
        Frequency {
            lambda: Complex::new(
                self.lambda.re * (one - t) + other.lambda.re * t,
                self.lambda.im * (one - t) + other.lambda.im * t,
            ),
            eta: self
                .eta
                .iter()
                .zip(&other.eta)
                .map(|(&a, &b)| a * (one - t) + b * t)
                .collect(),
        }
    }
}

/// Profile-corrected coefficients and symbols of the linearized system at one
/// point of the wave.
pub struct LinearizedCoeffs<T: Real> {
    pub a0_tilde: RMat<T>,
    pub a_tilde: Vec<RMat<T>>,
    pub b11: RMat<T>,
    /// S(u, lambda, eta) = i B12(eta) + lambda C^1 - A~^1.
    pub s_mat: CMat<T>,
    /// s(u, lambda, eta) = lambda^2 A - i lambda C2 + B22 + lambda A~0 + i A~2.
    pub s_small: CMat<T>,
}

const COEFF_FD_STEP: f64 = 1e-6;

/// Profile-corrected matrices at a state with profile slope `w = u'`:
/// the quasilinear coefficient derivatives contracted with w.
fn tilde_matrices<T: Real>(
    model: &ModelDef<T>,
    u: &RVec<T>,
    w: &RVec<T>,
) -> Result<(RMat<T>, Vec<RMat<T>>)> {
    let n = model.n;
    let der = model.derivative_matrices(u)?;
    let h = real::<T>(COEFF_FD_STEP);
    let wn = w.norm();
    let mut a_tilde = Vec::with_capacity(model.d);
    // A~^j = A^j - d/du_m [B^{1j}] w  (column m).
    for j in 0..model.d {
        let mut corr = RMat::zeros(n, n);
        if wn > T::zero() {
            for m in 0..n {
                let mut up = u.clone();
                let mut um = u.clone();
                up[m] += h;
                um[m] -= h;
                let db = (model.coef_b(&up, 0, j) - model.coef_b(&um, 0, j)) / (h + h);
                corr.set_column(m, &(db * w));
            }
        }
        a_tilde.push(&der.a_j[j] - corr);
    }
    // A~0 = A0 - (directional derivative of C1^1 along w) - d/du_m[C1^1] w.
    let mut a0_tilde = der.a0.clone();
    if wn > T::zero() {
        let hw = h / wn.max(T::one());
        let up = u + w * hw;
        let um = u - w * hw;
        let n1 = (model.coef_c1(&up, 0) - model.coef_c1(&um, 0)) / (hw + hw);
        a0_tilde -= n1;
        for m in 0..n {
            let mut upm = u.clone();
            let mut umm = u.clone();
            upm[m] += h;
            umm[m] -= h;
            let dc = (model.coef_c1(&upm, 0) - model.coef_c1(&umm, 0)) / (h + h);
            let col = dc * w;
            for l in 0..n {
                a0_tilde[(l, m)] -= col[l];
            }
        }
    }
    Ok((a0_tilde, a_tilde))
}

fn coeffs_at_state<T: Real>(
    model: &ModelDef<T>,
    u: &RVec<T>,
    w: &RVec<T>,
    freq: &Frequency<T>,
) -> Result<LinearizedCoeffs<T>> {
    let (a0_tilde, a_tilde) = tilde_matrices(model, u, w)?;
    let trans = model.transverse_symbols(u, &freq.eta)?;
    let lam = freq.lambda;
    let i = Complex::new(T::zero(), T::one());
    let c1 = model.coef_c(u, 0);
    let s_mat = complexify(&trans.b12) * i + complexify(&c1) * lam - complexify(&a_tilde[0]);
    // A~2(eta) uses the profile-corrected transverse matrices.
    let mut a2_tilde = RMat::zeros(model.n, model.n);
    for j in 1..model.d {
        a2_tilde += &a_tilde[j] * freq.eta[j - 1];
    }
    let a_wave = model.coef_a(u);
    let s_small = complexify(&a_wave) * (lam * lam) - complexify(&trans.c2) * (i * lam)
        + complexify(&trans.b22)
        + complexify(&a0_tilde) * lam
        + complexify(&a2_tilde) * i;
    Ok(LinearizedCoeffs {
        a0_tilde,
        a_tilde,
        b11: model.coef_b(u, 0, 0),
        s_mat,
        s_small,
    })
}

/// Linearized coefficients at a point x of the profile (cubic interpolation
/// between nodes).
pub fn linearized_coeffs<T: Real>(
    model: &ModelDef<T>,
    profile: &Profile<T>,
    x: T,
    freq: &Frequency<T>,
) -> Result<LinearizedCoeffs<T>> {
    let u = profile.value_at(x)?;
    let w = profile.deriv_at(x)?;
    coeffs_at_state(model, &u, &w, freq)
}

fn assemble_g<T: Real>(co: &LinearizedCoeffs<T>, s_x: &CMat<T>) -> Result<CMat<T>> {
    let n = co.b11.nrows();
    let b11_inv = complexify(&crate::linalg::inverse_real(&co.b11, "B11")?);
    let g12 = b11_inv.clone();
    let g21 = &co.s_small - s_x;
    let g22 = -(&co.s_mat * &b11_inv);
    let mut g = CMat::<T>::zeros(2 * n, 2 * n);
    for r in 0..n {
        for c in 0..n {
            g[(r, n + c)] = g12[(r, c)];
            g[(n + r, c)] = g21[(r, c)];
            g[(n + r, n + c)] = g22[(r, c)];
        }
    }
    Ok(g)
}

/// The 2n x 2n coefficient matrix G(x, zeta) of the first-order system, with
/// S_x by centered finite differences along the profile.
pub fn ode_matrix<T: Real>(
    model: &ModelDef<T>,
    profile: &Profile<T>,
    x: T,
    freq: &Frequency<T>,
) -> Result<CMat<T>> {
    let co = linearized_coeffs(model, profile, x, freq)?;
    let h = profile.h;
    let l = profile.half_length;
    let (xp, xm) = if x + h > l {
        (x, x - h)
    } else if x - h < -l {
        (x + h, x)
    } else {
        (x + h, x - h)
    };
    let sp = linearized_coeffs(model, profile, xp, freq)?.s_mat;
    let sm = linearized_coeffs(model, profile, xm, freq)?.s_mat;
    let s_x = (sp - sm) / Complex::new(xp - xm, T::zero());
    assemble_g(&co, &s_x)
}

/// Limiting coefficient matrix G_pm(zeta) at an endstate (u' = 0, S_x = 0).
pub fn limit_matrix<T: Real>(
    model: &ModelDef<T>,
    endstate: &RVec<T>,
    freq: &Frequency<T>,
) -> Result<CMat<T>> {
    let w = RVec::zeros(model.n);
    let co = coeffs_at_state(model, endstate, &w, freq)?;
    let zero = CMat::zeros(model.n, model.n);
    assemble_g(&co, &zero)
}

/// Consistent-splitting data of a limiting matrix, with the slow-mode
/// expansion matrices of the doubled (outward-oriented) system.
pub struct SplittingData<T: Real> {
    pub g: CMat<T>,
    pub n_stable: usize,
    pub m_unstable: usize,
    /// Orthonormal frame of the stable subspace of G.
    pub stable_frame: CMat<T>,
    /// Orthonormal frame of the unstable subspace of G.
    pub unstable_frame: CMat<T>,
    /// Distance of the spectrum from the imaginary axis.
    pub margin: T,
    /// Slow-mode first-order eigenvalues of the outward-oriented system.
    pub mu1: Vec<Cplx<T>>,
    /// Slow-mode expansion matrices H0, H1 (outward orientation, checked basis).
    pub h0: CMat<T>,
    pub h1: CMat<T>,
}

/// Slow-mode matrices H0, H1 for the outward-oriented endstate system at
/// direction zeta-hat. `lambda_hat` and `eta_hat` need not be normalized;
/// H0 is homogeneous of degree 1 and H1 of degree 2 in them.
pub fn slow_mode_matrices<T: Real>(
    model: &ModelDef<T>,
    endstate: &RVec<T>,
    side: Side,
    lambda_hat: Cplx<T>,
    eta_hat: &[T],
) -> Result<(CMat<T>, CMat<T>)> {
    let n = model.n;
    let der = model.derivative_matrices(endstate)?;
    let (_, isq) = linalg::spd_sqrt(&der.a0, "A0")?;
    let check = |m: &RMat<T>| complexify(&(&isq * m * &isq));
    let trans = model.transverse_symbols(endstate, eta_hat)?;
    let a1c = check(&der.a_j[0]);
    let mut a2 = RMat::zeros(n, n);
    for j in 1..model.d {
        a2 += &der.a_j[j] * eta_hat[j - 1];
    }
    let a2c = check(&a2);
    let a1c_inv = a1c
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Splitting("checked A^1 not invertible".into()))?;
    let i = Complex::new(T::zero(), T::one());
    let eye = CMat::<T>::identity(n, n);
    let sgn = Complex::new(side.orientation::<T>(), T::zero());
    let h0 = -(&a1c_inv * (&eye * lambda_hat + a2c * i)) * sgn;
    // B'(zeta-hat) = -lambda^2 A + i lambda C2 - B22, in the checked basis.
    let a_wave = model.coef_a(endstate);
    let bprime = check(&a_wave) * (-lambda_hat * lambda_hat) + check(&trans.c2) * (i * lambda_hat)
        - check(&trans.b22);
    let b11c = check(&model.coef_b(endstate, 0, 0));
    let b12c = check(&trans.b12);
    let c1c = check(&model.coef_c(endstate, 0));
    let h1 = (&h0 * &h0 * &a1c_inv * b11c + &a1c_inv * bprime) * sgn
        + &h0 * &a1c_inv * (b12c * i + c1c * lambda_hat);
    Ok((h0, h1))
}

/// Eigendecomposition of G_pm(zeta) into stable/unstable subspaces plus
/// slow-mode expansion data.
pub fn limit_splitting<T: Real>(
    model: &ModelDef<T>,
    endstate: &RVec<T>,
    side: Side,
    freq: &Frequency<T>,
    c_param: T,
) -> Result<SplittingData<T>> {
    if freq.rho() == T::zero() {
        return Err(Error::Path("limit splitting undefined at zeta = 0".into()));
    }
    if !freq.in_m_c(c_param) {
        return Err(Error::Path(format!(
            "zeta outside M_c: gamma = {:.3e}, c = {:.3e}",
            to_f64(freq.gamma()),
            to_f64(c_param)
        )));
    }
    let g = limit_matrix(model, endstate, freq)?;
    let scale = g.norm().max(T::one());
    let values = linalg::eigenvalues(&g)?;
    let margin = values.iter().fold(real::<T>(f64::INFINITY), |a: T, v| a.min(v.re.abs()));
    if margin <= scale * real(1e-12) {
        return Err(Error::ImaginaryAxisEigenvalue {
            witness: format!(
                "lambda = {:.6e}+{:.6e}i, eta = {:?}",
                to_f64(freq.gamma()),
                to_f64(freq.tau()),
                freq.eta.iter().map(|&e| to_f64(e)).collect::<Vec<_>>()
            ),
            margin: to_f64(margin),
        });
    }
    let stable = linalg::invariant_subspace(&g, |v| v.re < T::zero())?;
    let unstable = linalg::invariant_subspace(&g, |v| v.re > T::zero())?;
    let n_stable = stable.values.len();
    let m_unstable = unstable.values.len();

    let (tau_hat, gamma_hat, eta_hat) = freq.zeta_hat().expect("nonzero frequency");
    let lam_hat = Complex::new(gamma_hat, tau_hat);
    let (h0, h1) = slow_mode_matrices(model, endstate, side, lam_hat, &eta_hat)?;
    // mu1: eigenvalues of -+ (A^1)^{-1} (lambda-hat A^0 + i A2(eta-hat)),
    // similar to H0.
    let mu1 = linalg::eigenvalues(&h0)?;
    Ok(SplittingData {
        g,
        n_stable,
        m_unstable,
        stable_frame: stable.frame,
        unstable_frame: unstable.frame,
        margin,
        mu1,
        h0,
        h1,
    })
}

#[derive(Clone, Debug)]
pub struct SlowModeReport<T: Real> {
    /// Max residual per rho sample.
    pub residuals: Vec<(T, T)>,
    /// Fitted error order (log-log slope).
    pub order: T,
}

/// Compare the slow eigenvalues of the outward-oriented endstate matrix
/// against rho * spec(H0 + rho H1); returns the fitted error order.
pub fn slow_mode_expansion_check<T: Real>(
    model: &ModelDef<T>,
    endstate: &RVec<T>,
    side: Side,
    tau_hat: T,
    gamma_hat: T,
    eta_hat: &[T],
    rho_list: &[T],
) -> Result<SlowModeReport<T>> {
    let lam_hat = Complex::new(gamma_hat, tau_hat);
    let (h0, h1) = slow_mode_matrices(model, endstate, side, lam_hat, eta_hat)?;
    let sgn = side.orientation::<T>();
    let mut residuals = Vec::new();
    let mut lx = Vec::new();
    let mut ly = Vec::new();
    for &rho in rho_list {
        if rho == T::zero() {
            continue;
        }
        let freq = Frequency::from_polar(rho, tau_hat, gamma_hat, eta_hat);
        let g = limit_matrix(model, endstate, &freq)? * Complex::new(sgn, T::zero());
        let eigs = linalg::eigenvalues(&g)?;
        let hmat = &h0 + &h1 * Complex::new(rho, T::zero());
        let pred: Vec<Cplx<T>> =
            linalg::eigenvalues(&hmat)?.iter().map(|v| v * Complex::new(rho, T::zero())).collect();
        // Assign each predicted slow value its nearest distinct eigenvalue of
        // the oriented limit matrix (predictions identify the slow group).
        let mut used = vec![false; eigs.len()];
        let mut max_res = T::zero();
        for p in &pred {
            let mut best: Option<(usize, T)> = None;
            for (j, e) in eigs.iter().enumerate() {
                if used[j] {
                    continue;
                }
                let dist = cmod(e - p);
                if best.map_or(true, |(_, bd)| dist < bd) {
                    best = Some((j, dist));
                }
            }
            let (j, dist) =
                best.ok_or_else(|| Error::BranchMatch("more predictions than eigenvalues".into()))?;
            used[j] = true;
            max_res = max_res.max(dist);
        }
        residuals.push((rho, max_res));
        if max_res > real(1e-14) {
            lx.push(rho.ln());
            ly.push(max_res.ln());
        }
    }
    let order = if lx.len() >= 2 {
        let (_, slope, _) = crate::scalar::linear_fit(&lx, &ly);
        slope
    } else {
        real(f64::INFINITY)
    };
    Ok(SlowModeReport { residuals, order })
}

#[derive(Clone, Debug)]
pub struct GlancingSignReport<T: Real> {
    /// Critical longitudinal wavenumbers found (imaginary eigenvalues of H0).
    pub xi1: Vec<T>,
    /// Normalized margin c: the check passes when c > 0.
    pub margin: T,
}

/// Sign condition at a glancing-type frequency: for each purely imaginary
/// eigenvalue i xi_1 of H0(i tau, eta), the restriction of A-check^1 H1 to the
/// eigenspace of tau in -A-check(xi) must have definite real part; returns the
/// normalized margin.
pub fn glancing_sign_check<T: Real>(
    model: &ModelDef<T>,
    endstate: &RVec<T>,
    side: Side,
    tau: T,
    eta: &[T],
) -> Result<GlancingSignReport<T>> {
    let zmag = (tau * tau + eta.iter().fold(T::zero(), |a, &e| a + e * e)).sqrt();
    if zmag == T::zero() {
        return Err(Error::Domain("(tau, eta) must be nonzero".into()));
    }
    let n = model.n;
    let lam_hat = Complex::new(T::zero(), tau);
    let (h0, h1) = slow_mode_matrices(model, endstate, side, lam_hat, eta)?;
    let h0_scale = h0.norm().max(T::one());
    let eigs = linalg::eigenvalues(&h0)?;
    let mut xi1s: Vec<T> = Vec::new();
    for v in &eigs {
        if v.re.abs() <= real::<T>(1e-8) * h0_scale {
            let xi = v.im;
            if !xi1s.iter().any(|&x| (x - xi).abs() <= real::<T>(1e-8) * h0_scale) {
                xi1s.push(xi);
            }
        }
    }
    if xi1s.is_empty() {
        return Err(Error::NoImaginaryEigenvalue);
    }
    let der = model.derivative_matrices(endstate)?;
    let (_, isq) = linalg::spd_sqrt(&der.a0, "A0")?;
    let a1c = complexify(&(&isq * &der.a_j[0] * &isq));
    let sgn = side.orientation::<T>();
    let mut margin = real::<T>(f64::INFINITY);
    for &xi1 in &xi1s {
        // tau must be an eigenvalue of -A-check(xi), xi = (+-xi1, eta).
        let mut xi_full: Vec<T> = vec![sgn * xi1];
        xi_full.extend_from_slice(eta);
        let mut a_dir = RMat::zeros(n, n);
        for (j, aj) in der.a_j.iter().enumerate() {
            a_dir += aj * xi_full[j];
        }
        let neg_acheck = complexify(&(-(&isq * a_dir * &isq)));
        let scale = neg_acheck.norm().max(T::one());
        let target = Complex::new(tau, T::zero());
        let restr = linalg::restrict_to_eigengroup(
            &neg_acheck,
            &(&a1c * &h1),
            target,
            real::<T>(1e-6) * scale,
        )
        .map_err(|_| {
            Error::BranchMatch(format!(
                "tau = {:.6e} is not an eigenvalue of -A-check(xi)",
                to_f64(tau)
            ))
        })?;
        let oriented = &restr.matrix * Complex::new(sgn, T::zero());
        let max_re = linalg::max_re_spectrum(&oriented)?;
        let c = -max_re / norm2(&{
            let mut v = vec![xi1];
            v.extend_from_slice(eta);
            v
        });
        margin = margin.min(c);
    }
    Ok(GlancingSignReport { xi1: xi1s, margin })
}
