//! Evans function evaluation: analytic frame continuation, stiffness-safe
//! integration of the solution frames, contour winding numbers, and the
//! composite spectral-stability check.
//!
//! Frames at the integration endpoints are continued in the frequency by the
//! projector-transport rule F' = (dP) P F (P the spectral projector), which
//! keeps the frame analytic in the frequency; the x-integration renormalizes
//! by QR with the triangular determinants accumulated, so the reported value
//! retains the analyticity of the underlying determinant.

use super::{limit_matrix, Frequency, Side};
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::ModelDef;
use crate::ode::{integrate_adaptive, AdaptiveOpts};
use crate::profile::{second_derivative, Profile};
use crate::scalar::{cmod, real, to_f64, CMat, CVec, Cplx, Real};
use num_complex::Complex;
use std::io::Write;

#[derive(Clone, Copy, Debug)]
pub struct EvansOpts<T> {
    /// Integration endpoints +-L (defaults to the profile half-length).
    pub l_int: T,
    pub rtol: T,
    pub atol: T,
    /// x-length between QR renormalizations.
    pub renorm_every: T,
    /// Real spectral parameter of the continuation base point.
    pub base_gamma: T,
    /// Maximal projector change per transport substep.
    pub kato_step: T,
    /// Resolvent-region parameter c of M_c.
    pub c_param: T,
}

impl<T: Real> Default for EvansOpts<T> {
    fn default() -> Self {
        Self {
            l_int: real(40.0),
            rtol: real(1e-10),
            atol: real(1e-12),
            renorm_every: real(4.0),
            base_gamma: real(1.0),
            kato_step: real(0.1),
            c_param: real(0.1),
        }
    }
}

/// Evans value in log form: D = exp(ln_abs) * exp(i arg).
#[derive(Clone, Copy, Debug)]
pub struct EvansSample<T: Real> {
    pub ln_abs: T,
    pub arg: T,
}

impl<T: Real> EvansSample<T> {
    /// Value rescaled by exp(-ln_ref) (log-safe comparison across samples).
    pub fn value_scaled(&self, ln_ref: T) -> Cplx<T> {
        let m = (self.ln_abs - ln_ref).exp();
        Complex::new(m * self.arg.cos(), m * self.arg.sin())
    }
}

/// Frames pinned to a frequency, produced by analytic continuation from the
/// solver base point.
#[derive(Clone, Debug)]
pub struct FrameCarrier<T: Real> {
    pub freq: Frequency<T>,
    plus: CMat<T>,
    minus: CMat<T>,
}

pub struct EvansSolver<'a, T: Real> {
    pub model: &'a ModelDef<T>,
    pub profile: &'a Profile<T>,
    pub opts: EvansOpts<T>,
    pub n_stable: usize,
    pub m_unstable: usize,
    base: FrameCarrier<T>,
}

impl<'a, T: Real> EvansSolver<'a, T> {
    pub fn new(
        model: &'a ModelDef<T>,
        profile: &'a Profile<T>,
        opts: EvansOpts<T>,
    ) -> Result<Self> {
        let eta0 = vec![T::zero(); model.d - 1];
        let base_freq = Frequency::new(Complex::new(opts.base_gamma, T::zero()), eta0);
        let (p_plus, n_stable) = stable_projector(model, profile, &base_freq, Side::Plus)?;
        let (p_minus, m_unstable) = stable_projector(model, profile, &base_freq, Side::Minus)?;
        if n_stable + m_unstable != 2 * model.n {
            return Err(Error::Splitting(format!(
                "dim S+ = {n_stable}, dim U- = {m_unstable}, expected sum {}",
                2 * model.n
            )));
        }
        // Orthonormal frames of the projector ranges at the base point.
        let plus = projector_frame(&p_plus, n_stable)?;
        let minus = projector_frame(&p_minus, m_unstable)?;
        Ok(Self {
            model,
            profile,
            opts,
            n_stable,
            m_unstable,
            base: FrameCarrier { freq: base_freq, plus, minus },
        })
    }

    pub fn base_carrier(&self) -> FrameCarrier<T> {
        self.base.clone()
    }

    /// Continue the frames along the straight segment to `to`, splitting the
    /// segment until each projector increment is below the configured step.
    pub fn transport(&self, from: &FrameCarrier<T>, to: &Frequency<T>) -> Result<FrameCarrier<T>> {
        let mut plus = from.plus.clone();
        let mut minus = from.minus.clone();
        let (mut pp0, np) = stable_projector(self.model, self.profile, &from.freq, Side::Plus)?;
        let (mut pm0, nm) = stable_projector(self.model, self.profile, &from.freq, Side::Minus)?;
        if np != self.n_stable || nm != self.m_unstable {
            return Err(Error::Splitting("splitting dimensions changed at path start".into()));
        }
        let mut t0 = T::zero();
        let mut dt = T::one();
        let max_halvings = 48;
        while t0 < T::one() {
            let mut t1 = (t0 + dt).min(T::one());
            let mut halvings = 0;
            let (pp1, pm1) = loop {
                let f1 = from.freq.lerp(to, t1);
                let (pp1, np1) = stable_projector(self.model, self.profile, &f1, Side::Plus)?;
                let (pm1, nm1) = stable_projector(self.model, self.profile, &f1, Side::Minus)?;
                let step_ok = np1 == self.n_stable
                    && nm1 == self.m_unstable
                    && (&pp1 - &pp0).norm() <= self.opts.kato_step
                    && (&pm1 - &pm0).norm() <= self.opts.kato_step;
                if step_ok {
                    break (pp1, pm1);
                }
                halvings += 1;
                if halvings > max_halvings {
                    return Err(Error::Path(format!(
                        "projector transport stalled near t = {:.6}",
                        to_f64(t0)
                    )));
                }
                t1 = t0 + (t1 - t0) * real::<T>(0.5);
            };
            // Kato step F <- P1 (F + (P1 - P0) P0 F).
            plus = &pp1 * (&plus + (&pp1 - &pp0) * (&pp0 * &plus));
            minus = &pm1 * (&minus + (&pm1 - &pm0) * (&pm0 * &minus));
            dt = ((t1 - t0) * real::<T>(2.0)).min(T::one());
            t0 = t1;
            pp0 = pp1;
            pm0 = pm1;
        }
        Ok(FrameCarrier { freq: to.clone(), plus, minus })
    }

    /// Evaluate the Evans determinant at the carrier frequency: integrate the
    /// stable frame from +L and the unstable frame from -L toward x = 0 and
    /// take the matched determinant (log form, with all renormalization
    /// factors reapplied).
    pub fn eval(&self, carrier: &FrameCarrier<T>) -> Result<EvansSample<T>> {
        let n2 = 2 * self.model.n;
        let (v_plus, log_plus) = self.integrate_leg(&carrier.freq, &carrier.plus, self.opts.l_int)?;
        let (v_minus, log_minus) =
            self.integrate_leg(&carrier.freq, &carrier.minus, -self.opts.l_int)?;
        let mut full = CMat::<T>::zeros(n2, n2);
        for c in 0..self.n_stable {
            full.set_column(c, &v_plus.column(c).into_owned());
        }
        for c in 0..self.m_unstable {
            full.set_column(self.n_stable + c, &v_minus.column(c).into_owned());
        }
        let det = linalg::determinant(&full);
        let dm = cmod(det);
        if dm == T::zero() {
            return Ok(EvansSample { ln_abs: real(f64::NEG_INFINITY), arg: T::zero() });
        }
        // Normalize by the analytic exponential growth of the limiting
        // systems: the stable group of G_+ expands backward from +L, the
        // unstable group of G_- expands forward from -L. The compensating
        // factor exp(L (tr G+|S - tr G-|U)) is analytic and nonvanishing, so
        // zeros and winding numbers are unchanged while |D| becomes
        // comparable across samples and robust in L.
        let growth = self.growth_exponent(&carrier.freq)?;
        let l = self.opts.l_int;
        let mut arg = det.im.atan2(det.re) + log_plus.1 + log_minus.1 + l * growth.im;
        let pi = T::pi();
        let two_pi = pi + pi;
        while arg > pi {
            arg -= two_pi;
        }
        while arg <= -pi {
            arg += two_pi;
        }
        Ok(EvansSample { ln_abs: dm.ln() + log_plus.0 + log_minus.0 + l * growth.re, arg })
    }

    /// tr G_+ restricted to its stable group minus tr G_- restricted to its
    /// unstable group (an analytic function of the frequency on M_c).
    fn growth_exponent(&self, freq: &Frequency<T>) -> Result<Cplx<T>> {
        let gp = limit_matrix(self.model, &self.profile.u_plus, freq)?;
        let gm = limit_matrix(self.model, &self.profile.u_minus, freq)?;
        let zero = Complex::new(T::zero(), T::zero());
        let sp = linalg::eigenvalues(&gp)?
            .into_iter()
            .filter(|v| v.re < T::zero())
            .fold(zero, |a, v| a + v);
        let su = linalg::eigenvalues(&gm)?
            .into_iter()
            .filter(|v| v.re > T::zero())
            .fold(zero, |a, v| a + v);
        Ok(sp - su)
    }

    /// Integrate the frame from x = from toward x = 0 with chunked QR
    /// renormalization; returns the frame at 0 and the accumulated complex
    /// log-determinant of the triangular factors.
    fn integrate_leg(
        &self,
        freq: &Frequency<T>,
        frame: &CMat<T>,
        from: T,
    ) -> Result<(CMat<T>, (T, T))> {
        let n2 = 2 * self.model.n;
        let k = frame.ncols();
        let flat = |m: &CMat<T>| {
            CVec::<T>::from_iterator(n2 * k, m.column_iter().flat_map(|c| c.iter().cloned().collect::<Vec<_>>()))
        };
        let unflat = |v: &CVec<T>| CMat::<T>::from_iterator(n2, k, v.iter().cloned());
        let rhs = |x: T, y: &CVec<T>| -> CVec<T> {
            let m = unflat(y);
            match super::ode_matrix(self.model, self.profile, x, freq) {
                Ok(g) => flat(&(g * m)),
                Err(_) => CVec::zeros(n2 * k),
            }
        };
        let opts = AdaptiveOpts {
            rtol: self.opts.rtol,
            atol: self.opts.atol,
            h_init: real(1e-3),
            h_max: real(0.25),
            max_steps: 20_000_000,
        };
        let mut x = from;
        let mut m = frame.clone();
        let mut log_abs = T::zero();
        let mut log_arg = T::zero();
        let dir = if from > T::zero() { -T::one() } else { T::one() };
        while x != T::zero() {
            let x_next = if from > T::zero() {
                (x - self.opts.renorm_every).max(T::zero())
            } else {
                (x + self.opts.renorm_every).min(T::zero())
            };
            let y = integrate_adaptive(&rhs, x, x_next, flat(&m), &opts, &mut |_, _| {})?;
            m = unflat(&y);
            // QR renormalization with determinant bookkeeping.
            let qr = m.clone().qr();
            let q = qr.q();
            let r = qr.r();
            for i in 0..k {
                let rii = r[(i, i)];
                let a = cmod(rii);
                if a == T::zero() {
                    return Err(Error::IntegrationBlowup(to_f64(x_next)));
                }
                log_abs += a.ln();
                log_arg += rii.im.atan2(rii.re);
            }
            m = q;
            x = x_next;
            let _ = dir;
        }
        Ok((m, (log_abs, log_arg)))
    }
}

/// Spectral projector of the stable subspace of G_+ (side Plus) or the
/// unstable subspace of G_- (side Minus), plus its rank.
fn stable_projector<T: Real>(
    model: &ModelDef<T>,
    profile: &Profile<T>,
    freq: &Frequency<T>,
    side: Side,
) -> Result<(CMat<T>, usize)> {
    let endstate = match side {
        Side::Plus => &profile.u_plus,
        Side::Minus => &profile.u_minus,
    };
    let g = limit_matrix(model, endstate, freq)?;
    let scale = g.norm().max(T::one());
    let values = linalg::eigenvalues(&g)?;
    let margin = values.iter().fold(real::<T>(f64::INFINITY), |a: T, v| a.min(v.re.abs()));
    if margin <= scale * real(1e-11) {
        return Err(Error::ImaginaryAxisEigenvalue {
            witness: format!(
                "lambda = {:.4e}+{:.4e}i at {side:?}",
                to_f64(freq.gamma()),
                to_f64(freq.tau())
            ),
            margin: to_f64(margin),
        });
    }
    let split = match side {
        Side::Plus => linalg::invariant_subspace(&g, |v| v.re < T::zero())?,
        Side::Minus => linalg::invariant_subspace(&g, |v| v.re > T::zero())?,
    };
    let k = split.values.len();
    Ok((split.projector, k))
}

fn projector_frame<T: Real>(p: &CMat<T>, k: usize) -> Result<CMat<T>> {
    // Orthonormal basis of range(P) from a pivoted QR of P.
    let qr = p.clone().col_piv_qr();
    let q = qr.q();
    if q.ncols() < k {
        return Err(Error::Splitting("projector rank deficient".into()));
    }
    Ok(q.columns(0, k).into_owned())
}

/// Closed contour in the spectral plane at fixed transverse frequency: the
/// positively oriented boundary of the annular sector
/// {rho_min <= |lambda| <= rho_max, Re lambda >= -c_left kappa(|(Im lambda, eta)|)}.
#[derive(Clone, Debug)]
pub struct ContourSpec<T> {
    pub eta: Vec<T>,
    pub rho_min: T,
    pub rho_max: T,
    /// Points per quarter-piece at the base resolution.
    pub n_arc: usize,
    /// Left-boundary depth parameter (0 = imaginary axis).
    pub c_left: T,
}

impl<T: Real> ContourSpec<T> {
    pub fn points(&self) -> Vec<Frequency<T>> {
        let mut pts = Vec::new();
        let n = self.n_arc.max(4);
        let pi = T::pi();
        let half = pi * real::<T>(0.5);
        let left_gamma = |t: T| -> T {
            let mut s = t * t;
            for &e in &self.eta {
                s += e * e;
            }
            -self.c_left * crate::dissipativity::kappa(s.sqrt())
        };
        // Outer arc, theta from -pi/2 to pi/2.
        for i in 0..=2 * n {
            let th = -half + pi * real::<T>(i as f64 / (2 * n) as f64);
            pts.push(Frequency::new(
                Complex::new(self.rho_max * th.cos(), self.rho_max * th.sin()),
                self.eta.clone(),
            ));
        }
        // Upper-left boundary, tau from rho_max down to rho_min.
        for i in 1..=n {
            let f = real::<T>(i as f64 / n as f64);
            let tau = self.rho_max * (self.rho_min / self.rho_max).powf(f);
            pts.push(Frequency::new(Complex::new(left_gamma(tau), tau), self.eta.clone()));
        }
        // Inner arc, theta from pi/2 down to -pi/2 (clockwise).
        for i in 1..=2 * n {
            let th = half - pi * real::<T>(i as f64 / (2 * n) as f64);
            pts.push(Frequency::new(
                Complex::new(self.rho_min * th.cos(), self.rho_min * th.sin()),
                self.eta.clone(),
            ));
        }
        // Lower-left boundary, tau from -rho_min down to -rho_max.
        for i in 1..n {
            let f = real::<T>(i as f64 / n as f64);
            let tau = -self.rho_min * (self.rho_max / self.rho_min).powf(f);
            pts.push(Frequency::new(Complex::new(left_gamma(tau), tau), self.eta.clone()));
        }
        pts
    }
}

/// One evaluated contour sample, exportable as CSV.
#[derive(Clone, Debug)]
pub struct ContourSample<T: Real> {
    pub freq: Frequency<T>,
    pub sample: EvansSample<T>,
    /// Phase accumulated since the first contour point.
    pub accumulated_phase: T,
}

impl<'a, T: Real> EvansSolver<'a, T> {
    /// Winding number of the Evans function around a closed contour, with
    /// adaptive insertion of midpoints until every phase increment is < pi/2.
    pub fn winding_number(
        &self,
        spec: &ContourSpec<T>,
    ) -> Result<(i64, Vec<ContourSample<T>>)> {
        let pts = spec.points();
        let mut carrier = self.transport(&self.base, &pts[0])?;
        let first = self.eval(&carrier)?;
        let mut samples = vec![ContourSample {
            freq: pts[0].clone(),
            sample: first,
            accumulated_phase: T::zero(),
        }];
        let mut total = T::zero();
        let m = pts.len();
        for i in 0..m {
            let target = &pts[(i + 1) % m];
            let (phase, next_carrier) =
                self.refine_segment(&carrier, samples.last().unwrap().sample, target, 0, &mut samples, &mut total)?;
            let _ = phase;
            carrier = next_carrier;
        }
        // Check for near-zeros on the contour.
        let ln_max =
            samples.iter().fold(real::<T>(f64::NEG_INFINITY), |a: T, s| a.max(s.sample.ln_abs));
        let ln_min =
            samples.iter().fold(real::<T>(f64::INFINITY), |a: T, s| a.min(s.sample.ln_abs));
        if ln_min < ln_max + real(-23.0) {
            let idx = samples
                .iter()
                .position(|s| s.sample.ln_abs == ln_min)
                .unwrap_or(0);
            return Err(Error::ZeroOnContour {
                index: idx,
                value: to_f64((ln_min - ln_max).exp()),
            });
        }
        let two_pi = T::pi() + T::pi();
        let w = total / two_pi;
        let w_round = to_f64(w).round();
        if (to_f64(w) - w_round).abs() > 0.1 {
            return Err(Error::NonIntegerWinding(to_f64(w)));
        }
        Ok((w_round as i64, samples))
    }

    #[allow(clippy::too_many_arguments)]
    fn refine_segment(
        &self,
        carrier: &FrameCarrier<T>,
        from_sample: EvansSample<T>,
        target: &Frequency<T>,
        depth: usize,
        samples: &mut Vec<ContourSample<T>>,
        total: &mut T,
    ) -> Result<(T, FrameCarrier<T>)> {
        let next = self.transport(carrier, target)?;
        let s = self.eval(&next)?;
        let dphi = wrap_angle(s.arg - from_sample.arg);
        if dphi.abs() < T::pi() * real(0.5) {
            *total += dphi;
            samples.push(ContourSample {
                freq: target.clone(),
                sample: s,
                accumulated_phase: *total,
            });
            return Ok((dphi, next));
        }
        if depth >= 14 {
            return Err(Error::NonIntegerWinding(to_f64(dphi)));
        }
        let midf = carrier.freq.lerp(target, real(0.5));
        let (_, mid_carrier) =
            self.refine_segment(carrier, from_sample, &midf, depth + 1, samples, total)?;
        let mid_sample = samples.last().unwrap().sample;
        self.refine_segment(&mid_carrier, mid_sample, target, depth + 1, samples, total)
    }

    /// Radial limit D(0, zeta-hat) by quadratic extrapolation from the pinned
    /// radii, together with the one-sided radial derivative (Richardson).
    pub fn radial_limit(
        &self,
        tau_hat: T,
        gamma_hat: T,
        eta_hat: &[T],
        ln_ref: T,
    ) -> Result<(Cplx<T>, Cplx<T>)> {
        let radii = [real::<T>(1e-2), real(5e-3), real(2.5e-3)];
        let mut carrier = self.base.clone();
        let mut vals = Vec::new();
        for &rho in &radii {
            let f = Frequency::from_polar(rho, tau_hat, gamma_hat, eta_hat);
            carrier = self.transport(&carrier, &f)?;
            vals.push(self.eval(&carrier)?.value_scaled(ln_ref));
        }
        // Quadratic (Lagrange) extrapolation to rho = 0.
        let mut d0 = Complex::new(T::zero(), T::zero());
        for i in 0..3 {
            let mut w = T::one();
            for j in 0..3 {
                if j != i {
                    w *= (T::zero() - radii[j]) / (radii[i] - radii[j]);
                }
            }
            d0 += vals[i] * Complex::new(w, T::zero());
        }
        // One-sided derivative with steps 1e-3, 5e-4, Richardson-combined.
        let h1 = real::<T>(1e-3);
        let h2 = real::<T>(5e-4);
        let f1 = Frequency::from_polar(h1, tau_hat, gamma_hat, eta_hat);
        carrier = self.transport(&carrier, &f1)?;
        let d1 = self.eval(&carrier)?.value_scaled(ln_ref);
        let f2 = Frequency::from_polar(h2, tau_hat, gamma_hat, eta_hat);
        carrier = self.transport(&carrier, &f2)?;
        let d2 = self.eval(&carrier)?.value_scaled(ln_ref);
        let q1 = (d1 - d0) / Complex::new(h1, T::zero());
        let q2 = (d2 - d0) / Complex::new(h2, T::zero());
        let deriv = q2 * Complex::new(real::<T>(2.0), T::zero()) - q1;
        Ok((d0, deriv))
    }
}

fn wrap_angle<T: Real>(a: T) -> T {
    let pi = T::pi();
    let two_pi = pi + pi;
    let mut x = a;
    while x > pi {
        x -= two_pi;
    }
    while x <= -pi {
        x += two_pi;
    }
    x
}

/// Residual of the translation mode: differentiating the profile equation
/// shows B^11(u) u'' + S(u, 0, 0) u' vanishes identically, which is the
/// statement that (u', 0) solves the x = 0 frequency system.
pub fn translation_mode_residual<T: Real>(model: &ModelDef<T>, profile: &Profile<T>) -> Result<T> {
    let freq0 = Frequency::new(Complex::new(T::zero(), T::zero()), vec![T::zero(); model.d - 1]);
    let mut worst = T::zero();
    let mut scale = T::zero();
    for i in 0..profile.xs.len() {
        let u = &profile.values[i];
        let w = &profile.derivs[i];
        let upp = second_derivative(model, profile, i)?;
        let co = super::coeffs_at_state(model, u, w, &freq0)?;
        let b_term = crate::scalar::complexify_vec(&(model.coef_b(u, 0, 0) * &upp));
        let s_term = &co.s_mat * crate::scalar::complexify_vec(w);
        let res = (b_term + s_term).norm();
        let sc = (model.coef_b(u, 0, 0) * upp).norm() + (co.s_mat.norm() * w.norm());
        worst = worst.max(res);
        scale = scale.max(sc);
    }
    Ok(worst / scale.max(real(1e-300)))
}

#[derive(Clone, Copy, Debug)]
pub struct S7Opts<T> {
    /// Number of zeta-hat slices for the rho -> 0 limit checks.
    pub zeta_slices: usize,
    /// Polar angles gamma-hat used for the slices (must be positive).
    pub gamma_hats: [T; 2],
    /// Transverse magnitudes of the contour family.
    pub contour_eta: [T; 3],
    pub rho_min: T,
    pub rho_max: T,
    pub n_arc: usize,
    /// |D(0)| <= d0_rel_tol * max|D| on the contour family.
    pub d0_rel_tol: T,
    /// Required |d/d rho D(0)| relative to the contour scale.
    pub deriv_margin: T,
    pub translation_tol: T,
}

impl<T: Real> Default for S7Opts<T> {
    fn default() -> Self {
        Self {
            zeta_slices: 8,
            gamma_hats: [real(0.45), real(0.8)],
            contour_eta: [real(0.0), real(0.4), real(0.8)],
            rho_min: real(5e-2),
            rho_max: real(4.0),
            n_arc: 24,
            d0_rel_tol: real(1e-5),
            deriv_margin: real(1e-6),
            translation_tol: real(1e-8),
        }
    }
}

#[derive(Clone, Debug)]
pub struct S7Report<T: Real> {
    /// (eta, winding at n_arc, winding at 2 n_arc) per contour.
    pub windings: Vec<(f64, i64, i64)>,
    /// |D(0, zeta-hat)| / max|D| per slice.
    pub d0_rel: Vec<T>,
    /// |d/d rho D(0, zeta-hat)| / max|D| per slice.
    pub deriv_rel: Vec<T>,
    pub translation_residual: T,
    /// Inner radius left unverified by the contour family.
    pub rho_min_unverified: T,
    pub ln_ref: T,
    pub pass: bool,
    pub contour_samples: Vec<ContourSample<T>>,
}

impl<'a, T: Real> EvansSolver<'a, T> {
    /// Composite spectral-stability check: vanishing at rho = 0 with nonzero
    /// radial derivative on a slice family, and zero winding on an annular
    /// contour family that is stable under resolution doubling.
    pub fn check_s7(&self, opts: &S7Opts<T>) -> Result<S7Report<T>> {
        let d = self.model.d;
        let mut windings = Vec::new();
        let mut all_samples: Vec<ContourSample<T>> = Vec::new();
        let etas: Vec<Vec<T>> = if d == 1 {
            vec![vec![]]
        } else {
            opts.contour_eta
                .iter()
                .map(|&e| {
                    let mut v = vec![T::zero(); d - 1];
                    v[0] = e;
                    v
                })
                .collect()
        };
        for eta in &etas {
            let base_spec = ContourSpec {
                eta: eta.clone(),
                rho_min: opts.rho_min,
                rho_max: opts.rho_max,
                n_arc: opts.n_arc,
                c_left: self.opts.c_param * real(0.5),
            };
            let (w1, samples) = self.winding_number(&base_spec)?;
            let doubled = ContourSpec { n_arc: 2 * opts.n_arc, ..base_spec.clone() };
            let (w2, _) = self.winding_number(&doubled)?;
            let eta0 = eta.first().map(|&e| to_f64(e)).unwrap_or(0.0);
            windings.push((eta0, w1, w2));
            all_samples.extend(samples);
        }
        let ln_ref =
            all_samples.iter().fold(real::<T>(f64::NEG_INFINITY), |a: T, s| a.max(s.sample.ln_abs));

        // Slice directions with positive gamma-hat.
        let mut d0_rel = Vec::new();
        let mut deriv_rel = Vec::new();
        let per_ring = (opts.zeta_slices / opts.gamma_hats.len()).max(1);
        for &gh in &opts.gamma_hats {
            for k in 0..per_ring {
                let r = (T::one() - gh * gh).max(T::zero()).sqrt();
                let phi = real::<T>(2.0 * std::f64::consts::PI * k as f64 / per_ring as f64);
                let (tau_hat, eta1) = (r * phi.cos(), r * phi.sin());
                let eta_hat = if d == 1 {
                    vec![]
                } else {
                    let mut v = vec![T::zero(); d - 1];
                    v[0] = eta1;
                    v
                };
                let tau_hat = if d == 1 {
                    // Fold the transverse part back into tau for 1-D slices.
                    (tau_hat * tau_hat + eta1 * eta1).sqrt()
                        * if phi.cos() >= T::zero() { T::one() } else { -T::one() }
                } else {
                    tau_hat
                };
                let (d0, dr) = self.radial_limit(tau_hat, gh, &eta_hat, ln_ref)?;
                d0_rel.push(cmod(d0));
                deriv_rel.push(cmod(dr));
            }
        }
        let translation_residual = translation_mode_residual(self.model, self.profile)?;
        let winding_ok = windings.iter().all(|&(_, a, b)| a == 0 && b == 0);
        let d0_ok = d0_rel.iter().all(|&v| v <= opts.d0_rel_tol);
        let deriv_ok = deriv_rel.iter().all(|&v| v >= opts.deriv_margin);
        let trans_ok = translation_residual <= opts.translation_tol;
        Ok(S7Report {
            windings,
            d0_rel,
            deriv_rel,
            translation_residual,
            rho_min_unverified: opts.rho_min,
            ln_ref,
            pass: winding_ok && d0_ok && deriv_ok && trans_ok,
            contour_samples: all_samples,
        })
    }
}

/// CSV export of contour samples:
/// rho, tau_hat, gamma_hat, eta_hat..., Re D, Im D, accumulated_phase.
/// D is normalized by the maximal |D| over the samples.
pub fn write_contour_csv<T: Real, W: Write>(samples: &[ContourSample<T>], mut w: W) -> Result<()> {
    let d_eta = samples.first().map(|s| s.freq.eta.len()).unwrap_or(0);
    let mut header = vec!["rho".to_string(), "tau_hat".into(), "gamma_hat".into()];
    for j in 0..d_eta {
        header.push(format!("eta_hat{}", j + 1));
    }
    header.extend(["re_d".to_string(), "im_d".into(), "accumulated_phase".into()]);
    writeln!(w, "{}", header.join(","))?;
    let ln_ref =
        samples.iter().fold(real::<T>(f64::NEG_INFINITY), |a: T, s| a.max(s.sample.ln_abs));
    for s in samples {
        let (th, gh, eh) = s.freq.zeta_hat().unwrap_or((T::zero(), T::zero(), vec![T::zero(); d_eta]));
        let v = s.sample.value_scaled(ln_ref);
        let mut row = vec![
            format!("{:.12e}", to_f64(s.freq.rho())),
            format!("{:.12e}", to_f64(th)),
            format!("{:.12e}", to_f64(gh)),
        ];
        for e in eh {
            row.push(format!("{:.12e}", to_f64(e)));
        }
        row.push(format!("{:.12e}", to_f64(v.re)));
        row.push(format!("{:.12e}", to_f64(v.im)));
        row.push(format!("{:.12e}", to_f64(s.accumulated_phase)));
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelDef;
    use crate::profile::{solve_profile, SolveOpts};
    use nalgebra::DVector;

    fn stable_setup() -> (ModelDef<f64>, Profile<f64>) {
        let m = ModelDef::<f64>::burgers_dw(0.2, 2);
        let p = solve_profile(
            &m,
            &DVector::from_vec(vec![0.3]),
            &DVector::from_vec(vec![-0.3]),
            40.0,
            &SolveOpts { n_points: 2001, ..SolveOpts::default() },
        )
        .unwrap();
        (m, p)
    }

    fn opts() -> EvansOpts<f64> {
        EvansOpts { l_int: 40.0, c_param: 0.2, ..EvansOpts::default() }
    }

    #[test]
    fn solver_dimensions() {
        let (m, p) = stable_setup();
        let solver = EvansSolver::new(&m, &p, opts()).unwrap();
        assert_eq!(solver.n_stable, 1);
        assert_eq!(solver.m_unstable, 1);
    }

    #[test]
    fn translation_residual_tiny() {
        let (m, p) = stable_setup();
        let r = translation_mode_residual(&m, &p).unwrap();
        assert!(r <= 1e-8, "residual {r:.3e}");
    }

    #[test]
    fn transport_keeps_frames_in_subspace() {
        let (m, p) = stable_setup();
        let solver = EvansSolver::new(&m, &p, opts()).unwrap();
        let target = Frequency::new(Complex::new(0.3, 0.8), vec![0.25]);
        let carrier = solver.transport(&solver.base_carrier(), &target).unwrap();
        let (pp, _) = stable_projector(&m, &p, &target, Side::Plus).unwrap();
        let drift = (&pp * &carrier.plus - &carrier.plus).norm() / carrier.plus.norm();
        assert!(drift < 1e-8, "frame drift {drift:.3e}");
    }

    #[test]
    fn evans_value_l_int_robust() {
        // Increasing the integration interval changes log|D| negligibly.
        let (m, p) = stable_setup();
        let s1 = EvansSolver::new(&m, &p, EvansOpts { l_int: 28.0, c_param: 0.2, ..EvansOpts::default() })
            .unwrap();
        let s2 = EvansSolver::new(&m, &p, EvansOpts { l_int: 35.0, c_param: 0.2, ..EvansOpts::default() })
            .unwrap();
        let f = Frequency::new(Complex::new(0.4, 0.5), vec![0.0]);
        let c1 = s1.transport(&s1.base_carrier(), &f).unwrap();
        let c2 = s2.transport(&s2.base_carrier(), &f).unwrap();
        let d1 = s1.eval(&c1).unwrap();
        let d2 = s2.eval(&c2).unwrap();
        // With the growth normalization the value is L-robust up to the
        // profile tail error exp(-delta L / 2).
        let tol = (-0.3f64 * 28.0 / 2.0).exp();
        assert!((d1.ln_abs - d2.ln_abs).abs() < tol, "log drift {:.3e}", (d1.ln_abs - d2.ln_abs).abs());
    }

    #[test]
    fn winding_zero_for_stable_profile() {
        let (m, p) = stable_setup();
        let solver = EvansSolver::new(&m, &p, opts()).unwrap();
        let spec = ContourSpec {
            eta: vec![0.0],
            rho_min: 0.05,
            rho_max: 2.0,
            n_arc: 16,
            c_left: 0.05,
        };
        let (w, samples) = solver.winding_number(&spec).unwrap();
        assert_eq!(w, 0);
        assert!(samples.len() >= 16);
    }

    #[test]
    fn conjugation_symmetry_of_evans() {
        // For a real model with eta -> -eta symmetry, D(conj lambda, -eta) =
        // conj(D(lambda, eta)) up to frame normalization: |D| must agree.
        let (m, p) = stable_setup();
        let solver = EvansSolver::new(&m, &p, opts()).unwrap();
        let f1 = Frequency::new(Complex::new(0.4, 0.6), vec![0.3]);
        let f2 = Frequency::new(Complex::new(0.4, -0.6), vec![-0.3]);
        let c1 = solver.transport(&solver.base_carrier(), &f1).unwrap();
        let c2 = solver.transport(&solver.base_carrier(), &f2).unwrap();
        let d1 = solver.eval(&c1).unwrap();
        let d2 = solver.eval(&c2).unwrap();
        assert!((d1.ln_abs - d2.ln_abs).abs() < 1e-6, "{} vs {}", d1.ln_abs, d2.ln_abs);
        assert!((d1.arg + d2.arg).abs() < 1e-6, "{} vs {}", d1.arg, d2.arg);
    }
}
