//! Runge-Kutta integrators, generic over real or complex state vectors.

use crate::error::{Error, Result};
use crate::scalar::{real, Real};
use nalgebra::{ComplexField, DVector};

/// Dormand-Prince 5(4) adaptive integrator options.
#[derive(Clone, Copy, Debug)]
pub struct AdaptiveOpts<T> {
    pub rtol: T,
    pub atol: T,
    pub h_init: T,
    pub h_max: T,
    pub max_steps: usize,
}

impl<T: Real> Default for AdaptiveOpts<T> {
    fn default() -> Self {
        Self {
            rtol: real(1e-10),
            atol: real(1e-12),
            h_init: real(1e-3),
            h_max: real(1.0),
            max_steps: 2_000_000,
        }
    }
}

struct Dp5Tableau<T> {
    a: [[f64; 6]; 6],
    b: [f64; 7],
    e: [f64; 7],
    c: [f64; 6],
    _m: std::marker::PhantomData<T>,
}

fn dp5<T>() -> Dp5Tableau<T> {
    Dp5Tableau {
        a: [
            [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
            [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
            [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
            [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
            [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
        ],
        b: [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0],
        e: [
            35.0 / 384.0 - 5179.0 / 57600.0,
            0.0,
            500.0 / 1113.0 - 7571.0 / 16695.0,
            125.0 / 192.0 - 393.0 / 640.0,
            -2187.0 / 6784.0 + 92097.0 / 339200.0,
            11.0 / 84.0 - 187.0 / 2100.0,
            -1.0 / 40.0,
        ],
        c: [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0],
        _m: std::marker::PhantomData,
    }
}

/// Integrate `y' = f(x, y)` from `x0` to `x1` (either direction), landing
/// exactly on `x1`. The observer sees every accepted step `(x, y)`.
pub fn integrate_adaptive<S, T, F, O>(
    f: &F,
    x0: T,
    x1: T,
    y0: DVector<S>,
    opts: &AdaptiveOpts<T>,
    observer: &mut O,
) -> Result<DVector<S>>
where
    T: Real,
    S: ComplexField<RealField = T> + Copy,
    F: Fn(T, &DVector<S>) -> DVector<S>,
    O: FnMut(T, &DVector<S>),
{
    let tab = dp5::<T>();
    let dir = if x1 >= x0 { T::one() } else { -T::one() };
    let span = (x1 - x0).abs();
    if span == T::zero() {
        return Ok(y0);
    }
    let mut x = x0;
    let mut y = y0;
    let mut h = opts.h_init.min(opts.h_max).min(span);
    let huge = real::<T>(1e12);
    for _ in 0..opts.max_steps {
        if (x - x1).abs() <= T::default_epsilon() * span.max(T::one()) {
            return Ok(y);
        }
        h = h.min((x1 - x).abs());
        let hs = h * dir;
        let k1 = f(x, &y);
        let mut ks: Vec<DVector<S>> = Vec::with_capacity(7);
        ks.push(k1);
        for stage in 0..6 {
            let mut yi = y.clone();
            for (j, k) in ks.iter().enumerate() {
                let aij = tab.a[stage][j];
                if aij != 0.0 {
                    yi.axpy(S::from_real(real::<T>(aij) * hs), k, S::one());
                }
            }
            ks.push(f(x + real::<T>(tab.c[stage]) * hs, &yi));
        }
        let mut y_new = y.clone();
        let mut err_vec = DVector::<S>::zeros(y.len());
        for (j, k) in ks.iter().enumerate() {
            if tab.b[j] != 0.0 {
                y_new.axpy(S::from_real(real::<T>(tab.b[j]) * hs), k, S::one());
            }
            if tab.e[j] != 0.0 {
                err_vec.axpy(S::from_real(real::<T>(tab.e[j]) * hs), k, S::one());
            }
        }
        // RMS of the componentwise scaled error.
        let mut acc = T::zero();
        for i in 0..y.len() {
            let sc = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
            let e = err_vec[i].abs() / sc;
            acc += e * e;
        }
        let err = (acc / real(y.len() as f64)).sqrt();
        if err <= T::one() {
            x += hs;
            y = y_new;
            observer(x, &y);
            if y.norm() > huge {
                return Err(Error::IntegrationBlowup(crate::scalar::to_f64(x)));
            }
            let grow = real::<T>(0.9) * err.max(real(1e-10)).powf(real(-0.2));
            h = (h * grow.min(real(5.0))).min(opts.h_max);
        } else {
            let shrink = real::<T>(0.9) * err.powf(real(-0.2));
            h *= shrink.max(real(0.2));
            if h < span * real(1e-14) {
                return Err(Error::Convergence("step size underflow in dopri5".into()));
            }
        }
    }
    Err(Error::Convergence("dopri5 exceeded max step count".into()))
}

/// Integrate landing exactly on every requested node, returning the states.
pub fn integrate_to_nodes<S, T, F>(
    f: &F,
    nodes: &[T],
    y0: DVector<S>,
    opts: &AdaptiveOpts<T>,
) -> Result<Vec<DVector<S>>>
where
    T: Real,
    S: ComplexField<RealField = T> + Copy,
    F: Fn(T, &DVector<S>) -> DVector<S>,
{
    let mut out = Vec::with_capacity(nodes.len());
    let mut y = y0;
    out.push(y.clone());
    for w in nodes.windows(2) {
        y = integrate_adaptive(f, w[0], w[1], y, opts, &mut |_, _| {})?;
        out.push(y.clone());
    }
    Ok(out)
}

/// One classical RK4 step.
pub fn rk4_step<S, T, F>(f: &F, x: T, y: &DVector<S>, h: T) -> DVector<S>
where
    T: Real,
    S: ComplexField<RealField = T> + Copy,
    F: Fn(T, &DVector<S>) -> DVector<S>,
{
    let half = real::<T>(0.5);
    let sixth = real::<T>(1.0 / 6.0);
    let k1 = f(x, y);
    let k2 = f(x + h * half, &(y + &k1 * S::from_real(h * half)));
    let k3 = f(x + h * half, &(y + &k2 * S::from_real(h * half)));
    let k4 = f(x + h, &(y + &k3 * S::from_real(h)));
    let mut out = y.clone();
    out.axpy(S::from_real(h * sixth), &k1, S::one());
    out.axpy(S::from_real(h * sixth * real(2.0)), &k2, S::one());
    out.axpy(S::from_real(h * sixth * real(2.0)), &k3, S::one());
    out.axpy(S::from_real(h * sixth), &k4, S::one());
    out
}

/// One Shu-Osher SSP-RK3 step.
pub fn ssp_rk3_step<S, T, F>(f: &F, x: T, y: &DVector<S>, h: T) -> DVector<S>
where
    T: Real,
    S: ComplexField<RealField = T> + Copy,
    F: Fn(T, &DVector<S>) -> DVector<S>,
{
    let u1 = y + f(x, y) * S::from_real(h);
    let u2 = y * S::from_real(real::<T>(0.75))
        + (&u1 + f(x + h, &u1) * S::from_real(h)) * S::from_real(real::<T>(0.25));
    let third = real::<T>(1.0 / 3.0);
    y * S::from_real(third)
        + (&u2 + f(x + h * real::<T>(0.5), &u2) * S::from_real(h))
            * S::from_real(real::<T>(2.0) * third)
}

/// Fixed-step RK4 over `n` steps.
pub fn rk4_fixed<S, T, F>(f: &F, x0: T, x1: T, n: usize, y0: DVector<S>) -> DVector<S>
where
    T: Real,
    S: ComplexField<RealField = T> + Copy,
    F: Fn(T, &DVector<S>) -> DVector<S>,
{
    let h = (x1 - x0) / real(n as f64);
    let mut y = y0;
    let mut x = x0;
    for _ in 0..n {
        y = rk4_step(f, x, &y, h);
        x += h;
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Cplx;
    use num_complex::Complex;

    #[test]
    fn dopri5_matches_exponential() {
        let f = |_x: f64, y: &DVector<f64>| y.clone();
        let y0 = DVector::from_vec(vec![1.0]);
        let y1 =
            integrate_adaptive(&f, 0.0, 1.0, y0, &AdaptiveOpts::default(), &mut |_, _| {}).unwrap();
        assert!((y1[0] - 1.0f64.exp()).abs() < 1e-9);
    }

    #[test]
    fn dopri5_integrates_backward() {
        let f = |_x: f64, y: &DVector<f64>| y.clone();
        let y0 = DVector::from_vec(vec![1.0]);
        let y1 =
            integrate_adaptive(&f, 1.0, 0.0, y0, &AdaptiveOpts::default(), &mut |_, _| {}).unwrap();
        assert!((y1[0] - (-1.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn dopri5_complex_rotation() {
        let om = Complex::new(0.0, 1.0);
        let f = move |_x: f64, y: &DVector<Cplx<f64>>| y * om;
        let y0 = DVector::from_vec(vec![Complex::new(1.0, 0.0)]);
        let y1 = integrate_adaptive(
            &f,
            0.0,
            std::f64::consts::PI,
            y0,
            &AdaptiveOpts::default(),
            &mut |_, _| {},
        )
        .unwrap();
        assert!((y1[0] + Complex::new(1.0, 0.0)).norm() < 1e-8);
    }

    #[test]
    fn rk4_fixed_has_order_four() {
        // y' = cos(x) y, y(0) = 1, exact y = exp(sin x)
        let f = |x: f64, y: &DVector<f64>| y * x.cos();
        let y0 = DVector::from_vec(vec![1.0]);
        let exact = (1.0f64.sin()).exp();
        let e1 = (rk4_fixed(&f, 0.0, 1.0, 20, y0.clone())[0] - exact).abs();
        let e2 = (rk4_fixed(&f, 0.0, 1.0, 40, y0)[0] - exact).abs();
        let order = (e1 / e2).log2();
        assert!(order > 3.7, "observed order {order}");
    }
}
