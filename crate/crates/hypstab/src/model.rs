//! System definitions and Fourier symbols.
//!
//! A model is the data of the second-order system
//!
//! ```text
//! d_t g(u) + sum_i d_i f^i(u) = sum_{ij} d_j (B^{ij} d_i u) - d_t (A d_t u)
//!                               + sum_i d_i (C0^i d_t u) + sum_i d_t (C1^i d_i u)
//! ```
//!
//! together with the derived symbols `A(u, xi)`, `B(u, xi)`, `C(u, xi)` and the
//! quadratic dispersion pencil `P(lambda, xi)`.

use crate::error::{Error, Result};
use crate::linalg;
use crate::scalar::{cmod2, complexify, inf_norm, real, to_f64, CMat, Cplx, RMat, RVec, Real};
use num_complex::Complex;
use std::sync::Arc;

pub type VecFn<T> = Arc<dyn Fn(&RVec<T>) -> RVec<T> + Send + Sync>;
pub type MatFn<T> = Arc<dyn Fn(&RVec<T>) -> RMat<T> + Send + Sync>;

/// Definition of a hyperbolic-hyperbolic system.
pub struct ModelDef<T: Real> {
    pub name: String,
    /// Spatial dimension.
    pub d: usize,
    /// State dimension.
    pub n: usize,
    flux: Vec<VecFn<T>>,
    g: VecFn<T>,
    coef_a: MatFn<T>,
    /// B^{jk}(u); indices 0-based, j is the inner-derivative index.
    coef_b: Arc<dyn Fn(&RVec<T>, usize, usize) -> RMat<T> + Send + Sync>,
    coef_c0: Arc<dyn Fn(&RVec<T>, usize) -> RMat<T> + Send + Sync>,
    coef_c1: Arc<dyn Fn(&RVec<T>, usize) -> RMat<T> + Send + Sync>,
    flux_jac: Option<Vec<MatFn<T>>>,
    g_jac: Option<MatFn<T>>,
    /// Constant coefficient matrices and linear g: the Appendix-style
    /// semilinear class for which the relaxation form exists.
    pub semilinear: bool,
    /// g(u) = u exactly.
    pub g_identity: bool,
}

pub struct Derivatives<T: Real> {
    /// Flux Jacobians A^j = Df^j(u), j = 0..d-1.
    pub a_j: Vec<RMat<T>>,
    /// A^0 = Dg(u), symmetrized.
    pub a0: RMat<T>,
}

/// Fourier symbols of the model at a state and wavenumber.
pub struct SymbolBundle<T: Real> {
    pub u: RVec<T>,
    pub xi: Vec<T>,
    /// A(u, xi) = sum_j A^j xi_j
    pub a: RMat<T>,
    /// B(u, xi) = sum_{jk} B^{jk} xi_j xi_k
    pub b: RMat<T>,
    /// C(u, xi) = sum_j (C0^j + C1^j) xi_j
    pub c: RMat<T>,
}

/// Transverse symbols in the frequency variables `eta` (d-1 components).
pub struct TransverseSymbols<T: Real> {
    pub b12: RMat<T>,
    pub b22: RMat<T>,
    pub c2: RMat<T>,
    pub a2: RMat<T>,
}

const FD_BASE_STEP: f64 = 1e-6;

impl<T: Real> ModelDef<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        d: usize,
        n: usize,
        flux: Vec<VecFn<T>>,
        g: VecFn<T>,
        coef_a: MatFn<T>,
        coef_b: Arc<dyn Fn(&RVec<T>, usize, usize) -> RMat<T> + Send + Sync>,
        coef_c0: Arc<dyn Fn(&RVec<T>, usize) -> RMat<T> + Send + Sync>,
        coef_c1: Arc<dyn Fn(&RVec<T>, usize) -> RMat<T> + Send + Sync>,
    ) -> Self {
        assert!(d >= 1 && n >= 1);
        assert_eq!(flux.len(), d, "one flux map per spatial direction");
        Self {
            name: name.into(),
            d,
            n,
            flux,
            g,
            coef_a,
            coef_b,
            coef_c0,
            coef_c1,
            flux_jac: None,
            g_jac: None,
            semilinear: false,
            g_identity: false,
        }
    }

    pub fn with_flux_jacobians(mut self, jac: Vec<MatFn<T>>) -> Self {
        assert_eq!(jac.len(), self.d);
        self.flux_jac = Some(jac);
        self
    }

    pub fn with_g_jacobian(mut self, jac: MatFn<T>) -> Self {
        self.g_jac = Some(jac);
        self
    }

    pub fn mark_semilinear(mut self, g_identity: bool) -> Self {
        self.semilinear = true;
        self.g_identity = g_identity;
        self
    }

    pub fn flux(&self, j: usize, u: &RVec<T>) -> RVec<T> {
        (self.flux[j])(u)
    }

    pub fn g(&self, u: &RVec<T>) -> RVec<T> {
        (self.g)(u)
    }

    pub fn coef_a(&self, u: &RVec<T>) -> RMat<T> {
        (self.coef_a)(u)
    }

    pub fn coef_b(&self, u: &RVec<T>, j: usize, k: usize) -> RMat<T> {
        (self.coef_b)(u, j, k)
    }

    pub fn coef_c0(&self, u: &RVec<T>, j: usize) -> RMat<T> {
        (self.coef_c0)(u, j)
    }

    pub fn coef_c1(&self, u: &RVec<T>, j: usize) -> RMat<T> {
        (self.coef_c1)(u, j)
    }

    /// C^j = C0^j + C1^j.
    pub fn coef_c(&self, u: &RVec<T>, j: usize) -> RMat<T> {
        self.coef_c0(u, j) + self.coef_c1(u, j)
    }

    fn fd_step(&self, u: &RVec<T>) -> T {
        real::<T>(FD_BASE_STEP).max(real::<T>(FD_BASE_STEP) * inf_norm(u))
    }

    /// Central finite-difference Jacobian of a vector map.
    pub fn fd_jacobian(&self, f: &dyn Fn(&RVec<T>) -> RVec<T>, u: &RVec<T>) -> RMat<T> {
        let h = self.fd_step(u);
        let mut jac = RMat::zeros(self.n, self.n);
        for m in 0..self.n {
            let mut up = u.clone();
            let mut um = u.clone();
            up[m] += h;
            um[m] -= h;
            let col = (f(&up) - f(&um)) / (h + h);
            jac.set_column(m, &col);
        }
        jac
    }

    /// Flux Jacobians A^j and A^0 = Dg (symmetrized, with asymmetry guard).
    pub fn derivative_matrices(&self, u: &RVec<T>) -> Result<Derivatives<T>> {
        let a_j: Vec<RMat<T>> = match &self.flux_jac {
            Some(jacs) => jacs.iter().map(|j| j(u)).collect(),
            None => (0..self.d).map(|j| self.fd_jacobian(&|v| self.flux(j, v), u)).collect(),
        };
        let raw_a0 = match &self.g_jac {
            Some(j) => j(u),
            None => self.fd_jacobian(&|v| self.g(v), u),
        };
        let asym = (&raw_a0 - raw_a0.transpose()).norm();
        let tol = real::<T>(1e-8) * raw_a0.norm().max(T::one());
        if asym >= tol {
            return Err(Error::NonSymmetricA0 { asymmetry: to_f64(asym), tol: to_f64(tol) });
        }
        let a0 = (&raw_a0 + raw_a0.transpose()) * real::<T>(0.5);
        Ok(Derivatives { a_j, a0 })
    }

    /// Validate the standing assumptions at a state: A(u) and A^0(u) both
    /// symmetric positive definite.
    pub fn check_state(&self, u: &RVec<T>) -> Result<()> {
        let a = self.coef_a(u);
        let asym = (&a - a.transpose()).norm();
        if asym > real::<T>(1e-10) * a.norm().max(T::one()) {
            return Err(Error::SingularA(format!("A(u) not symmetric (asym {:.3e})", to_f64(asym))));
        }
        let min = a.clone().symmetric_eigen().eigenvalues.min();
        if min <= real::<T>(1e-12) * a.norm().max(T::one()) {
            return Err(Error::SingularA(format!("min eigenvalue {:.3e}", to_f64(min))));
        }
        let der = self.derivative_matrices(u)?;
        let min0 = der.a0.clone().symmetric_eigen().eigenvalues.min();
        if min0 <= real::<T>(1e-12) * der.a0.norm().max(T::one()) {
            return Err(Error::SingularA0(format!("min eigenvalue {:.3e}", to_f64(min0))));
        }
        Ok(())
    }

    /// Assemble A, B, C at `(u, xi)`.
    pub fn assemble_symbols(&self, u: &RVec<T>, xi: &[T]) -> Result<SymbolBundle<T>> {
        assert_eq!(xi.len(), self.d);
        let der = self.derivative_matrices(u)?;
        let mut a = RMat::zeros(self.n, self.n);
        let mut b = RMat::zeros(self.n, self.n);
        let mut c = RMat::zeros(self.n, self.n);
        for j in 0..self.d {
            a += &der.a_j[j] * xi[j];
            c += self.coef_c(u, j) * xi[j];
            for k in 0..self.d {
                b += self.coef_b(u, j, k) * (xi[j] * xi[k]);
            }
        }
        Ok(SymbolBundle { u: u.clone(), xi: xi.to_vec(), a, b, c })
    }

    /// Transverse symbols for eta (length d-1; index j in the paper runs 2..d).
    pub fn transverse_symbols(&self, u: &RVec<T>, eta: &[T]) -> Result<TransverseSymbols<T>> {
        assert_eq!(eta.len(), self.d - 1);
        let der = self.derivative_matrices(u)?;
        let mut b12 = RMat::zeros(self.n, self.n);
        let mut b22 = RMat::zeros(self.n, self.n);
        let mut c2 = RMat::zeros(self.n, self.n);
        let mut a2 = RMat::zeros(self.n, self.n);
        for j in 1..self.d {
            b12 += self.coef_b(u, j, 0) * eta[j - 1];
            c2 += self.coef_c(u, j) * eta[j - 1];
            a2 += &der.a_j[j] * eta[j - 1];
            for k in 1..self.d {
                b22 += self.coef_b(u, j, k) * (eta[j - 1] * eta[k - 1]);
            }
        }
        Ok(TransverseSymbols { b12, b22, c2, a2 })
    }

    /// Dispersion pencil P(lambda, xi) = lambda^2 A + B - i lambda C + lambda A^0 + i A.
    pub fn dispersion_matrix(&self, u: &RVec<T>, lambda: Cplx<T>, xi: &[T]) -> Result<CMat<T>> {
        let sym = self.assemble_symbols(u, xi)?;
        let der = self.derivative_matrices(u)?;
        let ca = complexify(&self.coef_a(u));
        let cb = complexify(&sym.b);
        let cc = complexify(&sym.c);
        let ca0 = complexify(&der.a0);
        let caa = complexify(&sym.a);
        let i = Complex::new(T::zero(), T::one());
        Ok(ca * (lambda * lambda) + cb - cc * (i * lambda) + ca0 * lambda + caa * i)
    }

    /// All 2n roots of det P(lambda, xi) = 0 via companion linearization of the
    /// quadratic pencil, with a residual certificate per root.
    pub fn dispersion_roots(&self, u: &RVec<T>, xi: &[T]) -> Result<Vec<Cplx<T>>> {
        let n = self.n;
        let sym = self.assemble_symbols(u, xi)?;
        let der = self.derivative_matrices(u)?;
        let a_mat = self.coef_a(u);
        let a_inv = a_mat
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::SingularA("wave coefficient not invertible".into()))?;
        let i = Complex::new(T::zero(), T::one());
        // P(lambda) = lambda^2 A + lambda K1 + K0,
        // K1 = A^0 - i C, K0 = B + i A.
        let k1 = complexify(&der.a0) - complexify(&sym.c) * i;
        let k0 = complexify(&sym.b) + complexify(&sym.a) * i;
        let ainv_c = complexify(&a_inv);
        let m01 = &ainv_c * &k0;
        let m11 = &ainv_c * &k1;
        let mut comp = CMat::<T>::zeros(2 * n, 2 * n);
        for r in 0..n {
            comp[(r, n + r)] = Complex::new(T::one(), T::zero());
            for c in 0..n {
                comp[(n + r, c)] = -m01[(r, c)];
                comp[(n + r, n + c)] = -m11[(r, c)];
            }
        }
        let roots = linalg::eigenvalues(&comp)?;
        // Residual certificate: smallest singular value of P at each root.
        let coeff_scale = a_mat.norm() + der.a0.norm() + sym.a.norm() + sym.b.norm() + sym.c.norm();
        for lam in &roots {
            let p = self.dispersion_matrix(u, *lam, xi)?;
            let smin = linalg::smallest_singular_value(&p);
            let bound = real::<T>(1e-8) * (T::one() + cmod2(*lam)) * coeff_scale.max(T::one());
            if smin > bound {
                return Err(Error::Convergence(format!(
                    "dispersion root residual {:.3e} exceeds bound {:.3e}",
                    to_f64(smin),
                    to_f64(bound)
                )));
            }
        }
        Ok(roots)
    }
}

/// Built-in model registry.
impl<T: Real> ModelDef<T> {
    /// Scalar Burgers flux with damped-wave regularization:
    /// g(u) = u, f^1 = u^2/2, other fluxes zero, A = a I, B^{jk} = delta_{jk} I, C = 0.
    pub fn burgers_dw(a: T, d: usize) -> Self {
        assert!(d >= 1);
        let mut flux: Vec<VecFn<T>> = Vec::new();
        flux.push(Arc::new(|u: &RVec<T>| {
            RVec::from_vec(vec![u[0] * u[0] * real::<T>(0.5)])
        }));
        for _ in 1..d {
            flux.push(Arc::new(|_u: &RVec<T>| RVec::zeros(1)));
        }
        let mut jacs: Vec<MatFn<T>> = Vec::new();
        jacs.push(Arc::new(|u: &RVec<T>| RMat::from_element(1, 1, u[0])));
        for _ in 1..d {
            jacs.push(Arc::new(|_u: &RVec<T>| RMat::zeros(1, 1)));
        }
        ModelDef::new(
            "burgers_dw",
            d,
            1,
            flux,
            Arc::new(|u: &RVec<T>| u.clone()),
            Arc::new(move |_u: &RVec<T>| RMat::from_element(1, 1, a)),
            Arc::new(|_u: &RVec<T>, j, k| {
                if j == k {
                    RMat::from_element(1, 1, T::one())
                } else {
                    RMat::zeros(1, 1)
                }
            }),
            Arc::new(|_u: &RVec<T>, _j| RMat::zeros(1, 1)),
            Arc::new(|_u: &RVec<T>, _j| RMat::zeros(1, 1)),
        )
        .with_flux_jacobians(jacs)
        .with_g_jacobian(Arc::new(|_u: &RVec<T>| RMat::identity(1, 1)))
        .mark_semilinear(true)
    }

    /// Linear 3x3 acoustics (p, v1, v2) in d = 2 with wave-operator
    /// regularization and a longitudinal background drift; characteristic
    /// speeds {drift, drift +- 1} in x, wave speed 1/sqrt(a). Drift 0 gives
    /// the classical symbol (used by the glancing tests); a nonzero drift
    /// makes A^1 invertible (noncharacteristic, as at shock endstates).
    pub fn acoustics_dw(a: T, drift: T) -> Self {
        let f1: VecFn<T> = Arc::new(move |u: &RVec<T>| {
            RVec::from_vec(vec![u[1] + drift * u[0], u[0] + drift * u[1], drift * u[2]])
        });
        let f2: VecFn<T> = Arc::new(|u: &RVec<T>| RVec::from_vec(vec![u[2], T::zero(), u[0]]));
        let j1: MatFn<T> = Arc::new(move |_u: &RVec<T>| {
            RMat::from_row_slice(
                3,
                3,
                &[
                    drift,
                    T::one(),
                    T::zero(),
                    T::one(),
                    drift,
                    T::zero(),
                    T::zero(),
                    T::zero(),
                    drift,
                ],
            )
        });
        let j2: MatFn<T> = Arc::new(|_u: &RVec<T>| {
            RMat::from_row_slice(
                3,
                3,
                &[
                    T::zero(),
                    T::zero(),
                    T::one(),
                    T::zero(),
                    T::zero(),
                    T::zero(),
                    T::one(),
                    T::zero(),
                    T::zero(),
                ],
            )
        });
        ModelDef::new(
            "acoustics_dw",
            2,
            3,
            vec![f1, f2],
            Arc::new(|u: &RVec<T>| u.clone()),
            Arc::new(move |_u: &RVec<T>| RMat::identity(3, 3) * a),
            Arc::new(|_u: &RVec<T>, j, k| {
                if j == k {
                    RMat::identity(3, 3)
                } else {
                    RMat::zeros(3, 3)
                }
            }),
            Arc::new(|_u: &RVec<T>, _j| RMat::zeros(3, 3)),
            Arc::new(|_u: &RVec<T>, _j| RMat::zeros(3, 3)),
        )
        .with_flux_jacobians(vec![j1, j2])
        .with_g_jacobian(Arc::new(|_u: &RVec<T>| RMat::identity(3, 3)))
        .mark_semilinear(true)
    }

    /// Generalized Jin-Xin class: user-supplied flux with constant A, B, C
    /// matrices and g(u) = u.
    pub fn jinxin_generic(
        d: usize,
        n: usize,
        flux: Vec<VecFn<T>>,
        flux_jac: Option<Vec<MatFn<T>>>,
        coef_a: RMat<T>,
        coef_b: Vec<Vec<RMat<T>>>,
        coef_c0: Vec<RMat<T>>,
        coef_c1: Vec<RMat<T>>,
    ) -> Self {
        assert_eq!(coef_b.len(), d);
        assert_eq!(coef_c0.len(), d);
        assert_eq!(coef_c1.len(), d);
        let b = Arc::new(move |_u: &RVec<T>, j: usize, k: usize| coef_b[j][k].clone());
        let c0 = Arc::new(move |_u: &RVec<T>, j: usize| coef_c0[j].clone());
        let c1 = Arc::new(move |_u: &RVec<T>, j: usize| coef_c1[j].clone());
        let mut m = ModelDef::new(
            "jinxin_generic",
            d,
            n,
            flux,
            Arc::new(|u: &RVec<T>| u.clone()),
            Arc::new(move |_u: &RVec<T>| coef_a.clone()),
            b,
            c0,
            c1,
        )
        .with_g_jacobian(Arc::new(move |_u: &RVec<T>| RMat::identity(n, n)))
        .mark_semilinear(true);
        if let Some(j) = flux_jac {
            m = m.with_flux_jacobians(j);
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    fn v1(x: f64) -> RVec<f64> {
        DVector::from_vec(vec![x])
    }

    #[test]
    fn burgers_flux_jacobian() {
        let m = ModelDef::<f64>::burgers_dw(1.0, 2);
        let der = m.derivative_matrices(&v1(2.0)).unwrap();
        assert!((der.a_j[0][(0, 0)] - 2.0).abs() < 1e-12);
        assert!((der.a0[(0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn finite_difference_matches_analytic_jacobian() {
        // f^1(u) = (u2, u1^3): closed-form Jacobian [[0, 1], [3 u1^2, 0]]
        let flux: Vec<VecFn<f64>> = vec![Arc::new(|u: &RVec<f64>| {
            DVector::from_vec(vec![u[1], u[0] * u[0] * u[0]])
        })];
        let m = ModelDef::new(
            "cubictest",
            1,
            2,
            flux,
            Arc::new(|u: &RVec<f64>| u.clone()),
            Arc::new(|_u: &RVec<f64>| RMat::identity(2, 2)),
            Arc::new(|_u: &RVec<f64>, _j, _k| RMat::identity(2, 2)),
            Arc::new(|_u: &RVec<f64>, _j| RMat::zeros(2, 2)),
            Arc::new(|_u: &RVec<f64>, _j| RMat::zeros(2, 2)),
        );
        let u = DVector::from_vec(vec![1.3, -0.7]);
        let der = m.derivative_matrices(&u).unwrap();
        let exact = RMat::from_row_slice(2, 2, &[0.0, 1.0, 3.0 * 1.3 * 1.3, 0.0]);
        assert!((&der.a_j[0] - exact).norm() < 1e-6);
    }

    #[test]
    fn nonsymmetric_g_rejected() {
        let flux: Vec<VecFn<f64>> = vec![Arc::new(|_u: &RVec<f64>| DVector::zeros(2))];
        let m = ModelDef::new(
            "bad_g",
            1,
            2,
            flux,
            Arc::new(|u: &RVec<f64>| DVector::from_vec(vec![u[0] + u[1], u[0] * 0.0])),
            Arc::new(|_u: &RVec<f64>| RMat::identity(2, 2)),
            Arc::new(|_u: &RVec<f64>, _j, _k| RMat::identity(2, 2)),
            Arc::new(|_u: &RVec<f64>, _j| RMat::zeros(2, 2)),
            Arc::new(|_u: &RVec<f64>, _j| RMat::zeros(2, 2)),
        );
        assert!(matches!(
            m.derivative_matrices(&DVector::from_vec(vec![0.0, 0.0])),
            Err(Error::NonSymmetricA0 { .. })
        ));
    }

    #[test]
    fn symbols_vanish_at_zero_wavenumber() {
        let m = ModelDef::<f64>::burgers_dw(1.0, 2);
        let s = m.assemble_symbols(&v1(0.7), &[0.0, 0.0]).unwrap();
        assert_eq!(s.a[(0, 0)], 0.0);
        assert_eq!(s.b[(0, 0)], 0.0);
        assert_eq!(s.c[(0, 0)], 0.0);
    }

    #[test]
    fn b_symbol_is_squared_norm_for_identity_diffusion() {
        let m = ModelDef::<f64>::burgers_dw(1.0, 2);
        let s = m.assemble_symbols(&v1(0.0), &[1.0, 2.0]).unwrap();
        assert!((s.b[(0, 0)] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn symbol_a_is_linear_in_xi() {
        let m = ModelDef::<f64>::acoustics_dw(0.5, 0.0);
        let u = DVector::from_vec(vec![0.1, -0.2, 0.3]);
        let xi1 = [0.4, -1.1];
        let xi2 = [-0.9, 0.6];
        let sum = [xi1[0] + xi2[0], xi1[1] + xi2[1]];
        let s1 = m.assemble_symbols(&u, &xi1).unwrap();
        let s2 = m.assemble_symbols(&u, &xi2).unwrap();
        let s12 = m.assemble_symbols(&u, &sum).unwrap();
        assert!((&s1.a + &s2.a - &s12.a).norm() < 1e-10);
        assert!((&s1.c + &s2.c - &s12.c).norm() < 1e-10);
    }

    #[test]
    fn b_symbol_is_quadratic_in_xi() {
        let m = ModelDef::<f64>::acoustics_dw(0.5, 0.0);
        let u = DVector::from_vec(vec![0.0, 0.0, 0.0]);
        let xi = [0.7, -0.2];
        let xi2 = [1.4, -0.4];
        let s1 = m.assemble_symbols(&u, &xi).unwrap();
        let s2 = m.assemble_symbols(&u, &xi2).unwrap();
        assert!((&s1.b * 4.0 - &s2.b).norm() < 1e-12);
    }

    #[test]
    fn dispersion_matrix_zero_at_origin() {
        let m = ModelDef::<f64>::burgers_dw(1.0, 2);
        let p = m
            .dispersion_matrix(&v1(0.5), Complex::new(0.0, 0.0), &[0.0, 0.0])
            .unwrap();
        assert!(p.norm() < 1e-14);
    }

    #[test]
    fn dispersion_matrix_matches_scalar_formula() {
        // P = a l^2 + l + |xi|^2 + i u xi_1 for the scalar model
        let a = 0.7;
        let m = ModelDef::<f64>::burgers_dw(a, 2);
        let u = 0.4;
        let lam = Complex::new(-0.3, 1.1);
        let xi = [0.9, -0.5];
        let p = m.dispersion_matrix(&v1(u), lam, &xi).unwrap();
        let expect = lam * lam * a
            + lam
            + Complex::new(xi[0] * xi[0] + xi[1] * xi[1], 0.0)
            + Complex::new(0.0, u * xi[0]);
        assert!((p[(0, 0)] - expect).norm() < 1e-12);
    }

    #[test]
    fn dispersion_conjugation_symmetry() {
        let m = ModelDef::<f64>::acoustics_dw(0.5, 0.0);
        let u = DVector::from_vec(vec![0.2, 0.1, -0.3]);
        let lam = Complex::new(0.2, 0.8);
        let xi = [0.3, -0.6];
        let p1 = m.dispersion_matrix(&u, lam.conj(), &[-xi[0], -xi[1]]).unwrap();
        let p2 = m.dispersion_matrix(&u, lam, &xi).unwrap().map(|z| z.conj());
        assert!((p1 - p2).norm() < 1e-12);
    }

    #[test]
    fn dispersion_roots_scalar_quadratic() {
        // a = 1, u = 0, xi = (1, 0): roots of l^2 + l + 1 = (-1 +- i sqrt 3)/2
        let m = ModelDef::<f64>::burgers_dw(1.0, 2);
        let mut roots = m.dispersion_roots(&v1(0.0), &[1.0, 0.0]).unwrap();
        roots.sort_by(|x, y| x.im.partial_cmp(&y.im).unwrap());
        let s3 = 3.0f64.sqrt() / 2.0;
        assert!((roots[0] - Complex::new(-0.5, -s3)).norm() < 1e-10);
        assert!((roots[1] - Complex::new(-0.5, s3)).norm() < 1e-10);
    }

    #[test]
    fn dispersion_roots_at_zero_wavenumber() {
        // xi = 0: lambda (lambda A + A^0) = 0 -> {0 (n-fold)} u spec(-A^{-1}A^0)
        let m = ModelDef::<f64>::acoustics_dw(0.5, 0.0);
        let u = DVector::from_vec(vec![0.0, 0.0, 0.0]);
        let mut roots = m.dispersion_roots(&u, &[0.0, 0.0]).unwrap();
        roots.sort_by(|x, y| x.re.partial_cmp(&y.re).unwrap());
        for r in &roots[0..3] {
            assert!((r - Complex::new(-2.0, 0.0)).norm() < 1e-9, "fast roots at -1/a");
        }
        for r in &roots[3..6] {
            assert!(r.norm() < 1e-9, "slow roots at 0");
        }
    }

    #[test]
    fn dispersion_root_supercharacteristic_instability() {
        // a = 1, u = 2, xi = (10, 0): quadratic formula oracle for
        // l^2 + l + 100 + 20i = 0; one root has positive real part.
        let m = ModelDef::<f64>::burgers_dw(1.0, 2);
        let roots = m.dispersion_roots(&v1(2.0), &[10.0, 0.0]).unwrap();
        let disc = Complex::new(1.0 - 400.0, -80.0).sqrt();
        let oracle = (-Complex::new(1.0, 0.0) + disc) / 2.0;
        let found = roots
            .iter()
            .cloned()
            .min_by(|a, b| (a - oracle).norm().partial_cmp(&(b - oracle).norm()).unwrap())
            .unwrap();
        assert!((found - oracle).norm() < 1e-9);
        assert!(found.re > 0.49 && found.re < 0.51);
    }

    #[test]
    fn root_count_and_conjugation_closure() {
        let m = ModelDef::<f64>::acoustics_dw(0.8, 0.0);
        let u = DVector::from_vec(vec![0.1, 0.2, -0.1]);
        let xi = [0.5, 1.2];
        let roots = m.dispersion_roots(&u, &xi).unwrap();
        assert_eq!(roots.len(), 6);
        let neg = m.dispersion_roots(&u, &[-xi[0], -xi[1]]).unwrap();
        for r in &roots {
            let rc = r.conj();
            let best = neg.iter().map(|s| (s - rc).norm()).fold(f64::MAX, f64::min);
            assert!(best < 1e-8, "conjugate of {r} missing in negated-frequency set");
        }
    }
}
