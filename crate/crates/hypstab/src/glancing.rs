//! Glancing sets of the endstate characteristic symbol.
//!
//! The first-order symbol at an endstate has n real characteristic roots
//! `tau = a_l(xi_1, eta)`. A frequency `(tau, eta)` is glancing when some
//! branch has a critical point in `xi_1` there; the contact order s-bar >= 2
//! is the multiplicity of the root of `tau - a_l(., eta)`. Branch derivatives
//! are computed by local polynomial fits rather than eigen-derivative
//! formulas, which stays robust at near-degeneracies.

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::ModelDef;
use crate::report::Verdict;
use crate::scalar::{norm2, real, to_f64, RMat, RVec, Real};
use std::io::Write;

/// Tolerance ladder for multiplicity detection: |derivative| <= ZERO * scale
/// counts as zero, >= NONZERO * scale as nonzero; the gap between them raises
/// `MultiplicityAmbiguous` rather than guessing.
const ZERO_REL: f64 = 1e-7;
const NONZERO_REL: f64 = 1e-3;
const MAX_CONTACT_ORDER: usize = 6;

/// The n characteristic roots tau of det(tau A^0 + xi_1 A^1 + sum eta_j A^j),
/// sorted ascending; they are real under (H_A).
pub fn char_roots<T: Real>(
    model: &ModelDef<T>,
    endstate: &RVec<T>,
    xi1: T,
    eta: &[T],
) -> Result<Vec<T>> {
    let der = model.derivative_matrices(endstate)?;
    let a0_inv = linalg::inverse_real(&der.a0, "A0")?;
    let mut m = RMat::zeros(model.n, model.n);
    m += &der.a_j[0] * xi1;
    for j in 1..model.d {
        m += &der.a_j[j] * eta[j - 1];
    }
    let sym = -(&a0_inv * m);
    let vals = linalg::eigenvalues_real(&sym)?;
    let scale = sym.norm().max(T::one());
    let mut out = Vec::with_capacity(model.n);
    for v in vals {
        if v.im.abs() > real::<T>(1e-8) * scale {
            return Err(Error::BranchTracking(format!(
                "complex characteristic root {:.3e}+{:.3e}i",
                to_f64(v.re),
                to_f64(v.im)
            )));
        }
        out.push(v.re);
    }
    out.sort_by(|a, b| to_f64(*a).partial_cmp(&to_f64(*b)).unwrap());
    Ok(out)
}

/// Characteristic branches sampled over a xi_1 window, labeled by continuity.
#[derive(Clone, Debug)]
pub struct BranchTable<T: Real> {
    pub xi1s: Vec<T>,
    /// branches[l][i] = a_l(xi1s[i], eta).
    pub branches: Vec<Vec<T>>,
    pub eta: Vec<T>,
}

#[derive(Clone, Copy, Debug)]
pub struct Window<T> {
    pub lo: T,
    pub hi: T,
    pub n_samples: usize,
}

impl<T: Real> Window<T> {
    /// Default search window [-10 (1 + |eta|), 10 (1 + |eta|)].
    pub fn default_for(eta: &[T]) -> Self {
        let r = real::<T>(10.0) * (T::one() + norm2(eta));
        Self { lo: -r, hi: r, n_samples: 801 }
    }
}

/// Sample all branches over the window, tracking them by continuity in xi_1.
pub fn branch_table<T: Real>(
    model: &ModelDef<T>,
    endstate: &RVec<T>,
    eta: &[T],
    window: &Window<T>,
) -> Result<BranchTable<T>> {
    let n = model.n;
    let m = window.n_samples.max(8);
    let step = (window.hi - window.lo) / real((m - 1) as f64);
    let xi1s: Vec<T> = (0..m).map(|i| window.lo + step * real(i as f64)).collect();
    let mut branches: Vec<Vec<T>> = vec![Vec::with_capacity(m); n];
    let mut prev: Option<Vec<T>> = None;
    for (i, &x) in xi1s.iter().enumerate() {
        let roots = char_roots(model, endstate, x, eta)?;
        let assigned = match &prev {
            None => roots.clone(),
            Some(p) => {
                // Predict each branch linearly and take the nearest root.
                let mut taken = vec![false; n];
                let mut next = vec![T::zero(); n];
                for l in 0..n {
                    let predict = if i >= 2 {
                        p[l] + (p[l] - branches[l][i - 2])
                    } else {
                        p[l]
                    };
                    let mut best: Option<(usize, T)> = None;
                    for (k, &r) in roots.iter().enumerate() {
                        if taken[k] {
                            continue;
                        }
                        let d = (r - predict).abs();
                        if best.map_or(true, |(_, bd)| d < bd) {
                            best = Some((k, d));
                        }
                    }
                    let (k, _) = best.ok_or_else(|| {
                        Error::BranchTracking("assignment exhausted".into())
                    })?;
                    taken[k] = true;
                    next[l] = roots[k];
                }
                next
            }
        };
        for l in 0..n {
            branches[l].push(assigned[l]);
        }
        prev = Some(assigned);
    }
    Ok(BranchTable { xi1s, branches, eta: eta.to_vec() })
}

impl<T: Real> BranchTable<T> {
    /// Piecewise-linear predicted branch value (continuity anchor).
    fn predict(&self, l: usize, xi1: T) -> T {
        let m = self.xi1s.len();
        let lo = self.xi1s[0];
        let step = self.xi1s[1] - self.xi1s[0];
        let t = (xi1 - lo) / step;
        let i = to_f64(t).floor().clamp(0.0, (m - 2) as f64) as usize;
        let s = t - real(i as f64);
        self.branches[l][i] * (T::one() - s) + self.branches[l][i + 1] * s
    }
}

/// Evaluate branch l exactly at xi_1 (nearest root to the table prediction).
pub fn branch_value<T: Real>(
    model: &ModelDef<T>,
    endstate: &RVec<T>,
    table: &BranchTable<T>,
    l: usize,
    xi1: T,
) -> Result<T> {
    let roots = char_roots(model, endstate, xi1, &table.eta)?;
    let predict = table.predict(l, xi1);
    Ok(roots
        .into_iter()
        .min_by(|a, b| {
            to_f64((*a - predict).abs()).partial_cmp(&to_f64((*b - predict).abs())).unwrap()
        })
        .unwrap())
}

/// Local polynomial fit of a branch function around a point; returns the
/// physical derivatives at the center up to the fitted degree.
fn local_derivatives<T: Real>(
    f: &mut dyn FnMut(T) -> Result<T>,
    center: T,
    half_width: T,
    degree: usize,
) -> Result<Vec<T>> {
    let n_pts = (3 * (degree + 1)).max(13);
    let mut ts = Vec::with_capacity(n_pts);
    let mut ys = Vec::with_capacity(n_pts);
    for i in 0..n_pts {
        let t = -T::one() + real::<T>(2.0 * i as f64 / (n_pts - 1) as f64);
        ts.push(t);
        ys.push(f(center + t * half_width)?);
    }
    // Vandermonde least squares in the normalized variable.
    let mut vand = RMat::<T>::zeros(n_pts, degree + 1);
    for (i, &t) in ts.iter().enumerate() {
        let mut p = T::one();
        for k in 0..=degree {
            vand[(i, k)] = p;
            p *= t;
        }
    }
    let rhs = RVec::from_vec(ys);
    let svd = vand.svd(true, true);
    let coef = svd
        .solve(&rhs, real::<T>(1e-13))
        .map_err(|e| Error::Convergence(format!("polynomial fit: {e}")))?;
    // d^s/dxi^s = s! c_s / half_width^s.
    let mut out = Vec::with_capacity(degree + 1);
    let mut fact = T::one();
    for s in 0..=degree {
        if s > 0 {
            fact *= real(s as f64);
        }
        out.push(coef[s] * fact / half_width.powi(s as i32));
    }
    Ok(out)
}

/// A located glancing point on one branch.
#[derive(Clone, Copy, Debug)]
pub struct GlancingPoint<T> {
    pub xi1: T,
    /// Branch value a_l at the critical point (the glancing surface height).
    pub value: T,
    /// Contact order s-bar >= 2.
    pub contact_order: usize,
}

/// Critical points and contact orders of one branch function on a window.
/// The closure-based form backs both the model path and synthetic oracles.
pub fn find_glancing_on<T: Real>(
    f: &mut dyn FnMut(T) -> Result<T>,
    window: &Window<T>,
    scale_hint: T,
) -> Result<Vec<GlancingPoint<T>>> {
    let m = window.n_samples.max(64);
    let step = (window.hi - window.lo) / real((m - 1) as f64);
    let xs: Vec<T> = (0..m).map(|i| window.lo + step * real(i as f64)).collect();
    let mut ys = Vec::with_capacity(m);
    for &x in &xs {
        ys.push(f(x)?);
    }
    let scale = ys
        .iter()
        .fold(T::zero(), |a: T, &y| a.max(y.abs()))
        .max(scale_hint)
        .max(T::one());
    // Coarse derivative: centered differences of the samples.
    let mut dy = vec![T::zero(); m];
    for i in 1..m - 1 {
        dy[i] = (ys[i + 1] - ys[i - 1]) / (step + step);
    }
    dy[0] = dy[1];
    dy[m - 1] = dy[m - 2];
    // An identically-critical (flat) branch cannot be classified.
    let flat = dy.iter().filter(|v| v.abs() <= real::<T>(ZERO_REL) * scale).count();
    if flat * 2 > m {
        return Err(Error::MultiplicityAmbiguous(
            "branch is identically critical on the window".into(),
        ));
    }
    let mut found: Vec<GlancingPoint<T>> = Vec::new();
    for i in 1..m - 1 {
        if !(dy[i] * dy[i + 1] < T::zero() || dy[i] == T::zero()) {
            continue;
        }
        // Polish by Newton on the derivative of a local quartic fit.
        let mut x_star = xs[i];
        let mut half = step * real::<T>(8.0);
        for _ in 0..40 {
            let d = local_derivatives(f, x_star, half, 4)?;
            if d[2].abs() <= real::<T>(ZERO_REL) * scale {
                // Higher contact: fall back to bisection on the fitted slope.
                break;
            }
            let dx = -d[1] / d[2];
            x_star += dx.max(-half).min(half);
            if dx.abs() < real::<T>(1e-13) * (T::one() + x_star.abs()) {
                break;
            }
            half = (half * real(0.7)).max(step);
        }
        // Secant/bisection refinement on the coarse-derivative bracket keeps
        // flat-degenerate cases honest.
        if (xs[i] - x_star).abs() > step * real(16.0) {
            x_star = xs[i];
        }
        // Contact order from the tolerance ladder.
        let half_c = step * real::<T>(12.0);
        let degree = MAX_CONTACT_ORDER + 2;
        let d = local_derivatives(f, x_star, half_c, degree)?;
        if d[1].abs() > real::<T>(NONZERO_REL) * scale {
            continue; // spurious (no critical point after polish)
        }
        if d[1].abs() > real::<T>(ZERO_REL) * scale {
            return Err(Error::MultiplicityAmbiguous(format!(
                "first derivative {:.3e} between tolerance rungs at xi1 = {:.6}",
                to_f64(d[1].abs()),
                to_f64(x_star)
            )));
        }
        let mut order = None;
        for s in 2..=MAX_CONTACT_ORDER {
            let mag = d[s].abs();
            if mag >= real::<T>(NONZERO_REL) * scale {
                order = Some(s);
                break;
            }
            if mag > real::<T>(ZERO_REL) * scale {
                return Err(Error::MultiplicityAmbiguous(format!(
                    "derivative order {s} has magnitude {:.3e} between tolerance rungs",
                    to_f64(mag)
                )));
            }
        }
        let order = order.ok_or_else(|| {
            Error::MultiplicityAmbiguous(format!(
                "no nonzero derivative up to order {MAX_CONTACT_ORDER}"
            ))
        })?;
        let value = f(x_star)?;
        // Deduplicate points found from adjacent brackets.
        if found.iter().all(|g| (g.xi1 - x_star).abs() > step * real(4.0)) {
            found.push(GlancingPoint { xi1: x_star, value, contact_order: order });
        }
    }
    Ok(found)
}

/// Critical points of characteristic branch l at transverse frequency eta.
pub fn find_glancing<T: Real>(
    model: &ModelDef<T>,
    endstate: &RVec<T>,
    eta: &[T],
    branch: usize,
    window: &Window<T>,
) -> Result<Vec<GlancingPoint<T>>> {
    if norm2(eta) == T::zero() {
        return Err(Error::Domain("glancing search requires eta != 0".into()));
    }
    let table = branch_table(model, endstate, eta, window)?;
    let mut f = |x: T| branch_value(model, endstate, &table, branch, x);
    find_glancing_on(&mut f, window, norm2(eta))
}

/// Glancing surface data at one transverse frequency.
#[derive(Clone, Debug)]
pub struct GlancingData<T: Real> {
    pub eta: Vec<T>,
    pub branch: usize,
    pub points: Vec<GlancingPoint<T>>,
}

/// Full sweep over branches; branches that are identically critical are
/// reported with an empty point list and a note.
pub fn glancing_sweep<T: Real>(
    model: &ModelDef<T>,
    endstate: &RVec<T>,
    eta: &[T],
    window: &Window<T>,
) -> Result<(Vec<GlancingData<T>>, Vec<String>)> {
    let mut out = Vec::new();
    let mut notes = Vec::new();
    for l in 0..model.n {
        match find_glancing(model, endstate, eta, l, window) {
            Ok(points) => out.push(GlancingData { eta: eta.to_vec(), branch: l, points }),
            Err(Error::MultiplicityAmbiguous(msg)) => {
                notes.push(format!("branch {l}: {msg}"));
                out.push(GlancingData { eta: eta.to_vec(), branch: l, points: vec![] });
            }
            Err(e) => return Err(e),
        }
    }
    Ok((out, notes))
}

#[derive(Clone, Debug)]
pub struct S5Report<T: Real> {
    pub verdict: Verdict,
    /// One tracked critical point per eta sample: (eta, xi1, contact order).
    pub tracked: Vec<(Vec<T>, T, usize)>,
    /// (S5) is automatic in dimension d = 2; the check still runs.
    pub vacuous_by_dimension: bool,
}

/// (S5): on an eta-ball around eta0, the tracked critical point keeps its
/// contact order (all intermediate derivatives stay below tolerance).
pub fn check_s5_on<T: Real>(
    f: &mut dyn FnMut(T, &[T]) -> Result<T>,
    d: usize,
    eta0: &[T],
    radius: T,
    seed_xi1: T,
    s_bar: usize,
    n_samples: usize,
    window: &Window<T>,
) -> Result<S5Report<T>> {
    assert!(s_bar >= 2);
    let samples = eta_ball_samples(eta0, radius, n_samples);
    let vacuous_by_dimension = d == 2;
    let mut verdict = Verdict::new(true, f64::INFINITY);
    let mut tracked = Vec::new();
    let mut xi_prev = seed_xi1;
    let step = (window.hi - window.lo) / real((window.n_samples.max(64) - 1) as f64);
    for eta in &samples {
        let mut g = |x: T| f(x, eta);
        // Continue the critical point: Newton on the (s_bar - 1)-th derivative.
        let mut x_star = xi_prev;
        let half = step * real::<T>(12.0);
        for _ in 0..40 {
            let dv = local_derivatives(&mut g, x_star, half, s_bar + 2)?;
            let num = dv[s_bar - 1];
            let den = dv[s_bar];
            if den.abs() <= real::<T>(1e-12) {
                break;
            }
            let dx = -num / den;
            x_star += dx.max(-half).min(half);
            if dx.abs() < real::<T>(1e-12) * (T::one() + x_star.abs()) {
                break;
            }
        }
        let dv = local_derivatives(&mut g, x_star, half, s_bar + 2)?;
        let scale = g(x_star)?.abs().max(norm2(eta)).max(T::one());
        let mut ok = dv[s_bar].abs() >= real::<T>(NONZERO_REL) * scale;
        let mut worst = dv[s_bar].abs();
        for s in 1..s_bar {
            if dv[s].abs() > real::<T>(ZERO_REL * 10.0) * scale {
                ok = false;
                worst = -dv[s].abs();
            }
        }
        verdict = verdict.and(&Verdict::with_witness(
            ok,
            to_f64(worst),
            format!(
                "eta = {:?}, xi1 = {:.6e}",
                eta.iter().map(|&e| to_f64(e)).collect::<Vec<_>>(),
                to_f64(x_star)
            ),
        ));
        tracked.push((eta.clone(), x_star, s_bar));
        xi_prev = x_star;
    }
    Ok(S5Report { verdict, tracked, vacuous_by_dimension })
}

/// (S5) for a model branch around eta0.
pub fn check_s5<T: Real>(
    model: &ModelDef<T>,
    endstate: &RVec<T>,
    eta0: &[T],
    radius: T,
    branch: usize,
    point: &GlancingPoint<T>,
    n_samples: usize,
) -> Result<S5Report<T>> {
    if norm2(eta0) == T::zero() {
        return Err(Error::Domain("(S5) ball must be centered at eta != 0".into()));
    }
    let window = Window::default_for(eta0);
    let mut f = |x: T, eta: &[T]| -> Result<T> {
        let table = branch_table(model, endstate, eta, &window)?;
        branch_value(model, endstate, &table, branch, x)
    };
    check_s5_on(
        &mut f,
        model.d,
        eta0,
        radius,
        point.xi1,
        point.contact_order,
        n_samples,
        &window,
    )
}

fn eta_ball_samples<T: Real>(eta0: &[T], radius: T, n: usize) -> Vec<Vec<T>> {
    let dim = eta0.len();
    let mut out = Vec::with_capacity(n);
    if dim == 1 {
        for i in 0..n {
            let t = -T::one() + real::<T>(2.0 * i as f64 / (n - 1).max(1) as f64);
            out.push(vec![eta0[0] + radius * t]);
        }
    } else {
        // Ring samples in the first two coordinates.
        for i in 0..n {
            let th = real::<T>(2.0 * std::f64::consts::PI * i as f64 / n as f64);
            let mut e = eta0.to_vec();
            e[0] += radius * th.cos();
            e[1] += radius * th.sin();
            out.push(e);
        }
    }
    out
}

/// CSV export of glancing surfaces: eta..., xi1_r, a_lr, s_bar_r.
pub fn write_glancing_csv<T: Real, W: Write>(data: &[GlancingData<T>], mut w: W) -> Result<()> {
    let d_eta = data.first().map(|g| g.eta.len()).unwrap_or(1);
    let mut header = Vec::new();
    for j in 0..d_eta {
        header.push(format!("eta{}", j + 1));
    }
    header.extend(["branch".to_string(), "xi1".into(), "a".into(), "contact_order".into()]);
    writeln!(w, "{}", header.join(","))?;
    for g in data {
        for p in &g.points {
            let mut row: Vec<String> =
                g.eta.iter().map(|&e| format!("{:.12e}", to_f64(e))).collect();
            row.push(format!("{}", g.branch));
            row.push(format!("{:.12e}", to_f64(p.xi1)));
            row.push(format!("{:.12e}", to_f64(p.value)));
            row.push(format!("{}", p.contact_order));
            writeln!(w, "{}", row.join(","))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelDef;
    use nalgebra::DVector;

    #[test]
    fn acoustics_char_roots() {
        let m = ModelDef::<f64>::acoustics_dw(0.5, 0.0);
        let z = DVector::zeros(3);
        let roots = char_roots(&m, &z, 0.8, &[0.6]).unwrap();
        // {0, +-|xi|} with |xi| = 1.
        assert!((roots[0] + 1.0).abs() < 1e-10);
        assert!(roots[1].abs() < 1e-10);
        assert!((roots[2] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn scalar_branch_is_linear() {
        let m = ModelDef::<f64>::burgers_dw(1.0, 2);
        let u = DVector::from_vec(vec![-0.4]);
        let roots = char_roots(&m, &u, 2.0, &[0.3]).unwrap();
        // tau = -u xi_1 (transverse flux is zero).
        assert!((roots[0] - 0.8).abs() < 1e-10);
    }

    #[test]
    fn zero_frequency_roots_vanish() {
        let m = ModelDef::<f64>::acoustics_dw(0.5, 0.0);
        let z = DVector::zeros(3);
        let roots = char_roots(&m, &z, 0.0, &[0.0]).unwrap();
        for r in roots {
            assert!(r.abs() < 1e-12);
        }
    }

    #[test]
    fn acoustics_glancing_point() {
        // Branch +|(xi1, eta)|: critical at xi1 = 0 with value |eta| and
        // second-order contact.
        let m = ModelDef::<f64>::acoustics_dw(0.5, 0.0);
        let z = DVector::zeros(3);
        let eta = [0.75];
        let window = Window::default_for(&eta);
        let pts = find_glancing(&m, &z, &eta, 2, &window).unwrap();
        assert_eq!(pts.len(), 1);
        assert!(pts[0].xi1.abs() < 1e-8, "xi1 = {:.3e}", pts[0].xi1);
        assert!((pts[0].value - 0.75).abs() < 1e-8);
        assert_eq!(pts[0].contact_order, 2);
        // The minus branch mirrors it.
        let pts = find_glancing(&m, &z, &eta, 0, &window).unwrap();
        assert_eq!(pts.len(), 1);
        assert!((pts[0].value + 0.75).abs() < 1e-8);
    }

    #[test]
    fn acoustics_flat_branch_ambiguous() {
        let m = ModelDef::<f64>::acoustics_dw(0.5, 0.0);
        let z = DVector::zeros(3);
        let eta = [0.75];
        let window = Window::default_for(&eta);
        let r = find_glancing(&m, &z, &eta, 1, &window);
        assert!(matches!(r, Err(Error::MultiplicityAmbiguous(_))), "flat branch: {r:?}");
    }

    #[test]
    fn scalar_branch_has_no_glancing() {
        let m = ModelDef::<f64>::burgers_dw(1.0, 2);
        let u = DVector::from_vec(vec![-0.4]);
        let eta = [0.5];
        let window = Window::default_for(&eta);
        let pts = find_glancing(&m, &u, &eta, 0, &window).unwrap();
        assert!(pts.is_empty(), "linear branch must have no critical points");
    }

    #[test]
    fn quartic_synthetic_contact_order() {
        // a(x) = x^4 - 1.3: quartic contact at 0.
        let window = Window { lo: -2.0, hi: 2.0, n_samples: 801 };
        let mut f = |x: f64| -> crate::error::Result<f64> { Ok(x.powi(4) - 1.3) };
        let pts = find_glancing_on(&mut f, &window, 1.0).unwrap();
        assert_eq!(pts.len(), 1);
        assert_eq!(pts[0].contact_order, 4);
        assert!(pts[0].xi1.abs() < 1e-3);
    }

    #[test]
    fn s5_acoustics_persistence() {
        let m = ModelDef::<f64>::acoustics_dw(0.5, 0.0);
        let z = DVector::zeros(3);
        let eta = [0.75];
        let window = Window::default_for(&eta);
        let pts = find_glancing(&m, &z, &eta, 2, &window).unwrap();
        let rep = check_s5(&m, &z, &eta, 0.15, 2, &pts[0], 16).unwrap();
        assert!(rep.verdict.pass, "{:?}", rep.verdict);
        assert!(rep.vacuous_by_dimension);
        // The tracked critical point stays at xi1 = 0 for the cone branch.
        for (_, xi1, s) in &rep.tracked {
            assert!(xi1.abs() < 1e-6);
            assert_eq!(*s, 2);
        }
    }

    #[test]
    fn s5_detects_multiplicity_drop() {
        // Synthetic cubic-contact branch whose contact order drops off-center:
        // a(x, eta) = x^3 + (eta - eta0) x has s-bar = 3 at eta0 only.
        let eta0 = [1.0];
        let window = Window { lo: -3.0, hi: 3.0, n_samples: 801 };
        let mut f = |x: f64, eta: &[f64]| -> crate::error::Result<f64> {
            Ok(x.powi(3) + (eta[0] - 1.0) * x)
        };
        let rep = check_s5_on(&mut f, 2, &eta0, 0.2, 0.0, 3, 16, &window).unwrap();
        assert!(!rep.verdict.pass, "multiplicity drop must fail (S5)");
    }

    #[test]
    fn rotation_invariance_of_surfaces() {
        // d = 2 rotational invariance: the surface height depends on |eta|.
        let m = ModelDef::<f64>::acoustics_dw(0.5, 0.0);
        let z = DVector::zeros(3);
        let w1 = Window::default_for(&[0.6]);
        let p1 = find_glancing(&m, &z, &[0.6], 2, &w1).unwrap();
        let p2 = find_glancing(&m, &z, &[-0.6], 2, &w1).unwrap();
        assert!((p1[0].value - p2[0].value).abs() < 1e-8);
        assert_eq!(p1[0].contact_order, p2[0].contact_order);
    }

    #[test]
    fn multiplicity_stable_under_stencil_halving() {
        let window_a = Window { lo: -2.0, hi: 2.0, n_samples: 801 };
        let window_b = Window { lo: -2.0, hi: 2.0, n_samples: 401 };
        let mut f = |x: f64| -> crate::error::Result<f64> { Ok((x * x + 0.5).sqrt()) };
        let pa = find_glancing_on(&mut f, &window_a, 1.0).unwrap();
        let pb = find_glancing_on(&mut f, &window_b, 1.0).unwrap();
        assert_eq!(pa[0].contact_order, pb[0].contact_order);
        assert!((pa[0].xi1 - pb[0].xi1).abs() < 1e-6);
    }

    #[test]
    fn glancing_surface_back_substitutes() {
        // tau = a_l(xi1_r, eta) must reproduce a characteristic root.
        let m = ModelDef::<f64>::acoustics_dw(0.5, 0.0);
        let z = DVector::zeros(3);
        let eta = [0.9];
        let window = Window::default_for(&eta);
        let pts = find_glancing(&m, &z, &eta, 2, &window).unwrap();
        let roots = char_roots(&m, &z, pts[0].xi1, &eta).unwrap();
        let best = roots.iter().map(|r| (r - pts[0].value).abs()).fold(f64::MAX, f64::min);
        assert!(best < 1e-8);
    }
}
