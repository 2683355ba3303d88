//! Closed-form relaxed (lamination) elastic energies and their analytic
//! derivatives.
//!
//! The two-dimensional relaxed energy is
//!
//! ```text
//! W^(d, e) = d1 W1(e1*) + d2 W2(e2*) + beta* d1 d2 det(e2* - e1*)
//! ```
//!
//! with the optimal phase strains `e_i*` obtained from the translated
//! stationarity system and the translation amount `beta*` classified into four
//! regimes by the sign pattern of `phi(beta) = -det(alpha(beta,d)^{-1} e(eps))`
//! on `[0, gamma*]`. One-dimensional and scalar three-dimensional (anti-plane
//! shear) closed forms are implemented separately; a global C^1 extension in
//! `d` with linear growth covers order-parameter values outside `[0, 1]`.
//!
//! Derivatives are the exact gradients of the value formula. In every
//! regime the strain gradient reduces to the phase-averaged stress: the
//! chain terms through the optimal strains and the translation term cancel
//! exactly through the averaging constraint and the traction continuity of
//! the optimal strains, and the root of `phi` is a flat point of the
//! translated bound, so its movement contributes nothing either. The
//! finite-difference oracle pins all of this down.

use crate::energy::{w_micro, w_micro_stress, LinearTheoryParams, PhaseParams, ScalarPhaseParams};
use crate::error::{Error, Result};
use crate::tensor::{
    det_sym, mat2_add_scaled, mat2_solve, mat2_vec, mat3_add_scaled, mat3_vec, sym3_pseudo_solve,
    vec2_axpy, vec2_dot, Dim, Mat3, SymTensor, Vec2, TRACE_REMOVER,
};

/// Microstructure regime of the two-dimensional relaxation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RegimeLabel {
    /// homogeneous data; the energy does not depend on the microstructure
    Zero,
    /// two optimal rank-I laminates, no translation
    One,
    /// unique optimal rank-I laminate, interior translation root
    Two,
    /// two optimal rank-II laminates, translation capped at gamma*
    Three,
}

impl RegimeLabel {
    pub fn as_code(self) -> u8 {
        match self {
            RegimeLabel::Zero => 0,
            RegimeLabel::One => 1,
            RegimeLabel::Two => 2,
            RegimeLabel::Three => 3,
        }
    }
}

/// Largest admissible translation together with the per-phase values.
#[derive(Clone, Copy, Debug)]
pub struct GammaStar {
    pub value: f64,
    pub gamma1: f64,
    pub gamma2: f64,
}

/// Full evaluation of a relaxed energy at one `(d, eps)` point.
#[derive(Clone, Copy, Debug)]
pub struct RelaxedEval {
    pub value: f64,
    pub d_d: f64,
    pub d_eps: SymTensor,
    pub regime: RegimeLabel,
    pub beta_star: f64,
    pub eps1_star: SymTensor,
    pub eps2_star: SymTensor,
    /// phi evaluated at beta*, kept for regime-boundary diagnostics
    pub phi_at_beta: f64,
}

/// Evaluation of the scalar three-dimensional relaxed energy; strains are
/// gradients of the scalar deformation, stored as 2-vectors.
#[derive(Clone, Copy, Debug)]
pub struct ScalarRelaxedEval {
    pub value: f64,
    pub d_d: f64,
    pub d_f: Vec2,
    pub regime: RegimeLabel,
    pub beta_star: f64,
    pub grad_eta1: Vec2,
    pub grad_eta2: Vec2,
}

const BACKOFF: f64 = 1e-8;

fn phase_fractions(d: f64) -> (f64, f64) {
    (d, 1.0 - d)
}

/// `alpha(beta, d) = d2 alpha1 + d1 alpha2 - beta T` as a Mandel matrix.
fn alpha_beta(beta: f64, d: f64, p: &PhaseParams) -> Mat3 {
    let (d1, d2) = phase_fractions(d);
    let mix = mat3_add_scaled(&p.alpha1.m, d2, &p.alpha2.m, d1);
    mat3_add_scaled(&mix, 1.0, &TRACE_REMOVER, -beta)
}

/// `e(eps) = alpha2 (epsT2 - eps) - alpha1 (epsT1 - eps)`.
fn e_of_eps(e: &SymTensor, p: &PhaseParams) -> SymTensor {
    let r2 = p.alpha2.apply(&p.eps_t2.sub(e)).expect("dims checked");
    let r1 = p.alpha1.apply(&p.eps_t1.sub(e)).expect("dims checked");
    r2.sub(&r1)
}

fn homogeneity_tolerance(e: &SymTensor, p: &PhaseParams) -> f64 {
    1e-12
        * (p.alpha1.norm() + p.alpha2.norm())
        * (e.norm() + p.eps_t1.norm() + p.eps_t2.norm() + 1.0)
}

fn solve_alpha(a: &Mat3, rhs: &SymTensor) -> Result<SymTensor> {
    match sym3_pseudo_solve(a, &rhs.c) {
        Ok(c) => Ok(SymTensor { dim: Dim::Two, c }),
        Err(_) => Err(Error::SingularAlpha),
    }
}

/// Largest admissible translation `gamma* = min(gamma1, gamma2)` where
/// `gamma_i` is the reciprocal of the largest eigenvalue of
/// `alpha_i^{-1/2} T alpha_i^{-1/2}`.
pub fn gamma_star(p: &PhaseParams) -> Result<GammaStar> {
    let mut gammas = [0.0; 2];
    for (k, alpha) in [&p.alpha1, &p.alpha2].iter().enumerate() {
        let s = alpha.inv_sqrt()?;
        let b = crate::tensor::mat3_mul(&s, &crate::tensor::mat3_mul(&TRACE_REMOVER, &s));
        let (evals, _) = crate::tensor::sym3_eigen(&b);
        let lmax = evals[2];
        if lmax <= 0.0 {
            return Err(Error::NonSpdModulus(lmax));
        }
        gammas[k] = 1.0 / lmax;
    }
    Ok(GammaStar { value: gammas[0].min(gammas[1]), gamma1: gammas[0], gamma2: gammas[1] })
}

/// `phi(beta, d, eps) = -det(alpha(beta,d)^{-1} e(eps))`.
pub fn phi(beta: f64, d: f64, e: &SymTensor, p: &PhaseParams) -> Result<f64> {
    let ev = e_of_eps(e, p);
    let delta = solve_alpha(&alpha_beta(beta, d, p), &ev)?;
    Ok(-det_sym(&delta))
}

/// Classifies the regime and returns the translation amount `beta*`.
///
/// Regime 0 is detected by the homogeneity of the data (`||e(eps)||` below a
/// scaled threshold); the sign of `phi` at `0` and at `gamma* (1 - 1e-8)`
/// separates Regimes I and III; otherwise the unique root `beta_II` is found
/// by bisection.
pub fn classify_regime(d: f64, e: &SymTensor, p: &PhaseParams) -> Result<(RegimeLabel, f64)> {
    let ev = e_of_eps(e, p);
    if ev.norm() <= homogeneity_tolerance(e, p) {
        return Ok((RegimeLabel::Zero, 0.0));
    }
    let gs = gamma_star(p)?;
    let phi0 = phi(0.0, d, e, p)?;
    if phi0 > 0.0 {
        return Ok((RegimeLabel::One, 0.0));
    }
    // alpha(gamma*, d) may be singular; classify at a backed-off point
    let g_eff = gs.value * (1.0 - BACKOFF);
    let phig = phi(g_eff, d, e, p)?;
    if phig < 0.0 {
        return Ok((RegimeLabel::Three, gs.value));
    }
    if phi0 == 0.0 {
        // tie-break: the root sits at the left end; value matches Regime I
        return Ok((RegimeLabel::Two, 0.0));
    }
    let tol = (1e-12 * gs.value).max(1e-14);
    let beta = bisect(|b| phi(b, d, e, p), 0.0, g_eff, phi0, phig, tol, 200)?;
    Ok((RegimeLabel::Two, beta))
}

fn bisect(
    mut f: impl FnMut(f64) -> Result<f64>,
    mut lo: f64,
    mut hi: f64,
    flo: f64,
    fhi: f64,
    tol: f64,
    max_iter: usize,
) -> Result<f64> {
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(Error::RootNotBracketed);
    }
    let mut sign_lo = flo.signum();
    for _ in 0..max_iter {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol {
            return Ok(mid);
        }
        let fm = f(mid)?;
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == sign_lo {
            lo = mid;
            sign_lo = fm.signum();
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn check_commutation(p: &PhaseParams) -> Result<()> {
    for (i, alpha) in [&p.alpha1, &p.alpha2].iter().enumerate() {
        let comm = alpha.commutator_with_t();
        if comm > 1e-10 * alpha.norm() {
            return Err(Error::NonCommuting(i + 1, comm));
        }
    }
    Ok(())
}

/// Evaluates the two-dimensional relaxed energy with the regime machinery.
///
/// Regimes II and III require the moduli to commute with `T`; non-commuting
/// inputs are rejected there with `NonCommuting`.
pub fn eval_2d(d: f64, e: &SymTensor, p: &PhaseParams) -> Result<RelaxedEval> {
    eval_2d_opts(d, e, p, false)
}

/// Like [`eval_2d`], optionally adding the root's strain sensitivity
/// `(d beta*/d eps) d1 d2 det(delta*)` to the stress. The solver path keeps
/// the flag off: at the Regime II root `det(delta*)` vanishes, so the term
/// contributes only the bisection residual; it is exposed for studies of the
/// strain-dependent-translation case.
pub fn eval_2d_opts(
    d: f64,
    e: &SymTensor,
    p: &PhaseParams,
    include_beta_eps_chain: bool,
) -> Result<RelaxedEval> {
    if !(0.0..=1.0).contains(&d) {
        return Err(Error::Config(format!(
            "eval_2d requires d in [0,1], got {d}; use the extended evaluator"
        )));
    }
    let (regime, beta) = classify_regime(d, e, p)?;
    if matches!(regime, RegimeLabel::Two | RegimeLabel::Three) {
        check_commutation(p)?;
    }
    let mut out = eval_2d_at_beta(d, e, p, beta, regime)?;
    if include_beta_eps_chain && regime == RegimeLabel::Two {
        let (d1, d2) = phase_fractions(d);
        let grad_beta = beta_root_sensitivities(d, e, p, beta)?.1;
        let det_delta = -out.phi_at_beta;
        out.d_eps = out.d_eps.add(&grad_beta.scale(d1 * d2 * det_delta));
    }
    Ok(out)
}

/// Evaluates the two-dimensional formulas at a prescribed translation
/// (used by the regime dispatch, the scalar-3D reduction check and the
/// frozen-regime elastic solver).
pub fn eval_2d_at_beta(
    d: f64,
    e: &SymTensor,
    p: &PhaseParams,
    beta: f64,
    regime: RegimeLabel,
) -> Result<RelaxedEval> {
    let (d1, d2) = phase_fractions(d);
    let a = alpha_beta(beta, d, p);
    // e_i right-hand sides of the stationarity system
    let t_vec = p.alpha2.apply(&p.eps_t2)?.sub(&p.alpha1.apply(&p.eps_t1)?);
    let a2_bt = |x: &SymTensor| -> SymTensor {
        // (alpha2 - beta T) x
        let m = mat3_add_scaled(&p.alpha2.m, 1.0, &TRACE_REMOVER, -beta);
        SymTensor { dim: Dim::Two, c: mat3_vec(&m, &x.c) }
    };
    let a1_bt = |x: &SymTensor| -> SymTensor {
        let m = mat3_add_scaled(&p.alpha1.m, 1.0, &TRACE_REMOVER, -beta);
        SymTensor { dim: Dim::Two, c: mat3_vec(&m, &x.c) }
    };
    let e1 = a2_bt(e).sub(&t_vec.scale(d2));
    let e2 = a1_bt(e).add(&t_vec.scale(d1));
    let eps1 = solve_alpha(&a, &e1)?;
    let eps2 = solve_alpha(&a, &e2)?;
    let delta = eps2.sub(&eps1);
    let det_delta = det_sym(&delta);

    let w1v = w_micro(1, &eps1, p)?;
    let w2v = w_micro(2, &eps2, p)?;
    let value = d1 * w1v + d2 * w2v + beta * d1 * d2 * det_delta;

    let s1 = w_micro_stress(1, &eps1, p)?;
    let s2 = w_micro_stress(2, &eps2, p)?;
    let sbar = s1.scale(d1).add(&s2.scale(d2));

    let mut d_d = w1v - w2v + sbar.dot(&delta);
    if regime == RegimeLabel::Three {
        // product-rule term of the capped translation: (d1 - d2) gamma* phi(delta)
        d_d += (d1 - d2) * beta * (-det_delta);
    }

    Ok(RelaxedEval {
        value,
        d_d,
        d_eps: sbar,
        regime,
        beta_star: beta,
        eps1_star: eps1,
        eps2_star: eps2,
        phi_at_beta: -det_delta,
    })
}

/// Derivative of the Regime II root `beta_II` with respect to `d`, from
/// implicit differentiation of `phi(beta_II(d), d, eps) = 0`. Zero outside
/// Regime II; `DegenerateLaminate` when the denominator vanishes.
pub fn beta_star_d_derivative(d: f64, e: &SymTensor, p: &PhaseParams) -> Result<f64> {
    let (regime, beta) = classify_regime(d, e, p)?;
    if regime != RegimeLabel::Two {
        return Ok(0.0);
    }
    let (num, den) = beta_root_sensitivities(d, e, p, beta)?.0;
    Ok(num / den)
}

/// Derivative of the Regime II root with respect to `eps`. Zero outside
/// Regime II.
pub fn beta_star_eps_derivative(d: f64, e: &SymTensor, p: &PhaseParams) -> Result<SymTensor> {
    let (regime, beta) = classify_regime(d, e, p)?;
    if regime != RegimeLabel::Two {
        return Ok(SymTensor::zero(Dim::Two));
    }
    Ok(beta_root_sensitivities(d, e, p, beta)?.1)
}

/// Shared pieces of the implicit differentiation of the root:
/// `d beta/d d = num / den` and `d beta/d eps` as a tensor.
fn beta_root_sensitivities(
    d: f64,
    e: &SymTensor,
    p: &PhaseParams,
    beta: f64,
) -> Result<((f64, f64), SymTensor)> {
    let a = alpha_beta(beta, d, p);
    let ev = e_of_eps(e, p);
    let delta = solve_alpha(&a, &ev)?;
    let t_delta = crate::tensor::trace_remove(&delta);
    let ainv_t_delta = solve_alpha(&a, &t_delta)?;
    // d phi/d beta = (alpha^{-1} T delta) : T delta
    let den = ainv_t_delta.dot(&t_delta);
    let scale = t_delta.dot(&t_delta).max(1e-300);
    if den.abs() <= 1e-14 * scale {
        return Err(Error::DegenerateLaminate);
    }
    // d phi/d d = -(T alpha^{-1} (alpha2 - alpha1) delta) : delta
    let a_diff = mat3_add_scaled(&p.alpha2.m, 1.0, &p.alpha1.m, -1.0);
    let diff_delta = SymTensor { dim: Dim::Two, c: mat3_vec(&a_diff, &delta.c) };
    let ainv_diff_delta = solve_alpha(&a, &diff_delta)?;
    let num_d = crate::tensor::trace_remove(&ainv_diff_delta).dot(&delta);
    // d phi/d eps = (alpha1 - alpha2) alpha^{-1} T delta, so the root moves by
    // (alpha2 - alpha1) alpha^{-1} T delta / den
    let m_diff = mat3_add_scaled(&p.alpha1.m, -1.0, &p.alpha2.m, 1.0);
    let grad_eps = SymTensor { dim: Dim::Two, c: mat3_vec(&m_diff, &ainv_t_delta.c) };
    Ok(((num_d, den), grad_eps.scale(1.0 / den)))
}

// ---------------------------------------------------------------------------
// D = 1
// ---------------------------------------------------------------------------

/// One-dimensional relaxed energy: scalar closed forms for the optimal phase
/// strains, value and both derivatives. The translation is trivial here, so
/// the regime is reported as `One` with `beta* = 0`.
pub fn eval_1d(d: f64, eps: f64, p: &PhaseParams) -> Result<RelaxedEval> {
    if !(0.0..=1.0).contains(&d) {
        return Err(Error::Config(format!(
            "eval_1d requires d in [0,1], got {d}; use the extended evaluator"
        )));
    }
    let (d1, d2) = phase_fractions(d);
    let a1 = p.alpha1.as_scalar();
    let a2 = p.alpha2.as_scalar();
    let t1 = p.eps_t1.c[0];
    let t2 = p.eps_t2.c[0];
    let den = d2 * a1 + d1 * a2;

    let e1 = (a2 * (eps - d2 * t2) + d2 * a1 * t1) / den;
    let e2 = (a1 * (eps - d1 * t1) + d1 * a2 * t2) / den;
    let w1v = 0.5 * a1 * (e1 - t1) * (e1 - t1) + p.w1;
    let w2v = 0.5 * a2 * (e2 - t2) * (e2 - t2) + p.w2;
    let value = d1 * w1v + d2 * w2v;

    let d_eps = a1 * a2 * (d1 * (eps - t1) + d2 * (eps - t2)) / den;
    let bracket = (a1 - a2) * eps * eps + d1 * a1 * t1 * t1 - d2 * a2 * t2 * t2
        + (a2 * t2 - a1 * t1 + (a2 - a1) * (d1 * t1 + d2 * t2)) * eps
        + (d2 * a1 - d1 * a2) * t1 * t2;
    let d_d = w1v - w2v + a1 * a2 * bracket / (den * den);

    Ok(RelaxedEval {
        value,
        d_d,
        d_eps: SymTensor::scalar(d_eps),
        regime: RegimeLabel::One,
        beta_star: 0.0,
        eps1_star: SymTensor::scalar(e1),
        eps2_star: SymTensor::scalar(e2),
        phi_at_beta: 0.0,
    })
}

// ---------------------------------------------------------------------------
// Scalar setting for D = 3 (anti-plane shear)
// ---------------------------------------------------------------------------

/// Scalar three-dimensional relaxed energy. The optimal gradients satisfy
/// the stress-continuity system with trivial translation (`beta* = 0`):
///
/// ```text
/// (d2 a1 + d1 a2) grad_eta1 = a2 f - d2 (a2 f2T - a1 f1T)
/// (d2 a1 + d1 a2) grad_eta2 = a1 f + d1 (a2 f2T - a1 f1T)
/// ```
pub fn eval_scalar3d(d: f64, f: &Vec2, sp: &ScalarPhaseParams) -> Result<ScalarRelaxedEval> {
    if !(0.0..=1.0).contains(&d) {
        return Err(Error::Config(format!(
            "eval_scalar3d requires d in [0,1], got {d}; use the extended evaluator"
        )));
    }
    let (d1, d2) = phase_fractions(d);
    let den = mat2_add_scaled(&sp.alpha1, d2, &sp.alpha2, d1);
    let t_vec = vec2_axpy(1.0, &mat2_vec(&sp.alpha2, &sp.f_t2), -1.0, &mat2_vec(&sp.alpha1, &sp.f_t1));
    let rhs1 = vec2_axpy(1.0, &mat2_vec(&sp.alpha2, f), -d2, &t_vec);
    let rhs2 = vec2_axpy(1.0, &mat2_vec(&sp.alpha1, f), d1, &t_vec);
    let g1 = mat2_solve(&den, &rhs1).ok_or(Error::SingularAlpha)?;
    let g2 = mat2_solve(&den, &rhs2).ok_or(Error::SingularAlpha)?;

    let w1v = sp.w_micro(1, &g1);
    let w2v = sp.w_micro(2, &g2);
    let value = d1 * w1v + d2 * w2v;

    let s1 = sp.stress(1, &g1);
    let s2 = sp.stress(2, &g2);
    let sbar = vec2_axpy(d1, &s1, d2, &s2);
    let delta = vec2_axpy(1.0, &g2, -1.0, &g1);
    let d_d = w1v - w2v + vec2_dot(&sbar, &delta);

    // homogeneous data: e_s = a2 (f2T - f) - a1 (f1T - f) = 0
    let es = vec2_axpy(
        1.0,
        &mat2_vec(&sp.alpha2, &vec2_axpy(1.0, &sp.f_t2, -1.0, f)),
        -1.0,
        &mat2_vec(&sp.alpha1, &vec2_axpy(1.0, &sp.f_t1, -1.0, f)),
    );
    let scale = 1e-12
        * (vec2_dot(f, f).sqrt() + vec2_dot(&sp.f_t1, &sp.f_t1).sqrt()
            + vec2_dot(&sp.f_t2, &sp.f_t2).sqrt()
            + 1.0);
    let regime = if vec2_dot(&es, &es).sqrt() <= scale { RegimeLabel::Zero } else { RegimeLabel::One };

    Ok(ScalarRelaxedEval {
        value,
        d_d,
        d_f: sbar,
        regime,
        beta_star: 0.0,
        grad_eta1: g1,
        grad_eta2: g2,
    })
}

// ---------------------------------------------------------------------------
// Global extension in d
// ---------------------------------------------------------------------------

/// Internal view of an evaluation used by the Hermite blending. The strain
/// gradient is padded to three slots regardless of the setting.
#[derive(Clone, Copy)]
struct BlendPoint {
    value: f64,
    d_d: f64,
    d_eps: [f64; 3],
}

fn hermite(t: f64) -> (f64, f64, f64, f64) {
    let t2 = t * t;
    let t3 = t2 * t;
    (2.0 * t3 - 3.0 * t2 + 1.0, t3 - 2.0 * t2 + t, -2.0 * t3 + 3.0 * t2, t3 - t2)
}

fn hermite_d(t: f64) -> (f64, f64, f64, f64) {
    let t2 = t * t;
    (6.0 * t2 - 6.0 * t, 3.0 * t2 - 4.0 * t + 1.0, -6.0 * t2 + 6.0 * t, 3.0 * t2 - 2.0 * t)
}

/// C^1 extension of a relaxed energy to all real `d`:
/// linear growth `-d + 1 + W(0, .)` below `-1` and `d - 1 + W(1, .)` above
/// `2`, cubic Hermite blending in `d` on `(-1, 0)` and `(1, 2)`.
///
/// `eval_edge(d)` must evaluate the underlying energy for `d` in `[0, 1]`;
/// `mixed_edge(edge)` must return the gradient in `eps` of `dW/dd` at the
/// edge (the blending slope inherits the edge's strain dependence).
fn blend_extension(
    d: f64,
    eval_edge: &mut dyn FnMut(f64) -> Result<BlendPoint>,
    mixed_edge: &mut dyn FnMut(f64) -> Result<[f64; 3]>,
) -> Result<Option<BlendPoint>> {
    if (0.0..=1.0).contains(&d) {
        return Ok(None);
    }
    if d <= -1.0 {
        let base = eval_edge(0.0)?;
        return Ok(Some(BlendPoint { value: -d + 1.0 + base.value, d_d: -1.0, d_eps: base.d_eps }));
    }
    if d >= 2.0 {
        let base = eval_edge(1.0)?;
        return Ok(Some(BlendPoint { value: d - 1.0 + base.value, d_d: 1.0, d_eps: base.d_eps }));
    }
    let lower = d < 0.0;
    let (t, p0, m0, p1, m1, base) = if lower {
        let base = eval_edge(0.0)?;
        // interval [-1, 0]: left end is the linear branch, right end the energy
        (d + 1.0, 2.0 + base.value, -1.0, base.value, base.d_d, base)
    } else {
        let base = eval_edge(1.0)?;
        // interval [1, 2]: left end is the energy, right end the linear branch
        (d - 1.0, base.value, base.d_d, 1.0 + base.value, 1.0, base)
    };
    let (h00, h10, h01, h11) = hermite(t);
    let (g00, g10, g01, g11) = hermite_d(t);
    let value = h00 * p0 + h10 * m0 + h01 * p1 + h11 * m1;
    let d_d = g00 * p0 + g10 * m0 + g01 * p1 + g11 * m1;
    // h00 + h01 = 1, so the strain gradient is the edge gradient plus the
    // mixed term carried by whichever slope equals dW/dd at the edge
    let mixed = mixed_edge(if lower { 0.0 } else { 1.0 })?;
    let w = if lower { h11 } else { h10 };
    let mut d_eps = base.d_eps;
    for k in 0..3 {
        d_eps[k] += w * mixed[k];
    }
    Ok(Some(BlendPoint { value, d_d, d_eps }))
}

/// Central finite difference of `dW/dd` in the strain components; exact for
/// the quadratic-in-strain edge derivatives up to round-off.
fn mixed_by_fd(
    n: usize,
    eps: &[f64; 3],
    mut dd_at: impl FnMut(&[f64; 3]) -> Result<f64>,
) -> Result<[f64; 3]> {
    let mut out = [0.0; 3];
    let scale: f64 = 1.0 + eps.iter().map(|x| x.abs()).fold(0.0, f64::max);
    let h = 1e-6 * scale;
    for k in 0..n {
        let mut up = *eps;
        up[k] += h;
        let mut dn = *eps;
        dn[k] -= h;
        out[k] = (dd_at(&up)? - dd_at(&dn)?) / (2.0 * h);
    }
    Ok(out)
}

/// Extended two-dimensional evaluation for arbitrary real `d`.
pub fn eval_extended_2d(d: f64, e: &SymTensor, p: &PhaseParams) -> Result<RelaxedEval> {
    if (0.0..=1.0).contains(&d) {
        return eval_2d(d, e, p);
    }
    let edge_d = if d < 0.0 { 0.0 } else { 1.0 };
    let edge = eval_2d(edge_d, e, p)?;
    let mut eval_edge = |dd: f64| -> Result<BlendPoint> {
        let r = eval_2d(dd, e, p)?;
        Ok(BlendPoint { value: r.value, d_d: r.d_d, d_eps: r.d_eps.c })
    };
    let mut mixed = |dd: f64| -> Result<[f64; 3]> {
        mixed_by_fd(3, &e.c, |c| Ok(eval_2d(dd, &SymTensor { dim: Dim::Two, c: *c }, p)?.d_d))
    };
    let b = blend_extension(d, &mut eval_edge, &mut mixed)?.expect("d outside [0,1]");
    Ok(RelaxedEval {
        value: b.value,
        d_d: b.d_d,
        d_eps: SymTensor { dim: Dim::Two, c: b.d_eps },
        ..edge
    })
}

/// Extended one-dimensional evaluation for arbitrary real `d`.
pub fn eval_extended_1d(d: f64, eps: f64, p: &PhaseParams) -> Result<RelaxedEval> {
    if (0.0..=1.0).contains(&d) {
        return eval_1d(d, eps, p);
    }
    let edge_d = if d < 0.0 { 0.0 } else { 1.0 };
    let edge = eval_1d(edge_d, eps, p)?;
    let mut eval_edge = |dd: f64| -> Result<BlendPoint> {
        let r = eval_1d(dd, eps, p)?;
        Ok(BlendPoint { value: r.value, d_d: r.d_d, d_eps: r.d_eps.c })
    };
    let mut mixed = |dd: f64| -> Result<[f64; 3]> {
        mixed_by_fd(1, &[eps, 0.0, 0.0], |c| Ok(eval_1d(dd, c[0], p)?.d_d))
    };
    let b = blend_extension(d, &mut eval_edge, &mut mixed)?.expect("d outside [0,1]");
    Ok(RelaxedEval {
        value: b.value,
        d_d: b.d_d,
        d_eps: SymTensor::scalar(b.d_eps[0]),
        ..edge
    })
}

/// Extended scalar three-dimensional evaluation for arbitrary real `d`.
pub fn eval_extended_scalar3d(
    d: f64,
    f: &Vec2,
    sp: &ScalarPhaseParams,
) -> Result<ScalarRelaxedEval> {
    if (0.0..=1.0).contains(&d) {
        return eval_scalar3d(d, f, sp);
    }
    let edge_d = if d < 0.0 { 0.0 } else { 1.0 };
    let edge = eval_scalar3d(edge_d, f, sp)?;
    let mut eval_edge = |dd: f64| -> Result<BlendPoint> {
        let r = eval_scalar3d(dd, f, sp)?;
        Ok(BlendPoint { value: r.value, d_d: r.d_d, d_eps: [r.d_f[0], r.d_f[1], 0.0] })
    };
    let mut mixed = |dd: f64| -> Result<[f64; 3]> {
        mixed_by_fd(2, &[f[0], f[1], 0.0], |c| Ok(eval_scalar3d(dd, &[c[0], c[1]], sp)?.d_d))
    };
    let b = blend_extension(d, &mut eval_edge, &mut mixed)?.expect("d outside [0,1]");
    Ok(ScalarRelaxedEval {
        value: b.value,
        d_d: b.d_d,
        d_f: [b.d_eps[0], b.d_eps[1]],
        ..edge
    })
}

// ---------------------------------------------------------------------------
// Assumption (A) probe
// ---------------------------------------------------------------------------

/// Target energy for the monotonicity/growth probe.
pub enum ProbeTarget<'a> {
    Linear(&'a LinearTheoryParams),
    OneD(&'a PhaseParams),
    TwoD(&'a PhaseParams),
    Scalar3D(&'a ScalarPhaseParams),
}

#[derive(Clone, Copy, Debug)]
pub struct ProbeConfig {
    pub samples: usize,
    pub seed: u64,
    /// strains sampled uniformly from [-range, range] per component
    pub strain_range: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig { samples: 10_000, seed: 0x5EED, strain_range: 3.0 }
    }
}

/// Report of the strong-monotonicity and growth-bound probe:
/// `c1_hat` is the smallest sampled monotonicity quotient; the `big_c1_*`
/// entries are the largest sampled growth ratios of `|W|`, `|dW/dd|` and
/// `|dW/deps|`. The probe passes iff `c1_hat > 0` and the ratios are finite.
#[derive(Clone, Copy, Debug)]
pub struct ProbeReport {
    pub c1_hat: f64,
    pub big_c1_value: f64,
    pub big_c1_dd: f64,
    pub big_c1_deps: f64,
    pub samples_used: usize,
    pub pass: bool,
}

pub fn assumption_a_probe(target: &ProbeTarget, cfg: &ProbeConfig) -> Result<ProbeReport> {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
    let r = cfg.strain_range;
    let mut c1 = f64::INFINITY;
    let mut cw: f64 = 0.0;
    let mut cdd: f64 = 0.0;
    let mut cde: f64 = 0.0;
    let mut used = 0usize;

    // evaluate (value, d_d, grad, |eps|) for the target at padded strain slots
    let eval = |d: f64, c: &[f64; 3]| -> Result<(f64, f64, [f64; 3], f64)> {
        match target {
            ProbeTarget::Linear(q) => {
                let e = SymTensor { dim: Dim::Two, c: *c };
                let (v, dd, g) = crate::energy::w_lin(d, &e, q);
                Ok((v, dd, g.c, e.norm()))
            }
            ProbeTarget::OneD(p) => {
                let rr = eval_1d(d, c[0], p)?;
                Ok((rr.value, rr.d_d, rr.d_eps.c, c[0].abs()))
            }
            ProbeTarget::TwoD(p) => {
                let e = SymTensor { dim: Dim::Two, c: *c };
                let rr = eval_2d(d, &e, p)?;
                Ok((rr.value, rr.d_d, rr.d_eps.c, e.norm()))
            }
            ProbeTarget::Scalar3D(sp) => {
                let rr = eval_scalar3d(d, &[c[0], c[1]], sp)?;
                Ok((rr.value, rr.d_d, [rr.d_f[0], rr.d_f[1], 0.0], (c[0] * c[0] + c[1] * c[1]).sqrt()))
            }
        }
    };
    let n_slots = match target {
        ProbeTarget::Linear(_) | ProbeTarget::TwoD(_) => 3,
        ProbeTarget::Scalar3D(_) => 2,
        ProbeTarget::OneD(_) => 1,
    };

    for _ in 0..cfg.samples {
        let d: f64 = rng.gen_range(0.0..=1.0);
        let mut c1v = [0.0; 3];
        let mut c2v = [0.0; 3];
        for k in 0..n_slots {
            c1v[k] = rng.gen_range(-r..r);
            c2v[k] = rng.gen_range(-r..r);
        }
        let (v1, dd1, g1, n1) = match eval(d, &c1v) {
            Ok(x) => x,
            Err(_) => continue,
        };
        let (_, _, g2, _) = match eval(d, &c2v) {
            Ok(x) => x,
            Err(_) => continue,
        };
        used += 1;
        let mut diff2 = 0.0;
        let mut prod = 0.0;
        for k in 0..3 {
            let de = c2v[k] - c1v[k];
            diff2 += de * de;
            prod += (g2[k] - g1[k]) * de;
        }
        if diff2 > 1e-20 {
            c1 = c1.min(prod / diff2);
        }
        let quad = d * d + n1 * n1 + 1.0;
        let lin = d.abs() + n1 + 1.0;
        cw = cw.max(v1.abs() / quad);
        cdd = cdd.max(dd1.abs() / quad);
        let gnorm = (g1[0] * g1[0] + g1[1] * g1[1] + g1[2] * g1[2]).sqrt();
        cde = cde.max(gnorm / lin);
    }

    let pass = c1 > 0.0 && cw.is_finite() && cdd.is_finite() && cde.is_finite() && used > 0;
    Ok(ProbeReport {
        c1_hat: c1,
        big_c1_value: cw,
        big_c1_dd: cdd,
        big_c1_deps: cde,
        samples_used: used,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::w_micro;
    use crate::oracle::{fd_check, regime_boundary_screen, FdTarget};
    use crate::tensor::ElasticModulus;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const INV_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

    /// modulus diagonal in the eigenbasis of T: eigenvalue `ap` on
    /// p = (1,1,0)/sqrt2 and the SPD block [[am, b], [b, as_]] on {m, s};
    /// such moduli commute with T
    fn pms_modulus(ap: f64, am: f64, as_: f64, b: f64) -> ElasticModulus {
        let p = [INV_SQRT_2, INV_SQRT_2, 0.0];
        let m = [INV_SQRT_2, -INV_SQRT_2, 0.0];
        let s = [0.0, 0.0, 1.0];
        let mut mat = crate::tensor::mat3_zero();
        for i in 0..3 {
            for j in 0..3 {
                mat[i][j] = ap * p[i] * p[j]
                    + am * m[i] * m[j]
                    + as_ * s[i] * s[j]
                    + b * (m[i] * s[j] + s[i] * m[j]);
            }
        }
        ElasticModulus::from_mandel(Dim::Two, mat).unwrap()
    }

    fn equal_id_params(t: SymTensor) -> PhaseParams {
        PhaseParams {
            alpha1: ElasticModulus::identity(Dim::Two),
            alpha2: ElasticModulus::identity(Dim::Two),
            eps_t1: SymTensor::zero(Dim::Two),
            eps_t2: t,
            w1: 0.0,
            w2: 0.0,
            sigma_ext: SymTensor::zero(Dim::Two),
        }
    }

    /// alpha1 = 2 Id, alpha2 = Id, t = Id: a commuting, unequal-moduli family
    /// that sits in Regime III near eps = 0
    fn regime3_params() -> PhaseParams {
        PhaseParams {
            alpha1: ElasticModulus::scaled_identity(Dim::Two, 2.0),
            alpha2: ElasticModulus::identity(Dim::Two),
            eps_t1: SymTensor::zero(Dim::Two),
            eps_t2: SymTensor::identity(Dim::Two),
            w1: 0.0,
            w2: 0.0,
            sigma_ext: SymTensor::zero(Dim::Two),
        }
    }

    fn params_1d(a1: f64, a2: f64, t1: f64, t2: f64) -> PhaseParams {
        PhaseParams {
            alpha1: ElasticModulus::d1(a1),
            alpha2: ElasticModulus::d1(a2),
            eps_t1: SymTensor::scalar(t1),
            eps_t2: SymTensor::scalar(t2),
            w1: 0.0,
            w2: 0.0,
            sigma_ext: SymTensor::scalar(0.0),
        }
    }

    #[test]
    fn gamma_star_examples() {
        let p = equal_id_params(SymTensor::identity(Dim::Two));
        let gs = gamma_star(&p).unwrap();
        assert!((gs.value - 1.0).abs() <= 1e-13);

        // cubic phases: gamma* = min(C11 - C12, 2 C44) = 2
        let cubic = ElasticModulus::cubic(3.0, 1.0, 1.0).unwrap();
        let pc = PhaseParams { alpha1: cubic, alpha2: cubic, ..p };
        let gs = gamma_star(&pc).unwrap();
        assert!((gs.value - 2.0).abs() <= 1e-12);

        // homogeneity: scaling both moduli scales gamma*
        let p10 = PhaseParams {
            alpha1: ElasticModulus::scaled_identity(Dim::Two, 10.0),
            alpha2: ElasticModulus::scaled_identity(Dim::Two, 10.0),
            ..p
        };
        let gs10 = gamma_star(&p10).unwrap();
        assert!((gs10.value - 10.0).abs() <= 1e-11);
    }

    #[test]
    fn phi_examples() {
        // homogeneous data: e = 0, phi = 0 for all beta
        let p = PhaseParams {
            eps_t2: SymTensor::zero(Dim::Two),
            ..equal_id_params(SymTensor::zero(Dim::Two))
        };
        let e = SymTensor::d2(0.4, -0.2, 0.7);
        for beta in [0.0, 0.3, 0.9] {
            assert!(phi(beta, 0.4, &e, &p).unwrap().abs() <= 1e-14);
        }

        // t = diag(1, -1): phi(0) = -det(t) = 1
        let p = equal_id_params(SymTensor::d2(1.0, -1.0, 0.0));
        let v = phi(0.0, 0.3, &SymTensor::zero(Dim::Two), &p).unwrap();
        assert!((v - 1.0).abs() <= 1e-13);

        // e = diag(2, 1): closed form phi(beta) = -(2-beta)(1-2beta)/(1-beta^2)^2
        let p = equal_id_params(SymTensor::d2(2.0, 1.0, 0.0));
        for beta in [0.0f64, 0.2, 0.5, 0.8] {
            let want = -(2.0 - beta) * (1.0 - 2.0 * beta) / (1.0 - beta * beta).powi(2);
            let got = phi(beta, 0.5, &SymTensor::zero(Dim::Two), &p).unwrap();
            assert!((got - want).abs() <= 1e-12 * (1.0 + want.abs()), "beta={beta}");
        }
    }

    #[test]
    fn classify_regime_closed_forms() {
        let zero = SymTensor::zero(Dim::Two);

        let p1 = equal_id_params(SymTensor::d2(1.0, -1.0, 0.0));
        let (r, b) = classify_regime(0.4, &zero, &p1).unwrap();
        assert_eq!(r, RegimeLabel::One);
        assert_eq!(b, 0.0);

        let p3 = equal_id_params(SymTensor::identity(Dim::Two));
        let (r, b) = classify_regime(0.4, &zero, &p3).unwrap();
        assert_eq!(r, RegimeLabel::Three);
        assert!((b - 1.0).abs() <= 1e-13);

        let p2 = equal_id_params(SymTensor::d2(2.0, 1.0, 0.0));
        let (r, b) = classify_regime(0.7, &zero, &p2).unwrap();
        assert_eq!(r, RegimeLabel::Two);
        assert!((b - 0.5).abs() <= 1e-10, "beta_II = {b}");

        // homogeneous
        let p0 = PhaseParams { eps_t2: SymTensor::zero(Dim::Two), ..equal_id_params(zero) };
        let (r, _) = classify_regime(0.5, &SymTensor::d2(0.3, 0.1, -0.2), &p0).unwrap();
        assert_eq!(r, RegimeLabel::Zero);
    }

    #[test]
    fn eval_2d_single_phase_endpoints() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let p = regime3_params();
        for _ in 0..20 {
            let e = SymTensor::d2(
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
            );
            let r1 = eval_2d(1.0, &e, &p).unwrap();
            assert!((r1.value - w_micro(1, &e, &p).unwrap()).abs() <= 1e-12 * (1.0 + r1.value.abs()));
            let grad = crate::energy::w_micro_stress(1, &e, &p).unwrap();
            assert!(r1.d_eps.sub(&grad).norm() <= 1e-12 * (1.0 + grad.norm()));

            let r0 = eval_2d(0.0, &e, &p).unwrap();
            assert!((r0.value - w_micro(2, &e, &p).unwrap()).abs() <= 1e-12 * (1.0 + r0.value.abs()));
        }
    }

    #[test]
    fn eval_2d_equal_moduli_regime_one_closed_form() {
        // Regime I with equal moduli: eps1* = eps - d2 t, value collapses to
        // 1/2 alpha (eps + d1 t - epsT2) : (...) + d1 w1 + d2 w2
        let t = SymTensor::d2(1.0, -1.0, 0.0);
        let mut p = equal_id_params(t);
        p.w1 = 0.2;
        p.w2 = 0.05;
        let e = SymTensor::d2(0.3, 0.4, -0.1);
        let d = 0.3;
        let r = eval_2d(d, &e, &p).unwrap();
        assert_eq!(r.regime, RegimeLabel::One);
        let want_e1 = e.sub(&t.scale(1.0 - d));
        assert!(r.eps1_star.sub(&want_e1).norm() <= 1e-12);
        let mis = e.add(&t.scale(d)).sub(&p.eps_t2);
        let want = 0.5 * mis.dot(&mis) + d * p.w1 + (1.0 - d) * p.w2;
        assert!((r.value - want).abs() <= 1e-12 * (1.0 + want.abs()));
    }

    #[test]
    fn eval_2d_regime3_frozen_values() {
        // frozen by hand for alpha1 = 2 Id, alpha2 = Id, t = Id, eps = 0:
        // W^(d, 0) = (-2d^3 + 11d^2 - 18d + 9) / (3 - d)^2
        let p = regime3_params();
        let zero = SymTensor::zero(Dim::Two);
        let poly = |u: f64| (-2.0 * u.powi(3) + 11.0 * u * u - 18.0 * u + 9.0) / (3.0 - u).powi(2);
        for d in [0.2, 0.3, 0.5, 0.8] {
            let r = eval_2d(d, &zero, &p).unwrap();
            assert_eq!(r.regime, RegimeLabel::Three);
            assert!((r.beta_star - 1.0).abs() <= 1e-12);
            assert!((r.value - poly(d)).abs() <= 1e-12 * (1.0 + r.value.abs()), "d={d}");
        }
        // gradient at d = 0.5 is the averaged stress -0.6 * Id
        let r = eval_2d(0.5, &zero, &p).unwrap();
        assert!(r.d_eps.sub(&SymTensor::d2(-0.6, -0.6, 0.0)).norm() <= 1e-12);
        assert!((r.d_d - (-1.04)).abs() <= 1e-12);
    }

    #[test]
    fn derivatives_match_fd_all_regimes() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        // commuting, unequal moduli; regimes selected by sampling
        let p = PhaseParams {
            alpha1: pms_modulus(2.0, 1.5, 1.0, 0.2),
            alpha2: pms_modulus(1.0, 2.0, 3.0, -0.3),
            eps_t1: SymTensor::d2(0.1, -0.2, 0.05),
            eps_t2: SymTensor::d2(0.6, 0.4, -0.3),
            w1: 0.1,
            w2: 0.3,
            sigma_ext: SymTensor::zero(Dim::Two),
        };
        let mut seen = [0usize; 4];
        let mut tried = 0;
        while tried < 400 {
            tried += 1;
            let d = rng.gen_range(0.05..0.95);
            let e = SymTensor::d2(
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
            );
            if !regime_boundary_screen(d, &e, &p, 1e-6).unwrap() {
                continue;
            }
            let r = eval_2d(d, &e, &p).unwrap();
            seen[r.regime.as_code() as usize] += 1;
            let tol = match r.regime {
                RegimeLabel::Two => 1e-5,
                _ => 1e-6,
            };
            let err = fd_check(&FdTarget::TwoD(&p), d, &e.c, 1e-5).unwrap();
            assert!(err <= tol, "regime {:?}: fd error {err:.3e}", r.regime);
        }
        assert!(seen[1] > 0 && seen[2] > 0, "regimes I/II not sampled: {seen:?}");

        // Regime III with the commuting unequal family
        let p3 = regime3_params();
        let mut threes = 0;
        for _ in 0..80 {
            let d = rng.gen_range(0.1..0.9);
            let e = SymTensor::d2(
                rng.gen_range(-0.1..0.1),
                rng.gen_range(-0.1..0.1),
                rng.gen_range(-0.1..0.1),
            );
            if !regime_boundary_screen(d, &e, &p3, 1e-6).unwrap() {
                continue;
            }
            let r = eval_2d(d, &e, &p3).unwrap();
            if r.regime != RegimeLabel::Three {
                continue;
            }
            threes += 1;
            let err = fd_check(&FdTarget::TwoD(&p3), d, &e.c, 1e-5).unwrap();
            assert!(err <= 1e-6, "regime III fd error {err:.3e}");
        }
        assert!(threes > 20, "regime III hardly sampled: {threes}");
    }

    #[test]
    fn derivatives_match_fd_noncommuting_regime_one() {
        // non-commuting moduli are fine in Regimes 0/I
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut m = crate::tensor::mat3_zero();
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = rng.gen_range(-0.4..0.4);
            }
        }
        let mm = crate::tensor::mat3_mul(&crate::tensor::mat3_transpose(&m), &m);
        let alpha1 = ElasticModulus::from_mandel(
            Dim::Two,
            crate::tensor::mat3_add_scaled(&mm, 1.0, &crate::tensor::mat3_identity(), 1.0),
        )
        .unwrap();
        assert!(alpha1.commutator_with_t() > 1e-6 * alpha1.norm());
        let p = PhaseParams {
            alpha1,
            alpha2: ElasticModulus::identity(Dim::Two),
            eps_t1: SymTensor::zero(Dim::Two),
            eps_t2: SymTensor::d2(1.0, -1.0, 0.3),
            w1: 0.0,
            w2: 0.0,
            sigma_ext: SymTensor::zero(Dim::Two),
        };
        let mut found = 0;
        for _ in 0..200 {
            let d = rng.gen_range(0.1..0.9);
            let e = SymTensor::d2(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            if !regime_boundary_screen(d, &e, &p, 1e-6).unwrap() {
                continue;
            }
            let (regime, _) = classify_regime(d, &e, &p).unwrap();
            if regime != RegimeLabel::One {
                continue;
            }
            found += 1;
            let err = fd_check(&FdTarget::TwoD(&p), d, &e.c, 1e-5).unwrap();
            assert!(err <= 1e-6, "non-commuting regime I fd error {err:.3e}");
        }
        assert!(found > 10);
    }

    #[test]
    fn noncommuting_rejected_in_translation_regimes() {
        let mut mat = crate::tensor::mat3_identity();
        mat[0][0] = 3.0; // diag(3,1,1) does not commute with T
        let alpha1 = ElasticModulus::from_mandel(Dim::Two, mat).unwrap();
        let p = PhaseParams {
            alpha1,
            alpha2: ElasticModulus::identity(Dim::Two),
            eps_t1: SymTensor::zero(Dim::Two),
            eps_t2: SymTensor::identity(Dim::Two),
            w1: 0.0,
            w2: 0.0,
            sigma_ext: SymTensor::zero(Dim::Two),
        };
        // find a translation regime and check the rejection
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let mut rejected = false;
        for _ in 0..200 {
            let d = rng.gen_range(0.1..0.9);
            let e = SymTensor::d2(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            let (regime, _) = classify_regime(d, &e, &p).unwrap();
            if matches!(regime, RegimeLabel::Two | RegimeLabel::Three) {
                match eval_2d(d, &e, &p) {
                    Err(Error::NonCommuting(_, _)) => {
                        rejected = true;
                        break;
                    }
                    other => panic!("expected NonCommuting, got {other:?}"),
                }
            }
        }
        assert!(rejected, "no translation-regime point sampled");
    }

    #[test]
    fn averaging_upper_bound_and_endpoints() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let params = [
            equal_id_params(SymTensor::d2(1.0, -1.0, 0.0)),
            equal_id_params(SymTensor::d2(2.0, 1.0, 0.0)),
            regime3_params(),
            PhaseParams {
                alpha1: pms_modulus(2.0, 1.5, 1.0, 0.0),
                alpha2: pms_modulus(1.0, 2.0, 3.0, 0.0),
                eps_t1: SymTensor::d2(0.1, -0.2, 0.05),
                eps_t2: SymTensor::d2(0.6, 0.4, -0.3),
                w1: 0.1,
                w2: 0.3,
                sigma_ext: SymTensor::zero(Dim::Two),
            },
        ];
        for p in &params {
            for _ in 0..100 {
                let d = rng.gen_range(0.0..=1.0);
                let e = SymTensor::d2(
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(-2.0..2.0),
                );
                let r = eval_2d(d, &e, p).unwrap();
                // averaging identity
                let avg = r.eps1_star.scale(d).add(&r.eps2_star.scale(1.0 - d));
                assert!(avg.sub(&e).norm() <= 1e-10 * (1.0 + e.norm()));
                // constant test field is admissible: W^ <= d W1(e) + (1-d) W2(e)
                let ub = d * w_micro(1, &e, p).unwrap() + (1.0 - d) * w_micro(2, &e, p).unwrap();
                assert!(r.value <= ub + 1e-12 * (1.0 + ub.abs()));
            }
            // endpoint consistency
            let e = SymTensor::d2(0.7, -0.3, 0.2);
            assert!(
                (eval_2d(1.0, &e, p).unwrap().value - w_micro(1, &e, p).unwrap()).abs() <= 1e-12
            );
            assert!(
                (eval_2d(0.0, &e, p).unwrap().value - w_micro(2, &e, p).unwrap()).abs() <= 1e-12
            );
        }
    }

    #[test]
    fn regime_boundary_continuity() {
        // family eps(s) = s * (1,-1,0)/sqrt2 for alpha1 = 2Id, alpha2 = Id,
        // t = Id crosses II|III at s = sqrt(0.08) and I|II at s = sqrt(2)
        let p = regime3_params();
        let eps_of = |s: f64| SymTensor::d2(s * INV_SQRT_2, -s * INV_SQRT_2, 0.0);
        let d = 0.5;
        // extrapolate both one-sided evaluations to the boundary point with
        // their own gradients; the C^0 mismatch is what continuity bounds
        let check = |s_star: f64, reg_lo: RegimeLabel, reg_hi: RegimeLabel| {
            let h = 1e-7;
            let (e_lo, e_hi, e_star) = (eps_of(s_star - h), eps_of(s_star + h), eps_of(s_star));
            let lo = eval_2d(d, &e_lo, &p).unwrap();
            let hi = eval_2d(d, &e_hi, &p).unwrap();
            assert_eq!(lo.regime, reg_lo);
            assert_eq!(hi.regime, reg_hi);
            let v_lo = lo.value + lo.d_eps.dot(&e_star.sub(&e_lo));
            let v_hi = hi.value + hi.d_eps.dot(&e_star.sub(&e_hi));
            assert!(
                (v_lo - v_hi).abs() <= 1e-8 * (1.0 + v_lo.abs()),
                "value jump {:.3e} across s*={s_star}",
                (v_lo - v_hi).abs()
            );
            assert!((lo.beta_star - hi.beta_star).abs() <= 1e-6);
        };
        check(0.08f64.sqrt(), RegimeLabel::Three, RegimeLabel::Two);
        check(2.0f64.sqrt(), RegimeLabel::Two, RegimeLabel::One);
    }

    #[test]
    fn regime2_root_residual_small() {
        let p = equal_id_params(SymTensor::d2(2.0, 1.0, 0.0));
        let e = SymTensor::zero(Dim::Two);
        let r = eval_2d(0.5, &e, &p).unwrap();
        assert_eq!(r.regime, RegimeLabel::Two);
        // phi at the bisected root must vanish within the stated scale
        let ev_norm = SymTensor::d2(1.0, 1.0, 0.0).norm() + 2.0;
        assert!(r.phi_at_beta.abs() <= 1e-10 * ev_norm * ev_norm);
    }

    #[test]
    fn eval_1d_worked_instance() {
        let p = params_1d(1.0, 2.0, 0.0, 1.0);
        let r = eval_1d(0.5, 0.5, &p).unwrap();
        assert!(r.eps1_star.c[0].abs() <= 1e-15);
        assert!((r.eps2_star.c[0] - 1.0).abs() <= 1e-15);
        assert!(r.value.abs() <= 1e-15);
        assert!(r.d_eps.c[0].abs() <= 1e-15);

        // d = 1: single phase
        let r = eval_1d(1.0, 0.7, &p).unwrap();
        assert!((r.eps1_star.c[0] - 0.7).abs() <= 1e-15);
        assert!((r.value - w_micro(1, &SymTensor::scalar(0.7), &p).unwrap()).abs() <= 1e-15);
    }

    #[test]
    fn eval_1d_derivatives_match_fd() {
        let p = params_1d(1.0, 2.0, 0.0, 1.0);
        let err = fd_check(&FdTarget::OneD(&p), 0.3, &[0.7], 1e-5).unwrap();
        assert!(err <= 1e-8, "fd error {err:.3e}");

        let mut rng = ChaCha8Rng::seed_from_u64(26);
        for _ in 0..200 {
            let p = params_1d(
                rng.gen_range(0.1..10.0),
                rng.gen_range(0.1..10.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
            );
            let d = rng.gen_range(0.02..0.98);
            let eps = rng.gen_range(-3.0..3.0);
            let err = fd_check(&FdTarget::OneD(&p), d, &[eps], 1e-5).unwrap();
            assert!(err <= 1e-6, "fd error {err:.3e}");
        }
    }

    #[test]
    fn eval_1d_equal_moduli_special_form() {
        // alpha1 = alpha2: both phases see the same stress misfit and the
        // value collapses to a single quadratic plus the mixed offsets
        let p = PhaseParams { w1: 0.3, w2: 0.1, ..params_1d(1.7, 1.7, -0.4, 0.9) };
        let (d, eps) = (0.37, 0.55);
        let r = eval_1d(d, eps, &p).unwrap();
        let t = p.eps_t2.c[0] - p.eps_t1.c[0];
        let mis = eps + d * t - p.eps_t2.c[0];
        let want = 0.5 * 1.7 * mis * mis + d * 0.3 + (1.0 - d) * 0.1;
        assert!((r.value - want).abs() <= 1e-14);
        assert!((r.d_eps.c[0] - 1.7 * mis).abs() <= 1e-14);
        let want_dd = 1.7 * mis * t + 0.3 - 0.1;
        assert!((r.d_d - want_dd).abs() <= 1e-13);
    }

    #[test]
    fn scalar3d_equal_moduli_and_stress_continuity() {
        let sp = crate::energy::ScalarPhaseParams {
            alpha1: [[1.3, 0.0], [0.0, 1.3]],
            alpha2: [[1.3, 0.0], [0.0, 1.3]],
            f_t1: [0.2, -0.1],
            f_t2: [0.7, 0.4],
            w1: 0.0,
            w2: 0.0,
            sigma_ext: [0.0, 0.0],
        };
        let f = [0.3, 0.8];
        let d = 0.4;
        let r = eval_scalar3d(d, &f, &sp).unwrap();
        let t = [sp.f_t2[0] - sp.f_t1[0], sp.f_t2[1] - sp.f_t1[1]];
        // equal moduli: grad_eta1 = f - d2 t, grad_eta2 = f + d1 t
        for k in 0..2 {
            assert!((r.grad_eta1[k] - (f[k] - (1.0 - d) * t[k])).abs() <= 1e-13);
            assert!((r.grad_eta2[k] - (f[k] + d * t[k])).abs() <= 1e-13);
        }

        // d = 0: pure phase 2
        let r0 = eval_scalar3d(0.0, &f, &sp).unwrap();
        assert!((r0.value - sp.w_micro(2, &f)).abs() <= 1e-14);

        // stress continuity for generic SPD moduli
        let mut rng = ChaCha8Rng::seed_from_u64(27);
        for _ in 0..100 {
            let sp = crate::energy::ScalarPhaseParams {
                alpha1: spd2(&mut rng),
                alpha2: spd2(&mut rng),
                f_t1: [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
                f_t2: [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
                w1: 0.2,
                w2: 0.6,
                sigma_ext: [0.0, 0.0],
            };
            let d = rng.gen_range(0.0..=1.0);
            let f = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            let r = eval_scalar3d(d, &f, &sp).unwrap();
            let s1 = sp.stress(1, &r.grad_eta1);
            let s2 = sp.stress(2, &r.grad_eta2);
            let jump = ((s1[0] - s2[0]).powi(2) + (s1[1] - s2[1]).powi(2)).sqrt();
            assert!(jump <= 1e-10 * (1.0 + vec2_dot(&s1, &s1).sqrt()));
            // fd check of the derivatives
            let err = fd_check(&FdTarget::Scalar3D(&sp), d.clamp(0.01, 0.99), &[f[0], f[1]], 1e-5)
                .unwrap();
            assert!(err <= 1e-6, "scalar3d fd error {err:.3e}");
        }
    }

    fn spd2(rng: &mut ChaCha8Rng) -> crate::tensor::Mat2 {
        let a: f64 = rng.gen_range(0.5..2.0);
        let b: f64 = rng.gen_range(-0.3..0.3);
        let c: f64 = rng.gen_range(0.5..2.0);
        [[a, b], [b, c]]
    }

    #[test]
    fn scalar3d_matches_beta_zero_2d_machinery() {
        // embed the scalar problem into the Mandel setting with a decoupled
        // third slot and force beta = 0 in the general machinery
        let mut rng = ChaCha8Rng::seed_from_u64(28);
        for _ in 0..200 {
            let sp = crate::energy::ScalarPhaseParams {
                alpha1: spd2(&mut rng),
                alpha2: spd2(&mut rng),
                f_t1: [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
                f_t2: [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
                w1: 0.1,
                w2: 0.4,
                sigma_ext: [0.0, 0.0],
            };
            let embed = |m: &crate::tensor::Mat2| {
                let mut out = crate::tensor::mat3_identity();
                out[0][0] = m[0][0];
                out[0][1] = m[0][1];
                out[1][0] = m[1][0];
                out[1][1] = m[1][1];
                ElasticModulus::from_mandel(Dim::Two, out).unwrap()
            };
            let p2 = PhaseParams {
                alpha1: embed(&sp.alpha1),
                alpha2: embed(&sp.alpha2),
                eps_t1: SymTensor::d2(sp.f_t1[0], sp.f_t1[1], 0.0),
                eps_t2: SymTensor::d2(sp.f_t2[0], sp.f_t2[1], 0.0),
                w1: sp.w1,
                w2: sp.w2,
                sigma_ext: SymTensor::zero(Dim::Two),
            };
            let d = rng.gen_range(0.0..=1.0);
            let f = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            let rs = eval_scalar3d(d, &f, &sp).unwrap();
            let r2 = eval_2d_at_beta(
                d,
                &SymTensor::d2(f[0], f[1], 0.0),
                &p2,
                0.0,
                RegimeLabel::One,
            )
            .unwrap();
            let scale = 1.0 + rs.value.abs();
            assert!((rs.value - r2.value).abs() <= 1e-12 * scale);
            assert!((rs.d_d - r2.d_d).abs() <= 1e-12 * (1.0 + rs.d_d.abs()));
            assert!((rs.d_f[0] - r2.d_eps.c[0]).abs() <= 1e-12 * (1.0 + rs.d_f[0].abs()));
            assert!((rs.d_f[1] - r2.d_eps.c[1]).abs() <= 1e-12 * (1.0 + rs.d_f[1].abs()));
            assert!(r2.d_eps.c[2].abs() <= 1e-12);
            assert!((rs.grad_eta1[0] - r2.eps1_star.c[0]).abs() <= 1e-12 * scale);
            assert!((rs.grad_eta2[1] - r2.eps2_star.c[1]).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn two_d_embedded_one_d_reduction() {
        // identity-multiple moduli with data along e1 (x) e1 reproduce the 1D
        // closed form
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..100 {
            let a1: f64 = rng.gen_range(0.3..4.0);
            let a2: f64 = rng.gen_range(0.3..4.0);
            let t1: f64 = rng.gen_range(-1.0..1.0);
            let t2: f64 = rng.gen_range(-1.0..1.0);
            let d: f64 = rng.gen_range(0.0..=1.0);
            let x: f64 = rng.gen_range(-2.0..2.0);
            let p2 = PhaseParams {
                alpha1: ElasticModulus::scaled_identity(Dim::Two, a1),
                alpha2: ElasticModulus::scaled_identity(Dim::Two, a2),
                eps_t1: SymTensor::d2(t1, 0.0, 0.0),
                eps_t2: SymTensor::d2(t2, 0.0, 0.0),
                w1: 0.05,
                w2: 0.15,
                sigma_ext: SymTensor::zero(Dim::Two),
            };
            let p1 = PhaseParams { w1: 0.05, w2: 0.15, ..params_1d(a1, a2, t1, t2) };
            let r2 = eval_2d(d, &SymTensor::d2(x, 0.0, 0.0), &p2).unwrap();
            let r1 = eval_1d(d, x, &p1).unwrap();
            let scale = 1.0 + r1.value.abs();
            assert!((r2.value - r1.value).abs() <= 1e-10 * scale, "value mismatch");
            assert!((r2.d_d - r1.d_d).abs() <= 1e-10 * (1.0 + r1.d_d.abs()));
            assert!((r2.d_eps.c[0] - r1.d_eps.c[0]).abs() <= 1e-10 * (1.0 + r1.d_eps.c[0].abs()));
            assert!((r2.eps1_star.c[0] - r1.eps1_star.c[0]).abs() <= 1e-10 * scale);
            assert!((r2.eps2_star.c[0] - r1.eps2_star.c[0]).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn extension_values_and_seams() {
        let p2 = regime3_params();
        let e = SymTensor::d2(0.2, -0.4, 0.3);

        // in range: identical to the plain evaluator
        let a = eval_2d(0.5, &e, &p2).unwrap();
        let b = eval_extended_2d(0.5, &e, &p2).unwrap();
        assert_eq!(a.value, b.value);

        // linear growth branches
        let w0 = eval_2d(0.0, &e, &p2).unwrap().value;
        let w1 = eval_2d(1.0, &e, &p2).unwrap().value;
        assert!((eval_extended_2d(-2.0, &e, &p2).unwrap().value - (w0 + 3.0)).abs() <= 1e-13);
        assert!((eval_extended_2d(3.0, &e, &p2).unwrap().value - (w1 + 2.0)).abs() <= 1e-13);

        // C^1 seams: one-sided difference quotients of the value agree
        for seam in [-1.0, 0.0, 1.0, 2.0] {
            let h = 1e-7;
            let vm = eval_extended_2d(seam - h, &e, &p2).unwrap().value;
            let v0 = eval_extended_2d(seam, &e, &p2).unwrap().value;
            let vp = eval_extended_2d(seam + h, &e, &p2).unwrap().value;
            let left = (v0 - vm) / h;
            let right = (vp - v0) / h;
            assert!((left - right).abs() <= 1e-6 * (1.0 + left.abs()), "seam {seam}");
        }

        // extended evaluator passes fd checks inside the blending zones
        for d in [-0.5, 1.5, -1.7, 2.6] {
            let err = fd_check(&FdTarget::Extended2D(&p2), d, &e.c, 1e-5).unwrap();
            assert!(err <= 1e-6, "extended fd error at d={d}: {err:.3e}");
        }

        // 1D and scalar variants share the blending
        let p1 = params_1d(1.0, 2.0, 0.0, 1.0);
        let w0 = eval_1d(0.0, 0.4, &p1).unwrap().value;
        assert!((eval_extended_1d(-2.0, 0.4, &p1).unwrap().value - (w0 + 3.0)).abs() <= 1e-13);
        for d in [-0.5, 1.5] {
            let err = fd_check(&FdTarget::Extended1D(&p1), d, &[0.4], 1e-5).unwrap();
            assert!(err <= 1e-6);
        }
        let sp = crate::energy::ScalarPhaseParams {
            alpha1: [[1.5, 0.2], [0.2, 1.0]],
            alpha2: [[0.8, -0.1], [-0.1, 1.2]],
            f_t1: [0.0, 0.0],
            f_t2: [0.5, -0.3],
            w1: 0.0,
            w2: 0.1,
            sigma_ext: [0.0, 0.0],
        };
        let w1s = eval_scalar3d(1.0, &[0.3, 0.1], &sp).unwrap().value;
        assert!(
            (eval_extended_scalar3d(3.0, &[0.3, 0.1], &sp).unwrap().value - (w1s + 2.0)).abs()
                <= 1e-13
        );
        for d in [-0.5, 1.5] {
            let err = fd_check(&FdTarget::ExtendedScalar3D(&sp), d, &[0.3, 0.1], 1e-5).unwrap();
            assert!(err <= 1e-6);
        }
    }

    #[test]
    fn beta_root_derivatives_match_fd() {
        // unequal commuting moduli so the root moves with both d and eps
        let p = PhaseParams {
            alpha1: pms_modulus(2.0, 1.5, 1.0, 0.0),
            alpha2: pms_modulus(1.0, 2.0, 3.0, 0.0),
            eps_t1: SymTensor::d2(0.1, -0.2, 0.05),
            eps_t2: SymTensor::d2(0.6, 0.4, -0.3),
            w1: 0.0,
            w2: 0.0,
            sigma_ext: SymTensor::zero(Dim::Two),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let mut found = 0;
        while found < 20 {
            let d = rng.gen_range(0.15..0.85);
            let e = SymTensor::d2(
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
            );
            let (regime, _) = classify_regime(d, &e, &p).unwrap();
            if regime != RegimeLabel::Two || !regime_boundary_screen(d, &e, &p, 1e-4).unwrap() {
                continue;
            }
            found += 1;
            let h = 1e-6;
            let beta_at_d = |dd: f64| classify_regime(dd, &e, &p).unwrap().1;
            let fd = (beta_at_d(d + h) - beta_at_d(d - h)) / (2.0 * h);
            let an = beta_star_d_derivative(d, &e, &p).unwrap();
            assert!((an - fd).abs() <= 1e-4 * (1.0 + an.abs()), "d-root: an={an} fd={fd}");

            let grad = beta_star_eps_derivative(d, &e, &p).unwrap();
            for k in 0..3 {
                let mut up = e;
                up.c[k] += h;
                let mut dn = e;
                dn.c[k] -= h;
                let fd = (classify_regime(d, &up, &p).unwrap().1
                    - classify_regime(d, &dn, &p).unwrap().1)
                    / (2.0 * h);
                assert!(
                    (grad.c[k] - fd).abs() <= 1e-4 * (1.0 + grad.c[k].abs()),
                    "eps-root[{k}]: an={} fd={fd}",
                    grad.c[k]
                );
            }
        }
    }

    #[test]
    fn probe_linear_identity_is_one() {
        let q = crate::energy::LinearTheoryParams::constant(
            ElasticModulus::identity(Dim::Two),
            SymTensor::d2(0.3, -0.2, 0.1),
        );
        let rep = assumption_a_probe(
            &ProbeTarget::Linear(&q),
            &ProbeConfig { samples: 2000, ..Default::default() },
        )
        .unwrap();
        assert!(rep.pass);
        assert!((rep.c1_hat - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn probe_one_d_alpha_1_2() {
        // coefficient alpha1 alpha2 / (d2 a1 + d1 a2) = 2/(1+d) is minimized
        // at d = 1 where it equals 1
        let p = params_1d(1.0, 2.0, 0.3, -0.5);
        let rep = assumption_a_probe(
            &ProbeTarget::OneD(&p),
            &ProbeConfig { samples: 5000, ..Default::default() },
        )
        .unwrap();
        assert!(rep.pass);
        assert!(rep.c1_hat >= 1.0 - 1e-9);
        assert!(rep.c1_hat <= 2.0 + 1e-9);
    }

    #[test]
    fn probe_regime0_matches_smallest_eigenvalue() {
        // homogeneous data: the monotonicity quotient is the quadratic form of
        // the shared modulus; the sampled minimum brackets lambda_min
        let alpha = pms_modulus(1.4, 0.9, 2.0, 0.3);
        let tau = SymTensor::d2(0.4, 0.1, -0.2);
        let p = PhaseParams {
            alpha1: alpha,
            alpha2: alpha,
            eps_t1: tau,
            eps_t2: tau,
            w1: 0.0,
            w2: 0.0,
            sigma_ext: SymTensor::zero(Dim::Two),
        };
        let rep = assumption_a_probe(
            &ProbeTarget::TwoD(&p),
            &ProbeConfig { samples: 4000, ..Default::default() },
        )
        .unwrap();
        let lmin = alpha.smallest_eigenvalue();
        let lmax = *alpha.eigenvalues().last().unwrap();
        assert!(rep.pass);
        assert!(rep.c1_hat >= lmin - 1e-9, "c1 {} < lmin {}", rep.c1_hat, lmin);
        assert!(rep.c1_hat <= lmax + 1e-9);
        assert!(rep.c1_hat <= lmin * 1.25, "sampled minimum should approach lambda_min");
    }
}

#[cfg(test)]
mod chain_flag_tests {
    use super::*;
    use crate::tensor::ElasticModulus;

    #[test]
    fn beta_eps_chain_term_vanishes_at_the_root() {
        // strain-dependent translation: the chain term is proportional to
        // det(delta*) which is zero at beta_II up to the bisection residual
        let p = PhaseParams {
            alpha1: ElasticModulus::from_t_eigenbasis(2.0, 1.5, 1.0, 0.0).unwrap(),
            alpha2: ElasticModulus::from_t_eigenbasis(1.0, 2.0, 3.0, 0.0).unwrap(),
            eps_t1: SymTensor::d2(0.1, -0.2, 0.05),
            eps_t2: SymTensor::d2(0.6, 0.4, -0.3),
            w1: 0.0,
            w2: 0.0,
            sigma_ext: SymTensor::zero(Dim::Two),
        };
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        let mut found = 0;
        while found < 10 {
            let d = rng.gen_range(0.15..0.85);
            let e = SymTensor::d2(
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
            );
            let (regime, _) = classify_regime(d, &e, &p).unwrap();
            if regime != RegimeLabel::Two {
                continue;
            }
            found += 1;
            let off = eval_2d_opts(d, &e, &p, false).unwrap();
            let on = eval_2d_opts(d, &e, &p, true).unwrap();
            let diff = on.d_eps.sub(&off.d_eps).norm();
            assert!(diff <= 1e-9 * (1.0 + off.d_eps.norm()), "chain term {diff:.3e}");
        }
    }
}

#[cfg(test)]
mod extension_monotonicity_tests {
    use super::*;
    use crate::tensor::ElasticModulus;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// The extension must keep the strain gradient monotone for every real
    /// order parameter, including the Hermite blending zones where the
    /// mixed d-eps term enters.
    #[test]
    fn extended_evaluators_stay_monotone_in_strain() {
        let mut rng = ChaCha8Rng::seed_from_u64(60);

        let p2 = PhaseParams {
            alpha1: ElasticModulus::from_t_eigenbasis(2.0, 1.5, 1.0, 0.2).unwrap(),
            alpha2: ElasticModulus::from_t_eigenbasis(1.0, 2.0, 3.0, -0.3).unwrap(),
            eps_t1: SymTensor::d2(0.1, -0.2, 0.05),
            eps_t2: SymTensor::d2(0.6, 0.4, -0.3),
            w1: 0.1,
            w2: 0.3,
            sigma_ext: SymTensor::zero(Dim::Two),
        };
        let mut worst = f64::INFINITY;
        for _ in 0..2000 {
            let d = rng.gen_range(-2.0..3.0);
            let e1 = SymTensor::d2(
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
            );
            let e2 = SymTensor::d2(
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
            );
            let g1 = eval_extended_2d(d, &e1, &p2).unwrap().d_eps;
            let g2 = eval_extended_2d(d, &e2, &p2).unwrap().d_eps;
            let de = e2.sub(&e1);
            worst = worst.min(g2.sub(&g1).dot(&de) / de.dot(&de).max(1e-30));
        }
        assert!(worst > 0.0, "monotonicity lost on the extended domain: c1 = {worst:.3e}");

        let p1 = PhaseParams {
            alpha1: ElasticModulus::d1(1.0),
            alpha2: ElasticModulus::d1(2.0),
            eps_t1: SymTensor::scalar(0.3),
            eps_t2: SymTensor::scalar(-0.5),
            w1: 0.1,
            w2: 0.2,
            sigma_ext: SymTensor::scalar(0.0),
        };
        let mut worst = f64::INFINITY;
        for _ in 0..2000 {
            let d = rng.gen_range(-2.0..3.0);
            let x1: f64 = rng.gen_range(-3.0..3.0);
            let x2: f64 = rng.gen_range(-3.0..3.0);
            if (x2 - x1).abs() < 1e-9 {
                continue;
            }
            let g1 = eval_extended_1d(d, x1, &p1).unwrap().d_eps.c[0];
            let g2 = eval_extended_1d(d, x2, &p1).unwrap().d_eps.c[0];
            worst = worst.min((g2 - g1) / (x2 - x1));
        }
        assert!(worst > 0.0, "1D extension lost monotonicity: c1 = {worst:.3e}");
    }

    /// Linear growth of the extension: |W0| <= C (|d|^2 + |eps|^2 + 1) and
    /// |dW0/dd| bounded on the linear branches.
    #[test]
    fn extended_growth_bounds() {
        let p = PhaseParams {
            alpha1: ElasticModulus::d1(1.0),
            alpha2: ElasticModulus::d1(2.0),
            eps_t1: SymTensor::scalar(0.0),
            eps_t2: SymTensor::scalar(1.0),
            w1: 0.0,
            w2: 0.0,
            sigma_ext: SymTensor::scalar(0.0),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        for _ in 0..500 {
            let d = rng.gen_range(-20.0..20.0);
            let x: f64 = rng.gen_range(-5.0..5.0);
            let r = eval_extended_1d(d, x, &p).unwrap();
            assert!(r.value >= 0.0);
            assert!(r.value <= 20.0 * (d * d + x * x + 1.0));
            if !(-1.0..=2.0).contains(&d) {
                assert!(r.d_d.abs() <= 1.0 + 1e-12);
            }
        }
    }
}

#[cfg(test)]
mod property_tests {
    use super::*;
    use crate::energy::w_micro;
    use crate::tensor::ElasticModulus;
    use proptest::prelude::*;

    fn commuting_phase_strategy() -> impl Strategy<Value = (PhaseParams, f64, SymTensor)> {
        let eig = 0.5f64..3.0;
        let strain = -1.5f64..1.5;
        (
            (eig.clone(), eig.clone(), eig.clone()),
            (eig.clone(), eig.clone(), eig),
            proptest::array::uniform3(strain.clone()),
            proptest::array::uniform3(strain.clone()),
            0.0f64..=1.0,
            proptest::array::uniform3(-2.0f64..2.0),
            0.0f64..0.5,
            0.0f64..0.5,
        )
            .prop_map(|(a1, a2, t1, t2, d, e, w1, w2)| {
                let p = PhaseParams {
                    alpha1: ElasticModulus::from_t_eigenbasis(a1.0, a1.1, a1.2, 0.0).unwrap(),
                    alpha2: ElasticModulus::from_t_eigenbasis(a2.0, a2.1, a2.2, 0.0).unwrap(),
                    eps_t1: SymTensor::d2(t1[0], t1[1], t1[2]),
                    eps_t2: SymTensor::d2(t2[0], t2[1], t2[2]),
                    w1,
                    w2,
                    sigma_ext: SymTensor::zero(Dim::Two),
                };
                (p, d, SymTensor::d2(e[0], e[1], e[2]))
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        /// The optimal phase strains average to the macroscopic strain and
        /// the relaxed value never exceeds the unrelaxed mixture.
        #[test]
        fn averaging_and_upper_bound((p, d, e) in commuting_phase_strategy()) {
            let r = eval_2d(d, &e, &p).unwrap();
            let avg = r.eps1_star.scale(d).add(&r.eps2_star.scale(1.0 - d));
            prop_assert!(avg.sub(&e).norm() <= 1e-10 * (1.0 + e.norm()));
            let ub = d * w_micro(1, &e, &p).unwrap() + (1.0 - d) * w_micro(2, &e, &p).unwrap();
            prop_assert!(r.value <= ub + 1e-12 * (1.0 + ub.abs()));
            prop_assert!(r.beta_star >= 0.0);
            let gs = gamma_star(&p).unwrap();
            prop_assert!(r.beta_star <= gs.value * (1.0 + 1e-12));
        }
    }
}
