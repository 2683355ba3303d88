//! Microscopic and linear-theory elastic energy densities and the chemical
//! free energy, with first derivatives.

use crate::error::{Error, Result};
use crate::tensor::{mat2_is_spd, mat2_vec, vec2_dot, ElasticModulus, Mat2, SymTensor, Vec2};

/// Two-phase material data: per-phase modulus, eigenstrain and offset plus
/// the applied stress shared by both phases.
#[derive(Clone, Copy, Debug)]
pub struct PhaseParams {
    pub alpha1: ElasticModulus,
    pub alpha2: ElasticModulus,
    pub eps_t1: SymTensor,
    pub eps_t2: SymTensor,
    pub w1: f64,
    pub w2: f64,
    pub sigma_ext: SymTensor,
}

impl PhaseParams {
    pub fn validate(&self) -> Result<()> {
        if self.alpha1.smallest_eigenvalue() <= 0.0 {
            return Err(Error::NonSpdModulus(self.alpha1.smallest_eigenvalue()));
        }
        if self.alpha2.smallest_eigenvalue() <= 0.0 {
            return Err(Error::NonSpdModulus(self.alpha2.smallest_eigenvalue()));
        }
        if self.w1 < 0.0 || self.w2 < 0.0 {
            return Err(Error::Config("phase offsets w_i must be >= 0".into()));
        }
        let d = self.alpha1.dim;
        for t in [&self.eps_t1, &self.eps_t2, &self.sigma_ext] {
            if t.dim != d {
                return Err(Error::DimMismatch(d.mandel_len(), t.dim.mandel_len()));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> crate::tensor::Dim {
        self.alpha1.dim
    }

    pub fn modulus(&self, phase: usize) -> &ElasticModulus {
        if phase == 1 {
            &self.alpha1
        } else {
            &self.alpha2
        }
    }

    pub fn eigenstrain(&self, phase: usize) -> &SymTensor {
        if phase == 1 {
            &self.eps_t1
        } else {
            &self.eps_t2
        }
    }

    pub fn offset(&self, phase: usize) -> f64 {
        if phase == 1 {
            self.w1
        } else {
            self.w2
        }
    }
}

/// Material data for the scalar (anti-plane shear) three-dimensional setting:
/// strains are gradients of a scalar deformation, so eigenstrains are plain
/// 2-vectors and the moduli 2x2 SPD matrices.
#[derive(Clone, Copy, Debug)]
pub struct ScalarPhaseParams {
    pub alpha1: Mat2,
    pub alpha2: Mat2,
    pub f_t1: Vec2,
    pub f_t2: Vec2,
    pub w1: f64,
    pub w2: f64,
    pub sigma_ext: Vec2,
}

impl ScalarPhaseParams {
    pub fn validate(&self) -> Result<()> {
        for (i, a) in [(1usize, &self.alpha1), (2, &self.alpha2)] {
            if !mat2_is_spd(a) {
                return Err(Error::Config(format!("alpha{i} is not a 2x2 SPD matrix")));
            }
        }
        if self.w1 < 0.0 || self.w2 < 0.0 {
            return Err(Error::Config("phase offsets w_i must be >= 0".into()));
        }
        Ok(())
    }

    /// Microscopic energy of one phase at a gradient `f`.
    pub fn w_micro(&self, phase: usize, f: &Vec2) -> f64 {
        let (a, ft, w) = if phase == 1 {
            (&self.alpha1, &self.f_t1, self.w1)
        } else {
            (&self.alpha2, &self.f_t2, self.w2)
        };
        let d = [f[0] - ft[0], f[1] - ft[1]];
        0.5 * vec2_dot(&mat2_vec(a, &d), &d) + w
    }

    /// Stress of one phase at a gradient `f`.
    pub fn stress(&self, phase: usize, f: &Vec2) -> Vec2 {
        let (a, ft) = if phase == 1 {
            (&self.alpha1, &self.f_t1)
        } else {
            (&self.alpha2, &self.f_t2)
        };
        mat2_vec(a, &[f[0] - ft[0], f[1] - ft[1]])
    }
}

/// Chemistry parameters of the free energy density `psi`.
#[derive(Clone, Copy, Debug)]
pub struct ChemParams {
    pub theta: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    pub lambda: f64,
    /// Threshold of the regularized logarithm; must lie in (0, 0.25).
    pub g_delta: f64,
}

impl Default for ChemParams {
    fn default() -> Self {
        ChemParams { theta: 1.0, kappa1: 1.0, kappa2: 1.0, lambda: 1e-3, g_delta: 1e-6 }
    }
}

impl ChemParams {
    pub fn validate(&self) -> Result<()> {
        if self.theta <= 0.0 || self.kappa1 <= 0.0 || self.kappa2 <= 0.0 || self.lambda <= 0.0 {
            return Err(Error::Config("theta, kappa1, kappa2, lambda must be > 0".into()));
        }
        if !(self.g_delta > 0.0 && self.g_delta < 0.25) {
            return Err(Error::Config("g_delta must lie in (0, 0.25)".into()));
        }
        Ok(())
    }
}

/// Parameters of the Eshelby linear theory `W_lin(d, e) = 1/2 (e - d eb) : C(d) (e - d eb)`.
/// `c2 = None` keeps the elasticity tensor independent of `d`; with `Some`,
/// `C(d) = d c1 + (1 - d) c2` and the extra derivative term is included.
#[derive(Clone, Copy, Debug)]
pub struct LinearTheoryParams {
    pub c1: ElasticModulus,
    pub c2: Option<ElasticModulus>,
    pub eps_bar: SymTensor,
}

impl LinearTheoryParams {
    pub fn constant(c: ElasticModulus, eps_bar: SymTensor) -> Self {
        LinearTheoryParams { c1: c, c2: None, eps_bar }
    }

    fn modulus_at(&self, d: f64) -> ElasticModulus {
        match &self.c2 {
            None => self.c1,
            Some(c2) => {
                let mut m = crate::tensor::mat3_zero();
                for i in 0..3 {
                    for j in 0..3 {
                        m[i][j] = d * self.c1.m[i][j] + (1.0 - d) * c2.m[i][j];
                    }
                }
                ElasticModulus { dim: self.c1.dim, m }
            }
        }
    }
}

/// Microscopic elastic energy of phase `i`:
/// `W_i(e) = 1/2 alpha_i (e - eps_i^T) : (e - eps_i^T) + w_i`.
pub fn w_micro(phase: usize, e: &SymTensor, p: &PhaseParams) -> Result<f64> {
    let d = e.sub(p.eigenstrain(phase));
    let s = p.modulus(phase).apply(&d)?;
    Ok(0.5 * s.dot(&d) + p.offset(phase))
}

/// Stress of phase `i`: `alpha_i (e - eps_i^T)`.
pub fn w_micro_stress(phase: usize, e: &SymTensor, p: &PhaseParams) -> Result<SymTensor> {
    p.modulus(phase).apply(&e.sub(p.eigenstrain(phase)))
}

/// Linear-theory energy with derivatives `(value, d/dd, d/de)`.
pub fn w_lin(d: f64, e: &SymTensor, q: &LinearTheoryParams) -> (f64, f64, SymTensor) {
    let c = q.modulus_at(d);
    let misfit = e.sub(&q.eps_bar.scale(d));
    let stress = c.apply(&misfit).expect("dimensions fixed by construction");
    let value = 0.5 * stress.dot(&misfit);
    let mut d_d = -q.eps_bar.dot(&stress);
    if let Some(c2) = &q.c2 {
        // quadratic form picks up the tensor interpolation term
        let diff = ElasticModulus {
            dim: q.c1.dim,
            m: crate::tensor::mat3_add_scaled(&q.c1.m, 1.0, &c2.m, -1.0),
        };
        let extra = diff.apply(&misfit).expect("dims");
        d_d += 0.5 * extra.dot(&misfit);
    }
    (value, d_d, stress)
}

/// Energy density of the applied dead load: `W_ext(e) = -e : sigma_ext`.
pub fn w_ext(e: &SymTensor, sigma_ext: &SymTensor) -> f64 {
    -e.dot(sigma_ext)
}

/// Result of a regularized logarithm evaluation.
#[derive(Clone, Copy, Debug)]
pub struct GEval {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
    /// true when `s` fell outside `[delta, 1 - delta]` and the quadratic
    /// extension was used
    pub regularized: bool,
}

/// `g(s) = s ln s + (1-s) ln(1-s)` on `[delta, 1-delta]`, extended outside by
/// its second-order Taylor polynomial about the nearer threshold. The result
/// is convex and C^2 on all of R.
pub fn g_reg(s: f64, delta: f64) -> GEval {
    debug_assert!(delta > 0.0 && delta < 0.25);
    let exact = |x: f64| -> (f64, f64, f64) {
        (x * x.ln() + (1.0 - x) * (1.0 - x).ln(), (x / (1.0 - x)).ln(), 1.0 / (x * (1.0 - x)))
    };
    if s < delta {
        let (v, d1, d2) = exact(delta);
        let h = s - delta;
        GEval { value: v + d1 * h + 0.5 * d2 * h * h, d1: d1 + d2 * h, d2, regularized: true }
    } else if s > 1.0 - delta {
        let (v, d1, d2) = exact(1.0 - delta);
        let h = s - (1.0 - delta);
        GEval { value: v + d1 * h + 0.5 * d2 * h * h, d1: d1 + d2 * h, d2, regularized: true }
    } else {
        let (value, d1, d2) = exact(s);
        GEval { value, d1, d2, regularized: false }
    }
}

/// Chemical free energy density evaluation.
#[derive(Clone, Copy, Debug)]
pub struct PsiEval {
    pub value: f64,
    pub d_a: f64,
    pub d_b: f64,
    /// true when either logarithm used its quadratic extension
    pub regularized: bool,
}

/// `psi(a,b) = theta/2 (g(a+b) + g(a-b)) + kappa1 a (1-a) - kappa2 b^2`.
pub fn psi(a: f64, b: f64, c: &ChemParams) -> PsiEval {
    let gp = g_reg(a + b, c.g_delta);
    let gm = g_reg(a - b, c.g_delta);
    let value = 0.5 * c.theta * (gp.value + gm.value) + c.kappa1 * a * (1.0 - a)
        - c.kappa2 * b * b;
    let d_a = 0.5 * c.theta * (gp.d1 + gm.d1) + c.kappa1 * (1.0 - 2.0 * a);
    let d_b = 0.5 * c.theta * (gp.d1 - gm.d1) - 2.0 * c.kappa2 * b;
    PsiEval { value, d_a, d_b, regularized: gp.regularized || gm.regularized }
}

/// Explicit growth constant for the linear theory satisfying
/// `|W_lin(d, e)| <= C1 (|d|^2 + |e|^2 + 1)`.
pub fn w_lin_growth_constant(q: &LinearTheoryParams) -> f64 {
    let cnorm = match &q.c2 {
        None => q.c1.norm(),
        Some(c2) => q.c1.norm().max(c2.norm()),
    };
    let eb = q.eps_bar.norm();
    // |W| <= 1/2 |C| (|e| + d |eb|)^2 <= |C| (1 + eb^2) (|d|^2 + |e|^2)
    cnorm * (1.0 + eb * eb)
}
