//! Small-dimension symmetric tensor algebra in Mandel coordinates.
//!
//! Symmetric 2x2 tensors are stored as orthonormal Mandel vectors
//! `(e11, e22, sqrt(2) e12)` so that the tensor inner product `A:B` equals the
//! vector dot product and fourth-order moduli become plain symmetric 3x3
//! matrices. One-dimensional tensors are scalars kept in the first slot.

use crate::error::{Error, Result};

pub const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Spatial tensor dimension. The scalar three-dimensional setting works with
/// plain 2-vectors (`Vec2`) and does not use this type.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dim {
    One,
    Two,
}

impl Dim {
    pub fn mandel_len(self) -> usize {
        match self {
            Dim::One => 1,
            Dim::Two => 3,
        }
    }
}

pub type Mat3 = [[f64; 3]; 3];
pub type Vec2 = [f64; 2];
pub type Mat2 = [[f64; 2]; 2];

/// Mandel matrix of the trace-removal operator `T e = e - tr(e) Id` on
/// symmetric 2x2 tensors. Its eigenvalues are {-1, 1, 1} and it is an
/// isometry in the Frobenius norm.
pub const TRACE_REMOVER: Mat3 = [[0.0, -1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 1.0]];

/// Symmetric strain/stress value in Mandel coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SymTensor {
    pub dim: Dim,
    pub c: [f64; 3],
}

impl SymTensor {
    pub fn zero(dim: Dim) -> Self {
        SymTensor { dim, c: [0.0; 3] }
    }

    /// One-dimensional strain (a scalar).
    pub fn scalar(v: f64) -> Self {
        SymTensor { dim: Dim::One, c: [v, 0.0, 0.0] }
    }

    /// Two-dimensional tensor from Mandel components `(e11, e22, sqrt2*e12)`.
    pub fn d2(v1: f64, v2: f64, v3: f64) -> Self {
        SymTensor { dim: Dim::Two, c: [v1, v2, v3] }
    }

    /// Identity tensor of the given dimension.
    pub fn identity(dim: Dim) -> Self {
        match dim {
            Dim::One => SymTensor::scalar(1.0),
            Dim::Two => SymTensor::d2(1.0, 1.0, 0.0),
        }
    }

    /// Builds the Mandel vector of a symmetric 2x2 matrix.
    /// Fails with `NotSymmetric` if the off-diagonal entries disagree by more
    /// than `1e-12` relative to the matrix norm.
    pub fn from_matrix2(m: [[f64; 2]; 2]) -> Result<Self> {
        let scale = m.iter().flatten().map(|x| x.abs()).fold(0.0, f64::max);
        let skew = (m[0][1] - m[1][0]).abs();
        if skew > 1e-12 * scale.max(1.0) {
            return Err(Error::NotSymmetric(skew));
        }
        let e12 = 0.5 * (m[0][1] + m[1][0]);
        Ok(SymTensor::d2(m[0][0], m[1][1], SQRT_2 * e12))
    }

    /// Reconstructs the symmetric 2x2 matrix from the Mandel vector.
    pub fn to_matrix2(&self) -> [[f64; 2]; 2] {
        debug_assert_eq!(self.dim, Dim::Two);
        let e12 = self.c[2] / SQRT_2;
        [[self.c[0], e12], [e12, self.c[1]]]
    }

    /// Tensor inner product `A:B`; equals the Mandel dot product.
    pub fn dot(&self, other: &SymTensor) -> f64 {
        self.c[0] * other.c[0] + self.c[1] * other.c[1] + self.c[2] * other.c[2]
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scale(&self, s: f64) -> SymTensor {
        SymTensor { dim: self.dim, c: [self.c[0] * s, self.c[1] * s, self.c[2] * s] }
    }

    pub fn add(&self, other: &SymTensor) -> SymTensor {
        SymTensor {
            dim: self.dim,
            c: [
                self.c[0] + other.c[0],
                self.c[1] + other.c[1],
                self.c[2] + other.c[2],
            ],
        }
    }

    pub fn sub(&self, other: &SymTensor) -> SymTensor {
        self.add(&other.scale(-1.0))
    }

    /// Linear combination `a*self + b*other`.
    pub fn axpy(&self, a: f64, other: &SymTensor, b: f64) -> SymTensor {
        self.scale(a).add(&other.scale(b))
    }

    pub fn trace(&self) -> f64 {
        match self.dim {
            Dim::One => self.c[0],
            Dim::Two => self.c[0] + self.c[1],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.c.iter().all(|x| x.is_finite())
    }
}

/// Determinant of a symmetric 2x2 tensor: `e11*e22 - e12^2 = v1*v2 - v3^2/2`.
pub fn det_sym(t: &SymTensor) -> f64 {
    assert_eq!(t.dim, Dim::Two, "det_sym requires a two-dimensional tensor");
    t.c[0] * t.c[1] - 0.5 * t.c[2] * t.c[2]
}

/// Mandel gradient of `det`: for symmetric 2x2, `d det(X)/dX = -T X`.
pub fn det_gradient(t: &SymTensor) -> SymTensor {
    SymTensor::d2(t.c[1], t.c[0], -t.c[2])
}

/// Applies the trace remover `T e = e - tr(e) Id` (dim 2 only).
pub fn trace_remove(e: &SymTensor) -> SymTensor {
    debug_assert_eq!(e.dim, Dim::Two);
    SymTensor::d2(-e.c[1], -e.c[0], e.c[2])
}

/// Symmetrized rank-one tensor `sym(a (x) n)` in Mandel form; the strain jump
/// across a laminate interface with normal `n` has this shape.
pub fn sym_outer(a: &Vec2, n: &Vec2) -> SymTensor {
    SymTensor::d2(a[0] * n[0], a[1] * n[1], (a[0] * n[1] + a[1] * n[0]) / SQRT_2)
}

// ---------------------------------------------------------------------------
// Dense 3x3 helpers (plain arrays; everything here is symmetric by contract).
// ---------------------------------------------------------------------------

pub fn mat3_identity() -> Mat3 {
    [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
}

pub fn mat3_zero() -> Mat3 {
    [[0.0; 3]; 3]
}

pub fn mat3_vec(m: &Mat3, v: &[f64; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for i in 0..3 {
        out[i] = m[i][0] * v[0] + m[i][1] * v[1] + m[i][2] * v[2];
    }
    out
}

pub fn mat3_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = mat3_zero();
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                out[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    out
}

pub fn mat3_add_scaled(a: &Mat3, sa: f64, b: &Mat3, sb: f64) -> Mat3 {
    let mut out = mat3_zero();
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = sa * a[i][j] + sb * b[i][j];
        }
    }
    out
}

pub fn mat3_transpose(a: &Mat3) -> Mat3 {
    let mut out = mat3_zero();
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[j][i];
        }
    }
    out
}

pub fn mat3_frobenius(a: &Mat3) -> f64 {
    a.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
}

/// Cyclic Jacobi eigenvalue iteration for a symmetric 3x3 matrix.
/// Returns eigenvalues sorted ascending and the matching eigenvectors as
/// columns. Always converges for symmetric input.
pub fn sym3_eigen(a: &Mat3) -> ([f64; 3], Mat3) {
    let mut m = *a;
    let mut v = mat3_identity();
    for _ in 0..64 {
        let off = (m[0][1].powi(2) + m[0][2].powi(2) + m[1][2].powi(2)).sqrt();
        let scale = mat3_frobenius(&m).max(f64::MIN_POSITIVE);
        if off <= 1e-16 * scale {
            break;
        }
        for p in 0..2 {
            for q in (p + 1)..3 {
                if m[p][q].abs() <= 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // rotate rows/columns p and q
                for k in 0..3 {
                    let mkp = m[k][p];
                    let mkq = m[k][q];
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..3 {
                    let mpk = m[p][k];
                    let mqk = m[q][k];
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for k in 0..3 {
                    let vkp = v[k][p];
                    let vkq = v[k][q];
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| m[i][i].partial_cmp(&m[j][j]).unwrap());
    let evals = [m[order[0]][order[0]], m[order[1]][order[1]], m[order[2]][order[2]]];
    let mut evecs = mat3_zero();
    for (new, &old) in order.iter().enumerate() {
        for k in 0..3 {
            evecs[k][new] = v[k][old];
        }
    }
    (evals, evecs)
}

/// Solves a symmetric (possibly indefinite or singular) 3x3 system through
/// the eigendecomposition. Eigenvalues below `rel_cutoff * |lambda|_max` are
/// treated as null; if the right-hand side has a relative component larger
/// than `1e-8` in the null space the call fails and returns that fraction.
pub fn sym3_pseudo_solve(a: &Mat3, rhs: &[f64; 3]) -> std::result::Result<[f64; 3], f64> {
    const REL_CUTOFF: f64 = 1e-12;
    let (evals, evecs) = sym3_eigen(a);
    let lmax = evals.iter().map(|x| x.abs()).fold(0.0, f64::max);
    if lmax == 0.0 {
        let rn = (rhs[0] * rhs[0] + rhs[1] * rhs[1] + rhs[2] * rhs[2]).sqrt();
        return if rn == 0.0 { Ok([0.0; 3]) } else { Err(1.0) };
    }
    let rhs_norm = (rhs[0] * rhs[0] + rhs[1] * rhs[1] + rhs[2] * rhs[2]).sqrt();
    let mut out = [0.0; 3];
    let mut null_sq = 0.0;
    for k in 0..3 {
        let vk = [evecs[0][k], evecs[1][k], evecs[2][k]];
        let proj = vk[0] * rhs[0] + vk[1] * rhs[1] + vk[2] * rhs[2];
        if evals[k].abs() <= REL_CUTOFF * lmax {
            null_sq += proj * proj;
        } else {
            let w = proj / evals[k];
            for i in 0..3 {
                out[i] += w * vk[i];
            }
        }
    }
    let null_frac = if rhs_norm > 0.0 { null_sq.sqrt() / rhs_norm } else { 0.0 };
    if null_frac > 1e-8 {
        Err(null_frac)
    } else {
        Ok(out)
    }
}

/// Condition estimate |lambda|_max / |lambda|_min of a symmetric 3x3 matrix.
pub fn sym3_condition(a: &Mat3) -> f64 {
    let (evals, _) = sym3_eigen(a);
    let lmax = evals.iter().map(|x| x.abs()).fold(0.0, f64::max);
    let lmin = evals.iter().map(|x| x.abs()).fold(f64::INFINITY, f64::min);
    if lmin == 0.0 {
        f64::INFINITY
    } else {
        lmax / lmin
    }
}

// ---------------------------------------------------------------------------
// Elastic modulus
// ---------------------------------------------------------------------------

/// Symmetric positive-definite fourth-order tensor on symmetric matrices,
/// stored as its Mandel matrix (1x1 for D=1, 3x3 for D=2).
#[derive(Clone, Copy, Debug)]
pub struct ElasticModulus {
    pub dim: Dim,
    pub m: Mat3,
}

impl ElasticModulus {
    pub fn identity(dim: Dim) -> Self {
        ElasticModulus { dim, m: mat3_identity() }
    }

    pub fn scaled_identity(dim: Dim, s: f64) -> Self {
        let mut m = mat3_zero();
        for i in 0..3 {
            m[i][i] = s;
        }
        ElasticModulus { dim, m }
    }

    /// One-dimensional modulus (a positive scalar).
    pub fn d1(alpha: f64) -> Self {
        let mut m = mat3_identity();
        m[0][0] = alpha;
        ElasticModulus { dim: Dim::One, m }
    }

    /// Scalar value of a one-dimensional modulus.
    pub fn as_scalar(&self) -> f64 {
        debug_assert_eq!(self.dim, Dim::One);
        self.m[0][0]
    }

    /// Cubic-symmetry modulus from the Voigt constants (C11, C12, C44).
    /// In Mandel coordinates the shear entry doubles.
    pub fn cubic(c11: f64, c12: f64, c44: f64) -> Result<Self> {
        let m = [[c11, c12, 0.0], [c12, c11, 0.0], [0.0, 0.0, 2.0 * c44]];
        ElasticModulus::from_mandel(Dim::Two, m)
    }

    /// General anisotropic modulus from a full Mandel matrix.
    /// Checks symmetry (1e-14 relative) and positive definiteness.
    pub fn from_mandel(dim: Dim, m: Mat3) -> Result<Self> {
        let n = dim.mandel_len();
        let scale = mat3_frobenius(&m).max(1.0);
        for i in 0..n {
            for j in (i + 1)..n {
                let skew = (m[i][j] - m[j][i]).abs();
                if skew > 1e-14 * scale {
                    return Err(Error::NotSymmetric(skew));
                }
            }
        }
        let mut full = mat3_identity();
        for i in 0..n {
            for j in 0..n {
                full[i][j] = 0.5 * (m[i][j] + m[j][i]);
            }
        }
        let (evals, _) = sym3_eigen(&full);
        if evals[0] <= 0.0 {
            return Err(Error::NonSpdModulus(evals[0]));
        }
        Ok(ElasticModulus { dim, m: full })
    }

    /// Applies the modulus: `sigma = C e`.
    pub fn apply(&self, e: &SymTensor) -> Result<SymTensor> {
        if self.dim != e.dim {
            return Err(Error::DimMismatch(self.dim.mandel_len(), e.dim.mandel_len()));
        }
        Ok(SymTensor { dim: e.dim, c: mat3_vec(&self.m, &e.c) })
    }

    /// Solves `C x = rhs`. Fails with `SingularModulus` when the condition
    /// estimate exceeds 1e12.
    pub fn solve(&self, rhs: &SymTensor) -> Result<SymTensor> {
        if self.dim != rhs.dim {
            return Err(Error::DimMismatch(self.dim.mandel_len(), rhs.dim.mandel_len()));
        }
        let cond = sym3_condition(&self.m);
        if !cond.is_finite() || cond > 1e12 {
            return Err(Error::SingularModulus(cond));
        }
        match sym3_pseudo_solve(&self.m, &rhs.c) {
            Ok(c) => Ok(SymTensor { dim: rhs.dim, c }),
            Err(_) => Err(Error::SingularModulus(cond)),
        }
    }

    /// Eigenvalues of the Mandel matrix, ascending. For D=1 this is the scalar.
    pub fn eigenvalues(&self) -> Vec<f64> {
        match self.dim {
            Dim::One => vec![self.m[0][0]],
            Dim::Two => sym3_eigen(&self.m).0.to_vec(),
        }
    }

    pub fn smallest_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    pub fn norm(&self) -> f64 {
        match self.dim {
            Dim::One => self.m[0][0].abs(),
            Dim::Two => mat3_frobenius(&self.m),
        }
    }

    /// Inverse square root through the eigendecomposition; reconstruction is
    /// accurate to about 1e-13 relative.
    pub fn inv_sqrt(&self) -> Result<Mat3> {
        let (evals, evecs) = sym3_eigen(&self.m);
        if evals[0] <= 0.0 {
            return Err(Error::NonSpdModulus(evals[0]));
        }
        let mut out = mat3_zero();
        for k in 0..3 {
            let w = 1.0 / evals[k].sqrt();
            for i in 0..3 {
                for j in 0..3 {
                    out[i][j] += w * evecs[i][k] * evecs[j][k];
                }
            }
        }
        Ok(out)
    }

    /// Modulus assembled in the eigenbasis of the trace remover: eigenvalue
    /// `ap` on the hydrostatic direction (1,1,0)/sqrt2 and the SPD block
    /// [[am, b], [b, as_]] on the deviatoric plane. Every such modulus
    /// commutes with `T`; cubic symmetry is the sub-family with `b = 0`.
    pub fn from_t_eigenbasis(ap: f64, am: f64, as_: f64, b: f64) -> Result<Self> {
        let p = [1.0 / SQRT_2, 1.0 / SQRT_2, 0.0];
        let m = [1.0 / SQRT_2, -1.0 / SQRT_2, 0.0];
        let s = [0.0, 0.0, 1.0];
        let mut mat = mat3_zero();
        for i in 0..3 {
            for j in 0..3 {
                mat[i][j] = ap * p[i] * p[j]
                    + am * m[i] * m[j]
                    + as_ * s[i] * s[j]
                    + b * (m[i] * s[j] + s[i] * m[j]);
            }
        }
        ElasticModulus::from_mandel(Dim::Two, mat)
    }

    /// Commutator norm `||A T - T A||` against the trace remover.
    pub fn commutator_with_t(&self) -> f64 {
        let at = mat3_mul(&self.m, &TRACE_REMOVER);
        let ta = mat3_mul(&TRACE_REMOVER, &self.m);
        mat3_frobenius(&mat3_add_scaled(&at, 1.0, &ta, -1.0))
    }
}

// ---------------------------------------------------------------------------
// 2-vector / 2x2 helpers for the scalar three-dimensional setting and the
// laminate constructions.
// ---------------------------------------------------------------------------

pub fn mat2_vec(m: &Mat2, v: &Vec2) -> Vec2 {
    [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
}

pub fn mat2_det(m: &Mat2) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

/// Direct 2x2 solve; `None` when the matrix is numerically singular.
pub fn mat2_solve(m: &Mat2, rhs: &Vec2) -> Option<Vec2> {
    let det = mat2_det(m);
    let scale = m.iter().flatten().map(|x| x.abs()).fold(0.0, f64::max);
    if det.abs() <= 1e-14 * scale * scale {
        return None;
    }
    Some([
        (m[1][1] * rhs[0] - m[0][1] * rhs[1]) / det,
        (-m[1][0] * rhs[0] + m[0][0] * rhs[1]) / det,
    ])
}

/// Eigenvalues of a symmetric 2x2 matrix, ascending.
pub fn mat2_eigen_sym(m: &Mat2) -> [f64; 2] {
    let tr = m[0][0] + m[1][1];
    let det = mat2_det(m);
    let disc = (0.25 * tr * tr - det).max(0.0).sqrt();
    [0.5 * tr - disc, 0.5 * tr + disc]
}

pub fn vec2_dot(a: &Vec2, b: &Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

pub fn vec2_axpy(a: f64, x: &Vec2, b: f64, y: &Vec2) -> Vec2 {
    [a * x[0] + b * y[0], a * x[1] + b * y[1]]
}

pub fn mat2_add_scaled(a: &Mat2, sa: f64, b: &Mat2, sb: f64) -> Mat2 {
    [
        [sa * a[0][0] + sb * b[0][0], sa * a[0][1] + sb * b[0][1]],
        [sa * a[1][0] + sb * b[1][0], sa * a[1][1] + sb * b[1][1]],
    ]
}

pub fn mat2_is_spd(m: &Mat2) -> bool {
    let sym = (m[0][1] - m[1][0]).abs()
        <= 1e-12 * m.iter().flatten().map(|x| x.abs()).fold(1.0, f64::max);
    sym && mat2_eigen_sym(m)[0] > 0.0
}
