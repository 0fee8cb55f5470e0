//! Pointwise Q-tensor algebra.
//!
//! A nematic order parameter is a symmetric traceless 3x3 matrix. We store it
//! as five coefficients in a fixed orthonormal basis of that space, so the
//! Frobenius norm is the plain Euclidean norm of the coefficient vector and
//! field solvers never touch 3x3 matrices in their inner loops. This module
//! owns the bulk potential, its gradient, the closed-form spectral
//! decomposition, distance/projection to the vacuum manifold, and phase
//! classification.

use std::f64::consts::PI;

use thiserror::Error;

/// Fixed orthonormal basis of the symmetric traceless matrices:
///
/// ```text
/// E1 = (1/sqrt 2) diag(1,-1,0)        E2 = (1/sqrt 6) diag(1,1,-2)
/// E3 = (1/sqrt 2)(e1 e2ᵀ + e2 e1ᵀ)    E4 = (1/sqrt 2)(e1 e3ᵀ + e3 e1ᵀ)
/// E5 = (1/sqrt 2)(e2 e3ᵀ + e3 e2ᵀ)
/// ```
///
/// Orthonormal under the Frobenius inner product, so `|Q|^2 = sum q_i^2`.
pub const BASIS_DIM: usize = 5;

const SQRT2: f64 = std::f64::consts::SQRT_2;
const SQRT6: f64 = 2.449_489_742_783_178;

/// Symmetric traceless 3x3 matrix stored as five basis coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct QTensor(pub [f64; BASIS_DIM]);

#[derive(Debug, Error, PartialEq)]
pub enum SpectralError {
    /// Top eigenvalue pair too close for the vacuum projection to be defined.
    #[error("degenerate spectrum: top eigenvalue gap {gap:.3e} <= tolerance {tol:.3e}")]
    DegenerateSpectrum { gap: f64, tol: f64 },
}

impl std::ops::Add for QTensor {
    type Output = QTensor;
    fn add(self, rhs: QTensor) -> QTensor {
        let mut q = self.0;
        for (a, b) in q.iter_mut().zip(rhs.0) {
            *a += b;
        }
        QTensor(q)
    }
}

impl std::ops::Sub for QTensor {
    type Output = QTensor;
    fn sub(self, rhs: QTensor) -> QTensor {
        let mut q = self.0;
        for (a, b) in q.iter_mut().zip(rhs.0) {
            *a -= b;
        }
        QTensor(q)
    }
}

impl std::ops::Mul<f64> for QTensor {
    type Output = QTensor;
    fn mul(self, s: f64) -> QTensor {
        QTensor(self.0.map(|a| a * s))
    }
}

impl QTensor {
    pub const ZERO: QTensor = QTensor([0.0; BASIS_DIM]);

    pub fn new(coeffs: [f64; BASIS_DIM]) -> Self {
        QTensor(coeffs)
    }

    /// Coefficients from a full symmetric matrix. The trace part (if any) is
    /// invisible to the traceless basis.
    pub fn from_matrix(m: &[[f64; 3]; 3]) -> Self {
        QTensor([
            (m[0][0] - m[1][1]) / SQRT2,
            (m[0][0] + m[1][1] - 2.0 * m[2][2]) / SQRT6,
            SQRT2 * m[0][1],
            SQRT2 * m[0][2],
            SQRT2 * m[1][2],
        ])
    }

    /// Reconstruct the symmetric traceless matrix.
    pub fn to_matrix(&self) -> [[f64; 3]; 3] {
        let [q1, q2, q3, q4, q5] = self.0;
        let d1 = q1 / SQRT2 + q2 / SQRT6;
        let d2 = -q1 / SQRT2 + q2 / SQRT6;
        let d3 = -2.0 * q2 / SQRT6;
        let o12 = q3 / SQRT2;
        let o13 = q4 / SQRT2;
        let o23 = q5 / SQRT2;
        [[d1, o12, o13], [o12, d2, o23], [o13, o23, d3]]
    }

    /// Uniaxial tensor `s (n⊗n - I/3)` for a unit director `n`.
    pub fn uniaxial(s: f64, n: [f64; 3]) -> Self {
        let m = [
            [
                s * (n[0] * n[0] - 1.0 / 3.0),
                s * n[0] * n[1],
                s * n[0] * n[2],
            ],
            [
                s * n[0] * n[1],
                s * (n[1] * n[1] - 1.0 / 3.0),
                s * n[1] * n[2],
            ],
            [
                s * n[0] * n[2],
                s * n[1] * n[2],
                s * (n[2] * n[2] - 1.0 / 3.0),
            ],
        ];
        QTensor::from_matrix(&m)
    }

    pub fn dot(&self, rhs: &QTensor) -> f64 {
        self.0.iter().zip(rhs.0).map(|(a, b)| a * b).sum()
    }

    /// Squared Frobenius norm, equal to `tr Q^2`.
    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// `tr Q^3`, via `tr Q^3 = 3 det Q` for traceless symmetric matrices.
    pub fn trace_cubed(&self) -> f64 {
        let m = self.to_matrix();
        3.0 * det3(&m)
    }
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Bulk material constants with the derived vacuum data.
///
/// `s_star` is the uniaxial order of the vacuum manifold, `k` the additive
/// normalization making `inf f = 0`. `lambda_star` minimizes the bulk profile
/// on the stratum where the top two eigenvalues coincide; `g(lambda_star) > 0`
/// is the potential barrier that keeps the top eigenvalue simple wherever the
/// potential is small.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub s_star: f64,
    pub k: f64,
    pub lambda_star: f64,
    pub g_at_lambda_star: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum ParamError {
    #[error("material constants require a >= 0, b > 0, c > 0; got a={a}, b={b}, c={c}")]
    Invalid { a: f64, b: f64, c: f64 },
}

impl MaterialParams {
    pub fn new(a: f64, b: f64, c: f64) -> Result<Self, ParamError> {
        if !(a >= 0.0 && b > 0.0 && c > 0.0) || !(a + b + c).is_finite() {
            return Err(ParamError::Invalid { a, b, c });
        }
        let disc = (b * b + 24.0 * a * c).sqrt();
        let s_star = (b + disc) / (4.0 * c);
        let k = s_star * s_star / 27.0 * (9.0 * a + 2.0 * b * s_star - 3.0 * c * s_star * s_star);
        let lambda_star = (-b + disc) / (12.0 * c);
        let g_at_lambda_star = equal_eigenvalue_curve_raw(lambda_star, a, b, c, k);
        Ok(MaterialParams {
            a,
            b,
            c,
            s_star,
            k,
            lambda_star,
            g_at_lambda_star,
        })
    }

    /// Threshold below which small bulk potential forces a simple top
    /// eigenvalue; half the barrier height is a safe concrete choice.
    pub fn eta_threshold(&self) -> f64 {
        0.5 * self.g_at_lambda_star
    }

    /// Bulk profile restricted to uniaxial tensors of order `s`.
    pub fn uniaxial_bulk(&self, s: f64) -> f64 {
        self.k - self.a / 3.0 * s * s - 2.0 * self.b / 27.0 * s * s * s
            + self.c / 9.0 * s * s * s * s
    }
}

/// Bulk potential `f(Q) = k - (a/2) tr Q^2 - (b/3) tr Q^3 + (c/4) (tr Q^2)^2`,
/// normalized so its infimum over the traceless symmetric matrices is zero.
pub fn bulk_potential(q: &QTensor, p: &MaterialParams) -> f64 {
    let tr2 = q.norm_sq();
    let tr3 = q.trace_cubed();
    p.k - 0.5 * p.a * tr2 - p.b / 3.0 * tr3 + 0.25 * p.c * tr2 * tr2
}

/// Intrinsic gradient of the bulk potential on the traceless symmetric
/// matrices: `-aQ - bQ^2 + (b/3)|Q|^2 I + c|Q|^2 Q`, returned in basis
/// coefficients. The identity part is orthogonal to the basis, so projecting
/// the matrix expression restores tracelessness exactly.
pub fn bulk_gradient(q: &QTensor, p: &MaterialParams) -> QTensor {
    let m = q.to_matrix();
    let tr2 = q.norm_sq();
    let mut g = [[0.0f64; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let mut sq = 0.0;
            for l in 0..3 {
                sq += m[i][l] * m[l][j];
            }
            g[i][j] = -p.a * m[i][j] - p.b * sq + p.c * tr2 * m[i][j];
        }
    }
    QTensor::from_matrix(&g)
}

/// Eigenvalues in decreasing order plus an orthonormal eigenvector frame.
///
/// Closed-form symmetric solve: Cardano with the numerically robust `acos`
/// formulation for the values, then the most isolated eigenvector by cross
/// products of shifted rows, and a 2x2 solve on its orthogonal complement for
/// the remaining pair. Degenerate spectra return a valid frame.
pub fn eigen_decompose(q: &QTensor) -> ([f64; 3], [[f64; 3]; 3]) {
    let tr2 = q.norm_sq();
    if tr2 < 1e-300 {
        return (
            [0.0; 3],
            [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        );
    }
    let m = q.to_matrix();
    let p = (tr2 / 6.0).sqrt();
    // det(M/p)/2, clamped against roundoff before acos.
    let r = (det3(&m) / (p * p * p) / 2.0).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let l1 = 2.0 * p * phi.cos();
    let l3 = 2.0 * p * (phi + 2.0 * PI / 3.0).cos();
    let l2 = -l1 - l3;

    // Most isolated eigenvalue first: its eigenvector is the well-conditioned one.
    let iso = if l1 - l2 >= l2 - l3 { l1 } else { l3 };
    let v = isolated_eigenvector(&m, iso);
    // Orthonormal completion of v.
    let w = orthogonal_unit(&v);
    let u = cross(&v, &w);
    // Restrict M to span{w, u} and solve the 2x2 symmetric problem.
    let mw = mat_vec(&m, &w);
    let mu = mat_vec(&m, &u);
    let m11 = dot3(&w, &mw);
    let m12 = dot3(&w, &mu);
    let m22 = dot3(&u, &mu);
    let theta = 0.5 * (2.0 * m12).atan2(m11 - m22);
    let (sn, cs) = theta.sin_cos();
    let v1 = [
        cs * w[0] + sn * u[0],
        cs * w[1] + sn * u[1],
        cs * w[2] + sn * u[2],
    ];
    let v2 = [
        -sn * w[0] + cs * u[0],
        -sn * w[1] + cs * u[1],
        -sn * w[2] + cs * u[2],
    ];
    let e1 = cs * cs * m11 + 2.0 * sn * cs * m12 + sn * sn * m22;
    let e2 = sn * sn * m11 - 2.0 * sn * cs * m12 + cs * cs * m22;

    let mut pairs = [(iso, v), (e1, v1), (e2, v2)];
    pairs.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap());
    (
        [pairs[0].0, pairs[1].0, pairs[2].0],
        [pairs[0].1, pairs[1].1, pairs[2].1],
    )
}

fn mat_vec(m: &[[f64; 3]; 3], v: &[f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = dot3(&v, &v).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

/// Unit vector orthogonal to `v`, built from the axis least aligned with it.
fn orthogonal_unit(v: &[f64; 3]) -> [f64; 3] {
    let abs = [v[0].abs(), v[1].abs(), v[2].abs()];
    let j = if abs[0] <= abs[1] && abs[0] <= abs[2] {
        0
    } else if abs[1] <= abs[2] {
        1
    } else {
        2
    };
    let mut e = [0.0; 3];
    e[j] = 1.0;
    let d = v[j];
    normalize([e[0] - d * v[0], e[1] - d * v[1], e[2] - d * v[2]])
}

fn isolated_eigenvector(m: &[[f64; 3]; 3], lambda: f64) -> [f64; 3] {
    let a = [
        [m[0][0] - lambda, m[0][1], m[0][2]],
        [m[1][0], m[1][1] - lambda, m[1][2]],
        [m[2][0], m[2][1], m[2][2] - lambda],
    ];
    let c01 = cross(&a[0], &a[1]);
    let c12 = cross(&a[1], &a[2]);
    let c20 = cross(&a[2], &a[0]);
    let n01 = dot3(&c01, &c01);
    let n12 = dot3(&c12, &c12);
    let n20 = dot3(&c20, &c20);
    let (best, nbest) = if n01 >= n12 && n01 >= n20 {
        (c01, n01)
    } else if n12 >= n20 {
        (c12, n12)
    } else {
        (c20, n20)
    };
    if nbest < 1e-280 {
        // Shifted matrix numerically rank <= 1: any row direction works.
        let r0 = a[0];
        let r1 = a[1];
        let pick = if dot3(&r0, &r0) >= dot3(&r1, &r1) {
            r0
        } else {
            r1
        };
        if dot3(&pick, &pick) < 1e-280 {
            return [1.0, 0.0, 0.0];
        }
        return orthogonal_unit(&normalize(pick));
    }
    normalize(best)
}

/// Distance to the vacuum manifold, `min over unit n of |Q - s*(n⊗n - I/3)|`.
/// The minimizing director is the top eigenvector, giving the closed form
/// `sqrt(|Q|^2 - 2 s* λ1 + 2 s*^2 / 3)`.
pub fn dist_to_vacuum(q: &QTensor, p: &MaterialParams) -> f64 {
    let (lambda, _) = eigen_decompose(q);
    let d2 = q.norm_sq() - 2.0 * p.s_star * lambda[0] + 2.0 * p.s_star * p.s_star / 3.0;
    d2.max(0.0).sqrt()
}

/// Default spectral-gap tolerance below which the vacuum projection is
/// considered ill-defined.
pub const SPECTRAL_GAP_TOL: f64 = 1e-8;

/// Nearest-point projection onto the vacuum manifold. Well-defined only where
/// the top eigenvalue is simple; callers decide policy on the error.
pub fn project_to_vacuum(q: &QTensor, p: &MaterialParams) -> Result<QTensor, SpectralError> {
    let (lambda, frame) = eigen_decompose(q);
    let gap = lambda[0] - lambda[1];
    if gap <= SPECTRAL_GAP_TOL {
        return Err(SpectralError::DegenerateSpectrum {
            gap,
            tol: SPECTRAL_GAP_TOL,
        });
    }
    Ok(QTensor::uniaxial(p.s_star, frame[0]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Isotropic,
    Uniaxial,
    Biaxial,
}

/// Phase label with the two scalar orders of the biaxial decomposition
/// `Q = s (n⊗n - I/3) + r (m⊗m - I/3)` where `n`, `m` are the eigenvectors of
/// the top two eigenvalues; in ordered eigenvalues `s = λ1 - λ3`, `r = λ2 - λ3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseLabel {
    pub tag: Phase,
    pub s: f64,
    pub r: f64,
}

/// Classify by eigenvalue degeneracy: isotropic if all eigenvalues vanish
/// within `tol`, uniaxial if exactly two coincide within `tol`, biaxial
/// otherwise.
pub fn classify_phase(q: &QTensor, tol: f64) -> PhaseLabel {
    assert!(tol > 0.0, "classification tolerance must be positive");
    let (l, _) = eigen_decompose(q);
    let s = l[0] - l[2];
    let r = l[1] - l[2];
    let tag = if l.iter().all(|x| x.abs() <= tol) {
        Phase::Isotropic
    } else if (l[0] - l[1]).min(l[1] - l[2]) <= tol {
        Phase::Uniaxial
    } else {
        Phase::Biaxial
    };
    PhaseLabel { tag, s, r }
}

fn equal_eigenvalue_curve_raw(lambda: f64, a: f64, b: f64, c: f64, k: f64) -> f64 {
    k - 3.0 * a * lambda * lambda
        + 2.0 * b * lambda * lambda * lambda
        + 9.0 * c * lambda * lambda * lambda * lambda
}

/// Bulk profile `g(λ) = k - 3aλ^2 + 2bλ^3 + 9cλ^4` on the stratum where the
/// top two eigenvalues equal `λ` (which forces `λ >= 0` and `λ3 = -2λ`).
pub fn equal_eigenvalue_curve(lambda: f64, p: &MaterialParams) -> f64 {
    equal_eigenvalue_curve_raw(lambda, p.a, p.b, p.c, p.k)
}
