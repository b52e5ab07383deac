//! Matrix exponential and principal logarithm on the supported algebras.
//!
//! Closed forms cover SO(2), SO(3) (Rodrigues) and SU(2) (quaternion form);
//! anything supported in a leading 2×2 or 3×3 block of a larger so(n) matrix
//! also takes the closed-form route. Everything else uses Higham's
//! scaling-and-squaring Padé approximant. The general logarithm diagonalizes
//! the (normal) group element through a complex Schur decomposition.

use nalgebra::Schur;

use super::{GroupFamily, GroupSpec};
use crate::error::{Error, Result};
use crate::linalg::{Mat, C64};

/// Eigenvalues closer than this to −1 make the principal log ill-conditioned.
pub const CUT_LOCUS_TOL: f64 = 1e-6;

#[inline]
fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// (1 − cos x) / x²
#[inline]
fn cosc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        0.5 - x * x / 24.0
    } else {
        (1.0 - x.cos()) / (x * x)
    }
}

pub(crate) fn exp_mat(spec: &GroupSpec, a: &Mat) -> Mat {
    match spec.family() {
        GroupFamily::SpecialUnitary(2) => exp_su2(a),
        GroupFamily::SpecialOrthogonal(n) => {
            let k = a.support_size();
            match k {
                0 | 1 => Mat::identity(n),
                2 => exp_so2(a).embed_in_identity_if(n),
                3 => exp_so3(&a.leading_block(3)).embed_in_identity_if(n),
                _ if k < n => pade_exp(&a.leading_block(k)).embed_in_identity(n),
                _ => pade_exp(a),
            }
        }
        GroupFamily::SpecialUnitary(_) => pade_exp(a),
    }
}

trait EmbedIf {
    fn embed_in_identity_if(self, n: usize) -> Mat;
}

impl EmbedIf for Mat {
    fn embed_in_identity_if(self, n: usize) -> Mat {
        if self.dim() == n {
            self
        } else {
            self.embed_in_identity(n)
        }
    }
}

fn exp_su2(a: &Mat) -> Mat {
    // a² = −r² I for a ∈ su(2)
    let r = (0.5 * a.re_inner(a)).sqrt();
    let mut out = a.scale(sinc(r));
    let c = C64::new(r.cos(), 0.0);
    out[(0, 0)] += c;
    out[(1, 1)] += c;
    out
}

fn exp_so2(a: &Mat) -> Mat {
    let theta = a[(1, 0)].re;
    let (s, c) = theta.sin_cos();
    Mat::from_real_rows(&[&[c, -s], &[s, c]])
}

fn exp_so3(a: &Mat) -> Mat {
    // Frobenius norm of [ω]× is √2·|ω|
    let theta = (0.5 * a.re_inner(a)).sqrt();
    let a2 = *a * *a;
    let mut out = Mat::identity(3);
    out.axpy(sinc(theta), a);
    out.axpy(cosc(theta), &a2);
    out
}

const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.539_398_330_063_23e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068),
];
const THETA13: f64 = 5.371920351148152;

/// Scaling-and-squaring Padé exponential (Higham 2005).
pub(crate) fn pade_exp(a: &Mat) -> Mat {
    let n = a.dim();
    let id = Mat::identity(n);
    let norm = a.norm1();
    if norm == 0.0 {
        return id;
    }
    for &(m, theta) in THETA.iter() {
        if norm <= theta {
            let coeffs: &[f64] = match m {
                3 => &PADE3,
                5 => &PADE5,
                7 => &PADE7,
                _ => &PADE9,
            };
            return pade_low(a, coeffs);
        }
    }
    let s = ((norm / THETA13).log2().ceil()).max(0.0) as i32;
    let a = a.scale(0.5f64.powi(s));
    let b = &PADE13;
    let a2 = a * a;
    let a4 = a2 * a2;
    let a6 = a2 * a4;
    let mut inner_u = a6.scale(b[13]);
    inner_u.axpy(b[11], &a4);
    inner_u.axpy(b[9], &a2);
    let mut u = a6 * inner_u;
    u.axpy(b[7], &a6);
    u.axpy(b[5], &a4);
    u.axpy(b[3], &a2);
    u.axpy(b[1], &id);
    let u = a * u;
    let mut inner_v = a6.scale(b[12]);
    inner_v.axpy(b[10], &a4);
    inner_v.axpy(b[8], &a2);
    let mut v = a6 * inner_v;
    v.axpy(b[6], &a6);
    v.axpy(b[4], &a4);
    v.axpy(b[2], &a2);
    v.axpy(b[0], &id);
    let mut r = (v - u)
        .solve(&(v + u))
        .expect("Padé denominator is nonsingular for scaled input");
    for _ in 0..s {
        r = r * r;
    }
    r
}

fn pade_low(a: &Mat, b: &[f64]) -> Mat {
    let n = a.dim();
    let a2 = *a * *a;
    let mut u = Mat::zeros(n);
    let mut v = Mat::zeros(n);
    let mut power = Mat::identity(n);
    for k in (0..b.len()).step_by(2) {
        // power = a^k
        v.axpy(b[k], &power);
        if k + 1 < b.len() {
            u.axpy(b[k + 1], &power);
        }
        power = power * a2;
    }
    let u = *a * u;
    (v - u)
        .solve(&(v + u))
        .expect("Padé denominator is nonsingular for small input")
}

/// Principal logarithm of a group element's matrix.
pub(crate) fn log_mat(spec: &GroupSpec, g: &Mat) -> Result<Mat> {
    match spec.family() {
        GroupFamily::SpecialUnitary(2) => log_su2(g),
        GroupFamily::SpecialOrthogonal(n) => {
            let k = (*g - Mat::identity(n)).support_size();
            match k {
                0 | 1 => Ok(Mat::zeros(n)),
                2 => log_so2(&g.leading_block(2)).map(|m| m.embed_in_zeros(n)),
                3 => log_so3(&g.leading_block(3)).map(|m| m.embed_in_zeros(n)),
                _ => log_schur(g, true),
            }
        }
        GroupFamily::SpecialUnitary(_) => log_schur(g, false),
    }
}

fn cut_check(angle: f64) -> Result<()> {
    // |1 + e^{iφ}| = 2|cos(φ/2)|
    let d = 2.0 * (angle / 2.0).cos().abs();
    if d <= CUT_LOCUS_TOL {
        Err(Error::CutLocus { distance: d })
    } else {
        Ok(())
    }
}

fn log_su2(g: &Mat) -> Result<Mat> {
    let skew = (*g - g.adjoint()).scale(0.5);
    let s = (0.5 * skew.re_inner(&skew)).sqrt();
    let c = 0.5 * g.trace().re;
    let phi = s.atan2(c);
    cut_check(phi)?;
    Ok(skew.scale(1.0 / sinc(phi)))
}

fn log_so2(g: &Mat) -> Result<Mat> {
    let theta = g[(1, 0)].re.atan2(g[(0, 0)].re);
    cut_check(theta)?;
    Ok(Mat::from_real_rows(&[&[0.0, -theta], &[theta, 0.0]]))
}

fn log_so3(g: &Mat) -> Result<Mat> {
    let skew = (*g - g.transpose()).scale(0.5);
    let s = (0.5 * skew.re_inner(&skew)).sqrt();
    let c = 0.5 * (g.trace().re - 1.0);
    let theta = s.atan2(c);
    cut_check(theta)?;
    Ok(skew.scale(1.0 / sinc(theta)).real_part())
}

fn log_schur(g: &Mat, real: bool) -> Result<Mat> {
    let n = g.dim();
    let (q, t) = Schur::new(g.to_nalgebra()).unpack();
    let mut d = nalgebra::DMatrix::<C64>::zeros(n, n);
    for i in 0..n {
        let lambda = t[(i, i)];
        let angle = lambda.arg();
        cut_check(angle)?;
        d[(i, i)] = C64::new(lambda.norm().ln(), angle);
    }
    let l = Mat::from_nalgebra(&(&q * d * q.adjoint()));
    let l = (l - l.adjoint()).scale(0.5);
    Ok(if real { l.real_part() } else { l })
}

/// Eigen-angles of a unitary matrix, each in (−π, π].
pub(crate) fn eigen_angles(spec: &GroupSpec, g: &Mat) -> Vec<f64> {
    match spec.family() {
        GroupFamily::SpecialUnitary(2) => {
            let phi = su2_angle(g);
            vec![phi, -phi]
        }
        GroupFamily::SpecialOrthogonal(n) if (*g - Mat::identity(n)).support_size() <= 3 => {
            let k = (*g - Mat::identity(n)).support_size();
            let theta = match k {
                0 | 1 => 0.0,
                2 => g[(1, 0)].re.atan2(g[(0, 0)].re).abs(),
                _ => so3_angle(&g.leading_block(3)),
            };
            let mut v = vec![theta, -theta];
            v.resize(n, 0.0);
            v
        }
        _ => {
            let t = Schur::new(g.to_nalgebra()).unpack().1;
            (0..g.dim()).map(|i| t[(i, i)].arg()).collect()
        }
    }
}

pub(crate) fn su2_angle(g: &Mat) -> f64 {
    let skew = (*g - g.adjoint()).scale(0.5);
    let s = (0.5 * skew.re_inner(&skew)).sqrt();
    s.atan2(0.5 * g.trace().re)
}

fn so3_angle(g: &Mat) -> f64 {
    let skew = (*g - g.transpose()).scale(0.5);
    let s = (0.5 * skew.re_inner(&skew)).sqrt();
    s.atan2(0.5 * (g.trace().re - 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn taylor_exp(a: &Mat) -> Mat {
        // brute-force oracle: scaled Taylor series plus squaring
        let s = 10;
        let b = a.scale(0.5f64.powi(s));
        let mut term = Mat::identity(a.dim());
        let mut sum = term;
        for k in 1..30 {
            term = (term * b).scale(1.0 / k as f64);
            sum += term;
        }
        for _ in 0..s {
            sum = sum * sum;
        }
        sum
    }

    #[test]
    fn pade_matches_taylor_oracle_across_norm_regimes() {
        let base = Mat::from_fn(4, |i, j| {
            C64::new(
                (i as f64 - j as f64) * 0.3 + 0.1 * (i * j) as f64,
                0.05 * (i + j) as f64,
            )
        });
        for scale in [1e-3, 0.1, 0.5, 1.5, 4.0, 20.0] {
            let a = base.scale(scale);
            let diff = (pade_exp(&a) - taylor_exp(&a)).max_abs();
            let size = taylor_exp(&a).max_abs();
            assert!(diff <= 1e-11 * size.max(1.0), "scale {scale}: {diff}");
        }
    }

    #[test]
    fn rodrigues_matches_pade() {
        let a = Mat::from_real_rows(&[&[0.0, -0.7, 0.2], &[0.7, 0.0, -1.1], &[-0.2, 1.1, 0.0]]);
        assert!((exp_so3(&a) - pade_exp(&a)).max_abs() < 1e-14);
    }
}
