//! Haar-distributed group elements.

use super::{GroupElement, GroupSpec};
use crate::linalg::{Mat, C64};
use crate::rng::RngStream;

/// Draws from the normalized Haar measure.
///
/// Gram–Schmidt on a matrix with i.i.d. (complex) Gaussian entries yields a
/// Haar-distributed O(n) or U(n) element; the determinant is then removed by
/// flipping one column (SO) or a central phase (SU).
pub fn haar_sample(spec: GroupSpec, rng: &mut RngStream) -> GroupElement {
    let n = spec.n();
    let real = spec.is_real();
    let g = Mat::from_fn(n, |_, _| {
        if real {
            C64::new(rng.normal(), 0.0)
        } else {
            C64::new(rng.normal(), rng.normal())
        }
    });
    let mut q = gram_schmidt(&g);
    let det = q.det();
    if real {
        if det.re < 0.0 {
            for i in 0..n {
                q[(i, 0)] = -q[(i, 0)];
            }
        }
    } else {
        let phase = C64::from_polar(1.0, -det.arg() / n as f64);
        q = q.scale_c(phase);
    }
    GroupElement::from_matrix_unchecked(spec, q)
}

fn gram_schmidt(g: &Mat) -> Mat {
    let n = g.dim();
    let mut q = *g;
    for j in 0..n {
        // two passes keep orthogonality at machine precision
        for _ in 0..2 {
            for k in 0..j {
                let mut proj = C64::new(0.0, 0.0);
                for i in 0..n {
                    proj += q[(i, k)].conj() * q[(i, j)];
                }
                for i in 0..n {
                    let v = q[(i, k)];
                    q[(i, j)] -= proj * v;
                }
            }
        }
        let norm = (0..n).map(|i| q[(i, j)].norm_sqr()).sum::<f64>().sqrt();
        for i in 0..n {
            q[(i, j)] /= norm;
        }
    }
    q
}
