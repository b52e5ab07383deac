//! Compact matrix Lie groups and their algebras.
//!
//! Two families are supported: SO(n) with the inner product
//! `⟨A,B⟩ = tr(AᵀB)` and SU(n) with `⟨A,B⟩ = ½ tr(A†B)`. The normalization
//! makes the declared bases orthonormal: `A_ij = (E_ij − E_ji)/√2` for so(n)
//! and the Pauli-type matrices for su(2),
//!
//! ```text
//! X1 = [[i, 0], [0, -i]],   X2 = [[0, 1], [-1, 0]],   X3 = [[0, i], [i, 0]].
//! ```
//!
//! With this metric `[X1, X2] = 2 X3` (cyclically) and the bi-invariant
//! distance is `ρ(g, h) = ‖log(g⁻¹h)‖`.

mod expm;
mod haar;

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

pub use expm::CUT_LOCUS_TOL;
pub use haar::haar_sample;

use crate::error::{invalid, Error, Result};
use crate::linalg::{Mat, C64, MAX_DIM};

/// Unitarity tolerance for [`GroupElement::from_matrix`].
pub const UNITARITY_TOL: f64 = 1e-10;
/// Determinant tolerance for [`GroupElement::from_matrix`].
pub const DETERMINANT_TOL: f64 = 1e-8;
/// Skewness tolerance for [`AlgebraVector::from_matrix`].
pub const SKEW_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GroupFamily {
    SpecialOrthogonal(usize),
    SpecialUnitary(usize),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroupSpec {
    family: GroupFamily,
    metric_scale: f64,
}

impl GroupSpec {
    pub fn new(family: GroupFamily) -> Result<Self> {
        let (n, metric_scale) = match family {
            GroupFamily::SpecialOrthogonal(n) => (n, 1.0),
            GroupFamily::SpecialUnitary(n) => (n, 0.5),
        };
        if !(2..=MAX_DIM).contains(&n) {
            return Err(invalid(format!(
                "group dimension n = {n} outside 2..={MAX_DIM}"
            )));
        }
        Ok(Self {
            family,
            metric_scale,
        })
    }

    /// SO(n). Panics unless `2 ≤ n ≤ 5`.
    pub fn so(n: usize) -> Self {
        Self::new(GroupFamily::SpecialOrthogonal(n)).expect("valid SO(n)")
    }

    /// SU(n). Panics unless `2 ≤ n ≤ 5`.
    pub fn su(n: usize) -> Self {
        Self::new(GroupFamily::SpecialUnitary(n)).expect("valid SU(n)")
    }

    pub fn family(&self) -> GroupFamily {
        self.family
    }

    pub fn metric_scale(&self) -> f64 {
        self.metric_scale
    }

    /// Matrix size.
    pub fn n(&self) -> usize {
        match self.family {
            GroupFamily::SpecialOrthogonal(n) | GroupFamily::SpecialUnitary(n) => n,
        }
    }

    pub fn is_real(&self) -> bool {
        matches!(self.family, GroupFamily::SpecialOrthogonal(_))
    }

    pub fn algebra_dim(&self) -> usize {
        let n = self.n();
        match self.family {
            GroupFamily::SpecialOrthogonal(_) => n * (n - 1) / 2,
            GroupFamily::SpecialUnitary(_) => n * n - 1,
        }
    }

    /// Largest `R` such that every algebra element of norm below `R` lies
    /// inside the domain of the principal logarithm.
    pub fn injectivity_radius(&self) -> f64 {
        use std::f64::consts::PI;
        match self.family {
            GroupFamily::SpecialOrthogonal(_) => PI * 2f64.sqrt(),
            GroupFamily::SpecialUnitary(n) => PI / (2.0 * (n as f64 - 1.0) / n as f64).sqrt(),
        }
    }

    /// Maximal distance between two group elements.
    pub fn diameter(&self) -> f64 {
        use std::f64::consts::PI;
        let n = self.n();
        match self.family {
            // n/2 rotation planes at angle π
            GroupFamily::SpecialOrthogonal(_) => PI * ((2 * (n / 2)) as f64).sqrt(),
            GroupFamily::SpecialUnitary(2) => PI,
            // bounded by every eigen-angle at π
            GroupFamily::SpecialUnitary(_) => PI * (0.5 * n as f64).sqrt(),
        }
    }

    #[inline]
    pub(crate) fn inner_mat(&self, a: &Mat, b: &Mat) -> f64 {
        self.metric_scale * a.re_inner(b)
    }

    /// The declared orthonormal basis of the Lie algebra.
    ///
    /// so(n): `A_ij` for `i < j` in lexicographic order.
    /// su(n): diagonal Cartan elements first, then for each pair `j < k` the
    /// real generator `E_jk − E_kj` followed by `i(E_jk + E_kj)`. For n = 2 this
    /// is exactly `X1, X2, X3`.
    pub fn basis(&self) -> Vec<AlgebraVector> {
        let n = self.n();
        let mut out = Vec::with_capacity(self.algebra_dim());
        match self.family {
            GroupFamily::SpecialOrthogonal(_) => {
                for i in 1..=n {
                    for j in (i + 1)..=n {
                        out.push(self.so_generator(i, j));
                    }
                }
            }
            GroupFamily::SpecialUnitary(_) => {
                for k in 1..n {
                    let c = (2.0 / (k * (k + 1)) as f64).sqrt();
                    let m = Mat::from_fn(n, |i, j| {
                        if i != j || i > k {
                            C64::new(0.0, 0.0)
                        } else if i < k {
                            C64::new(0.0, c)
                        } else {
                            C64::new(0.0, -c * k as f64)
                        }
                    });
                    out.push(AlgebraVector { spec: *self, m });
                }
                for j in 0..n {
                    for k in (j + 1)..n {
                        let re = Mat::unit(n, j, k) - Mat::unit(n, k, j);
                        let im =
                            (Mat::unit(n, j, k) + Mat::unit(n, k, j)).scale_c(C64::new(0.0, 1.0));
                        out.push(AlgebraVector { spec: *self, m: re });
                        out.push(AlgebraVector { spec: *self, m: im });
                    }
                }
            }
        }
        out
    }

    /// `A_ij = (E_ij − E_ji)/√2` with one-based indices. Only for so(n).
    pub fn so_generator(&self, i: usize, j: usize) -> AlgebraVector {
        assert!(self.is_real(), "A_ij generators belong to so(n)");
        let n = self.n();
        assert!(
            i >= 1 && j >= 1 && i <= n && j <= n && i != j,
            "bad index pair ({i},{j})"
        );
        let m = (Mat::unit(n, i - 1, j - 1) - Mat::unit(n, j - 1, i - 1))
            .scale(std::f64::consts::FRAC_1_SQRT_2);
        AlgebraVector { spec: *self, m }
    }
}

impl fmt::Display for GroupSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.family {
            GroupFamily::SpecialOrthogonal(n) => write!(f, "SO({n})"),
            GroupFamily::SpecialUnitary(n) => write!(f, "SU({n})"),
        }
    }
}

/// The Pauli-type basis `X1, X2, X3` of su(2).
pub fn pauli() -> [AlgebraVector; 3] {
    let b = GroupSpec::su(2).basis();
    [b[0], b[1], b[2]]
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroupElement {
    spec: GroupSpec,
    m: Mat,
}

impl GroupElement {
    pub fn identity(spec: GroupSpec) -> Self {
        Self {
            spec,
            m: Mat::identity(spec.n()),
        }
    }

    /// Validates unitarity and the unit determinant.
    pub fn from_matrix(spec: GroupSpec, m: Mat) -> Result<Self> {
        if m.dim() != spec.n() {
            return Err(invalid("matrix size does not match the group"));
        }
        let unitarity = (m.adjoint() * m - Mat::identity(spec.n())).max_abs();
        let determinant = (m.det() - C64::new(1.0, 0.0)).norm();
        let real_ok = !spec.is_real() || m.is_real(UNITARITY_TOL);
        if unitarity > UNITARITY_TOL || determinant > DETERMINANT_TOL || !real_ok {
            return Err(Error::NotInGroup {
                unitarity,
                determinant,
            });
        }
        Ok(Self { spec, m })
    }

    #[inline]
    pub(crate) fn from_matrix_unchecked(spec: GroupSpec, m: Mat) -> Self {
        Self { spec, m }
    }

    #[inline]
    pub fn spec(&self) -> &GroupSpec {
        &self.spec
    }

    #[inline]
    pub fn matrix(&self) -> &Mat {
        &self.m
    }

    #[inline]
    pub fn inverse(&self) -> Self {
        Self {
            spec: self.spec,
            m: self.m.adjoint(),
        }
    }

    pub fn trace(&self) -> C64 {
        self.m.trace()
    }

    pub fn unitarity_defect(&self) -> f64 {
        (self.m.adjoint() * self.m - Mat::identity(self.spec.n())).max_abs()
    }

    pub fn determinant_defect(&self) -> f64 {
        (self.m.det() - C64::new(1.0, 0.0)).norm()
    }
}

impl Mul for GroupElement {
    type Output = GroupElement;
    #[inline]
    fn mul(self, rhs: GroupElement) -> GroupElement {
        debug_assert_eq!(self.spec, rhs.spec);
        GroupElement {
            spec: self.spec,
            m: self.m * rhs.m,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlgebraVector {
    spec: GroupSpec,
    m: Mat,
}

impl AlgebraVector {
    pub fn zero(spec: GroupSpec) -> Self {
        Self {
            spec,
            m: Mat::zeros(spec.n()),
        }
    }

    /// Validates skewness (and reality / tracelessness for the family).
    pub fn from_matrix(spec: GroupSpec, m: Mat) -> Result<Self> {
        if m.dim() != spec.n() {
            return Err(invalid("matrix size does not match the algebra"));
        }
        let mut defect = (m + m.adjoint()).max_abs();
        if spec.is_real() {
            defect = defect.max(
                (0..spec.n())
                    .flat_map(|i| (0..spec.n()).map(move |j| (i, j)))
                    .map(|(i, j)| m[(i, j)].im.abs())
                    .fold(0.0, f64::max),
            );
        } else {
            defect = defect.max(m.trace().norm());
        }
        if defect > SKEW_TOL {
            return Err(Error::NotSkew { defect });
        }
        Ok(Self { spec, m })
    }

    #[inline]
    pub(crate) fn from_matrix_unchecked(spec: GroupSpec, m: Mat) -> Self {
        Self { spec, m }
    }

    /// `Σ coords_k · basis_k`.
    pub fn from_coords(spec: GroupSpec, coords: &[f64]) -> Result<Self> {
        let basis = spec.basis();
        if coords.len() != basis.len() {
            return Err(invalid(format!(
                "expected {} coordinates, got {}",
                basis.len(),
                coords.len()
            )));
        }
        let mut m = Mat::zeros(spec.n());
        for (c, b) in coords.iter().zip(&basis) {
            m.axpy(*c, &b.m);
        }
        Ok(Self { spec, m })
    }

    /// Coordinates in the declared orthonormal basis.
    pub fn coords(&self) -> Vec<f64> {
        self.spec.basis().iter().map(|b| self.inner(b)).collect()
    }

    #[inline]
    pub fn spec(&self) -> &GroupSpec {
        &self.spec
    }

    #[inline]
    pub fn matrix(&self) -> &Mat {
        &self.m
    }

    #[inline]
    pub fn inner(&self, other: &AlgebraVector) -> f64 {
        self.spec.inner_mat(&self.m, &other.m)
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            spec: self.spec,
            m: self.m.scale(s),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.m.max_abs() == 0.0
    }
}

impl Add for AlgebraVector {
    type Output = AlgebraVector;
    fn add(self, rhs: AlgebraVector) -> AlgebraVector {
        debug_assert_eq!(self.spec, rhs.spec);
        AlgebraVector {
            spec: self.spec,
            m: self.m + rhs.m,
        }
    }
}

impl Sub for AlgebraVector {
    type Output = AlgebraVector;
    fn sub(self, rhs: AlgebraVector) -> AlgebraVector {
        debug_assert_eq!(self.spec, rhs.spec);
        AlgebraVector {
            spec: self.spec,
            m: self.m - rhs.m,
        }
    }
}

impl Neg for AlgebraVector {
    type Output = AlgebraVector;
    fn neg(self) -> AlgebraVector {
        self.scale(-1.0)
    }
}

impl Mul<AlgebraVector> for f64 {
    type Output = AlgebraVector;
    fn mul(self, rhs: AlgebraVector) -> AlgebraVector {
        rhs.scale(self)
    }
}

pub fn exp_map(a: &AlgebraVector) -> GroupElement {
    GroupElement {
        spec: a.spec,
        m: expm::exp_mat(&a.spec, &a.m),
    }
}

/// Principal logarithm; errors with [`Error::CutLocus`] near an eigenvalue −1.
pub fn log_map(g: &GroupElement) -> Result<AlgebraVector> {
    let m = expm::log_mat(&g.spec, &g.m)?;
    Ok(AlgebraVector { spec: g.spec, m })
}

/// Bi-invariant Riemannian distance `‖log(g⁻¹h)‖`.
///
/// Computed from the eigen-angles of `g⁻¹h`, which stays well defined on the
/// cut locus: every minimizing geodesic there has the same length.
pub fn distance(g: &GroupElement, h: &GroupElement) -> f64 {
    debug_assert_eq!(g.spec, h.spec);
    let rel = g.m.adjoint() * h.m;
    distance_from_identity_mat(&g.spec, &rel)
}

pub(crate) fn distance_from_identity_mat(spec: &GroupSpec, m: &Mat) -> f64 {
    if let GroupFamily::SpecialUnitary(2) = spec.family() {
        // eigen-angles ±φ, metric ½: distance φ
        return expm::su2_angle(m);
    }
    let sq: f64 = expm::eigen_angles(spec, m).iter().map(|a| a * a).sum();
    (spec.metric_scale() * sq).sqrt()
}

pub fn bracket(a: &AlgebraVector, b: &AlgebraVector) -> Result<AlgebraVector> {
    if a.spec != b.spec {
        return Err(Error::SpecMismatch);
    }
    Ok(AlgebraVector {
        spec: a.spec,
        m: a.m.commutator(&b.m),
    })
}

/// `Ad_g A = g A g⁻¹`.
pub fn adjoint(g: &GroupElement, a: &AlgebraVector) -> Result<AlgebraVector> {
    if g.spec != a.spec {
        return Err(Error::SpecMismatch);
    }
    Ok(AlgebraVector {
        spec: a.spec,
        m: g.m * a.m * g.m.adjoint(),
    })
}

pub(crate) fn exp_mat(spec: &GroupSpec, a: &Mat) -> Mat {
    expm::exp_mat(spec, a)
}

/// Exponential of an arbitrary square matrix.
pub(crate) fn exp_general(a: &Mat) -> Mat {
    expm::pade_exp(a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn random_algebra(spec: GroupSpec, norm: f64, rng: &mut RngStream) -> AlgebraVector {
        let coords: Vec<f64> = (0..spec.algebra_dim()).map(|_| rng.normal()).collect();
        let a = AlgebraVector::from_coords(spec, &coords).unwrap();
        a.scale(norm / a.norm())
    }

    fn groups() -> Vec<GroupSpec> {
        vec![
            GroupSpec::so(2),
            GroupSpec::so(3),
            GroupSpec::so(4),
            GroupSpec::so(5),
            GroupSpec::su(2),
            GroupSpec::su(3),
        ]
    }

    #[test]
    fn bases_are_orthonormal() {
        for spec in groups() {
            let b = spec.basis();
            assert_eq!(b.len(), spec.algebra_dim());
            for (i, x) in b.iter().enumerate() {
                AlgebraVector::from_matrix(spec, x.m).unwrap();
                for (j, y) in b.iter().enumerate() {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!(
                        (x.inner(y) - expect).abs() < 1e-14,
                        "{spec} basis ({i},{j})"
                    );
                }
            }
        }
    }

    #[test]
    fn pauli_matrices_match_declared_form() {
        let [x1, x2, x3] = pauli();
        let i = C64::new(0.0, 1.0);
        let o = C64::new(0.0, 0.0);
        let one = C64::new(1.0, 0.0);
        assert_eq!(*x1.matrix(), Mat::from_rows(&[&[i, o], &[o, -i]]));
        assert_eq!(*x2.matrix(), Mat::from_rows(&[&[o, one], &[-one, o]]));
        assert_eq!(*x3.matrix(), Mat::from_rows(&[&[o, i], &[i, o]]));
    }

    #[test]
    fn exp_of_zero_is_identity() {
        for spec in groups() {
            assert_eq!(
                exp_map(&AlgebraVector::zero(spec)),
                GroupElement::identity(spec)
            );
        }
    }

    #[test]
    fn so3_exp_matches_axis_angle_rotation() {
        // A_12 = (E12 − E21)/√2 generates rotation about e3; exp(t A_12) turns by t/√2
        let spec = GroupSpec::so(3);
        let a = spec.so_generator(1, 2);
        for t in [0.1, 1.0, 2.5, 4.0] {
            let g = exp_map(&a.scale(t));
            let phi = t / 2f64.sqrt();
            let (s, c) = phi.sin_cos();
            let direct = Mat::from_real_rows(&[&[c, s, 0.0], &[-s, c, 0.0], &[0.0, 0.0, 1.0]]);
            assert!((*g.matrix() - direct).max_abs() < 1e-14);
            assert!((distance(&GroupElement::identity(spec), &g) - t).abs() < 1e-12);
        }
    }

    #[test]
    fn log_inverts_exp_for_pauli_direction() {
        let [_, x2, _] = pauli();
        let a = x2.scale(0.3);
        let back = log_map(&exp_map(&a)).unwrap();
        assert!((back.m - a.m).max_abs() < 1e-10);
        assert!(log_map(&GroupElement::identity(GroupSpec::su(2)))
            .unwrap()
            .is_zero());
    }

    #[test]
    fn pi_rotation_is_on_the_cut_locus() {
        // eigenvalues of a π-rotation about e3 are {−1, −1, 1}
        let spec = GroupSpec::so(3);
        let g = GroupElement::from_matrix(
            spec,
            Mat::from_real_rows(&[&[-1.0, 0.0, 0.0], &[0.0, -1.0, 0.0], &[0.0, 0.0, 1.0]]),
        )
        .unwrap();
        assert!(matches!(log_map(&g), Err(Error::CutLocus { .. })));
        // tilted axis
        let axis = exp_map(&spec.so_generator(1, 3).scale(0.7));
        let h = axis * g * axis.inverse();
        assert!(matches!(log_map(&h), Err(Error::CutLocus { .. })));
        // the distance is still defined: √2·π
        let d = distance(&GroupElement::identity(spec), &h);
        assert!((d - std::f64::consts::PI * 2f64.sqrt()).abs() < 1e-7);
        // so(4) through the Schur route
        let spec4 = GroupSpec::so(4);
        let g4 = exp_map(
            &(spec4
                .so_generator(1, 2)
                .scale(std::f64::consts::PI * 2f64.sqrt())
                + spec4.so_generator(3, 4).scale(0.4)),
        );
        assert!(matches!(log_map(&g4), Err(Error::CutLocus { .. })));
    }

    #[test]
    fn su2_brackets_are_cyclic() {
        let [x1, x2, x3] = pauli();
        assert!((bracket(&x1, &x2).unwrap().m - x3.m.scale(2.0)).max_abs() < 1e-15);
        assert!((bracket(&x2, &x3).unwrap().m - x1.m.scale(2.0)).max_abs() < 1e-15);
        assert!((bracket(&x3, &x1).unwrap().m - x2.m.scale(2.0)).max_abs() < 1e-15);
        assert!(bracket(&x1, &x1).unwrap().is_zero());
    }

    #[test]
    fn so3_bracket_of_elementary_generators() {
        let spec = GroupSpec::so(3);
        let e = |i, j| Mat::unit(3, i, j) - Mat::unit(3, j, i);
        let a = AlgebraVector::from_matrix(spec, e(0, 1)).unwrap();
        let b = AlgebraVector::from_matrix(spec, e(0, 2)).unwrap();
        let got = bracket(&a, &b).unwrap();
        assert!((got.m + e(1, 2)).max_abs() < 1e-15);
    }

    #[test]
    fn su2_adjoint_rotates_x2_towards_x3() {
        let [x1, x2, x3] = pauli();
        for t in [0.0, 0.2, 0.9, 2.0, -1.3] {
            let g = exp_map(&x1.scale(t));
            let got = adjoint(&g, &x2).unwrap();
            let expect = x2.scale((2.0 * t).cos()) + x3.scale((2.0 * t).sin());
            assert!((got.m - expect.m).max_abs() < 1e-14, "t = {t}");
        }
        let id = GroupElement::identity(GroupSpec::su(2));
        assert_eq!(adjoint(&id, &x3).unwrap().m, x3.m);
    }

    #[test]
    fn spec_mismatch_is_reported() {
        let a = GroupSpec::so(3).so_generator(1, 2);
        let b = pauli()[0];
        assert_eq!(bracket(&a, &b), Err(Error::SpecMismatch));
    }

    #[test]
    fn invalid_matrices_are_rejected() {
        let spec = GroupSpec::so(2);
        let bad = Mat::from_real_rows(&[&[1.0, 0.1], &[0.0, 1.0]]);
        assert!(matches!(
            GroupElement::from_matrix(spec, bad),
            Err(Error::NotInGroup { .. })
        ));
        let reflection = Mat::from_real_rows(&[&[1.0, 0.0], &[0.0, -1.0]]);
        assert!(matches!(
            GroupElement::from_matrix(spec, reflection),
            Err(Error::NotInGroup { .. })
        ));
        assert!(matches!(
            AlgebraVector::from_matrix(spec, bad),
            Err(Error::NotSkew { .. })
        ));
    }

    #[test]
    fn coordinates_reconstruct_matrix() {
        let mut rng = RngStream::new(9, 0);
        for spec in groups() {
            let a = random_algebra(spec, 1.3, &mut rng);
            let back = AlgebraVector::from_coords(spec, &a.coords()).unwrap();
            assert!((back.m - a.m).max_abs() < 1e-12);
        }
    }

    #[test]
    fn round_trip_and_inverse_pairs_on_random_draws() {
        let mut rng = RngStream::new(3, 1);
        for spec in groups() {
            for _ in 0..200 {
                let r = 0.95 * spec.injectivity_radius() * rng.uniform();
                let a = random_algebra(spec, r, &mut rng);
                let g = exp_map(&a);
                assert!(g.unitarity_defect() < 1e-12);
                assert!(g.determinant_defect() < 1e-10);
                let back = log_map(&g).unwrap();
                assert!((back.m - a.m).max_abs() < 1e-10, "{spec} |A| = {r}");
                let prod = g * exp_map(&-a);
                assert!((*prod.matrix() - Mat::identity(spec.n())).max_abs() < 1e-12);
                let d = distance(&GroupElement::identity(spec), &g);
                assert!((d - r).abs() < 1e-9, "{spec}: {d} vs {r}");
            }
        }
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn vector(spec: GroupSpec, coords: &[f64]) -> AlgebraVector {
            AlgebraVector::from_coords(spec, &coords[..spec.algebra_dim()]).unwrap()
        }

        fn spec_strategy() -> impl Strategy<Value = GroupSpec> {
            prop::sample::select(groups())
        }

        proptest! {
            #[test]
            fn distance_is_symmetric_and_left_invariant(
                spec in spec_strategy(),
                a in prop::collection::vec(-2.0f64..2.0, 24),
                b in prop::collection::vec(-2.0f64..2.0, 24),
                c in prop::collection::vec(-2.0f64..2.0, 24),
            ) {
                let (g, h, k) = (exp_map(&vector(spec, &a)), exp_map(&vector(spec, &b)), exp_map(&vector(spec, &c)));
                let d = distance(&g, &h);
                prop_assert!((d - distance(&h, &g)).abs() < 1e-9);
                prop_assert!((d - distance(&(k * g), &(k * h))).abs() < 1e-9);
                prop_assert!(d <= spec.diameter() + 1e-9);
            }

            #[test]
            fn bracket_is_antisymmetric_and_satisfies_jacobi(
                spec in spec_strategy(),
                a in prop::collection::vec(-3.0f64..3.0, 24),
                b in prop::collection::vec(-3.0f64..3.0, 24),
                c in prop::collection::vec(-3.0f64..3.0, 24),
            ) {
                let (x, y, z) = (vector(spec, &a), vector(spec, &b), vector(spec, &c));
                let xy = bracket(&x, &y).unwrap();
                prop_assert!((xy.m + bracket(&y, &x).unwrap().m).max_abs() < 1e-12);
                let cyc = |p: &AlgebraVector, q: &AlgebraVector, r: &AlgebraVector| {
                    bracket(p, &bracket(q, r).unwrap()).unwrap().m
                };
                let sum = cyc(&x, &y, &z) + cyc(&y, &z, &x) + cyc(&z, &x, &y);
                prop_assert!(sum.max_abs() < 1e-10);
            }

            #[test]
            fn adjoint_preserves_the_inner_product(
                spec in spec_strategy(),
                g in prop::collection::vec(-2.0f64..2.0, 24),
                a in prop::collection::vec(-2.0f64..2.0, 24),
                b in prop::collection::vec(-2.0f64..2.0, 24),
            ) {
                let z = exp_map(&vector(spec, &g));
                let (x, y) = (vector(spec, &a), vector(spec, &b));
                let lhs = adjoint(&z, &x).unwrap().inner(&adjoint(&z, &y).unwrap());
                prop_assert!((lhs - x.inner(&y)).abs() < 1e-10);
            }
        }
    }
}
