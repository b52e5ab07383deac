//! Real-valued functions on a group.
//!
//! An [`Observable`] wraps an evaluation closure together with a declared
//! bound and, when known, an algebraic form. Two forms carry closed-form Lie
//! derivatives:
//!
//! * linear trace `f(g) = Re tr(A g)`, with `L_Y f(g) = Re tr(A g Y)` and
//!   `L_{Y_i}(L_{Y_j} f)(g) = Re tr(A g Y_i Y_j)`;
//! * adjoint coefficient `f(g) = ⟨Ad(g) S, T⟩`, with
//!   `L_X f(g) = ⟨Ad(g)[X, S], T⟩`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{exp_mat, AlgebraVector, GroupElement, GroupSpec};
use crate::linalg::Mat;

/// Default finite-difference step along one-parameter subgroups.
pub const FD_STEP: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Smoothness {
    /// A trigonometric polynomial in the torus angle, up to this frequency.
    TrigPolynomial {
        max_frequency: usize,
    },
    Generic,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Structure {
    Opaque,
    Constant(f64),
    /// `Re tr(A g)`.
    LinearTrace(Mat),
    /// `⟨Ad(g) source, target⟩` in the metric of `spec`.
    Adjoint {
        spec: GroupSpec,
        source: Mat,
        target: Mat,
    },
}

type EvalFn = dyn Fn(&GroupElement) -> f64 + Send + Sync;

#[derive(Clone)]
pub struct Observable {
    name: String,
    eval: Arc<EvalFn>,
    bound: f64,
    smoothness: Smoothness,
    structure: Structure,
}

impl fmt::Debug for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Observable")
            .field("name", &self.name)
            .field("bound", &self.bound)
            .field("smoothness", &self.smoothness)
            .field("structure", &self.structure)
            .finish()
    }
}

impl Observable {
    /// An opaque observable with a declared sup bound.
    pub fn new(
        name: impl Into<String>,
        bound: f64,
        f: impl Fn(&GroupElement) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            eval: Arc::new(f),
            bound,
            smoothness: Smoothness::Generic,
            structure: Structure::Opaque,
        }
    }

    pub fn constant(c: f64) -> Self {
        Self {
            name: format!("const({c})"),
            eval: Arc::new(move |_| c),
            bound: c.abs(),
            smoothness: Smoothness::TrigPolynomial { max_frequency: 0 },
            structure: Structure::Constant(c),
        }
    }

    /// `g ↦ Re tr(A g)`.
    pub fn linear_trace(a: Mat) -> Self {
        // |Re tr(A g)| ≤ ‖A‖_F ‖g‖_F = √n ‖A‖_F for unitary g
        let bound = a.frobenius() * (a.dim() as f64).sqrt();
        Self {
            name: "re_trace_product".into(),
            eval: Arc::new(move |g: &GroupElement| a.re_trace_product(g.matrix())),
            bound,
            smoothness: Smoothness::Generic,
            structure: Structure::LinearTrace(a),
        }
    }

    /// `g ↦ Re tr(g)`.
    pub fn re_trace(spec: GroupSpec) -> Self {
        let mut f = Self::linear_trace(Mat::identity(spec.n()));
        f.name = "re_trace".into();
        f
    }

    /// `g ↦ ⟨Ad(g) source, target⟩`.
    pub fn adjoint_coefficient(source: &AlgebraVector, target: &AlgebraVector) -> Self {
        let spec = *source.spec();
        let (s, t) = (*source.matrix(), *target.matrix());
        Self {
            name: "adjoint_coefficient".into(),
            eval: Arc::new(move |g: &GroupElement| {
                let m = g.matrix();
                spec.inner_mat(&(*m * s * m.adjoint()), &t)
            }),
            bound: source.norm() * target.norm(),
            smoothness: Smoothness::Generic,
            structure: Structure::Adjoint {
                spec,
                source: s,
                target: t,
            },
        }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn with_smoothness(mut self, smoothness: Smoothness) -> Self {
        self.smoothness = smoothness;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn smoothness(&self) -> Smoothness {
        self.smoothness
    }

    pub fn structure(&self) -> &Structure {
        &self.structure
    }

    #[inline]
    pub fn eval(&self, g: &GroupElement) -> f64 {
        (self.eval)(g)
    }

    /// `c · f`, keeping the algebraic form.
    pub fn scaled(&self, c: f64) -> Self {
        let inner = self.eval.clone();
        let structure = match &self.structure {
            Structure::Opaque => Structure::Opaque,
            Structure::Constant(v) => Structure::Constant(c * v),
            Structure::LinearTrace(a) => Structure::LinearTrace(a.scale(c)),
            Structure::Adjoint {
                spec,
                source,
                target,
            } => Structure::Adjoint {
                spec: *spec,
                source: source.scale(c),
                target: *target,
            },
        };
        Self {
            name: format!("{c}*{}", self.name),
            eval: Arc::new(move |g| c * inner(g)),
            bound: c.abs() * self.bound,
            smoothness: self.smoothness,
            structure,
        }
    }

    /// `Σ c_k f_k`; the result is opaque unless every term is a linear trace.
    pub fn linear_combination(terms: &[(f64, Observable)]) -> Self {
        let parts: Vec<(f64, Observable)> = terms.to_vec();
        let bound = parts.iter().map(|(c, f)| c.abs() * f.bound).sum();
        let smoothness = parts
            .iter()
            .try_fold(0usize, |acc, (_, f)| match f.smoothness {
                Smoothness::TrigPolynomial { max_frequency } => Some(acc.max(max_frequency)),
                Smoothness::Generic => None,
            })
            .map_or(Smoothness::Generic, |max_frequency| {
                Smoothness::TrigPolynomial { max_frequency }
            });
        let trace = parts
            .iter()
            .try_fold(None::<Mat>, |acc, (c, f)| match &f.structure {
                Structure::LinearTrace(a) => Some(Some(match acc {
                    None => a.scale(*c),
                    Some(s) => s + a.scale(*c),
                })),
                _ => None,
            });
        let structure = match trace {
            Some(Some(a)) => Structure::LinearTrace(a),
            _ => Structure::Opaque,
        };
        Self {
            name: "linear_combination".into(),
            eval: Arc::new(move |g| parts.iter().map(|(c, f)| c * f.eval(g)).sum()),
            bound,
            smoothness,
            structure,
        }
    }

    pub fn has_exact_derivatives(&self) -> bool {
        matches!(
            self.structure,
            Structure::Constant(_) | Structure::LinearTrace(_) | Structure::Adjoint { .. }
        )
    }

    /// `L_Y f(g) = d/ds f(g e^{sY})` at `s = 0`.
    pub fn lie_derivative(&self, g: &GroupElement, y: &Mat) -> Result<f64> {
        match &self.structure {
            Structure::Constant(_) => Ok(0.0),
            Structure::LinearTrace(a) => Ok(a.re_trace_product(&(*g.matrix() * *y))),
            Structure::Adjoint {
                spec,
                source,
                target,
            } => {
                let m = g.matrix();
                Ok(spec.inner_mat(&(*m * y.commutator(source) * m.adjoint()), target))
            }
            Structure::Opaque => Err(Error::RequiresDerivatives),
        }
    }

    /// `L_{Y_i}(L_{Y_j} f)(g)`.
    pub fn second_lie_derivative(&self, g: &GroupElement, yi: &Mat, yj: &Mat) -> Result<f64> {
        match &self.structure {
            Structure::Constant(_) => Ok(0.0),
            Structure::LinearTrace(a) => Ok(a.re_trace_product(&(*g.matrix() * *yi * *yj))),
            Structure::Adjoint {
                spec,
                source,
                target,
            } => {
                let m = g.matrix();
                let inner = yi.commutator(&yj.commutator(source));
                Ok(spec.inner_mat(&(*m * inner * m.adjoint()), target))
            }
            Structure::Opaque => Err(Error::RequiresDerivatives),
        }
    }
}

/// `½ Σ L_{X_i}² f(g) + L_{X_0} f(g)` by five-point centered differences along
/// one-parameter subgroups.
pub fn generator_fd(
    f: &Observable,
    g: &GroupElement,
    fields: &[Mat],
    drift: &Mat,
    step: f64,
) -> f64 {
    let spec = *g.spec();
    let along = |x: &Mat, s: f64| {
        let h =
            GroupElement::from_matrix_unchecked(spec, *g.matrix() * exp_mat(&spec, &x.scale(s)));
        f.eval(&h)
    };
    let f0 = f.eval(g);
    let mut total = 0.0;
    for x in fields {
        let (p1, m1, p2, m2) = (
            along(x, step),
            along(x, -step),
            along(x, 2.0 * step),
            along(x, -2.0 * step),
        );
        total += 0.5 * (-p2 + 16.0 * p1 - 30.0 * f0 + 16.0 * m1 - m2) / (12.0 * step * step);
    }
    if drift.max_abs() > 0.0 {
        let (p1, m1, p2, m2) = (
            along(drift, step),
            along(drift, -step),
            along(drift, 2.0 * step),
            along(drift, -2.0 * step),
        );
        total += (-p2 + 8.0 * p1 - 8.0 * m1 + m2) / (12.0 * step);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{exp_map, haar_sample, pauli};
    use crate::linalg::C64;
    use crate::rng::RngStream;

    fn fd_first(f: &Observable, g: &GroupElement, y: &Mat) -> f64 {
        let spec = *g.spec();
        let h = 1e-5;
        let at = |s: f64| {
            f.eval(&GroupElement::from_matrix_unchecked(
                spec,
                *g.matrix() * exp_mat(&spec, &y.scale(s)),
            ))
        };
        (at(h) - at(-h)) / (2.0 * h)
    }

    #[test]
    fn trace_derivatives_match_finite_differences() {
        let spec = GroupSpec::so(4);
        let mut rng = RngStream::new(1, 0);
        let a = Mat::from_fn(4, |i, j| C64::new((i as f64 - j as f64).sin() + 0.3, 0.0));
        let f = Observable::linear_trace(a);
        let basis = spec.basis();
        for _ in 0..5 {
            let g = haar_sample(spec, &mut rng);
            for yi in &basis {
                let exact = f.lie_derivative(&g, yi.matrix()).unwrap();
                assert!((exact - fd_first(&f, &g, yi.matrix())).abs() < 1e-8);
                for yj in &basis {
                    // second derivative: differentiate L_{Y_j} f along Y_i
                    let inner = Observable::new("dj", 10.0, {
                        let f = f.clone();
                        let yj = *yj.matrix();
                        move |h: &GroupElement| f.lie_derivative(h, &yj).unwrap()
                    });
                    let exact2 = f
                        .second_lie_derivative(&g, yi.matrix(), yj.matrix())
                        .unwrap();
                    assert!((exact2 - fd_first(&inner, &g, yi.matrix())).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn adjoint_derivatives_match_finite_differences() {
        let [x1, x2, x3] = pauli();
        let f = Observable::adjoint_coefficient(&x2, &x3);
        let mut rng = RngStream::new(2, 0);
        for _ in 0..5 {
            let g = haar_sample(GroupSpec::su(2), &mut rng);
            for y in [&x1, &x2, &x3] {
                let exact = f.lie_derivative(&g, y.matrix()).unwrap();
                assert!((exact - fd_first(&f, &g, y.matrix())).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn opaque_observables_have_no_derivatives() {
        let f = Observable::new("one", 1.0, |_| 1.0);
        let g = GroupElement::identity(GroupSpec::su(2));
        assert_eq!(
            f.lie_derivative(&g, pauli()[0].matrix()),
            Err(Error::RequiresDerivatives)
        );
    }

    #[test]
    fn generator_fd_on_a_harmonic() {
        // α(θ) = cos 2θ along exp(θ X1): ½ α'' = −2 α
        let [x1, x2, _] = pauli();
        let f = Observable::adjoint_coefficient(&x2, &x2);
        for theta in [0.0, 0.4, 1.3, 2.9] {
            let g = exp_map(&x1.scale(theta));
            let got = generator_fd(&f, &g, &[*x1.matrix()], &Mat::zeros(2), FD_STEP);
            assert!(
                (got + 2.0 * (2.0 * theta).cos()).abs() < 1e-7,
                "θ = {theta}: {got}"
            );
        }
    }

    #[test]
    fn combinations_keep_trace_structure() {
        let spec = GroupSpec::su(2);
        let f = Observable::re_trace(spec);
        let two_f = Observable::linear_combination(&[(1.5, f.clone()), (0.5, f.clone())]);
        assert!(matches!(two_f.structure(), Structure::LinearTrace(_)));
        let g = exp_map(&pauli()[1].scale(0.7));
        assert!((two_f.eval(&g) - 2.0 * f.eval(&g)).abs() < 1e-15);
        assert!((f.scaled(2.0).eval(&g) - 2.0 * f.eval(&g)).abs() < 1e-15);
    }
}
