//! The limiting Stratonovich equation `dy = Σ_k Ỹ_k(y) ∘ dB^k + D(y) dt`.
//!
//! The driving fields are `Ỹ_k = √2 Σ_i σ_ik Y_i` with `σσᵀ = −a_sym`, so the
//! generator `½ Σ_k L_{Ỹ_k}² + L_D` equals `L̄ = −Σ_ij ā_ij L_{Y_i} L_{Y_j}`.
//! The antisymmetric part of `ā` enters through the bracket drift
//! `D = −Σ_{i<j} (a_anti)_ij [Y_i, Y_j]`.

use std::fmt;

use nalgebra::DMatrix;

use crate::error::{invalid, Error, Result};
use crate::fast::step_count;
use crate::geometry::{exp_general, exp_mat, AlgebraVector, GroupElement, GroupSpec};
use crate::linalg::Mat;
use crate::metrics::{Ensemble, Provenance};
use crate::observable::{Observable, Structure};
use crate::parallel::par_map;
use crate::poisson::AveragedModel;
use crate::rng::{block, RngStream};
use crate::stats::MeanEstimate;

/// Default time step of the limit scheme.
pub const DEFAULT_LIMIT_STEP: f64 = 0.01;
/// Half width `δ` of the centered time difference in [`backward_check`].
pub const BACKWARD_DELTA: f64 = 0.05;

const ZERO_FIELD_TOL: f64 = 1e-14;

#[derive(Clone, Debug, PartialEq)]
pub struct EffectiveSDE {
    slow_group: GroupSpec,
    driving_fields: Vec<AlgebraVector>,
    bracket_drift: AlgebraVector,
}

/// Builds the limit equation from the averaged model and the slow fields
/// `Y_1..Y_m`, which must be orthonormal.
pub fn build_effective(
    model: &AveragedModel,
    slow_fields: &[AlgebraVector],
) -> Result<EffectiveSDE> {
    if model.dim() != slow_fields.len() {
        return Err(invalid(format!(
            "averaged model has dimension {} but there are {} slow fields",
            model.dim(),
            slow_fields.len()
        )));
    }
    AveragedModel::from_a_bar(model.a_bar.clone(), model.quadrature_error)?;
    EffectiveSDE::from_sigma(&model.sigma, &model.a_anti, slow_fields)
}

impl EffectiveSDE {
    /// Explicit fields and drift.
    pub fn new(
        slow_group: GroupSpec,
        driving_fields: Vec<AlgebraVector>,
        bracket_drift: AlgebraVector,
    ) -> Result<Self> {
        if driving_fields
            .iter()
            .chain([&bracket_drift])
            .any(|x| *x.spec() != slow_group)
        {
            return Err(Error::SpecMismatch);
        }
        Ok(Self {
            slow_group,
            driving_fields,
            bracket_drift,
        })
    }

    /// Fields from the columns of a square root `σ` and drift from `a_anti`.
    /// Columns of `σ` that vanish give no field.
    pub fn from_sigma(
        sigma: &DMatrix<f64>,
        a_anti: &DMatrix<f64>,
        slow_fields: &[AlgebraVector],
    ) -> Result<Self> {
        let m = slow_fields.len();
        let spec = *slow_fields
            .first()
            .ok_or_else(|| invalid("need at least one slow field"))?
            .spec();
        if sigma.nrows() != m || a_anti.nrows() != m || a_anti.ncols() != m {
            return Err(invalid("σ and a_anti must have one row per slow field"));
        }
        if slow_fields.iter().any(|y| *y.spec() != spec) {
            return Err(Error::SpecMismatch);
        }
        let mut fields = Vec::new();
        for k in 0..sigma.ncols() {
            let mut field = AlgebraVector::zero(spec);
            for (i, y) in slow_fields.iter().enumerate() {
                field = field + y.scale(std::f64::consts::SQRT_2 * sigma[(i, k)]);
            }
            if field.norm() > ZERO_FIELD_TOL {
                fields.push(field);
            }
        }
        let mut drift = Mat::zeros(spec.n());
        for i in 0..m {
            for j in (i + 1)..m {
                drift.axpy(
                    -a_anti[(i, j)],
                    &slow_fields[i].matrix().commutator(slow_fields[j].matrix()),
                );
            }
        }
        Self::new(spec, fields, AlgebraVector::from_matrix(spec, drift)?)
    }

    pub fn slow_group(&self) -> &GroupSpec {
        &self.slow_group
    }

    pub fn driving_fields(&self) -> &[AlgebraVector] {
        &self.driving_fields
    }

    pub fn bracket_drift(&self) -> &AlgebraVector {
        &self.bracket_drift
    }

    /// `Q_ij = Σ_k ⟨Ỹ_k, Y_i⟩⟨Ỹ_k, Y_j⟩`; equals `−2 a_sym` for orthonormal `Y`.
    pub fn diffusion_form(&self, slow_fields: &[AlgebraVector]) -> DMatrix<f64> {
        let m = slow_fields.len();
        DMatrix::from_fn(m, m, |i, j| {
            self.driving_fields
                .iter()
                .map(|f| f.inner(&slow_fields[i]) * f.inner(&slow_fields[j]))
                .sum()
        })
    }

    /// `G = ½ Σ_k Ỹ_k² + D`. For `f = Re tr(A·)`, `L̄f(g) = Re tr(A g G)`.
    pub fn generator_matrix(&self) -> Mat {
        let mut g = *self.bracket_drift.matrix();
        for f in &self.driving_fields {
            g.axpy(0.5, &(*f.matrix() * *f.matrix()));
        }
        g
    }

    /// `L̄f(g) = ½ Σ_k L_{Ỹ_k}² f(g) + L_D f(g)` from exact derivatives.
    pub fn generator(&self, f: &Observable, g: &GroupElement) -> Result<f64> {
        let mut total = f.lie_derivative(g, self.bracket_drift.matrix())?;
        for y in &self.driving_fields {
            total += 0.5 * f.second_lie_derivative(g, y.matrix(), y.matrix())?;
        }
        Ok(total)
    }

    /// `P_T f(y) = Re tr(A y exp(T G))` for the linear-trace family.
    pub fn trace_semigroup(&self, f: &Observable, y: &GroupElement, t: f64) -> Result<f64> {
        let a = trace_matrix(f)?;
        Ok(a.re_trace_product(&(*y.matrix() * exp_general(&self.generator_matrix().scale(t)))))
    }

    #[inline]
    fn step_mat(&self, y: &Mat, h: f64, rng: &mut RngStream) -> Mat {
        let mut gen = self.bracket_drift.matrix().scale(h);
        let root = h.sqrt();
        for f in &self.driving_fields {
            gen.axpy(root * rng.normal(), f.matrix());
        }
        if gen.max_abs() == 0.0 {
            return *y;
        }
        *y * exp_mat(&self.slow_group, &gen)
    }

    /// Runs from `y` over `[0, t]` with step `h` (the last step may be short).
    fn run(&self, y: &Mat, t: f64, h: f64, rng: &mut RngStream) -> Mat {
        let steps = step_count(t, h);
        let mut y = *y;
        for k in 0..steps {
            let dt = if k + 1 == steps { t - h * k as f64 } else { h };
            y = self.step_mat(&y, dt, rng);
        }
        y
    }
}

impl fmt::Display for EffectiveSDE {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "group = {}", self.slow_group)?;
        writeln!(f, "driving_fields = {}", self.driving_fields.len())?;
        for (k, y) in self.driving_fields.iter().enumerate() {
            writeln!(f, "field_{} = {:?}", k + 1, y.coords())?;
        }
        write!(f, "bracket_drift = {:?}", self.bracket_drift.coords())
    }
}

fn trace_matrix(f: &Observable) -> Result<Mat> {
    match f.structure() {
        Structure::LinearTrace(a) => Ok(*a),
        _ => Err(Error::RequiresDerivatives),
    }
}

/// One step `y · exp(√h Σ ξ_k Ỹ_k + h D)`.
pub fn step_limit(
    y: &GroupElement,
    sde: &EffectiveSDE,
    h: f64,
    rng: &mut RngStream,
) -> GroupElement {
    assert!(h >= 0.0, "step must be nonnegative");
    GroupElement::from_matrix_unchecked(*y.spec(), sde.step_mat(y.matrix(), h, rng))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SemigroupEstimate {
    pub estimate: f64,
    pub std_error: f64,
}

/// Monte Carlo `P_T f(y0)` over `paths` runs; path `i` uses stream
/// `block::LIMIT + i`.
pub fn semigroup_mc(
    f: &Observable,
    y0: &GroupElement,
    sde: &EffectiveSDE,
    t: f64,
    h: f64,
    paths: usize,
    master_seed: u64,
) -> Result<SemigroupEstimate> {
    let ens = limit_marginal(y0, sde, t, h, paths, master_seed, block::LIMIT)?;
    let m = ens.mean_of(f);
    Ok(SemigroupEstimate {
        estimate: m.mean,
        std_error: m.std_error,
    })
}

/// Terminal states of the limit equation; path `i` uses `first_stream + i`.
pub fn limit_marginal(
    y0: &GroupElement,
    sde: &EffectiveSDE,
    t: f64,
    h: f64,
    paths: usize,
    master_seed: u64,
    first_stream: u64,
) -> Result<Ensemble> {
    if *y0.spec() != sde.slow_group {
        return Err(Error::SpecMismatch);
    }
    if !(h > 0.0) || !(t >= 0.0) {
        return Err(invalid("need h > 0 and T ≥ 0"));
    }
    if paths == 0 {
        return Err(invalid("need at least one path"));
    }
    let states = par_map(paths, |i| {
        let mut rng = RngStream::new(master_seed, first_stream + i as u64);
        GroupElement::from_matrix_unchecked(sde.slow_group, sde.run(y0.matrix(), t, h, &mut rng))
    });
    Ensemble::new(
        sde.slow_group,
        states,
        Provenance {
            master_seed,
            first_stream,
            config_digest: String::new(),
        },
    )
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BackwardReport {
    /// `(P_{T+δ}f − P_{T−δ}f) / 2δ`.
    pub lhs_slope: f64,
    /// `P_T(L̄f)`.
    pub rhs_value: f64,
    /// Standard error of the per-path difference.
    pub pooled_se: f64,
    /// `δ²/6 · C3 + h · C2`.
    pub allowance: f64,
    pub pass: bool,
}

/// Kolmogorov backward equation `∂_T P_T f = P_T(L̄f)` on common paths: each
/// path is observed at `T−δ`, `T` and `T+δ`.
///
/// `C3 = ‖A‖ ‖G³‖` bounds `∂_T³ P_T f`. `C2 = ‖A‖ K² (1 + T‖G‖)` with
/// `K = Σ‖Ỹ_k‖² + ‖D‖` bounds the first-order bias of the scheme in the
/// slope (Frobenius norms throughout).
pub fn backward_check(
    f: &Observable,
    y0: &GroupElement,
    sde: &EffectiveSDE,
    t: f64,
    h: f64,
    paths: usize,
    master_seed: u64,
) -> Result<BackwardReport> {
    let a = match f.structure() {
        Structure::Constant(_) => Mat::zeros(sde.slow_group.n()),
        _ => trace_matrix(f)?,
    };
    let delta = BACKWARD_DELTA;
    if t < delta || !(h > 0.0) || h > delta {
        return Err(invalid(format!("need T ≥ δ = {delta} and 0 < h ≤ δ")));
    }
    if paths < 2 {
        return Err(invalid("need at least two paths"));
    }
    if *y0.spec() != sde.slow_group {
        return Err(Error::SpecMismatch);
    }
    let spec = sde.slow_group;
    let diffs = par_map(paths, |i| {
        let mut rng = RngStream::new(master_seed, block::LIMIT + i as u64);
        let early = sde.run(y0.matrix(), t - delta, h, &mut rng);
        let mid = sde.run(&early, delta, h, &mut rng);
        let late = sde.run(&mid, delta, h, &mut rng);
        let at = |m: &Mat| GroupElement::from_matrix_unchecked(spec, *m);
        let slope = (f.eval(&at(&late)) - f.eval(&at(&early))) / (2.0 * delta);
        let gen = sde.generator(f, &at(&mid)).unwrap_or(0.0);
        (slope, gen)
    });
    let lhs: Vec<f64> = diffs.iter().map(|d| d.0).collect();
    let rhs: Vec<f64> = diffs.iter().map(|d| d.1).collect();
    let gap: Vec<f64> = diffs.iter().map(|d| d.0 - d.1).collect();
    let lhs_slope = MeanEstimate::from_samples(&lhs).mean;
    let rhs_value = MeanEstimate::from_samples(&rhs).mean;
    let pooled_se = MeanEstimate::from_samples(&gap).std_error;

    let g = sde.generator_matrix();
    let c3 = a.frobenius() * (g * g * g).frobenius();
    let k: f64 = sde
        .driving_fields
        .iter()
        .map(|y| y.matrix().frobenius().powi(2))
        .sum::<f64>()
        + sde.bracket_drift.matrix().frobenius();
    let c2 = a.frobenius() * k * k * (1.0 + t * g.frobenius());
    let allowance = delta * delta / 6.0 * c3 + h * c2;
    Ok(BackwardReport {
        lhs_slope,
        rhs_value,
        pooled_se,
        allowance,
        pass: (lhs_slope - rhs_value).abs() <= 3.0 * pooled_se + allowance,
    })
}
