//! The coupled system `ẏ = y Σ α_k(z) Y_k` driven by the fast diffusion,
//! simulated on the physical clock `[0, T/ε]` with fast step `h = θε`.

use crate::error::{invalid, Error, Result};
use crate::fast::{step_count, FastSpec};
use crate::geometry::{distance, exp_mat, AlgebraVector, GroupElement, GroupSpec};
use crate::linalg::Mat;
use crate::metrics::{Ensemble, Provenance};
use crate::observable::{Observable, Structure};
use crate::parallel::par_map;
use crate::poisson::centering_check;
use crate::rng::{block, RngStream};
use crate::stats::MeanEstimate;

/// Default substep factor `θ = h/ε`.
pub const DEFAULT_THETA: f64 = 0.1;

#[derive(Clone, Debug)]
pub struct MultiscaleSystem {
    slow_group: GroupSpec,
    slow_fields: Vec<AlgebraVector>,
    fast: FastSpec,
    alphas: Vec<Observable>,
    y0: GroupElement,
    z0: GroupElement,
}

impl MultiscaleSystem {
    /// Checks field counts, centering of every `α` and the Hörmander
    /// condition on the fast subgroup.
    pub fn new(
        slow_fields: Vec<AlgebraVector>,
        fast: FastSpec,
        alphas: Vec<Observable>,
        y0: GroupElement,
        z0: GroupElement,
    ) -> Result<Self> {
        let sys = Self::new_unchecked(slow_fields, fast, alphas, y0, z0)?;
        for a in &sys.alphas {
            let c = centering_check(a, &sys.fast);
            if !c.centered {
                return Err(Error::NotCentered { mean: c.mean });
            }
        }
        let h = sys.fast.hormander();
        if !h.satisfied {
            return Err(Error::HormanderFails {
                generated: h.generated_dim,
                required: h.required_dim,
            });
        }
        Ok(sys)
    }

    /// Only structural checks; for degenerate systems such as a frozen fast
    /// variable.
    pub fn new_unchecked(
        slow_fields: Vec<AlgebraVector>,
        fast: FastSpec,
        alphas: Vec<Observable>,
        y0: GroupElement,
        z0: GroupElement,
    ) -> Result<Self> {
        if slow_fields.is_empty() || slow_fields.len() != alphas.len() {
            return Err(invalid(format!(
                "need m ≥ 1 slow fields and as many coefficients, got {} and {}",
                slow_fields.len(),
                alphas.len()
            )));
        }
        let slow_group = *y0.spec();
        if slow_fields.iter().any(|y| *y.spec() != slow_group) || *z0.spec() != *fast.group() {
            return Err(Error::SpecMismatch);
        }
        if !fast.contains(&z0) {
            return Err(invalid("initial fast state is not on the fast subgroup"));
        }
        Ok(Self {
            slow_group,
            slow_fields,
            fast,
            alphas,
            y0,
            z0,
        })
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        let mut out = self.clone();
        out.fast = self.fast.with_epsilon(epsilon)?;
        Ok(out)
    }

    pub fn with_initial(&self, y0: GroupElement, z0: GroupElement) -> Result<Self> {
        Self::new_unchecked(
            self.slow_fields.clone(),
            self.fast.clone(),
            self.alphas.clone(),
            y0,
            z0,
        )
    }

    pub fn slow_group(&self) -> &GroupSpec {
        &self.slow_group
    }

    pub fn slow_fields(&self) -> &[AlgebraVector] {
        &self.slow_fields
    }

    pub fn fast(&self) -> &FastSpec {
        &self.fast
    }

    pub fn alphas(&self) -> &[Observable] {
        &self.alphas
    }

    pub fn epsilon(&self) -> f64 {
        self.fast.epsilon()
    }

    pub fn y0(&self) -> &GroupElement {
        &self.y0
    }

    pub fn z0(&self) -> &GroupElement {
        &self.z0
    }

    pub fn m(&self) -> usize {
        self.slow_fields.len()
    }
}

/// Recorded slow (and fast) states of one path.
#[derive(Clone, Debug, PartialEq)]
pub struct PathSample {
    /// Slow-clock times `t`, i.e. physical time `t/ε`.
    pub times: Vec<f64>,
    pub states: Vec<GroupElement>,
    pub fast_states: Vec<GroupElement>,
    pub stream_id: u64,
}

/// Evaluates all coefficients at once; adjoint coefficients sharing a
/// source need a single conjugation.
enum Coefficients {
    Adjoint {
        spec: GroupSpec,
        source: Mat,
        targets: Vec<Mat>,
    },
    Generic(Vec<Observable>),
}

impl Coefficients {
    fn new(alphas: &[Observable]) -> Self {
        let mut shared: Option<(GroupSpec, Mat)> = None;
        let mut targets = Vec::new();
        for a in alphas {
            match a.structure() {
                Structure::Adjoint {
                    spec,
                    source,
                    target,
                } => {
                    match shared {
                        None => shared = Some((*spec, *source)),
                        Some((_, s)) if s == *source => {}
                        Some(_) => return Self::Generic(alphas.to_vec()),
                    }
                    targets.push(*target);
                }
                _ => return Self::Generic(alphas.to_vec()),
            }
        }
        match shared {
            Some((spec, source)) => Self::Adjoint {
                spec,
                source,
                targets,
            },
            None => Self::Generic(alphas.to_vec()),
        }
    }

    #[inline]
    fn eval(&self, z: &Mat, fast_spec: &GroupSpec, out: &mut [f64]) {
        match self {
            Self::Adjoint {
                spec,
                source,
                targets,
            } => {
                let ad = *z * *source * z.adjoint();
                for (o, t) in out.iter_mut().zip(targets) {
                    *o = spec.inner_mat(&ad, t);
                }
            }
            Self::Generic(fs) => {
                let g = GroupElement::from_matrix_unchecked(*fast_spec, *z);
                for (o, f) in out.iter_mut().zip(fs) {
                    *o = f.eval(&g);
                }
            }
        }
    }
}

/// Per-step state shared by all path drivers.
struct Stepper<'a> {
    sys: &'a MultiscaleSystem,
    coef: Coefficients,
    fields: Vec<Mat>,
    h: f64,
    steps: usize,
    horizon: f64,
}

impl<'a> Stepper<'a> {
    fn new(sys: &'a MultiscaleSystem, t: f64, theta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta <= 0.5) {
            return Err(Error::StepTooLarge {
                step: theta * sys.epsilon(),
                limit: 0.5 * sys.epsilon(),
            });
        }
        if !(t >= 0.0) {
            return Err(invalid("horizon must be nonnegative"));
        }
        let horizon = t / sys.epsilon();
        let h = theta * sys.epsilon();
        Ok(Self {
            sys,
            coef: Coefficients::new(&sys.alphas),
            fields: sys.slow_fields.iter().map(|y| *y.matrix()).collect(),
            h,
            steps: step_count(horizon, h),
            horizon,
        })
    }

    fn dt(&self, k: usize) -> f64 {
        if k + 1 == self.steps {
            self.horizon - self.h * k as f64
        } else {
            self.h
        }
    }

    /// Advances `(y, z)` by one step of length `dt`; `a` holds `α(z)` on entry
    /// and is refreshed on exit.
    #[inline]
    fn step(&self, y: &mut Mat, z: &mut Mat, a: &mut [f64], dt: f64, rng: &mut RngStream) {
        let mut gen = Mat::zeros(self.sys.slow_group.n());
        for (ak, yk) in a.iter().zip(&self.fields) {
            gen.axpy(dt * ak, yk);
        }
        *y = *y * exp_mat(&self.sys.slow_group, &gen);
        let r = dt / self.sys.epsilon();
        *z = self.sys.fast.advance(z, r.sqrt(), r, rng);
        self.coef.eval(z, self.sys.fast.group(), a);
    }
}

/// One path of the coupled system, recorded at the given slow-clock times.
pub fn simulate_pair(
    sys: &MultiscaleSystem,
    t: f64,
    theta: f64,
    rng: &mut RngStream,
    record_grid: &[f64],
) -> Result<PathSample> {
    if record_grid.windows(2).any(|w| w[1] <= w[0])
        || record_grid
            .iter()
            .any(|r| *r < 0.0 || *r > t * (1.0 + 1e-12))
    {
        return Err(invalid("record grid must be increasing and inside [0, T]"));
    }
    let st = Stepper::new(sys, t, theta)?;
    let eps = sys.epsilon();
    let mut y = *sys.y0.matrix();
    let mut z = *sys.z0.matrix();
    let mut a = vec![0.0; sys.m()];
    st.coef.eval(&z, sys.fast.group(), &mut a);
    let mut sample = PathSample {
        times: Vec::with_capacity(record_grid.len()),
        states: Vec::with_capacity(record_grid.len()),
        fast_states: Vec::with_capacity(record_grid.len()),
        stream_id: rng.stream_id(),
    };
    let mut next = 0;
    let mut now = 0.0;
    let tol = 1e-9 * st.h;
    for k in 0..=st.steps {
        while next < record_grid.len() && record_grid[next] / eps <= now + tol {
            sample.times.push(record_grid[next]);
            sample
                .states
                .push(GroupElement::from_matrix_unchecked(sys.slow_group, y));
            sample
                .fast_states
                .push(GroupElement::from_matrix_unchecked(*sys.fast.group(), z));
            next += 1;
        }
        if k == st.steps {
            break;
        }
        let dt = st.dt(k);
        st.step(&mut y, &mut z, &mut a, dt, rng);
        now = if k + 1 == st.steps {
            st.horizon
        } else {
            now + dt
        };
    }
    while next < record_grid.len() {
        sample.times.push(record_grid[next]);
        sample
            .states
            .push(GroupElement::from_matrix_unchecked(sys.slow_group, y));
        sample
            .fast_states
            .push(GroupElement::from_matrix_unchecked(*sys.fast.group(), z));
        next += 1;
    }
    Ok(sample)
}

fn terminal(st: &Stepper, rng: &mut RngStream) -> (Mat, Mat) {
    let sys = st.sys;
    let mut y = *sys.y0.matrix();
    let mut z = *sys.z0.matrix();
    let mut a = vec![0.0; sys.m()];
    st.coef.eval(&z, sys.fast.group(), &mut a);
    for k in 0..st.steps {
        st.step(&mut y, &mut z, &mut a, st.dt(k), rng);
    }
    (y, z)
}

/// Terminal slow states `y^ε_{T/ε}` of `paths` independent runs; path `i`
/// uses stream `block::SLOW + i`.
pub fn slow_marginal(
    sys: &MultiscaleSystem,
    t: f64,
    paths: usize,
    theta: f64,
    master_seed: u64,
) -> Result<Ensemble> {
    if paths == 0 {
        return Err(invalid("need at least one path"));
    }
    let st = Stepper::new(sys, t, theta)?;
    let states = par_map(paths, |i| {
        let mut rng = RngStream::new(master_seed, block::SLOW + i as u64);
        GroupElement::from_matrix_unchecked(sys.slow_group, terminal(&st, &mut rng).0)
    });
    Ensemble::new(
        sys.slow_group,
        states,
        Provenance {
            master_seed,
            first_stream: block::SLOW,
            config_digest: String::new(),
        },
    )
}

/// Terminal means of `f` at `θ` and `θ/2` with their pooled standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HalvingStudy {
    pub coarse: MeanEstimate,
    pub fine: MeanEstimate,
    pub pooled_se: f64,
}

pub fn theta_halving(
    sys: &MultiscaleSystem,
    f: &Observable,
    t: f64,
    paths: usize,
    theta: f64,
    master_seed: u64,
) -> Result<HalvingStudy> {
    let coarse = slow_marginal(sys, t, paths, theta, master_seed)?.mean_of(f);
    let fine = slow_marginal(sys, t, paths, 0.5 * theta, master_seed ^ 0x9e37_79b9)?.mean_of(f);
    Ok(HalvingStudy {
        coarse,
        fine,
        pooled_se: coarse.std_error.hypot(fine.std_error),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ItoReport {
    pub lhs: f64,
    pub rhs: f64,
    /// Standard error of the per-path difference (common paths).
    pub pooled_se: f64,
    pub allowance: f64,
    pub pass: bool,
}

/// Multiplier of `θε` in the discretization allowance.
pub const ITO_ALLOWANCE_FACTOR: f64 = 10.0;

/// Checks `E f(y_{t/ε}) − f(y_0) = ε Σ_j [E L_j f(y) β_j(z)]_0^{t/ε}
/// − ε Σ_{ij} ∫ E L_i L_j f(y_r) α_i(z_r) β_j(z_r) dr` on common paths.
pub fn ito_reduction_check(
    sys: &MultiscaleSystem,
    f: &Observable,
    betas: &[Observable],
    t: f64,
    paths: usize,
    theta: f64,
    master_seed: u64,
) -> Result<ItoReport> {
    if !f.has_exact_derivatives() {
        return Err(Error::RequiresDerivatives);
    }
    if betas.len() != sys.m() {
        return Err(invalid("need one β per slow field"));
    }
    if paths < 2 {
        return Err(invalid("need at least two paths"));
    }
    let st = Stepper::new(sys, t, theta)?;
    let eps = sys.epsilon();
    let m = sys.m();
    let fields = &st.fields;
    let fast_spec = *sys.fast.group();
    let diffs = par_map(paths, |i| {
        let mut rng = RngStream::new(master_seed, block::SLOW + i as u64);
        let mut y = *sys.y0.matrix();
        let mut z = *sys.z0.matrix();
        let mut a = vec![0.0; m];
        st.coef.eval(&z, &fast_spec, &mut a);
        let betas_at = |z: &Mat| -> Vec<f64> {
            let g = GroupElement::from_matrix_unchecked(fast_spec, *z);
            betas.iter().map(|b| b.eval(&g)).collect()
        };
        let boundary = |y: &Mat, b: &[f64]| -> f64 {
            let g = GroupElement::from_matrix_unchecked(sys.slow_group, *y);
            (0..m)
                .map(|j| f.lie_derivative(&g, &fields[j]).unwrap_or(0.0) * b[j])
                .sum()
        };
        let integrand = |y: &Mat, a: &[f64], b: &[f64]| -> f64 {
            let g = GroupElement::from_matrix_unchecked(sys.slow_group, *y);
            let mut s = 0.0;
            for i in 0..m {
                for j in 0..m {
                    s += f
                        .second_lie_derivative(&g, &fields[i], &fields[j])
                        .unwrap_or(0.0)
                        * a[i]
                        * b[j];
                }
            }
            s
        };
        let mut b = betas_at(&z);
        let start = boundary(&y, &b);
        let mut prev = integrand(&y, &a, &b);
        let mut integral = 0.0;
        for k in 0..st.steps {
            let dt = st.dt(k);
            st.step(&mut y, &mut z, &mut a, dt, &mut rng);
            b = betas_at(&z);
            let cur = integrand(&y, &a, &b);
            integral += 0.5 * dt * (prev + cur);
            prev = cur;
        }
        let end = boundary(&y, &b);
        let lhs = f.eval(&GroupElement::from_matrix_unchecked(sys.slow_group, y)) - f.eval(&sys.y0);
        let rhs = eps * (end - start) - eps * integral;
        (lhs, rhs)
    });
    let lhs: Vec<f64> = diffs.iter().map(|d| d.0).collect();
    let rhs: Vec<f64> = diffs.iter().map(|d| d.1).collect();
    let gap: Vec<f64> = diffs.iter().map(|d| d.0 - d.1).collect();
    let l = MeanEstimate::from_samples(&lhs).mean;
    let r = MeanEstimate::from_samples(&rhs).mean;
    let pooled_se = MeanEstimate::from_samples(&gap).std_error;
    let allowance = ITO_ALLOWANCE_FACTOR * theta * eps;
    Ok(ItoReport {
        lhs: l,
        rhs: r,
        pooled_se,
        allowance,
        pass: (l - r).abs() <= 3.0 * pooled_se + allowance,
    })
}

/// `y ↦ ρ(I, y)²`, bounded by the squared diameter.
pub fn distance_squared(spec: GroupSpec) -> Observable {
    let id = GroupElement::identity(spec);
    Observable::new("distance_squared", spec.diameter().powi(2), move |y| {
        distance(&id, y).powi(2)
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct MomentRow {
    pub epsilon: f64,
    pub moment: f64,
    pub std_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MomentReport {
    pub rows: Vec<MomentRow>,
    /// max/min of the moments across ε.
    pub ratio: f64,
    pub pass: bool,
}

/// Largest max/min moment ratio accepted as uniform in ε.
pub const MOMENT_RATIO_LIMIT: f64 = 2.0;

/// `E[sup_{t ≤ T} V(y_t)^p]` per ε, with the running sup taken on the fast grid.
#[allow(clippy::too_many_arguments)]
pub fn uniform_moment_probe(
    sys: &MultiscaleSystem,
    v: &Observable,
    p: f64,
    eps_grid: &[f64],
    t: f64,
    paths: usize,
    theta: f64,
    master_seed: u64,
) -> Result<MomentReport> {
    if eps_grid.is_empty() || paths < 2 {
        return Err(invalid("need a nonempty ε grid and at least two paths"));
    }
    let mut rows = Vec::with_capacity(eps_grid.len());
    for &eps in eps_grid {
        let s = sys.with_epsilon(eps)?;
        let st = Stepper::new(&s, t, theta)?;
        let vals = par_map(paths, |i| {
            let mut rng = RngStream::new(master_seed, block::SLOW + i as u64);
            let mut y = *s.y0.matrix();
            let mut z = *s.z0.matrix();
            let mut a = vec![0.0; s.m()];
            st.coef.eval(&z, s.fast.group(), &mut a);
            let at = |y: &Mat| v.eval(&GroupElement::from_matrix_unchecked(s.slow_group, *y));
            let mut sup = at(&y);
            for k in 0..st.steps {
                st.step(&mut y, &mut z, &mut a, st.dt(k), &mut rng);
                sup = sup.max(at(&y));
            }
            if p == 0.0 {
                1.0
            } else {
                sup.powf(p)
            }
        });
        let est = MeanEstimate::from_samples(&vals);
        rows.push(MomentRow {
            epsilon: eps,
            moment: est.mean,
            std_error: est.std_error,
        });
    }
    let max = rows
        .iter()
        .map(|r| r.moment)
        .fold(f64::NEG_INFINITY, f64::max);
    let min = rows.iter().map(|r| r.moment).fold(f64::INFINITY, f64::min);
    let ratio = if min > 0.0 { max / min } else { f64::INFINITY };
    Ok(MomentReport {
        rows,
        ratio,
        pass: ratio <= MOMENT_RATIO_LIMIT,
    })
}
