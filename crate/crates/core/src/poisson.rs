//! Poisson equation `L_0 β = α` on the fast subgroup and the averaged matrix
//! `ā_ij = mean(α_i β_j)`.
//!
//! Torus fast groups are solved spectrally. Elsewhere the resolvent
//! `β(x) = −∫_0^∞ E_x α(z_t) dt` is estimated by Monte Carlo, truncated at a
//! tail horizon. For adjoint coefficients the estimate carries a martingale
//! control variate built from the exact one-step mean of the chain.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{invalid, Error, Result};
use crate::fast::{step_count, FastGroup, FastSpec, TORUS_NODES};
use crate::geometry::{exp_mat, AlgebraVector, GroupElement, GroupSpec};
use crate::linalg::{Mat, C64};
use crate::observable::{generator_fd, Observable, Smoothness, Structure, FD_STEP};
use crate::parallel::par_map;
use crate::rng::{block, RngStream};

/// Centering tolerance for quadrature means.
pub const CENTERING_TOL: f64 = 1e-6;
/// Fourier modes above the declared frequency must stay below this.
pub const LEAK_TOL: f64 = 1e-10;
/// Eigenvalues of `−a_sym` down to this are clamped to zero.
pub const PSD_TOL: f64 = 1e-8;

const VALIDATION_SEED: u64 = 0x7a11_da7e;
const VALIDATION_POINTS: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoissonMethod {
    Spectral,
    MonteCarloResolvent,
}

#[derive(Clone, Debug)]
pub struct PoissonSolution {
    pub alpha: Observable,
    pub beta: Observable,
    pub method: PoissonMethod,
    /// Max of `|L_0 β − α|` on the validation grid (finite differences);
    /// relative to `max |α|` for Monte Carlo. NaN when β is too noisy to
    /// differentiate.
    pub residual_sup: f64,
    /// Largest 95% half width of β on the validation grid (Monte Carlo only).
    pub ci_half_width: Option<f64>,
}

/// `α_k(z) = ⟨Ad(z) Y_0, m_k⟩` for each `m_k`.
pub fn adjoint_alpha(
    y0: &AlgebraVector,
    m_basis: &[AlgebraVector],
    fast: &FastSpec,
) -> Result<Vec<Observable>> {
    let spec = *y0.spec();
    if m_basis.iter().any(|m| *m.spec() != spec) || *fast.group() != spec {
        return Err(Error::SpecMismatch);
    }
    for (i, a) in m_basis.iter().enumerate() {
        for (j, b) in m_basis.iter().enumerate() {
            let expect = if i == j { 1.0 } else { 0.0 };
            if (a.inner(b) - expect).abs() > 1e-10 {
                return Err(invalid("m basis is not orthonormal"));
            }
        }
    }
    let smoothness = match fast.subgroup() {
        FastGroup::Torus(chart) => Smoothness::TrigPolynomial {
            max_frequency: adjoint_frequency(chart.generator(), chart.period()),
        },
        FastGroup::Trivial => Smoothness::TrigPolynomial { max_frequency: 0 },
        _ => Smoothness::Generic,
    };
    Ok(m_basis
        .iter()
        .enumerate()
        .map(|(k, m)| {
            Observable::adjoint_coefficient(y0, m)
                .with_name(format!("alpha_{}", k + 1))
                .with_smoothness(smoothness)
        })
        .collect())
}

/// Highest angular frequency of `θ ↦ Ad(exp(θ·P/2π·U))` on the algebra.
fn adjoint_frequency(generator: &Mat, period: f64) -> usize {
    let herm = generator.scale_c(C64::new(0.0, -1.0)).to_nalgebra();
    let eig = SymmetricEigen::new(herm);
    let l = eig.eigenvalues;
    let spread = l.max() - l.min();
    (spread * period / (2.0 * PI) - 1e-9).ceil().max(0.0) as usize
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CenteringReport {
    pub mean: f64,
    /// `None` for quadrature or exact projection.
    pub std_error: Option<f64>,
    pub centered: bool,
}

/// Invariant mean of `alpha` and whether it vanishes.
pub fn centering_check(alpha: &Observable, fast: &FastSpec) -> CenteringReport {
    let (mean, std_error) = invariant_mean(alpha, fast);
    let centered = match std_error {
        None => mean.abs() <= CENTERING_TOL,
        Some(se) => mean.abs() <= 3.0 * se,
    };
    CenteringReport {
        mean,
        std_error,
        centered,
    }
}

/// Quadrature on tori, exact projection for adjoint coefficients on other
/// connected fast groups, Haar Monte Carlo otherwise.
fn invariant_mean(f: &Observable, fast: &FastSpec) -> (f64, Option<f64>) {
    if let (
        Structure::Adjoint {
            spec,
            source,
            target,
        },
        FastGroup::Block { .. } | FastGroup::Whole,
    ) = (f.structure(), fast.subgroup())
    {
        let inv = InvariantProjector::new(fast);
        let s = inv.project_vector(&coords(spec, source));
        let t = coords(spec, target);
        return (s.dot(&t), None);
    }
    let m = fast.invariant_mean(f);
    (m.mean, m.std_error)
}

fn coords(spec: &GroupSpec, m: &Mat) -> DVector<f64> {
    DVector::from_iterator(
        spec.algebra_dim(),
        spec.basis().iter().map(|b| spec.inner_mat(b.matrix(), m)),
    )
}

fn from_coords(spec: &GroupSpec, c: &DVector<f64>) -> Mat {
    let mut m = Mat::zeros(spec.n());
    for (x, b) in c.iter().zip(spec.basis()) {
        m.axpy(*x, b.matrix());
    }
    m
}

/// `d×d` matrix of `ad_X` in the orthonormal basis.
fn ad_matrix(spec: &GroupSpec, x: &Mat) -> DMatrix<f64> {
    let basis = spec.basis();
    let d = basis.len();
    DMatrix::from_fn(d, d, |i, j| {
        spec.inner_mat(basis[i].matrix(), &x.commutator(basis[j].matrix()))
    })
}

/// Orthogonal projections onto the Ad-invariant vectors and onto the
/// Ad-invariant 2-tensors of the fast subgroup. For a connected compact
/// group these equal the Haar averages of `Ad(z)` and `Ad(z) ⊗ Ad(z)`.
struct InvariantProjector {
    vectors: DMatrix<f64>,
    tensors: DMatrix<f64>,
    d: usize,
}

impl InvariantProjector {
    fn new(fast: &FastSpec) -> Self {
        let spec = fast.group();
        let d = spec.algebra_dim();
        let mut gens: Vec<Mat> = fast
            .diffusion_fields()
            .iter()
            .map(|x| *x.matrix())
            .collect();
        if !fast.drift().is_zero() {
            gens.push(*fast.drift().matrix());
        }
        let ads: Vec<DMatrix<f64>> = gens.iter().map(|x| ad_matrix(spec, x)).collect();
        let stacked = DMatrix::from_fn(d * ads.len(), d, |r, c| ads[r / d][(r % d, c)]);
        let vectors = null_projector(&stacked, d);
        // vec(M) ↦ vec(A M + M Aᵀ) = (I⊗A + A⊗I) vec(M), column-major
        let d2 = d * d;
        let mut rows = DMatrix::zeros(d2 * ads.len(), d2);
        for (k, a) in ads.iter().enumerate() {
            for i in 0..d {
                for j in 0..d {
                    let r = k * d2 + i + j * d;
                    for l in 0..d {
                        rows[(r, l + j * d)] += a[(i, l)];
                        rows[(r, i + l * d)] += a[(j, l)];
                    }
                }
            }
        }
        let tensors = null_projector(&rows, d2);
        Self {
            vectors,
            tensors,
            d,
        }
    }

    fn project_vector(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.vectors * v
    }

    /// Haar mean of `(Ad(z)s)(Ad(z)b)ᵀ`.
    fn project_outer(&self, s: &DVector<f64>, b: &DVector<f64>) -> DMatrix<f64> {
        let outer = s * b.transpose();
        let v = DVector::from_column_slice(outer.as_slice());
        let p = &self.tensors * v;
        DMatrix::from_column_slice(self.d, self.d, p.as_slice())
    }
}

/// Orthogonal projector onto the null space of `a` (columns = `n`).
fn null_projector(a: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    if a.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    let gram = a.transpose() * a;
    let eig = SymmetricEigen::new(gram);
    let scale = eig.eigenvalues.amax().max(1.0);
    let mut p = DMatrix::zeros(n, n);
    for (k, lam) in eig.eigenvalues.iter().enumerate() {
        if *lam <= 1e-10 * scale {
            let v = eig.eigenvectors.column(k);
            p += v * v.transpose();
        }
    }
    p
}

/// Spectral solution on a torus fast group.
pub fn solve_poisson_spectral(alpha: &Observable, fast: &FastSpec) -> Result<PoissonSolution> {
    let chart = fast.torus()?.clone();
    let gen = fast.torus_generator()?;
    let max_frequency = match alpha.smoothness() {
        Smoothness::TrigPolynomial { max_frequency } => max_frequency,
        Smoothness::Generic => {
            return Err(invalid(
                "spectral solver needs a trigonometric-polynomial observable",
            ));
        }
    };
    let n = TORUS_NODES;
    if max_frequency >= n / 2 {
        return Err(invalid(format!(
            "frequency {max_frequency} exceeds the {n}-node resolution"
        )));
    }
    let mut buf: Vec<Complex<f64>> = (0..n)
        .map(|j| {
            Complex::new(
                alpha.eval(&chart.point(2.0 * PI * j as f64 / n as f64)),
                0.0,
            )
        })
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let coef: Vec<C64> = buf
        .iter()
        .map(|c| C64::new(c.re, c.im) / n as f64)
        .collect();
    if coef[0].norm() > CENTERING_TOL {
        return Err(Error::NotCentered { mean: coef[0].re });
    }
    for (k, c) in coef
        .iter()
        .enumerate()
        .take(n - max_frequency)
        .skip(max_frequency + 1)
    {
        if c.norm() > LEAK_TOL {
            let mode = k.min(n - k);
            return Err(Error::SpectralLeak {
                mode,
                magnitude: c.norm(),
                max_frequency,
            });
        }
    }
    let mut modes: Vec<(f64, C64)> = Vec::new();
    for k in 1..=max_frequency {
        for (freq, c) in [(k as f64, coef[k]), (-(k as f64), coef[n - k])] {
            if c.norm() == 0.0 {
                continue;
            }
            let eigen = C64::new(-0.5 * gen.diffusion * freq * freq, gen.drift * freq);
            if eigen.norm() < 1e-14 {
                return Err(invalid(
                    "fast generator has no diffusion or drift along the torus",
                ));
            }
            modes.push((freq, c / eigen));
        }
    }
    let bound = modes.iter().map(|(_, c)| c.norm()).sum();
    let beta_chart = chart.clone();
    let beta = Observable::new(
        format!("beta[{}]", alpha.name()),
        bound,
        move |z: &GroupElement| {
            let theta = beta_chart.angle(z);
            modes
                .iter()
                .map(|(k, c)| (c * C64::from_polar(1.0, k * theta)).re)
                .sum()
        },
    )
    .with_smoothness(Smoothness::TrigPolynomial { max_frequency });
    let grid: Vec<GroupElement> = (0..n)
        .map(|j| chart.point(2.0 * PI * j as f64 / n as f64))
        .collect();
    let residual_sup = residual_on(alpha, &beta, fast, &grid);
    Ok(PoissonSolution {
        alpha: alpha.clone(),
        beta,
        method: PoissonMethod::Spectral,
        residual_sup,
        ci_half_width: None,
    })
}

fn residual_on(
    alpha: &Observable,
    beta: &Observable,
    fast: &FastSpec,
    grid: &[GroupElement],
) -> f64 {
    let fields: Vec<Mat> = fast
        .diffusion_fields()
        .iter()
        .map(|x| *x.matrix())
        .collect();
    let drift = *fast.drift().matrix();
    grid.iter()
        .map(|z| (generator_fd(beta, z, &fields, &drift, FD_STEP) - alpha.eval(z)).abs())
        .fold(0.0, f64::max)
}

fn validation_grid(fast: &FastSpec) -> Vec<GroupElement> {
    match fast.subgroup() {
        FastGroup::Torus(chart) => (0..VALIDATION_POINTS)
            .map(|j| chart.point(2.0 * PI * j as f64 / VALIDATION_POINTS as f64))
            .collect(),
        _ => {
            let mut rng = RngStream::new(VALIDATION_SEED, block::AUX);
            (0..VALIDATION_POINTS)
                .map(|_| fast.sample_invariant(&mut rng))
                .collect()
        }
    }
}

/// Budget of the Monte-Carlo resolvent.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResolventConfig {
    pub tail_t: f64,
    pub paths: usize,
    pub step: f64,
    pub master_seed: u64,
}

impl Default for ResolventConfig {
    fn default() -> Self {
        Self {
            tail_t: 20.0,
            paths: 100_000,
            step: 0.02,
            master_seed: 1,
        }
    }
}

/// Monte-Carlo resolvent for one observable.
pub fn solve_poisson_mc(
    alpha: &Observable,
    fast: &FastSpec,
    cfg: &ResolventConfig,
) -> Result<PoissonSolution> {
    Ok(solve_poisson_mc_all(std::slice::from_ref(alpha), fast, cfg)?.remove(0))
}

/// Monte-Carlo resolvent for several observables. Adjoint coefficients that
/// share a source reuse one ensemble.
pub fn solve_poisson_mc_all(
    alphas: &[Observable],
    fast: &FastSpec,
    cfg: &ResolventConfig,
) -> Result<Vec<PoissonSolution>> {
    if !(cfg.tail_t > 0.0 && cfg.step > 0.0 && cfg.step <= 0.5) || cfg.paths < 2 {
        return Err(invalid(
            "resolvent needs tail_T > 0, 0 < step ≤ 0.5 and at least two paths",
        ));
    }
    for a in alphas {
        let c = centering_check(a, fast);
        if !c.centered {
            return Err(Error::NotCentered { mean: c.mean });
        }
    }
    let grid = validation_grid(fast);
    let mut cache: HashMap<Vec<u64>, Arc<AdjointResolvent>> = HashMap::new();
    let mut out = Vec::with_capacity(alphas.len());
    for alpha in alphas {
        let sol = match alpha.structure() {
            Structure::Adjoint {
                spec,
                source,
                target,
            } => {
                let key: Vec<u64> = source
                    .entries()
                    .flat_map(|c| [c.re.to_bits(), c.im.to_bits()])
                    .collect();
                let res = match cache.get(&key) {
                    Some(r) => r.clone(),
                    None => {
                        let r = Arc::new(AdjointResolvent::run(fast, spec, source, cfg));
                        cache.insert(key, r.clone());
                        r
                    }
                };
                let b = from_coords(spec, &res.mean);
                let beta = Observable::adjoint_coefficient(
                    &AlgebraVector::from_matrix_unchecked(*spec, b.scale(-1.0)),
                    &AlgebraVector::from_matrix_unchecked(*spec, *target),
                )
                .with_name(format!("beta[{}]", alpha.name()));
                let half = grid
                    .iter()
                    .map(|x| {
                        // v_i = ⟨Ad(x) e_i, target⟩
                        let basis = spec.basis();
                        let v = DVector::from_iterator(
                            basis.len(),
                            basis.iter().map(|e| {
                                let m = x.matrix();
                                spec.inner_mat(&(*m * *e.matrix() * m.adjoint()), target)
                            }),
                        );
                        1.96 * (v.transpose() * &res.cov_of_mean * &v)[(0, 0)]
                            .max(0.0)
                            .sqrt()
                    })
                    .fold(0.0, f64::max);
                let scale = grid
                    .iter()
                    .map(|z| alpha.eval(z).abs())
                    .fold(0.0, f64::max)
                    .max(1e-300);
                let residual_sup = residual_on(alpha, &beta, fast, &grid) / scale;
                PoissonSolution {
                    alpha: alpha.clone(),
                    beta,
                    method: PoissonMethod::MonteCarloResolvent,
                    residual_sup,
                    ci_half_width: Some(half),
                }
            }
            _ => opaque_resolvent(alpha, fast, cfg, &grid),
        };
        out.push(sol);
    }
    Ok(out)
}

/// Ensemble statistics for `B = ∫_0^T Ad(w_t) S dt` with the control variate.
struct AdjointResolvent {
    /// Estimate of `E B` in basis coordinates.
    mean: DVector<f64>,
    cov_of_mean: DMatrix<f64>,
}

impl AdjointResolvent {
    fn run(fast: &FastSpec, spec: &GroupSpec, source: &Mat, cfg: &ResolventConfig) -> Self {
        let steps = step_count(cfg.tail_t, cfg.step);
        let h = cfg.tail_t / steps as f64;
        // exact one-step drift of Ad(w)S for the discrete chain
        let one_step = one_step_adjoint_mean(fast, h, source) - *source;
        let basis = spec.basis();
        let d = basis.len();
        let to_coords = |m: &Mat| -> Vec<f64> {
            basis
                .iter()
                .map(|b| spec.inner_mat(b.matrix(), m))
                .collect()
        };
        let samples = par_map(cfg.paths, |p| {
            let mut rng = RngStream::new(cfg.master_seed, block::RESOLVENT + p as u64);
            let mut w = Mat::identity(spec.n());
            let mut ad = *source;
            let mut integral = ad.scale(0.5 * h);
            let mut compensator = one_step;
            for k in 1..=steps {
                w = fast.advance(&w, h.sqrt(), h, &mut rng);
                ad = w * *source * w.adjoint();
                let weight = if k == steps { 0.5 * h } else { h };
                integral.axpy(weight, &ad);
                if k < steps {
                    compensator += w * one_step * w.adjoint();
                }
            }
            let martingale = ad - *source - compensator;
            (to_coords(&integral), to_coords(&martingale))
        });
        let n = samples.len() as f64;
        let mut mj = DVector::zeros(d);
        let mut mk = DVector::zeros(d);
        for (j, k) in &samples {
            mj += DVector::from_column_slice(j);
            mk += DVector::from_column_slice(k);
        }
        mj /= n;
        mk /= n;
        let mut cjk = DMatrix::zeros(d, d);
        let mut ckk = DMatrix::zeros(d, d);
        for (j, k) in &samples {
            let dj = DVector::from_column_slice(j) - &mj;
            let dk = DVector::from_column_slice(k) - &mk;
            cjk += &dj * dk.transpose();
            ckk += &dk * dk.transpose();
        }
        cjk /= n - 1.0;
        ckk /= n - 1.0;
        let gamma = &cjk
            * ckk
                .clone()
                .pseudo_inverse(1e-12 * ckk.amax().max(1e-300))
                .unwrap_or(DMatrix::zeros(d, d));
        let mean = &mj - &gamma * &mk;
        let mut cov = DMatrix::zeros(d, d);
        for (j, k) in &samples {
            let r = DVector::from_column_slice(j) - &gamma * DVector::from_column_slice(k) - &mean;
            cov += &r * r.transpose();
        }
        cov /= (n - 1.0) * n;
        Self {
            mean,
            cov_of_mean: cov,
        }
    }
}

/// `E[Ad(exp(√h Σ ξ_k X_k + h X_0)) S]` by tensor Gauss–Hermite quadrature.
pub(crate) fn one_step_adjoint_mean(fast: &FastSpec, h: f64, source: &Mat) -> Mat {
    let spec = fast.group();
    let fields: Vec<Mat> = fast
        .diffusion_fields()
        .iter()
        .map(|x| *x.matrix())
        .collect();
    let drift = fast.drift().matrix().scale(h);
    let m = fields.len();
    if m == 0 {
        let g = exp_mat(spec, &drift);
        return g * *source * g.adjoint();
    }
    let q = if m <= 4 {
        12
    } else {
        ((1e6f64).powf(1.0 / m as f64).floor() as usize).max(6)
    };
    let (nodes, weights) = gauss_hermite(q);
    let total = q.pow(m as u32);
    let mut acc = Mat::zeros(spec.n());
    for idx in 0..total {
        let mut rem = idx;
        let mut inc = drift;
        let mut w = 1.0;
        for x in &fields {
            let k = rem % q;
            rem /= q;
            inc.axpy(h.sqrt() * nodes[k], x);
            w *= weights[k];
        }
        let g = exp_mat(spec, &inc);
        acc.axpy(w, &(g * *source * g.adjoint()));
    }
    acc
}

/// Nodes and weights for `E f(ξ)`, `ξ ~ N(0, 1)` (Golub–Welsch).
fn gauss_hermite(q: usize) -> (Vec<f64>, Vec<f64>) {
    let jac = DMatrix::from_fn(q, q, |i, j| {
        if i + 1 == j || j + 1 == i {
            (i.max(j) as f64).sqrt()
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..q)
        .map(|k| (eig.eigenvalues[k], eig.eigenvectors[(0, k)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// Plain Monte-Carlo resolvent for an observable without algebraic form;
/// β is evaluated lazily per query point and memoized.
type EstimateCache = HashMap<Vec<u64>, (f64, f64)>;

fn opaque_resolvent(
    alpha: &Observable,
    fast: &FastSpec,
    cfg: &ResolventConfig,
    grid: &[GroupElement],
) -> PoissonSolution {
    let steps = step_count(cfg.tail_t, cfg.step);
    let h = cfg.tail_t / steps as f64;
    let fast1 = fast.clone();
    let f = alpha.clone();
    let cfg = *cfg;
    let estimate = move |x: &GroupElement| -> (f64, f64) {
        let vals = par_map(cfg.paths, |p| {
            let mut rng = RngStream::new(cfg.master_seed, block::RESOLVENT + p as u64);
            let mut z = *x.matrix();
            let mut prev = f.eval(x);
            let mut integral = 0.0;
            for _ in 0..steps {
                z = fast1.advance(&z, h.sqrt(), h, &mut rng);
                let cur = f.eval(&GroupElement::from_matrix_unchecked(*x.spec(), z));
                integral += 0.5 * h * (prev + cur);
                prev = cur;
            }
            -integral
        });
        let m = crate::stats::MeanEstimate::from_samples(&vals);
        (m.mean, m.std_error)
    };
    // matrix bits -> (mean, std error)
    let memo: Arc<Mutex<EstimateCache>> = Arc::new(Mutex::new(HashMap::new()));
    let lookup = {
        let memo = memo.clone();
        move |x: &GroupElement| -> (f64, f64) {
            let key: Vec<u64> = x
                .matrix()
                .entries()
                .flat_map(|c| [c.re.to_bits(), c.im.to_bits()])
                .collect();
            if let Some(v) = memo.lock().expect("memo lock").get(&key) {
                return *v;
            }
            let v = estimate(x);
            memo.lock().expect("memo lock").insert(key, v);
            v
        }
    };
    let half = grid.iter().map(|x| 1.96 * lookup(x).1).fold(0.0, f64::max);
    let bound = alpha.bound() * cfg.tail_t;
    let beta = Observable::new(format!("beta[{}]", alpha.name()), bound, move |x| {
        lookup(x).0
    });
    PoissonSolution {
        alpha: alpha.clone(),
        beta,
        method: PoissonMethod::MonteCarloResolvent,
        residual_sup: f64::NAN,
        ci_half_width: Some(half),
    }
}

/// Averaged coefficients and the diffusion square root.
#[derive(Clone, Debug, PartialEq)]
pub struct AveragedModel {
    pub a_bar: DMatrix<f64>,
    pub a_sym: DMatrix<f64>,
    pub a_anti: DMatrix<f64>,
    /// Symmetric square root: `σσᵀ = −a_sym`.
    pub sigma: DMatrix<f64>,
    /// Quadrature refinement difference, or the largest Monte-Carlo SE.
    pub quadrature_error: f64,
}

impl AveragedModel {
    /// Builds the split and the square root from a given `ā`.
    pub fn from_a_bar(a_bar: DMatrix<f64>, quadrature_error: f64) -> Result<Self> {
        if !a_bar.is_square() {
            return Err(invalid("averaged matrix must be square"));
        }
        let a_sym = (&a_bar + a_bar.transpose()) * 0.5;
        let a_anti = (&a_bar - a_bar.transpose()) * 0.5;
        let sigma = psd_sqrt(&(-&a_sym))?;
        Ok(Self {
            a_bar,
            a_sym,
            a_anti,
            sigma,
            quadrature_error,
        })
    }

    pub fn dim(&self) -> usize {
        self.a_bar.nrows()
    }
}

/// Symmetric square root of a PSD matrix, clamping tiny negative eigenvalues.
pub fn psd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let k = m.nrows();
    if k == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(m.clone());
    let mut d = DMatrix::zeros(k, k);
    for (i, mu) in eig.eigenvalues.iter().enumerate() {
        if *mu < -PSD_TOL {
            return Err(Error::NotPsd { eigenvalue: *mu });
        }
        d[(i, i)] = mu.max(0.0).sqrt();
    }
    Ok(&eig.eigenvectors * d * eig.eigenvectors.transpose())
}

/// `ā_ij = mean(α_i β_j)` under the invariant measure of the fast subgroup.
pub fn averaged_matrix(
    alphas: &[Observable],
    betas: &[Observable],
    fast: &FastSpec,
) -> Result<AveragedModel> {
    let k = alphas.len();
    if betas.len() != k || k == 0 {
        return Err(invalid("need matching nonempty lists of α and β"));
    }
    for a in alphas {
        let c = centering_check(a, fast);
        if !c.centered {
            return Err(Error::NotCentered { mean: c.mean });
        }
    }
    let (a_bar, err) = match fast.subgroup() {
        FastGroup::Torus(chart) => {
            let rule = |nodes: usize| {
                let mut acc = DMatrix::zeros(k, k);
                for j in 0..nodes {
                    let z = chart.point(2.0 * PI * j as f64 / nodes as f64);
                    let av: Vec<f64> = alphas.iter().map(|a| a.eval(&z)).collect();
                    let bv: Vec<f64> = betas.iter().map(|b| b.eval(&z)).collect();
                    for r in 0..k {
                        for c in 0..k {
                            acc[(r, c)] += av[r] * bv[c];
                        }
                    }
                }
                acc / nodes as f64
            };
            let fine = rule(TORUS_NODES);
            let coarse = rule(TORUS_NODES / 2);
            let err = (&fine - coarse).amax();
            (fine, err)
        }
        FastGroup::Trivial => {
            let z = GroupElement::identity(*fast.group());
            (
                DMatrix::from_fn(k, k, |r, c| alphas[r].eval(&z) * betas[c].eval(&z)),
                0.0,
            )
        }
        _ if all_adjoint(alphas) && all_adjoint(betas) => {
            (exact_adjoint_average(alphas, betas, fast), 0.0)
        }
        _ => haar_mc_average(alphas, betas, fast),
    };
    AveragedModel::from_a_bar(a_bar, err)
}

fn all_adjoint(fs: &[Observable]) -> bool {
    fs.iter()
        .all(|f| matches!(f.structure(), Structure::Adjoint { .. }))
}

fn adjoint_parts(f: &Observable) -> (GroupSpec, Mat, Mat) {
    match f.structure() {
        Structure::Adjoint {
            spec,
            source,
            target,
        } => (*spec, *source, *target),
        _ => unreachable!("checked by all_adjoint"),
    }
}

fn exact_adjoint_average(
    alphas: &[Observable],
    betas: &[Observable],
    fast: &FastSpec,
) -> DMatrix<f64> {
    let proj = InvariantProjector::new(fast);
    let k = alphas.len();
    DMatrix::from_fn(k, k, |r, c| {
        let (spec, sa, ta) = adjoint_parts(&alphas[r]);
        let (_, sb, tb) = adjoint_parts(&betas[c]);
        let outer = proj.project_outer(&coords(&spec, &sa), &coords(&spec, &sb));
        (coords(&spec, &ta).transpose() * outer * coords(&spec, &tb))[(0, 0)]
    })
}

fn haar_mc_average(
    alphas: &[Observable],
    betas: &[Observable],
    fast: &FastSpec,
) -> (DMatrix<f64>, f64) {
    let k = alphas.len();
    let chunks = 64;
    let total = crate::fast::HAAR_MC_SAMPLES;
    let per = total / chunks;
    let parts = par_map(chunks, |c| {
        let mut rng = RngStream::new(VALIDATION_SEED, block::HAAR + c as u64);
        let mut s1 = DMatrix::zeros(k, k);
        let mut s2 = DMatrix::zeros(k, k);
        for _ in 0..per {
            let z = fast.sample_invariant(&mut rng);
            let av: Vec<f64> = alphas.iter().map(|a| a.eval(&z)).collect();
            let bv: Vec<f64> = betas.iter().map(|b| b.eval(&z)).collect();
            for r in 0..k {
                for col in 0..k {
                    let v = av[r] * bv[col];
                    s1[(r, col)] += v;
                    s2[(r, col)] += v * v;
                }
            }
        }
        (s1, s2)
    });
    let n = (per * chunks) as f64;
    let (mut s1, mut s2) = (DMatrix::zeros(k, k), DMatrix::zeros(k, k));
    for (a, b) in parts {
        s1 += a;
        s2 += b;
    }
    let mean = s1 / n;
    let var = s2 / n - mean.component_mul(&mean);
    let se = var.map(|v| (v.max(0.0) / n).sqrt()).amax();
    (mean, se)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::pauli;

    fn hopf_fast() -> FastSpec {
        FastSpec::new(GroupSpec::su(2), vec![pauli()[0]], None, 1.0).unwrap()
    }

    fn hopf_alphas(fast: &FastSpec) -> Vec<Observable> {
        let [_, x2, x3] = pauli();
        adjoint_alpha(&x2, &[x2, x3], fast).unwrap()
    }

    #[test]
    fn hopf_alphas_are_double_angle_harmonics() {
        let fast = hopf_fast();
        let alphas = hopf_alphas(&fast);
        let chart = fast.torus().unwrap();
        assert_eq!(
            alphas[0].smoothness(),
            Smoothness::TrigPolynomial { max_frequency: 2 }
        );
        for j in 0..64 {
            let theta = 2.0 * PI * j as f64 / 64.0;
            let z = chart.point(theta);
            assert!((alphas[0].eval(&z) - (2.0 * theta).cos()).abs() < 1e-14);
            assert!((alphas[1].eval(&z) - (2.0 * theta).sin()).abs() < 1e-14);
        }
        let id = GroupElement::identity(GroupSpec::su(2));
        assert_eq!((alphas[0].eval(&id), alphas[1].eval(&id)), (1.0, 0.0));
    }

    #[test]
    fn centering_verdicts() {
        let fast = hopf_fast();
        for a in hopf_alphas(&fast) {
            assert!(centering_check(&a, &fast).centered);
        }
        let one = Observable::constant(1.0);
        let r = centering_check(&one, &fast);
        assert!(!r.centered && (r.mean - 1.0).abs() < 1e-15);
    }

    #[test]
    fn spectral_solution_of_cos_two_theta() {
        let fast = hopf_fast();
        let alphas = hopf_alphas(&fast);
        let sol = solve_poisson_spectral(&alphas[0], &fast).unwrap();
        assert!(sol.residual_sup <= 1e-6, "residual {}", sol.residual_sup);
        let chart = fast.torus().unwrap();
        for j in 0..32 {
            let theta = 2.0 * PI * j as f64 / 32.0 + 0.05;
            let z = chart.point(theta);
            assert!((sol.beta.eval(&z) + 0.5 * (2.0 * theta).cos()).abs() < 1e-12);
        }
        let zero = Observable::constant(0.0);
        let z = solve_poisson_spectral(&zero, &fast).unwrap();
        assert_eq!(z.beta.eval(&chart.point(1.0)), 0.0);
    }

    #[test]
    fn spectral_rejects_bad_inputs() {
        let fast = hopf_fast();
        assert!(matches!(
            solve_poisson_spectral(&Observable::constant(1.0), &fast),
            Err(Error::NotCentered { .. })
        ));
        // declared frequency 1 but the content is at frequency 2
        let a = hopf_alphas(&fast)[0]
            .clone()
            .with_smoothness(Smoothness::TrigPolynomial { max_frequency: 1 });
        assert!(matches!(
            solve_poisson_spectral(&a, &fast),
            Err(Error::SpectralLeak { mode: 2, .. })
        ));
        let [_, x2, x3] = pauli();
        let whole = FastSpec::new(GroupSpec::su(2), vec![x2, x3], None, 1.0).unwrap();
        assert!(matches!(
            solve_poisson_spectral(&hopf_alphas(&hopf_fast())[0], &whole),
            Err(Error::NotTorus)
        ));
    }

    #[test]
    fn spectral_residual_for_high_frequency_polynomials() {
        let fast = hopf_fast();
        let chart = fast.torus().unwrap().clone();
        for k in [1usize, 7, 33, 64] {
            let ch = chart.clone();
            let f = Observable::new("harmonic", 1.0, move |z| {
                let t = ch.angle(z);
                0.6 * (k as f64 * t).cos() - 0.3 * (k as f64 * t).sin()
            })
            .with_smoothness(Smoothness::TrigPolynomial { max_frequency: 64 });
            let sol = solve_poisson_spectral(&f, &fast).unwrap();
            assert!(sol.residual_sup <= 1e-6, "k = {k}: {}", sol.residual_sup);
        }
    }

    #[test]
    fn hopf_averaged_matrix() {
        let fast = hopf_fast();
        let alphas = hopf_alphas(&fast);
        let betas: Vec<Observable> = alphas
            .iter()
            .map(|a| solve_poisson_spectral(a, &fast).unwrap().beta)
            .collect();
        let model = averaged_matrix(&alphas, &betas, &fast).unwrap();
        assert!((model.a_bar[(0, 0)] + 0.25).abs() < 1e-12);
        assert!((model.a_bar[(1, 1)] + 0.25).abs() < 1e-12);
        assert!(model.a_bar[(0, 1)].abs() < 1e-12 && model.a_bar[(1, 0)].abs() < 1e-12);
        let check = &model.sigma * model.sigma.transpose() + &model.a_sym;
        assert!(check.amax() < 1e-12);
    }

    #[test]
    fn psd_violations_are_reported() {
        let bad = DMatrix::from_row_slice(2, 2, &[0.3, 0.0, 0.0, -0.1]);
        assert!(matches!(
            AveragedModel::from_a_bar(bad, 0.0),
            Err(Error::NotPsd { .. })
        ));
        let tiny = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 5e-9]);
        let m = AveragedModel::from_a_bar(tiny, 0.0).unwrap();
        assert!(m.sigma[(1, 1)].abs() < 1e-15);
    }

    #[test]
    fn gauss_hermite_reproduces_gaussian_moments() {
        let (x, w) = gauss_hermite(12);
        let moment = |p: i32| x.iter().zip(&w).map(|(a, b)| b * a.powi(p)).sum::<f64>();
        assert!((moment(0) - 1.0).abs() < 1e-13);
        assert!((moment(2) - 1.0).abs() < 1e-12);
        assert!((moment(4) - 3.0).abs() < 1e-11);
        assert!((moment(8) - 105.0).abs() < 1e-9);
    }

    #[test]
    fn one_step_mean_matches_closed_form_for_one_field() {
        // E Ad(exp(√h ξ X1)) X2 = exp(h/2·ad²) X2 = e^{−2h} X2
        let fast = hopf_fast();
        let x2 = pauli()[1];
        let h = 0.05;
        let got = one_step_adjoint_mean(&fast, h, x2.matrix());
        assert!((got - x2.matrix().scale((-2.0 * h).exp())).max_abs() < 1e-13);
    }

    #[test]
    fn invariant_projection_matches_haar_monte_carlo() {
        let so4 = GroupSpec::so(4);
        let fast = FastSpec::new(
            so4,
            vec![so4.so_generator(1, 2), so4.so_generator(1, 3)],
            None,
            1.0,
        )
        .unwrap();
        let m: Vec<AlgebraVector> = (1..=3).map(|k| so4.so_generator(k, 4)).collect();
        let src = so4.so_generator(1, 4) + so4.so_generator(2, 3).scale(0.5);
        let alphas = adjoint_alpha(&src, &m, &fast);
        // source has a component outside m: adjoint_alpha still builds coefficients
        let alphas = alphas.unwrap();
        let exact = exact_adjoint_average(&alphas, &alphas, &fast);
        let (mc, se) = haar_mc_average(&alphas, &alphas, &fast);
        assert!((exact - mc).amax() < 5.0 * se + 1e-12);
        // Haar mean of R_j1² is 1/3
        assert!(
            (exact_adjoint_average(&alphas[..1], &alphas[..1], &fast)[(0, 0)] - 1.0 / 3.0).abs()
                < 1e-12
        );
    }

    #[test]
    fn mc_resolvent_tracks_spectral_on_hopf() {
        let fast = hopf_fast();
        let alphas = hopf_alphas(&fast);
        let cfg = ResolventConfig {
            tail_t: 10.0,
            paths: 4000,
            step: 0.02,
            master_seed: 3,
        };
        let mc = solve_poisson_mc_all(&alphas, &fast, &cfg).unwrap();
        let chart = fast.torus().unwrap();
        for (a, sol) in alphas.iter().zip(&mc) {
            let sp = solve_poisson_spectral(a, &fast).unwrap();
            let mut worst: f64 = 0.0;
            for j in 0..16 {
                let z = chart.point(2.0 * PI * j as f64 / 16.0);
                worst = worst.max((sol.beta.eval(&z) - sp.beta.eval(&z)).abs());
            }
            assert!(worst / 0.5 < 0.02, "relative sup error {}", worst / 0.5);
            assert!(sol.residual_sup < 0.05);
        }
    }

    #[test]
    fn opaque_resolvent_agrees_in_sign_and_size() {
        let fast = hopf_fast();
        let chart = fast.torus().unwrap().clone();
        let ch = chart.clone();
        let f = Observable::new("cos2", 1.0, move |z| (2.0 * ch.angle(z)).cos());
        let cfg = ResolventConfig {
            tail_t: 8.0,
            paths: 2000,
            step: 0.05,
            master_seed: 4,
        };
        let sol = solve_poisson_mc(&f, &fast, &cfg).unwrap();
        let z = chart.point(0.0);
        let b = sol.beta.eval(&z);
        assert!(
            (b + 0.5).abs() < 4.0 * sol.ci_half_width.unwrap() / 1.96 + 0.01,
            "β(0) = {b}"
        );
        // memoized: repeated evaluation is identical
        assert_eq!(sol.beta.eval(&z), b);
    }
}
