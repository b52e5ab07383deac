//! The fast diffusion `dz = ε^{-1/2} Σ X_k(z) ∘ dW^k + ε^{-1} X_0(z) dt`.
//!
//! Steps are geodesic: `z ← z·exp(√(h/ε) Σ ξ_k X_k + (h/ε) X_0)`. The fast
//! process lives on the closed subgroup generated by the fields, which is
//! recognised as a torus, a leading diagonal block or the whole group. That
//! subgroup carries the invariant measure used for averaging.

use std::f64::consts::PI;

use nalgebra::SymmetricEigen;

use crate::error::{invalid, Error, Result};
use crate::geometry::{exp_mat, haar_sample, AlgebraVector, GroupElement, GroupFamily, GroupSpec};
use crate::linalg::{Mat, C64, MAX_DIM};
use crate::observable::Observable;
use crate::parallel::par_map;
use crate::rng::{block, RngStream};
use crate::stats::ols;

/// Fast steps must resolve the O(ε) correlation time.
pub const MAX_STEP_RATIO: f64 = 0.5;
/// Nodes of the trapezoidal rule on torus subgroups.
pub const TORUS_NODES: usize = 512;
/// Haar Monte-Carlo sample count for non-abelian fast groups.
pub const HAAR_MC_SAMPLES: usize = 1_000_000;
/// Rank tolerance of the bracket closure.
pub const RANK_TOL: f64 = 1e-8;
/// Deepest bracket level explored.
pub const MAX_BRACKET_DEPTH: usize = 8;

/// Seed of the fixed Haar Monte-Carlo stream used for invariant means.
const HAAR_MEAN_SEED: u64 = 0x005e_ed0f_4aa2;

/// The closed subgroup on which the fast process moves.
#[derive(Clone, Debug, PartialEq)]
pub enum FastGroup {
    /// No motion at all.
    Trivial,
    /// `θ ↦ exp(θ·period/(2π)·generator)`, `generator` of unit norm.
    Torus(TorusChart),
    /// SO(k) or SU(k) in the leading diagonal block.
    Block {
        size: usize,
    },
    Whole,
}

/// Angle coordinate on a one-parameter closed subgroup.
#[derive(Clone, Debug, PartialEq)]
pub struct TorusChart {
    spec: GroupSpec,
    generator: Mat,
    period: f64,
    // eigenvector of −i·generator for the smallest nonzero |λ|
    probe: [C64; MAX_DIM],
    probe_lambda: f64,
    windings: usize,
}

impl TorusChart {
    fn new(generator: &AlgebraVector) -> Result<Self> {
        let spec = *generator.spec();
        let u = generator.scale(1.0 / generator.norm());
        let n = spec.n();
        let herm = u.matrix().scale_c(C64::new(0.0, -1.0)).to_nalgebra();
        let eig = SymmetricEigen::new(herm);
        let lambdas: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        let (idx, lmin) = lambdas
            .iter()
            .enumerate()
            .filter(|(_, l)| l.abs() > 1e-9)
            .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map(|(i, l)| (i, *l))
            .ok_or_else(|| invalid("torus generator is zero"))?;
        let base = 2.0 * PI / lmin.abs();
        let mut windings = None;
        for m in 1..=64 {
            let p = base * m as f64;
            let ok = lambdas.iter().all(|l| {
                let k = p * l / (2.0 * PI);
                (k - k.round()).abs() < 1e-9
            });
            if ok {
                windings = Some(m);
                break;
            }
        }
        let windings = windings.ok_or_else(|| invalid("one-parameter subgroup is not closed"))?;
        let mut probe = [C64::new(0.0, 0.0); MAX_DIM];
        for (i, p) in probe.iter_mut().enumerate().take(n) {
            *p = eig.eigenvectors[(i, idx)];
        }
        Ok(Self {
            spec,
            generator: *u.matrix(),
            period: base * windings as f64,
            probe,
            probe_lambda: lmin,
            windings,
        })
    }

    /// Unit-norm generator.
    pub fn generator(&self) -> &Mat {
        &self.generator
    }

    /// Smallest `P > 0` with `exp(P·generator) = I`.
    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn point(&self, theta: f64) -> GroupElement {
        let t = theta * self.period / (2.0 * PI);
        GroupElement::from_matrix_unchecked(
            self.spec,
            exp_mat(&self.spec, &self.generator.scale(t)),
        )
    }

    /// Angle in `[0, 2π)` of a point on the torus.
    pub fn angle(&self, z: &GroupElement) -> f64 {
        let m = z.matrix();
        let n = self.spec.n();
        let mut w = C64::new(0.0, 0.0);
        for i in 0..n {
            let mut row = C64::new(0.0, 0.0);
            for j in 0..n {
                row += m[(i, j)] * self.probe[j];
            }
            w += self.probe[i].conj() * row;
        }
        let base = 2.0 * PI / self.probe_lambda.abs();
        let t0 = (w.arg() / self.probe_lambda).rem_euclid(base);
        let t = if self.windings == 1 {
            t0
        } else {
            (0..self.windings)
                .map(|j| t0 + j as f64 * base)
                .min_by(|a, b| {
                    let da = (exp_mat(&self.spec, &self.generator.scale(*a)) - *m).max_abs();
                    let db = (exp_mat(&self.spec, &self.generator.scale(*b)) - *m).max_abs();
                    da.total_cmp(&db)
                })
                .unwrap_or(t0)
        };
        (2.0 * PI * t / self.period).rem_euclid(2.0 * PI)
    }
}

/// `L_0 = (c/2) ∂_θ² + b ∂_θ` in the torus angle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TorusGenerator {
    pub diffusion: f64,
    pub drift: f64,
}

#[derive(Clone, Debug)]
pub struct FastSpec {
    group: GroupSpec,
    subgroup: FastGroup,
    diffusion_fields: Vec<AlgebraVector>,
    drift: AlgebraVector,
    epsilon: f64,
}

impl FastSpec {
    /// Validates the fields and recognises the generated subgroup.
    pub fn new(
        group: GroupSpec,
        diffusion_fields: Vec<AlgebraVector>,
        drift: Option<AlgebraVector>,
        epsilon: f64,
    ) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(invalid(format!("epsilon = {epsilon} outside (0, 1]")));
        }
        let drift = drift.unwrap_or_else(|| AlgebraVector::zero(group));
        for x in diffusion_fields.iter().chain(std::iter::once(&drift)) {
            if *x.spec() != group {
                return Err(Error::SpecMismatch);
            }
            AlgebraVector::from_matrix(group, *x.matrix())?;
        }
        let subgroup = recognise_subgroup(group, &diffusion_fields, &drift)?;
        Ok(Self {
            group,
            subgroup,
            diffusion_fields,
            drift,
            epsilon,
        })
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(invalid(format!("epsilon = {epsilon} outside (0, 1]")));
        }
        let mut out = self.clone();
        out.epsilon = epsilon;
        Ok(out)
    }

    pub fn group(&self) -> &GroupSpec {
        &self.group
    }

    pub fn subgroup(&self) -> &FastGroup {
        &self.subgroup
    }

    pub fn diffusion_fields(&self) -> &[AlgebraVector] {
        &self.diffusion_fields
    }

    pub fn drift(&self) -> &AlgebraVector {
        &self.drift
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Dimension of the fast subgroup.
    pub fn subgroup_dim(&self) -> usize {
        match &self.subgroup {
            FastGroup::Trivial => 0,
            FastGroup::Torus(_) => 1,
            FastGroup::Block { size } => match self.group.family() {
                GroupFamily::SpecialOrthogonal(_) => size * (size - 1) / 2,
                GroupFamily::SpecialUnitary(_) => size * size - 1,
            },
            FastGroup::Whole => self.group.algebra_dim(),
        }
    }

    pub fn torus(&self) -> Result<&TorusChart> {
        match &self.subgroup {
            FastGroup::Torus(chart) => Ok(chart),
            _ => Err(Error::NotTorus),
        }
    }

    pub fn torus_generator(&self) -> Result<TorusGenerator> {
        let chart = self.torus()?;
        let scale = 2.0 * PI / chart.period;
        let coef = |x: &AlgebraVector| self.group.inner_mat(x.matrix(), &chart.generator);
        let diffusion = self
            .diffusion_fields
            .iter()
            .map(|x| coef(x).powi(2))
            .sum::<f64>()
            * scale
            * scale;
        Ok(TorusGenerator {
            diffusion,
            drift: coef(&self.drift) * scale,
        })
    }

    /// Strong Hörmander condition inside the fast subgroup.
    pub fn hormander(&self) -> HormanderReport {
        hormander_closure(
            &self.group,
            &self.diffusion_fields,
            Some(&self.drift).filter(|d| !d.is_zero()),
            self.subgroup_dim(),
        )
    }

    /// A draw from the invariant (Haar) measure of the fast subgroup.
    pub fn sample_invariant(&self, rng: &mut RngStream) -> GroupElement {
        match &self.subgroup {
            FastGroup::Trivial => GroupElement::identity(self.group),
            FastGroup::Torus(chart) => chart.point(2.0 * PI * rng.uniform()),
            FastGroup::Block { size } => {
                let inner = GroupSpec::new(match self.group.family() {
                    GroupFamily::SpecialOrthogonal(_) => GroupFamily::SpecialOrthogonal(*size),
                    GroupFamily::SpecialUnitary(_) => GroupFamily::SpecialUnitary(*size),
                })
                .expect("block size validated at construction");
                let g = haar_sample(inner, rng);
                GroupElement::from_matrix_unchecked(
                    self.group,
                    g.matrix().embed_in_identity(self.group.n()),
                )
            }
            FastGroup::Whole => haar_sample(self.group, rng),
        }
    }

    /// Whether `z` lies on the fast subgroup (to `tol`).
    pub fn contains(&self, z: &GroupElement) -> bool {
        let tol = 1e-9;
        match &self.subgroup {
            FastGroup::Trivial => (*z.matrix() - Mat::identity(self.group.n())).max_abs() < tol,
            FastGroup::Torus(chart) => {
                (*chart.point(chart.angle(z)).matrix() - *z.matrix()).max_abs() < 1e-7
            }
            FastGroup::Block { size } => {
                let m = z.matrix();
                let n = self.group.n();
                (0..n).all(|i| {
                    (0..n).all(|j| {
                        if i < *size && j < *size {
                            true
                        } else {
                            let expect = if i == j { 1.0 } else { 0.0 };
                            (m[(i, j)] - C64::new(expect, 0.0)).norm() < tol
                        }
                    })
                })
            }
            FastGroup::Whole => true,
        }
    }

    /// Invariant mean of `f`: trapezoidal rule on a torus, fixed-seed Haar
    /// Monte Carlo otherwise.
    pub fn invariant_mean(&self, f: &Observable) -> InvariantMean {
        self.invariant_mean_with(f, HAAR_MC_SAMPLES)
    }

    pub fn invariant_mean_with(&self, f: &Observable, samples: usize) -> InvariantMean {
        match &self.subgroup {
            FastGroup::Trivial => InvariantMean {
                mean: f.eval(&GroupElement::identity(self.group)),
                std_error: None,
            },
            FastGroup::Torus(chart) => {
                let s: f64 = (0..TORUS_NODES)
                    .map(|j| f.eval(&chart.point(2.0 * PI * j as f64 / TORUS_NODES as f64)))
                    .sum();
                InvariantMean {
                    mean: s / TORUS_NODES as f64,
                    std_error: None,
                }
            }
            FastGroup::Block { .. } | FastGroup::Whole => {
                let chunks = 64;
                let per = samples.div_ceil(chunks);
                let sums = par_map(chunks, |c| {
                    let mut rng = RngStream::new(HAAR_MEAN_SEED, block::HAAR + c as u64);
                    let take = per.min(samples.saturating_sub(c * per));
                    let (mut s1, mut s2) = (0.0, 0.0);
                    for _ in 0..take {
                        let v = f.eval(&self.sample_invariant(&mut rng));
                        s1 += v;
                        s2 += v * v;
                    }
                    (s1, s2)
                });
                let (s1, s2) = sums.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
                let n = samples as f64;
                let mean = s1 / n;
                let var = (s2 / n - mean * mean).max(0.0) * n / (n - 1.0);
                InvariantMean {
                    mean,
                    std_error: Some((var / n).sqrt()),
                }
            }
        }
    }

    /// Algebra increment of one step; `scale_noise = √(h/ε)`, `scale_drift = h/ε`.
    #[inline]
    pub(crate) fn increment(&self, scale_noise: f64, scale_drift: f64, rng: &mut RngStream) -> Mat {
        let mut inc = self.drift.matrix().scale(scale_drift);
        for x in &self.diffusion_fields {
            inc.axpy(scale_noise * rng.normal(), x.matrix());
        }
        inc
    }

    #[inline]
    pub(crate) fn advance(
        &self,
        z: &Mat,
        scale_noise: f64,
        scale_drift: f64,
        rng: &mut RngStream,
    ) -> Mat {
        if self.diffusion_fields.is_empty() && self.drift.is_zero() {
            return *z;
        }
        let inc = self.increment(scale_noise, scale_drift, rng);
        *z * exp_mat(&self.group, &inc)
    }

    pub(crate) fn check_step(&self, h: f64) -> Result<()> {
        let limit = MAX_STEP_RATIO * self.epsilon;
        if !(h > 0.0) || h > limit * (1.0 + 1e-12) {
            return Err(Error::StepTooLarge { step: h, limit });
        }
        Ok(())
    }
}

/// Mean under the invariant measure; `std_error` is `None` for quadrature.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InvariantMean {
    pub mean: f64,
    pub std_error: Option<f64>,
}

fn recognise_subgroup(
    group: GroupSpec,
    fields: &[AlgebraVector],
    drift: &AlgebraVector,
) -> Result<FastGroup> {
    let mut gens: Vec<Mat> = fields.iter().map(|x| *x.matrix()).collect();
    if !drift.is_zero() {
        gens.push(*drift.matrix());
    }
    let closure = bracket_closure(&group, &gens, &gens);
    match closure.dim {
        0 => Ok(FastGroup::Trivial),
        1 => {
            let u = AlgebraVector::from_matrix_unchecked(group, closure.basis[0]);
            Ok(FastGroup::Torus(TorusChart::new(&u)?))
        }
        d if d == group.algebra_dim() => Ok(FastGroup::Whole),
        d => {
            let size = closure
                .basis
                .iter()
                .map(|b| b.support_size())
                .max()
                .unwrap_or(0);
            let block_dim = match group.family() {
                GroupFamily::SpecialOrthogonal(_) => size * (size - 1) / 2,
                GroupFamily::SpecialUnitary(_) => size * size - 1,
            };
            if d == block_dim {
                Ok(FastGroup::Block { size })
            } else {
                Err(invalid(format!(
                    "fast fields generate a {d}-dimensional subgroup that is neither a torus nor a leading block"
                )))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HormanderReport {
    pub satisfied: bool,
    pub generated_dim: usize,
    pub required_dim: usize,
    /// Dimension of the weak closure (brackets with the drift allowed).
    pub weak_dim: Option<usize>,
    /// Bracket level at which the span stopped growing.
    pub depth: usize,
}

/// Strong Hörmander test against the full algebra of the fields' group.
pub fn hormander_check(
    fields: &[AlgebraVector],
    include_drift: Option<&AlgebraVector>,
) -> Result<HormanderReport> {
    let spec = *fields
        .first()
        .ok_or_else(|| invalid("Hörmander check needs at least one field"))?
        .spec();
    if fields.iter().any(|x| *x.spec() != spec) || include_drift.is_some_and(|d| *d.spec() != spec)
    {
        return Err(Error::SpecMismatch);
    }
    Ok(hormander_closure(
        &spec,
        fields,
        include_drift,
        spec.algebra_dim(),
    ))
}

/// Strong Hörmander test against a target dimension (the fast subalgebra).
pub fn hormander_closure(
    spec: &GroupSpec,
    fields: &[AlgebraVector],
    drift: Option<&AlgebraVector>,
    required_dim: usize,
) -> HormanderReport {
    let gens: Vec<Mat> = fields.iter().map(|x| *x.matrix()).collect();
    let strong = bracket_closure(spec, &gens, &gens);
    let weak_dim = drift.map(|d| {
        let mut with_drift = gens.clone();
        with_drift.push(*d.matrix());
        bracket_closure(spec, &gens, &with_drift).dim
    });
    HormanderReport {
        satisfied: strong.dim == required_dim,
        generated_dim: strong.dim,
        required_dim,
        weak_dim,
        depth: strong.depth,
    }
}

struct Closure {
    dim: usize,
    basis: Vec<Mat>,
    depth: usize,
}

/// Span of `seeds` and all right-nested brackets `[Z_1, [Z_2, … [Z_k, s]]]`
/// with `Z_i ∈ actors`, built level by level until the span stagnates.
fn bracket_closure(spec: &GroupSpec, seeds: &[Mat], actors: &[Mat]) -> Closure {
    let mut basis: Vec<Mat> = Vec::new();
    let add = |v: &Mat, basis: &mut Vec<Mat>| -> Option<Mat> {
        let norm = spec.inner_mat(v, v).sqrt();
        if norm < 1e-12 {
            return None;
        }
        let mut r = v.scale(1.0 / norm);
        for _ in 0..2 {
            for b in basis.iter() {
                let c = spec.inner_mat(b, &r);
                r.axpy(-c, b);
            }
        }
        let rn = spec.inner_mat(&r, &r).sqrt();
        if rn > RANK_TOL {
            let u = r.scale(1.0 / rn);
            basis.push(u);
            Some(u)
        } else {
            None
        }
    };
    let mut frontier: Vec<Mat> = seeds.iter().filter_map(|s| add(s, &mut basis)).collect();
    let mut depth = 0;
    while !frontier.is_empty() && depth < MAX_BRACKET_DEPTH && basis.len() < spec.algebra_dim() {
        let mut next = Vec::new();
        for z in actors {
            for w in &frontier {
                if let Some(u) = add(&z.commutator(w), &mut basis) {
                    next.push(u);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        depth += 1;
        frontier = next;
    }
    Closure {
        dim: basis.len(),
        basis,
        depth,
    }
}

/// Number of steps of size `h` covering `[0, t]`; the last one may be short.
pub(crate) fn step_count(t: f64, h: f64) -> usize {
    if t <= 0.0 {
        0
    } else {
        (t / h - 1e-9).ceil().max(1.0) as usize
    }
}

/// One geodesic Euler step of the fast diffusion.
pub fn step_fast(
    z: &GroupElement,
    spec: &FastSpec,
    h: f64,
    rng: &mut RngStream,
) -> Result<GroupElement> {
    spec.check_step(h)?;
    let r = h / spec.epsilon;
    Ok(GroupElement::from_matrix_unchecked(
        spec.group,
        spec.advance(z.matrix(), r.sqrt(), r, rng),
    ))
}

/// Terminal state at physical time `t`.
pub fn simulate_fast(
    z0: &GroupElement,
    spec: &FastSpec,
    t: f64,
    h: f64,
    rng: &mut RngStream,
) -> Result<GroupElement> {
    Ok(*simulate_fast_path(z0, spec, t, h, rng, &[t])?
        .last()
        .unwrap_or(z0))
}

/// States at the requested (sorted) times; each is snapped to the step grid.
pub fn simulate_fast_path(
    z0: &GroupElement,
    spec: &FastSpec,
    t: f64,
    h: f64,
    rng: &mut RngStream,
    record: &[f64],
) -> Result<Vec<GroupElement>> {
    if t > 0.0 {
        spec.check_step(h)?;
    }
    let steps = step_count(t, h);
    let mut z = *z0.matrix();
    let mut out = Vec::with_capacity(record.len());
    let mut next = 0;
    let mut now = 0.0;
    for k in 0..=steps {
        while next < record.len() && record[next] <= now + 1e-9 * h.max(1.0) {
            out.push(GroupElement::from_matrix_unchecked(spec.group, z));
            next += 1;
        }
        if k == steps {
            break;
        }
        let dt = if k + 1 == steps { t - now } else { h };
        let r = dt / spec.epsilon;
        z = spec.advance(&z, r.sqrt(), r, rng);
        now = if k + 1 == steps { t } else { now + h };
    }
    while out.len() < record.len() {
        out.push(GroupElement::from_matrix_unchecked(spec.group, z));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LlnRow {
    pub t: f64,
    pub l2_error: f64,
    pub ci_half_width: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LlnReport {
    pub rows: Vec<LlnRow>,
    pub invariant_mean: f64,
    /// Least-squares slope of log error on log t; `None` when an error is at
    /// roundoff level.
    pub slope: Option<f64>,
}

/// L² error of the time average `(1/t)∫₀ᵗ f(z_s) ds` against the invariant
/// mean, from `paths` independent runs started at `z0`.
pub fn lln_error(
    f: &Observable,
    spec: &FastSpec,
    z0: &GroupElement,
    t_grid: &[f64],
    paths: usize,
    h: f64,
    master_seed: u64,
) -> Result<LlnReport> {
    if t_grid.is_empty() || paths < 2 {
        return Err(invalid(
            "lln_error needs a nonempty time grid and at least two paths",
        ));
    }
    if t_grid.windows(2).any(|w| w[1] <= w[0]) || t_grid[0] <= 0.0 {
        return Err(invalid(
            "time grid must be positive and strictly increasing",
        ));
    }
    let marks: Vec<usize> = t_grid
        .iter()
        .map(|t| {
            let k = (t / h).round();
            if (k * h - t).abs() > 1e-9 * t.max(1.0) {
                Err(invalid(format!(
                    "grid time {t} is not a multiple of the step {h}"
                )))
            } else {
                Ok(k as usize)
            }
        })
        .collect::<Result<_>>()?;
    spec.check_step(h)?;
    let hormander = spec.hormander();
    if !hormander.satisfied {
        return Err(Error::HormanderFails {
            generated: hormander.generated_dim,
            required: hormander.required_dim,
        });
    }
    let fbar = spec.invariant_mean(f).mean;
    let total = *marks.last().unwrap();
    let r = h / spec.epsilon;
    let averages = par_map(paths, |p| {
        let mut rng = RngStream::new(master_seed, block::LLN + p as u64);
        let mut z = *z0.matrix();
        let mut prev = f.eval(z0);
        let mut integral = 0.0;
        let mut out = Vec::with_capacity(marks.len());
        let mut next = 0;
        for k in 1..=total {
            z = spec.advance(&z, r.sqrt(), r, &mut rng);
            let cur = f.eval(&GroupElement::from_matrix_unchecked(spec.group, z));
            integral += 0.5 * h * (prev + cur);
            prev = cur;
            if k == marks[next] {
                out.push(integral / (k as f64 * h) - fbar);
                next += 1;
            }
        }
        out
    });
    let rows: Vec<LlnRow> = t_grid
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let sq: Vec<f64> = averages.iter().map(|a| a[i] * a[i]).collect();
            let est = crate::stats::MeanEstimate::from_samples(&sq);
            let err = est.mean.sqrt();
            let se = if err > 0.0 {
                est.std_error / (2.0 * err)
            } else {
                0.0
            };
            LlnRow {
                t,
                l2_error: err,
                ci_half_width: 1.96 * se,
            }
        })
        .collect();
    let floor = 1e-12 * (1.0 + fbar.abs());
    let slope = if rows.len() >= 2 && rows.iter().all(|r| r.l2_error > floor) {
        let x: Vec<f64> = rows.iter().map(|r| r.t.ln()).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.l2_error.ln()).collect();
        Some(ols(&x, &y).1)
    } else {
        None
    };
    Ok(LlnReport {
        rows,
        invariant_mean: fbar,
        slope,
    })
}
