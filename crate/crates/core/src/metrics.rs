//! Convergence statistics: weak errors, exact empirical Wasserstein-1 on the
//! group, rate regression and a two-sample Kolmogorov–Smirnov test.

use crate::effective::{limit_marginal, semigroup_mc, EffectiveSDE, SemigroupEstimate};
use crate::error::{invalid, Error, Result};
use crate::geometry::{distance, GroupElement, GroupSpec};
use crate::multiscale::{slow_marginal, MultiscaleSystem};
use crate::observable::Observable;
use crate::parallel::par_map;
use crate::rng::{block, RngStream};
use crate::stats::{quantile_sorted, wls, MeanEstimate};

/// Largest ensemble handled by the exact assignment solver.
pub const MAX_EXACT_SIZE: usize = 4096;
/// Bootstrap resamples for the W1 interval.
pub const BOOTSTRAP_RESAMPLES: usize = 200;
/// Subsample size of each bootstrap re-solve.
pub const BOOTSTRAP_SUBSAMPLE: usize = 512;

const RATE_BOOTSTRAP_DRAWS: usize = 2000;
const RATE_BOOTSTRAP_SEED: u64 = 0x00a7_ef17;
const W1_BOOTSTRAP_SEED: u64 = 0xb007_57a9;

/// Where an ensemble came from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Provenance {
    pub master_seed: u64,
    /// First stream id; path `i` used `first_stream + i`.
    pub first_stream: u64,
    pub config_digest: String,
}

/// Terminal states of independent paths, uniformly weighted.
#[derive(Clone, Debug)]
pub struct Ensemble {
    spec: GroupSpec,
    states: Vec<GroupElement>,
    provenance: Provenance,
}

impl Ensemble {
    pub fn new(spec: GroupSpec, states: Vec<GroupElement>, provenance: Provenance) -> Result<Self> {
        if states.is_empty() {
            return Err(invalid("ensemble must be nonempty"));
        }
        if states.iter().any(|g| *g.spec() != spec) {
            return Err(Error::SpecMismatch);
        }
        Ok(Self {
            spec,
            states,
            provenance,
        })
    }

    pub fn spec(&self) -> &GroupSpec {
        &self.spec
    }

    pub fn states(&self) -> &[GroupElement] {
        &self.states
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// Records the digest of the configuration that produced the ensemble.
    pub fn with_digest(mut self, digest: impl Into<String>) -> Self {
        self.provenance.config_digest = digest.into();
        self
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Sample mean and standard error of an observable.
    pub fn mean_of(&self, f: &Observable) -> MeanEstimate {
        let xs: Vec<f64> = self.states.iter().map(|g| f.eval(g)).collect();
        MeanEstimate::from_samples(&xs)
    }
}

/// Minimum-cost perfect matching on a dense square cost matrix
/// (shortest augmenting paths with dual potentials). Returns the column
/// assigned to each row.
pub fn solve_assignment(cost: &[f64], n: usize) -> Vec<usize> {
    assert_eq!(cost.len(), n * n);
    let inf = f64::INFINITY;
    // one-based arrays, index 0 is the virtual root
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![inf; n + 1];
    let mut used = vec![false; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        minv.iter_mut().for_each(|m| *m = inf);
        used.iter_mut().for_each(|m| *m = false);
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let row = &cost[(i0 - 1) * n..i0 * n];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = row[j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        assignment[p[j] - 1] = j - 1;
    }
    assignment
}

fn matched_mean(cost: &[f64], n: usize) -> f64 {
    let a = solve_assignment(cost, n);
    a.iter()
        .enumerate()
        .map(|(i, &j)| cost[i * n + j])
        .sum::<f64>()
        / n as f64
}

fn cost_matrix(a: &Ensemble, b: &Ensemble) -> Vec<f64> {
    let n = a.len();
    let rows = par_map(n, |i| {
        b.states
            .iter()
            .map(|h| distance(&a.states[i], h))
            .collect::<Vec<f64>>()
    });
    rows.into_iter().flatten().collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct W1Estimate {
    pub w1: f64,
    pub ci: (f64, f64),
    /// Pairs whose distance fell back to a chordal bound. The geodesic
    /// distance here is total, so this stays zero.
    pub chordal_fallbacks: usize,
}

/// Exact empirical W1 under the geodesic distance, without an interval.
pub fn wasserstein1_exact(a: &Ensemble, b: &Ensemble) -> Result<f64> {
    check_pair(a, b)?;
    Ok(matched_mean(&cost_matrix(a, b), a.len()))
}

/// Exact empirical W1 plus an m-out-of-n bootstrap interval.
pub fn wasserstein1(a: &Ensemble, b: &Ensemble) -> Result<W1Estimate> {
    check_pair(a, b)?;
    let n = a.len();
    let cost = cost_matrix(a, b);
    let w1 = matched_mean(&cost, n);
    let m = n.min(BOOTSTRAP_SUBSAMPLE);
    let subs = par_map(BOOTSTRAP_RESAMPLES, |r| {
        let mut rng = RngStream::new(W1_BOOTSTRAP_SEED, block::BOOTSTRAP + r as u64);
        let ia: Vec<usize> = (0..m).map(|_| rng.index(n)).collect();
        let ib: Vec<usize> = (0..m).map(|_| rng.index(n)).collect();
        let mut sub = Vec::with_capacity(m * m);
        for &i in &ia {
            for &j in &ib {
                sub.push(cost[i * n + j]);
            }
        }
        matched_mean(&sub, m)
    });
    let centre = subs.iter().sum::<f64>() / subs.len() as f64;
    let shrink = (m as f64 / n as f64).sqrt();
    let mut dev: Vec<f64> = subs.iter().map(|s| (s - centre) * shrink).collect();
    dev.sort_by(f64::total_cmp);
    Ok(W1Estimate {
        w1,
        ci: (
            (w1 + quantile_sorted(&dev, 0.025)).max(0.0),
            w1 + quantile_sorted(&dev, 0.975),
        ),
        chordal_fallbacks: 0,
    })
}

fn check_pair(a: &Ensemble, b: &Ensemble) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::SizeMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.spec != b.spec {
        return Err(Error::SpecMismatch);
    }
    if a.len() > MAX_EXACT_SIZE {
        return Err(Error::TooLarge {
            size: a.len(),
            limit: MAX_EXACT_SIZE,
        });
    }
    Ok(())
}

/// Power-law fit `error ≈ C·ε^p` with the `ε√|log ε|` model ratios.
#[derive(Clone, Debug, PartialEq)]
pub struct RateFit {
    pub eps_values: Vec<f64>,
    pub errors: Vec<f64>,
    pub ses: Vec<f64>,
    pub exponent: f64,
    pub intercept: f64,
    pub exponent_ci: (f64, f64),
    pub model_ratios: Vec<f64>,
}

/// `ε √|log ε|`.
pub fn log_rate_model(eps: f64) -> f64 {
    eps * eps.ln().abs().sqrt()
}

/// Weighted least squares of `log error` on `log ε` with weights
/// `(error/se)²`; the exponent interval is a parametric bootstrap.
pub fn rate_fit(eps: &[f64], errors: &[f64], ses: &[f64]) -> Result<RateFit> {
    let k = eps.len();
    if k < 3 || errors.len() != k || ses.len() != k {
        return Err(invalid(
            "rate fit needs at least three (ε, error, se) triples",
        ));
    }
    if eps.windows(2).any(|w| w[1] >= w[0]) || eps.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
        return Err(invalid("ε values must lie in (0, 1) and decrease strictly"));
    }
    for (e, s) in errors.iter().zip(ses) {
        if !(*e > 0.0) || *s < 0.0 || *e <= 1.96 * s {
            return Err(Error::DegenerateFit(format!(
                "error {e:.3e} is not distinguishable from zero at se {s:.3e}"
            )));
        }
    }
    let x: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
    let rel: Vec<f64> = errors.iter().zip(ses).map(|(e, s)| s / e).collect();
    let weights: Vec<f64> = if rel.iter().all(|r| *r == 0.0) {
        vec![1.0; k]
    } else {
        rel.iter().map(|r| 1.0 / r.max(1e-12).powi(2)).collect()
    };
    let y: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let (intercept, exponent) = wls(&x, &y, &weights);

    let mut rng = RngStream::new(RATE_BOOTSTRAP_SEED, block::BOOTSTRAP);
    let mut slopes = Vec::with_capacity(RATE_BOOTSTRAP_DRAWS);
    while slopes.len() < RATE_BOOTSTRAP_DRAWS {
        let draw: Vec<f64> = errors
            .iter()
            .zip(ses)
            .map(|(e, s)| e + s * rng.normal())
            .collect();
        if draw.iter().any(|d| *d <= 0.0) {
            continue;
        }
        let yb: Vec<f64> = draw.iter().map(|d| d.ln()).collect();
        slopes.push(wls(&x, &yb, &weights).1);
    }
    slopes.sort_by(f64::total_cmp);
    Ok(RateFit {
        eps_values: eps.to_vec(),
        errors: errors.to_vec(),
        ses: ses.to_vec(),
        exponent,
        intercept,
        exponent_ci: (
            quantile_sorted(&slopes, 0.025),
            quantile_sorted(&slopes, 0.975),
        ),
        model_ratios: eps
            .iter()
            .zip(errors)
            .map(|(e, r)| r / log_rate_model(*e))
            .collect(),
    })
}

/// `E f(y^ε_{T/ε}) − P_T f(y_0)` with both sides estimated by Monte Carlo.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeakError {
    /// `|signed|`.
    pub error: f64,
    pub signed: f64,
    pub pooled_se: f64,
    pub system: MeanEstimate,
    pub limit: SemigroupEstimate,
}

/// The multiscale side uses streams `block::SLOW + i`, the limit side
/// `block::LIMIT + i`, both under `master_seed`.
#[allow(clippy::too_many_arguments)]
pub fn weak_error(
    f: &Observable,
    sys: &MultiscaleSystem,
    sde: &EffectiveSDE,
    t: f64,
    paths: usize,
    theta: f64,
    limit_step: f64,
    master_seed: u64,
) -> Result<WeakError> {
    let limit = semigroup_mc(f, sys.y0(), sde, t, limit_step, paths, master_seed)?;
    weak_error_against(f, sys, &limit, t, paths, theta, master_seed)
}

/// As [`weak_error`] with a precomputed limit estimate, for sweeps over ε.
pub fn weak_error_against(
    f: &Observable,
    sys: &MultiscaleSystem,
    limit: &SemigroupEstimate,
    t: f64,
    paths: usize,
    theta: f64,
    master_seed: u64,
) -> Result<WeakError> {
    let system = slow_marginal(sys, t, paths, theta, master_seed)?.mean_of(f);
    let signed = system.mean - limit.estimate;
    Ok(WeakError {
        error: signed.abs(),
        signed,
        pooled_se: system.std_error.hypot(limit.std_error),
        system,
        limit: *limit,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct W1Row {
    pub epsilon: f64,
    pub estimate: W1Estimate,
}

#[derive(Clone, Debug)]
pub struct WassersteinStudy {
    pub rows: Vec<W1Row>,
    /// W1 between two independent limit samples of the same size.
    pub sampling_floor: W1Estimate,
    /// Fit over the ε values with `w1 > 2·floor`; `Err` explains why none was made.
    pub fit: std::result::Result<RateFit, String>,
}

/// Standard error implied by a 95% interval.
fn ci_se(ci: (f64, f64)) -> f64 {
    (ci.1 - ci.0) / (2.0 * 1.96)
}

/// W1 between the ε-marginal and a limit sample for each ε, plus the floor
/// between two independent limit samples (streams `block::LIMIT` and
/// `block::LIMIT_ALT`).
#[allow(clippy::too_many_arguments)]
pub fn wasserstein_convergence(
    sys: &MultiscaleSystem,
    sde: &EffectiveSDE,
    t: f64,
    eps_grid: &[f64],
    n: usize,
    theta: f64,
    limit_step: f64,
    master_seed: u64,
) -> Result<WassersteinStudy> {
    if eps_grid.is_empty() {
        return Err(invalid("need at least one ε"));
    }
    let limit = limit_marginal(sys.y0(), sde, t, limit_step, n, master_seed, block::LIMIT)?;
    let alt = limit_marginal(
        sys.y0(),
        sde,
        t,
        limit_step,
        n,
        master_seed,
        block::LIMIT_ALT,
    )?;
    let sampling_floor = wasserstein1(&limit, &alt)?;
    let mut rows = Vec::with_capacity(eps_grid.len());
    for &eps in eps_grid {
        let ens = slow_marginal(&sys.with_epsilon(eps)?, t, n, theta, master_seed)?;
        rows.push(W1Row {
            epsilon: eps,
            estimate: wasserstein1(&ens, &limit)?,
        });
    }
    let kept: Vec<&W1Row> = rows
        .iter()
        .filter(|r| r.estimate.w1 > 2.0 * sampling_floor.w1)
        .collect();
    let fit = if kept.len() < 3 {
        Err(format!(
            "{} of {} points lie above twice the sampling floor",
            kept.len(),
            rows.len()
        ))
    } else {
        let eps: Vec<f64> = kept.iter().map(|r| r.epsilon).collect();
        let w: Vec<f64> = kept.iter().map(|r| r.estimate.w1).collect();
        let se: Vec<f64> = kept.iter().map(|r| ci_se(r.estimate.ci)).collect();
        rate_fit(&eps, &w, &se).map_err(|e| e.to_string())
    };
    Ok(WassersteinStudy {
        rows,
        sampling_floor,
        fit,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Two-sample Kolmogorov–Smirnov test with the asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len(), y.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let t = x[i].min(y[j]);
        while i < n && x[i] <= t {
            i += 1;
        }
        while j < m && y[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    let mut q = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        q += if k % 2 == 1 { 2.0 * term } else { -2.0 * term };
        if term < 1e-12 {
            break;
        }
    }
    KsResult {
        statistic: d,
        p_value: if lambda < 1e-3 {
            1.0
        } else {
            q.clamp(0.0, 1.0)
        },
    }
}
