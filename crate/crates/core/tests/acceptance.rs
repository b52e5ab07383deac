//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on failure.
//!
//! Criteria can be selected by number: `cargo test --test acceptance -- 3 7`.

use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use fastslow::effective::{backward_check, semigroup_mc};
use fastslow::fast::{hormander_check, lln_error, step_fast};
use fastslow::geometry::{
    bracket, exp_map, haar_sample, log_map, pauli, AlgebraVector, GroupElement, GroupSpec,
};
use fastslow::harness::{self, Command, ExperimentConfig, RunContext};
use fastslow::metrics::{
    rate_fit, wasserstein1_exact, wasserstein_convergence, weak_error_against, Ensemble, Provenance,
};
use fastslow::multiscale::{distance_squared, ito_reduction_check, uniform_moment_probe};
use fastslow::observable::Observable;
use fastslow::poisson::{solve_poisson_mc, solve_poisson_spectral, ResolventConfig};
use fastslow::presets;
use fastslow::rng::RngStream;
use fastslow::Result;

const SEED: u64 = 20240601;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Result<Verdict> {
    Ok(Verdict {
        pass,
        detail: detail.into(),
    })
}

type Check = fn() -> Result<Verdict>;

fn random_algebra(spec: GroupSpec, radius: f64, rng: &mut RngStream) -> AlgebraVector {
    let coords: Vec<f64> = (0..spec.algebra_dim()).map(|_| rng.normal()).collect();
    let v = AlgebraVector::from_coords(spec, &coords).unwrap();
    v.scale(radius / v.norm())
}

fn geometry_suite() -> Result<Verdict> {
    let groups = [
        GroupSpec::so(3),
        GroupSpec::so(4),
        GroupSpec::so(5),
        GroupSpec::su(2),
        GroupSpec::su(3),
    ];
    let mut rng = RngStream::new(SEED, 1);
    let mut round_trip = 0.0f64;
    let mut jacobi = 0.0f64;
    for spec in groups {
        let reach = 0.95 * spec.injectivity_radius();
        for _ in 0..1000 {
            let a = random_algebra(spec, reach * rng.uniform(), &mut rng);
            let back = log_map(&exp_map(&a))?;
            round_trip = round_trip.max((*back.matrix() - *a.matrix()).max_abs());

            let [x, y, z] = [0, 1, 2].map(|_| random_algebra(spec, 1.0, &mut rng));
            let cyc = |p: &AlgebraVector, q: &AlgebraVector, r: &AlgebraVector| {
                *bracket(p, &bracket(q, r).unwrap()).unwrap().matrix()
            };
            let sum = cyc(&x, &y, &z) + cyc(&y, &z, &x) + cyc(&z, &x, &y);
            jacobi = jacobi.max(sum.max_abs());
        }
    }
    let mut drift = 0.0f64;
    for fast in [
        presets::so4_hypoelliptic(1)?
            .system
            .fast()
            .with_epsilon(1.0)?,
        fastslow::fast::FastSpec::new(GroupSpec::su(2), pauli()[..2].to_vec(), None, 1.0)?,
    ] {
        let mut z = GroupElement::identity(*fast.group());
        let mut rng = RngStream::new(SEED, 2);
        for _ in 0..1_000_000 {
            z = step_fast(&z, &fast, 0.1, &mut rng)?;
        }
        drift = drift.max(z.unitarity_defect()).max(z.determinant_defect());
    }
    verdict(
        round_trip <= 1e-10 && drift <= 1e-10 && jacobi <= 1e-10,
        format!(
            "round trip {round_trip:.1e}, drift after 1e6 steps {drift:.1e}, Jacobi {jacobi:.1e}"
        ),
    )
}

fn hormander_cases() -> Result<Verdict> {
    let [_, x2, x3] = pauli();
    let so3 = GroupSpec::so(3);
    let (a12, a13) = (so3.so_generator(1, 2), so3.so_generator(1, 3));
    let su2 = hormander_check(&[x2, x3], None)?;
    let one = hormander_check(&[a12], None)?;
    let two = hormander_check(&[a12, a13], None)?;
    let ok = su2.satisfied
        && su2.generated_dim == 3
        && !one.satisfied
        && one.generated_dim == 1
        && two.satisfied
        && two.generated_dim == 3;
    verdict(
        ok,
        format!(
            "su(2){{X2,X3}} dim {}, so(3){{A12}} dim {}, so(3){{A12,A13}} dim {}",
            su2.generated_dim, one.generated_dim, two.generated_dim
        ),
    )
}

fn poisson_solvers() -> Result<Verdict> {
    let preset = presets::hopf()?;
    let fast = preset.system.fast().clone();
    let alpha = preset.alphas()[0].clone();
    let x1 = pauli()[0];
    let grid: Vec<f64> = (0..16).map(|j| PI * j as f64 / 16.0).collect();
    let at = |theta: f64| exp_map(&x1.scale(theta));

    let alpha_gap = grid
        .iter()
        .map(|&t| (alpha.eval(&at(t)) - (2.0 * t).cos()).abs())
        .fold(0.0, f64::max);
    let spectral = solve_poisson_spectral(&alpha, &fast)?;
    let exact_gap = grid
        .iter()
        .map(|&t| (spectral.beta.eval(&at(t)) + 0.5 * (2.0 * t).cos()).abs())
        .fold(0.0, f64::max);

    let cfg = ResolventConfig {
        tail_t: 20.0,
        paths: 100_000,
        step: 0.02,
        master_seed: SEED,
    };
    let mc = solve_poisson_mc(&alpha, &fast, &cfg)?;
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for &t in &grid {
        let s = spectral.beta.eval(&at(t));
        num = num.max((mc.beta.eval(&at(t)) - s).abs());
        den = den.max(s.abs());
    }
    let rel = num / den;
    verdict(
        alpha_gap < 1e-12 && exact_gap <= 1e-6 && spectral.residual_sup <= 1e-6 && rel <= 0.02,
        format!(
            "spectral vs -cos(2t)/2 {exact_gap:.1e}, residual {:.1e}, MC relative sup error {:.2}%",
            spectral.residual_sup,
            100.0 * rel
        ),
    )
}

fn hopf_averaging() -> Result<Verdict> {
    let model = presets::hopf()?.averaged_model()?;
    let mut a_gap = 0.0f64;
    for i in 0..2 {
        for j in 0..2 {
            let want = if i == j { -0.25 } else { 0.0 };
            a_gap = a_gap.max((model.a_bar[(i, j)] - want).abs());
        }
    }
    let split = (&model.sigma * model.sigma.transpose() + &model.a_sym).amax();
    verdict(
        a_gap <= 1e-6 && split <= 1e-10,
        format!("|a_bar + I/4| {a_gap:.1e}, |sigma sigma^T + a_sym| {split:.1e}"),
    )
}

fn lln_rate() -> Result<Verdict> {
    let preset = presets::hopf()?;
    let fast = preset.system.fast().with_epsilon(1.0)?;
    let z0 = GroupElement::identity(*fast.group());
    let grid: Vec<f64> = (0..7).map(|k| f64::from(1 << k)).collect();
    let report = lln_error(&preset.alphas()[0], &fast, &z0, &grid, 2000, 0.01, SEED)?;
    let slope = report.slope.unwrap_or(f64::NAN);
    let errs: Vec<String> = report
        .rows
        .iter()
        .map(|r| format!("{:.3}", r.l2_error))
        .collect();
    verdict(
        (-0.6..=-0.4).contains(&slope),
        format!("slope {slope:.3}, errors [{}]", errs.join(", ")),
    )
}

fn ito_identity() -> Result<Verdict> {
    let preset = presets::hopf()?.with_epsilon(0.1)?;
    let betas: Vec<Observable> = preset
        .solve_poisson()?
        .into_iter()
        .map(|s| s.beta)
        .collect();
    let f = Observable::re_trace(GroupSpec::su(2));
    let r = ito_reduction_check(&preset.system, &f, &betas, 0.5, 50_000, 0.05, SEED)?;
    verdict(
        r.pass,
        format!(
            "lhs {:.5}, rhs {:.5}, gap {:.1e} vs 3 se {:.1e} + allowance {:.1e}",
            r.lhs,
            r.rhs,
            (r.lhs - r.rhs).abs(),
            3.0 * r.pooled_se,
            r.allowance
        ),
    )
}

fn weak_convergence() -> Result<Verdict> {
    let preset = presets::hopf()?.with_initial_coords(&[0.0, FRAC_PI_2, 0.0])?;
    let sys = &preset.system;
    let sde = preset.effective_sde()?;
    let f = Observable::re_trace(GroupSpec::su(2));
    let paths = 100_000;
    let limit = semigroup_mc(&f, sys.y0(), &sde, 1.0, 0.01, paths, SEED)?;
    let eps = [0.2, 0.1, 0.05];
    let mut rows = Vec::new();
    for e in eps {
        rows.push(weak_error_against(
            &f,
            &sys.with_epsilon(e)?,
            &limit,
            1.0,
            paths,
            0.1,
            SEED,
        )?);
    }
    let errors: Vec<f64> = rows.iter().map(|r| r.error).collect();
    let ses: Vec<f64> = rows.iter().map(|r| r.pooled_se).collect();
    let decreasing = rows
        .windows(2)
        .all(|w| w[0].error - w[1].error > w[0].system.std_error.hypot(w[1].system.std_error));
    let fit = rate_fit(&eps, &errors, &ses)?;
    let shown: Vec<String> = rows
        .iter()
        .zip(eps)
        .map(|(r, e)| format!("{e}: {:+.4}±{:.4}", r.signed, r.pooled_se))
        .collect();
    let ratios: Vec<String> = fit.model_ratios.iter().map(|r| format!("{r:.3}")).collect();
    verdict(
        decreasing && (0.6..=1.4).contains(&fit.exponent),
        format!(
            "errors [{}], exponent {:.3} [{:.3}, {:.3}], model ratios [{}]",
            shown.join(", "),
            fit.exponent,
            fit.exponent_ci.0,
            fit.exponent_ci.1,
            ratios.join(", ")
        ),
    )
}

fn wasserstein_study() -> Result<Verdict> {
    let preset = presets::hopf()?;
    let sde = preset.effective_sde()?;
    let study = wasserstein_convergence(
        &preset.system,
        &sde,
        0.25,
        &[0.2, 0.1, 0.05],
        1000,
        0.1,
        0.01,
        SEED,
    )?;
    let first = &study.rows[0].estimate;
    let last = &study.rows[2].estimate;
    let floor = study.sampling_floor.w1;
    let shown: Vec<String> = study
        .rows
        .iter()
        .map(|r| {
            format!(
                "{}: {:.4} [{:.4}, {:.4}]",
                r.epsilon, r.estimate.w1, r.estimate.ci.0, r.estimate.ci.1
            )
        })
        .collect();
    let fit = match &study.fit {
        Ok(f) => format!(
            "exponent {:.3} [{:.3}, {:.3}]",
            f.exponent, f.exponent_ci.0, f.exponent_ci.1
        ),
        Err(why) => format!("no fit ({why})"),
    };
    verdict(
        first.ci.0 > last.ci.1 && last.w1 <= 2.0 * floor,
        format!("w1 [{}], floor {floor:.4}, {fit}", shown.join(", ")),
    )
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for k in 0..n {
            let mut q = p.clone();
            q.insert(k, n - 1);
            out.push(q);
        }
    }
    out
}

fn exact_ot_oracle() -> Result<Verdict> {
    let spec = GroupSpec::so(3);
    let perms = permutations(6);
    let provenance = Provenance {
        master_seed: SEED,
        first_stream: 0,
        config_digest: String::new(),
    };
    let mut worst = 0.0f64;
    for trial in 0..100 {
        let mut rng = RngStream::new(SEED, 1000 + trial);
        let a: Vec<GroupElement> = (0..6).map(|_| haar_sample(spec, &mut rng)).collect();
        let b: Vec<GroupElement> = (0..6).map(|_| haar_sample(spec, &mut rng)).collect();
        let brute = perms
            .iter()
            .map(|p| {
                p.iter()
                    .enumerate()
                    .map(|(i, &j)| fastslow::geometry::distance(&a[i], &b[j]))
                    .sum::<f64>()
                    / 6.0
            })
            .fold(f64::INFINITY, f64::min);
        let ea = Ensemble::new(spec, a, provenance.clone())?;
        let eb = Ensemble::new(spec, b, provenance.clone())?;
        worst = worst.max((wasserstein1_exact(&ea, &eb)? - brute).abs());
    }
    verdict(
        worst <= 1e-12,
        format!("largest gap to brute force over 100 trials {worst:.1e}"),
    )
}

fn backward_equation() -> Result<Verdict> {
    let preset = presets::hopf()?;
    let sde = preset.effective_sde()?;
    let f = Observable::re_trace(GroupSpec::su(2));
    let y0 = GroupElement::identity(GroupSpec::su(2));
    let r = backward_check(&f, &y0, &sde, 1.0, 0.005, 100_000, SEED)?;
    verdict(
        r.pass,
        format!(
            "slope {:.5}, P_T(Lf) {:.5}, gap {:.1e} vs 3 se {:.1e} + allowance {:.1e}",
            r.lhs_slope,
            r.rhs_value,
            (r.lhs_slope - r.rhs_value).abs(),
            3.0 * r.pooled_se,
            r.allowance
        ),
    )
}

fn uniform_moments() -> Result<Verdict> {
    let preset = presets::hopf()?;
    let v = distance_squared(GroupSpec::su(2));
    let r = uniform_moment_probe(
        &preset.system,
        &v,
        1.0,
        &[0.2, 0.1, 0.05],
        1.0,
        2000,
        0.1,
        SEED,
    )?;
    let shown: Vec<String> = r
        .rows
        .iter()
        .map(|m| format!("{}: {:.4}", m.epsilon, m.moment))
        .collect();
    verdict(
        r.pass,
        format!("E sup d^2 [{}], ratio {:.3}", shown.join(", "), r.ratio),
    )
}

fn csv_outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn reproducibility() -> Result<Verdict> {
    let config = ExperimentConfig::parse(
        "preset = \"hopf\"\neps_grid = [0.2, 0.1, 0.05]\nT = 0.5\npaths = 500\nn = 100\n\
         [poisson]\npaths = 500\n[lln]\nt_grid = [1.0, 2.0, 4.0]\npaths = 100\n",
    )?;
    let commands = [
        Command::Simulate,
        Command::Converge,
        Command::Wasserstein,
        Command::Poisson,
        Command::Hormander,
        Command::Lln,
        Command::Identity,
        Command::Backward,
    ];
    let root = tempfile::tempdir()?;
    let mut runs = Vec::new();
    for (label, workers) in [("a", 1), ("b", 1), ("c", 2), ("d", 3)] {
        let dir = root.path().join(label);
        let ctx = RunContext::new(config.clone(), Some(SEED), Some(dir.clone()));
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .unwrap();
        for cmd in commands {
            pool.install(|| harness::execute(cmd, &ctx))?;
        }
        runs.push(csv_outputs(&dir));
    }
    let identical = runs.windows(2).all(|w| w[0] == w[1]);
    verdict(
        identical && !runs[0].is_empty(),
        format!(
            "{} CSV files identical across 4 runs at 1, 1, 2 and 3 workers",
            runs[0].len()
        ),
    )
}

fn main() -> ExitCode {
    let checks: [(&str, u64, Check); 12] = [
        ("geometry suite", 30, geometry_suite),
        ("Hörmander checker", 1, hormander_cases),
        ("Poisson solvers", 120, poisson_solvers),
        ("Hopf averaging", 10, hopf_averaging),
        ("LLN rate", 120, lln_rate),
        ("Itô reduction identity", 300, ito_identity),
        ("weak convergence", 900, weak_convergence),
        ("Wasserstein convergence", 600, wasserstein_study),
        ("exact OT oracle", 10, exact_ot_oracle),
        ("backward equation", 300, backward_equation),
        ("uniform moments", 300, uniform_moments),
        ("reproducibility", 600, reproducibility),
    ];
    let selected: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failures = 0;
    for (k, (name, budget, check)) in checks.iter().enumerate() {
        let id = k + 1;
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let result = check();
        let took = start.elapsed();
        let in_time = took <= Duration::from_secs(*budget);
        let (pass, detail) = match result {
            Ok(v) => (v.pass && in_time, v.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failures += 1;
        }
        let timing = if in_time {
            format!("{:.1}s", took.as_secs_f64())
        } else {
            format!("{:.1}s, over the {budget}s budget", took.as_secs_f64())
        };
        println!(
            "{} {id:>2} {name}: {detail} ({timing})",
            if pass { "PASS" } else { "FAIL" }
        );
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
