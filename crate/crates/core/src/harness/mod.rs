//! Command layer behind the `fastslow` binary: runs an experiment from a
//! configuration and writes CSV files plus a text report.
//!
//! Every file starts with `#` lines carrying the tool version, the config
//! digest and the master seed. Floats are written with 17 significant
//! digits, so identical runs give identical bytes.

mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

pub use config::{ExperimentConfig, LlnSection, PoissonSection};

use crate::effective::{backward_check, semigroup_mc, BACKWARD_DELTA};
use crate::error::{invalid, Error, Result};
use crate::fast::{hormander_check, lln_error, FastGroup};
use crate::geometry::GroupElement;
use crate::metrics::{rate_fit, wasserstein_convergence, weak_error_against, WeakError};
use crate::multiscale::{ito_reduction_check, slow_marginal};
use crate::observable::Observable;
use crate::poisson::{solve_poisson_mc_all, solve_poisson_spectral, PoissonMethod};
use crate::presets::{by_name, Preset};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Experiment commands.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Converge,
    Wasserstein,
    Poisson,
    Hormander,
    Lln,
    Identity,
    Backward,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Simulate => "simulate",
            Self::Converge => "converge",
            Self::Wasserstein => "wasserstein",
            Self::Poisson => "poisson",
            Self::Hormander => "hormander",
            Self::Lln => "lln",
            Self::Identity => "identity",
            Self::Backward => "backward",
        }
    }
}

/// A loaded configuration with the resolved seed and output directory.
#[derive(Clone, Debug)]
pub struct RunContext {
    pub config: ExperimentConfig,
    pub digest: String,
    pub master_seed: u64,
    pub out_dir: PathBuf,
}

impl RunContext {
    pub fn new(config: ExperimentConfig, seed: Option<u64>, out_dir: Option<PathBuf>) -> Self {
        let digest = config.digest();
        let master_seed = seed.unwrap_or(config.master_seed);
        let out_dir = out_dir
            .or_else(|| config.output.as_ref().map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("fastslow-out"));
        Self {
            config,
            digest,
            master_seed,
            out_dir,
        }
    }

    fn header(&self, cmd: Command) -> String {
        format!(
            "# fastslow {VERSION}\n# command = {}\n# preset = {}\n# config_digest = {}\n# master_seed = {}\n",
            cmd.name(),
            self.config.preset,
            self.digest,
            self.master_seed
        )
    }

    fn write(&self, cmd: Command, file: &str, body: &str) -> Result<PathBuf> {
        fs::create_dir_all(&self.out_dir)?;
        let path = self.out_dir.join(file);
        fs::write(&path, format!("{}{body}", self.header(cmd)))?;
        Ok(path)
    }
}

/// Result of a command that ran to completion.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub pass: bool,
    pub report: String,
    pub files: Vec<PathBuf>,
}

/// 0 pass, 1 usage or I/O error, 2 failed scientific verdict.
pub fn exit_code(result: &Result<Outcome>) -> i32 {
    match result {
        Ok(o) if o.pass => 0,
        Ok(_) => 2,
        Err(e) if is_verdict(e) => 2,
        Err(_) => 1,
    }
}

fn is_verdict(e: &Error) -> bool {
    matches!(
        e,
        Error::NotCentered { .. }
            | Error::NotPsd { .. }
            | Error::SpectralLeak { .. }
            | Error::DegenerateFit(_)
            | Error::HormanderFails { .. }
            | Error::Numerical(_)
    )
}

fn f17(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv(columns: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = columns.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    out
}

/// The configured preset with ε, the initial state and the resolvent budget applied.
pub fn load_preset(cfg: &ExperimentConfig, master_seed: u64) -> Result<Preset> {
    let mut p = by_name(&cfg.preset)?.with_epsilon(cfg.epsilon)?;
    if let Some(c) = &cfg.initial {
        p = p.with_initial_coords(c)?;
    }
    if let crate::presets::PoissonPlan::MonteCarlo(_) = p.poisson {
        p = p.with_poisson(crate::presets::PoissonPlan::MonteCarlo(
            cfg.resolvent(master_seed),
        ));
    }
    Ok(p)
}

fn eps_grid(cfg: &ExperimentConfig, min: usize) -> Result<Vec<f64>> {
    let grid = cfg.eps_grid.clone().unwrap_or_default();
    if grid.len() < min {
        return Err(invalid(format!(
            "eps_grid needs at least {min} values, got {}",
            grid.len()
        )));
    }
    Ok(grid)
}

pub fn execute(cmd: Command, ctx: &RunContext) -> Result<Outcome> {
    match cmd {
        Command::Simulate => simulate(ctx),
        Command::Converge => converge(ctx),
        Command::Wasserstein => wasserstein(ctx),
        Command::Poisson => poisson(ctx),
        Command::Hormander => hormander(ctx),
        Command::Lln => lln(ctx),
        Command::Identity => identity(ctx),
        Command::Backward => backward(ctx),
    }
}

fn finish(
    ctx: &RunContext,
    cmd: Command,
    pass: bool,
    mut report: String,
    mut files: Vec<PathBuf>,
) -> Result<Outcome> {
    let _ = writeln!(report, "verdict = {}", if pass { "pass" } else { "fail" });
    files.push(ctx.write(cmd, &format!("{}_report.txt", cmd.name()), &report)?);
    Ok(Outcome {
        pass,
        report: format!("{}{report}", ctx.header(cmd)),
        files,
    })
}

fn simulate(ctx: &RunContext) -> Result<Outcome> {
    let cfg = &ctx.config;
    let p = load_preset(cfg, ctx.master_seed)?;
    let ens = slow_marginal(
        &p.system,
        cfg.horizon,
        cfg.paths,
        cfg.theta,
        ctx.master_seed,
    )?
    .with_digest(&ctx.digest);
    let spec = *ens.spec();
    let n = spec.n();
    let mut cols = vec!["path".to_string(), "stream_id".to_string()];
    for i in 0..n {
        for j in 0..n {
            cols.push(format!("re_{}{}", i + 1, j + 1));
            if !spec.is_real() {
                cols.push(format!("im_{}{}", i + 1, j + 1));
            }
        }
    }
    let first = ens.provenance().first_stream;
    let rows: Vec<Vec<String>> = ens
        .states()
        .iter()
        .enumerate()
        .map(|(k, g)| {
            let mut r = vec![k.to_string(), (first + k as u64).to_string()];
            for i in 0..n {
                for j in 0..n {
                    let c = g.matrix()[(i, j)];
                    r.push(f17(c.re));
                    if !spec.is_real() {
                        r.push(f17(c.im));
                    }
                }
            }
            r
        })
        .collect();
    let col_refs: Vec<&str> = cols.iter().map(String::as_str).collect();
    let file = ctx.write(Command::Simulate, "simulate.csv", &csv(&col_refs, &rows))?;
    let f = Observable::re_trace(spec);
    let m = ens.mean_of(&f);
    let mut report = String::new();
    let _ = writeln!(report, "epsilon = {}", cfg.epsilon);
    let _ = writeln!(report, "T = {}", cfg.horizon);
    let _ = writeln!(report, "paths = {}", cfg.paths);
    let _ = writeln!(
        report,
        "mean_re_trace = {} ± {}",
        f17(m.mean),
        f17(m.std_error)
    );
    finish(ctx, Command::Simulate, true, report, vec![file])
}

fn converge(ctx: &RunContext) -> Result<Outcome> {
    let cfg = &ctx.config;
    let grid = eps_grid(cfg, 3)?;
    let p = load_preset(cfg, ctx.master_seed)?;
    let sde = p.effective_sde()?;
    let f = Observable::re_trace(*p.system.slow_group());
    let limit = semigroup_mc(
        &f,
        p.system.y0(),
        &sde,
        cfg.horizon,
        cfg.limit_step,
        cfg.paths,
        ctx.master_seed,
    )?;
    let mut errors: Vec<WeakError> = Vec::new();
    for &eps in &grid {
        let sys = p.system.with_epsilon(eps)?;
        errors.push(weak_error_against(
            &f,
            &sys,
            &limit,
            cfg.horizon,
            cfg.paths,
            cfg.theta,
            ctx.master_seed,
        )?);
    }
    let rows: Vec<Vec<String>> = grid
        .iter()
        .zip(&errors)
        .map(|(e, w)| vec![f17(*e), f17(w.error), f17(w.pooled_se), f17(w.signed)])
        .collect();
    let file = ctx.write(
        Command::Converge,
        "converge.csv",
        &csv(&["epsilon", "weak_error", "se", "signed_error"], &rows),
    )?;
    let decreasing = errors
        .windows(2)
        .all(|w| w[0].error - w[1].error > w[0].pooled_se.hypot(w[1].pooled_se));
    let mut report = String::new();
    let _ = writeln!(report, "observable = re_trace");
    let _ = writeln!(
        report,
        "limit_estimate = {} ± {}",
        f17(limit.estimate),
        f17(limit.std_error)
    );
    let _ = writeln!(report, "strictly_decreasing_beyond_se = {decreasing}");
    let e: Vec<f64> = errors.iter().map(|w| w.error).collect();
    let s: Vec<f64> = errors.iter().map(|w| w.pooled_se).collect();
    let fit_ok = match rate_fit(&grid, &e, &s) {
        Ok(fit) => {
            let _ = writeln!(report, "exponent = {}", f17(fit.exponent));
            let _ = writeln!(
                report,
                "exponent_ci = [{}, {}]",
                f17(fit.exponent_ci.0),
                f17(fit.exponent_ci.1)
            );
            let ratios: Vec<String> = fit.model_ratios.iter().map(|r| f17(*r)).collect();
            let _ = writeln!(report, "model_ratios = [{}]", ratios.join(", "));
            true
        }
        Err(err) => {
            let _ = writeln!(report, "fit = {err}");
            false
        }
    };
    finish(
        ctx,
        Command::Converge,
        decreasing && fit_ok,
        report,
        vec![file],
    )
}

fn wasserstein(ctx: &RunContext) -> Result<Outcome> {
    let cfg = &ctx.config;
    let grid = eps_grid(cfg, 1)?;
    let p = load_preset(cfg, ctx.master_seed)?;
    let sde = p.effective_sde()?;
    let study = wasserstein_convergence(
        &p.system,
        &sde,
        cfg.horizon,
        &grid,
        cfg.n,
        cfg.theta,
        cfg.limit_step,
        ctx.master_seed,
    )?;
    let floor = study.sampling_floor.w1;
    let rows: Vec<Vec<String>> = study
        .rows
        .iter()
        .map(|r| {
            vec![
                f17(r.epsilon),
                f17(r.estimate.w1),
                f17(r.estimate.ci.0),
                f17(r.estimate.ci.1),
                f17(floor),
            ]
        })
        .collect();
    let file = ctx.write(
        Command::Wasserstein,
        "wasserstein.csv",
        &csv(&["epsilon", "w1", "ci_lo", "ci_hi", "floor"], &rows),
    )?;
    let mut report = String::new();
    let _ = writeln!(report, "n = {}", cfg.n);
    let _ = writeln!(
        report,
        "sampling_floor = {} [{}, {}]",
        f17(floor),
        f17(study.sampling_floor.ci.0),
        f17(study.sampling_floor.ci.1)
    );
    let first = &study.rows[0].estimate;
    let last = &study.rows[study.rows.len() - 1].estimate;
    let separated = study.rows.len() > 1 && first.ci.0 > last.ci.1;
    let _ = writeln!(report, "largest_eps_above_smallest_beyond_ci = {separated}");
    let _ = writeln!(
        report,
        "smallest_eps_within_twice_floor = {}",
        last.w1 <= 2.0 * floor
    );
    match &study.fit {
        Ok(fit) => {
            let _ = writeln!(report, "exponent = {}", f17(fit.exponent));
            let _ = writeln!(
                report,
                "exponent_ci = [{}, {}]",
                f17(fit.exponent_ci.0),
                f17(fit.exponent_ci.1)
            );
        }
        Err(why) => {
            let _ = writeln!(report, "fit = none ({why})");
        }
    }
    finish(
        ctx,
        Command::Wasserstein,
        separated || study.rows.len() == 1,
        report,
        vec![file],
    )
}

fn poisson(ctx: &RunContext) -> Result<Outcome> {
    let cfg = &ctx.config;
    let p = load_preset(cfg, ctx.master_seed)?;
    let fast = p.system.fast();
    let resolvent = cfg.resolvent(ctx.master_seed);
    let mc = solve_poisson_mc_all(p.alphas(), fast, &resolvent)?;
    let spectral = match fast.subgroup() {
        FastGroup::Torus(_) => Some(
            p.alphas()
                .iter()
                .map(|a| solve_poisson_spectral(a, fast))
                .collect::<Result<Vec<_>>>()?,
        ),
        _ => None,
    };
    let grid: Vec<GroupElement> = match fast.subgroup() {
        FastGroup::Torus(chart) => (0..16)
            .map(|j| chart.point(2.0 * std::f64::consts::PI * j as f64 / 16.0))
            .collect(),
        _ => {
            let mut rng = crate::rng::RngStream::new(ctx.master_seed, crate::rng::block::AUX);
            (0..16).map(|_| fast.sample_invariant(&mut rng)).collect()
        }
    };
    let mut rows = Vec::new();
    let mut report = String::new();
    let mut agree = true;
    for (k, sol) in mc.iter().enumerate() {
        let sp = spectral.as_ref().map(|s| &s[k]);
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for (j, z) in grid.iter().enumerate() {
            let b_mc = sol.beta.eval(z);
            let b_sp = sp.map_or(f64::NAN, |s| s.beta.eval(z));
            if let Some(s) = sp {
                worst = worst.max((b_mc - b_sp).abs());
                scale = scale.max(s.beta.eval(z).abs());
            }
            rows.push(vec![
                (k + 1).to_string(),
                j.to_string(),
                f17(b_sp),
                f17(b_mc),
            ]);
        }
        let _ = writeln!(
            report,
            "alpha_{}.mc_residual_rel = {}",
            k + 1,
            f17(sol.residual_sup)
        );
        if let Some(half) = sol.ci_half_width {
            let _ = writeln!(report, "alpha_{}.mc_ci_half_width = {}", k + 1, f17(half));
        }
        if let Some(s) = sp {
            debug_assert_eq!(s.method, PoissonMethod::Spectral);
            let rel = worst / scale.max(1e-300);
            let _ = writeln!(
                report,
                "alpha_{}.spectral_residual = {}",
                k + 1,
                f17(s.residual_sup)
            );
            let _ = writeln!(
                report,
                "alpha_{}.mc_vs_spectral_rel_sup = {}",
                k + 1,
                f17(rel)
            );
            agree &= s.residual_sup <= 1e-6 && rel <= 0.02;
        }
    }
    let mut files = vec![ctx.write(
        Command::Poisson,
        "poisson.csv",
        &csv(&["alpha", "point", "beta_spectral", "beta_mc"], &rows),
    )?];
    let betas: Vec<Observable> = match &spectral {
        Some(s) => s.iter().map(|x| x.beta.clone()).collect(),
        None => mc.iter().map(|x| x.beta.clone()).collect(),
    };
    let model = p.averaged_model_from(&betas)?;
    let sde = crate::effective::build_effective(&model, p.system.slow_fields())?;
    let m = model.dim();
    let mut arows = Vec::new();
    for i in 0..m {
        for j in 0..m {
            arows.push(vec![
                (i + 1).to_string(),
                (j + 1).to_string(),
                f17(model.a_bar[(i, j)]),
                f17(model.a_sym[(i, j)]),
                f17(model.sigma[(i, j)]),
            ]);
        }
    }
    files.push(ctx.write(
        Command::Poisson,
        "averaged.csv",
        &csv(&["i", "j", "a_bar", "a_sym", "sigma"], &arows),
    )?);
    let _ = writeln!(report, "quadrature_error = {}", f17(model.quadrature_error));
    let _ = writeln!(report, "[effective]\n{sde}");
    finish(ctx, Command::Poisson, agree, report, files)
}

fn hormander(ctx: &RunContext) -> Result<Outcome> {
    let p = load_preset(&ctx.config, ctx.master_seed)?;
    let fast = p.system.fast();
    let h = fast.hormander();
    let mut report = String::new();
    let _ = writeln!(
        report,
        "fast subgroup: {}, dim {}",
        if h.satisfied {
            "satisfied"
        } else {
            "not satisfied"
        },
        h.generated_dim
    );
    let _ = writeln!(report, "required_dim = {}", h.required_dim);
    let _ = writeln!(report, "bracket_depth = {}", h.depth);
    if let Some(w) = h.weak_dim {
        let _ = writeln!(report, "weak_dim = {w}");
    }
    if !fast.diffusion_fields().is_empty() {
        let full = hormander_check(fast.diffusion_fields(), None)?;
        let _ = writeln!(
            report,
            "whole algebra: generated_dim {} of {}",
            full.generated_dim, full.required_dim
        );
    }
    finish(ctx, Command::Hormander, h.satisfied, report, vec![])
}

fn lln(ctx: &RunContext) -> Result<Outcome> {
    let cfg = &ctx.config;
    let p = load_preset(cfg, ctx.master_seed)?;
    let fast = p.system.fast().with_epsilon(1.0)?;
    let l = &cfg.lln;
    let r = lln_error(
        &p.alphas()[0],
        &fast,
        p.system.z0(),
        &l.t_grid,
        l.paths,
        l.step,
        ctx.master_seed,
    )?;
    let rows: Vec<Vec<String>> = r
        .rows
        .iter()
        .map(|row| vec![f17(row.t), f17(row.l2_error), f17(row.ci_half_width)])
        .collect();
    let file = ctx.write(
        Command::Lln,
        "lln.csv",
        &csv(&["t", "l2_error", "ci_half_width"], &rows),
    )?;
    let mut report = String::new();
    let _ = writeln!(report, "observable = alpha_1");
    let _ = writeln!(report, "invariant_mean = {}", f17(r.invariant_mean));
    let pass = match r.slope {
        Some(s) => {
            let _ = writeln!(report, "slope = {}", f17(s));
            (-0.6..=-0.4).contains(&s)
        }
        None => {
            let _ = writeln!(report, "slope = none (errors at roundoff level)");
            false
        }
    };
    finish(ctx, Command::Lln, pass, report, vec![file])
}

fn identity(ctx: &RunContext) -> Result<Outcome> {
    let cfg = &ctx.config;
    let p = load_preset(cfg, ctx.master_seed)?;
    let betas: Vec<Observable> = p.solve_poisson()?.into_iter().map(|s| s.beta).collect();
    let f = Observable::re_trace(*p.system.slow_group());
    let r = ito_reduction_check(
        &p.system,
        &f,
        &betas,
        cfg.horizon,
        cfg.paths,
        cfg.theta,
        ctx.master_seed,
    )?;
    let mut report = String::new();
    let _ = writeln!(report, "lhs = {}", f17(r.lhs));
    let _ = writeln!(report, "rhs = {}", f17(r.rhs));
    let _ = writeln!(report, "pooled_se = {}", f17(r.pooled_se));
    let _ = writeln!(report, "allowance = {}", f17(r.allowance));
    finish(ctx, Command::Identity, r.pass, report, vec![])
}

fn backward(ctx: &RunContext) -> Result<Outcome> {
    let cfg = &ctx.config;
    let p = load_preset(cfg, ctx.master_seed)?;
    let sde = p.effective_sde()?;
    let f = Observable::re_trace(*p.system.slow_group());
    let r = backward_check(
        &f,
        p.system.y0(),
        &sde,
        cfg.horizon,
        cfg.limit_step,
        cfg.paths,
        ctx.master_seed,
    )?;
    let mut report = String::new();
    let _ = writeln!(report, "delta = {BACKWARD_DELTA}");
    let _ = writeln!(report, "lhs_slope = {}", f17(r.lhs_slope));
    let _ = writeln!(report, "rhs_value = {}", f17(r.rhs_value));
    let _ = writeln!(report, "pooled_se = {}", f17(r.pooled_se));
    let _ = writeln!(report, "allowance = {}", f17(r.allowance));
    finish(ctx, Command::Backward, r.pass, report, vec![])
}

/// `preset list` output.
pub fn preset_list() -> String {
    crate::presets::list().join("\n") + "\n"
}

/// `preset show <name>` output.
pub fn preset_show(name: &str) -> Result<String> {
    Ok(by_name(name)?.to_string())
}

/// Reads a file written by a command, for comparisons in tests.
pub fn read_output(dir: &Path, file: &str) -> Result<String> {
    Ok(fs::read_to_string(dir.join(file))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(text: &str, dir: &Path) -> RunContext {
        RunContext::new(
            ExperimentConfig::parse(text).unwrap(),
            None,
            Some(dir.to_path_buf()),
        )
    }

    #[test]
    fn hormander_on_hypoelliptic_preset() {
        let dir = tempfile::tempdir().unwrap();
        let c = ctx("preset = \"so4_hypoelliptic\"", dir.path());
        let r = execute(Command::Hormander, &c);
        assert_eq!(exit_code(&r), 0);
        assert!(r.unwrap().report.contains("satisfied, dim 3"));
    }

    #[test]
    fn converge_rejects_short_grids() {
        let dir = tempfile::tempdir().unwrap();
        let c = ctx("preset = \"hopf\"\neps_grid = [0.1]", dir.path());
        let r = execute(Command::Converge, &c);
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
        assert_eq!(exit_code(&r), 1);
    }

    #[test]
    fn simulate_is_byte_reproducible_and_tagged() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let text = "preset = \"hopf\"\npaths = 50\nT = 0.3\nepsilon = 0.2\nmaster_seed = 5";
        execute(Command::Simulate, &ctx(text, a.path())).unwrap();
        execute(Command::Simulate, &ctx(text, b.path())).unwrap();
        let x = read_output(a.path(), "simulate.csv").unwrap();
        let y = read_output(b.path(), "simulate.csv").unwrap();
        assert_eq!(x, y);
        let digest = ExperimentConfig::parse(text).unwrap().digest();
        assert!(x.contains(&format!("# config_digest = {digest}")));
        assert!(x.contains("# master_seed = 5"));
        assert_eq!(x.lines().filter(|l| !l.starts_with('#')).count(), 51);
    }

    #[test]
    fn failed_verdicts_map_to_two() {
        assert_eq!(exit_code(&Err(Error::NotCentered { mean: 1.0 })), 2);
        assert_eq!(exit_code(&Err(Error::NotPsd { eigenvalue: -1.0 })), 2);
        assert_eq!(exit_code(&Err(Error::Config("x".into()))), 1);
    }
}
