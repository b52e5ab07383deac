//! Ready-made fast–slow systems on SU(2), SO(n) and SO(4).
//!
//! Each system has the form `g = y·z` reduced to `ẏ = y Σ α_k(z) Y_k` with
//! `α_k(z) = ⟨Ad(z) Y_0, m_k⟩`, where `m` is the orthogonal complement of the
//! fast subalgebra.

use std::fmt;

use crate::effective::{build_effective, EffectiveSDE};
use crate::error::{invalid, Result};
use crate::fast::{FastGroup, FastSpec};
use crate::geometry::{exp_map, pauli, AlgebraVector, GroupElement, GroupSpec};
use crate::multiscale::MultiscaleSystem;
use crate::observable::Observable;
use crate::poisson::{
    adjoint_alpha, averaged_matrix, solve_poisson_mc_all, solve_poisson_spectral, AveragedModel,
    PoissonSolution, ResolventConfig,
};

/// Scale used when a preset is built without an explicit ε.
pub const DEFAULT_EPSILON: f64 = 0.1;

/// How a reference value was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Origin {
    /// Worked out by hand and checked by the named independent oracle.
    Derived { oracle: &'static str },
    /// Produced by this crate's own numerics; a candidate, not a reference.
    Computed { method: &'static str },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ExpectedValue {
    Scalar(f64),
    /// `c·I` of the given size.
    ScalarMatrix {
        size: usize,
        diagonal: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Expected {
    pub quantity: &'static str,
    pub value: ExpectedValue,
    pub origin: Origin,
}

/// How the Poisson equation of a preset is solved.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PoissonPlan {
    Spectral,
    MonteCarlo(ResolventConfig),
}

#[derive(Clone, Debug)]
pub struct Preset {
    pub name: String,
    pub system: MultiscaleSystem,
    pub expected: Vec<Expected>,
    pub poisson: PoissonPlan,
}

/// Names accepted by [`by_name`].
pub fn list() -> Vec<&'static str> {
    vec![
        "hopf",
        "so3_interpolation",
        "so4_interpolation",
        "so5_interpolation",
        "so4_hypoelliptic",
        "so4_hypoelliptic_k2",
        "so4_hypoelliptic_k3",
    ]
}

pub fn by_name(name: &str) -> Result<Preset> {
    match name {
        "hopf" => hopf(),
        "so3_interpolation" => so_n_interpolation(3),
        "so4_interpolation" => so_n_interpolation(4),
        "so5_interpolation" => so_n_interpolation(5),
        "so4_hypoelliptic" => so4_hypoelliptic(1),
        "so4_hypoelliptic_k2" => so4_hypoelliptic(2),
        "so4_hypoelliptic_k3" => so4_hypoelliptic(3),
        _ => Err(invalid(format!(
            "unknown preset '{name}'; known: {}",
            list().join(", ")
        ))),
    }
}

fn assemble(
    name: String,
    fast: FastSpec,
    y0_field: AlgebraVector,
    m_basis: Vec<AlgebraVector>,
    expected: Vec<Expected>,
) -> Result<Preset> {
    let spec = *fast.group();
    let alphas = adjoint_alpha(&y0_field, &m_basis, &fast)?;
    let poisson = match fast.subgroup() {
        FastGroup::Torus(_) => PoissonPlan::Spectral,
        _ => PoissonPlan::MonteCarlo(ResolventConfig::default()),
    };
    let id = GroupElement::identity(spec);
    let system = MultiscaleSystem::new(m_basis, fast, alphas, id, id)?;
    Ok(Preset {
        name,
        system,
        expected,
        poisson,
    })
}

/// SU(2), fast circle generated by `X1`, `Y_0 = X2`, `m = span{X2, X3}`.
pub fn hopf() -> Result<Preset> {
    let [x1, x2, x3] = pauli();
    let fast = FastSpec::new(GroupSpec::su(2), vec![x1], None, DEFAULT_EPSILON)?;
    let expected = vec![
        Expected {
            quantity: "a_bar",
            value: ExpectedValue::ScalarMatrix {
                size: 2,
                diagonal: -0.25,
            },
            origin: Origin::Derived {
                oracle: "torus quadrature of alpha_i * beta_j with beta = -alpha/2",
            },
        },
        Expected {
            quantity: "horizontal_generator_coefficient",
            value: ExpectedValue::Scalar(0.25),
            origin: Origin::Computed {
                method: "-a_bar diagonal; limit generator (1/4)(L_X2^2 + L_X3^2)",
            },
        },
        Expected {
            quantity: "fast_bracket_dim",
            value: ExpectedValue::Scalar(1.0),
            origin: Origin::Derived {
                oracle: "bracket closure of an abelian fast algebra",
            },
        },
    ];
    assemble("hopf".into(), fast, x2, vec![x2, x3], expected)
}

/// SO(n), fast so(n−1) block with its full basis, `Y_0 = A_{1n}`,
/// `m = span{A_{kn}}`.
pub fn so_n_interpolation(n: usize) -> Result<Preset> {
    if !(3..=5).contains(&n) {
        return Err(invalid(format!(
            "interpolation preset needs 3 ≤ n ≤ 5, got {n}"
        )));
    }
    let spec = GroupSpec::so(n);
    let mut fields = Vec::new();
    for i in 1..n {
        for j in (i + 1)..n {
            fields.push(spec.so_generator(i, j));
        }
    }
    let fast = FastSpec::new(spec, fields, None, DEFAULT_EPSILON)?;
    let m_basis: Vec<AlgebraVector> = (1..n).map(|k| spec.so_generator(k, n)).collect();
    let c = -4.0 / ((n - 2) * (n - 1)) as f64;
    let expected = vec![
        Expected {
            quantity: "a_bar",
            value: ExpectedValue::ScalarMatrix {
                size: n - 1,
                diagonal: c,
            },
            origin: Origin::Computed {
                method:
                    "torus quadrature (n = 3) or exact invariant projection with resolvent beta",
            },
        },
        Expected {
            quantity: "sphere_generator_coefficient",
            value: ExpectedValue::Scalar(-c / 2.0),
            origin: Origin::Computed {
                method: "half of -a_bar diagonal",
            },
        },
        Expected {
            quantity: "fast_bracket_dim",
            value: ExpectedValue::Scalar(((n - 1) * (n - 2) / 2) as f64),
            origin: Origin::Derived {
                oracle: "bracket closure of the so(n-1) basis",
            },
        },
    ];
    assemble(
        format!("so{n}_interpolation"),
        fast,
        spec.so_generator(1, n),
        m_basis,
        expected,
    )
}

/// SO(4), fast fields `{A12, A13}` (bracket `A23` closes so(3)),
/// `Y_0 = A_{k4}`, `m = span{A14, A24, A34}`.
pub fn so4_hypoelliptic(k: usize) -> Result<Preset> {
    if !(1..=3).contains(&k) {
        return Err(invalid(format!("k must be 1, 2 or 3, got {k}")));
    }
    let spec = GroupSpec::so(4);
    let fast = FastSpec::new(
        spec,
        vec![spec.so_generator(1, 2), spec.so_generator(1, 3)],
        None,
        DEFAULT_EPSILON,
    )?;
    let m_basis: Vec<AlgebraVector> = (1..=3).map(|i| spec.so_generator(i, 4)).collect();
    let diagonal = if k == 1 { -2.0 / 3.0 } else { -4.0 / 3.0 };
    let expected = vec![
        Expected {
            quantity: "a_bar",
            value: ExpectedValue::ScalarMatrix { size: 3, diagonal },
            origin: Origin::Derived {
                oracle: "eigenvalue of (A12^2 + A13^2)/2 on the k-th rotation column, times mean(R_jk^2) = 1/3",
            },
        },
        Expected {
            quantity: "fast_bracket_dim",
            value: ExpectedValue::Scalar(3.0),
            origin: Origin::Derived {
                oracle: "[A12, A13] spans A23",
            },
        },
    ];
    let name = if k == 1 {
        "so4_hypoelliptic".to_string()
    } else {
        format!("so4_hypoelliptic_k{k}")
    };
    let mut preset = assemble(name, fast, spec.so_generator(k, 4), m_basis, expected)?;
    if k > 1 {
        // the slowest mode decorrelates as e^{-t/4}
        preset.poisson = PoissonPlan::MonteCarlo(ResolventConfig {
            tail_t: 40.0,
            ..ResolventConfig::default()
        });
    }
    Ok(preset)
}

impl Preset {
    pub fn with_epsilon(mut self, epsilon: f64) -> Result<Self> {
        self.system = self.system.with_epsilon(epsilon)?;
        Ok(self)
    }

    /// Sets `y_0 = exp(Σ c_i e_i)` in the declared algebra basis.
    pub fn with_initial_coords(mut self, coords: &[f64]) -> Result<Self> {
        let spec = *self.system.slow_group();
        let y0 = exp_map(&AlgebraVector::from_coords(spec, coords)?);
        self.system = self.system.with_initial(y0, *self.system.z0())?;
        Ok(self)
    }

    pub fn with_poisson(mut self, plan: PoissonPlan) -> Self {
        self.poisson = plan;
        self
    }

    pub fn alphas(&self) -> &[Observable] {
        self.system.alphas()
    }

    pub fn solve_poisson(&self) -> Result<Vec<PoissonSolution>> {
        let fast = self.system.fast();
        match self.poisson {
            PoissonPlan::Spectral => self
                .alphas()
                .iter()
                .map(|a| solve_poisson_spectral(a, fast))
                .collect(),
            PoissonPlan::MonteCarlo(cfg) => solve_poisson_mc_all(self.alphas(), fast, &cfg),
        }
    }

    pub fn averaged_model(&self) -> Result<AveragedModel> {
        let betas: Vec<Observable> = self.solve_poisson()?.into_iter().map(|s| s.beta).collect();
        self.averaged_model_from(&betas)
    }

    pub fn averaged_model_from(&self, betas: &[Observable]) -> Result<AveragedModel> {
        averaged_matrix(self.alphas(), betas, self.system.fast())
    }

    pub fn effective_sde(&self) -> Result<EffectiveSDE> {
        build_effective(&self.averaged_model()?, self.system.slow_fields())
    }

    /// The recorded `ā`, if any.
    pub fn expected_a_bar(&self) -> Option<(usize, f64)> {
        self.expected
            .iter()
            .find_map(|e| match (e.quantity, e.value) {
                ("a_bar", ExpectedValue::ScalarMatrix { size, diagonal }) => Some((size, diagonal)),
                _ => None,
            })
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sys = &self.system;
        let fast = sys.fast();
        writeln!(f, "name = {}", self.name)?;
        writeln!(f, "group = {}", sys.slow_group())?;
        writeln!(f, "epsilon = {}", sys.epsilon())?;
        let sub = match fast.subgroup() {
            FastGroup::Trivial => "trivial".to_string(),
            FastGroup::Torus(c) => format!("circle (period {:.6})", c.period()),
            FastGroup::Block { size } => format!("leading {size}x{size} block"),
            FastGroup::Whole => "whole group".to_string(),
        };
        writeln!(f, "fast_subgroup = {sub}")?;
        for (i, x) in fast.diffusion_fields().iter().enumerate() {
            writeln!(f, "fast_field_{} = {:?}", i + 1, x.coords())?;
        }
        writeln!(f, "fast_drift = {:?}", fast.drift().coords())?;
        for (i, y) in sys.slow_fields().iter().enumerate() {
            writeln!(f, "slow_field_{} = {:?}", i + 1, y.coords())?;
        }
        let plan = match self.poisson {
            PoissonPlan::Spectral => "spectral".to_string(),
            PoissonPlan::MonteCarlo(c) => {
                format!("monte_carlo (tail_T {}, paths {})", c.tail_t, c.paths)
            }
        };
        writeln!(f, "poisson = {plan}")?;
        for e in &self.expected {
            let value = match e.value {
                ExpectedValue::Scalar(v) => format!("{v}"),
                ExpectedValue::ScalarMatrix { size, diagonal } => format!("{diagonal} * I_{size}"),
            };
            let origin = match e.origin {
                Origin::Derived { oracle } => format!("derived; oracle: {oracle}"),
                Origin::Computed { method } => format!("computed candidate; method: {method}"),
            };
            writeln!(f, "expected.{} = {value} ({origin})", e.quantity)?;
        }
        Ok(())
    }
}
