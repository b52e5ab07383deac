// Built-in presets and a config-driven run through the harness, the same
// path the `fastslow` binary takes.

use fastslow::harness::{self, Command, ExperimentConfig, RunContext};
use fastslow::presets;
use fastslow::Result;

pub fn run() -> Result<()> {
    for name in presets::list() {
        let p = presets::by_name(name)?;
        println!("{name}: a_bar expected {:?}", p.expected_a_bar());
    }
    println!("{}", presets::hopf()?);

    let config = ExperimentConfig::parse(
        "preset = \"so4_hypoelliptic\"\nT = 0.5\npaths = 200\nmaster_seed = 4\n[poisson]\npaths = 5000\n",
    )?;
    println!("config digest {}", config.digest());
    let out = std::env::temp_dir().join(format!("fastslow-example-{}", std::process::id()));
    let ctx = RunContext::new(config, None, Some(out.clone()));
    for cmd in [Command::Hormander, Command::Poisson, Command::Simulate] {
        let outcome = harness::execute(cmd, &ctx)?;
        print!("{}", outcome.report);
    }
    println!(
        "{}",
        harness::read_output(&out, "simulate.csv")?
            .lines()
            .take(8)
            .collect::<Vec<_>>()
            .join("\n")
    );
    std::fs::remove_dir_all(&out)?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run()
}
