//! Experiment runner for quenched central-limit statistics of random
//! interval-map compositions.
//!
//! Subcommands:
//!   simulate   --config FILE [--workers N]   full bundle + manifest
//!   variance   --config FILE [--workers N]   quenched statistics only
//!   limit      --config FILE [--route R]     limit-variance routes
//!   rates      --psi X --gamma X --zeta X --delta X [--n N]
//!   positivity --config FILE                 growth verdict
//!   clt        --config FILE                 normal-approximation distances
//!   audit                                    built-in invariant suite
//!
//! Exit code 0 iff everything requested passed.

mod audit;
mod config;
mod runner;

use std::collections::HashMap;
use std::fs;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};

use config::ExperimentConfig;

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    match dispatch(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn parse_flags(args: &[String]) -> Result<HashMap<String, String>> {
    let mut out = HashMap::new();
    let mut it = args.iter();
    while let Some(flag) = it.next() {
        let name = flag
            .strip_prefix("--")
            .ok_or_else(|| anyhow!("expected a --flag, got `{flag}`"))?;
        let value = it.next().ok_or_else(|| anyhow!("--{name} needs a value"))?;
        out.insert(name.to_string(), value.clone());
    }
    Ok(out)
}

fn load_config(flags: &HashMap<String, String>) -> Result<ExperimentConfig> {
    let path = flags
        .get("config")
        .ok_or_else(|| anyhow!("--config FILE is required"))?;
    let text = fs::read_to_string(path).with_context(|| format!("reading {path}"))?;
    let mut cfg = ExperimentConfig::from_text(&text)?;
    if let Some(w) = flags.get("workers") {
        cfg.workers = w
            .parse::<usize>()
            .context("--workers: not a positive integer")?;
        if cfg.workers == 0 {
            bail!("--workers must be >= 1");
        }
    }
    if let Some(out) = flags.get("output") {
        cfg.output = out.clone();
    }
    Ok(cfg)
}

fn dispatch(args: &[String]) -> Result<bool> {
    let Some(cmd) = args.first() else {
        bail!("usage: qclt <simulate|variance|limit|rates|positivity|clt|audit> [flags]");
    };
    let flags = parse_flags(&args[1..])?;
    match cmd.as_str() {
        "simulate" => {
            let cfg = load_config(&flags)?;
            let (manifest, consistent) = runner::run(cfg)?;
            println!("manifest: {}", manifest.display());
            if !consistent {
                println!("route consistency: FAILED");
            }
            Ok(consistent)
        }
        "variance" => {
            let cfg = load_config(&flags)?;
            let mut r = runner::Runner::new(cfg)?;
            let bounds = r.resolve_bounds()?;
            r.section_mixing()?;
            r.section_quenched()?;
            let manifest = r.write_manifest(&bounds)?;
            println!("manifest: {}", manifest.display());
            Ok(true)
        }
        "limit" => {
            let cfg = load_config(&flags)?;
            let route = flags
                .get("route")
                .map(|s| s.as_str())
                .unwrap_or("all")
                .to_string();
            let mut r = runner::Runner::new(cfg)?;
            let bounds = r.resolve_bounds()?;
            let outcome = r.section_limit(&route, &bounds)?;
            let manifest = r.write_manifest(&bounds)?;
            println!("manifest: {}", manifest.display());
            if let Some(s) = outcome.sigma_sq {
                println!("sigma_sq ({route}): {s}");
            }
            println!(
                "route consistency: {}",
                if outcome.consistent { "pass" } else { "FAILED" }
            );
            Ok(outcome.consistent)
        }
        "rates" => {
            let get = |k: &str| -> Result<f64> {
                flags
                    .get(k)
                    .ok_or_else(|| anyhow!("--{k} is required"))?
                    .parse::<f64>()
                    .with_context(|| format!("--{k}: not a number"))
            };
            let (psi, gamma, zeta, delta) =
                (get("psi")?, get("gamma")?, get("zeta")?, get("delta")?);
            let fluct =
                qclt_core::rates::fluctuation_rate(psi, gamma, delta).map_err(|e| anyhow!(e))?;
            let mean =
                qclt_core::rates::mean_convergence_rate(psi, zeta).map_err(|e| anyhow!(e))?;
            let main =
                qclt_core::rates::main_rate(psi, gamma, zeta, delta).map_err(|e| anyhow!(e))?;
            println!("fluctuation rate:      {}", fluct.numeric_description());
            println!("mean-convergence rate: {}", mean.numeric_description());
            println!("{}", main.numeric_description());
            if let Some(n) = flags.get("n") {
                let n = n.parse::<usize>().context("--n: not an integer")?;
                println!(
                    "value at n = {n}: {}",
                    main.eval(n).map_err(|e| anyhow!(e))?
                );
            }
            Ok(true)
        }
        "positivity" => {
            let cfg = load_config(&flags)?;
            let mut r = runner::Runner::new(cfg)?;
            let bounds = r.resolve_bounds()?;
            r.section_positivity(&bounds)?;
            let manifest = r.write_manifest(&bounds)?;
            println!("manifest: {}", manifest.display());
            Ok(true)
        }
        "clt" => {
            let cfg = load_config(&flags)?;
            let mut r = runner::Runner::new(cfg)?;
            let bounds = r.resolve_bounds()?;
            let outcome = r.section_limit("vk", &bounds)?;
            r.section_clt(outcome.sigma_sq.unwrap_or(0.0))?;
            let manifest = r.write_manifest(&bounds)?;
            println!("manifest: {}", manifest.display());
            Ok(true)
        }
        "audit" => audit::run_audit(),
        other => bail!("unknown subcommand `{other}`"),
    }
}
