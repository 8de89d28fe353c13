//! Experiment configuration: a flat, typed key-value file with sections.
//!
//! The format is diffable provenance for runs; every error names the field
//! path that caused it. Example:
//!
//! ```text
//! [map]
//! family = beta
//! slopes = 2.05, 2.95
//!
//! [process]
//! kind = markov
//! transition = 0.95 0.05 ; 0.05 0.95
//!
//! [observable]
//! kind = cos2pi
//!
//! [ensemble]
//! mode = iid-sample
//! size = 16384
//!
//! [schedules]
//! n = 64, 256, 1024, 4096
//! k_max = 12
//! realizations = 100
//!
//! [bounds]
//! psi = fit
//! gamma = fit
//! zeta = 2.0
//! delta = 0.1
//!
//! [run]
//! seed = 42
//! workers = 2
//! output = out
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;

use anyhow::{anyhow, bail, Context, Result};
use qclt_core::maps::{Branch, BranchTable, Ensemble, MapSystem, Observable, ObservableKind};
use qclt_core::rng::StreamRng;
use qclt_core::selection::SelectionProcess;

/// Raw section -> key -> value view of the config text.
#[derive(Debug, Default)]
pub struct RawConfig {
    sections: BTreeMap<String, BTreeMap<String, String>>,
    /// Canonicalized text used for the config hash.
    canonical: String,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<RawConfig> {
        let mut sections: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        let mut current: Option<String> = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                let name = name.trim().to_string();
                sections.entry(name.clone()).or_default();
                current = Some(name);
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                anyhow!("line {}: expected `key = value`, got `{line}`", lineno + 1)
            })?;
            let section = current
                .clone()
                .ok_or_else(|| anyhow!("line {}: key outside any [section]", lineno + 1))?;
            let prev = sections
                .get_mut(&section)
                .unwrap()
                .insert(key.trim().to_string(), value.trim().to_string());
            if prev.is_some() {
                bail!("{section}.{}: duplicate key", key.trim());
            }
        }
        // the hash identifies the experiment: destination and parallelism
        // do not participate (identical results are required across both)
        let mut canonical = String::new();
        for (name, kv) in &sections {
            let _ = writeln!(canonical, "[{name}]");
            for (k, v) in kv {
                if name == "run" && (k == "output" || k == "workers") {
                    continue;
                }
                let _ = writeln!(canonical, "{k} = {v}");
            }
        }
        Ok(RawConfig {
            sections,
            canonical,
        })
    }

    fn get(&self, section: &str, key: &str) -> Result<&str> {
        self.sections
            .get(section)
            .ok_or_else(|| anyhow!("missing section [{section}]"))?
            .get(key)
            .map(|s| s.as_str())
            .ok_or_else(|| anyhow!("{section}.{key}: missing"))
    }

    fn get_opt(&self, section: &str, key: &str) -> Option<&str> {
        self.sections
            .get(section)
            .and_then(|kv| kv.get(key))
            .map(|s| s.as_str())
    }

    fn f64(&self, section: &str, key: &str) -> Result<f64> {
        self.get(section, key)?
            .parse::<f64>()
            .with_context(|| format!("{section}.{key}: not a number"))
    }

    fn usize(&self, section: &str, key: &str) -> Result<usize> {
        self.get(section, key)?
            .parse::<usize>()
            .with_context(|| format!("{section}.{key}: not a nonnegative integer"))
    }

    fn f64_list(&self, section: &str, key: &str) -> Result<Vec<f64>> {
        self.get(section, key)?
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .with_context(|| format!("{section}.{key}: bad entry `{}`", t.trim()))
            })
            .collect()
    }

    fn usize_list(&self, section: &str, key: &str) -> Result<Vec<usize>> {
        self.get(section, key)?
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .with_context(|| format!("{section}.{key}: bad entry `{}`", t.trim()))
            })
            .collect()
    }

    /// 64-bit FNV-1a hash of the canonical text; stamped into every output.
    pub fn hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self.canonical.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h
    }
}

/// Either a user-pinned decay parameter or a request to fit it from data.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BoundParam {
    Fixed(f64),
    Fit,
}

/// Fully parsed experiment configuration.
#[derive(Debug)]
pub struct ExperimentConfig {
    pub system: MapSystem,
    pub process: SelectionProcess,
    pub observable: Observable,
    pub ensemble_mode: EnsembleSpecMode,
    pub ensemble_size: usize,
    pub ensemble_support: (f64, f64),
    pub ns: Vec<usize>,
    pub k_max: usize,
    pub realizations: usize,
    pub psi: BoundParam,
    pub gamma: BoundParam,
    pub zeta: f64,
    pub delta: f64,
    pub seed: u64,
    pub workers: usize,
    pub output: String,
    pub hash: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnsembleSpecMode {
    IidSample,
    StratifiedGrid,
}

const ENSEMBLE_STREAM: u64 = 0x02;

impl ExperimentConfig {
    pub fn from_text(text: &str) -> Result<ExperimentConfig> {
        let raw = RawConfig::parse(text)?;

        let system = parse_map(&raw)?;
        let process = parse_process(&raw)?;
        check_alphabets(&system, &process)?;
        let observable = parse_observable(&raw, &system)?;

        let mode = match raw.get("ensemble", "mode")? {
            "iid-sample" => EnsembleSpecMode::IidSample,
            "stratified-grid" => EnsembleSpecMode::StratifiedGrid,
            other => bail!("ensemble.mode: unknown mode `{other}`"),
        };
        let size = raw.usize("ensemble", "size")?;
        if size == 0 {
            bail!("ensemble.size: must be positive");
        }
        let support = match raw.get_opt("ensemble", "support") {
            Some(_) => {
                let v = raw.f64_list("ensemble", "support")?;
                if v.len() != 2 {
                    bail!("ensemble.support: expected `lo, hi`");
                }
                (v[0], v[1])
            }
            None => (0.0, 1.0),
        };

        let ns = raw.usize_list("schedules", "n")?;
        if ns.is_empty() {
            bail!("schedules.n: must be nonempty");
        }
        if ns.windows(2).any(|w| w[0] >= w[1]) || ns[0] == 0 {
            bail!("schedules.n: must be ascending positive horizons");
        }
        let k_max = raw.usize("schedules", "k_max")?;
        let realizations = raw.usize("schedules", "realizations")?;
        if realizations == 0 {
            bail!("schedules.realizations: must be positive");
        }

        let bound_param = |key: &str| -> Result<BoundParam> {
            match raw.get("bounds", key)? {
                "fit" => Ok(BoundParam::Fit),
                v => Ok(BoundParam::Fixed(v.parse::<f64>().with_context(|| {
                    format!("bounds.{key}: not a number or `fit`")
                })?)),
            }
        };
        let psi = bound_param("psi")?;
        let gamma = bound_param("gamma")?;
        // zeta defaults to 2 (exponentially ergodic chains); delta to 0.1
        let zeta = match raw.get_opt("bounds", "zeta") {
            Some(_) => raw.f64("bounds", "zeta")?,
            None => 2.0,
        };
        let delta = match raw.get_opt("bounds", "delta") {
            Some(_) => raw.f64("bounds", "delta")?,
            None => 0.1,
        };
        if zeta <= 0.0 {
            bail!("bounds.zeta: must be positive");
        }
        if delta <= 0.0 {
            bail!("bounds.delta: must be positive");
        }

        // the seed is mandatory provenance: no wall-clock default
        let seed = raw
            .get("run", "seed")?
            .parse::<u64>()
            .context("run.seed: not a nonnegative integer")?;
        let workers = raw.usize("run", "workers")?;
        if workers == 0 {
            bail!("run.workers: must be >= 1");
        }
        let output = raw.get("run", "output")?.to_string();

        Ok(ExperimentConfig {
            system,
            process,
            observable,
            ensemble_mode: mode,
            ensemble_size: size,
            ensemble_support: support,
            ns,
            k_max,
            realizations,
            psi,
            gamma,
            zeta,
            delta,
            seed,
            workers,
            output,
            hash: raw.hash(),
        })
    }

    /// Build the configured base ensemble. Sample mode derives its points
    /// from the master seed through the ensemble stream.
    pub fn build_ensemble(&self) -> Result<Ensemble> {
        let (lo, hi) = self.ensemble_support;
        match self.ensemble_mode {
            EnsembleSpecMode::StratifiedGrid => {
                Ensemble::stratified_grid_on(lo, hi, self.ensemble_size).map_err(|e| anyhow!(e))
            }
            EnsembleSpecMode::IidSample => {
                let rng = StreamRng::new(self.seed).substream(ENSEMBLE_STREAM);
                Ensemble::iid_uniform_on(lo, hi, self.ensemble_size, &rng).map_err(|e| anyhow!(e))
            }
        }
    }
}

/// The process's letters must be valid inputs to the map family.
fn check_alphabets(system: &MapSystem, process: &SelectionProcess) -> Result<()> {
    use qclt_core::maps::MapFamily;
    match (system.family(), process.n_letters()) {
        (MapFamily::Doubling, _) => Ok(()),
        (MapFamily::BetaContinuous { lo, hi }, None) => {
            // letters are the slopes themselves; spot check the range ends
            for letter in [*lo, (lo + hi) / 2.0] {
                system
                    .parameter_of(letter)
                    .map_err(|e| anyhow!("map.range vs process.range: {e}"))?;
            }
            Ok(())
        }
        (MapFamily::BetaContinuous { .. }, Some(_)) => {
            bail!("map/process: a continuous-slope family needs an iid-continuous process")
        }
        (_, None) => bail!("map/process: a finite map family cannot take continuous letters"),
        (_, Some(k_proc)) => {
            let k_sys = system.n_letters().unwrap_or(usize::MAX);
            if k_proc > k_sys {
                bail!(
                    "map/process: process emits {k_proc} letters but the family defines {k_sys} maps"
                );
            }
            Ok(())
        }
    }
}

fn parse_map(raw: &RawConfig) -> Result<MapSystem> {
    match raw.get("map", "family")? {
        "doubling" => Ok(MapSystem::doubling()),
        "beta" => {
            let slopes = raw.f64_list("map", "slopes")?;
            MapSystem::beta(slopes).map_err(|e| anyhow!("map.slopes: {e}"))
        }
        "tent" => {
            let slopes = raw.f64_list("map", "slopes")?;
            MapSystem::tent(slopes).map_err(|e| anyhow!("map.slopes: {e}"))
        }
        "beta-continuous" => {
            let r = raw.f64_list("map", "range")?;
            if r.len() != 2 {
                bail!("map.range: expected `lo, hi`");
            }
            MapSystem::beta_continuous(r[0], r[1]).map_err(|e| anyhow!("map.range: {e}"))
        }
        "custom" => {
            // branch tables: table.<i> = from:to:y0:slope, from:to:y0:slope, ...
            let mut tables = Vec::new();
            for i in 0.. {
                let key = format!("table.{i}");
                let Some(spec) = raw.get_opt("map", &key) else {
                    break;
                };
                let mut branches = Vec::new();
                for part in spec.split(',') {
                    let nums: Vec<f64> = part
                        .split(':')
                        .map(|t| {
                            t.trim()
                                .parse::<f64>()
                                .with_context(|| format!("map.{key}: bad number `{}`", t.trim()))
                        })
                        .collect::<Result<_>>()?;
                    if nums.len() != 4 {
                        bail!("map.{key}: each branch is `from:to:y0:slope`");
                    }
                    branches.push(Branch {
                        from: nums[0],
                        to: nums[1],
                        y0: nums[2],
                        slope: nums[3],
                    });
                }
                tables.push(BranchTable { branches });
            }
            if tables.is_empty() {
                bail!("map.table.0: missing (custom family needs at least one table)");
            }
            MapSystem::custom(tables).map_err(|e| anyhow!("map.table: {e}"))
        }
        other => bail!("map.family: unknown family `{other}`"),
    }
}

fn parse_process(raw: &RawConfig) -> Result<SelectionProcess> {
    match raw.get("process", "kind")? {
        "iid" => {
            let w = raw.f64_list("process", "weights")?;
            SelectionProcess::iid(w).map_err(|e| anyhow!("process.weights: {e}"))
        }
        "one-letter" => Ok(SelectionProcess::one_letter()),
        "markov" | "ams-markov" => {
            let rows: Vec<Vec<f64>> = raw
                .get("process", "transition")?
                .split(';')
                .map(|row| {
                    row.split_whitespace()
                        .map(|t| {
                            t.parse::<f64>()
                                .with_context(|| format!("process.transition: bad entry `{t}`"))
                        })
                        .collect::<Result<Vec<f64>>>()
                })
                .collect::<Result<_>>()?;
            if raw.get("process", "kind")? == "markov" {
                SelectionProcess::markov(rows).map_err(|e| anyhow!("process.transition: {e}"))
            } else {
                let initial = raw.f64_list("process", "initial")?;
                SelectionProcess::ams_markov(rows, initial)
                    .map_err(|e| anyhow!("process.initial: {e}"))
            }
        }
        "iid-continuous" => {
            let r = raw.f64_list("process", "range")?;
            if r.len() != 2 {
                bail!("process.range: expected `lo, hi`");
            }
            SelectionProcess::iid_continuous(r[0], r[1]).map_err(|e| anyhow!("process.range: {e}"))
        }
        other => bail!("process.kind: unknown kind `{other}`"),
    }
}

fn parse_observable_kind(raw: &RawConfig, key_prefix: &str) -> Result<ObservableKind> {
    let kind_key = if key_prefix.is_empty() {
        "kind".to_string()
    } else {
        format!("{key_prefix}kind")
    };
    match raw.get("observable", &kind_key)? {
        "cos2pi" => Ok(ObservableKind::Cos2Pi),
        "sin2pi" => Ok(ObservableKind::Sin2Pi),
        "constant" => Ok(ObservableKind::Constant(raw.f64("observable", "value")?)),
        "coboundary" => {
            let letter = raw.f64("observable", "letter")?;
            let inner = match raw.get("observable", "inner")? {
                "cos2pi" => ObservableKind::Cos2Pi,
                "sin2pi" => ObservableKind::Sin2Pi,
                other => bail!("observable.inner: unsupported inner `{other}`"),
            };
            Ok(ObservableKind::Coboundary {
                inner: Box::new(inner),
                letter,
            })
        }
        "pwl" => {
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for part in raw.get("observable", "nodes")?.split(',') {
                let (x, y) = part
                    .trim()
                    .split_once(':')
                    .ok_or_else(|| anyhow!("observable.nodes: each node is `x:y`"))?;
                xs.push(x.trim().parse::<f64>().context("observable.nodes: bad x")?);
                ys.push(y.trim().parse::<f64>().context("observable.nodes: bad y")?);
            }
            if xs.len() < 2 {
                bail!("observable.nodes: need at least two nodes");
            }
            if xs.windows(2).any(|w| w[0] >= w[1]) {
                bail!("observable.nodes: x must be strictly increasing");
            }
            Ok(ObservableKind::PiecewiseLinear { xs, ys })
        }
        other => bail!("observable.kind: unknown kind `{other}`"),
    }
}

fn parse_observable(raw: &RawConfig, system: &MapSystem) -> Result<Observable> {
    let kind = parse_observable_kind(raw, "")?;
    if let ObservableKind::Coboundary { letter, .. } = &kind {
        system
            .parameter_of(*letter)
            .map_err(|e| anyhow!("observable.letter: {e}"))?;
    }
    Ok(Observable::scalar(kind))
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = "\
[map]
family = beta
slopes = 2.05, 2.95

[process]
kind = markov
transition = 0.95 0.05 ; 0.05 0.95

[observable]
kind = cos2pi

[ensemble]
mode = iid-sample
size = 1024

[schedules]
n = 16, 64
k_max = 8
realizations = 10

[bounds]
psi = fit
gamma = 2.0
zeta = 2.0
delta = 0.1

[run]
seed = 42
workers = 2
output = out
";

    #[test]
    fn parses_a_complete_config() {
        let cfg = ExperimentConfig::from_text(GOOD).unwrap();
        assert_eq!(cfg.ns, vec![16, 64]);
        assert_eq!(cfg.psi, BoundParam::Fit);
        assert_eq!(cfg.gamma, BoundParam::Fixed(2.0));
        assert_eq!(cfg.seed, 42);
        let ens = cfg.build_ensemble().unwrap();
        assert_eq!(ens.len(), 1024);
    }

    #[test]
    fn hash_is_stable_under_formatting_noise() {
        let a = RawConfig::parse(GOOD).unwrap();
        let b = RawConfig::parse(&GOOD.replace(" = ", "   =   ")).unwrap();
        assert_eq!(a.hash(), b.hash());
    }

    #[test]
    fn field_paths_appear_in_errors() {
        let bad = GOOD.replace("seed = 42", "");
        let err = ExperimentConfig::from_text(&bad).unwrap_err();
        assert!(format!("{err:#}").contains("run.seed"), "{err:#}");
        let bad = GOOD.replace("size = 1024", "size = -3");
        let err = ExperimentConfig::from_text(&bad).unwrap_err();
        assert!(format!("{err:#}").contains("ensemble.size"), "{err:#}");
        let bad = GOOD.replace(
            "transition = 0.95 0.05 ; 0.05 0.95",
            "transition = 0.9 0.2 ; 0.05 0.95",
        );
        let err = ExperimentConfig::from_text(&bad).unwrap_err();
        assert!(format!("{err:#}").contains("process.transition"), "{err:#}");
    }

    #[test]
    fn custom_table_family_parses() {
        let cfg_text = GOOD.replace(
            "family = beta\nslopes = 2.05, 2.95",
            "family = custom\n\
             table.0 = 0.0:0.5:0.0:2.0, 0.5:1.0:0.0:2.0\n\
             table.1 = 0.0:0.4:0.0:2.5, 0.4:1.0:0.0:1.6666666666666667",
        );
        let cfg = ExperimentConfig::from_text(&cfg_text).unwrap();
        assert_eq!(cfg.system.n_letters(), Some(2));
    }

    #[test]
    fn alphabet_mismatch_is_rejected() {
        let cfg_text = GOOD.replace("slopes = 2.05, 2.95", "slopes = 2.05");
        let err = ExperimentConfig::from_text(&cfg_text).unwrap_err();
        assert!(format!("{err:#}").contains("map/process"), "{err:#}");
    }
}
