//! Flat `section.key = value` experiment configuration.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use treecast_core::adversary::AdversaryBudget;
use treecast_core::Spin;

use crate::error::{HarnessError, Result};

/// Every accepted key with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("experiment.id", "experiment to run"),
    ("tree.arity", "children per internal node (list)"),
    ("tree.depth", "levels below the root (list)"),
    ("model.epsilon", "broadcast copy bias in [0, 1) (list)"),
    ("model.psi", "leaf channel fidelity in (0, 1], or `random`"),
    ("coupling.epsilon", "coupling half-bias in [0, 1/2) (list)"),
    ("adversary.budget", "none | semirandom | fraction | cflip | spread"),
    ("adversary.rho", "corruption rate (list)"),
    ("adversary.c", "flip budget per block or in total"),
    ("adversary.k", "block height"),
    ("adversary.strategy", "none | signpush | greedy | bruteforce | coupling"),
    ("adversary.target", "against | toward the true root"),
    ("robust.delta", "target accuracy in (0, 1]"),
    ("run.trials", "Monte Carlo trials per point"),
    ("run.seed", "master seed"),
    ("run.engine", "tree | population | auto"),
    ("run.population", "population size for the population engine"),
    ("run.mode", "experiment-specific mode"),
    ("output.path", "CSV output path"),
];

const ALIASES: &[(&str, &str)] = &[
    ("id", "experiment.id"),
    ("b", "tree.arity"),
    ("arity", "tree.arity"),
    ("t", "tree.depth"),
    ("depth", "tree.depth"),
    ("epsilon", "model.epsilon"),
    ("psi", "model.psi"),
    ("rho", "adversary.rho"),
    ("strategy", "adversary.strategy"),
    ("trials", "run.trials"),
    ("seed", "run.seed"),
    ("engine", "run.engine"),
    ("mode", "run.mode"),
];

pub const EXPERIMENTS: &[&str] = &[
    "bp_exactness",
    "ks_threshold",
    "contraction",
    "moment_checks",
    "lowerbound_tv",
    "semirandom_robustness",
    "spread_robustness",
    "inequality_grid",
    "psi_bound",
];

/// Resolves an alias or full key; errors on anything unknown.
pub fn canonical_key(key: &str) -> Result<&'static str> {
    if let Some(&(k, _)) = KEYS.iter().find(|(k, _)| *k == key) {
        return Ok(k);
    }
    if let Some(&(_, k)) = ALIASES.iter().find(|(a, _)| *a == key) {
        return Ok(k);
    }
    Err(HarnessError::config(key, "unknown key"))
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_flat(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| HarnessError::Syntax {
            line: i + 1,
            message: format!("expected `key = value`, got {line:?}"),
        })?;
        let key = canonical_key(k.trim())?;
        map.insert(key.to_string(), v.trim().to_string());
    }
    Ok(map)
}

/// Reads a flat config file, or the `config` object of a JSON sidecar.
pub fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })?;
    if text.trim_start().starts_with('{') {
        let v: serde_json::Value = serde_json::from_str(&text)?;
        let obj = v
            .get("config")
            .and_then(|c| c.as_object())
            .ok_or_else(|| HarnessError::config("config", "JSON sidecar has no `config` object"))?;
        let mut map = BTreeMap::new();
        for (k, val) in obj {
            let s = val
                .as_str()
                .ok_or_else(|| HarnessError::config(k.clone(), "sidecar values must be strings"))?;
            map.insert(canonical_key(k)?.to_string(), s.to_string());
        }
        Ok(map)
    } else {
        parse_flat(&text)
    }
}

/// Applies `key=value` overrides on top of `map`.
pub fn apply_overrides(map: &mut BTreeMap<String, String>, overrides: &[String]) -> Result<()> {
    for o in overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| HarnessError::config(o.clone(), "override must look like key=value"))?;
        let key = canonical_key(k.trim())?;
        map.insert(key.to_string(), v.trim().to_string());
    }
    Ok(())
}

pub fn load_config(path: &Path, overrides: &[String]) -> Result<ExperimentConfig> {
    let mut map = read_config_file(path)?;
    apply_overrides(&mut map, overrides)?;
    ExperimentConfig::from_map(map)
}

#[derive(Debug, Clone, Copy)]
pub enum PsiSetting {
    Fixed(f64),
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Engine {
    Tree,
    Population,
    Auto,
}

/// Whether an attack pushes leaves toward the true root spin or away from it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Against,
    Toward,
}

impl Target {
    pub fn spin(self, root: Spin) -> Spin {
        match self {
            Target::Against => -root,
            Target::Toward => root,
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Target::Against => "against",
            Target::Toward => "toward",
        })
    }
}

impl PartialEq for PsiSetting {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (PsiSetting::Fixed(a), PsiSetting::Fixed(b)) => a == b,
            (PsiSetting::Random, PsiSetting::Random) => true,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub id: String,
    pub arity: Vec<usize>,
    pub depth: Vec<usize>,
    pub epsilon: Vec<f64>,
    pub psi: PsiSetting,
    pub coupling_epsilon: Vec<f64>,
    pub budget: Option<String>,
    pub rho: Vec<f64>,
    pub c: Option<usize>,
    pub k: Option<usize>,
    pub strategy: Option<String>,
    pub target: Target,
    pub delta: Option<f64>,
    pub trials: usize,
    pub seed: u64,
    pub engine: Engine,
    pub population: Option<usize>,
    pub mode: Option<String>,
    pub output: Option<String>,
    /// Every key as given, for echoing into the sidecar.
    pub raw: BTreeMap<String, String>,
}

fn scalar<T: FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    v.parse::<T>()
        .map_err(|e| HarnessError::config(key, format!("cannot parse {v:?}: {e}")))
}

fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    let out: Vec<T> = v
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| scalar(key, s))
        .collect::<Result<_>>()?;
    if out.is_empty() {
        return Err(HarnessError::config(key, "empty list"));
    }
    Ok(out)
}

fn check_range(key: &str, values: &[f64], lo: f64, hi: f64, hi_inclusive: bool, lo_inclusive: bool) -> Result<()> {
    for &v in values {
        let above = if lo_inclusive { v >= lo } else { v > lo };
        let below = if hi_inclusive { v <= hi } else { v < hi };
        if !(above && below) {
            let l = if lo_inclusive { '[' } else { '(' };
            let h = if hi_inclusive { ']' } else { ')' };
            return Err(HarnessError::config(key, format!("{v} is outside the range {l}{lo}, {hi}{h}")));
        }
    }
    Ok(())
}

fn one_of(key: &str, v: &str, allowed: &[&str]) -> Result<String> {
    if allowed.contains(&v) {
        Ok(v.to_string())
    } else {
        Err(HarnessError::config(key, format!("{v:?} is not one of {}", allowed.join(", "))))
    }
}

impl ExperimentConfig {
    pub fn from_map(raw: BTreeMap<String, String>) -> Result<Self> {
        let get = |k: &str| raw.get(k).map(String::as_str);
        let need = |k: &str| get(k).ok_or_else(|| HarnessError::config(k, "missing required key"));

        let id = one_of("experiment.id", need("experiment.id")?, EXPERIMENTS)?;
        let arity = get("tree.arity").map(|v| list::<usize>("tree.arity", v)).transpose()?.unwrap_or_default();
        if arity.contains(&0) {
            return Err(HarnessError::config("tree.arity", "arity must be at least 1"));
        }
        let depth = get("tree.depth").map(|v| list::<usize>("tree.depth", v)).transpose()?.unwrap_or_default();
        let epsilon = get("model.epsilon").map(|v| list::<f64>("model.epsilon", v)).transpose()?.unwrap_or_default();
        check_range("model.epsilon", &epsilon, 0.0, 1.0, false, true)?;
        let psi = match get("model.psi") {
            None => PsiSetting::Fixed(1.0),
            Some("random") => PsiSetting::Random,
            Some(v) => {
                let p: f64 = scalar("model.psi", v)?;
                check_range("model.psi", &[p], 0.0, 1.0, true, false)?;
                PsiSetting::Fixed(p)
            }
        };
        let coupling_epsilon = get("coupling.epsilon")
            .map(|v| list::<f64>("coupling.epsilon", v))
            .transpose()?
            .unwrap_or_default();
        check_range("coupling.epsilon", &coupling_epsilon, 0.0, 0.5, false, true)?;
        let budget = get("adversary.budget")
            .map(|v| one_of("adversary.budget", v, &["none", "semirandom", "fraction", "cflip", "spread"]))
            .transpose()?;
        let rho = get("adversary.rho").map(|v| list::<f64>("adversary.rho", v)).transpose()?.unwrap_or_default();
        check_range("adversary.rho", &rho, 0.0, 1.0, true, true)?;
        let c = get("adversary.c").map(|v| scalar::<usize>("adversary.c", v)).transpose()?;
        let k = get("adversary.k").map(|v| scalar::<usize>("adversary.k", v)).transpose()?;
        if k == Some(0) {
            return Err(HarnessError::config("adversary.k", "block height must be at least 1"));
        }
        let strategy = get("adversary.strategy")
            .map(|v| one_of("adversary.strategy", v, &["none", "signpush", "greedy", "bruteforce", "coupling"]))
            .transpose()?;
        let target = match get("adversary.target") {
            None | Some("against") => Target::Against,
            Some("toward") => Target::Toward,
            Some(v) => return Err(HarnessError::config("adversary.target", format!("{v:?} is not one of against, toward"))),
        };
        let delta = get("robust.delta").map(|v| scalar::<f64>("robust.delta", v)).transpose()?;
        if let Some(d) = delta {
            check_range("robust.delta", &[d], 0.0, 1.0, true, false)?;
        }
        let trials: usize = scalar("run.trials", need("run.trials")?)?;
        if trials == 0 {
            return Err(HarnessError::config("run.trials", "must be at least 1"));
        }
        let seed: u64 = scalar("run.seed", need("run.seed")?)?;
        let engine = match get("run.engine") {
            None | Some("auto") => Engine::Auto,
            Some("tree") => Engine::Tree,
            Some("population") => Engine::Population,
            Some(v) => return Err(HarnessError::config("run.engine", format!("{v:?} is not one of tree, population, auto"))),
        };
        let population = get("run.population").map(|v| scalar::<usize>("run.population", v)).transpose()?;
        if population == Some(0) {
            return Err(HarnessError::config("run.population", "must be at least 1"));
        }
        let mode = get("run.mode").map(str::to_string);
        let output = get("output.path").map(str::to_string);
        Ok(ExperimentConfig {
            id,
            arity,
            depth,
            epsilon,
            psi,
            coupling_epsilon,
            budget,
            rho,
            c,
            k,
            strategy,
            target,
            delta,
            trials,
            seed,
            engine,
            population,
            mode,
            output,
            raw,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_map(parse_flat(text)?)
    }

    /// Parses `text` and applies `overrides`.
    pub fn parse_with(text: &str, overrides: &[&str]) -> Result<Self> {
        let mut map = parse_flat(text)?;
        let owned: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
        apply_overrides(&mut map, &owned)?;
        Self::from_map(map)
    }

    pub fn require_arity(&self) -> Result<&[usize]> {
        non_empty("tree.arity", &self.arity)
    }

    pub fn require_depth(&self) -> Result<&[usize]> {
        non_empty("tree.depth", &self.depth)
    }

    pub fn require_epsilon(&self) -> Result<&[f64]> {
        non_empty("model.epsilon", &self.epsilon)
    }

    pub fn require_coupling_epsilon(&self) -> Result<&[f64]> {
        non_empty("coupling.epsilon", &self.coupling_epsilon)
    }

    pub fn require_rho(&self) -> Result<&[f64]> {
        non_empty("adversary.rho", &self.rho)
    }

    pub fn require_c(&self) -> Result<usize> {
        self.c.ok_or_else(|| HarnessError::config("adversary.c", "missing required key"))
    }

    pub fn require_delta(&self) -> Result<f64> {
        self.delta.ok_or_else(|| HarnessError::config("robust.delta", "missing required key"))
    }

    pub fn strategy_or(&self, default: &str) -> String {
        self.strategy.clone().unwrap_or_else(|| default.to_string())
    }

    /// The budget for corruption rate `rho`, from `adversary.budget`.
    pub fn budget_for(&self, rho: f64) -> Result<Option<AdversaryBudget>> {
        Ok(match self.budget.as_deref().unwrap_or("semirandom") {
            "none" => None,
            "semirandom" => {
                if rho >= 1.0 {
                    return Err(HarnessError::config("adversary.rho", "semirandom rho must be below 1"));
                }
                Some(AdversaryBudget::SemirandomRho(rho))
            }
            "fraction" => Some(AdversaryBudget::FractionRho(rho)),
            "cflip" => Some(AdversaryBudget::CFlip(self.require_c()?)),
            "spread" => Some(AdversaryBudget::SpreadCK {
                c: self.require_c()?,
                k: self.k.ok_or_else(|| HarnessError::config("adversary.k", "missing required key"))?,
            }),
            _ => unreachable!("validated"),
        })
    }
}

fn non_empty<'a, T>(key: &str, v: &'a [T]) -> Result<&'a [T]> {
    if v.is_empty() {
        Err(HarnessError::config(key, "missing required key"))
    } else {
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "experiment.id = ks_threshold\ntree.arity = 2, 3\ntree.depth=4\nmodel.epsilon = 0.5\nrun.trials = 100\nrun.seed = 7 # comment\n";

    #[test]
    fn parses_lists_and_comments() {
        let c = ExperimentConfig::parse(BASE).unwrap();
        assert_eq!(c.arity, vec![2, 3]);
        assert_eq!(c.trials, 100);
        assert_eq!(c.seed, 7);
        assert_eq!(c.psi, PsiSetting::Fixed(1.0));
    }

    #[test]
    fn overrides_apply_last() {
        let c = ExperimentConfig::parse_with(BASE, &[]).unwrap();
        assert_eq!(c.raw, parse_flat(BASE).unwrap());
        let c = ExperimentConfig::parse_with(BASE, &["trials=10"]).unwrap();
        assert_eq!(c.trials, 10);
        assert_eq!(c.raw["run.trials"], "10");
    }

    #[test]
    fn errors_name_the_key() {
        let e = ExperimentConfig::parse_with(BASE, &["epsilon=1.5"]).unwrap_err();
        assert!(e.to_string().contains("model.epsilon") && e.to_string().contains("outside"), "{e}");
        let e = ExperimentConfig::parse("experiment.id = ks_threshold\nrun.seed = 1\n").unwrap_err();
        assert!(e.to_string().contains("run.trials"), "{e}");
        let e = ExperimentConfig::parse_with(BASE, &["bogus.key=1"]).unwrap_err();
        assert!(e.to_string().contains("bogus.key"));
        let e = ExperimentConfig::parse_with(BASE, &["coupling.epsilon=0.5"]).unwrap_err();
        assert!(e.to_string().contains("coupling.epsilon"));
        assert!(ExperimentConfig::parse("garbage line\n").is_err());
        let e = ExperimentConfig::parse(BASE).unwrap().require_rho().unwrap_err();
        assert!(e.to_string().contains("adversary.rho"));
    }
}
