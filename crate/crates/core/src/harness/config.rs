use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::design::DEFAULT_POVERTY_MULTIPLIER;
use crate::error::{Error, Result};
use crate::gibbs::{McmcSettings, ModelKind, Priors};
use crate::metrics::{parse_methods, Method, DEFAULT_ALPHA};
use crate::spatial_basis::DEFAULT_EIGEN_TOL;

use super::synth::SyntheticSpec;

/// Everything a run needs. Every field has a flat dotted key (`design.n`,
/// `mcmc.n_iter`, `priors.sigma_beta`, ...) settable from a file or the CLI.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub population: Option<PathBuf>,
    pub adjacency: Option<PathBuf>,
    pub cells: Option<PathBuf>,
    pub chain: Option<PathBuf>,
    pub out: PathBuf,
    pub sample_size: usize,
    pub poverty_multiplier: f64,
    /// Traverse the frame in random order for systematic PPS.
    pub shuffle_frame: bool,
    pub alpha: f64,
    pub mcmc: McmcSettings,
    pub priors: Priors,
    pub replicates: usize,
    pub methods: Vec<Method>,
    pub threads: usize,
    pub save_chains: bool,
    pub eigen_tol: f64,
    pub education_cutpoints: Vec<f64>,
    /// Model fitted by the single-dataset `fit` command.
    pub fit_model: ModelKind,
    pub synth: SyntheticSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            population: None,
            adjacency: None,
            cells: None,
            chain: None,
            out: PathBuf::from("out"),
            sample_size: 1000,
            poverty_multiplier: DEFAULT_POVERTY_MULTIPLIER,
            shuffle_frame: false,
            alpha: DEFAULT_ALPHA,
            mcmc: McmcSettings::default(),
            priors: Priors::default(),
            replicates: 100,
            methods: Method::ALL.to_vec(),
            threads: 0,
            save_chains: false,
            eigen_tol: DEFAULT_EIGEN_TOL,
            education_cutpoints: vec![21.0],
            fit_model: ModelKind::Multitype,
            synth: SyntheticSpec::default(),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("invalid value {value:?} for {key}"))),
    }
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

impl RunConfig {
    /// Sets one dotted key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let path = || Some(PathBuf::from(value.trim()));
        match key {
            "paths.population" => self.population = path(),
            "paths.adjacency" => self.adjacency = path(),
            "paths.cells" => self.cells = path(),
            "paths.chain" => self.chain = path(),
            "paths.out" => self.out = PathBuf::from(value.trim()),
            "design.n" => self.sample_size = parse(key, value)?,
            "design.poverty_multiplier" => self.poverty_multiplier = parse(key, value)?,
            "design.alpha" => self.alpha = parse(key, value)?,
            "design.shuffle" => self.shuffle_frame = parse_bool(key, value)?,
            "mcmc.n_iter" => self.mcmc.n_iter = parse(key, value)?,
            "mcmc.n_burn" => self.mcmc.n_burn = parse(key, value)?,
            "mcmc.seed" | "seed" => self.mcmc.seed = parse(key, value)?,
            "mcmc.pg_truncation" => self.mcmc.pg_truncation = parse(key, value)?,
            "priors.sigma_beta" => self.priors.sigma_beta = parse(key, value)?,
            "priors.a_eps" => self.priors.a_eps = parse(key, value)?,
            "priors.b_eps" => self.priors.b_eps = parse(key, value)?,
            "priors.a_eta" => self.priors.a_eta = parse(key, value)?,
            "priors.b_eta" => self.priors.b_eta = parse(key, value)?,
            "priors.a_zeta" => self.priors.a_zeta = parse(key, value)?,
            "priors.b_zeta" => self.priors.b_zeta = parse(key, value)?,
            "priors.a_u" => self.priors.a_u = parse(key, value)?,
            "priors.b_u" => self.priors.b_u = parse(key, value)?,
            "priors.sigma_tau2" => self.priors.sigma_tau2 = parse(key, value)?,
            "simulation.replicates" | "replicates" => self.replicates = parse(key, value)?,
            "simulation.methods" | "methods" => self.methods = parse_methods(value)?,
            "simulation.threads" | "threads" => self.threads = parse(key, value)?,
            "simulation.save_chains" => self.save_chains = parse_bool(key, value)?,
            "basis.eigen_tol" => self.eigen_tol = parse(key, value)?,
            "schema.education_cutpoints" => self.education_cutpoints = parse_list(key, value)?,
            "fit.model" => self.fit_model = value.parse()?,
            "out" => self.out = PathBuf::from(value.trim()),
            other => match other.strip_prefix("synth.") {
                Some(field) => self.synth.set(field, value)?,
                None => return Err(Error::Config(format!("unknown key {other:?}"))),
            },
        }
        Ok(())
    }

    /// Applies a TOML document; tables are flattened to dotted keys.
    pub fn apply_toml(&mut self, text: &str) -> Result<()> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        let mut flat = Vec::new();
        flatten("", &toml::Value::Table(table), &mut flat)?;
        for (k, v) in flat {
            self.set(&k, &v)?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::default();
        cfg.apply_toml(&text).map_err(|e| match e {
            Error::Config(message) => Error::Parse {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.mcmc.validate()?;
        self.priors.validate()?;
        if self.replicates == 0 {
            return Err(Error::Config(
                "simulation.replicates must be at least 1".into(),
            ));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("simulation.methods is empty".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!(
                "design.alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if !(self.poverty_multiplier >= 0.0) {
            return Err(Error::Config(
                "design.poverty_multiplier must be non-negative".into(),
            ));
        }
        if self.sample_size == 0 {
            return Err(Error::Config("design.n must be positive".into()));
        }
        self.synth.validate()
    }

    /// Effective configuration as TOML with dotted keys.
    pub fn to_toml(&self) -> String {
        let mut s = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        let quoted =
            |p: &Option<PathBuf>| p.as_ref().map(|p| format!("{:?}", p.display().to_string()));
        for (k, v) in [
            ("paths.population", &self.population),
            ("paths.adjacency", &self.adjacency),
            ("paths.cells", &self.cells),
            ("paths.chain", &self.chain),
        ] {
            if let Some(v) = quoted(v) {
                line(k, v);
            }
        }
        line("paths.out", format!("{:?}", self.out.display().to_string()));
        line("design.n", self.sample_size.to_string());
        line(
            "design.poverty_multiplier",
            format!("{:?}", self.poverty_multiplier),
        );
        line("design.alpha", format!("{:?}", self.alpha));
        line("design.shuffle", self.shuffle_frame.to_string());
        line("mcmc.n_iter", self.mcmc.n_iter.to_string());
        line("mcmc.n_burn", self.mcmc.n_burn.to_string());
        line("mcmc.seed", self.mcmc.seed.to_string());
        line("mcmc.pg_truncation", self.mcmc.pg_truncation.to_string());
        let p = &self.priors;
        for (k, v) in [
            ("priors.sigma_beta", p.sigma_beta),
            ("priors.a_eps", p.a_eps),
            ("priors.b_eps", p.b_eps),
            ("priors.a_eta", p.a_eta),
            ("priors.b_eta", p.b_eta),
            ("priors.a_zeta", p.a_zeta),
            ("priors.b_zeta", p.b_zeta),
            ("priors.a_u", p.a_u),
            ("priors.b_u", p.b_u),
            ("priors.sigma_tau2", p.sigma_tau2),
        ] {
            line(k, format!("{v:?}"));
        }
        line("simulation.replicates", self.replicates.to_string());
        line("simulation.methods", format!("{:?}", join(&self.methods)));
        line("simulation.threads", self.threads.to_string());
        line("simulation.save_chains", self.save_chains.to_string());
        line("basis.eigen_tol", format!("{:?}", self.eigen_tol));
        line(
            "schema.education_cutpoints",
            format!("{:?}", join(&self.education_cutpoints)),
        );
        line("fit.model", format!("{:?}", self.fit_model.to_string()));
        for (k, v) in self.synth.entries() {
            line(&format!("synth.{k}"), v);
        }
        s
    }
}

fn flatten(prefix: &str, value: &toml::Value, out: &mut Vec<(String, String)>) -> Result<()> {
    let key = |k: &str| {
        if prefix.is_empty() {
            k.to_string()
        } else {
            format!("{prefix}.{k}")
        }
    };
    match value {
        toml::Value::Table(t) => {
            for (k, v) in t {
                flatten(&key(k), v, out)?;
            }
        }
        toml::Value::String(s) => out.push((prefix.to_string(), s.clone())),
        toml::Value::Integer(i) => out.push((prefix.to_string(), i.to_string())),
        toml::Value::Float(f) => out.push((prefix.to_string(), f.to_string())),
        toml::Value::Boolean(b) => out.push((prefix.to_string(), b.to_string())),
        toml::Value::Array(items) => {
            let parts = items
                .iter()
                .map(|v| match v {
                    toml::Value::String(s) => Ok(s.clone()),
                    toml::Value::Integer(i) => Ok(i.to_string()),
                    toml::Value::Float(f) => Ok(f.to_string()),
                    _ => Err(Error::Config(format!(
                        "unsupported array entry under {prefix}"
                    ))),
                })
                .collect::<Result<Vec<_>>>()?;
            out.push((prefix.to_string(), parts.join(",")));
        }
        toml::Value::Datetime(_) => {
            return Err(Error::Config(format!("unsupported value under {prefix}")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dotted_and_nested_keys_agree() {
        let mut a = RunConfig::default();
        a.apply_toml("design.n = 500\nmcmc.n_iter = 300\nsimulation.methods = \"ht,multitype\"\n")
            .unwrap();
        let mut b = RunConfig::default();
        b.apply_toml("[design]\nn = 500\n[mcmc]\nn_iter = 300\n[simulation]\nmethods = [\"multitype\", \"ht\"]\n").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.sample_size, 500);
        assert_eq!(a.methods, vec![Method::Ht, Method::Multitype]);
    }

    #[test]
    fn round_trips_through_toml() {
        let mut cfg = RunConfig::default();
        cfg.set("priors.sigma_tau2", "2.5").unwrap();
        cfg.set("synth.n_pop", "321").unwrap();
        cfg.set("paths.cells", "cells.csv").unwrap();
        let mut back = RunConfig::default();
        back.apply_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_bad_input() {
        let mut cfg = RunConfig::default();
        assert!(cfg.set("design.nope", "1").is_err());
        assert!(cfg.set("design.n", "many").is_err());
        cfg.set("mcmc.n_burn", "5000").unwrap();
        assert!(matches!(cfg.validate(), Err(Error::IterationCounts { .. })));
    }
}
