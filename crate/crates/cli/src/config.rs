//! Flat `section.key = value` run configuration.
//!
//! A value written as `[a, b, c]` is a grid axis; [`Config::expand`] yields
//! one config per point of the cartesian product of all axes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use fedtopic::fedcore::{LocalConfig, StopRule, TrainConfig};
use fedtopic::model::{ModelConfig, Variant};
use fedtopic::synthgen::SynthConfig;

use crate::error::{CliError, Result};

const KNOWN: &[&str] = &[
    "synth.L",
    "synth.K",
    "synth.K_shared",
    "synth.V",
    "synth.docs_train",
    "synth.docs_valid",
    "synth.len_min",
    "synth.len_max",
    "synth.alpha",
    "synth.eta",
    "synth.seed",
    "synth.word_embed_dim",
    "run.runs",
    "model.K",
    "model.variant",
    "model.embed_dim",
    "model.hidden",
    "model.dropout",
    "model.prior_alpha",
    "model.learn_priors",
    "model.batch_norm",
    "model.seed",
    "train.scenarios",
    "train.lr",
    "train.rounds",
    "train.eps_stop",
    "train.patience",
    "train.batch_size",
    "train.transport",
    "train.seed",
    "train.max_epochs",
    "train.local_patience",
    "train.valid_fraction",
    "train.bind",
    "train.server",
    "data.dataset",
    "data.corpora",
    "data.min_count",
    "output.dir",
];

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Config {
    values: BTreeMap<String, Vec<String>>,
    base_dir: PathBuf,
}

fn axis_label(key: &str, value: &str) -> String {
    format!("{}-{value}", key.rsplit('.').next().unwrap_or(key))
}

/// Grid axes that change the generated data.
pub fn is_synth_key(key: &str) -> bool {
    key.starts_with("synth.")
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl Config {
    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut cfg = Config {
            values: BTreeMap::new(),
            base_dir: base_dir.into(),
        };
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| config_err(format!("line {}: expected key = value, got {raw:?}", i + 1)))?;
            cfg.set(k.trim(), v.trim()).map_err(|e| config_err(format!("line {}: {e}", i + 1)))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, base)
    }

    /// Sets or replaces one key; `[..]` values become grid axes.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !KNOWN.contains(&key) {
            return Err(config_err(format!("unknown key {key:?}")));
        }
        let values = match value.strip_prefix('[').and_then(|v| v.strip_suffix(']')) {
            Some(inner) => {
                let items: Vec<String> = inner.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
                if items.is_empty() {
                    return Err(config_err(format!("{key}: empty grid")));
                }
                items
            }
            None => vec![value.to_string()],
        };
        self.values.insert(key.to_string(), values);
        Ok(())
    }

    /// Applies `key=value` overrides.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<()> {
        for o in overrides {
            let (k, v) = o.split_once('=').ok_or_else(|| config_err(format!("override {o:?} is not key=value")))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    /// One config per grid point, each named by its grid coordinates (empty
    /// name when there is no grid).
    pub fn expand(&self) -> Vec<(String, Config)> {
        self.expand_where(|_| true)
    }

    /// Like [`Config::expand`] over the axes whose key satisfies `keep`;
    /// other axes stay grids.
    pub fn expand_where(&self, keep: impl Fn(&str) -> bool) -> Vec<(String, Config)> {
        let mut points = vec![(Vec::<String>::new(), self.clone())];
        for (key, values) in self.values.iter().filter(|(k, v)| v.len() > 1 && keep(k)) {
            points = points
                .into_iter()
                .flat_map(|(name, cfg)| {
                    values.iter().map(move |v| {
                        let mut c = cfg.clone();
                        c.values.insert(key.clone(), vec![v.clone()]);
                        let mut n = name.clone();
                        n.push(axis_label(key, v));
                        (n, c)
                    })
                })
                .collect();
        }
        points.into_iter().map(|(n, c)| (n.join("_"), c)).collect()
    }

    /// The name `expand_where(keep)` gives to the point that `point` lies on.
    pub fn point_name(&self, point: &Config, keep: impl Fn(&str) -> bool) -> String {
        self.values
            .iter()
            .filter(|(k, v)| v.len() > 1 && keep(k))
            .filter_map(|(k, _)| point.values.get(k).and_then(|v| v.first()).map(|v| axis_label(k, v)))
            .collect::<Vec<_>>()
            .join("_")
    }

    /// Every key with its raw value; grid axes are written back in `[..]` form.
    pub fn entries(&self) -> impl Iterator<Item = (&str, String)> + '_ {
        self.values.iter().map(|(k, v)| match v.as_slice() {
            [one] => (k.as_str(), one.clone()),
            many => (k.as_str(), format!("[{}]", many.join(","))),
        })
    }

    pub fn get_str(&self, key: &str) -> Result<Option<&str>> {
        match self.values.get(key).map(Vec::as_slice) {
            None => Ok(None),
            Some([v]) => Ok(Some(v.as_str())),
            Some(_) => Err(config_err(format!("{key} is a grid; expand the config first"))),
        }
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get_str(key)?
            .map(|v| v.parse::<T>().map_err(|_| config_err(format!("{key}: cannot parse {v:?}"))))
            .transpose()
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)?.ok_or_else(|| config_err(format!("{key} is required")))
    }

    pub fn get_bool(&self, key: &str, default: bool) -> Result<bool> {
        match self.get_str(key)? {
            None => Ok(default),
            Some("true" | "yes" | "1") => Ok(true),
            Some("false" | "no" | "0") => Ok(false),
            Some(v) => Err(config_err(format!("{key}: expected true or false, got {v:?}"))),
        }
    }

    /// Comma-separated list value.
    pub fn get_list(&self, key: &str) -> Result<Option<Vec<String>>> {
        Ok(self
            .get_str(key)?
            .map(|v| v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()))
    }

    /// Paths are taken relative to the config file.
    pub fn get_path(&self, key: &str) -> Result<Option<PathBuf>> {
        Ok(self.get_str(key)?.map(|p| self.resolve(p)))
    }

    pub fn resolve(&self, p: &str) -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn synth(&self) -> Result<SynthConfig> {
        let map: BTreeMap<String, String> = self
            .values
            .iter()
            .filter_map(|(k, v)| k.strip_prefix("synth.").map(|s| (s.to_string(), v.join(","))))
            .filter(|(k, _)| k != "word_embed_dim")
            .collect();
        Ok(SynthConfig::from_map(&map)?)
    }

    pub fn runs(&self) -> Result<usize> {
        let r = self.get_or("run.runs", 1usize)?;
        if r == 0 {
            return Err(config_err("run.runs must be at least 1"));
        }
        Ok(r)
    }

    /// Model template; the vocabulary size is filled in from the data.
    pub fn model(&self) -> Result<ModelConfig> {
        let k: usize = self.require("model.K")?;
        let mut m = ModelConfig::new(k, 1);
        if let Some(v) = self.get_str("model.variant")? {
            m.variant = Variant::from_str(v).map_err(|e| config_err(format!("model.variant: {e}")))?;
        }
        m.embed_dim = self.get_or("model.embed_dim", 0)?;
        if let Some(h) = self.get_list("model.hidden")? {
            m.hidden_sizes = h
                .iter()
                .map(|x| x.parse().map_err(|_| config_err(format!("model.hidden: bad size {x:?}"))))
                .collect::<Result<_>>()?;
        }
        m.dropout = self.get_or("model.dropout", m.dropout)?;
        m.prior_alpha = self.get_or("model.prior_alpha", m.prior_alpha)?;
        m.learn_priors = self.get_bool("model.learn_priors", false)?;
        m.batch_norm = self.get_bool("model.batch_norm", true)?;
        m.seed = self.get_or("model.seed", 0)?;
        m.validate()?;
        Ok(m)
    }

    pub fn train(&self) -> Result<TrainConfig> {
        let defaults = StopRule::default();
        let t = TrainConfig {
            learning_rate: self.get_or("train.lr", 0.002)?,
            batch_size: self.get_or("train.batch_size", 64)?,
            stop: StopRule {
                max_rounds: self.get_or("train.rounds", defaults.max_rounds)?,
                eps: self.get_or("train.eps_stop", defaults.eps)?,
                patience: self.get_or("train.patience", defaults.patience)?,
            },
            seed: self.get_or("train.seed", 0)?,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn local(&self) -> Result<LocalConfig> {
        let d = LocalConfig::default();
        let train = self.train()?;
        Ok(LocalConfig {
            learning_rate: train.learning_rate,
            batch_size: train.batch_size,
            max_epochs: self.get_or("train.max_epochs", d.max_epochs)?,
            patience: self.get_or("train.local_patience", d.patience)?,
            valid_fraction: self.get_or("train.valid_fraction", d.valid_fraction)?,
            seed: train.seed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_types() {
        let c = Config::parse("# run\nmodel.K = 10  # topics\nmodel.hidden=50, 50\nmodel.batch_norm = false\n", "/tmp").unwrap();
        let m = c.model().unwrap();
        assert_eq!(m.topics, 10);
        assert_eq!(m.hidden_sizes, [50, 50]);
        assert!(!m.batch_norm);
        assert_eq!(m.prior_alpha, 0.1);
        assert_eq!(c.resolve("data"), PathBuf::from("/tmp/data"));
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(matches!(Config::parse("model.k = 3", "."), Err(CliError::Config(_))));
        assert!(Config::parse("model.K 3", ".").is_err());
        let c = Config::parse("model.K = three", ".").unwrap();
        assert!(matches!(c.model(), Err(CliError::Config(m)) if m.contains("model.K")));
        let c = Config::parse("model.K = 5\nmodel.batch_norm = maybe", ".").unwrap();
        assert!(c.model().is_err());
    }

    #[test]
    fn grids_expand_to_named_points() {
        let c = Config::parse("synth.K_shared = [5, 10]\nsynth.eta = [0.01,1]\nsynth.L = 3", ".").unwrap();
        let pts = c.expand();
        let names: Vec<&str> = pts.iter().map(|p| p.0.as_str()).collect();
        assert_eq!(names, ["K_shared-5_eta-0.01", "K_shared-5_eta-1", "K_shared-10_eta-0.01", "K_shared-10_eta-1"]);
        assert_eq!(pts[3].1.get::<f64>("synth.eta").unwrap(), Some(1.0));
        assert!(c.get::<f64>("synth.eta").is_err());
        let single = Config::parse("synth.L = 3", ".").unwrap().expand();
        assert_eq!(single.len(), 1);
        assert_eq!(single[0].0, "");
    }

    #[test]
    fn overrides_replace_values() {
        let mut c = Config::parse("train.lr = 0.1", ".").unwrap();
        c.apply_overrides(&["train.lr=0.5".into(), "train.rounds = 7".into()]).unwrap();
        let t = c.train().unwrap();
        assert_eq!(t.learning_rate, 0.5);
        assert_eq!(t.stop.max_rounds, 7);
        assert!(c.apply_overrides(&["nonsense".into()]).is_err());
    }

    #[test]
    fn data_axes_name_points_independently() {
        let c = Config::parse("synth.eta = [0.01, 1]\nmodel.K = [5, 8]", ".").unwrap();
        let data = c.expand_where(is_synth_key);
        assert_eq!(data.len(), 2);
        assert!(data[0].1.get::<usize>("model.K").is_err());
        let all = c.expand();
        assert_eq!(all[0].0, "K-5_eta-0.01");
        let names: Vec<String> = all.iter().map(|(_, p)| c.point_name(p, is_synth_key)).collect();
        assert_eq!(names, ["eta-0.01", "eta-1", "eta-0.01", "eta-1"]);
    }

    #[test]
    fn shipped_configs_expand_to_their_grids() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
        for (file, points) in [("desk.cfg", 2), ("desk_amwmd.cfg", 1), ("paper_shared_topics.cfg", 5), ("paper_eta.cfg", 6)] {
            let c = Config::load(&dir.join(file)).unwrap();
            let pts = c.expand();
            assert_eq!(pts.len(), points, "{file}");
            for (_, p) in pts {
                p.synth().unwrap();
                p.model().unwrap();
                p.train().unwrap();
                p.local().unwrap();
            }
        }
    }
}
