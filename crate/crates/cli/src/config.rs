use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use guap_core::attack::AttackHyper;
use guap_core::gcn::TrainConfig;
use guap_core::graph::Graph;
use guap_core::io::{load_dataset_full, DatasetDescriptor, FeatureSource};
use guap_core::synth::{sbm, SbmConfig};
use serde::{Deserialize, Serialize};

pub const SEED_ENV: &str = "GUAP_SEED";
pub const DATA_ENV: &str = "GUAP_DATA_DIR";

/// Dataset section of a run config. Unset fields fall back to the built-in
/// descriptor for known benchmark names; `sbm` generates a synthetic graph.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub name: String,
    pub root: Option<PathBuf>,
    pub has_binary_features: Option<bool>,
    pub use_lcc: Option<bool>,
    pub expected_nodes: Option<usize>,
    pub expected_edges: Option<usize>,
    pub expected_classes: Option<usize>,
    pub expected_train: Option<usize>,
    pub expected_test: Option<usize>,
    /// Skip every size check, including built-in ones.
    pub skip_checks: bool,
    pub sbm: Option<SbmConfig>,
}

impl DatasetConfig {
    pub fn is_synthetic(&self) -> bool {
        self.name == "sbm"
    }

    fn default_root(&self) -> PathBuf {
        match std::env::var_os(DATA_ENV) {
            Some(dir) => PathBuf::from(dir).join(&self.name),
            None => PathBuf::from("data").join(&self.name),
        }
    }

    pub fn descriptor(&self) -> DatasetDescriptor {
        let root = self.root.clone().unwrap_or_else(|| self.default_root());
        let mut d = DatasetDescriptor::builtin(&self.name, &root)
            .unwrap_or_else(|| DatasetDescriptor::new(&self.name, &root));
        if self.skip_checks {
            d = DatasetDescriptor {
                has_binary_features: d.has_binary_features,
                use_lcc: d.use_lcc,
                ..DatasetDescriptor::new(&self.name, &root)
            };
        }
        macro_rules! apply {
            ($($f:ident),*) => { $( if self.$f.is_some() { d.$f = self.$f; } )* };
        }
        apply!(expected_nodes, expected_edges, expected_classes, expected_train, expected_test);
        if let Some(b) = self.has_binary_features {
            d.has_binary_features = b;
        }
        if let Some(l) = self.use_lcc {
            d.use_lcc = l;
        }
        d
    }

    pub fn load(&self) -> Result<(Graph, Option<FeatureSource>)> {
        if self.is_synthetic() {
            let cfg = self.sbm.clone().unwrap_or_default();
            return Ok((sbm(&cfg)?, None));
        }
        if self.name.is_empty() {
            bail!("no dataset given: set [dataset] name in the config or pass --dataset");
        }
        let desc = self.descriptor();
        let loaded = load_dataset_full(&desc).with_context(|| format!("loading dataset from {}", desc.root.display()))?;
        Ok((loaded.graph, Some(loaded.feature_source)))
    }
}

/// Everything a command needs; echoed verbatim into every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    pub train: TrainConfig,
    pub attack: AttackHyper,
    pub output_dir: PathBuf,
    /// Run seed; `GUAP_SEED` applies when unset.
    pub seed: Option<u64>,
    /// Seeds per sweep point when no explicit seed list is given.
    pub repeats: usize,
    /// Concurrent sweep runs.
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetConfig::default(),
            train: TrainConfig::default(),
            attack: AttackHyper::default(),
            output_dir: PathBuf::from("out"),
            seed: None,
            repeats: 10,
            workers: 1,
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Fixes `seed` from the environment when neither the config nor a flag set it.
    pub fn resolve_seed(&mut self) -> Result<u64> {
        if self.seed.is_none() {
            self.seed = Some(match std::env::var(SEED_ENV) {
                Ok(v) => v
                    .trim()
                    .parse()
                    .with_context(|| format!("{SEED_ENV}=`{v}` is not an unsigned integer"))?,
                Err(_) => 0,
            });
        }
        Ok(self.seed.unwrap_or_default())
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.attack.validate()?;
        if self.repeats == 0 {
            bail!("repeats must be at least 1");
        }
        Ok(())
    }
}
