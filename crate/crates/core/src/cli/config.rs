use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synthgen::SynthConfig;
use crate::train::TrainConfig;

/// Top-level run configuration shared by every subcommand.
///
/// Relative paths are resolved against the directory holding the config
/// file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub out_dir: PathBuf,
    /// On-disk database; mutually exclusive with `synth`.
    pub data: Option<DataSource>,
    /// Generate the database in memory instead of reading it.
    pub synth: Option<SynthConfig>,
    pub train: TrainConfig,
    pub collapse: CollapseConfig,
    pub consistency: ConsistencyConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSource {
    pub manifest: PathBuf,
    /// Defaults to the manifest's directory.
    #[serde(default)]
    pub data_dir: Option<PathBuf>,
    /// `entity_id,label,split` CSV.
    pub labels: PathBuf,
    pub target_table: String,
}

/// Settings for `diagnose collapse`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollapseConfig {
    pub star_minorities: usize,
    /// 9 gives a minority proportion of 0.1 around each minority.
    pub majors_per_minor: usize,
    pub layers: usize,
    pub random_fixtures: usize,
    pub random_nodes: usize,
    pub random_relations: usize,
    pub random_max_degree: usize,
    pub random_dim: usize,
    pub seed: u64,
}

impl Default for CollapseConfig {
    fn default() -> Self {
        CollapseConfig {
            star_minorities: 10,
            majors_per_minor: 9,
            layers: 4,
            random_fixtures: 100,
            random_nodes: 30,
            random_relations: 3,
            random_max_degree: 6,
            random_dim: 3,
            seed: 0,
        }
    }
}

/// Settings for `diagnose consistency`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConsistencyConfig {
    /// Synthetic samples drawn per training minority.
    pub per_anchor: usize,
    pub seed: u64,
    /// Reference distance weight the trained one is compared against.
    pub baseline_omega: f64,
    pub permutations: usize,
}

impl Default for ConsistencyConfig {
    fn default() -> Self {
        ConsistencyConfig {
            per_anchor: 3,
            seed: 99,
            baseline_omega: 0.0,
            permutations: 0,
        }
    }
}

impl RunConfig {
    /// Reads the config and resolves relative paths.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve(base);
        Ok(cfg)
    }

    fn resolve(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if self.out_dir.as_os_str().is_empty() {
            self.out_dir = PathBuf::from("relmoss-out");
        }
        join(&mut self.out_dir);
        if let Some(d) = &mut self.data {
            join(&mut d.manifest);
            join(&mut d.labels);
            if let Some(dir) = &mut d.data_dir {
                join(dir);
            }
        }
    }

    /// Checks the parts of the config every data-consuming command needs.
    pub fn validate_data(&self) -> Result<()> {
        match (&self.data, &self.synth) {
            (Some(_), Some(_)) => Err(Error::Config("`data` and `synth` are mutually exclusive".into())),
            (None, None) => Err(Error::Config("one of `data` or `synth` is required".into())),
            (Some(d), None) => {
                for p in [&d.manifest, &d.labels] {
                    if !p.is_file() {
                        return Err(Error::Config(format!("{} does not exist", p.display())));
                    }
                }
                Ok(())
            }
            (None, Some(s)) => s.validate(),
        }?;
        self.train.validate()
    }

    pub fn validate_collapse(&self) -> Result<()> {
        let c = &self.collapse;
        if c.star_minorities < 2 || c.layers == 0 || c.random_nodes < 2 || c.random_max_degree < 2 {
            return Err(Error::Config(
                "collapse: need star_minorities >= 2, layers >= 1, random_nodes >= 2, random_max_degree >= 2".into(),
            ));
        }
        if c.random_relations == 0 || c.random_dim == 0 {
            return Err(Error::Config("collapse: random_relations and random_dim must be positive".into()));
        }
        Ok(())
    }

    pub fn validate_consistency(&self) -> Result<()> {
        let c = &self.consistency;
        if c.per_anchor == 0 {
            return Err(Error::Config("consistency.per_anchor must be positive".into()));
        }
        if !(c.baseline_omega >= 0.0 && c.baseline_omega.is_finite()) {
            return Err(Error::Config("consistency.baseline_omega must be finite and non-negative".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let err = serde_json::from_str::<RunConfig>(r#"{"out_dir": "x", "trian": {}}"#).unwrap_err();
        assert!(err.to_string().contains("trian"));
        let err = serde_json::from_str::<RunConfig>(r#"{"train": {"gama": 1}}"#).unwrap_err();
        assert!(err.to_string().contains("gama"));
    }

    #[test]
    fn relative_paths_follow_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(
            &path,
            r#"{"out_dir": "out", "data": {"manifest": "db/manifest.json", "labels": "/abs/labels.csv", "target_table": "users"}}"#,
        )
        .unwrap();
        let cfg = RunConfig::load(&path).unwrap();
        assert_eq!(cfg.out_dir, dir.path().join("out"));
        let d = cfg.data.unwrap();
        assert_eq!(d.manifest, dir.path().join("db/manifest.json"));
        assert_eq!(d.labels, PathBuf::from("/abs/labels.csv"));
    }

    #[test]
    fn data_and_synth_are_exclusive() {
        let mut cfg = RunConfig {
            synth: Some(SynthConfig::default()),
            ..RunConfig::default()
        };
        assert!(cfg.validate_data().is_ok());
        cfg.synth = None;
        assert!(matches!(cfg.validate_data(), Err(Error::Config(_))));
    }
}
