//! `key=value` run configuration with flag overrides.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use pointmanifold::network::{ArchitectureSpec, Augmentation};
use pointmanifold::training::TrainConfig;

use crate::CliError;

/// Keys accepted in config files and as `--key value` flags.
pub const KEYS: &[&str] = &[
    "profile",
    "augmentation",
    "epochs",
    "batch_size",
    "lr0",
    "momentum",
    "dropout",
    "seed",
    "k_edgeconv",
    "k_lle",
    "t",
    "edgeconv_widths",
    "embedding_width",
    "head_widths",
    "num_classes",
    "mp_planes",
    "dynamic_graph",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub profile: String,
    pub augmentation: Augmentation,
    pub train: TrainConfig,
    pub spec: ArchitectureSpec,
}

/// Parses `key=value` lines; `#` starts a comment.
pub fn parse_pairs(text: &str, origin: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::Usage(format!(
                "{origin}:{}: expected key=value, got '{line}'",
                i + 1
            ))
        })?;
        let key = key.trim();
        if !KEYS.contains(&key) {
            return Err(CliError::Usage(format!(
                "{origin}:{}: unknown key '{key}'",
                i + 1
            )));
        }
        out.insert(key.to_string(), value.trim().to_string());
    }
    Ok(out)
}

impl RunConfig {
    /// Resolves the file settings (if any) overlaid with `overrides`. The
    /// class count defaults to `num_classes` from the dataset.
    pub fn resolve(
        file: Option<&Path>,
        overrides: &BTreeMap<String, String>,
        num_classes: usize,
    ) -> Result<Self, CliError> {
        let mut settings = match file {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| {
                    CliError::Usage(format!("cannot read config {}: {e}", path.display()))
                })?;
                parse_pairs(&text, &path.display().to_string())?
            }
            None => BTreeMap::new(),
        };
        for (k, v) in overrides {
            if !KEYS.contains(&k.as_str()) {
                return Err(CliError::Usage(format!("unknown option --{k}")));
            }
            settings.insert(k.clone(), v.clone());
        }

        let profile = settings
            .get("profile")
            .cloned()
            .unwrap_or_else(|| "toy".into());
        let spec = match profile.as_str() {
            "toy" => ArchitectureSpec::toy(num_classes),
            "dgcnn" => ArchitectureSpec::dgcnn(num_classes),
            other => {
                return Err(CliError::Usage(format!(
                    "unknown profile '{other}' (expected toy or dgcnn)"
                )))
            }
        };
        let augmentation = match settings.get("augmentation") {
            Some(v) => v
                .parse()
                .map_err(|e: pointmanifold::Error| CliError::Usage(e.to_string()))?,
            None => Augmentation::Mp,
        };
        let mut config = RunConfig {
            profile,
            augmentation,
            train: TrainConfig::for_augmentation(augmentation),
            spec,
        };
        for (key, value) in &settings {
            if key == "profile" || key == "augmentation" {
                continue;
            }
            let usage = |e: pointmanifold::Error| CliError::Usage(e.to_string());
            let owned_by_train = config.train.set(key, value).map_err(usage)?;
            let owned_by_spec = config.spec.set(key, value).map_err(usage)?;
            debug_assert!(
                owned_by_train || owned_by_spec,
                "key list out of sync: {key}"
            );
        }
        config
            .train
            .validate()
            .map_err(|e| CliError::Usage(e.to_string()))?;
        config
            .train
            .architecture(&config.spec)
            .validate()
            .map_err(|e| CliError::Usage(e.to_string()))?;
        if config.spec.num_classes != num_classes {
            return Err(CliError::Usage(format!(
                "num_classes={} but the dataset has {num_classes} classes",
                config.spec.num_classes
            )));
        }
        Ok(config)
    }

    /// Fully resolved settings, one `key=value` per line.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "profile={}\naugmentation={}\n",
            self.profile, self.augmentation
        );
        let spec = self.train.architecture(&self.spec);
        let mut seen = Vec::new();
        for (k, v) in self.train.to_pairs().into_iter().chain(spec.to_pairs()) {
            if !seen.contains(&k) {
                out.push_str(&format!("{k}={v}\n"));
                seen.push(k);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resolve(text: &str, overrides: &[(&str, &str)]) -> Result<RunConfig, CliError> {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        fs::write(&path, text).unwrap();
        let map = overrides
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        RunConfig::resolve(Some(&path), &map, 8)
    }

    #[test]
    fn flags_override_file() {
        let c = resolve(
            "epochs=5\nt=2 # wider\naugmentation=lle\n",
            &[("epochs", "7")],
        )
        .unwrap();
        assert_eq!(c.train.epochs, 7);
        assert_eq!(c.train.t, 2);
        assert_eq!(c.augmentation, Augmentation::Lle);
    }

    #[test]
    fn unknown_keys_are_errors() {
        assert!(matches!(resolve("epoch=5\n", &[]), Err(CliError::Usage(_))));
        assert!(matches!(
            resolve("", &[("bogus", "1")]),
            Err(CliError::Usage(_))
        ));
        assert!(matches!(resolve("epochs\n", &[]), Err(CliError::Usage(_))));
        assert!(matches!(
            resolve("num_classes=3\n", &[]),
            Err(CliError::Usage(_))
        ));
    }

    #[test]
    fn echo_resolves_to_the_same_config() {
        let c = resolve("epochs=3\nprofile=dgcnn\nk_edgeconv=10\nmp_planes=1\n", &[]).unwrap();
        let again = resolve(&c.to_text(), &[]).unwrap();
        assert_eq!(c, again);
        assert!(c.to_text().contains("k_edgeconv=10"));
    }
}
