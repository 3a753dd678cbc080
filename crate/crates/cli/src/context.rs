use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use kneeoa_core::dataio::{read_feature_table_file, write_feature_table, DatasetManifest, Split};
use kneeoa_core::features::StructuredVector;
use kneeoa_core::model::GbtParams;

/// An error with the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub error: anyhow::Error,
}

impl CliError {
    pub fn invocation(msg: impl Into<String>) -> Self {
        CliError {
            code: 2,
            error: anyhow::anyhow!(msg.into()),
        }
    }

    pub fn empty(msg: impl Into<String>) -> Self {
        CliError {
            code: 1,
            error: anyhow::anyhow!(msg.into()),
        }
    }
}

impl<E: Into<anyhow::Error>> From<E> for CliError {
    fn from(e: E) -> Self {
        use kneeoa_core::Error as E;
        let error: anyhow::Error = e.into();
        let code = match error.downcast_ref::<E>() {
            Some(
                E::InvalidConfig(_)
                | E::UnknownName { .. }
                | E::MissingColumn(_)
                | E::HeaderMismatch { .. }
                | E::InvalidCell { .. }
                | E::FormatVersion { .. },
            ) => 2,
            _ => 1,
        };
        CliError { code, error }
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

/// Override keys accepted by `--config`, with their defaults.
pub const CONFIG_KEYS: [(&str, &str); 11] = [
    ("gbt.n_rounds", "300"),
    ("gbt.max_depth", "6"),
    ("gbt.learning_rate", "0.05"),
    ("gbt.l1_alpha", "0.1"),
    ("gbt.l2_lambda", "1.0"),
    ("gbt.min_child_weight", "1.0"),
    ("cv.folds", "5"),
    ("eval.bootstrap", "1000"),
    ("eval.level", "0.95"),
    ("attribute.repeats", "10"),
    ("roi.depth", "28"),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
    pub config: BTreeMap<String, String>,
}

#[derive(Serialize)]
struct Artifact<'a, T: Serialize> {
    provenance: &'a Provenance,
    #[serde(flatten)]
    body: &'a T,
}

pub struct RunContext {
    pub seed: u64,
    pub out: PathBuf,
    pub manifest: Option<PathBuf>,
    values: BTreeMap<String, String>,
}

impl RunContext {
    pub fn new(seed: u64, overrides: &[String], out: PathBuf, manifest: Option<PathBuf>) -> CliResult<Self> {
        let mut values: BTreeMap<String, String> =
            CONFIG_KEYS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| CliError::invocation(format!("--config expects key=value, got '{o}'")))?;
            let (k, v) = (k.trim(), v.trim());
            if !values.contains_key(k) {
                let known: Vec<&str> = CONFIG_KEYS.iter().map(|(k, _)| *k).collect();
                return Err(CliError::invocation(format!(
                    "unknown config key '{k}' (known: {})",
                    known.join(", ")
                )));
            }
            values.insert(k.to_string(), v.to_string());
        }
        let ctx = RunContext {
            seed,
            out,
            manifest,
            values,
        };
        ctx.gbt_params()?.validate().map_err(|e| CliError::invocation(e.to_string()))?;
        if ctx.get::<usize>("cv.folds")? < 2 {
            return Err(CliError::invocation("cv.folds must be at least 2"));
        }
        ctx.get::<usize>("eval.bootstrap")?;
        ctx.get::<usize>("attribute.repeats")?;
        ctx.get::<usize>("roi.depth")?;
        let level: f64 = ctx.get("eval.level")?;
        if !(level > 0.0 && level < 1.0) {
            return Err(CliError::invocation("eval.level must lie strictly between 0 and 1"));
        }
        Ok(ctx)
    }

    pub fn get<T: std::str::FromStr>(&self, key: &str) -> CliResult<T> {
        let raw = &self.values[key];
        raw.parse()
            .map_err(|_| CliError::invocation(format!("config value '{raw}' is not valid for {key}")))
    }

    pub fn gbt_params(&self) -> CliResult<GbtParams> {
        Ok(GbtParams {
            n_rounds: self.get("gbt.n_rounds")?,
            max_depth: self.get("gbt.max_depth")?,
            learning_rate: self.get("gbt.learning_rate")?,
            l1_alpha: self.get("gbt.l1_alpha")?,
            l2_lambda: self.get("gbt.l2_lambda")?,
            min_child_weight: self.get("gbt.min_child_weight")?,
            class_count: kneeoa_core::KL_CLASSES,
            seed: self.seed,
        })
    }

    /// Provenance over the global config plus command-specific settings.
    pub fn provenance(&self, extra: &[(&str, String)]) -> Provenance {
        let mut config = self.values.clone();
        for (k, v) in extra {
            config.insert(k.to_string(), v.clone());
        }
        let mut h = Sha256::new();
        h.update(format!("seed={}\n", self.seed));
        for (k, v) in &config {
            h.update(format!("{k}={v}\n"));
        }
        Provenance {
            tool: "kneeoa".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed: self.seed,
            config_hash: hex::encode(h.finalize()),
            config,
        }
    }

    pub fn out_path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    pub fn ensure_out(&self) -> CliResult<()> {
        fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        Ok(())
    }

    pub fn require_manifest(&self) -> CliResult<DatasetManifest> {
        let path = self
            .manifest
            .as_ref()
            .ok_or_else(|| CliError::invocation("--manifest is required for this command"))?;
        kneeoa_core::dataio::load_manifest(path)
            .map_err(|e| CliError::invocation(format!("cannot read manifest {}: {e}", path.display())))
    }
}

pub fn write_json<T: Serialize>(path: &Path, provenance: &Provenance, body: &T) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut text = serde_json::to_string_pretty(&Artifact { provenance, body })?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::invocation(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::invocation(format!("{} is not a valid artifact: {e}", path.display())))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Feature table preceded by a `#` provenance comment line.
pub fn write_table(path: &Path, provenance: &Provenance, rows: &[StructuredVector]) -> CliResult<()> {
    let mut buf = Vec::new();
    writeln!(
        buf,
        "# {} {} seed={} config={}",
        provenance.tool, provenance.version, provenance.seed, provenance.config_hash
    )?;
    write_feature_table(&mut buf, rows)?;
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, buf).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn read_table(path: &Path) -> CliResult<Vec<StructuredVector>> {
    if !path.exists() {
        return Err(CliError::invocation(format!("feature table {} not found", path.display())));
    }
    Ok(read_feature_table_file(path)?)
}

pub fn split_rows(rows: &[StructuredVector], split: Split) -> Vec<&StructuredVector> {
    rows.iter().filter(|r| r.split == split).collect()
}

pub fn require_split<'a>(rows: &'a [StructuredVector], split: Split) -> CliResult<Vec<&'a StructuredVector>> {
    let v = split_rows(rows, split);
    if v.is_empty() {
        return Err(CliError::invocation(format!("feature table has no {split} rows")));
    }
    Ok(v)
}

pub fn matrix(rows: &[&StructuredVector]) -> (Vec<Vec<f64>>, Vec<u8>) {
    (
        rows.iter().map(|r| r.values.clone()).collect(),
        rows.iter().map(|r| r.kl_grade).collect(),
    )
}

/// Rejects rows that still contain missing slots.
pub fn require_complete(rows: &[StructuredVector]) -> CliResult<()> {
    if let Some(r) = rows.iter().find(|r| r.missing_count() > 0) {
        return Err(CliError::invocation(format!(
            "row {} has missing values; run `assemble` first",
            r.id
        )));
    }
    Ok(())
}

pub fn load_model(path: &Path) -> CliResult<kneeoa_core::model::GbtEnsemble> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::invocation(format!("cannot read model {}: {e}", path.display())))?;
    kneeoa_core::model::GbtEnsemble::from_json(&text)
        .map_err(|e| CliError::invocation(format!("{} is not a usable model: {e}", path.display())))
}
