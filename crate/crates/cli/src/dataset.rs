//! Dataset specifications as they appear on the command line and in
//! manifests.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

use sdpnn::data::{self, CsvOptions, Dataset, DatasetCache, LabelColumn};
use sdpnn::linalg;

/// Environment variable naming the dataset cache directory.
pub const CACHE_ENV: &str = "SDPNN_CACHE_DIR";

const IRIS_CSV: &[u8] = include_bytes!("../../../data/iris.csv");

/// Named tabular datasets and the train-row counts they are split to.
const TABULAR: &[(&str, Option<usize>)] = &[
    ("iris", None),
    ("ionosphere", None),
    // 768 rows split 383/385 rather than 384/384.
    ("pima", Some(383)),
    // 1372 rows split 685/687.
    ("banknotes", Some(685)),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    Random {
        seed: u64,
    },
    Spiral {
        seed: u64,
    },
    Csv {
        name: String,
        /// `None` only for datasets bundled with the binary.
        path: Option<PathBuf>,
        label: LabelColumn,
        split_seed: u64,
        train_count: Option<usize>,
    },
    Mnist {
        path: PathBuf,
        split_seed: u64,
    },
}

#[derive(Debug, Clone, Args)]
pub struct DatasetArgs {
    /// random, spiral, iris, ionosphere, pima, banknotes, mnist or csv.
    #[arg(long, default_value = "random")]
    pub dataset: String,
    /// Generator seed for random and spiral.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV file for tabular datasets (iris is bundled).
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Label column: a header name, a zero-based index, or `last`.
    #[arg(long)]
    pub label: Option<String>,
    /// Seed of the train/test shuffle.
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
    /// Exact number of training rows.
    #[arg(long)]
    pub train_count: Option<usize>,
}

fn parse_label(s: &str) -> LabelColumn {
    match s {
        "last" => LabelColumn::Last,
        _ => match s.parse::<usize>() {
            Ok(i) => LabelColumn::Index(i),
            Err(_) => LabelColumn::Name(s.to_string()),
        },
    }
}

impl DatasetArgs {
    pub fn spec(&self) -> Result<DatasetSpec> {
        let name = self.dataset.to_ascii_lowercase();
        let label = self.label.as_deref().map(parse_label).unwrap_or(LabelColumn::Last);
        let spec = match name.as_str() {
            "random" => DatasetSpec::Random { seed: self.seed },
            "spiral" => DatasetSpec::Spiral { seed: self.seed },
            "mnist" => DatasetSpec::Mnist {
                path: self.csv.clone().context("--dataset mnist needs --csv <label-first csv>")?,
                split_seed: self.split_seed,
            },
            "csv" => {
                let path = self.csv.clone().context("--dataset csv needs --csv <path>")?;
                let name = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "csv".into());
                DatasetSpec::Csv {
                    name,
                    path: Some(path),
                    label,
                    split_seed: self.split_seed,
                    train_count: self.train_count,
                }
            }
            other => {
                let Some(&(_, default_train)) = TABULAR.iter().find(|(n, _)| *n == other) else {
                    bail!("unknown dataset `{other}`");
                };
                if other != "iris" && self.csv.is_none() {
                    bail!("--dataset {other} needs --csv <path>; only iris is bundled");
                }
                DatasetSpec::Csv {
                    name: other.to_string(),
                    path: self.csv.clone(),
                    label,
                    split_seed: self.split_seed,
                    train_count: self.train_count.or(default_train),
                }
            }
        };
        Ok(spec)
    }
}

impl DatasetSpec {
    /// Short name used in tables and reference lookups.
    pub fn name(&self) -> &str {
        match self {
            DatasetSpec::Random { .. } => "random",
            DatasetSpec::Spiral { .. } => "spiral",
            DatasetSpec::Csv { name, .. } => name,
            DatasetSpec::Mnist { .. } => "mnist",
        }
    }

    fn source_bytes(&self) -> Result<Option<Vec<u8>>> {
        let path = match self {
            DatasetSpec::Csv { path: Some(p), .. } | DatasetSpec::Mnist { path: p, .. } => p,
            DatasetSpec::Csv { path: None, .. } => return Ok(Some(IRIS_CSV.to_vec())),
            _ => return Ok(None),
        };
        Ok(Some(fs::read(path).with_context(|| format!("reading {}", path.display()))?))
    }

    fn build(&self, source: Option<&[u8]>) -> Result<Dataset> {
        let ds = match self {
            DatasetSpec::Random { seed } => data::gen_random(*seed),
            DatasetSpec::Spiral { seed } => data::gen_spiral(*seed),
            DatasetSpec::Csv {
                name,
                label,
                split_seed,
                train_count,
                ..
            } => {
                let opts = CsvOptions {
                    label: label.clone(),
                    split_seed: *split_seed,
                    train_count: *train_count,
                    max_rows: None,
                };
                data::load_csv_bytes(name, source.expect("csv source read"), &opts)?
            }
            DatasetSpec::Mnist { path, split_seed } => data::load_mnist_csv(path, *split_seed)?.0,
        };
        Ok(ds)
    }

    /// Build the dataset, going through the cache when [`CACHE_ENV`] is set.
    pub fn resolve(&self) -> Result<Dataset> {
        let source = self.source_bytes()?;
        let Some(dir) = std::env::var_os(CACHE_ENV) else {
            return self.build(source.as_deref());
        };
        let description = format!(
            "{}|{}",
            serde_json::to_string(self)?,
            source.as_deref().map(linalg::sha256_hex).unwrap_or_default()
        );
        let cache = DatasetCache::new(Path::new(&dir));
        let built = cache.get_or_insert(&description, || {
            self.build(source.as_deref()).map_err(|e| sdpnn::Error::Dataset(format!("{e:#}")))
        })?;
        Ok(built)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(name: &str) -> DatasetArgs {
        DatasetArgs {
            dataset: name.into(),
            seed: 3,
            csv: None,
            label: None,
            split_seed: 0,
            train_count: None,
        }
    }

    #[test]
    fn bundled_iris_resolves() {
        let ds = args("iris").spec().unwrap().resolve().unwrap();
        assert_eq!(ds.x_train.shape(), (75, 4));
        assert_eq!(ds.y_train.shape(), (75, 3));
        assert_eq!(ds.x_test.as_ref().unwrap().nrows(), 75);
    }

    #[test]
    fn tabular_defaults() {
        let mut a = args("pima");
        assert!(a.spec().is_err());
        a.csv = Some("pima.csv".into());
        match a.spec().unwrap() {
            DatasetSpec::Csv { train_count, .. } => assert_eq!(train_count, Some(383)),
            other => panic!("{other:?}"),
        }
        assert!(args("nope").spec().is_err());
    }

    #[test]
    fn labels_parse() {
        assert_eq!(parse_label("last"), LabelColumn::Last);
        assert_eq!(parse_label("0"), LabelColumn::Index(0));
        assert_eq!(parse_label("class"), LabelColumn::Name("class".into()));
    }

    #[test]
    fn spec_round_trips_through_json() {
        let s = args("spiral").spec().unwrap();
        let back: DatasetSpec = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.name(), "spiral");
    }
}
