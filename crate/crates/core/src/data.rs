//! Dataset generators and loaders.
//!
//! Every random draw goes through `ChaCha20Rng` (rand_chacha 0.9) seeded with
//! `seed_from_u64`, so a seed reproduces the same dataset on any platform.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Task {
    Regression,
    Classification,
}

/// Provenance carried with a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub name: String,
    pub seed: Option<u64>,
    /// Preprocessing steps in application order.
    pub steps: Vec<String>,
    pub class_names: Vec<String>,
    /// Per-class counts over the full (unsplit) data.
    pub class_counts: Vec<usize>,
    pub bias: bool,
    /// SHA-256 of the source file, for loaded datasets.
    pub source_hash: Option<String>,
}

impl DatasetMeta {
    fn new(name: &str, seed: Option<u64>) -> Self {
        Self {
            name: name.to_string(),
            seed,
            steps: Vec::new(),
            class_names: Vec::new(),
            class_counts: Vec::new(),
            bias: false,
            source_hash: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub x_train: DMatrix<f64>,
    pub y_train: DMatrix<f64>,
    pub x_test: Option<DMatrix<f64>>,
    pub y_test: Option<DMatrix<f64>>,
    pub task: Task,
    pub meta: DatasetMeta,
}

/// Shapes and provenance written next to cached datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub seed: Option<u64>,
    pub steps: Vec<String>,
    pub task: Task,
    pub train_shape: (usize, usize, usize),
    pub test_rows: Option<usize>,
    pub class_counts: Vec<usize>,
    pub bias: bool,
    pub source_hash: Option<String>,
    pub content_hash: String,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.x_train.nrows()
    }

    pub fn d(&self) -> usize {
        self.x_train.ncols()
    }

    pub fn c(&self) -> usize {
        self.y_train.ncols()
    }

    /// SHA-256 over all matrices of the dataset.
    pub fn content_hash(&self) -> String {
        let mut mats = vec![&self.x_train, &self.y_train];
        if let (Some(xt), Some(yt)) = (&self.x_test, &self.y_test) {
            mats.push(xt);
            mats.push(yt);
        }
        linalg::hash_matrices(&mats)
    }

    pub fn manifest(&self) -> DatasetManifest {
        DatasetManifest {
            name: self.meta.name.clone(),
            seed: self.meta.seed,
            steps: self.meta.steps.clone(),
            task: self.task,
            train_shape: (self.n(), self.d(), self.c()),
            test_rows: self.x_test.as_ref().map(|x| x.nrows()),
            class_counts: self.meta.class_counts.clone(),
            bias: self.meta.bias,
            source_hash: self.meta.source_hash.clone(),
            content_hash: self.content_hash(),
        }
    }

    /// Check the dataset invariants: matching shapes, finite entries, and
    /// one-hot labels for classification.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Dataset(m));
        if self.x_train.nrows() != self.y_train.nrows() {
            return bad("train rows of X and Y differ".into());
        }
        match (&self.x_test, &self.y_test) {
            (Some(xt), Some(yt)) => {
                if xt.ncols() != self.d() || yt.ncols() != self.c() || xt.nrows() != yt.nrows() {
                    return bad("test split shape disagrees with train split".into());
                }
            }
            (None, None) => {}
            _ => return bad("test split must have both X and Y".into()),
        }
        let all = [Some(&self.x_train), Some(&self.y_train), self.x_test.as_ref(), self.y_test.as_ref()];
        if all.iter().flatten().any(|m| !linalg::all_finite(m)) {
            return bad("non-finite entry".into());
        }
        if self.task == Task::Classification {
            for y in [Some(&self.y_train), self.y_test.as_ref()].into_iter().flatten() {
                for row in y.row_iter() {
                    let ones = row.iter().filter(|&&v| v == 1.0).count();
                    let zeros = row.iter().filter(|&&v| v == 0.0).count();
                    if ones != 1 || ones + zeros != row.len() {
                        return bad("label row is not one-hot".into());
                    }
                }
            }
        }
        Ok(())
    }
}

/// Teacher-network regression data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomParams {
    pub n: usize,
    pub d: usize,
    pub c: usize,
    pub hidden: usize,
}

impl Default for RandomParams {
    fn default() -> Self {
        Self {
            n: 25,
            d: 2,
            c: 5,
            hidden: 100,
        }
    }
}

/// `X` standard normal, labels `Y = (X U_g)₊ V_g` from a standard-normal
/// teacher with 100 hidden units. Draw order: `X`, `U_g`, `V_g`, each
/// row-major.
pub fn gen_random(seed: u64) -> Dataset {
    gen_random_with(RandomParams::default(), seed)
}

pub fn gen_random_with(params: RandomParams, seed: u64) -> Dataset {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut normal = |r: usize, c: usize| {
        let data: Vec<f64> = (0..r * c).map(|_| StandardNormal.sample(&mut rng)).collect();
        DMatrix::from_row_slice(r, c, &data)
    };
    let x = normal(params.n, params.d);
    let ug = normal(params.d, params.hidden);
    let vg = normal(params.hidden, params.c);
    let y = linalg::relu(&(&x * ug)) * vg;
    let mut meta = DatasetMeta::new("random", Some(seed));
    meta.steps.push(format!(
        "teacher n={} d={} c={} hidden={}",
        params.n, params.d, params.c, params.hidden
    ));
    Dataset {
        x_train: x,
        y_train: y,
        x_test: None,
        y_test: None,
        task: Task::Regression,
        meta,
    }
}

/// Interleaved-spiral parameters. Class `k` point `i` sits at radius `t_i`
/// and angle `2π ω t_i + 2πk/K + ε`, `ε ~ N(0, σ²)`, with `t_i` evenly
/// spaced on `[t_start, t_end]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpiralParams {
    pub classes: usize,
    pub per_class: usize,
    pub omega: f64,
    pub sigma: f64,
    pub t_start: f64,
    pub t_end: f64,
}

impl Default for SpiralParams {
    fn default() -> Self {
        Self {
            classes: 3,
            per_class: 20,
            omega: 1.5,
            sigma: 0.1,
            t_start: 0.05,
            t_end: 1.0,
        }
    }
}

pub fn gen_spiral(seed: u64) -> Dataset {
    gen_spiral_with(SpiralParams::default(), seed)
}

pub fn gen_spiral_with(params: SpiralParams, seed: u64) -> Dataset {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, params.sigma.max(0.0)).expect("finite sigma");
    let (k_total, per) = (params.classes, params.per_class);
    let mut x = DMatrix::zeros(k_total * per, 2);
    let mut y = DMatrix::zeros(k_total * per, k_total);
    for k in 0..k_total {
        for i in 0..per {
            let t = if per == 1 {
                params.t_start
            } else {
                params.t_start + (params.t_end - params.t_start) * i as f64 / (per - 1) as f64
            };
            let eps = if params.sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            let theta = 2.0 * PI * params.omega * t + 2.0 * PI * k as f64 / k_total as f64 + eps;
            let row = k * per + i;
            x[(row, 0)] = t * theta.cos();
            x[(row, 1)] = t * theta.sin();
            y[(row, k)] = 1.0;
        }
    }
    let mut meta = DatasetMeta::new("spiral", Some(seed));
    meta.steps.push(format!(
        "spiral classes={} per_class={} omega={} sigma={} t=[{}, {}]",
        params.classes, params.per_class, params.omega, params.sigma, params.t_start, params.t_end
    ));
    meta.class_names = (0..k_total).map(|k| k.to_string()).collect();
    meta.class_counts = vec![per; k_total];
    Dataset {
        x_train: x,
        y_train: y,
        x_test: None,
        y_test: None,
        task: Task::Classification,
        meta,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum LabelColumn {
    Index(usize),
    Name(String),
    Last,
}

/// CSV loading options.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvOptions {
    pub label: LabelColumn,
    pub split_seed: u64,
    /// Train rows; defaults to `⌊N/2⌋`.
    pub train_count: Option<usize>,
    /// Only read the first rows of the file.
    pub max_rows: Option<usize>,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            label: LabelColumn::Last,
            split_seed: 0,
            train_count: None,
            max_rows: None,
        }
    }
}

/// Load a headed CSV of numeric features plus one categorical label column,
/// one-hot encode the labels (classes in sorted order), shuffle with
/// `split_seed` and split into train/test.
pub fn load_csv(path: &Path, opts: &CsvOptions) -> Result<Dataset> {
    let bytes = fs::read(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "csv".into());
    load_csv_bytes(&name, &bytes, opts)
}

/// [`load_csv`] on in-memory file contents.
pub fn load_csv_bytes(name: &str, bytes: &[u8], opts: &CsvOptions) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let headers = reader.headers()?.clone();
    let label_idx = match &opts.label {
        LabelColumn::Index(i) if *i < headers.len() => *i,
        LabelColumn::Index(i) => return Err(Error::Dataset(format!("label column {i} out of range"))),
        LabelColumn::Name(name) => headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Dataset(format!("no column named `{name}`")))?,
        LabelColumn::Last => headers
            .len()
            .checked_sub(1)
            .ok_or_else(|| Error::Dataset("empty header".into()))?,
    };
    let d = headers.len() - 1;
    if d == 0 {
        return Err(Error::Dataset("no feature columns".into()));
    }

    let mut features: Vec<f64> = Vec::new();
    let mut labels: Vec<String> = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        if opts.max_rows.is_some_and(|m| row >= m) {
            break;
        }
        let rec = rec?;
        if rec.len() != headers.len() {
            return Err(Error::Dataset(format!("row {} has {} fields, expected {}", row + 2, rec.len(), headers.len())));
        }
        for (col, field) in rec.iter().enumerate() {
            if col == label_idx {
                if field.is_empty() {
                    return Err(Error::Dataset(format!("row {}: missing label", row + 2)));
                }
                labels.push(field.to_string());
            } else {
                let v: f64 = field
                    .parse()
                    .map_err(|_| Error::Dataset(format!("row {}, column `{}`: cannot parse `{field}`", row + 2, &headers[col])))?;
                if !v.is_finite() {
                    return Err(Error::Dataset(format!("row {}: non-finite value", row + 2)));
                }
                features.push(v);
            }
        }
    }
    let total = labels.len();
    if total < 2 {
        return Err(Error::Dataset(format!("need at least 2 rows, found {total}")));
    }

    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for l in &labels {
        *counts.entry(l.clone()).or_default() += 1;
    }
    if counts.len() < 2 {
        return Err(Error::Dataset("single-class dataset".into()));
    }
    let class_names: Vec<String> = counts.keys().cloned().collect();
    let class_of = |l: &str| class_names.iter().position(|c| c == l).expect("label indexed");
    let c = class_names.len();

    let train_n = opts.train_count.unwrap_or(total / 2);
    if train_n == 0 || train_n >= total {
        return Err(Error::Dataset(format!("train count {train_n} must be in 1..{total}")));
    }
    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(&mut ChaCha20Rng::seed_from_u64(opts.split_seed));

    let build = |rows: &[usize]| {
        let x = DMatrix::from_fn(rows.len(), d, |i, j| features[rows[i] * d + j]);
        let mut y = DMatrix::zeros(rows.len(), c);
        for (i, &r) in rows.iter().enumerate() {
            y[(i, class_of(&labels[r]))] = 1.0;
        }
        (x, y)
    };
    let (x_train, y_train) = build(&order[..train_n]);
    let (x_test, y_test) = build(&order[train_n..]);

    let mut meta = DatasetMeta::new(name, Some(opts.split_seed));
    meta.steps.push(format!(
        "csv label_column={} rows={} one-hot classes={}",
        &headers[label_idx],
        total,
        c
    ));
    meta.steps.push(format!("shuffle split_seed={} train={} test={}", opts.split_seed, train_n, total - train_n));
    meta.class_counts = class_names.iter().map(|k| counts[k]).collect();
    meta.class_names = class_names;
    meta.source_hash = Some(linalg::sha256_hex(bytes));

    let ds = Dataset {
        x_train,
        y_train,
        x_test: Some(x_test),
        y_test: Some(y_test),
        task: Task::Classification,
        meta,
    };
    ds.validate()?;
    Ok(ds)
}

/// Fitted principal-component projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaManifest {
    pub mean: Vec<f64>,
    /// k×d, row-major; rows are orthonormal principal directions.
    pub components: Vec<f64>,
    pub k: usize,
    pub d: usize,
    pub explained_variance_ratio: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PcaOutput {
    pub train: DMatrix<f64>,
    pub test: Option<DMatrix<f64>>,
    pub manifest: PcaManifest,
    /// d×k matrix whose columns are the principal directions.
    pub basis: DMatrix<f64>,
}

/// Center by the train mean and project both splits onto the top-`k`
/// principal directions of the centered train matrix. Each direction is
/// signed so its largest-magnitude component is positive.
pub fn pca_reduce(x_train: &DMatrix<f64>, x_test: Option<&DMatrix<f64>>, k: usize) -> Result<PcaOutput> {
    let (n, d) = x_train.shape();
    if n == 0 {
        return Err(Error::Dataset("empty training matrix".into()));
    }
    if k == 0 || k > d {
        return Err(Error::InvalidParameter {
            name: "k",
            reason: format!("must be in 1..={d}, got {k}"),
        });
    }
    if let Some(xt) = x_test {
        if xt.ncols() != d {
            return Err(crate::error::mismatch("pca test columns", d, xt.ncols()));
        }
    }
    let mean = x_train.row_mean();
    let mut centered = x_train.clone();
    for mut row in centered.row_iter_mut() {
        row -= &mean;
    }
    // Right singular vectors of the centered matrix = eigenvectors of its Gram.
    let gram = linalg::symmetrize(&(centered.transpose() * &centered));
    let eig = linalg::sym_eigen(&gram)?;
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let total: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();

    let mut basis = DMatrix::zeros(d, k);
    let mut ratios = Vec::with_capacity(k);
    for (j, &idx) in order.iter().take(k).enumerate() {
        let mut col = eig.eigenvectors.column(idx).into_owned();
        let pivot = col.iter().copied().fold(0.0_f64, |m, v| if v.abs() > m.abs() { v } else { m });
        if pivot < 0.0 {
            col = -col;
        }
        basis.set_column(j, &col);
        ratios.push(if total > 0.0 { eig.eigenvalues[idx].max(0.0) / total } else { 0.0 });
    }

    let project = |m: &DMatrix<f64>| {
        let mut c = m.clone();
        for mut row in c.row_iter_mut() {
            row -= &mean;
        }
        c * &basis
    };
    Ok(PcaOutput {
        train: centered * &basis,
        test: x_test.map(project),
        manifest: PcaManifest {
            mean: mean.iter().copied().collect(),
            components: crate::network::row_major(&basis.transpose()),
            k,
            d,
            explained_variance_ratio: ratios,
        },
        basis,
    })
}

/// Replace both feature splits of `ds` by their `k` principal components.
pub fn apply_pca(ds: &Dataset, k: usize) -> Result<(Dataset, PcaManifest)> {
    let out = pca_reduce(&ds.x_train, ds.x_test.as_ref(), k)?;
    let mut next = ds.clone();
    next.x_train = out.train;
    next.x_test = out.test;
    next.meta.steps.push(format!("pca k={k} fit=train"));
    Ok((next, out.manifest))
}

/// Digit-image subset: the first 2000 rows of a label-first CSV, split
/// 1000/1000 and reduced to 20 principal components fit on train.
pub fn load_mnist_csv(path: &Path, split_seed: u64) -> Result<(Dataset, PcaManifest)> {
    let ds = load_csv(
        path,
        &CsvOptions {
            label: LabelColumn::Index(0),
            split_seed,
            train_count: Some(1000),
            max_rows: Some(2000),
        },
    )?;
    let (mut ds, pca) = apply_pca(&ds, 20)?;
    ds.meta.name = "mnist".into();
    Ok((ds, pca))
}

/// Append a constant-1 feature column to both splits.
pub fn add_bias(ds: &Dataset) -> Result<Dataset> {
    if ds.meta.bias {
        return Err(Error::Dataset("bias column already added".into()));
    }
    if ds.n() == 0 {
        return Err(Error::Dataset("cannot add bias to a dataset with no rows".into()));
    }
    let mut next = ds.clone();
    next.x_train = crate::lifted::with_ones_column(&ds.x_train);
    next.x_test = ds.x_test.as_ref().map(crate::lifted::with_ones_column);
    next.meta.bias = true;
    next.meta.steps.push("bias column".into());
    Ok(next)
}

/// Content-addressed on-disk dataset cache.
#[derive(Debug, Clone)]
pub struct DatasetCache {
    dir: PathBuf,
}

impl DatasetCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    /// Cache key for a dataset description string.
    pub fn key(description: &str) -> String {
        linalg::sha256_hex(description.as_bytes())
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn load(&self, key: &str) -> Result<Option<Dataset>> {
        let p = self.path(key);
        if !p.exists() {
            return Ok(None);
        }
        let ds: Dataset = serde_json::from_slice(&fs::read(p)?)?;
        ds.validate()?;
        Ok(Some(ds))
    }

    /// Store `ds` and its manifest under `key`.
    pub fn store(&self, key: &str, ds: &Dataset) -> Result<PathBuf> {
        fs::create_dir_all(&self.dir)?;
        let p = self.path(key);
        fs::write(&p, serde_json::to_vec(ds)?)?;
        fs::write(
            self.dir.join(format!("{key}.manifest.json")),
            serde_json::to_vec_pretty(&ds.manifest())?,
        )?;
        Ok(p)
    }

    /// Load from cache or build and store.
    pub fn get_or_insert(&self, description: &str, build: impl FnOnce() -> Result<Dataset>) -> Result<Dataset> {
        let key = Self::key(description);
        if let Some(ds) = self.load(&key)? {
            return Ok(ds);
        }
        let ds = build()?;
        self.store(&key, &ds)?;
        Ok(ds)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn random_shapes_and_determinism() {
        let a = gen_random(7);
        assert_eq!(a.x_train.shape(), (25, 2));
        assert_eq!(a.y_train.shape(), (25, 5));
        assert_eq!(a, gen_random(7));
        assert_ne!(a.x_train, gen_random(8).x_train);
        a.validate().unwrap();
    }

    #[test]
    fn random_labels_nonzero_across_seeds() {
        for s in 0..100 {
            assert!(gen_random(s).y_train.norm() > 0.0, "seed {s}");
        }
    }

    #[test]
    fn spiral_shapes_and_one_hot() {
        let ds = gen_spiral(0);
        assert_eq!(ds.x_train.shape(), (60, 2));
        assert_eq!(ds.y_train.shape(), (60, 3));
        for k in 0..3 {
            assert_eq!(ds.y_train.column(k).sum(), 20.0);
        }
        for row in ds.y_train.row_iter() {
            assert_eq!(row.sum(), 1.0);
        }
        ds.validate().unwrap();
    }

    #[test]
    fn noiseless_spiral_radius_equals_parameter() {
        let p = SpiralParams {
            sigma: 0.0,
            ..SpiralParams::default()
        };
        let ds = gen_spiral_with(p, 0);
        for k in 0..3 {
            for i in 0..20 {
                let t = 0.05 + 0.95 * i as f64 / 19.0;
                let row = ds.x_train.row(k * 20 + i);
                assert!((row.norm() - t).abs() < 1e-12);
                let theta = 2.0 * PI * 1.5 * t + 2.0 * PI * k as f64 / 3.0;
                assert!((row[0] - t * theta.cos()).abs() < 1e-12);
                assert!((row[1] - t * theta.sin()).abs() < 1e-12);
            }
        }
    }

    fn write_csv(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn csv_split_is_partition_and_one_hot() {
        let mut s = String::from("a,b,label\n");
        for i in 0..11 {
            s.push_str(&format!("{i},{},{}\n", i * 2, if i % 3 == 0 { "x" } else { "y" }));
        }
        let f = write_csv(&s);
        let ds = load_csv(f.path(), &CsvOptions::default()).unwrap();
        assert_eq!(ds.n(), 5);
        assert_eq!(ds.x_test.as_ref().unwrap().nrows(), 6);
        let mut seen: Vec<i64> = ds
            .x_train
            .column(0)
            .iter()
            .chain(ds.x_test.as_ref().unwrap().column(0).iter())
            .map(|&v| v as i64)
            .collect();
        seen.sort();
        assert_eq!(seen, (0..11).collect::<Vec<_>>());
        assert_eq!(ds.meta.class_names, vec!["x", "y"]);
        assert_eq!(ds.meta.class_counts, vec![4, 7]);
        // Labels follow their rows through the shuffle.
        for (xr, yr) in ds.x_train.row_iter().zip(ds.y_train.row_iter()) {
            let class = if (xr[0] as i64) % 3 == 0 { 0 } else { 1 };
            assert_eq!(yr[class], 1.0);
        }
    }

    #[test]
    fn csv_train_count_override() {
        let mut s = String::from("f,label\n");
        for i in 0..10 {
            s.push_str(&format!("{i},{}\n", i % 2));
        }
        let f = write_csv(&s);
        let opts = CsvOptions {
            train_count: Some(4),
            ..CsvOptions::default()
        };
        assert_eq!(load_csv(f.path(), &opts).unwrap().n(), 4);
    }

    #[test]
    fn csv_errors() {
        let f = write_csv("a,label\n1,x\n2,x\n3,x\n");
        assert!(matches!(load_csv(f.path(), &CsvOptions::default()), Err(Error::Dataset(m)) if m.contains("single-class")));
        let f = write_csv("a,label\n1,x\n,y\n3,x\n");
        assert!(load_csv(f.path(), &CsvOptions::default()).is_err());
        let f = write_csv("a,label\n1,x\nfoo,y\n3,x\n");
        assert!(load_csv(f.path(), &CsvOptions::default()).is_err());
        let opts = CsvOptions {
            label: LabelColumn::Name("missing".into()),
            ..CsvOptions::default()
        };
        let f = write_csv("a,label\n1,x\n2,y\n");
        assert!(load_csv(f.path(), &opts).is_err());
    }

    #[test]
    fn pca_full_rank_is_orthogonal_change_of_basis() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let x = DMatrix::from_fn(12, 4, |_, _| StandardNormal.sample(&mut rng));
        let out = pca_reduce(&x, None, 4).unwrap();
        let q = &out.basis;
        assert!((q.transpose() * q - DMatrix::identity(4, 4)).amax() < 1e-10);
        let mean = x.row_mean();
        let mut centered = x.clone();
        for mut row in centered.row_iter_mut() {
            row -= &mean;
        }
        assert!((&out.train * q.transpose() - centered).amax() < 1e-10);
        for j in 0..4 {
            let col = q.column(j);
            let pivot = col.iter().copied().fold(0.0_f64, |m, v| if v.abs() > m.abs() { v } else { m });
            assert!(pivot > 0.0);
        }
    }

    #[test]
    fn pca_rank_one_explains_everything() {
        let x = DMatrix::from_fn(8, 3, |i, j| (i as f64 - 3.0) * [1.0, -2.0, 0.5][j]);
        let out = pca_reduce(&x, Some(&x), 1).unwrap();
        assert!((out.manifest.explained_variance_ratio[0] - 1.0).abs() < 1e-12);
        assert_eq!(out.test.unwrap().shape(), (8, 1));
        assert!(pca_reduce(&x, None, 4).is_err());
    }

    #[test]
    fn bias_guards() {
        let ds = gen_spiral(1);
        let b = add_bias(&ds).unwrap();
        assert_eq!(b.d(), 3);
        assert!(b.x_train.column(2).iter().all(|&v| v == 1.0));
        assert!(add_bias(&b).is_err());
        let mut empty = ds.clone();
        empty.x_train = DMatrix::zeros(0, 2);
        empty.y_train = DMatrix::zeros(0, 3);
        assert!(add_bias(&empty).is_err());
    }

    #[test]
    fn cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cache = DatasetCache::new(dir.path());
        let mut calls = 0;
        let a = cache
            .get_or_insert("random seed=3", || {
                calls += 1;
                Ok(gen_random(3))
            })
            .unwrap();
        let b = cache.get_or_insert("random seed=3", || panic!("cached")).unwrap();
        assert_eq!(calls, 1);
        assert_eq!(a, b);
    }
}
