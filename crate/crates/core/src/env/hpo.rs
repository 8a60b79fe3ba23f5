//! Hyper-parameter tuning environments backed by lookup tables of AUROC
//! evaluations.
//!
//! Tables live at `<dir>/<algorithm>/<dataset id>.csv`, one row per
//! evaluated configuration, with one column per hyper-parameter in raw
//! units plus an `auc` column. Transforms are applied on load.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Domain, Environment, Optimum, Task};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const META_TRAIN_IDS: [u32; 20] = [
    3, 1036, 1038, 1043, 1046, 151, 1176, 1049, 1050, 31, 1570, 37, 4134, 1063, 1067, 44, 1068, 50,
    1461, 1462,
];

pub const META_TEST_IDS: [u32; 13] = [
    335, 1489, 1486, 1494, 1504, 1120, 1510, 1479, 1480, 333, 1485, 1487, 334,
];

#[derive(Clone, Copy, Debug, PartialEq)]
enum Transform {
    Identity,
    /// `(log2(x) + shift) / scale`
    Log2 { shift: f64, scale: f64 },
    /// `(x − shift) / scale`
    Affine { shift: f64, scale: f64 },
    /// `linear` → −1, `tree` → 1
    Booster,
}

impl Transform {
    fn apply(self, raw: f64) -> f64 {
        match self {
            Transform::Identity | Transform::Booster => raw,
            Transform::Log2 { shift, scale } => (raw.log2() + shift) / scale,
            Transform::Affine { shift, scale } => (raw - shift) / scale,
        }
    }

    fn invert(self, t: f64) -> f64 {
        match self {
            Transform::Identity | Transform::Booster => t,
            Transform::Log2 { shift, scale } => (t * scale - shift).exp2(),
            Transform::Affine { shift, scale } => t * scale + shift,
        }
    }
}

const fn log2(shift: f64, scale: f64) -> Transform {
    Transform::Log2 { shift, scale }
}

const fn affine(shift: f64, scale: f64) -> Transform {
    Transform::Affine { shift, scale }
}

const GLMNET: [(&str, Transform); 2] = [("alpha", Transform::Identity), ("lambda", log2(0.0, 10.0))];

const RPART: [(&str, Transform); 4] = [
    ("cp", affine(0.0, 0.25)),
    ("maxdepth", affine(0.0, 10.0)),
    ("minbucket", affine(0.0, 20.0)),
    ("minsplit", affine(0.0, 20.0)),
];

const XGBOOST: [(&str, Transform); 10] = [
    ("nrounds", affine(2000.0, 1000.0)),
    ("eta", log2(5.0, 2.0)),
    ("lambda", log2(0.0, 5.0)),
    ("alpha", log2(0.0, 5.0)),
    ("subsample", affine(0.5, 2.0)),
    ("booster", Transform::Booster),
    ("max_depth", Transform::Identity),
    ("min_child_weight", affine(50.0, 20.0)),
    ("colsample_bytree", Transform::Identity),
    ("colsample_bylevel", Transform::Identity),
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum HpoAlgorithm {
    Glmnet,
    Rpart,
    Xgboost,
}

impl HpoAlgorithm {
    pub const ALL: [HpoAlgorithm; 3] = [HpoAlgorithm::Glmnet, HpoAlgorithm::Rpart, HpoAlgorithm::Xgboost];

    pub fn from_name(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "glmnet" => Some(HpoAlgorithm::Glmnet),
            "rpart" => Some(HpoAlgorithm::Rpart),
            "xgboost" => Some(HpoAlgorithm::Xgboost),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            HpoAlgorithm::Glmnet => "glmnet",
            HpoAlgorithm::Rpart => "rpart",
            HpoAlgorithm::Xgboost => "xgboost",
        }
    }

    fn spec(self) -> &'static [(&'static str, Transform)] {
        match self {
            HpoAlgorithm::Glmnet => &GLMNET,
            HpoAlgorithm::Rpart => &RPART,
            HpoAlgorithm::Xgboost => &XGBOOST,
        }
    }

    /// Raw hyper-parameter column names, in coordinate order.
    pub fn columns(self) -> Vec<&'static str> {
        self.spec().iter().map(|(n, _)| *n).collect()
    }

    pub fn dim(self) -> usize {
        self.spec().len()
    }

    /// `(n, T)` defaults.
    pub fn defaults(self) -> (usize, usize) {
        match self {
            HpoAlgorithm::Glmnet => (20, 10),
            HpoAlgorithm::Rpart => (20, 20),
            HpoAlgorithm::Xgboost => (20, 50),
        }
    }

    /// Maps a raw value of coordinate `k` into model space.
    pub fn transform(self, k: usize, raw: f64) -> f64 {
        self.spec()[k].1.apply(raw)
    }

    pub fn inverse_transform(self, k: usize, t: f64) -> f64 {
        self.spec()[k].1.invert(t)
    }

    fn parse_cell(self, k: usize, cell: &str) -> Result<f64> {
        let (name, tf) = self.spec()[k];
        let raw = if tf == Transform::Booster {
            match cell.trim() {
                "linear" => -1.0,
                "tree" => 1.0,
                other => {
                    return Err(Error::Schema(format!(
                        "booster must be `linear` or `tree`, got `{other}`"
                    )))
                }
            }
        } else {
            cell.trim()
                .parse::<f64>()
                .map_err(|_| Error::Schema(format!("column `{name}`: cannot parse `{cell}`")))?
        };
        let t = tf.apply(raw);
        if !t.is_finite() {
            return Err(Error::Schema(format!(
                "column `{name}`: raw value `{cell}` transforms to a non-finite number"
            )));
        }
        Ok(t)
    }

    fn format_raw(self, k: usize, raw: f64) -> String {
        if self.spec()[k].1 == Transform::Booster {
            if raw < 0.0 { "linear" } else { "tree" }.to_string()
        } else {
            format!("{raw}")
        }
    }
}

/// Transformed configurations and AUROC values for every dataset of one
/// algorithm.
#[derive(Clone, Debug)]
pub struct HpoTable {
    pub algorithm: HpoAlgorithm,
    pub datasets: BTreeMap<u32, (Matrix, Vec<f64>)>,
}

impl HpoTable {
    /// Ids present in the table, in split-list order.
    pub fn meta_train_ids(&self) -> Vec<u32> {
        META_TRAIN_IDS
            .iter()
            .copied()
            .filter(|id| self.datasets.contains_key(id))
            .collect()
    }

    pub fn meta_test_ids(&self) -> Vec<u32> {
        META_TEST_IDS
            .iter()
            .copied()
            .filter(|id| self.datasets.contains_key(id))
            .collect()
    }
}

fn known_id(id: u32) -> bool {
    META_TRAIN_IDS.contains(&id) || META_TEST_IDS.contains(&id)
}

fn read_dataset(path: &Path, alg: HpoAlgorithm) -> Result<(Matrix, Vec<f64>)> {
    let mut reader = csv::Reader::from_path(path)?;
    let header = reader.headers()?.clone();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Schema(format!("{}: missing column `{name}`", path.display())))
    };
    let cols = alg
        .columns()
        .into_iter()
        .map(find)
        .collect::<Result<Vec<_>>>()?;
    let auc_col = find("auc")?;
    let mut rows = Vec::new();
    let mut aucs = Vec::new();
    for record in reader.records() {
        let record = record?;
        let row = cols
            .iter()
            .enumerate()
            .map(|(k, &c)| alg.parse_cell(k, record.get(c).unwrap_or("")))
            .collect::<Result<Vec<f64>>>()?;
        let auc: f64 = record
            .get(auc_col)
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|_| Error::Schema(format!("{}: unparseable auc", path.display())))?;
        if !(0.0..=1.0).contains(&auc) {
            return Err(Error::Schema(format!(
                "{}: auc {auc} outside [0, 1]",
                path.display()
            )));
        }
        rows.push(row);
        aucs.push(auc);
    }
    if rows.is_empty() {
        return Err(Error::EmptyData(format!("{} has no rows", path.display())));
    }
    Ok((Matrix::from_rows(&rows)?, aucs))
}

/// Reads every `<dir>/<algorithm>/<id>.csv`.
pub fn load_hpo_table(dir: &Path, algorithm: HpoAlgorithm) -> Result<HpoTable> {
    let sub = dir.join(algorithm.name());
    let mut datasets = BTreeMap::new();
    for entry in fs::read_dir(&sub)? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("csv") {
            continue;
        }
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("");
        let id: u32 = stem
            .parse()
            .map_err(|_| Error::Schema(format!("file name `{stem}` is not a dataset id")))?;
        if !known_id(id) {
            return Err(Error::UnknownDatasetId(id));
        }
        datasets.insert(id, read_dataset(&path, algorithm)?);
    }
    if datasets.is_empty() {
        return Err(Error::EmptyData(format!("no tables under {}", sub.display())));
    }
    Ok(HpoTable {
        algorithm,
        datasets,
    })
}

/// One dataset: a finite set of configurations with their AUROC.
#[derive(Clone, Debug)]
pub struct HpoTask {
    pub dataset_id: u32,
    domain: Domain,
    lookup: HashMap<Vec<u64>, f64>,
    optimum: Optimum,
}

fn key(x: &[f64]) -> Vec<u64> {
    // +0.0 and −0.0 compare equal as rows, so they share a key
    x.iter().map(|v| (v + 0.0).to_bits()).collect()
}

pub fn hpo_env_from_table(table: &HpoTable, dataset_id: u32) -> Result<HpoTask> {
    let (x, y) = table
        .datasets
        .get(&dataset_id)
        .ok_or(Error::UnknownDatasetId(dataset_id))?;
    let mut lookup = HashMap::with_capacity(y.len());
    let mut best = 0;
    for (i, (row, &v)) in x.row_iter().zip(y).enumerate() {
        // duplicated configurations keep their first value
        lookup.entry(key(row)).or_insert(v);
        if v > y[best] {
            best = i;
        }
    }
    Ok(HpoTask {
        dataset_id,
        optimum: Optimum {
            x: x.row(best).to_vec(),
            value: y[best],
        },
        domain: Domain::Finite(x.clone()),
        lookup,
    })
}

impl Task for HpoTask {
    fn evaluate(&self, x: &[f64]) -> Result<f64> {
        self.lookup.get(&key(x)).copied().ok_or(Error::NotInDomain)
    }

    fn domain(&self) -> &Domain {
        &self.domain
    }

    fn optimum(&self) -> &Optimum {
        &self.optimum
    }

    fn describe(&self) -> String {
        format!("dataset {}", self.dataset_id)
    }
}

/// Meta-training tasks cycle through the meta-train ids present in the
/// table; meta-test tasks through the meta-test ids.
pub struct HpoEnvironment {
    table: HpoTable,
    domain: Domain,
    train_ids: Vec<u32>,
    test_ids: Vec<u32>,
}

impl HpoEnvironment {
    pub fn new(table: HpoTable) -> Result<Self> {
        let train_ids = table.meta_train_ids();
        let test_ids = table.meta_test_ids();
        if train_ids.is_empty() || test_ids.is_empty() {
            return Err(Error::EmptyData(format!(
                "{} table needs at least one meta-train and one meta-test dataset",
                table.algorithm.name()
            )));
        }
        let dim = table.algorithm.dim();
        let mut bounds = vec![(f64::INFINITY, f64::NEG_INFINITY); dim];
        for (x, _) in table.datasets.values() {
            for row in x.row_iter() {
                for (b, v) in bounds.iter_mut().zip(row) {
                    b.0 = b.0.min(*v);
                    b.1 = b.1.max(*v);
                }
            }
        }
        for b in &mut bounds {
            if b.0 == b.1 {
                b.0 -= 0.5;
                b.1 += 0.5;
            }
        }
        Ok(HpoEnvironment {
            table,
            domain: Domain::Box(bounds),
            train_ids,
            test_ids,
        })
    }

    pub fn table(&self) -> &HpoTable {
        &self.table
    }
}

impl Environment for HpoEnvironment {
    fn name(&self) -> &str {
        self.table.algorithm.name()
    }

    fn domain(&self) -> &Domain {
        &self.domain
    }

    fn defaults(&self) -> (usize, usize) {
        self.table.algorithm.defaults()
    }

    fn meta_train_task(&self, index: usize, _rng: &mut ChaCha8Rng) -> Result<Box<dyn Task>> {
        let id = self.train_ids[index % self.train_ids.len()];
        Ok(Box::new(hpo_env_from_table(&self.table, id)?))
    }

    fn meta_test_task(&self, index: usize, _rng: &mut ChaCha8Rng) -> Result<Box<dyn Task>> {
        let id = self.test_ids[index % self.test_ids.len()];
        Ok(Box::new(hpo_env_from_table(&self.table, id)?))
    }
}

/// Raw-space sampler for the synthetic tables, as `(low, high, integer)` in
/// model space.
fn synthetic_box(alg: HpoAlgorithm) -> Vec<(f64, f64, bool)> {
    match alg {
        HpoAlgorithm::Glmnet => vec![(0.0, 1.0, false), (-1.0, 1.0, false)],
        HpoAlgorithm::Rpart => vec![
            (0.0, 1.0, false),
            (0.1, 3.0, true),
            (0.05, 3.0, true),
            (0.05, 3.0, true),
        ],
        HpoAlgorithm::Xgboost => vec![
            (-2.0, 3.0, true),
            (-2.5, 2.5, false),
            (-2.0, 2.0, false),
            (-2.0, 2.0, false),
            (-0.25, 0.25, false),
            (-1.0, 1.0, false),
            (1.0, 15.0, true),
            (-2.5, 2.5, false),
            (0.0, 1.0, false),
            (0.0, 1.0, false),
        ],
    }
}

/// Writes a small synthetic table for every algorithm: `ids` datasets with
/// `rows` configurations each. AUROC is a smooth bump in model space whose
/// centre depends on the dataset. The first `ids − ids/2` datasets come from
/// the meta-train list, the rest from the meta-test list.
pub fn write_synthetic_fixture(dir: &Path, ids: usize, rows: usize, seed: u64) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_test = ids / 2;
    let chosen: Vec<u32> = META_TRAIN_IDS[..ids - n_test]
        .iter()
        .chain(&META_TEST_IDS[..n_test])
        .copied()
        .collect();
    for alg in HpoAlgorithm::ALL {
        let sub = dir.join(alg.name());
        fs::create_dir_all(&sub)?;
        let bx = synthetic_box(alg);
        let shared: Vec<f64> = bx.iter().map(|(lo, hi, _)| 0.5 * (lo + hi)).collect();
        for &id in &chosen {
            let centre: Vec<f64> = bx
                .iter()
                .zip(&shared)
                .map(|((lo, hi, _), c)| c + 0.15 * (hi - lo) * (2.0 * rng.random::<f64>() - 1.0))
                .collect();
            let mut w = csv::Writer::from_path(sub.join(format!("{id}.csv")))?;
            let mut header = alg.columns();
            header.push("auc");
            w.write_record(&header)?;
            for _ in 0..rows {
                let raw: Vec<f64> = bx
                    .iter()
                    .enumerate()
                    .map(|(k, &(lo, hi, int))| {
                        let v = lo + (hi - lo) * rng.random::<f64>();
                        if alg.spec()[k].1 == Transform::Booster {
                            if v < 0.0 { -1.0 } else { 1.0 }
                        } else if int {
                            alg.inverse_transform(k, v).round().max(1.0)
                        } else {
                            alg.inverse_transform(k, v)
                        }
                    })
                    .collect();
                let t: Vec<f64> = raw.iter().enumerate().map(|(k, &r)| alg.transform(k, r)).collect();
                let dist: f64 = t
                    .iter()
                    .zip(&centre)
                    .zip(&bx)
                    .map(|((a, c), (lo, hi, _))| ((a - c) / (hi - lo)).powi(2))
                    .sum();
                let auc = 0.5 + 0.45 * (-4.0 * dist / bx.len() as f64 * 2.0).exp();
                let mut record: Vec<String> =
                    (0..raw.len()).map(|k| alg.format_raw(k, raw[k])).collect();
                record.push(format!("{auc}"));
                w.write_record(&record)?;
            }
            w.flush()?;
        }
    }
    Ok(())
}
