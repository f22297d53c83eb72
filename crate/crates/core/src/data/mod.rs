//! Datasets, synthetic generators, CSV ingestion and region predicates.

mod csv_io;
mod region;
mod synth;

pub use csv_io::{load_csv, write_csv};
pub use region::{region_mask, BoxBound, BoxRegion, Clause, RegionSpec};
pub use synth::{
    gaussian_region, gen_gaussian_mixture, gen_regression_synth, gen_tabular_synth,
    regression_mean, regression_noise_std, regression_region, tabular_region,
    train_test_split, GAUSSIAN_CLASS_SIZES,
};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ColumnKind {
    Continuous,
    /// Values are stored as integer codes indexing `categories`.
    Categorical {
        #[serde(default)]
        categories: Vec<String>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    #[serde(flatten)]
    pub kind: ColumnKind,
}

impl Column {
    pub fn continuous(name: impl Into<String>) -> Self {
        Column {
            name: name.into(),
            kind: ColumnKind::Continuous,
        }
    }

    pub fn categorical(name: impl Into<String>, categories: Vec<String>) -> Self {
        Column {
            name: name.into(),
            kind: ColumnKind::Categorical { categories },
        }
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self.kind, ColumnKind::Categorical { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Classification { num_classes: usize },
    Regression,
}

/// Column layout of a dataset file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub columns: Vec<Column>,
    pub label: String,
    pub task: Task,
}

/// Width of the learned representation for a categorical column with
/// `n_unique` distinct values.
pub fn embedding_dim(n_unique: usize) -> usize {
    50.min((n_unique + 1).div_ceil(2))
}

impl Schema {
    pub fn continuous(names: &[&str], label: &str, task: Task) -> Self {
        Schema {
            columns: names.iter().map(|n| Column::continuous(*n)).collect(),
            label: label.to_string(),
            task,
        }
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    /// Embedding width for every categorical column, in column order.
    pub fn embedding_dims(&self) -> Vec<(String, usize)> {
        self.columns
            .iter()
            .filter_map(|c| match &c.kind {
                ColumnKind::Categorical { categories } => {
                    Some((c.name.clone(), embedding_dim(categories.len())))
                }
                ColumnKind::Continuous => None,
            })
            .collect()
    }

    /// Width of the encoded model input: continuous columns pass through,
    /// categorical columns expand to one indicator per category.
    pub fn input_dim(&self) -> usize {
        self.columns
            .iter()
            .map(|c| match &c.kind {
                ColumnKind::Continuous => 1,
                ColumnKind::Categorical { categories } => categories.len(),
            })
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Targets {
    Classes { labels: Vec<usize>, num_classes: usize },
    Real(Vec<f64>),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Classes { labels, .. } => labels.len(),
            Targets::Real(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub schema: Schema,
    /// Raw rows; categorical cells hold their integer code.
    pub features: Vec<Vec<f64>>,
    pub targets: Targets,
    /// Precomputed region membership; overrides predicate evaluation.
    pub region: Option<Vec<bool>>,
}

impl Dataset {
    pub fn new(
        schema: Schema,
        features: Vec<Vec<f64>>,
        targets: Targets,
        region: Option<Vec<bool>>,
    ) -> Result<Self> {
        let ds = Dataset {
            schema,
            features,
            targets,
            region,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn classification(features: Vec<Vec<f64>>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        let dim = features.first().map_or(0, Vec::len);
        let names: Vec<String> = (0..dim).map(|i| format!("x{i}")).collect();
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        Dataset::new(
            Schema::continuous(&refs, "label", Task::Classification { num_classes }),
            features,
            Targets::Classes { labels, num_classes },
            None,
        )
    }

    pub fn regression(features: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<Self> {
        let dim = features.first().map_or(0, Vec::len);
        let names: Vec<String> = (0..dim).map(|i| format!("x{i}")).collect();
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        Dataset::new(
            Schema::continuous(&refs, "y", Task::Regression),
            features,
            Targets::Real(targets),
            None,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.features.len();
        if self.targets.len() != n {
            return Err(Error::input(format!(
                "{} feature rows but {} targets",
                n,
                self.targets.len()
            )));
        }
        let width = self.schema.columns.len();
        for (i, row) in self.features.iter().enumerate() {
            if row.len() != width {
                return Err(Error::input(format!(
                    "row {i} has {} cells, schema has {width} columns",
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::input(format!("row {i} contains a non-finite value")));
            }
            for (col, v) in self.schema.columns.iter().zip(row) {
                if let ColumnKind::Categorical { categories } = &col.kind {
                    if v.fract() != 0.0 || *v < 0.0 || (*v as usize) >= categories.len() {
                        return Err(Error::input(format!(
                            "row {i}: code {v} out of range for categorical '{}'",
                            col.name
                        )));
                    }
                }
            }
        }
        match &self.targets {
            Targets::Classes { labels, num_classes } => {
                if let Some((i, l)) = labels.iter().enumerate().find(|(_, l)| **l >= *num_classes) {
                    return Err(Error::input(format!(
                        "row {i}: label {l} outside [0, {num_classes})"
                    )));
                }
            }
            Targets::Real(v) => {
                if v.iter().any(|y| !y.is_finite()) {
                    return Err(Error::input("non-finite regression target"));
                }
            }
        }
        if let Some(mask) = &self.region {
            if mask.len() != n {
                return Err(Error::input(format!(
                    "region mask has {} entries for {n} rows",
                    mask.len()
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn num_classes(&self) -> Option<usize> {
        match &self.targets {
            Targets::Classes { num_classes, .. } => Some(*num_classes),
            Targets::Real(_) => None,
        }
    }

    pub fn labels(&self) -> Result<&[usize]> {
        match &self.targets {
            Targets::Classes { labels, .. } => Ok(labels),
            Targets::Real(_) => Err(Error::input("dataset has real-valued targets, not labels")),
        }
    }

    pub fn real_targets(&self) -> Result<&[f64]> {
        match &self.targets {
            Targets::Real(v) => Ok(v),
            Targets::Classes { .. } => Err(Error::input("dataset has class labels, not real targets")),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.schema.input_dim()
    }

    /// Encodes one raw row into a model input vector.
    pub fn encode_row(&self, row: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.input_dim());
        for (col, v) in self.schema.columns.iter().zip(row) {
            match &col.kind {
                ColumnKind::Continuous => out.push(*v),
                ColumnKind::Categorical { categories } => {
                    let code = *v as usize;
                    out.extend((0..categories.len()).map(|k| if k == code { 1.0 } else { 0.0 }));
                }
            }
        }
        out
    }

    /// Model inputs for every row.
    pub fn inputs(&self) -> Vec<Vec<f64>> {
        if self.schema.columns.iter().all(|c| !c.is_categorical()) {
            return self.features.clone();
        }
        self.features.iter().map(|r| self.encode_row(r)).collect()
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let features = indices.iter().map(|&i| self.features[i].clone()).collect();
        let targets = match &self.targets {
            Targets::Classes { labels, num_classes } => Targets::Classes {
                labels: indices.iter().map(|&i| labels[i]).collect(),
                num_classes: *num_classes,
            },
            Targets::Real(v) => Targets::Real(indices.iter().map(|&i| v[i]).collect()),
        };
        let region = self
            .region
            .as_ref()
            .map(|m| indices.iter().map(|&i| m[i]).collect());
        Dataset {
            schema: self.schema.clone(),
            features,
            targets,
            region,
        }
    }

    /// Concatenates two datasets sharing a schema.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        if self.schema != other.schema {
            return Err(Error::input("cannot concatenate datasets with different schemas"));
        }
        let mut out = self.clone();
        out.features.extend(other.features.iter().cloned());
        out.targets = match (&self.targets, &other.targets) {
            (
                Targets::Classes { labels: a, num_classes },
                Targets::Classes { labels: b, .. },
            ) => Targets::Classes {
                labels: a.iter().chain(b).copied().collect(),
                num_classes: *num_classes,
            },
            (Targets::Real(a), Targets::Real(b)) => {
                Targets::Real(a.iter().chain(b).copied().collect())
            }
            _ => return Err(Error::input("target kinds differ")),
        };
        out.region = match (&self.region, &other.region) {
            (Some(a), Some(b)) => Some(a.iter().chain(b).copied().collect()),
            (None, None) => None,
            _ => return Err(Error::input("only one dataset carries a region mask")),
        };
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedding_dim_rule() {
        assert_eq!(embedding_dim(3), 2);
        assert_eq!(embedding_dim(4), 3);
        assert_eq!(embedding_dim(200), 50);
        assert_eq!(embedding_dim(99), 50);
        assert_eq!(embedding_dim(98), 50);
        assert_eq!(embedding_dim(97), 49);
    }

    #[test]
    fn rejects_bad_labels_and_nan() {
        assert!(Dataset::classification(vec![vec![0.0]], vec![3], 3).is_err());
        assert!(Dataset::classification(vec![vec![f64::NAN]], vec![0], 3).is_err());
        assert!(Dataset::classification(vec![vec![1.0]], vec![2], 3).is_ok());
    }

    #[test]
    fn one_hot_encoding_of_categoricals() {
        let schema = Schema {
            columns: vec![
                Column::continuous("age"),
                Column::categorical("color", vec!["r".into(), "g".into(), "b".into()]),
            ],
            label: "label".into(),
            task: Task::Classification { num_classes: 2 },
        };
        let ds = Dataset::new(
            schema,
            vec![vec![30.0, 2.0]],
            Targets::Classes { labels: vec![1], num_classes: 2 },
            None,
        )
        .unwrap();
        assert_eq!(ds.input_dim(), 4);
        assert_eq!(ds.inputs()[0], vec![30.0, 0.0, 0.0, 1.0]);
    }
}
