use serde::{Deserialize, Serialize};

use super::{ColumnKind, Dataset};
use crate::{Error, Result};

/// One side-constraint `lo < x[dim] < hi` of a box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxBound {
    pub dim: usize,
    pub lo: f64,
    pub hi: f64,
}

/// Axis-aligned open box over input coordinates. Unconstrained coordinates
/// are free.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxRegion {
    pub bounds: Vec<BoxBound>,
}

impl BoxRegion {
    pub fn new(bounds: Vec<BoxBound>) -> Result<Self> {
        let b = BoxRegion { bounds };
        b.validate(None)?;
        Ok(b)
    }

    /// Checks `lo < hi`, distinct dims and, when given, `dim < input_dim`.
    pub fn validate(&self, input_dim: Option<usize>) -> Result<()> {
        for (i, b) in self.bounds.iter().enumerate() {
            if !(b.lo.is_finite() && b.hi.is_finite() && b.lo < b.hi) {
                return Err(Error::InvalidRegion(format!(
                    "bound on dim {} needs finite lo < hi, got ({}, {})",
                    b.dim, b.lo, b.hi
                )));
            }
            if self.bounds[..i].iter().any(|o| o.dim == b.dim) {
                return Err(Error::InvalidRegion(format!("dim {} bounded twice", b.dim)));
            }
            if let Some(d) = input_dim {
                if b.dim >= d {
                    return Err(Error::InvalidRegion(format!(
                        "dim {} outside input dimensionality {d}",
                        b.dim
                    )));
                }
            }
        }
        Ok(())
    }

    /// Strict membership: every bounded coordinate lies in its open interval.
    pub fn contains(&self, x: &[f64]) -> bool {
        self.bounds.iter().all(|b| b.lo < x[b.dim] && x[b.dim] < b.hi)
    }
}

/// A clause of a column predicate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Clause {
    /// `lo <= value < hi` on a continuous column.
    Interval { col: String, lo: f64, hi: f64 },
    /// Equality on a categorical column.
    Equals { col: String, eq: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum RegionSpec {
    Box(BoxRegion),
    Predicate { clauses: Vec<Clause> },
}

impl RegionSpec {
    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("region spec serializes")
    }

    /// The region that matches nothing: an empty interval would be rejected,
    /// so an impossible box on dim 0 is used instead.
    pub fn nowhere() -> Self {
        RegionSpec::Box(BoxRegion {
            bounds: vec![BoxBound {
                dim: 0,
                lo: f64::MAX / 2.0,
                hi: f64::MAX,
            }],
        })
    }
}

enum Compiled {
    Interval(usize, f64, f64),
    Code(usize, f64),
}

fn compile(ds: &Dataset, clauses: &[Clause]) -> Result<Vec<Compiled>> {
    clauses
        .iter()
        .map(|c| match c {
            Clause::Interval { col, lo, hi } => {
                let idx = ds
                    .schema
                    .column_index(col)
                    .ok_or_else(|| Error::InvalidRegion(format!("unknown column '{col}'")))?;
                if !matches!(ds.schema.columns[idx].kind, ColumnKind::Continuous) {
                    return Err(Error::InvalidRegion(format!(
                        "interval clause on categorical column '{col}'"
                    )));
                }
                if !(lo < hi) {
                    return Err(Error::InvalidRegion(format!(
                        "empty interval [{lo}, {hi}) on '{col}'"
                    )));
                }
                Ok(Compiled::Interval(idx, *lo, *hi))
            }
            Clause::Equals { col, eq } => {
                let idx = ds
                    .schema
                    .column_index(col)
                    .ok_or_else(|| Error::InvalidRegion(format!("unknown column '{col}'")))?;
                match &ds.schema.columns[idx].kind {
                    ColumnKind::Categorical { categories } => {
                        let code = categories.iter().position(|c| c == eq).ok_or_else(|| {
                            Error::InvalidRegion(format!("'{eq}' is not a category of '{col}'"))
                        })?;
                        Ok(Compiled::Code(idx, code as f64))
                    }
                    ColumnKind::Continuous => Err(Error::InvalidRegion(format!(
                        "equality clause on continuous column '{col}'"
                    ))),
                }
            }
        })
        .collect()
}

/// Row-wise region membership. A region column carried by the dataset takes
/// precedence over `spec`.
pub fn region_mask(data: &Dataset, spec: &RegionSpec) -> Result<Vec<bool>> {
    if let Some(mask) = &data.region {
        return Ok(mask.clone());
    }
    match spec {
        RegionSpec::Box(b) => {
            b.validate(Some(data.schema.columns.len()))?;
            Ok(data.features.iter().map(|r| b.contains(r)).collect())
        }
        RegionSpec::Predicate { clauses } => {
            let compiled = compile(data, clauses)?;
            Ok(data
                .features
                .iter()
                .map(|r| {
                    compiled.iter().all(|c| match *c {
                        Compiled::Interval(i, lo, hi) => lo <= r[i] && r[i] < hi,
                        Compiled::Code(i, code) => r[i] == code,
                    })
                })
                .collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Column, Schema, Targets, Task};

    fn tiny() -> Dataset {
        Dataset::classification(
            vec![vec![2.0, 0.5], vec![2.5, 1.0], vec![3.0, 1.0], vec![2.2, -0.1]],
            vec![0, 0, 1, 0],
            2,
        )
        .unwrap()
    }

    #[test]
    fn box_json_round_trip() {
        let json = r#"{"type":"box","bounds":[{"dim":0,"lo":2.0,"hi":2.75},{"dim":1,"lo":0.0,"hi":1.5}]}"#;
        let spec = RegionSpec::from_json(json).unwrap();
        let RegionSpec::Box(b) = &spec else { panic!("expected box") };
        assert_eq!(b.bounds.len(), 2);
        assert_eq!(RegionSpec::from_json(&spec.to_json()).unwrap(), spec);
    }

    #[test]
    fn predicate_json_parses_both_clause_kinds() {
        let json = r#"{"type":"predicate","clauses":[{"col":"age","lo":0,"hi":35},{"col":"purpose","eq":"home_improvement"}]}"#;
        let spec = RegionSpec::from_json(json).unwrap();
        let RegionSpec::Predicate { clauses } = spec else { panic!() };
        assert!(matches!(clauses[0], Clause::Interval { .. }));
        assert!(matches!(clauses[1], Clause::Equals { .. }));
    }

    #[test]
    fn empty_predicate_matches_everything() {
        let ds = tiny();
        let mask = region_mask(&ds, &RegionSpec::Predicate { clauses: vec![] }).unwrap();
        assert!(mask.iter().all(|m| *m));
    }

    #[test]
    fn box_boundary_points_are_excluded() {
        let ds = tiny();
        let spec = RegionSpec::Box(BoxRegion {
            bounds: vec![
                BoxBound { dim: 0, lo: 2.0, hi: 2.75 },
                BoxBound { dim: 1, lo: 0.0, hi: 1.5 },
            ],
        });
        // (2.0, 0.5) sits on the lower x bound.
        assert_eq!(region_mask(&ds, &spec).unwrap(), vec![false, true, false, false]);
    }

    #[test]
    fn unknown_column_is_rejected() {
        let ds = tiny();
        let spec = RegionSpec::Predicate {
            clauses: vec![Clause::Interval { col: "nope".into(), lo: 0.0, hi: 1.0 }],
        };
        assert!(matches!(region_mask(&ds, &spec), Err(Error::InvalidRegion(_))));
    }

    #[test]
    fn categorical_equality() {
        let schema = Schema {
            columns: vec![
                Column::continuous("age"),
                Column::categorical("purpose", vec!["car".into(), "home".into()]),
            ],
            label: "label".into(),
            task: Task::Classification { num_classes: 2 },
        };
        let ds = Dataset::new(
            schema,
            vec![vec![30.0, 1.0], vec![40.0, 1.0], vec![20.0, 0.0]],
            Targets::Classes { labels: vec![0, 1, 0], num_classes: 2 },
            None,
        )
        .unwrap();
        let spec = RegionSpec::Predicate {
            clauses: vec![
                Clause::Interval { col: "age".into(), lo: 0.0, hi: 35.0 },
                Clause::Equals { col: "purpose".into(), eq: "home".into() },
            ],
        };
        assert_eq!(region_mask(&ds, &spec).unwrap(), vec![true, false, false]);
    }

    #[test]
    fn stored_mask_overrides_predicate() {
        let mut ds = tiny();
        ds.region = Some(vec![true, false, true, false]);
        let mask = region_mask(&ds, &RegionSpec::nowhere()).unwrap();
        assert_eq!(mask, vec![true, false, true, false]);
    }
}
