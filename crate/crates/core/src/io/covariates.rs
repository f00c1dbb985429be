//! Covariate ingestion: comma-separated, one row per sample, first column
//! the sample ID. Rows are matched to the OTU table's samples by ID,
//! order-insensitively.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use ndarray::Array2;

use crate::model::{BSplineBasis, CovariateMatrix, TransformSpec, TransformTerm};
use crate::{Error, Result};

/// Raw covariates aligned to the OTU sample order, before expansion.
#[derive(Debug, Clone)]
pub struct LoadedCovariates {
    pub names: Vec<String>,
    /// `L x J`, columns in OTU sample order.
    pub raw: Array2<f64>,
    /// Contiguous 0-based individual indices, when a grouping column was
    /// requested.
    pub grouping: Option<Vec<usize>>,
    /// The grouping column's original labels, one per individual.
    pub grouping_labels: Option<Vec<String>>,
}

/// Loads the covariate file and aligns rows with `sample_order`. The
/// `grouping_column`, when given, is consumed as the individual identifier
/// (its labels may be arbitrary strings) and excluded from the numeric
/// covariates.
pub fn load_covariates(
    path: &Path,
    sample_order: &[String],
    grouping_column: Option<&str>,
) -> Result<LoadedCovariates> {
    let file = std::fs::File::open(path)?;
    let mut lines = BufReader::new(file).lines().enumerate();

    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(1, "empty covariate file"))?;
    let header = header?;
    let cols: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    if cols.len() < 2 {
        return Err(Error::parse(
            1,
            "covariate header needs a sample ID column and at least one covariate",
        ));
    }
    let grouping_idx = match grouping_column {
        Some(name) => Some(
            cols.iter()
                .position(|c| c == name)
                .ok_or_else(|| Error::data(format!("grouping column '{name}' not found")))?,
        ),
        None => None,
    };
    let names: Vec<String> = cols[1..]
        .iter()
        .enumerate()
        .filter(|(idx, _)| Some(idx + 1) != grouping_idx)
        .map(|(_, c)| c.clone())
        .collect();

    let mut by_id: HashMap<String, (usize, Vec<f64>, Option<String>)> = HashMap::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(Error::parse(
                line_no,
                format!(
                    "row has {} fields but the header declares {}",
                    fields.len(),
                    cols.len()
                ),
            ));
        }
        let id = fields[0].trim().to_string();
        let mut values = Vec::with_capacity(names.len());
        let mut group_label = None;
        for (col, cell) in fields.iter().enumerate().skip(1) {
            if Some(col) == grouping_idx {
                group_label = Some(cell.trim().to_string());
                continue;
            }
            let v: f64 = cell.trim().parse().map_err(|_| {
                Error::parse(
                    line_no,
                    format!(
                        "column '{}' of sample '{id}' is '{}', not numeric",
                        cols[col],
                        cell.trim()
                    ),
                )
            })?;
            values.push(v);
        }
        if by_id.insert(id.clone(), (line_no, values, group_label)).is_some() {
            return Err(Error::parse(line_no, format!("duplicate sample ID '{id}'")));
        }
    }

    if by_id.len() != sample_order.len() {
        return Err(Error::data(format!(
            "covariate file describes {} samples but the OTU table has {}",
            by_id.len(),
            sample_order.len()
        )));
    }
    let mut raw = Array2::zeros((names.len(), sample_order.len()));
    let mut group_labels_per_sample = Vec::with_capacity(sample_order.len());
    for (jj, id) in sample_order.iter().enumerate() {
        let (_, values, label) = by_id
            .get(id)
            .ok_or_else(|| Error::data(format!("sample '{id}' missing from the covariate file")))?;
        for (l, &v) in values.iter().enumerate() {
            raw[[l, jj]] = v;
        }
        group_labels_per_sample.push(label.clone());
    }

    let (grouping, grouping_labels) = if grouping_idx.is_some() {
        let mut label_to_index: Vec<String> = Vec::new();
        let mut grouping = Vec::with_capacity(sample_order.len());
        for label in &group_labels_per_sample {
            let label = label
                .as_ref()
                .ok_or_else(|| Error::data("missing grouping value".to_string()))?;
            let idx = match label_to_index.iter().position(|l| l == label) {
                Some(i) => i,
                None => {
                    label_to_index.push(label.clone());
                    label_to_index.len() - 1
                }
            };
            grouping.push(idx);
        }
        (Some(grouping), Some(label_to_index))
    } else {
        (None, None)
    };

    Ok(LoadedCovariates {
        names,
        raw,
        grouping,
        grouping_labels,
    })
}

/// Checks that every declared-binary covariate is coded 0/1; two-level
/// columns on other codes get a recoding hint.
pub fn validate_binary(loaded: &LoadedCovariates, declared: &[String]) -> Result<()> {
    for name in declared {
        let l = loaded
            .names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::data(format!("binary covariate '{name}' not found")))?;
        let row = loaded.raw.row(l);
        if row.iter().all(|&x| x == 0.0 || x == 1.0) {
            continue;
        }
        let mut levels: Vec<f64> = row.to_vec();
        levels.sort_by(|a, b| a.partial_cmp(b).unwrap());
        levels.dedup();
        if levels.len() == 2 {
            return Err(Error::data(format!(
                "covariate '{name}' is declared binary but takes values {{{}, {}}}; recode it to 0/1",
                levels[0], levels[1]
            )));
        }
        return Err(Error::data(format!(
            "covariate '{name}' is declared binary but takes {} distinct values",
            levels.len()
        )));
    }
    Ok(())
}

/// A covariate transformation declared by column names, as in run
/// configuration files.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NamedTransformTerm {
    Interaction {
        a: String,
        b: String,
    },
    Spline {
        covariate: String,
        degree: usize,
        internal_knots: Vec<f64>,
        boundary: (f64, f64),
    },
}

/// Resolves named transformation terms against the loaded column names.
pub fn resolve_transform(names: &[String], terms: &[NamedTransformTerm]) -> Result<TransformSpec> {
    let find = |name: &str| -> Result<usize> {
        names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::data(format!("covariate '{name}' not found")))
    };
    let mut resolved = Vec::with_capacity(terms.len());
    for term in terms {
        resolved.push(match term {
            NamedTransformTerm::Interaction { a, b } => TransformTerm::Interaction {
                a: find(a)?,
                b: find(b)?,
            },
            NamedTransformTerm::Spline {
                covariate,
                degree,
                internal_knots,
                boundary,
            } => TransformTerm::Spline {
                covariate: find(covariate)?,
                basis: BSplineBasis::new(*degree, internal_knots, *boundary)?,
            },
        });
    }
    Ok(TransformSpec { terms: resolved })
}

/// Writes covariates as CSV in the given sample order, appending the
/// grouping labels as a final column when present.
pub fn save_covariates(
    path: &Path,
    sample_ids: &[String],
    names: &[String],
    raw: &Array2<f64>,
    grouping_column: Option<(&str, &[String])>,
) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(out, "sample_id")?;
    for n in names {
        write!(out, ",{n}")?;
    }
    if let Some((name, _)) = grouping_column {
        write!(out, ",{name}")?;
    }
    writeln!(out)?;
    for (jj, id) in sample_ids.iter().enumerate() {
        write!(out, "{id}")?;
        for l in 0..names.len() {
            write!(out, ",{}", raw[[l, jj]])?;
        }
        if let Some((_, labels)) = grouping_column {
            write!(out, ",{}", labels[jj])?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

/// Builds the covariate matrix from loaded covariates and a named
/// transformation.
pub fn build_covariate_matrix(
    loaded: &LoadedCovariates,
    terms: &[NamedTransformTerm],
) -> Result<CovariateMatrix> {
    let transform = resolve_transform(&loaded.names, terms)?;
    CovariateMatrix::new(loaded.raw.clone(), transform, loaded.names.clone())
}
