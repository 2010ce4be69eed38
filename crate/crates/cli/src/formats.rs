//! On-disk formats.
//!
//! * Dataset CSV: first line `t,<t_1>,...,<t_m>`; then one line per series,
//!   `series_<i>,<x_i1>,...,<x_im>` with `i` starting at 1.
//! * Labels: one 1-based cluster label per line.
//! * Model JSON: structure, every parameter as a decimal string with 17
//!   significant digits, the time-normalization map and a format version.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use hpr_core::gating::GatingParameters;
use hpr_core::{HprMixtureModel, ModelStructure, RegMixtureModel, TimeGrid, TimeScale, TimeSeriesDataset};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Full-precision decimal representation (17 significant digits).
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_f64(s: &str) -> Result<f64, String> {
    s.trim().parse::<f64>().map_err(|e| format!("bad number {s:?}: {e}"))
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn write_text(path: &Path, content: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
    }
    fs::write(path, content).map_err(|e| CliError::io(path, e))
}

pub fn dataset_to_csv(data: &TimeSeriesDataset) -> String {
    let mut out = String::from("t");
    for t in data.grid().times() {
        write!(out, ",{}", fmt_f64(*t)).unwrap();
    }
    out.push('\n');
    for (i, s) in data.series().iter().enumerate() {
        write!(out, "series_{}", i + 1).unwrap();
        for x in s {
            write!(out, ",{}", fmt_f64(*x)).unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn dataset_from_csv(text: &str, path: &Path) -> Result<TimeSeriesDataset, CliError> {
    let perr = |line: usize, message: String| CliError::Parse { path: path.to_path_buf(), line, message };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| perr(1, "empty file".into()))?;
    let mut fields = header.split(',');
    if fields.next().map(str::trim) != Some("t") {
        return Err(perr(1, "first line must start with the token `t`".into()));
    }
    let times = fields.map(parse_f64).collect::<Result<Vec<_>, _>>().map_err(|m| perr(1, m))?;
    let mut series = Vec::new();
    for (idx, line) in lines {
        let mut fields = line.split(',');
        fields.next();
        let values = fields.map(parse_f64).collect::<Result<Vec<_>, _>>().map_err(|m| perr(idx + 1, m))?;
        series.push(values);
    }
    Ok(TimeSeriesDataset::new(TimeGrid::new(times)?, series)?)
}

/// Writes 0-based labels as 1-based lines.
pub fn labels_to_text(labels: &[usize]) -> String {
    labels.iter().map(|l| format!("{}\n", l + 1)).collect()
}

/// Reads 1-based labels into 0-based values.
pub fn labels_from_text(text: &str, path: &Path) -> Result<Vec<usize>, CliError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| match l.trim().parse::<usize>() {
            Ok(v) if v >= 1 => Ok(v - 1),
            _ => Err(CliError::Parse { path: path.to_path_buf(), line: i + 1, message: format!("bad label {l:?}") }),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleRecord {
    pub offset: String,
    pub scale: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelRecord {
    Hpr {
        structure: ModelStructure,
        time_scale: ScaleRecord,
        proportions: Vec<String>,
        /// `[cluster][regime] = [intercept, slope]`
        gating: Vec<Vec<[String; 2]>>,
        /// `[cluster][regime][power]`
        coefficients: Vec<Vec<Vec<String>>>,
        variances: Vec<String>,
    },
    Regmix {
        clusters: usize,
        degree: usize,
        time_scale: ScaleRecord,
        proportions: Vec<String>,
        coefficients: Vec<Vec<String>>,
        variances: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    #[serde(flatten)]
    pub model: ModelRecord,
}

/// A fitted model of either family.
#[derive(Debug, Clone, PartialEq)]
pub enum FittedModel {
    Hpr(HprMixtureModel),
    Regmix(RegMixtureModel),
}

fn strings(v: &[f64]) -> Vec<String> {
    v.iter().map(|x| fmt_f64(*x)).collect()
}

fn numbers(v: &[String]) -> Result<Vec<f64>, String> {
    v.iter().map(|s| parse_f64(s)).collect()
}

fn scale_record(s: TimeScale) -> ScaleRecord {
    ScaleRecord { offset: fmt_f64(s.offset), scale: fmt_f64(s.scale) }
}

impl FittedModel {
    pub fn to_file(&self) -> ModelFile {
        let model = match self {
            FittedModel::Hpr(m) => ModelRecord::Hpr {
                structure: *m.structure(),
                time_scale: scale_record(m.time_scale()),
                proportions: strings(m.proportions()),
                gating: m
                    .gating_sets()
                    .iter()
                    .map(|g| g.pairs().iter().map(|p| [fmt_f64(p[0]), fmt_f64(p[1])]).collect())
                    .collect(),
                coefficients: m.all_coefficients().iter().map(|row| row.iter().map(|b| strings(b)).collect()).collect(),
                variances: strings(m.variances()),
            },
            FittedModel::Regmix(m) => ModelRecord::Regmix {
                clusters: m.clusters(),
                degree: m.degree(),
                time_scale: scale_record(m.time_scale()),
                proportions: strings(m.proportions()),
                coefficients: m.all_coefficients().iter().map(|b| strings(b)).collect(),
                variances: strings(m.variances()),
            },
        };
        ModelFile { format_version: MODEL_FORMAT_VERSION, model }
    }

    pub fn from_file(file: &ModelFile) -> Result<Self, String> {
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(format!("unsupported model format version {}", file.format_version));
        }
        let scale = |r: &ScaleRecord| -> Result<TimeScale, String> {
            Ok(TimeScale { offset: parse_f64(&r.offset)?, scale: parse_f64(&r.scale)? })
        };
        match &file.model {
            ModelRecord::Hpr { structure, time_scale, proportions, gating, coefficients, variances } => {
                let gates = gating
                    .iter()
                    .map(|pairs| {
                        let pairs = pairs
                            .iter()
                            .map(|p| Ok([parse_f64(&p[0])?, parse_f64(&p[1])?]))
                            .collect::<Result<Vec<_>, String>>()?;
                        GatingParameters::from_pairs(pairs).map_err(|e| e.to_string())
                    })
                    .collect::<Result<Vec<_>, String>>()?;
                let coefficients = coefficients
                    .iter()
                    .map(|row| row.iter().map(|b| numbers(b)).collect::<Result<Vec<_>, _>>())
                    .collect::<Result<Vec<_>, _>>()?;
                HprMixtureModel::new(*structure, scale(time_scale)?, numbers(proportions)?, gates, coefficients, numbers(variances)?)
                    .map(FittedModel::Hpr)
                    .map_err(|e| e.to_string())
            }
            ModelRecord::Regmix { clusters, degree, time_scale, proportions, coefficients, variances } => {
                let coefficients = coefficients.iter().map(|b| numbers(b)).collect::<Result<Vec<_>, _>>()?;
                if coefficients.len() != *clusters {
                    return Err(format!("expected {clusters} coefficient vectors"));
                }
                RegMixtureModel::new(*degree, scale(time_scale)?, numbers(proportions)?, coefficients, numbers(variances)?)
                    .map(FittedModel::Regmix)
                    .map_err(|e| e.to_string())
            }
        }
    }

    pub fn clusters(&self) -> usize {
        match self {
            FittedModel::Hpr(m) => m.structure().clusters,
            FittedModel::Regmix(m) => m.clusters(),
        }
    }
}

pub fn model_to_json(model: &FittedModel) -> String {
    let mut s = serde_json::to_string_pretty(&model.to_file()).expect("model file serializes");
    s.push('\n');
    s
}

pub fn model_from_json(text: &str, path: &Path) -> Result<FittedModel, CliError> {
    let json = |message: String| CliError::Json { path: path.to_path_buf(), message };
    let file: ModelFile = serde_json::from_str(text).map_err(|e| json(e.to_string()))?;
    FittedModel::from_file(&file).map_err(json)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_csv_layout() {
        let grid = TimeGrid::new(vec![1.0, 2.0]).unwrap();
        let data = TimeSeriesDataset::new(grid, vec![vec![0.5, -1.25]]).unwrap();
        let csv = dataset_to_csv(&data);
        let mut lines = csv.lines();
        assert!(lines.next().unwrap().starts_with("t,1.0000000000000000e0,"));
        assert!(lines.next().unwrap().starts_with("series_1,5.0000000000000000e-1,"));
        assert_eq!(dataset_from_csv(&csv, Path::new("x.csv")).unwrap(), data);
    }

    #[test]
    fn dataset_csv_errors() {
        let p = Path::new("x.csv");
        assert!(matches!(dataset_from_csv("x,1,2\n", p), Err(CliError::Parse { line: 1, .. })));
        assert!(matches!(dataset_from_csv("t,1,2\ns,1,zz\n", p), Err(CliError::Parse { line: 2, .. })));
        assert!(matches!(dataset_from_csv("t,1,1\ns,1,2\n", p), Err(CliError::Data(_))));
        assert!(matches!(dataset_from_csv("t,1,2\ns,1,2,3\n", p), Err(CliError::Data(_))));
    }

    #[test]
    fn labels_are_one_based_on_disk() {
        let p = Path::new("l.txt");
        assert_eq!(labels_to_text(&[0, 1, 1]), "1\n2\n2\n");
        assert_eq!(labels_from_text("1\n2\n\n2\n", p).unwrap(), vec![0, 1, 1]);
        assert!(labels_from_text("0\n", p).is_err());
    }

    #[test]
    fn seventeen_significant_digits_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE, f64::MAX] {
            assert_eq!(parse_f64(&fmt_f64(x)).unwrap(), x);
        }
    }
}
