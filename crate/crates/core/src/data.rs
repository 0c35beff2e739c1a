//! Interval-censored observations, CSV ingestion and covariate scaling.
//!
//! Every subject is recorded as `(L, R, delta, x, z)`: the event happened in
//! `(L, R]` when `delta = 1`, and the subject was still event-free at the last
//! inspection `L` when `delta = 0` (then `R = +inf`). `x` drives the latency
//! model and `z` the incidence model.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CureError, Result};

pub const TRUE_STATUS_COLUMN: &str = "true_status";
pub const TRUE_PI_COLUMN: &str = "true_pi";

/// One subject's interval-censored record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalObservation {
    /// Last inspection time before the event.
    pub left: f64,
    /// First inspection time after the event, `f64::INFINITY` if never observed.
    pub right: f64,
    pub event: bool,
    /// Latency covariates.
    pub x: Vec<f64>,
    /// Incidence covariates.
    pub z: Vec<f64>,
    /// Simulation-only cure indicator (`true` = susceptible).
    pub true_status: Option<bool>,
    /// Simulation-only uncured probability.
    pub true_pi: Option<f64>,
}

impl IntervalObservation {
    pub fn new(left: f64, right: f64, x: Vec<f64>, z: Vec<f64>) -> Result<Self> {
        let obs = IntervalObservation {
            left,
            right,
            event: right.is_finite(),
            x,
            z,
            true_status: None,
            true_pi: None,
        };
        obs.validate().map_err(|reason| CureError::Validation { row: 0, reason })?;
        Ok(obs)
    }

    pub fn delta(&self) -> u8 {
        u8::from(self.event)
    }

    /// Checks the record invariants, returning a reason on failure.
    fn validate(&self) -> std::result::Result<(), String> {
        if !self.left.is_finite() || self.left < 0.0 {
            return Err(format!("L = {} must be finite and >= 0", self.left));
        }
        if self.right.is_nan() || self.left >= self.right {
            return Err(format!("L = {} must be < R = {}", self.left, self.right));
        }
        if self.event != self.right.is_finite() {
            return Err(format!(
                "delta = {} inconsistent with R = {}",
                self.delta(),
                self.right
            ));
        }
        if self.x.iter().chain(&self.z).any(|v| !v.is_finite()) {
            return Err("covariates must be finite".into());
        }
        if let Some(p) = self.true_pi {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("true_pi = {p} outside [0, 1]"));
            }
        }
        Ok(())
    }
}

/// Per-column affine transform applied to `z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingParams {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl ScalingParams {
    pub fn apply(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.means.iter().zip(&self.sds))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn invert(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.means.iter().zip(&self.sds))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub observations: Vec<IntervalObservation>,
    pub x_names: Vec<String>,
    pub z_names: Vec<String>,
    pub scaling: Option<ScalingParams>,
}

impl Dataset {
    pub fn new(
        observations: Vec<IntervalObservation>,
        x_names: Vec<String>,
        z_names: Vec<String>,
    ) -> Result<Self> {
        if observations.is_empty() {
            return Err(CureError::Config("dataset must contain at least one row".into()));
        }
        for (row, obs) in observations.iter().enumerate() {
            obs.validate()
                .map_err(|reason| CureError::Validation { row, reason })?;
            if obs.x.len() != x_names.len() {
                return Err(CureError::Validation {
                    row,
                    reason: format!("expected {} x covariates, got {}", x_names.len(), obs.x.len()),
                });
            }
            if obs.z.len() != z_names.len() {
                return Err(CureError::Validation {
                    row,
                    reason: format!("expected {} z covariates, got {}", z_names.len(), obs.z.len()),
                });
            }
        }
        Ok(Dataset {
            observations,
            x_names,
            z_names,
            scaling: None,
        })
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn p(&self) -> usize {
        self.x_names.len()
    }

    pub fn q(&self) -> usize {
        self.z_names.len()
    }

    /// Indices with `delta = 0` (right-censored).
    pub fn censored_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.observations[i].event).collect()
    }

    /// Indices with `delta = 1` (event inside a finite interval).
    pub fn event_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.observations[i].event).collect()
    }

    pub fn events(&self) -> Vec<bool> {
        self.observations.iter().map(|o| o.event).collect()
    }

    pub fn z_rows(&self) -> Vec<Vec<f64>> {
        self.observations.iter().map(|o| o.z.clone()).collect()
    }

    pub fn has_truth(&self) -> bool {
        self.observations
            .iter()
            .all(|o| o.true_status.is_some() && o.true_pi.is_some())
    }

    /// New dataset made of the given rows (with repetition allowed).
    pub fn resample(&self, indices: &[usize]) -> Dataset {
        Dataset {
            observations: indices.iter().map(|&i| self.observations[i].clone()).collect(),
            x_names: self.x_names.clone(),
            z_names: self.z_names.clone(),
            scaling: self.scaling.clone(),
        }
    }
}

/// Centres and scales every `z` column to sample mean 0 and sample sd 1.
///
/// `x` is left on its original scale. If `d` already carries scaling
/// parameters they are composed so the stored transform always maps the
/// original covariates to the standardized ones.
pub fn standardize_covariates(d: &Dataset) -> Result<Dataset> {
    let n = d.len();
    if n < 2 {
        return Err(CureError::Config("standardization needs at least two rows".into()));
    }
    let q = d.q();
    let mut means = vec![0.0; q];
    let mut sds = vec![0.0; q];
    for k in 0..q {
        let mean = d.observations.iter().map(|o| o.z[k]).sum::<f64>() / n as f64;
        let ss = d
            .observations
            .iter()
            .map(|o| (o.z[k] - mean).powi(2))
            .sum::<f64>();
        let sd = (ss / (n - 1) as f64).sqrt();
        if !(sd > 1e-12 * mean.abs().max(1.0)) {
            return Err(CureError::DegenerateColumn {
                column: d.z_names[k].clone(),
            });
        }
        means[k] = mean;
        sds[k] = sd;
    }
    let step = ScalingParams { means, sds };
    let mut out = d.clone();
    for obs in &mut out.observations {
        obs.z = step.apply(&obs.z);
    }
    out.scaling = Some(match &d.scaling {
        None => step,
        // original -> previous -> new: mean' = m0 + s0*m1, sd' = s0*s1
        Some(prev) => ScalingParams {
            means: prev
                .means
                .iter()
                .zip(&prev.sds)
                .zip(&step.means)
                .map(|((m0, s0), m1)| m0 + s0 * m1)
                .collect(),
            sds: prev.sds.iter().zip(&step.sds).map(|(s0, s1)| s0 * s1).collect(),
        },
    });
    Ok(out)
}

/// Representative time per subject: interval midpoint, or `L` when right-censored.
pub fn midpoint_times(d: &Dataset) -> Vec<f64> {
    d.observations.iter().map(midpoint).collect()
}

pub(crate) fn midpoint(o: &IntervalObservation) -> f64 {
    if o.right.is_finite() {
        0.5 * (o.left + o.right)
    } else {
        o.left
    }
}

/// Column mapping used when reading a CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub left: String,
    pub right: String,
    pub delta: String,
    /// Latency covariates; empty means "every remaining column".
    pub x: Vec<String>,
    /// Incidence covariates; empty means "every remaining column".
    pub z: Vec<String>,
}

impl Default for Schema {
    fn default() -> Self {
        Schema {
            left: "L".into(),
            right: "R".into(),
            delta: "delta".into(),
            x: Vec::new(),
            z: Vec::new(),
        }
    }
}

impl Schema {
    /// Parses `L=col,R=col,delta=col,x=a+b,z=c+d`; omitted keys keep defaults.
    pub fn parse(spec: &str) -> Result<Schema> {
        let mut schema = Schema::default();
        for part in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| CureError::Config(format!("schema entry `{part}` is not key=value")))?;
            let list = || {
                value
                    .split('+')
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .collect::<Vec<_>>()
            };
            match key.trim() {
                "L" => schema.left = value.trim().into(),
                "R" => schema.right = value.trim().into(),
                "delta" => schema.delta = value.trim().into(),
                "x" => schema.x = list(),
                "z" => schema.z = list(),
                other => return Err(CureError::Config(format!("unknown schema key `{other}`"))),
            }
        }
        Ok(schema)
    }
}

fn parse_number(raw: &str, row: usize, column: &str) -> Result<f64> {
    let raw = raw.trim();
    if raw.eq_ignore_ascii_case("inf") || raw.eq_ignore_ascii_case("+inf") {
        return Ok(f64::INFINITY);
    }
    raw.parse::<f64>().map_err(|_| CureError::Validation {
        row,
        reason: format!("column `{column}`: cannot parse `{raw}` as a number"),
    })
}

/// Reads a dataset from CSV. Lines starting with `#` are comments.
pub fn read_dataset<R: Read>(reader: R, schema: &Schema) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CureError::Schema { column: name.to_string() })
    };
    let li = find(&schema.left)?;
    let ri = find(&schema.right)?;
    let di = find(&schema.delta)?;
    let status_i = headers.iter().position(|h| h == TRUE_STATUS_COLUMN);
    let pi_i = headers.iter().position(|h| h == TRUE_PI_COLUMN);

    let reserved = [
        schema.left.as_str(),
        schema.right.as_str(),
        schema.delta.as_str(),
        TRUE_STATUS_COLUMN,
        TRUE_PI_COLUMN,
    ];
    let remaining: Vec<String> = headers
        .iter()
        .filter(|h| !reserved.contains(&h.as_str()))
        .cloned()
        .collect();
    let x_names = if schema.x.is_empty() { remaining.clone() } else { schema.x.clone() };
    let z_names = if schema.z.is_empty() { remaining } else { schema.z.clone() };
    let x_idx = x_names.iter().map(|n| find(n)).collect::<Result<Vec<_>>>()?;
    let z_idx = z_names.iter().map(|n| find(n)).collect::<Result<Vec<_>>>()?;

    let mut observations = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let field = |i: usize| record.get(i).unwrap_or("");
        let left = parse_number(field(li), row, &schema.left)?;
        let right = parse_number(field(ri), row, &schema.right)?;
        let delta = parse_number(field(di), row, &schema.delta)?;
        if delta != 0.0 && delta != 1.0 {
            return Err(CureError::Validation {
                row,
                reason: format!("delta must be 0 or 1, got {delta}"),
            });
        }
        let x = x_idx
            .iter()
            .zip(&x_names)
            .map(|(&i, name)| parse_number(field(i), row, name))
            .collect::<Result<Vec<_>>>()?;
        let z = z_idx
            .iter()
            .zip(&z_names)
            .map(|(&i, name)| parse_number(field(i), row, name))
            .collect::<Result<Vec<_>>>()?;
        let true_status = match status_i.map(field) {
            Some(s) if !s.is_empty() => Some(parse_number(s, row, TRUE_STATUS_COLUMN)? != 0.0),
            _ => None,
        };
        let true_pi = match pi_i.map(field) {
            Some(s) if !s.is_empty() => Some(parse_number(s, row, TRUE_PI_COLUMN)?),
            _ => None,
        };
        let obs = IntervalObservation {
            left,
            right,
            event: delta == 1.0,
            x,
            z,
            true_status,
            true_pi,
        };
        obs.validate().map_err(|reason| CureError::Validation { row, reason })?;
        observations.push(obs);
    }
    Dataset::new(observations, x_names, z_names)
}

pub fn load_dataset(path: &Path, schema: &Schema) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    read_dataset(std::io::BufReader::new(file), schema)
}

/// Writes `d` as CSV: `L,R,delta`, the `x` columns, the `z` columns not
/// already written under the same name, then truth columns when present.
/// `comment` lines are emitted first, each prefixed with `# `.
pub fn write_dataset<W: Write>(d: &Dataset, writer: W, comment: Option<&str>) -> Result<()> {
    let mut writer = writer;
    if let Some(text) = comment {
        for line in text.lines() {
            writeln!(writer, "# {line}")?;
        }
    }
    let z_extra: Vec<usize> = (0..d.q())
        .filter(|&k| !d.x_names.contains(&d.z_names[k]))
        .collect();
    let truth = d.has_truth();
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = vec!["L".into(), "R".into(), "delta".into()];
    header.extend(d.x_names.iter().cloned());
    header.extend(z_extra.iter().map(|&k| d.z_names[k].clone()));
    if truth {
        header.push(TRUE_STATUS_COLUMN.into());
        header.push(TRUE_PI_COLUMN.into());
    }
    wtr.write_record(&header)?;
    for o in &d.observations {
        let mut rec: Vec<String> = vec![
            o.left.to_string(),
            o.right.to_string(),
            o.delta().to_string(),
        ];
        rec.extend(o.x.iter().map(f64::to_string));
        rec.extend(z_extra.iter().map(|&k| o.z[k].to_string()));
        if truth {
            rec.push(u8::from(o.true_status.unwrap_or(false)).to_string());
            rec.push(o.true_pi.unwrap_or(f64::NAN).to_string());
        }
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}
