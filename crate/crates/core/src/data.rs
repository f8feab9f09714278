//! Dataset model for one subject's daily log, plus CSV/JSONL ingestion.
//!
//! Observations store vitals and factors as vectors aligned with the
//! [`Schema`]; a missing cell is `None`, never a sentinel value.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Lower bound of the vital rating scale.
pub const VITAL_MIN: f64 = 1.0;
/// Upper bound of the vital rating scale.
pub const VITAL_MAX: f64 = 10.0;

const JSONL_SCHEMA_VERSION: u32 = 1;

macro_rules! name_id {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(name: impl Into<String>) -> Result<Self> {
                let name = name.into();
                if name.trim().is_empty() {
                    return Err(Error::Validation(format!(
                        "{} must be a non-empty name",
                        stringify!($name)
                    )));
                }
                Ok(Self(name))
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl FromStr for $name {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                Self::new(s)
            }
        }
    };
}

name_id!(
    /// Name of a vital (outcome) column, e.g. `mood`.
    VitalId
);
name_id!(
    /// Name of a binary factor column, e.g. `coffee`.
    FactorId
);

/// A factor → outcome association under analysis.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairKey {
    pub factor: FactorId,
    pub outcome: VitalId,
}

impl PairKey {
    pub fn new(factor: &str, outcome: &str) -> Result<Self> {
        Ok(Self {
            factor: FactorId::new(factor)?,
            outcome: VitalId::new(outcome)?,
        })
    }

    /// File-name friendly form, `factor__outcome`.
    pub fn file_stem(&self) -> String {
        format!("{}__{}", self.factor, self.outcome)
    }
}

impl fmt::Display for PairKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.factor, self.outcome)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub vitals: Vec<VitalId>,
    pub factors: Vec<FactorId>,
}

impl Schema {
    pub fn new(vitals: Vec<VitalId>, factors: Vec<FactorId>) -> Result<Self> {
        let mut seen = HashSet::new();
        seen.insert("day");
        for name in vitals
            .iter()
            .map(VitalId::as_str)
            .chain(factors.iter().map(FactorId::as_str))
        {
            if !seen.insert(name) {
                return Err(Error::Validation(format!(
                    "duplicate or reserved column name '{name}'"
                )));
            }
        }
        Ok(Self { vitals, factors })
    }

    pub fn vital_index(&self, id: &VitalId) -> Option<usize> {
        self.vitals.iter().position(|v| v == id)
    }

    pub fn factor_index(&self, id: &FactorId) -> Option<usize> {
        self.factors.iter().position(|f| f == id)
    }

    fn pair_indices(&self, pair: &PairKey) -> Result<(usize, usize)> {
        match (
            self.factor_index(&pair.factor),
            self.vital_index(&pair.outcome),
        ) {
            (Some(f), Some(v)) => Ok((f, v)),
            _ => Err(Error::UnknownPair {
                factor: pair.factor.to_string(),
                outcome: pair.outcome.to_string(),
            }),
        }
    }

    pub fn contains_pair(&self, pair: &PairKey) -> bool {
        self.pair_indices(pair).is_ok()
    }
}

/// One day's record. `vitals[i]` belongs to `schema.vitals[i]`, likewise factors.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub day: u32,
    pub vitals: Vec<Option<f64>>,
    pub factors: Vec<Option<bool>>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub seed: Option<u64>,
    pub config_fingerprint: Option<String>,
}

/// Outcome values split by factor state, restricted to pair-complete days.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroupSamples {
    pub present: Vec<f64>,
    pub absent: Vec<f64>,
}

impl GroupSamples {
    pub fn len(&self) -> usize {
        self.present.len() + self.absent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Immutable, validated daily log for a single subject.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: Schema,
    observations: Vec<Observation>,
    meta: DatasetMeta,
}

impl Dataset {
    pub fn new(schema: Schema, observations: Vec<Observation>, meta: DatasetMeta) -> Result<Self> {
        let mut last_day = 0u32;
        for obs in &observations {
            if obs.day == 0 {
                return Err(Error::Validation("day indices start at 1".into()));
            }
            if obs.day <= last_day {
                return Err(Error::Validation(format!(
                    "day {} is not strictly after day {last_day}",
                    obs.day
                )));
            }
            last_day = obs.day;
            if obs.vitals.len() != schema.vitals.len() {
                return Err(Error::DimensionMismatch {
                    expected: schema.vitals.len(),
                    actual: obs.vitals.len(),
                });
            }
            if obs.factors.len() != schema.factors.len() {
                return Err(Error::DimensionMismatch {
                    expected: schema.factors.len(),
                    actual: obs.factors.len(),
                });
            }
            for (value, id) in obs.vitals.iter().zip(&schema.vitals) {
                if let Some(v) = *value {
                    if !(VITAL_MIN..=VITAL_MAX).contains(&v) {
                        return Err(Error::Validation(format!(
                            "day {}: {id} = {v} outside [{VITAL_MIN}, {VITAL_MAX}]",
                            obs.day
                        )));
                    }
                }
            }
        }
        Ok(Self {
            schema,
            observations,
            meta,
        })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn meta(&self) -> &DatasetMeta {
        &self.meta
    }

    /// Total span in days, i.e. the last day index (0 for an empty dataset).
    pub fn span(&self) -> u32 {
        self.observations.last().map_or(0, |o| o.day)
    }

    fn prefix(&self, up_to_day: u32) -> &[Observation] {
        let end = self.observations.partition_point(|o| o.day <= up_to_day);
        &self.observations[..end]
    }

    /// Outcome values for days `<= up_to_day` where both the factor and the
    /// outcome were recorded, split by the factor's value.
    pub fn pair_samples(&self, pair: &PairKey, up_to_day: u32) -> Result<GroupSamples> {
        let mut groups = GroupSamples::default();
        for (present, y) in self.pair_rows(pair, up_to_day)? {
            if present {
                groups.present.push(y);
            } else {
                groups.absent.push(y);
            }
        }
        Ok(groups)
    }

    /// Pair-complete `(factor_present, outcome)` rows in day order.
    pub fn pair_rows(&self, pair: &PairKey, up_to_day: u32) -> Result<Vec<(bool, f64)>> {
        let (f, v) = self.schema.pair_indices(pair)?;
        Ok(self
            .prefix(up_to_day)
            .iter()
            .filter_map(|o| Some((o.factors[f]?, o.vitals[v]?)))
            .collect())
    }

    /// Rows for the multivariate design: outcome plus every factor indicator,
    /// restricted to days where all of them are recorded.
    pub fn complete_rows(
        &self,
        outcome: &VitalId,
        up_to_day: u32,
    ) -> Result<Vec<(Vec<bool>, f64)>> {
        let v = self
            .schema
            .vital_index(outcome)
            .ok_or_else(|| Error::Validation(format!("unknown outcome '{outcome}'")))?;
        Ok(self
            .prefix(up_to_day)
            .iter()
            .filter_map(|o| {
                let y = o.vitals[v]?;
                let xs: Option<Vec<bool>> = o.factors.iter().copied().collect();
                Some((xs?, y))
            })
            .collect())
    }

    /// Empirical `P(other = 1 | factor = 1)` over days `<= up_to_day` where
    /// both factors are recorded. `None` when the factor was never present.
    pub fn cooccurrence(
        &self,
        factor: &FactorId,
        other: &FactorId,
        up_to_day: u32,
    ) -> Result<Option<f64>> {
        let idx = |id: &FactorId| {
            self.schema
                .factor_index(id)
                .ok_or_else(|| Error::Validation(format!("unknown factor '{id}'")))
        };
        let (f, g) = (idx(factor)?, idx(other)?);
        let (mut both, mut given) = (0usize, 0usize);
        for o in self.prefix(up_to_day) {
            if let (Some(true), Some(other_value)) = (o.factors[f], o.factors[g]) {
                given += 1;
                if other_value {
                    both += 1;
                }
            }
        }
        Ok((given > 0).then(|| both as f64 / given as f64))
    }
}

/// On-disk dataset encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    Csv,
    Jsonl,
}

impl DataFormat {
    pub fn extension(self) -> &'static str {
        match self {
            DataFormat::Csv => "csv",
            DataFormat::Jsonl => "jsonl",
        }
    }
}

impl FromStr for DataFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(DataFormat::Csv),
            "jsonl" => Ok(DataFormat::Jsonl),
            other => Err(Error::InvalidConfig(format!(
                "unknown data format '{other}'"
            ))),
        }
    }
}

pub fn load_dataset(path: impl AsRef<Path>, format: DataFormat) -> Result<Dataset> {
    let file = File::open(path)?;
    match format {
        DataFormat::Csv => read_csv(file, None),
        DataFormat::Jsonl => read_jsonl(BufReader::new(file)),
    }
}

pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>, format: DataFormat) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    match format {
        DataFormat::Csv => write_csv(dataset, &mut out)?,
        DataFormat::Jsonl => write_jsonl(dataset, &mut out)?,
    }
    out.flush()?;
    Ok(())
}

/// Vitals are written with Rust's shortest round-trip `Debug` form, which
/// always carries a decimal point or exponent, so a vital column can never be
/// mistaken for a 0/1 factor column and values reload bit-for-bit.
fn format_vital(v: f64) -> String {
    format!("{v:?}")
}

pub fn write_csv<W: Write>(dataset: &Dataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let schema = dataset.schema();
    let mut header = vec!["day".to_string()];
    header.extend(schema.vitals.iter().map(|v| v.to_string()));
    header.extend(schema.factors.iter().map(|f| f.to_string()));
    w.write_record(&header)?;
    for obs in dataset.observations() {
        let mut row = vec![obs.day.to_string()];
        row.extend(
            obs.vitals
                .iter()
                .map(|v| v.map(format_vital).unwrap_or_default()),
        );
        row.extend(obs.factors.iter().map(|f| {
            f.map(|b| if b { "1" } else { "0" }.to_string())
                .unwrap_or_default()
        }));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the CSV layout `day,<vitals...>,<factors...>`.
///
/// Without a schema, a column is taken to be a factor when every non-empty
/// cell is exactly `0` or `1`; everything else (including all-empty columns)
/// is a vital. With a schema, the header must name exactly its columns.
pub fn read_csv<R: Read>(input: R, schema: Option<&Schema>) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(input);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header.first().map(String::as_str) != Some("day") {
        return Err(Error::Parse {
            line: 1,
            message: "first column must be 'day'".into(),
        });
    }
    let columns = &header[1..];
    let mut rows: Vec<(usize, Vec<String>)> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != header.len() {
            return Err(Error::Parse {
                line: i + 2,
                message: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        rows.push((i + 2, record.iter().map(|s| s.trim().to_string()).collect()));
    }

    let is_factor: Vec<bool> = match schema {
        Some(schema) => {
            let mut flags = Vec::with_capacity(columns.len());
            for name in columns {
                if schema.vitals.iter().any(|v| v.as_str() == name) {
                    flags.push(false);
                } else if schema.factors.iter().any(|f| f.as_str() == name) {
                    flags.push(true);
                } else {
                    return Err(Error::Validation(format!("unknown column '{name}'")));
                }
            }
            if columns.len() != schema.vitals.len() + schema.factors.len() {
                return Err(Error::Validation(
                    "header does not cover every schema column".into(),
                ));
            }
            flags
        }
        None => (0..columns.len())
            .map(|c| {
                let mut any = false;
                let all_binary = rows.iter().all(|(_, r)| {
                    let cell = r[c + 1].as_str();
                    any |= !cell.is_empty();
                    cell.is_empty() || cell == "0" || cell == "1"
                });
                any && all_binary
            })
            .collect(),
    };

    let vitals: Vec<VitalId> = match schema {
        Some(s) => s.vitals.clone(),
        None => columns
            .iter()
            .zip(&is_factor)
            .filter(|(_, f)| !**f)
            .map(|(n, _)| VitalId::new(n.clone()))
            .collect::<Result<_>>()?,
    };
    let factors: Vec<FactorId> = match schema {
        Some(s) => s.factors.clone(),
        None => columns
            .iter()
            .zip(&is_factor)
            .filter(|(_, f)| **f)
            .map(|(n, _)| FactorId::new(n.clone()))
            .collect::<Result<_>>()?,
    };
    let schema = Schema::new(vitals, factors)?;
    // position of each CSV column inside the aligned vectors
    let slots: Vec<usize> = columns
        .iter()
        .zip(&is_factor)
        .map(|(name, &factor)| {
            if factor {
                schema
                    .factors
                    .iter()
                    .position(|f| f.as_str() == name)
                    .unwrap()
            } else {
                schema
                    .vitals
                    .iter()
                    .position(|v| v.as_str() == name)
                    .unwrap()
            }
        })
        .collect();

    let mut observations = Vec::with_capacity(rows.len());
    for (line, row) in rows {
        let day: u32 = row[0].parse().map_err(|_| Error::Parse {
            line,
            message: format!("invalid day '{}'", row[0]),
        })?;
        let mut obs = Observation {
            day,
            vitals: vec![None; schema.vitals.len()],
            factors: vec![None; schema.factors.len()],
        };
        for (c, cell) in row[1..].iter().enumerate() {
            if cell.is_empty() {
                continue;
            }
            if is_factor[c] {
                obs.factors[slots[c]] = Some(match cell.as_str() {
                    "0" => false,
                    "1" => true,
                    other => {
                        return Err(Error::Parse {
                            line,
                            message: format!(
                                "factor '{}' must be 0/1, found '{other}'",
                                columns[c]
                            ),
                        })
                    }
                });
            } else {
                let v: f64 = cell.parse().map_err(|_| Error::Parse {
                    line,
                    message: format!("vital '{}' is not a number: '{cell}'", columns[c]),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        line,
                        message: format!("vital '{}' is not finite", columns[c]),
                    });
                }
                obs.vitals[slots[c]] = Some(v);
            }
        }
        observations.push(obs);
    }
    sort_and_check_days(&mut observations)?;
    Dataset::new(schema, observations, DatasetMeta::default())
}

fn sort_and_check_days(observations: &mut [Observation]) -> Result<()> {
    observations.sort_by_key(|o| o.day);
    for w in observations.windows(2) {
        if w[0].day == w[1].day {
            return Err(Error::Validation(format!("duplicate day {}", w[0].day)));
        }
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonlHeader {
    schema_version: u32,
    vitals: Vec<VitalId>,
    factors: Vec<FactorId>,
    seed: Option<u64>,
    config_fingerprint: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonlObservation {
    day: u32,
    vitals: BTreeMap<String, Option<f64>>,
    factors: BTreeMap<String, Option<bool>>,
}

pub fn write_jsonl<W: Write>(dataset: &Dataset, mut out: W) -> Result<()> {
    let schema = dataset.schema();
    let header = JsonlHeader {
        schema_version: JSONL_SCHEMA_VERSION,
        vitals: schema.vitals.clone(),
        factors: schema.factors.clone(),
        seed: dataset.meta().seed,
        config_fingerprint: dataset.meta().config_fingerprint.clone(),
    };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for obs in dataset.observations() {
        let line = JsonlObservation {
            day: obs.day,
            vitals: schema
                .vitals
                .iter()
                .zip(&obs.vitals)
                .map(|(id, v)| (id.to_string(), *v))
                .collect(),
            factors: schema
                .factors
                .iter()
                .zip(&obs.factors)
                .map(|(id, f)| (id.to_string(), *f))
                .collect(),
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl<R: BufRead>(input: R) -> Result<Dataset> {
    let mut lines = input.lines().enumerate().filter(|(_, l)| match l {
        Ok(s) => !s.trim().is_empty(),
        Err(_) => true,
    });
    let (_, first) = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "missing schema line".into(),
    })?;
    let header: JsonlHeader = serde_json::from_str(&first?).map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    if header.schema_version != JSONL_SCHEMA_VERSION {
        return Err(Error::Validation(format!(
            "unsupported schema_version {}",
            header.schema_version
        )));
    }
    let schema = Schema::new(header.vitals, header.factors)?;
    let mut observations = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        let raw: JsonlObservation = serde_json::from_str(&line?).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let mut obs = Observation {
            day: raw.day,
            vitals: vec![None; schema.vitals.len()],
            factors: vec![None; schema.factors.len()],
        };
        for (name, value) in raw.vitals {
            let slot = schema
                .vitals
                .iter()
                .position(|v| v.as_str() == name)
                .ok_or_else(|| {
                    Error::Validation(format!("line {line_no}: unknown vital '{name}'"))
                })?;
            obs.vitals[slot] = value;
        }
        for (name, value) in raw.factors {
            let slot = schema
                .factors
                .iter()
                .position(|f| f.as_str() == name)
                .ok_or_else(|| {
                    Error::Validation(format!("line {line_no}: unknown factor '{name}'"))
                })?;
            obs.factors[slot] = value;
        }
        observations.push(obs);
    }
    sort_and_check_days(&mut observations)?;
    Dataset::new(
        schema,
        observations,
        DatasetMeta {
            seed: header.seed,
            config_fingerprint: header.config_fingerprint,
        },
    )
}
