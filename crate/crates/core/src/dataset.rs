//! Multi-cutoff RD data: loading, validation, and read-only filtered views.
//!
//! A [`Dataset`] is immutable once built. Every analysis works on a
//! [`DataView`], which is a list of row indices into a shared dataset.

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{RdError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Design {
    #[default]
    Sharp,
    Fuzzy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub y: f64,
    pub x: f64,
    /// Cutoff faced by the unit.
    pub c: f64,
    /// Treatment received (0/1).
    pub d: u8,
    /// Discrete covariate labels, empty when the dataset has none.
    pub z: Vec<String>,
}

impl Observation {
    pub fn new(y: f64, x: f64, c: f64, d: u8) -> Self {
        Observation {
            y,
            x,
            c,
            d,
            z: Vec::new(),
        }
    }

    pub fn sharp(y: f64, x: f64, c: f64) -> Self {
        Observation::new(y, x, c, u8::from(x >= c))
    }

    pub fn with_z<S: Into<String>>(mut self, z: impl IntoIterator<Item = S>) -> Self {
        self.z = z.into_iter().map(Into::into).collect();
        self
    }

    /// Whether the score is at or above the unit's own cutoff.
    pub fn assigned(&self) -> bool {
        self.x >= self.c
    }

    /// Covariate cell label (labels joined with `|`).
    pub fn cell_key(&self) -> String {
        self.z.join("|")
    }
}

/// Column mapping used by [`load_dataset`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    pub y: String,
    pub x: String,
    pub c: String,
    /// Treatment column. Optional in sharp designs, where it is synthesized
    /// as `1(x >= c)` when absent and validated when present.
    pub d: Option<String>,
    /// Covariate columns. `None` picks up every header named `z1`, `z2`, ...
    pub z: Option<Vec<String>>,
}

impl Default for Schema {
    fn default() -> Self {
        Schema {
            y: "y".into(),
            x: "x".into(),
            c: "c".into(),
            d: Some("d".into()),
            z: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    observations: Vec<Observation>,
    cutoffs: Vec<f64>,
    design: Design,
    z_names: Vec<String>,
}

impl Dataset {
    /// Validates and wraps a set of observations.
    pub fn new(observations: Vec<Observation>, design: Design) -> Result<Self> {
        Dataset::with_covariates(observations, design, Vec::new())
    }

    pub fn with_covariates(
        observations: Vec<Observation>,
        design: Design,
        z_names: Vec<String>,
    ) -> Result<Self> {
        let nz = observations.first().map(|o| o.z.len()).unwrap_or(0);
        for (i, o) in observations.iter().enumerate() {
            let row = i + 1;
            if !(o.x.is_finite() && o.y.is_finite() && o.c.is_finite()) {
                return Err(RdError::InvalidRow {
                    row,
                    message: "non-finite value".into(),
                });
            }
            if o.d > 1 {
                return Err(RdError::InvalidRow {
                    row,
                    message: format!("treatment must be 0 or 1, got {}", o.d),
                });
            }
            if design == Design::Sharp && o.d != u8::from(o.assigned()) {
                return Err(RdError::SharpComplianceViolation { row });
            }
            if o.z.len() != nz {
                return Err(RdError::InvalidRow {
                    row,
                    message: "inconsistent number of covariates".into(),
                });
            }
        }
        let mut cutoffs: Vec<f64> = Vec::new();
        for o in &observations {
            if !cutoffs.contains(&o.c) {
                cutoffs.push(o.c);
            }
        }
        cutoffs.sort_by(f64::total_cmp);
        for &c in &cutoffs {
            let count = observations.iter().filter(|o| o.c == c).count();
            if count < 2 {
                return Err(RdError::SmallCutoffGroup { cutoff: c, count });
            }
        }
        let z_names = if z_names.len() == nz {
            z_names
        } else {
            (1..=nz).map(|k| format!("z{k}")).collect()
        };
        Ok(Dataset {
            observations,
            cutoffs,
            design,
            z_names,
        })
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn cutoffs(&self) -> &[f64] {
        &self.cutoffs
    }

    pub fn design(&self) -> Design {
        self.design
    }

    pub fn z_names(&self) -> &[String] {
        &self.z_names
    }

    pub fn has_covariates(&self) -> bool {
        !self.z_names.is_empty()
    }

    pub fn cutoff_index(&self, c: f64) -> Result<usize> {
        self.cutoffs
            .iter()
            .position(|&k| k == c)
            .ok_or(RdError::UnknownCutoff(c))
    }

    /// Distinct covariate cells in sorted order.
    pub fn covariate_cells(&self) -> Vec<String> {
        let set: BTreeSet<String> = self.observations.iter().map(|o| o.cell_key()).collect();
        set.into_iter().collect()
    }

    pub fn view(&self) -> DataView<'_> {
        DataView {
            ds: self,
            rows: (0..self.observations.len()).collect::<Vec<_>>().into(),
        }
    }

    pub fn subset(&self, filter: &Filter) -> Result<DataView<'_>> {
        self.view().subset(filter)
    }

    /// Same rows with a transformed outcome. Used for invariance checks and
    /// for building derived regressands.
    pub fn map_outcomes(&self, f: impl Fn(&Observation) -> f64) -> Dataset {
        let observations = self
            .observations
            .iter()
            .map(|o| Observation {
                y: f(o),
                ..o.clone()
            })
            .collect();
        Dataset {
            observations,
            ..self.clone()
        }
    }

    /// Writes the canonical CSV layout (`y,x,c,d,z...`).
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["y".to_string(), "x".into(), "c".into(), "d".into()];
        header.extend(self.z_names.iter().cloned());
        w.write_record(&header)?;
        for o in &self.observations {
            let mut rec = vec![
                o.y.to_string(),
                o.x.to_string(),
                o.c.to_string(),
                o.d.to_string(),
            ];
            rec.extend(o.z.iter().cloned());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(f)
    }
}

/// Loads a CSV file (UTF-8, header row required).
pub fn load_dataset(path: impl AsRef<Path>, schema: &Schema, design: Design) -> Result<Dataset> {
    let path = path.as_ref();
    let f =
        std::fs::File::open(path).map_err(|e| RdError::Io(format!("{}: {e}", path.display())))?;
    read_dataset(f, schema, design)
}

pub fn read_dataset<R: Read>(reader: R, schema: &Schema, design: Design) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| RdError::MissingColumn(name.to_string()))
    };
    let iy = find(&schema.y)?;
    let ix = find(&schema.x)?;
    let ic = find(&schema.c)?;
    let id = match (&schema.d, design) {
        (Some(name), Design::Sharp) => headers.iter().position(|h| h == name),
        (Some(name), Design::Fuzzy) => Some(find(name)?),
        (None, Design::Sharp) => None,
        (None, Design::Fuzzy) => return Err(RdError::MissingColumn("d".into())),
    };
    let z_names: Vec<String> = match &schema.z {
        Some(names) => names.clone(),
        None => {
            let mut auto: Vec<(usize, String)> = headers
                .iter()
                .filter_map(|h| {
                    let k = h.strip_prefix('z')?.parse::<usize>().ok()?;
                    Some((k, h.to_string()))
                })
                .collect();
            auto.sort();
            auto.into_iter().map(|(_, h)| h).collect()
        }
    };
    let iz = z_names
        .iter()
        .map(|n| find(n))
        .collect::<Result<Vec<_>>>()?;

    let mut obs = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec?;
        let num = |idx: usize, name: &str| -> Result<f64> {
            let raw = rec.get(idx).unwrap_or("");
            let v: f64 = raw.parse().map_err(|_| RdError::ParseError {
                row,
                column: name.to_string(),
                message: if raw.is_empty() {
                    "missing value".to_string()
                } else {
                    format!("`{raw}` is not a number")
                },
            })?;
            if !v.is_finite() {
                return Err(RdError::ParseError {
                    row,
                    column: name.to_string(),
                    message: "non-finite value".into(),
                });
            }
            Ok(v)
        };
        let y = num(iy, &schema.y)?;
        let x = num(ix, &schema.x)?;
        let c = num(ic, &schema.c)?;
        let d = match id {
            Some(idx) => {
                let v = num(idx, schema.d.as_deref().unwrap_or("d"))?;
                if v == 0.0 {
                    0
                } else if v == 1.0 {
                    1
                } else {
                    return Err(RdError::ParseError {
                        row,
                        column: schema.d.clone().unwrap_or_default(),
                        message: format!("treatment must be 0 or 1, got {v}"),
                    });
                }
            }
            None => u8::from(x >= c),
        };
        let z = iz
            .iter()
            .map(|&k| rec.get(k).unwrap_or("").to_string())
            .collect();
        obs.push(Observation { y, x, c, d, z });
    }
    Dataset::with_covariates(obs, design, z_names)
}

/// Row filter for [`DataView::subset`]. Unset fields match everything.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Filter {
    pub cutoff: Option<f64>,
    pub treated: Option<bool>,
    /// Score side relative to the unit's own cutoff: `Some(true)` keeps
    /// `x >= c`. Equals `treated` in sharp designs.
    pub assigned: Option<bool>,
    /// Closed score window `[lo, hi]`.
    pub window: Option<(f64, f64)>,
    pub cell: Option<String>,
}

impl Filter {
    pub fn new() -> Self {
        Filter::default()
    }
    pub fn cutoff(mut self, c: f64) -> Self {
        self.cutoff = Some(c);
        self
    }
    pub fn treated(mut self, t: bool) -> Self {
        self.treated = Some(t);
        self
    }
    pub fn assigned(mut self, a: bool) -> Self {
        self.assigned = Some(a);
        self
    }
    pub fn window(mut self, lo: f64, hi: f64) -> Self {
        self.window = Some((lo, hi));
        self
    }
    pub fn cell(mut self, key: impl Into<String>) -> Self {
        self.cell = Some(key.into());
        self
    }

    fn matches(&self, o: &Observation) -> bool {
        self.cutoff.is_none_or(|c| o.c == c)
            && self.treated.is_none_or(|t| (o.d == 1) == t)
            && self.assigned.is_none_or(|a| o.assigned() == a)
            && self.window.is_none_or(|(lo, hi)| o.x >= lo && o.x <= hi)
            && self.cell.as_ref().is_none_or(|k| &o.cell_key() == k)
    }
}

/// Read-only view into a [`Dataset`]: shared data plus selected row indices.
#[derive(Debug, Clone)]
pub struct DataView<'a> {
    ds: &'a Dataset,
    rows: Arc<[usize]>,
}

impl PartialEq for DataView<'_> {
    fn eq(&self, other: &Self) -> bool {
        std::ptr::eq(self.ds, other.ds) && self.rows == other.rows
    }
}

impl<'a> DataView<'a> {
    pub fn dataset(&self) -> &'a Dataset {
        self.ds
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &'a Observation> + '_ {
        let obs = self.ds.observations();
        self.rows.iter().map(move |&i| &obs[i])
    }

    pub fn subset(&self, filter: &Filter) -> Result<DataView<'a>> {
        if let Some(c) = filter.cutoff {
            self.ds.cutoff_index(c)?;
        }
        let obs = self.ds.observations();
        let rows: Vec<usize> = self
            .rows
            .iter()
            .copied()
            .filter(|&i| filter.matches(&obs[i]))
            .collect();
        Ok(DataView {
            ds: self.ds,
            rows: rows.into(),
        })
    }
}

/// Two cutoffs `low < high` taken from a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffPair {
    pub low: f64,
    pub high: f64,
}

impl CutoffPair {
    pub fn new(ds: &Dataset, low: f64, high: f64) -> Result<Self> {
        ds.cutoff_index(low)?;
        ds.cutoff_index(high)?;
        if !(low < high) {
            return Err(RdError::InvalidArgument(format!(
                "cutoff pair requires low < high, got ({low}, {high})"
            )));
        }
        Ok(CutoffPair { low, high })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv_ds(text: &str, design: Design) -> Result<Dataset> {
        read_dataset(text.as_bytes(), &Schema::default(), design)
    }

    #[test]
    fn sharp_synthesizes_treatment() {
        let ds = csv_ds(
            "y,x,c\n1,-900,-850\n2,-800,-850\n3,-600,-571\n4,-500,-571\n",
            Design::Sharp,
        )
        .unwrap();
        let d: Vec<u8> = ds.observations().iter().map(|o| o.d).collect();
        assert_eq!(d, vec![0, 1, 0, 1]);
        assert_eq!(ds.cutoffs(), &[-850.0, -571.0]);
    }

    #[test]
    fn cutoffs_sorted_ascending() {
        let ds = csv_ds(
            "y,x,c\n1,-600,-571\n1,-900,-850\n1,-560,-571\n1,-700,-850\n",
            Design::Sharp,
        )
        .unwrap();
        assert_eq!(ds.cutoffs(), &[-850.0, -571.0]);
    }

    #[test]
    fn parse_error_reports_row() {
        let err = csv_ds("y,x,c\n1,-900,-850\n2,abc,-850\n", Design::Sharp).unwrap_err();
        assert!(matches!(err, RdError::ParseError { row: 2, .. }), "{err:?}");
    }

    #[test]
    fn missing_outcome_rejected() {
        let err = csv_ds("y,x,c\n1,-900,-850\n,-800,-850\n", Design::Sharp).unwrap_err();
        assert!(matches!(err, RdError::ParseError { row: 2, .. }));
    }

    #[test]
    fn missing_column() {
        let err = csv_ds("y,score,c\n1,2,3\n", Design::Sharp).unwrap_err();
        assert_eq!(err, RdError::MissingColumn("x".into()));
    }

    #[test]
    fn sharp_violation_detected() {
        let err = csv_ds("y,x,c,d\n1,-900,-850,0\n2,-800,-850,0\n", Design::Sharp).unwrap_err();
        assert_eq!(err, RdError::SharpComplianceViolation { row: 2 });
    }

    #[test]
    fn fuzzy_requires_d() {
        let err = csv_ds("y,x,c\n1,-900,-850\n2,-800,-850\n", Design::Fuzzy).unwrap_err();
        assert!(matches!(err, RdError::MissingColumn(_)));
        let ds = csv_ds("y,x,c,d\n1,-900,-850,0\n2,-800,-850,0\n", Design::Fuzzy).unwrap();
        assert_eq!(ds.design(), Design::Fuzzy);
    }

    #[test]
    fn small_group_rejected() {
        let err = csv_ds(
            "y,x,c\n1,-900,-850\n2,-800,-850\n3,-600,-571\n",
            Design::Sharp,
        )
        .unwrap_err();
        assert!(matches!(err, RdError::SmallCutoffGroup { count: 1, .. }));
    }

    #[test]
    fn covariates_auto_detected() {
        let ds = csv_ds(
            "y,x,c,z2,z1\n1,-900,-850,a,u\n2,-800,-850,b,v\n",
            Design::Sharp,
        )
        .unwrap();
        assert_eq!(ds.z_names(), &["z1".to_string(), "z2".to_string()]);
        assert_eq!(ds.observations()[0].z, vec!["u", "a"]);
        assert_eq!(ds.covariate_cells(), vec!["u|a", "v|b"]);
    }

    fn small() -> Dataset {
        let mut obs = Vec::new();
        for i in 0..20 {
            let x = -1000.0 + 50.0 * i as f64;
            obs.push(Observation::sharp(i as f64, x, -850.0));
            obs.push(Observation::sharp(-(i as f64), x + 1.0, -571.0));
        }
        Dataset::new(obs, Design::Sharp).unwrap()
    }

    #[test]
    fn subset_filters() {
        let ds = small();
        let v = ds
            .subset(&Filter::new().cutoff(-850.0).treated(false))
            .unwrap();
        assert!(v.iter().all(|o| o.c == -850.0 && o.d == 0));
        assert_eq!(v.len(), 3);
        let empty = ds.subset(&Filter::new().window(-999.5, -999.5)).unwrap();
        assert!(empty.is_empty());
        assert_eq!(
            ds.subset(&Filter::new().cutoff(1.0)).unwrap_err(),
            RdError::UnknownCutoff(1.0)
        );
    }

    #[test]
    fn four_cells_partition() {
        let ds = small();
        let total: usize = [
            (-850.0, false),
            (-850.0, true),
            (-571.0, false),
            (-571.0, true),
        ]
        .iter()
        .map(|&(c, t)| {
            ds.subset(&Filter::new().cutoff(c).treated(t))
                .unwrap()
                .len()
        })
        .sum();
        assert_eq!(total, ds.len());
    }

    #[test]
    fn subset_is_idempotent() {
        let ds = small();
        let f = Filter::new().cutoff(-571.0).window(-900.0, -500.0);
        let once = ds.subset(&f).unwrap();
        let twice = once.subset(&f).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn csv_round_trip() {
        let ds = small().map_outcomes(|o| o.y / 3.0 + 0.1);
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let back = read_dataset(buf.as_slice(), &Schema::default(), Design::Sharp).unwrap();
        assert_eq!(back, ds);
    }
}
