//! Domain types, microdata ingestion and response transformations.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::spatial_basis::BasisMatrix;

/// Poverty threshold on the income-to-poverty ratio (percent).
pub const POVERTY_THRESHOLD: f64 = 100.0;

/// One sampled or population unit.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitRecord {
    pub unit_id: usize,
    /// Index into the associated [`AreaSet`].
    pub area_id: usize,
    /// Gaussian-block covariates, intercept first.
    pub x1: Vec<f64>,
    /// Binomial-block covariates, intercept first.
    pub x2: Vec<f64>,
    /// Gaussian response on the transformed scale.
    pub z1: f64,
    /// Binomial successes.
    pub z2: u32,
    pub trials: u32,
    /// Design weight (person weight for population frames).
    pub weight: f64,
}

impl UnitRecord {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 || self.z2 > self.trials {
            return Err(Error::Domain(format!(
                "unit {}: successes {} outside [0, {}]",
                self.unit_id, self.z2, self.trials
            )));
        }
        if !(self.weight > 0.0) {
            return Err(Error::Domain(format!(
                "unit {}: weight must be positive, got {}",
                self.unit_id, self.weight
            )));
        }
        Ok(())
    }
}

/// Min/max of log income, fixed at ingestion time and reused afterwards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformMeta {
    pub log_min: f64,
    pub log_max: f64,
}

impl TransformMeta {
    pub fn new(log_min: f64, log_max: f64) -> Result<Self> {
        if !(log_max > log_min) {
            return Err(Error::DegenerateRange);
        }
        Ok(Self { log_min, log_max })
    }

    pub fn apply(&self, raw: f64) -> Result<f64> {
        if !(raw > 0.0) {
            return Err(Error::Domain(format!("income must be positive, got {raw}")));
        }
        Ok((raw.ln() - self.log_min) / (self.log_max - self.log_min))
    }

    pub fn invert(&self, z: f64) -> f64 {
        (z * (self.log_max - self.log_min) + self.log_min).exp()
    }
}

#[derive(Debug, Clone)]
pub struct PopulationFrame {
    pub units: Vec<UnitRecord>,
    pub transform_meta: TransformMeta,
}

impl PopulationFrame {
    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }
}

/// The set of small areas and their adjacency structure.
#[derive(Debug, Clone, PartialEq)]
pub struct AreaSet {
    pub labels: Vec<String>,
    /// Symmetric 0/1 matrix with zero diagonal.
    pub adjacency: DMatrix<f64>,
}

impl AreaSet {
    pub fn new(labels: Vec<String>, adjacency: DMatrix<f64>) -> Result<Self> {
        let r = labels.len();
        if r == 0 {
            return Err(Error::Empty("area set"));
        }
        if adjacency.nrows() != r || adjacency.ncols() != r {
            return Err(Error::InvalidAdjacency(format!(
                "expected {r}x{r}, got {}x{}",
                adjacency.nrows(),
                adjacency.ncols()
            )));
        }
        check_adjacency(&adjacency)?;
        Ok(Self { labels, adjacency })
    }

    pub fn r(&self) -> usize {
        self.labels.len()
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownArea(label.to_string()))
    }

    /// Rectangular grid with rook adjacency; labels are `0..rows*cols` in row-major order.
    pub fn grid(rows: usize, cols: usize) -> Result<Self> {
        let r = rows * cols;
        let mut adj = DMatrix::zeros(r, r);
        for i in 0..rows {
            for j in 0..cols {
                let k = i * cols + j;
                if j + 1 < cols {
                    adj[(k, k + 1)] = 1.0;
                    adj[(k + 1, k)] = 1.0;
                }
                if i + 1 < rows {
                    adj[(k, k + cols)] = 1.0;
                    adj[(k + cols, k)] = 1.0;
                }
            }
        }
        Self::new((0..r).map(|k| k.to_string()).collect(), adj)
    }

    /// Parses an edge list: two identifiers per line (whitespace or comma
    /// separated). A line with a single identifier declares an isolated area.
    /// Blank lines and lines starting with `#` are ignored.
    pub fn from_edge_list_str(text: &str) -> Result<Self> {
        let mut labels = BTreeSet::new();
        let mut edges = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .collect();
            match fields.as_slice() {
                [a] => {
                    labels.insert(a.to_string());
                }
                [a, b] => {
                    if a == b {
                        return Err(Error::InvalidAdjacency(format!(
                            "line {}: self-loop on `{a}`",
                            lineno + 1
                        )));
                    }
                    labels.insert(a.to_string());
                    labels.insert(b.to_string());
                    edges.push((a.to_string(), b.to_string()));
                }
                _ => {
                    return Err(Error::InvalidAdjacency(format!(
                        "line {}: expected one or two identifiers",
                        lineno + 1
                    )))
                }
            }
        }
        let labels = sort_labels(labels.into_iter().collect());
        let index: BTreeMap<&str, usize> = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.as_str(), i))
            .collect();
        let r = labels.len();
        let mut adj = DMatrix::zeros(r, r);
        for (a, b) in &edges {
            let (i, j) = (index[a.as_str()], index[b.as_str()]);
            adj[(i, j)] = 1.0;
            adj[(j, i)] = 1.0;
        }
        Self::new(labels, adj)
    }

    pub fn from_edge_list(path: &Path) -> Result<Self> {
        Self::from_edge_list_str(&std::fs::read_to_string(path)?)
    }

    /// Writes the adjacency as an edge list readable by [`AreaSet::from_edge_list`].
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for i in 0..self.r() {
            let mut isolated = true;
            for j in 0..self.r() {
                if self.adjacency[(i, j)] != 0.0 {
                    isolated = false;
                    if i < j {
                        out.push_str(&format!("{} {}\n", self.labels[i], self.labels[j]));
                    }
                }
            }
            if isolated {
                out.push_str(&format!("{}\n", self.labels[i]));
            }
        }
        out
    }
}

pub(crate) fn check_adjacency(a: &DMatrix<f64>) -> Result<()> {
    let r = a.nrows();
    if a.ncols() != r {
        return Err(Error::InvalidAdjacency("matrix is not square".into()));
    }
    for i in 0..r {
        if a[(i, i)] != 0.0 {
            return Err(Error::InvalidAdjacency(format!("nonzero diagonal at {i}")));
        }
        for j in 0..r {
            let v = a[(i, j)];
            if v != 0.0 && v != 1.0 {
                return Err(Error::InvalidAdjacency(format!(
                    "entry ({i},{j}) = {v} is not 0/1"
                )));
            }
            if v != a[(j, i)] {
                return Err(Error::InvalidAdjacency(format!("asymmetric at ({i},{j})")));
            }
        }
    }
    Ok(())
}

/// Sorts labels numerically when every label parses as an integer, lexically otherwise.
pub fn sort_labels(mut labels: Vec<String>) -> Vec<String> {
    if labels.iter().all(|l| l.parse::<i64>().is_ok()) {
        labels.sort_by_key(|l| l.parse::<i64>().unwrap());
    } else {
        labels.sort();
    }
    labels
}

/// One poststratification cell: an (area, covariate pattern) with its population count.
#[derive(Debug, Clone, PartialEq)]
pub struct PoststratCell {
    pub area_id: usize,
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    pub count: u64,
}

/// Column names and covariate coding for microdata ingestion.
#[derive(Debug, Clone, PartialEq)]
pub struct Schema {
    pub income: String,
    pub povpip: String,
    pub sex: String,
    pub education: String,
    pub weight: String,
    pub area: String,
    pub unit_id: Option<String>,
    pub delimiter: u8,
    /// Education categories are `[−∞, c₁), [c₁, c₂), …`; the first is the reference.
    pub education_cutpoints: Vec<f64>,
}

impl Default for Schema {
    fn default() -> Self {
        Self {
            income: "PINCP".into(),
            povpip: "POVPIP".into(),
            sex: "SEX".into(),
            education: "SCHL".into(),
            weight: "PWGTP".into(),
            area: "PUMA".into(),
            unit_id: None,
            delimiter: b',',
            education_cutpoints: vec![21.0],
        }
    }
}

impl Schema {
    pub fn education_level(&self, schl: f64) -> usize {
        self.education_cutpoints
            .iter()
            .filter(|&&c| schl >= c)
            .count()
    }

    pub fn education_levels(&self) -> usize {
        self.education_cutpoints.len() + 1
    }
}

/// Result of [`ingest_population`].
#[derive(Debug, Clone)]
pub struct Ingested {
    /// Units with `area_id` indexing `area_labels`.
    pub frame: PopulationFrame,
    pub dropped: usize,
    pub area_labels: Vec<String>,
    /// Names of the non-intercept covariate columns, in `x` order.
    pub covariate_names: Vec<String>,
    /// Sorted sex levels; the first is the reference.
    pub sex_levels: Vec<String>,
}

impl Ingested {
    /// Re-indexes units so that `area_id` points into `areas`.
    pub fn align_to(&mut self, areas: &AreaSet) -> Result<()> {
        let map: Vec<usize> = self
            .area_labels
            .iter()
            .map(|l| areas.index_of(l))
            .collect::<Result<_>>()?;
        for u in &mut self.frame.units {
            u.area_id = map[u.area_id];
        }
        self.area_labels = areas.labels.clone();
        Ok(())
    }
}

struct RawRow {
    unit_id: usize,
    income: f64,
    povpip: f64,
    sex: String,
    schl: f64,
    weight: f64,
    area: String,
}

fn parse_field(s: &str) -> Option<f64> {
    let s = s.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("na") {
        return None;
    }
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn nonempty(s: &str) -> Option<String> {
    let s = s.trim();
    (!s.is_empty() && !s.eq_ignore_ascii_case("na")).then(|| s.to_string())
}

/// Reads delimiter-separated microdata, drops rows with non-positive income or
/// any missing analysis field, and builds transformed units.
pub fn ingest_population(path: &Path, schema: &Schema) -> Result<Ingested> {
    let file = std::fs::File::open(path)?;
    ingest_reader(file, schema)
}

pub fn ingest_reader<R: std::io::Read>(reader: R, schema: &Schema) -> Result<Ingested> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let c_income = col(&schema.income)?;
    let c_pov = col(&schema.povpip)?;
    let c_sex = col(&schema.sex)?;
    let c_edu = col(&schema.education)?;
    let c_w = col(&schema.weight)?;
    let c_area = col(&schema.area)?;
    let c_id = schema.unit_id.as_deref().map(col).transpose()?;

    let mut rows = Vec::new();
    let mut dropped = 0usize;
    for (idx, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let get = |c: usize| rec.get(c).unwrap_or("");
        let unit_id = match c_id {
            Some(c) => match get(c).trim().parse::<usize>() {
                Ok(v) => v,
                Err(_) => idx,
            },
            None => idx,
        };
        let parsed = (|| {
            Some(RawRow {
                unit_id,
                income: parse_field(get(c_income)).filter(|v| *v > 0.0)?,
                povpip: parse_field(get(c_pov))?,
                sex: nonempty(get(c_sex))?,
                schl: parse_field(get(c_edu))?,
                weight: parse_field(get(c_w)).filter(|v| *v > 0.0)?,
                area: nonempty(get(c_area))?,
            })
        })();
        match parsed {
            Some(r) => rows.push(r),
            None => dropped += 1,
        }
    }
    if rows.is_empty() {
        return Err(Error::EmptyPopulation { dropped });
    }

    let incomes: Vec<f64> = rows.iter().map(|r| r.income).collect();
    let (z1, meta) = transform_income(&incomes)?;
    let poor = derive_poverty(&rows.iter().map(|r| r.povpip).collect::<Vec<_>>());

    let area_labels = sort_labels(
        rows.iter()
            .map(|r| r.area.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
    );
    let area_index: BTreeMap<&str, usize> = area_labels
        .iter()
        .enumerate()
        .map(|(i, l)| (l.as_str(), i))
        .collect();
    let sex_levels = sort_labels(
        rows.iter()
            .map(|r| r.sex.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
    );

    let mut covariate_names: Vec<String> = sex_levels
        .iter()
        .skip(1)
        .map(|l| format!("{}_{}", schema.sex, l))
        .collect();
    covariate_names
        .extend((1..schema.education_levels()).map(|j| format!("{}_cat{}", schema.education, j)));

    let units = rows
        .iter()
        .zip(z1)
        .zip(poor)
        .map(|((r, z1), poor)| {
            let x = covariate_row(schema, &sex_levels, &r.sex, r.schl);
            UnitRecord {
                unit_id: r.unit_id,
                area_id: area_index[r.area.as_str()],
                x1: x.clone(),
                x2: x,
                z1,
                z2: poor,
                trials: 1,
                weight: r.weight,
            }
        })
        .collect();

    Ok(Ingested {
        frame: PopulationFrame {
            units,
            transform_meta: meta,
        },
        dropped,
        area_labels,
        covariate_names,
        sex_levels,
    })
}

/// Intercept followed by sex and education indicators.
pub fn covariate_row(schema: &Schema, sex_levels: &[String], sex: &str, schl: f64) -> Vec<f64> {
    let mut x = Vec::with_capacity(sex_levels.len() + schema.education_levels());
    x.push(1.0);
    for level in sex_levels.iter().skip(1) {
        x.push(if level == sex { 1.0 } else { 0.0 });
    }
    let edu = schema.education_level(schl);
    for j in 1..schema.education_levels() {
        x.push(if edu == j { 1.0 } else { 0.0 });
    }
    x
}

/// Min–max transform of log income onto `[0, 1]`.
pub fn transform_income(raw: &[f64]) -> Result<(Vec<f64>, TransformMeta)> {
    if let Some(bad) = raw.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::Domain(format!("income must be positive, got {bad}")));
    }
    let logs: Vec<f64> = raw.iter().map(|v| v.ln()).collect();
    let lo = logs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let meta = TransformMeta::new(lo, hi)?;
    let z = logs.iter().map(|l| (l - lo) / (hi - lo)).collect();
    Ok((z, meta))
}

/// Poverty indicator: 1 iff the income-to-poverty ratio is below 100.
pub fn derive_poverty(povpip: &[f64]) -> Vec<u32> {
    povpip
        .iter()
        .map(|&p| u32::from(p < POVERTY_THRESHOLD))
        .collect()
}

/// Stacks covariates and basis rows in unit order.
pub fn build_design_matrices(
    units: &[UnitRecord],
    basis: &BasisMatrix,
) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let n = units.len();
    let p1 = units.first().map_or(0, |u| u.x1.len());
    let p2 = units.first().map_or(0, |u| u.x2.len());
    let mut x1 = DMatrix::zeros(n, p1);
    let mut x2 = DMatrix::zeros(n, p2);
    for (i, u) in units.iter().enumerate() {
        if u.x1.len() != p1 {
            return Err(Error::LengthMismatch {
                expected: p1,
                got: u.x1.len(),
            });
        }
        if u.x2.len() != p2 {
            return Err(Error::LengthMismatch {
                expected: p2,
                got: u.x2.len(),
            });
        }
        for (j, v) in u.x1.iter().enumerate() {
            x1[(i, j)] = *v;
        }
        for (j, v) in u.x2.iter().enumerate() {
            x2[(i, j)] = *v;
        }
    }
    let ids: Vec<usize> = units.iter().map(|u| u.area_id).collect();
    let phi = basis.area_design_rows(&ids)?;
    Ok((x1, x2, phi))
}
