//! Scoring of area-level estimates over simulation replicates.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use crate::design::Estimand;
use crate::error::{Error, Result};

/// Nominal level of every interval in the simulation.
pub const DEFAULT_ALPHA: f64 = 0.05;

/// `(u − l) + (2/α)(l − θ)·1{θ < l} + (2/α)(θ − u)·1{θ > u}`.
pub fn interval_score(lower: f64, upper: f64, truth: f64, alpha: f64) -> Result<f64> {
    if lower > upper {
        return Err(Error::InvalidInterval { lower, upper });
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    let mut score = upper - lower;
    if truth < lower {
        score += 2.0 / alpha * (lower - truth);
    }
    if truth > upper {
        score += 2.0 / alpha * (truth - upper);
    }
    Ok(score)
}

/// Mean over replicates of `(estimate − truth)²`.
pub fn area_mse(estimates: &[f64], truth: f64) -> Result<f64> {
    if estimates.is_empty() {
        return Err(Error::Empty("estimates"));
    }
    Ok(estimates.iter().map(|e| (e - truth).powi(2)).sum::<f64>() / estimates.len() as f64)
}

/// Fraction of intervals with `l ≤ truth ≤ u`.
pub fn coverage_rate(intervals: &[(f64, f64)], truth: f64) -> Result<f64> {
    if intervals.is_empty() {
        return Err(Error::Empty("intervals"));
    }
    let hits = intervals
        .iter()
        .filter(|(l, u)| *l <= truth && truth <= *u)
        .count();
    Ok(hits as f64 / intervals.len() as f64)
}

/// Mean over areas of `model_k / ht_k`.
pub fn ratio_to_ht(model_mse: &[f64], ht_mse: &[f64]) -> Result<f64> {
    if model_mse.len() != ht_mse.len() {
        return Err(Error::LengthMismatch {
            expected: ht_mse.len(),
            got: model_mse.len(),
        });
    }
    if model_mse.is_empty() {
        return Err(Error::Empty("areas"));
    }
    if let Some(k) = ht_mse.iter().position(|&h| h == 0.0) {
        return Err(Error::ZeroHtMse(k));
    }
    Ok(model_mse
        .iter()
        .zip(ht_mse)
        .map(|(m, h)| m / h)
        .sum::<f64>()
        / model_mse.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Ht,
    Univariate,
    Multitype,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Ht, Method::Univariate, Method::Multitype];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Ht => "ht",
            Method::Univariate => "univariate",
            Method::Multitype => "multitype",
        }
    }

    /// Label for how intervals are formed.
    pub fn interval_method(&self) -> &'static str {
        match self {
            Method::Ht => "normal_approx",
            _ => "posterior_quantile",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ht" => Ok(Method::Ht),
            "univariate" => Ok(Method::Univariate),
            "multitype" => Ok(Method::Multitype),
            other => Err(Error::Config(format!("unknown method {other:?}"))),
        }
    }
}

/// Parses a comma-separated method list, keeping canonical order.
pub fn parse_methods(list: &str) -> Result<Vec<Method>> {
    let mut methods: Vec<Method> = list
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect::<Result<_>>()?;
    methods.sort();
    methods.dedup();
    if methods.is_empty() {
        return Err(Error::Config("no methods requested".into()));
    }
    Ok(methods)
}

/// Point estimate and (optional) interval for one area.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AreaResult {
    pub estimate: f64,
    pub variance: Option<f64>,
    pub interval: Option<(f64, f64)>,
}

/// Estimates of one method for one response in one replicate; `None` marks
/// areas the method could not estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodEstimates {
    pub method: Method,
    pub response: Estimand,
    pub areas: Vec<Option<AreaResult>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateResult {
    pub replicate: usize,
    pub truth_gaussian: Vec<f64>,
    pub truth_rate: Vec<f64>,
    pub estimates: Vec<MethodEstimates>,
}

impl ReplicateResult {
    pub fn truth(&self, response: Estimand) -> &[f64] {
        match response {
            Estimand::GaussianMean => &self.truth_gaussian,
            Estimand::BinomialRate => &self.truth_rate,
        }
    }
}

/// One summary line per (method, response).
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub method: Method,
    pub response: Estimand,
    pub mse: f64,
    pub ratio_to_ht: Option<f64>,
    pub interval_score: Option<f64>,
    pub coverage: Option<f64>,
    /// (replicate, area) pairs without an estimate or interval, or dropped
    /// from the ratio because HT had none.
    pub excluded: usize,
}

/// Per-area metrics behind a report row.
#[derive(Debug, Clone, PartialEq)]
pub struct AreaMetrics {
    pub area: usize,
    pub truth: f64,
    pub mean_estimate: Option<f64>,
    pub mean_variance: Option<f64>,
    pub mean_lower: Option<f64>,
    pub mean_upper: Option<f64>,
    pub mse: Option<f64>,
    pub interval_score: Option<f64>,
    pub coverage: Option<f64>,
    pub replicates: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationReport {
    pub rows: Vec<ReportRow>,
    pub areas: BTreeMap<(Method, &'static str), Vec<AreaMetrics>>,
}

impl SimulationReport {
    pub fn row(&self, method: Method, response: Estimand) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.response == response)
    }

    /// `method,response,mse,ratio_to_ht,interval_score,coverage,excluded,interval_method`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "method",
            "response",
            "mse",
            "ratio_to_ht",
            "interval_score",
            "coverage",
            "excluded",
            "interval_method",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.method.name().to_string(),
                r.response.name().to_string(),
                fmt_num(Some(r.mse)),
                fmt_num(r.ratio_to_ht),
                fmt_num(r.interval_score),
                fmt_num(r.coverage),
                r.excluded.to_string(),
                r.method.interval_method().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Per-area table for one (method, response).
    pub fn write_area_csv<W: Write>(
        &self,
        method: Method,
        response: Estimand,
        labels: &[String],
        out: W,
    ) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "area",
            "truth",
            "mean_estimate",
            "mean_variance",
            "mean_lower",
            "mean_upper",
            "mse",
            "interval_score",
            "coverage",
            "replicates",
        ])?;
        for a in self
            .areas
            .get(&(method, response.name()))
            .into_iter()
            .flatten()
        {
            w.write_record([
                labels
                    .get(a.area)
                    .cloned()
                    .unwrap_or_else(|| a.area.to_string()),
                fmt_num(Some(a.truth)),
                fmt_num(a.mean_estimate),
                fmt_num(a.mean_variance),
                fmt_num(a.mean_lower),
                fmt_num(a.mean_upper),
                fmt_num(a.mse),
                fmt_num(a.interval_score),
                fmt_num(a.coverage),
                a.replicates.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn fmt_num(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.10}"))
}

fn mean_of(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Averages per-area metrics (unweighted over areas) for every (method,
/// response) present in the replicates. Areas where HT has no estimate in a
/// replicate are dropped pairwise from that area's ratio.
pub fn aggregate_report(results: &[ReplicateResult], alpha: f64) -> Result<SimulationReport> {
    let first = results.first().ok_or(Error::Empty("replicates"))?;
    let r = first.truth_gaussian.len();
    let keys: Vec<(Method, Estimand)> = {
        let mut k: Vec<(Method, Estimand)> = first
            .estimates
            .iter()
            .map(|e| (e.method, e.response))
            .collect();
        k.sort_by_key(|(m, e)| (*m, e.name()));
        k.dedup();
        k
    };
    let lookup =
        |rep: &ReplicateResult, m: Method, resp: Estimand| -> Result<Vec<Option<AreaResult>>> {
            rep.estimates
                .iter()
                .find(|e| e.method == m && e.response == resp)
                .map(|e| e.areas.clone())
                .ok_or_else(|| {
                    Error::Config(format!(
                        "replicate {} lacks {m}/{}",
                        rep.replicate,
                        resp.name()
                    ))
                })
        };

    let mut rows = Vec::new();
    let mut areas = BTreeMap::new();
    for &(method, response) in &keys {
        let has_ht = keys.contains(&(Method::Ht, response));
        let mut excluded = 0usize;
        let mut area_rows = Vec::with_capacity(r);
        let mut mses = Vec::new();
        let mut scores = Vec::new();
        let mut covers = Vec::new();
        let (mut ratio_model, mut ratio_ht) = (Vec::new(), Vec::new());
        for k in 0..r {
            let truth = first.truth(response)[k];
            let mut est = Vec::new();
            let mut vars = Vec::new();
            let mut ivals = Vec::new();
            let mut paired_model = Vec::new();
            let mut paired_ht = Vec::new();
            for rep in results {
                let t = rep.truth(response);
                if t.len() != r {
                    return Err(Error::LengthMismatch {
                        expected: r,
                        got: t.len(),
                    });
                }
                let mine = lookup(rep, method, response)?;
                if mine.len() != r {
                    return Err(Error::LengthMismatch {
                        expected: r,
                        got: mine.len(),
                    });
                }
                let Some(a) = mine[k] else {
                    excluded += 1;
                    continue;
                };
                est.push(a.estimate);
                vars.extend(a.variance);
                match a.interval {
                    Some(iv) => ivals.push(iv),
                    None => excluded += 1,
                }
                if has_ht {
                    if let Some(h) = lookup(rep, Method::Ht, response)?[k] {
                        paired_model.push(a.estimate);
                        paired_ht.push(h.estimate);
                    } else if method != Method::Ht {
                        excluded += 1;
                    }
                }
            }
            let mse = if est.is_empty() {
                None
            } else {
                Some(area_mse(&est, truth)?)
            };
            let score = if ivals.is_empty() {
                None
            } else {
                let s: Vec<f64> = ivals
                    .iter()
                    .map(|&(l, u)| interval_score(l, u, truth, alpha))
                    .collect::<Result<_>>()?;
                mean_of(&s)
            };
            let cover = if ivals.is_empty() {
                None
            } else {
                Some(coverage_rate(&ivals, truth)?)
            };
            if !paired_ht.is_empty() {
                ratio_model.push(area_mse(&paired_model, truth)?);
                ratio_ht.push(area_mse(&paired_ht, truth)?);
            }
            mses.extend(mse);
            scores.extend(score);
            covers.extend(cover);
            let lows: Vec<f64> = ivals.iter().map(|iv| iv.0).collect();
            let highs: Vec<f64> = ivals.iter().map(|iv| iv.1).collect();
            area_rows.push(AreaMetrics {
                area: k,
                truth,
                mean_estimate: mean_of(&est),
                mean_variance: mean_of(&vars),
                mean_lower: mean_of(&lows),
                mean_upper: mean_of(&highs),
                mse,
                interval_score: score,
                coverage: cover,
                replicates: est.len(),
            });
        }
        let ratio = if ratio_ht.is_empty() {
            None
        } else if method == Method::Ht {
            Some(1.0)
        } else {
            Some(ratio_to_ht(&ratio_model, &ratio_ht)?)
        };
        rows.push(ReportRow {
            method,
            response,
            mse: mean_of(&mses).ok_or(Error::Empty("area estimates"))?,
            ratio_to_ht: ratio,
            interval_score: mean_of(&scores),
            coverage: mean_of(&covers),
            excluded,
        });
        areas.insert((method, response.name()), area_rows);
    }
    Ok(SimulationReport { rows, areas })
}
