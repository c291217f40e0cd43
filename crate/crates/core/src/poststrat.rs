//! Poststratification of unit-level posterior draws to area-level estimands.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};

use crate::data_model::{AreaSet, PoststratCell, UnitRecord};
use crate::error::{Error, Result};
use crate::gibbs::{ChainDraws, ModelChain};
use crate::spatial_basis::BasisMatrix;

/// Posterior draws of one area-level estimand.
#[derive(Debug, Clone, PartialEq)]
pub struct AreaDraws {
    pub area_id: usize,
    pub draws: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AreaEstimate {
    pub area_id: usize,
    pub mean: f64,
    pub variance: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
}

/// Cells grouped by area, in area order, with per-area totals.
struct AreaCells<'a> {
    area_id: usize,
    total: f64,
    cells: Vec<&'a PoststratCell>,
}

fn group_cells<'a>(cells: &'a [PoststratCell], basis: &BasisMatrix) -> Result<Vec<AreaCells<'a>>> {
    let mut by_area: BTreeMap<usize, Vec<&PoststratCell>> = BTreeMap::new();
    for c in cells {
        if c.area_id >= basis.r() {
            return Err(Error::UnknownArea(c.area_id.to_string()));
        }
        by_area.entry(c.area_id).or_default().push(c);
    }
    by_area
        .into_iter()
        .map(|(area_id, cells)| {
            let total: u64 = cells.iter().map(|c| c.count).sum();
            if total == 0 {
                return Err(Error::ZeroCount(area_id.to_string()));
            }
            Ok(AreaCells {
                area_id,
                total: total as f64,
                cells,
            })
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::LengthMismatch { expected, got });
    }
    Ok(())
}

/// Per-draw view of the Gaussian part of a chain: `(β₁, area-effect scale, coefficients, σ²)`.
fn gaussian_parts(chain: &ModelChain, t: usize) -> Result<(&[f64], f64, &[f64], f64)> {
    match &chain.draws {
        ChainDraws::Gaussian(d) => {
            let s = &d[t];
            Ok((s.beta.as_slice(), 1.0, s.u.as_slice(), s.sigma2))
        }
        ChainDraws::Multitype(d) => {
            let s = &d[t];
            Ok((s.beta1.as_slice(), s.tau1, s.eta.as_slice(), s.sigma2))
        }
        ChainDraws::Binomial(_) => Err(Error::ChainKind(
            "gaussian poststratification needs a gaussian or multitype chain".into(),
        )),
    }
}

/// Cell means `θ_j = x₁ⱼᵀβ₁ + s·φⱼᵀc` for one draw, grouped like `groups`.
fn gaussian_cell_means(
    groups: &[AreaCells<'_>],
    basis: &BasisMatrix,
    beta: &[f64],
    scale: f64,
    coef: &[f64],
) -> Result<Vec<Vec<f64>>> {
    check_len(basis.q(), coef.len())?;
    groups
        .iter()
        .map(|g| {
            let phi = basis.b.row(g.area_id);
            let effect: f64 = phi.iter().zip(coef).map(|(p, c)| p * c).sum();
            g.cells
                .iter()
                .map(|c| {
                    check_len(beta.len(), c.x1.len())?;
                    Ok(dot(&c.x1, beta) + scale * effect)
                })
                .collect()
        })
        .collect()
}

fn empty_draws(groups: &[AreaCells<'_>], t: usize) -> Vec<AreaDraws> {
    groups
        .iter()
        .map(|g| AreaDraws {
            area_id: g.area_id,
            draws: Vec::with_capacity(t),
        })
        .collect()
}

/// Per-cell route: `m_j ~ N(θ_j, σ²/N_kj)`, `μ_k = Σ_j (N_kj/N_k) m_j`.
pub fn gaussian_poststrat<R: Rng + ?Sized>(
    chain: &ModelChain,
    basis: &BasisMatrix,
    cells: &[PoststratCell],
    rng: &mut R,
) -> Result<Vec<AreaDraws>> {
    let groups = group_cells(cells, basis)?;
    let mut out = empty_draws(&groups, chain.len());
    for t in 0..chain.len() {
        let (beta, scale, coef, sigma2) = gaussian_parts(chain, t)?;
        let theta = gaussian_cell_means(&groups, basis, beta, scale, coef)?;
        for (k, g) in groups.iter().enumerate() {
            let mut mu = 0.0;
            for (c, th) in g.cells.iter().zip(&theta[k]) {
                if c.count == 0 {
                    continue;
                }
                let n = c.count as f64;
                let z: f64 = StandardNormal.sample(rng);
                mu += n / g.total * (th + (sigma2 / n).sqrt() * z);
            }
            out[k].draws.push(mu);
        }
    }
    Ok(out)
}

/// Aggregate route: `μ_k ~ N(Σ N_kj θ_j / N_k, σ²/N_k)`.
pub fn gaussian_poststrat_aggregate<R: Rng + ?Sized>(
    chain: &ModelChain,
    basis: &BasisMatrix,
    cells: &[PoststratCell],
    rng: &mut R,
) -> Result<Vec<AreaDraws>> {
    let groups = group_cells(cells, basis)?;
    let mut out = empty_draws(&groups, chain.len());
    for t in 0..chain.len() {
        let (beta, scale, coef, sigma2) = gaussian_parts(chain, t)?;
        let theta = gaussian_cell_means(&groups, basis, beta, scale, coef)?;
        for (k, g) in groups.iter().enumerate() {
            let weighted: f64 = g
                .cells
                .iter()
                .zip(&theta[k])
                .map(|(c, th)| c.count as f64 * th)
                .sum();
            let z: f64 = StandardNormal.sample(rng);
            out[k]
                .draws
                .push(weighted / g.total + (sigma2 / g.total).sqrt() * z);
        }
    }
    Ok(out)
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `y_kj ~ Bin(N_kj, logit⁻¹(x₂ⱼᵀβ₂ + φⱼᵀ(η + ζ)))`, `π_k = Σ_j y_kj / N_k`.
/// Univariate binomial chains use `φⱼᵀU`.
pub fn binomial_poststrat<R: Rng + ?Sized>(
    chain: &ModelChain,
    basis: &BasisMatrix,
    cells: &[PoststratCell],
    rng: &mut R,
) -> Result<Vec<AreaDraws>> {
    let groups = group_cells(cells, basis)?;
    let mut out = empty_draws(&groups, chain.len());
    for t in 0..chain.len() {
        let (beta, coef): (&[f64], Vec<f64>) = match &chain.draws {
            ChainDraws::Binomial(d) => (d[t].beta.as_slice(), d[t].u.as_slice().to_vec()),
            ChainDraws::Multitype(d) => {
                let s = &d[t];
                (s.beta2.as_slice(), (&s.eta + &s.zeta).as_slice().to_vec())
            }
            ChainDraws::Gaussian(_) => {
                return Err(Error::ChainKind(
                    "binomial poststratification needs a binomial or multitype chain".into(),
                ))
            }
        };
        check_len(basis.q(), coef.len())?;
        for (k, g) in groups.iter().enumerate() {
            let effect: f64 = basis
                .b
                .row(g.area_id)
                .iter()
                .zip(&coef)
                .map(|(p, c)| p * c)
                .sum();
            let mut successes = 0u64;
            for c in &g.cells {
                check_len(beta.len(), c.x2.len())?;
                let p = logistic(dot(&c.x2, beta) + effect);
                successes += Binomial::new(c.count, p)
                    .map_err(|e| Error::Domain(e.to_string()))?
                    .sample(rng);
            }
            out[k].draws.push(successes as f64 / g.total);
        }
    }
    Ok(out)
}

/// Interpolated empirical quantile of sorted data: position `(T−1)p` (zero-based).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Posterior mean, variance (divisor `T − 1`) and central `1 − α` interval.
pub fn summarize(draws: &AreaDraws, alpha: f64) -> Result<AreaEstimate> {
    let t = draws.draws.len();
    if t < 2 {
        return Err(Error::TooFewDraws { needed: 2, got: t });
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    let mean = draws.draws.iter().sum::<f64>() / t as f64;
    let variance = draws.draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (t - 1) as f64;
    let mut sorted = draws.draws.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(AreaEstimate {
        area_id: draws.area_id,
        mean,
        variance,
        ci_lower: quantile_sorted(&sorted, alpha / 2.0),
        ci_upper: quantile_sorted(&sorted, 1.0 - alpha / 2.0),
    })
}

/// Area plus the bit patterns of both covariate rows.
type CellKey = (usize, Vec<u64>, Vec<u64>);

/// Counts population units by (area, covariate pattern), in area then pattern order.
pub fn cells_from_units(units: &[UnitRecord]) -> Vec<PoststratCell> {
    let key = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<u64>>();
    let mut counts: BTreeMap<CellKey, (usize, u64)> = BTreeMap::new();
    for (i, u) in units.iter().enumerate() {
        counts
            .entry((u.area_id, key(&u.x1), key(&u.x2)))
            .or_insert((i, 0))
            .1 += 1;
    }
    counts
        .into_values()
        .map(|(i, count)| PoststratCell {
            area_id: units[i].area_id,
            x1: units[i].x1.clone(),
            x2: units[i].x2.clone(),
            count,
        })
        .collect()
}

/// Writes cells as `area,x1_0..,x2_0..,count` using the area labels.
pub fn write_cells<W: Write>(cells: &[PoststratCell], areas: &AreaSet, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let p1 = cells.first().map_or(0, |c| c.x1.len());
    let p2 = cells.first().map_or(0, |c| c.x2.len());
    let mut header = vec!["area".to_string()];
    header.extend((0..p1).map(|j| format!("x1_{j}")));
    header.extend((0..p2).map(|j| format!("x2_{j}")));
    header.push("count".into());
    w.write_record(&header)?;
    for c in cells {
        check_len(p1, c.x1.len())?;
        check_len(p2, c.x2.len())?;
        let mut rec = vec![areas.labels[c.area_id].clone()];
        rec.extend(c.x1.iter().chain(&c.x2).map(|v| v.to_string()));
        rec.push(c.count.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a cells file written by [`write_cells`].
pub fn read_cells(path: &Path, areas: &AreaSet) -> Result<Vec<PoststratCell>> {
    let file = std::fs::File::open(path)?;
    read_cells_from(file, areas).map_err(|e| match e {
        Error::Parse { message, .. } => Error::Parse {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })
}

pub fn read_cells_from<R: std::io::Read>(input: R, areas: &AreaSet) -> Result<Vec<PoststratCell>> {
    let bad = |message: String| Error::Parse {
        path: "<cells>".into(),
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    let header = rdr.headers()?.clone();
    let col = |name: &str| header.iter().position(|h| h == name);
    let area_col = col("area").ok_or_else(|| Error::MissingColumn("area".into()))?;
    let count_col = col("count").ok_or_else(|| Error::MissingColumn("count".into()))?;
    let block = |prefix: &str| -> Vec<usize> {
        (0..).map_while(|j| col(&format!("{prefix}_{j}"))).collect()
    };
    let (x1_cols, x2_cols) = (block("x1"), block("x2"));
    let mut cells = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let num = |i: usize| {
            rec[i]
                .parse::<f64>()
                .map_err(|_| bad(format!("bad number {:?}", &rec[i])))
        };
        cells.push(PoststratCell {
            area_id: areas.index_of(&rec[area_col])?,
            x1: x1_cols.iter().map(|&i| num(i)).collect::<Result<_>>()?,
            x2: x2_cols.iter().map(|&i| num(i)).collect::<Result<_>>()?,
            count: rec[count_col]
                .parse()
                .map_err(|_| bad(format!("bad count {:?}", &rec[count_col])))?,
        });
    }
    Ok(cells)
}

/// Per-area table: `area_id,estimand,mean,variance,lower,upper`.
pub fn write_estimates<W: Write>(
    estimates: &[AreaEstimate],
    estimand: &str,
    areas: &AreaSet,
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["area_id", "estimand", "mean", "variance", "lower", "upper"])?;
    for e in estimates {
        w.write_record([
            areas.labels[e.area_id].clone(),
            estimand.to_string(),
            e.mean.to_string(),
            e.variance.to_string(),
            e.ci_lower.to_string(),
            e.ci_upper.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
