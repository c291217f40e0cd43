use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use nalgebra::DVector;

use super::{BinomialState, GaussianState, McmcSettings, MultitypeState};
use crate::data_model::TransformMeta;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Gaussian,
    Binomial,
    Multitype,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Gaussian => "gaussian",
            ModelKind::Binomial => "binomial",
            ModelKind::Multitype => "multitype",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" => Ok(ModelKind::Gaussian),
            "binomial" => Ok(ModelKind::Binomial),
            "multitype" => Ok(ModelKind::Multitype),
            other => Err(Error::ChainKind(other.to_string())),
        }
    }
}

/// Post-burn-in draws of one model.
#[derive(Debug, Clone, PartialEq)]
pub enum ChainDraws {
    Gaussian(Vec<GaussianState>),
    Binomial(Vec<BinomialState>),
    Multitype(Vec<MultitypeState>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelChain {
    pub draws: ChainDraws,
    pub n_iter: usize,
    pub n_burn: usize,
    pub seed: u64,
    /// Income transform used to build `Z₁`, kept so estimates can be mapped back.
    pub transform: Option<TransformMeta>,
}

impl ModelChain {
    pub fn new(draws: ChainDraws, settings: &McmcSettings) -> Self {
        Self {
            draws,
            n_iter: settings.n_iter,
            n_burn: settings.n_burn,
            seed: settings.seed,
            transform: None,
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self.draws {
            ChainDraws::Gaussian(_) => ModelKind::Gaussian,
            ChainDraws::Binomial(_) => ModelKind::Binomial,
            ChainDraws::Multitype(_) => ModelKind::Multitype,
        }
    }

    pub fn len(&self) -> usize {
        match &self.draws {
            ChainDraws::Gaussian(d) => d.len(),
            ChainDraws::Binomial(d) => d.len(),
            ChainDraws::Multitype(d) => d.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(p1, p2, q)`; absent blocks have size 0.
    pub fn dims(&self) -> (usize, usize, usize) {
        match &self.draws {
            ChainDraws::Gaussian(d) => d
                .first()
                .map_or((0, 0, 0), |s| (s.beta.len(), 0, s.u.len())),
            ChainDraws::Binomial(d) => d
                .first()
                .map_or((0, 0, 0), |s| (0, s.beta.len(), s.u.len())),
            ChainDraws::Multitype(d) => d
                .first()
                .map_or((0, 0, 0), |s| (s.beta1.len(), s.beta2.len(), s.eta.len())),
        }
    }

    /// Column names in serialization order.
    pub fn column_names(&self) -> Vec<String> {
        let (p1, p2, q) = self.dims();
        column_names(self.kind(), p1, p2, q)
    }

    /// Flattened draw `t`, matching [`column_names`](Self::column_names).
    pub fn row(&self, t: usize) -> Vec<f64> {
        match &self.draws {
            ChainDraws::Gaussian(d) => {
                let s = &d[t];
                s.beta
                    .iter()
                    .chain(s.u.iter())
                    .copied()
                    .chain([s.sigma2, s.sigma_u2])
                    .collect()
            }
            ChainDraws::Binomial(d) => {
                let s = &d[t];
                s.beta
                    .iter()
                    .chain(s.u.iter())
                    .copied()
                    .chain([s.sigma_u2])
                    .collect()
            }
            ChainDraws::Multitype(d) => {
                let s = &d[t];
                s.beta1
                    .iter()
                    .chain(s.beta2.iter())
                    .chain(s.eta.iter())
                    .chain(s.zeta.iter())
                    .copied()
                    .chain([s.tau1, s.sigma2, s.sigma_eta2, s.sigma_zeta2])
                    .collect()
            }
        }
    }

    /// One `#` metadata line, a header, then one row per draw.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        write!(
            out,
            "# kind={} n_iter={} n_burn={} seed={}",
            self.kind(),
            self.n_iter,
            self.n_burn,
            self.seed
        )?;
        if let Some(t) = self.transform {
            write!(out, " log_min={:e} log_max={:e}", t.log_min, t.log_max)?;
        }
        writeln!(out)?;
        writeln!(out, "{}", self.column_names().join(","))?;
        for t in 0..self.len() {
            let row: Vec<String> = self.row(t).iter().map(|v| format!("{v:e}")).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_csv(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(file)).map_err(|e| match e {
            Error::Parse { message, .. } => Error::Parse {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let bad = |message: String| Error::Parse {
            path: "<chain>".into(),
            message,
        };
        let mut lines = input.lines();
        let meta_line = lines
            .next()
            .ok_or_else(|| bad("empty chain file".into()))??;
        let meta = meta_line
            .strip_prefix('#')
            .ok_or_else(|| bad("missing metadata line".into()))?;
        let mut kind = None;
        let (mut n_iter, mut n_burn, mut seed) = (None, None, None);
        let (mut log_min, mut log_max) = (None, None);
        for token in meta.split_whitespace() {
            let (key, value) = token
                .split_once('=')
                .ok_or_else(|| bad(format!("bad metadata token {token:?}")))?;
            let num = |v: &str| {
                v.parse::<f64>()
                    .map_err(|_| bad(format!("bad value for {key}: {v:?}")))
            };
            let int = |v: &str| {
                v.parse::<u64>()
                    .map_err(|_| bad(format!("bad value for {key}: {v:?}")))
            };
            match key {
                "kind" => kind = Some(value.parse::<ModelKind>()?),
                "n_iter" => n_iter = Some(int(value)? as usize),
                "n_burn" => n_burn = Some(int(value)? as usize),
                "seed" => seed = Some(int(value)?),
                "log_min" => log_min = Some(num(value)?),
                "log_max" => log_max = Some(num(value)?),
                _ => {}
            }
        }
        let kind = kind.ok_or_else(|| bad("metadata lacks kind".into()))?;
        let header = lines.next().ok_or_else(|| bad("missing header".into()))??;
        let names: Vec<&str> = header.split(',').map(str::trim).collect();
        let count = |prefix: &str| {
            names
                .iter()
                .filter(|n| {
                    n.strip_prefix(prefix)
                        .is_some_and(|r| r.parse::<usize>().is_ok())
                })
                .count()
        };
        let (p1, p2, q) = match kind {
            ModelKind::Gaussian => (count("beta1_"), 0, count("u_")),
            ModelKind::Binomial => (0, count("beta2_"), count("u_")),
            ModelKind::Multitype => (count("beta1_"), count("beta2_"), count("eta_")),
        };
        let expected = column_names(kind, p1, p2, q);
        if names != expected.iter().map(String::as_str).collect::<Vec<_>>() {
            return Err(bad(format!("unexpected header for {kind} chain")));
        }

        let mut rows = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let values = line
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| bad(format!("bad number {v:?}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            if values.len() != expected.len() {
                return Err(bad(format!(
                    "row has {} fields, expected {}",
                    values.len(),
                    expected.len()
                )));
            }
            rows.push(values);
        }

        let vec = |r: &[f64]| DVector::from_column_slice(r);
        let draws = match kind {
            ModelKind::Gaussian => ChainDraws::Gaussian(
                rows.iter()
                    .map(|r| GaussianState {
                        beta: vec(&r[..p1]),
                        u: vec(&r[p1..p1 + q]),
                        sigma2: r[p1 + q],
                        sigma_u2: r[p1 + q + 1],
                    })
                    .collect(),
            ),
            ModelKind::Binomial => ChainDraws::Binomial(
                rows.iter()
                    .map(|r| BinomialState {
                        beta: vec(&r[..p2]),
                        u: vec(&r[p2..p2 + q]),
                        sigma_u2: r[p2 + q],
                    })
                    .collect(),
            ),
            ModelKind::Multitype => ChainDraws::Multitype(
                rows.iter()
                    .map(|r| {
                        let o = p1 + p2 + 2 * q;
                        MultitypeState {
                            beta1: vec(&r[..p1]),
                            beta2: vec(&r[p1..p1 + p2]),
                            eta: vec(&r[p1 + p2..p1 + p2 + q]),
                            zeta: vec(&r[p1 + p2 + q..o]),
                            tau1: r[o],
                            sigma2: r[o + 1],
                            sigma_eta2: r[o + 2],
                            sigma_zeta2: r[o + 3],
                        }
                    })
                    .collect(),
            ),
        };
        let transform = match (log_min, log_max) {
            (Some(lo), Some(hi)) => Some(TransformMeta::new(lo, hi)?),
            _ => None,
        };
        Ok(Self {
            draws,
            n_iter: n_iter.unwrap_or(rows.len()),
            n_burn: n_burn.unwrap_or(0),
            seed: seed.unwrap_or(0),
            transform,
        })
    }
}

fn column_names(kind: ModelKind, p1: usize, p2: usize, q: usize) -> Vec<String> {
    fn block(prefix: &'static str, len: usize) -> impl Iterator<Item = String> {
        (0..len).map(move |j| format!("{prefix}_{j}"))
    }
    match kind {
        ModelKind::Gaussian => block("beta1", p1)
            .chain(block("u", q))
            .chain(["sigma2".into(), "sigma_u2".into()])
            .collect(),
        ModelKind::Binomial => block("beta2", p2)
            .chain(block("u", q))
            .chain(["sigma_u2".into()])
            .collect(),
        ModelKind::Multitype => block("beta1", p1)
            .chain(block("beta2", p2))
            .chain(block("eta", q))
            .chain(block("zeta", q))
            .chain([
                "tau1".into(),
                "sigma2".into(),
                "sigma_eta2".into(),
                "sigma_zeta2".into(),
            ])
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn multitype_chain() -> ModelChain {
        let state = |t: f64| MultitypeState {
            beta1: DVector::from_vec(vec![0.1 * t, -2.0]),
            beta2: DVector::from_vec(vec![1.0 / 3.0]),
            eta: DVector::from_vec(vec![t, 1e-300, -7.25]),
            zeta: DVector::from_vec(vec![0.5, 0.25, std::f64::consts::PI]),
            tau1: 0.9,
            sigma2: 0.01,
            sigma_eta2: 2.0,
            sigma_zeta2: 3.0,
        };
        let mut chain = ModelChain::new(
            ChainDraws::Multitype(vec![state(1.0), state(2.0)]),
            &McmcSettings {
                n_iter: 12,
                n_burn: 10,
                seed: 99,
                pg_truncation: 200,
            },
        );
        chain.transform = Some(TransformMeta::new(2.5, 12.75).unwrap());
        chain
    }

    #[test]
    fn header_names() {
        let names = multitype_chain().column_names();
        assert_eq!(names[0], "beta1_0");
        assert!(names.contains(&"eta_2".to_string()));
        assert_eq!(names.last().unwrap(), "sigma_zeta2");
        assert_eq!(names.len(), 2 + 1 + 3 + 3 + 4);
    }

    #[test]
    fn csv_round_trip() {
        let chain = multitype_chain();
        let mut buf = Vec::new();
        chain.write_csv(&mut buf).unwrap();
        let back = ModelChain::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, chain);

        let g = ModelChain::new(
            ChainDraws::Gaussian(vec![GaussianState::initial(2, 0)]),
            &McmcSettings {
                n_iter: 2,
                n_burn: 1,
                ..Default::default()
            },
        );
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        assert_eq!(ModelChain::read_csv(buf.as_slice()).unwrap(), g);

        let b = ModelChain::new(
            ChainDraws::Binomial(vec![BinomialState::initial(1, 2)]),
            &McmcSettings {
                n_iter: 2,
                n_burn: 1,
                ..Default::default()
            },
        );
        let mut buf = Vec::new();
        b.write_csv(&mut buf).unwrap();
        assert_eq!(ModelChain::read_csv(buf.as_slice()).unwrap(), b);
    }

    #[test]
    fn rejects_malformed() {
        assert!(ModelChain::read_csv("beta1_0\n1\n".as_bytes()).is_err());
        assert!(ModelChain::read_csv("# kind=other\n".as_bytes()).is_err());
        assert!(ModelChain::read_csv("# kind=binomial\nbeta2_0,sigma_u2\n1\n".as_bytes()).is_err());
    }
}
