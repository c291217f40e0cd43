use std::fmt::Write as _;
use std::io::Write;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, StandardNormal};

use crate::data_model::{ingest_reader, AreaSet, PopulationFrame, PoststratCell, Schema};
use crate::error::{Error, Result};
use crate::gibbs::SaeRng;
use crate::poststrat::cells_from_units;
use crate::spatial_basis::{adjacency_eigenbasis, DEFAULT_EIGEN_TOL};

/// Parameters of the desk-scale synthetic population.
///
/// Log income follows a linear model in sex and education plus
/// `income_area_sd · s_k`, shifted by `income_poverty_shift` for poor units.
/// Poverty is Bernoulli with logit
/// `β₂ᵀx + area_effect_sd · (ρ s_k + √(1−ρ²) t_k)`, where `s` and `t` are
/// independent unit-scale area fields in the span of the adjacency basis and
/// `ρ = cross_correlation`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_pop: usize,
    pub rows: usize,
    pub cols: usize,
    /// Log-scale spread of area sizes.
    pub area_size_sd: f64,
    pub sex_prevalence: f64,
    pub edu_prevalence: f64,
    pub income_intercept: f64,
    pub income_sex: f64,
    pub income_edu: f64,
    pub income_sd: f64,
    pub income_area_sd: f64,
    pub income_poverty_shift: f64,
    pub logit_intercept: f64,
    pub logit_sex: f64,
    pub logit_edu: f64,
    pub area_effect_sd: f64,
    pub cross_correlation: f64,
    pub weight_mean: f64,
    pub weight_sd: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_pop: 20_000,
            rows: 4,
            cols: 5,
            area_size_sd: 0.5,
            sex_prevalence: 0.5,
            edu_prevalence: 0.3,
            income_intercept: 10.5,
            income_sex: -0.15,
            income_edu: 0.4,
            income_sd: 0.8,
            income_area_sd: -0.15,
            income_poverty_shift: -0.3,
            logit_intercept: -1.4,
            logit_sex: 0.2,
            logit_edu: -0.8,
            area_effect_sd: 0.8,
            cross_correlation: 0.95,
            weight_mean: 20.0,
            weight_sd: 0.1,
            seed: 2024,
        }
    }
}

macro_rules! spec_fields {
    ($m:ident) => {
        $m!(
            n_pop,
            rows,
            cols,
            area_size_sd,
            sex_prevalence,
            edu_prevalence,
            income_intercept,
            income_sex,
            income_edu,
            income_sd,
            income_area_sd,
            income_poverty_shift,
            logit_intercept,
            logit_sex,
            logit_edu,
            area_effect_sd,
            cross_correlation,
            weight_mean,
            weight_sd,
            seed
        )
    };
}

impl SyntheticSpec {
    pub fn r(&self) -> usize {
        self.rows * self.cols
    }

    pub fn set(&mut self, field: &str, value: &str) -> Result<()> {
        macro_rules! assign {
            ($($f:ident),*) => {
                match field {
                    $(stringify!($f) => {
                        self.$f = value.trim().parse().map_err(|_| {
                            Error::Config(format!("invalid value {value:?} for synth.{field}"))
                        })?;
                    })*
                    other => return Err(Error::Config(format!("unknown key \"synth.{other}\""))),
                }
            };
        }
        spec_fields!(assign);
        Ok(())
    }

    /// `(field, value)` pairs in declaration order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        macro_rules! list {
            ($($f:ident),*) => { vec![$((stringify!($f), format!("{:?}", self.$f))),*] };
        }
        spec_fields!(list)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 || self.rows * self.cols < 2 {
            return Err(Error::Config("synth grid needs at least two areas".into()));
        }
        if self.n_pop < self.r() {
            return Err(Error::Config(format!(
                "synth.n_pop ({}) must be at least the number of areas ({})",
                self.n_pop,
                self.r()
            )));
        }
        for (name, p) in [
            ("sex_prevalence", self.sex_prevalence),
            ("edu_prevalence", self.edu_prevalence),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("synth.{name} must lie in [0, 1]")));
            }
        }
        if !(-1.0..=1.0).contains(&self.cross_correlation) {
            return Err(Error::Config(
                "synth.cross_correlation must lie in [-1, 1]".into(),
            ));
        }
        if !(self.income_sd > 0.0 && self.weight_mean > 0.0 && self.weight_sd >= 0.0) {
            return Err(Error::Config(
                "synth spreads and weights must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// A generated population in both raw (microdata text) and processed form.
#[derive(Debug, Clone)]
pub struct SyntheticPopulation {
    pub frame: PopulationFrame,
    pub areas: AreaSet,
    pub cells: Vec<PoststratCell>,
    /// Microdata in the default ingestion schema.
    pub microdata: String,
}

impl SyntheticPopulation {
    /// Writes `population.csv`, `adjacency.txt`, `cells.csv` and `truths.csv`.
    pub fn write_to(&self, dir: &std::path::Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("population.csv"), &self.microdata)?;
        std::fs::write(dir.join("adjacency.txt"), self.areas.to_edge_list())?;
        let mut cells = std::fs::File::create(dir.join("cells.csv"))?;
        crate::poststrat::write_cells(&self.cells, &self.areas, &mut cells)?;
        cells.flush()?;
        let truths = compute_truths(&self.frame, &self.areas)?;
        truths.write_csv(&self.areas, std::fs::File::create(dir.join("truths.csv"))?)?;
        Ok(())
    }
}

fn unit_field(basis: &nalgebra::DMatrix<f64>, rng: &mut SaeRng) -> DVector<f64> {
    let coef = DVector::from_fn(basis.ncols(), |_, _| StandardNormal.sample(rng));
    let field = basis * coef;
    let rms = (field.norm_squared() / field.len() as f64).sqrt();
    field / rms
}

/// Largest-remainder allocation of `total` over `shares`, at least one each.
fn allocate(total: usize, shares: &[f64]) -> Vec<usize> {
    let k = shares.len();
    let free = (total - k) as f64;
    let sum: f64 = shares.iter().sum();
    let exact: Vec<f64> = shares.iter().map(|s| free * s / sum).collect();
    let mut sizes: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut left = total - k - sizes.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in &order {
        if left == 0 {
            break;
        }
        sizes[i] += 1;
        left -= 1;
    }
    sizes.iter().map(|s| s + 1).collect()
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Generates areas on a grid, unit microdata, and the population cells.
pub fn synthesize_population(spec: &SyntheticSpec, seed: u64) -> Result<SyntheticPopulation> {
    spec.validate()?;
    let mut rng = SaeRng::seed_from_u64(seed);
    let areas = AreaSet::grid(spec.rows, spec.cols)?;
    let basis = adjacency_eigenbasis(&areas.adjacency, DEFAULT_EIGEN_TOL)?;
    let shared = unit_field(&basis.b, &mut rng);
    let own = unit_field(&basis.b, &mut rng);
    let rho = spec.cross_correlation;
    let logit_effect = (&shared * rho + &own * (1.0 - rho * rho).sqrt()) * spec.area_effect_sd;
    let income_effect = &shared * spec.income_area_sd;

    let r = areas.r();
    let shares: Vec<f64> = (0..r)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            (spec.area_size_sd * z).exp()
        })
        .collect();
    let sizes = allocate(spec.n_pop, &shares);

    let mut text = String::from("PINCP,POVPIP,SEX,SCHL,PWGTP,PUMA\n");
    for (k, &size) in sizes.iter().enumerate() {
        for _ in 0..size {
            let female = rng.random::<f64>() < spec.sex_prevalence;
            let educated = rng.random::<f64>() < spec.edu_prevalence;
            let (xs, xe) = (f64::from(u8::from(female)), f64::from(u8::from(educated)));
            let eta =
                spec.logit_intercept + spec.logit_sex * xs + spec.logit_edu * xe + logit_effect[k];
            let poor = rng.random::<f64>() < logistic(eta);
            let e: f64 = StandardNormal.sample(&mut rng);
            let log_income = spec.income_intercept
                + spec.income_sex * xs
                + spec.income_edu * xe
                + income_effect[k]
                + if poor { spec.income_poverty_shift } else { 0.0 }
                + spec.income_sd * e;
            let povpip = if poor {
                rng.random_range(1..100)
            } else {
                rng.random_range(100..=500)
            };
            let schl = if educated {
                rng.random_range(21..=24)
            } else {
                rng.random_range(1..=20)
            };
            let zw: f64 = StandardNormal.sample(&mut rng);
            let pwgtp = (spec.weight_mean
                * (spec.weight_sd * zw - 0.5 * spec.weight_sd.powi(2)).exp())
            .round()
            .max(1.0);
            let _ = writeln!(
                text,
                "{},{},{},{},{},{}",
                log_income.exp(),
                povpip,
                if female { 2 } else { 1 },
                schl,
                pwgtp,
                areas.labels[k]
            );
        }
    }

    let mut ingested = ingest_reader(text.as_bytes(), &Schema::default())?;
    ingested.align_to(&areas)?;
    let cells = cells_from_units(&ingested.frame.units);
    Ok(SyntheticPopulation {
        frame: ingested.frame,
        areas,
        cells,
        microdata: text,
    })
}

/// Finite-population area means of the transformed income and of the poverty rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AreaTruths {
    pub gaussian: Vec<f64>,
    pub rate: Vec<f64>,
}

impl AreaTruths {
    pub fn write_csv<W: Write>(&self, areas: &AreaSet, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["area", "gaussian", "bernoulli"])?;
        for k in 0..self.gaussian.len() {
            w.write_record([
                areas.labels[k].clone(),
                self.gaussian[k].to_string(),
                self.rate[k].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(input: R, areas: &AreaSet) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(input);
        let mut gaussian = vec![f64::NAN; areas.r()];
        let mut rate = vec![f64::NAN; areas.r()];
        for rec in rdr.records() {
            let rec = rec?;
            let k = areas.index_of(&rec[0])?;
            let num = |i: usize| {
                rec[i]
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("bad truth value {:?}", &rec[i])))
            };
            gaussian[k] = num(1)?;
            rate[k] = num(2)?;
        }
        Ok(Self { gaussian, rate })
    }
}

/// Unweighted population means per area. Every area must hold a unit.
pub fn compute_truths(population: &PopulationFrame, areas: &AreaSet) -> Result<AreaTruths> {
    let r = areas.r();
    let mut count = vec![0usize; r];
    let mut z1 = vec![0.0; r];
    let mut z2 = vec![0.0; r];
    for u in &population.units {
        if u.area_id >= r {
            return Err(Error::UnknownArea(u.area_id.to_string()));
        }
        count[u.area_id] += 1;
        z1[u.area_id] += u.z1;
        z2[u.area_id] += f64::from(u.z2) / f64::from(u.trials);
    }
    if let Some(k) = count.iter().position(|&c| c == 0) {
        return Err(Error::ZeroCount(areas.labels[k].clone()));
    }
    Ok(AreaTruths {
        gaussian: z1.iter().zip(&count).map(|(s, &c)| s / c as f64).collect(),
        rate: z2.iter().zip(&count).map(|(s, &c)| s / c as f64).collect(),
    })
}
