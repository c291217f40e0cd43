//! End-to-end orchestration: configuration, synthetic populations, the
//! repeated-sampling simulation, and single-dataset fit / poststratify / score.

mod config;
mod synth;

pub use config::RunConfig;
pub use synth::{
    compute_truths, synthesize_population, AreaTruths, SyntheticPopulation, SyntheticSpec,
};

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data_model::{
    ingest_population, AreaSet, PopulationFrame, PoststratCell, Schema, UnitRecord,
};
use crate::design::{
    ht_area_estimates, ht_interval, inclusion_probabilities, size_measure, systematic_pps_sample,
    systematic_pps_sample_shuffled, DesignSample, Estimand,
};
use crate::error::{Error, Result};
use crate::gibbs::{
    fit_binomial_univariate, fit_gaussian_univariate, fit_multitype, FitData, ModelChain,
    ModelKind, SaeRng,
};
use crate::metrics::{
    aggregate_report, AreaResult, Method, MethodEstimates, ReplicateResult, SimulationReport,
};
use crate::poststrat::{
    binomial_poststrat, gaussian_poststrat, read_cells, summarize, write_estimates, AreaEstimate,
};
use crate::spatial_basis::{adjacency_eigenbasis, BasisMatrix};

/// Population, areas, cells, basis and truths shared by every replicate.
#[derive(Debug, Clone)]
pub struct SimulationInputs {
    pub frame: PopulationFrame,
    pub areas: AreaSet,
    pub cells: Vec<PoststratCell>,
    pub basis: BasisMatrix,
    pub truths: AreaTruths,
}

fn schema(cfg: &RunConfig) -> Schema {
    Schema {
        education_cutpoints: cfg.education_cutpoints.clone(),
        ..Schema::default()
    }
}

fn require<'a>(path: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    path.as_deref()
        .ok_or_else(|| Error::Config(format!("{key} is required")))
}

/// Reads population, adjacency and cells from the configured paths, or
/// synthesizes them when no population file is given.
pub fn load_inputs(cfg: &RunConfig) -> Result<SimulationInputs> {
    let (frame, areas, cells) = match &cfg.population {
        Some(path) => {
            let areas = AreaSet::from_edge_list(require(&cfg.adjacency, "paths.adjacency")?)?;
            let mut ingested = ingest_population(path, &schema(cfg))?;
            ingested.align_to(&areas)?;
            let cells = match &cfg.cells {
                Some(c) => read_cells(c, &areas)?,
                None => crate::poststrat::cells_from_units(&ingested.frame.units),
            };
            (ingested.frame, areas, cells)
        }
        None => {
            let pop = synthesize_population(&cfg.synth, cfg.synth.seed)?;
            (pop.frame, pop.areas, pop.cells)
        }
    };
    let basis = adjacency_eigenbasis(&areas.adjacency, cfg.eigen_tol)?;
    let truths = compute_truths(&frame, &areas)?;
    Ok(SimulationInputs {
        frame,
        areas,
        cells,
        basis,
        truths,
    })
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Stable per-replicate seed derived from the master seed.
pub fn replicate_seed(master: u64, replicate: usize) -> u64 {
    splitmix64(splitmix64(master) ^ splitmix64(replicate as u64 ^ 0x5851_F42D_4C95_7F2D))
}

#[derive(Debug, Clone, Copy)]
enum Stream {
    Sample = 1,
    GaussianChain = 2,
    BinomialChain = 3,
    MultitypeChain = 4,
    GaussianPoststrat = 5,
    BinomialPoststrat = 6,
    MultitypeGaussianPoststrat = 7,
    MultitypeBinomialPoststrat = 8,
}

fn stream_seed(replicate_seed: u64, stream: Stream) -> u64 {
    splitmix64(replicate_seed ^ splitmix64(stream as u64))
}

/// One replicate's scored estimates plus any fitted chains.
#[derive(Debug, Clone)]
pub struct ReplicateOutput {
    pub result: ReplicateResult,
    pub chains: Vec<(String, ModelChain)>,
}

fn estimates_to_results(estimates: &[AreaEstimate], r: usize) -> Vec<Option<AreaResult>> {
    let mut out = vec![None; r];
    for e in estimates {
        out[e.area_id] = Some(AreaResult {
            estimate: e.mean,
            variance: Some(e.variance),
            interval: Some((e.ci_lower, e.ci_upper)),
        });
    }
    out
}

fn summarize_all(draws: &[crate::poststrat::AreaDraws], alpha: f64) -> Result<Vec<AreaEstimate>> {
    draws.iter().map(|d| summarize(d, alpha)).collect()
}

fn ht_results(
    sample: &[UnitRecord],
    estimand: Estimand,
    r: usize,
    alpha: f64,
) -> Vec<Option<AreaResult>> {
    let z = Normal::new(0.0, 1.0)
        .expect("standard normal")
        .inverse_cdf(1.0 - alpha / 2.0);
    let points = ht_area_estimates(sample, estimand, r);
    let intervals = ht_interval(sample, estimand, r, alpha);
    points
        .into_iter()
        .zip(intervals)
        .map(|(p, iv)| {
            p.map(|estimate| AreaResult {
                estimate,
                variance: iv.map(|(l, u)| ((u - l) / (2.0 * z)).powi(2)),
                interval: iv,
            })
        })
        .collect()
}

/// Draws one sample, fits the requested methods and returns per-area estimates.
pub fn run_replicate(
    inputs: &SimulationInputs,
    pi: &[f64],
    cfg: &RunConfig,
    replicate: usize,
) -> Result<ReplicateOutput> {
    let seed = replicate_seed(cfg.mcmc.seed, replicate);
    let r = inputs.areas.r();
    let mut rng = SaeRng::seed_from_u64(stream_seed(seed, Stream::Sample));
    let indices = if cfg.shuffle_frame {
        systematic_pps_sample_shuffled(pi, &mut rng)?
    } else {
        systematic_pps_sample(pi, &mut rng)?
    };
    let design = DesignSample::from_probabilities(indices, pi)?;
    let sample: Vec<UnitRecord> = design
        .indices
        .iter()
        .zip(&design.weights)
        .map(|(&i, &w)| UnitRecord {
            weight: w,
            ..inputs.frame.units[i].clone()
        })
        .collect();

    let mut estimates = Vec::new();
    let mut chains = Vec::new();
    let settings = |stream| crate::gibbs::McmcSettings {
        seed: stream_seed(seed, stream),
        ..cfg.mcmc
    };
    let post_rng = |stream| SaeRng::seed_from_u64(stream_seed(seed, stream));
    let needs_fit = cfg.methods.iter().any(|m| *m != Method::Ht);
    let data = if needs_fit {
        Some(FitData::with_scaled_weights(
            &sample,
            &inputs.basis,
            &design.scaled_weights,
        )?)
    } else {
        None
    };

    for &method in &cfg.methods {
        let (gauss, binom) = match method {
            Method::Ht => (
                ht_results(&sample, Estimand::GaussianMean, r, cfg.alpha),
                ht_results(&sample, Estimand::BinomialRate, r, cfg.alpha),
            ),
            Method::Univariate => {
                let data = data.as_ref().expect("fit data");
                let g_chain =
                    fit_gaussian_univariate(data, &cfg.priors, &settings(Stream::GaussianChain))?;
                let b_chain =
                    fit_binomial_univariate(data, &cfg.priors, &settings(Stream::BinomialChain))?;
                let g = gaussian_poststrat(
                    &g_chain,
                    &inputs.basis,
                    &inputs.cells,
                    &mut post_rng(Stream::GaussianPoststrat),
                )?;
                let b = binomial_poststrat(
                    &b_chain,
                    &inputs.basis,
                    &inputs.cells,
                    &mut post_rng(Stream::BinomialPoststrat),
                )?;
                if cfg.save_chains {
                    chains.push(("univariate_gaussian".to_string(), g_chain));
                    chains.push(("univariate_binomial".to_string(), b_chain));
                }
                (
                    estimates_to_results(&summarize_all(&g, cfg.alpha)?, r),
                    estimates_to_results(&summarize_all(&b, cfg.alpha)?, r),
                )
            }
            Method::Multitype => {
                let data = data.as_ref().expect("fit data");
                let chain = fit_multitype(data, &cfg.priors, &settings(Stream::MultitypeChain))?;
                let g = gaussian_poststrat(
                    &chain,
                    &inputs.basis,
                    &inputs.cells,
                    &mut post_rng(Stream::MultitypeGaussianPoststrat),
                )?;
                let b = binomial_poststrat(
                    &chain,
                    &inputs.basis,
                    &inputs.cells,
                    &mut post_rng(Stream::MultitypeBinomialPoststrat),
                )?;
                if cfg.save_chains {
                    chains.push(("multitype".to_string(), chain));
                }
                (
                    estimates_to_results(&summarize_all(&g, cfg.alpha)?, r),
                    estimates_to_results(&summarize_all(&b, cfg.alpha)?, r),
                )
            }
        };
        estimates.push(MethodEstimates {
            method,
            response: Estimand::GaussianMean,
            areas: gauss,
        });
        estimates.push(MethodEstimates {
            method,
            response: Estimand::BinomialRate,
            areas: binom,
        });
    }

    Ok(ReplicateOutput {
        result: ReplicateResult {
            replicate,
            truth_gaussian: inputs.truths.gaussian.clone(),
            truth_rate: inputs.truths.rate.clone(),
            estimates,
        },
        chains,
    })
}

/// Inclusion probabilities of the informative design over the whole frame.
pub fn design_probabilities(frame: &PopulationFrame, cfg: &RunConfig) -> Result<Vec<f64>> {
    let pwgtp: Vec<f64> = frame.units.iter().map(|u| u.weight).collect();
    let poor: Vec<u32> = frame.units.iter().map(|u| u.z2).collect();
    let m = size_measure(&pwgtp, &poor, cfg.poverty_multiplier)?;
    inclusion_probabilities(&m, cfg.sample_size)
}

/// Runs every replicate (in parallel when threads allow) and aggregates.
/// Results do not depend on the thread count.
pub fn simulate(
    inputs: &SimulationInputs,
    cfg: &RunConfig,
) -> Result<(SimulationReport, Vec<ReplicateOutput>)> {
    cfg.validate()?;
    let pi = design_probabilities(&inputs.frame, cfg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let outputs: Vec<Result<ReplicateOutput>> = pool.install(|| {
        (0..cfg.replicates)
            .into_par_iter()
            .map(|rep| {
                run_replicate(inputs, &pi, cfg, rep).map_err(|e| Error::Replicate {
                    replicate: rep,
                    source: Box::new(e),
                })
            })
            .collect()
    });
    let outputs: Vec<ReplicateOutput> = outputs.into_iter().collect::<Result<_>>()?;
    let results: Vec<ReplicateResult> = outputs.iter().map(|o| o.result.clone()).collect();
    let report = aggregate_report(&results, cfg.alpha)?;
    Ok((report, outputs))
}

/// Writes `report.csv`, `areas_<method>_<response>.csv`, the effective
/// config, and (if requested) `chains/`.
pub fn write_outputs(
    dir: &Path,
    report: &SimulationReport,
    outputs: &[ReplicateOutput],
    areas: &AreaSet,
    cfg: &RunConfig,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    report.write_csv(std::fs::File::create(dir.join("report.csv"))?)?;
    for row in &report.rows {
        let name = format!("areas_{}_{}.csv", row.method, row.response.name());
        report.write_area_csv(
            row.method,
            row.response,
            &areas.labels,
            std::fs::File::create(dir.join(name))?,
        )?;
    }
    std::fs::write(dir.join("config.toml"), cfg.to_toml())?;
    if outputs.iter().any(|o| !o.chains.is_empty()) {
        let chains = dir.join("chains");
        std::fs::create_dir_all(&chains)?;
        for o in outputs {
            for (name, chain) in &o.chains {
                chain.save(&chains.join(format!("rep{:04}_{name}.csv", o.result.replicate)))?;
            }
        }
    }
    Ok(())
}

/// Loads inputs, simulates, and writes all outputs under `cfg.out`.
pub fn run_simulation(cfg: &RunConfig) -> Result<SimulationReport> {
    cfg.validate()?;
    let inputs = load_inputs(cfg)?;
    let (report, outputs) = simulate(&inputs, cfg)?;
    write_outputs(&cfg.out, &report, &outputs, &inputs.areas, cfg)?;
    Ok(report)
}

/// Writes a synthetic population (microdata, adjacency, cells, truths) to `cfg.out`.
pub fn run_synth(cfg: &RunConfig) -> Result<SyntheticPopulation> {
    cfg.synth.validate()?;
    let pop = synthesize_population(&cfg.synth, cfg.synth.seed)?;
    pop.write_to(&cfg.out)?;
    Ok(pop)
}

/// Fits one model to a sample file whose weight column holds design weights.
/// Writes `<out>/chain_<kind>.csv` and returns the chain path.
pub fn run_fit(cfg: &RunConfig) -> Result<PathBuf> {
    cfg.mcmc.validate()?;
    cfg.priors.validate()?;
    let areas = AreaSet::from_edge_list(require(&cfg.adjacency, "paths.adjacency")?)?;
    let mut ingested =
        ingest_population(require(&cfg.population, "paths.population")?, &schema(cfg))?;
    ingested.align_to(&areas)?;
    let basis = adjacency_eigenbasis(&areas.adjacency, cfg.eigen_tol)?;
    let data = FitData::from_units(&ingested.frame.units, &basis)?;
    let mut chain = match cfg.fit_model {
        ModelKind::Gaussian => fit_gaussian_univariate(&data, &cfg.priors, &cfg.mcmc)?,
        ModelKind::Binomial => fit_binomial_univariate(&data, &cfg.priors, &cfg.mcmc)?,
        ModelKind::Multitype => fit_multitype(&data, &cfg.priors, &cfg.mcmc)?,
    };
    chain.transform = Some(ingested.frame.transform_meta);
    std::fs::create_dir_all(&cfg.out)?;
    let path = cfg.out.join(format!("chain_{}.csv", cfg.fit_model));
    chain.save(&path)?;
    Ok(path)
}

/// Poststratifies a saved chain over a cells file. Writes one
/// `estimates_<response>.csv` per response the chain supports.
pub fn run_poststratify(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let areas = AreaSet::from_edge_list(require(&cfg.adjacency, "paths.adjacency")?)?;
    let chain = ModelChain::load(require(&cfg.chain, "paths.chain")?)?;
    let cells = read_cells(require(&cfg.cells, "paths.cells")?, &areas)?;
    let basis = adjacency_eigenbasis(&areas.adjacency, cfg.eigen_tol)?;
    let seed = splitmix64(cfg.mcmc.seed ^ 0xA076_1D64_78BD_642F);
    let mut rng = SaeRng::seed_from_u64(seed);
    std::fs::create_dir_all(&cfg.out)?;
    let mut written = Vec::new();
    let kind = chain.kind();
    if kind != ModelKind::Binomial {
        let draws = gaussian_poststrat(&chain, &basis, &cells, &mut rng)?;
        let path = cfg.out.join("estimates_gaussian.csv");
        write_estimates(
            &summarize_all(&draws, cfg.alpha)?,
            "gaussian",
            &areas,
            std::fs::File::create(&path)?,
        )?;
        written.push(path);
    }
    if kind != ModelKind::Gaussian {
        let draws = binomial_poststrat(&chain, &basis, &cells, &mut rng)?;
        let path = cfg.out.join("estimates_bernoulli.csv");
        write_estimates(
            &summarize_all(&draws, cfg.alpha)?,
            "bernoulli",
            &areas,
            std::fs::File::create(&path)?,
        )?;
        written.push(path);
    }
    Ok(written)
}

/// Reads an estimates table (`area_id,estimand,mean,variance,lower,upper`).
pub fn read_estimates(path: &Path, areas: &AreaSet) -> Result<(Estimand, Vec<Option<AreaResult>>)> {
    let bad = |message: String| Error::Parse {
        path: path.to_path_buf(),
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(std::fs::File::open(path)?);
    let mut estimand = None;
    let mut out = vec![None; areas.r()];
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() < 6 {
            return Err(bad(format!("expected 6 fields, got {}", rec.len())));
        }
        let e = Estimand::parse(&rec[1])
            .ok_or_else(|| bad(format!("unknown estimand {:?}", &rec[1])))?;
        if *estimand.get_or_insert(e) != e {
            return Err(bad("mixed estimands in one file".into()));
        }
        let num = |i: usize| {
            rec[i]
                .parse::<f64>()
                .map_err(|_| bad(format!("bad number {:?}", &rec[i])))
        };
        out[areas.index_of(&rec[0])?] = Some(AreaResult {
            estimate: num(2)?,
            variance: Some(num(3)?),
            interval: Some((num(4)?, num(5)?)),
        });
    }
    Ok((estimand.ok_or_else(|| bad("no estimates".into()))?, out))
}

/// Scores estimate files of one method against a truths file
/// (`area,gaussian,bernoulli`) and writes `<out>/report.csv`.
pub fn run_metrics(
    cfg: &RunConfig,
    estimate_files: &[PathBuf],
    truths: &Path,
    method: Method,
) -> Result<SimulationReport> {
    let areas = AreaSet::from_edge_list(require(&cfg.adjacency, "paths.adjacency")?)?;
    let truths = AreaTruths::read_csv(std::fs::File::open(truths)?, &areas)?;
    let mut estimates = Vec::new();
    for f in estimate_files {
        let (response, results) = read_estimates(f, &areas)?;
        estimates.push(MethodEstimates {
            method,
            response,
            areas: results,
        });
    }
    let result = ReplicateResult {
        replicate: 0,
        truth_gaussian: truths.gaussian,
        truth_rate: truths.rate,
        estimates,
    };
    let report = aggregate_report(&[result], cfg.alpha)?;
    std::fs::create_dir_all(&cfg.out)?;
    let mut f = std::fs::File::create(cfg.out.join("report.csv"))?;
    report.write_csv(&mut f)?;
    f.flush()?;
    Ok(report)
}
