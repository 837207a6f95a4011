//! Synthetic auction datasets.
//!
//! A run draws its distribution parameters, then advertisers (features and
//! tCPA), hierarchically clustered query features, retrieved candidates,
//! values, user costs, slot click-through rates and reserves.

pub mod gaussian;
pub mod io;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use gaussian::{conditional_gaussian, gen_covariance, gen_query_features, is_psd, GaussianSampler, GaussianSpec};

use crate::hierarchy::{build_family_with, HierarchyError, LaminarFamily, LeafAssignment};
use crate::rng::{Purpose, StreamSeed};

#[derive(Debug, Error, PartialEq)]
pub enum DatagenError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("conditioning block is singular (condition number {condition:e})")]
    SingularBlock { condition: f64 },
    #[error("covariance is not positive semi-definite")]
    NotPsd,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
}

/// Where the log-value noise is drawn.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// One draw per query shared by all its candidates.
    #[default]
    PerQuery,
    PerCandidate,
}

/// Ranges from which each run's distribution parameters are drawn.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub feature_dim: usize,
    pub layer_dims: Vec<usize>,
    /// Diagonal entries of `D` are uniform in this range divided by `feature_dim`.
    pub diag_scale: [f64; 2],
    pub noise_level: [f64; 2],
    /// Variance of each mean component.
    pub mean_variance: f64,
    pub value_noise_sigma: [f64; 2],
    pub pareto_alpha: [f64; 2],
    pub pareto_xmin: f64,
    pub cost_mu: [f64; 2],
    pub cost_sigma: [f64; 2],
    /// Both decay endpoints are drawn from this range and sorted.
    pub decay: [f64; 2],
    pub reserve_gamma: f64,
    pub reserve_sigma: f64,
    pub noise_mode: NoiseMode,
    pub leaf_assignment: LeafAssignment,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            feature_dim: 8,
            layer_dims: vec![2, 2, 2],
            diag_scale: [0.5, 1.5],
            noise_level: [0.0, 0.3],
            mean_variance: 0.1,
            value_noise_sigma: [0.2, 0.6],
            pareto_alpha: [2.0, 3.0],
            pareto_xmin: 1.0,
            cost_mu: [-2.5, -1.5],
            cost_sigma: [0.3, 0.8],
            decay: [0.3, 0.7],
            reserve_gamma: 0.5,
            reserve_sigma: 0.5,
            noise_mode: NoiseMode::PerQuery,
            leaf_assignment: LeafAssignment::Uniform,
        }
    }
}

/// Everything needed to generate one dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetConfig {
    pub advertisers: usize,
    pub queries: usize,
    pub slots: usize,
    pub retrieval: usize,
    pub retrieval_threshold: f64,
    pub branching: Vec<usize>,
    pub reserves: bool,
    pub data: DataConfig,
}

/// Distribution parameters drawn for a single run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunParameters {
    pub feature_dim: usize,
    pub layer_dims: Vec<usize>,
    pub query_spec: GaussianSpec,
    pub bidder_spec: GaussianSpec,
    pub value_noise_sigma: f64,
    pub pareto_alpha: f64,
    pub pareto_xmin: f64,
    pub cost_mu: f64,
    pub cost_sigma: f64,
    pub decay_low: f64,
    pub decay_high: f64,
    pub reserve_gamma: f64,
    pub reserve_sigma: f64,
    pub retrieval: usize,
    pub retrieval_threshold: f64,
    pub noise_mode: NoiseMode,
}

impl RunParameters {
    pub fn check(&self) -> Result<(), DatagenError> {
        let bad = |s: &str| Err(DatagenError::InvalidParameter(s.to_string()));
        if !(self.pareto_alpha > 1.0) {
            return bad("pareto alpha must exceed 1");
        }
        if !(self.pareto_xmin > 0.0) {
            return bad("pareto x_min must be positive");
        }
        if !(0.0 <= self.decay_low && self.decay_low <= self.decay_high && self.decay_high <= 1.0) {
            return bad("decay range must satisfy 0 <= low <= high <= 1");
        }
        if self.cost_sigma < 0.0 || self.value_noise_sigma < 0.0 || self.reserve_sigma < 0.0 {
            return bad("standard deviations must be non-negative");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Advertiser {
    pub id: u32,
    pub feature: Vec<f64>,
    pub roi_target: f64,
    pub tcpa: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Candidate {
    pub advertiser: u32,
    pub value: f64,
    pub cost: f64,
    pub reserve: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuctionInstance {
    pub query_id: u32,
    pub leaf_id: u32,
    pub candidates: Vec<Candidate>,
    /// Slot click-through rates; `slot_ctrs[0] == 1`, non-increasing.
    pub slot_ctrs: Vec<f64>,
}

impl AuctionInstance {
    pub fn num_slots(&self) -> usize {
        self.slot_ctrs.len()
    }
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub advertisers: Vec<Advertiser>,
    pub instances: Vec<AuctionInstance>,
    pub family: LaminarFamily,
    pub params: RunParameters,
}

impl Dataset {
    /// Hex SHA-256 over the bit patterns of everything the auctions see.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for a in &self.advertisers {
            h.update(a.id.to_le_bytes());
            h.update(a.tcpa.to_bits().to_le_bytes());
        }
        for inst in &self.instances {
            h.update(inst.query_id.to_le_bytes());
            h.update(inst.leaf_id.to_le_bytes());
            for b in &inst.slot_ctrs {
                h.update(b.to_bits().to_le_bytes());
            }
            for c in &inst.candidates {
                h.update(c.advertiser.to_le_bytes());
                for x in [c.value, c.cost, c.reserve] {
                    h.update(x.to_bits().to_le_bytes());
                }
            }
        }
        hex::encode(h.finalize())
    }
}

fn uniform_in<R: Rng + ?Sized>(rng: &mut R, range: [f64; 2]) -> f64 {
    range[0] + (range[1] - range[0]) * rng.random::<f64>()
}

fn gen_spec(dim: usize, cfg: &DataConfig, seed: StreamSeed) -> GaussianSpec {
    let mut rng = seed.rng();
    let mean_sd = cfg.mean_variance.max(0.0).sqrt();
    let mean = DVector::from_iterator(dim, (0..dim).map(|_| mean_sd * rng.sample::<f64, _>(StandardNormal)));
    let noise = uniform_in(&mut rng, cfg.noise_level);
    let scale = [cfg.diag_scale[0] / dim as f64, cfg.diag_scale[1] / dim as f64];
    let cov: DMatrix<f64> = gen_covariance(dim, (scale[0], scale[1]), noise, &mut rng).covariance;
    GaussianSpec { mean, covariance: cov }
}

/// Draws the per-run distribution parameters.
pub fn draw_run_parameters(config: &DatasetConfig, run_seed: StreamSeed) -> Result<RunParameters, DatagenError> {
    let cfg = &config.data;
    if cfg.feature_dim == 0 {
        return Err(DatagenError::InvalidParameter("feature_dim must be positive".into()));
    }
    let mut rng = run_seed.stream(Purpose::RunParameters, 0);
    let value_noise_sigma = uniform_in(&mut rng, cfg.value_noise_sigma);
    let pareto_alpha = uniform_in(&mut rng, cfg.pareto_alpha);
    let cost_mu = uniform_in(&mut rng, cfg.cost_mu);
    let cost_sigma = uniform_in(&mut rng, cfg.cost_sigma);
    let (a, b) = (uniform_in(&mut rng, cfg.decay), uniform_in(&mut rng, cfg.decay));
    let params = RunParameters {
        feature_dim: cfg.feature_dim,
        layer_dims: cfg.layer_dims.clone(),
        query_spec: gen_spec(cfg.feature_dim, cfg, run_seed.derive(Purpose::QuerySpec, 0)),
        bidder_spec: gen_spec(cfg.feature_dim, cfg, run_seed.derive(Purpose::BidderSpec, 0)),
        value_noise_sigma,
        pareto_alpha,
        pareto_xmin: cfg.pareto_xmin,
        cost_mu,
        cost_sigma,
        decay_low: a.min(b),
        decay_high: a.max(b),
        reserve_gamma: cfg.reserve_gamma,
        reserve_sigma: cfg.reserve_sigma,
        retrieval: config.retrieval,
        retrieval_threshold: config.retrieval_threshold,
        noise_mode: cfg.noise_mode,
    };
    params.check()?;
    Ok(params)
}

/// Inverse CDF of the Pareto density `(α−1)/x_min · (x/x_min)^{−α}`.
pub fn pareto_inverse_cdf(u: f64, alpha: f64, x_min: f64) -> f64 {
    x_min * (1.0 - u).powf(-1.0 / (alpha - 1.0))
}

pub fn gen_bidders(
    count: usize,
    spec: &GaussianSpec,
    pareto: (f64, f64),
    seed: StreamSeed,
) -> Result<Vec<Advertiser>, DatagenError> {
    let (alpha, x_min) = pareto;
    if count == 0 || !(alpha > 1.0) || !(x_min > 0.0) {
        return Err(DatagenError::InvalidParameter("need N >= 1, alpha > 1, x_min > 0".into()));
    }
    let sampler = spec.sampler()?;
    Ok((0..count)
        .map(|i| {
            let feature = sampler.sample(&mut seed.stream(Purpose::BidderFeature, i as u64));
            let u: f64 = seed.stream(Purpose::BidderTcpa, i as u64).random();
            let tcpa = pareto_inverse_cdf(u, alpha, x_min);
            Advertiser { id: i as u32, feature: feature.iter().copied().collect(), roi_target: 1.0 / tcpa, tcpa }
        })
        .collect())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `exp(⟨f_query, f_bidder⟩ + ε)`.
pub fn value_of(f_query: &[f64], f_bidder: &[f64], epsilon: f64) -> Result<f64, DatagenError> {
    if f_query.len() != f_bidder.len() {
        return Err(DatagenError::DimensionMismatch { expected: f_query.len(), found: f_bidder.len() });
    }
    Ok((dot(f_query, f_bidder) + epsilon).exp())
}

/// Top `n_retrieval` bidders by correlation score among those at or above
/// `threshold`, returned as `(advertiser id, score)`; ties go to the lower id.
pub fn retrieve_candidates(f_query: &[f64], bidders: &[Advertiser], n_retrieval: usize, threshold: f64) -> Vec<(u32, f64)> {
    let mut scored: Vec<(u32, f64)> = bidders
        .iter()
        .map(|b| (b.id, dot(f_query, &b.feature) + 0.0)) // folds -0 into +0 so ties compare equal
        .filter(|&(_, s)| s >= threshold)
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(n_retrieval);
    scored
}

/// Per-instance exogenous draws.
#[derive(Clone, Debug, PartialEq)]
pub struct InstanceExtras {
    pub costs: Vec<f64>,
    pub slot_ctrs: Vec<f64>,
    pub reserves: Vec<f64>,
}

/// Costs, slot CTRs and reserves for one query. `scaled_values` are the
/// candidates' `v / τ = v · tcpa`; reserves are zero when `reserves` is false. Each kind
/// of draw uses its own stream so toggling reserves changes nothing else.
pub fn sample_instance_extras(
    scaled_values: &[f64],
    slots: usize,
    params: &RunParameters,
    reserves: bool,
    seed: StreamSeed,
    query: u64,
) -> InstanceExtras {
    let n = scaled_values.len();
    let mut rng = seed.stream(Purpose::Cost, query);
    let costs = (0..n)
        .map(|_| (params.cost_mu + params.cost_sigma * rng.sample::<f64, _>(StandardNormal)).exp())
        .collect();

    let mut rng = seed.stream(Purpose::SlotCtr, query);
    let mut slot_ctrs = Vec::with_capacity(slots);
    let mut beta = 1.0;
    for k in 0..slots {
        if k > 0 {
            beta *= params.decay_low + (params.decay_high - params.decay_low) * rng.random::<f64>();
        }
        slot_ctrs.push(beta);
    }

    let reserves = if reserves {
        let mut rng = seed.stream(Purpose::Reserve, query);
        scaled_values
            .iter()
            .map(|a| params.reserve_gamma * a * (params.reserve_sigma * rng.sample::<f64, _>(StandardNormal)).exp())
            .collect()
    } else {
        vec![0.0; n]
    };
    InstanceExtras { costs, slot_ctrs, reserves }
}

/// Generates the full dataset for one run. Pure in `(config, run_seed)`.
pub fn build_dataset(config: &DatasetConfig, run_seed: StreamSeed) -> Result<Dataset, DatagenError> {
    if config.slots == 0 || config.advertisers == 0 {
        return Err(DatagenError::InvalidParameter("slots and advertisers must be positive".into()));
    }
    let params = draw_run_parameters(config, run_seed)?;
    let family = build_family_with(config.queries, &config.branching, &config.data.leaf_assignment, run_seed)?;
    let query_features = gen_query_features(&family, &params.query_spec, &params.layer_dims, run_seed)?;
    let advertisers = gen_bidders(
        config.advertisers,
        &params.bidder_spec,
        (params.pareto_alpha, params.pareto_xmin),
        run_seed,
    )?;
    let noise = Normal::new(0.0, params.value_noise_sigma)
        .map_err(|e| DatagenError::InvalidParameter(e.to_string()))?;

    let instances = query_features
        .par_iter()
        .enumerate()
        .map(|(q, f_query)| {
            let retrieved = retrieve_candidates(f_query, &advertisers, params.retrieval, params.retrieval_threshold);
            let mut rng = run_seed.stream(Purpose::ValueNoise, q as u64);
            let shared_eps = noise.sample(&mut rng);
            let values: Vec<f64> = retrieved
                .iter()
                .map(|&(_, score)| {
                    let eps = match params.noise_mode {
                        NoiseMode::PerQuery => shared_eps,
                        NoiseMode::PerCandidate => noise.sample(&mut rng),
                    };
                    (score + eps).exp()
                })
                .collect();
            let scaled: Vec<f64> = retrieved
                .iter()
                .zip(&values)
                .map(|(&(id, _), v)| v * advertisers[id as usize].tcpa)
                .collect();
            let extras = sample_instance_extras(&scaled, config.slots, &params, config.reserves, run_seed, q as u64);
            let candidates = retrieved
                .iter()
                .enumerate()
                .map(|(c, &(id, _))| Candidate {
                    advertiser: id,
                    value: values[c],
                    cost: extras.costs[c],
                    reserve: extras.reserves[c],
                })
                .collect();
            AuctionInstance {
                query_id: q as u32,
                leaf_id: family.leaf_of_query()[q],
                candidates,
                slot_ctrs: extras.slot_ctrs,
            }
        })
        .collect();

    Ok(Dataset { advertisers, instances, family, params })
}
