//! Gibbs samplers for the assignment distribution.
//!
//! | variant     | coordinate choice          | proposal        | cost per iterate |
//! |-------------|----------------------------|-----------------|------------------|
//! | `tgs+`      | state-informed `rho`       | alpha/beta mix  | `O(P + M)`       |
//! | `rgs+`      | uniform                    | conditional     | `O(P + M)`       |
//! | `dgs+fwd`   | `1, 2, ..., P, 1, ...`     | alpha/beta mix  | `O(M)`           |
//! | `dgs+bwd`   | `P, P-1, ..., 1, P, ...`   | alpha/beta mix  | `O(M)`           |
//! | `sgs+`      | full sweep per iterate     | conditional     | `O(PM)`          |
//! | `rgs`       | uniform, rows from scratch | conditional     | `O(PM)`          |
//! | `sgs`       | sweep, rows from scratch   | conditional     | `O(P^2 M)`       |
//!
//! Only `tgs+` with `alpha < 1` and `beta < 1` needs importance weights to
//! target the assignment distribution; the weights are reported in log form.

mod baseline;
mod scan;
mod state;
mod tgs;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::assignment::{
    brute_force_distribution, conditional_direct, enumerate_valid_maps, joint_log_weight,
    AssociationMap, CostMatrix, WeightedAssignment,
};
use crate::error::{Error, Result};

pub use baseline::{rgs_run, sgs_run};
pub use scan::{dgs_plus_run, scan_coordinate, sgs_plus_run, ScanDirection};
pub use state::{init_state, propagate_state, ConditionalState};
pub use tgs::{rgs_plus_run, tgs_plus_run};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Variant {
    TgsPlus,
    RgsPlus,
    DgsPlusForward,
    DgsPlusBackward,
    SgsPlus,
    RgsGeneric,
    SgsGeneric,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::TgsPlus,
        Variant::RgsPlus,
        Variant::DgsPlusForward,
        Variant::DgsPlusBackward,
        Variant::SgsPlus,
        Variant::RgsGeneric,
        Variant::SgsGeneric,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::TgsPlus => "tgs+",
            Variant::RgsPlus => "rgs+",
            Variant::DgsPlusForward => "dgs+fwd",
            Variant::DgsPlusBackward => "dgs+bwd",
            Variant::SgsPlus => "sgs+",
            Variant::RgsGeneric => "rgs",
            Variant::SgsGeneric => "sgs",
        }
    }

    /// Whether iterates carry importance weights.
    pub fn is_weighted(self) -> bool {
        self == Variant::TgsPlus
    }

    /// Whether one iterate is a full sweep over all coordinates.
    pub fn is_sweep(self) -> bool {
        matches!(self, Variant::SgsPlus | Variant::SgsGeneric)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == key)
            .ok_or_else(|| {
                Error::domain(format!(
                    "unknown variant {s:?}; expected one of {}",
                    Variant::ALL.map(Variant::name).join(", ")
                ))
            })
    }
}

impl TryFrom<String> for Variant {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Variant> for String {
    fn from(v: Variant) -> String {
        v.name().to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub variant: Variant,
    /// Number of emitted iterates `T` (sweeps for the systematic variants).
    pub iterations: usize,
    pub alpha: f64,
    pub beta: f64,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            variant: Variant::TgsPlus,
            iterations: 5000,
            alpha: 0.5,
            beta: 0.5,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn new(variant: Variant, iterations: usize) -> Self {
        SamplerConfig {
            variant,
            iterations,
            ..Default::default()
        }
    }

    pub fn with_mixture(mut self, alpha: f64, beta: f64) -> Self {
        self.alpha = alpha;
        self.beta = beta;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::domain("sampler needs at least one iteration"));
        }
        state::validate_mixture(self.alpha, self.beta)
    }
}

/// Receives iterates as a chain produces them.
pub trait IterateSink {
    fn push(&mut self, map: &AssociationMap, importance_log_weight: Option<f64>);
}

/// Discards iterates, keeping a count; used for timing the kernels.
#[derive(Debug, Default)]
pub struct CountingSink {
    pub count: usize,
    pub checksum: i64,
}

impl IterateSink for CountingSink {
    fn push(&mut self, map: &AssociationMap, _: Option<f64>) {
        self.count += 1;
        self.checksum = self.checksum.wrapping_add(map.get(0) as i64);
    }
}

#[derive(Debug, Clone)]
pub struct SampleBatch {
    pub variant: Variant,
    pub iterates: Vec<AssociationMap>,
    /// Present iff the variant is `tgs+`.
    pub importance_log_weights: Option<Vec<f64>>,
}

impl SampleBatch {
    pub fn new(variant: Variant, capacity: usize) -> Self {
        SampleBatch {
            variant,
            iterates: Vec::with_capacity(capacity),
            importance_log_weights: variant.is_weighted().then(|| Vec::with_capacity(capacity)),
        }
    }

    pub fn len(&self) -> usize {
        self.iterates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterates.is_empty()
    }
}

impl IterateSink for SampleBatch {
    fn push(&mut self, map: &AssociationMap, importance_log_weight: Option<f64>) {
        self.iterates.push(map.clone());
        if let (Some(ws), Some(w)) = (self.importance_log_weights.as_mut(), importance_log_weight) {
            ws.push(w);
        }
    }
}

/// Runs the configured variant, collecting every iterate.
pub fn run(gamma0: &AssociationMap, eta: &CostMatrix, cfg: &SamplerConfig) -> Result<SampleBatch> {
    let mut batch = SampleBatch::new(cfg.variant, cfg.iterations);
    run_into(gamma0, eta, cfg, &mut batch)?;
    Ok(batch)
}

/// Runs the configured variant, streaming iterates into `sink`.
pub fn run_into<S: IterateSink>(
    gamma0: &AssociationMap,
    eta: &CostMatrix,
    cfg: &SamplerConfig,
    sink: &mut S,
) -> Result<()> {
    cfg.validate()?;
    match cfg.variant {
        Variant::TgsPlus => tgs::tgs_plus_into(gamma0, eta, cfg, sink),
        Variant::RgsPlus => tgs::rgs_plus_into(gamma0, eta, cfg, sink),
        Variant::DgsPlusForward => scan::dgs_plus_into(gamma0, eta, cfg, ScanDirection::Forward, sink),
        Variant::DgsPlusBackward => scan::dgs_plus_into(gamma0, eta, cfg, ScanDirection::Backward, sink),
        Variant::SgsPlus => scan::sgs_plus_into(gamma0, eta, cfg, sink),
        Variant::RgsGeneric => baseline::rgs_into(gamma0, eta, cfg, sink),
        Variant::SgsGeneric => baseline::sgs_into(gamma0, eta, cfg, sink),
    }
}

/// Indices of the first occurrence of each distinct map, in order.
///
/// Sorting the indices by map keeps the cost at `O(T log T)` comparisons.
pub fn first_occurrences(iterates: &[AssociationMap]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..iterates.len()).collect();
    order.sort_by(|&a, &b| iterates[a].cmp(&iterates[b]).then(a.cmp(&b)));
    let mut keep: Vec<usize> = order
        .iter()
        .enumerate()
        .filter(|&(k, &idx)| k == 0 || iterates[order[k - 1]] != iterates[idx])
        .map(|(_, &idx)| idx)
        .collect();
    keep.sort_unstable();
    keep
}

/// Distinct iterates in first-occurrence order with their joint log weights.
pub fn dedup(batch: &SampleBatch, eta: &CostMatrix) -> Vec<WeightedAssignment> {
    first_occurrences(&batch.iterates)
        .into_iter()
        .map(|k| {
            let map = batch.iterates[k].clone();
            let log_weight = joint_log_weight(&map, eta);
            WeightedAssignment { map, log_weight }
        })
        .collect()
}

/// Empirical distribution of a batch, importance-weighted when the batch
/// carries weights and `weighted` is set.
pub fn empirical_distribution(batch: &SampleBatch, weighted: bool) -> HashMap<AssociationMap, f64> {
    let mut out: HashMap<AssociationMap, f64> = HashMap::new();
    match (&batch.importance_log_weights, weighted) {
        (Some(lw), true) => {
            let max = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for (g, w) in batch.iterates.iter().zip(lw) {
                let v = (w - max).exp();
                total += v;
                *out.entry(g.clone()).or_default() += v;
            }
            out.values_mut().for_each(|v| *v /= total);
        }
        _ => {
            let inc = 1.0 / batch.len() as f64;
            for g in &batch.iterates {
                *out.entry(g.clone()).or_default() += inc;
            }
        }
    }
    out
}

/// Total-variation distance between an exact distribution and an
/// empirical one.
pub fn total_variation(exact: &[(AssociationMap, f64)], empirical: &HashMap<AssociationMap, f64>) -> f64 {
    let mut sum = 0.0;
    let mut matched = 0.0;
    for (g, p) in exact {
        let q = empirical.get(g).copied().unwrap_or(0.0);
        matched += q;
        sum += (p - q).abs();
    }
    let unmatched: f64 = empirical.values().sum::<f64>() - matched;
    0.5 * (sum + unmatched.max(0.0))
}

/// Runs a variant on an enumerable instance and reports the total-variation
/// distance of its (weighted, where applicable) empirical distribution to
/// the exact one.
pub fn oracle_distance(eta: &CostMatrix, cfg: &SamplerConfig) -> Result<f64> {
    let exact = brute_force_distribution(eta)?;
    let batch = run(&AssociationMap::undetected(eta.rows()), eta, cfg)?;
    Ok(total_variation(&exact, &empirical_distribution(&batch, true)))
}

/// Sample variance of the importance weights rescaled to unit mean.
pub fn normalized_weight_variance(log_weights: &[f64]) -> f64 {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_weights.iter().map(|lw| (lw - max).exp()).collect();
    let mean = w.iter().sum::<f64>() / w.len() as f64;
    w.iter().map(|x| (x / mean - 1.0).powi(2)).sum::<f64>() / w.len() as f64
}

/// `max_{i, gamma} pi_i(gamma_i | .) / phi_i(gamma_i | .) - 1` over every
/// valid map, which bounds the variance of the normalised importance
/// weights of the tempered sampler. Computed by enumeration from the direct
/// conditionals.
pub fn importance_variance_bound(eta: &CostMatrix, alpha: f64, beta: f64) -> Result<f64> {
    state::validate_mixture(alpha, beta)?;
    let mut worst: f64 = 0.0;
    for gamma in enumerate_valid_maps(eta.rows(), eta.measurements())? {
        for i in 0..eta.rows() {
            let pi = conditional_direct(i, &gamma, eta)?;
            let tempered: Vec<f64> = pi.iter().map(|v| v.powf(beta)).collect();
            let nb: f64 = tempered.iter().sum();
            let c = (gamma.get(i) + 1) as usize;
            let phi = alpha * pi[c] + (1.0 - alpha) * tempered[c] / nb;
            worst = worst.max(pi[c] / phi);
        }
    }
    Ok(worst - 1.0)
}
