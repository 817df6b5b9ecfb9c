//! Reference samplers that recompute each conditional from scratch.

use rand::Rng;

use super::{IterateSink, SampleBatch, SamplerConfig, Variant};
use crate::assignment::{masked_row_into, AssociationMap, CostMatrix};
use crate::error::Result;
use crate::gibbs::state::validate_start;
use crate::rng::{sample_categorical, stream};

pub(crate) fn rgs_into<S: IterateSink>(
    gamma0: &AssociationMap,
    eta: &CostMatrix,
    cfg: &SamplerConfig,
    sink: &mut S,
) -> Result<()> {
    validate_start(gamma0, eta)?;
    let mut rng = stream(cfg.seed, &[]);
    let mut current = gamma0.clone();
    let mut row = vec![0.0; eta.width()];
    for _ in 0..cfg.iterations {
        let n = rng.random_range(0..eta.rows());
        let total = masked_row_into(n, &current, eta, &mut row);
        let c = sample_categorical(&mut rng, &row, total);
        current.set(n, c as i32 - 1);
        sink.push(&current, None);
    }
    Ok(())
}

pub(crate) fn sgs_into<S: IterateSink>(
    gamma0: &AssociationMap,
    eta: &CostMatrix,
    cfg: &SamplerConfig,
    sink: &mut S,
) -> Result<()> {
    validate_start(gamma0, eta)?;
    let mut rng = stream(cfg.seed, &[]);
    let mut current = gamma0.clone();
    let mut row = vec![0.0; eta.width()];
    for _ in 0..cfg.iterations {
        for n in 0..eta.rows() {
            let total = masked_row_into(n, &current, eta, &mut row);
            let c = sample_categorical(&mut rng, &row, total);
            current.set(n, c as i32 - 1);
        }
        sink.push(&current, None);
    }
    Ok(())
}

/// Random-scan Gibbs with `O(PM)` conditionals per step.
pub fn rgs_run(gamma0: &AssociationMap, eta: &CostMatrix, cfg: &SamplerConfig) -> Result<SampleBatch> {
    cfg.validate()?;
    let mut batch = SampleBatch::new(Variant::RgsGeneric, cfg.iterations);
    rgs_into(gamma0, eta, cfg, &mut batch)?;
    Ok(batch)
}

/// Systematic-scan Gibbs with `O(PM)` conditionals, `O(P^2 M)` per sweep.
pub fn sgs_run(gamma0: &AssociationMap, eta: &CostMatrix, cfg: &SamplerConfig) -> Result<SampleBatch> {
    cfg.validate()?;
    let mut batch = SampleBatch::new(Variant::SgsGeneric, cfg.iterations);
    sgs_into(gamma0, eta, cfg, &mut batch)?;
    Ok(batch)
}
