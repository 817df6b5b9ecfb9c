//! Random-coordinate samplers on the incrementally maintained state.

use rand::Rng;

use super::state::ConditionalState;
use super::{IterateSink, SampleBatch, SamplerConfig, Variant};
use crate::assignment::{AssociationMap, CostMatrix};
use crate::error::Result;
use crate::rng::{sample_categorical, stream, ChainRng};

/// Draws from `alpha * pi/nu1 + (1 - alpha) * pi^beta/nu_beta` by a single
/// cumulative scan, evaluating the mixture entry by entry.
#[inline]
pub(crate) fn sample_mixture(
    rng: &mut ChainRng,
    pi_row: &[f64],
    eta_beta_row: &[f64],
    nu1: f64,
    nu_beta: f64,
    alpha: f64,
) -> usize {
    let target: f64 = rng.random();
    let a = alpha / nu1;
    let b = (1.0 - alpha) / nu_beta;
    let mut acc = 0.0;
    let mut last = 0;
    for (c, (&v, &eb)) in pi_row.iter().zip(eta_beta_row).enumerate() {
        if v > 0.0 {
            acc += a * v + b * eb;
            last = c;
            if target < acc {
                return c;
            }
        }
    }
    last
}

pub(crate) fn tgs_plus_into<S: IterateSink>(
    gamma0: &AssociationMap,
    eta: &CostMatrix,
    cfg: &SamplerConfig,
    sink: &mut S,
) -> Result<()> {
    let mut state = ConditionalState::init(gamma0, eta, cfg.alpha, cfg.beta)?;
    let mut rng = stream(cfg.seed, &[]);
    let w = eta.width();
    for _ in 0..cfg.iterations {
        let t = state.tempering.as_ref().expect("tempered state");
        let n = sample_categorical(&mut rng, &t.selection, t.selection_total);
        let row = n * w..(n + 1) * w;
        let c = sample_mixture(
            &mut rng,
            &state.pi_tilde[row.clone()],
            &t.eta_beta[row],
            state.nu1[n],
            t.nu_beta[n],
            t.alpha,
        );
        // selection weights are refreshed only when the coordinate moved
        state.propagate(n, c as i32 - 1, eta);
        sink.push(&state.current, state.importance_log_weight());
    }
    Ok(())
}

pub(crate) fn rgs_plus_into<S: IterateSink>(
    gamma0: &AssociationMap,
    eta: &CostMatrix,
    cfg: &SamplerConfig,
    sink: &mut S,
) -> Result<()> {
    let mut state = ConditionalState::init_untempered(gamma0, eta)?;
    let mut rng = stream(cfg.seed, &[]);
    let p = eta.rows();
    for _ in 0..cfg.iterations {
        let n = rng.random_range(0..p);
        let c = sample_categorical(&mut rng, state.pi_tilde(n), state.nu1[n]);
        state.propagate(n, c as i32 - 1, eta);
        sink.push(&state.current, None);
    }
    Ok(())
}

/// Tempered Gibbs sampling in `O(P + M)` per iterate.
///
/// Each step picks a coordinate from the state-informed selection
/// distribution, resamples it from the alpha/beta mixture proposal and
/// propagates the conditionals. Iterates carry importance log-weights
/// `ln P - ln sum_i phi_i/pi_i`, which correct the chain back to the
/// assignment distribution.
pub fn tgs_plus_run(gamma0: &AssociationMap, eta: &CostMatrix, cfg: &SamplerConfig) -> Result<SampleBatch> {
    cfg.validate()?;
    let mut batch = SampleBatch::new(Variant::TgsPlus, cfg.iterations);
    tgs_plus_into(gamma0, eta, cfg, &mut batch)?;
    Ok(batch)
}

/// Random-scan Gibbs sampling in `O(P + M)` per iterate.
pub fn rgs_plus_run(gamma0: &AssociationMap, eta: &CostMatrix, cfg: &SamplerConfig) -> Result<SampleBatch> {
    cfg.validate()?;
    let mut batch = SampleBatch::new(Variant::RgsPlus, cfg.iterations);
    rgs_plus_into(gamma0, eta, cfg, &mut batch)?;
    Ok(batch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gibbs::{empirical_distribution, total_variation};
    use crate::assignment::brute_force_distribution;

    fn eta3() -> CostMatrix {
        CostMatrix::from_rows(&[
            vec![0.4, 1.2, 3.0, 0.2],
            vec![2.0, 0.5, 1.5, 2.5],
            vec![0.3, 0.9, 0.6, 4.0],
        ])
        .unwrap()
    }

    #[test]
    fn tgs_iterates_are_valid_and_weighted() {
        let eta = eta3();
        let cfg = SamplerConfig::new(Variant::TgsPlus, 5000).with_seed(3);
        let batch = tgs_plus_run(&AssociationMap::undetected(3), &eta, &cfg).unwrap();
        assert_eq!(batch.len(), 5000);
        assert_eq!(batch.importance_log_weights.as_ref().unwrap().len(), 5000);
        for g in &batch.iterates {
            assert!(g.is_positive_one_to_one(2).unwrap());
        }
    }

    #[test]
    fn tgs_with_alpha_one_has_unit_weights() {
        let eta = eta3();
        let cfg = SamplerConfig::new(Variant::TgsPlus, 2000).with_mixture(1.0, 0.2).with_seed(9);
        let batch = tgs_plus_run(&AssociationMap::undetected(3), &eta, &cfg).unwrap();
        for w in batch.importance_log_weights.unwrap() {
            assert!(w.abs() < 1e-12);
        }
    }

    #[test]
    fn single_coordinate_rgs_samples_the_row() {
        let eta = CostMatrix::from_rows(&[vec![1.0, 2.0, 3.0, 4.0]]).unwrap();
        let cfg = SamplerConfig::new(Variant::RgsPlus, 100_000).with_seed(1);
        let batch = rgs_plus_run(&AssociationMap::undetected(1), &eta, &cfg).unwrap();
        let exact = brute_force_distribution(&eta).unwrap();
        let tv = total_variation(&exact, &empirical_distribution(&batch, false));
        assert!(tv < 0.02, "tv = {tv}");
    }

    #[test]
    fn same_seed_same_chain() {
        let eta = eta3();
        let cfg = SamplerConfig::new(Variant::TgsPlus, 500).with_seed(42);
        let a = tgs_plus_run(&AssociationMap::undetected(3), &eta, &cfg).unwrap();
        let b = tgs_plus_run(&AssociationMap::undetected(3), &eta, &cfg).unwrap();
        assert_eq!(a.iterates, b.iterates);
    }
}
