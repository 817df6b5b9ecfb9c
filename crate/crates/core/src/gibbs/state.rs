//! Incrementally maintained conditionals of the assignment distribution.
//!
//! For a valid map `gamma`, the unnormalised `i`-th conditional is row `i` of
//! the cost matrix with every positive index held by another coordinate
//! zeroed. When the chain changes a single coordinate `n` from `old` to
//! `new`, every other row changes in at most two places: `old` is restored
//! and `new` is zeroed. Both normalisers follow with one addition and one
//! subtraction, so a move costs `O(P)` in total.

use crate::assignment::{col, AssociationMap, CostMatrix};
use crate::error::{Error, Result};

/// When a subtraction removes all but this fraction of a normaliser, the
/// row sum is recomputed to avoid catastrophic cancellation.
const CANCELLATION_GUARD: f64 = 1e-4;

/// Mixture-proposal bookkeeping, present for the tempered variants.
#[derive(Debug, Clone)]
pub(crate) struct Tempering {
    pub alpha: f64,
    /// `eta^beta`, row-major like the cost matrix.
    pub eta_beta: Vec<f64>,
    /// Normalisers of the tempered unnormalised conditionals.
    pub nu_beta: Vec<f64>,
    /// Unnormalised coordinate-selection weights `phi_i / pi_i` at the
    /// current value of each coordinate.
    pub selection: Vec<f64>,
    pub selection_total: f64,
}

#[derive(Debug, Clone)]
pub struct ConditionalState {
    p: usize,
    width: usize,
    pub(crate) pi_tilde: Vec<f64>,
    pub(crate) nu1: Vec<f64>,
    pub(crate) tempering: Option<Tempering>,
    pub(crate) current: AssociationMap,
}

pub(crate) fn validate_start(gamma0: &AssociationMap, eta: &CostMatrix) -> Result<()> {
    if gamma0.len() != eta.rows() {
        return Err(Error::domain(format!(
            "initial map has {} entries, cost matrix has {} rows",
            gamma0.len(),
            eta.rows()
        )));
    }
    if !gamma0.is_positive_one_to_one(eta.measurements())? {
        return Err(Error::domain(format!(
            "initial map {gamma0} is not positive 1-1"
        )));
    }
    Ok(())
}

pub(crate) fn validate_mixture(alpha: f64, beta: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 1.0) || !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::domain(format!(
            "alpha = {alpha}, beta = {beta}: both must lie in (0, 1]"
        )));
    }
    Ok(())
}

impl ConditionalState {
    /// Builds every unnormalised conditional, both normalisers and the
    /// coordinate-selection weights for `gamma0` in `O(PM)`.
    ///
    /// A single "taken" row marks every positive index in use; row `i` then
    /// copies `eta_i` except at taken indices other than its own value.
    pub fn init(gamma0: &AssociationMap, eta: &CostMatrix, alpha: f64, beta: f64) -> Result<Self> {
        validate_mixture(alpha, beta)?;
        let mut state = Self::init_untempered(gamma0, eta)?;
        let eta_beta = eta.powf(beta);
        let w = state.width;
        let mut nu_beta = vec![0.0; state.p];
        for (i, nb) in nu_beta.iter_mut().enumerate() {
            let row = &state.pi_tilde[i * w..(i + 1) * w];
            *nb = row
                .iter()
                .zip(&eta_beta[i * w..(i + 1) * w])
                .filter(|(v, _)| **v > 0.0)
                .map(|(_, b)| b)
                .sum();
        }
        state.tempering = Some(Tempering {
            alpha,
            eta_beta,
            nu_beta,
            selection: vec![0.0; state.p],
            selection_total: 0.0,
        });
        state.refresh_selection(eta);
        Ok(state)
    }

    /// Conditionals and `nu1` only, for the untempered samplers.
    pub fn init_untempered(gamma0: &AssociationMap, eta: &CostMatrix) -> Result<Self> {
        validate_start(gamma0, eta)?;
        let (p, w) = (eta.rows(), eta.width());
        let mut taken = vec![false; w];
        for &j in gamma0.entries() {
            if j > 0 {
                taken[col(j)] = true;
            }
        }
        let mut pi_tilde = vec![0.0; p * w];
        let mut nu1 = vec![0.0; p];
        for i in 0..p {
            let own = col(gamma0.get(i));
            let row = eta.row(i);
            let out = &mut pi_tilde[i * w..(i + 1) * w];
            let mut total = 0.0;
            for c in 0..w {
                let v = if taken[c] && c != own { 0.0 } else { row[c] };
                out[c] = v;
                total += v;
            }
            nu1[i] = total;
        }
        Ok(ConditionalState {
            p,
            width: w,
            pi_tilde,
            nu1,
            tempering: None,
            current: gamma0.clone(),
        })
    }

    pub fn current(&self) -> &AssociationMap {
        &self.current
    }

    pub fn rows(&self) -> usize {
        self.p
    }

    /// Unnormalised conditional of coordinate `i`, indexed by `j + 1`.
    pub fn pi_tilde(&self, i: usize) -> &[f64] {
        &self.pi_tilde[i * self.width..(i + 1) * self.width]
    }

    pub fn nu1(&self) -> &[f64] {
        &self.nu1
    }

    pub fn nu_beta(&self) -> Option<&[f64]> {
        self.tempering.as_ref().map(|t| t.nu_beta.as_slice())
    }

    /// Normalised coordinate-selection distribution, when tempered.
    pub fn coordinate_distribution(&self) -> Option<Vec<f64>> {
        self.tempering
            .as_ref()
            .map(|t| t.selection.iter().map(|s| s / t.selection_total).collect())
    }

    /// `ln P - ln sum_i (phi_i / pi_i)` at the current map.
    pub fn importance_log_weight(&self) -> Option<f64> {
        self.tempering
            .as_ref()
            .map(|t| (self.p as f64).ln() - t.selection_total.ln())
    }

    /// Mixture proposal `phi_i` evaluated over `j = -1..=M`.
    pub fn proposal(&self, i: usize) -> Vec<f64> {
        let row = self.pi_tilde(i);
        let nu1 = self.nu1[i];
        match &self.tempering {
            None => row.iter().map(|v| v / nu1).collect(),
            Some(t) => {
                let eb = &t.eta_beta[i * self.width..(i + 1) * self.width];
                row.iter()
                    .zip(eb)
                    .map(|(&v, &b)| {
                        let tempered = if v > 0.0 { b / t.nu_beta[i] } else { 0.0 };
                        t.alpha * v / nu1 + (1.0 - t.alpha) * tempered
                    })
                    .collect()
            }
        }
    }

    /// Sets coordinate `n` to `new_j` and updates every other row in place.
    ///
    /// Returns `false` (and changes nothing) when `new_j` equals the current
    /// value. The caller guarantees `new_j` has nonzero support in row `n`.
    pub fn propagate(&mut self, n: usize, new_j: i32, eta: &CostMatrix) -> bool {
        let old_j = self.current.get(n);
        if old_j == new_j {
            return false;
        }
        debug_assert!(self.pi_tilde(n)[col(new_j)] > 0.0);
        let w = self.width;
        let values = eta.values();
        let old_c = (old_j > 0).then(|| col(old_j));
        let new_c = (new_j > 0).then(|| col(new_j));
        if old_c.is_some() || new_c.is_some() {
            for i in (0..self.p).filter(|&i| i != n) {
                let base = i * w;
                if let Some(c) = old_c {
                    self.pi_tilde[base + c] = values[base + c];
                    self.nu1[i] += values[base + c];
                    if let Some(t) = self.tempering.as_mut() {
                        t.nu_beta[i] += t.eta_beta[base + c];
                    }
                }
                if let Some(c) = new_c {
                    self.pi_tilde[base + c] = 0.0;
                    let before = self.nu1[i];
                    self.nu1[i] -= values[base + c];
                    if self.nu1[i] < before * CANCELLATION_GUARD {
                        self.nu1[i] = self.pi_tilde[base..base + w].iter().sum();
                    }
                    if let Some(t) = self.tempering.as_mut() {
                        let before = t.nu_beta[i];
                        t.nu_beta[i] -= t.eta_beta[base + c];
                        if t.nu_beta[i] < before * CANCELLATION_GUARD {
                            t.nu_beta[i] = self.pi_tilde[base..base + w]
                                .iter()
                                .zip(&t.eta_beta[base..base + w])
                                .filter(|(v, _)| **v > 0.0)
                                .map(|(_, b)| b)
                                .sum();
                        }
                    }
                }
            }
        }
        self.current.set(n, new_j);
        if self.tempering.is_some() {
            self.refresh_selection(eta);
        }
        true
    }

    /// Recomputes all `P` selection weights from the maintained quantities.
    ///
    /// `phi_i / pi_i` at the current value `j_i` simplifies to
    /// `alpha + (1 - alpha) * (nu1_i / nu_beta_i) * eta_i(j_i)^(beta - 1)`.
    fn refresh_selection(&mut self, eta: &CostMatrix) {
        let w = self.width;
        let values = eta.values();
        let Some(t) = self.tempering.as_mut() else {
            return;
        };
        let mut total = 0.0;
        for i in 0..self.p {
            let c = i * w + col(self.current.get(i));
            let ratio = t.eta_beta[c] / values[c];
            let s = t.alpha + (1.0 - t.alpha) * (self.nu1[i] / t.nu_beta[i]) * ratio;
            t.selection[i] = s;
            total += s;
        }
        t.selection_total = total;
    }

    /// Largest relative discrepancy against `other` over every conditional
    /// entry, normaliser and selection weight.
    pub fn max_relative_deviation(&self, other: &ConditionalState) -> f64 {
        fn rel(a: f64, b: f64) -> f64 {
            if a == b {
                0.0
            } else {
                (a - b).abs() / a.abs().max(b.abs())
            }
        }
        fn worst(a: &[f64], b: &[f64]) -> f64 {
            if a.len() != b.len() {
                return f64::INFINITY;
            }
            a.iter().zip(b).map(|(x, y)| rel(*x, *y)).fold(0.0, f64::max)
        }
        if self.current != other.current {
            return f64::INFINITY;
        }
        let mut d = worst(&self.pi_tilde, &other.pi_tilde).max(worst(&self.nu1, &other.nu1));
        match (&self.tempering, &other.tempering) {
            (Some(a), Some(b)) => {
                d = d
                    .max(worst(&a.nu_beta, &b.nu_beta))
                    .max(worst(&a.selection, &b.selection))
                    .max(rel(a.selection_total, b.selection_total));
            }
            (None, None) => {}
            _ => return f64::INFINITY,
        }
        d
    }
}

/// See [`ConditionalState::init`].
pub fn init_state(
    gamma0: &AssociationMap,
    eta: &CostMatrix,
    alpha: f64,
    beta: f64,
) -> Result<ConditionalState> {
    ConditionalState::init(gamma0, eta, alpha, beta)
}

/// Functional form of [`ConditionalState::propagate`].
pub fn propagate_state(
    mut state: ConditionalState,
    n: usize,
    new_j: i32,
    eta: &CostMatrix,
) -> ConditionalState {
    state.propagate(n, new_j, eta);
    state
}
