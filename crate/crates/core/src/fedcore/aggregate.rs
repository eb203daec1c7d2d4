//! Server-side aggregation strategies and client-side parameter retention.

use super::optim::Adam;
use super::{FedError, Result};
use crate::vqc::{FisherVector, ParameterVector};

/// Fisher mass at or below this is never used as a divisor.
pub const FISHER_FLOOR: f64 = 1e-12;

/// What a client uploads after local training.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpdate {
    pub client_id: usize,
    /// Local dataset size `D_i`.
    pub n_samples: usize,
    pub params: ParameterVector,
    /// Layer-normalized Fisher diagonal; present when the strategy needs it.
    pub fisher: Option<FisherVector>,
    pub train_loss: f64,
}

fn sorted_by_id(updates: &[ClientUpdate]) -> Result<Vec<&ClientUpdate>> {
    if updates.is_empty() {
        return Err(FedError::NoClients);
    }
    let mut sorted: Vec<&ClientUpdate> = updates.iter().collect();
    sorted.sort_by_key(|u| u.client_id);
    let len = sorted[0].params.len();
    if let Some(bad) = sorted.iter().find(|u| u.params.len() != len) {
        return Err(FedError::ShapeMismatch {
            expected: len,
            got: bad.params.len(),
        });
    }
    Ok(sorted)
}

/// Client weights `p_i = D_i / Σ_j D_j`, in client-id order.
pub fn size_weights(updates: &[&ClientUpdate]) -> Vec<f64> {
    let total: f64 = updates.iter().map(|u| u.n_samples as f64).sum();
    updates.iter().map(|u| u.n_samples as f64 / total).collect()
}

fn weighted_average(sorted: &[&ClientUpdate]) -> Vec<f64> {
    let weights = size_weights(sorted);
    let mut avg = vec![0.0; sorted[0].params.len()];
    for (u, w) in sorted.iter().zip(&weights) {
        for (a, &p) in avg.iter_mut().zip(u.params.iter()) {
            *a += w * p;
        }
    }
    avg
}

/// Dataset-size weighted parameter average.
pub fn aggregate_fedavg(updates: &[ClientUpdate]) -> Result<ParameterVector> {
    let sorted = sorted_by_id(updates)?;
    if sorted.len() == 1 {
        return Ok(sorted[0].params.clone());
    }
    Ok(ParameterVector::from_raw(weighted_average(&sorted)))
}

/// Server-side Adam over the pseudo-gradient `global − θ_avg`.
///
/// `server` carries moment estimates across rounds and is stepped once.
pub fn aggregate_fedadam(
    updates: &[ClientUpdate],
    global: &ParameterVector,
    server: &mut Adam,
) -> Result<ParameterVector> {
    let avg = aggregate_fedavg(updates)?;
    if avg.len() != global.len() {
        return Err(FedError::ShapeMismatch {
            expected: global.len(),
            got: avg.len(),
        });
    }
    let pseudo_grad: Vec<f64> = global.iter().zip(avg.iter()).map(|(g, a)| g - a).collect();
    let mut next = global.clone();
    server.step(&mut next, &pseudo_grad);
    Ok(next)
}

/// Fisher-weighted aggregation with threshold substitution.
///
/// Per coordinate `j`, `F_s = Σ_i F_ij` and `G_s = Σ_i F_ij θ_ij`. Coordinates
/// with `F_s ≥ δ` (and above [`FISHER_FLOOR`]) take `G_s / F_s`; the rest take
/// the size-weighted average and are reported in the substitution set.
pub fn aggregate_fedfisher(
    updates: &[ClientUpdate],
    delta: f64,
) -> Result<(ParameterVector, Vec<usize>)> {
    let sorted = sorted_by_id(updates)?;
    let n = sorted[0].params.len();
    let mut fisher = Vec::with_capacity(sorted.len());
    for u in &sorted {
        let f = u.fisher.as_ref().ok_or(FedError::MissingFisher(u.client_id))?;
        if f.len() != n {
            return Err(FedError::ShapeMismatch {
                expected: n,
                got: f.len(),
            });
        }
        fisher.push(f);
    }
    let avg = if sorted.len() == 1 {
        sorted[0].params.to_vec()
    } else {
        weighted_average(&sorted)
    };
    let mut out = Vec::with_capacity(n);
    let mut substituted = Vec::new();
    for j in 0..n {
        let mut g_s = 0.0;
        let mut f_s = 0.0;
        for (u, f) in sorted.iter().zip(&fisher) {
            g_s += f[j] * u.params[j];
            f_s += f[j];
        }
        if f_s >= delta && f_s > FISHER_FLOOR {
            // a lone client's quotient is its own value; skip the rounding
            out.push(if sorted.len() == 1 { avg[j] } else { g_s / f_s });
        } else {
            out.push(avg[j]);
            substituted.push(j);
        }
    }
    Ok((ParameterVector::from_raw(out), substituted))
}

/// Keeps a client's own parameters where its Fisher is at least `delta` and
/// adopts the global value elsewhere.
pub fn client_retention(
    client_params: &ParameterVector,
    client_fisher: &FisherVector,
    global_params: &ParameterVector,
    delta: f64,
) -> Result<ParameterVector> {
    let n = global_params.len();
    for len in [client_params.len(), client_fisher.len()] {
        if len != n {
            return Err(FedError::ShapeMismatch { expected: n, got: len });
        }
    }
    Ok(ParameterVector::from_raw(
        client_params
            .iter()
            .zip(client_fisher.iter())
            .zip(global_params.iter())
            .map(|((&c, &f), &g)| if f < delta { g } else { c })
            .collect(),
    ))
}
