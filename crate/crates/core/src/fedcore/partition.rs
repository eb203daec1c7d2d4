//! Non-IID client partitioning and per-round client sampling.

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use super::{FedError, Result};
use crate::seed::{derive_seed, Purpose};

/// Draws one point from `Dirichlet(alpha · 1_k)` via normalized Gamma draws.
pub fn sample_dirichlet(alpha: f64, k: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let gamma = Gamma::new(alpha, 1.0)
        .map_err(|e| FedError::InvalidConfig(format!("Dirichlet concentration {alpha}: {e}")))?;
    loop {
        let draws: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
        let sum: f64 = draws.iter().sum();
        // all-underflow is possible for tiny alpha; redraw
        if sum > 0.0 && sum.is_finite() {
            return Ok(draws.into_iter().map(|d| d / sum).collect());
        }
    }
}

/// Splits `total` into integer shares proportional to `weights` using the
/// largest-remainder rule; ties go to the lowest index.
pub fn largest_remainder(weights: &[f64], total: usize) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    if total == 0 || sum <= 0.0 {
        return vec![0; weights.len()];
    }
    let raw: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut counts: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = raw[a] - raw[a].floor();
        let fb = raw[b] - raw[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &k in order.iter().cycle().take(total.saturating_sub(assigned)) {
        counts[k] += 1;
    }
    counts
}

/// Per-class sample counts for one client: proportional to `props`, capped
/// by what each class pool still holds, with any deficit redistributed over
/// the classes that have room.
fn allocate_quota(props: &[f64], quota: usize, available: &[usize]) -> Vec<usize> {
    let mut counts = largest_remainder(props, quota);
    loop {
        let mut deficit = 0;
        for (c, &a) in counts.iter_mut().zip(available) {
            if *c > a {
                deficit += *c - a;
                *c = a;
            }
        }
        if deficit == 0 {
            return counts;
        }
        let room: Vec<usize> = available.iter().zip(&counts).map(|(a, c)| a - c).collect();
        let mut weights: Vec<f64> = props
            .iter()
            .zip(&room)
            .map(|(&p, &r)| if r > 0 { p } else { 0.0 })
            .collect();
        if weights.iter().sum::<f64>() <= 0.0 {
            weights = room.iter().map(|&r| r as f64).collect();
        }
        for (c, extra) in counts.iter_mut().zip(largest_remainder(&weights, deficit)) {
            *c += extra;
        }
    }
}

/// Dirichlet label-skew partition with a fixed quota per client.
///
/// Class pools are shuffled once; clients are then served in id order, each
/// drawing a class mix from `Dirichlet(alpha)` and taking its quota from the
/// front of the pools without replacement.
pub fn dirichlet_partition(
    labels: &[usize],
    n_classes: usize,
    n_clients: usize,
    alpha: f64,
    samples_per_client: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    if !(alpha > 0.0) {
        return Err(FedError::InvalidConfig(format!(
            "Dirichlet alpha must be positive, got {alpha}"
        )));
    }
    let needed = n_clients * samples_per_client;
    if labels.len() < needed {
        return Err(FedError::InsufficientData {
            needed,
            available: labels.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pools: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        pools[l].push(i);
    }
    for pool in pools.iter_mut() {
        pool.shuffle(&mut rng);
    }
    let mut cursors = vec![0usize; n_classes];

    let mut partitions = Vec::with_capacity(n_clients);
    for _ in 0..n_clients {
        let props = sample_dirichlet(alpha, n_classes, &mut rng)?;
        let available: Vec<usize> = pools
            .iter()
            .zip(&cursors)
            .map(|(p, &c)| p.len() - c)
            .collect();
        let counts = allocate_quota(&props, samples_per_client, &available);
        let mut part = Vec::with_capacity(samples_per_client);
        for (k, &n) in counts.iter().enumerate() {
            part.extend_from_slice(&pools[k][cursors[k]..cursors[k] + n]);
            cursors[k] += n;
        }
        partitions.push(part);
    }
    Ok(partitions)
}

/// Number of clients drawn per round: `⌈fraction · n_clients⌉`, at least one.
pub fn clients_per_round(n_clients: usize, fraction: f64) -> usize {
    let k = (fraction * n_clients as f64 - 1e-9).ceil() as usize;
    k.clamp(1, n_clients.max(1))
}

/// Uniform draw without replacement, sorted by client id; a pure function of
/// `(seed, round)`.
pub fn sample_clients(n_clients: usize, fraction: f64, round: u64, seed: u64) -> Vec<usize> {
    let k = clients_per_round(n_clients, fraction);
    if k >= n_clients {
        return (0..n_clients).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, round, 0, Purpose::ClientSampling));
    let mut ids = index::sample(&mut rng, n_clients, k).into_vec();
    ids.sort_unstable();
    ids
}
