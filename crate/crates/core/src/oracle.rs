//! Brute-force reference computations used to cross-check the production
//! paths. Nothing in here is used during training.
//!
//! Every routine is written against first principles (explicit matrices,
//! shifted re-evaluation, literal formula transcription) rather than by
//! calling the optimized kernels it checks.

use num_complex::Complex64;

use crate::qsim::{run_circuit, CircuitLayout, StateVector};

type Matrix = Vec<Vec<Complex64>>;

fn identity(dim: usize) -> Matrix {
    (0..dim)
        .map(|i| {
            (0..dim)
                .map(|j| Complex64::new(if i == j { 1.0 } else { 0.0 }, 0.0))
                .collect()
        })
        .collect()
}

fn matmul(a: &Matrix, b: &Matrix) -> Matrix {
    let n = a.len();
    let mut out = vec![vec![Complex64::new(0.0, 0.0); n]; n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i][k];
            for j in 0..n {
                out[i][j] += aik * b[k][j];
            }
        }
    }
    out
}

/// Full 2^n × 2^n matrix of a single-qubit gate on `qubit`, built entry by
/// entry from the Kronecker structure.
fn embed_single(n_qubits: usize, qubit: usize, gate: [[Complex64; 2]; 2]) -> Matrix {
    let dim = 1 << n_qubits;
    let mut m = vec![vec![Complex64::new(0.0, 0.0); dim]; dim];
    for (row, m_row) in m.iter_mut().enumerate() {
        for (col, entry) in m_row.iter_mut().enumerate() {
            // all other bits must agree
            if (row ^ col) & !(1 << qubit) != 0 {
                continue;
            }
            *entry = gate[(row >> qubit) & 1][(col >> qubit) & 1];
        }
    }
    m
}

#[allow(clippy::needless_range_loop)]
fn cnot_matrix(n_qubits: usize, control: usize, target: usize) -> Matrix {
    let dim = 1 << n_qubits;
    let mut m = vec![vec![Complex64::new(0.0, 0.0); dim]; dim];
    for col in 0..dim {
        let row = if (col >> control) & 1 == 1 {
            col ^ (1 << target)
        } else {
            col
        };
        m[row][col] = Complex64::new(1.0, 0.0);
    }
    m
}

fn ry_gate(theta: f64) -> [[Complex64; 2]; 2] {
    let (s, c) = (theta / 2.0).sin_cos();
    [
        [Complex64::new(c, 0.0), Complex64::new(-s, 0.0)],
        [Complex64::new(s, 0.0), Complex64::new(c, 0.0)],
    ]
}

fn rx_gate(theta: f64) -> [[Complex64; 2]; 2] {
    let (s, c) = (theta / 2.0).sin_cos();
    [
        [Complex64::new(c, 0.0), Complex64::new(0.0, -s)],
        [Complex64::new(0.0, -s), Complex64::new(c, 0.0)],
    ]
}

/// Dense unitary of the whole layered circuit, assembled gate by gate.
/// `params` is indexed `layer·2n + axis·n + qubit` with RY before RX.
pub fn dense_circuit_unitary(n_qubits: usize, n_layers: usize, params: &[f64]) -> Matrix {
    let dim = 1 << n_qubits;
    assert_eq!(params.len(), 2 * n_qubits * n_layers);
    let mut u = identity(dim);
    for layer in 0..n_layers {
        let base = layer * 2 * n_qubits;
        for q in 0..n_qubits {
            u = matmul(&embed_single(n_qubits, q, ry_gate(params[base + q])), &u);
        }
        for q in 0..n_qubits {
            u = matmul(
                &embed_single(n_qubits, q, rx_gate(params[base + n_qubits + q])),
                &u,
            );
        }
        for q in 0..n_qubits.saturating_sub(1) {
            u = matmul(&cnot_matrix(n_qubits, q, q + 1), &u);
        }
    }
    u
}

/// `U · input` for the dense circuit unitary.
pub fn dense_circuit_apply(
    n_qubits: usize,
    n_layers: usize,
    params: &[f64],
    input: &[Complex64],
) -> Vec<Complex64> {
    let u = dense_circuit_unitary(n_qubits, n_layers, params);
    u.iter()
        .map(|row| row.iter().zip(input).map(|(a, b)| a * b).sum())
        .collect()
}

/// Weighted readout `Σ w_q ⟨Z_q⟩` evaluated straight from probabilities.
pub fn weighted_readout(amplitudes: &[Complex64], observable: &[(usize, f64)]) -> f64 {
    observable
        .iter()
        .map(|&(q, w)| {
            w * amplitudes
                .iter()
                .enumerate()
                .map(|(j, a)| {
                    let p = a.norm_sqr();
                    if (j >> q) & 1 == 0 {
                        p
                    } else {
                        -p
                    }
                })
                .sum::<f64>()
        })
        .sum()
}

fn readout_at(
    layout: &CircuitLayout,
    params: &[f64],
    input: &StateVector,
    observable: &[(usize, f64)],
) -> f64 {
    let out = run_circuit(layout, params, input).expect("oracle circuit evaluation");
    weighted_readout(out.amplitudes(), observable)
}

/// Parameter-shift rule: `g_j = [f(θ_j + π/2) − f(θ_j − π/2)] / 2`.
pub fn parameter_shift_gradient(
    layout: &CircuitLayout,
    params: &[f64],
    input: &StateVector,
    observable: &[(usize, f64)],
) -> Vec<f64> {
    let shift = std::f64::consts::FRAC_PI_2;
    let mut shifted = params.to_vec();
    (0..params.len())
        .map(|j| {
            shifted[j] = params[j] + shift;
            let plus = readout_at(layout, &shifted, input, observable);
            shifted[j] = params[j] - shift;
            let minus = readout_at(layout, &shifted, input, observable);
            shifted[j] = params[j];
            (plus - minus) / 2.0
        })
        .collect()
}

/// Central finite differences of an arbitrary scalar function.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, params: &[f64], h: f64) -> Vec<f64> {
    let mut x = params.to_vec();
    (0..params.len())
        .map(|j| {
            x[j] = params[j] + h;
            let plus = f(&x);
            x[j] = params[j] - h;
            let minus = f(&x);
            x[j] = params[j];
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

/// Central finite differences of the weighted readout.
pub fn finite_difference_gradient(
    layout: &CircuitLayout,
    params: &[f64],
    input: &StateVector,
    observable: &[(usize, f64)],
    h: f64,
) -> Vec<f64> {
    central_difference(|p| readout_at(layout, p, input, observable), params, h)
}

/// Literal transcription of the three server steps for Fisher aggregation:
/// the size-weighted average, the Fisher-weighted average, then substitution
/// of every coordinate whose Fisher mass is below `delta` (or vanishing).
///
/// Returns the aggregated parameters and the sorted substitution indices.
pub fn fedfisher_bruteforce(
    sizes: &[usize],
    params: &[Vec<f64>],
    fisher: &[Vec<f64>],
    delta: f64,
) -> (Vec<f64>, Vec<usize>) {
    let n_params = params[0].len();
    let total: f64 = sizes.iter().map(|&s| s as f64).sum();
    let mut out = Vec::with_capacity(n_params);
    let mut substituted = Vec::new();
    for j in 0..n_params {
        let mut avg = 0.0;
        let mut g = 0.0;
        let mut f = 0.0;
        for i in 0..sizes.len() {
            avg += (sizes[i] as f64 / total) * params[i][j];
            g += fisher[i][j] * params[i][j];
            f += fisher[i][j];
        }
        if f < delta || f <= 1e-12 {
            out.push(avg);
            substituted.push(j);
        } else {
            out.push(g / f);
        }
    }
    (out, substituted)
}

/// Size-weighted parameter average.
pub fn fedavg_bruteforce(sizes: &[usize], params: &[Vec<f64>]) -> Vec<f64> {
    let total: f64 = sizes.iter().map(|&s| s as f64).sum();
    (0..params[0].len())
        .map(|j| {
            (0..sizes.len())
                .map(|i| sizes[i] as f64 / total * params[i][j])
                .sum()
        })
        .collect()
}
