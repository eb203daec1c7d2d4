//! Dense state-vector simulation of the hardware-efficient classifier circuit.
//!
//! Qubit 0 is the least-significant bit of a basis-state index. Rotations
//! follow the `exp(-i θ P / 2)` convention.

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QsimError {
    #[error("qubit {qubit} out of range for a {n_qubits}-qubit register")]
    QubitOutOfRange { qubit: usize, n_qubits: usize },
    #[error("control and target are both qubit {0}")]
    SameQubit(usize),
    #[error("input length {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("input length {got} does not match a {n_qubits}-qubit register")]
    LengthMismatch { got: usize, n_qubits: usize },
    #[error("cannot encode a vector with norm {0:e}")]
    ZeroNorm(f64),
    #[error("expected {expected} circuit parameters, got {got}")]
    ParameterCount { expected: usize, got: usize },
    #[error("register must have at least one qubit")]
    NoQubits,
}

pub type Result<T> = std::result::Result<T, QsimError>;

/// An n-qubit pure state stored as 2^n complex amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    /// The computational basis state |0…0⟩.
    pub fn zero(n_qubits: usize) -> Result<Self> {
        if n_qubits == 0 {
            return Err(QsimError::NoQubits);
        }
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); 1 << n_qubits];
        amplitudes[0] = Complex64::new(1.0, 0.0);
        Ok(Self {
            n_qubits,
            amplitudes,
        })
    }

    /// The computational basis state |index⟩.
    pub fn basis(n_qubits: usize, index: usize) -> Result<Self> {
        let mut state = Self::zero(n_qubits)?;
        if index >= state.dim() {
            return Err(QsimError::LengthMismatch {
                got: index,
                n_qubits,
            });
        }
        state.amplitudes[0] = Complex64::new(0.0, 0.0);
        state.amplitudes[index] = Complex64::new(1.0, 0.0);
        Ok(state)
    }

    /// Wraps raw amplitudes without renormalizing them.
    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self> {
        let len = amplitudes.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(QsimError::NotPowerOfTwo(len));
        }
        Ok(Self {
            n_qubits: len.trailing_zeros() as usize,
            amplitudes,
        })
    }

    /// Amplitude encoding: `amplitudes[j] = x[j] / ‖x‖`.
    ///
    /// The input must already have length 2^n; zero-padding is the caller's job.
    pub fn amplitude_encode(x: &[f64]) -> Result<Self> {
        let len = x.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(QsimError::NotPowerOfTwo(len));
        }
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 1e-12) {
            return Err(QsimError::ZeroNorm(norm));
        }
        Ok(Self {
            n_qubits: len.trailing_zeros() as usize,
            amplitudes: x.iter().map(|&v| Complex64::new(v / norm, 0.0)).collect(),
        })
    }

    /// Encodes into a register of a given width, rejecting mismatched lengths.
    pub fn amplitude_encode_into(x: &[f64], n_qubits: usize) -> Result<Self> {
        if x.len() != 1usize << n_qubits {
            return Err(QsimError::LengthMismatch {
                got: x.len(),
                n_qubits,
            });
        }
        Self::amplitude_encode(x)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes
            .iter()
            .map(|a| a.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// ⟨self|other⟩
    pub fn inner(&self, other: &StateVector) -> Complex64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    fn check_qubit(&self, qubit: usize) -> Result<()> {
        if qubit >= self.n_qubits {
            Err(QsimError::QubitOutOfRange {
                qubit,
                n_qubits: self.n_qubits,
            })
        } else {
            Ok(())
        }
    }

    /// Visits each amplitude pair `(i0, i1)` differing only in `qubit`, with
    /// bit `qubit` clear in `i0`.
    #[inline]
    fn for_each_pair(&mut self, qubit: usize, mut f: impl FnMut(&mut Complex64, &mut Complex64)) {
        let stride = 1usize << qubit;
        for chunk in self.amplitudes.chunks_exact_mut(stride << 1) {
            let (lo, hi) = chunk.split_at_mut(stride);
            for (a0, a1) in lo.iter_mut().zip(hi.iter_mut()) {
                f(a0, a1);
            }
        }
    }

    /// RY(θ) = [[cos θ/2, −sin θ/2], [sin θ/2, cos θ/2]]
    pub fn apply_ry(&mut self, qubit: usize, theta: f64) -> Result<()> {
        self.check_qubit(qubit)?;
        let (s, c) = (theta / 2.0).sin_cos();
        self.for_each_pair(qubit, |a0, a1| {
            let (x0, x1) = (*a0, *a1);
            *a0 = x0 * c - x1 * s;
            *a1 = x0 * s + x1 * c;
        });
        Ok(())
    }

    /// RX(θ) = [[cos θ/2, −i sin θ/2], [−i sin θ/2, cos θ/2]]
    pub fn apply_rx(&mut self, qubit: usize, theta: f64) -> Result<()> {
        self.check_qubit(qubit)?;
        let (s, c) = (theta / 2.0).sin_cos();
        let mis = Complex64::new(0.0, -s);
        self.for_each_pair(qubit, |a0, a1| {
            let (x0, x1) = (*a0, *a1);
            *a0 = x0 * c + x1 * mis;
            *a1 = x0 * mis + x1 * c;
        });
        Ok(())
    }

    pub fn apply_cnot(&mut self, control: usize, target: usize) -> Result<()> {
        self.check_qubit(control)?;
        self.check_qubit(target)?;
        if control == target {
            return Err(QsimError::SameQubit(control));
        }
        let cbit = 1usize << control;
        let tbit = 1usize << target;
        for i in 0..self.amplitudes.len() {
            if i & cbit != 0 && i & tbit == 0 {
                self.amplitudes.swap(i, i | tbit);
            }
        }
        Ok(())
    }

    /// ⟨Z_q⟩ = Σ_j |a_j|² · (+1 if bit q of j is 0, else −1)
    pub fn expectation_z(&self, qubit: usize) -> Result<f64> {
        self.check_qubit(qubit)?;
        let bit = 1usize << qubit;
        Ok(self
            .amplitudes
            .iter()
            .enumerate()
            .map(|(j, a)| {
                if j & bit == 0 {
                    a.norm_sqr()
                } else {
                    -a.norm_sqr()
                }
            })
            .sum())
    }

    /// Applies `Σ_q w_q Z_q` to the state (the result is not normalized).
    fn apply_weighted_z(&self, terms: &[(usize, f64)]) -> StateVector {
        let amplitudes = self
            .amplitudes
            .iter()
            .enumerate()
            .map(|(j, a)| {
                let diag: f64 = terms
                    .iter()
                    .map(|&(q, w)| if j >> q & 1 == 0 { w } else { -w })
                    .sum();
                a * diag
            })
            .collect();
        StateVector {
            n_qubits: self.n_qubits,
            amplitudes,
        }
    }

    /// `Im⟨bra| P_q |self⟩` for a Pauli generator P on `qubit`.
    fn pauli_overlap_im(&self, bra: &StateVector, qubit: usize, axis: Axis) -> f64 {
        let stride = 1usize << qubit;
        let mut acc = Complex64::new(0.0, 0.0);
        for (kc, kb) in self
            .amplitudes
            .chunks_exact(stride << 1)
            .zip(bra.amplitudes.chunks_exact(stride << 1))
        {
            let (k0, k1) = kc.split_at(stride);
            let (b0, b1) = kb.split_at(stride);
            for i in 0..stride {
                acc += match axis {
                    // X|a0,a1⟩ = |a1,a0⟩
                    Axis::X => b0[i].conj() * k1[i] + b1[i].conj() * k0[i],
                    // Y|a0,a1⟩ = |−i a1, i a0⟩
                    Axis::Y => {
                        b0[i].conj() * k1[i] * Complex64::new(0.0, -1.0)
                            + b1[i].conj() * k0[i] * Complex64::new(0.0, 1.0)
                    }
                };
            }
        }
        acc.im
    }
}

/// Rotation axis of a trainable gate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    Y,
    X,
}

impl Axis {
    /// Position of the axis block inside a layer: RY first, then RX.
    pub fn offset(self) -> usize {
        match self {
            Axis::Y => 0,
            Axis::X => 1,
        }
    }
}

/// One gate of the layered circuit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Op {
    Rotation {
        axis: Axis,
        qubit: usize,
        param: usize,
    },
    Cnot {
        control: usize,
        target: usize,
    },
}

/// Layered ansatz: per layer RY on every qubit, RX on every qubit, then a
/// linear CNOT chain `q → q+1` with no wrap-around.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CircuitLayout {
    pub n_qubits: usize,
    pub n_layers: usize,
}

impl CircuitLayout {
    pub fn new(n_qubits: usize, n_layers: usize) -> Self {
        Self { n_qubits, n_layers }
    }

    pub fn n_params(&self) -> usize {
        2 * self.n_qubits * self.n_layers
    }

    pub fn params_per_layer(&self) -> usize {
        2 * self.n_qubits
    }

    /// Flat index of the angle for `(layer, axis, qubit)`: `layer·2n + axis·n + qubit`.
    pub fn param_index(&self, layer: usize, axis: Axis, qubit: usize) -> usize {
        layer * self.params_per_layer() + axis.offset() * self.n_qubits + qubit
    }

    /// Gate sequence in application order.
    pub fn ops(&self) -> impl DoubleEndedIterator<Item = Op> + '_ {
        (0..self.n_layers).flat_map(move |layer| {
            let rotations = [Axis::Y, Axis::X].into_iter().flat_map(move |axis| {
                (0..self.n_qubits).map(move |qubit| Op::Rotation {
                    axis,
                    qubit,
                    param: self.param_index(layer, axis, qubit),
                })
            });
            let chain = (0..self.n_qubits.saturating_sub(1)).map(|q| Op::Cnot {
                control: q,
                target: q + 1,
            });
            rotations.chain(chain).collect::<Vec<_>>()
        })
    }

    fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.n_params() {
            return Err(QsimError::ParameterCount {
                expected: self.n_params(),
                got: params.len(),
            });
        }
        Ok(())
    }

    fn check_state(&self, state: &StateVector) -> Result<()> {
        if state.n_qubits != self.n_qubits {
            return Err(QsimError::LengthMismatch {
                got: state.dim(),
                n_qubits: self.n_qubits,
            });
        }
        Ok(())
    }
}

fn apply_op(state: &mut StateVector, op: Op, params: &[f64], inverse: bool) -> Result<()> {
    match op {
        Op::Rotation { axis, qubit, param } => {
            let theta = if inverse { -params[param] } else { params[param] };
            match axis {
                Axis::Y => state.apply_ry(qubit, theta),
                Axis::X => state.apply_rx(qubit, theta),
            }
        }
        Op::Cnot { control, target } => state.apply_cnot(control, target),
    }
}

/// Runs every layer of the circuit on `input`.
pub fn run_circuit(layout: &CircuitLayout, params: &[f64], input: &StateVector) -> Result<StateVector> {
    layout.check_params(params)?;
    layout.check_state(input)?;
    let mut state = input.clone();
    for op in layout.ops() {
        apply_op(&mut state, op, params, false)?;
    }
    Ok(state)
}

/// Output state together with the gradient of `Σ_q w_q ⟨Z_q⟩`.
#[derive(Debug, Clone)]
pub struct AdjointResult {
    pub output: StateVector,
    pub gradient: Vec<f64>,
}

/// Gradient of the weighted readout `Σ_q w_q ⟨Z_q⟩` with respect to every
/// circuit angle, from one forward pass and one reverse sweep.
///
/// For `U = exp(−iθP/2)` the derivative contribution is `Im⟨λ|P|ψ⟩`, where
/// `ψ` is the state right after the gate and `λ` the back-propagated
/// observable state at the same point.
pub fn adjoint_gradient(
    layout: &CircuitLayout,
    params: &[f64],
    input: &StateVector,
    observable: &[(usize, f64)],
) -> Result<AdjointResult> {
    for &(q, _) in observable {
        if q >= layout.n_qubits {
            return Err(QsimError::QubitOutOfRange {
                qubit: q,
                n_qubits: layout.n_qubits,
            });
        }
    }
    let output = run_circuit(layout, params, input)?;
    let mut ket = output.clone();
    let mut bra = output.apply_weighted_z(observable);
    let mut gradient = vec![0.0; params.len()];
    for op in layout.ops().rev() {
        if let Op::Rotation { axis, qubit, param } = op {
            gradient[param] = ket.pauli_overlap_im(&bra, qubit, axis);
        }
        apply_op(&mut ket, op, params, true)?;
        apply_op(&mut bra, op, params, true)?;
    }
    Ok(AdjointResult { output, gradient })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn assert_amps(state: &StateVector, expected: &[Complex64]) {
        assert_eq!(state.dim(), expected.len());
        for (a, e) in state.amplitudes().iter().zip(expected) {
            assert!((a - e).norm() < 1e-12, "{a} vs {e}");
        }
    }

    #[test]
    fn encode_examples() {
        let s = StateVector::amplitude_encode(&[1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_amps(&s, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        let s = StateVector::amplitude_encode(&[1.0; 4]).unwrap();
        assert_amps(&s, &[c(0.5, 0.0); 4]);
        let s = StateVector::amplitude_encode(&[3.0, 4.0]).unwrap();
        assert_amps(&s, &[c(0.6, 0.0), c(0.8, 0.0)]);
        assert!((s.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn encode_errors() {
        assert_eq!(
            StateVector::amplitude_encode(&[0.0; 4]),
            Err(QsimError::ZeroNorm(0.0))
        );
        assert_eq!(
            StateVector::amplitude_encode(&[1.0, 2.0, 3.0]),
            Err(QsimError::NotPowerOfTwo(3))
        );
        assert!(matches!(
            StateVector::amplitude_encode_into(&[1.0, 0.0], 2),
            Err(QsimError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn ry_examples() {
        let mut s = StateVector::amplitude_encode(&[0.6, 0.8]).unwrap();
        s.apply_ry(0, 0.0).unwrap();
        assert_amps(&s, &[c(0.6, 0.0), c(0.8, 0.0)]);

        let mut s = StateVector::zero(1).unwrap();
        s.apply_ry(0, PI).unwrap();
        assert_amps(&s, &[c(0.0, 0.0), c(1.0, 0.0)]);

        let mut s = StateVector::zero(1).unwrap();
        s.apply_ry(0, PI / 2.0).unwrap();
        assert_amps(&s, &[c(FRAC_1_SQRT_2, 0.0), c(FRAC_1_SQRT_2, 0.0)]);
    }

    #[test]
    fn rx_examples() {
        let mut s = StateVector::zero(1).unwrap();
        s.apply_rx(0, 0.0).unwrap();
        assert_amps(&s, &[c(1.0, 0.0), c(0.0, 0.0)]);

        let mut s = StateVector::zero(1).unwrap();
        s.apply_rx(0, PI).unwrap();
        assert_amps(&s, &[c(0.0, 0.0), c(0.0, -1.0)]);

        let mut s = StateVector::zero(1).unwrap();
        s.apply_rx(0, PI / 2.0).unwrap();
        assert_amps(&s, &[c(FRAC_1_SQRT_2, 0.0), c(0.0, -FRAC_1_SQRT_2)]);
    }

    #[test]
    fn cnot_examples() {
        // |q1 q0⟩ written with qubit 0 as the low bit; "|10⟩" in the control-first
        // notation means qubit 0 = 1, i.e. index 1.
        let mut s = StateVector::zero(2).unwrap();
        s.apply_cnot(0, 1).unwrap();
        assert_eq!(s, StateVector::zero(2).unwrap());

        let mut s = StateVector::basis(2, 0b01).unwrap();
        s.apply_cnot(0, 1).unwrap();
        assert_eq!(s, StateVector::basis(2, 0b11).unwrap());

        let h = FRAC_1_SQRT_2;
        let mut s =
            StateVector::from_amplitudes(vec![c(h, 0.0), c(h, 0.0), c(0.0, 0.0), c(0.0, 0.0)])
                .unwrap();
        s.apply_cnot(0, 1).unwrap();
        assert_amps(&s, &[c(h, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(h, 0.0)]);
    }

    #[test]
    fn gate_errors() {
        let mut s = StateVector::zero(2).unwrap();
        assert_eq!(
            s.apply_ry(2, 0.1),
            Err(QsimError::QubitOutOfRange {
                qubit: 2,
                n_qubits: 2
            })
        );
        assert!(s.apply_rx(5, 0.1).is_err());
        assert_eq!(s.apply_cnot(1, 1), Err(QsimError::SameQubit(1)));
        assert!(s.apply_cnot(0, 2).is_err());
        assert!(s.expectation_z(2).is_err());
    }

    #[test]
    fn expectation_examples() {
        let s = StateVector::zero(3).unwrap();
        for q in 0..3 {
            assert_eq!(s.expectation_z(q).unwrap(), 1.0);
        }
        let s = StateVector::basis(3, 0b100).unwrap();
        assert_eq!(s.expectation_z(2).unwrap(), -1.0);
        assert_eq!(s.expectation_z(0).unwrap(), 1.0);
        let s = StateVector::amplitude_encode(&[1.0; 8]).unwrap();
        for q in 0..3 {
            assert!(s.expectation_z(q).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn layout_ops_order() {
        let layout = CircuitLayout::new(3, 2);
        let ops: Vec<_> = layout.ops().collect();
        assert_eq!(ops.len(), 2 * (6 + 2));
        assert_eq!(
            ops[0],
            Op::Rotation {
                axis: Axis::Y,
                qubit: 0,
                param: 0
            }
        );
        assert_eq!(
            ops[3],
            Op::Rotation {
                axis: Axis::X,
                qubit: 0,
                param: 3
            }
        );
        assert_eq!(
            ops[6],
            Op::Cnot {
                control: 0,
                target: 1
            }
        );
        assert_eq!(
            ops[7],
            Op::Cnot {
                control: 1,
                target: 2
            }
        );
        assert_eq!(layout.param_index(1, Axis::X, 2), 6 + 3 + 2);
    }

    #[test]
    fn run_circuit_examples() {
        let layout = CircuitLayout::new(3, 2);
        let zero = StateVector::zero(3).unwrap();
        let out = run_circuit(&layout, &vec![0.0; layout.n_params()], &zero).unwrap();
        assert_eq!(out, zero);

        let layout = CircuitLayout::new(1, 1);
        let out = run_circuit(&layout, &[PI, 0.0], &StateVector::zero(1).unwrap()).unwrap();
        assert_amps(&out, &[c(0.0, 0.0), c(1.0, 0.0)]);

        assert_eq!(
            run_circuit(&layout, &[0.0], &StateVector::zero(1).unwrap()),
            Err(QsimError::ParameterCount {
                expected: 2,
                got: 1
            })
        );
    }

    #[test]
    fn adjoint_single_rotation() {
        // RY(θ) then RX(0): ⟨Z⟩ = cos θ.
        let layout = CircuitLayout::new(1, 1);
        let zero = StateVector::zero(1).unwrap();
        let g = adjoint_gradient(&layout, &[0.0, 0.0], &zero, &[(0, 1.0)]).unwrap();
        assert!(g.gradient[0].abs() < 1e-15);
        let g = adjoint_gradient(&layout, &[PI / 2.0, 0.0], &zero, &[(0, 1.0)]).unwrap();
        assert!((g.gradient[0] + 1.0).abs() < 1e-12);
        assert!(g.gradient[1].abs() < 1e-12);
    }

    #[test]
    fn adjoint_rejects_bad_observable() {
        let layout = CircuitLayout::new(2, 1);
        let zero = StateVector::zero(2).unwrap();
        assert!(adjoint_gradient(&layout, &[0.0; 4], &zero, &[(2, 1.0)]).is_err());
        assert!(adjoint_gradient(&layout, &[0.0; 3], &zero, &[(0, 1.0)]).is_err());
    }

    #[test]
    fn unitarity_round_trip() {
        let mut s = StateVector::amplitude_encode(&[0.1, -0.4, 0.3, 0.2, 0.9, -0.1, 0.0, 0.5]).unwrap();
        let orig = s.clone();
        s.apply_ry(1, 0.73).unwrap();
        s.apply_ry(1, -0.73).unwrap();
        s.apply_rx(2, -1.9).unwrap();
        s.apply_rx(2, 1.9).unwrap();
        s.apply_cnot(2, 0).unwrap();
        s.apply_cnot(2, 0).unwrap();
        assert_amps(&s, orig.amplitudes());
    }
}
