//! Three-spin NV register: electron spin-1, one ¹³C and the host ¹⁴N.
//!
//! All frequencies are angular, in rad/µs; gyromagnetic ratios are in
//! rad/µs per gauss. Spin-1 factors use the basis order m = +1, 0, −1 and the
//! ¹³C factor m = +½, −½.

mod compose;
mod noise;
mod physics;
mod pulse;

pub use compose::*;
pub use noise::*;
pub use physics::*;
pub use pulse::*;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::spin::{ops, CMatrix, HilbertSpace, Operator, StateVector, C64, ONE};

/// Register Hamiltonian constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NVParams {
    pub d: f64,
    pub gamma_e: f64,
    pub gamma_c: f64,
    pub gamma_n: f64,
    pub q: f64,
    pub j_c: f64,
    pub j_n: f64,
    /// Static field, gauss.
    pub b0: f64,
}

impl Default for NVParams {
    fn default() -> Self {
        let tau = 2.0 * PI;
        Self {
            d: tau * 2870.0,
            gamma_e: tau * 2.8,
            gamma_c: tau * 1.1e-3,
            gamma_n: tau * 0.3077e-3,
            q: tau * -5.1,
            j_c: tau * 14.0,
            j_n: tau * 2.1,
            b0: 500.0,
        }
    }
}

impl NVParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("d", self.d),
            ("gamma_e", self.gamma_e),
            ("gamma_c", self.gamma_c),
            ("gamma_n", self.gamma_n),
            ("j_c", self.j_c),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(name, "must be positive"));
            }
        }
        if !(self.j_n.is_finite() && self.j_n >= 0.0) {
            return Err(invalid("j_n", "J_N ≥ 0 required"));
        }
        if !(self.b0.is_finite() && self.b0 >= 0.0) {
            return Err(invalid("b0", "B0 ≥ 0 required"));
        }
        if !self.q.is_finite() {
            return Err(invalid("q", "must be finite"));
        }
        Ok(())
    }

    /// Effective hybridization of the simulated model, `J_C / 4`.
    pub fn mapped_delta(&self) -> f64 {
        self.j_c / 4.0
    }

    /// Splitting between the two ¹⁴N transitions out of m_N = 0.
    pub fn nitrogen_leakage_detuning(&self) -> f64 {
        2.0 * self.gamma_n * self.b0
    }
}

/// Spin labels of the register factors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spin {
    Electron,
    C13,
    N14,
}

impl Spin {
    pub fn slot(self) -> usize {
        match self {
            Spin::Electron => 0,
            Spin::C13 => 1,
            Spin::N14 => 2,
        }
    }
}

/// Index of a spin-1 level `m` in the basis +1, 0, −1.
pub fn spin1_index(m: i8) -> usize {
    match m {
        1 => 0,
        0 => 1,
        -1 => 2,
        _ => panic!("spin-1 projection out of range: {m}"),
    }
}

/// Cached spin operators on the 18-dimensional register.
#[derive(Clone, Debug)]
pub struct Register {
    space: HilbertSpace,
    pub s_z: CMatrix,
    pub s_plus: CMatrix,
    pub c_z: CMatrix,
    pub c_plus: CMatrix,
    pub n_z: CMatrix,
    pub n_z2: CMatrix,
}

impl Default for Register {
    fn default() -> Self {
        Self::new()
    }
}

impl Register {
    pub fn new() -> Self {
        let space = register_space();
        let on = |m: &CMatrix, slot| Operator::embed(m, slot, &space).expect("static").into_matrix();
        let nz = ops::spin1_z();
        Self {
            s_z: on(&ops::spin1_z(), 0),
            s_plus: on(&ops::spin1_plus(), 0),
            c_z: on(&ops::spin_half_z(), 1),
            c_plus: on(&ops::sigma_plus(), 1),
            n_z: on(&nz, 2),
            n_z2: on(&(&nz * &nz), 2),
            space,
        }
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    pub fn spin_z(&self, spin: Spin) -> &CMatrix {
        match spin {
            Spin::Electron => &self.s_z,
            Spin::C13 => &self.c_z,
            Spin::N14 => &self.n_z,
        }
    }

    /// Projector onto a ¹⁴N level.
    pub fn n_projector(&self, m: i8) -> CMatrix {
        Operator::embed(&ops::projector(3, spin1_index(m)), 2, &self.space)
            .expect("static")
            .into_matrix()
    }

    /// Projector onto an electron level.
    pub fn e_projector(&self, m: i8) -> CMatrix {
        Operator::embed(&ops::projector(3, spin1_index(m)), 0, &self.space)
            .expect("static")
            .into_matrix()
    }
}

/// The electron ⊗ ¹³C ⊗ ¹⁴N space, dimensions (3, 2, 3).
pub fn register_space() -> HilbertSpace {
    HilbertSpace::new(vec![3, 2, 3]).expect("static dims")
}

/// Flat index of `|m_S, m_C, m_N⟩`; `c_up` selects m_C = +½.
pub fn register_index(m_s: i8, c_up: bool, m_n: i8) -> usize {
    spin1_index(m_s) * 6 + usize::from(!c_up) * 3 + spin1_index(m_n)
}

/// Laboratory-frame static Hamiltonian
/// `D S_z² + γe B0 S_z − γC B0 C_z + Q N_z² − γN B0 N_z + J_C S_z C_z + J_N S_z N_z`.
pub fn build_h0(p: &NVParams) -> Result<Operator> {
    p.validate()?;
    let r = Register::new();
    let s2 = &r.s_z * &r.s_z;
    let m = &s2 * C64::from(p.d) + &r.s_z * C64::from(p.gamma_e * p.b0) - &r.c_z * C64::from(p.gamma_c * p.b0)
        + &r.n_z2 * C64::from(p.q)
        - &r.n_z * C64::from(p.gamma_n * p.b0)
        + &r.s_z * &r.c_z * C64::from(p.j_c)
        + &r.s_z * &r.n_z * C64::from(p.j_n);
    Operator::new(r.space().clone(), m)
}

/// Generator of the reference rotating frame: electron at the m_N = +1
/// line of the 0 ↔ +1 transition, ¹³C at its m_S = 0 Larmor frequency, ¹⁴N
/// at its m_S = 0, 0 ↔ +1 line through an `N_z²` frame.
pub fn frame_generator(p: &NVParams) -> Operator {
    let r = Register::new();
    let w_e = p.d + p.gamma_e * p.b0 + p.j_n;
    let w_c = -p.gamma_c * p.b0;
    let w_n = p.q - p.gamma_n * p.b0;
    let m = &r.s_z * C64::from(w_e) + &r.c_z * C64::from(w_c) + &r.n_z2 * C64::from(w_n);
    Operator::new(r.space().clone(), m).expect("18x18")
}

/// Static Hamiltonian in the reference rotating frame:
/// `D (S_z² − S_z) + J_C S_z C_z + J_N S_z (N_z − 1) + γN B0 (N_z² − N_z)`.
pub fn rotating_frame_hamiltonian(p: &NVParams) -> CMatrix {
    let r = Register::new();
    let id = CMatrix::identity(18, 18);
    let s2 = &r.s_z * &r.s_z;
    (&s2 - &r.s_z) * C64::from(p.d)
        + &r.s_z * &r.c_z * C64::from(p.j_c)
        + &r.s_z * (&r.n_z - &id) * C64::from(p.j_n)
        + (&r.n_z2 - &r.n_z) * C64::from(p.gamma_n * p.b0)
}

/// The three-qubit computational register σ ⊗ τ ⊗ ν.
pub fn qubit_space() -> HilbertSpace {
    HilbertSpace::new(vec![2, 2, 2]).expect("static dims")
}

/// Map between the qubit register and the physical levels:
/// σ: |0⟩ ↦ m_S = +1, |1⟩ ↦ m_S = 0; τ: |0⟩ ↦ m_C = +½;
/// ν: |0⟩ ↦ m_N = 0, |1⟩ ↦ m_N = +1.
#[derive(Clone, Debug)]
pub struct QubitEmbedding {
    isometry: CMatrix,
}

pub const SIGMA_LEVELS: [i8; 2] = [1, 0];
pub const NU_LEVELS: [i8; 2] = [0, 1];

impl Default for QubitEmbedding {
    fn default() -> Self {
        Self::new()
    }
}

impl QubitEmbedding {
    pub fn new() -> Self {
        let mut iso = CMatrix::zeros(18, 8);
        for s in 0..2 {
            for t in 0..2 {
                for n in 0..2 {
                    let col = s * 4 + t * 2 + n;
                    iso[(register_index(SIGMA_LEVELS[s], t == 0, NU_LEVELS[n]), col)] = ONE;
                }
            }
        }
        Self { isometry: iso }
    }

    pub fn isometry(&self) -> &CMatrix {
        &self.isometry
    }

    /// `E† A E`.
    pub fn restrict(&self, a: &CMatrix) -> Operator {
        Operator::new(qubit_space(), self.isometry.adjoint() * a * &self.isometry).expect("8x8")
    }

    pub fn embed_state(&self, psi: &StateVector) -> Result<StateVector> {
        if psi.dim() != 8 {
            return Err(crate::Error::DimensionMismatch { expected: 8, got: psi.dim() });
        }
        StateVector::new(register_space(), &self.isometry * psi.amplitudes())
    }

    /// Worst-case population lost from the computational subspace, over the
    /// computational basis states.
    pub fn leakage(&self, u: &CMatrix) -> f64 {
        let block = self.isometry.adjoint() * u * &self.isometry;
        (0..8)
            .map(|j| 1.0 - block.column(j).norm_squared())
            .fold(0.0, f64::max)
    }
}

/// Qubit-level image of the ¹³C coupling, `(J_C/4)(σzτz + τz)`.
pub fn projected_carbon_coupling(j_c: f64) -> CMatrix {
    let z = ops::sigma_z();
    let id = ops::identity(2);
    (z.kronecker(&z).kronecker(&id) + id.kronecker(&z).kronecker(&id)) * C64::from(j_c / 4.0)
}

/// A register product state from per-spin amplitudes.
pub fn product_state(electron: [C64; 3], carbon: [C64; 2], nitrogen: [C64; 3]) -> Result<StateVector> {
    let part = |v: &[C64]| StateVector::normalized(HilbertSpace::new(vec![v.len()]).unwrap(), crate::spin::CVector::from_column_slice(v));
    StateVector::product(&[part(&electron)?, part(&carbon)?, part(&nitrogen)?])
}
