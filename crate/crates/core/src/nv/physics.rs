use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{build_h0, qubit_space, register_index, register_space, rotating_frame_hamiltonian, NVParams, PulseElement, PulseKind, Register, Spin, Target};
use crate::error::Result;
use crate::spin::{ops, CMatrix, CVector, Operator, C64};

/// Simulation fidelity level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    /// Ideal unitaries on the eight-dimensional qubit register.
    Gate,
    /// Time-dependent evolution of the full 18-level register.
    Pulse,
    /// Pulse tier with quasi-static electron detuning noise.
    Noisy,
}

/// Treatment of non-selective hard microwave pulses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HardPulseModel {
    /// Drive only, with the m_S = −1 offset kept so that leakage is tracked.
    #[default]
    Impulsive,
    /// Drive on top of the full static Hamiltonian for the pulse duration.
    FiniteWidth,
}

/// Treatment of ¹⁴N-selective microwave pulses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectivityModel {
    /// The drive acts only on the targeted ¹⁴N level.
    #[default]
    Resolved,
    /// The drive acts on every ¹⁴N level; off-target levels see it detuned by
    /// their hyperfine shift.
    Detuned,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PulseModel {
    #[serde(default)]
    pub hard: HardPulseModel,
    #[serde(default)]
    pub selectivity: SelectivityModel,
}

pub(crate) fn expm_herm(h: &CMatrix, t: f64) -> CMatrix {
    let off_diagonal = h.iter().enumerate().any(|(idx, v)| idx % h.nrows() != idx / h.nrows() && *v != C64::from(0.0));
    if !off_diagonal {
        return expm_diag(h, t);
    }
    let eig = nalgebra::SymmetricEigen::new(h.clone());
    let vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    crate::spin::exp_from_eig(&vals, &eig.eigenvectors, t)
}

fn expm_diag(d: &CMatrix, t: f64) -> CMatrix {
    let n = d.nrows();
    let mut u = CMatrix::zeros(n, n);
    for i in 0..n {
        u[(i, i)] = C64::from_polar(1.0, -d[(i, i)].re * t);
    }
    u
}

fn raising_drive(op_plus: &CMatrix, scale: f64, phase: f64) -> CMatrix {
    let a = op_plus * C64::from_polar(scale, -phase);
    &a + a.adjoint()
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
struct Key {
    kind: PulseKind,
    duration: u64,
    amplitude: u64,
    phase: u64,
    target: Target,
}

impl From<&PulseElement> for Key {
    fn from(e: &PulseElement) -> Self {
        Self {
            kind: e.kind,
            duration: e.duration_us.to_bits(),
            amplitude: e.amplitude_gauss.to_bits(),
            phase: e.phase_rad.to_bits(),
            target: e.target,
        }
    }
}

/// Propagates schedules on the 18-level register in the reference rotating
/// frame. Element propagators are cached, so repeated slices cost one matrix
/// product each.
#[derive(Clone, Debug)]
pub struct PulseSimulator {
    params: NVParams,
    model: PulseModel,
    reg: Register,
    h_static: CMatrix,
    leak_offset: CMatrix,
    detuning: f64,
    cache: HashMap<Key, (CMatrix, bool)>,
}

impl std::fmt::Debug for Key {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?}", self.kind)
    }
}

impl PulseSimulator {
    pub fn new(params: NVParams, model: PulseModel) -> Result<Self> {
        params.validate()?;
        let reg = Register::new();
        let s2 = &reg.s_z * &reg.s_z;
        let leak_offset = (&s2 - &reg.s_z) * C64::from(params.d);
        Ok(Self {
            h_static: rotating_frame_hamiltonian(&params),
            params,
            model,
            reg,
            leak_offset,
            detuning: 0.0,
            cache: HashMap::new(),
        })
    }

    /// Quasi-static electron detuning `δ S_z` added during every element that
    /// has a static part.
    pub fn with_detuning(mut self, delta: f64) -> Self {
        self.set_detuning(delta);
        self
    }

    pub fn set_detuning(&mut self, delta: f64) {
        if delta != self.detuning {
            self.detuning = delta;
            self.cache.retain(|_, (_, uses_static)| !*uses_static);
        }
    }

    pub fn params(&self) -> &NVParams {
        &self.params
    }

    pub fn model(&self) -> PulseModel {
        self.model
    }

    fn static_h(&self) -> CMatrix {
        &self.h_static + &self.reg.s_z * C64::from(self.detuning)
    }

    fn full_mw(&self, e: &PulseElement) -> bool {
        let resolved = self.model.selectivity == SelectivityModel::Resolved;
        e.kind == PulseKind::MwSelective
            || self.model.hard == HardPulseModel::FiniteWidth
            || matches!(e.target, Target::NLevel(_)) && !resolved
    }

    fn uses_static(&self, e: &PulseElement) -> bool {
        match e.kind {
            PulseKind::FrameZ => false,
            PulseKind::MwResonant | PulseKind::MwSelective | PulseKind::ElectronFlip => self.full_mw(e),
            _ => true,
        }
    }

    fn compute(&self, e: &PulseElement) -> CMatrix {
        let p = &self.params;
        let r = &self.reg;
        let t = e.duration_us;
        match e.kind {
            PulseKind::FrameZ => match e.target {
                Target::Spin(s) => expm_diag(r.spin_z(s), e.phase_rad),
                _ => unreachable!("validated"),
            },
            PulseKind::FreeEvolution => expm_herm(&self.static_h(), t),
            PulseKind::MwResonant | PulseKind::MwSelective | PulseKind::ElectronFlip => {
                let scale = p.gamma_e * e.amplitude_gauss / (4.0 * std::f64::consts::SQRT_2);
                let mut w = raising_drive(&r.s_plus, scale, e.phase_rad);
                let (offset, resolved) = match e.target {
                    Target::NLevel(m) => (p.j_n * (f64::from(m) - 1.0), self.model.selectivity == SelectivityModel::Resolved),
                    _ => (0.0, false),
                };
                if let (Target::NLevel(m), true) = (e.target, resolved) {
                    w = &w * r.n_projector(m);
                }
                if self.full_mw(e) {
                    let h = self.static_h() + w - &r.s_z * C64::from(offset);
                    expm_diag(&r.s_z, offset * t) * expm_herm(&h, t)
                } else {
                    expm_herm(&(&self.leak_offset + w), t)
                }
            }
            PulseKind::RfC => {
                let mut w = raising_drive(&r.c_plus, p.gamma_c * e.amplitude_gauss / 2.0, e.phase_rad);
                let offset = match e.target {
                    Target::ELevel(m) => {
                        if self.model.selectivity == SelectivityModel::Resolved {
                            w = &w * r.e_projector(m);
                        }
                        p.j_c * f64::from(m)
                    }
                    _ => 0.0,
                };
                let h = self.static_h() + w - &r.c_z * C64::from(offset);
                expm_diag(&r.c_z, offset * t) * expm_herm(&h, t)
            }
            PulseKind::RfN => {
                let mut w = raising_drive(&nitrogen_lowering(), p.gamma_n * e.amplitude_gauss / 2.0, e.phase_rad);
                let offset = match e.target {
                    Target::ELevel(m) => {
                        if self.model.selectivity == SelectivityModel::Resolved {
                            w = &w * r.e_projector(m);
                        }
                        p.j_n * f64::from(m)
                    }
                    _ => 0.0,
                };
                let h = self.static_h() + w - &r.n_z2 * C64::from(offset);
                expm_diag(&r.n_z2, offset * t) * expm_herm(&h, t)
            }
        }
    }

    pub fn element(&mut self, e: &PulseElement) -> Result<CMatrix> {
        e.validate()?;
        let key = Key::from(e);
        if let Some((u, _)) = self.cache.get(&key) {
            return Ok(u.clone());
        }
        let u = self.compute(e);
        self.cache.insert(key, (u.clone(), self.uses_static(e)));
        Ok(u)
    }

    /// Product of element propagators in time order.
    pub fn propagator<'a>(&mut self, elements: impl IntoIterator<Item = &'a PulseElement>) -> Result<CMatrix> {
        let mut u = CMatrix::identity(18, 18);
        for e in elements {
            u = self.element(e)? * u;
        }
        Ok(u)
    }

    pub fn evolve<'a>(&mut self, psi: &CVector, elements: impl IntoIterator<Item = &'a PulseElement>) -> Result<CVector> {
        let mut v = psi.clone();
        for e in elements {
            v = self.element(e)? * v;
        }
        Ok(v)
    }
}

/// `|0⟩⟨+1| + |0⟩⟨−1|` on the ¹⁴N factor, the qubit-frame raising part of the
/// RF drive. With |0⟩_N ↦ m_N = 0 and |1⟩_N ↦ m_N = +1 its computational
/// block is the qubit `|0⟩⟨1|`.
fn nitrogen_lowering() -> CMatrix {
    let mut m = CMatrix::zeros(3, 3);
    m[(1, 0)] = C64::new(1.0, 0.0);
    m[(1, 2)] = C64::new(1.0, 0.0);
    Operator::embed(&m, 2, &register_space()).expect("static").into_matrix()
}

/// Qubit-level operators on σ ⊗ τ ⊗ ν.
struct QubitOps {
    s_z: CMatrix,
    c_z: CMatrix,
    n_z: CMatrix,
    sigma_plus: CMatrix,
    tau_plus: CMatrix,
    nu_plus: CMatrix,
}

impl QubitOps {
    fn new() -> Self {
        let sp = qubit_space();
        let on = |m: CMatrix, slot| Operator::embed(&m, slot, &sp).expect("static").into_matrix();
        Self {
            s_z: on(ops::diag(&[1.0, 0.0]), 0),
            c_z: on(ops::spin_half_z(), 1),
            n_z: on(ops::diag(&[0.0, 1.0]), 2),
            sigma_plus: on(ops::sigma_plus(), 0),
            tau_plus: on(ops::sigma_plus(), 1),
            nu_plus: on(ops::sigma_plus(), 2),
        }
    }

    fn sigma_projector(&self, m_s: i8) -> CMatrix {
        let idx = super::SIGMA_LEVELS.iter().position(|&l| l == m_s);
        let sp = qubit_space();
        match idx {
            Some(i) => Operator::embed(&ops::projector(2, i), 0, &sp).unwrap().into_matrix(),
            None => CMatrix::zeros(8, 8),
        }
    }

    fn nu_projector(&self, m_n: i8) -> CMatrix {
        let idx = super::NU_LEVELS.iter().position(|&l| l == m_n);
        let sp = qubit_space();
        match idx {
            Some(i) => Operator::embed(&ops::projector(2, i), 2, &sp).unwrap().into_matrix(),
            None => CMatrix::zeros(8, 8),
        }
    }

    fn spin_z(&self, s: Spin) -> &CMatrix {
        match s {
            Spin::Electron => &self.s_z,
            Spin::C13 => &self.c_z,
            Spin::N14 => &self.n_z,
        }
    }
}

/// Qubit-level static Hamiltonian `J_C S_z C_z + J_N S_z (N_z − 1) + δ S_z`.
pub fn qubit_static_hamiltonian(p: &NVParams, detuning: f64) -> CMatrix {
    let q = QubitOps::new();
    let id = CMatrix::identity(8, 8);
    &q.s_z * &q.c_z * C64::from(p.j_c) + &q.s_z * (&q.n_z - id) * C64::from(p.j_n) + &q.s_z * C64::from(detuning)
}

/// Ideal qubit-level action of one element: perfect selectivity, impulsive
/// hard pulses, no leakage levels.
pub fn gate_element_unitary(p: &NVParams, e: &PulseElement) -> Result<Operator> {
    e.validate()?;
    let q = QubitOps::new();
    let h0 = qubit_static_hamiltonian(p, 0.0);
    let t = e.duration_us;
    let m = match e.kind {
        PulseKind::FrameZ => match e.target {
            Target::Spin(s) => expm_diag(q.spin_z(s), e.phase_rad),
            _ => unreachable!("validated"),
        },
        PulseKind::FreeEvolution => expm_herm(&h0, t),
        PulseKind::MwResonant | PulseKind::ElectronFlip | PulseKind::MwSelective => {
            let mut w = raising_drive(&q.sigma_plus, p.gamma_e * e.amplitude_gauss / 4.0, e.phase_rad);
            let offset = match e.target {
                Target::NLevel(m) => {
                    w = &w * q.nu_projector(m);
                    p.j_n * (f64::from(m) - 1.0)
                }
                _ => 0.0,
            };
            if e.kind == PulseKind::MwSelective {
                let h = &h0 + w - &q.s_z * C64::from(offset);
                expm_diag(&q.s_z, offset * t) * expm_herm(&h, t)
            } else {
                expm_herm(&w, t)
            }
        }
        PulseKind::RfC | PulseKind::RfN => {
            let (plus, gamma, gen, coupling) = if e.kind == PulseKind::RfC {
                (&q.tau_plus, p.gamma_c, &q.c_z, p.j_c)
            } else {
                (&q.nu_plus, p.gamma_n, &q.n_z, p.j_n)
            };
            let manifold = match e.target {
                Target::ELevel(m) => m,
                _ => 0,
            };
            let w = raising_drive(plus, gamma * e.amplitude_gauss / 2.0, e.phase_rad) * q.sigma_projector(manifold);
            let offset = coupling * f64::from(manifold);
            let h = &h0 + w - gen * C64::from(offset);
            expm_diag(gen, offset * t) * expm_herm(&h, t)
        }
    };
    Operator::new(qubit_space(), m)
}

/// Gate-tier propagator of a sequence of elements on the qubit register.
pub fn gate_schedule_unitary<'a>(p: &NVParams, elements: impl IntoIterator<Item = &'a PulseElement>) -> Result<Operator> {
    let mut u = Operator::identity(&qubit_space());
    for e in elements {
        u = &gate_element_unitary(p, e)? * &u;
    }
    Ok(u)
}

/// Result of [`apply_pulse`].
#[derive(Clone, Debug)]
pub struct PulseOutcome {
    pub propagator: Operator,
    /// The carrier sits within 5% of a transition the pulse must not drive.
    pub rwa_warning: bool,
}

fn level_energy(h0: &Operator, m_s: i8, c_up: bool, m_n: i8) -> f64 {
    let i = register_index(m_s, c_up, m_n);
    h0.matrix()[(i, i)].re
}

/// True when the carrier of `e` lies within 5% (relative) of a transition
/// it is not meant to drive: 0 ↔ −1 electron lines for microwaves, 0 ↔ −1
/// nitrogen lines for ¹⁴N RF.
pub fn rwa_warning(p: &NVParams, e: &PulseElement) -> Result<bool> {
    let h0 = build_h0(p)?;
    let near = |carrier: f64, lines: Vec<f64>| lines.iter().any(|l| (carrier.abs() - l.abs()).abs() < 0.05 * carrier.abs());
    Ok(match e.kind {
        PulseKind::MwResonant | PulseKind::MwSelective | PulseKind::ElectronFlip => {
            let offset = match e.target {
                Target::NLevel(m) => p.j_n * (f64::from(m) - 1.0),
                _ => 0.0,
            };
            let carrier = p.d + p.gamma_e * p.b0 + p.j_n + offset;
            let mut lines = Vec::new();
            for c in [true, false] {
                for n in [1i8, 0, -1] {
                    lines.push(level_energy(&h0, -1, c, n) - level_energy(&h0, 0, c, n));
                }
            }
            near(carrier, lines)
        }
        PulseKind::RfN => {
            let m = match e.target {
                Target::ELevel(m) => m,
                _ => 0,
            };
            let carrier = p.q - p.gamma_n * p.b0 + p.j_n * f64::from(m);
            let lines = [true, false]
                .iter()
                .map(|&c| level_energy(&h0, m, c, -1) - level_energy(&h0, m, c, 0))
                .collect();
            near(carrier, lines)
        }
        _ => false,
    })
}

/// Propagator of one element at the requested tier: eight-dimensional at the
/// gate tier, 18-dimensional otherwise.
pub fn apply_pulse(p: &NVParams, e: &PulseElement, tier: Tier, model: PulseModel, detuning: f64) -> Result<PulseOutcome> {
    let propagator = match tier {
        Tier::Gate => gate_element_unitary(p, e)?,
        Tier::Pulse | Tier::Noisy => {
            let mut sim = PulseSimulator::new(*p, model)?.with_detuning(if tier == Tier::Noisy { detuning } else { 0.0 });
            Operator::new(register_space(), sim.element(e)?)?
        }
    };
    Ok(PulseOutcome {
        propagator,
        rwa_warning: rwa_warning(p, e)?,
    })
}
