//! Trotterized evolution under the thin-film Hamiltonian and its compilation
//! onto the NV register.
//!
//! The rotated Hamiltonian `H_S = U₁† H_TI U₁` splits into
//! `H₁ = ε_B τy σy` and `H₂ = A ky σy + A kx σx + Δ τz σz`. Each slice applies
//! `H₂` first, then `H₁ = U₂ (ε_B τz σz) U₂†`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::nv::{
    gate_schedule_unitary, qubit_space, Composer, NVParams, PulseDurations, PulseModel, PulseSchedule, PulseSimulator,
    QubitEmbedding, Section,
};
use crate::spin::{ops, phase_aligned_distance, propagator, CMatrix, Operator, StateVector, C64};
use crate::ti::{build_h_ti, ti_space, Momentum, TIParams};

fn pauli_exp(angle: f64, p: &CMatrix) -> CMatrix {
    // exp(i angle P) for an involutory P
    let d = p.nrows();
    CMatrix::identity(d, d) * C64::from(angle.cos()) + p * C64::new(0.0, angle.sin())
}

fn zz() -> CMatrix {
    ops::sigma_z().kronecker(&ops::sigma_z())
}

fn tau(m: CMatrix) -> CMatrix {
    ops::identity(2).kronecker(&m)
}

fn sigma(m: CMatrix) -> CMatrix {
    m.kronecker(&ops::identity(2))
}

/// `U₁ = exp(iπ/4 τz σz) exp(iπ/4 τx)` on σ ⊗ τ.
pub fn u1() -> Operator {
    Operator::new(ti_space(), pauli_exp(PI / 4.0, &zz()) * pauli_exp(PI / 4.0, &tau(ops::sigma_x()))).expect("4x4")
}

/// `U₂ = exp(iπ/4 τx) exp(iπ/4 σx)` on σ ⊗ τ.
pub fn u2() -> Operator {
    Operator::new(ti_space(), pauli_exp(PI / 4.0, &tau(ops::sigma_x())) * pauli_exp(PI / 4.0, &sigma(ops::sigma_x()))).expect("4x4")
}

pub fn h1(p: &TIParams) -> Operator {
    let m = ops::sigma_y().kronecker(&ops::sigma_y()) * C64::from(p.eps_b);
    Operator::new(ti_space(), m).expect("4x4")
}

pub fn h2(p: &TIParams, k: Momentum) -> Operator {
    let m = sigma(ops::sigma_y()) * C64::from(p.a * k.ky) + sigma(ops::sigma_x()) * C64::from(p.a * k.kx)
        + zz() * C64::from(p.delta);
    Operator::new(ti_space(), m).expect("4x4")
}

#[derive(Clone, Debug)]
pub struct RotatedHamiltonian {
    pub hs: Operator,
    pub h1: Operator,
    pub h2: Operator,
    pub u1: Operator,
    /// `max |U₁† H_TI U₁ − H_S|`.
    pub conjugation_error: f64,
}

const CONJUGATION_TOL: f64 = 1e-12;

/// `H_S = H₁ + H₂` together with the conjugation check against `H_TI`.
pub fn build_hs(p: &TIParams, k: Momentum) -> Result<RotatedHamiltonian> {
    p.validate()?;
    let h1 = h1(p);
    let h2 = h2(p, k);
    let hs = &h1 + &h2;
    let u1 = u1();
    let rotated = &(&u1.dagger() * &build_h_ti(p, k)) * &u1;
    let conjugation_error = rotated.max_abs_diff(&hs);
    let scale = hs.max_abs().max(1.0);
    if conjugation_error > CONJUGATION_TOL * scale {
        return Err(Error::Contract(format!("U1 conjugation error {conjugation_error:.3e}")));
    }
    Ok(RotatedHamiltonian {
        hs,
        h1,
        h2,
        u1,
        conjugation_error,
    })
}

/// Total time `t`, slice count `n`, and field ratio `s = ε_B / Δ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrotterPlan {
    pub t: f64,
    pub n: usize,
    pub s: f64,
}

impl TrotterPlan {
    pub fn new(t: f64, n: usize, s: f64) -> Result<Self> {
        let plan = Self { t, n, s };
        plan.validate()?;
        Ok(plan)
    }

    pub fn for_params(p: &TIParams, t: f64, n: usize) -> Result<Self> {
        Self::new(t, n, p.ratio())
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(invalid("n", "n ≥ 1 required"));
        }
        if !(self.t.is_finite() && self.t >= 0.0) {
            return Err(invalid("t", "t ≥ 0 required"));
        }
        if !(self.s.is_finite() && self.s >= 0.0) {
            return Err(invalid("s", "s ≥ 0 required"));
        }
        Ok(())
    }

    pub fn slice(&self) -> f64 {
        self.t / self.n as f64
    }

    fn params(&self, p: &TIParams) -> Result<TIParams> {
        self.validate()?;
        if (self.s * p.delta - p.eps_b).abs() > 1e-12 * p.delta.max(p.eps_b) {
            return Err(invalid("s", "plan ratio disagrees with ε_B / Δ"));
        }
        Ok(*p)
    }
}

/// `exp(−i H_S t)`.
pub fn exact_rotated_unitary(p: &TIParams, k: Momentum, t: f64) -> Result<Operator> {
    propagator(&build_hs(p, k)?.hs, t)
}

/// One Trotter slice `U₂ exp(−i ε_B δ τzσz) U₂† exp(−i H₂ δ)`.
pub fn trotter_slice(p: &TIParams, k: Momentum, dt: f64) -> Result<Operator> {
    let u2 = u2();
    let zz_op = Operator::new(ti_space(), zz()).expect("4x4");
    let h1_part = &(&u2 * &propagator(&zz_op.scale_re(p.eps_b), dt)?) * &u2.dagger();
    Ok(&h1_part * &propagator(&h2(p, k), dt)?)
}

/// First-order Trotter approximant of `exp(−i H_S t)` with `n` slices.
pub fn trotter_unitary(plan: &TrotterPlan, p: &TIParams, k: Momentum) -> Result<Operator> {
    let p = plan.params(p)?;
    let slice = trotter_slice(&p, k, plan.slice())?;
    let mut u = Operator::identity(&ti_space());
    for _ in 0..plan.n {
        u = &slice * &u;
    }
    Ok(u)
}

/// Microwave drive that reproduces `A (kx σx + ky σy)` on the qubit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Drive {
    pub amplitude_gauss: f64,
    pub phase_rad: f64,
}

/// `¼ γe B1 = A |k|` and `φ = atan2(ky, kx)`; `time_scale` divides the
/// energy when the model is run at a rescaled clock.
pub fn drive_mapping(a: f64, k: Momentum, gamma_e: f64, time_scale: f64) -> Drive {
    Drive {
        amplitude_gauss: 4.0 * a * k.norm() / (gamma_e * time_scale),
        phase_rad: k.ky.atan2(k.kx),
    }
}

pub fn inverse_drive(d: Drive, a: f64, gamma_e: f64, time_scale: f64) -> Momentum {
    let mag = d.amplitude_gauss * gamma_e * time_scale / (4.0 * a);
    Momentum::new(mag * d.phase_rad.cos(), mag * d.phase_rad.sin())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateName {
    U1,
    U1Dagger,
    U2,
    U2Dagger,
    H2Slice,
    ZzSlice,
}

/// Where a gate acts on the ¹⁴N ancilla.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subspace {
    All,
    N1,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub name: GateName,
    pub params: BTreeMap<String, f64>,
    pub subspace: Subspace,
}

impl Gate {
    fn new(name: GateName, subspace: Subspace, params: &[(&str, f64)]) -> Self {
        Self {
            name,
            params: params.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            subspace,
        }
    }

    /// The gate's action on σ ⊗ τ.
    pub fn unitary(&self, p: &TIParams, k: Momentum) -> Result<Operator> {
        let get = |key: &str| self.params.get(key).copied().unwrap_or(0.0);
        Ok(match self.name {
            GateName::U1 => u1(),
            GateName::U1Dagger => u1().dagger(),
            GateName::U2 => u2(),
            GateName::U2Dagger => u2().dagger(),
            GateName::H2Slice => propagator(&h2(p, k), get("duration"))?,
            GateName::ZzSlice => {
                let zz_op = Operator::new(ti_space(), zz()).expect("4x4");
                propagator(&zz_op.scale_re(p.delta), get("duration"))?
            }
        })
    }
}

/// Hardware description for the pulse tier.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Hardware {
    pub nv: NVParams,
    pub durations: PulseDurations,
    pub model: PulseModel,
}

impl Hardware {
    /// Register seconds per model time unit: the model's Δ maps onto `J_C/4`.
    pub fn time_scale(&self, p: &TIParams) -> f64 {
        p.delta / self.nv.mapped_delta()
    }
}

/// A compiled controlled evolution `|0⟩⟨0| ⊗ I + |1⟩⟨1| ⊗ U₁ V U₁†`.
#[derive(Clone, Debug)]
pub struct CompiledCircuit {
    pub plan: TrotterPlan,
    pub gates: Vec<Gate>,
    pub schedule: PulseSchedule,
    pub time_scale: f64,
}

pub fn gate_list(plan: &TrotterPlan, p: &TIParams, k: Momentum) -> Result<Vec<Gate>> {
    plan.params(p)?;
    let dt = plan.slice();
    let mut gates = vec![Gate::new(GateName::U1Dagger, Subspace::All, &[])];
    for _ in 0..plan.n {
        gates.push(Gate::new(GateName::H2Slice, Subspace::N1, &[("duration", dt), ("kx", k.kx), ("ky", k.ky)]));
        gates.push(Gate::new(GateName::U2Dagger, Subspace::All, &[]));
        gates.push(Gate::new(GateName::ZzSlice, Subspace::N1, &[("duration", dt * plan.s)]));
        gates.push(Gate::new(GateName::U2, Subspace::All, &[]));
    }
    gates.push(Gate::new(GateName::U1, Subspace::All, &[]));
    Ok(gates)
}

fn lift(g: &Operator, subspace: Subspace) -> Operator {
    let id2 = ops::identity(2);
    let m = match subspace {
        Subspace::All => g.matrix().kronecker(&id2),
        Subspace::N1 => {
            CMatrix::identity(4, 4).kronecker(&ops::projector(2, 0)) + g.matrix().kronecker(&ops::projector(2, 1))
        }
    };
    Operator::new(qubit_space(), m).expect("8x8")
}

pub const SUBSPACE_TOL: f64 = 1e-9;

/// `(|0⟩_N block, |1⟩_N block)` of an operator on σ ⊗ τ ⊗ ν.
pub fn ancilla_blocks(u: &Operator) -> (CMatrix, CMatrix) {
    let m = u.matrix();
    let pick = |nu: usize| CMatrix::from_fn(4, 4, |r, c| m[(2 * r + nu, 2 * c + nu)]);
    (pick(0), pick(1))
}

/// Spectral distance of the `|0⟩_N` block from the nearest `e^{iα} I`.
pub fn idle_block_deviation(u: &Operator) -> f64 {
    let (b0, _) = ancilla_blocks(u);
    crate::spin::phase_aligned_distance_mat(&b0, &CMatrix::identity(4, 4)).expect("4x4 blocks")
}

/// Gate-tier unitary of a gate list on σ ⊗ τ ⊗ ν.
pub fn gates_unitary(gates: &[Gate], p: &TIParams, k: Momentum) -> Result<Operator> {
    let mut u = Operator::identity(&qubit_space());
    for g in gates {
        u = &lift(&g.unitary(p, k)?, g.subspace) * &u;
    }
    Ok(u)
}

/// Pulse sequence for the gates of a plan, in register time units.
pub fn gate_schedule(gates: &[Gate], p: &TIParams, hw: &Hardware, composer: &mut Composer) -> Result<()> {
    let scale = hw.time_scale(p);
    for g in gates {
        match g.name {
            GateName::U1Dagger => {
                composer.conditional_zz(PI / 4.0);
                composer.carbon_rotation(PI / 2.0, 0.0);
            }
            GateName::U1 => {
                composer.carbon_rotation(PI / 2.0, PI);
                composer.conditional_zz(-PI / 4.0);
            }
            GateName::U2Dagger => {
                composer.carbon_rotation(PI / 2.0, 0.0);
                composer.electron_rotation(PI / 2.0, 0.0);
            }
            GateName::U2 => {
                composer.electron_rotation(PI / 2.0, PI);
                composer.carbon_rotation(PI / 2.0, PI);
            }
            GateName::H2Slice => {
                let k = Momentum::new(g.params["kx"], g.params["ky"]);
                let drive = drive_mapping(p.a, k, hw.nv.gamma_e, scale);
                composer.conditional_drive(drive.amplitude_gauss, drive.phase_rad, g.params["duration"] * scale);
            }
            GateName::ZzSlice => composer.conditional_zz(p.delta * g.params["duration"]),
        }
    }
    Ok(())
}

pub fn compile_controlled_u(plan: &TrotterPlan, p: &TIParams, k: Momentum, hw: &Hardware) -> Result<CompiledCircuit> {
    let gates = gate_list(plan, p, k)?;
    let mut composer = Composer::new(hw.nv, hw.durations)?;
    gate_schedule(&gates, p, hw, &mut composer)?;
    Ok(CompiledCircuit {
        plan: *plan,
        gates,
        schedule: composer.finish(),
        time_scale: hw.time_scale(p),
    })
}

impl CompiledCircuit {
    /// Gate-tier eight-dimensional unitary, checked against the subspace
    /// contract.
    pub fn gate_unitary(&self, p: &TIParams, k: Momentum) -> Result<Operator> {
        let u = gates_unitary(&self.gates, p, k)?;
        let dev = idle_block_deviation(&u);
        if dev > SUBSPACE_TOL {
            return Err(Error::Contract(format!("|0⟩_N block deviates from identity by {dev:.3e}")));
        }
        Ok(u)
    }

    /// Pulse-tier unitary restricted to the qubit subspace, with the
    /// worst-case leakage.
    pub fn pulse_unitary(&self, hw: &Hardware) -> Result<(Operator, f64)> {
        let mut sim = PulseSimulator::new(hw.nv, hw.model)?;
        let u = sim.propagator(self.schedule.simulated())?;
        let emb = QubitEmbedding::new();
        Ok((emb.restrict(&u), emb.leakage(&u)))
    }

    /// Ideal per-element propagation of the schedule on the qubit register.
    pub fn schedule_gate_unitary(&self, hw: &Hardware) -> Result<Operator> {
        gate_schedule_unitary(&hw.nv, self.schedule.simulated())
    }

    pub fn gates_json(&self) -> String {
        serde_json::to_string_pretty(&self.gates).expect("serializable")
    }

    /// Multiply every `H₁` slice duration by `factor`.
    pub fn scale_h1(&mut self, factor: f64) {
        for g in &mut self.gates {
            if g.name == GateName::ZzSlice {
                if let Some(d) = g.params.get_mut("duration") {
                    *d *= factor;
                }
            }
        }
        self.plan.s *= factor;
    }
}

/// Full single-shot run: ancilla Hadamard, controlled evolution, Hadamard
/// (or S†-then-Hadamard for the imaginary part), and the readout swap.
pub fn algorithm_schedule(plan: &TrotterPlan, p: &TIParams, k: Momentum, hw: &Hardware, imaginary: bool) -> Result<PulseSchedule> {
    let gates = gate_list(plan, p, k)?;
    let mut c = Composer::new(hw.nv, hw.durations)?;
    c.set_section(Section::Preparation);
    c.nitrogen_hadamard();
    c.set_section(Section::Evolution);
    gate_schedule(&gates, p, hw, &mut c)?;
    c.set_section(Section::Preparation);
    if imaginary {
        c.nitrogen_phase(PI / 2.0);
    }
    c.nitrogen_hadamard();
    c.readout_swap();
    Ok(c.finish())
}

/// Distance between the Trotter approximant and `exp(−i H_S t)`.
pub fn trotter_error(plan: &TrotterPlan, p: &TIParams, k: Momentum) -> Result<f64> {
    phase_aligned_distance(&trotter_unitary(plan, p, k)?, &exact_rotated_unitary(p, k, plan.t)?)
}

/// Compare `V(Δt)^j |ψ⟩` with `exp(−i H_S jΔt) |ψ⟩` for `j < m`, where `V` is
/// one `n`-slice Trotter step. Returns the minimum, the mean, and the time of
/// the minimum.
pub fn stroboscopic_fidelity(p: &TIParams, k: Momentum, n: usize, dt: f64, m: usize, states: &[StateVector]) -> Result<(f64, f64, f64)> {
    let step = trotter_unitary(&TrotterPlan::for_params(p, dt, n)?, p, k)?;
    let exact_step = exact_rotated_unitary(p, k, dt)?;
    let mut min = (1.0f64, 0.0);
    let mut sum = 0.0;
    let mut count = 0usize;
    for psi in states {
        let mut a = psi.clone();
        let mut b = psi.clone();
        for j in 0..m {
            let f = crate::spin::fidelity(&a, &b)?;
            if f < min.0 {
                min = (f, j as f64 * dt);
            }
            sum += f;
            count += 1;
            a = a.evolve(&step)?;
            b = b.evolve(&exact_step)?;
        }
    }
    Ok((min.0, sum / count as f64, min.1))
}

/// Sampling step `π / (2 E_max)` with `E_max = 1.2 (A|k| + ε_B + Δ)`.
pub fn default_sampling_step(p: &TIParams, k: Momentum) -> f64 {
    PI / (2.0 * energy_bound(p, k))
}

pub fn energy_bound(p: &TIParams, k: Momentum) -> f64 {
    1.2 * (p.a * k.norm() + p.eps_b + p.delta)
}

pub const DEFAULT_SAMPLES: usize = 256;

/// Momentum used for fidelity checks: `|k| = Δ/(2A)` along the diagonal.
pub fn anchor_momentum(p: &TIParams) -> Momentum {
    let c = 0.5 * p.delta / (p.a * 2f64.sqrt());
    Momentum::new(c, c)
}

/// Worst-case stroboscopic fidelity over field ratios and computational
/// basis inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub n: usize,
    pub min_fidelity: f64,
    pub mean_fidelity: f64,
    pub worst_s: f64,
    pub worst_time: f64,
}

pub fn fidelity_report(a: f64, delta: f64, k: Momentum, ratios: &[f64], n: usize, samples: usize) -> Result<FidelityReport> {
    if ratios.is_empty() {
        return Err(invalid("ratios", "at least one ratio required"));
    }
    let states: Vec<StateVector> = (0..4).map(|i| StateVector::basis(&ti_space(), i)).collect::<Result<_>>()?;
    let mut report = FidelityReport {
        n,
        min_fidelity: f64::INFINITY,
        mean_fidelity: 0.0,
        worst_s: ratios[0],
        worst_time: 0.0,
    };
    for &s in ratios {
        let p = TIParams::with_ratio(a, delta, s)?;
        let dt = default_sampling_step(&p, k);
        let (min, mean, at) = stroboscopic_fidelity(&p, k, n, dt, samples, &states)?;
        report.mean_fidelity += mean / ratios.len() as f64;
        if min < report.min_fidelity {
            report.min_fidelity = min;
            report.worst_s = s;
            report.worst_time = at;
        }
    }
    Ok(report)
}

/// Trotter distances at fixed `t` and the fitted exponent `p` in `c / n^p`.
pub fn trotter_scaling(p: &TIParams, k: Momentum, t: f64, ns: &[usize]) -> Result<(Vec<f64>, f64)> {
    let errors = ns
        .iter()
        .map(|&n| trotter_error(&TrotterPlan::for_params(p, t, n)?, p, k))
        .collect::<Result<Vec<_>>>()?;
    let x: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    Ok((errors.clone(), -crate::numeric::loglog_slope(&x, &errors)))
}
