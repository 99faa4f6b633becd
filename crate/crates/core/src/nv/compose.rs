//! Pulse-level realizations of the register gates.
//!
//! Nuclear rotations are single RF pulses split by electron π pulses at the
//! midpoint and end, so that each electron branch spends half the pulse in
//! the resonant m_S = 0 manifold. Evolution that should only act on the
//! |1⟩_N block gets ¹⁴N-selective π pulses on the |0⟩_N block at its
//! midpoint and end. Every deterministic phase that these constructions
//! leave on the nuclei is removed with zero-duration frame updates.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Mutex, OnceLock};

use argmin::core::{CostFunction, Executor};
use argmin::solver::neldermead::NelderMead;
use serde::{Deserialize, Serialize};

use super::{NVParams, PulseElement, PulseModel, PulseSchedule, PulseSimulator, QubitEmbedding, Section, Spin, Target};
use crate::error::{invalid, Result};
use crate::spin::{CMatrix, C64};

/// Nominal element durations, µs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PulseDurations {
    pub mw_hard_us: f64,
    pub mw_selective_us: f64,
    pub rf_n_us: f64,
    pub rf_c_us: f64,
    pub free_us: f64,
    pub flip_us: f64,
}

impl Default for PulseDurations {
    fn default() -> Self {
        Self {
            mw_hard_us: 0.05,
            mw_selective_us: 0.5,
            rf_n_us: 20.0,
            rf_c_us: 2.0,
            free_us: 0.07,
            flip_us: 0.05,
        }
    }
}

impl PulseDurations {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("mw_hard_us", self.mw_hard_us),
            ("mw_selective_us", self.mw_selective_us),
            ("rf_n_us", self.rf_n_us),
            ("rf_c_us", self.rf_c_us),
            ("free_us", self.free_us),
            ("flip_us", self.flip_us),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(name, "durations must be positive"));
            }
        }
        Ok(())
    }
}

/// Duration of one half of an echoed nuclear pulse: the off-resonant
/// excursion across `detuning` closes after `2π m` of generalized Rabi
/// precession, with `m` picked closest to the nominal half duration.
pub fn synchronized_half(angle: f64, detuning: f64, nominal_half: f64) -> f64 {
    if detuning <= 0.0 {
        return nominal_half;
    }
    let m = (detuning * nominal_half / (2.0 * PI)).round().max(1.0);
    let mut cycles = 2.0 * PI * m;
    while cycles <= angle {
        cycles += 2.0 * PI;
    }
    (cycles * cycles - angle * angle).sqrt() / detuning
}

/// Builds schedules from register-level gates.
#[derive(Clone, Debug)]
pub struct Composer {
    params: NVParams,
    durations: PulseDurations,
    section: Section,
    schedule: PulseSchedule,
}

impl Composer {
    pub fn new(params: NVParams, durations: PulseDurations) -> Result<Self> {
        params.validate()?;
        durations.validate()?;
        Ok(Self {
            params,
            durations,
            section: Section::Evolution,
            schedule: PulseSchedule::default(),
        })
    }

    pub fn params(&self) -> &NVParams {
        &self.params
    }

    pub fn durations(&self) -> &PulseDurations {
        &self.durations
    }

    pub fn set_section(&mut self, section: Section) {
        self.section = section;
    }

    pub fn finish(self) -> PulseSchedule {
        self.schedule
    }

    pub fn schedule(&self) -> &PulseSchedule {
        &self.schedule
    }

    fn push(&mut self, e: PulseElement) {
        self.schedule.push(e.in_section(self.section));
    }

    fn flip(&mut self, phase: f64, target: Target) {
        let e = PulseElement::electron_flip(&self.params, phase, self.durations.flip_us, target);
        self.push(e);
    }

    fn frame(&mut self, spin: Spin, angle: f64) {
        let a = angle.rem_euclid(4.0 * PI);
        if a != 0.0 {
            self.push(PulseElement::frame_z(spin, a));
        }
    }

    /// Hard electron rotation `exp(−i θ/2 (cos φ σx + sin φ σy))`.
    pub fn electron_rotation(&mut self, angle: f64, phase: f64) {
        let (angle, phase) = canonical(angle, phase);
        if angle == 0.0 {
            return;
        }
        let e = PulseElement::mw_rotation(&self.params, angle, phase, self.durations.mw_hard_us);
        self.push(e);
    }

    /// ¹³C rotation `exp(−i θ/2 (cos φ τx + sin φ τy))` on every electron and
    /// ¹⁴N state.
    pub fn carbon_rotation(&mut self, angle: f64, phase: f64) {
        let (angle, phase) = canonical(angle, phase);
        if angle == 0.0 {
            return;
        }
        let p = self.params;
        let half = synchronized_half(angle, p.j_c, self.durations.rf_c_us / 2.0);
        let rabi = angle / half;
        self.push(PulseElement::rf_c(&p, rabi, phase, half));
        self.flip(0.0, Target::All);
        self.push(PulseElement::rf_c(&p, rabi, phase, half));
        self.flip(PI, Target::All);
        self.frame(Spin::N14, -p.j_n * half);
    }

    /// ¹⁴N qubit rotation `exp(−i θ/2 (cos φ νx + sin φ νy))` on every
    /// electron and ¹³C state.
    pub fn nitrogen_rotation(&mut self, angle: f64, phase: f64) {
        let (angle, phase) = canonical(angle, phase);
        if angle == 0.0 {
            return;
        }
        let p = self.params;
        let cal = nitrogen_calibration(&p, &self.durations, angle);
        for e in cal.elements(&p, self.durations.flip_us, phase) {
            self.push(e);
        }
    }

    /// Phase `exp(−i α)` on |1⟩_N.
    pub fn nitrogen_phase(&mut self, alpha: f64) {
        self.frame(Spin::N14, alpha);
    }

    /// Hadamard on the ¹⁴N qubit, as a π/2 rotation about y after a Z.
    pub fn nitrogen_hadamard(&mut self) {
        self.nitrogen_phase(PI);
        self.nitrogen_rotation(PI / 2.0, PI / 2.0);
    }

    /// `exp(−i θ σz τz)` on the |1⟩_N block by free evolution under the
    /// ¹³C coupling; identity on |0⟩_N.
    pub fn conditional_zz(&mut self, theta: f64) {
        let reduced = theta.rem_euclid(PI);
        let wraps = ((theta - reduced) / PI).round();
        let t = reduced / self.params.mapped_delta();
        if t > 0.0 {
            self.push(PulseElement::free(t / 2.0));
            self.flip(0.0, Target::NLevel(0));
            self.push(PulseElement::free(t / 2.0));
            self.flip(PI, Target::NLevel(0));
            self.segment_frames(t);
            self.selective_flip_correction();
        }
        self.frame(Spin::N14, wraps * PI);
    }

    /// `exp(−i (¼γe B1 (cos φ σx + sin φ σy) + (J_C/4) σz τz) T)` on the
    /// |1⟩_N block; identity on |0⟩_N.
    pub fn conditional_drive(&mut self, amplitude_gauss: f64, phase: f64, duration: f64) {
        if duration <= 0.0 {
            return;
        }
        for flip_phase in [0.0, PI] {
            self.push(PulseElement::mw_selective(amplitude_gauss, phase, duration / 2.0, 1));
            self.flip(flip_phase, Target::NLevel(0));
        }
        self.segment_frames(duration);
        self.selective_flip_correction();
    }

    /// Undo the m_S = −1 light shift that a pair of ¹⁴N-selective flips
    /// leaves on the |0⟩_N block.
    fn selective_flip_correction(&mut self) {
        let chi = flip_pair_light_shift(&self.params, self.durations.flip_us);
        self.frame(Spin::N14, -chi);
    }

    fn segment_frames(&mut self, t: f64) {
        let p = self.params;
        self.frame(Spin::C13, -p.j_c * t / 2.0);
        self.frame(Spin::N14, -p.j_n * t / 2.0);
    }

    /// Free evolution with electron π pulses at the midpoint and end.
    pub fn refocused_interval(&mut self, duration: f64) {
        self.push(PulseElement::free(duration / 2.0));
        self.flip(0.0, Target::All);
        self.push(PulseElement::free(duration / 2.0));
        self.flip(PI, Target::All);
        self.segment_frames(duration);
    }

    /// Plain free evolution.
    pub fn free(&mut self, duration: f64) {
        if duration > 0.0 {
            self.push(PulseElement::free(duration));
        }
    }

    /// Electron ↔ ¹⁴N swap used before optical readout: two
    /// electron-conditional ¹⁴N π pulses around an ¹⁴N-conditional electron
    /// π pulse. Recorded for timing only.
    pub fn readout_swap(&mut self) {
        let previous = self.section;
        self.section = Section::Readout;
        let p = self.params;
        let d = self.durations;
        let rf = PulseElement::rf_n(&p, PI / d.rf_n_us, 0.0, d.rf_n_us, Target::ELevel(0));
        self.push(rf.clone());
        let amp = 2.0 * PI / (p.gamma_e * d.mw_selective_us);
        self.push(PulseElement::mw_selective(amp, 0.0, d.mw_selective_us, 1));
        self.push(rf);
        self.section = previous;
    }
}

fn canonical(angle: f64, phase: f64) -> (f64, f64) {
    let a = angle.rem_euclid(4.0 * PI);
    let (a, ph) = if a > 2.0 * PI { (4.0 * PI - a, phase + PI) } else { (a, phase) };
    (a, ph.rem_euclid(2.0 * PI))
}

/// Relative phase `arg D₁₁ − arg D₀₀` accumulated on the ¹⁴N qubit during the
/// off-resonant (m_S = +1) half of an echoed RF pulse.
fn off_resonant_nitrogen_phase(p: &NVParams, rabi: f64, half: f64) -> f64 {
    let mut h = CMatrix::zeros(3, 3);
    // levels +1, 0, −1 in the m_S = +1 manifold of the rotating frame
    h[(1, 1)] = C64::from(-p.j_n);
    h[(2, 2)] = C64::from(-2.0 * p.j_n + 2.0 * p.gamma_n * p.b0);
    let w = C64::from(rabi / 2.0);
    h[(1, 0)] = w;
    h[(0, 1)] = w;
    h[(1, 2)] = w;
    h[(2, 1)] = w;
    let u = super::physics::expm_herm(&h, half);
    (u[(0, 0)].arg() - u[(1, 1)].arg()).rem_euclid(2.0 * PI)
}

/// Common phase of the m_S ∈ {+1, 0} block after the flip pair
/// `F(π) F(0)`, with m_S = −1 sitting 2D away in the rotating frame.
pub fn flip_pair_light_shift(p: &NVParams, flip_us: f64) -> f64 {
    let mut h0 = CMatrix::zeros(3, 3);
    h0[(2, 2)] = C64::from(2.0 * p.d);
    let splus = crate::spin::ops::spin1_plus();
    let flip = |phase: f64| {
        let e = PulseElement::electron_flip(p, phase, flip_us, Target::All);
        let a = &splus * C64::from_polar(p.gamma_e * e.amplitude_gauss / (4.0 * std::f64::consts::SQRT_2), -phase);
        super::physics::expm_herm(&(&h0 + &a + a.adjoint()), flip_us)
    };
    let u = flip(PI) * flip(0.0);
    ((u[(0, 0)] + u[(1, 1)]) / C64::from(2.0)).arg()
}

/// Echoed ¹⁴N rotation: frame update, RF half, flip, RF half, flip, frame
/// update, ¹³C frame update. The second half's phase offset absorbs the phase picked up off
/// resonance; the Rabi rates and frames are then refined on the register
/// model to remove the light shift and leakage excursion from m_N = −1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NitrogenCalibration {
    pub half: f64,
    pub rabi: [f64; 2],
    pub second_phase: f64,
    pub pre_frame: f64,
    pub post_frame: f64,
    /// Phase-aligned distance of the calibrated φ = 0 rotation from ideal.
    pub residual: f64,
}

impl NitrogenCalibration {
    fn from_vec(half: f64, rabi: f64, x: &[f64]) -> Self {
        Self {
            half,
            rabi: [rabi * (1.0 + x[0]), rabi * (1.0 + x[1])],
            second_phase: x[2],
            pre_frame: x[3],
            post_frame: x[4],
            residual: f64::NAN,
        }
    }

    pub fn elements(&self, p: &NVParams, flip_us: f64, phase: f64) -> Vec<PulseElement> {
        let mut out = Vec::with_capacity(6);
        let frame = |out: &mut Vec<PulseElement>, spin: Spin, a: f64| {
            let a = a.rem_euclid(4.0 * PI);
            if a != 0.0 {
                out.push(PulseElement::frame_z(spin, a));
            }
        };
        frame(&mut out, Spin::N14, self.pre_frame);
        out.push(PulseElement::rf_n(p, self.rabi[0], phase.rem_euclid(2.0 * PI), self.half, Target::All));
        out.push(PulseElement::electron_flip(p, 0.0, flip_us, Target::All));
        out.push(PulseElement::rf_n(p, self.rabi[1], (phase + self.second_phase).rem_euclid(2.0 * PI), self.half, Target::All));
        out.push(PulseElement::electron_flip(p, PI, flip_us, Target::All));
        frame(&mut out, Spin::N14, self.post_frame);
        frame(&mut out, Spin::C13, -p.j_c * self.half);
        out
    }
}

struct NitrogenCost {
    params: NVParams,
    flip_us: f64,
    half: f64,
    rabi: f64,
    base: PulseSimulator,
    target: CMatrix,
}

impl NitrogenCost {
    fn distance(&self, x: &[f64]) -> f64 {
        let cal = NitrogenCalibration::from_vec(self.half, self.rabi, x);
        let mut sim = self.base.clone();
        let elements = cal.elements(&self.params, self.flip_us, 0.0);
        let u = sim.propagator(&elements).expect("valid elements");
        let r = QubitEmbedding::new().restrict(&u);
        crate::spin::phase_aligned_distance_mat(r.matrix(), &self.target).expect("8x8")
    }
}

impl CostFunction for NitrogenCost {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, x: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        Ok(self.distance(x))
    }
}

type CalibrationKey = (Vec<u64>, u64);

fn calibration_cache() -> &'static Mutex<HashMap<CalibrationKey, NitrogenCalibration>> {
    static CACHE: OnceLock<Mutex<HashMap<CalibrationKey, NitrogenCalibration>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Calibrate (or fetch) the echoed ¹⁴N rotation by `angle` for the default
/// pulse model.
pub fn nitrogen_calibration(p: &NVParams, d: &PulseDurations, angle: f64) -> NitrogenCalibration {
    let key = (
        [p.d, p.gamma_e, p.gamma_c, p.gamma_n, p.q, p.j_c, p.j_n, p.b0, d.rf_n_us, d.flip_us]
            .iter()
            .map(|v| v.to_bits())
            .collect(),
        angle.to_bits(),
    );
    if let Some(c) = calibration_cache().lock().expect("cache lock").get(&key) {
        return *c;
    }
    let cal = calibrate(p, d, angle);
    calibration_cache().lock().expect("cache lock").insert(key, cal);
    cal
}

fn calibrate(p: &NVParams, d: &PulseDurations, angle: f64) -> NitrogenCalibration {
    let half = synchronized_half(angle, p.nitrogen_leakage_detuning(), d.rf_n_us / 2.0);
    let rabi = angle / half;
    let drift = off_resonant_nitrogen_phase(p, rabi, half);
    let nx = crate::spin::ops::identity(4).kronecker(&crate::spin::ops::sigma_x());
    let target = CMatrix::identity(8, 8) * C64::from((angle / 2.0).cos()) - nx * C64::new(0.0, (angle / 2.0).sin());
    let cost = NitrogenCost {
        params: *p,
        flip_us: d.flip_us,
        half,
        rabi,
        base: PulseSimulator::new(*p, PulseModel::default()).expect("validated params"),
        target,
    };
    let start = vec![0.0, 0.0, drift, 0.0, drift];
    let initial = cost.distance(&start);
    let steps = [0.01, 0.01, 0.05, 0.05, 0.05];
    let mut simplex = vec![start.clone()];
    for (i, s) in steps.iter().enumerate() {
        let mut v = start.clone();
        v[i] += s;
        simplex.push(v);
    }
    let solver = NelderMead::new(simplex).with_sd_tolerance(1e-12).expect("valid tolerance");
    let best = Executor::new(cost, solver)
        .configure(|st| st.max_iters(1500))
        .run()
        .ok()
        .and_then(|r| {
            let x = r.state.best_param.clone()?;
            Some((x, r.state.best_cost))
        });
    let (x, residual) = match best {
        Some((x, c)) if c < initial => (x, c),
        _ => (start, initial),
    };
    let mut cal = NitrogenCalibration::from_vec(half, rabi, &x);
    cal.residual = residual;
    cal
}
