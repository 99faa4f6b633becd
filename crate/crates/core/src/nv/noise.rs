//! Quasi-static electron dephasing.
//!
//! Each ensemble member draws a detuning `δ ~ N(0, √2/T₂*)` that is added as
//! `δ S_z` for the whole run, so a free-induction decay follows
//! `exp(−(t/T₂*)²)`. Members use independent ChaCha streams, which keeps
//! results independent of thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::spin::{CMatrix, CVector, C64};

use super::{register_index, NVParams, PulseElement, PulseModel, PulseSchedule, PulseSimulator, Target};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseModel {
    /// Inhomogeneous dephasing time, µs.
    pub t2_star_e: f64,
    /// Echo coherence time, µs; only used when `t2_envelope` is set.
    pub t2_e: f64,
    pub mc_samples: usize,
    pub seed: u64,
    /// Multiply ensemble coherences by `exp(−t/T₂e)`.
    pub t2_envelope: bool,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            t2_star_e: 3.0,
            t2_e: 200.0,
            mc_samples: 100,
            seed: 0,
            t2_envelope: false,
        }
    }
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.t2_star_e > 0.0) {
            return Err(invalid("t2_star_e", "must be positive"));
        }
        if !(self.t2_e > 0.0) {
            return Err(invalid("t2_e", "must be positive"));
        }
        if self.t2_star_e > self.t2_e {
            return Err(invalid("t2_star_e", "T2* must not exceed T2"));
        }
        if self.mc_samples < 1 {
            return Err(invalid("mc_samples", "at least one sample required"));
        }
        Ok(())
    }

    /// Noise-free limit, for comparisons with the pulse tier.
    pub fn noiseless(mc_samples: usize) -> Self {
        Self {
            t2_star_e: f64::INFINITY,
            t2_e: f64::INFINITY,
            mc_samples,
            ..Self::default()
        }
    }

    /// Standard deviation of the detuning, rad/µs.
    pub fn sigma(&self) -> f64 {
        std::f64::consts::SQRT_2 / self.t2_star_e
    }

    pub fn detuning(&self, sample: usize) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(sample as u64);
        Normal::new(0.0, self.sigma()).expect("positive sigma").sample(&mut rng)
    }

    pub fn detunings(&self) -> Vec<f64> {
        (0..self.mc_samples).map(|i| self.detuning(i)).collect()
    }

    pub fn envelope(&self, t: f64) -> f64 {
        if self.t2_envelope {
            (-t / self.t2_e).exp()
        } else {
            1.0
        }
    }

    /// Noise-free FID expectation `exp(−(t/T₂*)²)`.
    pub fn expected_fid(&self, t: f64) -> f64 {
        (-(t / self.t2_star_e).powi(2)).exp()
    }
}

/// Sample mean and standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
}

impl Ensemble {
    pub fn from_samples(x: &[f64]) -> Self {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        Self {
            mean,
            stderr: (var / n).sqrt(),
            samples: x.len(),
        }
    }
}

/// Evaluate `f(δ)` over the ensemble in parallel.
pub fn ensemble_average<F>(model: &NoiseModel, f: F) -> Result<Ensemble>
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    model.validate()?;
    let values = (0..model.mc_samples)
        .into_par_iter()
        .map(|i| f(model.detuning(i)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Ensemble::from_samples(&values))
}

/// Final register states of a schedule, one per ensemble member.
pub fn noisy_run(p: &NVParams, pulse: PulseModel, schedule: &PulseSchedule, model: &NoiseModel, initial: &CVector) -> Result<Vec<CVector>> {
    model.validate()?;
    schedule.validate()?;
    if initial.len() != 18 {
        return Err(crate::Error::DimensionMismatch { expected: 18, got: initial.len() });
    }
    let base = PulseSimulator::new(*p, pulse)?;
    (0..model.mc_samples)
        .into_par_iter()
        .map(|i| {
            let mut sim = base.clone().with_detuning(model.detuning(i));
            sim.evolve(initial, schedule.simulated())
        })
        .collect()
}

/// Ensemble statistics of a real observable over final states.
pub fn ensemble_expectation(states: &[CVector], observable: &CMatrix) -> Ensemble {
    let values: Vec<f64> = states.iter().map(|v| (v.adjoint() * observable * v)[(0, 0)].re).collect();
    Ensemble::from_samples(&values)
}

/// One point of a coherence decay.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoherencePoint {
    pub t_us: f64,
    pub mean: f64,
    pub stderr: f64,
    pub expected: f64,
}

/// Electron in `(|+1⟩ + |0⟩)/√2`, ¹³C up, ¹⁴N in `m = +1`.
pub fn coherence_probe_state() -> CVector {
    let mut v = CVector::zeros(18);
    let a = C64::from(std::f64::consts::FRAC_1_SQRT_2);
    v[register_index(1, true, 1)] = a;
    v[register_index(0, true, 1)] = a;
    v
}

/// `⟨σ+⟩` of the electron qubit, `σ+ = |m_S=+1⟩⟨m_S=0|`.
pub fn electron_coherence(psi: &CVector) -> C64 {
    let mut acc = C64::from(0.0);
    for c in [true, false] {
        for n in [1i8, 0, -1] {
            acc += psi[register_index(1, c, n)].conj() * psi[register_index(0, c, n)];
        }
    }
    acc
}

/// Free evolution for `t`, optionally with refocusing flips at `t/2` and `t`.
pub fn probe_sequence(p: &NVParams, t: f64, echo: bool, flip_us: f64) -> Vec<PulseElement> {
    if !echo {
        return vec![PulseElement::free(t)];
    }
    vec![
        PulseElement::free(t / 2.0),
        PulseElement::electron_flip(p, 0.0, flip_us, Target::All),
        PulseElement::free(t / 2.0),
        PulseElement::electron_flip(p, std::f64::consts::PI, flip_us, Target::All),
    ]
}

/// Ensemble coherence `Re[⟨σ+⟩_δ / ⟨σ+⟩_0]` at each time, demodulated by the
/// noise-free evolution.
pub fn coherence_decay(p: &NVParams, model: &NoiseModel, pulse: PulseModel, times: &[f64], echo: bool, flip_us: f64) -> Result<Vec<CoherencePoint>> {
    model.validate()?;
    let psi0 = coherence_probe_state();
    let base = PulseSimulator::new(*p, pulse)?;
    let reference: Vec<C64> = times
        .iter()
        .map(|&t| {
            let mut sim = base.clone();
            Ok(electron_coherence(&sim.evolve(&psi0, &probe_sequence(p, t, echo, flip_us))?))
        })
        .collect::<Result<_>>()?;
    let rows = (0..model.mc_samples)
        .into_par_iter()
        .map(|i| {
            let mut sim = base.clone().with_detuning(model.detuning(i));
            times
                .iter()
                .zip(&reference)
                .map(|(&t, r)| {
                    let c = electron_coherence(&sim.evolve(&psi0, &probe_sequence(p, t, echo, flip_us))?);
                    Ok((c / r).re * model.envelope(t))
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(times
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            let column: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            let e = Ensemble::from_samples(&column);
            let expected = if echo { model.envelope(t) } else { model.expected_fid(t) * model.envelope(t) };
            CoherencePoint {
                t_us: t,
                mean: e.mean,
                stderr: e.stderr,
                expected,
            }
        })
        .collect())
}
