//! Eigenvalue spectroscopy with one ¹⁴N ancilla.
//!
//! The ancilla is put in `(|0⟩ + |1⟩)/√2`, the controlled evolution imprints
//! `e^{−iE_m t}` on each eigencomponent, and the ancilla is read out after a
//! Hadamard (real part) or after `S†` and a Hadamard (imaginary part). The
//! recorded coherence is `g(t) = Σ |c_m|² e^{−iE_m t}`.
//!
//! Time steps are stroboscopic: the point `t_j = jΔt` applies `j` copies of
//! the `n`-slice evolution over `Δt`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::{FftDirection, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numeric::{format_sig, wrap_angle};
use crate::nv::{
    register_index, Composer, Ensemble, NoiseModel, PulseSchedule, PulseSimulator, QubitEmbedding, Tier,
};
use crate::spin::{kron_vec, ops, propagator, CMatrix, CVector, StateVector, C64};
use crate::ti::{build_h_ti, minimal_gap, ti_space, BandRow, BandTable, KyGrid, Momentum, Phase, TIParams};
use crate::trotter::{
    energy_bound, exact_rotated_unitary, gate_list, gate_schedule, gates_unitary, Gate, Hardware, TrotterPlan,
};

/// Basis in which explicit amplitudes are given.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmplitudeBasis {
    /// Eigenstates of `H_TI` in ascending energy.
    Eigen,
    /// The σ ⊗ τ product basis.
    Computational,
}

/// Input state on σ ⊗ τ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum InputStateSpec {
    Eigenstate { index: usize },
    /// Amplitudes as `[re, im]` pairs; normalized on resolution.
    Amplitudes { basis: AmplitudeBasis, c: Vec<[f64; 2]> },
    /// Gaussian random vector, normalized.
    Random { seed: u64 },
}

impl InputStateSpec {
    pub fn resolve(&self, p: &TIParams, k: Momentum) -> Result<StateVector> {
        let (_, vecs) = build_h_ti(p, k).eigh()?;
        let amps = match self {
            Self::Eigenstate { index } => {
                if *index >= 4 {
                    return Err(invalid("index", "eigenstate index must be below 4"));
                }
                vecs.column(*index).into_owned()
            }
            Self::Amplitudes { basis, c } => {
                if c.len() != 4 {
                    return Err(invalid("c", "four amplitudes required"));
                }
                let v = CVector::from_iterator(4, c.iter().map(|z| C64::new(z[0], z[1])));
                if v.norm() == 0.0 {
                    return Err(invalid("c", "amplitudes must not all vanish"));
                }
                match basis {
                    AmplitudeBasis::Eigen => &vecs * v,
                    AmplitudeBasis::Computational => v,
                }
            }
            Self::Random { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                CVector::from_fn(4, |_, _| {
                    C64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng))
                })
            }
        };
        StateVector::normalized(ti_space(), amps)
    }

    /// Exact energies and the weights `|c_m|²` of the resolved state.
    pub fn expected_weights(&self, p: &TIParams, k: Momentum) -> Result<(Vec<f64>, Vec<f64>)> {
        let (energies, vecs) = build_h_ti(p, k).eigh()?;
        let psi = self.resolve(p, k)?;
        let w = (0..4).map(|m| (vecs.column(m).adjoint() * psi.amplitudes())[(0, 0)].norm_sqr()).collect();
        Ok((energies, w))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Readout {
    /// Hadamard and `S†`-Hadamard readouts, giving the full complex signal.
    #[default]
    Both,
    /// Hadamard readout only; the imaginary part is recorded as zero.
    Cosine,
}

/// Sampling and evolution settings for one signal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SignalConfig {
    pub samples: usize,
    /// Sampling step; `π / (2 E_max)` when absent.
    pub dt: Option<f64>,
    /// Trotter slices per sampling step.
    pub n: usize,
    /// Build the controlled evolution from the exact exponential.
    pub exact_u: bool,
    pub readout: Readout,
    /// Binomial readout statistics with this many shots per point.
    pub shots: Option<u64>,
    pub seed: u64,
}

impl Default for SignalConfig {
    fn default() -> Self {
        Self {
            samples: 256,
            dt: None,
            n: 2,
            exact_u: false,
            readout: Readout::Both,
            shots: None,
            seed: 0,
        }
    }
}

impl SignalConfig {
    pub fn step(&self, p: &TIParams, k: Momentum) -> f64 {
        self.dt.unwrap_or_else(|| PI / (2.0 * energy_bound(p, k)))
    }

    pub fn validate(&self, p: &TIParams, k: Momentum) -> Result<()> {
        if self.samples < 2 {
            return Err(invalid("samples", "at least two samples required"));
        }
        if self.n < 1 {
            return Err(invalid("n", "n ≥ 1 required"));
        }
        if self.shots == Some(0) {
            return Err(invalid("shots", "shots ≥ 1 required"));
        }
        let dt = self.step(p, k);
        if !(dt.is_finite() && dt > 0.0) {
            return Err(invalid("dt", "dt > 0 required"));
        }
        let required = PI / energy_bound(p, k);
        if dt > required {
            return Err(Error::Nyquist { dt, required });
        }
        Ok(())
    }
}

/// Where the circuit is executed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Backend {
    pub tier: Tier,
    pub hardware: Hardware,
    pub noise: NoiseModel,
}

impl Backend {
    pub fn gate() -> Self {
        Self::new(Tier::Gate)
    }

    pub fn new(tier: Tier) -> Self {
        Self {
            tier,
            hardware: Hardware::default(),
            noise: NoiseModel::default(),
        }
    }
}

/// Ancilla coherence over a uniform time grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalRecord {
    pub t_us: Vec<f64>,
    pub g: Vec<C64>,
    pub stderr: Vec<f64>,
}

pub const SIGNAL_CSV_HEADER: &str = "t_us,re_g,im_g,stderr";

impl SignalRecord {
    pub fn len(&self) -> usize {
        self.t_us.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_us.is_empty()
    }

    /// Grid spacing, checked for uniformity.
    pub fn step(&self) -> Result<f64> {
        if self.len() < 2 || self.g.len() != self.len() {
            return Err(invalid("signal", "at least two samples with matching g required"));
        }
        let dt = self.t_us[1] - self.t_us[0];
        if !(dt > 0.0) {
            return Err(invalid("signal", "increasing time grid required"));
        }
        for (j, t) in self.t_us.iter().enumerate() {
            if (t - self.t_us[0] - j as f64 * dt).abs() > 1e-9 * dt.max(t.abs()) {
                return Err(invalid("signal", "uniform time grid required"));
            }
        }
        Ok(dt)
    }

    pub fn to_csv(&self, metadata: &[(String, String)]) -> String {
        let mut out = String::new();
        for (k, v) in metadata {
            out.push_str(&format!("# {k}={v}\n"));
        }
        out.push_str(SIGNAL_CSV_HEADER);
        out.push('\n');
        for ((t, g), e) in self.t_us.iter().zip(&self.g).zip(&self.stderr) {
            let cells = [*t, g.re, g.im, *e].map(|x| format_sig(x, 12));
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// One sample: `(Re g, Im g, stderr)`.
type Point = (f64, f64, f64);

fn shot_estimate(p0: f64, shots: u64, rng: &mut ChaCha8Rng) -> (f64, f64) {
    let p0 = p0.clamp(0.0, 1.0);
    let hits = Binomial::new(shots, p0).expect("probability in range").sample(rng);
    let est = hits as f64 / shots as f64;
    (2.0 * est - 1.0, 2.0 * (est * (1.0 - est) / shots as f64).sqrt())
}

fn finish_points(cfg: &SignalConfig, p0: &[(f64, Option<f64>)]) -> Vec<Point> {
    p0.iter()
        .enumerate()
        .map(|(j, &(px, py))| match cfg.shots {
            None => (2.0 * px - 1.0, py.map_or(0.0, |v| 2.0 * v - 1.0), 0.0),
            Some(shots) => {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(j as u64);
                let (re, se_re) = shot_estimate(px, shots, &mut rng);
                let (im, se_im) = py.map_or((0.0, 0.0), |v| shot_estimate(v, shots, &mut rng));
                (re, im, se_re.hypot(se_im))
            }
        })
        .collect()
}

fn controlled(block: &CMatrix) -> CMatrix {
    CMatrix::identity(4, 4).kronecker(&ops::projector(2, 0)) + block.kronecker(&ops::projector(2, 1))
}

fn on_ancilla(m: &CMatrix) -> CMatrix {
    CMatrix::identity(4, 4).kronecker(m)
}

fn hadamard() -> CMatrix {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    CMatrix::from_row_slice(2, 2, &[C64::from(h), C64::from(h), C64::from(h), C64::from(-h)])
}

fn s_dagger() -> CMatrix {
    ops::diag(&[1.0, 0.0]) + ops::projector(2, 1) * C64::new(0.0, -1.0)
}

/// `(U₁†, one sample step, U₁)` as gate lists.
fn split_gates(p: &TIParams, k: Momentum, cfg: &SignalConfig, dt: f64) -> Result<(Vec<Gate>, Vec<Gate>, Vec<Gate>)> {
    let gates = gate_list(&TrotterPlan::for_params(p, dt, cfg.n)?, p, k)?;
    let last = gates.len() - 1;
    Ok((gates[..1].to_vec(), gates[1..last].to_vec(), gates[last..].to_vec()))
}

fn gate_probabilities(psi: &StateVector, p: &TIParams, k: Momentum, cfg: &SignalConfig, dt: f64) -> Result<Vec<(f64, Option<f64>)>> {
    let (pre, step, post) = split_gates(p, k, cfg, dt)?;
    let pre = gates_unitary(&pre, p, k)?.into_matrix();
    let post = gates_unitary(&post, p, k)?.into_matrix();
    let step = if cfg.exact_u {
        controlled(exact_rotated_unitary(p, k, dt)?.matrix())
    } else {
        gates_unitary(&step, p, k)?.into_matrix()
    };
    let zero = CVector::from_vec(vec![C64::from(1.0), C64::from(0.0)]);
    let h = on_ancilla(&hadamard());
    let read_x = &h * &post;
    let read_y = &h * on_ancilla(&s_dagger()) * &post;
    let mut v = &pre * (&h * kron_vec(psi.amplitudes(), &zero));
    let p0 = |u: CVector| (0..4).map(|i| u[2 * i].norm_sqr()).sum::<f64>();
    let mut out = Vec::with_capacity(cfg.samples);
    for _ in 0..cfg.samples {
        let py = (cfg.readout == Readout::Both).then(|| p0(&read_y * &v));
        out.push((p0(&read_x * &v), py));
        v = &step * v;
    }
    Ok(out)
}

/// Register schedules for the pieces of the algorithm.
struct Pieces {
    prep: PulseSchedule,
    pre: PulseSchedule,
    step: PulseSchedule,
    post: PulseSchedule,
    read_x: PulseSchedule,
    read_y: PulseSchedule,
}

fn pulse_pieces(p: &TIParams, k: Momentum, cfg: &SignalConfig, dt: f64, hw: &Hardware) -> Result<Pieces> {
    if cfg.exact_u {
        return Err(invalid("exact_u", "exact reference mode is only available at the gate tier"));
    }
    let (pre, step, post) = split_gates(p, k, cfg, dt)?;
    let build = |f: &dyn Fn(&mut Composer) -> Result<()>| -> Result<PulseSchedule> {
        let mut c = Composer::new(hw.nv, hw.durations)?;
        f(&mut c)?;
        Ok(c.finish())
    };
    Ok(Pieces {
        prep: build(&|c| {
            c.nitrogen_hadamard();
            Ok(())
        })?,
        pre: build(&|c| gate_schedule(&pre, p, hw, c))?,
        step: build(&|c| gate_schedule(&step, p, hw, c))?,
        post: build(&|c| gate_schedule(&post, p, hw, c))?,
        read_x: build(&|c| {
            c.nitrogen_hadamard();
            Ok(())
        })?,
        read_y: build(&|c| {
            c.nitrogen_phase(PI / 2.0);
            c.nitrogen_hadamard();
            Ok(())
        })?,
    })
}

fn nitrogen_zero_population(v: &CVector) -> f64 {
    let mut acc = 0.0;
    for m_s in [1i8, 0, -1] {
        for c_up in [true, false] {
            acc += v[register_index(m_s, c_up, 0)].norm_sqr();
        }
    }
    acc
}

fn register_probabilities(sim: &mut PulseSimulator, initial: &CVector, pieces: &Pieces, cfg: &SignalConfig) -> Result<Vec<(f64, Option<f64>)>> {
    let post_x = sim.propagator(pieces.post.elements.iter().chain(&pieces.read_x.elements))?;
    let post_y = sim.propagator(pieces.post.elements.iter().chain(&pieces.read_y.elements))?;
    let step = sim.propagator(&pieces.step.elements)?;
    let mut v = sim.evolve(initial, pieces.prep.elements.iter().chain(&pieces.pre.elements))?;
    let mut out = Vec::with_capacity(cfg.samples);
    for _ in 0..cfg.samples {
        let py = (cfg.readout == Readout::Both).then(|| nitrogen_zero_population(&(&post_y * &v)));
        out.push((nitrogen_zero_population(&(&post_x * &v)), py));
        v = &step * v;
    }
    Ok(out)
}

/// Acquire `g(t)` on the grid `t_j = jΔt`, `j < samples`.
pub fn run_signal(state: &InputStateSpec, p: &TIParams, k: Momentum, cfg: &SignalConfig, backend: &Backend) -> Result<SignalRecord> {
    p.validate()?;
    cfg.validate(p, k)?;
    let dt = cfg.step(p, k);
    let psi = state.resolve(p, k)?;
    let t_us: Vec<f64> = (0..cfg.samples).map(|j| j as f64 * dt).collect();
    let points = match backend.tier {
        Tier::Gate => finish_points(cfg, &gate_probabilities(&psi, p, k, cfg, dt)?),
        Tier::Pulse | Tier::Noisy => {
            let hw = &backend.hardware;
            let pieces = pulse_pieces(p, k, cfg, dt, hw)?;
            let zero = CVector::from_vec(vec![C64::from(1.0), C64::from(0.0)]);
            let q = StateVector::new(crate::nv::qubit_space(), kron_vec(psi.amplitudes(), &zero))?;
            let initial = QubitEmbedding::new().embed_state(&q)?.amplitudes().clone();
            let base = PulseSimulator::new(hw.nv, hw.model)?;
            if backend.tier == Tier::Pulse {
                let mut sim = base;
                finish_points(cfg, &register_probabilities(&mut sim, &initial, &pieces, cfg)?)
            } else {
                let noise = &backend.noise;
                noise.validate()?;
                let runs = (0..noise.mc_samples)
                    .into_par_iter()
                    .map(|i| {
                        let mut sim = base.clone().with_detuning(noise.detuning(i));
                        Ok(finish_points(cfg, &register_probabilities(&mut sim, &initial, &pieces, cfg)?))
                    })
                    .collect::<Result<Vec<_>>>()?;
                (0..cfg.samples)
                    .map(|j| {
                        let re: Vec<f64> = runs.iter().map(|r| r[j].0).collect();
                        let im: Vec<f64> = runs.iter().map(|r| r[j].1).collect();
                        let (re, im) = (Ensemble::from_samples(&re), Ensemble::from_samples(&im));
                        (re.mean, im.mean, re.stderr.hypot(im.stderr))
                    })
                    .collect()
            }
        }
    };
    Ok(SignalRecord {
        t_us,
        g: points.iter().map(|&(re, im, _)| C64::new(re, im)).collect(),
        stderr: points.iter().map(|&(_, _, e)| e).collect(),
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    #[default]
    Hann,
    Rectangular,
}

impl Window {
    fn weights(self, m: usize) -> Vec<f64> {
        match self {
            Window::Hann => (0..m).map(|j| 0.5 * (1.0 - (2.0 * PI * j as f64 / m as f64).cos())).collect(),
            Window::Rectangular => vec![1.0; m],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectralOptions {
    pub window: Window,
    /// Minimum weight of a reported peak.
    pub threshold: f64,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        Self {
            window: Window::Hann,
            threshold: 0.02,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowInfo {
    pub kind: Window,
    pub samples: usize,
    pub dt_us: f64,
    pub threshold: f64,
}

/// Peaks in ascending energy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralResult {
    pub energies_rad_per_us: Vec<f64>,
    pub weights: Vec<f64>,
    pub uncertainties_rad_per_us: Vec<f64>,
    /// Bin width `2π / (M Δt)`.
    pub resolution: f64,
    pub window: WindowInfo,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

impl SpectralResult {
    /// Energy of the heaviest peak.
    pub fn dominant(&self) -> Option<f64> {
        self.weights
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| self.energies_rad_per_us[i])
    }
}

/// `Σ_j x_j e^{+2πi jq/M}`, so that a tone `e^{−iEt}` peaks at `+E`.
fn dft(x: &[C64]) -> Vec<C64> {
    let mut buf = x.to_vec();
    FftPlanner::new().plan_fft(buf.len(), FftDirection::Inverse).process(&mut buf);
    buf
}

/// `|mean |X_q|²/M − mean |g|²|` for the unwindowed transform.
pub fn parseval_residual(sig: &SignalRecord) -> f64 {
    let m = sig.g.len() as f64;
    let spec: f64 = dft(&sig.g).iter().map(|z| z.norm_sqr()).sum::<f64>() / (m * m);
    let time: f64 = sig.g.iter().map(|z| z.norm_sqr()).sum::<f64>() / m;
    (spec - time).abs()
}

fn model(t: &[f64], energies: &[f64], c: &[C64]) -> Vec<C64> {
    t.iter()
        .map(|&t| energies.iter().zip(c).map(|(&e, c)| c * C64::from_polar(1.0, -e * t)).sum())
        .collect()
}

fn cost(g: &[C64], fit: &[C64]) -> f64 {
    g.iter().zip(fit).map(|(a, b)| (a - b).norm_sqr()).sum()
}

/// Least-squares complex amplitudes of `Σ_m c_m e^{−iE_m t}`.
fn fit_amplitudes(t: &[f64], g: &[C64], energies: &[f64]) -> Vec<C64> {
    let a = DMatrix::from_fn(t.len(), energies.len(), |j, m| C64::from_polar(1.0, -energies[m] * t[j]));
    let b = DVector::from_column_slice(g);
    let c = a.svd(true, true).solve(&b, 1e-12).expect("thin SVD with both factors");
    c.iter().copied().collect()
}

/// Levenberg–Marquardt on energies and amplitudes jointly. Tones that sit
/// closer than the window's main lobe bias each other's DFT peaks; the joint
/// fit removes that bias.
fn refine(t: &[f64], g: &[C64], energies: &mut [f64], c: &mut [C64], dt: f64) {
    let k = energies.len();
    let m = t.len();
    let mut current = cost(g, &model(t, energies, c));
    let mut lambda = 1e-3;
    for _ in 0..200 {
        let fit = model(t, energies, c);
        let mut jac = DMatrix::<f64>::zeros(2 * m, 3 * k);
        let mut res = DVector::<f64>::zeros(2 * m);
        for j in 0..m {
            let r = g[j] - fit[j];
            res[j] = r.re;
            res[m + j] = r.im;
            for q in 0..k {
                let e = C64::from_polar(1.0, -energies[q] * t[j]);
                let de = C64::new(0.0, -t[j]) * c[q] * e;
                let db = C64::new(0.0, 1.0) * e;
                for (col, d) in [(q, de), (k + q, e), (2 * k + q, db)] {
                    jac[(j, col)] = d.re;
                    jac[(m + j, col)] = d.im;
                }
            }
        }
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * &res;
        let mut improved = false;
        while lambda < 1e12 {
            let mut a = jtj.clone();
            for i in 0..3 * k {
                a[(i, i)] += lambda * jtj[(i, i)].max(1e-300);
            }
            let Some(step) = a.cholesky().map(|ch| ch.solve(&jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let e_new: Vec<f64> = (0..k).map(|q| energies[q] + step[q]).collect();
            let c_new: Vec<C64> = (0..k).map(|q| c[q] + C64::new(step[k + q], step[2 * k + q])).collect();
            let trial = cost(g, &model(t, &e_new, &c_new));
            if trial < current {
                let gain = current - trial;
                energies.copy_from_slice(&e_new);
                c.copy_from_slice(&c_new);
                current = trial;
                lambda = (lambda / 10.0).max(1e-12);
                improved = gain > 1e-15 * (1.0 + current);
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    for e in energies.iter_mut() {
        *e = wrap_angle(*e * dt) / dt;
    }
}

/// Strongest residual line that no fitted tone explains, if any reaches
/// `floor` in magnitude.
fn residual_peak(t: &[f64], g: &[C64], energies: &[f64], c: &[C64], dt: f64, floor: f64) -> Option<f64> {
    let m = g.len();
    let res: Vec<C64> = g.iter().zip(model(t, energies, c)).map(|(a, b)| a - b).collect();
    let mag: Vec<f64> = dft(&res).iter().map(|z| z.norm() / m as f64).collect();
    let q = (0..m).max_by(|&a, &b| mag[a].total_cmp(&mag[b]))?;
    if mag[q] < floor {
        return None;
    }
    Some(wrap_angle(2.0 * PI * q as f64 / m as f64) / dt)
}

/// Windowed DFT peak search with quadratic log-magnitude refinement, then a
/// joint least-squares fit of energies and weights. Lines hidden under a
/// stronger neighbour's lobe are recovered from the fit residual.
pub fn extract_spectrum(sig: &SignalRecord, opts: &SpectralOptions) -> Result<SpectralResult> {
    let dt = sig.step()?;
    if !(opts.threshold > 0.0 && opts.threshold < 1.0) {
        return Err(invalid("threshold", "threshold in (0, 1) required"));
    }
    let m = sig.len();
    let w = opts.window.weights(m);
    let gain: f64 = w.iter().sum();
    let windowed: Vec<C64> = sig.g.iter().zip(&w).map(|(g, w)| g * w).collect();
    let mag: Vec<f64> = dft(&windowed).iter().map(|z| z.norm() / gain).collect();
    let resolution = 2.0 * PI / (m as f64 * dt);
    let ln = |q: usize| mag[q].max(1e-300).ln();

    let mut energies = Vec::new();
    for q in 0..m {
        let (l, r) = ((q + m - 1) % m, (q + 1) % m);
        if mag[q] < 0.5 * opts.threshold || mag[q] <= mag[l] || mag[q] < mag[r] {
            continue;
        }
        let (a, b, c) = (ln(l), ln(q), ln(r));
        let denom = a - 2.0 * b + c;
        let delta = if denom < 0.0 { (0.5 * (a - c) / denom).clamp(-0.5, 0.5) } else { 0.0 };
        energies.push(wrap_angle(2.0 * PI * (q as f64 + delta) / m as f64) / dt);
    }

    let (t, g) = (&sig.t_us, &sig.g);
    let mut amps = Vec::new();
    let mut searching = true;
    let mut added = 0;
    while !energies.is_empty() || searching {
        if energies.is_empty() {
            match residual_peak(t, g, &[], &[], dt, 0.5 * opts.threshold) {
                Some(e) => {
                    energies.push(e);
                    added += 1;
                }
                None => break,
            }
        }
        amps = fit_amplitudes(t, g, &energies);
        refine(t, g, &mut energies, &mut amps, dt);
        if let Some(weakest) = (0..energies.len()).filter(|&i| amps[i].norm() < opts.threshold).min_by(|&i, &j| amps[i].norm().total_cmp(&amps[j].norm())) {
            // drop the weakest sub-threshold peak and refit
            energies.remove(weakest);
            amps.clear();
            if added > 0 {
                searching = false;
            }
            continue;
        }
        if !searching || added >= m / 8 {
            break;
        }
        match residual_peak(t, g, &energies, &amps, dt, 0.5 * opts.threshold) {
            Some(e) => {
                energies.push(e);
                added += 1;
            }
            None => break,
        }
    }
    let mut peaks: Vec<(f64, f64)> = energies.into_iter().zip(amps.iter().map(|c| c.norm())).collect();
    peaks.sort_by(|a, b| a.0.total_cmp(&b.0));
    let diagnostic = peaks.is_empty().then(|| format!("no peak reaches weight {}", opts.threshold));
    Ok(SpectralResult {
        energies_rad_per_us: peaks.iter().map(|p| p.0).collect(),
        weights: peaks.iter().map(|p| p.1).collect(),
        uncertainties_rad_per_us: vec![resolution / 2.0; peaks.len()],
        resolution,
        window: WindowInfo {
            kind: opts.window,
            samples: m,
            dt_us: dt,
            threshold: opts.threshold,
        },
        diagnostic,
    })
}

/// Extracted bands and gap for one field ratio.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QptPoint {
    pub s: f64,
    pub bands: BandTable,
    pub min_gap: f64,
    pub ky_at_min: f64,
    /// Gap closings, located by a V-shaped fit around grid minima.
    pub dirac_ky: Vec<f64>,
    pub phase: Phase,
    /// `2 max(0, Δ − ε_B)` from the model.
    pub expected_gap: f64,
    pub resolution: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QptResult {
    pub points: Vec<QptPoint>,
    /// `(s, extracted minimal gap)`.
    pub gap_curve: Vec<(f64, f64)>,
}

/// Band energies along ky at kx = 0 for each field ratio, one eigenstate
/// signal per band, with a shared sampling step chosen for the largest |ky|.
pub fn qpt_scan(a: f64, delta: f64, s_values: &[f64], grid: &KyGrid, cfg: &SignalConfig, backend: &Backend, opts: &SpectralOptions) -> Result<QptResult> {
    grid.validate()?;
    if s_values.is_empty() || s_values.iter().any(|&s| !(s > 0.0)) {
        return Err(invalid("s", "positive field ratios required"));
    }
    let kmax = grid.min.abs().max(grid.max.abs());
    let points = s_values
        .iter()
        .map(|&s| {
            let p = TIParams::with_ratio(a, delta, s)?;
            let mut cfg = cfg.clone();
            cfg.dt = Some(cfg.dt.unwrap_or_else(|| PI / (2.0 * energy_bound(&p, Momentum::new(0.0, kmax)))));
            let kys = grid.points();
            let jobs: Vec<(usize, usize)> = (0..kys.len()).flat_map(|i| (0..4).map(move |b| (i, b))).collect();
            let found = jobs
                .par_iter()
                .map(|&(i, b)| {
                    let k = Momentum::new(0.0, kys[i]);
                    let sig = run_signal(&InputStateSpec::Eigenstate { index: b }, &p, k, &cfg, backend)?;
                    let spec = extract_spectrum(&sig, opts)?;
                    spec.dominant()
                        .ok_or_else(|| Error::Contract(format!("no spectral peak at s={s}, ky={}, band {b}", kys[i])))
                })
                .collect::<Result<Vec<f64>>>()?;
            let rows: Vec<BandRow> = kys
                .iter()
                .enumerate()
                .map(|(i, &ky)| {
                    let mut e = [found[4 * i], found[4 * i + 1], found[4 * i + 2], found[4 * i + 3]];
                    e.sort_by(f64::total_cmp);
                    BandRow { ky, energies: e }
                })
                .collect();
            let resolution = 2.0 * PI / (cfg.samples as f64 * cfg.step(&p, Momentum::default()));
            Ok(summarize(&p, s, BandTable { kx: 0.0, rows }, resolution, grid.spacing()))
        })
        .collect::<Result<Vec<_>>>()?;
    let gap_curve = points.iter().map(|q| (q.s, q.min_gap)).collect();
    Ok(QptResult { points, gap_curve })
}

fn summarize(p: &TIParams, s: f64, bands: BandTable, resolution: f64, h: f64) -> QptPoint {
    let gaps: Vec<f64> = bands.rows.iter().map(|r| r.energies[2] - r.energies[1]).collect();
    let (imin, &min_gap) = gaps.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).expect("non-empty grid");
    let n = gaps.len();
    let mut dirac_ky = Vec::new();
    for i in 0..n {
        let left = if i > 0 { gaps[i - 1] } else { f64::INFINITY };
        let right = if i + 1 < n { gaps[i + 1] } else { f64::INFINITY };
        if gaps[i] > resolution || gaps[i] > left || gaps[i] >= right {
            continue;
        }
        let mut ky = bands.rows[i].ky;
        if left.is_finite() && right.is_finite() {
            let rise = left.max(right) - gaps[i];
            if rise > 0.0 {
                ky += h * ((left - right) / (2.0 * rise)).clamp(-0.5, 0.5);
            }
        }
        dirac_ky.push(ky);
    }
    let phase = match dirac_ky.len() {
        0 => Phase::Insulating,
        1 => Phase::Critical,
        _ => Phase::Semimetallic,
    };
    QptPoint {
        s,
        min_gap,
        ky_at_min: bands.rows[imin].ky,
        dirac_ky,
        phase,
        expected_gap: minimal_gap(p).map(|g| g.gap).unwrap_or(f64::NAN),
        resolution,
        bands,
    }
}

/// Exact `e^{−iH_TI t}` for checks against recorded signals.
pub fn exact_signal(state: &InputStateSpec, p: &TIParams, k: Momentum, t: &[f64]) -> Result<Vec<C64>> {
    let psi = state.resolve(p, k)?;
    t.iter()
        .map(|&t| {
            let u = propagator(&build_h_ti(p, k), t)?;
            psi.inner(&psi.evolve(&u)?)
        })
        .collect()
}
