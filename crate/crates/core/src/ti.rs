//! Effective four-band model of a magnetized thin-film topological insulator.
//!
//! The Hamiltonian acts on spin (σ) ⊗ surface (τ), in that factor order,
//! with basis states `|0⟩` being σz = +1 or τz = +1:
//!
//! `H = A (ky σx − kx σy) τz − ε_B σx + Δ τx`.
//!
//! Energies are in whatever unit `A·k`, `Δ` and `ε_B` share; the core model
//! carries no physical units.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numeric::{format_sig, golden_section_min, wrap_angle};
use crate::spin::{ops, CMatrix, HilbertSpace, Operator, C64};

/// Model parameters: Dirac velocity `a`, hybridization `delta`, magnetic
/// energy `eps_b`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TIParams {
    pub a: f64,
    pub delta: f64,
    pub eps_b: f64,
}

impl TIParams {
    pub fn new(a: f64, delta: f64, eps_b: f64) -> Result<Self> {
        let p = Self { a, delta, eps_b };
        p.validate()?;
        Ok(p)
    }

    /// Parameters with `eps_b = s · delta`.
    pub fn with_ratio(a: f64, delta: f64, s: f64) -> Result<Self> {
        Self::new(a, delta, s * delta)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a.is_finite() && self.a > 0.0) {
            return Err(invalid("a", "A > 0 required"));
        }
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(invalid("delta", "Δ > 0 required"));
        }
        if !(self.eps_b.is_finite() && self.eps_b >= 0.0) {
            return Err(invalid("eps_b", "ε_B ≥ 0 required"));
        }
        Ok(())
    }

    /// `ε_B / Δ`.
    pub fn ratio(&self) -> f64 {
        self.eps_b / self.delta
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Momentum {
    pub kx: f64,
    pub ky: f64,
}

impl Momentum {
    pub fn new(kx: f64, ky: f64) -> Self {
        Self { kx, ky }
    }

    pub fn norm(&self) -> f64 {
        self.kx.hypot(self.ky)
    }
}

/// The two-factor space σ ⊗ τ.
pub fn ti_space() -> HilbertSpace {
    HilbertSpace::new(vec![2, 2]).expect("static dims")
}

fn pauli_pair(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

pub fn build_h_ti(p: &TIParams, k: Momentum) -> Operator {
    let (sx, sy, sz) = (ops::sigma_x(), ops::sigma_y(), ops::sigma_z());
    let id = ops::identity(2);
    let m = pauli_pair(&sx, &sz) * C64::from(p.a * k.ky) - pauli_pair(&sy, &sz) * C64::from(p.a * k.kx)
        - pauli_pair(&sx, &id) * C64::from(p.eps_b)
        + pauli_pair(&id, &sx) * C64::from(p.delta);
    Operator::new(ti_space(), m).expect("4x4")
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumMethod {
    ClosedForm,
    Numeric,
}

/// Four ascending energies.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub energies: [f64; 4],
    pub method: SpectrumMethod,
}

/// Closed form `−σ ε_B ± √(A² ky² + Δ²)` on the kx = 0 line, dense
/// diagonalization elsewhere.
pub fn spectrum_exact(p: &TIParams, k: Momentum) -> Spectrum {
    if k.kx == 0.0 {
        let r = (p.a * k.ky).hypot(p.delta);
        let mut e = [-p.eps_b - r, -p.eps_b + r, p.eps_b - r, p.eps_b + r];
        e.sort_by(f64::total_cmp);
        Spectrum {
            energies: e,
            method: SpectrumMethod::ClosedForm,
        }
    } else {
        Spectrum {
            energies: numeric_energies(p, k),
            method: SpectrumMethod::Numeric,
        }
    }
}

/// Dense diagonalization regardless of momentum.
pub fn numeric_energies(p: &TIParams, k: Momentum) -> [f64; 4] {
    let v = build_h_ti(p, k).eigenvalues().expect("Hermitian by construction");
    [v[0], v[1], v[2], v[3]]
}

/// Uniform ky grid including both end points.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KyGrid {
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

impl KyGrid {
    pub fn new(min: f64, max: f64, steps: usize) -> Result<Self> {
        let g = Self { min, max, steps };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps < 2 {
            return Err(invalid("steps", "steps ≥ 2 required"));
        }
        if !(self.min.is_finite() && self.max.is_finite() && self.min < self.max) {
            return Err(invalid("ky_range", "min < max required"));
        }
        Ok(())
    }

    pub fn points(&self) -> Vec<f64> {
        let h = (self.max - self.min) / (self.steps - 1) as f64;
        (0..self.steps)
            .map(|i| if i + 1 == self.steps { self.max } else { self.min + h * i as f64 })
            .collect()
    }

    pub fn spacing(&self) -> f64 {
        (self.max - self.min) / (self.steps - 1) as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandRow {
    pub ky: f64,
    pub energies: [f64; 4],
}

/// Energies along a ky cut at fixed kx.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandTable {
    pub kx: f64,
    pub rows: Vec<BandRow>,
}

pub const BAND_CSV_HEADER: &str = "ky,E1,E2,E3,E4";

impl BandTable {
    /// CSV with `# key=value` comment lines ahead of the header.
    pub fn to_csv(&self, metadata: &[(String, String)]) -> String {
        let mut out = String::new();
        for (k, v) in metadata {
            out.push_str(&format!("# {k}={v}\n"));
        }
        out.push_str(BAND_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let cells: Vec<String> = std::iter::once(r.ky)
                .chain(r.energies)
                .map(|x| format_sig(x, 12))
                .collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    /// Parse the CSV written by [`Self::to_csv`]; comment lines are skipped.
    pub fn from_csv(text: &str, kx: f64) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty());
        match lines.next() {
            Some(h) if h.trim() == BAND_CSV_HEADER => {}
            _ => return Err(invalid("csv", format!("expected header `{BAND_CSV_HEADER}`"))),
        }
        let mut rows = Vec::new();
        for line in lines {
            let vals: Vec<f64> = line
                .split(',')
                .map(|c| c.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| invalid("csv", e.to_string()))?;
            if vals.len() != 5 {
                return Err(invalid("csv", format!("expected 5 columns, got {}", vals.len())));
            }
            rows.push(BandRow {
                ky: vals[0],
                energies: [vals[1], vals[2], vals[3], vals[4]],
            });
        }
        Ok(Self { kx, rows })
    }
}

pub fn band_scan(p: &TIParams, kx: f64, grid: &KyGrid) -> Result<BandTable> {
    p.validate()?;
    grid.validate()?;
    let rows = grid
        .points()
        .into_par_iter()
        .map(|ky| BandRow {
            ky,
            energies: spectrum_exact(p, Momentum::new(kx, ky)).energies,
        })
        .collect();
    Ok(BandTable { kx, rows })
}

/// `E3 − E2` on the kx = 0 line.
pub fn central_gap(p: &TIParams, ky: f64) -> f64 {
    let e = spectrum_exact(p, Momentum::new(0.0, ky)).energies;
    e[2] - e[1]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiracPoint {
    pub kx: f64,
    pub ky: f64,
    pub gap: f64,
}

const DIRAC_GAP_TOL: f64 = 1e-8;

fn is_critical(p: &TIParams) -> bool {
    (p.eps_b - p.delta).abs() <= 1e-12 * p.delta
}

/// Gap-closing points on the kx = 0 line, each confirmed by a bracketed
/// minimization of the central gap.
pub fn dirac_points(p: &TIParams) -> Result<Vec<DiracPoint>> {
    p.validate()?;
    let guesses: Vec<(f64, f64, f64)> = if is_critical(p) {
        let w = 0.2 * p.delta / p.a;
        vec![(0.0, -w, w)]
    } else if p.eps_b > p.delta {
        let k0 = (p.eps_b * p.eps_b - p.delta * p.delta).sqrt() / p.a;
        vec![(-k0, -1.2 * k0, -0.8 * k0), (k0, 0.8 * k0, 1.2 * k0)]
    } else {
        Vec::new()
    };
    guesses
        .into_iter()
        .map(|(_, lo, hi)| {
            let (ky, gap) = golden_section_min(|ky| central_gap(p, ky), lo, hi, 1e-14 * (1.0 + hi.abs()));
            if gap > DIRAC_GAP_TOL * p.delta.max(1.0) {
                return Err(Error::Contract(format!("Dirac point near ky={ky} has gap {gap:.3e}")));
            }
            Ok(DiracPoint { kx: 0.0, ky, gap })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Insulating,
    Critical,
    Semimetallic,
}

impl Phase {
    /// Number of Dirac points carried by the phase.
    pub fn dirac_count(self) -> usize {
        match self {
            Phase::Insulating => 0,
            Phase::Critical => 1,
            Phase::Semimetallic => 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapResult {
    pub gap: f64,
    pub ky_at_min: f64,
    pub phase: Phase,
}

/// Smallest central gap over ky on the kx = 0 line.
pub fn minimal_gap(p: &TIParams) -> Result<GapResult> {
    p.validate()?;
    let hi = 2.0 * p.eps_b.max(p.delta) / p.a;
    let (ky, gap) = golden_section_min(|ky| central_gap(p, ky), 0.0, hi, 1e-13 * (1.0 + hi));
    let edge = central_gap(p, 0.0);
    let (ky, gap) = if edge <= gap { (0.0, edge) } else { (ky, gap) };
    let tol = 1e-6 * p.delta;
    let phase = if (p.eps_b - p.delta).abs() <= tol {
        Phase::Critical
    } else if p.eps_b < p.delta {
        Phase::Insulating
    } else {
        Phase::Semimetallic
    };
    Ok(GapResult {
        gap,
        ky_at_min: ky,
        phase,
    })
}

/// Closed polygon of `points` momenta on a circle, counter-clockwise.
pub fn circle_loop(center: Momentum, radius: f64, points: usize) -> Vec<Momentum> {
    (0..points)
        .map(|i| {
            let th = 2.0 * std::f64::consts::PI * i as f64 / points as f64;
            Momentum::new(center.kx + radius * th.cos(), center.ky + radius * th.sin())
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindingResult {
    /// Signed winding: magnitude from the Berry phase, orientation from the
    /// chiral winding.
    pub winding: i32,
    /// Wilson-loop Berry phase in `(−π, π]`.
    pub berry_phase: f64,
    /// Distance of `berry_phase / π` from the nearest integer.
    pub residue: f64,
    /// Winding of `det D` where `D` is the off-diagonal block of `H` in the
    /// eigenbasis of the chiral operator `σz τz`.
    pub chiral_winding: i32,
}

const WINDING_RESIDUE_TOL: f64 = 0.05;

/// Winding of band `band` (0 = lowest) around a closed momentum loop. The
/// loop is given as its vertices; the closing segment is implied.
pub fn winding_number(p: &TIParams, contour: &[Momentum], band: usize) -> Result<WindingResult> {
    p.validate()?;
    if band > 3 {
        return Err(invalid("band", "band index must be 0..=3"));
    }
    if contour.len() < 3 {
        return Err(invalid("loop", "at least 3 loop points required"));
    }
    let mut vectors = Vec::with_capacity(contour.len());
    let mut dets = Vec::with_capacity(contour.len());
    for &k in contour {
        let h = build_h_ti(p, k);
        let (vals, vecs) = h.eigh()?;
        let mut spacing = f64::INFINITY;
        if band > 0 {
            spacing = spacing.min(vals[band] - vals[band - 1]);
        }
        if band < 3 {
            spacing = spacing.min(vals[band + 1] - vals[band]);
        }
        if spacing < 1e-6 * p.delta {
            return Err(Error::Degeneracy { band, spacing });
        }
        vectors.push(vecs.column(band).into_owned());
        dets.push(chiral_block_det(h.matrix()));
    }

    let mut link = C64::new(1.0, 0.0);
    for i in 0..vectors.len() {
        let next = &vectors[(i + 1) % vectors.len()];
        link *= vectors[i].dotc(next);
    }
    let berry_phase = -link.arg();
    let ratio = berry_phase / std::f64::consts::PI;
    let n = ratio.round();
    let residue = (ratio - n).abs();
    if residue > WINDING_RESIDUE_TOL {
        return Err(Error::WindingResidue { residue });
    }

    let scale = (p.a * contour.iter().map(Momentum::norm).fold(0.0, f64::max) + p.eps_b + p.delta).powi(2);
    let mut total = 0.0;
    for i in 0..dets.len() {
        let (a, b) = (dets[i], dets[(i + 1) % dets.len()]);
        if a.norm() < 1e-12 * scale || b.norm() < 1e-12 * scale {
            return Err(Error::Degeneracy { band, spacing: 0.0 });
        }
        total += wrap_angle(b.arg() - a.arg());
    }
    let chiral_winding = (total / (2.0 * std::f64::consts::PI)).round() as i32;

    let n = n as i32;
    let winding = if n != 0 && chiral_winding % 2 != 0 {
        chiral_winding.signum() * n.abs()
    } else {
        n
    };
    Ok(WindingResult {
        winding,
        berry_phase,
        residue,
        chiral_winding,
    })
}

/// Determinant of `H[{0,3},{1,2}]`, the block connecting the σzτz = +1 and
/// σzτz = −1 sectors.
fn chiral_block_det(h: &CMatrix) -> C64 {
    let (p, m) = ([0usize, 3], [1usize, 2]);
    h[(p[0], m[0])] * h[(p[1], m[1])] - h[(p[0], m[1])] * h[(p[1], m[0])]
}

/// The chiral operator `σz τz`.
pub fn chiral_operator() -> Operator {
    Operator::new(ti_space(), ops::sigma_z().kronecker(&ops::sigma_z())).expect("4x4")
}

pub const HBAR: f64 = 1.054_571_817e-34;
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
pub const ELECTRON_MASS: f64 = 9.109_383_701_5e-31;

/// Material and field inputs for the magnetic energy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicalFieldParams {
    /// In-plane field, tesla.
    pub b_tesla: f64,
    /// Film thickness, nm.
    pub d_nm: f64,
    /// Fermi velocity, nm/µs.
    pub v_f_nm_per_us: f64,
    /// Effective mass in electron masses; `None` drops the Zeeman term.
    pub mass_ratio: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MagneticEnergy {
    /// `|v_F q_B|`, rad/µs.
    pub eps_b: f64,
    /// Signed `q_B`, 1/nm.
    pub q_b_per_nm: f64,
    /// `−1` when the Zeeman term outweighs the orbital term.
    pub sign: i8,
    pub magnetic_length_nm: f64,
}

pub fn magnetic_length_nm(b_tesla: f64) -> f64 {
    (HBAR / (ELEMENTARY_CHARGE * b_tesla)).sqrt() * 1e9
}

/// `ε_B = v_F q_B` with `q_B = d / (2 l²) − ħ / (2 m v_F l²)`.
pub fn magnetic_energy(f: &PhysicalFieldParams) -> Result<MagneticEnergy> {
    if !(f.b_tesla.is_finite() && f.b_tesla > 0.0) {
        return Err(invalid("b_tesla", "B > 0 required"));
    }
    if !(f.d_nm.is_finite() && f.d_nm > 0.0) {
        return Err(invalid("d_nm", "d > 0 required"));
    }
    if !(f.v_f_nm_per_us.is_finite() && f.v_f_nm_per_us > 0.0) {
        return Err(invalid("v_f_nm_per_us", "v_F > 0 required"));
    }
    let l = magnetic_length_nm(f.b_tesla);
    let zeeman_length_nm = match f.mass_ratio {
        None => 0.0,
        Some(r) if r.is_finite() && r > 0.0 => {
            let v_si = f.v_f_nm_per_us * 1e-3;
            HBAR / (r * ELECTRON_MASS * v_si) * 1e9
        }
        Some(_) => return Err(invalid("mass_ratio", "m > 0 required")),
    };
    let q_b = (f.d_nm - zeeman_length_nm) / (2.0 * l * l);
    Ok(MagneticEnergy {
        eps_b: (f.v_f_nm_per_us * q_b).abs(),
        q_b_per_nm: q_b,
        sign: if q_b < 0.0 { -1 } else { 1 },
        magnetic_length_nm: l,
    })
}
