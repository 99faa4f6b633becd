use serde::{Deserialize, Serialize};

use super::{NVParams, Spin};
use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseKind {
    /// Non-selective microwave rotation of the electron.
    MwResonant,
    /// Microwave drive resolved on one ¹⁴N level.
    MwSelective,
    /// Radio-frequency drive of the ¹⁴N 0 ↔ +1 transition.
    RfN,
    /// Radio-frequency drive of the ¹³C in the m_S = 0 manifold.
    RfC,
    FreeEvolution,
    /// Electron π pulse.
    ElectronFlip,
    /// Zero-duration software frame update.
    FrameZ,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    /// Acts on every ¹⁴N level.
    All,
    /// Acts only where the ¹⁴N is in level `m`.
    NLevel(i8),
    /// Acts only where the electron is in level `m`.
    ELevel(i8),
    Spin(Spin),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Section {
    Preparation,
    Evolution,
    Readout,
}

/// One element of a pulse schedule. Phases are given in the reference
/// rotating frame at the start of the element.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseElement {
    pub kind: PulseKind,
    pub duration_us: f64,
    pub amplitude_gauss: f64,
    pub phase_rad: f64,
    pub target: Target,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub section: Option<Section>,
}

impl PulseElement {
    fn bare(kind: PulseKind, duration_us: f64, amplitude_gauss: f64, phase_rad: f64, target: Target) -> Self {
        Self {
            kind,
            duration_us,
            amplitude_gauss,
            phase_rad,
            target,
            section: None,
        }
    }

    /// Electron rotation by `angle` about `cos φ X + sin φ Y` on all ¹⁴N levels.
    pub fn mw_rotation(p: &NVParams, angle: f64, phase: f64, duration: f64) -> Self {
        Self::bare(
            PulseKind::MwResonant,
            duration,
            2.0 * angle / (p.gamma_e * duration),
            phase,
            Target::All,
        )
    }

    /// Selective microwave drive with qubit-level amplitude `¼ γe B1`.
    pub fn mw_selective(amplitude_gauss: f64, phase: f64, duration: f64, n_level: i8) -> Self {
        Self::bare(
            PulseKind::MwSelective,
            duration,
            amplitude_gauss,
            phase,
            Target::NLevel(n_level),
        )
    }

    pub fn electron_flip(p: &NVParams, phase: f64, duration: f64, target: Target) -> Self {
        let mut e = Self::mw_rotation(p, std::f64::consts::PI, phase, duration);
        e.kind = PulseKind::ElectronFlip;
        e.target = target;
        e
    }

    /// ¹³C drive with Rabi rate `γC B1`.
    pub fn rf_c(p: &NVParams, rabi: f64, phase: f64, duration: f64) -> Self {
        Self::bare(PulseKind::RfC, duration, rabi / p.gamma_c, phase, Target::All)
    }

    /// ¹⁴N drive with Rabi rate `γN B1` on the 0 ↔ +1 transition.
    pub fn rf_n(p: &NVParams, rabi: f64, phase: f64, duration: f64, target: Target) -> Self {
        Self::bare(PulseKind::RfN, duration, rabi / p.gamma_n, phase, target)
    }

    pub fn free(duration: f64) -> Self {
        Self::bare(PulseKind::FreeEvolution, duration, 0.0, 0.0, Target::All)
    }

    /// `exp(−i angle I_z)` on `spin`.
    pub fn frame_z(spin: Spin, angle: f64) -> Self {
        Self::bare(PulseKind::FrameZ, 0.0, 0.0, angle, Target::Spin(spin))
    }

    pub fn in_section(mut self, section: Section) -> Self {
        self.section = Some(section);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration_us.is_finite() && self.duration_us >= 0.0) {
            return Err(invalid("duration_us", "duration ≥ 0 required"));
        }
        if !self.amplitude_gauss.is_finite() || !self.phase_rad.is_finite() {
            return Err(invalid("amplitude_gauss", "must be finite"));
        }
        match (self.kind, self.target) {
            (PulseKind::FrameZ, Target::Spin(_)) => Ok(()),
            (PulseKind::FrameZ, _) => Err(invalid("target", "frame updates need a spin target")),
            (PulseKind::MwSelective, Target::NLevel(m)) if (-1..=1).contains(&m) => Ok(()),
            (PulseKind::MwSelective, _) => Err(invalid("target", "selective pulses need an ¹⁴N level")),
            (_, Target::NLevel(m)) | (_, Target::ELevel(m)) if !(-1..=1).contains(&m) => {
                Err(invalid("target", "level out of range"))
            }
            _ => Ok(()),
        }
    }

    pub fn category(&self) -> TimingCategory {
        match self.kind {
            PulseKind::RfN | PulseKind::RfC => TimingCategory::Rf,
            PulseKind::MwResonant | PulseKind::MwSelective | PulseKind::ElectronFlip => TimingCategory::Mw,
            PulseKind::FreeEvolution => TimingCategory::Free,
            PulseKind::FrameZ => TimingCategory::Virtual,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TimingCategory {
    Rf,
    Mw,
    Free,
    Virtual,
}

/// Ordered pulse elements; serializes as a bare JSON array.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PulseSchedule {
    pub elements: Vec<PulseElement>,
}

impl PulseSchedule {
    pub fn new(elements: Vec<PulseElement>) -> Self {
        Self { elements }
    }

    pub fn push(&mut self, e: PulseElement) {
        self.elements.push(e);
    }

    pub fn extend(&mut self, other: impl IntoIterator<Item = PulseElement>) {
        self.elements.extend(other);
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        self.elements.iter().try_for_each(PulseElement::validate)
    }

    /// Elements that are simulated, i.e. everything outside the readout
    /// section.
    pub fn simulated(&self) -> impl Iterator<Item = &PulseElement> {
        self.elements.iter().filter(|e| e.section != Some(Section::Readout))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let sched: Self = serde_json::from_str(s).map_err(|e| invalid("schedule", e.to_string()))?;
        sched.validate()?;
        Ok(sched)
    }
}

/// Wall-clock totals of a schedule, in µs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub total_us: f64,
    pub rf_us: f64,
    pub mw_us: f64,
    pub free_us: f64,
}

impl TimingReport {
    /// Time in electron operations: microwave plus free evolution.
    pub fn electron_us(&self) -> f64 {
        self.mw_us + self.free_us
    }
}

pub fn schedule_timing(s: &PulseSchedule) -> TimingReport {
    let mut t = TimingReport::default();
    for e in &s.elements {
        t.total_us += e.duration_us;
        match e.category() {
            TimingCategory::Rf => t.rf_us += e.duration_us,
            TimingCategory::Mw => t.mw_us += e.duration_us,
            TimingCategory::Free => t.free_us += e.duration_us,
            TimingCategory::Virtual => {}
        }
    }
    t
}
