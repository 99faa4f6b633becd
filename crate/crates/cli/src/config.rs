//! One JSON schema shared by every command, with flag overrides on top.

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use nvqsim_core::nv::{NoiseModel, Tier};
use nvqsim_core::spectroscopy::{InputStateSpec, Readout, SignalConfig, SpectralOptions, Window};
use nvqsim_core::ti::{KyGrid, Momentum, TIParams};
use nvqsim_core::trotter::{anchor_momentum, Hardware};
use nvqsim_core::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

fn invalid(field: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { field, reason: reason.into() }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindingLoop {
    pub center_kx: f64,
    /// Defaults to the positive Dirac point when there is one.
    pub center_ky: Option<f64>,
    pub radius: f64,
    pub points: usize,
    pub band: usize,
}

impl Default for WindingLoop {
    fn default() -> Self {
        Self {
            center_kx: 0.0,
            center_ky: None,
            radius: 0.3,
            points: 200,
            band: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub a: f64,
    pub delta: f64,
    pub eps_b: Option<f64>,
    /// `ε_B / Δ`; used when `eps_b` is absent.
    pub s: Option<f64>,
    /// Momentum of single-point commands; `|k| = Δ/(2A)` along the diagonal
    /// when absent. Band scans default to kx = 0.
    pub kx: Option<f64>,
    pub ky: Option<f64>,
    pub ky_grid: KyGrid,
    /// Trotter slices: per sampling step for signals, in total for timing.
    pub n: usize,
    /// Evolution time of the timing run.
    pub t: f64,
    pub samples: usize,
    pub dt: Option<f64>,
    pub exact_u: bool,
    pub readout: Readout,
    pub shots: Option<u64>,
    pub state: InputStateSpec,
    pub tier: Tier,
    pub noise: NoiseModel,
    pub hardware: Hardware,
    pub seed: u64,
    pub s_values: Vec<f64>,
    pub n_values: Vec<usize>,
    pub window: Window,
    pub threshold: f64,
    pub winding: WindingLoop,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            a: 1.0,
            delta: 1.0,
            eps_b: None,
            s: None,
            kx: None,
            ky: None,
            ky_grid: KyGrid { min: -2.0, max: 2.0, steps: 101 },
            n: 2,
            t: 1.0,
            samples: 256,
            dt: None,
            exact_u: false,
            readout: Readout::Both,
            shots: None,
            state: InputStateSpec::Eigenstate { index: 0 },
            tier: Tier::Gate,
            noise: NoiseModel::default(),
            hardware: Hardware::default(),
            seed: 0,
            s_values: vec![0.57, 1.0, 1.43],
            n_values: vec![2, 4, 8, 16, 32],
            window: Window::Hann,
            threshold: 0.02,
            winding: WindingLoop::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TierArg {
    Gate,
    Pulse,
    Noisy,
}

impl From<TierArg> for Tier {
    fn from(t: TierArg) -> Self {
        match t {
            TierArg::Gate => Tier::Gate,
            TierArg::Pulse => Tier::Pulse,
            TierArg::Noisy => Tier::Noisy,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ReadoutArg {
    Both,
    Cosine,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum WindowArg {
    Hann,
    Rectangular,
}

/// Flags shared by all commands; any flag given overrides the config file.
#[derive(Args, Debug, Default)]
pub struct Overrides {
    /// JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub tier: Option<TierArg>,
    /// Worker threads; defaults to the available cores.
    #[arg(long)]
    pub jobs: Option<usize>,

    #[arg(long = "A", visible_alias = "a", allow_hyphen_values = true)]
    pub a: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub delta: Option<f64>,
    #[arg(long = "eps-b", allow_hyphen_values = true)]
    pub eps_b: Option<f64>,
    /// Field ratio ε_B/Δ, or a comma list for scans.
    #[arg(long, allow_hyphen_values = true)]
    pub s: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub kx: Option<f64>,
    /// A single value or a `min:max:steps` grid.
    #[arg(long, allow_hyphen_values = true)]
    pub ky: Option<String>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Slice count, or a comma list for fidelity sweeps.
    #[arg(long)]
    pub n: Option<String>,
    #[arg(long)]
    pub t: Option<f64>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub dt: Option<f64>,
    /// Controlled evolution from the exact exponential.
    #[arg(long)]
    pub exact_u: bool,
    #[arg(long, value_enum)]
    pub readout: Option<ReadoutArg>,
    #[arg(long)]
    pub shots: Option<u64>,
    /// `eigen:INDEX` or `random:SEED`.
    #[arg(long)]
    pub state: Option<String>,
    #[arg(long = "t2-star")]
    pub t2_star: Option<f64>,
    #[arg(long = "t2")]
    pub t2: Option<f64>,
    #[arg(long)]
    pub mc_samples: Option<usize>,
    #[arg(long)]
    pub t2_envelope: bool,
    #[arg(long, value_enum)]
    pub window: Option<WindowArg>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub center_kx: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub center_ky: Option<f64>,
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long)]
    pub band: Option<usize>,
}

fn parse_list<T: std::str::FromStr>(field: &'static str, s: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|x| x.trim().parse::<T>().map_err(|_| invalid(field, format!("cannot parse `{x}`"))))
        .collect()
}

fn single<T: Copy>(field: &'static str, v: &[T]) -> Result<T> {
    match v {
        [x] => Ok(*x),
        _ => Err(invalid(field, "exactly one value expected")),
    }
}

fn parse_grid(s: &str) -> Result<KyGrid> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(invalid("ky", "grid must be min:max:steps"));
    }
    let num = |x: &str| x.trim().parse::<f64>().map_err(|_| invalid("ky", format!("cannot parse `{x}`")));
    let steps = parts[2].trim().parse::<usize>().map_err(|_| invalid("steps", "steps must be an integer"))?;
    Ok(KyGrid { min: num(parts[0])?, max: num(parts[1])?, steps })
}

fn parse_state(s: &str) -> Result<InputStateSpec> {
    let (mode, arg) = s.split_once(':').ok_or_else(|| invalid("state", "expected eigen:INDEX or random:SEED"))?;
    match mode {
        "eigen" | "eigenstate" => Ok(InputStateSpec::Eigenstate {
            index: arg.parse().map_err(|_| invalid("state", "bad eigenstate index"))?,
        }),
        "random" => Ok(InputStateSpec::Random {
            seed: arg.parse().map_err(|_| invalid("state", "bad seed"))?,
        }),
        _ => Err(invalid("state", format!("unknown state mode `{mode}`"))),
    }
}

/// Which of the list-or-scalar flags a command reads as a list.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ListFlags {
    pub s: bool,
    pub n: bool,
}

impl RunConfig {
    pub fn load(o: &Overrides, lists: ListFlags) -> Result<Self> {
        let mut c = match &o.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| invalid("config", format!("{}: {e}", path.display())))?;
                serde_json::from_str(&text).map_err(|e| invalid("config", e.to_string()))?
            }
            None => RunConfig::default(),
        };
        c.apply(o, lists)?;
        Ok(c)
    }

    fn apply(&mut self, o: &Overrides, lists: ListFlags) -> Result<()> {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.tier {
            self.tier = v.into();
        }
        if let Some(v) = o.a {
            self.a = v;
        }
        if let Some(v) = o.delta {
            self.delta = v;
        }
        if let Some(v) = o.eps_b {
            self.eps_b = Some(v);
            self.s = None;
        }
        if let Some(s) = &o.s {
            let v = parse_list::<f64>("s", s)?;
            if lists.s {
                self.s_values = v;
            } else {
                self.s = Some(single("s", &v)?);
                self.eps_b = None;
            }
        }
        if let Some(v) = o.kx {
            self.kx = Some(v);
        }
        if let Some(ky) = &o.ky {
            if ky.contains(':') {
                self.ky_grid = parse_grid(ky)?;
            } else {
                self.ky = Some(ky.trim().parse().map_err(|_| invalid("ky", format!("cannot parse `{ky}`")))?);
            }
        }
        if let Some(v) = o.steps {
            self.ky_grid.steps = v;
        }
        if let Some(n) = &o.n {
            let v = parse_list::<usize>("n", n)?;
            if lists.n {
                self.n_values = v;
            } else {
                self.n = single("n", &v)?;
            }
        }
        if let Some(v) = o.t {
            self.t = v;
        }
        if let Some(v) = o.samples {
            self.samples = v;
        }
        if let Some(v) = o.dt {
            self.dt = Some(v);
        }
        if o.exact_u {
            self.exact_u = true;
        }
        if let Some(v) = o.readout {
            self.readout = match v {
                ReadoutArg::Both => Readout::Both,
                ReadoutArg::Cosine => Readout::Cosine,
            };
        }
        if let Some(v) = o.shots {
            self.shots = Some(v);
        }
        if let Some(v) = &o.state {
            self.state = parse_state(v)?;
        }
        if let Some(v) = o.t2_star {
            self.noise.t2_star_e = v;
        }
        if let Some(v) = o.t2 {
            self.noise.t2_e = v;
        }
        if let Some(v) = o.mc_samples {
            self.noise.mc_samples = v;
        }
        if o.t2_envelope {
            self.noise.t2_envelope = true;
        }
        if let Some(v) = o.window {
            self.window = match v {
                WindowArg::Hann => Window::Hann,
                WindowArg::Rectangular => Window::Rectangular,
            };
        }
        if let Some(v) = o.threshold {
            self.threshold = v;
        }
        if let Some(v) = o.center_kx {
            self.winding.center_kx = v;
        }
        if let Some(v) = o.center_ky {
            self.winding.center_ky = Some(v);
        }
        if let Some(v) = o.radius {
            self.winding.radius = v;
        }
        if let Some(v) = o.points {
            self.winding.points = v;
        }
        if let Some(v) = o.band {
            self.winding.band = v;
        }
        self.noise.seed = self.seed;
        self.resolve()
    }

    /// Fill in derived defaults and check every module precondition.
    fn resolve(&mut self) -> Result<()> {
        let eps_b = match (self.eps_b, self.s) {
            (Some(e), _) => e,
            (None, Some(s)) => s * self.delta,
            (None, None) => self.delta,
        };
        let p = TIParams::new(self.a, self.delta, eps_b)?;
        self.eps_b = Some(eps_b);
        self.s = Some(p.ratio());
        self.ky_grid.validate()?;
        if self.n < 1 || self.n_values.iter().any(|&n| n < 1) {
            return Err(invalid("n", "n ≥ 1 required"));
        }
        if self.n_values.is_empty() {
            return Err(invalid("n", "at least one slice count required"));
        }
        if !(self.t.is_finite() && self.t >= 0.0) {
            return Err(invalid("t", "t ≥ 0 required"));
        }
        if self.s_values.is_empty() || self.s_values.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(invalid("s", "positive field ratios required"));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(invalid("threshold", "threshold in (0, 1) required"));
        }
        if self.winding.points < 3 {
            return Err(invalid("points", "at least three loop points required"));
        }
        if !(self.winding.radius > 0.0) {
            return Err(invalid("radius", "radius > 0 required"));
        }
        self.noise.validate()?;
        self.hardware.nv.validate()?;
        self.hardware.durations.validate()?;
        if self.samples < 2 {
            return Err(invalid("samples", "at least two samples required"));
        }
        Ok(())
    }

    pub fn params(&self) -> TIParams {
        TIParams { a: self.a, delta: self.delta, eps_b: self.eps_b.expect("resolved") }
    }

    pub fn momentum(&self) -> Momentum {
        let anchor = anchor_momentum(&self.params());
        Momentum::new(self.kx.unwrap_or(anchor.kx), self.ky.unwrap_or(anchor.ky))
    }

    pub fn signal(&self) -> SignalConfig {
        SignalConfig {
            samples: self.samples,
            dt: self.dt,
            n: self.n,
            exact_u: self.exact_u,
            readout: self.readout,
            shots: self.shots,
            seed: self.seed,
        }
    }

    pub fn spectral(&self) -> SpectralOptions {
        SpectralOptions { window: self.window, threshold: self.threshold }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    pub fn sha256(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_string(self).expect("serializable").as_bytes()))
    }
}
