use std::collections::BTreeMap;
use std::path::Path;

use nvqsim_core::nv::{schedule_timing, PulseKind};
use nvqsim_core::spectroscopy::{extract_spectrum, qpt_scan, run_signal, Backend};
use nvqsim_core::ti::{band_scan, circle_loop, dirac_points, minimal_gap, spectrum_exact, winding_number, Momentum};
use nvqsim_core::trotter::{algorithm_schedule, compile_controlled_u, fidelity_report, trotter_scaling, TrotterPlan};
use nvqsim_core::Result;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;

/// Files written by a command, in write order.
pub type Outputs = Vec<(String, String)>;

#[derive(Serialize)]
struct Metadata<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config_sha256: String,
    seed: u64,
}

fn metadata<'a>(command: &'a str, c: &RunConfig) -> Metadata<'a> {
    Metadata {
        tool: "nvqsim",
        version: env!("CARGO_PKG_VERSION"),
        command,
        config_sha256: c.sha256(),
        seed: c.seed,
    }
}

fn csv_metadata(command: &str, c: &RunConfig) -> Vec<(String, String)> {
    let m = metadata(command, c);
    vec![
        ("tool".into(), m.tool.into()),
        ("version".into(), m.version.into()),
        ("command".into(), command.into()),
        ("config_sha256".into(), m.config_sha256),
        ("seed".into(), m.seed.to_string()),
    ]
}

fn report(command: &str, c: &RunConfig, body: Value) -> String {
    let mut v = json!({ "metadata": metadata(command, c) });
    if let Value::Object(extra) = body {
        v.as_object_mut().expect("object").extend(extra);
    }
    serde_json::to_string_pretty(&v).expect("serializable") + "\n"
}

fn backend(c: &RunConfig) -> Backend {
    Backend { tier: c.tier, hardware: c.hardware, noise: c.noise }
}

pub fn bands(c: &RunConfig) -> Result<(Outputs, Value)> {
    let p = c.params();
    let kx = c.kx.unwrap_or(0.0);
    let table = band_scan(&p, kx, &c.ky_grid)?;
    let dirac = if kx == 0.0 { dirac_points(&p)? } else { Vec::new() };
    let gap = minimal_gap(&p)?;
    let summary = json!({
        "rows": table.rows.len(),
        "dirac_ky": dirac.iter().map(|d| d.ky).collect::<Vec<_>>(),
        "min_gap": gap.gap,
        "phase": gap.phase,
    });
    Ok((vec![("bands.csv".into(), table.to_csv(&csv_metadata("bands", c)))], summary))
}

pub fn spectrum(c: &RunConfig) -> Result<(Outputs, Value)> {
    let p = c.params();
    let k = c.momentum();
    let sig = run_signal(&c.state, &p, k, &c.signal(), &backend(c))?;
    let spec = extract_spectrum(&sig, &c.spectral())?;
    let (energies, weights) = c.state.expected_weights(&p, k)?;
    let body = json!({
        "spectrum": spec,
        "exact": { "energies_rad_per_us": energies, "weights": weights },
        "tier": c.tier,
    });
    let summary = json!({ "energies_rad_per_us": spec.energies_rad_per_us, "weights": spec.weights, "resolution": spec.resolution });
    Ok((
        vec![
            ("signal.csv".into(), sig.to_csv(&csv_metadata("spectrum", c))),
            ("spectrum.json".into(), report("spectrum", c, body)),
        ],
        summary,
    ))
}

pub fn qpt(c: &RunConfig) -> Result<(Outputs, Value)> {
    let q = qpt_scan(c.a, c.delta, &c.s_values, &c.ky_grid, &c.signal(), &backend(c), &c.spectral())?;
    let phases: Vec<_> = q.points.iter().map(|p| p.phase).collect();
    let mut files = vec![("qpt.json".into(), report("qpt", c, json!({ "points": q.points, "gap_curve": q.gap_curve })))];
    for pt in &q.points {
        files.push((format!("qpt_bands_s{}.csv", pt.s), pt.bands.to_csv(&csv_metadata("qpt", c))));
    }
    Ok((files, json!({ "phases": phases, "gap_curve": q.gap_curve })))
}

pub fn fidelity(c: &RunConfig) -> Result<(Outputs, Value)> {
    let k = c.momentum();
    let reports = c
        .n_values
        .iter()
        .map(|&n| fidelity_report(c.a, c.delta, k, &c.s_values, n, c.samples))
        .collect::<Result<Vec<_>>>()?;
    let scaling = if c.n_values.len() >= 2 {
        let (errors, exponent) = trotter_scaling(&c.params(), k, c.t, &c.n_values)?;
        json!({ "t": c.t, "s": c.s, "n": c.n_values, "distance": errors, "exponent": exponent })
    } else {
        Value::Null
    };
    let summary = json!({
        "min_fidelity": reports.iter().map(|r| (r.n, r.min_fidelity)).collect::<Vec<_>>(),
        "exponent": scaling.get("exponent"),
    });
    let body = json!({ "momentum": k, "reports": reports, "scaling": scaling });
    Ok((vec![("fidelity.json".into(), report("fidelity", c, body))], summary))
}

fn kind_name(k: PulseKind) -> String {
    serde_json::to_value(k).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default()
}

pub fn timing(c: &RunConfig) -> Result<(Outputs, Value)> {
    let p = c.params();
    let k = c.momentum();
    let plan = TrotterPlan::for_params(&p, c.t, c.n)?;
    let schedule = algorithm_schedule(&plan, &p, k, &c.hardware, false)?;
    let t = schedule_timing(&schedule);
    let mut by_kind: BTreeMap<String, (usize, f64)> = BTreeMap::new();
    for e in &schedule.elements {
        let slot = by_kind.entry(kind_name(e.kind)).or_insert((0, 0.0));
        slot.0 += 1;
        slot.1 += e.duration_us;
    }
    let breakdown: BTreeMap<String, Value> = by_kind
        .into_iter()
        .map(|(k, (count, us))| (k, json!({ "count": count, "duration_us": us })))
        .collect();
    let compiled = compile_controlled_u(&plan, &p, k, &c.hardware)?;
    let summary = json!({
        "total_us": t.total_us,
        "rf_us": t.rf_us,
        "mw_us": t.mw_us,
        "free_us": t.free_us,
        "electron_us": t.electron_us(),
    });
    let body = json!({ "plan": plan, "timing": summary, "by_kind": breakdown });
    Ok((
        vec![
            ("timing.json".into(), report("timing", c, body)),
            ("schedule.json".into(), schedule.to_json() + "\n"),
            ("gates.json".into(), compiled.gates_json() + "\n"),
        ],
        summary,
    ))
}

pub fn winding(c: &RunConfig) -> Result<(Outputs, Value)> {
    let p = c.params();
    let w = &c.winding;
    let center_ky = w.center_ky.unwrap_or_else(|| dirac_points(&p).ok().and_then(|d| d.last().map(|d| d.ky)).unwrap_or(0.0));
    let center = Momentum::new(w.center_kx, center_ky);
    let result = winding_number(&p, &circle_loop(center, w.radius, w.points), w.band)?;
    let body = json!({ "center": center, "radius": w.radius, "points": w.points, "band": w.band, "result": result });
    let gap_at_center = {
        let e = spectrum_exact(&p, center).energies;
        e[2] - e[1]
    };
    let summary = json!({ "winding": result.winding, "residue": result.residue, "gap_at_center": gap_at_center });
    Ok((vec![("winding.json".into(), report("winding", c, body))], summary))
}

pub fn write_outputs(dir: &Path, files: &Outputs) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    for (name, contents) in files {
        std::fs::write(dir.join(name), contents)?;
    }
    Ok(())
}
