//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use bosedyn::diagnostics::trace_distance;
use bosedyn::grid::{Field, Grid, TrapSpec};
use bosedyn::hartree::{fourier_l1_trajectory, propagate_hartree};
use bosedyn::hfb::{Complement, DenseHfb, DensePdm, DenseState, ModeHfb, ModeOptions, ModeState};
use bosedyn::interaction::InteractionSpec;
use bosedyn::spectral::{lowest_eigenpairs, lowest_eigenpairs_with, LanczosOptions};
use bosedyn::thermal::{
    build_thermal_pdm_capped, condensate, condensate_fraction, critical_temperature, semiclassical_excited_count,
    separable_ideal_gas, ThermalModel,
};
use bosedyn::trajectory::log_growth_rate;
use bosedyn_cli::config::ExperimentConfig;
use bosedyn_cli::{execute, Command};
use num_complex::Complex64;
use serde_json::Value;

type Outcome = Result<(bool, String), String>;

const STANDARD_HFB: &str = r#"{"mode":"hfb_run","grid":{"dim":1,"points":64,"half_length":8.0},
 "trap":{"s":2.0,"prefactor":1.0},"interaction":{"v0":1.5,"sigma":0.8},
 "thermal":{"N_total":20,"lambda_over_tc":0.2,"eig_count":12},
 "integrator":{"dt":0.0025,"t_end":1.0,"frames":20,"dense_or_modes":"dense","M_cap":4}}"#;

const SWEEP: &str = r#"{"mode":"closeness_sweep","grid":{"dim":1,"points":128,"half_length":28.0},
 "trap":{"s":1.0,"prefactor":1.0},"interaction":{"v0":1.0,"sigma":1.0},
 "thermal":{"N_total":200,"lambda_over_tc":0.5,"eig_count":96},
 "integrator":{"dt":0.005,"t_end":1.0,"frames":20},"closeness":{"c_hat":1.0}}"#;

const FOCK: &str = r#"{"mode":"fock_verify","seed":7}"#;

const HEAT: &str = r#"{"mode":"heat_kernel_check","trap":{"s":2.0,"prefactor":1.0},
 "heat_kernel":{"exponents":[1.0,1.5,2.0],"times":[0.5,1.0,2.0]}}"#;

const THERMAL: &str = r#"{"mode":"thermal_build","grid":{"dim":1,"points":256,"half_length":20.0},
 "trap":{"s":2.0,"prefactor":1.0},"thermal":{"N_total":1000,"lambda_over_tc":0.5,"eig_count":120}}"#;

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

struct CliRun {
    exit_code: i32,
    summary: Value,
}

fn cli(json: &str, command: Command, dir: &Path) -> Result<CliRun, String> {
    let cfg = ExperimentConfig::from_json(json).map_err(err)?;
    let o = execute(&command, Ok(cfg), dir);
    let summary = fs::read_to_string(dir.join("summary.json"))
        .map_err(|e| format!("exit {}: {:?}: {e}", o.exit_code, o.manifest.failure))?;
    Ok(CliRun { exit_code: o.exit_code, summary: serde_json::from_str(&summary).map_err(err)? })
}

fn check<'a>(s: &'a Value, name: &str) -> Result<&'a Value, String> {
    s["checks"].as_array().and_then(|c| c.iter().find(|c| c["name"] == name)).ok_or(format!("no check `{name}`"))
}

fn failed_checks(s: &Value) -> Vec<String> {
    s["checks"]
        .as_array()
        .map(|c| {
            c.iter()
                .filter(|c| c["pass"] != true)
                .map(|c| format!("{}={}", c["name"].as_str().unwrap_or("?"), c["value"]))
                .collect()
        })
        .unwrap_or_default()
}

fn spectral() -> Outcome {
    let harmonic = TrapSpec::power(2.0).map_err(err)?;
    let g1 = Grid::new(1, 128, 10.0).map_err(err)?;
    let e1 = lowest_eigenpairs(&g1, &harmonic, 5, 1e-10).map_err(err)?.eigenvalues;
    let d1 = e1.iter().enumerate().map(|(j, e)| (e - (2 * j + 1) as f64).abs()).fold(0.0, f64::max);
    let g3 = Grid::new(3, 32, 6.0).map_err(err)?;
    let e3 = lowest_eigenpairs(&g3, &harmonic, 4, 1e-9).map_err(err)?.eigenvalues;
    let d3 = (e3[0] - 3.0).abs().max(e3[1..4].iter().map(|e| (e - 5.0).abs()).fold(0.0, f64::max));
    Ok((d1 <= 1e-6 && d3 <= 1e-5, format!("1D max dev {d1:.2e} (<= 1e-6), 3D 32^3 max dev {d3:.2e} (<= 1e-5)")))
}

fn heat_kernel(dir: &Path) -> Outcome {
    let r = cli(HEAT, Command::Run, dir)?;
    let n = r.summary["checks"].as_array().map_or(0, |c| c.len());
    let bad = failed_checks(&r.summary);
    Ok((r.exit_code == 0 && n == 18 && bad.is_empty(), format!("{n} checks (9 mass, 9 min value), failing: {bad:?}")))
}

fn thermal(dir: &Path) -> Outcome {
    let r = cli(THERMAL, Command::Run, dir)?;
    let res = &r.summary["result"];
    let num = res["number_rel_error"].as_f64().ok_or("number_rel_error")?;
    let (w, op) = (res["top_weight"].as_f64().ok_or("top_weight")?, res["op_norm"].as_f64().ok_or("op_norm")?);
    let mut pass = r.exit_code == 0 && num <= 1e-6 && (w - op).abs() <= 1e-12 * w.max(1.0);
    let mut detail = format!("number rel {num:.1e}, |op_norm - top| {:.1e}", (w - op).abs());

    // Formula level: g against an independent quadrature of the
    // semiclassical excited count at mu = 0.
    let mut formula_dev: f64 = 0.0;
    let mut grid_dev: f64 = 0.0;
    let opts = LanczosOptions { max_basis: 600, ..Default::default() };
    let g = Grid::new(1, 512, 28.0).map_err(err)?;
    let levels = lowest_eigenpairs_with(&g, &TrapSpec::power(2.0).map_err(err)?, 300, 1e-10, &opts).map_err(err)?.eigenvalues;
    for n in [1e3, 1e4] {
        let tc = critical_temperature(2.0, 1.0, n).map_err(err)?;
        for r in [0.25, 0.5] {
            let t = r * tc.t_c;
            let want = condensate_fraction(t / n.powf(1.0 / tc.alpha), 2.0, 1.0).map_err(err)?;
            let quad = 1.0 - semiclassical_excited_count(2.0, 1.0, t, 0.0) / n;
            formula_dev = formula_dev.max((quad - want).abs() / want);
            let gas = separable_ideal_gas(&levels, 3, t, n).map_err(err)?;
            grid_dev = grid_dev.max((gas.condensate_fraction - want).abs() / want);
        }
    }
    pass &= formula_dev <= 0.05 && grid_dev <= 0.15;
    detail += &format!(", formula rel dev {formula_dev:.1e} (<= 5%), grid rel dev {grid_dev:.3} (<= 15%)");
    Ok((pass, detail))
}

fn hfb_conservation(dir: &Path) -> Result<(Outcome, Outcome), String> {
    let t0 = Instant::now();
    let dense = cli(STANDARD_HFB, Command::Run, &dir.join("dense"))?;
    let modes_json = STANDARD_HFB.replace("\"dt\":0.0025", "\"dt\":0.005").replace("\"dense\"", "\"modes\"");
    let modes = cli(&modes_json, Command::Run, &dir.join("modes"))?;
    let secs = t0.elapsed().as_secs_f64();
    let get = |r: &CliRun, k: &str| r.summary["result"][k].as_f64().unwrap_or(f64::NAN);
    let drifts = [
        get(&dense, "max_number_drift"),
        get(&dense, "max_energy_drift"),
        get(&modes, "max_number_drift"),
        get(&modes, "max_energy_drift"),
    ];
    let c4 = (
        drifts.iter().all(|d| *d <= 1e-6) && secs <= 120.0,
        format!(
            "dense number {:.1e} energy {:.1e}; modes number {:.1e} energy {:.1e} (<= 1e-6), {secs:.0} s (<= 120)",
            drifts[0], drifts[1], drifts[2], drifts[3]
        ),
    );
    let margin = check(&dense.summary, "min_positivity_margin")?["value"].as_f64().unwrap_or(f64::NAN);
    let c5 = (margin >= -1e-8, format!("min eigenvalue of the generalized block {margin:.2e} (>= -1e-8)"));
    Ok((Ok(c4), Ok(c5)))
}

struct Standard {
    grid: Grid<f64>,
    phi: Field<f64>,
    pdm: bosedyn::thermal::ThermalPdm<f64>,
    v: InteractionSpec<f64>,
}

fn standard_instance() -> Result<Standard, String> {
    let grid = Grid::new(1, 64, 8.0).map_err(err)?;
    let spec = lowest_eigenpairs(&grid, &TrapSpec::power(2.0).map_err(err)?, 12, 1e-10).map_err(err)?;
    let model = ThermalModel::from_lambda_ratio(&spec, 20.0, 0.2).map_err(err)?;
    let pdm = build_thermal_pdm_capped(&model, &spec, Some(4)).map_err(err)?;
    let phi = condensate(&pdm, 20.0, &spec.eigenfunctions[0]).map_err(err)?;
    let v = InteractionSpec::gaussian(1.5, 0.8, 20.0).map_err(err)?;
    Ok(Standard { grid, phi, pdm, v })
}

fn oracle_equivalence() -> Outcome {
    let s = standard_instance()?;
    let off = TrapSpec::off();
    let pdm = DensePdm::from_modes(&s.grid, &s.pdm.weights, &s.pdm.modes).map_err(err)?;
    let d0 = DenseState::new(s.phi.clone(), pdm, s.v.clone()).map_err(err)?;
    let dp = DenseHfb::new(&s.grid, &s.v, &off).map_err(err)?;
    let dense = dp.propagate(&d0, 0.0025, 0.5, 200).map_err(err)?.0.last().cloned().ok_or("empty")?;
    let m0 = ModeState::from_thermal(s.phi.clone(), &s.pdm, s.v.clone(), Complement::Full).map_err(err)?;
    let mp = ModeHfb::new(&s.grid, &s.v, &off, ModeOptions::default()).map_err(err)?;
    let modes = mp.propagate(&m0, 0.005, 0.5, 100).map_err(err)?.0.last().cloned().ok_or("empty")?;
    let dist = trace_distance(&dense.pdm, &modes).map_err(err)?;
    let (a_d, a_m) = (dense.pdm.alpha_hs_norm(), modes.to_dense().alpha_hs_norm());
    let (e_d, e_m) = (dp.energy(&dense).map_err(err)?.total(), mp.energy(&modes).map_err(err)?.total());
    let (ra, re) = ((a_d - a_m).abs() / a_d.abs().max(f64::MIN_POSITIVE), rel(e_m, e_d));
    Ok((
        dist <= 1e-6 && ra <= 1e-6 && re <= 1e-6,
        format!("trace distance {dist:.2e} (<= 1e-6), alpha rel {ra:.1e}, energy rel {re:.1e} (<= 1e-6)"),
    ))
}

fn closeness(dir: &Path) -> Outcome {
    let free = SWEEP.replace("\"v0\":1.0", "\"v0\":0.0");
    let f = cli(&free, Command::Sweep(Some(vec![200.0, 400.0, 800.0])), &dir.join("free"))?;
    let zero = f.summary["result"]["sweep"]["rows"]
        .as_array()
        .map(|rows| rows.iter().all(|r| r["ratio_gamma_max"] == 0.0 && r["ratio_phi_max"] == 0.0))
        .unwrap_or(false);
    let t0 = Instant::now();
    let r = cli(SWEEP, Command::Sweep(Some(vec![200.0, 400.0, 800.0])), &dir.join("sweep"))?;
    let secs = t0.elapsed().as_secs_f64();
    let sw = &r.summary["result"]["sweep"];
    let (sg, sp) = (sw["slope_gamma"].as_f64().unwrap_or(f64::NAN), sw["slope_phi"].as_f64().unwrap_or(f64::NAN));
    Ok((
        zero && f.exit_code == 0 && r.exit_code == 0 && sg <= 0.1 && sp <= 0.1 && secs <= 900.0,
        format!("v0=0 ratios zero: {zero}; slopes gamma {sg:.3} phi {sp:.3} (<= 0.1), {secs:.0} s"),
    ))
}

fn fourier_growth() -> Outcome {
    let grid = Grid::new(1, 128, 12.0).map_err(err)?;
    let phi = Field::from_real_fn(&grid, |x: [f64; 3]| 3.0 * (-(x[0] - 0.5).powi(2) / 2.0).exp());
    let phi = phi.scaled(Complex64::new(0.6, 0.8));
    let free = propagate_hartree(&phi, &InteractionSpec::gaussian(0.0, 1.0, 1.0).map_err(err)?, 0.005, 1.0).map_err(err)?;
    let l1 = fourier_l1_trajectory(&free);
    let drift = l1.iter().map(|x| rel(*x, l1[0])).fold(0.0, f64::max);
    let v = InteractionSpec::gaussian(5.0, 1.0, 1.0).map_err(err)?;
    let inter = propagate_hartree(&phi, &v, 0.005, 1.0).map_err(err)?;
    let rate = log_growth_rate(&inter.times, &fourier_l1_trajectory(&inter)).map_err(err)?;
    Ok((drift <= 1e-6 && rate.is_finite(), format!("free drift {drift:.1e} (<= 1e-6), interacting log-growth {rate:.4} (finite)")))
}

fn fock(dir: &Path) -> Result<(Outcome, Outcome), String> {
    let t0 = Instant::now();
    let r = cli(FOCK, Command::VerifyFock, dir)?;
    let secs = t0.elapsed().as_secs_f64();
    let all: Vec<(String, f64, bool)> = r.summary["checks"]
        .as_array()
        .ok_or("no checks")?
        .iter()
        .map(|c| (c["name"].as_str().unwrap_or("").to_string(), c["value"].as_f64().unwrap_or(f64::NAN), c["pass"] == true))
        .collect();
    let part = |generator: bool| {
        let sel: Vec<_> =
            all.iter().filter(|c| (c.0.starts_with("generator") || c.0.starts_with("commutator")) == generator).collect();
        let worst = sel.iter().map(|c| c.1).fold(0.0, f64::max);
        let bad: Vec<&str> = sel.iter().filter(|c| !c.2).map(|c| c.0.as_str()).collect();
        (!sel.is_empty() && bad.is_empty() && secs <= 60.0, format!("{} checks, worst deviation {worst:.1e}, failing {bad:?}", sel.len()))
    };
    Ok((Ok(part(false)), Ok(part(true))))
}

fn determinism(dir: &Path) -> Outcome {
    let cases: [(&str, &str, Command, &str); 3] = [
        ("fock", FOCK, Command::VerifyFock, "identities.csv"),
        ("thermal", THERMAL, Command::Run, "modes.csv"),
        ("hfb", STANDARD_HFB, Command::Run, "frames.csv"),
    ];
    let mut same = vec![];
    for (name, json, cmd, csv) in cases {
        let (a, b) = (dir.join(format!("{name}_a")), dir.join(format!("{name}_b")));
        cli(json, cmd.clone(), &a)?;
        cli(json, cmd, &b)?;
        let eq = |f: &str| fs::read(a.join(f)).ok().is_some_and(|x| Some(x) == fs::read(b.join(f)).ok());
        same.push((name, eq("summary.json") && eq(csv)));
    }
    Ok((same.iter().all(|s| s.1), format!("byte-identical reruns: {same:?}")))
}

fn main() -> ExitCode {
    let tmp = tempfile::tempdir().expect("temporary directory");
    let dir = tmp.path();
    let (c4, c5) = hfb_conservation(&dir.join("c4")).unwrap_or_else(|e| (Err(e.clone()), Err(e)));
    let (c9, c10) = fock(&dir.join("c9")).unwrap_or_else(|e| (Err(e.clone()), Err(e)));
    let results: Vec<(u32, &str, Outcome)> = vec![
        (1, "spectral correctness", spectral()),
        (2, "heat-kernel bound", heat_kernel(&dir.join("c2"))),
        (3, "thermal construction", thermal(&dir.join("c3"))),
        (4, "HFB conservation", c4),
        (5, "positivity", c5),
        (6, "dense/mode equivalence", oracle_equivalence()),
        (7, "closeness property", closeness(&dir.join("c7"))),
        (8, "Fourier-L1 growth", fourier_growth()),
        (9, "Fock algebra", c9),
        (10, "generator structure", c10),
        (11, "determinism", determinism(&dir.join("c11"))),
    ];
    let mut failures = 0;
    for (id, name, r) in results {
        let (pass, detail) = r.unwrap_or_else(|e| (false, format!("error: {e}")));
        failures += usize::from(!pass);
        println!("{} criterion {id:>2} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    }
    println!("{} of 11 criteria passed", 11 - failures);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
