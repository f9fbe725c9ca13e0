//! Experiment configuration, orchestration and file output.
//!
//! A run reads an [`ExperimentConfig`], writes one or more CSV files plus
//! `summary.json` into `out`, and returns the summary. Floats are written with
//! 17 significant digits so identical configs give byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::averaging::{compare_with_effective, homological_residual, relaxation_time, EffectiveParams};
use crate::dynamics::{ensemble_mean_rho, final_states, simulate_path, transition_probability, InitialCondition, SimParams};
use crate::error::{Error, Result};
use crate::fpt::fpt_ensemble_levels;
use crate::noise::stream_rng;
use crate::spectral::{build_generator, gap_scaling_study, perturbative_gap, spectrum, GalerkinSpec};
use crate::stats::{ks_uniform, mean_se, relaxation_fit};
use crate::su2::{bracket_residuals, control_determinant, AngleState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Simulate,
    HaarTest,
    Relaxation,
    Spectrum,
    GapStudy,
    Fpt,
    AvgCompare,
    Brackets,
}

impl Experiment {
    pub const ALL: [Experiment; 8] = [
        Experiment::Simulate,
        Experiment::HaarTest,
        Experiment::Relaxation,
        Experiment::Spectrum,
        Experiment::GapStudy,
        Experiment::Fpt,
        Experiment::AvgCompare,
        Experiment::Brackets,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Simulate => "simulate",
            Experiment::HaarTest => "haar-test",
            Experiment::Relaxation => "relaxation",
            Experiment::Spectrum => "spectrum",
            Experiment::GapStudy => "gap-study",
            Experiment::Fpt => "fpt",
            Experiment::AvgCompare => "avg-compare",
            Experiment::Brackets => "brackets",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == name)
            .ok_or_else(|| Error::Config(format!("unknown experiment '{name}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub seed: u64,
    #[serde(default = "defaults::gamma")]
    pub gamma: f64,
    #[serde(default = "defaults::kappa")]
    pub kappa: f64,
    #[serde(default = "defaults::sigma")]
    pub sigma: f64,
    #[serde(default = "defaults::dt")]
    pub dt: f64,
    #[serde(default = "defaults::t_final")]
    pub t_final: f64,
    #[serde(default = "defaults::one")]
    pub output_stride: usize,
    #[serde(default = "defaults::one")]
    pub n_paths: usize,
    #[serde(default)]
    pub initial: Option<InitialCondition>,
    #[serde(default)]
    pub spectral: Option<GalerkinSpec>,
    /// `gap-study` only.
    #[serde(default)]
    pub gammas: Option<Vec<f64>>,
    /// `fpt` only.
    #[serde(default)]
    pub y_levels: Option<Vec<f64>>,
    /// Step of the 1D effective diffusion in `avg-compare`.
    #[serde(default = "defaults::dt_1d")]
    pub dt_1d: f64,
    #[serde(default = "defaults::out")]
    pub out: PathBuf,
}

mod defaults {
    use std::path::PathBuf;

    pub fn gamma() -> f64 {
        1.0
    }
    pub fn kappa() -> f64 {
        1.0
    }
    pub fn sigma() -> f64 {
        0.1
    }
    pub fn dt() -> f64 {
        0.01
    }
    pub fn t_final() -> f64 {
        100.0
    }
    pub fn one() -> usize {
        1
    }
    pub fn dt_1d() -> f64 {
        1e-3
    }
    pub fn out() -> PathBuf {
        PathBuf::from("out")
    }
}

/// Flag overrides applied on top of a config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub gamma: Option<f64>,
    pub kappa: Option<f64>,
    pub sigma: Option<f64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Merge `experiment`, an optional JSON document and flag overrides, then
    /// validate.
    pub fn resolve(experiment: &str, file: Option<&str>, overrides: &Overrides) -> Result<Self> {
        let experiment = Experiment::parse(experiment)?;
        let mut doc = match file {
            Some(text) => serde_json::from_str::<Value>(text).map_err(|e| Error::Config(format!("config: {e}")))?,
            None => json!({}),
        };
        let map = doc.as_object_mut().ok_or_else(|| Error::Config("config must be a JSON object".into()))?;
        if let Some(name) = map.get("experiment").and_then(Value::as_str) {
            if name != experiment.name() {
                return Err(Error::Config(format!("config is for '{name}', command is '{}'", experiment.name())));
            }
        }
        map.insert("experiment".into(), json!(experiment));
        let o = overrides;
        for (key, v) in [("gamma", o.gamma), ("kappa", o.kappa), ("sigma", o.sigma)] {
            if let Some(v) = v {
                map.insert(key.into(), json!(v));
            }
        }
        if let Some(seed) = o.seed {
            map.insert("seed".into(), json!(seed));
        }
        if let Some(out) = &o.out {
            map.insert("out".into(), json!(out));
        }
        let cfg: Self = serde_json::from_value(doc).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn sim_params(&self) -> Result<SimParams> {
        let p = SimParams::new(self.gamma, self.kappa, self.sigma, self.dt, self.t_final, self.seed)?
            .with_stride(self.output_stride)
            .with_initial(self.initial.unwrap_or_default());
        p.validate()?;
        Ok(p)
    }

    pub fn spectral_spec(&self) -> GalerkinSpec {
        self.spectral.unwrap_or_default()
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |e: Error| Error::Config(e.to_string());
        if self.n_paths == 0 {
            return Err(Error::Config("n_paths must be >= 1".into()));
        }
        match self.experiment {
            Experiment::Spectrum | Experiment::GapStudy => {
                self.spectral_spec().validate().map_err(cfg)?;
            }
            Experiment::Brackets => {}
            _ => {
                self.sim_params().map_err(cfg)?;
            }
        }
        match self.experiment {
            Experiment::GapStudy => match &self.gammas {
                Some(g) if !g.is_empty() && g.iter().all(|&x| x > 0.0) => {}
                _ => return Err(Error::Config("gap-study needs a non-empty 'gammas' list of positive values".into())),
            },
            Experiment::Fpt => match &self.y_levels {
                Some(l) if !l.is_empty() && l.iter().all(|y| (-1.0..=1.0).contains(y)) => {}
                _ => return Err(Error::Config("fpt needs a non-empty 'y_levels' list in [-1, 1]".into())),
            },
            Experiment::HaarTest | Experiment::Relaxation | Experiment::AvgCompare if self.n_paths < 2 => {
                return Err(Error::Config(format!("{} needs n_paths >= 2", self.experiment.name())));
            }
            Experiment::AvgCompare if !(self.dt_1d > 0.0 && self.dt_1d <= 0.1) => {
                return Err(Error::Config("dt_1d must be in (0, 0.1]".into()));
            }
            _ => {}
        }
        Ok(())
    }
}

/// One built-in assertion and its outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: String,
    pub passed: bool,
}

impl Check {
    fn new(name: &str, value: f64, tolerance: &str, passed: bool) -> Self {
        Self { name: name.into(), value, tolerance: tolerance.into(), passed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config: ExperimentConfig,
    pub results: Value,
    pub checks: Vec<Check>,
    pub files: Vec<String>,
}

impl Summary {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// CSV table accumulated in memory and written in one go.
struct Csv {
    name: String,
    body: String,
}

impl Csv {
    fn new(name: &str, header: &str) -> Self {
        Self { name: name.into(), body: format!("{header}\n") }
    }

    fn row(&mut self, fields: &[Field]) {
        for (i, f) in fields.iter().enumerate() {
            if i > 0 {
                self.body.push(',');
            }
            match f {
                Field::F(x) => write!(self.body, "{x:.16e}"),
                Field::U(x) => write!(self.body, "{x}"),
                Field::B(x) => write!(self.body, "{}", u8::from(*x)),
            }
            .expect("writing to a String cannot fail");
        }
        self.body.push('\n');
    }
}

enum Field {
    F(f64),
    U(u64),
    B(bool),
}

use Field::{B, F, U};

struct Output {
    results: Value,
    checks: Vec<Check>,
    tables: Vec<Csv>,
}

/// Execute an experiment and write its files.
pub fn run(config: &ExperimentConfig) -> Result<Summary> {
    config.validate()?;
    let out = match config.experiment {
        Experiment::Simulate => run_simulate(config)?,
        Experiment::HaarTest => run_haar(config)?,
        Experiment::Relaxation => run_relaxation(config)?,
        Experiment::Spectrum => run_spectrum(config)?,
        Experiment::GapStudy => run_gap_study(config)?,
        Experiment::Fpt => run_fpt(config)?,
        Experiment::AvgCompare => run_avg_compare(config)?,
        Experiment::Brackets => run_brackets(config)?,
    };
    write_outputs(&config.out, config, out)
}

fn write_outputs(dir: &Path, config: &ExperimentConfig, out: Output) -> Result<Summary> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    for t in &out.tables {
        fs::write(dir.join(&t.name), &t.body)?;
        files.push(t.name.clone());
    }
    let summary = Summary { config: config.clone(), results: out.results, checks: out.checks, files };
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(summary)
}

fn run_simulate(c: &ExperimentConfig) -> Result<Output> {
    let params = c.sim_params()?;
    let mut tables = Vec::new();
    let mut paths = Vec::new();
    let mut worst_drift: f64 = 0.0;
    for i in 0..c.n_paths as u64 {
        let traj = simulate_path(&params, i)?;
        let mut csv = Csv::new(&format!("trajectory_{i}.csv"), "t,Z,x1,x2,x3,x4,chi,phi,psi,rho");
        for j in 0..traj.len() {
            let [x1, x2, x3, x4] = traj.states[j].to_array();
            let a = traj.angles[j];
            csv.row(&[F(traj.times[j]), F(traj.z[j]), F(x1), F(x2), F(x3), F(x4), F(a.chi), F(a.phi), F(a.psi), F(traj.rho[j])]);
        }
        tables.push(csv);
        let stored = traj.states.iter().map(|q| (q.norm() - 1.0).abs()).fold(0.0, f64::max);
        let drift = stored / c.t_final;
        worst_drift = worst_drift.max(drift);
        paths.push(json!({
            "path": i,
            "final_rho": traj.rho.last(),
            "unitarity_drift": drift,
            "max_norm_defect": traj.max_norm_defect,
            "norm_drift_rate": traj.norm_drift_rate,
        }));
    }
    Ok(Output {
        results: json!({ "paths": paths, "tstar": relaxation_time(c.gamma, c.kappa * c.sigma) }),
        checks: vec![Check::new("unitarity_drift_per_unit_time", worst_drift, "< 1e-9", worst_drift < 1e-9)],
        tables,
    })
}

fn run_haar(c: &ExperimentConfig) -> Result<Output> {
    let params = c.sim_params()?.with_initial(InitialCondition::Haar);
    let rho: Vec<f64> = final_states(&params, c.n_paths)?.iter().map(|(_, q)| transition_probability(q)).collect();
    let ks = ks_uniform(&rho)?;
    let (mean, se) = mean_se(&rho);
    let mut csv = Csv::new("rho_final.csv", "path,rho");
    for (i, r) in rho.iter().enumerate() {
        csv.row(&[U(i as u64), F(*r)]);
    }
    Ok(Output {
        results: json!({ "ks": ks, "mean_rho": mean, "mean_se": se }),
        checks: vec![
            Check::new("ks_p_value", ks.p_value, "> 0.01", ks.p_value > 0.01),
            Check::new("mean_rho_deviation", (mean - 0.5).abs(), "< 0.02", (mean - 0.5).abs() < 0.02),
        ],
        tables: vec![csv],
    })
}

fn run_relaxation(c: &ExperimentConfig) -> Result<Output> {
    let params = c.sim_params()?;
    let ens = ensemble_mean_rho(&params, c.n_paths)?;
    let fit = relaxation_fit(&ens.times, &ens.mean)?;
    let tstar = relaxation_time(c.gamma, c.kappa * c.sigma);
    let rt = fit.rate * tstar;
    let mut csv = Csv::new("relaxation.csv", "t,mean_rho,std_err");
    for i in 0..ens.times.len() {
        csv.row(&[F(ens.times[i]), F(ens.mean[i]), F(ens.std_err[i])]);
    }
    Ok(Output {
        results: json!({ "fit": fit, "tstar": tstar, "rate_times_tstar": rt }),
        checks: vec![
            Check::new("rate_times_tstar", rt, "in [0.05, 20]", (0.05..=20.0).contains(&rt)),
            Check::new("r_squared", fit.r_squared, "> 0.9", fit.r_squared > 0.9),
        ],
        tables: vec![csv],
    })
}

fn run_spectrum(c: &ExperimentConfig) -> Result<Output> {
    let spec = c.spectral_spec();
    let res = spectrum(&build_generator(&spec, c.gamma, c.kappa, c.sigma)?, Some(spec.k_max))?;
    let ks = c.kappa * c.sigma;
    let tstar = relaxation_time(c.gamma, ks);
    let pert = perturbative_gap(&spec, c.gamma, ks)?;
    let mut csv = Csv::new("spectrum.csv", "re,im");
    for z in &res.eigenvalues {
        csv.row(&[F(z.re), F(z.im)]);
    }
    let conj = res.conjugation_defect();
    Ok(Output {
        results: json!({
            "dim": spec.dim(),
            "gap": res.gap,
            "raw_gap": res.raw_gap,
            "zero_mode_error": res.zero_mode_error,
            "zero_count": res.zero_count,
            "perturbative_gap": pert,
            "tstar": tstar,
            "gap_times_tstar": res.gap * tstar,
        }),
        checks: vec![
            Check::new("zero_count", res.zero_count as f64, "== 1", res.zero_count == 1),
            Check::new("max_real_part", res.max_real_part(), "<= 1e-8", res.max_real_part() <= 1e-8),
            Check::new("conjugation_defect", conj, "< 1e-8", conj < 1e-8),
        ],
        tables: vec![csv],
    })
}

fn run_gap_study(c: &ExperimentConfig) -> Result<Output> {
    let ks = c.kappa * c.sigma;
    let rows = gap_scaling_study(c.gammas.as_deref().unwrap_or_default(), ks, &c.spectral_spec())?;
    let mut csv = Csv::new("gap_study.csv", "gamma,kappa_sigma,gap,tstar,gap_times_tstar");
    for r in &rows {
        csv.row(&[F(r.gamma), F(r.kappa_sigma), F(r.gap), F(r.tstar), F(r.gap_times_tstar)]);
    }
    let lo = rows.iter().map(|r| r.gap_times_tstar).fold(f64::INFINITY, f64::min);
    let hi = rows.iter().map(|r| r.gap_times_tstar).fold(0.0, f64::max);
    Ok(Output {
        results: json!({ "rows": rows, "measured_c": lo }),
        checks: vec![Check::new("gap_times_tstar_band", hi / lo, "< 4", hi / lo < 4.0)],
        tables: vec![csv],
    })
}

fn run_fpt(c: &ExperimentConfig) -> Result<Output> {
    let params = c.sim_params()?;
    let levels = c.y_levels.clone().unwrap_or_default();
    let res = fpt_ensemble_levels(&params, &levels, c.n_paths)?;
    let tstar = relaxation_time(c.gamma, c.kappa * c.sigma);
    let mut samples = Csv::new("fpt_samples.csv", "seed,y_level,tau,censored");
    let mut study = Csv::new("fpt_study.csv", "gamma,kappa,sigma,y_level,mean_tau,se,tstar,ratio");
    let mut checks = Vec::new();
    for r in &res {
        for s in &r.samples {
            samples.row(&[U(s.path), F(r.y_level), F(s.time), B(s.censored)]);
        }
        study.row(&[F(c.gamma), F(c.kappa), F(c.sigma), F(r.y_level), F(r.mean), F(r.std_err), F(tstar), F(r.mean / tstar)]);
        checks.push(Check::new(
            &format!("censored_fraction[y={}]", r.y_level),
            r.censored_fraction,
            "<= 0.1",
            !r.mean_is_lower_bound,
        ));
    }
    let levels_json: Vec<Value> = res
        .iter()
        .map(|r| {
            json!({
                "y_level": r.y_level,
                "mean": r.mean,
                "std_err": r.std_err,
                "censored_fraction": r.censored_fraction,
                "mean_is_lower_bound": r.mean_is_lower_bound,
                "e_of_y": r.mean / tstar,
                "tail": r.tail,
                "probe_time": r.probe_time,
                "q_of_t": r.q_of_t,
            })
        })
        .collect();
    Ok(Output { results: json!({ "tstar": tstar, "levels": levels_json }), checks, tables: vec![samples, study] })
}

fn run_avg_compare(c: &ExperimentConfig) -> Result<Output> {
    let params = c.sim_params()?;
    let cmp = compare_with_effective(&params, c.n_paths, c.dt_1d)?;
    let mut csv = Csv::new("avg_compare.csv", "path,ybar_full,ybar_effective");
    for (i, (a, b)) in cmp.full.iter().zip(&cmp.reduced).enumerate() {
        csv.row(&[U(i as u64), F(*a), F(*b)]);
    }
    let eff: EffectiveParams = cmp.effective;
    let d = cmp.ks.statistic;
    Ok(Output {
        results: json!({
            "effective": eff,
            "rescaled_time": cmp.rescaled_time,
            "ybar0": cmp.ybar0,
            "ks": cmp.ks,
            "mean_full": mean_se(&cmp.full).0,
            "mean_effective": mean_se(&cmp.reduced).0,
        }),
        checks: vec![Check::new("ks_distance", d, "< 0.1", d < 0.1)],
        tables: vec![csv],
    })
}

/// Points with `χ ∈ [0.1, π/2 - 0.1]`, away from the coordinate singularity.
pub fn interior_points(seed: u64, n: usize) -> Vec<AngleState> {
    use rand::Rng;
    let mut rng = stream_rng(seed, 0);
    (0..n)
        .map(|_| AngleState {
            chi: rng.random_range(0.1..std::f64::consts::FRAC_PI_2 - 0.1),
            phi: rng.random_range(0.0..std::f64::consts::TAU),
            psi: rng.random_range(0.0..std::f64::consts::TAU),
        })
        .collect()
}

fn run_brackets(c: &ExperimentConfig) -> Result<Output> {
    let points = interior_points(c.seed, c.n_paths.max(100));
    let mut csv = Csv::new("brackets.csv", "chi,phi,psi,residual_01,residual_02,residual_12,det_error,homological");
    let (mut worst_br, mut worst_det, mut worst_hom): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for (i, a) in points.iter().enumerate() {
        let r = bracket_residuals(a, 2e-6)?;
        let det = control_determinant(a)?;
        let det_err = (det + 1.0 / (2.0 * a.chi).sin()).abs();
        let y = -(2.0 * a.chi).cos();
        let z = (i as f64 / points.len() as f64 - 0.5) * 4.0 * c.sigma;
        let hom = homological_residual(z, y, a.phi, c.gamma, 1e-5).abs();
        csv.row(&[F(a.chi), F(a.phi), F(a.psi), F(r[0]), F(r[1]), F(r[2]), F(det_err), F(hom)]);
        worst_br = worst_br.max(r.into_iter().fold(0.0, f64::max));
        worst_det = worst_det.max(det_err);
        worst_hom = worst_hom.max(hom);
    }
    Ok(Output {
        results: json!({ "points": points.len(), "bracket_residual": worst_br, "det_error": worst_det, "homological_residual": worst_hom }),
        checks: vec![
            Check::new("bracket_residual", worst_br, "< 1e-6", worst_br < 1e-6),
            Check::new("determinant_error", worst_det, "< 1e-10", worst_det < 1e-10),
            Check::new("homological_residual", worst_hom, "< 1e-6", worst_hom < 1e-6),
        ],
        tables: vec![csv],
    })
}
