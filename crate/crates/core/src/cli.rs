//! Experiment runner behind the `wadc` binary: one JSON config per run,
//! artifacts written to an output directory, verdicts mapped to exit codes.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::delaychain::{enumerate_switching_states, SwitchedSystem};
use crate::error::Error;
use crate::linalg::{self, Mat};
use crate::lmi::{self, LmiVerdict, Method, SolverOptions};
use crate::pdcsim::{self, DelaySequence, PacketTrace, SynthSpec};
use crate::ssmodel::{self, CtStateSpace, DtStateSpace};
use crate::stability::{self, StabilityVerdict, DEFAULT_CONSTANCY_TOL};
use crate::timesim::{self, DelayDistribution, MonteCarlo};

pub const EXIT_OK: i32 = 0;
pub const EXIT_UNSTABLE: i32 = 2;
pub const EXIT_UNDETERMINED: i32 = 3;
pub const EXIT_CONFIG: i32 = 64;
pub const EXIT_FAILURE: i32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Discretize,
    Rootlocus,
    Assess,
    Simulate,
    Pdc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Csv,
    Doc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelSource {
    Smib,
    Surrogate(SurrogateSpec),
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurrogateSpec {
    /// Open-loop CT swing eigenvalue `[re, im]`.
    pub lambda: [f64; 2],
    #[serde(default = "one")]
    pub input_gain: f64,
    #[serde(default = "one")]
    pub output_gain: f64,
    #[serde(default)]
    pub gain: Option<f64>,
    #[serde(default)]
    pub target_margin: Option<usize>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GainSpec {
    Scalar(f64),
    Matrix(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DisturbanceSpec {
    pub magnitude: f64,
    pub step: usize,
}

impl Default for DisturbanceSpec {
    fn default() -> Self {
        Self {
            magnitude: 0.1,
            step: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub epsilon: Option<f64>,
    pub constancy: f64,
    pub solver_tol: f64,
    pub max_iter: usize,
    pub method: Method,
    /// Absolute slack on the simulated-damping containment check.
    pub containment_slack: f64,
    /// Above this many states the mode-dependent LMI is skipped (its size grows as N^2).
    pub multi_p_max_states: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            epsilon: None,
            constancy: DEFAULT_CONSTANCY_TOL,
            solver_tol: 1e-9,
            max_iter: 20_000,
            method: Method::Auto,
            containment_slack: 0.005,
            multi_p_max_states: 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceSource {
    /// The bundled two-PMU scenario.
    TwoPmu,
    File(PathBuf),
    Synthetic(SynthSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdcConfig {
    pub trace: TraceSource,
    pub first_step: Option<i64>,
    pub last_step: Option<i64>,
    /// Output before the first complete set; zeros by default.
    pub initial: Option<Vec<f64>>,
    /// Feed the clipped delay trace into a closed-loop run.
    pub simulate: bool,
}

impl Default for PdcConfig {
    fn default() -> Self {
        Self {
            trace: TraceSource::TwoPmu,
            first_step: None,
            last_step: None,
            initial: None,
            simulate: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSource,
    pub h: Option<f64>,
    pub gain: Option<GainSpec>,
    pub n_min: Option<usize>,
    pub n_max: Option<usize>,
    pub seeds: Vec<u64>,
    pub sim_length: usize,
    pub delay_distribution: DelayDistribution,
    pub disturbance: DisturbanceSpec,
    pub controller_enable_step: usize,
    pub output_channel: usize,
    /// Peak-fit window `[start, end)` in steps; defaults to after the fault and enable step.
    pub fit_window: Option<[usize; 2]>,
    pub output_dir: Option<PathBuf>,
    pub tolerances: Tolerances,
    pub pdc: PdcConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelSource::Smib,
            h: None,
            gain: None,
            n_min: None,
            n_max: None,
            seeds: vec![0, 1, 2, 3, 4],
            sim_length: 1500,
            delay_distribution: DelayDistribution::Uniform,
            disturbance: DisturbanceSpec::default(),
            controller_enable_step: 0,
            output_channel: 0,
            fit_window: None,
            output_dir: None,
            tolerances: Tolerances::default(),
            pdc: PdcConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn solver(&self) -> SolverOptions {
        SolverOptions {
            epsilon: self.tolerances.epsilon,
            tol: self.tolerances.solver_tol,
            max_iter: self.tolerances.max_iter,
            method: self.tolerances.method,
            ..SolverOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Config(String),
    Run(Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Run(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Run(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Run(_) => EXIT_FAILURE,
        }
    }
}

/// Everything a command needs once the config has been resolved.
pub struct Session {
    pub config: RunConfig,
    pub out_dir: PathBuf,
    pub format: Format,
    echo: String,
}

/// Outcome of one command: exit code plus the text report printed to stdout.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub exit_code: i32,
    pub report: String,
    pub artifacts: Vec<PathBuf>,
}

impl Session {
    pub fn new(mut config: RunConfig, out: Option<PathBuf>, seed: Option<u64>, format: Format) -> Result<Self, CliError> {
        if let Some(s) = seed {
            config.seeds = vec![s];
            if let TraceSource::Synthetic(spec) = &mut config.pdc.trace {
                spec.seed = s;
            }
        }
        let out_dir = out
            .or_else(|| config.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from("wadc-out"));
        let echo = serde_json::to_string(&config).map_err(|e| CliError::Config(e.to_string()))?;
        Ok(Self {
            config,
            out_dir,
            format,
            echo,
        })
    }

    fn config_value(&self) -> Value {
        serde_json::from_str(&self.echo).expect("echo is valid JSON")
    }

    fn create(&self, name: &str) -> Result<(BufWriter<File>, PathBuf), CliError> {
        fs::create_dir_all(&self.out_dir).map_err(|e| CliError::Run(e.into()))?;
        let path = self.out_dir.join(name);
        let file = File::create(&path).map_err(|e| CliError::Run(e.into()))?;
        Ok((BufWriter::new(file), path))
    }

    /// CSV artifact whose first line echoes the config.
    fn csv_file(&self, name: &str) -> Result<(BufWriter<File>, PathBuf), CliError> {
        let (mut w, path) = self.create(name)?;
        writeln!(w, "# config={}", self.echo).map_err(|e| CliError::Run(e.into()))?;
        Ok((w, path))
    }

    fn write_doc(&self, name: &str, mut doc: Value) -> Result<PathBuf, CliError> {
        doc["config"] = self.config_value();
        let (mut w, path) = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, &doc).map_err(|e| CliError::Run(e.into()))?;
        w.flush().map_err(|e| CliError::Run(e.into()))?;
        Ok(path)
    }

    pub fn run(&self, command: Command) -> Result<Outcome, CliError> {
        match command {
            Command::Discretize => self.discretize(),
            Command::Rootlocus => self.rootlocus(),
            Command::Assess => self.assess(),
            Command::Simulate => self.simulate(),
            Command::Pdc => self.pdc(),
        }
    }
}

struct Model {
    ct: CtStateSpace,
    plant: DtStateSpace,
    gain: Mat,
    n_min: usize,
    n_max: usize,
}

fn resolve_model(cfg: &RunConfig) -> Result<Model, CliError> {
    let config = |m: String| CliError::Config(m);
    let (ct, default_h, default_range, own_gain) = match &cfg.model {
        ModelSource::Smib => (ssmodel::build_smib(), Some(0.02), (2, 3), None),
        ModelSource::Surrogate(s) => {
            let lambda = Complex64::new(s.lambda[0], s.lambda[1]);
            let ct = ssmodel::build_modal_surrogate(lambda, s.input_gain, s.output_gain)
                .map_err(|e| config(e.to_string()))?;
            (ct, Some(1.0 / 60.0), (4, 18), Some(s))
        }
        ModelSource::File(path) => {
            let text = fs::read_to_string(path).map_err(|e| config(format!("{}: {e}", path.display())))?;
            let doc: ssmodel::ModelDocument =
                serde_json::from_str(&text).map_err(|e| config(format!("{}: {e}", path.display())))?;
            let h = doc.h;
            let ct = doc.into_model().map_err(|e| config(e.to_string()))?;
            (ct, h, (2, 3), None)
        }
    };
    let h = cfg
        .h
        .or(default_h)
        .ok_or_else(|| config("h missing from config and model file".into()))?;
    if !(h > 0.0 && h.is_finite()) {
        return Err(config(format!("h = {h} must be positive")));
    }
    let n_min = cfg.n_min.unwrap_or(default_range.0);
    let n_max = cfg.n_max.unwrap_or(default_range.1.max(n_min));
    if n_min < 2 {
        return Err(config(format!("n_min = {n_min} must be >= 2")));
    }
    if n_max < n_min {
        return Err(config(format!("n_max = {n_max} below n_min = {n_min}")));
    }
    let plant = ssmodel::discretize_trapezoidal(&ct, h)?;

    let (m, p) = (ct.n_inputs(), ct.n_outputs());
    let gain = match (own_gain, &cfg.gain) {
        (Some(s), _) if s.gain.is_some() || s.target_margin.is_some() => {
            let g = match (s.gain, s.target_margin) {
                (Some(g), _) => g,
                (None, Some(target)) => stability::calibrate_surrogate_gain(
                    Complex64::new(s.lambda[0], s.lambda[1]),
                    h,
                    target,
                    stability::CalibrationOptions {
                        input_gain: s.input_gain,
                        output_gain: s.output_gain,
                        ..Default::default()
                    },
                )?,
                (None, None) => unreachable!(),
            };
            Mat::from_element(1, 1, g)
        }
        (_, Some(GainSpec::Scalar(g))) => Mat::from_element(m, p, 0.0) + Mat::identity(m, p) * *g,
        (_, Some(GainSpec::Matrix(rows))) => linalg::rows::from_rows(rows).map_err(config)?,
        (Some(_), None) => return Err(config("surrogate needs gain or target_margin".into())),
        (None, None) => match cfg.model {
            // Damping torque 0.06 * speed deviation.
            ModelSource::Smib => Mat::from_element(1, 1, 0.06),
            _ => return Err(config("gain missing".into())),
        },
    };
    if gain.nrows() != m || gain.ncols() != p {
        return Err(config(format!(
            "gain is {}x{}, model needs {m}x{p}",
            gain.nrows(),
            gain.ncols()
        )));
    }
    Ok(Model {
        ct,
        plant,
        gain,
        n_min,
        n_max,
    })
}

fn family(model: &Model) -> Result<SwitchedSystem, CliError> {
    Ok(enumerate_switching_states(&model.plant, &model.gain, model.n_min, model.n_max)?)
}

fn complex_pairs(zs: &[Complex64]) -> Vec<[f64; 2]> {
    zs.iter().map(|z| [z.re, z.im]).collect()
}

fn io(e: std::io::Error) -> CliError {
    CliError::Run(e.into())
}

fn write_rows(w: &mut impl Write, m: &Mat) -> Result<(), CliError> {
    for r in m.row_iter() {
        let line: Vec<String> = r.iter().map(|x| x.to_string()).collect();
        writeln!(w, "{}", line.join(",")).map_err(io)?;
    }
    Ok(())
}

fn lmi_label(v: &LmiVerdict) -> String {
    match v {
        LmiVerdict::Feasible { certificate, .. } => {
            format!("feasible (min margin {:.3e})", certificate.min_margin())
        }
        LmiVerdict::Undetermined { iterations, residual } => {
            format!("undetermined after {iterations} iterations (residual {residual:.3e})")
        }
        LmiVerdict::NecessaryFail { witness, spectral_radius } => {
            format!("necessary condition fails at state {witness} (rho {spectral_radius:.6})")
        }
    }
}

impl Session {
    fn discretize(&self) -> Result<Outcome, CliError> {
        let model = resolve_model(&self.config)?;
        let plant = &model.plant;
        let dt = linalg::eigenvalues(plant.a_p())?;
        let ct = linalg::eigenvalues(model.ct.a())?;
        let mut artifacts = Vec::new();
        match self.format {
            Format::Doc => artifacts.push(self.write_doc(
                "discretize.json",
                json!({
                    "h": plant.h(),
                    "A_p": linalg::rows::to_rows(plant.a_p()),
                    "B_p": linalg::rows::to_rows(plant.b_p()),
                    "C": linalg::rows::to_rows(plant.c()),
                    "D": linalg::rows::to_rows(plant.d()),
                    "eigenvalues_dt": complex_pairs(&dt),
                    "eigenvalues_ct": complex_pairs(&ct),
                }),
            )?),
            Format::Csv => {
                for (name, m) in [("a_p.csv", plant.a_p()), ("b_p.csv", plant.b_p())] {
                    let (mut w, path) = self.csv_file(name)?;
                    write_rows(&mut w, m)?;
                    w.flush().map_err(io)?;
                    artifacts.push(path);
                }
                let (mut w, path) = self.csv_file("eigenvalues.csv")?;
                writeln!(w, "re_mu,im_mu,abs_mu").map_err(io)?;
                for z in &dt {
                    writeln!(w, "{},{},{}", z.re, z.im, z.norm()).map_err(io)?;
                }
                w.flush().map_err(io)?;
                artifacts.push(path);
            }
        }
        let mut report = format!("h = {}\nA_p =\n{}B_p =\n{}", plant.h(), plant.a_p(), plant.b_p());
        for z in &dt {
            report += &format!("mu = {:.6} {:+.6}j  |mu| = {:.6}\n", z.re, z.im, z.norm());
        }
        Ok(Outcome {
            exit_code: EXIT_OK,
            report,
            artifacts,
        })
    }

    fn rootlocus(&self) -> Result<Outcome, CliError> {
        let model = resolve_model(&self.config)?;
        let track = stability::root_locus(&model.plant, &model.gain, model.n_min, model.n_max)?;
        let mut artifacts = Vec::new();
        let rows: Vec<Value> = track
            .points
            .iter()
            .map(|p| {
                json!({"n": p.n, "re_lambda": p.lambda.re, "im_lambda": p.lambda.im,
                       "zeta": p.zeta, "mu_abs": p.mu.norm()})
            })
            .collect();
        match self.format {
            Format::Doc => artifacts.push(self.write_doc(
                "rootlocus.json",
                json!({"points": rows, "continuation_breaks": track.continuation_breaks}),
            )?),
            Format::Csv => {
                let (mut w, path) = self.csv_file("rootlocus.csv")?;
                writeln!(w, "n,re_lambda,im_lambda,zeta,mu_abs").map_err(io)?;
                for p in &track.points {
                    writeln!(w, "{},{},{},{},{}", p.n, p.lambda.re, p.lambda.im, p.zeta, p.mu.norm()).map_err(io)?;
                }
                w.flush().map_err(io)?;
                artifacts.push(path);
            }
        }
        let mut report = String::from("n   re(lambda)    im(lambda)    zeta        |mu|\n");
        for p in &track.points {
            report += &format!(
                "{:<3} {:<13.6} {:<13.6} {:<11.6} {:.8}\n",
                p.n,
                p.lambda.re,
                p.lambda.im,
                p.zeta,
                p.mu.norm()
            );
        }
        Ok(Outcome {
            exit_code: EXIT_OK,
            report,
            artifacts,
        })
    }

    fn assess(&self) -> Result<Outcome, CliError> {
        let model = resolve_model(&self.config)?;
        let system = family(&model)?;
        let tol = self.config.tolerances.constancy;
        let verdict = stability::simplified_verdict(&system, tol)?;
        let constancy = stability::check_eigenvector_constancy(&system, tol)?;
        let bounds = stability::damping_bounds(&system);
        let states = system.matrices();
        let opts = self.config.solver();
        let common = lmi::common_p_solve(&states, &opts)?;
        let multi = if states.len() <= self.config.tolerances.multi_p_max_states || common.is_feasible() {
            Some(lmi::lmi_solve(&states, &opts)?)
        } else {
            None
        };

        let unstable = matches!(verdict, StabilityVerdict::Unstable { .. })
            || matches!(common, LmiVerdict::NecessaryFail { .. });
        let certified = matches!(verdict, StabilityVerdict::Stable { .. })
            || common.is_feasible()
            || multi.as_ref().is_some_and(LmiVerdict::is_feasible);
        let exit_code = if unstable {
            EXIT_UNSTABLE
        } else if certified {
            EXIT_OK
        } else {
            EXIT_UNDETERMINED
        };

        let mut artifacts = Vec::new();
        match self.format {
            Format::Doc => artifacts.push(self.write_doc(
                "assess.json",
                json!({
                    "gain": linalg::rows::to_rows(&system.gain),
                    "simplified": verdict,
                    "bounds": bounds,
                    "constancy": constancy,
                    "lmi_common": common,
                    "lmi_multi": multi,
                }),
            )?),
            Format::Csv => {
                let (mut w, path) = self.csv_file("assess_states.csv")?;
                writeln!(w, "n,mu_abs,zeta,spectral_radius,misalignment").map_err(io)?;
                for (s, (_, angle)) in system.states.iter().zip(&constancy.angles) {
                    writeln!(w, "{},{},{},{},{}", s.n, s.mu().norm(), s.damping_ct, s.spectral_radius, angle)
                        .map_err(io)?;
                }
                w.flush().map_err(io)?;
                artifacts.push(path);
                if let LmiVerdict::Feasible { certificate, .. } = &common {
                    let (mut w, path) = self.create("certificate_common.json")?;
                    w.write_all(certificate.to_json()?.as_bytes()).map_err(io)?;
                    artifacts.push(path);
                }
            }
        }

        let simplified = match &verdict {
            StabilityVerdict::Stable { bounds } => format!(
                "stable, zeta in [{:.5}, {:.5}] (n = {} .. n = {})",
                bounds.zeta_min, bounds.zeta_max, bounds.argmin_delay, bounds.argmax_delay
            ),
            StabilityVerdict::Unstable {
                witness_delay,
                spectral_radius,
            } => format!("unstable at n = {witness_delay} (rho {spectral_radius:.8})"),
            StabilityVerdict::Undetermined { reason } => format!("undetermined: {reason}"),
        };
        let report = format!(
            "states            n = {} .. {}\n\
             gain              {}\n\
             constancy         max misalignment {:.5} rad (tolerance {})\n\
             simplified        {}\n\
             lmi common P      {}\n\
             lmi per-state P   {}\n",
            system.n_min(),
            system.n_max_delay(),
            system.gain.iter().map(|g| format!("{g:.6e}")).collect::<Vec<_>>().join(" "),
            constancy.max_misalignment,
            tol,
            simplified,
            lmi_label(&common),
            multi.as_ref().map_or("skipped (family too large)".to_string(), lmi_label),
        );
        Ok(Outcome {
            exit_code,
            report,
            artifacts,
        })
    }

    fn fit_window(&self, total: usize, n_max: usize) -> (usize, usize) {
        match self.config.fit_window {
            Some([a, b]) => (a, b.min(total)),
            None => {
                let start = self.config.disturbance.step.max(self.config.controller_enable_step) + n_max;
                (start.min(total), total)
            }
        }
    }

    fn simulate(&self) -> Result<Outcome, CliError> {
        let cfg = &self.config;
        if cfg.seeds.is_empty() {
            return Err(CliError::Config("simulate needs at least one seed".into()));
        }
        if cfg.sim_length == 0 {
            return Err(CliError::Config("sim_length must be >= 1".into()));
        }
        let model = resolve_model(cfg)?;
        let system = family(&model)?;
        let bounds = stability::damping_bounds(&system);
        let fault = timesim::fault_disturbance(&system, cfg.disturbance.magnitude, cfg.disturbance.step)?;
        let (start, end) = self.fit_window(cfg.sim_length + 1, system.n_max);
        let setup = MonteCarlo {
            length: cfg.sim_length,
            distribution: cfg.delay_distribution.clone(),
            x0: vec![0.0; system.dim()],
            events: vec![fault.clone()],
            schedule: timesim::controller_enable_schedule(cfg.controller_enable_step),
            channel: cfg.output_channel,
            window: Some(start..end),
        };
        let runs = timesim::monte_carlo(&system, &cfg.seeds, &setup)?;
        let slack = cfg.tolerances.containment_slack;
        let inside = |z: f64| z >= bounds.zeta_min - slack && z <= bounds.zeta_max + slack;

        let mut artifacts = Vec::new();
        for &seed in &cfg.seeds {
            let delays = timesim::random_delay_sequence(
                seed,
                system.n_min(),
                system.n_max_delay(),
                cfg.sim_length,
                &cfg.delay_distribution,
            )?;
            let traj = timesim::simulate_scheduled(&system, &delays, &setup.x0, &setup.events, setup.schedule)?;
            let (w, path) = self.csv_file(&format!("trajectory_seed{seed}.csv"))?;
            timesim::write_trajectory_csv(&traj, system.plant.n_states(), w)?;
            artifacts.push(path);
        }
        let contained = runs.iter().filter(|r| r.zeta_peak_fit.is_some_and(inside)).count();
        match self.format {
            Format::Doc => artifacts.push(self.write_doc(
                "summary.json",
                json!({"bounds": bounds, "runs": runs, "contained": contained, "slack": slack,
                       "fit_window": [start, end]}),
            )?),
            Format::Csv => {
                let (mut w, path) = self.csv_file("summary.csv")?;
                writeln!(w, "seed,zeta_peak_fit,zeta_eig_product,zeta_min,zeta_max,inside").map_err(io)?;
                for r in &runs {
                    writeln!(
                        w,
                        "{},{},{},{},{},{}",
                        r.seed,
                        r.zeta_peak_fit.map_or(String::new(), |z| z.to_string()),
                        r.zeta_eig_product,
                        bounds.zeta_min,
                        bounds.zeta_max,
                        r.zeta_peak_fit.is_some_and(inside)
                    )
                    .map_err(io)?;
                }
                w.flush().map_err(io)?;
                artifacts.push(path);
            }
        }
        let mut report = format!(
            "bounds zeta in [{:.5}, {:.5}], fit window {start}..{end}\nseed  peak_fit   eig_product  inside\n",
            bounds.zeta_min, bounds.zeta_max
        );
        for r in &runs {
            let fit = r
                .zeta_peak_fit
                .map_or_else(|| r.peak_fit_error.clone().unwrap_or_default(), |z| format!("{z:.5}"));
            report += &format!(
                "{:<5} {:<10} {:<12.5} {}\n",
                r.seed,
                fit,
                r.zeta_eig_product,
                r.zeta_peak_fit.is_some_and(inside)
            );
        }
        report += &format!("{contained}/{} runs inside the bounds\n", runs.len());
        Ok(Outcome {
            exit_code: EXIT_OK,
            report,
            artifacts,
        })
    }

    fn pdc(&self) -> Result<Outcome, CliError> {
        let cfg = &self.config;
        let pdc = &cfg.pdc;
        let (trace, h) = match &pdc.trace {
            TraceSource::TwoPmu => {
                let t = pdcsim::two_pmu_scenario();
                let h = t.h().expect("bundled scenario carries h");
                (t, h)
            }
            TraceSource::File(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                let t = PacketTrace::parse(&text).map_err(|e| CliError::Config(e.to_string()))?;
                let h = t
                    .h()
                    .or(cfg.h)
                    .ok_or_else(|| CliError::Config("packet trace needs h".into()))?;
                (t, h)
            }
            TraceSource::Synthetic(spec) => {
                let packets = pdcsim::synth_packet_stream(spec).map_err(|e| match e {
                    Error::InvalidProbability(_) | Error::InvalidArgument(_) => CliError::Config(e.to_string()),
                    e => CliError::Run(e),
                })?;
                (
                    PacketTrace::Full {
                        h: spec.h,
                        channels: spec.channels.clone(),
                        packets,
                    },
                    spec.h,
                )
            }
        };
        let channels = match (&pdc.trace, &trace) {
            (TraceSource::Synthetic(spec), _) => spec.channels.clone(),
            (_, t) => t.channels(),
        };
        let packets = trace.packets();
        let first = pdc
            .first_step
            .unwrap_or_else(|| packets.iter().map(|p| p.stamp_index).min().unwrap_or(0));
        let last = pdc.last_step.unwrap_or_else(|| {
            packets
                .iter()
                .map(|p| (p.arrival_time / h).floor() as i64 + 1)
                .max()
                .unwrap_or(first)
        });
        let initial = pdc.initial.clone().unwrap_or_else(|| vec![0.0; channels.len()]);
        let run = pdcsim::run_pdc(&channels, packets, h, first, last, &initial)?;
        let delays = pdcsim::effective_delay_trace(&run.log);

        let mut artifacts = Vec::new();
        let (w, path) = self.csv_file("emissions.csv")?;
        pdcsim::write_emission_csv(&run, w)?;
        artifacts.push(path);

        let mut report = format!(
            "channels {:?}, steps {first}..={last}, stored {}, discarded {}\n",
            channels, run.stats.stored, run.stats.discarded
        );
        for e in &run.log {
            report += &match e {
                pdcsim::Emission::Cold { step, .. } => format!("t[{step}]  cold\n"),
                pdcsim::Emission::Sample(s) => format!(
                    "t[{}]  C{}{}  delay {}\n",
                    s.emitted_at,
                    s.source_stamp,
                    if s.held { " (held)" } else { "" },
                    s.effective_delay()
                ),
            };
        }

        let mut exit_code = EXIT_OK;
        let mut doc = json!({"stats": run.stats, "log": run.log});
        if let Ok(delays) = &delays {
            let n_min = cfg.n_min.unwrap_or(delays.n_min.max(2));
            let n_max = cfg.n_max.unwrap_or(delays.n_max.max(n_min));
            let (clipped, moved) = delays.clipped(n_min, n_max).map_err(|e| CliError::Config(e.to_string()))?;
            let (mut w, path) = self.csv_file("delays.csv")?;
            writeln!(w, "index,effective_delay,clipped_delay").map_err(io)?;
            for (k, (a, b)) in delays.entries.iter().zip(&clipped.entries).enumerate() {
                writeln!(w, "{k},{a},{b}").map_err(io)?;
            }
            w.flush().map_err(io)?;
            artifacts.push(path);
            report += &format!("effective delays {:?}, {moved} clipped into [{n_min}, {n_max}]\n", delays.entries);
            doc["effective_delay"] = json!(delays);
            doc["clipped"] = json!({"sequence": clipped, "count": moved});
            if pdc.simulate {
                let (line, code) = self.pdc_simulate(&clipped, &mut artifacts)?;
                report += &line;
                exit_code = code;
            }
        } else {
            report += "no complete synchronous set: effective delay undefined\n";
        }
        if self.format == Format::Doc {
            artifacts.push(self.write_doc("pdc.json", doc)?);
        }
        Ok(Outcome {
            exit_code,
            report,
            artifacts,
        })
    }

    fn pdc_simulate(&self, delays: &DelaySequence, artifacts: &mut Vec<PathBuf>) -> Result<(String, i32), CliError> {
        let cfg = &self.config;
        let mut model = resolve_model(cfg)?;
        model.n_min = delays.n_min;
        model.n_max = delays.n_max;
        let system = family(&model)?;
        let fault = timesim::fault_disturbance(&system, cfg.disturbance.magnitude, cfg.disturbance.step)?;
        let traj = timesim::simulate_scheduled(
            &system,
            delays,
            &vec![0.0; system.dim()],
            &[fault],
            timesim::controller_enable_schedule(cfg.controller_enable_step),
        )?;
        let (w, path) = self.csv_file("trajectory_pdc.csv")?;
        timesim::write_trajectory_csv(&traj, system.plant.n_states(), w)?;
        artifacts.push(path);
        let est = timesim::estimate_damping_eig_product(&system, delays)?;
        Ok((format!("closed-loop run on the PDC delays: eig-product zeta {:.5}\n", est.zeta), EXIT_OK))
    }
}

/// Parse `--format`.
pub fn parse_format(s: &str) -> Result<Format, CliError> {
    match s {
        "csv" => Ok(Format::Csv),
        "doc" => Ok(Format::Doc),
        other => Err(CliError::Config(format!("unknown format {other:?} (csv|doc)"))),
    }
}

/// Full command path used by the binary: load config, run, print, exit code.
pub fn execute(
    command: Command,
    config: Option<&Path>,
    out: Option<PathBuf>,
    seed: Option<u64>,
    format: Format,
    stdout: &mut impl Write,
    stderr: &mut impl Write,
) -> i32 {
    let result = config
        .map_or_else(|| Ok(RunConfig::default()), RunConfig::load)
        .and_then(|cfg| Session::new(cfg, out, seed, format))
        .and_then(|s| s.run(command));
    match result {
        Ok(outcome) => {
            let _ = write!(stdout, "{}", outcome.report);
            for a in &outcome.artifacts {
                let _ = writeln!(stdout, "wrote {}", a.display());
            }
            outcome.exit_code
        }
        Err(e) => {
            let _ = writeln!(stderr, "wadc: {e}");
            e.exit_code()
        }
    }
}
