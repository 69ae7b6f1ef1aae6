//! JSON config documents: schemas, validation and conversion to core types.
//!
//! Every document is strict — unknown keys are rejected — and numeric
//! defaults are pulled from the corresponding core `Default` impls so the
//! CLI and library can never drift apart.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Deserialize;

use platoon_core::baselines::{DmpcConfig, LinearGains};
use platoon_core::dynamics::NoiseConfig;
use platoon_core::nn::{load_checkpoint, Mlp};
use platoon_core::sim::{
    default_profile, Controller, InitialConditions, Scenario, TauSpec,
};
use platoon_core::train::{LyapunovHyper, ShapingWeights};

use crate::CliError;

/// Reads and parses a config document, returning the raw bytes for hashing.
pub fn load_config<C: DeserializeOwned>(path: &Path) -> Result<(C, Vec<u8>), CliError> {
    let bytes = fs::read(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let cfg = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok((cfg, bytes))
}

fn ensure(cond: bool, msg: &str) -> Result<(), CliError> {
    if cond {
        Ok(())
    } else {
        Err(CliError::Config(msg.to_string()))
    }
}

/// Axis-aligned box given by per-coordinate bounds.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxBounds {
    fn check(&self, what: &str, dim: usize) -> Result<(), CliError> {
        ensure(
            self.lower.len() == dim && self.upper.len() == dim,
            &format!("{what} must have {dim} lower and upper bounds"),
        )?;
        for i in 0..dim {
            ensure(
                self.lower[i] < self.upper[i],
                &format!("{what} lower bound {i} must be below the upper bound"),
            )?;
            ensure(
                self.lower[i] <= 0.0 && self.upper[i] >= 0.0,
                &format!("{what} must contain the origin (coordinate {i})"),
            )?;
        }
        Ok(())
    }
}

/// Certificate condition margins and loss weights.
#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HyperConfig {
    pub eps1: f64,
    pub eps2: f64,
    pub lambda_pos: f64,
    pub lambda_dec: f64,
}

impl Default for HyperConfig {
    fn default() -> Self {
        let h = LyapunovHyper::<f64>::default();
        Self { eps1: h.eps1, eps2: h.eps2, lambda_pos: h.lambda_pos, lambda_dec: h.lambda_dec }
    }
}

impl HyperConfig {
    pub fn check(&self) -> Result<(), CliError> {
        ensure(self.eps1 > 0.0 && self.eps2 > 0.0, "condition margins must be positive")?;
        ensure(
            self.lambda_pos >= 0.0 && self.lambda_dec >= 0.0,
            "loss weights must be non-negative",
        )
    }

    pub fn to_core(self) -> LyapunovHyper<f64> {
        LyapunovHyper {
            eps1: self.eps1,
            eps2: self.eps2,
            lambda_pos: self.lambda_pos,
            lambda_dec: self.lambda_dec,
        }
    }
}

/// Control-performance shaping weights.
#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShapingConfig {
    pub threshold: f64,
    pub safety: f64,
    pub action: f64,
    pub slew: f64,
    pub stability: f64,
    pub horizon: usize,
}

impl Default for ShapingConfig {
    fn default() -> Self {
        let w = ShapingWeights::<f64>::default();
        Self {
            threshold: w.threshold,
            safety: w.safety,
            action: w.action,
            slew: w.slew,
            stability: w.stability,
            horizon: w.horizon,
        }
    }
}

impl ShapingConfig {
    pub fn check(&self) -> Result<(), CliError> {
        ensure(self.threshold > 0.0, "safety threshold must be positive")?;
        ensure(
            self.safety >= 0.0 && self.action >= 0.0 && self.slew >= 0.0 && self.stability >= 0.0,
            "shaping weights must be non-negative",
        )?;
        ensure(self.horizon >= 1, "shaping horizon must be at least one step")
    }

    pub fn to_core(self) -> ShapingWeights<f64> {
        ShapingWeights {
            threshold: self.threshold,
            safety: self.safety,
            action: self.action,
            slew: self.slew,
            stability: self.stability,
            horizon: self.horizon,
        }
    }
}

fn default_growth() -> f64 {
    1.5
}
fn default_leak() -> f64 {
    0.1
}
fn default_u_max() -> f64 {
    LinearGains::<f64>::default().u_max
}
fn default_dt() -> f64 {
    0.1
}
fn default_inner_cap() -> usize {
    500
}
fn default_conv_tol() -> f64 {
    1e-3
}
fn default_lr() -> f64 {
    1e-3
}
fn default_true() -> bool {
    true
}
fn default_dataset_epochs() -> usize {
    300
}
fn default_dataset_capacity() -> usize {
    4096
}
fn default_dataset_radius() -> f64 {
    1e-6
}
fn default_node_limit() -> usize {
    1_000_000
}
fn default_timeout_s() -> u64 {
    1800
}
fn default_tolerance() -> f64 {
    1e-6
}

/// Document for `platoon train`.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// Number of follower error blocks in the training model.
    pub n: usize,
    /// Initial verification region (dimension `2n`).
    pub region: BoxBounds,
    /// Region the certificate should eventually cover.
    pub target: BoxBounds,
    #[serde(default = "default_growth")]
    pub growth: f64,
    /// Controller layer sizes, e.g. `[2, 8, 8, 1]`.
    pub controller_sizes: Vec<usize>,
    /// Certificate layer sizes, e.g. `[2, 16, 16, 1]` for `n = 1`.
    pub lyapunov_sizes: Vec<usize>,
    /// Checkpoint that seeds the controller instead of a fresh random draw;
    /// `controller_sizes` is ignored when set.
    #[serde(default)]
    pub init_controller: Option<PathBuf>,
    /// Checkpoint that seeds the certificate instead of a fresh random draw;
    /// `lyapunov_sizes` is ignored when set.
    #[serde(default)]
    pub init_lyapunov: Option<PathBuf>,
    #[serde(default = "default_leak")]
    pub leak: f64,
    #[serde(default = "default_u_max")]
    pub u_max: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Desired gaps per follower; 5 m each when omitted.
    #[serde(default)]
    pub gaps: Option<Vec<f64>>,
    #[serde(default)]
    pub hyper: HyperConfig,
    #[serde(default)]
    pub shaping: ShapingConfig,
    pub seed: u64,
    /// Episode budget; zero writes the untouched initial networks.
    pub episodes: usize,
    #[serde(default = "default_inner_cap")]
    pub inner_cap: usize,
    #[serde(default = "default_conv_tol")]
    pub conv_tol: f64,
    #[serde(default = "default_lr")]
    pub lr: f64,
    /// Run the certifier between episodes.
    #[serde(default = "default_true")]
    pub verify: bool,
    #[serde(default = "default_dataset_epochs")]
    pub dataset_epochs: usize,
    #[serde(default = "default_true")]
    pub harvest_witnesses: bool,
    #[serde(default = "default_dataset_capacity")]
    pub dataset_capacity: usize,
    #[serde(default = "default_dataset_radius")]
    pub dataset_radius: f64,
    #[serde(default = "default_node_limit")]
    pub node_limit: usize,
    #[serde(default = "default_timeout_s")]
    pub timeout_s: u64,
}

impl TrainConfig {
    pub fn check(&self) -> Result<(), CliError> {
        ensure(self.n >= 1, "need at least one follower error block")?;
        let dim = 2 * self.n;
        self.region.check("region", dim)?;
        self.target.check("target", dim)?;
        for i in 0..dim {
            ensure(
                self.target.lower[i] <= self.region.lower[i]
                    && self.region.upper[i] <= self.target.upper[i],
                "region must lie inside target",
            )?;
        }
        ensure(self.growth > 1.0, "growth factor must exceed one")?;
        check_sizes(&self.controller_sizes, 2, "controller_sizes")?;
        check_sizes(&self.lyapunov_sizes, dim, "lyapunov_sizes")?;
        ensure(self.leak > 0.0 && self.leak < 1.0, "leak must lie in (0, 1)")?;
        ensure(self.u_max > 0.0, "input bound must be positive")?;
        ensure(self.dt > 0.0, "step length must be positive")?;
        if let Some(gaps) = &self.gaps {
            ensure(gaps.len() == self.n, "need one gap per follower")?;
            ensure(gaps.iter().all(|&g| g > 0.0), "gaps must be positive")?;
        }
        self.hyper.check()?;
        self.shaping.check()?;
        ensure(self.conv_tol > 0.0, "convergence tolerance must be positive")?;
        ensure(self.lr > 0.0, "learning rate must be positive")?;
        ensure(self.dataset_capacity >= 1, "dataset capacity must be positive")?;
        ensure(self.dataset_radius >= 0.0, "dataset radius must be non-negative")?;
        ensure(self.node_limit >= 1, "node limit must be positive")
    }

    pub fn gaps_or_default(&self) -> Vec<f64> {
        self.gaps.clone().unwrap_or_else(|| vec![5.0; self.n])
    }
}

fn check_sizes(sizes: &[usize], input: usize, what: &str) -> Result<(), CliError> {
    ensure(sizes.len() >= 2, &format!("{what} needs at least input and output sizes"))?;
    ensure(sizes[0] == input, &format!("{what} must start with {input} inputs"))?;
    ensure(*sizes.last().unwrap() == 1, &format!("{what} must end with one output"))?;
    ensure(sizes.iter().all(|&s| s >= 1), &format!("{what} entries must be positive"))
}

/// Document for `platoon verify`.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    /// Controller checkpoint path.
    pub controller: PathBuf,
    /// Certificate checkpoint path.
    pub lyapunov: PathBuf,
    /// Box over which the conditions are checked.
    pub region: BoxBounds,
    #[serde(default)]
    pub hyper: HyperConfig,
    /// Optima at most this large count as zero.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub gaps: Option<Vec<f64>>,
    #[serde(default = "default_node_limit")]
    pub node_limit: usize,
    #[serde(default = "default_timeout_s")]
    pub timeout_s: u64,
}

impl VerifyConfig {
    pub fn check(&self) -> Result<(), CliError> {
        let dim = self.region.lower.len();
        ensure(dim >= 2 && dim % 2 == 0, "region dimension must be a positive multiple of 2")?;
        self.region.check("region", dim)?;
        self.hyper.check()?;
        ensure(self.tolerance >= 0.0, "tolerance must be non-negative")?;
        ensure(self.dt > 0.0, "step length must be positive")?;
        if let Some(gaps) = &self.gaps {
            ensure(gaps.len() == dim / 2, "need one gap per follower")?;
            ensure(gaps.iter().all(|&g| g > 0.0), "gaps must be positive")?;
        }
        ensure(self.node_limit >= 1, "node limit must be positive")
    }

    pub fn gaps_or_default(&self) -> Vec<f64> {
        self.gaps.clone().unwrap_or_else(|| vec![5.0; self.region.lower.len() / 2])
    }
}

/// Engine time-constant specification: `{"fixed": 0.5}` or
/// `{"uniform": [0.2, 0.8]}`.
#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauConfig {
    Fixed(f64),
    Uniform([f64; 2]),
}

impl TauConfig {
    fn check(&self) -> Result<(), CliError> {
        match *self {
            TauConfig::Fixed(t) => ensure(t > 0.0, "time constant must be positive"),
            TauConfig::Uniform([lo, hi]) => {
                ensure(lo > 0.0 && hi >= lo, "time-constant interval must be positive and ordered")
            }
        }
    }

    fn to_core(self) -> TauSpec<f64> {
        match self {
            TauConfig::Fixed(t) => TauSpec::Fixed(t),
            TauConfig::Uniform([lo, hi]) => TauSpec::Uniform(lo, hi),
        }
    }
}

fn default_tau() -> TauConfig {
    TauConfig::Fixed(0.5)
}

/// Controller selection for simulations and level-set export.
#[derive(Clone, Debug, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ControllerConfig {
    /// Learned network loaded from a checkpoint.
    Nn { checkpoint: PathBuf },
    /// Clamped proportional feedback.
    Linear {
        #[serde(default = "default_kp")]
        kp: f64,
        #[serde(default = "default_kv")]
        kv: f64,
        #[serde(default = "default_u_max")]
        u_max: f64,
    },
    /// Distributed MPC on shared plans.
    Dmpc {
        #[serde(default = "default_horizon")]
        horizon: usize,
        #[serde(default = "default_q_p")]
        q_p: f64,
        #[serde(default = "default_q_v")]
        q_v: f64,
        #[serde(default = "default_r")]
        r: f64,
        #[serde(default = "default_f")]
        f: f64,
        #[serde(default = "default_u_max")]
        u_max: f64,
        #[serde(default)]
        terminal_constraint: bool,
    },
}

fn default_kp() -> f64 {
    LinearGains::<f64>::default().kp
}
fn default_kv() -> f64 {
    LinearGains::<f64>::default().kv
}
fn default_horizon() -> usize {
    DmpcConfig::<f64>::default().horizon
}
fn default_q_p() -> f64 {
    DmpcConfig::<f64>::default().q_p
}
fn default_q_v() -> f64 {
    DmpcConfig::<f64>::default().q_v
}
fn default_r() -> f64 {
    DmpcConfig::<f64>::default().r
}
fn default_f() -> f64 {
    DmpcConfig::<f64>::default().f
}

/// Loads a checkpoint, classifying missing/corrupt files as runtime errors.
pub fn load_net(path: &Path) -> Result<Mlp<f64>, CliError> {
    load_checkpoint::<f64>(path)
        .map_err(|e| CliError::Runtime(format!("loading {}: {e}", path.display())))
}

/// Loads a checkpoint and requires the per-vehicle controller shape.
pub fn load_controller_net(path: &Path) -> Result<Mlp<f64>, CliError> {
    let net = load_net(path)?;
    if net.input_dim() != 2 || net.output_dim() != 1 {
        return Err(CliError::Config(format!(
            "{}: controller must map 2 inputs to 1 output, found {} to {}",
            path.display(),
            net.input_dim(),
            net.output_dim()
        )));
    }
    Ok(net)
}

impl ControllerConfig {
    pub fn build(&self) -> Result<Controller<f64>, CliError> {
        match self {
            ControllerConfig::Nn { checkpoint } => {
                Ok(Controller::Nn(load_controller_net(checkpoint)?))
            }
            ControllerConfig::Linear { kp, kv, u_max } => {
                ensure(*kp > 0.0 && *kv > 0.0, "feedback gains must be positive")?;
                ensure(*u_max > 0.0, "input bound must be positive")?;
                Ok(Controller::Linear(LinearGains { kp: *kp, kv: *kv, u_max: *u_max }))
            }
            ControllerConfig::Dmpc { horizon, q_p, q_v, r, f, u_max, terminal_constraint } => {
                ensure(*horizon >= 2, "MPC horizon must be at least 2")?;
                ensure(*q_p > 0.0 && *q_v > 0.0, "tracking weights must be positive")?;
                ensure(*r >= 0.0 && *f >= 0.0, "effort weights must be non-negative")?;
                ensure(*u_max > 0.0, "input bound must be positive")?;
                Ok(Controller::Dmpc(DmpcConfig {
                    horizon: *horizon,
                    q_p: *q_p,
                    q_v: *q_v,
                    r: *r,
                    f: *f,
                    u_max: *u_max,
                    terminal_constraint: *terminal_constraint,
                }))
            }
        }
    }
}

/// Starting placement: `"formation"` or `"perturbed_gaps"`.
#[derive(Clone, Copy, Debug, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitConfig {
    #[default]
    Formation,
    PerturbedGaps,
}

/// Scenario description shared by `simulate` and `compare`.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Vehicles including the leader.
    pub n: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub steps: usize,
    /// Desired gaps per follower; 5 m each when omitted.
    #[serde(default)]
    pub gaps: Option<Vec<f64>>,
    #[serde(default = "default_tau")]
    pub tau: TauConfig,
    /// Lead velocity profile knots `[time_s, speed]`; the standard
    /// cruise/ramp/dwell profile when omitted.
    #[serde(default)]
    pub profile: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    pub noise: NoiseConfig,
    /// Required by `simulate`; must be absent for `compare` scenarios.
    #[serde(default)]
    pub controller: Option<ControllerConfig>,
    #[serde(default)]
    pub init: InitConfig,
}

impl ScenarioConfig {
    /// Builds the core scenario with an explicit controller choice.
    pub fn to_scenario(&self, controller: &ControllerConfig) -> Result<Scenario<f64>, CliError> {
        self.tau.check()?;
        let sc = Scenario {
            n: self.n,
            dt: self.dt,
            steps: self.steps,
            gaps: self
                .gaps
                .clone()
                .unwrap_or_else(|| vec![5.0; self.n.saturating_sub(1)]),
            tau: self.tau.to_core(),
            profile: self
                .profile
                .as_ref()
                .map(|p| p.iter().map(|&[t, v]| (t, v)).collect())
                .unwrap_or_else(default_profile),
            noise: self.noise,
            controller: controller.build()?,
            init: match self.init {
                InitConfig::Formation => InitialConditions::Formation,
                InitConfig::PerturbedGaps => InitialConditions::PerturbedGaps,
            },
        };
        sc.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(sc)
    }
}

/// Document for `platoon simulate`.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub scenario: ScenarioConfig,
}

/// One benchmarked controller in a comparison.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedController {
    /// Label used in output file names.
    pub name: String,
    pub controller: ControllerConfig,
}

/// Document for `platoon compare`.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    pub scenario: ScenarioConfig,
    pub controllers: Vec<NamedController>,
    /// Trials per controller, each with matched seeds.
    pub trials: usize,
}

impl CompareConfig {
    pub fn check(&self) -> Result<(), CliError> {
        ensure(
            self.scenario.controller.is_none(),
            "compare scenarios take controllers from the controller list",
        )?;
        ensure(!self.controllers.is_empty(), "need at least one controller to compare")?;
        ensure(self.trials >= 2, "comparisons need at least two trials")?;
        for nc in &self.controllers {
            ensure(
                !nc.name.is_empty()
                    && nc.name.len() <= 64
                    && nc
                        .name
                        .chars()
                        .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_'),
                &format!("controller name {:?} must be a short [A-Za-z0-9_-] label", nc.name),
            )?;
        }
        let mut names: Vec<&str> = self.controllers.iter().map(|c| c.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        ensure(names.len() == self.controllers.len(), "controller names must be unique")
    }
}

fn default_resolution() -> usize {
    101
}

/// Document for `platoon levelsets`.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelsetsConfig {
    /// Network or linear controller to evaluate (MPC has no static map).
    pub controller: ControllerConfig,
    /// Lower corner of the error grid `[ep, ev]`.
    pub lower: [f64; 2],
    /// Upper corner of the error grid `[ep, ev]`.
    pub upper: [f64; 2],
    /// Grid points per axis.
    #[serde(default = "default_resolution")]
    pub resolution: usize,
}

impl LevelsetsConfig {
    pub fn check(&self) -> Result<(), CliError> {
        ensure(
            self.lower[0] < self.upper[0] && self.lower[1] < self.upper[1],
            "grid bounds must be ordered",
        )?;
        ensure(self.resolution >= 2, "resolution must be at least 2")?;
        ensure(
            !matches!(self.controller, ControllerConfig::Dmpc { .. }),
            "level sets are defined for network and linear controllers only",
        )
    }
}
