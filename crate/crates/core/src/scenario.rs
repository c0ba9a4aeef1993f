//! Declarative scenario files and the builders that turn them into loops.

use std::collections::BTreeMap;
use std::path::Path as FsPath;

use serde::{Deserialize, Serialize};

use crate::controllers::{build_ic, closed_loop_target, design_mbdr, pid_discretize, MbdrVariant, PidParameters};
use crate::error::{Error, Result};
use crate::freqresp::log_grid;
use crate::lifting::SampleAvailabilityPattern;
use crate::loops::{DisturbanceRate, LoopSetup, Strategy};
use crate::lti::{zoh_tf, Domain, TransferFunction};
use crate::qft::{default_check_frequencies, DeltaProfile, QftSpecification};
use crate::simulation::{Nonlinearity, Scenario, Sinusoid};
use crate::ugv::{h_path, Pose, UgvScenario, Wheel};

pub const BUILTIN: [(&str, &str); 3] = [
    ("ex1", include_str!("../../../scenarios/ex1.toml")),
    ("ex2", include_str!("../../../scenarios/ex2.toml")),
    ("ugv", include_str!("../../../scenarios/ugv.toml")),
];

pub fn builtin(name: &str) -> Option<&'static str> {
    BUILTIN.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variable {
    S,
    Z,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TfSpec {
    pub variable: Variable,
    /// Sampling period for `z`; defaults to the scheme period.
    pub period_s: Option<f64>,
    pub num: Vec<f64>,
    pub den: Vec<f64>,
}

impl TfSpec {
    pub fn to_tf(&self, default_period: f64) -> Result<TransferFunction> {
        match self.variable {
            Variable::S => {
                if self.period_s.is_some() {
                    return Err(Error::Scenario("period_s is only meaningful for variable = \"z\"".into()));
                }
                TransferFunction::continuous(&self.num, &self.den)
            }
            Variable::Z => TransferFunction::discrete(&self.num, &self.den, self.period_s.unwrap_or(default_period)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSpec {
    pub period_s: f64,
    pub n: usize,
    /// Fine steps per T; defaults to 10 for continuous plants and 1 for discrete ones.
    pub substeps: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PidSpec {
    pub kp: f64,
    #[serde(default)]
    pub td_s: f64,
    /// Omit for a proportional controller.
    pub ti_s: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MbdrSpec {
    #[serde(default)]
    pub variant: MbdrVariant,
    /// Overrides the closed-loop target built from the controller and model.
    pub target: Option<TfSpec>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IcSpec {
    pub pattern: Option<Vec<bool>>,
    #[serde(default)]
    pub correction: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSpec {
    pub pid: Option<PidSpec>,
    /// Fast controller given directly.
    pub fast: Option<TfSpec>,
    #[serde(default)]
    pub mbdr: MbdrSpec,
    #[serde(default)]
    pub ic: IcSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSelection {
    pub model: String,
    pub real: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceSpec {
    pub amplitude: f64,
    pub omega_rad_s: f64,
    #[serde(default)]
    pub phase_rad: f64,
    #[serde(default)]
    pub enabled: bool,
    /// Horizon used when the disturbance is active.
    pub horizon_s: Option<f64>,
    #[serde(default = "n3")]
    pub rate: DisturbanceRate,
}

fn n3() -> DisturbanceRate {
    DisturbanceRate::N3
}

impl DisturbanceSpec {
    pub fn sinusoid(&self) -> Sinusoid {
        Sinusoid { amplitude: self.amplitude, omega: self.omega_rad_s, phase: self.phase_rad }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonlinearitySpec {
    #[serde(default = "dead_zone")]
    pub dead_zone_v: f64,
    #[serde(default = "saturation")]
    pub saturation_v: f64,
    #[serde(default)]
    pub enabled: bool,
}

fn dead_zone() -> f64 {
    Nonlinearity::default().dead_zone
}

fn saturation() -> f64 {
    Nonlinearity::default().saturation
}

impl Default for NonlinearitySpec {
    fn default() -> Self {
        NonlinearitySpec { dead_zone_v: dead_zone(), saturation_v: saturation(), enabled: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default = "one")]
    pub step: f64,
    pub horizon_s: f64,
    #[serde(default = "all_strategies")]
    pub strategies: Vec<Strategy>,
    pub plants: PlantSelection,
    /// Plant selection under model-plant mismatch.
    pub mpm: Option<PlantSelection>,
    pub disturbance: Option<DisturbanceSpec>,
    #[serde(default)]
    pub nonlinearity: NonlinearitySpec,
}

fn one() -> f64 {
    1.0
}

fn all_strategies() -> Vec<Strategy> {
    Strategy::ALL.to_vec()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QftSpec {
    pub mu: f64,
    pub delta: DeltaProfile,
    #[serde(default)]
    pub extra_frequencies_rad_s: Vec<f64>,
    #[serde(default = "unit_gain")]
    pub gains: Vec<f64>,
    #[serde(default = "qft_strategies")]
    pub strategies: Vec<Strategy>,
}

fn unit_gain() -> Vec<f64> {
    vec![1.0]
}

fn qft_strategies() -> Vec<Strategy> {
    vec![Strategy::Ic, Strategy::Mbdr]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "per_decade")]
    pub grid_per_decade: usize,
    #[serde(default = "grid_min")]
    pub grid_min_rad_s: f64,
    /// Defaults to π / (N T).
    pub grid_max_rad_s: Option<f64>,
}

fn per_decade() -> usize {
    200
}

fn grid_min() -> f64 {
    1e-3
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec { grid_per_decade: per_decade(), grid_min_rad_s: grid_min(), grid_max_rad_s: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HPathSpec {
    pub leg_m: f64,
    pub width_m: f64,
    pub spacing_m: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UgvSpec {
    #[serde(default = "lookahead")]
    pub lookahead_m: f64,
    #[serde(default = "speed")]
    pub linear_speed_m_s: f64,
    #[serde(default = "wheel_radius")]
    pub wheel_radius_m: f64,
    #[serde(default = "track")]
    pub track_width_m: f64,
    pub h_path: Option<HPathSpec>,
    /// Explicit waypoints; used when no H path is given.
    pub waypoints: Option<Vec<[f64; 2]>>,
    #[serde(default = "left")]
    pub disturbed_wheel: Wheel,
    #[serde(default = "stop_radius")]
    pub stop_radius_m: f64,
    pub start: Option<Pose>,
}

fn lookahead() -> f64 {
    0.3
}
fn speed() -> f64 {
    0.02
}
fn wheel_radius() -> f64 {
    0.03
}
fn track() -> f64 {
    0.15
}
fn left() -> Wheel {
    Wheel::Left
}
fn stop_radius() -> f64 {
    0.05
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub scheme: SchemeSpec,
    pub plants: BTreeMap<String, TfSpec>,
    pub controllers: ControllerSpec,
    pub experiment: ExperimentSpec,
    pub qft: Option<QftSpec>,
    #[serde(default)]
    pub outputs: OutputSpec,
    pub ugv: Option<UgvSpec>,
}

/// Per-run choices layered over the file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunOptions {
    pub mpm: bool,
    /// Overrides the real plant by name.
    pub real_plant: Option<String>,
    pub disturbance: bool,
    pub nonlinear: bool,
    pub gain: Option<f64>,
}

impl ScenarioFile {
    /// Parses and validates; errors name the offending key.
    pub fn parse(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| Error::Scenario(e.to_string()))?;
        let file: ScenarioFile = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::Scenario(format!("at `{path}`: {}", e.into_inner().message().trim()))
        })?;
        file.validate()?;
        Ok(file)
    }

    pub fn load(path: &FsPath) -> Result<(Self, String)> {
        let text = std::fs::read_to_string(path)?;
        Ok((Self::parse(&text)?, text))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: &str| Err(Error::Scenario(format!("at `{key}`: {msg}")));
        if !(self.scheme.period_s > 0.0 && self.scheme.period_s.is_finite()) {
            return bad("scheme.period_s", "must be positive");
        }
        if self.scheme.n < 1 {
            return bad("scheme.n", "must be at least 1");
        }
        if self.scheme.substeps == Some(0) {
            return bad("scheme.substeps", "must be at least 1");
        }
        for (name, p) in &self.plants {
            p.to_tf(self.scheme.period_s).map_err(|e| Error::Scenario(format!("at `plants.{name}`: {e}")))?;
        }
        let mut selections = vec![("experiment.plants", &self.experiment.plants)];
        if let Some(m) = &self.experiment.mpm {
            selections.push(("experiment.mpm", m));
        }
        for (key, s) in selections {
            for (field, name) in [("model", &s.model), ("real", &s.real)] {
                if !self.plants.contains_key(name) {
                    return bad(&format!("{key}.{field}"), &format!("unknown plant `{name}`"));
                }
            }
        }
        match (&self.controllers.pid, &self.controllers.fast) {
            (Some(_), Some(_)) => return bad("controllers", "give either `pid` or `fast`, not both"),
            (None, None) => return bad("controllers", "one of `pid` or `fast` is required"),
            _ => {}
        }
        if let Some(p) = &self.controllers.ic.pattern {
            if p.len() != self.scheme.n || !p.iter().any(|b| *b) {
                return bad("controllers.ic.pattern", "needs N entries with at least one `true`");
            }
        }
        let horizons = [Some(self.experiment.horizon_s), self.experiment.disturbance.as_ref().and_then(|d| d.horizon_s)];
        for h in horizons.into_iter().flatten() {
            if h < 20.0 * self.metaperiod() * (1.0 - 1e-12) {
                return bad("experiment.horizon_s", "must cover at least 20 metaperiods");
            }
        }
        if self.experiment.strategies.is_empty() {
            return bad("experiment.strategies", "must not be empty");
        }
        if let Some(q) = &self.qft {
            if !(q.mu > 0.0 && q.mu < 2.0) {
                return bad("qft.mu", "must lie in (0, 2)");
            }
            if q.gains.iter().any(|g| !(*g > 0.0)) {
                return bad("qft.gains", "must be positive");
            }
        }
        if self.outputs.grid_per_decade == 0 || !(self.outputs.grid_min_rad_s > 0.0) {
            return bad("outputs", "grid needs a positive minimum and points per decade");
        }
        if let Some(u) = &self.ugv {
            if u.h_path.is_none() && u.waypoints.as_ref().is_none_or(|w| w.is_empty()) {
                return bad("ugv", "give `h_path` or non-empty `waypoints`");
            }
            if !(u.lookahead_m > 0.0 && u.linear_speed_m_s > 0.0 && u.wheel_radius_m > 0.0 && u.track_width_m > 0.0) {
                return bad("ugv", "look-ahead, speed, wheel radius and track must be positive");
            }
        }
        Ok(())
    }

    pub fn metaperiod(&self) -> f64 {
        self.scheme.period_s * self.scheme.n as f64
    }

    pub fn plant(&self, name: &str) -> Result<TransferFunction> {
        self.plants
            .get(name)
            .ok_or_else(|| Error::Scenario(format!("unknown plant `{name}`")))?
            .to_tf(self.scheme.period_s)
    }

    pub fn selection(&self, opts: &RunOptions) -> Result<PlantSelection> {
        let mut s = if opts.mpm {
            self.experiment.mpm.clone().ok_or_else(|| Error::Scenario("file declares no `experiment.mpm` selection".into()))?
        } else {
            self.experiment.plants.clone()
        };
        if let Some(r) = &opts.real_plant {
            if !self.plants.contains_key(r) {
                return Err(Error::Scenario(format!("unknown plant `{r}`")));
            }
            s.real = r.clone();
        }
        Ok(s)
    }

    pub fn pid(&self) -> Option<PidParameters> {
        self.controllers.pid.as_ref().map(|p| PidParameters {
            kp: p.kp,
            td: p.td_s,
            ti: p.ti_s.unwrap_or(f64::INFINITY),
            period: self.scheme.period_s,
        })
    }

    /// Fast controller G_R^T.
    pub fn fast_controller(&self) -> Result<TransferFunction> {
        match (&self.pid(), &self.controllers.fast) {
            (Some(p), _) => pid_discretize(p),
            (None, Some(f)) => zoh_tf(&f.to_tf(self.scheme.period_s)?, self.scheme.period_s),
            (None, None) => Err(Error::Scenario("no fast controller".into())),
        }
    }

    /// Closed-loop target M for the MBDR design.
    pub fn target(&self, model: &TransferFunction) -> Result<TransferFunction> {
        if let Some(m) = &self.controllers.mbdr.target {
            return m.to_tf(self.scheme.period_s);
        }
        match (model.domain(), self.pid()) {
            (Domain::S, Some(p)) => {
                let (n, d) = p.continuous_polys();
                closed_loop_target(&n, &d, model)
            }
            _ => {
                let gr = self.fast_controller()?;
                let gp = zoh_tf(model, self.scheme.period_s)?;
                closed_loop_target(gr.num(), gr.den(), &gp)
            }
        }
    }

    /// Builds the loop setup with IC and MBDR attached.
    pub fn setup(&self, opts: &RunOptions) -> Result<LoopSetup> {
        let sel = self.selection(opts)?;
        let (model, real) = (self.plant(&sel.model)?, self.plant(&sel.real)?);
        let t = self.scheme.period_s;
        let n = self.scheme.n;
        let substeps = self.scheme.substeps.unwrap_or(match real.domain() {
            Domain::S => 10,
            Domain::Z { .. } => 1,
        });
        let gr = self.fast_controller()?;
        let pattern = self.controllers.ic.pattern.clone().map(SampleAvailabilityPattern::new).transpose()?;
        let ic = build_ic(&gr, &model, n, pattern)?;
        let gp_t = zoh_tf(&model, t)?;
        let mbdr = design_mbdr(&self.target(&model)?, &gp_t, &gr, n, self.controllers.mbdr.variant)?;
        let rate = self.experiment.disturbance.as_ref().map_or(DisturbanceRate::N3, |d| d.rate);
        Ok(LoopSetup::new(t, n, substeps, &real, &gr)?
            .with_ic(ic)?
            .with_mbdr(mbdr)?
            .with_gain(opts.gain.unwrap_or(1.0))
            .with_disturbance_rate(rate))
    }

    fn disturbance(&self, opts: &RunOptions) -> Result<Option<&DisturbanceSpec>> {
        match &self.experiment.disturbance {
            Some(d) if opts.disturbance || d.enabled => Ok(Some(d)),
            None if opts.disturbance => Err(Error::Scenario("file declares no `experiment.disturbance`".into())),
            _ => Ok(None),
        }
    }

    fn nonlinearity(&self, opts: &RunOptions) -> Option<Nonlinearity> {
        let n = &self.experiment.nonlinearity;
        (opts.nonlinear || n.enabled).then_some(Nonlinearity { dead_zone: n.dead_zone_v, saturation: n.saturation_v })
    }

    /// One simulation scenario per configured strategy.
    pub fn scenarios(&self, opts: &RunOptions, strategies: &[Strategy]) -> Result<Vec<Scenario>> {
        let setup = self.setup(opts)?;
        let dist = self.disturbance(opts)?;
        let horizon = dist.and_then(|d| d.horizon_s).unwrap_or(self.experiment.horizon_s);
        Ok(strategies
            .iter()
            .map(|s| Scenario {
                setup: setup.clone(),
                strategy: *s,
                step: self.experiment.step,
                disturbance: dist.map(|d| d.sinusoid()),
                horizon,
                nonlinearity: self.nonlinearity(opts),
                ic_correction: self.controllers.ic.correction,
            })
            .collect())
    }

    pub fn qft_specification(&self) -> Result<QftSpecification> {
        let q = self.qft.as_ref().ok_or_else(|| Error::Scenario("file has no `qft` section".into()))?;
        QftSpecification::new(q.mu, q.delta, default_check_frequencies(self.metaperiod(), &q.extra_frequencies_rad_s))
    }

    /// Bode grid from the outputs section; `per_decade` overrides the density.
    pub fn grid(&self, per_decade: Option<usize>) -> Vec<f64> {
        let hi = self.outputs.grid_max_rad_s.unwrap_or(std::f64::consts::PI / self.metaperiod());
        log_grid(self.outputs.grid_min_rad_s, hi, per_decade.unwrap_or(self.outputs.grid_per_decade))
    }

    pub fn ugv_scenario(&self, opts: &RunOptions, strategy: Strategy) -> Result<UgvScenario> {
        let u = self.ugv.as_ref().ok_or_else(|| Error::Scenario("file has no `ugv` section".into()))?;
        let path = match (&u.h_path, &u.waypoints) {
            (Some(h), _) => h_path(h.leg_m, h.width_m, h.spacing_m)?,
            (None, Some(w)) => w.clone(),
            (None, None) => return Err(Error::Scenario("no path".into())),
        };
        let dist = self.disturbance(opts)?;
        Ok(UgvScenario {
            path,
            lookahead: u.lookahead_m,
            linear_speed: u.linear_speed_m_s,
            wheel_radius: u.wheel_radius_m,
            track_width: u.track_width_m,
            setup: self.setup(opts)?,
            strategy,
            disturbance: dist.map(|d| d.sinusoid()),
            disturbed_wheel: u.disturbed_wheel,
            nonlinearity: self.nonlinearity(opts),
            horizon: dist.and_then(|d| d.horizon_s).unwrap_or(self.experiment.horizon_s),
            start: u.start,
            stop_radius: u.stop_radius_m,
        })
    }
}
