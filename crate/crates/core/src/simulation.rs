//! Time-domain engine for the three loops at the fine (intersample) rate.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loops::{LiftedClosedLoop, LoopSetup, Strategy, DisturbanceRate};
use crate::lti::{DiscreteStateSpace, SampledSignal};

pub const DIVERGENCE_LIMIT: f64 = 1e9;

/// Dead zone followed by saturation on the actuator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Nonlinearity {
    pub dead_zone: f64,
    pub saturation: f64,
}

impl Default for Nonlinearity {
    fn default() -> Self {
        Nonlinearity { dead_zone: 0.05, saturation: 11.1 }
    }
}

impl Nonlinearity {
    pub fn apply(&self, u: f64) -> f64 {
        let v = if u.abs() <= self.dead_zone { 0.0 } else { u - self.dead_zone * u.signum() };
        v.clamp(-self.saturation, self.saturation)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sinusoid {
    pub amplitude: f64,
    pub omega: f64,
    #[serde(default)]
    pub phase: f64,
}

impl Sinusoid {
    pub fn at(&self, t: f64) -> f64 {
        self.amplitude * (self.omega * t + self.phase).sin()
    }
}

/// SISO block with its own state.
#[derive(Clone, Debug)]
struct Block {
    ss: DiscreteStateSpace,
    x: DVector<f64>,
}

impl Block {
    fn new(ss: &DiscreteStateSpace) -> Self {
        Block { x: DVector::zeros(ss.n_states()), ss: ss.clone() }
    }

    fn out(&self, u: f64) -> f64 {
        (self.ss.c.row(0) * &self.x)[0] + self.ss.d[(0, 0)] * u
    }

    fn update(&mut self, u: f64) {
        if self.ss.n_states() > 0 {
            self.x = &self.ss.a * &self.x + self.ss.b.column(0) * u;
        }
    }
}

/// One fine step of a loop.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FineSample {
    pub t: f64,
    /// Plant output plus output disturbance.
    pub y: f64,
    /// Actuator command before any nonlinearity.
    pub u: f64,
    pub u_applied: f64,
    /// Value the controller used as feedback if this is a control instant.
    pub feedback: Option<f64>,
    pub real_read: bool,
}

/// Steps a fast-SR, IC or MBDR loop at T / substeps.
#[derive(Clone, Debug)]
pub struct LoopRunner {
    strategy: Strategy,
    n: usize,
    substeps: usize,
    h: f64,
    gain: f64,
    plant: Block,
    ctrl: Option<Block>,
    model: Option<Block>,
    pattern: Vec<bool>,
    slow: Option<Block>,
    hold: Option<Block>,
    fast: Option<Block>,
    nonlinearity: Option<Nonlinearity>,
    ic_correction: bool,
    bias: f64,
    k: usize,
    u: f64,
    reads: usize,
}

impl LoopRunner {
    pub fn new(setup: &LoopSetup, strategy: Strategy, nonlinearity: Option<Nonlinearity>, ic_correction: bool) -> Result<Self> {
        let mut r = LoopRunner {
            strategy,
            n: setup.n,
            substeps: setup.substeps,
            h: setup.fine_period(),
            gain: setup.gain,
            plant: Block::new(&setup.real),
            ctrl: None,
            model: None,
            pattern: vec![true; setup.n],
            slow: None,
            hold: None,
            fast: None,
            nonlinearity,
            ic_correction,
            bias: 0.0,
            k: 0,
            u: 0.0,
            reads: 0,
        };
        match strategy {
            Strategy::FastSr => r.ctrl = Some(Block::new(&setup.controller.to_ss()?)),
            Strategy::Ic => {
                let ic = setup.ic.as_ref().ok_or_else(|| Error::InvalidSystem("setup has no IC loop".into()))?;
                r.ctrl = Some(Block::new(&ic.controller.to_ss()?));
                r.model = Some(Block::new(&ic.model));
                r.pattern = ic.pattern.slots().to_vec();
            }
            Strategy::Mbdr => {
                let m = setup.mbdr.as_ref().ok_or_else(|| Error::InvalidSystem("setup has no MBDR controller".into()))?;
                r.slow = Some(Block::new(&m.slow_part.to_ss()?));
                r.hold = Some(Block::new(&m.hold.to_ss()?));
                r.fast = Some(Block::new(&m.fast_part.to_ss()?));
            }
        }
        Ok(r)
    }

    pub fn time(&self) -> f64 {
        self.k as f64 * self.h
    }

    pub fn step_index(&self) -> usize {
        self.k
    }

    /// Number of real-sensor samples taken so far.
    pub fn sensor_reads(&self) -> usize {
        self.reads
    }

    pub fn is_control_instant(&self) -> bool {
        self.k % self.substeps == 0
    }

    /// Advances one fine step with reference `r` (used at control instants) and disturbance `d`.
    pub fn advance(&mut self, r: f64, d: f64) -> FineSample {
        let t = self.time();
        let y = self.plant.out(0.0) + d;
        let mut feedback = None;
        let mut real_read = false;
        if self.k % self.substeps == 0 {
            let slot = (self.k / self.substeps) % self.n;
            match self.strategy {
                Strategy::FastSr => {
                    real_read = true;
                    let c = self.ctrl.as_mut().unwrap();
                    let e = r - y;
                    self.u = self.gain * c.out(e);
                    c.update(e);
                    feedback = Some(y);
                }
                Strategy::Ic => {
                    let model = self.model.as_mut().unwrap();
                    let predicted = model.out(0.0);
                    let fb = if self.pattern[slot] {
                        real_read = true;
                        if self.ic_correction {
                            self.bias = y - predicted;
                        }
                        y
                    } else {
                        predicted + self.bias
                    };
                    let c = self.ctrl.as_mut().unwrap();
                    let e = r - fb;
                    self.u = self.gain * c.out(e);
                    c.update(e);
                    model.update(self.u);
                    feedback = Some(fb);
                }
                Strategy::Mbdr => {
                    let mut expanded = 0.0;
                    if slot == 0 {
                        real_read = true;
                        let g1 = self.slow.as_mut().unwrap();
                        let e = r - y;
                        expanded = g1.out(e);
                        g1.update(e);
                        feedback = Some(y);
                    }
                    let h = self.hold.as_mut().unwrap();
                    let held = h.out(expanded);
                    h.update(expanded);
                    let g2 = self.fast.as_mut().unwrap();
                    self.u = self.gain * g2.out(held);
                    g2.update(held);
                }
            }
            if real_read {
                self.reads += 1;
            }
        }
        let u_applied = match &self.nonlinearity {
            Some(nl) => nl.apply(self.u),
            None => self.u,
        };
        self.plant.update(u_applied);
        self.k += 1;
        FineSample { t, y, u: self.u, u_applied, feedback, real_read }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct TimeSeries {
    pub t: Vec<f64>,
    pub r: Vec<f64>,
    pub y: Vec<f64>,
    pub u: Vec<f64>,
    pub d: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub setup: LoopSetup,
    pub strategy: Strategy,
    pub step: f64,
    pub disturbance: Option<Sinusoid>,
    pub horizon: f64,
    pub nonlinearity: Option<Nonlinearity>,
    pub ic_correction: bool,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if !(self.horizon >= 20.0 * self.setup.metaperiod() * (1.0 - 1e-12)) {
            return Err(Error::Scenario(format!(
                "horizon {} s is shorter than 20 metaperiods ({} s)",
                self.horizon,
                20.0 * self.setup.metaperiod()
            )));
        }
        Ok(())
    }

    pub fn disturbance_at(&self, t: f64) -> f64 {
        self.disturbance.map_or(0.0, |d| d.at(t))
    }
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub strategy: Strategy,
    /// Fine-rate series (T3).
    pub fine: TimeSeries,
    /// Output at the real-measurement instants (T1).
    pub slow_y: SampledSignal,
    /// Actuator command at the control instants (T2).
    pub control: SampledSignal,
    pub divergent_at: Option<f64>,
    pub sensor_reads: usize,
}

pub fn run(sc: &Scenario) -> Result<RunOutput> {
    sc.validate()?;
    let setup = &sc.setup;
    let mut runner = LoopRunner::new(setup, sc.strategy, sc.nonlinearity, sc.ic_correction)?;
    let steps = (sc.horizon / setup.fine_period()).round() as usize;
    let mut fine = TimeSeries::default();
    let mut slow = vec![];
    let mut ctrl = vec![];
    let mut divergent_at = None;
    let per_slow = setup.n_fine();
    for k in 0..steps {
        let t = runner.time();
        let d = match setup.disturbance_rate {
            DisturbanceRate::N3 => sc.disturbance_at(t),
            DisturbanceRate::N1 => sc.disturbance_at((k / per_slow * per_slow) as f64 * setup.fine_period()),
        };
        let s = runner.advance(sc.step, d);
        fine.t.push(s.t);
        fine.r.push(sc.step);
        fine.y.push(s.y);
        fine.u.push(s.u);
        fine.d.push(d);
        if k % per_slow == 0 {
            slow.push(s.y);
        }
        if k % setup.substeps == 0 {
            ctrl.push(s.u);
        }
        if !s.y.is_finite() || s.y.abs() > DIVERGENCE_LIMIT {
            divergent_at = Some(s.t);
            break;
        }
    }
    Ok(RunOutput {
        strategy: sc.strategy,
        fine,
        slow_y: SampledSignal::new(slow, setup.metaperiod(), 0.0)?,
        control: SampledSignal::new(ctrl, setup.period, 0.0)?,
        divergent_at,
        sensor_reads: runner.sensor_reads(),
    })
}

/// Runs independent scenarios in parallel; results keep input order.
pub fn run_batch(scenarios: &[Scenario]) -> Vec<Result<RunOutput>> {
    scenarios.par_iter().map(run).collect()
}

/// Fine-rate output of a lifted closed loop under a step on every reference slot and a disturbance.
pub fn run_lifted(lcl: &LiftedClosedLoop, step: f64, disturbance: &dyn Fn(f64) -> f64, metaperiods: usize) -> Vec<f64> {
    let (n, nf, nd) = (lcl.n, lcl.n * lcl.substeps, lcl.n_disturbance);
    let h = lcl.metaperiod() / nf as f64;
    let ins: Vec<DVector<f64>> = (0..metaperiods)
        .map(|k| {
            DVector::from_fn(n + nd, |i, _| {
                if i < n {
                    step
                } else if nd == 1 {
                    disturbance(k as f64 * lcl.metaperiod())
                } else {
                    disturbance((k * nf + i - n) as f64 * h)
                }
            })
        })
        .collect();
    lcl.simulate(&ins).iter().flat_map(|y| y.rows(0, nf).iter().copied().collect::<Vec<_>>()).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ResponseMetrics {
    pub settling_time_2pct: f64,
    pub overshoot_pct: f64,
    pub steady_state_error: f64,
    pub steady_oscillation_amplitude: f64,
    pub rms_error: f64,
}

/// Least-squares a sin(ωt) + b cos(ωt) + c.
pub fn fit_sinusoid(t: &[f64], y: &[f64], omega: f64) -> Option<(f64, f64, f64)> {
    let m = t.len();
    let x = DMatrix::from_fn(m, 3, |i, j| match j {
        0 => (omega * t[i]).sin(),
        1 => (omega * t[i]).cos(),
        _ => 1.0,
    });
    let yv = DVector::from_column_slice(y);
    let sol = (x.transpose() * &x).lu().solve(&(x.transpose() * yv))?;
    Some((sol[0], sol[1], sol[2]))
}

/// Metrics of a finite series; `omega` enables the sinusoid fit for the oscillation amplitude.
pub fn metrics(series: &TimeSeries, omega: Option<f64>) -> Result<ResponseMetrics> {
    let y = &series.y;
    if y.is_empty() {
        return Err(Error::Scenario("empty series".into()));
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite() || v.abs() > DIVERGENCE_LIMIT) {
        return Err(Error::Divergent(series.t[i]));
    }
    let fin = *y.last().unwrap();
    let band = 0.02 * fin.abs();
    let settling = match y.iter().rposition(|v| (v - fin).abs() > band) {
        Some(i) if i + 1 < y.len() => series.t[i + 1],
        Some(i) => series.t[i],
        None => 0.0,
    };
    let overshoot = if fin.abs() > 0.0 {
        let peak = if fin > 0.0 { y.iter().cloned().fold(f64::MIN, f64::max) } else { y.iter().cloned().fold(f64::MAX, f64::min) };
        (((peak - fin) / fin).max(0.0)) * 100.0
    } else {
        0.0
    };
    let r_last = series.r.last().copied().unwrap_or(0.0);
    let start = y.len() * 3 / 4;
    let amp = match omega.and_then(|w| fit_sinusoid(&series.t[start..], &y[start..], w)) {
        Some((a, b, _)) => (a * a + b * b).sqrt(),
        None => {
            let tail = &y[start..];
            let hi = tail.iter().cloned().fold(f64::MIN, f64::max);
            let lo = tail.iter().cloned().fold(f64::MAX, f64::min);
            (hi - lo) / 2.0
        }
    };
    let rms = (series.r.iter().zip(y).map(|(r, v)| (r - v).powi(2)).sum::<f64>() / y.len() as f64).sqrt();
    Ok(ResponseMetrics {
        settling_time_2pct: settling,
        overshoot_pct: overshoot,
        steady_state_error: r_last - fin,
        steady_oscillation_amplitude: amp,
        rms_error: rms,
    })
}
