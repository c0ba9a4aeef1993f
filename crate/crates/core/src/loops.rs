//! Lifted closed loops for the fast single-rate, IC and MBDR strategies.

use std::ops::Range;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::controllers::{IcLoop, MbdrController};
use crate::error::{Error, Result};
use crate::interconnect::{Network, Signal};
use crate::lifting::{lift_digital, lift_zoh_plant, DualRateScheme, LiftKind, LiftedRealization};
use crate::lti::{zoh_discretize, zoh_tf, DiscreteStateSpace, Domain, Mat, TransferFunction};

pub const STABILITY_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    FastSr,
    Ic,
    Mbdr,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::FastSr, Strategy::Ic, Strategy::Mbdr];

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::FastSr => "fast_sr",
            Strategy::Ic => "ic",
            Strategy::Mbdr => "mbdr",
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    YvsR,
    YvsD,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputRate {
    /// One output per metaperiod (the real measurement instant).
    N1Slots,
    /// Every fine intersample instant.
    N3Slots,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisturbanceRate {
    /// Held over the metaperiod.
    N1,
    /// Sampled at every fine instant.
    N3,
}

/// Everything needed to build or simulate one of the three loops.
#[derive(Clone, Debug)]
pub struct LoopSetup {
    /// Control period T.
    pub period: f64,
    /// Measurement multiplicity: real samples every N T.
    pub n: usize,
    /// Fine steps per T for intersample output (T3 = T / substeps).
    pub substeps: usize,
    /// Real plant ZOH-discretized at T / substeps.
    pub real: DiscreteStateSpace,
    /// Fast controller G_R^T.
    pub controller: TransferFunction,
    pub ic: Option<IcLoop>,
    pub mbdr: Option<MbdrController>,
    /// Extra gain on the actuator command (gain scans).
    pub gain: f64,
    pub disturbance_rate: DisturbanceRate,
}

impl LoopSetup {
    pub fn new(period: f64, n: usize, substeps: usize, real: &TransferFunction, controller: &TransferFunction) -> Result<Self> {
        if n < 1 || substeps < 1 {
            return Err(Error::InvalidSystem("N and substeps must be at least 1".into()));
        }
        let real = match real.domain() {
            Domain::S => zoh_discretize(real, period / substeps as f64)?,
            Domain::Z { .. } => {
                if substeps != 1 {
                    return Err(Error::InvalidSystem("a discrete plant has no intersample output; use substeps = 1".into()));
                }
                zoh_tf(real, period)?.to_ss()?
            }
        };
        if real.d.iter().any(|v| *v != 0.0) {
            return Err(Error::InvalidSystem("real plant must be strictly proper".into()));
        }
        let controller = zoh_tf(controller, period)?;
        Ok(LoopSetup {
            period,
            n,
            substeps,
            real,
            controller,
            ic: None,
            mbdr: None,
            gain: 1.0,
            disturbance_rate: DisturbanceRate::N3,
        })
    }

    pub fn with_ic(mut self, ic: IcLoop) -> Result<Self> {
        if ic.n != self.n {
            return Err(Error::Dimension(format!("IC loop has N = {}, setup has N = {}", ic.n, self.n)));
        }
        if (ic.model.period - self.period).abs() > 1e-12 * self.period {
            return Err(Error::PeriodMismatch(ic.model.period, self.period));
        }
        self.ic = Some(ic);
        Ok(self)
    }

    pub fn with_mbdr(mut self, m: MbdrController) -> Result<Self> {
        if m.n != self.n {
            return Err(Error::Dimension(format!("MBDR controller has N = {}, setup has N = {}", m.n, self.n)));
        }
        self.mbdr = Some(m);
        Ok(self)
    }

    pub fn with_gain(mut self, g: f64) -> Self {
        self.gain = g;
        self
    }

    pub fn with_disturbance_rate(mut self, r: DisturbanceRate) -> Self {
        self.disturbance_rate = r;
        self
    }

    pub fn fine_period(&self) -> f64 {
        self.period / self.substeps as f64
    }

    pub fn metaperiod(&self) -> f64 {
        self.period * self.n as f64
    }

    pub fn n_fine(&self) -> usize {
        self.n * self.substeps
    }

    pub fn n_disturbance(&self) -> usize {
        match self.disturbance_rate {
            DisturbanceRate::N1 => 1,
            DisturbanceRate::N3 => self.n_fine(),
        }
    }

    fn ic_loop(&self) -> Result<&IcLoop> {
        self.ic.as_ref().ok_or_else(|| Error::InvalidSystem("setup has no IC loop".into()))
    }

    fn mbdr_ctrl(&self) -> Result<&MbdrController> {
        self.mbdr.as_ref().ok_or_else(|| Error::InvalidSystem("setup has no MBDR controller".into()))
    }
}

type Terms = Vec<(Signal, f64)>;

/// Wires controller blocks for `strategy` over `n` T-slots. `meas(s)` is the real measurement at
/// T-slot s, `reference(s)` the reference. Returns the actuator command per slot.
fn wire_controller(
    net: &mut Network,
    setup: &LoopSetup,
    strategy: Strategy,
    n: usize,
    plant: crate::interconnect::BlockId,
    meas: &dyn Fn(usize) -> Terms,
    reference: &dyn Fn(usize) -> Terms,
) -> Result<()> {
    let t = setup.period;
    let fast = DualRateScheme::new(t, n, n)?;
    let feed = |net: &mut Network, terms: Terms, to, input, sign: f64| {
        for (s, g) in terms {
            net.wire(s, to, input, sign * g);
        }
    };
    let u: Vec<Signal> = match strategy {
        Strategy::FastSr | Strategy::Ic => {
            let c = net.add_block("controller", &lift_digital(&setup.controller.to_ss()?, &fast)?.ss)?;
            let model = if strategy == Strategy::Ic {
                let ic = setup.ic_loop()?;
                Some((net.add_block("model", &lift_zoh_plant(&ic.model, &fast)?.ss)?, ic.pattern.clone()))
            } else {
                None
            };
            for s in 0..n {
                feed(net, reference(s), c, s, 1.0);
                match &model {
                    Some((m, pattern)) if !pattern.available(s) => net.wire(Signal::Block(*m, s), c, s, -1.0),
                    _ => feed(net, meas(s), c, s, -1.0),
                }
                if let Some((m, _)) = &model {
                    net.wire(Signal::Block(c, s), *m, s, setup.gain);
                }
            }
            (0..n).map(|s| Signal::Block(c, s)).collect()
        }
        Strategy::Mbdr => {
            let m = setup.mbdr_ctrl()?;
            let g1 = net.add_block("slow", &lift_digital(&m.slow_part.to_ss()?, &DualRateScheme::new(t, 1, n)?)?.ss)?;
            let h = net.add_block("hold", &lift_digital(&m.hold.to_ss()?, &fast)?.ss)?;
            let g2 = net.add_block("fast", &lift_digital(&m.fast_part.to_ss()?, &fast)?.ss)?;
            feed(net, reference(0), g1, 0, 1.0);
            feed(net, meas(0), g1, 0, -1.0);
            for s in 0..n {
                net.wire(Signal::Block(g1, s), h, s, 1.0);
                net.wire(Signal::Block(h, s), g2, s, 1.0);
            }
            (0..n).map(|s| Signal::Block(g2, s)).collect()
        }
    };
    for (s, sig) in u.iter().enumerate() {
        net.wire(*sig, plant, s, setup.gain);
    }
    net.add_output(u.iter().map(|s| (*s, setup.gain)).collect());
    Ok(())
}

/// Closed loop at the metaperiod with inputs [r (N); d] and outputs [y fine (N·sub); y slow (1); u (N)].
#[derive(Clone, Debug)]
pub struct LiftedClosedLoop {
    pub full: DiscreteStateSpace,
    pub strategy: Strategy,
    pub channel: Channel,
    pub output_rate: OutputRate,
    pub n: usize,
    pub substeps: usize,
    pub n_disturbance: usize,
}

fn select(ss: &DiscreteStateSpace, rows: Range<usize>, cols: Range<usize>) -> Result<DiscreteStateSpace> {
    let (r0, nr) = (rows.start, rows.len());
    let (c0, nc) = (cols.start, cols.len());
    DiscreteStateSpace::new(
        ss.a.clone(),
        ss.b.columns(c0, nc).into_owned(),
        ss.c.rows(r0, nr).into_owned(),
        ss.d.view((r0, c0), (nr, nc)).into_owned(),
        ss.period,
    )
}

impl LiftedClosedLoop {
    pub fn metaperiod(&self) -> f64 {
        self.full.period
    }

    pub fn input_range(&self, channel: Channel) -> Range<usize> {
        match channel {
            Channel::YvsR => 0..self.n,
            Channel::YvsD => self.n..self.n + self.n_disturbance,
        }
    }

    pub fn output_range(&self, rate: OutputRate) -> Range<usize> {
        let nf = self.n * self.substeps;
        match rate {
            OutputRate::N3Slots => 0..nf,
            OutputRate::N1Slots => nf..nf + 1,
        }
    }

    pub fn control_range(&self) -> Range<usize> {
        let nf = self.n * self.substeps;
        nf + 1..nf + 1 + self.n
    }

    /// Lifted realization of a channel/output-rate pair.
    pub fn view(&self, channel: Channel, rate: OutputRate) -> Result<LiftedRealization> {
        let ins = self.input_range(channel);
        let outs = self.output_range(rate);
        let (n_u, n_y) = (ins.len(), outs.len());
        let slots = crate::lifting::lcm(n_u, n_y);
        Ok(LiftedRealization {
            ss: select(&self.full, outs, ins)?,
            scheme: DualRateScheme::new(self.metaperiod() / slots as f64, n_u, n_y)?,
            kind: LiftKind::Interconnected,
            channels_in: 1,
            channels_out: 1,
        })
    }

    /// The view selected by this loop's own channel and output rate.
    pub fn realization(&self) -> Result<LiftedRealization> {
        self.view(self.channel, self.output_rate)
    }

    pub fn with_view(mut self, channel: Channel, rate: OutputRate) -> Self {
        self.channel = channel;
        self.output_rate = rate;
        self
    }

    /// Steady-state slow-rate output for unit r on every slot.
    pub fn dc_gain(&self) -> Result<f64> {
        let v = self.view(Channel::YvsR, OutputRate::N1Slots)?;
        let g = v.ss.eval_z(Complex64::new(1.0, 0.0), &v.ss.poles(), 0.0)?;
        Ok(g.row(0).iter().map(|c| c.re).sum())
    }

    /// Simulates the full realization; inputs are stacked [r; d] per metaperiod.
    pub fn simulate(&self, stacked: &[DVector<f64>]) -> Vec<DVector<f64>> {
        self.full.simulate(&DVector::zeros(self.full.n_states()), stacked)
    }
}

pub fn assemble(setup: &LoopSetup, strategy: Strategy, channel: Channel, rate: OutputRate) -> Result<LiftedClosedLoop> {
    let (n, sub) = (setup.n, setup.substeps);
    let nf = setup.n_fine();
    let nd = setup.n_disturbance();
    let mut net = Network::new(setup.metaperiod(), n + nd);
    let plant = net.add_block("plant", &lift_zoh_plant(&setup.real, &DualRateScheme::new(setup.fine_period(), n, nf)?)?.ss)?;
    let dist = |j: usize| match setup.disturbance_rate {
        DisturbanceRate::N1 => Signal::External(n),
        DisturbanceRate::N3 => Signal::External(n + j),
    };
    let y_fine = |j: usize| vec![(Signal::Block(plant, j), 1.0), (dist(j), 1.0)];
    for j in 0..nf {
        net.add_output(y_fine(j));
    }
    net.add_output(y_fine(0));
    let meas = |s: usize| y_fine(s * sub);
    let reference = |s: usize| vec![(Signal::External(s), 1.0)];
    wire_controller(&mut net, setup, strategy, n, plant, &meas, &reference)?;
    Ok(LiftedClosedLoop {
        full: net.build()?,
        strategy,
        channel,
        output_rate: rate,
        n,
        substeps: sub,
        n_disturbance: nd,
    })
}

pub fn assemble_fast(setup: &LoopSetup) -> Result<LiftedClosedLoop> {
    assemble(setup, Strategy::FastSr, Channel::YvsR, OutputRate::N1Slots)
}

pub fn assemble_ic(setup: &LoopSetup) -> Result<LiftedClosedLoop> {
    assemble(setup, Strategy::Ic, Channel::YvsR, OutputRate::N1Slots)
}

pub fn assemble_mbdr(setup: &LoopSetup) -> Result<LiftedClosedLoop> {
    assemble(setup, Strategy::Mbdr, Channel::YvsR, OutputRate::N1Slots)
}

pub fn assemble_disturbance(setup: &LoopSetup, strategy: Strategy) -> Result<LiftedClosedLoop> {
    assemble(setup, strategy, Channel::YvsD, OutputRate::N3Slots)
}

#[derive(Clone, Debug, Serialize)]
pub struct StabilityReport {
    pub spectral_radius: f64,
    pub stable: bool,
    /// Eigenvalues within 1% of the spectral radius.
    pub margin_eigenvalues: Vec<(f64, f64)>,
}

pub fn stability_of(a: &Mat) -> StabilityReport {
    let eig: Vec<Complex64> = if a.nrows() == 0 { vec![] } else { a.complex_eigenvalues().iter().copied().collect() };
    let rho = eig.iter().fold(0.0_f64, |m, e| m.max(e.norm()));
    let mut top: Vec<_> = eig.iter().filter(|e| e.norm() >= 0.99 * rho && rho > 0.0).map(|e| (e.re, e.im)).collect();
    top.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.total_cmp(&a.1)));
    StabilityReport { spectral_radius: rho, stable: rho < 1.0 - STABILITY_TOL, margin_eigenvalues: top }
}

pub fn stability(lcl: &LiftedClosedLoop) -> StabilityReport {
    stability_of(&lcl.full.a)
}

/// Loop broken at the real-measurement sampler: input w replaces the measured output at the
/// (single) real sample of each metaperiod, outputs are the real plant output at every T-slot.
/// The fast loop is cut at every T, so its realization runs at T with one slot.
pub fn open_loop(setup: &LoopSetup, strategy: Strategy) -> Result<LiftedRealization> {
    let n = if strategy == Strategy::FastSr { 1 } else { setup.n };
    let cut = match strategy {
        Strategy::FastSr | Strategy::Mbdr => 0,
        Strategy::Ic => {
            let p = &setup.ic_loop()?.pattern;
            if p.count() != 1 {
                return Err(Error::InvalidSystem("loop cut needs exactly one real sample per metaperiod".into()));
            }
            p.slots().iter().position(|s| *s).unwrap_or(0)
        }
    };
    let sub = setup.substeps;
    let mut net = Network::new(setup.period * n as f64, 1);
    let plant = net.add_block("plant", &lift_zoh_plant(&setup.real, &DualRateScheme::new(setup.fine_period(), n, n * sub)?)?.ss)?;
    for s in 0..n {
        net.add_output(vec![(Signal::Block(plant, s * sub), 1.0)]);
    }
    let meas = |s: usize| if s == cut { vec![(Signal::External(0), 1.0)] } else { vec![] };
    let none = |_: usize| vec![];
    wire_controller(&mut net, setup, strategy, n, plant, &meas, &none)?;
    let full = net.build()?;
    let ss = select(&full, 0..n, 0..1)?;
    Ok(LiftedRealization {
        ss,
        scheme: DualRateScheme::new(setup.period, 1, n)?,
        kind: LiftKind::Interconnected,
        channels_in: 1,
        channels_out: 1,
    })
}
