//! Lifting of periodically sampled blocks to LTI realizations at the metaperiod.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lti::{DiscreteStateSpace, Mat, TransferFunction};

pub fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

pub fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}

/// Input/output multiplicities over one metaperiod on a common base period.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualRateScheme {
    pub base_period: f64,
    pub n_u: usize,
    pub n_y: usize,
}

impl DualRateScheme {
    pub fn new(base_period: f64, n_u: usize, n_y: usize) -> Result<Self> {
        if !(base_period.is_finite() && base_period > 0.0) {
            return Err(Error::InvalidPeriod(base_period));
        }
        if n_u == 0 || n_y == 0 {
            return Err(Error::Dimension("N_u and N_y must be at least 1".into()));
        }
        Ok(DualRateScheme { base_period, n_u, n_y })
    }

    /// Base periods per metaperiod.
    pub fn slots(&self) -> usize {
        lcm(self.n_u, self.n_y)
    }

    pub fn metaperiod(&self) -> f64 {
        self.slots() as f64 * self.base_period
    }

    pub fn input_spacing(&self) -> usize {
        self.slots() / self.n_u
    }

    pub fn output_spacing(&self) -> usize {
        self.slots() / self.n_y
    }

    pub fn t_u(&self) -> f64 {
        self.input_spacing() as f64 * self.base_period
    }

    pub fn t_y(&self) -> f64 {
        self.output_spacing() as f64 * self.base_period
    }

    pub fn is_coprime(&self) -> bool {
        gcd(self.n_u, self.n_y) == 1
    }

    pub fn omega_s(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.metaperiod()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LiftKind {
    ZohPlant,
    Digital,
    StitchedSwitch,
    Interconnected,
}

/// LTI realization at the metaperiod; inputs and outputs are stacked slot-major.
#[derive(Clone, Debug)]
pub struct LiftedRealization {
    pub ss: DiscreteStateSpace,
    pub scheme: DualRateScheme,
    pub kind: LiftKind,
    pub channels_in: usize,
    pub channels_out: usize,
}

impl LiftedRealization {
    pub fn inputs_per_metaperiod(&self) -> usize {
        self.scheme.n_u
    }

    pub fn outputs_per_metaperiod(&self) -> usize {
        self.scheme.n_y
    }

    /// Simulates the lifted system on stacked input vectors.
    pub fn simulate(&self, stacked: &[nalgebra::DVector<f64>]) -> Vec<nalgebra::DVector<f64>> {
        self.ss.simulate(&nalgebra::DVector::zeros(self.ss.n_states()), stacked)
    }
}

/// Which T-slots of a metaperiod carry a real measurement.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleAvailabilityPattern {
    slots: Vec<bool>,
}

impl SampleAvailabilityPattern {
    pub fn new(slots: Vec<bool>) -> Result<Self> {
        if !slots.iter().any(|s| *s) {
            return Err(Error::InvalidSystem("availability pattern needs at least one true slot".into()));
        }
        Ok(SampleAvailabilityPattern { slots })
    }

    /// [true, false, ..., false]
    pub fn first_of(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidSystem("empty availability pattern".into()));
        }
        Self::new((0..n).map(|i| i == 0).collect())
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn available(&self, slot: usize) -> bool {
        self.slots[slot % self.slots.len()]
    }

    pub fn slots(&self) -> &[bool] {
        &self.slots
    }

    pub fn count(&self) -> usize {
        self.slots.iter().filter(|s| **s).count()
    }
}

fn period_ratio(period: f64, base: f64) -> Option<usize> {
    let r = period / base;
    let k = r.round();
    if k >= 1.0 && (r - k).abs() <= 1e-9 * k {
        Some(k as usize)
    } else {
        None
    }
}

/// Slot recursion shared by the ZOH and digital lifts. `every` is the block period in base slots.
fn lift_slots(sys: &DiscreteStateSpace, scheme: &DualRateScheme, hold: bool, every: usize) -> Result<DiscreteStateSpace> {
    let (n, m, p) = (sys.n_states(), sys.n_inputs(), sys.n_outputs());
    let slots = scheme.slots();
    let (isp, osp) = (scheme.input_spacing(), scheme.output_spacing());
    let mut a_s = Mat::identity(n, n);
    let mut b_s = Mat::zeros(n, m * scheme.n_u);
    let mut c_l = Mat::zeros(p * scheme.n_y, n);
    let mut d_l = Mat::zeros(p * scheme.n_y, m * scheme.n_u);
    for s in 0..slots {
        let mut sel = Mat::zeros(m, m * scheme.n_u);
        if hold || s % isp == 0 {
            let blk = s / isp;
            sel.view_mut((0, blk * m), (m, m)).fill_with_identity();
        }
        let active = s % every == 0;
        if s % osp == 0 && active {
            let q = s / osp;
            c_l.view_mut((q * p, 0), (p, n)).copy_from(&(&sys.c * &a_s));
            d_l.view_mut((q * p, 0), (p, m * scheme.n_u)).copy_from(&(&sys.c * &b_s + &sys.d * &sel));
        }
        if active {
            b_s = &sys.a * &b_s + &sys.b * &sel;
            a_s = &sys.a * &a_s;
        }
    }
    DiscreteStateSpace::new(a_s, b_s, c_l, d_l, scheme.metaperiod())
}

/// Lifts a strictly proper plant at the base period whose input is held between updates.
pub fn lift_zoh_plant(plant: &DiscreteStateSpace, scheme: &DualRateScheme) -> Result<LiftedRealization> {
    if plant.d.iter().any(|v| *v != 0.0) {
        return Err(Error::InvalidSystem("ZOH plant must be strictly proper (D = 0)".into()));
    }
    if period_ratio(plant.period, scheme.base_period) != Some(1) {
        return Err(Error::PeriodMismatch(plant.period, scheme.base_period));
    }
    Ok(LiftedRealization {
        ss: lift_slots(plant, scheme, true, 1)?,
        scheme: *scheme,
        kind: LiftKind::ZohPlant,
        channels_in: plant.n_inputs(),
        channels_out: plant.n_outputs(),
    })
}

/// Lifts a digital block with impulsive input: slots between input updates carry zero.
/// A block whose period is k base periods behaves as G(z^k): it updates every k slots
/// and its output is zero in between.
pub fn lift_digital(ctrl: &DiscreteStateSpace, scheme: &DualRateScheme) -> Result<LiftedRealization> {
    let k = period_ratio(ctrl.period, scheme.base_period).ok_or(Error::PeriodMismatch(ctrl.period, scheme.base_period))?;
    if scheme.input_spacing() % k != 0 {
        return Err(Error::PeriodMismatch(ctrl.period, scheme.t_u()));
    }
    Ok(LiftedRealization {
        ss: lift_slots(ctrl, scheme, false, k)?,
        scheme: *scheme,
        kind: LiftKind::Digital,
        channels_in: ctrl.n_inputs(),
        channels_out: ctrl.n_outputs(),
    })
}

/// Real/model switch: both systems run on the same held input; each output slot is taken
/// from the real system where the pattern is true and from the model elsewhere.
pub fn stitch_switch(
    real: &DiscreteStateSpace,
    model: &DiscreteStateSpace,
    n: usize,
    pattern: &SampleAvailabilityPattern,
) -> Result<LiftedRealization> {
    if pattern.is_empty() || pattern.len() != n {
        return Err(Error::Dimension(format!("pattern length {} does not match N = {n}", pattern.len())));
    }
    if real.n_inputs() != model.n_inputs() || real.n_outputs() != model.n_outputs() {
        return Err(Error::Dimension("real and model systems have different input/output counts".into()));
    }
    if period_ratio(real.period, model.period) != Some(1) {
        return Err(Error::PeriodMismatch(real.period, model.period));
    }
    let scheme = DualRateScheme::new(real.period, n, n)?;
    let lr = lift_zoh_plant(real, &scheme)?;
    let lm = lift_zoh_plant(model, &scheme)?;
    let (nr, nm, p) = (real.n_states(), model.n_states(), real.n_outputs());
    let mut a = Mat::zeros(nr + nm, nr + nm);
    a.view_mut((0, 0), (nr, nr)).copy_from(&lr.ss.a);
    a.view_mut((nr, nr), (nm, nm)).copy_from(&lm.ss.a);
    let cols = lr.ss.b.ncols();
    let mut b = Mat::zeros(nr + nm, cols);
    b.view_mut((0, 0), (nr, cols)).copy_from(&lr.ss.b);
    b.view_mut((nr, 0), (nm, cols)).copy_from(&lm.ss.b);
    let mut c = Mat::zeros(p * n, nr + nm);
    let mut d = Mat::zeros(p * n, cols);
    for q in 0..n {
        if pattern.available(q) {
            c.view_mut((q * p, 0), (p, nr)).copy_from(&lr.ss.c.rows(q * p, p));
            d.rows_mut(q * p, p).copy_from(&lr.ss.d.rows(q * p, p));
        } else {
            c.view_mut((q * p, nr), (p, nm)).copy_from(&lm.ss.c.rows(q * p, p));
            d.rows_mut(q * p, p).copy_from(&lm.ss.d.rows(q * p, p));
        }
    }
    Ok(LiftedRealization {
        ss: DiscreteStateSpace::new(a, b, c, d, scheme.metaperiod())?,
        scheme,
        kind: LiftKind::StitchedSwitch,
        channels_in: real.n_inputs(),
        channels_out: p,
    })
}

/// Transfer matrix at the metaperiod: entry (i, j) maps input slot j to output slot i.
pub fn lifted_tf_matrix(lr: &LiftedRealization) -> Result<Vec<Vec<TransferFunction>>> {
    lr.ss.to_tf_matrix()
}
