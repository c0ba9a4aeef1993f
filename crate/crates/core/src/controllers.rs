//! Controller synthesis: PID discretization, dual-rate hold, MBDR design and IC setup.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lifting::SampleAvailabilityPattern;
use crate::lti::{d2c_approx, zoh_discretize, zoh_tf, DiscreteStateSpace, Domain, TransferFunction};
use crate::poly;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PidParameters {
    pub kp: f64,
    pub td: f64,
    /// Integral time; `f64::INFINITY` disables integral action.
    pub ti: f64,
    pub period: f64,
}

impl PidParameters {
    pub fn validate(&self) -> Result<()> {
        if !(self.ti > 0.0) || !(self.td >= 0.0) || !self.kp.is_finite() || !self.td.is_finite() {
            return Err(Error::InvalidSystem(format!("invalid PID parameters {self:?}")));
        }
        if !(self.period.is_finite() && self.period > 0.0) {
            return Err(Error::InvalidPeriod(self.period));
        }
        Ok(())
    }

    /// q0, q1, q2 of (q0 + q1 z^-1 + q2 z^-2) / (1 - z^-1).
    pub fn q(&self) -> [f64; 3] {
        let (kp, td, ti, t) = (self.kp, self.td, self.ti, self.period);
        [kp * (1.0 + td / t), -kp * (1.0 + 2.0 * td / t - t / ti), kp * td / t]
    }

    /// Continuous Kp (1 + 1/(Ti s) + TD s) as an (improper) polynomial pair.
    pub fn continuous_polys(&self) -> (Vec<f64>, Vec<f64>) {
        let ki = if self.ti.is_finite() { self.kp / self.ti } else { 0.0 };
        (vec![self.kp * self.td, self.kp, ki], vec![1.0, 0.0])
    }
}

pub fn pid_discretize(p: &PidParameters) -> Result<TransferFunction> {
    p.validate()?;
    if p.period >= p.ti {
        log::warn!("PID period {} s is not below the integral time {} s", p.period, p.ti);
    }
    let [q0, q1, q2] = p.q();
    let tf = if q2 == 0.0 {
        TransferFunction::discrete(&[q0, q1], &[1.0, -1.0], p.period)?
    } else {
        TransferFunction::discrete(&[q0, q1, q2], &[1.0, -1.0, 0.0], p.period)?
    };
    if p.ti.is_infinite() {
        Ok(tf.minreal(1e-9))
    } else {
        Ok(tf)
    }
}

/// H(z) = 1 + z^-1 + ... + z^-(N-1) at the fast period.
pub fn dr_hold(n: usize, period: f64) -> Result<TransferFunction> {
    if n < 1 {
        return Err(Error::InvalidSystem("hold multiplicity N must be at least 1".into()));
    }
    let mut den = vec![0.0; n];
    den[0] = 1.0;
    TransferFunction::discrete(&vec![1.0; n], &den, period)
}

/// C P / (1 + C P) for a controller given as a polynomial pair (which may be improper).
pub fn closed_loop_target(ctrl_num: &[f64], ctrl_den: &[f64], plant: &TransferFunction) -> Result<TransferFunction> {
    let n = poly::mul(ctrl_num, plant.num());
    let d = poly::add(&poly::mul(ctrl_den, plant.den()), &n);
    Ok(TransferFunction::new(&n, &d, plant.domain())?.minreal(1e-9))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MbdrVariant {
    #[default]
    Cancellation,
    RippleFree,
}

#[derive(Clone, Debug)]
pub struct MbdrController {
    /// G1 at NT.
    pub slow_part: TransferFunction,
    /// H at T.
    pub hold: TransferFunction,
    /// G2 at T.
    pub fast_part: TransferFunction,
    pub n: usize,
    pub variant: MbdrVariant,
    /// M^T and M^{NT} used in the design.
    pub target_t: TransferFunction,
    pub target_nt: TransferFunction,
}

/// Designs slow and fast parts so the nominal loop follows `m` at the slow samples.
pub fn design_mbdr(
    m: &TransferFunction,
    gp_t: &TransferFunction,
    gr_t: &TransferFunction,
    n: usize,
    variant: MbdrVariant,
) -> Result<MbdrController> {
    let t = gp_t.period().ok_or_else(|| Error::InvalidSystem("Gp^T must be discrete".into()))?;
    if n < 1 {
        return Err(Error::InvalidSystem("N must be at least 1".into()));
    }
    let nt = t * n as f64;
    let (m_t, m_nt) = match m.domain() {
        Domain::S => (zoh_tf(m, t)?, zoh_tf(m, nt)?),
        Domain::Z { period } => {
            let m_t = m.with_domain(Domain::Z { period })?;
            let m_t = zoh_tf(&m_t, t)?;
            let m_nt = if n == 1 { m_t.clone() } else { zoh_tf(&d2c_approx(&m_t.to_ss()?)?, nt)? };
            (m_t, m_nt)
        }
    };
    let gap = poly::sub(m_nt.den(), &poly::pad(m_nt.num(), m_nt.den().len()));
    if poly::degree(&gap) < m_nt.order() || poly::is_zero(&poly::trim(&gap)) {
        return Err(Error::InvalidSystem("1 - M^{NT} is not invertible as a proper transfer function".into()));
    }
    let slow_part = TransferFunction::discrete(m_nt.den(), &gap, nt)?;
    let fast_part = match variant {
        MbdrVariant::Cancellation => {
            if poly::is_zero(m_t.num()) {
                TransferFunction::gain(0.0, Domain::Z { period: t })?
            } else {
                if let Some(z) = gp_t.zeros().iter().find(|z| z.norm() >= 1.0 - 1e-9) {
                    return Err(Error::NonMinimumPhase(format!("{:.6}{:+.6}i", z.re, z.im)));
                }
                if poly::is_zero(gp_t.num()) {
                    return Err(Error::InvalidSystem("cannot invert a zero plant".into()));
                }
                TransferFunction::discrete(
                    &poly::mul(m_t.num(), gp_t.den()),
                    &poly::mul(m_t.den(), gp_t.num()),
                    t,
                )?
            }
        }
        MbdrVariant::RippleFree => gr_t.feedback(gp_t)?,
    };
    Ok(MbdrController { slow_part, hold: dr_hold(n, t)?, fast_part, n, variant, target_t: m_t, target_nt: m_nt })
}

#[derive(Clone, Debug)]
pub struct IcLoop {
    pub controller: TransferFunction,
    pub model: DiscreteStateSpace,
    pub n: usize,
    pub pattern: SampleAvailabilityPattern,
}

pub fn build_ic(
    gr_t: &TransferFunction,
    gmodel: &TransferFunction,
    n: usize,
    pattern: Option<SampleAvailabilityPattern>,
) -> Result<IcLoop> {
    let t = gr_t.period().ok_or_else(|| Error::InvalidSystem("G_R^T must be discrete".into()))?;
    let pattern = match pattern {
        Some(p) => p,
        None => SampleAvailabilityPattern::first_of(n)?,
    };
    if pattern.len() != n {
        return Err(Error::Dimension(format!("pattern length {} does not match N = {n}", pattern.len())));
    }
    let model = match gmodel.domain() {
        Domain::S => zoh_discretize(gmodel, t)?,
        Domain::Z { .. } => zoh_tf(gmodel, t)?.to_ss()?,
    };
    Ok(IcLoop { controller: gr_t.clone(), model, n, pattern })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RippleReport {
    /// Largest intersample deviation from the slow-sample envelope over |final value|.
    pub max_deviation: f64,
    pub ripple: bool,
}

pub const RIPPLE_THRESHOLD: f64 = 0.05;

/// Compares a fine-rate step response with the straight line between consecutive slow samples.
pub fn detect_ripple(fine: &[f64], per_slow: usize) -> RippleReport {
    let fin = fine.last().copied().unwrap_or(0.0).abs().max(1e-300);
    let mut worst = 0.0_f64;
    let mut k = 0;
    while k + per_slow < fine.len() {
        let (a, b) = (fine[k], fine[k + per_slow]);
        for i in 1..per_slow {
            let env = a + (b - a) * i as f64 / per_slow as f64;
            worst = worst.max((fine[k + i] - env).abs());
        }
        k += per_slow;
    }
    let max_deviation = worst / fin;
    RippleReport { max_deviation, ripple: max_deviation > RIPPLE_THRESHOLD }
}
