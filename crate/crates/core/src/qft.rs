//! QFT margins, Nichols boundaries and locus checks.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freqresp::{dr_bode, log_grid};
use crate::loops::{assemble, open_loop, stability, Channel, LoopSetup, OutputRate, Strategy};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Margins {
    /// None when μ ≥ 1 (unbounded gain margin).
    pub gm: Option<f64>,
    pub gm_db: Option<f64>,
    pub pm_deg: f64,
}

pub fn margins_from_mu(mu: f64) -> Result<Margins> {
    if !(mu > 0.0 && mu < 2.0) {
        return Err(Error::InvalidSystem(format!("mu must lie in (0, 2), got {mu}")));
    }
    let gm = if mu < 1.0 { Some(1.0 / (1.0 - mu)) } else { None };
    Ok(Margins { gm, gm_db: gm.map(|g| 20.0 * g.log10()), pm_deg: 180.0 - 2.0 * (mu / 2.0).acos().to_degrees() })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DeltaProfile {
    /// δ(ω) = ω / divisor
    Linear { divisor: f64 },
    Constant { value: f64 },
}

impl DeltaProfile {
    pub fn at(&self, omega: f64) -> f64 {
        match self {
            DeltaProfile::Linear { divisor } => omega / divisor,
            DeltaProfile::Constant { value } => *value,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QftSpecification {
    pub mu: f64,
    pub delta: DeltaProfile,
    pub check_frequencies: Vec<f64>,
}

impl QftSpecification {
    pub fn new(mu: f64, delta: DeltaProfile, check_frequencies: Vec<f64>) -> Result<Self> {
        if !(mu > 0.0 && mu < 2.0) {
            return Err(Error::InvalidSystem(format!("mu must lie in (0, 2), got {mu}")));
        }
        if check_frequencies.iter().any(|w| !(delta.at(*w) > 0.0)) {
            return Err(Error::InvalidSystem("delta must be positive on every check frequency".into()));
        }
        Ok(QftSpecification { mu, delta, check_frequencies })
    }

    pub fn bound(&self, omega: f64, kind: BoundaryKind) -> f64 {
        match kind {
            BoundaryKind::Stability => self.mu,
            BoundaryKind::Disturbance => 1.0 / self.delta.at(omega),
        }
    }
}

/// 30 log-spaced points in [0.01, π/T_y] merged with `extra`.
pub fn default_check_frequencies(t_y: f64, extra: &[f64]) -> Vec<f64> {
    let hi = std::f64::consts::PI / t_y;
    let lo: f64 = 0.01;
    let mut w: Vec<f64> = (0..30).map(|i| lo * (hi / lo).powf(i as f64 / 29.0)).collect();
    w.extend_from_slice(extra);
    w.sort_by(f64::total_cmp);
    w.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs());
    w
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    Stability,
    Disturbance,
}

#[derive(Clone, Debug, Serialize)]
pub struct NicholsBoundary {
    pub omega: f64,
    pub kind: BoundaryKind,
    pub bound: f64,
    /// (phase_deg, magnitude_dB) of the larger-magnitude solution, phase in [-360, 0].
    pub upper: Vec<(f64, f64)>,
    /// Smaller-magnitude solution where it is positive (only when bound < 1).
    pub lower: Vec<(f64, f64)>,
}

/// Locus |1 + m e^{jφ}| = bound sampled every degree.
pub fn boundary(spec: &QftSpecification, omega: f64, kind: BoundaryKind) -> Result<NicholsBoundary> {
    let b = spec.bound(omega, kind);
    boundary_for_bound(b, omega, kind)
}

pub fn boundary_for_bound(b: f64, omega: f64, kind: BoundaryKind) -> Result<NicholsBoundary> {
    if !(b > 0.0) {
        return Err(Error::InvalidSystem(format!("boundary bound must be positive, got {b}")));
    }
    let mut upper = vec![];
    let mut lower = vec![];
    for k in 0..=360 {
        let phi = -360.0 + k as f64;
        let c = phi.to_radians().cos();
        let disc = c * c - 1.0 + b * b;
        if disc < 0.0 {
            continue;
        }
        let r = disc.sqrt();
        let (hi, lo) = (-c + r, -c - r);
        if hi > 0.0 {
            upper.push((phi, 20.0 * hi.log10()));
        }
        if lo > 0.0 {
            lower.push((phi, 20.0 * lo.log10()));
        }
    }
    Ok(NicholsBoundary { omega, kind, bound: b, upper, lower })
}

#[derive(Clone, Debug, Serialize)]
pub struct FrequencyVerdict {
    pub omega: f64,
    pub l_re: f64,
    pub l_im: f64,
    pub phase_deg: f64,
    pub magnitude_db: f64,
    /// |1 + L|
    pub distance: f64,
    pub stability_bound: f64,
    pub disturbance_bound: f64,
    pub stability_ok: bool,
    pub disturbance_ok: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ViolationReport {
    pub frequencies: Vec<FrequencyVerdict>,
    pub pass: bool,
    pub stability_violations: Vec<f64>,
    pub disturbance_violations: Vec<f64>,
    /// min over ω of |1 + L| / max(μ, 1/δ)
    pub worst_ratio: f64,
    pub worst_omega: f64,
    /// Smallest pure scaling of L (scan over [0.01, 1000]) at which every check passes.
    pub min_scale_to_pass: Option<f64>,
    /// Smallest scaling above 1 at which some check fails.
    pub min_scale_to_fail: Option<f64>,
}

fn passes(points: &[(f64, Complex64)], spec: &QftSpecification, g: f64) -> bool {
    points.iter().all(|(w, l)| {
        let d = (Complex64::new(1.0, 0.0) + l * g).norm();
        d >= spec.mu.max(spec.bound(*w, BoundaryKind::Disturbance))
    })
}

/// Checks |1 + L(ω)| ≥ max(μ, 1/δ(ω)) at each point; both bounds are required.
pub fn check_locus(points: &[(f64, Complex64)], spec: &QftSpecification) -> ViolationReport {
    let mut frequencies = vec![];
    let mut worst_ratio = f64::INFINITY;
    let mut worst_omega = f64::NAN;
    for (w, l) in points {
        let d = (Complex64::new(1.0, 0.0) + l).norm();
        let sb = spec.mu;
        let db = spec.bound(*w, BoundaryKind::Disturbance);
        let ratio = d / sb.max(db);
        if ratio < worst_ratio {
            worst_ratio = ratio;
            worst_omega = *w;
        }
        frequencies.push(FrequencyVerdict {
            omega: *w,
            l_re: l.re,
            l_im: l.im,
            phase_deg: l.arg().to_degrees(),
            magnitude_db: 20.0 * l.norm().log10(),
            distance: d,
            stability_bound: sb,
            disturbance_bound: db,
            stability_ok: d >= sb,
            disturbance_ok: d >= db,
        });
    }
    let stability_violations: Vec<f64> = frequencies.iter().filter(|f| !f.stability_ok).map(|f| f.omega).collect();
    let disturbance_violations: Vec<f64> = frequencies.iter().filter(|f| !f.disturbance_ok).map(|f| f.omega).collect();
    let scales = log_grid(0.01, 1000.0, 400);
    let min_scale_to_pass = scales.iter().copied().find(|g| passes(points, spec, *g));
    let min_scale_to_fail = scales.iter().copied().filter(|g| *g > 1.0).find(|g| !passes(points, spec, *g));
    ViolationReport {
        pass: stability_violations.is_empty() && disturbance_violations.is_empty(),
        frequencies,
        stability_violations,
        disturbance_violations,
        worst_ratio,
        worst_omega,
        min_scale_to_pass,
        min_scale_to_fail,
    }
}

/// L(ω) of a loop cut at the real-measurement sampler.
pub fn loop_gain(setup: &LoopSetup, strategy: Strategy, omegas: &[f64]) -> Result<Vec<(f64, Complex64)>> {
    let ol = open_loop(setup, strategy)?;
    let r = dr_bode(&ol, omegas)?;
    Ok(r.omega.iter().zip(&r.values).map(|(w, v)| (*w, -v)).collect())
}

#[derive(Clone, Debug, Serialize)]
pub struct GainScanRow {
    pub gain: f64,
    pub spectral_radius: f64,
    pub stable: bool,
    pub report: ViolationReport,
}

/// Re-assembles the loop with each actuator gain and checks both the locus and the closed loop.
pub fn gain_scan(setup: &LoopSetup, strategy: Strategy, spec: &QftSpecification, gains: &[f64]) -> Result<Vec<GainScanRow>> {
    gains
        .par_iter()
        .map(|g| {
            let s = setup.clone().with_gain(*g);
            let pts = loop_gain(&s, strategy, &spec.check_frequencies)?;
            let st = stability(&assemble(&s, strategy, Channel::YvsR, OutputRate::N1Slots)?);
            Ok(GainScanRow { gain: *g, spectral_radius: st.spectral_radius, stable: st.stable, report: check_locus(&pts, spec) })
        })
        .collect()
}
