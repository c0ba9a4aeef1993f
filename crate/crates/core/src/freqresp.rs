//! Dual-rate frequency response of lifted systems.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lifting::{gcd, DualRateScheme, LiftedRealization};

/// Grid points closer than this (radians on the unit circle) to a lifted pole are dropped.
pub const POLE_EXCLUSION: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct DualRateFrequencyResponse {
    pub omega: Vec<f64>,
    pub values: Vec<Complex64>,
    pub scheme: DualRateScheme,
}

impl DualRateFrequencyResponse {
    pub fn magnitude(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm()).collect()
    }

    pub fn magnitude_db(&self) -> Vec<f64> {
        self.values.iter().map(|v| 20.0 * v.norm().log10()).collect()
    }

    /// Phase in degrees, unwrapped along the grid.
    pub fn phase_deg(&self) -> Vec<f64> {
        unwrap_deg(&self.values.iter().map(|v| v.arg().to_degrees()).collect::<Vec<_>>())
    }

    /// First grid frequency where the gain drops 3 dB below its lowest-frequency value.
    pub fn bandwidth(&self) -> Option<f64> {
        let m = self.magnitude();
        let g0 = *m.first()?;
        self.omega.iter().zip(&m).find(|(_, g)| **g < g0 / 2f64.sqrt()).map(|(w, _)| *w)
    }
}

pub fn unwrap_deg(raw: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(raw.len());
    let mut shift = 0.0;
    for (i, p) in raw.iter().enumerate() {
        if i > 0 {
            let d = p + shift - out[i - 1];
            if d > 180.0 {
                shift -= 360.0;
            } else if d < -180.0 {
                shift += 360.0;
            }
        }
        out.push(p + shift);
    }
    out
}

/// `per_decade` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    let decades = (hi / lo).log10();
    let n = ((decades * per_decade as f64).ceil() as usize).max(1) + 1;
    (0..n).map(|i| lo * 10f64.powf(decades * i as f64 / (n - 1) as f64)).collect()
}

/// 200 points per decade over [1e-3, π/T_y].
pub fn default_grid(t_y: f64) -> Vec<f64> {
    log_grid(1e-3, std::f64::consts::PI / t_y, 200)
}

/// Removes grid points whose metaperiod phase lands on a lifted pole.
pub fn exclude_poles(grid: &[f64], lr: &LiftedRealization) -> Vec<f64> {
    let t0 = lr.ss.period;
    let unit: Vec<f64> = lr
        .ss
        .poles()
        .iter()
        .filter(|p| (p.norm() - 1.0).abs() < POLE_EXCLUSION)
        .map(|p| p.arg())
        .collect();
    grid.iter()
        .copied()
        .filter(|w| {
            unit.iter().all(|a| {
                let d = (w * t0 - a).rem_euclid(2.0 * std::f64::consts::PI);
                d.min(2.0 * std::f64::consts::PI - d) >= POLE_EXCLUSION
            })
        })
        .collect()
}

fn value_at(lr: &LiftedRealization, omega: f64, poles: &[Complex64]) -> Result<Complex64> {
    let s = &lr.scheme;
    let z0 = Complex64::from_polar(1.0, omega * lr.ss.period);
    let g = lr.ss.eval_z(z0, poles, omega)?;
    let (t_y, t_u) = (s.t_y(), s.t_u());
    let mut acc = Complex64::new(0.0, 0.0);
    for q in 0..s.n_y {
        let left = Complex64::from_polar(1.0, -omega * q as f64 * t_y);
        for p in 0..s.n_u {
            let right = Complex64::from_polar(1.0, omega * p as f64 * t_u);
            acc += left * g[(q, p)] * right;
        }
    }
    Ok(acc)
}

/// Row-factor × lifted matrix × column-factor product on each grid frequency.
pub fn dr_bode(lr: &LiftedRealization, grid: &[f64]) -> Result<DualRateFrequencyResponse> {
    dr_bode_with(lr, grid, false)
}

/// As `dr_bode`; `allow_noncoprime` evaluates the same product for non-coprime schemes.
pub fn dr_bode_with(lr: &LiftedRealization, grid: &[f64], allow_noncoprime: bool) -> Result<DualRateFrequencyResponse> {
    let s = lr.scheme;
    if !allow_noncoprime && !s.is_coprime() {
        return Err(Error::NotCoprime { n_u: s.n_u, n_y: s.n_y });
    }
    if lr.channels_in != 1 || lr.channels_out != 1 {
        return Err(Error::Dimension("dual-rate Bode needs a single input and output channel".into()));
    }
    let poles = lr.ss.poles();
    let values = grid.par_iter().map(|w| value_at(lr, *w, &poles)).collect::<Result<Vec<_>>>()?;
    Ok(DualRateFrequencyResponse { omega: grid.to_vec(), values, scheme: s })
}

/// Frequencies present in the output for an input sinusoid at `b`.
pub fn output_components(b: f64, scheme: &DualRateScheme) -> Vec<f64> {
    let k = scheme.n_y / gcd(scheme.n_u, scheme.n_y);
    (0..k).map(|i| b + (i * scheme.n_u) as f64 * scheme.omega_s()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lifting::{lift_digital, lift_zoh_plant, LiftKind};
    use crate::lti::{DiscreteStateSpace, Mat, TransferFunction};

    #[test]
    fn single_rate_is_ordinary_bode() {
        let g = TransferFunction::discrete(&[0.2, 0.1], &[1.0, -1.2, 0.45], 0.5).unwrap();
        let ss = g.to_ss().unwrap();
        let lr = lift_zoh_plant(&ss, &DualRateScheme::new(0.5, 1, 1).unwrap()).unwrap();
        let grid = default_grid(0.5);
        let r = dr_bode(&lr, &grid).unwrap();
        for (w, v) in grid.iter().zip(&r.values) {
            assert!((v - g.freq_point(*w).unwrap()).norm() < 1e-12);
        }
    }

    #[test]
    fn static_gain_scales_with_hold() {
        let k = DiscreteStateSpace::gain(Mat::from_element(1, 1, 2.0), 1.0).unwrap();
        let held = lift_zoh_plant(
            &DiscreteStateSpace::new(Mat::zeros(1, 1), Mat::from_element(1, 1, 1.0), Mat::from_element(1, 1, 2.0), Mat::zeros(1, 1), 1.0)
                .unwrap(),
            &DualRateScheme::new(1.0, 1, 3).unwrap(),
        )
        .unwrap();
        let dig = lift_digital(&k, &DualRateScheme::new(1.0, 1, 3).unwrap()).unwrap();
        let r = dr_bode(&dig, &[1e-9]).unwrap();
        assert!((r.values[0] - Complex64::new(2.0, 0.0)).norm() < 1e-9);
        // a one-step delay of gain 2 under a three-slot hold sums to 6 at DC
        let r = dr_bode(&held, &[1e-9]).unwrap();
        assert!((r.values[0] - Complex64::new(6.0, 0.0)).norm() < 1e-6);
    }

    #[test]
    fn conjugate_symmetry() {
        let g = TransferFunction::discrete(&[0.3, 0.1], &[1.0, -0.7, 0.2], 1.0).unwrap().to_ss().unwrap();
        let lr = lift_zoh_plant(&g, &DualRateScheme::new(1.0, 2, 3).unwrap()).unwrap();
        for w in [0.1, 0.4, 0.9] {
            let a = dr_bode(&lr, &[w]).unwrap().values[0];
            let b = dr_bode(&lr, &[-w]).unwrap().values[0];
            assert!((a - b.conj()).norm() < 1e-12);
        }
    }

    #[test]
    fn rejects_noncoprime_and_poles() {
        let g = TransferFunction::discrete(&[0.3], &[1.0, -1.0], 1.0).unwrap().to_ss().unwrap();
        let lr = lift_zoh_plant(&g, &DualRateScheme::new(1.0, 2, 4).unwrap()).unwrap();
        assert!(matches!(dr_bode(&lr, &[0.1]), Err(Error::NotCoprime { .. })));
        assert!(dr_bode_with(&lr, &[0.1], true).is_ok());
        let lr1 = lift_zoh_plant(&g, &DualRateScheme::new(1.0, 1, 1).unwrap()).unwrap();
        assert!(matches!(dr_bode(&lr1, &[0.0]), Err(Error::Singular { .. })));
        assert_eq!(exclude_poles(&[0.0, 0.5], &lr1), vec![0.5]);
        assert_eq!(lr1.kind, LiftKind::ZohPlant);
    }

    #[test]
    fn component_frequencies() {
        let s = DualRateScheme::new(0.1, 1, 3).unwrap();
        let c = output_components(0.5, &s);
        let ws = 2.0 * std::f64::consts::PI / 0.3;
        assert_eq!(c.len(), 3);
        assert!((c[1] - (0.5 + ws)).abs() < 1e-12 && (c[2] - (0.5 + 2.0 * ws)).abs() < 1e-12);
        assert_eq!(output_components(0.5, &DualRateScheme::new(0.1, 1, 1).unwrap()), vec![0.5]);
    }

    #[test]
    fn grid_and_bandwidth() {
        let g = default_grid(0.1);
        assert!((g[0] - 1e-3).abs() < 1e-15 && (g.last().unwrap() - std::f64::consts::PI / 0.1).abs() < 1e-9);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
        let lag = TransferFunction::discrete(&[0.1], &[1.0, -0.9], 1.0).unwrap().to_ss().unwrap();
        let lr = lift_zoh_plant(&lag, &DualRateScheme::new(1.0, 1, 1).unwrap()).unwrap();
        let bw = dr_bode(&lr, &log_grid(1e-3, 3.0, 2000)).unwrap().bandwidth().unwrap();
        // |0.1/(e^{jw} - 0.9)|^2 = 1/2  <=>  cos w = (1.81 - 0.02)/1.8
        let exact = ((1.81f64 - 0.02) / 1.8).acos();
        assert!((bw - exact).abs() / exact < 2e-3);
    }

    #[test]
    fn unwrap_is_continuous() {
        let u = unwrap_deg(&[170.0, -175.0, -160.0, 175.0]);
        assert_eq!(u, vec![170.0, 185.0, 200.0, 175.0]);
    }
}
