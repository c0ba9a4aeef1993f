//! Transfer functions, discrete state space, ZOH discretization and conversions.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly;

pub type Mat = DMatrix<f64>;
pub type CMat = DMatrix<Complex64>;

/// Distance from a pole below which a frequency point is treated as singular.
pub const POLE_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variable", rename_all = "lowercase")]
pub enum Domain {
    S,
    Z { period: f64 },
}

impl Domain {
    pub fn period(&self) -> Option<f64> {
        match self {
            Domain::S => None,
            Domain::Z { period } => Some(*period),
        }
    }

    /// Evaluation point for angular frequency `omega`: jω or e^{jωT}.
    pub fn point(&self, omega: f64) -> Complex64 {
        match self {
            Domain::S => Complex64::new(0.0, omega),
            Domain::Z { period } => Complex64::from_polar(1.0, omega * period),
        }
    }
}

fn check_period(t: f64) -> Result<()> {
    if t.is_finite() && t > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidPeriod(t))
    }
}

fn same_period(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

fn check_domains(a: Domain, b: Domain) -> Result<()> {
    match (a, b) {
        (Domain::S, Domain::S) => Ok(()),
        (Domain::Z { period: p }, Domain::Z { period: q }) if same_period(p, q) => Ok(()),
        (Domain::Z { period: p }, Domain::Z { period: q }) => Err(Error::PeriodMismatch(p, q)),
        _ => Err(Error::InvalidSystem("cannot combine continuous and discrete systems".into())),
    }
}

/// Proper SISO rational transfer function with monic denominator.
#[derive(Clone, Debug, PartialEq)]
pub struct TransferFunction {
    num: Vec<f64>,
    den: Vec<f64>,
    domain: Domain,
}

impl TransferFunction {
    pub fn new(num: &[f64], den: &[f64], domain: Domain) -> Result<Self> {
        if num.is_empty() || den.is_empty() {
            return Err(Error::InvalidSystem("empty coefficient list".into()));
        }
        if num.iter().chain(den).any(|c| !c.is_finite()) {
            return Err(Error::InvalidSystem("non-finite coefficient".into()));
        }
        if let Domain::Z { period } = domain {
            check_period(period)?;
        }
        let den = poly::trim(den);
        if den[0] == 0.0 {
            return Err(Error::InvalidSystem("denominator is identically zero".into()));
        }
        let num = poly::trim(num);
        let num = if poly::is_zero(&num) { vec![0.0] } else { num };
        if num.len() > den.len() {
            return Err(Error::Improper { num: num.len() - 1, den: den.len() - 1 });
        }
        let lead = den[0];
        Ok(TransferFunction {
            num: poly::scale(&num, 1.0 / lead),
            den: poly::scale(&den, 1.0 / lead),
            domain,
        })
    }

    pub fn continuous(num: &[f64], den: &[f64]) -> Result<Self> {
        Self::new(num, den, Domain::S)
    }

    pub fn discrete(num: &[f64], den: &[f64], period: f64) -> Result<Self> {
        Self::new(num, den, Domain::Z { period })
    }

    pub fn gain(k: f64, domain: Domain) -> Result<Self> {
        Self::new(&[k], &[1.0], domain)
    }

    pub fn num(&self) -> &[f64] {
        &self.num
    }

    pub fn den(&self) -> &[f64] {
        &self.den
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn period(&self) -> Option<f64> {
        self.domain.period()
    }

    pub fn order(&self) -> usize {
        self.den.len() - 1
    }

    pub fn is_strictly_proper(&self) -> bool {
        self.num.len() < self.den.len() || poly::is_zero(&self.num)
    }

    /// Direct feedthrough (value at infinity).
    pub fn feedthrough(&self) -> f64 {
        if self.num.len() == self.den.len() {
            self.num[0]
        } else {
            0.0
        }
    }

    pub fn eval(&self, x: Complex64) -> Complex64 {
        poly::eval_c(&self.num, x) / poly::eval_c(&self.den, x)
    }

    pub fn freq_point(&self, omega: f64) -> Result<Complex64> {
        let x = self.domain.point(omega);
        let d = poly::eval_c(&self.den, x);
        let scale: f64 = self.den.iter().map(|c| c.abs()).sum::<f64>() * (1.0 + x.norm()).powi(self.order() as i32);
        if d.norm() <= 1e-12 * scale {
            return Err(Error::Singular { omega });
        }
        Ok(poly::eval_c(&self.num, x) / d)
    }

    pub fn dc_gain(&self) -> Result<f64> {
        Ok(self.freq_point(0.0)?.re)
    }

    pub fn poles(&self) -> Vec<Complex64> {
        poly::roots(&self.den)
    }

    pub fn zeros(&self) -> Vec<Complex64> {
        if poly::is_zero(&self.num) {
            return vec![];
        }
        poly::roots(&self.num)
    }

    pub fn scale(&self, k: f64) -> Self {
        TransferFunction { num: poly::trim(&poly::scale(&self.num, k)), ..self.clone() }
    }

    pub fn series(&self, other: &Self) -> Result<Self> {
        check_domains(self.domain, other.domain)?;
        Self::new(&poly::mul(&self.num, &other.num), &poly::mul(&self.den, &other.den), self.domain)
    }

    pub fn parallel(&self, other: &Self) -> Result<Self> {
        check_domains(self.domain, other.domain)?;
        let num = poly::add(&poly::mul(&self.num, &other.den), &poly::mul(&other.num, &self.den));
        Self::new(&num, &poly::mul(&self.den, &other.den), self.domain)
    }

    /// Negative feedback: self / (1 + self * lp).
    pub fn feedback(&self, lp: &Self) -> Result<Self> {
        check_domains(self.domain, lp.domain)?;
        let dd = 1.0 + self.feedthrough() * lp.feedthrough();
        if dd.abs() < 1e-12 {
            return Err(Error::AlgebraicLoop("1 + D_G * D_H is zero".into()));
        }
        let num = poly::mul(&self.num, &lp.den);
        let den = poly::add(&poly::mul(&self.den, &lp.den), &poly::mul(&self.num, &lp.num));
        Self::new(&num, &den, self.domain)
    }

    /// Cancels numerator/denominator roots closer than `tol`.
    pub fn minreal(&self, tol: f64) -> Self {
        if poly::is_zero(&self.num) {
            return TransferFunction { num: vec![0.0], den: vec![1.0], domain: self.domain };
        }
        let mut zs = self.zeros();
        let mut ps = self.poles();
        let mut i = 0;
        while i < zs.len() {
            let hit = ps
                .iter()
                .enumerate()
                .filter(|(_, p)| (**p - zs[i]).norm() < tol)
                .min_by(|a, b| (*a.1 - zs[i]).norm().total_cmp(&(*b.1 - zs[i]).norm()))
                .map(|(j, _)| j);
            match hit {
                Some(j) => {
                    ps.remove(j);
                    zs.remove(i);
                }
                None => i += 1,
            }
        }
        let k = self.num[0];
        let num = poly::scale(&poly::from_roots(&zs), k);
        let den = poly::from_roots(&ps);
        TransferFunction::new(&num, &den, self.domain).unwrap_or_else(|_| self.clone())
    }

    /// Controllable canonical realization (A, B, C, D).
    pub fn realization(&self) -> (Mat, Mat, Mat, Mat) {
        let n = self.order();
        let d = self.feedthrough();
        let num = poly::pad(&self.num, n + 1);
        let rem = poly::sub(&num, &poly::scale(&self.den, d));
        let mut a = Mat::zeros(n, n);
        let mut b = Mat::zeros(n, 1);
        let mut c = Mat::zeros(1, n);
        for j in 0..n {
            a[(0, j)] = -self.den[j + 1];
            c[(0, j)] = rem[j + 1];
        }
        for i in 1..n {
            a[(i, i - 1)] = 1.0;
        }
        if n > 0 {
            b[(0, 0)] = 1.0;
        }
        (a, b, c, Mat::from_element(1, 1, d))
    }

    pub fn to_ss(&self) -> Result<DiscreteStateSpace> {
        match self.domain {
            Domain::Z { period } => {
                let (a, b, c, d) = self.realization();
                DiscreteStateSpace::new(a, b, c, d, period)
            }
            Domain::S => Err(Error::InvalidSystem("tf_to_ss needs a discrete transfer function; use zoh_discretize".into())),
        }
    }

    /// Same transfer function in a different domain (coefficients unchanged).
    pub fn with_domain(&self, domain: Domain) -> Result<Self> {
        Self::new(&self.num, &self.den, domain)
    }

    /// Coefficients equal to within `tol` after normalization.
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        let n = self.den.len().max(other.den.len());
        let close = |a: &[f64], b: &[f64]| {
            let a = poly::pad(a, n);
            let b = poly::pad(b, n);
            a.iter().zip(&b).all(|(x, y)| (x - y).abs() <= tol * (1.0 + x.abs().max(y.abs())))
        };
        check_domains(self.domain, other.domain).is_ok() && close(&self.num, &other.num) && close(&self.den, &other.den)
    }
}

impl std::fmt::Display for TransferFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let var = match self.domain {
            Domain::S => "s",
            Domain::Z { .. } => "z",
        };
        let show = |p: &[f64]| {
            p.iter()
                .enumerate()
                .map(|(i, c)| {
                    let k = p.len() - 1 - i;
                    match k {
                        0 => format!("{c:.6}"),
                        1 => format!("{c:.6}{var}"),
                        _ => format!("{c:.6}{var}^{k}"),
                    }
                })
                .collect::<Vec<_>>()
                .join(" + ")
        };
        write!(f, "({}) / ({})", show(&self.num), show(&self.den))
    }
}

/// Discrete-time quadruple (A, B, C, D) at a fixed period.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteStateSpace {
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
    pub d: Mat,
    pub period: f64,
}

impl DiscreteStateSpace {
    pub fn new(a: Mat, b: Mat, c: Mat, d: Mat, period: f64) -> Result<Self> {
        check_period(period)?;
        let n = a.nrows();
        if a.ncols() != n || b.nrows() != n || c.ncols() != n || d.nrows() != c.nrows() || d.ncols() != b.ncols() {
            return Err(Error::Dimension(format!(
                "A {}x{}, B {}x{}, C {}x{}, D {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols(),
                c.nrows(),
                c.ncols(),
                d.nrows(),
                d.ncols()
            )));
        }
        Ok(DiscreteStateSpace { a, b, c, d, period })
    }

    pub fn gain(k: Mat, period: f64) -> Result<Self> {
        let (p, m) = k.shape();
        Self::new(Mat::zeros(0, 0), Mat::zeros(0, m), Mat::zeros(p, 0), k, period)
    }

    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn n_outputs(&self) -> usize {
        self.c.nrows()
    }

    pub fn poles(&self) -> Vec<Complex64> {
        if self.n_states() == 0 {
            return vec![];
        }
        self.a.complex_eigenvalues().iter().copied().collect()
    }

    pub fn spectral_radius(&self) -> f64 {
        self.poles().iter().fold(0.0, |m, p| m.max(p.norm()))
    }

    /// One step: returns (x_next, y).
    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        (&self.a * x + &self.b * u, &self.c * x + &self.d * u)
    }

    pub fn simulate(&self, x0: &DVector<f64>, inputs: &[DVector<f64>]) -> Vec<DVector<f64>> {
        let mut x = x0.clone();
        inputs
            .iter()
            .map(|u| {
                let (xn, y) = self.step(&x, u);
                x = xn;
                y
            })
            .collect()
    }

    pub fn simulate_siso(&self, inputs: &[f64]) -> Vec<f64> {
        let us: Vec<_> = inputs.iter().map(|u| DVector::from_element(1, *u)).collect();
        self.simulate(&DVector::zeros(self.n_states()), &us).iter().map(|y| y[0]).collect()
    }

    pub fn impulse_response(&self, n: usize) -> Vec<f64> {
        let mut u = vec![0.0; n];
        if n > 0 {
            u[0] = 1.0;
        }
        self.simulate_siso(&u)
    }

    pub fn step_response(&self, n: usize) -> Vec<f64> {
        self.simulate_siso(&vec![1.0; n])
    }

    /// C (zI - A)^{-1} B + D with the pole check done against `poles`.
    pub fn eval_z(&self, z: Complex64, poles: &[Complex64], omega: f64) -> Result<CMat> {
        if poles.iter().any(|p| (p - z).norm() < POLE_TOL) {
            return Err(Error::Singular { omega });
        }
        let dc = self.d.map(|v| Complex64::new(v, 0.0));
        let n = self.n_states();
        if n == 0 {
            return Ok(dc);
        }
        let mut m = self.a.map(|v| Complex64::new(-v, 0.0));
        for i in 0..n {
            m[(i, i)] += z;
        }
        let bc = self.b.map(|v| Complex64::new(v, 0.0));
        let x = m.lu().solve(&bc).ok_or(Error::Singular { omega })?;
        Ok(self.c.map(|v| Complex64::new(v, 0.0)) * x + dc)
    }

    pub fn freq_point(&self, omega: f64) -> Result<CMat> {
        let z = Complex64::from_polar(1.0, omega * self.period);
        self.eval_z(z, &self.poles(), omega)
    }

    /// SISO transfer of input `j` to output `i`.
    pub fn entry_tf(&self, i: usize, j: usize) -> Result<TransferFunction> {
        if i >= self.n_outputs() || j >= self.n_inputs() {
            return Err(Error::Dimension(format!("entry ({i},{j}) out of range")));
        }
        let (num, den) = siso_polys(&self.a, &self.b.columns(j, 1).into_owned(), &self.c.rows(i, 1).into_owned(), self.d[(i, j)]);
        TransferFunction::discrete(&num, &den, self.period)
    }

    pub fn to_tf(&self) -> Result<TransferFunction> {
        if self.n_inputs() != 1 || self.n_outputs() != 1 {
            return Err(Error::Dimension("to_tf needs a SISO system; use to_tf_matrix".into()));
        }
        self.entry_tf(0, 0)
    }

    pub fn to_tf_matrix(&self) -> Result<Vec<Vec<TransferFunction>>> {
        (0..self.n_outputs())
            .map(|i| (0..self.n_inputs()).map(|j| self.entry_tf(i, j)).collect())
            .collect()
    }

    /// `self` followed by `next`.
    pub fn series(&self, next: &Self) -> Result<Self> {
        if !same_period(self.period, next.period) {
            return Err(Error::PeriodMismatch(self.period, next.period));
        }
        if self.n_outputs() != next.n_inputs() {
            return Err(Error::Dimension("series: output/input count differs".into()));
        }
        let (n1, n2) = (self.n_states(), next.n_states());
        let mut a = Mat::zeros(n1 + n2, n1 + n2);
        a.view_mut((0, 0), (n1, n1)).copy_from(&self.a);
        a.view_mut((n1, 0), (n2, n1)).copy_from(&(&next.b * &self.c));
        a.view_mut((n1, n1), (n2, n2)).copy_from(&next.a);
        let mut b = Mat::zeros(n1 + n2, self.n_inputs());
        b.view_mut((0, 0), (n1, self.n_inputs())).copy_from(&self.b);
        b.view_mut((n1, 0), (n2, self.n_inputs())).copy_from(&(&next.b * &self.d));
        let mut c = Mat::zeros(next.n_outputs(), n1 + n2);
        c.view_mut((0, 0), (next.n_outputs(), n1)).copy_from(&(&next.d * &self.c));
        c.view_mut((0, n1), (next.n_outputs(), n2)).copy_from(&next.c);
        Self::new(a, b, c, &next.d * &self.d, self.period)
    }

    /// Negative feedback: u = r - H y around forward path `self`.
    pub fn feedback(&self, h: &Self) -> Result<Self> {
        if !same_period(self.period, h.period) {
            return Err(Error::PeriodMismatch(self.period, h.period));
        }
        let (p, m) = (self.n_outputs(), self.n_inputs());
        if h.n_inputs() != p || h.n_outputs() != m {
            return Err(Error::Dimension("feedback: loop dimensions do not match forward path".into()));
        }
        let s = (Mat::identity(p, p) + &self.d * &h.d)
            .try_inverse()
            .ok_or_else(|| Error::AlgebraicLoop("I + D_G D_H is singular".into()))?;
        let (ng, nh) = (self.n_states(), h.n_states());
        // y = S (Cg xg - Dg Ch xh + Dg r)
        let mut cy = Mat::zeros(p, ng + nh);
        cy.view_mut((0, 0), (p, ng)).copy_from(&(&s * &self.c));
        cy.view_mut((0, ng), (p, nh)).copy_from(&(-(&s * &self.d * &h.c)));
        let dy = &s * &self.d;
        // u = r - Ch xh - Dh y
        let mut cu = -(&h.d * &cy);
        {
            let mut blk = cu.view_mut((0, ng), (m, nh));
            blk -= &h.c;
        }
        let du = Mat::identity(m, m) - &h.d * &dy;
        let mut a = Mat::zeros(ng + nh, ng + nh);
        a.view_mut((0, 0), (ng, ng)).copy_from(&self.a);
        a.view_mut((ng, ng), (nh, nh)).copy_from(&h.a);
        let mut a_top = a.view_mut((0, 0), (ng, ng + nh));
        a_top += &self.b * &cu;
        let mut a_bot = a.view_mut((ng, 0), (nh, ng + nh));
        a_bot += &h.b * &cy;
        let mut b = Mat::zeros(ng + nh, m);
        b.view_mut((0, 0), (ng, m)).copy_from(&(&self.b * &du));
        b.view_mut((ng, 0), (nh, m)).copy_from(&(&h.b * &dy));
        Self::new(a, b, cy, dy, self.period)
    }
}

/// Numerator and denominator of c (xI - A)^{-1} b + d.
fn siso_polys(a: &Mat, b: &Mat, c: &Mat, d: f64) -> (Vec<f64>, Vec<f64>) {
    let den = poly::charpoly(a);
    if a.nrows() == 0 {
        return (vec![d], den);
    }
    // det(xI - A + b c) = det(xI - A) (1 + c (xI - A)^{-1} b)
    let shifted = poly::charpoly(&(a - b * c));
    let num = poly::add(&poly::sub(&shifted, &den), &poly::scale(&den, d));
    (num, den)
}

/// Zero-order-hold matrices (Phi, Gamma) from the augmented exponential.
pub fn zoh_matrices(a: &Mat, b: &Mat, period: f64) -> (Mat, Mat) {
    let (n, m) = (a.nrows(), b.ncols());
    let mut aug = Mat::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(&(a * period));
    aug.view_mut((0, n), (n, m)).copy_from(&(b * period));
    let e = aug.exp();
    (e.view((0, 0), (n, n)).into_owned(), e.view((0, n), (n, m)).into_owned())
}

pub fn zoh_discretize(plant: &TransferFunction, period: f64) -> Result<DiscreteStateSpace> {
    check_period(period)?;
    if plant.domain() != Domain::S {
        return Err(Error::InvalidSystem("zoh_discretize needs a continuous plant".into()));
    }
    let (a, b, c, d) = plant.realization();
    let (phi, gamma) = zoh_matrices(&a, &b, period);
    DiscreteStateSpace::new(phi, gamma, c, d, period)
}

/// ZOH equivalent as a transfer function; discrete inputs with a matching period pass through.
pub fn zoh_tf(plant: &TransferFunction, period: f64) -> Result<TransferFunction> {
    match plant.domain() {
        Domain::S => zoh_discretize(plant, period)?.to_tf(),
        Domain::Z { period: p } if same_period(p, period) => Ok(plant.clone()),
        Domain::Z { period: p } => Err(Error::PeriodMismatch(p, period)),
    }
}

fn sqrtm(x: &Mat) -> Result<Mat> {
    let n = x.nrows();
    let mut y = x.clone();
    let mut z = Mat::identity(n, n);
    for _ in 0..100 {
        let yi = y.clone().try_inverse().ok_or_else(|| Error::Logarithm("singular square-root iterate".into()))?;
        let zi = z.clone().try_inverse().ok_or_else(|| Error::Logarithm("singular square-root iterate".into()))?;
        let yn = (&y + zi) * 0.5;
        let zn = (&z + yi) * 0.5;
        let delta = (&yn - &y).norm();
        y = yn;
        z = zn;
        if delta <= 1e-15 * y.norm() {
            return Ok(y);
        }
    }
    Err(Error::Logarithm("square-root iteration did not converge".into()))
}

/// Principal matrix logarithm by inverse scaling and squaring.
pub fn logm(x: &Mat) -> Result<Mat> {
    let n = x.nrows();
    let id = Mat::identity(n, n);
    let mut r = x.clone();
    let mut k = 0;
    while (&r - &id).norm() > 0.25 {
        r = sqrtm(&r)?;
        k += 1;
        if k > 64 {
            return Err(Error::Logarithm("no convergence of repeated square roots".into()));
        }
    }
    let e = &r - &id;
    let mut term = e.clone();
    let mut acc = e.clone();
    for j in 2..200 {
        term = &term * &e;
        let t = &term * (if j % 2 == 0 { -1.0 } else { 1.0 } / j as f64);
        acc += &t;
        if t.norm() < 1e-18 {
            break;
        }
    }
    Ok(acc * 2f64.powi(k))
}

/// Inverse ZOH: the continuous system whose ZOH equivalent at `dss.period` is `dss`.
pub fn d2c_approx(dss: &DiscreteStateSpace) -> Result<TransferFunction> {
    if dss.n_inputs() != 1 || dss.n_outputs() != 1 {
        return Err(Error::Dimension("d2c_approx needs a SISO system".into()));
    }
    for p in dss.poles() {
        if p.im.abs() <= 1e-12 * (1.0 + p.re.abs()) && p.re <= 1e-12 {
            return Err(Error::Logarithm(format!(
                "eigenvalue {:.6}{:+.6}i lies on the closed negative real axis (a pure delay or sign-alternating mode has no continuous ZOH preimage)",
                p.re, p.im
            )));
        }
    }
    let (n, m) = (dss.n_states(), 1);
    let mut aug = Mat::identity(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(&dss.a);
    aug.view_mut((0, n), (n, m)).copy_from(&dss.b);
    let l = logm(&aug)? / dss.period;
    let ac = l.view((0, 0), (n, n)).into_owned();
    let bc = l.view((0, n), (n, m)).into_owned();
    let (num, den) = siso_polys(&ac, &bc, &dss.c, dss.d[(0, 0)]);
    TransferFunction::continuous(&num, &den)
}

/// Uniformly sampled real sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledSignal {
    pub values: Vec<f64>,
    pub period: f64,
    pub start_time: f64,
}

impl SampledSignal {
    pub fn new(values: Vec<f64>, period: f64, start_time: f64) -> Result<Self> {
        check_period(period)?;
        Ok(SampledSignal { values, period, start_time })
    }

    pub fn time(&self, k: usize) -> f64 {
        self.start_time + k as f64 * self.period
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Every `every`-th sample starting at `offset`.
    pub fn decimate(&self, every: usize, offset: usize) -> Self {
        SampledSignal {
            values: self.values.iter().skip(offset).step_by(every.max(1)).copied().collect(),
            period: self.period * every.max(1) as f64,
            start_time: self.time(offset),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn rejects_improper_and_bad_period() {
        assert!(matches!(TransferFunction::continuous(&[1.0, 0.0], &[1.0]), Err(Error::Improper { .. })));
        assert!(matches!(TransferFunction::discrete(&[1.0], &[1.0, 1.0], 0.0), Err(Error::InvalidPeriod(_))));
        assert!(zoh_discretize(&TransferFunction::continuous(&[1.0], &[1.0, 1.0]).unwrap(), -1.0).is_err());
    }

    #[test]
    fn integrator_zoh() {
        let g = zoh_tf(&TransferFunction::continuous(&[1.0], &[1.0, 0.0]).unwrap(), 1.0).unwrap();
        assert!(g.approx_eq(&TransferFunction::discrete(&[1.0], &[1.0, -1.0], 1.0).unwrap(), 1e-12));
    }

    #[test]
    fn first_order_lag_zoh() {
        let g = zoh_tf(&TransferFunction::continuous(&[0.1276], &[0.1235, 1.0]).unwrap(), 0.1).unwrap();
        let a = (-0.1f64 / 0.1235).exp();
        assert!((g.den()[1] + a).abs() < 1e-12);
        assert!((g.num()[0] - 0.1276 * (1.0 - a)).abs() < 1e-12);
        assert!((a - 0.44499).abs() < 1e-5);
    }

    #[test]
    fn second_order_zoh_poles() {
        let g = TransferFunction::continuous(&[1.5], &[1.0, 2.0, 0.75]).unwrap();
        let d = zoh_discretize(&g, 0.1).unwrap();
        let mut p: Vec<f64> = d.poles().iter().map(|z| z.re).collect();
        p.sort_by(f64::total_cmp);
        assert!((p[0] - (-0.15f64).exp()).abs() < 1e-12);
        assert!((p[1] - (-0.05f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn expm_matches_series_oracle() {
        let a = Mat::from_row_slice(3, 3, &[-0.5, 1.2, 0.0, -0.3, -1.1, 0.4, 0.2, 0.0, -2.0]);
        let b = Mat::from_row_slice(3, 1, &[1.0, 0.5, -0.2]);
        let t = 0.37;
        let (phi, gamma) = zoh_matrices(&a, &b, t);
        // Taylor series: Phi = sum (At)^k/k!, Gamma = sum A^k t^{k+1}/(k+1)! B
        let mut p = Mat::identity(3, 3);
        let mut g = Mat::zeros(3, 1);
        let mut term = Mat::identity(3, 3);
        for k in 0..40 {
            if k > 0 {
                term = &term * &a * (t / k as f64);
                p += &term;
            }
            g += &term * &b * (t / (k + 1) as f64);
        }
        assert!((phi - p).norm() < 1e-10);
        assert!((gamma - g).norm() < 1e-10);
    }

    #[test]
    fn ss_round_trips() {
        let g = TransferFunction::discrete(&[0.15], &[1.0, -0.9], 1.0).unwrap();
        let ss = g.to_ss().unwrap();
        assert_eq!(ss.n_states(), 1);
        let h = ss.impulse_response(3);
        assert!((h[0]).abs() < 1e-15 && (h[1] - 0.15).abs() < 1e-15 && (h[2] - 0.135).abs() < 1e-15);
        let pi = TransferFunction::discrete(&[6.0, -1.0], &[1.0, -1.0], 0.1).unwrap();
        assert!(pi.to_ss().unwrap().to_tf().unwrap().approx_eq(&pi, 1e-12));
        let k = TransferFunction::gain(5.0, Domain::Z { period: 1.0 }).unwrap().to_ss().unwrap();
        assert_eq!(k.n_states(), 0);
        assert_eq!(k.d[(0, 0)], 5.0);
    }

    #[test]
    fn freq_points() {
        let g = TransferFunction::discrete(&[1.0], &[1.0, -0.5], 1.0).unwrap();
        assert!((g.freq_point(0.0).unwrap() - c(2.0)).norm() < 1e-15);
        let h = TransferFunction::discrete(&[0.15], &[1.0, -0.9], 1.0).unwrap();
        assert!((h.freq_point(std::f64::consts::PI).unwrap() - c(-0.15 / 1.9)).norm() < 1e-12);
        let int = TransferFunction::discrete(&[1.0], &[1.0, -1.0], 1.0).unwrap();
        assert!(matches!(int.freq_point(0.0), Err(Error::Singular { .. })));
        assert!(matches!(int.to_ss().unwrap().freq_point(0.0), Err(Error::Singular { .. })));
    }

    #[test]
    fn block_algebra() {
        let dz = Domain::Z { period: 1.0 };
        let two = TransferFunction::gain(2.0, dz).unwrap();
        let three = TransferFunction::gain(3.0, dz).unwrap();
        assert_eq!(two.series(&three).unwrap().dc_gain().unwrap(), 6.0);
        let g = TransferFunction::discrete(&[0.7], &[1.0, -1.0], 1.0).unwrap();
        let zero = TransferFunction::gain(0.0, dz).unwrap();
        assert!(g.feedback(&zero).unwrap().approx_eq(&g, 1e-12));
        let one = TransferFunction::gain(1.0, dz).unwrap();
        assert!((g.feedback(&one).unwrap().dc_gain().unwrap() - 1.0).abs() < 1e-12);
        let m1 = TransferFunction::gain(-1.0, dz).unwrap();
        assert!(matches!(one.feedback(&m1), Err(Error::AlgebraicLoop(_))));
    }

    #[test]
    fn ss_feedback_matches_tf() {
        let g = TransferFunction::discrete(&[0.5, 0.2], &[1.0, -1.2, 0.5], 1.0).unwrap();
        let h = TransferFunction::discrete(&[2.0, -1.0], &[1.0, -0.3], 1.0).unwrap();
        let cl = g.to_ss().unwrap().feedback(&h.to_ss().unwrap()).unwrap();
        let tf = g.feedback(&h).unwrap();
        for w in [0.1, 0.7, 2.0] {
            let a = cl.freq_point(w).unwrap()[(0, 0)];
            let b = tf.freq_point(w).unwrap();
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn minreal_cancels() {
        let g = TransferFunction::discrete(&[2.0, -1.0], &[1.0, -1.5, 0.5], 1.0).unwrap();
        let r = g.minreal(1e-8);
        assert_eq!(r.order(), 1);
        assert!(r.approx_eq(&TransferFunction::discrete(&[2.0], &[1.0, -1.0], 1.0).unwrap(), 1e-10));
        assert!((r.freq_point(0.3).unwrap() - g.freq_point(0.3).unwrap()).norm() < 1e-12);
    }

    #[test]
    fn d2c_inverts_zoh() {
        let g = TransferFunction::continuous(&[1.5], &[1.0, 2.0, 0.75]).unwrap();
        let back = d2c_approx(&zoh_discretize(&g, 0.1).unwrap()).unwrap();
        let mut p: Vec<f64> = back.poles().iter().map(|z| z.re).collect();
        p.sort_by(f64::total_cmp);
        assert!((p[0] + 1.5).abs() < 1e-9 && (p[1] + 0.5).abs() < 1e-9);
        assert!(back.approx_eq(&g, 1e-8));
        let first = DiscreteStateSpace::new(
            Mat::from_element(1, 1, (-0.1f64).exp()),
            Mat::from_element(1, 1, 1.0),
            Mat::from_element(1, 1, 1.0),
            Mat::zeros(1, 1),
            0.1,
        )
        .unwrap();
        let s = d2c_approx(&first).unwrap();
        assert!((s.poles()[0] + c(1.0)).norm() < 1e-12);
    }

    #[test]
    fn d2c_rejects_delay_and_negative_axis() {
        let delay = TransferFunction::discrete(&[1.0], &[1.0, 0.0], 1.0).unwrap().to_ss().unwrap();
        assert!(matches!(d2c_approx(&delay), Err(Error::Logarithm(_))));
        let alt = TransferFunction::discrete(&[1.0], &[1.0, 0.5], 1.0).unwrap().to_ss().unwrap();
        assert!(matches!(d2c_approx(&alt), Err(Error::Logarithm(_))));
    }
}
