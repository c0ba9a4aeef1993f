#![allow(dead_code)]

use dualrate::lifting::DualRateScheme;
use dualrate::lti::{DiscreteStateSpace, Mat};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random stable SISO system with n states, spectral radius in [0.1, 0.9].
pub fn stable_siso(rng: &mut ChaCha8Rng, n: usize, period: f64, feedthrough: bool) -> DiscreteStateSpace {
    let mut a = Mat::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let rho = a.complex_eigenvalues().iter().map(|e| e.norm()).fold(0.0, f64::max);
    let target = rng.random_range(0.1..0.9);
    if rho > 0.0 {
        a *= target / rho;
    }
    let b = Mat::from_fn(n, 1, |_, _| rng.random_range(-1.0..1.0));
    let c = Mat::from_fn(1, n, |_, _| rng.random_range(-1.0..1.0));
    let d = Mat::from_element(1, 1, if feedthrough { rng.random_range(-1.0..1.0) } else { 0.0 });
    DiscreteStateSpace::new(a, b, c, d, period).unwrap()
}

/// Coprime (n_u, n_y) with both in 1..=4.
pub fn coprime_pair(rng: &mut ChaCha8Rng) -> (usize, usize) {
    loop {
        let (a, b) = (rng.random_range(1..=4usize), rng.random_range(1..=4usize));
        if dualrate::lifting::gcd(a, b) == 1 {
            return (a, b);
        }
    }
}

/// Runs `sys` at the base period. Held input: each u value persists until the next update;
/// impulsive input: u is applied only on update slots and is zero otherwise.
/// Outputs are read every `slots / n_y` base steps, before the state update.
pub fn direct_multirate(sys: &DiscreteStateSpace, scheme: &DualRateScheme, u: &[f64], held: bool) -> Vec<f64> {
    let slots = scheme.slots();
    let (isp, osp) = (slots / scheme.n_u, slots / scheme.n_y);
    let steps = u.len() * isp;
    let mut x = DVector::zeros(sys.n_states());
    let mut y = vec![];
    for s in 0..steps {
        let v = if s % isp == 0 || held { u[s / isp] } else { 0.0 };
        if s % osp == 0 {
            y.push((&sys.c * &x)[0] + sys.d[(0, 0)] * v);
        }
        x = &sys.a * &x + &sys.b * v;
    }
    y
}

/// Stacks a flat slot sequence into metaperiod vectors of length `per`.
pub fn stack(u: &[f64], per: usize) -> Vec<DVector<f64>> {
    u.chunks(per).map(DVector::from_column_slice).collect()
}

pub fn flatten(v: &[DVector<f64>]) -> Vec<f64> {
    v.iter().flat_map(|x| x.iter().copied().collect::<Vec<_>>()).collect()
}

/// Least-squares phasor H with y ≈ Re(H e^{jωt}).
pub fn phasor(t: &[f64], y: &[f64], omega: f64) -> num_complex::Complex64 {
    let (mut ss, mut sc, mut cc, mut ys, mut yc) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (ti, yi) in t.iter().zip(y) {
        let (s, c) = (omega * ti).sin_cos();
        ss += s * s;
        sc += s * c;
        cc += c * c;
        ys += yi * s;
        yc += yi * c;
    }
    let det = ss * cc - sc * sc;
    let a = (ys * cc - yc * sc) / det;
    let b = (yc * ss - ys * sc) / det;
    // y = a sin + b cos = Re((b - j a) e^{jωt})
    num_complex::Complex64::new(b, -a)
}

/// Classical RK4 on x' = A x + B u with constant u.
pub fn rk4_step(a: &Mat, b: &Mat, x: &DVector<f64>, u: f64, h: f64) -> DVector<f64> {
    let f = |x: &DVector<f64>| a * x + b.column(0) * u;
    let k1 = f(x);
    let k2 = f(&(x + &k1 * (h / 2.0)));
    let k3 = f(&(x + &k2 * (h / 2.0)));
    let k4 = f(&(x + &k3 * h));
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// Controllable canonical form of a strictly proper num/den (descending, den monic after scaling).
pub fn ccf(num: &[f64], den: &[f64]) -> (Mat, Mat, Mat) {
    let n = den.len() - 1;
    let lead = den[0];
    let a = Mat::from_fn(n, n, |i, j| if i + 1 == j { 1.0 } else if i == n - 1 { -den[n - j] / lead } else { 0.0 });
    let mut b = Mat::zeros(n, 1);
    b[(n - 1, 0)] = 1.0;
    let mut padded = vec![0.0; n + 1 - num.len()];
    padded.extend_from_slice(num);
    let c = Mat::from_fn(1, n, |_, j| padded[n - j] / lead);
    (a, b, c)
}

/// Least-squares (H, c) with y ≈ Re(H e^{jωt}) + c.
pub fn phasor_with_offset(t: &[f64], y: &[f64], omega: f64) -> (num_complex::Complex64, f64) {
    let x = Mat::from_fn(t.len(), 3, |i, j| match j {
        0 => (omega * t[i]).sin(),
        1 => (omega * t[i]).cos(),
        _ => 1.0,
    });
    let rhs = x.transpose() * DVector::from_column_slice(y);
    let sol = (x.transpose() * &x).lu().solve(&rhs).unwrap();
    (num_complex::Complex64::new(sol[1], -sol[0]), sol[2])
}
