//! Closing a network of same-period blocks into one state-space realization.

use crate::error::{Error, Result};
use crate::lti::{DiscreteStateSpace, Mat};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockId(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Signal {
    /// Output `index` of a block.
    Block(BlockId, usize),
    /// External input `index`.
    External(usize),
}

/// Block inputs are weighted sums of block outputs and external inputs.
#[derive(Clone, Debug)]
pub struct Network {
    period: f64,
    n_external: usize,
    blocks: Vec<(String, DiscreteStateSpace)>,
    wires: Vec<(BlockId, usize, Signal, f64)>,
    outputs: Vec<Vec<(Signal, f64)>>,
}

impl Network {
    pub fn new(period: f64, n_external: usize) -> Self {
        Network { period, n_external, blocks: vec![], wires: vec![], outputs: vec![] }
    }

    pub fn add_block(&mut self, name: &str, ss: &DiscreteStateSpace) -> Result<BlockId> {
        if (ss.period - self.period).abs() > 1e-12 * self.period {
            return Err(Error::PeriodMismatch(ss.period, self.period));
        }
        self.blocks.push((name.to_string(), ss.clone()));
        Ok(BlockId(self.blocks.len() - 1))
    }

    /// Adds `gain * from` to input `input` of block `to`.
    pub fn wire(&mut self, from: Signal, to: BlockId, input: usize, gain: f64) {
        self.wires.push((to, input, from, gain));
    }

    /// Appends an external output equal to the weighted sum of `terms`; returns its index.
    pub fn add_output(&mut self, terms: Vec<(Signal, f64)>) -> usize {
        self.outputs.push(terms);
        self.outputs.len() - 1
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn build(&self) -> Result<DiscreteStateSpace> {
        let mut xo = vec![0];
        let mut io = vec![0];
        let mut oo = vec![0];
        for (_, b) in &self.blocks {
            xo.push(xo.last().unwrap() + b.n_states());
            io.push(io.last().unwrap() + b.n_inputs());
            oo.push(oo.last().unwrap() + b.n_outputs());
        }
        let (nx, nv, nw) = (*xo.last().unwrap(), *io.last().unwrap(), *oo.last().unwrap());
        let (ne, nz) = (self.n_external, self.outputs.len());
        let mut a = Mat::zeros(nx, nx);
        let mut b = Mat::zeros(nx, nv);
        let mut c = Mat::zeros(nw, nx);
        let mut d = Mat::zeros(nw, nv);
        for (i, (_, blk)) in self.blocks.iter().enumerate() {
            let (n, m, p) = (blk.n_states(), blk.n_inputs(), blk.n_outputs());
            a.view_mut((xo[i], xo[i]), (n, n)).copy_from(&blk.a);
            b.view_mut((xo[i], io[i]), (n, m)).copy_from(&blk.b);
            c.view_mut((oo[i], xo[i]), (p, n)).copy_from(&blk.c);
            d.view_mut((oo[i], io[i]), (p, m)).copy_from(&blk.d);
        }
        let check = |s: &Signal| -> Result<()> {
            match *s {
                Signal::Block(BlockId(k), j) if k < self.blocks.len() && j < self.blocks[k].1.n_outputs() => Ok(()),
                Signal::External(j) if j < ne => Ok(()),
                _ => Err(Error::Dimension(format!("signal {s:?} does not exist"))),
            }
        };
        let mut k = Mat::zeros(nv, nw);
        let mut e = Mat::zeros(nv, ne);
        for (BlockId(to), inp, from, g) in &self.wires {
            check(from)?;
            if *to >= self.blocks.len() || *inp >= self.blocks[*to].1.n_inputs() {
                return Err(Error::Dimension(format!("block {to} has no input {inp}")));
            }
            let row = io[*to] + inp;
            match *from {
                Signal::Block(BlockId(f), j) => k[(row, oo[f] + j)] += g,
                Signal::External(j) => e[(row, j)] += g,
            }
        }
        let mut pm = Mat::zeros(nz, nw);
        let mut q = Mat::zeros(nz, ne);
        for (r, terms) in self.outputs.iter().enumerate() {
            for (s, g) in terms {
                check(s)?;
                match *s {
                    Signal::Block(BlockId(f), j) => pm[(r, oo[f] + j)] += g,
                    Signal::External(j) => q[(r, j)] += g,
                }
            }
        }
        // W = C x + D V, V = K W + E r  =>  W = S (C x + D E r), S = (I - D K)^{-1}
        let s = (Mat::identity(nw, nw) - &d * &k).try_inverse().ok_or_else(|| {
            let names: Vec<_> = self.blocks.iter().map(|(n, _)| n.as_str()).collect();
            Error::AlgebraicLoop(format!("I - D K ({nw}x{nw}) is singular for blocks [{}]", names.join(", ")))
        })?;
        let sc = &s * &c;
        let sde = &s * &d * &e;
        let acl = &a + &b * &k * &sc;
        let bcl = &b * &k * &sde + &b * &e;
        let ccl = &pm * &sc;
        let dcl = &pm * &sde + q;
        DiscreteStateSpace::new(acl, bcl, ccl, dcl, self.period)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::TransferFunction;

    #[test]
    fn unity_feedback_matches_tf_algebra() {
        let g = TransferFunction::discrete(&[0.5, 0.1], &[1.0, -1.3, 0.4], 1.0).unwrap();
        let c = TransferFunction::discrete(&[2.0, -1.5], &[1.0, -1.0], 1.0).unwrap();
        let mut net = Network::new(1.0, 1);
        let bc = net.add_block("C", &c.to_ss().unwrap()).unwrap();
        let bg = net.add_block("G", &g.to_ss().unwrap()).unwrap();
        net.wire(Signal::External(0), bc, 0, 1.0);
        net.wire(Signal::Block(bg, 0), bc, 0, -1.0);
        net.wire(Signal::Block(bc, 0), bg, 0, 1.0);
        net.add_output(vec![(Signal::Block(bg, 0), 1.0)]);
        let cl = net.build().unwrap();
        let want = c.series(&g).unwrap().feedback(&TransferFunction::gain(1.0, g.domain()).unwrap()).unwrap();
        for w in [0.05, 0.5, 2.5] {
            assert!((cl.freq_point(w).unwrap()[(0, 0)] - want.freq_point(w).unwrap()).norm() < 1e-10);
        }
    }

    #[test]
    fn algebraic_loop_detected() {
        let one = DiscreteStateSpace::gain(Mat::from_element(1, 1, 1.0), 1.0).unwrap();
        let mut net = Network::new(1.0, 1);
        let b = net.add_block("K", &one).unwrap();
        net.wire(Signal::Block(b, 0), b, 0, 1.0);
        assert!(matches!(net.build(), Err(Error::AlgebraicLoop(_))));
    }

    #[test]
    fn period_and_dimension_errors() {
        let one = DiscreteStateSpace::gain(Mat::from_element(1, 1, 1.0), 2.0).unwrap();
        let mut net = Network::new(1.0, 1);
        assert!(net.add_block("K", &one).is_err());
        let ok = DiscreteStateSpace::gain(Mat::from_element(1, 1, 1.0), 1.0).unwrap();
        let b = net.add_block("K", &ok).unwrap();
        net.wire(Signal::External(3), b, 0, 1.0);
        assert!(matches!(net.build(), Err(Error::Dimension(_))));
    }
}
