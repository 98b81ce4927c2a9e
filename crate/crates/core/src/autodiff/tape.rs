//! Scalar computation graph with a single reverse sweep.
//!
//! Nodes are appended in evaluation order, so operands always precede
//! their results and the reverse sweep is a plain backwards walk.

use crate::error::{GasError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Neg(Var),
    Scale(Var, f64),
    Offset(Var),
    Tanh(Var),
}

#[derive(Clone, Copy, Debug)]
struct Node {
    op: Op,
    value: f64,
}

#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, value: f64) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    /// An independent input (parameter, coordinate or constant).
    pub fn var(&mut self, value: f64) -> Var {
        self.push(Op::Leaf, value)
    }

    pub fn value(&self, v: Var) -> f64 {
        self.nodes[v.0].value
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(Op::Add(a, b), v)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        self.push(Op::Sub(a, b), v)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        self.push(Op::Mul(a, b), v)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        let v = -self.value(a);
        self.push(Op::Neg(a), v)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) * c;
        self.push(Op::Scale(a, c), v)
    }

    /// `a + c` for a constant `c`.
    pub fn offset(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) + c;
        self.push(Op::Offset(a), v)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).tanh();
        self.push(Op::Tanh(a), v)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.mul(a, a)
    }

    pub fn sum(&mut self, terms: &[Var]) -> Var {
        let mut it = terms.iter().copied();
        let first = match it.next() {
            Some(v) => v,
            None => return self.var(0.0),
        };
        it.fold(first, |acc, t| self.add(acc, t))
    }

    /// Adjoints of `output` with respect to every node, indexed by
    /// [`Var::index`].
    pub fn gradient(&self, output: Var) -> Result<Vec<f64>> {
        let mut adj = vec![0.0f64; output.0 + 1];
        adj[output.0] = 1.0;
        for i in (0..=output.0).rev() {
            let node = self.nodes[i];
            if !node.value.is_finite() {
                return Err(GasError::NonFinite { stage: "tape forward", index: i });
            }
            let g = adj[i];
            if g == 0.0 {
                continue;
            }
            if !g.is_finite() {
                return Err(GasError::NonFinite { stage: "tape reverse", index: i });
            }
            match node.op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    adj[a.0] += g;
                    adj[b.0] += g;
                }
                Op::Sub(a, b) => {
                    adj[a.0] += g;
                    adj[b.0] -= g;
                }
                Op::Mul(a, b) => {
                    adj[a.0] += g * self.nodes[b.0].value;
                    adj[b.0] += g * self.nodes[a.0].value;
                }
                Op::Neg(a) => adj[a.0] -= g,
                Op::Scale(a, c) => adj[a.0] += g * c,
                Op::Offset(a) => adj[a.0] += g,
                Op::Tanh(a) => adj[a.0] += g * (1.0 - node.value * node.value),
            }
        }
        Ok(adj)
    }
}

/// Jet of tape variables: value, first and second derivative along one axis.
#[derive(Clone, Copy, Debug)]
pub struct TapeJet {
    pub value: Var,
    pub d1: Var,
    pub d2: Var,
}

impl TapeJet {
    pub fn tanh(self, tape: &mut Tape) -> TapeJet {
        let t = tape.tanh(self.value);
        let t2 = tape.square(t);
        let one = tape.var(1.0);
        let dt = tape.sub(one, t2);
        let tdt = tape.mul(t, dt);
        let d2t = tape.scale(tdt, -2.0);
        let d1 = tape.mul(dt, self.d1);
        let d1sq = tape.square(self.d1);
        let curv = tape.mul(d2t, d1sq);
        let lin = tape.mul(dt, self.d2);
        let d2 = tape.add(curv, lin);
        TapeJet { value: t, d1, d2 }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_and_tanh() {
        let mut t = Tape::new();
        let x = t.var(0.5);
        let y = t.var(-1.5);
        let xy = t.mul(x, y);
        let th = t.tanh(xy);
        let out = t.add(th, x);
        let g = t.gradient(out).unwrap();
        let s = 1.0 - (-0.75f64).tanh().powi(2);
        assert!((g[x.index()] - (s * -1.5 + 1.0)).abs() < 1e-15);
        assert!((g[y.index()] - s * 0.5).abs() < 1e-15);
    }

    #[test]
    fn reused_node_accumulates() {
        let mut t = Tape::new();
        let x = t.var(3.0);
        let sq = t.square(x);
        let out = t.scale(sq, 2.0);
        let g = t.gradient(out).unwrap();
        assert_eq!(g[x.index()], 12.0);
    }

    #[test]
    fn non_finite_is_reported() {
        let mut t = Tape::new();
        let x = t.var(f64::INFINITY);
        let y = t.scale(x, 0.0);
        assert!(t.gradient(y).is_err());
    }
}
