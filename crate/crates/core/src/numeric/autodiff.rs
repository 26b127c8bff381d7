//! Reverse-mode gradients over a closed set of matrix operations.
//!
//! A [`Tape`] records every intermediate value; [`Tape::backward`] walks the
//! records in reverse. Parameters enter through [`Tape::param`] and receive
//! their gradients via [`ParamStore::accumulate`](super::ParamStore::accumulate).

use std::rc::Rc;

use crate::error::{PllError, Result};
use crate::numeric::{CsrMatrix, Matrix, ParamStore};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Input,
    Param { store: u64, index: usize },
    MatMul(Var, Var),
    MatMulTransposeB(Var, Var),
    SparseRows { lhs: Rc<CsrMatrix>, rhs: Var, rows: Vec<usize> },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Sigmoid(Var),
    Softplus(Var),
    Log { x: Var, floor: f64 },
    Exp(Var),
    Softmax(Var),
    LogSoftmax(Var),
    RowNormalize(Var),
    Sum(Var),
    FrobeniusSq(Var),
    ConcatCols(Var, Var),
    SelectRows(Var, Vec<usize>),
    /// Elementwise op whose value and derivative were computed by the caller.
    Pointwise { x: Var, local: Matrix },
    /// Scalar reduction whose gradient `∂y/∂x` was computed by the caller.
    Reduce { x: Var, local: Matrix },
    #[cfg(test)]
    Faulty(Var),
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar root with respect to every tape entry.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }
}

fn relu(x: f64) -> f64 {
    x.max(0.0)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// Value of a 1×1 entry.
    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        debug_assert_eq!(m.shape(), (1, 1));
        m[(0, 0)]
    }

    /// A constant; no gradient flows out of it.
    pub fn input(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Input)
    }

    pub fn param(&mut self, store: &ParamStore, index: usize) -> Var {
        self.push(
            store.value(index).clone(),
            Op::Param {
                store: store.uid(),
                index,
            },
        )
    }

    pub(crate) fn param_refs(&self) -> impl Iterator<Item = (Var, u64, usize)> + '_ {
        self.nodes.iter().enumerate().filter_map(|(i, n)| match n.op {
            Op::Param { store, index } => Some((Var(i), store, index)),
            _ => None,
        })
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.push(v, Op::MatMul(a, b)))
    }

    /// `a · bᵀ`
    pub fn matmul_transpose_b(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul_transpose_b(self.value(b))?;
        Ok(self.push(v, Op::MatMulTransposeB(a, b)))
    }

    /// Rows `rows` of `lhs · rhs` for a constant sparse `lhs`.
    pub fn sparse_matmul_rows(
        &mut self,
        lhs: &Rc<CsrMatrix>,
        rhs: Var,
        rows: Vec<usize>,
    ) -> Result<Var> {
        let v = lhs.matmul_dense_rows(&rows, self.value(rhs))?;
        Ok(self.push(
            v,
            Op::SparseRows {
                lhs: Rc::clone(lhs),
                rhs,
                rows,
            },
        ))
    }

    /// `lhs · rhs` for a constant sparse `lhs`.
    pub fn sparse_matmul(&mut self, lhs: &Rc<CsrMatrix>, rhs: Var) -> Result<Var> {
        let rows: Vec<usize> = (0..lhs.rows()).collect();
        self.sparse_matmul_rows(lhs, rhs, rows)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).add(self.value(b))?;
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).sub(self.value(b))?;
        Ok(self.push(v, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).hadamard(self.value(b))?;
        Ok(self.push(v, Op::Mul(a, b)))
    }

    /// Adds the 1×m row `bias` to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (am, bm) = (self.value(a), self.value(bias));
        if bm.rows() != 1 || bm.cols() != am.cols() {
            return Err(PllError::shape(
                "add_row",
                format!("1x{}", am.cols()),
                format!("{}x{}", bm.rows(), bm.cols()),
            ));
        }
        let mut v = am.clone();
        for i in 0..v.rows() {
            for (o, b) in v.row_mut(i).iter_mut().zip(bm.row(0)) {
                *o += b;
            }
        }
        Ok(self.push(v, Op::AddRow(a, bias)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).scale(s);
        self.push(v, Op::Scale(a, s))
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).map(|x| x + s);
        self.push(v, Op::AddScalar(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(relu);
        self.push(v, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let v = self.value(a).map(softplus);
        self.push(v, Op::Softplus(a))
    }

    /// `ln max(x, floor)`; the gradient is zero where the floor is active.
    pub fn log_floored(&mut self, a: Var, floor: f64) -> Var {
        let v = self.value(a).map(|x| x.max(floor).ln());
        self.push(v, Op::Log { x: a, floor })
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.log_floored(a, 0.0)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::exp);
        self.push(v, Op::Exp(a))
    }

    pub fn softmax(&mut self, a: Var) -> Var {
        let v = self.value(a).softmax_rows();
        self.push(v, Op::Softmax(a))
    }

    pub fn log_softmax(&mut self, a: Var) -> Var {
        let mut v = self.value(a).clone();
        for i in 0..v.rows() {
            let row = v.row_mut(i);
            let lse = super::matrix::log_sum_exp(row);
            row.iter_mut().for_each(|x| *x -= lse);
        }
        self.push(v, Op::LogSoftmax(a))
    }

    pub fn row_normalize(&mut self, a: Var) -> Var {
        let v = self.value(a).row_normalized();
        self.push(v, Op::RowNormalize(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        self.push(Matrix::filled(1, 1, s), Op::Sum(a))
    }

    /// Squared Frobenius norm.
    pub fn frobenius_sq(&mut self, a: Var) -> Var {
        let s = self.value(a).as_slice().iter().map(|x| x * x).sum();
        self.push(Matrix::filled(1, 1, s), Op::FrobeniusSq(a))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).concat_cols(self.value(b))?;
        Ok(self.push(v, Op::ConcatCols(a, b)))
    }

    pub fn select_rows(&mut self, a: Var, rows: Vec<usize>) -> Var {
        let v = self.value(a).select_rows(&rows);
        self.push(v, Op::SelectRows(a, rows))
    }

    /// Records `y = value` with elementwise derivative `∂yᵢ/∂xᵢ = local`.
    pub fn pointwise(&mut self, x: Var, value: Matrix, local: Matrix) -> Result<Var> {
        let xs = self.value(x).shape();
        if value.shape() != xs || local.shape() != xs {
            return Err(PllError::shape(
                "pointwise",
                format!("{xs:?}"),
                format!("{:?}/{:?}", value.shape(), local.shape()),
            ));
        }
        Ok(self.push(value, Op::Pointwise { x, local }))
    }

    /// Records a scalar `y = value` with gradient `∂y/∂x = local`.
    pub fn reduce(&mut self, x: Var, value: f64, local: Matrix) -> Result<Var> {
        let xs = self.value(x).shape();
        if local.shape() != xs {
            return Err(PllError::shape(
                "reduce",
                format!("{xs:?}"),
                format!("{:?}", local.shape()),
            ));
        }
        Ok(self.push(Matrix::filled(1, 1, value), Op::Reduce { x, local }))
    }

    /// Square with a deliberately wrong backward rule (`3x`), for detector tests.
    #[cfg(test)]
    pub(crate) fn faulty_square(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x * x);
        self.push(v, Op::Faulty(a))
    }

    /// Reverse sweep from a 1×1 `root`.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        if self.value(root).shape() != (1, 1) {
            return Err(PllError::shape(
                "backward",
                "1x1 root",
                format!("{:?}", self.value(root).shape()),
            ));
        }
        let mut grads: Vec<Option<Matrix>> = (0..=root.0).map(|_| None).collect();
        grads[root.0] = Some(Matrix::filled(1, 1, 1.0));

        for idx in (0..=root.0).rev() {
            if matches!(self.nodes[idx].op, Op::Input | Op::Param { .. }) {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            let y = &node.value;
            let mut acc = |v: Var, delta: Matrix| match &mut grads[v.0] {
                Some(existing) => existing
                    .add_assign(&delta)
                    .expect("gradient shape matches value shape"),
                slot @ None => *slot = Some(delta),
            };
            match &node.op {
                Op::Input | Op::Param { .. } => {}
                Op::MatMul(a, b) => {
                    acc(*a, g.matmul_transpose_b(self.value(*b))?);
                    acc(*b, self.value(*a).transpose_matmul(&g)?);
                }
                Op::MatMulTransposeB(a, b) => {
                    acc(*a, g.matmul(self.value(*b))?);
                    acc(*b, g.transpose_matmul(self.value(*a))?);
                }
                Op::SparseRows { lhs, rhs, rows } => {
                    let x = self.value(*rhs);
                    let mut gx = Matrix::zeros(x.rows(), x.cols());
                    for (o, &i) in rows.iter().enumerate() {
                        for (j, w) in lhs.row(i) {
                            for (dst, s) in gx.row_mut(j).iter_mut().zip(g.row(o)) {
                                *dst += w * s;
                            }
                        }
                    }
                    acc(*rhs, gx);
                }
                Op::Add(a, b) => {
                    acc(*a, g.clone());
                    acc(*b, g);
                }
                Op::Sub(a, b) => {
                    acc(*b, g.scale(-1.0));
                    acc(*a, g);
                }
                Op::Mul(a, b) => {
                    acc(*a, g.hadamard(self.value(*b))?);
                    acc(*b, g.hadamard(self.value(*a))?);
                }
                Op::AddRow(a, b) => {
                    acc(*b, Matrix::row_vector(&g.col_sums()));
                    acc(*a, g);
                }
                Op::Scale(a, s) => acc(*a, g.scale(*s)),
                Op::AddScalar(a) => acc(*a, g),
                Op::Relu(a) => {
                    let gx = g.zip_map(self.value(*a), |gi, x| if x > 0.0 { gi } else { 0.0 })?;
                    acc(*a, gx);
                }
                Op::Sigmoid(a) => acc(*a, g.zip_map(y, |gi, s| gi * s * (1.0 - s))?),
                Op::Softplus(a) => acc(*a, g.zip_map(self.value(*a), |gi, x| gi * sigmoid(x))?),
                Op::Log { x, floor } => {
                    let gx = g.zip_map(self.value(*x), |gi, xi| {
                        if xi > *floor {
                            gi / xi
                        } else {
                            0.0
                        }
                    })?;
                    acc(*x, gx);
                }
                Op::Exp(a) => acc(*a, g.hadamard(y)?),
                Op::Softmax(a) => {
                    let mut gx = g.clone();
                    for i in 0..gx.rows() {
                        let yr = y.row(i);
                        let dot: f64 = g.row(i).iter().zip(yr).map(|(a, b)| a * b).sum();
                        for (o, &yv) in gx.row_mut(i).iter_mut().zip(yr) {
                            *o = yv * (*o - dot);
                        }
                    }
                    acc(*a, gx);
                }
                Op::LogSoftmax(a) => {
                    let mut gx = g.clone();
                    for i in 0..gx.rows() {
                        let total: f64 = g.row(i).iter().sum();
                        for (o, &ly) in gx.row_mut(i).iter_mut().zip(y.row(i)) {
                            *o -= ly.exp() * total;
                        }
                    }
                    acc(*a, gx);
                }
                Op::RowNormalize(a) => {
                    let x = self.value(*a);
                    let mut gx = g.clone();
                    for i in 0..gx.rows() {
                        let s: f64 = x.row(i).iter().sum();
                        let yr = y.row(i);
                        let dot: f64 = g.row(i).iter().zip(yr).map(|(a, b)| a * b).sum();
                        for o in gx.row_mut(i).iter_mut() {
                            *o = (*o - dot) / s;
                        }
                    }
                    acc(*a, gx);
                }
                Op::Sum(a) => {
                    let (r, c) = self.value(*a).shape();
                    acc(*a, Matrix::filled(r, c, g[(0, 0)]));
                }
                Op::FrobeniusSq(a) => acc(*a, self.value(*a).scale(2.0 * g[(0, 0)])),
                Op::ConcatCols(a, b) => {
                    let ac = self.value(*a).cols();
                    let bc = self.value(*b).cols();
                    let ga = Matrix::from_fn(g.rows(), ac, |i, j| g[(i, j)]);
                    let gb = Matrix::from_fn(g.rows(), bc, |i, j| g[(i, ac + j)]);
                    acc(*a, ga);
                    acc(*b, gb);
                }
                Op::SelectRows(a, rows) => {
                    let x = self.value(*a);
                    let mut gx = Matrix::zeros(x.rows(), x.cols());
                    for (o, &i) in rows.iter().enumerate() {
                        for (dst, s) in gx.row_mut(i).iter_mut().zip(g.row(o)) {
                            *dst += s;
                        }
                    }
                    acc(*a, gx);
                }
                Op::Pointwise { x, local } => acc(*x, g.hadamard(local)?),
                Op::Reduce { x, local } => acc(*x, local.scale(g[(0, 0)])),
                #[cfg(test)]
                Op::Faulty(a) => acc(*a, g.zip_map(self.value(*a), |gi, x| gi * 3.0 * x)?),
            }
        }
        grads.resize_with(self.nodes.len(), || None);
        Ok(Gradients { grads })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn numeric_grad(x: &Matrix, f: impl Fn(&Matrix) -> f64) -> Matrix {
        let h = 1e-6;
        let mut g = Matrix::zeros(x.rows(), x.cols());
        for k in 0..x.len() {
            let mut xp = x.clone();
            xp.as_mut_slice()[k] += h;
            let mut xm = x.clone();
            xm.as_mut_slice()[k] -= h;
            g.as_mut_slice()[k] = (f(&xp) - f(&xm)) / (2.0 * h);
        }
        g
    }

    fn check_unary(build: impl Fn(&mut Tape, Var) -> Var, x: Matrix) {
        let f = |m: &Matrix| {
            let mut t = Tape::new();
            let v = t.input(m.clone());
            let y = build(&mut t, v);
            let (r, c) = t.value(y).shape();
            let w = t.input(Matrix::from_fn(r, c, |i, j| {
                0.3 + 0.1 * i as f64 - 0.2 * j as f64
            }));
            let p = t.mul(y, w).unwrap();
            let s = t.sum(p);
            t.scalar(s)
        };
        let mut t = Tape::new();
        let v = t.input(x.clone());
        let y = build(&mut t, v);
        let (r, c) = t.value(y).shape();
        let w = t.input(Matrix::from_fn(r, c, |i, j| {
            0.3 + 0.1 * i as f64 - 0.2 * j as f64
        }));
        let p = t.mul(y, w).unwrap();
        let s = t.sum(p);
        let g = t.backward(s).unwrap();
        let analytic = g.get(v).unwrap();
        let fd = numeric_grad(&x, f);
        let err = analytic.sub(&fd).unwrap().max_abs();
        assert!(err < 1e-6, "max abs err {err}\n{analytic:?}\n{fd:?}");
    }

    fn sample_x() -> Matrix {
        Matrix::from_rows(&[[0.3, -1.2, 2.0], [1.5, 0.7, -0.4]]).unwrap()
    }

    #[test]
    fn unary_ops_match_finite_differences() {
        check_unary(|t, v| t.relu(v), sample_x());
        check_unary(|t, v| t.sigmoid(v), sample_x());
        check_unary(|t, v| t.softplus(v), sample_x());
        check_unary(|t, v| t.exp(v), sample_x());
        check_unary(|t, v| t.softmax(v), sample_x());
        check_unary(|t, v| t.log_softmax(v), sample_x());
        check_unary(|t, v| t.scale(v, -2.5), sample_x());
        check_unary(|t, v| t.add_scalar(v, 4.0), sample_x());
        let pos = sample_x().map(|x| x.abs() + 0.5);
        check_unary(|t, v| t.log(v), pos.clone());
        check_unary(|t, v| t.row_normalize(v), pos);
        check_unary(|t, v| t.select_rows(v, vec![1, 0, 1]), sample_x());
        check_unary(
            |t, v| {
                let s = t.frobenius_sq(v);
                s
            },
            sample_x(),
        );
    }

    #[test]
    fn binary_ops_match_finite_differences() {
        let b = Matrix::from_rows(&[[0.5, 1.0], [-1.0, 2.0], [0.25, 0.0]]).unwrap();
        check_unary(
            |t, v| {
                let bv = t.input(b.clone());
                t.matmul(v, bv).unwrap()
            },
            sample_x(),
        );
        check_unary(
            |t, v| {
                let bv = t.input(sample_x().map(|x| x * 0.5));
                t.matmul_transpose_b(v, bv).unwrap()
            },
            sample_x(),
        );
        check_unary(
            |t, v| {
                let vt = t.select_rows(v, vec![0, 1]);
                let p = t.matmul_transpose_b(v, vt).unwrap();
                p
            },
            sample_x(),
        );
        check_unary(
            |t, v| {
                let c = t.input(Matrix::filled(2, 1, 7.0));
                t.concat_cols(c, v).unwrap()
            },
            sample_x(),
        );
        check_unary(
            |t, v| {
                let w = t.sigmoid(v);
                let p = t.mul(v, w).unwrap();
                let q = t.sub(p, v).unwrap();
                t.add(q, w).unwrap()
            },
            sample_x(),
        );
    }

    #[test]
    fn add_row_gradient_reaches_bias() {
        let bias = Matrix::row_vector(&[0.1, -0.2, 0.3]);
        check_unary(
            |t, v| {
                let x = t.input(sample_x());
                t.add_row(x, v).unwrap()
            },
            bias,
        );
    }

    #[test]
    fn sparse_rows_gradient() {
        let dense = Matrix::from_rows(&[[1.0, 0.0], [0.5, 0.5], [0.0, 2.0]]).unwrap();
        let s = Rc::new(CsrMatrix::from_dense(&dense));
        check_unary(
            |t, v| t.sparse_matmul_rows(&s, v, vec![2, 0]).unwrap(),
            Matrix::from_rows(&[[0.3, 1.0, -1.0], [2.0, 0.5, 0.1]]).unwrap(),
        );
    }

    #[test]
    fn backward_requires_scalar_root() {
        let mut t = Tape::new();
        let v = t.input(Matrix::zeros(2, 2));
        assert!(t.backward(v).is_err());
    }

    #[test]
    fn gradient_accumulates_over_reuse() {
        let mut t = Tape::new();
        let x = t.input(Matrix::filled(1, 1, 3.0));
        let y = t.mul(x, x).unwrap();
        let z = t.add(y, x).unwrap();
        let s = t.sum(z);
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap()[(0, 0)], 7.0);
    }
}
