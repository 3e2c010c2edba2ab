//! Dense row-major `f64` matrices.
//!
//! A [`Tensor`] is an immutable value once constructed. Every operation
//! returns a fresh tensor; gradient tracking lives on the [`Tape`](super::Tape).

use std::fmt;

use crate::error::{Error, Result};

/// Smallest denominator magnitude accepted by checked division.
pub const DIV_FLOOR: f64 = 1e-12;

#[derive(Clone, PartialEq)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Tanh,
    Sigmoid,
    Exp,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReduceKind {
    Mean,
    Sum,
    /// Variance normalised by the element count N, not N - 1.
    VarPopulation,
}

/// Which axis a reduction collapses.
///
/// `Cols` collapses the columns and yields a `rows x 1` column vector,
/// `Rows` collapses the rows and yields a `1 x cols` row vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Rows,
    Cols,
    All,
}

/// How the right operand of a binary op is expanded to the left operand's shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Broadcast {
    None,
    Scalar,
    /// `rows x 1`, replicated across columns.
    Column,
    /// `1 x cols`, replicated across rows (bias vectors).
    Row,
}

impl Broadcast {
    pub fn resolve(op: &'static str, a: (usize, usize), b: (usize, usize)) -> Result<Self> {
        if a == b {
            Ok(Broadcast::None)
        } else if b == (1, 1) {
            Ok(Broadcast::Scalar)
        } else if b == (a.0, 1) {
            Ok(Broadcast::Column)
        } else if b == (1, a.1) {
            Ok(Broadcast::Row)
        } else {
            Err(Error::Dimension {
                op,
                left: a,
                right: b,
            })
        }
    }

    #[inline]
    pub(crate) fn index(self, r: usize, c: usize, cols: usize) -> usize {
        match self {
            Broadcast::None => r * cols + c,
            Broadcast::Scalar => 0,
            Broadcast::Column => r,
            Broadcast::Row => c,
        }
    }
}

impl Tensor {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension {
                op: "new",
                left: (rows, cols),
                right: (data.len(), 1),
            });
        }
        Ok(Tensor { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::full(rows, cols, 0.0)
    }

    pub fn ones(rows: usize, cols: usize) -> Self {
        Self::full(rows, cols, 1.0)
    }

    pub fn full(rows: usize, cols: usize, value: f64) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self::full(1, 1, value)
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    /// `n x 1` column vector.
    pub fn column(values: Vec<f64>) -> Self {
        Tensor {
            rows: values.len(),
            cols: 1,
            data: values,
        }
    }

    /// `1 x n` row vector.
    pub fn row_vector(values: Vec<f64>) -> Self {
        Tensor {
            rows: 1,
            cols: values.len(),
            data: values,
        }
    }

    /// Builds a tensor from equally sized rows. Panics on ragged input.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), cols, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        Tensor {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Tensor { rows, cols, data }
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Value of a `1 x 1` tensor.
    pub fn item(&self) -> Result<f64> {
        if self.shape() != (1, 1) {
            return Err(Error::Contract(format!(
                "item() on non-scalar tensor of shape {:?}",
                self.shape()
            )));
        }
        Ok(self.data[0])
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        if self.cols != other.rows {
            return Err(Error::Dimension {
                op: "matmul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let (m, k, n) = (self.rows, self.cols, other.cols);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let out_row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let a = self.data[i * k + p];
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[p * n..(p + 1) * n];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(Tensor {
            rows: m,
            cols: n,
            data: out,
        })
    }

    pub fn transpose(&self) -> Tensor {
        Tensor::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    /// Pointwise binary op with right-operand broadcasting. Division is checked
    /// against [`DIV_FLOOR`].
    pub fn binary(&self, op: BinaryOp, other: &Tensor) -> Result<Tensor> {
        if op == BinaryOp::Div {
            if let Some(v) = other.data.iter().find(|v| v.abs() < DIV_FLOOR) {
                return Err(Error::Domain(format!(
                    "division by {v:e}, below the floor {DIV_FLOOR:e}"
                )));
            }
        }
        self.binary_unchecked(op, other)
    }

    /// Like [`Tensor::binary`] but skips the division floor check.
    pub fn binary_unchecked(&self, op: BinaryOp, other: &Tensor) -> Result<Tensor> {
        let bc = Broadcast::resolve(op_name(op), self.shape(), other.shape())?;
        let cols = self.cols;
        let f: fn(f64, f64) -> f64 = match op {
            BinaryOp::Add => |a, b| a + b,
            BinaryOp::Sub => |a, b| a - b,
            BinaryOp::Mul => |a, b| a * b,
            BinaryOp::Div => |a, b| a / b,
        };
        let mut data = Vec::with_capacity(self.data.len());
        for r in 0..self.rows {
            for c in 0..cols {
                data.push(f(self.data[r * cols + c], other.data[bc.index(r, c, cols)]));
            }
        }
        Ok(Tensor {
            rows: self.rows,
            cols,
            data,
        })
    }

    pub fn unary(&self, op: UnaryOp) -> Result<Tensor> {
        Ok(match op {
            UnaryOp::Tanh => self.map(f64::tanh),
            UnaryOp::Sigmoid => self.map(sigmoid),
            UnaryOp::Exp => self.map(f64::exp),
            UnaryOp::Log => {
                if let Some(v) = self.data.iter().find(|&&v| v <= 0.0 || v.is_nan()) {
                    return Err(Error::Domain(format!("log of non-positive value {v}")));
                }
                self.map(f64::ln)
            }
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(BinaryOp::Add, other)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(BinaryOp::Sub, other)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(BinaryOp::Mul, other)
    }

    pub fn div(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(BinaryOp::Div, other)
    }

    pub fn scale(&self, k: f64) -> Tensor {
        self.map(|v| v * k)
    }

    pub fn reduce(&self, kind: ReduceKind, axis: Axis) -> Result<Tensor> {
        let (groups, count) = match axis {
            Axis::Cols => (self.rows, self.cols),
            Axis::Rows => (self.cols, self.rows),
            Axis::All => (1, self.rows * self.cols),
        };
        if count == 0 {
            return Err(Error::Domain(format!(
                "reduction over an empty axis (shape {:?})",
                self.shape()
            )));
        }
        let members = |g: usize| -> Box<dyn Iterator<Item = f64> + '_> {
            match axis {
                Axis::Cols => Box::new(self.row(g).iter().copied()),
                Axis::Rows => Box::new((0..self.rows).map(move |r| self.get(r, g))),
                Axis::All => Box::new(self.data.iter().copied()),
            }
        };
        let n = count as f64;
        let out: Vec<f64> = (0..groups)
            .map(|g| {
                let sum: f64 = members(g).sum();
                match kind {
                    ReduceKind::Sum => sum,
                    ReduceKind::Mean => sum / n,
                    ReduceKind::VarPopulation => {
                        let mean = sum / n;
                        members(g).map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
                    }
                }
            })
            .collect();
        Ok(match axis {
            Axis::Cols => Tensor::column(out),
            Axis::Rows => Tensor::row_vector(out),
            Axis::All => Tensor::scalar(out[0]),
        })
    }

    /// Horizontal concatenation of tensors with equal row counts.
    pub fn concat_cols(parts: &[&Tensor]) -> Result<Tensor> {
        let rows = parts.first().map_or(0, |t| t.rows);
        if let Some(bad) = parts.iter().find(|t| t.rows != rows) {
            return Err(Error::Dimension {
                op: "concat_cols",
                left: parts[0].shape(),
                right: bad.shape(),
            });
        }
        let cols: usize = parts.iter().map(|t| t.cols).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for t in parts {
                data.extend_from_slice(t.row(r));
            }
        }
        Ok(Tensor { rows, cols, data })
    }

    /// Vertical concatenation of tensors with equal column counts.
    pub fn concat_rows(parts: &[&Tensor]) -> Result<Tensor> {
        let cols = parts.first().map_or(0, |t| t.cols);
        if let Some(bad) = parts.iter().find(|t| t.cols != cols) {
            return Err(Error::Dimension {
                op: "concat_rows",
                left: parts[0].shape(),
                right: bad.shape(),
            });
        }
        let rows = parts.iter().map(|t| t.rows).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for t in parts {
            data.extend_from_slice(&t.data);
        }
        Ok(Tensor { rows, cols, data })
    }

    pub fn slice_cols(&self, start: usize, end: usize) -> Result<Tensor> {
        if start > end || end > self.cols {
            return Err(Error::Dimension {
                op: "slice_cols",
                left: self.shape(),
                right: (start, end),
            });
        }
        Ok(Tensor::from_fn(self.rows, end - start, |r, c| {
            self.get(r, start + c)
        }))
    }

    /// Output row `i` is input row `index[i]`.
    pub fn gather_rows(&self, index: &[usize]) -> Result<Tensor> {
        if let Some(&bad) = index.iter().find(|&&i| i >= self.rows) {
            return Err(Error::Dimension {
                op: "gather_rows",
                left: self.shape(),
                right: (bad, 0),
            });
        }
        let mut data = Vec::with_capacity(index.len() * self.cols);
        for &i in index {
            data.extend_from_slice(self.row(i));
        }
        Ok(Tensor {
            rows: index.len(),
            cols: self.cols,
            data,
        })
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn op_name(op: BinaryOp) -> &'static str {
    match op {
        BinaryOp::Add => "add",
        BinaryOp::Sub => "sub",
        BinaryOp::Mul => "mul",
        BinaryOp::Div => "div",
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?} ", self.shape())?;
        f.debug_list()
            .entries((0..self.rows).map(|r| self.row(r)))
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_identity() {
        let b = Tensor::from_rows(&[[3.0, 4.0], [5.0, 6.0]]);
        assert_eq!(Tensor::identity(2).matmul(&b).unwrap(), b);
    }

    #[test]
    fn matmul_row_by_column() {
        let a = Tensor::from_rows(&[[1.0, 2.0]]);
        let b = Tensor::from_rows(&[[3.0], [4.0]]);
        assert_eq!(a.matmul(&b).unwrap().item().unwrap(), 11.0);
    }

    #[test]
    fn matmul_zero_matrix() {
        let z = Tensor::zeros(3, 2);
        let b = Tensor::from_rows(&[[1.0, -2.0, 3.0], [4.0, 5.0, 6.0]]);
        assert_eq!(z.matmul(&b).unwrap(), Tensor::zeros(3, 3));
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let err = Tensor::zeros(2, 3).matmul(&Tensor::zeros(2, 3)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("(2, 3)"), "{msg}");
        assert!(matches!(err, Error::Dimension { op: "matmul", .. }));
    }

    #[test]
    fn sigmoid_at_zero() {
        let t = Tensor::scalar(0.0).unary(UnaryOp::Sigmoid).unwrap();
        assert_eq!(t.item().unwrap(), 0.5);
    }

    #[test]
    fn scalar_broadcast_add() {
        let a = Tensor::from_rows(&[[1.0, 2.0]]);
        let out = a.add(&Tensor::scalar(1.0)).unwrap();
        assert_eq!(out, Tensor::from_rows(&[[2.0, 3.0]]));
    }

    #[test]
    fn column_broadcast_div() {
        let a = Tensor::from_rows(&[[2.0, 4.0], [3.0, 9.0]]);
        let out = a.div(&Tensor::column(vec![2.0, 3.0])).unwrap();
        assert_eq!(out, Tensor::from_rows(&[[1.0, 2.0], [1.0, 3.0]]));
    }

    #[test]
    fn broadcast_incompatible() {
        let err = Tensor::zeros(2, 3).add(&Tensor::zeros(3, 1)).unwrap_err();
        assert!(matches!(err, Error::Dimension { .. }));
    }

    #[test]
    fn division_floor() {
        let a = Tensor::ones(1, 2);
        assert!(matches!(
            a.div(&Tensor::scalar(0.0)),
            Err(Error::Domain(_))
        ));
        let out = a
            .binary_unchecked(BinaryOp::Div, &Tensor::scalar(0.0))
            .unwrap();
        assert!(out.data()[0].is_infinite());
    }

    #[test]
    fn log_domain() {
        assert!(matches!(
            Tensor::from_rows(&[[1.0, 0.0]]).unary(UnaryOp::Log),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn reductions() {
        let a = Tensor::from_rows(&[[1.0, 2.0, 3.0]]);
        assert_eq!(
            a.reduce(ReduceKind::Mean, Axis::Cols).unwrap(),
            Tensor::column(vec![2.0])
        );
        let v = a.reduce(ReduceKind::VarPopulation, Axis::Cols).unwrap();
        assert!((v.item().unwrap() - 2.0 / 3.0).abs() < 1e-15);
        let z = Tensor::zeros(4, 5).reduce(ReduceKind::Sum, Axis::All).unwrap();
        assert_eq!(z.item().unwrap(), 0.0);
        let r = Tensor::from_rows(&[[1.0, 2.0], [3.0, 6.0]])
            .reduce(ReduceKind::Mean, Axis::Rows)
            .unwrap();
        assert_eq!(r, Tensor::row_vector(vec![2.0, 4.0]));
    }

    #[test]
    fn reduce_empty_axis() {
        assert!(matches!(
            Tensor::zeros(3, 0).reduce(ReduceKind::Mean, Axis::Cols),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn concat_slice_gather() {
        let a = Tensor::from_rows(&[[1.0], [2.0]]);
        let b = Tensor::from_rows(&[[3.0, 4.0], [5.0, 6.0]]);
        let c = Tensor::concat_cols(&[&a, &b]).unwrap();
        assert_eq!(c, Tensor::from_rows(&[[1.0, 3.0, 4.0], [2.0, 5.0, 6.0]]));
        assert_eq!(c.slice_cols(1, 3).unwrap(), b);
        assert_eq!(
            b.gather_rows(&[1, 0, 1]).unwrap(),
            Tensor::from_rows(&[[5.0, 6.0], [3.0, 4.0], [5.0, 6.0]])
        );
    }
}
