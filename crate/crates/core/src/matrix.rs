//! Dense matrices over exact rationals or `f64`, with the definiteness and
//! dominance tests used to certify covariance matrices.

use std::fmt;

use num_traits::{Num, Signed};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::rational::{self, Rational};

/// Relative tolerance for symmetry checks in float mode.
pub const FLOAT_SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NumberMode {
    Rational,
    Float,
}

impl fmt::Display for NumberMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NumberMode::Rational => f.write_str("rational"),
            NumberMode::Float => f.write_str("float"),
        }
    }
}

/// Number types a [`Matrix`] can hold.
pub trait Scalar:
    Num + Signed + Clone + PartialOrd + fmt::Debug + fmt::Display + Send + Sync + 'static
{
    const MODE: NumberMode;

    fn from_rational(r: &Rational) -> Self;
    fn to_f64(&self) -> f64;
    fn to_rational(&self) -> Rational;

    /// Equality up to `rel_tol` relative to `scale`; exact in rational mode.
    fn near(&self, other: &Self, rel_tol: f64, scale: f64) -> bool;

    fn from_i64(v: i64) -> Self {
        Self::from_rational(&rational::int(v))
    }
}

impl Scalar for Rational {
    const MODE: NumberMode = NumberMode::Rational;

    fn from_rational(r: &Rational) -> Self {
        r.clone()
    }

    fn to_f64(&self) -> f64 {
        rational::to_f64(self)
    }

    fn to_rational(&self) -> Rational {
        self.clone()
    }

    fn near(&self, other: &Self, _rel_tol: f64, _scale: f64) -> bool {
        self == other
    }
}

impl Scalar for f64 {
    const MODE: NumberMode = NumberMode::Float;

    fn from_rational(r: &Rational) -> Self {
        rational::to_f64(r)
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn to_rational(&self) -> Rational {
        rational::from_f64(*self)
    }

    fn near(&self, other: &Self, rel_tol: f64, scale: f64) -> bool {
        (self - other).abs() <= rel_tol * scale.max(f64::MIN_POSITIVE)
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum MatrixError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric at ({row}, {col})")]
    Asymmetric { row: usize, col: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is not unit upper triangular at ({row}, {col})")]
    NotUnitUpper { row: usize, col: usize },
    #[error("matrix is singular")]
    Singular,
    #[error("malformed matrix document: {0}")]
    Malformed(String),
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self, MatrixError> {
        if data.len() != rows * cols {
            return Err(MatrixError::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self, MatrixError> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(MatrixError::DimensionMismatch("ragged rows".into()));
        }
        Self::new(r, c, rows.into_iter().flatten().collect())
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> &T {
        &self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn entries(&self) -> &[T] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i).clone())
    }

    pub fn matmul(&self, other: &Self) -> Result<Self, MatrixError> {
        if self.cols != other.rows {
            return Err(MatrixError::DimensionMismatch(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a.is_zero() {
                    continue;
                }
                for j in 0..other.cols {
                    let b = other.get(k, j);
                    if b.is_zero() {
                        continue;
                    }
                    let idx = i * out.cols + j;
                    out.data[idx] = out.data[idx].clone() + a.clone() * b.clone();
                }
            }
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self, MatrixError> {
        self.zip_with(other, |a, b| a.clone() - b.clone())
    }

    pub fn add(&self, other: &Self) -> Result<Self, MatrixError> {
        self.zip_with(other, |a, b| a.clone() + b.clone())
    }

    fn zip_with(&self, other: &Self, f: impl Fn(&T, &T) -> T) -> Result<Self, MatrixError> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(MatrixError::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| f(a, b)).collect();
        Ok(Self { rows: self.rows, cols: self.cols, data })
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|x| x.to_f64().abs()).fold(0.0, f64::max)
    }

    /// Symmetry check: exact for rationals, `FLOAT_SYMMETRY_TOL` relative for floats.
    pub fn check_symmetric(&self) -> Result<(), MatrixError> {
        self.require_square()?;
        let scale = self.max_abs();
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                if !self.get(i, j).near(self.get(j, i), FLOAT_SYMMETRY_TOL, scale) {
                    return Err(MatrixError::Asymmetric { row: i + 1, col: j + 1 });
                }
            }
        }
        Ok(())
    }

    pub fn is_symmetric(&self) -> bool {
        self.check_symmetric().is_ok()
    }

    fn require_square(&self) -> Result<(), MatrixError> {
        if self.is_square() {
            Ok(())
        } else {
            Err(MatrixError::NotSquare { rows: self.rows, cols: self.cols })
        }
    }

    pub fn to_f64(&self) -> Matrix<f64> {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(T::to_f64).collect() }
    }

    pub fn to_rational(&self) -> Matrix<Rational> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(T::to_rational).collect(),
        }
    }

    pub fn convert<U: Scalar>(&self) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| U::from_rational(&x.to_rational())).collect(),
        }
    }

    /// Entrywise comparison with the mode's tolerance (exact for rationals).
    pub fn near(&self, other: &Self, rel_tol: f64) -> bool {
        if self.rows != other.rows || self.cols != other.cols {
            return false;
        }
        let scale = self.max_abs().max(other.max_abs()).max(1.0);
        self.data.iter().zip(&other.data).all(|(a, b)| a.near(b, rel_tol, scale))
    }

    /// Determinant by Gaussian elimination (partial pivoting in float mode).
    pub fn determinant(&self) -> Result<T, MatrixError> {
        self.require_square()?;
        let n = self.rows;
        let mut a = self.clone();
        let mut det = T::one();
        for col in 0..n {
            let Some(p) = pivot_row(&a, col, col) else {
                return Ok(T::zero());
            };
            if p != col {
                a.swap_rows(p, col);
                det = -det;
            }
            let piv = a.get(col, col).clone();
            det = det * piv.clone();
            for r in (col + 1)..n {
                let factor = a.get(r, col).clone() / piv.clone();
                if factor.is_zero() {
                    continue;
                }
                for c in col..n {
                    let v = a.get(r, c).clone() - factor.clone() * a.get(col, c).clone();
                    a.set(r, c, v);
                }
            }
        }
        Ok(det)
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        for c in 0..self.cols {
            self.data.swap(a * self.cols + c, b * self.cols + c);
        }
    }
}

/// Pivot choice: first nonzero entry in rational mode, largest magnitude in
/// float mode (rejecting entries below a scale-relative threshold).
fn pivot_row<T: Scalar>(a: &Matrix<T>, col: usize, from: usize) -> Option<usize> {
    match T::MODE {
        NumberMode::Rational => (from..a.rows).find(|&r| !a.get(r, col).is_zero()),
        NumberMode::Float => {
            let scale = a.max_abs().max(f64::MIN_POSITIVE);
            let (best, mag) = (from..a.rows)
                .map(|r| (r, a.get(r, col).to_f64().abs()))
                .fold((from, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            (mag > 1e-12 * scale).then_some(best)
        }
    }
}

impl<T: Scalar> fmt::Display for Matrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.rows {
            let row: Vec<String> = self.row(i).iter().map(|x| x.to_string()).collect();
            writeln!(f, "[{}]", row.join(", "))?;
        }
        Ok(())
    }
}

/// Square-root-free Cholesky factor `A = L·D·Lᵀ` with unit lower `L` and
/// strictly positive pivots `D`; `L·√D` is the classical Cholesky factor.
#[derive(Debug, Clone, PartialEq)]
pub struct CholeskyFactor<T> {
    pub unit_lower: Matrix<T>,
    pub pivots: Vec<T>,
}

impl<T: Scalar> CholeskyFactor<T> {
    /// The classical lower factor with positive diagonal (float).
    pub fn lower(&self) -> Matrix<f64> {
        let n = self.pivots.len();
        let roots: Vec<f64> = self.pivots.iter().map(|d| d.to_f64().sqrt()).collect();
        Matrix::from_fn(n, n, |i, j| self.unit_lower.get(i, j).to_f64() * roots[j])
    }

    /// `L·D·Lᵀ`, exact in rational mode.
    pub fn reconstruct(&self) -> Matrix<T> {
        let n = self.pivots.len();
        Matrix::from_fn(n, n, |i, j| {
            (0..=i.min(j)).fold(T::zero(), |acc, k| {
                acc + self.unit_lower.get(i, k).clone()
                    * self.pivots[k].clone()
                    * self.unit_lower.get(j, k).clone()
            })
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Definiteness<T> {
    PositiveDefinite(CholeskyFactor<T>),
    /// The 1-based index of the first leading principal minor that is not positive.
    NotPositiveDefinite { minor: usize },
}

impl<T> Definiteness<T> {
    pub fn is_positive_definite(&self) -> bool {
        matches!(self, Definiteness::PositiveDefinite(_))
    }
}

pub fn cholesky<T: Scalar>(a: &Matrix<T>) -> Result<Definiteness<T>, MatrixError> {
    a.check_symmetric()?;
    let n = a.rows();
    let mut l = Matrix::<T>::identity(n);
    let mut d: Vec<T> = Vec::with_capacity(n);
    for j in 0..n {
        let mut dj = a.get(j, j).clone();
        for k in 0..j {
            let ljk = l.get(j, k).clone();
            dj = dj - ljk.clone() * ljk * d[k].clone();
        }
        if !dj.is_positive() {
            return Ok(Definiteness::NotPositiveDefinite { minor: j + 1 });
        }
        for i in (j + 1)..n {
            let mut v = a.get(i, j).clone();
            for k in 0..j {
                v = v - l.get(i, k).clone() * l.get(j, k).clone() * d[k].clone();
            }
            l.set(i, j, v / dj.clone());
        }
        d.push(dj);
    }
    Ok(Definiteness::PositiveDefinite(CholeskyFactor { unit_lower: l, pivots: d }))
}

pub fn is_positive_definite<T: Scalar>(a: &Matrix<T>) -> bool {
    matches!(cholesky(a), Ok(Definiteness::PositiveDefinite(_)))
}

/// `|a_ii| > Σ_{j≠i} |a_ij|` for every row.
pub fn is_strictly_diagonally_dominant<T: Scalar>(a: &Matrix<T>) -> Result<bool, MatrixError> {
    a.require_square()?;
    Ok((0..a.rows()).all(|i| {
        let off = (0..a.cols())
            .filter(|&j| j != i)
            .fold(T::zero(), |acc, j| acc + a.get(i, j).abs());
        a.get(i, i).abs() > off
    }))
}

/// Inverse of a unit-diagonal upper-triangular matrix by back-substitution.
pub fn unit_upper_inverse<T: Scalar>(u: &Matrix<T>) -> Result<Matrix<T>, MatrixError> {
    u.require_square()?;
    let n = u.rows();
    for i in 0..n {
        if !u.get(i, i).is_one() {
            return Err(MatrixError::NotUnitUpper { row: i + 1, col: i + 1 });
        }
        for j in 0..i {
            if !u.get(i, j).is_zero() {
                return Err(MatrixError::NotUnitUpper { row: i + 1, col: j + 1 });
            }
        }
    }
    let mut x = Matrix::<T>::identity(n);
    for j in 0..n {
        for i in (0..j).rev() {
            let mut s = T::zero();
            for k in (i + 1)..=j {
                let uik = u.get(i, k);
                if !uik.is_zero() {
                    s = s + uik.clone() * x.get(k, j).clone();
                }
            }
            x.set(i, j, -s);
        }
    }
    Ok(x)
}

/// Gauss–Jordan inverse: exact rational elimination or partial-pivot float
/// elimination. Returns [`MatrixError::Singular`] on rank deficiency.
pub fn general_inverse<T: Scalar>(a: &Matrix<T>) -> Result<Matrix<T>, MatrixError> {
    a.require_square()?;
    let n = a.rows();
    let mut aug = Matrix::<T>::zeros(n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            aug.set(i, j, a.get(i, j).clone());
        }
        aug.set(i, n + i, T::one());
    }
    let scale = a.max_abs().max(f64::MIN_POSITIVE);
    for col in 0..n {
        let p = match T::MODE {
            NumberMode::Rational => (col..n).find(|&r| !aug.get(r, col).is_zero()),
            NumberMode::Float => {
                let (best, mag) = (col..n)
                    .map(|r| (r, aug.get(r, col).to_f64().abs()))
                    .fold((col, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
                (mag > 1e-12 * scale).then_some(best)
            }
        };
        let Some(p) = p else {
            return Err(MatrixError::Singular);
        };
        aug.swap_rows(p, col);
        let piv = aug.get(col, col).clone();
        for c in 0..2 * n {
            let v = aug.get(col, c).clone() / piv.clone();
            aug.set(col, c, v);
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let factor = aug.get(r, col).clone();
            if factor.is_zero() {
                continue;
            }
            for c in 0..2 * n {
                let v = aug.get(r, c).clone() - factor.clone() * aug.get(col, c).clone();
                aug.set(r, c, v);
            }
        }
    }
    Ok(Matrix::from_fn(n, n, |i, j| aug.get(i, n + j).clone()))
}

/// `mᵀ·s·m`; the float result is symmetrized.
pub fn congruence<T: Scalar>(s: &Matrix<T>, m: &Matrix<T>) -> Result<Matrix<T>, MatrixError> {
    s.require_square()?;
    if s.rows() != m.rows() {
        return Err(MatrixError::DimensionMismatch(format!(
            "congruence of {}x{} by {}x{}",
            s.rows(),
            s.cols(),
            m.rows(),
            m.cols()
        )));
    }
    let out = m.transpose().matmul(s)?.matmul(m)?;
    Ok(match T::MODE {
        NumberMode::Rational => out,
        NumberMode::Float => {
            let half = T::from_rational(&rational::ratio(1, 2));
            Matrix::from_fn(out.rows(), out.cols(), |i, j| {
                (out.get(i, j).clone() + out.get(j, i).clone()) * half.clone()
            })
        }
    })
}

/// Wire form: `{"mode":"rational"|"float","rows":r,"cols":c,"entries":[[...],...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixJson {
    pub mode: NumberMode,
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<Vec<Value>>,
}

/// A matrix in either number mode, as read from a document.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyMatrix {
    Rational(Matrix<Rational>),
    Float(Matrix<f64>),
}

impl AnyMatrix {
    pub fn mode(&self) -> NumberMode {
        match self {
            AnyMatrix::Rational(_) => NumberMode::Rational,
            AnyMatrix::Float(_) => NumberMode::Float,
        }
    }

    /// Exact rational view (floats convert exactly).
    pub fn to_rational(&self) -> Matrix<Rational> {
        match self {
            AnyMatrix::Rational(m) => m.clone(),
            AnyMatrix::Float(m) => m.to_rational(),
        }
    }

    pub fn to_f64(&self) -> Matrix<f64> {
        match self {
            AnyMatrix::Rational(m) => m.to_f64(),
            AnyMatrix::Float(m) => m.clone(),
        }
    }

    pub fn to_json(&self) -> MatrixJson {
        match self {
            AnyMatrix::Rational(m) => m.to_json(),
            AnyMatrix::Float(m) => m.to_json(),
        }
    }

    pub fn from_json(doc: &MatrixJson) -> Result<Self, MatrixError> {
        match doc.mode {
            NumberMode::Rational => Ok(AnyMatrix::Rational(Matrix::from_json(doc)?)),
            NumberMode::Float => Ok(AnyMatrix::Float(Matrix::from_json(doc)?)),
        }
    }

    pub fn parse(text: &str) -> Result<Self, MatrixError> {
        let doc: MatrixJson =
            serde_json::from_str(text).map_err(|e| MatrixError::Malformed(e.to_string()))?;
        Self::from_json(&doc)
    }
}

impl<T: Scalar> Matrix<T> {
    pub fn to_json(&self) -> MatrixJson {
        let entries = (0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .map(|x| match T::MODE {
                        NumberMode::Rational => Value::String(rational::format_rational(&x.to_rational())),
                        NumberMode::Float => serde_json::Number::from_f64(x.to_f64())
                            .map(Value::Number)
                            .unwrap_or(Value::Null),
                    })
                    .collect()
            })
            .collect();
        MatrixJson { mode: T::MODE, rows: self.rows, cols: self.cols, entries }
    }

    /// Reads any document; entries are converted into this matrix's number type.
    pub fn from_json(doc: &MatrixJson) -> Result<Self, MatrixError> {
        if doc.entries.len() != doc.rows || doc.entries.iter().any(|r| r.len() != doc.cols) {
            return Err(MatrixError::Malformed(format!(
                "entries do not form a {}x{} array",
                doc.rows, doc.cols
            )));
        }
        let mut data = Vec::with_capacity(doc.rows * doc.cols);
        for value in doc.entries.iter().flatten() {
            let r = match value {
                Value::String(s) => rational::parse_rational(s)
                    .map_err(|e| MatrixError::Malformed(e.to_string()))?,
                Value::Number(num) => {
                    if let Some(i) = num.as_i64() {
                        rational::int(i)
                    } else {
                        let f = num
                            .as_f64()
                            .ok_or_else(|| MatrixError::Malformed(format!("bad number {num}")))?;
                        match doc.mode {
                            // Decimal literals in rational documents mean their decimal value.
                            NumberMode::Rational => rational::parse_rational(&num.to_string())
                                .map_err(|e| MatrixError::Malformed(e.to_string()))?,
                            NumberMode::Float => rational::from_f64(f),
                        }
                    }
                }
                other => return Err(MatrixError::Malformed(format!("bad entry {other}"))),
            };
            data.push(T::from_rational(&r));
        }
        Matrix::new(doc.rows, doc.cols, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, ratio};

    fn q(rows: &[&[i64]]) -> Matrix<Rational> {
        Matrix::from_rows(rows.iter().map(|r| r.iter().map(|&v| int(v)).collect()).collect())
            .unwrap()
    }

    #[test]
    fn cholesky_identity() {
        let id = Matrix::<Rational>::identity(3);
        let Definiteness::PositiveDefinite(f) = cholesky(&id).unwrap() else { panic!() };
        assert_eq!(f.unit_lower, id);
        assert_eq!(f.lower(), Matrix::<f64>::identity(3));
    }

    #[test]
    fn cholesky_reports_failing_minor() {
        let a = q(&[&[1, 2], &[2, 1]]);
        assert_eq!(cholesky(&a).unwrap(), Definiteness::NotPositiveDefinite { minor: 2 });
        let b = q(&[&[0, 0], &[0, 1]]);
        assert_eq!(cholesky(&b).unwrap(), Definiteness::NotPositiveDefinite { minor: 1 });
    }

    #[test]
    fn cholesky_rejects_bad_shapes() {
        let a = Matrix::<Rational>::zeros(2, 3);
        assert!(matches!(cholesky(&a), Err(MatrixError::NotSquare { .. })));
        let b = q(&[&[1, 0], &[1, 1]]);
        assert_eq!(cholesky(&b), Err(MatrixError::Asymmetric { row: 1, col: 2 }));
        let c = Matrix::from_rows(vec![vec![1.0, 0.5], vec![0.5 + 1e-15, 1.0]]).unwrap();
        assert!(cholesky(&c).unwrap().is_positive_definite());
    }

    #[test]
    fn cholesky_float_factor_reproduces() {
        let a = Matrix::from_rows(vec![vec![4.0, 2.0, 0.4], vec![2.0, 5.0, 1.0], vec![0.4, 1.0, 3.0]])
            .unwrap();
        let Definiteness::PositiveDefinite(f) = cholesky(&a).unwrap() else { panic!() };
        let l = f.lower();
        let llt = l.matmul(&l.transpose()).unwrap();
        assert!(llt.near(&a, 1e-12));
        for i in 0..3 {
            assert!(*l.get(i, i) > 0.0);
            for j in (i + 1)..3 {
                assert_eq!(*l.get(i, j), 0.0);
            }
        }
    }

    #[test]
    fn dominance() {
        assert!(is_strictly_diagonally_dominant(&Matrix::<Rational>::identity(4)).unwrap());
        assert!(!is_strictly_diagonally_dominant(&q(&[&[1, 1], &[1, 1]])).unwrap());
        let l = 5;
        let a = Matrix::from_fn(l, l, |i, j| {
            if i == j {
                int(l as i64)
            } else {
                int(((i + 2 * j) % 3) as i64 - 1)
            }
        });
        assert!(is_strictly_diagonally_dominant(&a).unwrap());
        assert!(is_strictly_diagonally_dominant(&Matrix::<Rational>::zeros(2, 3)).is_err());
    }

    #[test]
    fn unit_upper_inverse_closed_forms() {
        assert_eq!(
            unit_upper_inverse(&Matrix::<Rational>::identity(3)).unwrap(),
            Matrix::identity(3)
        );
        let c = ratio(3, 7);
        let u = Matrix::from_rows(vec![vec![int(1), -c.clone()], vec![int(0), int(1)]]).unwrap();
        let inv = unit_upper_inverse(&u).unwrap();
        assert_eq!(inv, Matrix::from_rows(vec![vec![int(1), c], vec![int(0), int(1)]]).unwrap());
        // I − Λ for the path 1→2→3: the (1,3) entry of the inverse is the path product.
        let (a, b) = (ratio(2, 3), ratio(-5, 2));
        let u = Matrix::from_rows(vec![
            vec![int(1), -a.clone(), int(0)],
            vec![int(0), int(1), -b.clone()],
            vec![int(0), int(0), int(1)],
        ])
        .unwrap();
        let inv = unit_upper_inverse(&u).unwrap();
        assert_eq!(*inv.get(0, 2), a * b);
        assert_eq!(inv.matmul(&u).unwrap(), Matrix::identity(3));
        assert!(unit_upper_inverse(&q(&[&[1, 0], &[1, 1]])).is_err());
        assert!(unit_upper_inverse(&q(&[&[2, 0], &[0, 1]])).is_err());
    }

    #[test]
    fn general_inverse_and_singularity() {
        assert_eq!(
            general_inverse(&Matrix::<Rational>::identity(2)).unwrap(),
            Matrix::identity(2)
        );
        assert_eq!(general_inverse(&Matrix::<Rational>::zeros(2, 2)), Err(MatrixError::Singular));
        assert_eq!(general_inverse(&Matrix::<f64>::zeros(2, 2)), Err(MatrixError::Singular));
        // I − Λ for the 2-cycle with both coefficients 1.
        let two_cycle = q(&[&[1, -1], &[-1, 1]]);
        assert_eq!(general_inverse(&two_cycle), Err(MatrixError::Singular));
        assert_eq!(two_cycle.determinant().unwrap(), int(0));
        let a = q(&[&[0, 2], &[3, 1]]);
        let inv = general_inverse(&a).unwrap();
        assert_eq!(a.matmul(&inv).unwrap(), Matrix::identity(2));
        assert_eq!(a.determinant().unwrap(), int(-6));
        let af = a.to_f64();
        let invf = general_inverse(&af).unwrap();
        assert!(af.matmul(&invf).unwrap().near(&Matrix::identity(2), 1e-12));
    }

    #[test]
    fn congruence_hand_computed() {
        let s = q(&[&[2, 1], &[1, 3]]);
        assert_eq!(congruence(&s, &Matrix::identity(2)).unwrap(), s);
        let a = ratio(5, 2);
        let m = Matrix::from_rows(vec![vec![int(1), -a.clone()], vec![int(0), int(1)]]).unwrap();
        let out = congruence(&Matrix::identity(2), &m).unwrap();
        let expected = Matrix::from_rows(vec![
            vec![int(1), -a.clone()],
            vec![-a.clone(), int(1) + a.clone() * a],
        ])
        .unwrap();
        assert_eq!(out, expected);
        assert!(congruence(&s, &Matrix::<Rational>::identity(3)).is_err());
    }

    #[test]
    fn json_round_trip_both_modes() {
        let m = Matrix::from_rows(vec![vec![ratio(1, 2), int(-3)], vec![int(0), ratio(7, 9)]])
            .unwrap();
        let doc = m.to_json();
        assert_eq!(doc.entries[0][0], Value::String("1/2".into()));
        let text = serde_json::to_string(&doc).unwrap();
        assert_eq!(AnyMatrix::parse(&text).unwrap(), AnyMatrix::Rational(m));
        let f = Matrix::from_rows(vec![vec![0.25, 1.0]]).unwrap();
        let text = serde_json::to_string(&f.to_json()).unwrap();
        assert_eq!(AnyMatrix::parse(&text).unwrap(), AnyMatrix::Float(f));
        let mixed = r#"{"mode":"rational","rows":1,"cols":3,"entries":[["2/4", 3, 0.1]]}"#;
        let AnyMatrix::Rational(m) = AnyMatrix::parse(mixed).unwrap() else { panic!() };
        assert_eq!(m.row(0), &[ratio(1, 2), int(3), ratio(1, 10)]);
        assert!(AnyMatrix::parse(r#"{"mode":"float","rows":2,"cols":1,"entries":[[1]]}"#).is_err());
    }
}
