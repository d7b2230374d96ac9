//! Small dense float linear algebra: pivoted Householder QR, singular values
//! by repeated QR, numeric rank, pseudo-inverse and null spaces.

use crate::matrix::Matrix;

/// Row-major `m × n` buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub m: usize,
    pub n: usize,
    pub a: Vec<f64>,
}

impl Dense {
    pub fn zeros(m: usize, n: usize) -> Self {
        Self { m, n, a: vec![0.0; m * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut d = Self::zeros(n, n);
        for i in 0..n {
            d.a[i * n + i] = 1.0;
        }
        d
    }

    pub fn from_matrix(x: &Matrix<f64>) -> Self {
        Self { m: x.rows(), n: x.cols(), a: x.entries().to_vec() }
    }

    pub fn to_matrix(&self) -> Matrix<f64> {
        Matrix::new(self.m, self.n, self.a.clone()).expect("consistent dimensions")
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.n + j]
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.a[i * self.n + j]
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.n, self.m);
        for i in 0..self.m {
            for j in 0..self.n {
                t.a[j * self.m + i] = self.at(i, j);
            }
        }
        t
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.m).map(|i| (0..self.n).map(|j| self.at(i, j) * x[j]).sum()).collect()
    }
}

/// `A·P = Q·R` with `Q` orthogonal (`m × m`), `R` upper trapezoidal and
/// `perm[k]` the original index of column `k`.
#[derive(Debug, Clone)]
pub struct Qr {
    pub q: Dense,
    pub r: Dense,
    pub perm: Vec<usize>,
}

impl Qr {
    /// Number of `|r_kk|` above `tol·|r_00|`.
    pub fn rank(&self, tol: f64) -> usize {
        let k = self.r.m.min(self.r.n);
        if k == 0 {
            return 0;
        }
        let top = self.r.at(0, 0).abs();
        if top == 0.0 {
            return 0;
        }
        (0..k).take_while(|&i| self.r.at(i, i).abs() > tol * top).count()
    }
}

pub fn qr(a: &Dense, pivot: bool) -> Qr {
    let (m, n) = (a.m, a.n);
    let mut r = a.clone();
    let mut q = Dense::identity(m);
    let mut perm: Vec<usize> = (0..n).collect();
    let mut v = vec![0.0; m];
    for k in 0..m.min(n) {
        if pivot {
            let norm = |j: usize, r: &Dense| (k..m).map(|i| r.at(i, j).powi(2)).sum::<f64>();
            let mut best = k;
            let mut best_norm = norm(k, &r);
            for j in k + 1..n {
                let nj = norm(j, &r);
                if nj > best_norm {
                    best = j;
                    best_norm = nj;
                }
            }
            if best != k {
                for i in 0..m {
                    r.a.swap(i * n + k, i * n + best);
                }
                perm.swap(k, best);
            }
        }
        let xnorm = (k..m).map(|i| r.at(i, k).powi(2)).sum::<f64>().sqrt();
        if xnorm == 0.0 {
            continue;
        }
        let x0 = r.at(k, k);
        let alpha = if x0 >= 0.0 { -xnorm } else { xnorm };
        for i in k..m {
            v[i] = r.at(i, k);
        }
        v[k] -= alpha;
        let vtv: f64 = (k..m).map(|i| v[i] * v[i]).sum();
        if vtv == 0.0 {
            continue;
        }
        for j in k..n {
            let s: f64 = (k..m).map(|i| v[i] * r.at(i, j)).sum::<f64>() * 2.0 / vtv;
            for i in k..m {
                *r.at_mut(i, j) -= s * v[i];
            }
        }
        for i in 0..m {
            let s: f64 = (k..m).map(|l| q.at(i, l) * v[l]).sum::<f64>() * 2.0 / vtv;
            for l in k..m {
                *q.at_mut(i, l) -= s * v[l];
            }
        }
        *r.at_mut(k, k) = alpha;
        for i in k + 1..m {
            *r.at_mut(i, k) = 0.0;
        }
    }
    Qr { q, r, perm }
}

/// Singular values in decreasing order, by iterating pivoted QR on `Rᵀ`
/// until the triangular factor is numerically diagonal.
pub fn singular_values(a: &Dense) -> Vec<f64> {
    let k = a.m.min(a.n);
    if k == 0 {
        return Vec::new();
    }
    let mut b = a.clone();
    let mut diag = Vec::new();
    for _ in 0..200 {
        let f = qr(&b, true);
        let r = f.r;
        diag = (0..k).map(|i| r.at(i, i).abs()).collect();
        let mut off = 0.0;
        let mut total = 0.0;
        for i in 0..r.m {
            for j in 0..r.n {
                let x = r.at(i, j).powi(2);
                total += x;
                if i != j {
                    off += x;
                }
            }
        }
        if off <= 1e-30 * total.max(f64::MIN_POSITIVE) {
            break;
        }
        b = r.transpose();
    }
    diag.sort_by(|x, y| y.total_cmp(x));
    diag
}

pub fn numeric_rank(a: &Matrix<f64>, rank_tol: f64) -> usize {
    let sv = singular_values(&Dense::from_matrix(a));
    rank_from_singular_values(&sv, rank_tol)
}

pub fn rank_from_singular_values(sv: &[f64], rank_tol: f64) -> usize {
    match sv.first() {
        Some(&top) if top > 0.0 => sv.iter().filter(|&&s| s > rank_tol * top).count(),
        _ => 0,
    }
}

/// Minimum-norm least-squares inverse via a complete orthogonal decomposition.
pub fn pseudo_inverse(a: &Dense, tol: f64) -> Dense {
    let (m, n) = (a.m, a.n);
    let f = qr(a, true);
    let r = f.rank(tol);
    let mut out = Dense::zeros(n, m);
    if r == 0 {
        return out;
    }
    // R1 = R[0..r, :]; R1ᵀ = Z·T.
    let mut r1t = Dense::zeros(n, r);
    for i in 0..r {
        for j in 0..n {
            *r1t.at_mut(j, i) = f.r.at(i, j);
        }
    }
    let g = qr(&r1t, false);
    // pinv(A) = P · Z1 · T1⁻ᵀ · Q1ᵀ, applied column by column.
    for col in 0..m {
        let c: Vec<f64> = (0..r).map(|k| f.q.at(col, k)).collect();
        let mut w = vec![0.0; r];
        for i in 0..r {
            let s: f64 = (0..i).map(|k| g.r.at(k, i) * w[k]).sum();
            w[i] = (c[i] - s) / g.r.at(i, i);
        }
        for k in 0..n {
            let z: f64 = (0..r).map(|l| g.q.at(k, l) * w[l]).sum();
            *out.at_mut(f.perm[k], col) = z;
        }
    }
    out
}

/// Orthonormal basis of the null space of `a`, assuming numeric rank `rank`.
pub fn null_space(a: &Dense, rank: usize) -> Vec<Vec<f64>> {
    let f = qr(&a.transpose(), true);
    (rank..a.n).map(|k| (0..a.n).map(|i| f.q.at(i, k)).collect()).collect()
}

/// Solves `a·x = b` in the least-squares sense.
pub fn lstsq(a: &Dense, b: &[f64], tol: f64) -> Vec<f64> {
    pseudo_inverse(a, tol).mul_vec(b)
}
