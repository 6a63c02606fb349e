//! Dense integer matrices, two multiplication backends and the equality product
//! `C[i,j] = |{k : A[i,k] = B[k,j]}|`.

use std::collections::HashMap;

use crate::error::{Result, TphdError};

/// Row-major `rows x cols` matrix of `i64`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntMatrix {
    rows: usize,
    cols: usize,
    data: Vec<i64>,
}

impl IntMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<i64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(TphdError::DimensionMismatch(format!(
                "{} entries supplied for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<i64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(TphdError::DimensionMismatch("rows have different lengths".into()));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> i64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: i64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[i64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[i64] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.get(i, j);
            }
        }
        t
    }
}

/// Equality-product counts, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountMatrix {
    rows: usize,
    cols: usize,
    data: Vec<u64>,
}

impl CountMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0; rows * cols],
        }
    }

    pub fn new(rows: usize, cols: usize, data: Vec<u64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(TphdError::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.data[i * self.cols + j]
    }

    pub fn data(&self) -> &[u64] {
        &self.data
    }

    pub fn total(&self) -> u64 {
        self.data.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MatmulBackend {
    /// Cache-blocked triple loop.
    #[default]
    Blocked,
    /// Strassen recursion on power-of-two padding, blocked below 64.
    Strassen,
}

impl MatmulBackend {
    /// Exponent used by parameter formulas that depend on the multiplication cost.
    pub fn omega(self) -> f64 {
        match self {
            MatmulBackend::Blocked => 3.0,
            MatmulBackend::Strassen => 7f64.log2(),
        }
    }
}

const BLOCK: usize = 64;
const STRASSEN_BASE: usize = 64;

fn check_product(a: &IntMatrix, b: &IntMatrix) -> Result<()> {
    if a.cols != b.rows {
        return Err(TphdError::DimensionMismatch(format!(
            "{}x{} times {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let ma = a.data.iter().map(|v| v.unsigned_abs()).max().unwrap_or(0) as u128;
    let mb = b.data.iter().map(|v| v.unsigned_abs()).max().unwrap_or(0) as u128;
    if ma * mb * (a.cols as u128) >= 1u128 << 63 {
        return Err(TphdError::Overflow("product entries may not fit in 64 bits".into()));
    }
    Ok(())
}

/// Exact product with the blocked backend.
pub fn matmul(a: &IntMatrix, b: &IntMatrix) -> Result<IntMatrix> {
    matmul_with(a, b, MatmulBackend::Blocked)
}

/// Exact product with a chosen backend. Intermediate arithmetic wraps modulo
/// `2^64`, which is exact once the final entries are known to fit.
pub fn matmul_with(a: &IntMatrix, b: &IntMatrix, backend: MatmulBackend) -> Result<IntMatrix> {
    check_product(a, b)?;
    Ok(match backend {
        MatmulBackend::Blocked => blocked(a, b),
        MatmulBackend::Strassen => strassen_product(a, b),
    })
}

fn blocked(a: &IntMatrix, b: &IntMatrix) -> IntMatrix {
    let (n1, n2, n3) = (a.rows, a.cols, b.cols);
    let mut c = IntMatrix::zeros(n1, n3);
    for kk in (0..n2).step_by(BLOCK) {
        let kend = (kk + BLOCK).min(n2);
        for jj in (0..n3).step_by(BLOCK) {
            let jend = (jj + BLOCK).min(n3);
            for i in 0..n1 {
                let crow = &mut c.data[i * n3 + jj..i * n3 + jend];
                for k in kk..kend {
                    let aik = a.data[i * n2 + k];
                    if aik == 0 {
                        continue;
                    }
                    let brow = &b.data[k * n3 + jj..k * n3 + jend];
                    for (cv, &bv) in crow.iter_mut().zip(brow) {
                        *cv = cv.wrapping_add(aik.wrapping_mul(bv));
                    }
                }
            }
        }
    }
    c
}

/// Square matrix of side `n` stored row-major, used inside the Strassen recursion.
#[derive(Clone)]
struct Square {
    n: usize,
    d: Vec<i64>,
}

impl Square {
    fn padded(m: &IntMatrix, n: usize) -> Self {
        let mut d = vec![0; n * n];
        for i in 0..m.rows {
            d[i * n..i * n + m.cols].copy_from_slice(m.row(i));
        }
        Self { n, d }
    }

    fn quadrant(&self, qi: usize, qj: usize) -> Self {
        let h = self.n / 2;
        let mut d = Vec::with_capacity(h * h);
        for i in 0..h {
            let start = (qi * h + i) * self.n + qj * h;
            d.extend_from_slice(&self.d[start..start + h]);
        }
        Self { n: h, d }
    }

    fn zip(&self, o: &Self, f: impl Fn(i64, i64) -> i64) -> Self {
        Self {
            n: self.n,
            d: self.d.iter().zip(&o.d).map(|(&x, &y)| f(x, y)).collect(),
        }
    }

    fn add(&self, o: &Self) -> Self {
        self.zip(o, i64::wrapping_add)
    }

    fn sub(&self, o: &Self) -> Self {
        self.zip(o, i64::wrapping_sub)
    }
}

fn strassen(a: &Square, b: &Square) -> Square {
    let n = a.n;
    if n <= STRASSEN_BASE {
        let am = IntMatrix {
            rows: n,
            cols: n,
            data: a.d.clone(),
        };
        let bm = IntMatrix {
            rows: n,
            cols: n,
            data: b.d.clone(),
        };
        return Square {
            n,
            d: blocked(&am, &bm).data,
        };
    }
    let (a11, a12, a21, a22) = (a.quadrant(0, 0), a.quadrant(0, 1), a.quadrant(1, 0), a.quadrant(1, 1));
    let (b11, b12, b21, b22) = (b.quadrant(0, 0), b.quadrant(0, 1), b.quadrant(1, 0), b.quadrant(1, 1));
    let m1 = strassen(&a11.add(&a22), &b11.add(&b22));
    let m2 = strassen(&a21.add(&a22), &b11);
    let m3 = strassen(&a11, &b12.sub(&b22));
    let m4 = strassen(&a22, &b21.sub(&b11));
    let m5 = strassen(&a11.add(&a12), &b22);
    let m6 = strassen(&a21.sub(&a11), &b11.add(&b12));
    let m7 = strassen(&a12.sub(&a22), &b21.add(&b22));
    let c11 = m1.add(&m4).sub(&m5).add(&m7);
    let c12 = m3.add(&m5);
    let c21 = m2.add(&m4);
    let c22 = m1.sub(&m2).add(&m3).add(&m6);
    let h = n / 2;
    let mut d = vec![0; n * n];
    for (q, (qi, qj)) in [(&c11, (0, 0)), (&c12, (0, 1)), (&c21, (1, 0)), (&c22, (1, 1))] {
        for i in 0..h {
            let start = (qi * h + i) * n + qj * h;
            d[start..start + h].copy_from_slice(&q.d[i * h..(i + 1) * h]);
        }
    }
    Square { n, d }
}

fn strassen_product(a: &IntMatrix, b: &IntMatrix) -> IntMatrix {
    let side = a.rows.max(a.cols).max(b.cols).max(1).next_power_of_two();
    if side <= STRASSEN_BASE {
        return blocked(a, b);
    }
    let c = strassen(&Square::padded(a, side), &Square::padded(b, side));
    let mut out = IntMatrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        out.data[i * b.cols..(i + 1) * b.cols].copy_from_slice(&c.d[i * side..i * side + b.cols]);
    }
    out
}

/// Equality product with trade-off parameter `r`: a value at inner index `k`
/// that occurs at most `n2 / r` times in column `k` of `A` and row `k` of `B`
/// together is handled by enumerating its pairs. Each remaining value becomes
/// one 0/1 indicator column of `A'` and row of `B'`, and `A' B'` is added.
pub fn equality_product(a: &IntMatrix, b: &IntMatrix, r: usize) -> Result<CountMatrix> {
    equality_product_with(a, b, r, MatmulBackend::Blocked)
}

pub fn equality_product_with(a: &IntMatrix, b: &IntMatrix, r: usize, backend: MatmulBackend) -> Result<CountMatrix> {
    if a.cols != b.rows {
        return Err(TphdError::DimensionMismatch(format!(
            "{}x{} against {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let (n1, n2, n3) = (a.rows, a.cols, b.cols);
    if r == 0 || r > n2.max(1) {
        return Err(TphdError::InvalidParameter(format!("r = {r} must lie in [1, {}]", n2.max(1))));
    }
    let cap = n2 / r;
    let mut c = CountMatrix::zeros(n1, n3);
    let mut frequent: Vec<(usize, i64)> = Vec::new();
    for k in 0..n2 {
        let mut groups: HashMap<i64, (Vec<usize>, Vec<usize>)> = HashMap::new();
        for i in 0..n1 {
            groups.entry(a.get(i, k)).or_default().0.push(i);
        }
        for j in 0..n3 {
            if let Some(g) = groups.get_mut(&b.get(k, j)) {
                g.1.push(j);
            }
        }
        let mut keys: Vec<i64> = groups.keys().copied().collect();
        keys.sort_unstable();
        for v in keys {
            let (is, js) = &groups[&v];
            if js.is_empty() {
                continue;
            }
            if is.len() + js.len() <= cap {
                for &i in is {
                    let row = &mut c.data[i * n3..(i + 1) * n3];
                    for &j in js {
                        row[j] += 1;
                    }
                }
            } else {
                frequent.push((k, v));
            }
        }
    }
    if !frequent.is_empty() {
        let w = frequent.len();
        let mut ai = IntMatrix::zeros(n1, w);
        let mut bi = IntMatrix::zeros(w, n3);
        for (col, &(k, v)) in frequent.iter().enumerate() {
            for i in 0..n1 {
                if a.get(i, k) == v {
                    ai.set(i, col, 1);
                }
            }
            for j in 0..n3 {
                if b.get(k, j) == v {
                    bi.set(col, j, 1);
                }
            }
        }
        let prod = matmul_with(&ai, &bi, backend)?;
        for (cv, &pv) in c.data.iter_mut().zip(&prod.data) {
            *cv += pv as u64;
        }
    }
    Ok(c)
}

/// Triple-loop equality product.
pub fn equality_product_naive(a: &IntMatrix, b: &IntMatrix) -> Result<CountMatrix> {
    if a.cols != b.rows {
        return Err(TphdError::DimensionMismatch("inner dimensions differ".into()));
    }
    let mut c = CountMatrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        for j in 0..b.cols {
            c.data[i * b.cols + j] = (0..a.cols).filter(|&k| a.get(i, k) == b.get(k, j)).count() as u64;
        }
    }
    Ok(c)
}
