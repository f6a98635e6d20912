//! Banded direct solvers: LU with partial pivoting (LINPACK `gbfa`/`gbsl`
//! layout) and a symmetric `LDLᵀ` without pivoting.
//!
//! Row `i` stores columns `i - kl ..= i + ku + kl`; the extra `kl`
//! superdiagonals receive fill-in from row interchanges.

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("zero pivot in column {column} (|pivot| = {pivot:e})")]
pub struct SingularMatrix {
    pub column: usize,
    pub pivot: f64,
}

#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            width,
            data: vec![0.0; n * width],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && j <= i + self.ku + self.kl);
        i * self.width + (j + self.kl - i)
    }

    /// Adds `v` at `(i, j)`; `j` must lie within the declared band.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(j + self.kl >= i && j <= i + self.ku, "({i}, {j}) outside the band");
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j + self.kl < i || j > i + self.ku {
            0.0
        } else {
            self.data[self.idx(i, j)]
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku).min(self.n - 1);
                (lo..=hi).map(|j| self.data[self.idx(i, j)] * x[j]).sum()
            })
            .collect()
    }

    /// Factorises in place. A pivot below `tiny * max|entry|` is reported as singular.
    pub fn factor(mut self, tiny: f64) -> Result<BandLu, SingularMatrix> {
        let n = self.n;
        let scale = self.data.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
        let mut piv = vec![0usize; n];
        let reach = self.ku + self.kl;
        for k in 0..n {
            let last = (k + self.kl).min(n - 1);
            let mut p = k;
            let mut best = self.data[self.idx(k, k)].abs();
            for i in k + 1..=last {
                let v = self.data[self.idx(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            piv[k] = p;
            if best <= tiny * scale {
                return Err(SingularMatrix { column: k, pivot: best });
            }
            let jend = (k + reach).min(n - 1);
            if p != k {
                for j in k..=jend {
                    let (a, b) = (self.idx(k, j), self.idx(p, j));
                    self.data.swap(a, b);
                }
            }
            let pivot = self.data[self.idx(k, k)];
            for i in k + 1..=last {
                let ik = self.idx(i, k);
                let l = self.data[ik] / pivot;
                self.data[ik] = l;
                if l != 0.0 {
                    for j in k + 1..=jend {
                        let (ij, kj) = (self.idx(i, j), self.idx(k, j));
                        self.data[ij] -= l * self.data[kj];
                    }
                }
            }
        }
        Ok(BandLu { m: self, piv })
    }
}

#[derive(Debug, Clone)]
pub struct BandLu {
    m: BandMatrix,
    piv: Vec<usize>,
}

impl BandLu {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let m = &self.m;
        let n = m.n;
        let mut x = b.to_vec();
        for k in 0..n {
            x.swap(k, self.piv[k]);
            let xk = x[k];
            if xk != 0.0 {
                for i in k + 1..=(k + m.kl).min(n - 1) {
                    x[i] -= m.data[m.idx(i, k)] * xk;
                }
            }
        }
        let reach = m.ku + m.kl;
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..=(i + reach).min(n - 1) {
                s -= m.data[m.idx(i, j)] * x[j];
            }
            x[i] = s / m.data[m.idx(i, i)];
        }
        x
    }

    /// Sign of the determinant and the number of negative pivots of `U`.
    pub fn negative_pivots(&self) -> usize {
        (0..self.m.n).filter(|&i| self.m.data[self.m.idx(i, i)] < 0.0).count()
    }
}

/// Symmetric band matrix, lower triangle stored row by row: row `i` keeps
/// columns `i - bw ..= i`.
#[derive(Debug, Clone)]
pub struct SymBandMatrix {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl SymBandMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * (self.bw + 1) + (self.bw + j - i)
    }

    /// Adds `v` at `(i, j)` (and by symmetry `(j, i)`).
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if j > i { (j, i) } else { (i, j) };
        assert!(i - j <= self.bw, "({i}, {j}) outside the band");
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if j > i { (j, i) } else { (i, j) };
        if i - j > self.bw {
            0.0
        } else {
            self.data[self.idx(i, j)]
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            let row = &self.data[self.idx(i, lo)..=self.idx(i, i)];
            let mut s = row[row.len() - 1] * x[i];
            for (a, j) in row[..row.len() - 1].iter().zip(lo..i) {
                s += a * x[j];
                y[j] += a * x[i];
            }
            y[i] += s;
        }
        y
    }

    /// `A = L D Lᵀ` without pivoting. Fails when a pivot falls below
    /// `tiny * max|entry|`; intended for matrices whose leading minors stay
    /// well away from singular (shifted Laplacians and their perturbations).
    pub fn factor_ldlt(mut self, tiny: f64) -> Result<Ldlt, SingularMatrix> {
        let (n, bw) = (self.n, self.bw);
        let scale = self.data.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
        let w = bw + 1;
        let mut d = vec![0.0; n];
        // Scratch row: l_ik * d_k for the current row.
        let mut ld = vec![0.0; w];
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let base = i * w + bw - i;
            for j in lo..i {
                // a_ij - Σ_k l_ik d_k l_jk over the shared band.
                let klo = lo.max(j.saturating_sub(bw));
                let jbase = j * w + bw - j;
                let mut s = self.data[base + j];
                for k in klo..j {
                    s -= ld[k - lo] * self.data[jbase + k];
                }
                ld[j - lo] = s;
                self.data[base + j] = s / d[j];
            }
            let mut s = self.data[base + i];
            for j in lo..i {
                s -= ld[j - lo] * self.data[base + j];
            }
            if !(s.abs() > tiny * scale) {
                return Err(SingularMatrix { column: i, pivot: s.abs() });
            }
            d[i] = s;
        }
        Ok(Ldlt { m: self, d })
    }
}

#[derive(Debug, Clone)]
pub struct Ldlt {
    m: SymBandMatrix,
    d: Vec<f64>,
}

impl Ldlt {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (n, bw) = (self.m.n, self.m.bw);
        let w = bw + 1;
        let mut x = b.to_vec();
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let base = i * w + bw - i;
            let mut s = x[i];
            for j in lo..i {
                s -= self.m.data[base + j] * x[j];
            }
            x[i] = s;
        }
        for i in 0..n {
            x[i] /= self.d[i];
        }
        for i in (0..n).rev() {
            let lo = i.saturating_sub(bw);
            let base = i * w + bw - i;
            let xi = x[i];
            for j in lo..i {
                x[j] -= self.m.data[base + j] * xi;
            }
        }
        x
    }

    /// Number of negative pivots, which by Sylvester's law equals the number
    /// of negative eigenvalues.
    pub fn negative_count(&self) -> usize {
        self.d.iter().filter(|v| **v < 0.0).count()
    }

    pub fn pivots(&self) -> &[f64] {
        &self.d
    }
}
