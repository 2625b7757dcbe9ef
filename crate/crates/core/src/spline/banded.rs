//! Cholesky factorisation for symmetric positive-definite band matrices.

/// Lower band of a symmetric matrix: `rows[i][k]` holds `A[i][i - BW + k]`.
#[derive(Debug, Clone)]
pub(crate) struct SymBand<const BW: usize> {
    rows: Vec<[f64; 8]>,
}

impl<const BW: usize> SymBand<BW> {
    pub fn zeros(n: usize) -> Self {
        assert!(BW < 8);
        Self {
            rows: vec![[0.0; 8]; n],
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    /// Adds `v` to `A[i][j]` (and implicitly `A[j][i]`); requires `|i - j| <= BW`.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        debug_assert!(r - c <= BW);
        self.rows[r][BW - (r - c)] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        if r - c > BW {
            0.0
        } else {
            self.rows[r][BW - (r - c)]
        }
    }

    fn set(&mut self, i: usize, j: usize, v: f64) {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        self.rows[r][BW - (r - c)] = v;
    }

    /// Pins variable `k` to `value`: eliminates its row/column and moves the
    /// coupling into each right-hand side. Keeps the matrix symmetric.
    pub fn pin(&mut self, k: usize, value: &[f64], rhs: &mut [Vec<f64>]) {
        let n = self.len();
        let lo = k.saturating_sub(BW);
        let hi = (k + BW).min(n - 1);
        for i in lo..=hi {
            if i == k {
                continue;
            }
            let a = self.get(i, k);
            for (r, &x) in rhs.iter_mut().zip(value) {
                r[i] -= a * x;
            }
            self.set(i, k, 0.0);
        }
        self.set(k, k, 1.0);
        for (r, &x) in rhs.iter_mut().zip(value) {
            r[k] = x;
        }
    }

    /// In-place Cholesky; returns `None` if the matrix is not positive definite.
    pub fn factor(mut self) -> Option<BandCholesky<BW>> {
        let n = self.len();
        for i in 0..n {
            let lo = i.saturating_sub(BW);
            for j in lo..=i {
                let mut s = self.get(i, j);
                let kl = lo.max(j.saturating_sub(BW));
                for k in kl..j {
                    s -= self.get(i, k) * self.get(j, k);
                }
                if i == j {
                    if s <= 0.0 || !s.is_finite() {
                        return None;
                    }
                    self.set(i, i, s.sqrt());
                } else {
                    let d = self.get(j, j);
                    self.set(i, j, s / d);
                }
            }
        }
        Some(BandCholesky { l: self })
    }
}

pub(crate) struct BandCholesky<const BW: usize> {
    l: SymBand<BW>,
}

impl<const BW: usize> BandCholesky<BW> {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.l.len();
        let mut y = b.to_vec();
        for i in 0..n {
            let lo = i.saturating_sub(BW);
            for k in lo..i {
                y[i] -= self.l.get(i, k) * y[k];
            }
            y[i] /= self.l.get(i, i);
        }
        for i in (0..n).rev() {
            let hi = (i + BW).min(n - 1);
            for k in i + 1..=hi {
                y[i] -= self.l.get(k, i) * y[k];
            }
            y[i] /= self.l.get(i, i);
        }
        y
    }
}
