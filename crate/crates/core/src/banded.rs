//! Banded LU with partial pivoting.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    /// n×n matrix with kl sub- and ku super-diagonals. Room for pivoting fill is reserved.
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        BandMatrix { n, kl, ku, width, data: vec![0.0; n * width] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && j <= i + self.kl + self.ku);
        i * self.width + (j + self.kl - i)
    }

    pub fn in_band(&self, i: usize, j: usize) -> bool {
        i < self.n && j < self.n && j + self.kl >= i && j <= i + self.ku
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j + self.kl >= i && j <= i + self.kl + self.ku {
            self.data[self.idx(i, j)]
        } else {
            0.0
        }
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "({i}, {j}) outside band");
        let k = self.idx(i, j);
        self.data[k] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "({i}, {j}) outside band");
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    /// Multiply row i by f.
    pub fn scale_row(&mut self, i: usize, f: f64) {
        let lo = i.saturating_sub(self.kl);
        let hi = (i + self.ku).min(self.n - 1);
        for j in lo..=hi {
            let k = self.idx(i, j);
            self.data[k] *= f;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku).min(self.n - 1);
                (lo..=hi).map(|j| self.get(i, j) * x[j]).sum()
            })
            .collect()
    }

    /// (A·D)ᵀ(A·D) and (A·D)ᵀr for a diagonal column scaling D.
    pub fn normal_equations(&self, r: &[f64], d: &[f64]) -> (BandMatrix, Vec<f64>) {
        let n = self.n;
        let w = self.kl + self.ku;
        let mut ata = BandMatrix::zeros(n, w, w);
        let mut g = vec![0.0; n];
        for k in 0..n {
            let lo = k.saturating_sub(self.kl);
            let hi = (k + self.ku).min(n - 1);
            for i in lo..=hi {
                let a = self.get(k, i) * d[i];
                if a == 0.0 {
                    continue;
                }
                g[i] += a * r[k];
                for j in lo..=hi {
                    let k2 = ata.idx(i, j);
                    ata.data[k2] += a * self.get(k, j) * d[j];
                }
            }
        }
        (ata, g)
    }

    pub fn factor(mut self) -> Result<BandLu> {
        let n = self.n;
        let (kl, ku) = (self.kl, self.ku);
        let mut piv = vec![0usize; n];
        let scale = self.data.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = self.get(k, k).abs();
            for i in k + 1..=last_row {
                let v = self.get(i, k).abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if !(best > scale * 1e-300) || !best.is_finite() {
                return Err(Error::Singular);
            }
            piv[k] = p;
            let last_col = (k + kl + ku).min(n - 1);
            if p != k {
                for j in k..=last_col {
                    let a = self.idx(k, j);
                    let b = self.idx(p, j);
                    self.data.swap(a, b);
                }
            }
            let d = self.get(k, k);
            for i in k + 1..=last_row {
                let lik = self.get(i, k) / d;
                let ik = self.idx(i, k);
                self.data[ik] = lik;
                if lik != 0.0 {
                    for j in k + 1..=last_col {
                        let kj = self.data[self.idx(k, j)];
                        let ij = self.idx(i, j);
                        self.data[ij] -= lik * kj;
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
    pub fn solve(&self, b: &mut [f64]) {
        let a = &self.m;
        let n = a.n;
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            for i in k + 1..=(k + a.kl).min(n - 1) {
                b[i] -= a.data[a.idx(i, k)] * bk;
            }
        }
        for k in (0..n).rev() {
            let mut s = b[k];
            for j in k + 1..=(k + a.kl + a.ku).min(n - 1) {
                s -= a.data[a.idx(k, j)] * b[j];
            }
            b[k] = s / a.data[a.idx(k, k)];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    fn random_band(n: usize, kl: usize, ku: usize, seed: u64) -> (BandMatrix, DMatrix<f64>) {
        let mut s = seed;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let mut b = BandMatrix::zeros(n, kl, ku);
        let mut d = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i.saturating_sub(kl)..=(i + ku).min(n - 1) {
                let v = next();
                b.set(i, j, v);
                d[(i, j)] = v;
            }
        }
        (b, d)
    }

    #[test]
    fn matches_dense_solve() {
        for (n, kl, ku) in [(1, 0, 0), (7, 1, 1), (40, 3, 2), (60, 7, 6)] {
            let (b, d) = random_band(n, kl, ku, n as u64);
            let rhs: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
            let mut x = rhs.clone();
            b.clone().factor().unwrap().solve(&mut x);
            let xd = d.lu().solve(&DVector::from_vec(rhs.clone())).unwrap();
            for i in 0..n {
                assert!((x[i] - xd[i]).abs() < 1e-9 * (1.0 + xd[i].abs()), "n={n} i={i}");
            }
            let r = b.mul_vec(&x);
            for i in 0..n {
                assert!((r[i] - rhs[i]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn normal_equations_match_dense() {
        let (b, d) = random_band(30, 3, 2, 9);
        let r: Vec<f64> = (0..30).map(|i| (i as f64).cos()).collect();
        let cs: Vec<f64> = (0..30).map(|i| 1.0 + 0.1 * i as f64).collect();
        let (ata, g) = b.normal_equations(&r, &cs);
        let ds = &d * DMatrix::from_diagonal(&DVector::from_vec(cs.clone()));
        let full = ds.transpose() * &ds;
        let gd = ds.transpose() * DVector::from_vec(r);
        for i in 0..30 {
            assert!((g[i] - gd[i]).abs() < 1e-12);
            for j in 0..30 {
                assert!((ata.get(i, j) - full[(i, j)]).abs() < 1e-12, "({i}, {j})");
            }
        }
    }

    #[test]
    fn needs_pivoting() {
        let mut b = BandMatrix::zeros(2, 1, 1);
        b.set(0, 1, 1.0);
        b.set(1, 0, 1.0);
        let lu = b.factor().unwrap();
        let mut x = vec![2.0, 3.0];
        lu.solve(&mut x);
        assert_eq!(x, vec![3.0, 2.0]);
    }

    #[test]
    fn singular_detected() {
        let b = BandMatrix::zeros(3, 1, 1);
        assert!(matches!(b.factor(), Err(Error::Singular)));
    }
}
