//! Band LU with partial pivoting, in the style of LAPACK's `gbtrf`/`gbtrs`.

use crate::error::{Error, Result};

/// Square band matrix with `kl` sub- and `ku` super-diagonals. Each row keeps room for the
/// `kl` extra super-diagonals that pivoting can fill in.
#[derive(Clone, Debug)]
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
        Self { n, kl, ku, width, data: vec![0.0; n * width] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    #[inline]
    fn idx(&self, r: usize, c: usize) -> Option<usize> {
        if c + self.kl < r || c > r + self.ku + self.kl {
            None
        } else {
            Some(r * self.width + (c + self.kl - r))
        }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.idx(r, c).map_or(0.0, |i| self.data[i])
    }

    /// Sets an entry inside the declared band; panics outside it.
    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        assert!(c + self.kl >= r && c <= r + self.ku, "entry ({r},{c}) outside the band");
        let i = self.idx(r, c).unwrap();
        self.data[i] = v;
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_fn(self.n, self.n, |r, c| self.get(r, c))
    }

    /// `y = A x` using the stored band (valid before factorisation).
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|r| {
                let c0 = r.saturating_sub(self.kl);
                let c1 = (r + self.ku).min(self.n - 1);
                (c0..=c1).map(|c| self.get(r, c) * x[c]).sum()
            })
            .collect()
    }

    /// LU factorisation with partial pivoting. Consumes the matrix.
    pub fn factor(mut self) -> Result<BandLu> {
        let n = self.n;
        let scale = self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let tiny = f64::EPSILON * scale.max(f64::MIN_POSITIVE) * n as f64;
        let mut piv = vec![0usize; n];
        for j in 0..n {
            let last = (j + self.kl).min(n - 1);
            let mut p = j;
            let mut best = self.get(j, j).abs();
            for r in j + 1..=last {
                let v = self.get(r, j).abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if !(best > tiny) {
                return Err(Error::Singular(format!("band LU pivot {j} vanishes")));
            }
            piv[j] = p;
            let cmax = (j + self.ku + self.kl).min(n - 1);
            if p != j {
                for c in j..=cmax {
                    let (a, b) = (self.idx(j, c).unwrap(), self.idx(p, c));
                    match b {
                        Some(b) => self.data.swap(a, b),
                        None => {
                            debug_assert_eq!(self.data[a], 0.0);
                        }
                    }
                }
            }
            let pivot = self.get(j, j);
            for r in j + 1..=last {
                let ir = self.idx(r, j).unwrap();
                let l = self.data[ir] / pivot;
                self.data[ir] = l;
                if l != 0.0 {
                    for c in j + 1..=cmax {
                        let (ij, irc) = (self.idx(j, c).unwrap(), self.idx(r, c).unwrap());
                        self.data[irc] -= l * self.data[ij];
                    }
                }
            }
        }
        Ok(BandLu { m: self, piv })
    }
}

/// Factorised band matrix, reusable for many right-hand sides.
#[derive(Clone, Debug)]
pub struct BandLu {
    m: BandMatrix,
    piv: Vec<usize>,
}

impl BandLu {
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let m = &self.m;
        let n = m.n;
        for j in 0..n {
            let p = self.piv[j];
            if p != j {
                b.swap(j, p);
            }
            let bj = b[j];
            if bj != 0.0 {
                for r in j + 1..=(j + m.kl).min(n - 1) {
                    b[r] -= m.get(r, j) * bj;
                }
            }
        }
        for j in (0..n).rev() {
            let cmax = (j + m.ku + m.kl).min(n - 1);
            let mut s = b[j];
            for c in j + 1..=cmax {
                s -= m.get(j, c) * b[c];
            }
            b[j] = s / m.get(j, j);
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}
