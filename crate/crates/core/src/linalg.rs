//! Banded LU with partial pivoting.

use crate::error::{Error, Result};

/// Square matrix with `kl` sub- and `ku` super-diagonals.
#[derive(Debug, Clone)]
pub(crate) struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    /// Row `i` holds columns `start(i) .. start(i) + width`.
    rows: Vec<Vec<f64>>,
}

impl BandMatrix {
    pub fn new(n: usize, kl: usize, ku: usize) -> Self {
        let width = kl + ku + 1;
        BandMatrix { n, kl, ku, rows: vec![vec![0.0; width]; n] }
    }

    fn start(&self, i: usize) -> usize {
        i.saturating_sub(self.kl)
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let s = self.start(i);
        debug_assert!(j >= s && j - s < self.kl + self.ku + 1, "entry ({i},{j}) outside band");
        self.rows[i][j - s] += v;
    }

    /// Factorizes and solves `A x = b`, consuming the matrix.
    pub fn solve(self, b: &[f64]) -> Result<Vec<f64>> {
        Ok(self.factor()?.solve(b))
    }

    pub fn factor(self) -> Result<BandLu> {
        let n = self.n;
        let kl = self.kl;
        // Room for fill-in from row swaps: upper bandwidth grows to kl + ku.
        let width = 2 * kl + self.ku + 1;
        let mut starts: Vec<usize> = (0..n).map(|i| self.start(i)).collect();
        let mut rows: Vec<Vec<f64>> = self
            .rows
            .into_iter()
            .map(|mut r| {
                r.resize(width, 0.0);
                r
            })
            .collect();
        let mut pivots = Vec::with_capacity(n);
        let mut multipliers = Vec::with_capacity(n);
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            // Align every candidate row so that its first stored column is k.
            for i in k..=last {
                let shift = k - starts[i];
                if shift > 0 {
                    rows[i].rotate_left(shift);
                    let w = rows[i].len();
                    rows[i][w - shift..].iter_mut().for_each(|v| *v = 0.0);
                    starts[i] = k;
                }
            }
            let mut p = k;
            let mut best = rows[k][0].abs();
            for i in k + 1..=last {
                if rows[i][0].abs() > best {
                    best = rows[i][0].abs();
                    p = i;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(Error::Singular(k));
            }
            rows.swap(k, p);
            starts.swap(k, p);
            pivots.push(p);
            let (head, tail) = rows.split_at_mut(k + 1);
            let pivot_row = &head[k];
            let mut ms = Vec::with_capacity(last - k);
            for row in tail.iter_mut().take(last - k) {
                let m = row[0] / pivot_row[0];
                ms.push(m);
                if m != 0.0 {
                    for (r, pv) in row.iter_mut().zip(pivot_row.iter()).skip(1) {
                        *r -= m * pv;
                    }
                }
                row[0] = 0.0;
            }
            multipliers.push(ms);
        }
        Ok(BandLu { n, upper: rows, pivots, multipliers })
    }
}

#[derive(Debug, Clone)]
pub(crate) struct BandLu {
    n: usize,
    upper: Vec<Vec<f64>>,
    pivots: Vec<usize>,
    multipliers: Vec<Vec<f64>>,
}

impl BandLu {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y = b.to_vec();
        for k in 0..n {
            y.swap(k, self.pivots[k]);
            let yk = y[k];
            for (off, m) in self.multipliers[k].iter().enumerate() {
                y[k + 1 + off] -= m * yk;
            }
        }
        let mut x = vec![0.0; n];
        for k in (0..n).rev() {
            let row = &self.upper[k];
            let mut s = y[k];
            for (j, v) in row.iter().enumerate().skip(1) {
                if k + j < n {
                    s -= v * x[k + j];
                }
            }
            x[k] = s / row[0];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matches_dense_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for &(n, kl, ku) in &[(1, 0, 0), (5, 1, 1), (12, 2, 3), (30, 4, 2), (40, 6, 6)] {
            let mut dense = vec![vec![0.0; n]; n];
            let mut band = BandMatrix::new(n, kl, ku);
            for i in 0..n {
                for j in i.saturating_sub(kl)..(i + ku + 1).min(n) {
                    // Small diagonal forces pivoting.
                    let v = if i == j { rng.gen_range(-0.1..0.1) } else { rng.gen_range(-2.0..2.0) };
                    dense[i][j] = v;
                    band.add(i, j, v);
                }
            }
            let x_true: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..n).map(|i| (0..n).map(|j| dense[i][j] * x_true[j]).sum()).collect();
            let x = band.solve(&b).unwrap();
            for (a, e) in x.iter().zip(&x_true) {
                assert!((a - e).abs() < 1e-8, "n={n}: {a} vs {e}");
            }
        }
    }

    #[test]
    fn singular_detected() {
        let mut m = BandMatrix::new(3, 1, 1);
        m.add(0, 0, 1.0);
        m.add(1, 1, 0.0);
        m.add(2, 2, 1.0);
        assert!(matches!(m.solve(&[1.0, 1.0, 1.0]), Err(Error::Singular(1))));
    }
}
