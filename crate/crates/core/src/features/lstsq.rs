//! Dense least squares by Householder QR with column pivoting.
//!
//! Rank-deficient systems are resolved with a complete orthogonal
//! decomposition, giving the minimum-norm least-squares solution.

/// QR factorization `A P = Q R` of an `m x p` matrix, stored column-major.
#[derive(Debug, Clone)]
pub struct QrFactor {
    m: usize,
    p: usize,
    /// R on and above the diagonal, Householder vectors below it.
    qr: Vec<f64>,
    tau: Vec<f64>,
    /// `perm[k]` is the original column placed at position `k`.
    perm: Vec<usize>,
    rank: usize,
    /// Factorization of the leading `rank x p` block of R, transposed, used
    /// for the minimum-norm solve when `rank < p`.
    cod: Option<Box<QrFactor>>,
}

fn householder(x: &mut [f64]) -> f64 {
    // Overwrites x with (beta, v[1..]) where H = I - tau v v^T, v[0] = 1.
    let alpha = x[0];
    let xnorm = x[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
    if xnorm == 0.0 {
        return 0.0;
    }
    // signum(+0.0) is 1, so beta is never zero here.
    let beta = -alpha.signum() * alpha.hypot(xnorm);
    let scale = 1.0 / (alpha - beta);
    for v in &mut x[1..] {
        *v *= scale;
    }
    x[0] = beta;
    (beta - alpha) / beta
}

impl QrFactor {
    /// Factor a row-major `m x p` matrix.
    pub fn new(a_row_major: &[f64], m: usize, p: usize) -> Self {
        assert_eq!(a_row_major.len(), m * p);
        let mut qr = vec![0.0; m * p];
        for i in 0..m {
            for j in 0..p {
                qr[j * m + i] = a_row_major[i * p + j];
            }
        }
        Self::from_col_major(qr, m, p, true)
    }

    fn from_col_major(mut qr: Vec<f64>, m: usize, p: usize, pivot: bool) -> Self {
        let steps = m.min(p);
        let mut tau = vec![0.0; steps];
        let mut perm: Vec<usize> = (0..p).collect();

        for k in 0..steps {
            if pivot {
                let norm_from =
                    |j: usize| -> f64 { qr[j * m + k..(j + 1) * m].iter().map(|v| v * v).sum() };
                let mut best = k;
                let mut best_norm = norm_from(k);
                for j in k + 1..p {
                    let n = norm_from(j);
                    if n > best_norm {
                        best = j;
                        best_norm = n;
                    }
                }
                if best != k {
                    for i in 0..m {
                        qr.swap(k * m + i, best * m + i);
                    }
                    perm.swap(k, best);
                }
            }
            let t = householder(&mut qr[k * m + k..(k + 1) * m]);
            tau[k] = t;
            if t != 0.0 {
                for j in k + 1..p {
                    let (head, tail) = qr.split_at_mut(j * m);
                    let v = &head[k * m + k..(k + 1) * m];
                    let col = &mut tail[k..m];
                    let mut w = col[0];
                    for i in 1..v.len() {
                        w += v[i] * col[i];
                    }
                    w *= t;
                    col[0] -= w;
                    for i in 1..v.len() {
                        col[i] -= w * v[i];
                    }
                }
            }
        }

        let r00 = if steps > 0 { qr[0].abs() } else { 0.0 };
        let tol = (m.max(p) as f64) * f64::EPSILON * r00;
        let rank = (0..steps)
            .take_while(|&k| r00 > 0.0 && qr[k * m + k].abs() > tol)
            .count();

        let mut f = QrFactor {
            m,
            p,
            qr,
            tau,
            perm,
            rank,
            cod: None,
        };
        if pivot && rank < p && rank > 0 {
            // Transpose of the leading rank x p block of R: p x rank, col-major.
            let mut rt = vec![0.0; p * rank];
            for i in 0..rank {
                for j in i..p {
                    rt[i * p + j] = f.qr[j * m + i];
                }
            }
            f.cod = Some(Box::new(QrFactor::from_col_major(rt, p, rank, false)));
        }
        f
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn rows(&self) -> usize {
        self.m
    }

    pub fn cols(&self) -> usize {
        self.p
    }

    /// Apply Q^T to `b` in place.
    fn apply_qt(&self, b: &mut [f64]) {
        let m = self.m;
        for (k, &t) in self.tau.iter().enumerate() {
            if t == 0.0 {
                continue;
            }
            let v = &self.qr[k * m + k..(k + 1) * m];
            let mut w = b[k];
            for i in 1..v.len() {
                w += v[i] * b[k + i];
            }
            w *= t;
            b[k] -= w;
            for i in 1..v.len() {
                b[k + i] -= w * v[i];
            }
        }
    }

    /// Apply Q to `b` in place.
    fn apply_q(&self, b: &mut [f64]) {
        let m = self.m;
        for (k, &t) in self.tau.iter().enumerate().rev() {
            if t == 0.0 {
                continue;
            }
            let v = &self.qr[k * m + k..(k + 1) * m];
            let mut w = b[k];
            for i in 1..v.len() {
                w += v[i] * b[k + i];
            }
            w *= t;
            b[k] -= w;
            for i in 1..v.len() {
                b[k + i] -= w * v[i];
            }
        }
    }

    /// Minimum-norm least-squares solution of `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.m);
        let (m, p, r) = (self.m, self.p, self.rank);
        let mut c = b.to_vec();
        self.apply_qt(&mut c);

        let mut y = vec![0.0; p];
        if r == p {
            for i in (0..p).rev() {
                let mut s = c[i];
                for j in i + 1..p {
                    s -= self.qr[j * m + i] * y[j];
                }
                y[i] = s / self.qr[i * m + i];
            }
        } else if let Some(cod) = &self.cod {
            // R1 = R2^T Q2^T; solve R2^T z = c[..r], then y = Q2 [z; 0].
            let mut z = vec![0.0; p];
            for i in 0..r {
                let mut s = c[i];
                for j in 0..i {
                    s -= cod.qr[i * p + j] * z[j];
                }
                z[i] = s / cod.qr[i * p + i];
            }
            cod.apply_q(&mut z);
            y = z;
        }

        let mut x = vec![0.0; p];
        for (k, &col) in self.perm.iter().enumerate() {
            x[col] = y[k];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn matvec(a: &[f64], m: usize, p: usize, x: &[f64]) -> Vec<f64> {
        (0..m)
            .map(|i| (0..p).map(|j| a[i * p + j] * x[j]).sum())
            .collect()
    }

    // Normal equations solved by Gaussian elimination; independent of QR.
    fn normal_equations(a: &[f64], m: usize, p: usize, b: &[f64]) -> Vec<f64> {
        let mut g = vec![vec![0.0; p + 1]; p];
        for i in 0..p {
            for j in 0..p {
                g[i][j] = (0..m).map(|k| a[k * p + i] * a[k * p + j]).sum();
            }
            g[i][p] = (0..m).map(|k| a[k * p + i] * b[k]).sum();
        }
        for col in 0..p {
            let piv = (col..p)
                .max_by(|&x, &y| g[x][col].abs().total_cmp(&g[y][col].abs()))
                .unwrap();
            g.swap(col, piv);
            for row in 0..p {
                if row != col {
                    let f = g[row][col] / g[col][col];
                    for k in col..=p {
                        g[row][k] -= f * g[col][k];
                    }
                }
            }
        }
        (0..p).map(|i| g[i][p] / g[i][i]).collect()
    }

    #[test]
    fn matches_normal_equations_on_random_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let m = rng.random_range(5..30);
            let p = rng.random_range(1..=m.min(6));
            let a: Vec<f64> = (0..m * p).map(|_| rng.random_range(-2.0..2.0)).collect();
            let b: Vec<f64> = (0..m).map(|_| rng.random_range(-5.0..5.0)).collect();
            let qr = QrFactor::new(&a, m, p);
            assert_eq!(qr.rank(), p);
            let x = qr.solve(&b);
            let oracle = normal_equations(&a, m, p, &b);
            for (u, v) in x.iter().zip(&oracle) {
                assert!((u - v).abs() < 1e-8 * (1.0 + v.abs()), "{u} vs {v}");
            }
        }
    }

    #[test]
    fn exact_square_system() {
        let a = [2.0, 1.0, 1.0, 3.0];
        let x = QrFactor::new(&a, 2, 2).solve(&[3.0, 5.0]);
        assert!((x[0] - 0.8).abs() < 1e-14 && (x[1] - 1.4).abs() < 1e-14);
    }

    #[test]
    fn duplicated_column_gives_minimum_norm_split() {
        // Columns [u, u, w]: LS over (u, w) gives (s, q); min-norm splits s evenly.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = 12;
        let u: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let reduced: Vec<f64> = (0..m).flat_map(|i| [u[i], w[i]]).collect();
        let full: Vec<f64> = (0..m).flat_map(|i| [u[i], u[i], w[i]]).collect();
        let sq = normal_equations(&reduced, m, 2, &b);
        let qr = QrFactor::new(&full, m, 3);
        assert_eq!(qr.rank(), 2);
        let x = qr.solve(&b);
        assert!((x[0] - sq[0] / 2.0).abs() < 1e-10);
        assert!((x[1] - sq[0] / 2.0).abs() < 1e-10);
        assert!((x[2] - sq[1]).abs() < 1e-10);
    }

    #[test]
    fn zero_matrix_gives_zero_solution() {
        let qr = QrFactor::new(&[0.0; 6], 3, 2);
        assert_eq!(qr.rank(), 0);
        assert_eq!(qr.solve(&[1.0, 2.0, 3.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn residual_is_orthogonal_to_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (m, p) = (40, 5);
        let a: Vec<f64> = (0..m * p).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = QrFactor::new(&a, m, p).solve(&b);
        let fitted = matvec(&a, m, p, &x);
        for j in 0..p {
            let dot: f64 = (0..m).map(|i| a[i * p + j] * (b[i] - fitted[i])).sum();
            assert!(dot.abs() < 1e-12);
        }
    }
}
