//! Dense quadratic program with elementwise lower bounds:
//!   minimize 1/2 x'Qx + b'x  subject to  x >= lb
//! solved by projected gradient with Barzilai-Borwein steps and an exact
//! line search, then polished by solving the free subsystem exactly.

#[derive(Clone, Debug)]
pub struct DenseBoxQp {
    /// symmetric positive semidefinite
    pub q: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub lb: Vec<f64>,
}

impl DenseBoxQp {
    pub fn n(&self) -> usize {
        self.b.len()
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let n = self.n();
        let mut quad = 0.0;
        for i in 0..n {
            let mut row = 0.0;
            for j in 0..n {
                row += self.q[i][j] * x[j];
            }
            quad += x[i] * row;
        }
        0.5 * quad + dot(&self.b, x)
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n();
        (0..n)
            .map(|i| dot(&self.q[i], x) + self.b[i])
            .collect()
    }

    pub fn project(&self, x: &mut [f64]) {
        for (xi, &l) in x.iter_mut().zip(&self.lb) {
            if *xi < l {
                *xi = l;
            }
        }
    }

    /// Max-norm of the projected gradient (the first-order optimality
    /// residual for this box).
    pub fn pg_norm(&self, x: &[f64], g: &[f64]) -> f64 {
        x.iter()
            .zip(g)
            .zip(&self.lb)
            .map(|((&xi, &gi), &l)| if xi <= l { gi.min(0.0).abs() } else { gi.abs() })
            .fold(0.0, f64::max)
    }

    pub fn solve(&self, max_iters: usize) -> Vec<f64> {
        let n = self.n();
        let mut x: Vec<f64> = self.lb.iter().map(|&l| l.max(0.0)).collect();
        if n == 0 {
            return x;
        }
        let diag_scale = (0..n).map(|i| self.q[i][i].abs()).fold(1e-12, f64::max);
        let mut g = self.gradient(&x);
        let mut step = 1.0 / diag_scale;
        for _ in 0..max_iters {
            if self.pg_norm(&x, &g) <= 1e-13 * diag_scale.max(1.0) {
                break;
            }
            let mut cand: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - step * gi).collect();
            self.project(&mut cand);
            let p: Vec<f64> = cand.iter().zip(&x).map(|(c, xi)| c - xi).collect();
            let gp = dot(&g, &p);
            if gp >= 0.0 {
                break;
            }
            let qp: Vec<f64> = (0..n).map(|i| dot(&self.q[i], &p)).collect();
            let pqp = dot(&p, &qp);
            let tau = if pqp <= 0.0 { 1.0 } else { (-gp / pqp).min(1.0) };
            let mut ss = 0.0;
            let mut sy = 0.0;
            for i in 0..n {
                let s_i = tau * p[i];
                let y_i = tau * qp[i]; // g(x + s) - g(x) = Q s
                x[i] += s_i;
                g[i] += y_i;
                ss += s_i * s_i;
                sy += s_i * y_i;
            }
            step = if sy > 1e-300 { (ss / sy).clamp(1e-12, 1e12) } else { 1e12 };
        }
        match self.polish(&x) {
            Some(better) => better,
            None => x,
        }
    }

    /// Guesses the active set from `x`, solves the free variables exactly,
    /// and keeps the result if it is feasible, KKT-consistent, and no worse.
    fn polish(&self, x: &[f64]) -> Option<Vec<f64>> {
        let n = self.n();
        let g = self.gradient(x);
        let active: Vec<bool> = (0..n)
            .map(|i| x[i] <= self.lb[i] + 1e-8 * (1.0 + self.lb[i].abs()) && g[i] > 0.0)
            .collect();
        let free: Vec<usize> = (0..n).filter(|&i| !active[i]).collect();
        let mut out = self.lb.clone();
        if !free.is_empty() {
            // Q_FF z = -(b_F + Q_FA lb_A)
            let m = free.len();
            let mut a = vec![vec![0.0; m]; m];
            let mut rhs = vec![0.0; m];
            for (r, &i) in free.iter().enumerate() {
                let mut s = self.b[i];
                for j in 0..n {
                    if active[j] {
                        s += self.q[i][j] * self.lb[j];
                    }
                }
                rhs[r] = -s;
                for (c, &j) in free.iter().enumerate() {
                    a[r][c] = self.q[i][j];
                }
            }
            let z = gaussian_solve(a, rhs)?;
            for (r, &i) in free.iter().enumerate() {
                out[i] = z[r];
            }
        }
        for i in 0..n {
            if out[i] < self.lb[i] - 1e-10 {
                return None;
            }
            out[i] = out[i].max(self.lb[i]);
        }
        let g_out = self.gradient(&out);
        for i in 0..n {
            if active[i] && g_out[i] < -1e-7 {
                return None;
            }
        }
        if self.objective(&out) <= self.objective(x) + 1e-12 {
            Some(out)
        } else {
            None
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Plain Gaussian elimination with partial pivoting. None on (near)
/// singular systems.
fn gaussian_solve(mut a: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Option<Vec<f64>> {
    let n = rhs.len();
    let scale = a
        .iter()
        .flat_map(|row| row.iter().map(|x| x.abs()))
        .fold(1e-300, f64::max);
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-12 * scale {
            return None;
        }
        a.swap(col, pivot);
        rhs.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut s = rhs[row];
        for k in row + 1..n {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    Some(x)
}
