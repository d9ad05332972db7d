//! Restarted GMRES with right preconditioning.
//!
//! The iteration solves `A M⁻¹ u = b` and returns `x = M⁻¹ u`, so the
//! residual it monitors is the residual of the original system. After each
//! restart cycle the true residual `b - A x` is recomputed and used for the
//! convergence decision.

use super::{dot, norm2, LinearOperator, Preconditioner};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct GmresSettings {
    pub rtol: f64,
    pub restart: usize,
    pub max_iters: usize,
}

impl Default for GmresSettings {
    fn default() -> Self {
        Self { rtol: 1e-8, restart: 200, max_iters: 1000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum GmresStatus {
    Converged,
    MaxIterations,
    /// Arnoldi produced a zero subdiagonal while the residual was still large.
    Breakdown,
}

#[derive(Debug, Clone)]
pub struct GmresResult {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Residual norm estimate after every iteration; entry 0 is ‖b − A x₀‖.
    pub residual_history: Vec<f64>,
    pub final_residual: f64,
    pub status: GmresStatus,
}

impl GmresResult {
    pub fn converged(&self) -> bool {
        self.status == GmresStatus::Converged
    }
}

/// Solves `A x = b` from a zero initial guess.
pub fn gmres(
    op: &dyn LinearOperator,
    precond: &dyn Preconditioner,
    b: &[f64],
    settings: &GmresSettings,
) -> GmresResult {
    assert!(settings.rtol > 0.0 && settings.restart >= 1);
    let n = op.dim();
    assert_eq!(b.len(), n);
    let bnorm = norm2(b);
    let mut x = vec![0.0; n];
    let mut history = vec![bnorm];
    if bnorm == 0.0 {
        return GmresResult { x, iterations: 0, residual_history: history, final_residual: 0.0, status: GmresStatus::Converged };
    }
    let target = settings.rtol * bnorm;
    let m = settings.restart;
    let mut r = b.to_vec();
    let mut beta = bnorm;
    let mut iterations = 0usize;
    let mut w = vec![0.0; n];
    let mut z = vec![0.0; n];

    loop {
        // Krylov basis, Hessenberg columns, Givens rotations and rhs of the LS problem.
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        basis.push(r.iter().map(|v| v / beta).collect());
        let mut hess: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut cs: Vec<f64> = Vec::with_capacity(m);
        let mut sn: Vec<f64> = Vec::with_capacity(m);
        let mut g = vec![beta];
        let mut breakdown = false;
        let mut k = 0;

        while k < m && iterations < settings.max_iters {
            precond.apply(&basis[k], &mut z);
            op.apply(&z, &mut w);
            let wnorm = norm2(&w);
            let mut h = vec![0.0; k + 2];
            // Modified Gram-Schmidt with one reorthogonalization pass.
            for _ in 0..2 {
                for (j, v) in basis.iter().enumerate() {
                    let c = dot(&w, v);
                    h[j] += c;
                    for (wi, vi) in w.iter_mut().zip(v) {
                        *wi -= c * vi;
                    }
                }
            }
            let hnext = norm2(&w);
            h[k + 1] = hnext;
            for j in 0..k {
                let t = cs[j] * h[j] + sn[j] * h[j + 1];
                h[j + 1] = -sn[j] * h[j] + cs[j] * h[j + 1];
                h[j] = t;
            }
            let denom = h[k].hypot(h[k + 1]);
            let (c, s) = if denom == 0.0 { (1.0, 0.0) } else { (h[k] / denom, h[k + 1] / denom) };
            h[k] = c * h[k] + s * h[k + 1];
            h[k + 1] = 0.0;
            cs.push(c);
            sn.push(s);
            let gk = g[k];
            g[k] = c * gk;
            g.push(-s * gk);
            hess.push(h);
            iterations += 1;
            k += 1;
            let res = g[k].abs();
            history.push(res);
            if res <= target {
                break;
            }
            if hnext <= 1e-14 * wnorm {
                breakdown = true;
                break;
            }
            basis.push(w.iter().map(|v| v / hnext).collect());
        }

        // Back substitution for the LS coefficients.
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for j in i + 1..k {
                s -= hess[j][i] * y[j];
            }
            y[i] = if hess[i][i] != 0.0 { s / hess[i][i] } else { 0.0 };
        }
        let mut u = vec![0.0; n];
        for (j, yj) in y.iter().enumerate() {
            for (ui, vi) in u.iter_mut().zip(&basis[j]) {
                *ui += yj * vi;
            }
        }
        precond.apply(&u, &mut z);
        for (xi, zi) in x.iter_mut().zip(&z) {
            *xi += zi;
        }

        op.apply(&x, &mut w);
        for i in 0..n {
            r[i] = b[i] - w[i];
        }
        beta = norm2(&r);
        if let Some(last) = history.last_mut() {
            *last = beta;
        }
        if beta <= target {
            return GmresResult { x, iterations, residual_history: history, final_residual: beta, status: GmresStatus::Converged };
        }
        if breakdown {
            return GmresResult { x, iterations, residual_history: history, final_residual: beta, status: GmresStatus::Breakdown };
        }
        if iterations >= settings.max_iters {
            return GmresResult { x, iterations, residual_history: history, final_residual: beta, status: GmresStatus::MaxIterations };
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{CsrMatrix, IdentityPreconditioner};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_converges_in_one_iteration() {
        let a = CsrMatrix::identity(6);
        let b = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let res = gmres(&a, &IdentityPreconditioner, &b, &GmresSettings::default());
        assert!(res.converged());
        assert_eq!(res.iterations, 1);
        assert!(res.x.iter().zip(&b).all(|(p, q)| (p - q).abs() < 1e-14));
    }

    #[test]
    fn zero_rhs_returns_zero() {
        let a = CsrMatrix::identity(3);
        let res = gmres(&a, &IdentityPreconditioner, &[0.0; 3], &GmresSettings::default());
        assert_eq!(res.iterations, 0);
        assert_eq!(res.x, vec![0.0; 3]);
    }

    #[test]
    fn history_monotone_within_cycle_and_restart_converges() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 30;
        let mut dense = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                dense[i * n + j] = rng.random_range(-1.0..1.0) * 0.2;
            }
            dense[i * n + i] += 4.0;
        }
        let a = CsrMatrix::from_dense(n, n, &dense);
        let b: Vec<f64> = (0..n).map(|i| (i as f64).cos()).collect();
        let s = GmresSettings { rtol: 1e-10, restart: 5, max_iters: 500 };
        let res = gmres(&a, &IdentityPreconditioner, &b, &s);
        assert!(res.converged());
        for cycle in res.residual_history[1..].chunks(5) {
            for w in cycle.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12));
            }
        }
        let ax = a.mul_vec(&res.x);
        let r: f64 = ax.iter().zip(&b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        assert!(r <= 1e-10 * norm2(&b));
    }

    #[test]
    fn reports_max_iterations() {
        let n = 20;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
            }
        }
        let a = CsrMatrix::from_triplets(n, n, &t);
        let s = GmresSettings { rtol: 1e-12, restart: 3, max_iters: 4 };
        let res = gmres(&a, &IdentityPreconditioner, &vec![1.0; n], &s);
        assert_eq!(res.status, GmresStatus::MaxIterations);
        assert_eq!(res.iterations, 4);
    }
}
