//! KKT residuals of a candidate point.

use nalgebra::{Cholesky, DMatrix, DVector};

use super::expr::Layout;
use super::{Point, SubproblemSpec};
use crate::linalg::{hermitize, is_positive_definite, min_eigenvalue, trace_product, CMatrix, C64};

/// Inequalities at or below this value are treated as active.
const ACTIVE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals {
    /// Norm of the Lagrangian gradient, relative to `1 + |grad F|`.
    pub stationarity: f64,
    /// Largest violation among diagonal, equality, inequality and PSD
    /// constraints.
    pub primal: f64,
    pub complementarity: f64,
    /// Negative parts of the inequality multipliers and of the PSD dual.
    pub dual: f64,
    pub min_psd_eig: f64,
}

impl KktResiduals {
    pub fn undefined() -> Self {
        Self {
            stationarity: f64::NAN,
            primal: f64::NAN,
            complementarity: f64::NAN,
            dual: f64::NAN,
            min_psd_eig: f64::NAN,
        }
    }

    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.primal)
            .max(self.complementarity)
            .max(self.dual)
    }
}

fn primal_violation(spec: &SubproblemSpec, p: &Point, y: &[f64], layout: &Layout) -> (f64, f64) {
    let mut v: f64 = 0.0;
    for (b, w) in spec.blocks.iter().zip(&p.blocks) {
        if let Some(d) = &b.diagonal {
            for k in 0..b.dim {
                v = v.max((w[(k, k)].re - d[k]).abs());
            }
        }
    }
    for e in &spec.equalities {
        v = v.max(e.eval(layout, y).abs());
    }
    for g in &spec.inequalities {
        v = v.max(g.value(layout, y).map_or(f64::INFINITY, |x| (-x).max(0.0)));
    }
    let min_eig = p
        .blocks
        .iter()
        .map(min_eigenvalue)
        .fold(f64::INFINITY, f64::min);
    if min_eig.is_finite() {
        v = v.max((-min_eig).max(0.0));
    }
    (v, if min_eig.is_finite() { min_eig } else { 0.0 })
}

/// Gradient of `F + sum_j z_j g_j` with respect to `y`.
fn lagrangian_gradient(
    spec: &SubproblemSpec,
    layout: &Layout,
    y: &[f64],
    z: &[(usize, f64)],
) -> Vec<f64> {
    let mut grad = spec
        .objective
        .gradient(layout, y)
        .unwrap_or_else(|| vec![f64::NAN; layout.len()]);
    for &(j, zj) in z {
        if let Some(g) = spec.inequalities[j].gradient(layout, y) {
            for (a, b) in grad.iter_mut().zip(g) {
                *a += zj * b;
            }
        }
    }
    grad
}

/// `sum_i c_i A_i` over the features of block `b`.
fn weighted_features(spec: &SubproblemSpec, b: usize, coef: &[f64]) -> CMatrix {
    let n = spec.blocks[b].dim;
    let mut acc = CMatrix::zeros(n, n);
    for (i, f) in spec.features.iter().enumerate() {
        if f.block == b && coef[i] != 0.0 {
            acc += f.dense() * C64::new(coef[i], 0.0);
        }
    }
    acc
}

/// Residuals at an approximately central point of the barrier path with
/// parameter `t`, using the barrier duals `z_j = 1/(t g_j)` and
/// `S_b = W_b^{-1} / t`.
pub(super) fn central_residuals(spec: &SubproblemSpec, p: &Point, t: f64) -> KktResiduals {
    let layout = spec.layout();
    let y = spec.reduced_vector(p);
    let (primal, min_psd_eig) = primal_violation(spec, p, &y, &layout);
    let z: Vec<(usize, f64)> = spec
        .inequalities
        .iter()
        .enumerate()
        .map(|(j, g)| (j, g.value(&layout, &y).map_or(0.0, |v| 1.0 / (t * v))))
        .collect();
    let grad = lagrangian_gradient(spec, &layout, &y, &z);
    let fscale = 1.0
        + spec
            .objective
            .gradient(&layout, &y)
            .map_or(0.0, |g| g.iter().fold(0.0, |a: f64, b| a.max(b.abs())));
    let ns = spec.scalars;
    let nf = spec.features.len();
    let coef: Vec<f64> = (0..nf).map(|i| grad[ns + i]).collect();

    // residual(mu) = r0 + J mu over scalar rows and off-diagonal entries
    let mut r0: Vec<f64> = grad[..ns].to_vec();
    let m_eq = spec.equalities.len();
    let mut jac: Vec<Vec<f64>> = vec![vec![0.0; m_eq]; ns];
    let eq_grads: Vec<Vec<f64>> = spec
        .equalities
        .iter()
        .map(|e| e.gradient(&layout))
        .collect();
    for (e, g) in eq_grads.iter().enumerate() {
        for i in 0..ns {
            jac[i][e] = g[i];
        }
    }
    for (b, block) in spec.blocks.iter().enumerate() {
        let n = block.dim;
        let mut c = weighted_features(spec, b, &coef);
        let wb = hermitize(&p.blocks[b]);
        if is_positive_definite(&wb) {
            if let Some(chol) = Cholesky::new(wb) {
                c += chol.inverse() * C64::new(1.0 / t, 0.0);
            }
        }
        let eq_mats: Vec<CMatrix> = eq_grads
            .iter()
            .map(|g| weighted_features(spec, b, &g[ns..]))
            .collect();
        for r in 0..n {
            for col in 0..n {
                if block.diagonal.is_some() && r == col {
                    continue;
                }
                for part in 0..2 {
                    let pick = |z: C64| if part == 0 { z.re } else { z.im };
                    r0.push(pick(c[(r, col)]));
                    jac.push(eq_mats.iter().map(|m| pick(m[(r, col)])).collect());
                }
            }
        }
    }
    let residual = least_squares_residual(&r0, &jac, m_eq);
    let degree = spec.barrier_degree() as f64;
    KktResiduals {
        stationarity: residual / fscale,
        primal,
        complementarity: degree / t,
        dual: 0.0,
        min_psd_eig,
    }
}

fn least_squares_residual(r0: &[f64], jac: &[Vec<f64>], m: usize) -> f64 {
    if m == 0 {
        return r0.iter().map(|v| v * v).sum::<f64>().sqrt();
    }
    let rows = r0.len();
    let j = DMatrix::from_fn(rows, m, |r, c| jac[r][c]);
    let b = DVector::from_column_slice(r0);
    let jtj = j.transpose() * &j;
    let jtb = j.transpose() * &b;
    let mu = jtj.lu().solve(&(-jtb)).unwrap_or_else(|| DVector::zeros(m));
    (b + j * mu).norm()
}

/// Residuals at an arbitrary point, with multipliers estimated by least
/// squares on the stationarity and complementarity conditions
/// `S = Diag(nu) - sum_i c_i A_i`, `S W = 0`.
pub fn kkt_report(spec: &SubproblemSpec, p: &Point) -> KktResiduals {
    let layout = spec.layout();
    let y = spec.reduced_vector(p);
    let (primal, min_psd_eig) = primal_violation(spec, p, &y, &layout);
    let ns = spec.scalars;
    let nf = spec.features.len();
    let active: Vec<usize> = spec
        .inequalities
        .iter()
        .enumerate()
        .filter(|(_, g)| g.value(&layout, &y).is_some_and(|v| v <= ACTIVE))
        .map(|(j, _)| j)
        .collect();
    let diag_blocks: Vec<usize> = spec
        .blocks
        .iter()
        .enumerate()
        .filter(|(_, b)| b.diagonal.is_some())
        .map(|(i, _)| i)
        .collect();
    let nu_offsets: Vec<usize> = diag_blocks
        .iter()
        .scan(0, |acc, &b| {
            let o = *acc;
            *acc += spec.blocks[b].dim;
            Some(o)
        })
        .collect();
    let n_nu: usize = diag_blocks.iter().map(|&b| spec.blocks[b].dim).sum();
    let m_eq = spec.equalities.len();
    let n_unknown = active.len() + n_nu + m_eq;

    let base = lagrangian_gradient(spec, &layout, &y, &[]);
    let ineq_grads: Vec<Vec<f64>> = active
        .iter()
        .map(|&j| {
            spec.inequalities[j]
                .gradient(&layout, &y)
                .unwrap_or_else(|| vec![0.0; layout.len()])
        })
        .collect();
    let eq_grads: Vec<Vec<f64>> = spec
        .equalities
        .iter()
        .map(|e| e.gradient(&layout))
        .collect();
    // gradient columns: one per active z, then mu
    let mut grad_cols: Vec<Vec<f64>> = ineq_grads.clone();
    grad_cols.extend(eq_grads.iter().cloned());

    let mut rows_r0: Vec<f64> = base[..ns].to_vec();
    let mut rows_j: Vec<Vec<f64>> = (0..ns)
        .map(|i| {
            let mut row = vec![0.0; n_unknown];
            for (k, g) in ineq_grads.iter().enumerate() {
                row[k] = g[i];
            }
            for (e, g) in eq_grads.iter().enumerate() {
                row[active.len() + n_nu + e] = g[i];
            }
            row
        })
        .collect();

    // Block rows: vec(S_b W_b) with S_b = Diag(nu) - sum_i c_i A_i
    for (b, block) in spec.blocks.iter().enumerate() {
        let n = block.dim;
        let w = &p.blocks[b];
        let base_coef: Vec<f64> = (0..nf).map(|i| base[ns + i]).collect();
        let s0w = -(weighted_features(spec, b, &base_coef) * w);
        let col_mats: Vec<CMatrix> = grad_cols
            .iter()
            .map(|g| {
                let coef: Vec<f64> = (0..nf).map(|i| g[ns + i]).collect();
                -(weighted_features(spec, b, &coef) * w)
            })
            .collect();
        let nu_off = diag_blocks
            .iter()
            .position(|&d| d == b)
            .map(|k| nu_offsets[k]);
        for r in 0..n {
            for c in 0..n {
                for part in 0..2 {
                    let pick = |z: C64| if part == 0 { z.re } else { z.im };
                    rows_r0.push(pick(s0w[(r, c)]));
                    let mut row = vec![0.0; n_unknown];
                    for (k, m) in col_mats.iter().enumerate() {
                        let idx = if k < active.len() {
                            k
                        } else {
                            k - active.len() + active.len() + n_nu
                        };
                        row[idx] = pick(m[(r, c)]);
                    }
                    if let Some(o) = nu_off {
                        // (Diag(nu) W)_{rc} = nu_r W_rc
                        row[active.len() + o + r] = pick(w[(r, c)]);
                    }
                    rows_j.push(row);
                }
            }
        }
    }

    let rows = rows_r0.len();
    let jm = DMatrix::from_fn(rows, n_unknown, |r, c| rows_j[r][c]);
    let b = DVector::from_column_slice(&rows_r0);
    let sol = if n_unknown > 0 {
        jm.clone()
            .svd(true, true)
            .solve(&(-&b), 1e-14)
            .unwrap_or_else(|_| DVector::zeros(n_unknown))
    } else {
        DVector::zeros(0)
    };
    let stationarity = (&b + &jm * &sol).norm();

    let mut dual: f64 = 0.0;
    let mut complementarity = 0.0;
    for (k, &j) in active.iter().enumerate() {
        let zj = sol[k];
        dual = dual.max((-zj).max(0.0));
        complementarity += (zj * spec.inequalities[j].value(&layout, &y).unwrap_or(0.0)).abs();
    }
    for (b, block) in spec.blocks.iter().enumerate() {
        let n = block.dim;
        let mut coef: Vec<f64> = (0..nf).map(|i| base[ns + i]).collect();
        for (k, g) in grad_cols.iter().enumerate() {
            let mult = if k < active.len() {
                sol[k]
            } else {
                sol[active.len() + n_nu + (k - active.len())]
            };
            for i in 0..nf {
                coef[i] += mult * g[ns + i];
            }
        }
        let mut s = -weighted_features(spec, b, &coef);
        if let Some(k) = diag_blocks.iter().position(|&d| d == b) {
            for r in 0..n {
                s[(r, r)] += C64::new(sol[active.len() + nu_offsets[k] + r], 0.0);
            }
        }
        dual = dual.max((-min_eigenvalue(&s)).max(0.0));
        complementarity += trace_product(&s, &p.blocks[b]).abs();
    }
    KktResiduals {
        stationarity,
        primal,
        complementarity,
        dual,
        min_psd_eig,
    }
}
