//! Primal log-barrier Newton method.

use nalgebra::{Cholesky, DMatrix, DVector};

use super::expr::{Affine, Concave, Layout};
use super::kkt::{central_residuals, KktResiduals};
use super::{ConicSolution, ConicStatus, FeatureMatrix, Point, SubproblemSpec};
use crate::error::{Error, Result};
use std::f64::consts::SQRT_2;

use crate::linalg::{hermitian_log_det, hermitize, is_positive_definite, outer, CMatrix, C64};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Target duality gap `m / t`.
    pub tol: f64,
    /// Cap on Newton steps, phase I included.
    pub max_iter: usize,
    /// Barrier parameter growth factor.
    pub mu: f64,
    pub t0: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            max_iter: 600,
            mu: 10.0,
            t0: 1.0,
        }
    }
}

/// Newton decrement (halved square) below which a point counts as centered.
const CENTERED: f64 = 1e-10;
/// Looser centering used before the final barrier parameter.
const LOOSE_CENTERED: f64 = 1e-3;
/// Decrement treated as roundoff once it stops shrinking for a few steps.
const NOISE_FLOOR: f64 = 1e-6;
/// Growth of the decrement within one centering round that marks a
/// numerical breakdown.
const DIVERGENCE: f64 = 1e6;
const MAX_CENTERING_STEPS: usize = 80;
const ARMIJO: f64 = 0.01;
/// Decrement below which a full Newton step is taken without a merit test,
/// where merit roundoff would otherwise stall the line search.
const QUADRATIC_REGION: f64 = 1e-2;
const PHASE_ONE_TARGET: f64 = 0.5;
const PHASE_ONE_PROX: f64 = 1e-3;

/// Maximizes `spec` starting from `start`. Blocks of `start` must be
/// positive definite; when the inequalities are not strictly satisfied at
/// `start` a phase-I problem locates an interior point first.
pub fn solve(spec: &SubproblemSpec, start: &Point, opts: &SolveOptions) -> Result<ConicSolution> {
    spec.validate()?;
    check_shapes(spec, start)?;
    for (b, w) in start.blocks.iter().enumerate() {
        if !is_positive_definite(&hermitize(w)) {
            return Err(Error::Subproblem(format!(
                "start block {b} is not positive definite"
            )));
        }
    }
    let layout = spec.layout();
    let y0 = spec.reduced_vector(start);
    if spec.objective.value(&layout, &y0).is_none() {
        return Err(Error::Subproblem(
            "objective undefined at the start point".into(),
        ));
    }
    let margins: Option<Vec<f64>> = spec
        .inequalities
        .iter()
        .map(|g| g.value(&layout, &y0))
        .collect();
    let mut iterations = 0;
    let interior = match margins {
        Some(m) if m.iter().all(|&v| v > 0.0) => start.clone(),
        Some(m) => {
            let worst = m.iter().cloned().fold(f64::INFINITY, f64::min);
            match phase_one(spec, start, worst, opts, &mut iterations) {
                Some(p) => p,
                None => return Ok(infeasible(spec, start, iterations)),
            }
        }
        None => return Ok(infeasible(spec, start, iterations)),
    };
    let barrier = Barrier::new(spec);
    let run = barrier.run(
        &interior,
        opts,
        None,
        opts.max_iter.saturating_sub(iterations),
    );
    iterations += run.iterations;
    let point = run.state.to_point();
    let y = spec.reduced_vector(&point);
    let objective = spec.objective.value(&layout, &y).unwrap_or(f64::NAN);
    let kkt = central_residuals(spec, &point, run.t);
    // An optimal status also certifies the KKT residuals; near rank-one
    // blocks can leave the barrier duals short of that at the roundoff floor.
    let status = match run.status {
        ConicStatus::Optimal if !(kkt.max() <= opts.tol) => ConicStatus::MaxIter,
        s => s,
    };
    Ok(ConicSolution {
        point,
        objective,
        kkt,
        iterations,
        status,
    })
}

fn infeasible(spec: &SubproblemSpec, start: &Point, iterations: usize) -> ConicSolution {
    let y = spec.reduced_vector(start);
    ConicSolution {
        point: start.clone(),
        objective: spec.objective.value(&spec.layout(), &y).unwrap_or(f64::NAN),
        kkt: KktResiduals::undefined(),
        iterations,
        status: ConicStatus::Infeasible,
    }
}

fn check_shapes(spec: &SubproblemSpec, p: &Point) -> Result<()> {
    if p.blocks.len() != spec.blocks.len() {
        return Err(Error::Dimension {
            expected: spec.blocks.len(),
            got: p.blocks.len(),
        });
    }
    for (b, w) in spec.blocks.iter().zip(&p.blocks) {
        if w.nrows() != b.dim || w.ncols() != b.dim {
            return Err(Error::Dimension {
                expected: b.dim,
                got: w.nrows(),
            });
        }
    }
    if p.scalars.len() != spec.scalars {
        return Err(Error::Dimension {
            expected: spec.scalars,
            got: p.scalars.len(),
        });
    }
    Ok(())
}

/// Maximizes a margin `s` with `g_j - s >= 0` and `s <= 1`.
fn phase_one(
    spec: &SubproblemSpec,
    start: &Point,
    worst: f64,
    opts: &SolveOptions,
    iterations: &mut usize,
) -> Option<Point> {
    let mut aux = spec.clone();
    let s = aux.add_scalar();
    aux.inequalities = spec
        .inequalities
        .iter()
        .map(|g| g.clone().plus(Concave::Affine(Affine::term(s, -1.0))))
        .collect();
    aux.inequalities
        .push(Concave::Affine(Affine::constant(1.0).plus_term(s, -1.0)));
    // Proximal terms keep the scalars bounded while the margin grows.
    let mut terms = vec![Concave::Affine(Affine::var(s))];
    for (i, &x0) in start.scalars.iter().enumerate() {
        let d = Affine::var(super::Var::Scalar(i)).plus_const(-x0);
        terms.push(Concave::scale(PHASE_ONE_PROX, Concave::NegSquare(d)));
    }
    aux.objective = Concave::sum(terms);
    let mut p = start.clone();
    p.scalars.push(worst - 1.0);
    let barrier = Barrier::new(&aux);
    let stop = StopRule {
        scalar: spec.scalars,
        threshold: PHASE_ONE_TARGET,
    };
    let phase_opts = SolveOptions {
        tol: opts.tol.max(1e-9),
        ..*opts
    };
    let run = barrier.run(&p, &phase_opts, Some(stop), opts.max_iter);
    *iterations += run.iterations;
    let mut found = run.state.to_point();
    let margin = found.scalars.pop().unwrap_or(f64::NEG_INFINITY);
    (margin > 0.0).then_some(found)
}

#[derive(Clone, Copy)]
struct StopRule {
    scalar: usize,
    threshold: f64,
}

#[derive(Clone)]
struct State {
    w: Vec<CMatrix>,
    x: Vec<f64>,
    u: Vec<f64>,
}

impl State {
    fn y(&self) -> Vec<f64> {
        let mut y = self.x.clone();
        y.extend_from_slice(&self.u);
        y
    }

    fn to_point(&self) -> Point {
        Point {
            blocks: self.w.clone(),
            scalars: self.x.clone(),
        }
    }
}

struct Direction {
    dw: Vec<CMatrix>,
    dx: Vec<f64>,
    du: Vec<f64>,
    /// Directional derivative of the barrier merit.
    dphi: f64,
}

/// Hermitian matrix as a real vector with `<vec A, vec B> = Re Tr(A B)`.
fn herm_vec(m: &CMatrix) -> DVector<f64> {
    let n = m.nrows();
    let mut v = DVector::zeros(n * n);
    let mut k = 0;
    for c in 0..n {
        v[k] = m[(c, c)].re;
        k += 1;
        for r in 0..c {
            v[k] = SQRT_2 * m[(r, c)].re;
            v[k + 1] = SQRT_2 * m[(r, c)].im;
            k += 2;
        }
    }
    v
}

fn vec_herm(v: &DVector<f64>, n: usize) -> CMatrix {
    let mut m = CMatrix::zeros(n, n);
    let mut k = 0;
    for c in 0..n {
        m[(c, c)] = C64::new(v[k], 0.0);
        k += 1;
        for r in 0..c {
            let z = C64::new(v[k], v[k + 1]) / SQRT_2;
            m[(r, c)] = z;
            m[(c, r)] = z.conj();
            k += 2;
        }
    }
    m
}

struct RunResult {
    state: State,
    t: f64,
    iterations: usize,
    status: ConicStatus,
}

struct Barrier<'a> {
    spec: &'a SubproblemSpec,
    layout: Layout,
    by_block: Vec<Vec<usize>>,
}

impl<'a> Barrier<'a> {
    fn new(spec: &'a SubproblemSpec) -> Self {
        let mut by_block = vec![Vec::new(); spec.blocks.len()];
        for (i, f) in spec.features.iter().enumerate() {
            by_block[f.block].push(i);
        }
        Self {
            spec,
            layout: spec.layout(),
            by_block,
        }
    }

    fn state(&self, p: &Point) -> State {
        State {
            w: p.blocks.iter().map(hermitize).collect(),
            x: p.scalars.clone(),
            u: self.spec.feature_values(&p.blocks),
        }
    }

    /// `-t F - sum ln g - sum ln det W`, or `None` outside the domain.
    fn merit(&self, st: &State, t: f64) -> Option<f64> {
        let y = st.y();
        let mut phi = -t * self.spec.objective.value(&self.layout, &y)?;
        for g in &self.spec.inequalities {
            let v = g.value(&self.layout, &y)?;
            if !(v > 0.0) {
                return None;
            }
            phi -= v.ln();
        }
        for w in &st.w {
            phi -= log_det(w)?;
        }
        phi.is_finite().then_some(phi)
    }

    fn equality_residual(&self, st: &State) -> f64 {
        let y = st.y();
        let mut r: f64 = 0.0;
        for e in &self.spec.equalities {
            r = r.max(e.eval(&self.layout, &y).abs());
        }
        for (b, w) in self.spec.blocks.iter().zip(&st.w) {
            if let Some(d) = &b.diagonal {
                for k in 0..b.dim {
                    r = r.max((w[(k, k)].re - d[k]).abs());
                }
            }
        }
        r
    }

    fn direction(&self, st: &State, t: f64, regularize: f64) -> Option<Direction> {
        let spec = self.spec;
        let layout = &self.layout;
        let ny = layout.len();
        let ns = spec.scalars;
        let nf = spec.features.len();
        let y = st.y();

        let mut grad = vec![0.0; ny];
        let mut hess = DMatrix::<f64>::zeros(ny, ny);
        spec.objective
            .accumulate(layout, &y, -t, &mut grad, &mut hess)?;
        for g in &spec.inequalities {
            let mut gg = vec![0.0; ny];
            let mut gh = DMatrix::<f64>::zeros(ny, ny);
            let v = g.accumulate(layout, &y, 1.0, &mut gg, &mut gh)?;
            if !(v > 0.0) {
                return None;
            }
            for r in 0..ny {
                grad[r] -= gg[r] / v;
                if gg[r] == 0.0 && gh.row(r).iter().all(|&h| h == 0.0) {
                    continue;
                }
                for c in 0..ny {
                    hess[(r, c)] += -gh[(r, c)] / v + gg[r] * gg[c] / (v * v);
                }
            }
        }

        // Per-block reduction in scaled coordinates `dW = L X L^H`, where the
        // diagonal constraints become a projection computed by QR.
        struct BlockSolve {
            l: CMatrix,
            proj_feats: Vec<DVector<f64>>,
            base: DVector<f64>,
        }
        let mut m_full = DMatrix::<f64>::zeros(nf, nf);
        let mut c_full = DVector::<f64>::zeros(nf);
        let mut blocks = Vec::with_capacity(spec.blocks.len());
        for (b, block) in spec.blocks.iter().enumerate() {
            let w = &st.w[b];
            let feats = &self.by_block[b];
            let n = block.dim;
            let l = Cholesky::new(w.clone())?.l();
            let lh = l.adjoint();
            let scaled: Vec<DVector<f64>> = feats
                .iter()
                .map(|&i| match &spec.features[i].matrix {
                    FeatureMatrix::RankOne(a) => herm_vec(&outer(&(&lh * a))),
                    FeatureMatrix::Dense(a) => herm_vec(&(&lh * a * &l)),
                })
                .collect();
            let identity = herm_vec(&CMatrix::identity(n, n));
            let (proj_feats, base) = match &block.diagonal {
                Some(d) => {
                    let cols: Vec<DVector<f64>> = (0..n)
                        .map(|k| herm_vec(&outer(&lh.column(k).into_owned())))
                        .collect();
                    let qr = DMatrix::from_columns(&cols).qr();
                    let q = qr.q();
                    let project = |v: &DVector<f64>| v - &q * (q.transpose() * v);
                    let resid = DVector::<f64>::from_fn(n, |k, _| d[k] - w[(k, k)].re);
                    let mut base = project(&identity);
                    if resid.amax() > 0.0 {
                        let coef = qr.r().transpose().solve_lower_triangular(&resid)?;
                        base += &q * coef;
                    }
                    (scaled.iter().map(project).collect::<Vec<_>>(), base)
                }
                None => (scaled, identity),
            };
            for (p, &i) in feats.iter().enumerate() {
                c_full[i] = proj_feats[p].dot(&base);
                for (q, &j) in feats.iter().enumerate() {
                    m_full[(i, j)] = proj_feats[p].dot(&proj_feats[q]);
                }
            }
            blocks.push(BlockSolve {
                l,
                proj_feats,
                base,
            });
        }

        // Reduced KKT system in (dy, lambda, mu).
        let m_eq = spec.equalities.len();
        let nz = ny + nf + m_eq;
        let mut kkt = DMatrix::<f64>::zeros(nz, nz);
        let mut rhs = DVector::<f64>::zeros(nz);
        for r in 0..ny {
            rhs[r] = -grad[r];
            for c in 0..ny {
                kkt[(r, c)] = hess[(r, c)];
            }
            kkt[(r, r)] += regularize * hess[(r, r)].abs().max(1.0);
        }
        for i in 0..nf {
            kkt[(ns + i, ny + i)] = -1.0;
            kkt[(ny + i, ns + i)] = 1.0;
            rhs[ny + i] = c_full[i];
            for j in 0..nf {
                kkt[(ny + i, ny + j)] = m_full[(i, j)];
            }
        }
        for (e, eq) in spec.equalities.iter().enumerate() {
            let row = ny + nf + e;
            for &(v, coef) in &eq.terms {
                let col = layout.index(v);
                kkt[(row, col)] += coef;
                kkt[(col, row)] += coef;
            }
            rhs[row] = -eq.eval(layout, &y);
        }
        let z = kkt.lu().solve(&rhs)?;
        if z.iter().any(|v| !v.is_finite()) {
            return None;
        }

        let mut dw = Vec::with_capacity(spec.blocks.len());
        let mut dec = 0.0;
        for (b, bs) in blocks.iter().enumerate() {
            let mut x = bs.base.clone();
            for (p, &i) in self.by_block[b].iter().enumerate() {
                x.axpy(-z[ny + i], &bs.proj_feats[p], 1.0);
            }
            dec += x.norm_squared();
            let xm = vec_herm(&x, spec.blocks[b].dim);
            dw.push(hermitize(&(&bs.l * xm * bs.l.adjoint())));
        }
        let dx: Vec<f64> = (0..ns).map(|i| z[i]).collect();
        let du: Vec<f64> = spec.features.iter().map(|f| f.eval(&dw[f.block])).collect();
        let dy: Vec<f64> = dx.iter().chain(&du).cloned().collect();
        for r in 0..ny {
            for c in 0..ny {
                dec += dy[r] * hess[(r, c)] * dy[c];
            }
        }
        let dphi = -dec;
        Some(Direction { dw, dx, du, dphi })
    }

    fn step(&self, st: &State, d: &Direction, s: f64) -> State {
        State {
            w: st
                .w
                .iter()
                .zip(&d.dw)
                .map(|(w, dw)| w + dw * C64::new(s, 0.0))
                .collect(),
            x: st.x.iter().zip(&d.dx).map(|(x, dx)| x + s * dx).collect(),
            u: st.u.iter().zip(&d.du).map(|(u, du)| u + s * du).collect(),
        }
    }

    /// Restores exact diagonals and recomputes features after a step.
    fn clean(&self, mut st: State) -> State {
        for (b, w) in self.spec.blocks.iter().zip(st.w.iter_mut()) {
            if let Some(d) = &b.diagonal {
                for k in 0..b.dim {
                    w[(k, k)] = C64::new(d[k], 0.0);
                }
            }
        }
        st.u = self.spec.feature_values(&st.w);
        st
    }

    fn run(
        &self,
        start: &Point,
        opts: &SolveOptions,
        stop: Option<StopRule>,
        budget: usize,
    ) -> RunResult {
        let degree = self.spec.barrier_degree().max(1) as f64;
        let mut st = self.state(start);
        let mut t = opts.t0;
        let mut iterations = 0;
        // Last centered iterate; kept when a later centering stalls.
        let mut best: Option<(State, f64)> = None;
        loop {
            let mut centered = false;
            let target = if degree / t < opts.tol {
                CENTERED
            } else {
                LOOSE_CENTERED
            };
            let mut floor_hits = 0;
            let mut first_dec: Option<f64> = None;
            for _ in 0..MAX_CENTERING_STEPS {
                let feasible = self.equality_residual(&st) <= 1e-10;
                let Some(phi0) = self.merit(&st, t) else {
                    break;
                };
                let Some(dir) = self
                    .direction(&st, t, 1e-13)
                    .or_else(|| self.direction(&st, t, 1e-8))
                else {
                    break;
                };
                let dec = -dir.dphi / 2.0;
                let base = *first_dec.get_or_insert(dec.max(1.0));
                if dec > DIVERGENCE * base {
                    break;
                }
                floor_hits = if feasible && dec <= NOISE_FLOOR {
                    floor_hits + 1
                } else {
                    0
                };
                if feasible && (dec <= target || floor_hits >= 3) {
                    centered = true;
                    break;
                }
                if iterations >= budget {
                    return RunResult {
                        state: st,
                        t,
                        iterations,
                        status: ConicStatus::MaxIter,
                    };
                }
                let mut s = 1.0;
                let mut accepted = None;
                while s > 1e-14 {
                    let cand = self.step(&st, &dir, s);
                    if let Some(phi) = self.merit(&cand, t) {
                        let quadratic = s == 1.0 && -dir.dphi / 2.0 <= QUADRATIC_REGION;
                        if !feasible
                            || dir.dphi >= 0.0
                            || quadratic
                            || phi <= phi0 + ARMIJO * s * dir.dphi
                        {
                            accepted = Some(cand);
                            break;
                        }
                    }
                    s *= 0.5;
                }
                iterations += 1;
                let Some(next) = accepted else { break };
                let was_feasible = feasible || s == 1.0;
                let cleaned = if was_feasible {
                    self.clean(next.clone())
                } else {
                    next.clone()
                };
                st = if self.merit(&cleaned, t).is_some() {
                    cleaned
                } else {
                    next
                };
                if let Some(rule) = stop {
                    if st.x[rule.scalar] >= rule.threshold && self.equality_residual(&st) <= 1e-10 {
                        return RunResult {
                            state: st,
                            t,
                            iterations,
                            status: ConicStatus::Optimal,
                        };
                    }
                }
            }
            if !centered {
                // Numerical floor reached: fall back to the last centered point.
                return match best {
                    Some((b, bt)) => {
                        let status = if degree / bt < opts.tol {
                            ConicStatus::Optimal
                        } else {
                            ConicStatus::MaxIter
                        };
                        RunResult {
                            state: b,
                            t: bt,
                            iterations,
                            status,
                        }
                    }
                    None => RunResult {
                        state: st,
                        t,
                        iterations,
                        status: ConicStatus::MaxIter,
                    },
                };
            }
            if let Some(rule) = stop {
                if st.x[rule.scalar] > 0.0 {
                    return RunResult {
                        state: st,
                        t,
                        iterations,
                        status: ConicStatus::Optimal,
                    };
                }
            }
            if degree / t < opts.tol {
                return RunResult {
                    state: st,
                    t,
                    iterations,
                    status: ConicStatus::Optimal,
                };
            }
            if iterations >= budget {
                return RunResult {
                    state: st,
                    t,
                    iterations,
                    status: ConicStatus::MaxIter,
                };
            }
            best = Some((st.clone(), t));
            t *= opts.mu;
        }
    }
}

fn log_det(w: &CMatrix) -> Option<f64> {
    hermitian_log_det(w)
}
