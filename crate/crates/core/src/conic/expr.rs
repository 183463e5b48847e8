//! Concave expression atoms over the reduced variable vector
//! `y = (scalars, features)`, where each feature is a real linear map
//! `Re Tr(A W)` of one matrix block.

use nalgebra::DMatrix;

/// A decision variable of the reduced vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    Scalar(usize),
    Feature(usize),
}

/// Index map from [`Var`] to positions in `y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub scalars: usize,
    pub features: usize,
}

impl Layout {
    pub fn len(&self) -> usize {
        self.scalars + self.features
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, v: Var) -> usize {
        match v {
            Var::Scalar(i) => i,
            Var::Feature(i) => self.scalars + i,
        }
    }

    fn contains(&self, v: Var) -> bool {
        match v {
            Var::Scalar(i) => i < self.scalars,
            Var::Feature(i) => i < self.features,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Affine {
    pub constant: f64,
    pub terms: Vec<(Var, f64)>,
}

impl Affine {
    pub fn constant(c: f64) -> Self {
        Self {
            constant: c,
            terms: Vec::new(),
        }
    }

    pub fn var(v: Var) -> Self {
        Self {
            constant: 0.0,
            terms: vec![(v, 1.0)],
        }
    }

    pub fn term(v: Var, coef: f64) -> Self {
        Self {
            constant: 0.0,
            terms: vec![(v, coef)],
        }
    }

    pub fn plus(mut self, other: &Affine) -> Self {
        self.constant += other.constant;
        self.terms.extend(other.terms.iter().copied());
        self
    }

    pub fn plus_const(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    pub fn plus_term(mut self, v: Var, coef: f64) -> Self {
        self.terms.push((v, coef));
        self
    }

    pub fn scaled(mut self, k: f64) -> Self {
        self.constant *= k;
        for t in &mut self.terms {
            t.1 *= k;
        }
        self
    }

    pub fn eval(&self, layout: &Layout, y: &[f64]) -> f64 {
        self.terms
            .iter()
            .fold(self.constant, |acc, &(v, c)| acc + c * y[layout.index(v)])
    }

    fn add_gradient(&self, layout: &Layout, scale: f64, grad: &mut [f64]) {
        for &(v, c) in &self.terms {
            grad[layout.index(v)] += scale * c;
        }
    }

    /// Dense gradient.
    pub fn gradient(&self, layout: &Layout) -> Vec<f64> {
        let mut g = vec![0.0; layout.len()];
        self.add_gradient(layout, 1.0, &mut g);
        g
    }

    fn check(&self, layout: &Layout) -> Result<(), String> {
        if !self.constant.is_finite() {
            return Err("non-finite constant".into());
        }
        for &(v, c) in &self.terms {
            if !layout.contains(v) {
                return Err(format!("undeclared variable {v:?}"));
            }
            if !c.is_finite() {
                return Err(format!("non-finite coefficient on {v:?}"));
            }
        }
        Ok(())
    }
}

/// Concave by construction: every constructor preserves concavity given
/// nonnegative scale factors.
#[derive(Debug, Clone, PartialEq)]
pub enum Concave {
    Affine(Affine),
    /// `-(a)^2`
    NegSquare(Affine),
    /// `-1/a` on `a > 0`
    NegInv(Affine),
    /// `ln(1 + g)` on `g > -1`
    Ln1p(Box<Concave>),
    Sum(Vec<Concave>),
    /// `k * g` with `k >= 0`
    Scale(f64, Box<Concave>),
}

impl From<Affine> for Concave {
    fn from(a: Affine) -> Self {
        Concave::Affine(a)
    }
}

impl Concave {
    pub fn constant(c: f64) -> Self {
        Concave::Affine(Affine::constant(c))
    }

    pub fn ln1p(inner: Concave) -> Self {
        Concave::Ln1p(Box::new(inner))
    }

    pub fn scale(k: f64, inner: Concave) -> Self {
        Concave::Scale(k, Box::new(inner))
    }

    pub fn sum(parts: Vec<Concave>) -> Self {
        Concave::Sum(parts)
    }

    pub fn plus(self, other: Concave) -> Self {
        match self {
            Concave::Sum(mut v) => {
                v.push(other);
                Concave::Sum(v)
            }
            s => Concave::Sum(vec![s, other]),
        }
    }

    /// Structural concavity and reference check.
    pub fn validate(&self, layout: &Layout) -> Result<(), String> {
        match self {
            Concave::Affine(a) | Concave::NegSquare(a) | Concave::NegInv(a) => a.check(layout),
            Concave::Ln1p(g) => g.validate(layout),
            Concave::Sum(v) => v.iter().try_for_each(|g| g.validate(layout)),
            Concave::Scale(k, g) => {
                if !(k.is_finite() && *k >= 0.0) {
                    return Err(format!("scale factor {k} must be finite and nonnegative"));
                }
                g.validate(layout)
            }
        }
    }

    /// Value, or `None` outside the domain.
    pub fn value(&self, layout: &Layout, y: &[f64]) -> Option<f64> {
        match self {
            Concave::Affine(a) => Some(a.eval(layout, y)),
            Concave::NegSquare(a) => {
                let v = a.eval(layout, y);
                Some(-v * v)
            }
            Concave::NegInv(a) => {
                let v = a.eval(layout, y);
                (v > 0.0).then(|| -1.0 / v)
            }
            Concave::Ln1p(g) => {
                let v = g.value(layout, y)?;
                (v > -1.0).then(|| v.ln_1p())
            }
            Concave::Sum(parts) => parts
                .iter()
                .try_fold(0.0, |acc, g| Some(acc + g.value(layout, y)?)),
            Concave::Scale(k, g) => Some(k * g.value(layout, y)?),
        }
    }

    /// Adds `scale * grad` and `scale * hess` of the expression at `y` and
    /// returns its value, or `None` outside the domain.
    pub fn accumulate(
        &self,
        layout: &Layout,
        y: &[f64],
        scale: f64,
        grad: &mut [f64],
        hess: &mut DMatrix<f64>,
    ) -> Option<f64> {
        match self {
            Concave::Affine(a) => {
                a.add_gradient(layout, scale, grad);
                Some(a.eval(layout, y))
            }
            Concave::NegSquare(a) => {
                let v = a.eval(layout, y);
                a.add_gradient(layout, -2.0 * v * scale, grad);
                add_outer(layout, a, a, -2.0 * scale, hess);
                Some(-v * v)
            }
            Concave::NegInv(a) => {
                let v = a.eval(layout, y);
                if v <= 0.0 {
                    return None;
                }
                a.add_gradient(layout, scale / (v * v), grad);
                add_outer(layout, a, a, -2.0 * scale / (v * v * v), hess);
                Some(-1.0 / v)
            }
            Concave::Ln1p(g) => {
                let n = layout.len();
                let mut gg = vec![0.0; n];
                let mut gh = DMatrix::zeros(n, n);
                let v = g.accumulate(layout, y, 1.0, &mut gg, &mut gh)?;
                if v <= -1.0 {
                    return None;
                }
                let d = 1.0 + v;
                for i in 0..n {
                    grad[i] += scale * gg[i] / d;
                }
                for r in 0..n {
                    if gg[r] == 0.0 && gh.row(r).iter().all(|&h| h == 0.0) {
                        continue;
                    }
                    for c in 0..n {
                        hess[(r, c)] += scale * (gh[(r, c)] / d - gg[r] * gg[c] / (d * d));
                    }
                }
                Some(v.ln_1p())
            }
            Concave::Sum(parts) => {
                let mut acc = 0.0;
                for p in parts {
                    acc += p.accumulate(layout, y, scale, grad, hess)?;
                }
                Some(acc)
            }
            Concave::Scale(k, g) => Some(k * g.accumulate(layout, y, scale * k, grad, hess)?),
        }
    }

    /// Dense gradient at `y`.
    pub fn gradient(&self, layout: &Layout, y: &[f64]) -> Option<Vec<f64>> {
        let n = layout.len();
        let mut g = vec![0.0; n];
        let mut h = DMatrix::zeros(n, n);
        self.accumulate(layout, y, 1.0, &mut g, &mut h)?;
        Some(g)
    }
}

fn add_outer(layout: &Layout, a: &Affine, b: &Affine, scale: f64, hess: &mut DMatrix<f64>) {
    for &(va, ca) in &a.terms {
        for &(vb, cb) in &b.terms {
            hess[(layout.index(va), layout.index(vb))] += scale * ca * cb;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout() -> Layout {
        Layout {
            scalars: 2,
            features: 1,
        }
    }

    fn num_grad(e: &Concave, y: &[f64]) -> Vec<f64> {
        let l = layout();
        (0..y.len())
            .map(|i| {
                let h = 1e-6;
                let mut a = y.to_vec();
                let mut b = y.to_vec();
                a[i] += h;
                b[i] -= h;
                (e.value(&l, &a).unwrap() - e.value(&l, &b).unwrap()) / (2.0 * h)
            })
            .collect()
    }

    fn sample() -> Concave {
        let x0 = Var::Scalar(0);
        let x1 = Var::Scalar(1);
        let f = Var::Feature(0);
        Concave::sum(vec![
            Concave::ln1p(Concave::Affine(Affine::var(x0).plus_term(f, 0.5))),
            Concave::scale(2.0, Concave::NegInv(Affine::var(x1).plus_const(1.0))),
            Concave::NegSquare(Affine::term(f, 0.3).plus_const(-0.2)),
            Concave::ln1p(Concave::scale(0.5, Concave::NegInv(Affine::var(f)))),
        ])
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let e = sample();
        let l = layout();
        let y = [0.7, 0.4, 2.5];
        let mut g = vec![0.0; 3];
        let mut h = DMatrix::zeros(3, 3);
        e.accumulate(&l, &y, 1.0, &mut g, &mut h).unwrap();
        let ng = num_grad(&e, &y);
        for i in 0..3 {
            assert!((g[i] - ng[i]).abs() < 1e-6, "{g:?} vs {ng:?}");
        }
        // Hessian by differencing the analytic gradient
        for i in 0..3 {
            let mut yp = y;
            yp[i] += 1e-6;
            let mut gp = vec![0.0; 3];
            let mut hp = DMatrix::zeros(3, 3);
            e.accumulate(&l, &yp, 1.0, &mut gp, &mut hp).unwrap();
            for j in 0..3 {
                assert!(((gp[j] - g[j]) / 1e-6 - h[(j, i)]).abs() < 1e-4);
            }
        }
        // concave: Hessian negative semidefinite
        let eig = h.symmetric_eigen();
        assert!(eig.eigenvalues.iter().all(|&v| v <= 1e-12));
    }

    #[test]
    fn domain_violations() {
        let l = layout();
        let e = Concave::NegInv(Affine::var(Var::Scalar(0)));
        assert!(e.value(&l, &[0.0, 0.0, 0.0]).is_none());
        let e = Concave::ln1p(Concave::Affine(Affine::var(Var::Scalar(0))));
        assert!(e.value(&l, &[-1.5, 0.0, 0.0]).is_none());
    }

    #[test]
    fn validation_rejects_bad_structure() {
        let l = layout();
        assert!(Concave::Affine(Affine::var(Var::Scalar(5)))
            .validate(&l)
            .is_err());
        assert!(Concave::scale(-1.0, Concave::constant(0.0))
            .validate(&l)
            .is_err());
        assert!(sample().validate(&l).is_ok());
    }
}
