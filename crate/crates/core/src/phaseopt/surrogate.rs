//! Successive convex approximation of the SINR terms.
//!
//! Two minorants are used, both tight at the expansion point:
//!
//! - ratio terms `a G / ((1 - a) G + 1)` are written as `1/(X Y)` with
//!   `X = 1/(a G)`, `Y = (1 - a) G + 1` and bounded through the tangent plane
//!   of the jointly convex `1/(X Y)`;
//! - products `p q` of two free quantities use
//!   `p q = ((p + q)^2 - p^2 - q^2) / 2` with the square linearized.
//!
//! When both the share and the gain of a ratio term are free, `X` and `Y`
//! are replaced by the convex majorants `1/phi` and
//! `Pi = G + 1 - [a G]_lower`, with `phi <= [a G]_lower`.

use crate::conic::{Affine, Concave, FeatureMatrix, Layout, Point, SubproblemSpec, Var};
use crate::linalg::{quad_form, CMatrix};
use crate::ratemodel::{Criterion, EffectiveGains, PowerSplit};
use crate::scenario::{ChannelRealization, Link, ScenarioConfig};

use super::lifting::{gain_vector, mix_identity, PenaltyAnchor};
use super::structure::{Branches, RateStructure, Share, SinrTerm};

/// Identity weight mixed into a local point whose trace feature vanishes.
const LOCAL_PERTURBATION: f64 = 1e-12;
/// Identity weight mixed into the local matrices to get an interior start.
const START_MIX: f64 = 1e-3;
const LOG2_E: f64 = std::f64::consts::LOG2_E;

/// Tangent plane of `f(X, Y) = 1/(X Y)` at `(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LemmaPoint {
    pub x: f64,
    pub y: f64,
}

impl LemmaPoint {
    pub fn value(x: f64, y: f64) -> f64 {
        1.0 / (x * y)
    }

    /// `3/(x_l y_l) - X/(x_l^2 y_l) - Y/(y_l^2 x_l)`.
    pub fn bound(&self, x: f64, y: f64) -> f64 {
        let (xl, yl) = (self.x, self.y);
        3.0 / (xl * yl) - x / (xl * xl * yl) - y / (yl * yl * xl)
    }

    pub fn constant(&self) -> f64 {
        3.0 / (self.x * self.y)
    }

    pub fn x_coef(&self) -> f64 {
        1.0 / (self.x * self.x * self.y)
    }

    pub fn y_coef(&self) -> f64 {
        1.0 / (self.y * self.y * self.x)
    }
}

/// Linearized square identity for `p q`, with the pair rescaled to
/// `(s p, q / s)`, `s^2 = q_l / p_l` so both factors are equal at the local
/// point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProductPoint {
    pub p: f64,
    pub q: f64,
    pub scale: f64,
}

impl ProductPoint {
    pub fn new(p: f64, q: f64) -> Self {
        let scale = if p > 0.0 && q > 0.0 {
            (q / p).sqrt()
        } else {
            1.0
        };
        Self { p, q, scale }
    }

    pub fn bound(&self, p: f64, q: f64) -> f64 {
        let (a, b) = (self.scale * p, q / self.scale);
        let c = self.scale * self.p + self.q / self.scale;
        c * (a + b) - c * c / 2.0 - (a * a + b * b) / 2.0
    }
}

/// Builds a concave subproblem in which any of `alpha_n`, `beta_d` and the
/// stage matrices may be free; everything else is frozen at the local point.
pub struct SurrogateBuilder {
    pub spec: SubproblemSpec,
    split: PowerSplit,
    gains: EffectiveGains,
    alpha: Option<Var>,
    beta: Option<Var>,
    /// Feature of each link whose stage is free.
    gain_vars: [Option<Var>; 5],
    /// Block index of each free stage.
    stage_blocks: [Option<usize>; 2],
    start_blocks: Vec<CMatrix>,
    start_scalars: Vec<f64>,
    /// Auxiliary scalars of doubly-free ratio terms with their upper bound.
    phis: Vec<(Var, Concave)>,
}

/// Which variables a subproblem optimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FreeVars {
    pub alpha: bool,
    pub beta: bool,
    pub stages: [bool; 2],
}

impl SurrogateBuilder {
    /// `local` holds the lifted matrix of each stage at the expansion point.
    pub fn new(
        ch: &ChannelRealization,
        cfg: &ScenarioConfig,
        split: &PowerSplit,
        local: &[CMatrix; 2],
        free: FreeVars,
    ) -> Self {
        let mut spec = SubproblemSpec::new();
        let mut start_blocks = Vec::new();
        let mut stage_blocks = [None, None];
        for t in 0..2 {
            if free.stages[t] {
                let n = local[t].nrows();
                stage_blocks[t] = Some(spec.add_block(n, Some(vec![1.0; n])));
                start_blocks.push(mix_identity(&local[t], START_MIX));
            }
        }
        let mut gains = EffectiveGains::default();
        let mut gain_vars = [None; 5];
        for link in Link::ALL {
            let a = gain_vector(ch, link, cfg);
            let t = link.stage();
            let mut g = quad_form(&local[t], &a);
            if !(g > 0.0) {
                g = quad_form(&mix_identity(&local[t], LOCAL_PERTURBATION), &a).max(0.0);
                log::debug!("zero gain of {link:?} at the local point; perturbed to {g:e}");
            }
            gains.set(link, g);
            if let Some(b) = stage_blocks[t] {
                if a.iter().any(|z| z.norm_sqr() > 0.0) {
                    gain_vars[link.index()] = Some(spec.add_feature(b, FeatureMatrix::RankOne(a)));
                }
            }
        }
        let mut builder = Self {
            spec,
            split: *split,
            gains,
            alpha: None,
            beta: None,
            gain_vars,
            stage_blocks,
            start_blocks,
            start_scalars: Vec::new(),
            phis: Vec::new(),
        };
        // Strictly inside the simplex boxes for the interior-point start.
        if free.alpha {
            let v = builder.add_scalar(split.alpha_n.clamp(1e-6, 0.5 - 1e-6));
            builder
                .spec
                .inequalities
                .push(Concave::Affine(Affine::var(v)));
            builder
                .spec
                .inequalities
                .push(Concave::Affine(Affine::constant(0.5).plus_term(v, -1.0)));
            builder.alpha = Some(v);
        }
        if free.beta {
            let v = builder.add_scalar(split.beta_d.clamp(1e-6, 0.5 - 1e-6));
            builder
                .spec
                .inequalities
                .push(Concave::Affine(Affine::var(v)));
            builder
                .spec
                .inequalities
                .push(Concave::Affine(Affine::constant(0.5).plus_term(v, -1.0)));
            builder.beta = Some(v);
        }
        builder
    }

    pub fn local_gains(&self) -> &EffectiveGains {
        &self.gains
    }

    pub fn alpha_var(&self) -> Option<Var> {
        self.alpha
    }

    pub fn beta_var(&self) -> Option<Var> {
        self.beta
    }

    pub fn stage_block(&self, t: usize) -> Option<usize> {
        self.stage_blocks[t]
    }

    fn add_scalar(&mut self, start: f64) -> Var {
        self.start_scalars.push(start);
        self.spec.add_scalar()
    }

    pub fn share(&self, s: Share) -> Affine {
        let mut a = Affine::constant(s.constant);
        for (coef, var, local) in [
            (s.alpha_n, self.alpha, self.split.alpha_n),
            (s.beta_d, self.beta, self.split.beta_d),
        ] {
            if coef != 0.0 {
                match var {
                    Some(v) => a = a.plus_term(v, coef),
                    None => a = a.plus_const(coef * local),
                }
            }
        }
        a
    }

    pub fn gain(&self, link: Link) -> Affine {
        match self.gain_vars[link.index()] {
            Some(v) => Affine::var(v),
            None => Affine::constant(self.gains.get(link)),
        }
    }

    fn share_is_free(&self, s: Share) -> bool {
        (s.alpha_n != 0.0 && self.alpha.is_some()) || (s.beta_d != 0.0 && self.beta.is_some())
    }

    fn gain_is_free(&self, link: Link) -> bool {
        self.gain_vars[link.index()].is_some()
    }

    /// `share * Gamma` exactly when one factor is frozen, otherwise as an
    /// affine expression (`Ok`) or concave minorant (`Err`).
    fn product(&self, share: Share, link: Link) -> std::result::Result<Affine, Concave> {
        let a = self.share(share);
        let g = self.gain(link);
        if !self.share_is_free(share) {
            return Ok(g.scaled(a.constant));
        }
        if !self.gain_is_free(link) {
            return Ok(a.scaled(g.constant));
        }
        let pp = ProductPoint::new(share.eval(&self.split), self.gains.get(link));
        let p = a.scaled(pp.scale);
        let q = g.scaled(1.0 / pp.scale);
        let c = pp.scale * pp.p + pp.q / pp.scale;
        let lin = p.clone().plus(&q).scaled(c).plus_const(-c * c / 2.0);
        Err(Concave::sum(vec![
            Concave::Affine(lin),
            Concave::scale(0.5, Concave::NegSquare(p)),
            Concave::scale(0.5, Concave::NegSquare(q)),
        ]))
    }

    /// Concave minorant of one SINR term, tight at the local point.
    pub fn term(&mut self, term: SinrTerm) -> Concave {
        match term {
            SinrTerm::Linear { share, link } => match self.product(share, link) {
                Ok(a) => Concave::Affine(a),
                Err(c) => c,
            },
            SinrTerm::Ratio { own, link } => {
                let a_l = own.eval(&self.split);
                let g_l = self.gains.get(link);
                if !(a_l * g_l > 0.0) {
                    return Concave::constant(0.0);
                }
                let lp = LemmaPoint {
                    x: 1.0 / (a_l * g_l),
                    y: (1.0 - a_l) * g_l + 1.0,
                };
                let gain = self.gain(link);
                match self.product(own, link) {
                    Ok(signal) => {
                        // X = 1/signal, Y = gain + 1 - signal, both exact.
                        let y = gain.plus(&signal.clone().scaled(-1.0)).plus_const(1.0);
                        Concave::sum(vec![
                            Concave::constant(lp.constant()),
                            Concave::scale(lp.x_coef(), Concave::NegInv(signal)),
                            Concave::Affine(y.scaled(-lp.y_coef())),
                        ])
                    }
                    Err(lower) => {
                        let at_start = lower
                            .value(&self.spec.layout(), &self.start_vector())
                            .unwrap_or(0.0);
                        let phi = self.add_scalar(if at_start > 0.0 {
                            at_start * (1.0 - 1e-6)
                        } else {
                            a_l * g_l
                        });
                        self.spec
                            .inequalities
                            .push(lower.clone().plus(Concave::Affine(Affine::term(phi, -1.0))));
                        self.phis.push((phi, lower.clone()));
                        // -Pi = lower - gain - 1
                        let neg_pi =
                            lower.plus(Concave::Affine(gain.scaled(-1.0).plus_const(-1.0)));
                        Concave::sum(vec![
                            Concave::constant(lp.constant()),
                            Concave::scale(lp.x_coef(), Concave::NegInv(Affine::var(phi))),
                            Concave::scale(lp.y_coef(), neg_pi),
                        ])
                    }
                }
            }
        }
    }

    /// Minorants of every branch of one user's SINR.
    pub fn branches(&mut self, b: &Branches) -> Vec<Concave> {
        b.iter()
            .map(|terms| Concave::sum(terms.iter().map(|&t| self.term(t)).collect()))
            .collect()
    }

    /// Adds the epigraph of the rate objective over the branch minorants
    /// and returns its concave objective in bits.
    pub fn rate_objective(
        &mut self,
        rs: &RateStructure,
        criterion: Criterion,
        qos: Option<(f64, f64)>,
    ) -> Concave {
        let near = self.branches(&rs.near);
        let far = self.branches(&rs.far);
        let layout_start = self.start_vector();
        let layout = self.spec.layout();
        let start_of = |bs: &[Concave]| {
            bs.iter()
                .map(|c| c.value(&layout, &layout_start).unwrap_or(f64::NEG_INFINITY))
                .fold(f64::INFINITY, f64::min)
        };
        let below = |v: f64| {
            let v = v - 1e-6 * v.abs().max(1e-3);
            v.max(-0.5)
        };
        match criterion {
            Criterion::SumRate => {
                let mut obj = Vec::new();
                for (k, bs) in [near, far].into_iter().enumerate() {
                    let s = self.add_scalar(below(start_of(&bs)));
                    for c in bs {
                        self.spec
                            .inequalities
                            .push(c.plus(Concave::Affine(Affine::term(s, -1.0))));
                    }
                    if let Some(g) = qos {
                        let gamma = if k == 0 { g.0 } else { g.1 };
                        self.spec
                            .inequalities
                            .push(Concave::Affine(Affine::var(s).plus_const(-gamma)));
                    }
                    obj.push(Concave::scale(
                        rs.prelog * LOG2_E,
                        Concave::ln1p(Concave::Affine(Affine::var(s))),
                    ));
                }
                Concave::sum(obj)
            }
            Criterion::MinRate => {
                let s = self.add_scalar(below(start_of(&near).min(start_of(&far))));
                for c in near.into_iter().chain(far) {
                    self.spec
                        .inequalities
                        .push(c.plus(Concave::Affine(Affine::term(s, -1.0))));
                }
                if let Some(g) = qos {
                    self.spec
                        .inequalities
                        .push(Concave::Affine(Affine::var(s).plus_const(-g.0.max(g.1))));
                }
                Concave::scale(
                    rs.prelog * LOG2_E,
                    Concave::ln1p(Concave::Affine(Affine::var(s))),
                )
            }
        }
    }

    /// Linearized rank-one penalty `-(1/eta) (n - xi^H W xi)` of one stage.
    pub fn penalty(&mut self, t: usize, anchor: &PenaltyAnchor, weight: f64) -> Concave {
        let b = self.stage_blocks[t].expect("penalty on a free stage");
        let n = self.spec.blocks[b].dim as f64;
        let u = self
            .spec
            .add_feature(b, FeatureMatrix::RankOne(anchor.xi.clone()));
        Concave::Affine(Affine::term(u, weight).plus_const(-weight * n))
    }

    /// Reduced vector `(scalars, features)` at the start point.
    pub fn start_vector(&self) -> Vec<f64> {
        self.spec.reduced_vector(&self.start_point())
    }

    pub fn start_point(&self) -> Point {
        Point {
            blocks: self.start_blocks.clone(),
            scalars: self.start_scalars.clone(),
        }
    }

    pub fn layout(&self) -> Layout {
        self.spec.layout()
    }

    /// Value of a branch or term minorant at an arbitrary split and gains,
    /// with each auxiliary scalar at its largest feasible value.
    pub fn evaluate_at(
        &self,
        c: &Concave,
        split: &PowerSplit,
        gains: &EffectiveGains,
    ) -> Option<f64> {
        let layout = self.spec.layout();
        let mut y = vec![0.0; layout.len()];
        let set = |v: Option<Var>, value: f64, y: &mut Vec<f64>| {
            if let Some(v) = v {
                y[layout.index(v)] = value;
            }
        };
        set(self.alpha, split.alpha_n, &mut y);
        set(self.beta, split.beta_d, &mut y);
        for link in Link::ALL {
            set(self.gain_vars[link.index()], gains.get(link), &mut y);
        }
        for (phi, lower) in &self.phis {
            let v = lower.value(&layout, &y)?;
            set(Some(*phi), v, &mut y);
        }
        c.value(&layout, &y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn lemma_examples() {
        let lp = LemmaPoint { x: 1.0, y: 1.0 };
        assert_eq!(lp.bound(1.0, 1.0), 1.0);
        assert_eq!(LemmaPoint::value(1.0, 1.0), 1.0);
        let lp = LemmaPoint { x: 0.3, y: 2.5 };
        assert!((lp.bound(0.3, 2.5) - LemmaPoint::value(0.3, 2.5)).abs() < 1e-12);
    }

    #[test]
    fn product_identity() {
        // ((2+3)^2 - (4+9)) / 2 = 6
        assert_eq!(((2.0f64 + 3.0).powi(2) - (4.0 + 9.0)) / 2.0, 6.0);
        let pp = ProductPoint::new(2.0, 3.0);
        assert!((pp.bound(2.0, 3.0) - 6.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn lemma_bound_minorizes(xl in 1e-3f64..1e3, yl in 1.0f64..1e3, x in 1e-3f64..1e3, y in 1.0f64..1e3) {
            let lp = LemmaPoint { x: xl, y: yl };
            let exact = LemmaPoint::value(x, y);
            prop_assert!(lp.bound(x, y) <= exact * (1.0 + 1e-12) + 1e-12);
        }

        #[test]
        fn product_bound_minorizes(pl in 1e-3f64..1.0, ql in 1e-3f64..1e4, p in 0.0f64..1.0, q in 0.0f64..1e4) {
            let pp = ProductPoint::new(pl, ql);
            prop_assert!(pp.bound(p, q) <= p * q + 1e-9 * (1.0 + p * q));
            prop_assert!((pp.bound(pl, ql) - pl * ql).abs() <= 1e-10 * (1.0 + pl * ql));
        }
    }
}
