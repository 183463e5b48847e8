//! Per-user SINR composition shared by the phase and joint optimizers.
//!
//! Each user's end-to-end SINR is the minimum over a few branches, and each
//! branch is a sum of terms that are either `share * Gamma` or
//! `share * Gamma / ((1 - share) * Gamma + 1)`. A share is affine in the two
//! free power coefficients `alpha_n` and `beta_d`.

use crate::ratemodel::{EffectiveGains, PowerSplit, Protocol, HALF_PRELOG};
use crate::scenario::Link;

/// `constant + alpha_n_coef * alpha_n + beta_d_coef * beta_d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Share {
    pub constant: f64,
    pub alpha_n: f64,
    pub beta_d: f64,
}

impl Share {
    pub const ONE: Share = Share {
        constant: 1.0,
        alpha_n: 0.0,
        beta_d: 0.0,
    };
    pub const ALPHA_N: Share = Share {
        constant: 0.0,
        alpha_n: 1.0,
        beta_d: 0.0,
    };
    pub const ALPHA_D: Share = Share {
        constant: 1.0,
        alpha_n: -1.0,
        beta_d: 0.0,
    };
    pub const BETA_N: Share = Share {
        constant: 1.0,
        alpha_n: 0.0,
        beta_d: -1.0,
    };
    pub const BETA_D: Share = Share {
        constant: 0.0,
        alpha_n: 0.0,
        beta_d: 1.0,
    };

    pub fn eval(&self, split: &PowerSplit) -> f64 {
        self.constant + self.alpha_n * split.alpha_n + self.beta_d * split.beta_d
    }

    pub fn is_constant(&self) -> bool {
        self.alpha_n == 0.0 && self.beta_d == 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SinrTerm {
    /// `share * Gamma_link`.
    Linear { share: Share, link: Link },
    /// `share * Gamma / ((1 - share) * Gamma + 1)`: the complementary share
    /// of the same transmitter interferes.
    Ratio { own: Share, link: Link },
}

impl SinrTerm {
    pub fn link(&self) -> Link {
        match *self {
            SinrTerm::Linear { link, .. } | SinrTerm::Ratio { link, .. } => link,
        }
    }

    pub fn eval(&self, g: &EffectiveGains, split: &PowerSplit) -> f64 {
        match *self {
            SinrTerm::Linear { share, link } => share.eval(split) * g.get(link),
            SinrTerm::Ratio { own, link } => {
                let a = own.eval(split);
                let gain = g.get(link);
                a * gain / ((1.0 - a) * gain + 1.0)
            }
        }
    }
}

/// Branches of one user's SINR; the effective SINR is the smallest branch.
pub type Branches = Vec<Vec<SinrTerm>>;

#[derive(Debug, Clone, PartialEq)]
pub struct RateStructure {
    /// Rate per unit SINR log: `prelog * log2(1 + SINR)`.
    pub prelog: f64,
    pub near: Branches,
    pub far: Branches,
}

impl RateStructure {
    pub fn new(protocol: Protocol) -> Self {
        use SinrTerm::{Linear, Ratio};
        let far = vec![
            vec![Ratio {
                own: Share::ALPHA_D,
                link: Link::Ar,
            }],
            vec![
                Ratio {
                    own: Share::ALPHA_D,
                    link: Link::Ad,
                },
                match protocol {
                    Protocol::Hybrid => Linear {
                        share: Share::ONE,
                        link: Link::Rd,
                    },
                    Protocol::Full => Linear {
                        share: Share::BETA_D,
                        link: Link::Rd,
                    },
                },
            ],
        ];
        let near = match protocol {
            Protocol::Hybrid => vec![vec![Linear {
                share: Share::ALPHA_N,
                link: Link::An,
            }]],
            Protocol::Full => vec![
                vec![Linear {
                    share: Share::ALPHA_N,
                    link: Link::Ar,
                }],
                vec![
                    Linear {
                        share: Share::ALPHA_N,
                        link: Link::An,
                    },
                    Ratio {
                        own: Share::BETA_N,
                        link: Link::Rn,
                    },
                ],
            ],
        };
        Self {
            prelog: HALF_PRELOG,
            near,
            far,
        }
    }

    /// Effective SINRs `(near, far)`.
    pub fn sinrs(&self, g: &EffectiveGains, split: &PowerSplit) -> (f64, f64) {
        let eval = |b: &Branches| {
            b.iter()
                .map(|terms| terms.iter().map(|t| t.eval(g, split)).sum::<f64>())
                .fold(f64::INFINITY, f64::min)
        };
        (eval(&self.near), eval(&self.far))
    }

    /// `(R_n, R_d)`.
    pub fn rates(&self, g: &EffectiveGains, split: &PowerSplit) -> (f64, f64) {
        let (sn, sd) = self.sinrs(g, split);
        let r = |s: f64| self.prelog * (1.0 + s.max(0.0)).log2();
        (r(sn), r(sd))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ratemodel::{half_rate, rates_from_gains};
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn matches_rate_model(
            ar in 0.0f64..1e4, an in 0.0f64..1e4, ad in 0.0f64..1e4, rn in 0.0f64..1e4, rd in 0.0f64..1e4,
            alpha in 0.0f64..0.5, beta in 0.0f64..0.5,
        ) {
            let g = EffectiveGains { ar, an, ad, rn, rd };
            let split = PowerSplit::new(alpha, beta).unwrap();
            for protocol in [Protocol::Hybrid, Protocol::Full] {
                let (sn, sd) = RateStructure::new(protocol).sinrs(&g, &split);
                let r = rates_from_gains(&g, &split, protocol);
                prop_assert!((half_rate(sn) - r.r_n).abs() <= 1e-12 * (1.0 + r.r_n));
                prop_assert!((half_rate(sd) - r.r_d).abs() <= 1e-12 * (1.0 + r.r_d));
            }
        }
    }

    #[test]
    fn shares_sum_to_one() {
        let s = PowerSplit::new(0.3, 0.2).unwrap();
        assert!((Share::ALPHA_N.eval(&s) + Share::ALPHA_D.eval(&s) - 1.0).abs() < 1e-15);
        assert!((Share::BETA_N.eval(&s) + Share::BETA_D.eval(&s) - 1.0).abs() < 1e-15);
        assert!(Share::ONE.is_constant() && !Share::BETA_N.is_constant());
    }
}
