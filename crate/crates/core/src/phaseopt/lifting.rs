//! Lifted phase matrices, the rank-one penalty and rank-one extraction.

use crate::linalg::{frobenius, hermitian_eigen, outer, CMatrix, CVector, C64};
use crate::ratemodel::PhaseConfig;
use crate::scenario::{ChannelRealization, Link, ScenarioConfig};

/// Eigenvalue gap below which the top eigenvector counts as degenerate.
const DEGENERATE_GAP: f64 = 1e-10;
/// Largest relative reconstruction error of a healthy extraction.
pub const RECONSTRUCTION_TOL: f64 = 1e-3;

/// `||W||_* - ||W||_2`: sum of all singular values minus the largest.
pub fn dc_penalty(w: &CMatrix) -> f64 {
    let eig = hermitian_eigen(w);
    let abs: Vec<f64> = eig.values.iter().map(|v| v.abs()).collect();
    let total: f64 = abs.iter().sum();
    let top = abs.iter().cloned().fold(0.0, f64::max);
    (total - top).max(0.0)
}

/// Unit principal eigenvector. Within a degenerate top eigenspace the
/// candidate whose entries compare smallest lexicographically (real part,
/// then imaginary part, after fixing the phase of its first nonzero entry)
/// is chosen.
pub fn principal_eigenvector(w: &CMatrix) -> (f64, CVector) {
    let eig = hermitian_eigen(w);
    let top = eig.values[0];
    let normalize = |mut v: CVector| {
        if let Some(first) = v.iter().find(|z| z.norm() > 1e-12).copied() {
            let rot = first.conj() / first.norm();
            v *= rot;
        }
        v
    };
    let mut best = normalize(eig.vectors.column(0).into_owned());
    for k in 1..eig.values.len() {
        if top - eig.values[k] >= DEGENERATE_GAP {
            break;
        }
        let cand = normalize(eig.vectors.column(k).into_owned());
        if lex_less(&cand, &best) {
            best = cand;
        }
    }
    (top, best)
}

fn lex_less(a: &CVector, b: &CVector) -> bool {
    for (x, y) in a.iter().zip(b.iter()) {
        for (p, q) in [(x.re, y.re), (x.im, y.im)] {
            if (p - q).abs() > 1e-12 {
                return p < q;
            }
        }
    }
    false
}

/// Local linearization point of the penalty: `||W_l||_2` and `xi_max(W_l)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyAnchor {
    pub top: f64,
    pub xi: CVector,
    pub w_local: CMatrix,
}

impl PenaltyAnchor {
    pub fn at(w_local: &CMatrix) -> Self {
        let (top, xi) = principal_eigenvector(w_local);
        Self {
            top,
            xi,
            w_local: w_local.clone(),
        }
    }
}

/// `||W||_* - [||W_l||_2 + xi^H (W - W_l) xi]`, a convex majorant of the
/// penalty that is tight at `W_l`.
pub fn dc_penalty_surrogate(w: &CMatrix, anchor: &PenaltyAnchor) -> f64 {
    let eig = hermitian_eigen(w);
    let nuclear: f64 = eig.values.iter().map(|v| v.abs()).sum();
    let xi = &anchor.xi;
    let quad = |m: &CMatrix| (xi.adjoint() * m * xi)[(0, 0)].re;
    nuclear - (anchor.top + quad(w) - quad(&anchor.w_local))
}

/// `(1 - eps) W + eps I`, which keeps a unit diagonal.
pub fn mix_identity(w: &CMatrix, eps: f64) -> CMatrix {
    let n = w.nrows();
    w * C64::new(1.0 - eps, 0.0) + CMatrix::identity(n, n) * C64::new(eps, 0.0)
}

/// Feature vector `a` of a link with `a^H W a = Gamma_link(W)` for the
/// lifted phase matrix `W = w w^H`, `w = [v; 1]`.
pub fn gain_vector(ch: &ChannelRealization, link: Link, cfg: &ScenarioConfig) -> CVector {
    let scale = link.snr_scale(cfg).sqrt();
    ch.stacked(link).map(|z| z.conj() * scale)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub theta: Vec<f64>,
    /// `||w w^H - W||_F / ||W||_F` for the unit-modulus `w = [v; 1]`.
    pub reconstruction_error: f64,
    pub degraded: bool,
}

/// Phases from the principal eigenvector, normalized so the last entry is
/// `1 + 0i`.
pub fn extract_phases(w: &CMatrix) -> Extraction {
    let n = w.nrows();
    let (_, xi) = principal_eigenvector(w);
    let last = xi[n - 1];
    let rot = if last.norm() > 1e-12 {
        last.conj() / last.norm()
    } else {
        C64::new(1.0, 0.0)
    };
    let theta: Vec<f64> = (0..n - 1).map(|m| (xi[m] * rot).arg()).collect();
    let unit = CVector::from_fn(n, |m, _| {
        if m + 1 < n {
            C64::from_polar(1.0, theta[m])
        } else {
            C64::new(1.0, 0.0)
        }
    });
    let scale = frobenius(w).max(f64::MIN_POSITIVE);
    let reconstruction_error = frobenius(&(outer(&unit) - w)) / scale;
    let theta = PhaseConfig::new(theta, Vec::new()).theta1;
    Extraction {
        theta,
        reconstruction_error,
        degraded: !(reconstruction_error <= RECONSTRUCTION_TOL),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{hermitize, wrap_angle};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit(theta: &[f64]) -> CVector {
        let n = theta.len() + 1;
        CVector::from_fn(n, |m, _| {
            if m + 1 < n {
                C64::from_polar(1.0, theta[m])
            } else {
                C64::new(1.0, 0.0)
            }
        })
    }

    fn random_psd(rng: &mut ChaCha8Rng, n: usize) -> CMatrix {
        let a = CMatrix::from_fn(n, n, |_, _| {
            C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        hermitize(&(&a * a.adjoint()))
    }

    fn with_eigenvalues(rng: &mut ChaCha8Rng, values: &[f64]) -> CMatrix {
        let n = values.len();
        let a = CMatrix::from_fn(n, n, |_, _| {
            C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        let q = a.qr().q();
        let d = CMatrix::from_diagonal(&CVector::from_iterator(
            n,
            values.iter().map(|&v| C64::new(v, 0.0)),
        ));
        hermitize(&(&q * d * q.adjoint()))
    }

    #[test]
    fn penalty_examples() {
        let w = outer(&unit(&[0.3, -1.2]));
        assert!(dc_penalty(&w) < 1e-12);
        assert!((dc_penalty(&CMatrix::identity(3, 3)) - 2.0).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = with_eigenvalues(&mut rng, &[2.0, 1.0, 0.5]);
        assert!((dc_penalty(&m) - 1.5).abs() < 1e-10);
    }

    #[test]
    fn surrogate_tight_and_zero_for_rank_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let wl = random_psd(&mut rng, 4);
        let anchor = PenaltyAnchor::at(&wl);
        assert!((dc_penalty_surrogate(&wl, &anchor) - dc_penalty(&wl)).abs() < 1e-10);
        let r1 = outer(&unit(&[1.0, 2.0, 3.0]));
        assert!(dc_penalty_surrogate(&r1, &PenaltyAnchor::at(&r1)).abs() < 1e-10);
    }

    #[test]
    fn degenerate_top_eigenvector_is_deterministic() {
        let a = principal_eigenvector(&CMatrix::identity(3, 3)).1;
        let b = principal_eigenvector(&CMatrix::identity(3, 3)).1;
        assert_eq!(a, b);
        assert!((a.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn extraction_examples() {
        let theta = vec![0.4, 2.5, 5.9];
        let ex = extract_phases(&outer(&unit(&theta)));
        assert!(!ex.degraded && ex.reconstruction_error < 1e-12);
        for (a, b) in ex.theta.iter().zip(&theta) {
            let d = wrap_angle(a - b);
            assert!(d.min(2.0 * std::f64::consts::PI - d) < 1e-9);
        }
        assert!(extract_phases(&CMatrix::identity(4, 4)).degraded);
    }

    proptest! {
        #[test]
        fn surrogate_majorizes_penalty(seed in any::<u64>(), n in 2usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let wl = random_psd(&mut rng, n);
            let w = random_psd(&mut rng, n);
            let anchor = PenaltyAnchor::at(&wl);
            prop_assert!(dc_penalty_surrogate(&w, &anchor) >= dc_penalty(&w) - 1e-10);
        }

        #[test]
        fn gain_vector_reproduces_link_gain(seed in any::<u64>(), m in 1usize..8) {
            use crate::ratemodel::link_gain;
            use crate::scenario::synthesize;
            let cfg = ScenarioConfig::default().with_elements(m);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ch = synthesize(&cfg, &mut rng).unwrap();
            let theta: Vec<f64> = (0..m).map(|_| rng.random::<f64>() * 6.0).collect();
            let w = outer(&unit(&theta));
            for link in Link::ALL {
                let a = gain_vector(&ch, link, &cfg);
                let via = crate::linalg::quad_form(&w, &a);
                let direct = link_gain(&ch, link, &theta, &cfg);
                prop_assert!((via - direct).abs() <= 1e-9 * direct.max(1e-12));
            }
        }
    }
}
