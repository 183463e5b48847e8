//! Configuration, node geometry and channel synthesis for one Monte Carlo
//! trial.
//!
//! Every quantity inside [`ScenarioConfig`] is linear (watts, linear gains).
//! The on-disk format ([`ConfigFile`]) uses dBm / dB for powers and gains and
//! is converted once at load time.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CVector, C64};

pub type Point3 = [f64; 3];

/// Rician factors at or above this value are treated as pure line of sight.
pub const RICIAN_LOS_CAP: f64 = 1e12;

/// Transmitter/receiver pair of every link that reaches a receiver, with or
/// without RIS assistance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Link {
    /// AP to relay (first half-slot).
    Ar,
    /// AP to near user n (first half-slot).
    An,
    /// AP to far user d (first half-slot, RIS path only).
    Ad,
    /// Relay to user n (second half-slot).
    Rn,
    /// Relay to user d (second half-slot).
    Rd,
}

impl Link {
    pub const ALL: [Link; 5] = [Link::Ar, Link::An, Link::Ad, Link::Rn, Link::Rd];

    /// 0 for the broadcasting half-slot, 1 for the relaying half-slot.
    pub fn stage(self) -> usize {
        match self {
            Link::Ar | Link::An | Link::Ad => 0,
            Link::Rn | Link::Rd => 1,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn tx_power(self, cfg: &ScenarioConfig) -> f64 {
        match self.stage() {
            0 => cfg.p_ap,
            _ => cfg.p_relay,
        }
    }

    pub fn noise(self, cfg: &ScenarioConfig) -> f64 {
        match self {
            Link::Ar => cfg.noise.relay,
            Link::An | Link::Rn => cfg.noise.user_n,
            Link::Ad | Link::Rd => cfg.noise.user_d,
        }
    }

    /// `P_tx / sigma^2` of the receiving end.
    pub fn snr_scale(self, cfg: &ScenarioConfig) -> f64 {
        self.tx_power(cfg) / self.noise(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoisePowers {
    pub relay: f64,
    pub user_n: f64,
    pub user_d: f64,
}

impl NoisePowers {
    pub fn uniform(sigma2: f64) -> Self {
        Self {
            relay: sigma2,
            user_n: sigma2,
            user_d: sigma2,
        }
    }
}

/// Tolerances and schedule of the optimization algorithms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    /// Initial penalty factor; the rank-one penalty is weighted by `1/eta`.
    pub penalty_eta0: f64,
    /// Multiplicative update `eta <- c * eta` between outer rounds.
    pub penalty_scale_c: f64,
    /// Largest admissible `||W||_* - ||W||_2` at termination.
    pub eps_violation: f64,
    /// Fractional objective change that stops the inner and AO loops.
    pub eps_objective: f64,
    pub r_max_inner: usize,
    pub grid_step_kappa: f64,
    /// Hard cap on outer penalty rounds.
    pub max_penalty_rounds: usize,
    pub max_ao_iters: usize,
    /// Duality-gap tolerance handed to the interior-point solver.
    pub conic_tol: f64,
    /// Re-draws of the random initial phases before falling back to a
    /// QoS-free warm solve.
    pub init_redraws: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            penalty_eta0: 10.0,
            penalty_scale_c: 0.5,
            eps_violation: 1e-7,
            eps_objective: 1e-3,
            r_max_inner: 30,
            grid_step_kappa: 1e-3,
            max_penalty_rounds: 50,
            max_ao_iters: 30,
            conic_tol: 1e-7,
            init_redraws: 20,
        }
    }
}

/// Linear-unit scenario description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub ap_pos: Point3,
    pub ris_pos: Point3,
    pub relay_pos: Point3,
    pub user_n_center: Point3,
    pub user_d_center: Point3,
    pub user_radius: f64,
    pub elements: usize,
    pub p_ap: f64,
    pub p_relay: f64,
    pub noise: NoisePowers,
    pub r_min_n: f64,
    pub r_min_d: f64,
    pub rho0: f64,
    pub alpha_direct: f64,
    pub alpha_ris: f64,
    pub k_rician: f64,
    pub solver: SolverSettings,
    pub rng_seed: u64,
    /// Keep the 1/2 pre-log in the RIS-only baseline.
    pub ris_only_half_prelog: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ConfigFile::default()
            .to_config()
            .expect("built-in defaults are valid")
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_linear(dbm - 30.0)
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("p_ap", self.p_ap),
            ("p_relay", self.p_relay),
            ("noise.relay", self.noise.relay),
            ("noise.user_n", self.noise.user_n),
            ("noise.user_d", self.noise.user_d),
            ("rho0", self.rho0),
            ("penalty_eta0", self.solver.penalty_eta0),
            ("eps_violation", self.solver.eps_violation),
            ("eps_objective", self.solver.eps_objective),
            ("conic_tol", self.solver.conic_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        let s = &self.solver;
        if !(s.penalty_scale_c > 0.0 && s.penalty_scale_c < 1.0) {
            return Err(Error::Config(format!(
                "penalty_scale_c must lie in (0,1), got {}",
                s.penalty_scale_c
            )));
        }
        if !(s.grid_step_kappa > 0.0 && s.grid_step_kappa <= 0.5) {
            return Err(Error::Config(format!(
                "grid_step_kappa must lie in (0,0.5], got {}",
                s.grid_step_kappa
            )));
        }
        if self.elements < 1 {
            return Err(Error::Config("elements must be at least 1".into()));
        }
        if !(self.user_radius >= 0.0) {
            return Err(Error::Config(format!(
                "user_radius must be nonnegative, got {}",
                self.user_radius
            )));
        }
        if !(self.k_rician >= 0.0) {
            return Err(Error::Config(format!(
                "k_rician must be nonnegative, got {}",
                self.k_rician
            )));
        }
        if !(self.r_min_n >= 0.0 && self.r_min_d >= 0.0) {
            return Err(Error::Config("rate targets must be nonnegative".into()));
        }
        if s.r_max_inner == 0 || s.max_penalty_rounds == 0 || s.max_ao_iters == 0 {
            return Err(Error::Config("iteration caps must be at least 1".into()));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: ConfigFile = toml::from_str(text)?;
        file.to_config()
    }

    /// Sets both transmit powers to `p_t` watts.
    pub fn with_transmit_power(mut self, p_t: f64) -> Self {
        self.p_ap = p_t;
        self.p_relay = p_t;
        self
    }

    pub fn with_elements(mut self, m: usize) -> Self {
        self.elements = m;
        self
    }
}

/// On-disk configuration. Every field is optional and defaults to the
/// reference simulation setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub ap_pos: Point3,
    pub ris_pos: Point3,
    pub relay_pos: Point3,
    pub user_n_center: Point3,
    pub user_d_center: Point3,
    pub user_radius: f64,
    pub elements: usize,
    pub p_ap_dbm: f64,
    pub p_relay_dbm: f64,
    pub noise_dbm: f64,
    pub noise_relay_dbm: Option<f64>,
    pub noise_user_n_dbm: Option<f64>,
    pub noise_user_d_dbm: Option<f64>,
    pub r_min_n: f64,
    pub r_min_d: f64,
    pub rho0_db: f64,
    pub alpha_direct: f64,
    pub alpha_ris: f64,
    pub k_rician_db: f64,
    pub rng_seed: u64,
    pub ris_only_half_prelog: bool,
    pub solver: SolverSettings,
}

impl Default for ConfigFile {
    fn default() -> Self {
        Self {
            ap_pos: [0.0, 0.0, 0.0],
            ris_pos: [32.0, 0.0, 1.5],
            relay_pos: [32.0, 0.0, 0.0],
            user_n_center: [20.0, 30.0, 0.0],
            user_d_center: [40.0, 30.0, 0.0],
            user_radius: 2.0,
            elements: 30,
            p_ap_dbm: 20.0,
            p_relay_dbm: 20.0,
            noise_dbm: -90.0,
            noise_relay_dbm: None,
            noise_user_n_dbm: None,
            noise_user_d_dbm: None,
            r_min_n: 0.4,
            r_min_d: 0.4,
            rho0_db: -30.0,
            alpha_direct: 3.5,
            alpha_ris: 2.2,
            k_rician_db: 3.0,
            rng_seed: 2024,
            ris_only_half_prelog: false,
            solver: SolverSettings::default(),
        }
    }
}

impl ConfigFile {
    pub fn to_config(&self) -> Result<ScenarioConfig> {
        let base = self.noise_dbm;
        let cfg = ScenarioConfig {
            ap_pos: self.ap_pos,
            ris_pos: self.ris_pos,
            relay_pos: self.relay_pos,
            user_n_center: self.user_n_center,
            user_d_center: self.user_d_center,
            user_radius: self.user_radius,
            elements: self.elements,
            p_ap: dbm_to_watts(self.p_ap_dbm),
            p_relay: dbm_to_watts(self.p_relay_dbm),
            noise: NoisePowers {
                relay: dbm_to_watts(self.noise_relay_dbm.unwrap_or(base)),
                user_n: dbm_to_watts(self.noise_user_n_dbm.unwrap_or(base)),
                user_d: dbm_to_watts(self.noise_user_d_dbm.unwrap_or(base)),
            },
            r_min_n: self.r_min_n,
            r_min_d: self.r_min_d,
            rho0: db_to_linear(self.rho0_db),
            alpha_direct: self.alpha_direct,
            alpha_ris: self.alpha_ris,
            k_rician: db_to_linear(self.k_rician_db),
            solver: self.solver.clone(),
            rng_seed: self.rng_seed,
            ris_only_half_prelog: self.ris_only_half_prelog,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Seed of trial `index` derived from the master seed with a splitmix64
/// finalizer, so neighbouring trials get unrelated streams.
pub fn trial_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(index.wrapping_add(0x9E37_79B9_7F4A_7C15)))
}

pub fn trial_rng(master: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(trial_seed(master, index))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn distance(a: &Point3, b: &Point3) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Large-scale gain `rho0 * d^-alpha`; undefined below 1 m.
pub fn path_loss(d: f64, alpha_exp: f64, rho0: f64) -> Result<f64> {
    if !(d >= 1.0) {
        return Err(Error::DistanceBelowReference(d));
    }
    Ok(rho0 * d.powf(-alpha_exp))
}

/// Circularly-symmetric complex Gaussian with `E|h|^2 = gain`.
pub fn sample_rayleigh<R: Rng + ?Sized>(rng: &mut R, gain: f64) -> C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    if gain <= 0.0 {
        return C64::new(0.0, 0.0);
    }
    C64::new(re, im) * (gain / 2.0).sqrt()
}

/// `sqrt(gain) * (sqrt(K/(K+1)) los + sqrt(1/(K+1)) scatter)`.
pub fn sample_rician<R: Rng + ?Sized>(rng: &mut R, k: f64, gain: f64, los: &CVector) -> CVector {
    let amp = gain.max(0.0).sqrt();
    if k >= RICIAN_LOS_CAP {
        return los.map(|a| a * amp);
    }
    let w_los = (k / (k + 1.0)).sqrt();
    let w_nlos = (1.0 / (k + 1.0)).sqrt();
    CVector::from_fn(los.len(), |m, _| {
        let scatter = sample_rayleigh(rng, 1.0);
        (los[m] * w_los + scatter * w_nlos) * amp
    })
}

/// Steering vector of the RIS, modelled as a half-wavelength uniform linear
/// array along x, towards `node`.
pub fn ris_steering(ris: &Point3, node: &Point3, m: usize) -> CVector {
    let d = distance(ris, node);
    let cos_psi = if d > 0.0 { (node[0] - ris[0]) / d } else { 0.0 };
    CVector::from_fn(m, |i, _| {
        C64::from_polar(1.0, std::f64::consts::PI * i as f64 * cos_psi)
    })
}

/// Uniform point in the horizontal disk of radius `radius` around `center`.
pub fn sample_in_disk<R: Rng + ?Sized>(rng: &mut R, center: &Point3, radius: f64) -> Point3 {
    let u: f64 = rng.random();
    let phi: f64 = rng.random::<f64>() * 2.0 * std::f64::consts::PI;
    let r = radius * u.sqrt();
    [
        center[0] + r * phi.cos(),
        center[1] + r * phi.sin(),
        center[2],
    ]
}

/// One draw of every channel in the system.
///
/// RIS element `m` sees `G_*[m]` from the transmitter and `h_*[m]` towards
/// the receiver, so the reflected path contributes
/// `sum_m conj(h[m]) e^{j theta_m} G[m]`. The cascade vector of link `i` is
/// `Q_i[m] = conj(h[m]) G[m]` and the stacked vector is `Z_i = [Q_i; r_i]`,
/// giving `r_i + h^H Theta G = [v; 1]^T Z_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub user_n_pos: Point3,
    pub user_d_pos: Point3,
    pub r_ar: C64,
    pub r_an: C64,
    pub r_rn: C64,
    pub r_rd: C64,
    pub g_ai: CVector,
    pub g_ri: CVector,
    pub h_ir: CVector,
    pub h_in: CVector,
    pub h_id: CVector,
    q: [CVector; 5],
    z: [CVector; 5],
}

impl ChannelRealization {
    /// Builds the cascade and stacked vectors from raw channels.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        user_n_pos: Point3,
        user_d_pos: Point3,
        r_ar: C64,
        r_an: C64,
        r_rn: C64,
        r_rd: C64,
        g_ai: CVector,
        g_ri: CVector,
        h_ir: CVector,
        h_in: CVector,
        h_id: CVector,
    ) -> Result<Self> {
        let m = g_ai.len();
        for v in [&g_ri, &h_ir, &h_in, &h_id] {
            if v.len() != m {
                return Err(Error::Dimension {
                    expected: m,
                    got: v.len(),
                });
            }
        }
        let cascade = |h: &CVector, g: &CVector| CVector::from_fn(m, |i, _| h[i].conj() * g[i]);
        let q = [
            cascade(&h_ir, &g_ai),
            cascade(&h_in, &g_ai),
            cascade(&h_id, &g_ai),
            cascade(&h_in, &g_ri),
            cascade(&h_id, &g_ri),
        ];
        let direct = [r_ar, r_an, C64::new(0.0, 0.0), r_rn, r_rd];
        let z = std::array::from_fn(|k| {
            CVector::from_fn(m + 1, |i, _| if i < m { q[k][i] } else { direct[k] })
        });
        Ok(Self {
            user_n_pos,
            user_d_pos,
            r_ar,
            r_an,
            r_rn,
            r_rd,
            g_ai,
            g_ri,
            h_ir,
            h_in,
            h_id,
            q,
            z,
        })
    }

    pub fn elements(&self) -> usize {
        self.g_ai.len()
    }

    /// Direct-path coefficient; the AP to user d link is always blocked.
    pub fn direct(&self, link: Link) -> C64 {
        match link {
            Link::Ar => self.r_ar,
            Link::An => self.r_an,
            Link::Ad => C64::new(0.0, 0.0),
            Link::Rn => self.r_rn,
            Link::Rd => self.r_rd,
        }
    }

    pub fn cascade(&self, link: Link) -> &CVector {
        &self.q[link.index()]
    }

    pub fn stacked(&self, link: Link) -> &CVector {
        &self.z[link.index()]
    }

    /// `r + sum_m e^{j theta_m} Q[m]` for one stage's phases.
    pub fn composite(&self, link: Link, theta: &[f64]) -> C64 {
        let q = self.cascade(link);
        let mut acc = self.direct(link);
        for (qm, &t) in q.iter().zip(theta) {
            acc += qm * C64::from_polar(1.0, t);
        }
        acc
    }

    /// Same realization with every RIS channel set to zero.
    pub fn without_ris(&self) -> Self {
        let zero = CVector::zeros(self.elements());
        Self::from_parts(
            self.user_n_pos,
            self.user_d_pos,
            self.r_ar,
            self.r_an,
            self.r_rn,
            self.r_rd,
            zero.clone(),
            zero.clone(),
            zero.clone(),
            zero.clone(),
            zero,
        )
        .expect("dimensions agree")
    }

    /// Replaces the relay-side channels, keeping the AP-side ones.
    pub fn with_relay_links(
        &self,
        r_ar: C64,
        r_rn: C64,
        r_rd: C64,
        g_ri: CVector,
        h_ir: CVector,
    ) -> Result<Self> {
        Self::from_parts(
            self.user_n_pos,
            self.user_d_pos,
            r_ar,
            self.r_an,
            r_rn,
            r_rd,
            self.g_ai.clone(),
            g_ri,
            h_ir,
            self.h_in.clone(),
            self.h_id.clone(),
        )
    }
}

/// Draws user positions and every channel of one trial.
pub fn synthesize<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    rng: &mut R,
) -> Result<ChannelRealization> {
    cfg.validate()?;
    let m = cfg.elements;
    let user_n = sample_in_disk(rng, &cfg.user_n_center, cfg.user_radius);
    let user_d = sample_in_disk(rng, &cfg.user_d_center, cfg.user_radius);

    let direct_gain =
        |a: &Point3, b: &Point3| path_loss(distance(a, b), cfg.alpha_direct, cfg.rho0);
    let ris_gain = |node: &Point3| path_loss(distance(&cfg.ris_pos, node), cfg.alpha_ris, cfg.rho0);

    let r_ar = sample_rayleigh(rng, direct_gain(&cfg.ap_pos, &cfg.relay_pos)?);
    let r_an = sample_rayleigh(rng, direct_gain(&cfg.ap_pos, &user_n)?);
    let r_rn = sample_rayleigh(rng, direct_gain(&cfg.relay_pos, &user_n)?);
    let r_rd = sample_rayleigh(rng, direct_gain(&cfg.relay_pos, &user_d)?);

    let k = cfg.k_rician;
    let steer = |node: &Point3| ris_steering(&cfg.ris_pos, node, m);
    let g_ai = sample_rician(rng, k, ris_gain(&cfg.ap_pos)?, &steer(&cfg.ap_pos));
    let g_ri = sample_rician(rng, k, ris_gain(&cfg.relay_pos)?, &steer(&cfg.relay_pos));
    let h_ir = sample_rician(rng, k, ris_gain(&cfg.relay_pos)?, &steer(&cfg.relay_pos));
    let h_in = sample_rician(rng, k, ris_gain(&user_n)?, &steer(&user_n));
    let h_id = sample_rician(rng, k, ris_gain(&user_d)?, &steer(&user_d));

    ChannelRealization::from_parts(
        user_n, user_d, r_ar, r_an, r_rn, r_rd, g_ai, g_ri, h_ir, h_in, h_id,
    )
}

/// Synthesizes trial `index` of a run seeded by `cfg.rng_seed`.
pub fn synthesize_trial(cfg: &ScenarioConfig, index: u64) -> Result<ChannelRealization> {
    let mut rng = trial_rng(cfg.rng_seed, index);
    synthesize(cfg, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn path_loss_examples() {
        assert!((path_loss(1.0, 3.5, 1e-3).unwrap() - 1e-3).abs() < 1e-18);
        let v = path_loss(10.0, 2.2, 1e-3).unwrap();
        assert!((v - 1e-3 * 10f64.powf(-2.2)).abs() < 1e-18);
        assert_eq!(path_loss(1.0, 0.0, 1.0).unwrap(), 1.0);
        assert!(matches!(
            path_loss(0.5, 2.0, 1.0),
            Err(Error::DistanceBelowReference(_))
        ));
    }

    #[test]
    fn rayleigh_moments_and_determinism() {
        assert_eq!(sample_rayleigh(&mut rng(1), 0.0), C64::new(0.0, 0.0));
        let mut r = rng(7);
        let n = 100_000;
        let mean: f64 = (0..n)
            .map(|_| sample_rayleigh(&mut r, 1.0).norm_sqr())
            .sum::<f64>()
            / n as f64;
        assert!((mean - 1.0).abs() < 0.02, "E|h|^2 = {mean}");
        assert_eq!(
            sample_rayleigh(&mut rng(3), 2.0),
            sample_rayleigh(&mut rng(3), 2.0)
        );
    }

    #[test]
    fn rician_power_independent_of_k() {
        let los = ris_steering(&[0.0, 0.0, 0.0], &[3.0, 4.0, 0.0], 4);
        for k in [0.0, 2.0, 100.0] {
            let mut r = rng(11);
            let n = 25_000;
            let mut acc = 0.0;
            for _ in 0..n {
                acc += sample_rician(&mut r, k, 1.0, &los)
                    .iter()
                    .map(|h| h.norm_sqr())
                    .sum::<f64>();
            }
            let mean = acc / (4 * n) as f64;
            assert!((mean - 1.0).abs() < 0.02, "K={k}: E|h|^2 = {mean}");
        }
    }

    #[test]
    fn rician_los_limit_is_deterministic() {
        let los = ris_steering(&[0.0, 0.0, 0.0], &[1.0, 1.0, 0.0], 3);
        let h = sample_rician(&mut rng(5), 1e12, 4.0, &los);
        for (a, b) in h.iter().zip(los.iter()) {
            assert!((a - b * 2.0).norm() < 1e-15);
        }
    }

    #[test]
    fn stacking_for_single_element() {
        let cfg = ScenarioConfig::default().with_elements(1);
        let ch = synthesize(&cfg, &mut rng(9)).unwrap();
        let z = ch.stacked(Link::Ar);
        assert_eq!(z.len(), 2);
        assert_eq!(z[1], ch.r_ar);
        assert_eq!(ch.stacked(Link::Ad)[1], C64::new(0.0, 0.0));
    }

    #[test]
    fn zero_radius_puts_users_on_centers() {
        let cfg = ScenarioConfig { user_radius: 0.0, ..Default::default() };
        let ch = synthesize(&cfg, &mut rng(2)).unwrap();
        assert_eq!(ch.user_n_pos, cfg.user_n_center);
        assert_eq!(ch.user_d_pos, cfg.user_d_center);
    }

    #[test]
    fn same_seed_same_realization() {
        let cfg = ScenarioConfig::default();
        assert_eq!(
            synthesize_trial(&cfg, 4).unwrap(),
            synthesize_trial(&cfg, 4).unwrap()
        );
        assert_ne!(
            synthesize_trial(&cfg, 4).unwrap(),
            synthesize_trial(&cfg, 5).unwrap()
        );
    }

    #[test]
    fn defaults_match_reference_setup() {
        let cfg = ScenarioConfig::default();
        assert!((cfg.p_ap - 0.1).abs() < 1e-15);
        assert!((cfg.noise.user_d - 1e-12).abs() < 1e-27);
        assert!((cfg.rho0 - 1e-3).abs() < 1e-15);
        assert!((cfg.k_rician - 1.9952623149688795).abs() < 1e-12);
        assert_eq!(cfg.elements, 30);
    }

    #[test]
    fn config_file_overrides_and_validation() {
        let cfg = ScenarioConfig::from_toml_str("elements = 8\nnoise_relay_dbm = -80.0\n").unwrap();
        assert_eq!(cfg.elements, 8);
        assert!((cfg.noise.relay - 1e-11).abs() < 1e-25);
        assert!((cfg.noise.user_n - 1e-12).abs() < 1e-26);
        let bad = ScenarioConfig::from_toml_str("[solver]\npenalty_scale_c = 1.5\n");
        assert!(matches!(bad, Err(Error::Config(_))));
        assert!(ScenarioConfig::from_toml_str("unknown_key = 1").is_err());
    }

    proptest! {
        #[test]
        fn cascade_identity(seed in any::<u64>(), m in 1usize..12, phase_seed in any::<u64>()) {
            let cfg = ScenarioConfig::default().with_elements(m);
            let ch = synthesize(&cfg, &mut rng(seed)).unwrap();
            let mut pr = rng(phase_seed);
            let theta: Vec<f64> = (0..m).map(|_| pr.random::<f64>() * std::f64::consts::TAU).collect();
            for link in Link::ALL {
                let (h, g) = match link {
                    Link::Ar => (&ch.h_ir, &ch.g_ai),
                    Link::An => (&ch.h_in, &ch.g_ai),
                    Link::Ad => (&ch.h_id, &ch.g_ai),
                    Link::Rn => (&ch.h_in, &ch.g_ri),
                    Link::Rd => (&ch.h_id, &ch.g_ri),
                };
                let mut direct = ch.direct(link);
                for i in 0..m {
                    direct += h[i].conj() * C64::from_polar(1.0, theta[i]) * g[i];
                }
                let z = ch.stacked(link);
                let mut stacked = z[m];
                for i in 0..m {
                    stacked += C64::from_polar(1.0, theta[i]) * z[i];
                }
                let scale = direct.norm().max(1e-300);
                prop_assert!((direct.norm() - stacked.norm()).abs() / scale < 1e-12);
                prop_assert!((ch.composite(link, &theta) - direct).norm() / scale < 1e-12);
            }
        }
    }
}
