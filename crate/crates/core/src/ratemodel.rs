//! SINR and achievable-rate expressions of the two relaying protocols.
//!
//! Everything is expressed through the effective gains
//! `Gamma_i = P_tx |r_i + h_i^H Theta G_i|^2 / sigma^2`, so that e.g. the
//! near user's own-signal SINR in the first half-slot is `alpha_n Gamma_An`.
//! Every rate carries the 1/2 pre-log of the two half-slots.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{outer, wrap_angle, CMatrix, CVector, C64};
use crate::scenario::{ChannelRealization, Link, ScenarioConfig};

pub const HALF_PRELOG: f64 = 0.5;

/// Rates within this absolute slack of their targets count as satisfied.
pub const QOS_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Protocol {
    /// Relay forwards only the far user's message.
    #[serde(rename = "H")]
    Hybrid,
    /// Relay superposes both messages.
    #[serde(rename = "F")]
    Full,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Hybrid => "H",
            Protocol::Full => "F",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Protocol {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "H" | "H-NOMA" | "HYBRID" => Ok(Protocol::Hybrid),
            "F" | "F-NOMA" | "FULL" => Ok(Protocol::Full),
            _ => Err(Error::Config(format!("unknown protocol '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Criterion {
    #[serde(rename = "sum")]
    SumRate,
    #[serde(rename = "min")]
    MinRate,
}

impl Criterion {
    pub fn as_str(self) -> &'static str {
        match self {
            Criterion::SumRate => "sum",
            Criterion::MinRate => "min",
        }
    }

    /// Sum-rate runs carry per-user QoS constraints; max-min runs do not.
    pub fn has_qos(self) -> bool {
        matches!(self, Criterion::SumRate)
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Criterion {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sum" | "sum-rate" | "sumrate" => Ok(Criterion::SumRate),
            "min" | "min-rate" | "minrate" | "maxmin" => Ok(Criterion::MinRate),
            _ => Err(Error::Config(format!("unknown criterion '{s}'"))),
        }
    }
}

/// RIS phases of both half-slots, stored as angles in `[0, 2pi)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseConfig {
    pub theta1: Vec<f64>,
    pub theta2: Vec<f64>,
}

impl PhaseConfig {
    pub fn new(theta1: Vec<f64>, theta2: Vec<f64>) -> Self {
        Self {
            theta1: theta1.into_iter().map(wrap_angle).collect(),
            theta2: theta2.into_iter().map(wrap_angle).collect(),
        }
    }

    pub fn zeros(m: usize) -> Self {
        Self {
            theta1: vec![0.0; m],
            theta2: vec![0.0; m],
        }
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R, m: usize) -> Self {
        let mut draw = || {
            (0..m)
                .map(|_| rng.random::<f64>() * 2.0 * std::f64::consts::PI)
                .collect::<Vec<_>>()
        };
        let t1 = draw();
        let t2 = draw();
        Self::new(t1, t2)
    }

    pub fn elements(&self) -> usize {
        self.theta1.len()
    }

    pub fn stage(&self, t: usize) -> &[f64] {
        if t == 0 {
            &self.theta1
        } else {
            &self.theta2
        }
    }

    pub fn set_stage(&mut self, t: usize, theta: Vec<f64>) {
        let theta = theta.into_iter().map(wrap_angle).collect();
        if t == 0 {
            self.theta1 = theta;
        } else {
            self.theta2 = theta;
        }
    }

    /// Unit-modulus reflection vector `v_t`.
    pub fn v(&self, t: usize) -> CVector {
        let th = self.stage(t);
        CVector::from_fn(th.len(), |m, _| C64::from_polar(1.0, th[m]))
    }

    /// Augmented vector `w_t = [v_t; 1]`.
    pub fn w(&self, t: usize) -> CVector {
        let th = self.stage(t);
        CVector::from_fn(th.len() + 1, |m, _| {
            if m < th.len() {
                C64::from_polar(1.0, th[m])
            } else {
                C64::new(1.0, 0.0)
            }
        })
    }

    /// Lifted rank-one matrix `w_t w_t^H`.
    pub fn lifted(&self, t: usize) -> CMatrix {
        outer(&self.w(t))
    }
}

/// Power coefficients at the AP (`alpha`) and the relay (`beta`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerSplit {
    pub alpha_n: f64,
    pub alpha_d: f64,
    pub beta_n: f64,
    pub beta_d: f64,
}

impl PowerSplit {
    pub fn new(alpha_n: f64, beta_d: f64) -> Result<Self> {
        let s = Self {
            alpha_n,
            alpha_d: 1.0 - alpha_n,
            beta_n: 1.0 - beta_d,
            beta_d,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn equal() -> Self {
        Self {
            alpha_n: 0.5,
            alpha_d: 0.5,
            beta_n: 0.5,
            beta_d: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |lo: f64, hi: f64, sum: f64| {
            lo >= 0.0 && lo <= hi + 1e-15 && (sum - 1.0).abs() <= 1e-12
        };
        if !ok(self.alpha_n, self.alpha_d, self.alpha_n + self.alpha_d) {
            return Err(Error::PowerSplit(format!(
                "need 0 <= alpha_n <= alpha_d, alpha_n + alpha_d = 1; got {self:?}"
            )));
        }
        if !ok(self.beta_d, self.beta_n, self.beta_n + self.beta_d) {
            return Err(Error::PowerSplit(format!(
                "need 0 <= beta_d <= beta_n, beta_n + beta_d = 1; got {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EffectiveGains {
    pub ar: f64,
    pub an: f64,
    pub ad: f64,
    pub rn: f64,
    pub rd: f64,
}

impl EffectiveGains {
    pub fn get(&self, link: Link) -> f64 {
        match link {
            Link::Ar => self.ar,
            Link::An => self.an,
            Link::Ad => self.ad,
            Link::Rn => self.rn,
            Link::Rd => self.rd,
        }
    }

    pub fn set(&mut self, link: Link, v: f64) {
        match link {
            Link::Ar => self.ar = v,
            Link::An => self.an = v,
            Link::Ad => self.ad = v,
            Link::Rn => self.rn = v,
            Link::Rd => self.rd = v,
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            ar: self.ar * factor,
            an: self.an * factor,
            ad: self.ad * factor,
            rn: self.rn * factor,
            rd: self.rd * factor,
        }
    }
}

/// `P_tx |r + h^H Theta G|^2 / sigma^2` for one link at the phases of its
/// stage.
pub fn link_gain(ch: &ChannelRealization, link: Link, theta: &[f64], cfg: &ScenarioConfig) -> f64 {
    ch.composite(link, theta).norm_sqr() * link.snr_scale(cfg)
}

pub fn effective_gains(
    ch: &ChannelRealization,
    phases: &PhaseConfig,
    cfg: &ScenarioConfig,
) -> EffectiveGains {
    let mut g = EffectiveGains::default();
    for link in Link::ALL {
        g.set(link, link_gain(ch, link, phases.stage(link.stage()), cfg));
    }
    g
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Intended-signal SINR when the other message is treated as noise.
fn sinr_under_interference(own: f64, other: f64, gain: f64) -> f64 {
    ratio(own * gain, other * gain + 1.0)
}

/// SINRs of the broadcasting half-slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BroadcastSinrs {
    /// User n decoding the far user's message (SIC first step).
    pub n_to_d: f64,
    pub n_to_n: f64,
    pub d_to_d: f64,
    pub r_to_d: f64,
    /// Relay decoding the near user's message after SIC.
    pub r_to_n: f64,
}

pub fn sinr_ib_from_gains(g: &EffectiveGains, s: &PowerSplit) -> BroadcastSinrs {
    BroadcastSinrs {
        n_to_d: sinr_under_interference(s.alpha_d, s.alpha_n, g.an),
        n_to_n: s.alpha_n * g.an,
        d_to_d: sinr_under_interference(s.alpha_d, s.alpha_n, g.ad),
        r_to_d: sinr_under_interference(s.alpha_d, s.alpha_n, g.ar),
        r_to_n: s.alpha_n * g.ar,
    }
}

pub fn sinr_ib(
    ch: &ChannelRealization,
    phases: &PhaseConfig,
    split: &PowerSplit,
    cfg: &ScenarioConfig,
) -> BroadcastSinrs {
    sinr_ib_from_gains(&effective_gains(ch, phases, cfg), split)
}

/// SINRs of the relaying half-slot. Under the hybrid protocol only
/// `d_to_d` is used (full relay power) and the other fields are zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelaySinrs {
    pub d_to_n: f64,
    pub d_to_d: f64,
    pub n_to_n: f64,
}

pub fn sinr_ir_from_gains(g: &EffectiveGains, s: &PowerSplit, protocol: Protocol) -> RelaySinrs {
    match protocol {
        Protocol::Hybrid => RelaySinrs {
            d_to_n: 0.0,
            d_to_d: g.rd,
            n_to_n: 0.0,
        },
        Protocol::Full => RelaySinrs {
            d_to_n: sinr_under_interference(s.beta_d, s.beta_n, g.rn),
            d_to_d: s.beta_d * g.rd,
            n_to_n: sinr_under_interference(s.beta_n, s.beta_d, g.rn),
        },
    }
}

pub fn sinr_ir(
    ch: &ChannelRealization,
    phases: &PhaseConfig,
    split: &PowerSplit,
    protocol: Protocol,
    cfg: &ScenarioConfig,
) -> RelaySinrs {
    sinr_ir_from_gains(&effective_gains(ch, phases, cfg), split, protocol)
}

pub fn half_rate(sinr: f64) -> f64 {
    HALF_PRELOG * (1.0 + sinr.max(0.0)).log2()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProtocolRates {
    pub protocol: Protocol,
    pub r_n: f64,
    pub r_d: f64,
    /// Relay decode rates of each message in the first half-slot.
    pub relay_n: f64,
    pub relay_d: f64,
    /// Rates after combining both half-slots at each user. Under the hybrid
    /// protocol user n only has its first half-slot.
    pub mrc_n: f64,
    pub mrc_d: f64,
    pub sum: f64,
    pub min: f64,
}

impl ProtocolRates {
    pub fn objective(&self, criterion: Criterion) -> f64 {
        match criterion {
            Criterion::SumRate => self.sum,
            Criterion::MinRate => self.min,
        }
    }
}

pub fn rates_from_gains(
    g: &EffectiveGains,
    split: &PowerSplit,
    protocol: Protocol,
) -> ProtocolRates {
    let ib = sinr_ib_from_gains(g, split);
    let ir = sinr_ir_from_gains(g, split, protocol);
    let relay_n = half_rate(ib.r_to_n);
    let relay_d = half_rate(ib.r_to_d);
    let mrc_d = half_rate(ib.d_to_d + ir.d_to_d);
    let (mrc_n, r_n) = match protocol {
        Protocol::Hybrid => {
            let own = half_rate(ib.n_to_n);
            (own, own)
        }
        Protocol::Full => {
            let mrc = half_rate(ib.n_to_n + ir.n_to_n);
            (mrc, relay_n.min(mrc))
        }
    };
    let r_d = relay_d.min(mrc_d);
    ProtocolRates {
        protocol,
        r_n,
        r_d,
        relay_n,
        relay_d,
        mrc_n,
        mrc_d,
        sum: r_n + r_d,
        min: r_n.min(r_d),
    }
}

pub fn rates(
    ch: &ChannelRealization,
    phases: &PhaseConfig,
    split: &PowerSplit,
    protocol: Protocol,
    cfg: &ScenarioConfig,
) -> ProtocolRates {
    rates_from_gains(&effective_gains(ch, phases, cfg), split, protocol)
}

/// SINR target matching a rate target under the 1/2 pre-log.
pub fn gamma_min(rate: f64) -> f64 {
    (2.0 * rate).exp2() - 1.0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QosReport {
    pub satisfied: bool,
    pub slack_n: f64,
    pub slack_d: f64,
    pub gamma_min_n: f64,
    pub gamma_min_d: f64,
}

pub fn qos_satisfied(rates: &ProtocolRates, cfg: &ScenarioConfig) -> QosReport {
    qos_against(rates.r_n, rates.r_d, cfg.r_min_n, cfg.r_min_d)
}

pub fn qos_against(r_n: f64, r_d: f64, r_min_n: f64, r_min_d: f64) -> QosReport {
    let slack_n = r_n - r_min_n;
    let slack_d = r_d - r_min_d;
    QosReport {
        satisfied: slack_n >= -QOS_TOLERANCE && slack_d >= -QOS_TOLERANCE,
        slack_n,
        slack_d,
        gamma_min_n: gamma_min(r_min_n),
        gamma_min_d: gamma_min(r_min_d),
    }
}
