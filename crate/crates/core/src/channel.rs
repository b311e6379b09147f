//! Per-link success probabilities for DSRC and the two VLC modules.
//!
//! DSRC is omnidirectional with a logistic fall-off in distance. The VLC
//! links are directional: a radial range term, an asymmetric beam with a
//! cosine taper, and a receiver field-of-view gate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::track::{wrap_angle, RelGeometry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LinkKind {
    Dsrc,
    VlcHeadlight,
    VlcTaillight,
}

impl LinkKind {
    pub const ALL: [LinkKind; 3] = [LinkKind::Dsrc, LinkKind::VlcHeadlight, LinkKind::VlcTaillight];

    pub fn is_vlc(self) -> bool {
        !matches!(self, LinkKind::Dsrc)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DsrcConfig {
    /// Distance at which success probability is 0.5 (m).
    pub range_50_m: f64,
    /// Logistic steepness (1/m).
    pub steepness: f64,
    /// Hard cut-off: beyond this distance success is 0 (m).
    pub max_range_m: f64,
}

impl Default for DsrcConfig {
    fn default() -> Self {
        Self { range_50_m: 350.0, steepness: 0.02, max_range_m: 1000.0 }
    }
}

/// Beam description for one VLC module. Angles are in degrees in the config
/// file; accessors return radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VlcConfig {
    pub max_range_m: f64,
    pub half_angle_left_deg: f64,
    pub half_angle_right_deg: f64,
    pub taper_deg: f64,
    pub rolloff: f64,
    pub rx_fov_deg: f64,
}

impl Default for VlcConfig {
    fn default() -> Self {
        Self {
            max_range_m: 60.0,
            half_angle_left_deg: 25.0,
            half_angle_right_deg: 15.0,
            taper_deg: 5.0,
            rolloff: 2.0,
            rx_fov_deg: 60.0,
        }
    }
}

impl VlcConfig {
    fn validate(&self, name: &str) -> Result<()> {
        let in_open_pi = |deg: f64| deg > 0.0 && deg < 180.0;
        if !(self.max_range_m > 0.0) {
            return Err(Error::config(format!("channels.{name}.max_range_m must be positive")));
        }
        if !in_open_pi(self.half_angle_left_deg) || !in_open_pi(self.half_angle_right_deg) {
            return Err(Error::config(format!("channels.{name} half angles must lie in (0, 180)")));
        }
        if !(self.taper_deg >= 0.0 && self.rolloff > 0.0) {
            return Err(Error::config(format!(
                "channels.{name}: taper must be >= 0 and rolloff > 0"
            )));
        }
        if !(self.rx_fov_deg > 0.0 && self.rx_fov_deg <= 180.0) {
            return Err(Error::config(format!("channels.{name}.rx_fov_deg must lie in (0, 180]")));
        }
        Ok(())
    }

    fn radial(&self, d: f64) -> f64 {
        (1.0 - (d / self.max_range_m).powf(self.rolloff)).max(0.0)
    }

    /// Beam gain for an angle measured from the module's optical axis
    /// (positive to the vehicle's left).
    fn beam(&self, theta: f64) -> f64 {
        let left = self.half_angle_left_deg.to_radians();
        let right = self.half_angle_right_deg.to_radians();
        let excess = if theta > left {
            theta - left
        } else if theta < -right {
            -right - theta
        } else {
            return 1.0;
        };
        let taper = self.taper_deg.to_radians();
        if excess >= taper {
            0.0
        } else {
            0.5 * (1.0 + (std::f64::consts::PI * excess / taper).cos())
        }
    }

    fn fov(&self, offset: f64) -> f64 {
        if offset.abs() <= self.rx_fov_deg.to_radians() {
            1.0
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub dsrc: DsrcConfig,
    pub headlight: VlcConfig,
    pub taillight: VlcConfig,
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        let d = &self.dsrc;
        if !(d.range_50_m > 0.0 && d.steepness > 0.0 && d.max_range_m > 0.0) {
            return Err(Error::config("channels.dsrc ranges and steepness must be positive"));
        }
        self.headlight.validate("headlight")?;
        self.taillight.validate("taillight")
    }
}

fn clamp01(p: f64) -> f64 {
    if p.is_nan() {
        0.0
    } else {
        p.clamp(0.0, 1.0)
    }
}

pub fn dsrc_success(geom: &RelGeometry, cfg: &ChannelConfig) -> f64 {
    let d = &cfg.dsrc;
    if geom.distance > d.max_range_m {
        return 0.0;
    }
    clamp01(1.0 / (1.0 + (d.steepness * (geom.distance - d.range_50_m)).exp()))
}

/// Forward-facing module on the transmitter; the receiver sees it from its rear.
pub fn vlc_headlight_success(geom: &RelGeometry, cfg: &ChannelConfig) -> f64 {
    let h = &cfg.headlight;
    let rear_offset = wrap_angle(geom.bearing_rx - std::f64::consts::PI);
    clamp01(h.radial(geom.distance) * h.beam(geom.bearing_tx) * h.fov(rear_offset))
}

/// Rear-facing module on the transmitter; the receiver sees it from its front.
pub fn vlc_taillight_success(geom: &RelGeometry, cfg: &ChannelConfig) -> f64 {
    let t = &cfg.taillight;
    let axis_offset = wrap_angle(geom.bearing_tx - std::f64::consts::PI);
    clamp01(t.radial(geom.distance) * t.beam(axis_offset) * t.fov(geom.bearing_rx))
}

pub fn link_success(kind: LinkKind, geom: &RelGeometry, cfg: &ChannelConfig) -> f64 {
    match kind {
        LinkKind::Dsrc => dsrc_success(geom, cfg),
        LinkKind::VlcHeadlight => vlc_headlight_success(geom, cfg),
        LinkKind::VlcTaillight => vlc_taillight_success(geom, cfg),
    }
}

/// Success probability of sending the same message over independent links.
pub fn combined_success(link_probs: &[f64]) -> Result<f64> {
    let mut miss = 1.0;
    for &p in link_probs {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::contract(format!("link probability {p} outside [0, 1]")));
        }
        miss *= 1.0 - p;
    }
    Ok(1.0 - miss)
}

/// The three per-link probabilities at one geometry.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LinkProbabilities {
    pub dsrc: f64,
    pub headlight: f64,
    pub taillight: f64,
}

impl LinkProbabilities {
    pub fn evaluate(geom: &RelGeometry, cfg: &ChannelConfig) -> Self {
        Self {
            dsrc: dsrc_success(geom, cfg),
            headlight: vlc_headlight_success(geom, cfg),
            taillight: vlc_taillight_success(geom, cfg),
        }
    }

    pub fn get(&self, kind: LinkKind) -> f64 {
        match kind {
            LinkKind::Dsrc => self.dsrc,
            LinkKind::VlcHeadlight => self.headlight,
            LinkKind::VlcTaillight => self.taillight,
        }
    }
}
