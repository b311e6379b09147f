//! The link-selection MDP: observation, the eight link-set actions,
//! success-minus-cost reward and the fixed-horizon episode loop.
//!
//! The follower transmits one beacon per tick to the leader. The chosen link
//! set only affects the reward; vehicle motion never depends on the action,
//! and the mobility and channel random streams are kept separate so that the
//! observation sequence for a seed is identical under any action sequence.

use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{combined_success, ChannelConfig, LinkKind, LinkProbabilities};
use crate::error::{Error, Result};
use crate::seed;
use crate::track::{
    build_serpentine, relative_geometry, step_vehicles, GeometryConfig, MobilityConfig,
    RelGeometry, Scenario, Track, VehicleState,
};

pub const OBS_DIM: usize = 4;
pub const NUM_ACTIONS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Observation {
    pub x: f64,
    pub y: f64,
    pub cos_phi: f64,
    pub sin_phi: f64,
}

impl Observation {
    pub fn to_array(self) -> [f64; OBS_DIM] {
        [self.x, self.y, self.cos_phi, self.sin_phi]
    }

    pub fn from_array(a: [f64; OBS_DIM]) -> Self {
        Self { x: a[0], y: a[1], cos_phi: a[2], sin_phi: a[3] }
    }
}

/// Receiver position in the transmitter frame scaled by `range` and clipped,
/// plus the unit direction of the transmitter in the receiver frame.
pub fn observe(geom: &RelGeometry, range: f64) -> Observation {
    debug_assert!(range > 0.0);
    let x_rel = geom.distance * geom.bearing_tx.cos();
    let y_rel = geom.distance * geom.bearing_tx.sin();
    Observation {
        x: (x_rel / range).clamp(-1.0, 1.0),
        y: (y_rel / range).clamp(-1.0, 1.0),
        cos_phi: geom.bearing_rx.cos(),
        sin_phi: geom.bearing_rx.sin(),
    }
}

/// One of the eight link-set choices. The discriminant doubles as a bitmask
/// (DSRC = 1, headlight = 2, taillight = 4).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Action {
    NoTransmission = 0,
    Dsrc = 1,
    Headlight = 2,
    DsrcHeadlight = 3,
    Taillight = 4,
    DsrcTaillight = 5,
    TaillightHeadlight = 6,
    All = 7,
}

impl Action {
    pub const ALL: [Action; NUM_ACTIONS] = [
        Action::NoTransmission,
        Action::Dsrc,
        Action::Headlight,
        Action::DsrcHeadlight,
        Action::Taillight,
        Action::DsrcTaillight,
        Action::TaillightHeadlight,
        Action::All,
    ];

    pub fn from_index(i: usize) -> Result<Self> {
        Self::ALL
            .get(i)
            .copied()
            .ok_or_else(|| Error::contract(format!("action index {i} out of range")))
    }

    /// Zero-based index, the network output slot.
    pub fn index(self) -> usize {
        self as usize
    }

    /// One-based id `a1..a8`.
    pub fn id(self) -> u8 {
        self as u8 + 1
    }

    pub fn uses(self, link: LinkKind) -> bool {
        let bit = match link {
            LinkKind::Dsrc => 1,
            LinkKind::VlcHeadlight => 2,
            LinkKind::VlcTaillight => 4,
        };
        (self as u8) & bit != 0
    }

    pub fn links(self) -> impl Iterator<Item = LinkKind> {
        LinkKind::ALL.into_iter().filter(move |&l| self.uses(l))
    }

    pub fn link_count(self) -> usize {
        (self as u8).count_ones() as usize
    }

    pub fn uses_vlc(self) -> bool {
        self.uses(LinkKind::VlcHeadlight) || self.uses(LinkKind::VlcTaillight)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostTable {
    pub dsrc: f64,
    pub headlight: f64,
    pub taillight: f64,
}

impl Default for CostTable {
    fn default() -> Self {
        Self { dsrc: 0.4, headlight: 0.1, taillight: 0.1 }
    }
}

impl CostTable {
    pub fn link(&self, link: LinkKind) -> f64 {
        match link {
            LinkKind::Dsrc => self.dsrc,
            LinkKind::VlcHeadlight => self.headlight,
            LinkKind::VlcTaillight => self.taillight,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if [self.dsrc, self.headlight, self.taillight].iter().any(|c| !(*c >= 0.0)) {
            return Err(Error::config("costs must be non-negative"));
        }
        Ok(())
    }

    pub fn max_cost(&self) -> f64 {
        action_cost(Action::All, self)
    }
}

pub fn action_cost(action: Action, costs: &CostTable) -> f64 {
    action.links().map(|l| costs.link(l)).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    /// Normalisation range for the position features (m).
    pub range_m: f64,
    pub simulation_time_s: f64,
    pub beacon_frequency_hz: f64,
    pub start_gap_m: f64,
    pub packet_bytes: usize,
    pub dsrc_bitrate_mbps: f64,
    pub vlc_bitrate_mbps: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            range_m: 1000.0,
            simulation_time_s: 400.0,
            beacon_frequency_hz: 10.0,
            start_gap_m: 15.0,
            packet_bytes: 1024,
            dsrc_bitrate_mbps: 6.0,
            vlc_bitrate_mbps: 1.0,
        }
    }
}

impl EnvConfig {
    pub fn horizon(&self) -> usize {
        (self.simulation_time_s * self.beacon_frequency_hz).round() as usize
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.beacon_frequency_hz
    }

    fn airtime_ms(&self, link: LinkKind) -> f64 {
        let rate = if link.is_vlc() { self.vlc_bitrate_mbps } else { self.dsrc_bitrate_mbps };
        (self.packet_bytes * 8) as f64 / (rate * 1e3)
    }
}

/// Everything needed to build an environment.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub environment: EnvConfig,
    pub track: GeometryConfig,
    pub mobility: MobilityConfig,
    pub channels: ChannelConfig,
    pub costs: CostTable,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let e = &self.environment;
        if !(e.range_m > 0.0) {
            return Err(Error::config("environment.range_m must be positive"));
        }
        if !(e.beacon_frequency_hz > 0.0 && e.simulation_time_s > 0.0) || e.horizon() == 0 {
            return Err(Error::config("environment horizon must be at least one step"));
        }
        if !(e.dsrc_bitrate_mbps > 0.0 && e.vlc_bitrate_mbps > 0.0) {
            return Err(Error::config("environment bitrates must be positive"));
        }
        let m = &self.mobility;
        if !(e.start_gap_m >= m.min_gap_m && e.start_gap_m <= m.max_gap_m) {
            return Err(Error::config(
                "environment.start_gap_m must lie within [mobility.min_gap_m, mobility.max_gap_m]",
            ));
        }
        self.track.validate()?;
        self.mobility.validate()?;
        self.channels.validate()?;
        self.costs.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepInfo {
    pub step: usize,
    pub probs: LinkProbabilities,
    pub p_success: f64,
    pub success: bool,
    pub distance: f64,
    pub bearing_tx: f64,
    pub bearing_rx: f64,
    pub airtime_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub obs: Observation,
    pub action: Action,
    pub reward: f64,
    pub next_obs: Observation,
    pub done: bool,
    pub info: StepInfo,
}

pub type Trace = Vec<Transition>;

/// One follower/leader episode. Single-threaded; independent instances may
/// run on different threads.
#[derive(Debug, Clone)]
pub struct HandoverEnv {
    cfg: SimConfig,
    track: Arc<Track>,
    leader: VehicleState,
    follower: VehicleState,
    mobility_rng: ChaCha8Rng,
    channel_rng: ChaCha8Rng,
    step_index: usize,
    done: bool,
}

impl HandoverEnv {
    pub fn new(cfg: SimConfig, scenario: Scenario, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let track = Arc::new(build_serpentine(scenario, &cfg.track)?);
        let mut env = Self {
            leader: VehicleState::on_track(&track, 0.0, 0.0),
            follower: VehicleState::on_track(&track, 0.0, 0.0),
            track,
            cfg,
            mobility_rng: seed::stream_rng(0, seed::STREAM_MOBILITY),
            channel_rng: seed::stream_rng(0, seed::STREAM_MOBILITY),
            step_index: 0,
            done: true,
        };
        env.reset(scenario, seed)?;
        Ok(env)
    }

    /// Restarts the episode. The track is rebuilt only when the scenario changes.
    pub fn reset(&mut self, scenario: Scenario, seed: u64) -> Result<Observation> {
        if self.track.scenario() != scenario {
            self.track = Arc::new(build_serpentine(scenario, &self.cfg.track)?);
        }
        self.mobility_rng = seed::stream_rng(seed, seed::STREAM_MOBILITY);
        self.channel_rng = seed::stream_rng(seed, seed::STREAM_CHANNEL);
        let (vmin, vmax) = self.cfg.mobility.speed_bounds();
        let speed = self.mobility_rng.random_range(vmin..=vmax);
        self.follower = VehicleState::on_track(&self.track, 0.0, speed);
        self.leader = VehicleState::on_track(&self.track, self.cfg.environment.start_gap_m, speed);
        self.step_index = 0;
        self.done = false;
        Ok(self.observation())
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn track(&self) -> &Track {
        &self.track
    }

    pub fn horizon(&self) -> usize {
        self.cfg.environment.horizon()
    }

    pub fn step_index(&self) -> usize {
        self.step_index
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn leader(&self) -> &VehicleState {
        &self.leader
    }

    pub fn follower(&self) -> &VehicleState {
        &self.follower
    }

    /// The follower transmits, the leader receives.
    pub fn geometry(&self) -> RelGeometry {
        relative_geometry(&self.follower, &self.leader)
    }

    pub fn observation(&self) -> Observation {
        observe(&self.geometry(), self.cfg.environment.range_m)
    }

    pub fn step(&mut self, action: Action) -> Result<Transition> {
        if self.done {
            return Err(Error::contract("step called on a finished episode"));
        }
        let geom = self.geometry();
        let obs = observe(&geom, self.cfg.environment.range_m);
        let Delivery { probs, p_success, success, reward } =
            transmit(&geom, action, &self.cfg.channels, &self.cfg.costs, &mut self.channel_rng)?;
        let airtime_ms = action.links().map(|l| self.cfg.environment.airtime_ms(l)).sum();

        let (leader, follower) = step_vehicles(
            &self.track,
            &self.leader,
            &self.follower,
            self.cfg.environment.dt(),
            &mut self.mobility_rng,
            &self.cfg.mobility,
        )?;
        self.leader = leader;
        self.follower = follower;

        let step = self.step_index;
        self.step_index += 1;
        self.done = self.step_index >= self.horizon();
        Ok(Transition {
            obs,
            action,
            reward,
            next_obs: self.observation(),
            done: self.done,
            info: StepInfo {
                step,
                probs,
                p_success,
                success,
                distance: geom.distance,
                bearing_tx: geom.bearing_tx,
                bearing_rx: geom.bearing_rx,
                airtime_ms,
            },
        })
    }
}

/// Outcome of one beacon sent over an action's link set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Delivery {
    pub probs: LinkProbabilities,
    pub p_success: f64,
    pub success: bool,
    pub reward: f64,
}

/// Samples delivery of one beacon at a fixed geometry. Exactly one uniform
/// draw is consumed whatever the action, so the stream stays aligned across
/// policies.
pub fn transmit<R: Rng + ?Sized>(
    geom: &RelGeometry,
    action: Action,
    channels: &ChannelConfig,
    costs: &CostTable,
    rng: &mut R,
) -> Result<Delivery> {
    let probs = LinkProbabilities::evaluate(geom, channels);
    let used: Vec<f64> = action.links().map(|l| probs.get(l)).collect();
    let p_success = combined_success(&used)?;
    let u: f64 = rng.random();
    let success = u < p_success;
    let reward = f64::from(u8::from(success)) - action_cost(action, costs);
    Ok(Delivery { probs, p_success, success, reward })
}

pub const TRACE_CSV_HEADER: &str =
    "step,X,Y,cos_phi,sin_phi,action_id,reward,success,p_dsrc,p_head,p_tail,distance";

pub fn write_trace_csv<W: Write>(trace: &[Transition], mut w: W) -> Result<()> {
    writeln!(w, "{TRACE_CSV_HEADER}")?;
    for t in trace {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            t.info.step,
            t.obs.x,
            t.obs.y,
            t.obs.cos_phi,
            t.obs.sin_phi,
            t.action.id(),
            t.reward,
            u8::from(t.info.success),
            t.info.probs.dsrc,
            t.info.probs.headlight,
            t.info.probs.taillight,
            t.info.distance
        )?;
    }
    Ok(())
}
