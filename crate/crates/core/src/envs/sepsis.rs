//! Discrete sepsis patient simulator.
//!
//! Vitals evolve under three binary treatments (antibiotics, vasopressors,
//! mechanical ventilation). A treatment's "on" effect applies on every step it
//! is given; its withdrawal effect applies on the step it is switched off;
//! vitals not held by a treatment fluctuate. Three or more abnormal vitals is
//! death (absorbing, reward -1); a patient alive at the horizon earns +1.
//!
//! The transition table is built by exact enumeration of every stochastic
//! branch, so no sampling is involved in constructing the MDP.

use serde::{Deserialize, Serialize};

use crate::mdp::{TabularMdp, TransitionRow};

pub const NUM_LIVE_STATES: usize = 1440;
pub const DEATH_STATE: usize = NUM_LIVE_STATES;
pub const NUM_STATES: usize = NUM_LIVE_STATES + 1;
pub const NUM_ACTIONS: usize = 8;
pub const HORIZON: usize = 20;
pub const DEATH_REWARD: f64 = -1.0;
pub const SURVIVAL_REWARD: f64 = 1.0;

/// Three-level vital (heart rate, systolic blood pressure).
pub const LOW: u8 = 0;
pub const NORMAL: u8 = 1;
pub const HIGH: u8 = 2;
/// Glucose levels run 0..=4 with 2 as normal.
pub const GLUCOSE_NORMAL: u8 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SepsisState {
    pub heart_rate: u8,
    pub sys_bp: u8,
    /// 0 = low, 1 = normal.
    pub oxygen: u8,
    pub glucose: u8,
    pub diabetic: bool,
    pub abx_on: bool,
    pub vaso_on: bool,
    pub vent_on: bool,
}

impl SepsisState {
    /// Mixed-radix index in `[0, 1440)`.
    pub fn encode(&self) -> usize {
        usize::from(self.heart_rate)
            + 3 * usize::from(self.sys_bp)
            + 9 * usize::from(self.oxygen)
            + 18 * usize::from(self.glucose)
            + 90 * usize::from(self.abx_on)
            + 180 * usize::from(self.vaso_on)
            + 360 * usize::from(self.vent_on)
            + 720 * usize::from(self.diabetic)
    }

    pub fn decode(index: usize) -> Option<Self> {
        if index >= NUM_LIVE_STATES {
            return None;
        }
        let digit = |div: usize, radix: usize| ((index / div) % radix) as u8;
        Some(Self {
            heart_rate: digit(1, 3),
            sys_bp: digit(3, 3),
            oxygen: digit(9, 2),
            glucose: digit(18, 5),
            abx_on: digit(90, 2) == 1,
            vaso_on: digit(180, 2) == 1,
            vent_on: digit(360, 2) == 1,
            diabetic: digit(720, 2) == 1,
        })
    }

    pub fn num_abnormal(&self) -> usize {
        usize::from(self.heart_rate != NORMAL)
            + usize::from(self.sys_bp != NORMAL)
            + usize::from(self.oxygen == 0)
            + usize::from(self.glucose != GLUCOSE_NORMAL)
    }
}

/// Treatment bits of an action index: antibiotics = 4, vasopressors = 2,
/// ventilation = 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Treatment {
    pub antibiotics: bool,
    pub vasopressors: bool,
    pub ventilation: bool,
}

impl Treatment {
    pub fn from_action(a: usize) -> Self {
        Self { antibiotics: a & 4 != 0, vasopressors: a & 2 != 0, ventilation: a & 1 != 0 }
    }

    pub fn to_action(self) -> usize {
        4 * usize::from(self.antibiotics) + 2 * usize::from(self.vasopressors) + usize::from(self.ventilation)
    }
}

/// Start state: tachycardic and hypoxic, otherwise normal, untreated,
/// non-diabetic (two abnormal vitals).
pub fn initial_state() -> SepsisState {
    SepsisState {
        heart_rate: HIGH,
        sys_bp: NORMAL,
        oxygen: 0,
        glucose: GLUCOSE_NORMAL,
        diabetic: false,
        abx_on: false,
        vaso_on: false,
        vent_on: false,
    }
}

type Dist = Vec<(SepsisState, f64)>;

/// Applies a stochastic update to every branch of the distribution.
fn branch(dist: Dist, f: impl Fn(SepsisState) -> Dist) -> Dist {
    dist.into_iter().flat_map(|(s, p)| f(s).into_iter().map(move |(t, q)| (t, p * q))).collect()
}

fn with_prob(s: SepsisState, p: f64, changed: SepsisState) -> Dist {
    if p >= 1.0 {
        vec![(changed, 1.0)]
    } else {
        vec![(changed, p), (s, 1.0 - p)]
    }
}

/// `level -> level - 1` and `level + 1` each w.p. `p`, clamped to `[0, max]`.
fn fluctuate(level: u8, max: u8, p: f64) -> Vec<(u8, f64)> {
    vec![(level.saturating_sub(1), p), ((level + 1).min(max), p), (level, 1.0 - 2.0 * p)]
}

/// Exact next-state distribution over live patient states (before the death check).
pub fn step_distribution(state: SepsisState, treatment: Treatment) -> Vec<(SepsisState, f64)> {
    let mut dist: Dist = vec![(state, 1.0)];
    let (mut hr_fluct, mut bp_fluct, mut oxy_fluct, mut glucose_fluct) = (true, true, true, true);

    // 1. antibiotics
    if treatment.antibiotics {
        hr_fluct = false;
        bp_fluct = false;
        dist = branch(dist, |mut s| {
            s.abx_on = true;
            vec![(s, 1.0)]
        });
        dist = branch(dist, |s| {
            if s.heart_rate == HIGH {
                with_prob(s, 0.5, SepsisState { heart_rate: NORMAL, ..s })
            } else {
                vec![(s, 1.0)]
            }
        });
        dist = branch(dist, |s| {
            if s.sys_bp == HIGH {
                with_prob(s, 0.5, SepsisState { sys_bp: NORMAL, ..s })
            } else {
                vec![(s, 1.0)]
            }
        });
    } else if state.abx_on {
        hr_fluct = false;
        bp_fluct = false;
        dist = branch(dist, |mut s| {
            s.abx_on = false;
            if s.heart_rate == NORMAL {
                with_prob(s, 0.1, SepsisState { heart_rate: HIGH, ..s })
            } else {
                vec![(s, 1.0)]
            }
        });
        dist = branch(dist, |s| {
            if s.sys_bp == NORMAL {
                with_prob(s, 0.5, SepsisState { sys_bp: HIGH, ..s })
            } else {
                vec![(s, 1.0)]
            }
        });
    }

    // 2. ventilation
    if treatment.ventilation {
        oxy_fluct = false;
        dist = branch(dist, |mut s| {
            s.vent_on = true;
            if s.oxygen == 0 {
                with_prob(s, 0.7, SepsisState { oxygen: 1, ..s })
            } else {
                vec![(s, 1.0)]
            }
        });
    } else if state.vent_on {
        oxy_fluct = false;
        dist = branch(dist, |mut s| {
            s.vent_on = false;
            if s.oxygen == 1 {
                with_prob(s, 0.1, SepsisState { oxygen: 0, ..s })
            } else {
                vec![(s, 1.0)]
            }
        });
    }

    // 3. vasopressors
    if treatment.vasopressors {
        bp_fluct = false;
        glucose_fluct = false;
        dist = branch(dist, |mut s| {
            s.vaso_on = true;
            if !s.diabetic {
                match s.sys_bp {
                    LOW => with_prob(s, 0.7, SepsisState { sys_bp: NORMAL, ..s }),
                    NORMAL => with_prob(s, 0.7, SepsisState { sys_bp: HIGH, ..s }),
                    _ => vec![(s, 1.0)],
                }
            } else {
                match s.sys_bp {
                    NORMAL => with_prob(s, 0.9, SepsisState { sys_bp: HIGH, ..s }),
                    LOW => vec![
                        (SepsisState { sys_bp: NORMAL, ..s }, 0.5),
                        (SepsisState { sys_bp: HIGH, ..s }, 0.4),
                        (s, 0.1),
                    ],
                    _ => vec![(s, 1.0)],
                }
            }
        });
        dist = branch(dist, |s| {
            if s.diabetic {
                with_prob(s, 0.5, SepsisState { glucose: (s.glucose + 1).min(4), ..s })
            } else {
                vec![(s, 1.0)]
            }
        });
    } else if state.vaso_on {
        bp_fluct = false;
        dist = branch(dist, |mut s| {
            s.vaso_on = false;
            let p = if s.diabetic { 0.05 } else { 0.1 };
            with_prob(s, p, SepsisState { sys_bp: s.sys_bp.saturating_sub(1), ..s })
        });
    }

    // 4-7. spontaneous fluctuation of untreated vitals
    if hr_fluct {
        dist = branch(dist, |s| {
            fluctuate(s.heart_rate, 2, 0.1).into_iter().map(|(v, p)| (SepsisState { heart_rate: v, ..s }, p)).collect()
        });
    }
    if bp_fluct {
        dist = branch(dist, |s| {
            fluctuate(s.sys_bp, 2, 0.1).into_iter().map(|(v, p)| (SepsisState { sys_bp: v, ..s }, p)).collect()
        });
    }
    if oxy_fluct {
        dist = branch(dist, |s| {
            fluctuate(s.oxygen, 1, 0.1).into_iter().map(|(v, p)| (SepsisState { oxygen: v, ..s }, p)).collect()
        });
    }
    if glucose_fluct {
        dist = branch(dist, |s| {
            let p = if s.diabetic { 0.3 } else { 0.1 };
            fluctuate(s.glucose, 4, p).into_iter().map(|(v, q)| (SepsisState { glucose: v, ..s }, q)).collect()
        });
    }
    dist.retain(|&(_, p)| p > 0.0);
    dist
}

pub fn build_sepsis_mdp() -> TabularMdp {
    let mut rows = Vec::with_capacity(NUM_STATES * NUM_ACTIONS);
    for index in 0..NUM_LIVE_STATES {
        let state = SepsisState::decode(index).expect("live index");
        for a in 0..NUM_ACTIONS {
            let dist = step_distribution(state, Treatment::from_action(a));
            rows.push(TransitionRow::from_pairs(dist.into_iter().map(|(s, p)| {
                let to = if s.num_abnormal() >= 3 { DEATH_STATE } else { s.encode() };
                (to, p)
            })));
        }
    }
    rows.extend((0..NUM_ACTIONS).map(|_| TransitionRow::point(DEATH_STATE)));

    let mut reward = vec![0.0; NUM_STATES];
    reward[DEATH_STATE] = DEATH_REWARD;
    let mut final_reward = vec![SURVIVAL_REWARD; NUM_STATES];
    final_reward[DEATH_STATE] = 0.0;
    let mut terminal = vec![false; NUM_STATES];
    terminal[DEATH_STATE] = true;
    TabularMdp::new(NUM_STATES, NUM_ACTIONS, HORIZON, initial_state().encode(), rows, reward, terminal)
        .and_then(|m| m.with_final_reward(final_reward))
        .expect("sepsis MDP is well formed")
}
