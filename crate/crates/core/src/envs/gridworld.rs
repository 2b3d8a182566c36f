//! 4x4 gridworld with a penalty region in the top-right corner, a walled-off
//! +20 cell and a +10 goal in the bottom-right corner.

use crate::mdp::{TabularMdp, TransitionRow};

pub const SIDE: usize = 4;
pub const NUM_STATES: usize = SIDE * SIDE;
pub const NUM_ACTIONS: usize = 5;
pub const HORIZON: usize = 10;
pub const INTENDED_PROB: f64 = 0.9;

pub const UP: usize = 0;
pub const LEFT: usize = 1;
pub const DOWN: usize = 2;
pub const RIGHT: usize = 3;
pub const STAY: usize = 4;

/// Enclosed on all four sides.
pub const WALLED_CELL: usize = 2 * SIDE + 1;
pub const GOAL_CELL: usize = NUM_STATES - 1;
pub const PENALTY_CELLS: [usize; 4] = [2, 3, SIDE + 2, SIDE + 3];

pub fn cell(row: usize, col: usize) -> usize {
    row * SIDE + col
}

pub fn coords(s: usize) -> (usize, usize) {
    (s / SIDE, s % SIDE)
}

/// Destination of a one-cell move, or `None` when it leaves the grid or
/// crosses an obstacle edge.
pub fn step(s: usize, dir: usize) -> Option<usize> {
    let (r, c) = coords(s);
    let to = match dir {
        UP if r > 0 => cell(r - 1, c),
        LEFT if c > 0 => cell(r, c - 1),
        DOWN if r + 1 < SIDE => cell(r + 1, c),
        RIGHT if c + 1 < SIDE => cell(r, c + 1),
        _ => return None,
    };
    if s == WALLED_CELL || to == WALLED_CELL {
        return None;
    }
    Some(to)
}

fn move_row(s: usize, intended: usize) -> TransitionRow {
    let base: Vec<f64> =
        (0..4).map(|d| if d == intended { INTENDED_PROB } else { (1.0 - INTENDED_PROB) / 3.0 }).collect();
    let feasible: Vec<usize> = (0..4).filter(|&d| step(s, d).is_some()).collect();
    if feasible.is_empty() {
        return TransitionRow::point(s);
    }
    let blocked: f64 = (0..4).filter(|d| !feasible.contains(d)).map(|d| base[d]).sum();
    let share = blocked / feasible.len() as f64;
    TransitionRow::from_pairs(feasible.iter().map(|&d| (step(s, d).expect("feasible"), base[d] + share)))
}

pub fn build_gridworld() -> TabularMdp {
    let rows = (0..NUM_STATES)
        .flat_map(|s| (0..NUM_ACTIONS).map(move |a| if a == STAY { TransitionRow::point(s) } else { move_row(s, a) }))
        .collect();
    let mut reward = vec![0.0; NUM_STATES];
    for &p in &PENALTY_CELLS {
        reward[p] = -1.0;
    }
    reward[WALLED_CELL] = 20.0;
    reward[GOAL_CELL] = 10.0;
    TabularMdp::new(NUM_STATES, NUM_ACTIONS, HORIZON, 0, rows, reward, vec![false; NUM_STATES])
        .expect("gridworld is well formed")
}
