//! Built-in desk-scale environments.

use serde::Deserialize;

use super::{OptionDef, OptionSet, PolicyTable, TabularMdp};
use crate::error::{Error, Result};
use crate::scalar::Real;

pub const ACTION_NORTH: usize = 0;
pub const ACTION_SOUTH: usize = 1;
pub const ACTION_EAST: usize = 2;
pub const ACTION_WEST: usize = 3;

const FOUR_ROOMS: [&str; 13] = [
    "#############",
    "#.....#.....#",
    "#.....#.....#",
    "#...........#",
    "#.....#.....#",
    "#.....#.....#",
    "##.####.....#",
    "#.....###.###",
    "#.....#.....#",
    "#.....#.....#",
    "#...........#",
    "#.....#.....#",
    "#############",
];

const FOUR_ROOMS_START: (usize, usize) = (1, 1);
const FOUR_ROOMS_GOAL_A: (usize, usize) = (1, 11);
const FOUR_ROOMS_GOAL_B: (usize, usize) = (11, 1);

/// Optional knobs for [`make_environment`]. Unset fields take per-environment defaults.
#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct EnvParams {
    pub gamma: Option<f64>,
    pub chain_length: Option<usize>,
    pub grid_size: Option<usize>,
    pub max_episode_steps: Option<usize>,
}

/// Mapping between open grid cells and state indices.
#[derive(Debug, Clone, PartialEq)]
pub struct GridLayout {
    pub rows: usize,
    pub cols: usize,
    cells: Vec<(usize, usize)>,
    index: Vec<Option<usize>>,
}

impl GridLayout {
    pub fn parse(map: &[&str]) -> Result<Self> {
        let rows = map.len();
        let cols = map.first().map_or(0, |r| r.len());
        if rows == 0 || cols == 0 || map.iter().any(|r| r.len() != cols) {
            return Err(Error::Config("grid map must be a non-empty rectangle".into()));
        }
        let mut cells = Vec::new();
        let mut index = vec![None; rows * cols];
        for (r, line) in map.iter().enumerate() {
            for (c, ch) in line.bytes().enumerate() {
                if ch != b'#' {
                    index[r * cols + c] = Some(cells.len());
                    cells.push((r, c));
                }
            }
        }
        Ok(Self { rows, cols, cells, index })
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn state_at(&self, row: usize, col: usize) -> Option<usize> {
        if row < self.rows && col < self.cols {
            self.index[row * self.cols + col]
        } else {
            None
        }
    }

    pub fn cell(&self, s: usize) -> (usize, usize) {
        self.cells[s]
    }

    /// Result of moving from `s`; blocked moves stay put.
    pub fn step(&self, s: usize, action: usize) -> usize {
        let (r, c) = self.cells[s];
        let target = match action {
            ACTION_NORTH => r.checked_sub(1).map(|r| (r, c)),
            ACTION_SOUTH => Some((r + 1, c)),
            ACTION_EAST => Some((r, c + 1)),
            ACTION_WEST => c.checked_sub(1).map(|c| (r, c)),
            _ => None,
        };
        target.and_then(|(r, c)| self.state_at(r, c)).unwrap_or(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StartRule {
    Fixed(usize, usize),
    /// Uniform over every open cell except the goal.
    UniformNonGoal,
}

/// A built environment plus the metadata learners and the harness need.
#[derive(Debug, Clone, PartialEq)]
pub struct Environment<T> {
    pub name: String,
    pub mdp: TabularMdp<T>,
    pub goal: Option<usize>,
    pub layout: Option<GridLayout>,
    pub max_episode_steps: usize,
}

/// Deterministic 4-action gridworld: `#` is a wall, anything else is open.
/// Entering the goal pays +1 and the goal is absorbing.
pub fn grid_world<T: Real>(
    map: &[&str],
    start: StartRule,
    goal: (usize, usize),
    gamma: f64,
) -> Result<(TabularMdp<T>, GridLayout, usize)> {
    let layout = GridLayout::parse(map)?;
    let goal_state = layout
        .state_at(goal.0, goal.1)
        .ok_or_else(|| Error::Config(format!("goal {goal:?} is not an open cell")))?;
    let n = layout.n_cells();
    let na = 4;
    let mut transition = vec![T::zero(); n * na * n];
    let mut reward = vec![T::zero(); n * na];
    for s in 0..n {
        for a in 0..na {
            let next = if s == goal_state { s } else { layout.step(s, a) };
            transition[(s * na + a) * n + next] = T::one();
            if s != goal_state && next == goal_state {
                reward[s * na + a] = T::one();
            }
        }
    }
    let mut initial = vec![T::zero(); n];
    match start {
        StartRule::Fixed(r, c) => {
            let s = layout
                .state_at(r, c)
                .ok_or_else(|| Error::Config(format!("start ({r}, {c}) is not an open cell")))?;
            if s == goal_state {
                return Err(Error::Config("start coincides with goal".into()));
            }
            initial[s] = T::one();
        }
        StartRule::UniformNonGoal => {
            if n < 2 {
                return Err(Error::Config("grid needs at least two open cells".into()));
            }
            let p = T::one() / T::lit((n - 1) as f64);
            for (s, slot) in initial.iter_mut().enumerate() {
                if s != goal_state {
                    *slot = p;
                }
            }
        }
    }
    let mut terminal = vec![false; n];
    terminal[goal_state] = true;
    let mdp = TabularMdp::new(n, na, transition, reward, initial, T::lit(gamma), terminal)?;
    Ok((mdp, layout, goal_state))
}

fn chain<T: Real>(length: usize, gamma: f64) -> Result<TabularMdp<T>> {
    if length == 0 {
        return Err(Error::Config("chain_length must be at least 1".into()));
    }
    // states 0..length are live, `length` is the absorbing terminal
    let n = length + 1;
    let na = 2;
    let mut transition = vec![T::zero(); n * na * n];
    let mut reward = vec![T::zero(); n * na];
    for s in 0..n {
        let (left, right) = if s == length { (s, s) } else { (s.saturating_sub(1), s + 1) };
        transition[s * na * n + left] = T::one();
        transition[(s * na + 1) * n + right] = T::one();
        if s + 1 == length {
            reward[s * na + 1] = T::one();
        }
    }
    let mut initial = vec![T::zero(); n];
    initial[0] = T::one();
    let mut terminal = vec![false; n];
    terminal[length] = true;
    TabularMdp::new(n, na, transition, reward, initial, T::lit(gamma), terminal)
}

fn two_arm_bandit<T: Real>(gamma: f64) -> Result<TabularMdp<T>> {
    // state 0 decides, state 1 is terminal; both arms end the episode
    let transition = [0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0].map(T::lit).to_vec();
    let reward = [1.0, 0.0, 0.0, 0.0].map(T::lit).to_vec();
    TabularMdp::new(
        2,
        2,
        transition,
        reward,
        vec![T::one(), T::zero()],
        T::lit(gamma),
        vec![false, true],
    )
}

/// Builds a named environment.
///
/// * `four_rooms`: 13x13 four-room grid, start in the top-left room, goal in
///   the far corner of the top-right room.
/// * `four_rooms_goal_b`: same grid with the goal in the bottom-left room.
/// * `chain`: `chain_length` live states (default 10), left/right moves, +1
///   for stepping right off the last live state into the terminal.
/// * `two_arm_bandit`: one decision, arm 0 pays 1, arm 1 pays 0.
/// * `open_grid`: `grid_size` x `grid_size` open grid (default 5), uniform
///   start, goal in the bottom-right corner, discount 0.9.
pub fn make_environment<T: Real>(name: &str, params: &EnvParams) -> Result<Environment<T>> {
    let gamma = params.gamma.unwrap_or(0.99);
    let (mdp, goal, layout, default_steps) = match name {
        "four_rooms" | "four_rooms_goal_b" => {
            let goal = if name == "four_rooms" { FOUR_ROOMS_GOAL_A } else { FOUR_ROOMS_GOAL_B };
            let start = StartRule::Fixed(FOUR_ROOMS_START.0, FOUR_ROOMS_START.1);
            let (mdp, layout, g) = grid_world(&FOUR_ROOMS, start, goal, gamma)?;
            (mdp, Some(g), Some(layout), 100)
        }
        "chain" => {
            let len = params.chain_length.unwrap_or(10);
            let mdp = chain(len, gamma)?;
            (mdp, Some(len), None, 20 * len.max(5))
        }
        "two_arm_bandit" => (two_arm_bandit(gamma)?, None, None, 1),
        "open_grid" => {
            let size = params.grid_size.unwrap_or(5);
            if size < 2 {
                return Err(Error::Config("grid_size must be at least 2".into()));
            }
            let rows: Vec<String> = (0..size).map(|_| ".".repeat(size)).collect();
            let map: Vec<&str> = rows.iter().map(String::as_str).collect();
            let g = params.gamma.unwrap_or(0.9);
            let (mdp, layout, goal) =
                grid_world(&map, StartRule::UniformNonGoal, (size - 1, size - 1), g)?;
            (mdp, Some(goal), Some(layout), 50)
        }
        other => return Err(Error::Config(format!("unknown environment `{other}`"))),
    };
    Ok(Environment {
        name: name.to_string(),
        mdp,
        goal,
        layout,
        max_episode_steps: params.max_episode_steps.unwrap_or(default_steps),
    })
}

/// Options that repeat one primitive action (`o mod |A|`) and terminate with
/// a constant probability.
pub fn repeat_action_options<T: Real>(
    n_states: usize,
    n_actions: usize,
    n_options: usize,
    beta: T,
) -> Result<OptionSet<T>> {
    let options = (0..n_options)
        .map(|o| {
            OptionDef::new(
                PolicyTable::deterministic(n_states, n_actions, |_| o % n_actions),
                vec![beta; n_states],
            )
        })
        .collect::<Result<Vec<_>>>()?;
    OptionSet::new(options)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_rooms_has_expected_shape() {
        let env = make_environment::<f64>("four_rooms", &EnvParams::default()).unwrap();
        assert_eq!(env.mdp.n_states(), 104);
        assert_eq!(env.mdp.n_actions(), 4);
        assert_eq!(env.mdp.gamma(), 0.99);
        let layout = env.layout.as_ref().unwrap();
        assert_eq!(layout.cell(env.goal.unwrap()), FOUR_ROOMS_GOAL_A);
    }

    #[test]
    fn walls_block_movement() {
        let env = make_environment::<f64>("four_rooms", &EnvParams::default()).unwrap();
        let layout = env.layout.unwrap();
        let corner = layout.state_at(1, 1).unwrap();
        // north and west of (1,1) are walls
        for a in [ACTION_NORTH, ACTION_WEST] {
            assert_eq!(env.mdp.transition_row(corner, a)[corner], 1.0);
        }
        // (1,5) east is the wall column at 6
        let s = layout.state_at(1, 5).unwrap();
        assert_eq!(env.mdp.transition_row(s, ACTION_EAST)[s], 1.0);
    }

    #[test]
    fn goal_b_sits_in_opposite_room() {
        let a = make_environment::<f64>("four_rooms", &EnvParams::default()).unwrap();
        let b = make_environment::<f64>("four_rooms_goal_b", &EnvParams::default()).unwrap();
        assert_eq!(a.mdp.n_states(), b.mdp.n_states());
        assert_ne!(a.goal, b.goal);
        assert_eq!(b.layout.unwrap().cell(b.goal.unwrap()), FOUR_ROOMS_GOAL_B);
    }

    #[test]
    fn bandit_rewards() {
        let env = make_environment::<f64>("two_arm_bandit", &EnvParams::default()).unwrap();
        assert_eq!(env.mdp.reward(0, 0), 1.0);
        assert_eq!(env.mdp.reward(0, 1), 0.0);
        assert!(env.mdp.terminal_mask()[1]);
    }

    #[test]
    fn unknown_environment_is_a_config_error() {
        assert!(matches!(
            make_environment::<f64>("cartpole", &EnvParams::default()),
            Err(Error::Config(_))
        ));
    }
}
