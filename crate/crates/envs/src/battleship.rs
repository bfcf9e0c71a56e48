//! Battleship: a seeded hidden fleet on a rectangular board, string
//! observations, and error-as-feedback rules. A hit grants an extra turn;
//! misses and rule violations consume the turn budget.
//!
//! The policy is a code parameter `act(map, plan)` where `map` is the board
//! as a list of rows of cell texts and `plan` is the number of cells marked
//! so far (computed by the non-trainable `reason` operator).

use std::collections::{BTreeMap, BTreeSet};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use opto_core::exprlang::{self, DEFAULT_STEP_LIMIT};
use opto_core::graph::{ApplyOptions, Arity, Graph, GraphError, NodeId, NodeOptions, OperatorSpec};
use opto_core::Value;

use crate::EnvError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Shot {
    Hit,
    Miss,
}

#[derive(Debug, Clone)]
pub struct BattleshipBoard {
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    ships: BTreeSet<(usize, usize)>,
    shots: BTreeMap<(usize, usize), Shot>,
    hits: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BattleshipStep {
    pub observation: String,
    /// Cumulative fraction of ship squares hit, in [0, 1].
    pub reward: f64,
    pub done: bool,
    pub feedback: String,
    pub extra_turn: bool,
}

/// Places the fleet (axis-aligned, non-overlapping, in bounds) with a
/// seeded generator and returns the board plus the all-unknown observation.
pub fn battleship_reset(
    width: usize,
    height: usize,
    ship_lengths: &[usize],
    seed: u64,
) -> Result<(BattleshipBoard, String), EnvError> {
    let total: usize = ship_lengths.iter().sum();
    if total > width * height || ship_lengths.iter().any(|&l| l == 0 || l > width.max(height)) {
        return Err(EnvError::PlacementInfeasible);
    }
    let mut rng = StdRng::seed_from_u64(seed);
    'boards: for _restart in 0..100 {
        let mut ships: BTreeSet<(usize, usize)> = BTreeSet::new();
        for &length in ship_lengths {
            let mut placed = false;
            for _attempt in 0..200 {
                let horizontal = rng.random_bool(0.5);
                let (max_row, max_col) = if horizontal {
                    (height, width.saturating_sub(length) + 1)
                } else {
                    (height.saturating_sub(length) + 1, width)
                };
                if max_row == 0 || max_col == 0 || (horizontal && width < length) || (!horizontal && height < length) {
                    continue;
                }
                let row = rng.random_range(0..max_row);
                let col = rng.random_range(0..max_col);
                let cells: Vec<(usize, usize)> = (0..length)
                    .map(|k| if horizontal { (row, col + k) } else { (row + k, col) })
                    .collect();
                if cells.iter().any(|c| ships.contains(c)) {
                    continue;
                }
                ships.extend(cells);
                placed = true;
                break;
            }
            if !placed {
                continue 'boards;
            }
        }
        let board = BattleshipBoard {
            width,
            height,
            seed,
            ships,
            shots: BTreeMap::new(),
            hits: 0,
        };
        let observation = board.observation();
        return Ok((board, observation));
    }
    Err(EnvError::PlacementInfeasible)
}

impl BattleshipBoard {
    /// Rows of '.', 'O' (miss), 'X' (hit), row 0 first.
    pub fn observation(&self) -> String {
        (0..self.height)
            .map(|r| {
                (0..self.width)
                    .map(|c| match self.shots.get(&(r, c)) {
                        None => '.',
                        Some(Shot::Miss) => 'O',
                        Some(Shot::Hit) => 'X',
                    })
                    .collect::<String>()
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// The observation as a graph value: a list of rows of cell texts.
    pub fn observation_value(&self) -> Value {
        Value::List(
            (0..self.height)
                .map(|r| {
                    Value::List(
                        (0..self.width)
                            .map(|c| {
                                Value::Text(
                                    match self.shots.get(&(r, c)) {
                                        None => ".",
                                        Some(Shot::Miss) => "O",
                                        Some(Shot::Hit) => "X",
                                    }
                                    .to_string(),
                                )
                            })
                            .collect(),
                    )
                })
                .collect(),
        )
    }

    pub fn ship_cell_count(&self) -> usize {
        self.ships.len()
    }

    pub fn shot_count(&self) -> usize {
        self.shots.len()
    }

    pub fn hits(&self) -> usize {
        self.hits
    }

    pub fn reward(&self) -> f64 {
        self.hits as f64 / self.ships.len() as f64
    }

    pub fn done(&self) -> bool {
        self.hits == self.ships.len()
    }

    /// Fires at a coordinate. Out-of-bounds and repeated shots change no
    /// state; the violation is reported through the feedback text.
    pub fn step(&mut self, row: i64, col: i64) -> BattleshipStep {
        let outcome = |board: &BattleshipBoard, feedback: String, extra_turn: bool| BattleshipStep {
            observation: board.observation(),
            reward: board.reward(),
            done: board.done(),
            feedback,
            extra_turn,
        };
        if row < 0 || col < 0 || row as usize >= self.height || col as usize >= self.width {
            return outcome(
                self,
                format!("Invalid shot: ({row}, {col}) is off the board."),
                false,
            );
        }
        let cell = (row as usize, col as usize);
        if self.shots.contains_key(&cell) {
            return outcome(
                self,
                format!("Invalid shot: ({row}, {col}) was already shot."),
                false,
            );
        }
        if self.ships.contains(&cell) {
            self.shots.insert(cell, Shot::Hit);
            self.hits += 1;
            let feedback = if self.done() {
                format!("Hit at ({row}, {col})! You sank all the ships.")
            } else {
                format!("Hit at ({row}, {col})! You can go again.")
            };
            outcome(self, feedback, true)
        } else {
            self.shots.insert(cell, Shot::Miss);
            outcome(self, format!("Miss at ({row}, {col})."), false)
        }
    }

    /// Structural invariants: hit bookkeeping, bounds and conservation of
    /// ship squares.
    pub fn check_invariants(&self) -> Result<(), String> {
        if self
            .ships
            .iter()
            .any(|&(r, c)| r >= self.height || c >= self.width)
        {
            return Err("ship cell out of bounds".to_string());
        }
        let recorded_hits = self
            .shots
            .values()
            .filter(|shot| **shot == Shot::Hit)
            .count();
        if recorded_hits != self.hits {
            return Err("hit counter diverged from the shot map".to_string());
        }
        if self
            .shots
            .iter()
            .any(|(cell, shot)| (*shot == Shot::Hit) != self.ships.contains(cell))
        {
            return Err("shot marks disagree with ship placement".to_string());
        }
        let unhit = self
            .ships
            .iter()
            .filter(|cell| !self.shots.contains_key(*cell))
            .count();
        if self.hits + unhit != self.ships.len() {
            return Err("hits plus unhit ship cells must equal the fleet size".to_string());
        }
        Ok(())
    }
}

/// Result of running a policy over one episode without tracing.
#[derive(Debug, Clone)]
pub struct EpisodeOutcome {
    pub reward: f64,
    pub shots_taken: usize,
    pub done: bool,
    /// The first execution error, if the policy crashed.
    pub error: Option<String>,
    pub last_feedback: String,
}

/// Plays one episode: the policy is evaluated each turn on the current map
/// and the number of marked cells. Misses and rule violations consume the
/// budget; hits are free turns; an execution error ends the episode.
pub fn run_episode(
    policy: &exprlang::Program,
    board: &mut BattleshipBoard,
    miss_budget: usize,
) -> EpisodeOutcome {
    let mut used = 0usize;
    let mut last_feedback = String::new();
    let step_cap = board.width * board.height * 4 + miss_budget;
    for _ in 0..step_cap {
        if board.done() || used >= miss_budget {
            break;
        }
        let args = [
            board.observation_value(),
            Value::Number(board.shot_count() as f64),
        ];
        let target = match exprlang::evaluate(policy, &args, DEFAULT_STEP_LIMIT) {
            Ok(value) => value,
            Err(error) => {
                return EpisodeOutcome {
                    reward: board.reward(),
                    shots_taken: used,
                    done: board.done(),
                    error: Some(error.to_string()),
                    last_feedback,
                };
            }
        };
        let (row, col) = match coordinate_from(&target) {
            Some(pair) => pair,
            None => {
                return EpisodeOutcome {
                    reward: board.reward(),
                    shots_taken: used,
                    done: board.done(),
                    error: Some(format!(
                        "policy returned {}, expected [row, col]",
                        target.render_inline()
                    )),
                    last_feedback,
                };
            }
        };
        let prev_reward = board.reward();
        let step = board.step(row, col);
        debug_assert!(step.reward >= prev_reward, "reward must be monotone");
        debug_assert_eq!(
            step.extra_turn,
            step.feedback.starts_with("Hit"),
            "a hit and only a hit grants the extra turn"
        );
        debug_assert!(board.check_invariants().is_ok());
        last_feedback = step.feedback;
        if !step.extra_turn {
            used += 1;
        }
    }
    EpisodeOutcome {
        reward: board.reward(),
        shots_taken: used,
        done: board.done(),
        error: None,
        last_feedback,
    }
}

/// Interprets a policy result as a board coordinate.
pub fn coordinate_from(value: &Value) -> Option<(i64, i64)> {
    match value {
        Value::List(items) if items.len() == 2 => {
            let row = items[0].as_number()?;
            let col = items[1].as_number()?;
            if row.fract() != 0.0 || col.fract() != 0.0 {
                return None;
            }
            Some((row as i64, col as i64))
        }
        _ => None,
    }
}

/// The traced graph of a single shot: map -> reason -> act(code).
pub struct ShotGraph {
    pub graph: Graph,
    pub policy: NodeId,
    pub map: NodeId,
    pub plan: NodeId,
    /// The target node, or the exception node if the policy crashed.
    pub output: NodeId,
    pub trapped: Option<String>,
}

pub const ACT_DESCRIPTION: &str = "Given a map and plan, select a target coordinate in a Battleship game. In map, O denotes misses, X denotes successes, and . denotes unknown positions.";
pub const REASON_DESCRIPTION: &str =
    "Given a map, count the cells already shot at, giving the index of the current turn.";

/// Builds the one-shot trace for the current board and policy source.
pub fn shot_graph(board: &BattleshipBoard, policy_source: &str) -> Result<ShotGraph, GraphError> {
    let mut graph = Graph::new();
    let map = graph.create_node(board.observation_value(), NodeOptions::named("map"))?;
    let policy = graph.create_node(
        Value::Code(policy_source.to_string()),
        NodeOptions::named("act_code").trainable(),
    )?;
    let reason = graph.register_operator(OperatorSpec::new(
        "reason",
        REASON_DESCRIPTION,
        Arity::Fixed(1),
        |values| {
            let Value::List(rows) = &values[0] else {
                return Err("reason expects the board map".to_string());
            };
            let mut marked = 0usize;
            for row in rows {
                let Value::List(cells) = row else {
                    return Err("reason expects rows of cells".to_string());
                };
                for cell in cells {
                    match cell {
                        Value::Text(t) if t != "." => marked += 1,
                        _ => {}
                    }
                }
            }
            Ok(Value::Number(marked as f64))
        },
    ))?;
    let act = graph.register_operator(OperatorSpec::new(
        "act",
        ACT_DESCRIPTION,
        Arity::Fixed(2),
        |_| Err("act is interpreted from its code parameter".to_string()),
    ))?;
    let plan = graph.apply(reason, &[map], ApplyOptions::named("plan"))?;
    match graph.apply(
        act,
        &[map, plan],
        ApplyOptions::named("target").with_code_param(policy),
    ) {
        Ok(output) => Ok(ShotGraph {
            graph,
            policy,
            map,
            plan,
            output,
            trapped: None,
        }),
        Err(GraphError::ExecutionTrapped { node, message }) => Ok(ShotGraph {
            graph,
            policy,
            map,
            plan,
            output: node,
            trapped: Some(message),
        }),
        Err(other) => Err(other),
    }
}
