//! Desk-scale environments for exercising the trace-optimization engine:
//! the worked single-parameter example, a synthetic numerical graph
//! generator, Battleship, and the k-bit binary-match construction.

pub mod battleship;
pub mod binmatch;
pub mod fig4;
pub mod numopt;

use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EnvError {
    #[error("ships cannot be placed on the requested board")]
    PlacementInfeasible,
    #[error("parameter has {got} bits, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
}

pub use battleship::{battleship_reset, BattleshipBoard, BattleshipStep, EpisodeOutcome, ShotGraph};
pub use binmatch::{binmatch_evaluate, binmatch_generate, ordinal, BinMatchEval, BinMatchInstance};
pub use fig4::{fig4_build, Fig4Instance, FIG4_FEEDBACK};
pub use numopt::{numopt_feedback, numopt_generate, NumOptGraph, NumOptInstance};
