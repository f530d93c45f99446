//! Underapproximate backward reachable sets of discrete-time neural feedback
//! loops, computed as unions of norm balls through mixed-integer linear programs,
//! and goal-reaching checks built on them.

pub mod backreach;
pub mod error;
pub mod geometry;
pub mod milp;
pub mod nfl;
pub mod pwl;
pub mod solver;
pub mod verify;
pub mod cli;
