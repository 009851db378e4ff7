//! Operator-to-robot interface design for a unicycle, plus the
//! bandwidth-limited camera channel back to the operator.
//!
//! [`optimizer::solve`] searches a linear map `G` and an action sequence
//! for a transfer task. [`props`] checks the resulting map for linearity,
//! continuity, symmetry and completeness, [`simulator`] runs scripted
//! operator sessions through it, and [`obschannel`] picks image transforms
//! that keep the most information within a per-frame bit budget.

pub mod adjoint;
pub mod cli;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod functionals;
pub mod interface;
pub mod lbfgs;
pub mod neldermead;
pub mod obschannel;
pub mod optimizer;
pub mod props;
pub mod simulator;
pub mod trajectory;

pub use error::{Error, Result};

#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/dynamics.md")]
    pub struct Dynamics;
    #[doc = include_str!("../../../book/src/interface.md")]
    pub struct Interface;
    #[doc = include_str!("../../../book/src/objective.md")]
    pub struct Objective;
    #[doc = include_str!("../../../book/src/optimizing.md")]
    pub struct Optimizing;
    #[doc = include_str!("../../../book/src/channel.md")]
    pub struct Channel;
    #[doc = include_str!("../../../book/src/principles.md")]
    pub struct Principles;
    #[doc = include_str!("../../../book/src/sessions.md")]
    pub struct Sessions;
    #[doc = include_str!("../../../book/src/cli.md")]
    pub struct Cli;
}
