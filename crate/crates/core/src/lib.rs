//! Numerical laboratory for nonlocal monostable equations with heavy-tailed
//! dispersal: accelerated front laws, sub-exponential tail diagnostics,
//! Kesten-type convolution bounds, time stepping and sub-solution checks.
//!
//! Every algorithm is generic over the scalar through [`num::Real`]
//! (`f32` or `f64`). The aliases at the crate root fix the scalar to `f64`,
//! which is what the command-line driver uses.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fmt;

pub mod analysis;
pub mod convolution;
pub mod dynamics;
pub mod error;
pub mod frontlaw;
pub mod num;
pub mod quad;
pub mod tails;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Outcome of a sampled check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    Yes,
    No,
    /// The samples neither confirm nor refute the property.
    Undetermined,
}

impl Verdict {
    /// Conjunction; `No` dominates `Undetermined`.
    pub fn and(self, other: Verdict) -> Verdict {
        match (self, other) {
            (Verdict::No, _) | (_, Verdict::No) => Verdict::No,
            (Verdict::Undetermined, _) | (_, Verdict::Undetermined) => Verdict::Undetermined,
            _ => Verdict::Yes,
        }
    }

    pub fn is_yes(self) -> bool {
        self == Verdict::Yes
    }
}

impl From<bool> for Verdict {
    fn from(b: bool) -> Self {
        if b {
            Verdict::Yes
        } else {
            Verdict::No
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Yes => "pass",
            Verdict::No => "fail",
            Verdict::Undetermined => "undetermined",
        })
    }
}

pub type TailProfile = tails::TailProfile<f64>;
pub type TailFamily = tails::TailFamily<f64>;
pub type TwoSidedTail = tails::TwoSidedTail<f64>;
pub type Grid = convolution::Grid<f64>;
pub type GridFunction = convolution::GridFunction<f64>;
pub type Kernel = convolution::Kernel<f64>;
pub type FrontLaw = frontlaw::FrontLaw<f64>;
pub type Model = dynamics::Model<f64>;
pub type Reaction = dynamics::Reaction<f64>;
pub type Field = dynamics::Field<f64>;
pub type Trajectory = dynamics::Trajectory<f64>;
