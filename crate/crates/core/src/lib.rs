//! Exchangeable self-similar fragmentations of marked partitions.
//!
//! The crate builds the objects ([`marked_partition`], [`dislocation`]), the
//! mark dynamics of a single block ([`levy_mark`]), a genealogy simulator
//! with Lamperti time change ([`essf_sim`]), cumulant and martingale
//! diagnostics ([`diagnostics`]) and statistical checks of the simulator
//! ([`stat_tests`]).

// `!(x > 0.0)` style guards are how NaN gets rejected along with the bad range.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod dislocation;
pub mod error;
pub mod essf_sim;
pub mod levy_mark;
pub mod marked_partition;

pub use dislocation::{Characteristics, CharacteristicsConfig, DislocationMeasure, ZElement};
pub use error::{EssfError, Result};
pub use essf_sim::{GenealogyTree, Level, SimOptions};
pub use marked_partition::{MarkedPartition, Permutation};
