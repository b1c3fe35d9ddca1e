pub mod cnc;
pub mod coding;
pub mod envs;
pub mod harness;
pub mod oracle;
pub mod rng;

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/introduction.md")]
mod book_introduction {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/coding-distributions.md")]
mod book_coding_distributions {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/value-estimation.md")]
mod book_value_estimation {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/exact-oracle.md")]
mod book_exact_oracle {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/environments.md")]
mod book_environments {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/experiments.md")]
mod book_experiments {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/snapshots.md")]
mod book_snapshots {}
