//! Targeted and trusted multi-agent communication.
//!
//! Agents keep Dirichlet opinions over their actions, send per-recipient
//! evidence messages through a learned selector, and fuse what they receive
//! with Dempster's rule before acting. The crate contains the opinion algebra
//! ([`evidence`]), a small recurrent network with exact gradients
//! ([`neural`]), discrete cooperative environments ([`envs`]), the
//! communication fabric ([`comm`]), value-decomposition training
//! ([`trainer`]) and experiment plumbing ([`config`], [`metrics`], [`run`]).
//!
//! Runnable walkthroughs live in `examples/`; `cargo run --example` lists them.

pub mod evidence;
pub mod envs;
pub mod neural;
pub mod comm;
pub mod trainer;
pub mod config;
pub mod metrics;
pub mod run;
