//! Learning components: a from-scratch soft actor-critic and its
//! first-order meta-learning wrapper.

pub mod adam;
pub mod checkpoint;
pub mod error;
pub mod gradcheck;
pub mod meta;
pub mod mlp;
pub mod policy;
pub mod replay;
pub mod sac;
pub mod train;

pub use error::{Error, Result};
pub use mlp::Mlp;
pub use sac::{SacAgent, SacNets};
