//! Personalized breast-cancer screening policies: patients are partitioned by
//! personal features and estimated risk, and each partition gets its own
//! cost-sensitive screening tree with a certified false-negative rate.

pub mod cluster;
pub mod error;
pub mod model;
pub mod risk;
pub mod tree;
pub mod policy;
pub mod synth;
pub mod eval;
