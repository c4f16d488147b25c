//! Command-line front end: corpus loading, synthetic data generation,
//! metrics emission, model persistence, and cluster orchestration.

pub mod corpus;
pub mod gen;
pub mod metrics;
pub mod modelio;
pub mod run;
