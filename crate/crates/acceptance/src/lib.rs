//! Reference oracle, tree generators and shared fixtures for the acceptance
//! suite.

pub mod family;
pub mod oracle;
