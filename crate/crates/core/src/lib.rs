//! Eco-driving incentive mechanisms over continuous n-player games.
//!
//! * [`model`]: emission / travel-time / cost evaluation and own-action derivatives
//! * [`equilibrium`]: best responses, Gauss–Seidel Nash solver, ε-Nash check
//! * [`mechanism`]: first-best and second-best recommendations and incentives
//! * [`audit`]: obedience, incentive-compatibility and budget audits
//! * [`scenario`]: seeded generation and the JSON scenario file
//! * [`cli`]: the `ecomech` command line and its CSV tables

pub mod audit;
pub mod cli;
pub mod equilibrium;
pub mod error;
pub mod mechanism;
pub mod model;
pub mod scenario;

pub use error::{Error, Result};
pub use model::{DriverParams, EcoProfile, IncentiveVector, Scenario, TypeProfile};
