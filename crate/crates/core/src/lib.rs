//! Numerical laboratory for suspension flows over torus maps, their time
//! changes by speed fields that stop the flow at one point, and Katok-style
//! entropy estimation along typical orbits.

pub mod entropy;
pub mod error;
pub mod lab;
pub mod quadrature;
pub mod recurrence;
pub mod rng;
pub mod speed;
pub mod suspension;
pub mod time_change;
pub mod torus;

pub use error::{Error, Result};
pub use speed::{FlatProfile, SpeedField, SpeedKind};
pub use suspension::{SuspensionFlow, SuspensionPoint};
pub use time_change::{AdditiveClock, Estimate, Rate, TimeChangedFlow};
pub use torus::{BaseMap, TorusPoint};
