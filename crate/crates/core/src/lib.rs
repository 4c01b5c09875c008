//! Joint scheduling, power and trajectory design for a secure UAV relay pair
//! (a transmitting UAV and a cooperative jammer) in an underlay cognitive
//! network with an imperfectly located eavesdropper.

pub mod channel;
pub mod convex_core;
pub mod optimizer;
pub mod oracle;
pub mod rates;
pub mod scenario;
pub mod subproblems;

pub use channel::Position2D;
pub use rates::SolutionState;
pub use scenario::ScenarioConfig;
