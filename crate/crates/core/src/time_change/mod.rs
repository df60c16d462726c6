//! Time changes of the suspension flow: clocks, their inverses, return
//! times and the transformation of invariant measures.

mod clock;
mod measure;

pub use clock::*;
pub use measure::*;
