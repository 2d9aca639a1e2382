//! Template-to-patient personalization: rigid and coherent-point-drift
//! registration, landmark transfer, muscle and ligament updates, PCSA
//! estimation and TMJ blending.

mod anatomy;
mod cpd;
mod personalize;
mod rigid;
mod scs;
mod tmj;

pub use anatomy::*;
pub use cpd::*;
pub use personalize::*;
pub use rigid::*;
pub use scs::*;
pub use tmj::*;
