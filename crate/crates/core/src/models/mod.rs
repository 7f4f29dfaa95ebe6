//! Model factories: the vertical hopper, the lateral leg-spring template, the polyped
//! and closed-form oracle systems.

pub mod hopper;
pub mod lls;
pub mod oracles;
pub mod polyped;

pub use hopper::{make_hopper, HopperParams};
pub use lls::{make_lls, LlsParams};
pub use oracles::{
    make_halfturn_oracle, make_linear_clock_oracle, make_projectglue_oracle, ProjectGlueParams,
};
pub use polyped::{make_polyped, PolypedParams};
