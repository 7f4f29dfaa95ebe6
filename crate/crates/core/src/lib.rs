#![no_std]
extern crate alloc;

pub mod control;
pub mod error;
pub mod hybrid;
pub mod models;
pub mod numerics;
pub mod poincare;
pub mod reduction;

pub use error::{Error, Result};
