//! Checks shared by the property suites and the acceptance run.
#![allow(dead_code)]

pub mod gradients;
pub mod ordering;
pub mod toy;
