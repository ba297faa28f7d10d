#![allow(dead_code)]
pub mod gradcheck;
pub mod maps;
pub mod semimdp;
pub mod roundtrip;
pub mod cli;
