#![allow(dead_code)]
pub mod geometry_oracles;
pub mod grad_suite;
