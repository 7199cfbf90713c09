#![allow(dead_code)]

pub mod contract;
pub mod dynamics;
pub mod qp;
pub mod toy;
