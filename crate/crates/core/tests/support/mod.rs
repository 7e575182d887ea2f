#![allow(dead_code)]

pub mod mockgen;
