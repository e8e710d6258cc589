//! Evolved cellular-automaton light controllers for a simulated
//! photosensitive Belousov-Zhabotinsky medium.
//!
//! A 10×10 heterogeneous CA reads thresholded activity from camera-style
//! difference images of an Oregonator simulation and picks one of three light
//! levels for every cell. A global-fitness hillclimber evolves the CA's lookup
//! tables until the medium's activity realises a two-input logic gate.

pub mod batch;
pub mod config;
pub mod controller;
pub mod error;
pub mod evolution;
pub mod gates;
pub mod imaging;
pub mod mask;
pub mod pnm;
pub mod reaction;

pub use error::{Error, Result};
