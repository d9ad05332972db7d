//! Shipped benchmark presets; each one sets every configuration key.

use crate::config::{parse_flat, Flat};

pub const BEAM: &str = include_str!("../presets/beam.toml");
pub const SWELLING: &str = include_str!("../presets/swelling.toml");
pub const CONTRACTION: &str = include_str!("../presets/contraction.toml");

pub const NAMES: [&str; 3] = ["beam", "swelling", "contraction"];

pub fn preset_text(name: &str) -> Option<&'static str> {
    match name.to_ascii_lowercase().as_str() {
        "beam" => Some(BEAM),
        "swelling" => Some(SWELLING),
        "contraction" => Some(CONTRACTION),
        _ => None,
    }
}

pub fn preset(name: &str) -> Option<Flat> {
    preset_text(name).map(|t| parse_flat(t).expect("shipped presets parse"))
}
