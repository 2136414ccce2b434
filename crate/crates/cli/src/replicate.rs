//! Bundled configurations for the desk-scale replications.

use crate::config::{parse_config, ConfigError, ExperimentConfig};

pub const TABLES: [&str; 6] = ["table1", "table2", "table3", "table5", "pde", "gradcheck"];

const TABLE1: &str = include_str!("../configs/table1.toml");
const TABLE2: &str = include_str!("../configs/table2.toml");
const TABLE3: &str = include_str!("../configs/table3.toml");
const TABLE5_W0: &str = include_str!("../configs/table5_w0.toml");
const TABLE5_W1: &str = include_str!("../configs/table5_w1.toml");
const PDE: &str = include_str!("../configs/pde.toml");
const GRADCHECK: &str = include_str!("../configs/gradcheck.toml");

/// Raw config texts behind a replication name.
pub fn sources(name: &str) -> Option<&'static [&'static str]> {
    Some(match name {
        "table1" => &[TABLE1],
        "table2" => &[TABLE2],
        "table3" => &[TABLE3],
        "table5" => &[TABLE5_W0, TABLE5_W1],
        "pde" => &[PDE],
        "gradcheck" => &[GRADCHECK],
        _ => return None,
    })
}

pub fn configs(name: &str) -> Option<Result<Vec<ExperimentConfig>, ConfigError>> {
    sources(name).map(|texts| texts.iter().map(|t| parse_config(t)).collect())
}
