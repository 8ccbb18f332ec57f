//! Directed links between drawers, usually across wings.

use serde::{Deserialize, Serialize};

pub const TUNNELS_FILE: &str = "tunnels.jsonl";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tunnel {
    pub from_drawer_id: String,
    pub to_drawer_id: String,
    pub label: String,
    pub created_at: String,
}
