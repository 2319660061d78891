//! Instruction templates for the agent roles, one text file per role.
//!
//! Built-in defaults ship with the crate; a directory containing
//! `drafter.txt`, `scenario.txt` or `legal.txt` overrides them file by file.
//! The drafter template may use the `{article}` placeholder.

use std::fmt;
use std::io;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentRole {
    Drafter,
    Scenario,
    Legal,
}

impl AgentRole {
    pub const ALL: [AgentRole; 3] = [AgentRole::Drafter, AgentRole::Scenario, AgentRole::Legal];

    pub fn as_str(self) -> &'static str {
        match self {
            AgentRole::Drafter => "drafter",
            AgentRole::Scenario => "scenario",
            AgentRole::Legal => "legal",
        }
    }

    pub fn file_name(self) -> String {
        format!("{}.txt", self.as_str())
    }
}

impl fmt::Display for AgentRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AgentRole {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "drafter" => Ok(AgentRole::Drafter),
            "scenario" => Ok(AgentRole::Scenario),
            "legal" => Ok(AgentRole::Legal),
            other => Err(format!("unknown agent role `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Templates {
    pub drafter: String,
    pub scenario: String,
    pub legal: String,
}

impl Default for Templates {
    fn default() -> Self {
        Self {
            drafter: include_str!("../templates/drafter.txt").to_string(),
            scenario: include_str!("../templates/scenario.txt").to_string(),
            legal: include_str!("../templates/legal.txt").to_string(),
        }
    }
}

impl Templates {
    /// Defaults overridden by whichever role files exist in `dir`.
    pub fn load_dir(dir: &Path) -> io::Result<Self> {
        let mut templates = Self::default();
        for role in AgentRole::ALL {
            let path = dir.join(role.file_name());
            match std::fs::read_to_string(&path) {
                Ok(text) => *templates.get_mut(role) = text,
                Err(e) if e.kind() == io::ErrorKind::NotFound => {}
                Err(e) => return Err(e),
            }
        }
        Ok(templates)
    }

    pub fn get(&self, role: AgentRole) -> &str {
        match role {
            AgentRole::Drafter => &self.drafter,
            AgentRole::Scenario => &self.scenario,
            AgentRole::Legal => &self.legal,
        }
    }

    fn get_mut(&mut self, role: AgentRole) -> &mut String {
        match role {
            AgentRole::Drafter => &mut self.drafter,
            AgentRole::Scenario => &mut self.scenario,
            AgentRole::Legal => &mut self.legal,
        }
    }

    pub fn drafter_instruction(&self, article_ref: &str) -> String {
        self.drafter.replace("{article}", article_ref)
    }
}
