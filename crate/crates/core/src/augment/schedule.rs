use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Phase {
    pub name: String,
    pub datasets: Vec<PathBuf>,
    pub passes: u32,
}

/// Training phases for alternating synthetic and authentic data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub phases: Vec<Phase>,
}

impl Schedule {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schedule serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Schedule = serde_json::from_str(text).map_err(|e| Error::format("schedule", e.to_string()))?;
        if s.phases.is_empty() {
            return Err(Error::format("schedule", "no phases"));
        }
        Ok(s)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

/// `rounds` repetitions of `[synthetic + authentic]` followed by `[authentic]`.
pub fn at_schedule(authentic: &Path, synthetic: &[PathBuf], rounds: u32) -> Result<Schedule> {
    if rounds == 0 {
        return Err(Error::config("AT schedule needs at least one round"));
    }
    for p in std::iter::once(authentic).chain(synthetic.iter().map(PathBuf::as_path)) {
        if !p.exists() {
            return Err(Error::config(format!("manifest {} does not exist", p.display())));
        }
    }
    let mut mixed: Vec<PathBuf> = Vec::new();
    for p in synthetic {
        if p.as_path() == authentic {
            return Err(Error::config(format!(
                "{} listed as both authentic and synthetic",
                p.display()
            )));
        }
        if !mixed.contains(p) {
            mixed.push(p.clone());
        }
    }
    if mixed.is_empty() {
        log::warn!("AT schedule without synthetic data: every phase is authentic only");
    }
    mixed.push(authentic.to_path_buf());

    let mut phases = Vec::with_capacity(2 * rounds as usize);
    for r in 1..=rounds {
        phases.push(Phase {
            name: format!("round{r}-mixed"),
            datasets: mixed.clone(),
            passes: 1,
        });
        phases.push(Phase {
            name: format!("round{r}-authentic"),
            datasets: vec![authentic.to_path_buf()],
            passes: 1,
        });
    }
    Ok(Schedule { phases })
}
