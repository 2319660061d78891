//! Queue assignments, persisted next to the corpus as
//! `<corpus>.assignments.jsonl`. A sample is assigned at most once, ever.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use uuid::Uuid;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Assignment {
    pub sample_id: Uuid,
    pub annotator_id: String,
    pub assigned_at: DateTime<Utc>,
}

#[derive(Debug)]
pub struct Assignments {
    path: PathBuf,
    by_sample: HashMap<Uuid, Assignment>,
}

impl Assignments {
    pub fn open(path: impl Into<PathBuf>) -> io::Result<Self> {
        let path = path.into();
        let mut by_sample = HashMap::new();
        match File::open(&path) {
            Ok(f) => {
                for (i, line) in BufReader::new(f).lines().enumerate() {
                    let line = line?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    let a: Assignment = serde_json::from_str(&line).map_err(|e| {
                        io::Error::new(io::ErrorKind::InvalidData, format!("{}:{}: {e}", path.display(), i + 1))
                    })?;
                    if by_sample.insert(a.sample_id, a).is_some() {
                        return Err(io::Error::new(
                            io::ErrorKind::InvalidData,
                            format!("{}:{}: sample assigned twice", path.display(), i + 1),
                        ));
                    }
                }
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => {}
            Err(e) => return Err(e),
        }
        Ok(Self { path, by_sample })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn get(&self, sample: Uuid) -> Option<&Assignment> {
        self.by_sample.get(&sample)
    }

    pub fn is_assigned(&self, sample: Uuid) -> bool {
        self.by_sample.contains_key(&sample)
    }

    pub fn for_annotator<'a>(&'a self, annotator: &'a str) -> impl Iterator<Item = &'a Assignment> + 'a {
        self.by_sample.values().filter(move |a| a.annotator_id == annotator)
    }

    /// Records and persists a new assignment. The caller has checked that
    /// the sample is unassigned.
    pub fn assign(&mut self, sample: Uuid, annotator: &str) -> io::Result<Assignment> {
        assert!(!self.is_assigned(sample), "sample {sample} is already assigned");
        let a = Assignment { sample_id: sample, annotator_id: annotator.to_string(), assigned_at: Utc::now() };
        let line = serde_json::to_string(&a).expect("assignments always serialize");
        let mut f = OpenOptions::new().create(true).append(true).open(&self.path)?;
        writeln!(f, "{line}")?;
        f.sync_data()?;
        self.by_sample.insert(sample, a.clone());
        Ok(a)
    }
}
