//! Newline-delimited JSON trajectories.
//!
//! One trajectory per line: `{"steps":[{"s": 0, "a": "left", "r": 1.0, "p": 0.5}, ...]}`.
//! States and actions are either dense integer indices or string labels; a file must use one
//! kind per coordinate. String labels are looked up in a provided map or, failing that, numbered
//! in order of first appearance. `p` may be `null` or omitted.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{OpeError, Result};
use crate::trajectory::{LoggedDataset, Step, Trajectory};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
enum Label {
    Index(usize),
    Name(String),
}

#[derive(Debug, Deserialize)]
struct StepRecord {
    s: Label,
    a: Label,
    r: f64,
    #[serde(default)]
    p: Option<f64>,
}

#[derive(Debug, Deserialize)]
struct LineRecord {
    steps: Vec<StepRecord>,
}

#[derive(Serialize)]
struct StepOut {
    s: usize,
    a: usize,
    r: f64,
    p: Option<f64>,
}

#[derive(Serialize)]
struct LineOut {
    steps: Vec<StepOut>,
}

/// String labels for states and actions, indexed by their dense id.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LabelMaps {
    pub states: Vec<String>,
    pub actions: Vec<String>,
}

#[derive(Default)]
struct Coordinate {
    names: Vec<String>,
    lookup: HashMap<String, usize>,
    fixed: bool,
    uses_names: Option<bool>,
}

impl Coordinate {
    fn new(provided: Option<&[String]>) -> Self {
        let mut c = Coordinate::default();
        if let Some(names) = provided {
            c.fixed = true;
            for n in names {
                c.intern(n);
            }
        }
        c
    }

    fn intern(&mut self, name: &str) -> usize {
        if let Some(&i) = self.lookup.get(name) {
            return i;
        }
        let i = self.names.len();
        self.names.push(name.to_owned());
        self.lookup.insert(name.to_owned(), i);
        i
    }

    fn resolve(&mut self, label: &Label, what: &str, line: usize) -> Result<usize> {
        let is_name = matches!(label, Label::Name(_));
        match self.uses_names {
            Some(prev) if prev != is_name => {
                return Err(OpeError::Parse {
                    line,
                    detail: format!("{what} labels mix integers and strings"),
                })
            }
            _ => self.uses_names = Some(is_name),
        }
        match label {
            Label::Index(i) => Ok(*i),
            Label::Name(n) if self.fixed => {
                self.lookup.get(n).copied().ok_or_else(|| OpeError::Parse {
                    line,
                    detail: format!("unknown {what} label '{n}'"),
                })
            }
            Label::Name(n) => Ok(self.intern(n)),
        }
    }
}

/// Reads trajectories from any buffered reader. Line numbers in errors are 1-based.
pub fn parse_jsonl(
    reader: impl BufRead,
    labels: Option<&LabelMaps>,
) -> Result<(LoggedDataset, LabelMaps)> {
    let mut states = Coordinate::new(labels.map(|l| l.states.as_slice()));
    let mut actions = Coordinate::new(labels.map(|l| l.actions.as_slice()));
    let mut trajectories = Vec::new();
    let mut expected: Option<(usize, usize)> = None;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: LineRecord = serde_json::from_str(&line).map_err(|e| OpeError::Parse {
            line: line_no,
            detail: e.to_string(),
        })?;
        match expected {
            None => expected = Some((record.steps.len(), line_no)),
            Some((len, _)) if len != record.steps.len() => {
                return Err(OpeError::RaggedHorizon {
                    line: line_no,
                    expected: len,
                    found: record.steps.len(),
                })
            }
            _ => {}
        }
        if record.steps.is_empty() {
            return Err(OpeError::Parse {
                line: line_no,
                detail: "trajectory has no steps".into(),
            });
        }
        let mut steps = Vec::with_capacity(record.steps.len());
        for rec in &record.steps {
            if let Some(p) = rec.p {
                if !(p > 0.0 && p <= 1.0) {
                    return Err(OpeError::Parse {
                        line: line_no,
                        detail: format!("propensity {p} is outside (0, 1]"),
                    });
                }
            }
            if !rec.r.is_finite() {
                return Err(OpeError::Parse {
                    line: line_no,
                    detail: "reward is not finite".into(),
                });
            }
            steps.push(Step {
                state: states.resolve(&rec.s, "state", line_no)?,
                action: actions.resolve(&rec.a, "action", line_no)?,
                reward: rec.r,
                propensity: rec.p,
            });
        }
        trajectories.push(Trajectory::new(steps));
    }
    if trajectories.is_empty() {
        return Err(OpeError::EmptyDataset);
    }
    let maps = LabelMaps {
        states: states.names,
        actions: actions.names,
    };
    Ok((LoggedDataset::new(trajectories)?, maps))
}

pub fn ingest_jsonl(
    path: impl AsRef<Path>,
    labels: Option<&LabelMaps>,
) -> Result<(LoggedDataset, LabelMaps)> {
    let file = std::fs::File::open(path)?;
    parse_jsonl(BufReader::new(file), labels)
}

/// Writes integer-indexed lines that [`parse_jsonl`] reads back into an equal dataset.
pub fn write_jsonl(data: &LoggedDataset, mut out: impl Write) -> Result<()> {
    for traj in data.trajectories() {
        let line = LineOut {
            steps: traj
                .steps
                .iter()
                .map(|s| StepOut {
                    s: s.state,
                    a: s.action,
                    r: s.reward,
                    p: s.propensity,
                })
                .collect(),
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
