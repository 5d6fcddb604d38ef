use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EvalError, Result};

/// One score of one model on one task. Higher is better.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalRecord {
    pub task: String,
    pub model: String,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<String>,
}

impl EvalRecord {
    pub fn new(task: impl Into<String>, model: impl Into<String>, score: f64) -> Self {
        Self {
            task: task.into(),
            model: model.into(),
            score,
            metric: None,
        }
    }
}

pub fn read_records(path: &Path) -> Result<Vec<EvalRecord>> {
    let io = |e| EvalError::Io {
        path: path.display().to_string(),
        source: e,
    };
    let file = std::fs::File::open(path).map_err(io)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| EvalError::Malformed {
            path: path.display().to_string(),
            line: i + 1,
            detail: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn write_records(path: &Path, records: &[EvalRecord]) -> Result<()> {
    let io = |e| EvalError::Io {
        path: path.display().to_string(),
        source: e,
    };
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    for r in records {
        writeln!(f, "{}", serde_json::to_string(r).expect("records serialize")).map_err(io)?;
    }
    f.flush().map_err(io)
}

/// Average normalized ranks over a complete task × model grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankTable {
    /// Tasks in sorted order.
    pub tasks: Vec<String>,
    /// Models in sorted order.
    pub models: Vec<String>,
    /// `ranks[t][m]`, 0 for the best model on task `t`.
    pub ranks: Vec<Vec<f64>>,
    /// Mean rank of each model over tasks.
    pub mean: Vec<f64>,
    /// Tasks on which every model scored the same; all ranks there are 0.
    pub degenerate_tasks: Vec<String>,
}

impl RankTable {
    pub fn rank(&self, task: &str, model: &str) -> Option<f64> {
        let t = self.tasks.iter().position(|x| x == task)?;
        let m = self.models.iter().position(|x| x == model)?;
        Some(self.ranks[t][m])
    }

    pub fn mean_rank(&self, model: &str) -> Option<f64> {
        let m = self.models.iter().position(|x| x == model)?;
        Some(self.mean[m])
    }

    /// Models ordered best first; ties keep name order.
    pub fn ordering(&self) -> Vec<&str> {
        let mut idx: Vec<usize> = (0..self.models.len()).collect();
        idx.sort_by(|&a, &b| self.mean[a].total_cmp(&self.mean[b]));
        idx.into_iter().map(|i| self.models[i].as_str()).collect()
    }

    /// Tab-separated table: one row per task, then a `mean` row.
    pub fn to_tsv(&self) -> String {
        let mut out = format!("task\t{}\n", self.models.join("\t"));
        for (t, row) in self.tasks.iter().zip(&self.ranks) {
            let cells: Vec<String> = row.iter().map(|r| format!("{r:.6}")).collect();
            out.push_str(&format!("{t}\t{}\n", cells.join("\t")));
        }
        let cells: Vec<String> = self.mean.iter().map(|r| format!("{r:.6}")).collect();
        out.push_str(&format!("mean\t{}\n", cells.join("\t")));
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("rank table serializes")
    }
}

/// `r_{t,m} = (|M| − 1)·(max v − v_{t,m}) / (max v − min v)`, averaged over tasks.
pub fn normalized_rank(records: &[EvalRecord]) -> Result<RankTable> {
    let mut grid: BTreeMap<&str, BTreeMap<&str, f64>> = BTreeMap::new();
    for r in records {
        if !r.score.is_finite() {
            return Err(EvalError::Invalid(format!(
                "score for task {:?}, model {:?} is not finite",
                r.task, r.model
            )));
        }
        if grid.entry(&r.task).or_default().insert(&r.model, r.score).is_some() {
            return Err(EvalError::Invalid(format!(
                "duplicate record for task {:?}, model {:?}",
                r.task, r.model
            )));
        }
    }
    let models: Vec<String> = {
        let mut m: Vec<&str> = records.iter().map(|r| r.model.as_str()).collect();
        m.sort_unstable();
        m.dedup();
        m.into_iter().map(String::from).collect()
    };
    if models.len() < 2 {
        return Err(EvalError::Invalid(format!("need at least 2 models, got {}", models.len())));
    }
    let top = (models.len() - 1) as f64;
    let mut table = RankTable {
        tasks: Vec::new(),
        models: models.clone(),
        ranks: Vec::new(),
        mean: vec![0.0; models.len()],
        degenerate_tasks: Vec::new(),
    };
    for (task, scores) in &grid {
        let missing: Vec<&str> = models
            .iter()
            .map(String::as_str)
            .filter(|m| !scores.contains_key(m))
            .collect();
        if !missing.is_empty() {
            return Err(EvalError::Invalid(format!("task {task:?} has no score for {missing:?}")));
        }
        let v: Vec<f64> = models.iter().map(|m| scores[m.as_str()]).collect();
        let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let row: Vec<f64> = if hi == lo {
            log::warn!("all models score {hi} on task {task:?}; ranks set to 0");
            table.degenerate_tasks.push(task.to_string());
            vec![0.0; v.len()]
        } else {
            v.iter().map(|x| top * ((hi - x) / (hi - lo))).collect()
        };
        table.tasks.push(task.to_string());
        table.ranks.push(row);
    }
    let n = table.tasks.len() as f64;
    for (m, mean) in table.mean.iter_mut().enumerate() {
        *mean = table.ranks.iter().map(|row| row[m]).sum::<f64>() / n;
    }
    Ok(table)
}
