//! Interactive best/worst judgments backed by an append-only journal.
//!
//! Each task shows the selected responses in a shuffled order; the shuffle is
//! recorded so display slots map back to pool indices. The journal holds one
//! JSON object per line (`{"event":"task",...}` or `{"event":"judgment",...}`)
//! and is replayed on open, so an interrupted session resumes where it left off.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::BudgetLedger;
use crate::dataset::{read_records, CandidatePool, PreferencePair};
use crate::error::{Error, Result};
use crate::selection::SelectionResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskStatus {
    Pending,
    Done,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanTask {
    pub task_id: String,
    pub instruction: String,
    /// Selected responses in display order.
    pub responses: Vec<String>,
    /// `permutation[slot]` is the pool index shown in display slot `slot`.
    pub permutation: Vec<usize>,
    pub strategy: String,
    pub lambda: Option<f64>,
    pub status: TaskStatus,
    pub best_display_index: Option<usize>,
    pub worst_display_index: Option<usize>,
}

impl HumanTask {
    pub fn k(&self) -> usize {
        self.responses.len()
    }

    /// What an annotator gets to see: no pool indices, scores or provenance.
    pub fn view(&self) -> TaskView {
        TaskView {
            task_id: self.task_id.clone(),
            instruction: self.instruction.clone(),
            responses: self.responses.clone(),
            status: self.status,
            best_display_index: self.best_display_index,
            worst_display_index: self.worst_display_index,
        }
    }

    fn pair(&self) -> Option<PreferencePair> {
        let (best, worst) = (self.best_display_index?, self.worst_display_index?);
        Some(PreferencePair {
            id: self.task_id.clone(),
            instruction: self.instruction.clone(),
            chosen: self.responses[best].clone(),
            rejected: self.responses[worst].clone(),
            chosen_index: self.permutation[best],
            rejected_index: self.permutation[worst],
            strategy: self.strategy.clone(),
            lambda: self.lambda,
            annotations_used: self.k() as u64,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskView {
    pub task_id: String,
    pub instruction: String,
    pub responses: Vec<String>,
    pub status: TaskStatus,
    pub best_display_index: Option<usize>,
    pub worst_display_index: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub done: usize,
    pub pending: usize,
    pub consumed_annotations: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "lowercase")]
enum JournalEntry {
    Task(HumanTask),
    Judgment {
        task_id: String,
        best: usize,
        worst: usize,
    },
}

pub struct Session {
    tasks: Vec<HumanTask>,
    by_id: HashMap<String, usize>,
    ledger: BudgetLedger,
    journal: Option<(PathBuf, File)>,
    seed: u64,
    open: bool,
    leases: HashMap<String, String>,
}

impl Session {
    pub fn in_memory(seed: u64) -> Self {
        Self {
            tasks: Vec::new(),
            by_id: HashMap::new(),
            ledger: BudgetLedger::default(),
            journal: None,
            seed,
            open: true,
            leases: HashMap::new(),
        }
    }

    /// Opens (creating if needed) a journaled session and replays it. A line
    /// that cannot be parsed or contradicts earlier lines is reported by number.
    pub fn open(path: impl AsRef<Path>, seed: u64) -> Result<Self> {
        let path = path.as_ref();
        let mut session = Self::in_memory(seed);
        if path.exists() {
            for (line, entry) in read_records::<JournalEntry>(path)? {
                session
                    .apply_entry(entry)
                    .map_err(|e| Error::parse(path, line, e))?;
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        session.journal = Some((path.to_path_buf(), file));
        Ok(session)
    }

    fn apply_entry(&mut self, entry: JournalEntry) -> Result<()> {
        match entry {
            JournalEntry::Task(task) => {
                if self.by_id.contains_key(&task.task_id) {
                    return Err(Error::DuplicateTask(task.task_id));
                }
                if task.status != TaskStatus::Pending
                    || task.permutation.len() != task.responses.len()
                    || task.k() < 2
                {
                    return Err(Error::Invariant(format!(
                        "malformed task `{}`",
                        task.task_id
                    )));
                }
                self.insert(task);
                Ok(())
            }
            JournalEntry::Judgment {
                task_id,
                best,
                worst,
            } => self.record(&task_id, best, worst).map(|_| ()),
        }
    }

    fn insert(&mut self, task: HumanTask) {
        self.ledger.planned_instructions += 1;
        self.ledger.planned_annotations += task.k() as u64;
        self.by_id.insert(task.task_id.clone(), self.tasks.len());
        self.tasks.push(task);
    }

    fn check_judgment(&self, task_id: &str, best: usize, worst: usize) -> Result<usize> {
        let &idx = self
            .by_id
            .get(task_id)
            .ok_or_else(|| Error::TaskNotFound(task_id.to_string()))?;
        let task = &self.tasks[idx];
        if task.status == TaskStatus::Done {
            return Err(Error::TaskDone(task_id.to_string()));
        }
        if best == worst {
            return Err(Error::InvalidJudgment("best and worst must differ".into()));
        }
        if best >= task.k() || worst >= task.k() {
            return Err(Error::InvalidJudgment(format!(
                "display indices must be below {}",
                task.k()
            )));
        }
        Ok(idx)
    }

    fn record(&mut self, task_id: &str, best: usize, worst: usize) -> Result<PreferencePair> {
        let idx = self.check_judgment(task_id, best, worst)?;
        let task = &mut self.tasks[idx];
        task.status = TaskStatus::Done;
        task.best_display_index = Some(best);
        task.worst_display_index = Some(worst);
        let units = task.k() as u64;
        self.ledger.charge(task_id, units);
        self.leases.retain(|_, t| t != task_id);
        Ok(self.tasks[idx].pair().expect("judged task has a pair"))
    }

    fn append(&mut self, entry: &JournalEntry) -> Result<()> {
        if let Some((path, file)) = self.journal.as_mut() {
            let mut line = serde_json::to_vec(entry).map_err(|e| Error::io(&*path, e.into()))?;
            line.push(b'\n');
            file.write_all(&line).map_err(|e| Error::io(&*path, e))?;
            file.sync_data().map_err(|e| Error::io(&*path, e))?;
        }
        Ok(())
    }

    pub fn close(&mut self) {
        self.open = false;
    }

    pub fn is_open(&self) -> bool {
        self.open
    }

    pub fn ledger(&self) -> &BudgetLedger {
        &self.ledger
    }

    pub fn tasks(&self) -> &[HumanTask] {
        &self.tasks
    }

    pub fn task(&self, task_id: &str) -> Option<&HumanTask> {
        self.by_id.get(task_id).map(|&i| &self.tasks[i])
    }

    pub fn progress(&self) -> Progress {
        let done = self
            .tasks
            .iter()
            .filter(|t| t.status == TaskStatus::Done)
            .count();
        Progress {
            done,
            pending: self.tasks.len() - done,
            consumed_annotations: self.ledger.consumed_annotations,
        }
    }

    /// Pairs for every judged task, in enqueue order.
    pub fn pairs(&self) -> Vec<PreferencePair> {
        self.tasks.iter().filter_map(HumanTask::pair).collect()
    }

    /// The task leased to `cursor`, leasing the first free pending task if the
    /// cursor holds none. Tasks leased to other cursors are skipped.
    pub fn next_for(&mut self, cursor: &str) -> Option<&HumanTask> {
        if let Some(id) = self.leases.get(cursor) {
            let idx = self.by_id[id];
            if self.tasks[idx].status == TaskStatus::Pending {
                return Some(&self.tasks[idx]);
            }
        }
        let taken: Vec<&String> = self
            .leases
            .iter()
            .filter(|(c, _)| c.as_str() != cursor)
            .map(|(_, t)| t)
            .collect();
        let idx = self
            .tasks
            .iter()
            .position(|t| t.status == TaskStatus::Pending && !taken.contains(&&t.task_id))?;
        self.leases
            .insert(cursor.to_string(), self.tasks[idx].task_id.clone());
        Some(&self.tasks[idx])
    }

    pub fn submit(&mut self, task_id: &str, best: usize, worst: usize) -> Result<PreferencePair> {
        self.check_judgment(task_id, best, worst)?;
        self.append(&JournalEntry::Judgment {
            task_id: task_id.to_string(),
            best,
            worst,
        })?;
        self.record(task_id, best, worst)
    }
}

/// Queues the selected responses for a human, shuffled per task.
pub fn enqueue_human_task(
    selection: &SelectionResult,
    pool: &CandidatePool,
    session: &mut Session,
) -> Result<HumanTask> {
    if !session.open {
        return Err(Error::SessionClosed);
    }
    selection.validate(pool.len())?;
    if session.by_id.contains_key(pool.id()) {
        return Err(Error::DuplicateTask(pool.id().to_string()));
    }
    let mut permutation = selection.indices.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(session.seed ^ crate::stable_hash(pool.id()));
    permutation.shuffle(&mut rng);
    let task = HumanTask {
        task_id: pool.id().to_string(),
        instruction: pool.instruction.text.clone(),
        responses: permutation
            .iter()
            .map(|&i| pool.responses[i].clone())
            .collect(),
        permutation,
        strategy: selection.strategy.to_string(),
        lambda: selection.lambda(),
        status: TaskStatus::Pending,
        best_display_index: None,
        worst_display_index: None,
    };
    session.append(&JournalEntry::Task(task.clone()))?;
    session.insert(task.clone());
    Ok(task)
}

/// Records a best/worst judgment given in display slots. Done tasks are
/// rejected, so a repeated submission is never charged twice.
pub fn apply_human_judgment(
    session: &mut Session,
    task_id: &str,
    best_display_index: usize,
    worst_display_index: usize,
) -> Result<PreferencePair> {
    session.submit(task_id, best_display_index, worst_display_index)
}
