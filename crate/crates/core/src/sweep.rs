//! Resumable grid sweeps.
//!
//! Points are evaluated in chunks of `checkpoint_interval` on a worker pool.
//! After each chunk its records are appended, in grid order, to a checkpoint
//! log `<stem>.ckpt`:
//!
//! ```text
//! header  "MCKP1" | version u32 | plan hash [32] | points u64 | values/point u32
//!         | plan length u64 | plan JSON | crc32 u32
//! record  'R' | index u64 | (value f64, change f64) × values/point | ε f64
//!         | flag u8 | crc32 u32
//! index   'I' | count u64 | index u64 × count | crc32 u32
//! ```
//!
//! All integers are little endian; each crc covers its block from the tag on.
//! The index block is written once every point has a record. A torn record
//! at the end of the log is dropped on resume; a complete record with a bad
//! crc is an integrity error.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::correlators::{EvalOptions, Outcome};
use crate::error::{Error, Result};
use crate::files::{result_path, with_suffix, write_result, ResultFormat};
use crate::grid::{evaluate_point, point_coordinates, point_count, Axis, Flag, GridTemplate, Observable, ResultGrid};
use crate::model::SystemParams;
use crate::parallel::{Parallelism, Pool};

const MAGIC: &[u8; 5] = b"MCKP1";
const VERSION: u32 = 1;

/// A linearly spaced axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisSpec {
    pub name: String,
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl AxisSpec {
    pub fn new(name: impl Into<String>, min: f64, max: f64, points: usize) -> Self {
        AxisSpec { name: name.into(), min, max, points }
    }

    pub fn axis(&self) -> Result<Axis> {
        Axis::linear(self.name.clone(), self.min, self.max, self.points)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    pub params: SystemParams,
    pub observable: Observable,
    pub template: GridTemplate,
    pub axes: Vec<AxisSpec>,
    #[serde(default)]
    pub options: EvalOptions,
    pub workers: usize,
    /// Points per checkpoint flush.
    pub checkpoint_interval: usize,
    /// Output path without extension.
    pub output: PathBuf,
    #[serde(default)]
    pub format: ResultFormat,
    /// Configuration echo copied into the result metadata.
    #[serde(default)]
    pub config: serde_json::Value,
    #[serde(default)]
    pub timestamp: Option<String>,
}

/// The part of a plan that determines the computed values. Workers, flush
/// interval, file locations and the timestamp are free to change between
/// runs of the same sweep.
#[derive(Serialize)]
struct PlanIdentity<'a> {
    params: &'a SystemParams,
    observable: &'a Observable,
    template: &'a GridTemplate,
    axes: &'a [AxisSpec],
    options: &'a EvalOptions,
    format: ResultFormat,
    config: &'a serde_json::Value,
}

impl SweepPlan {
    pub fn new(
        params: SystemParams,
        observable: Observable,
        template: GridTemplate,
        axes: Vec<AxisSpec>,
        output: impl Into<PathBuf>,
    ) -> Self {
        SweepPlan {
            params,
            observable,
            template,
            axes,
            options: EvalOptions::default(),
            workers: 1,
            checkpoint_interval: 64,
            output: output.into(),
            format: ResultFormat::Csv,
            config: serde_json::Value::Null,
            timestamp: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.observable.validate()?;
        if self.workers == 0 {
            return Err(Error::Parameter("worker count must be at least 1".into()));
        }
        if self.checkpoint_interval == 0 {
            return Err(Error::Parameter("checkpoint interval must be at least 1".into()));
        }
        if self.axes.is_empty() && self.observable.delay_axis().is_none() {
            return Err(Error::Parameter("a sweep needs at least one axis".into()));
        }
        let mut names: Vec<&str> = self.axes.iter().map(|a| a.name.as_str()).collect();
        names.extend(self.observable.delay_axis().is_some().then_some("tau"));
        let mut sorted = names.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != names.len() {
            return Err(Error::Parameter(format!("axis names must be unique, got {names:?}")));
        }
        for a in &self.axes {
            a.axis()?;
        }
        self.template.validate(self.observable.groups(), self.axes.len())
    }

    pub fn hash(&self) -> [u8; 32] {
        let identity = PlanIdentity {
            params: &self.params,
            observable: &self.observable,
            template: &self.template,
            axes: &self.axes,
            options: &self.options,
            format: self.format,
            config: &self.config,
        };
        let text = serde_json::to_vec(&identity).expect("plans serialize");
        Sha256::digest(&text).into()
    }

    pub fn points(&self) -> usize {
        self.axes.iter().map(|a| a.points).product()
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        with_suffix(&self.output, "ckpt")
    }

    pub fn result_path(&self) -> PathBuf {
        result_path(&self.output, self.format)
    }

    fn grid_axes(&self) -> Result<Vec<Axis>> {
        self.axes.iter().map(AxisSpec::axis).collect()
    }
}

/// Evaluates grid point `index` at the given frequency tuple.
pub type Evaluator<'a> = dyn Fn(usize, &[f64]) -> Outcome + Sync + 'a;

/// Test and tooling hooks for a sweep run.
#[derive(Default)]
pub struct SweepControl<'a> {
    /// Replaces the physical evaluation.
    pub evaluator: Option<&'a Evaluator<'a>>,
    /// Stop after this many chunks have been checkpointed, as if killed.
    pub stop_after_chunks: Option<usize>,
    /// Overrides the plan's worker count.
    pub workers: Option<usize>,
}

#[derive(Debug)]
#[allow(clippy::large_enum_variant)]
pub enum SweepStatus {
    Complete(ResultGrid),
    Interrupted { completed: usize, total: usize },
}

impl SweepStatus {
    pub fn into_grid(self) -> Option<ResultGrid> {
        match self {
            SweepStatus::Complete(g) => Some(g),
            SweepStatus::Interrupted { .. } => None,
        }
    }
}

/// Runs a plan to completion, resuming from its checkpoint if one exists.
pub fn run_sweep(plan: &SweepPlan) -> Result<ResultGrid> {
    run_sweep_with(plan, &SweepControl::default())?
        .into_grid()
        .ok_or_else(|| Error::Parameter("sweep stopped early".into()))
}

/// Continues the sweep recorded in a checkpoint and writes its result file.
pub fn resume(checkpoint: &Path) -> Result<ResultGrid> {
    resume_with(checkpoint, &SweepControl::default())?
        .into_grid()
        .ok_or_else(|| Error::Parameter("sweep stopped early".into()))
}

pub fn run_sweep_with(plan: &SweepPlan, control: &SweepControl) -> Result<SweepStatus> {
    plan.validate()?;
    let path = plan.checkpoint_path();
    check_writable(&plan.result_path())?;
    let state = if path.exists() {
        let log = read_checkpoint(&path)?;
        if log.hash != plan.hash() {
            return Err(Error::Checkpoint {
                path,
                message: "belongs to a different plan; remove it or change the output stem".into(),
            });
        }
        log
    } else {
        create_checkpoint(&path, plan)?
    };
    execute(plan, state, control)
}

pub fn resume_with(checkpoint: &Path, control: &SweepControl) -> Result<SweepStatus> {
    let log = read_checkpoint(checkpoint)?;
    let plan = log.plan.clone();
    plan.validate()?;
    if plan.hash() != log.hash {
        return Err(Error::Checkpoint {
            path: checkpoint.to_path_buf(),
            message: "the stored plan does not match its hash".into(),
        });
    }
    check_writable(&plan.result_path())?;
    execute(&plan, log, control)
}

/// Fails with an I/O error unless `path` can be created or overwritten.
fn check_writable(path: &Path) -> Result<()> {
    let existed = path.exists();
    OpenOptions::new().write(true).create(true).truncate(false).open(path).map_err(|e| Error::io(path, e))?;
    if !existed {
        fs::remove_file(path).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

struct CheckpointLog {
    path: PathBuf,
    hash: [u8; 32],
    plan: SweepPlan,
    values_per_point: usize,
    records: Vec<Option<Outcome>>,
    indexed: bool,
    /// Byte length of the valid prefix.
    valid_len: u64,
}

fn header_bytes(plan: &SweepPlan) -> Vec<u8> {
    let json = serde_json::to_vec(plan).expect("plans serialize");
    let mut b = Vec::with_capacity(64 + json.len());
    b.extend_from_slice(MAGIC);
    b.extend_from_slice(&VERSION.to_le_bytes());
    b.extend_from_slice(&plan.hash());
    b.extend_from_slice(&(plan.points() as u64).to_le_bytes());
    b.extend_from_slice(&(plan.observable.values_per_point() as u32).to_le_bytes());
    b.extend_from_slice(&(json.len() as u64).to_le_bytes());
    b.extend_from_slice(&json);
    let crc = crc32fast::hash(&b);
    b.extend_from_slice(&crc.to_le_bytes());
    b
}

fn create_checkpoint(path: &Path, plan: &SweepPlan) -> Result<CheckpointLog> {
    let header = header_bytes(plan);
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&header).and_then(|_| f.sync_data()).map_err(|e| Error::io(path, e))?;
    Ok(CheckpointLog {
        path: path.to_path_buf(),
        hash: plan.hash(),
        plan: plan.clone(),
        values_per_point: plan.observable.values_per_point(),
        records: vec![None; plan.points()],
        indexed: false,
        valid_len: header.len() as u64,
    })
}

fn record_bytes(index: usize, o: &Outcome) -> Vec<u8> {
    let mut b = Vec::with_capacity(1 + 8 + 16 * o.values.len() + 13);
    b.push(b'R');
    b.extend_from_slice(&(index as u64).to_le_bytes());
    for (v, c) in o.values.iter().zip(&o.changes) {
        b.extend_from_slice(&v.to_le_bytes());
        b.extend_from_slice(&c.to_le_bytes());
    }
    b.extend_from_slice(&o.epsilon.to_le_bytes());
    b.push(o.flag.code());
    let crc = crc32fast::hash(&b);
    b.extend_from_slice(&crc.to_le_bytes());
    b
}

fn index_bytes(count: usize) -> Vec<u8> {
    let mut b = Vec::with_capacity(13 + 8 * count);
    b.push(b'I');
    b.extend_from_slice(&(count as u64).to_le_bytes());
    for i in 0..count {
        b.extend_from_slice(&(i as u64).to_le_bytes());
    }
    let crc = crc32fast::hash(&b);
    b.extend_from_slice(&crc.to_le_bytes());
    b
}

struct Cursor<'a> {
    data: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let s = self.data.get(self.at..self.at.checked_add(n)?)?;
        self.at += n;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|s| u32::from_le_bytes(s.try_into().unwrap()))
    }

    fn u64(&mut self) -> Option<u64> {
        self.take(8).map(|s| u64::from_le_bytes(s.try_into().unwrap()))
    }

    fn f64(&mut self) -> Option<f64> {
        self.u64().map(f64::from_bits)
    }
}

fn read_checkpoint(path: &Path) -> Result<CheckpointLog> {
    let mut data = Vec::new();
    File::open(path).and_then(|mut f| f.read_to_end(&mut data)).map_err(|e| Error::io(path, e))?;
    let bad = |message: &str| Error::Checkpoint { path: path.to_path_buf(), message: message.to_string() };
    let mut c = Cursor { data: &data, at: 0 };
    if c.take(5) != Some(MAGIC.as_slice()) {
        return Err(bad("not a sweep checkpoint"));
    }
    let version = c.u32().ok_or_else(|| bad("truncated header"))?;
    if version != VERSION {
        return Err(bad(&format!("unsupported checkpoint version {version}")));
    }
    let hash: [u8; 32] = c.take(32).ok_or_else(|| bad("truncated header"))?.try_into().unwrap();
    let points = c.u64().ok_or_else(|| bad("truncated header"))? as usize;
    let per_point = c.u32().ok_or_else(|| bad("truncated header"))? as usize;
    let len = c.u64().ok_or_else(|| bad("truncated header"))? as usize;
    let json = c.take(len).ok_or_else(|| bad("truncated header"))?;
    let header_end = c.at;
    let crc = c.u32().ok_or_else(|| bad("truncated header"))?;
    if crc != crc32fast::hash(&data[..header_end]) {
        return Err(bad("header failed its integrity check"));
    }
    let plan: SweepPlan = serde_json::from_slice(json).map_err(|e| bad(&format!("unreadable plan: {e}")))?;
    if plan.points() != points || plan.observable.values_per_point() != per_point {
        return Err(bad("header does not match its plan"));
    }

    let mut log = CheckpointLog {
        path: path.to_path_buf(),
        hash,
        plan,
        values_per_point: per_point,
        records: vec![None; points],
        indexed: false,
        valid_len: c.at as u64,
    };
    let mut record = 0;
    while c.at < data.len() {
        let start = c.at;
        match data[start] {
            b'R' => {
                let body = 1 + 8 + 16 * per_point + 9;
                let Some(block) = c.take(body) else { break };
                let Some(crc) = c.u32() else { break };
                if crc != crc32fast::hash(block) {
                    return Err(Error::Integrity { path: path.to_path_buf(), record });
                }
                let mut r = Cursor { data: block, at: 1 };
                let index = r.u64().unwrap() as usize;
                let (mut values, mut changes) = (Vec::with_capacity(per_point), Vec::with_capacity(per_point));
                for _ in 0..per_point {
                    values.push(r.f64().unwrap());
                    changes.push(r.f64().unwrap());
                }
                let epsilon = r.f64().unwrap();
                let flag = Flag::from_code(r.take(1).unwrap()[0]);
                let (Some(flag), true) = (flag, index < points) else {
                    return Err(Error::Integrity { path: path.to_path_buf(), record });
                };
                log.records[index] = Some(Outcome { values, changes, epsilon, flag, truncation_change: None });
                record += 1;
            }
            b'I' => {
                let Some(head) = c.take(9) else { break };
                let count = u64::from_le_bytes(head[1..9].try_into().unwrap()) as usize;
                let Some(_) = c.take(8 * count) else { break };
                let end = c.at;
                let Some(crc) = c.u32() else { break };
                if crc != crc32fast::hash(&data[start..end]) || count != points {
                    return Err(Error::Integrity { path: path.to_path_buf(), record });
                }
                log.indexed = true;
            }
            _ => return Err(Error::Integrity { path: path.to_path_buf(), record }),
        }
        log.valid_len = c.at as u64;
    }
    if log.indexed && log.records.iter().any(Option::is_none) {
        return Err(bad("index block present but points are missing"));
    }
    Ok(log)
}

fn execute(plan: &SweepPlan, mut log: CheckpointLog, control: &SweepControl) -> Result<SweepStatus> {
    let axes = plan.grid_axes()?;
    let total = point_count(&axes);
    let workers = control.workers.unwrap_or(plan.workers);
    let pool = Pool::new(if workers == 1 { Parallelism::Sequential } else { Parallelism::Workers(workers) })?;
    let physical = |_: usize, w: &[f64]| evaluate_point(&plan.params, &plan.observable, w, &plan.options);
    let evaluator: &Evaluator = match control.evaluator {
        Some(e) => e,
        None => &physical,
    };

    let path = log.path.clone();
    let file = OpenOptions::new().write(true).open(&path).map_err(|e| Error::io(&path, e))?;
    // Drop a torn tail so new records follow the last good one.
    file.set_len(log.valid_len).map_err(|e| Error::io(&path, e))?;
    let mut out = BufWriter::new(file);
    use std::io::Seek;
    out.seek(std::io::SeekFrom::End(0)).map_err(|e| Error::io(&path, e))?;

    let pending: Vec<usize> = (0..total).filter(|&i| log.records[i].is_none()).collect();
    for (chunk_no, chunk) in pending.chunks(plan.checkpoint_interval).enumerate() {
        if control.stop_after_chunks.is_some_and(|n| chunk_no >= n) {
            let completed = log.records.iter().filter(|r| r.is_some()).count();
            return Ok(SweepStatus::Interrupted { completed, total });
        }
        let outcomes = pool.map(chunk, |&i| {
            let w = plan.template.frequencies(&point_coordinates(&axes, i));
            evaluator(i, &w)
        });
        for (&i, o) in chunk.iter().zip(outcomes) {
            if o.values.len() != log.values_per_point || o.changes.len() != log.values_per_point {
                return Err(Error::Parameter(format!("point {i} returned {} values", o.values.len())));
            }
            out.write_all(&record_bytes(i, &o)).map_err(|e| Error::io(&path, e))?;
            log.records[i] = Some(o);
        }
        out.flush().and_then(|_| out.get_ref().sync_data()).map_err(|e| Error::io(&path, e))?;
    }
    if !log.indexed {
        out.write_all(&index_bytes(total)).map_err(|e| Error::io(&path, e))?;
        out.flush().and_then(|_| out.get_ref().sync_data()).map_err(|e| Error::io(&path, e))?;
    }

    let outcomes = log.records.into_iter().map(|r| r.expect("every point has a record")).collect();
    let mut grid_axes = axes;
    grid_axes.extend(plan.observable.delay_axis());
    let mut grid = ResultGrid::from_outcomes(&plan.params, plan.observable.clone(), plan.template.clone(), grid_axes, outcomes);
    grid.metadata.config = plan.config.clone();
    grid.metadata.timestamp = plan.timestamp.clone();
    write_result(&plan.result_path(), &grid, plan.format)?;
    Ok(SweepStatus::Complete(grid))
}
