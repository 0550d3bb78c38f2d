//! Subject records and the on-disk dataset directory.
//!
//! ```text
//! <dir>/mesh.off
//! <dir>/subjects.csv            subject_id,score
//! <dir>/task_<id>.mvrl          m × d_task
//! <dir>/rest_<id>.mvrl          m × d_rest
//! <dir>/ground_truth/...        optional, see `synth`
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{concatenate, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::matrix_io::{read_matrix, write_matrix};
use crate::mesh::Mesh;

/// One subject's per-vertex view matrices and score.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectRecord {
    pub id: String,
    /// `m × d_task`
    pub task: Array2<f64>,
    /// `m × d_rest`
    pub rest: Array2<f64>,
    pub score: f64,
}

impl SubjectRecord {
    pub fn new(id: impl Into<String>, task: Array2<f64>, rest: Array2<f64>, score: f64) -> Result<Self> {
        if task.nrows() != rest.nrows() {
            return Err(Error::shape("subject vertex count (rest view)", task.nrows(), rest.nrows()));
        }
        Ok(SubjectRecord {
            id: id.into(),
            task,
            rest,
            score,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.task.nrows()
    }
}

/// Checks that every subject shares `m`, `d_task` and `d_rest`; returns them.
pub fn common_shape(subjects: &[SubjectRecord]) -> Result<(usize, usize, usize)> {
    let first = subjects
        .first()
        .ok_or_else(|| Error::invalid("dataset", "no subjects"))?;
    let shape = (first.vertex_count(), first.task.ncols(), first.rest.ncols());
    for s in subjects {
        if s.task.nrows() != s.rest.nrows() {
            return Err(Error::shape("subject vertex count", s.task.nrows(), s.rest.nrows()));
        }
        let got = (s.vertex_count(), s.task.ncols(), s.rest.ncols());
        if got != shape {
            return Err(Error::shape(
                "subject shape (m, d_task, d_rest)",
                format!("{shape:?}"),
                format!("{got:?} for subject {}", s.id),
            ));
        }
    }
    Ok(shape)
}

/// Stacks the vertex rows of the given subjects into per-view sample matrices.
pub fn stack_views(subjects: &[&SubjectRecord]) -> Result<(Array2<f64>, Array2<f64>)> {
    if subjects.is_empty() {
        return Err(Error::invalid("dataset", "no subjects to stack"));
    }
    let task: Vec<ArrayView2<f64>> = subjects.iter().map(|s| s.task.view()).collect();
    let rest: Vec<ArrayView2<f64>> = subjects.iter().map(|s| s.rest.view()).collect();
    let task = concatenate(Axis(0), &task).map_err(|e| Error::shape("stacked task view", "equal widths", e))?;
    let rest = concatenate(Axis(0), &rest).map_err(|e| Error::shape("stacked rest view", "equal widths", e))?;
    Ok((task, rest))
}

/// A mesh plus its subjects.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub mesh: Mesh,
    pub subjects: Vec<SubjectRecord>,
}

impl Dataset {
    pub fn validate(&self) -> Result<()> {
        let (m, _, _) = common_shape(&self.subjects)?;
        if m != self.mesh.vertex_count() {
            return Err(Error::shape("subject rows vs mesh vertices", self.mesh.vertex_count(), m));
        }
        Ok(())
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.mesh.save(dir.join("mesh.off"))?;
        let mut csv = String::from("subject_id,score\n");
        for s in &self.subjects {
            if s.id.contains([',', '/', '\\', '\n']) {
                return Err(Error::invalid("subject id", format!("{:?} is not file-safe", s.id)));
            }
            writeln!(csv, "{},{:?}", s.id, s.score).unwrap();
            write_matrix(dir.join(format!("task_{}.mvrl", s.id)), &s.task)?;
            write_matrix(dir.join(format!("rest_{}.mvrl", s.id)), &s.rest)?;
        }
        let path = dir.join("subjects.csv");
        fs::write(&path, csv).map_err(|e| Error::io(path, e))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Dataset> {
        let dir = dir.as_ref();
        let mesh = Mesh::load(dir.join("mesh.off"))?;
        let path = dir.join("subjects.csv");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut lines = text.lines();
        match lines.next().map(str::trim) {
            Some("subject_id,score") => {}
            other => return Err(Error::Parse(format!("subjects.csv: bad header {other:?}"))),
        }
        let mut subjects = Vec::new();
        for (lineno, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (id, score) = line
                .split_once(',')
                .ok_or_else(|| Error::Parse(format!("subjects.csv line {}: {line:?}", lineno + 2)))?;
            let score: f64 = score
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("subjects.csv line {}: bad score", lineno + 2)))?;
            let id = id.trim().to_owned();
            let task = read_matrix(dir.join(format!("task_{id}.mvrl")))?;
            let rest = read_matrix(dir.join(format!("rest_{id}.mvrl")))?;
            subjects.push(SubjectRecord::new(id, task, rest, score)?);
        }
        let ds = Dataset { mesh, subjects };
        ds.validate()?;
        Ok(ds)
    }
}
