//! Offline datasets: transitions, metadata, generation and persistence.

mod circle;
mod io;
mod tabular;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use circle::{make_circle_dataset, CircleConfig, CircleDataset, CIRCLE_SPLIT_RULE};
pub use io::{read_dataset, write_dataset, DatasetReader, DatasetWriter};
pub use tabular::{empirical_distribution, generate_dataset, sample_categorical};

/// A state or action: an index in the tabular tier, a vector in the neural tier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Point {
    Index(usize),
    Vector(Vec<f64>),
}

impl Point {
    pub fn index(&self) -> Option<usize> {
        match self {
            Point::Index(i) => Some(*i),
            Point::Vector(_) => None,
        }
    }

    pub fn vector(&self) -> Option<&[f64]> {
        match self {
            Point::Index(_) => None,
            Point::Vector(v) => Some(v),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub s: Point,
    pub a: Point,
    pub r: f64,
    pub s_next: Point,
    pub done: bool,
}

impl Transition {
    pub fn tabular(s: usize, a: usize, r: f64, s_next: usize, done: bool) -> Self {
        Self {
            s: Point::Index(s),
            a: Point::Index(a),
            r,
            s_next: Point::Index(s_next),
            done,
        }
    }

    pub fn continuous(s: Vec<f64>, a: Vec<f64>, r: f64, s_next: Vec<f64>, done: bool) -> Self {
        Self {
            s: Point::Vector(s),
            a: Point::Vector(a),
            r,
            s_next: Point::Vector(s_next),
            done,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Tabular,
    Continuous,
}

impl DatasetKind {
    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::Tabular => "tabular",
            DatasetKind::Continuous => "continuous",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Dims {
    Tabular { n_states: usize, n_actions: usize },
    Continuous { state_dim: usize, action_dim: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Meta {
    pub kind: DatasetKind,
    pub dims: Dims,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub behavior: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub notes: BTreeMap<String, String>,
}

impl Meta {
    pub fn tabular(n_states: usize, n_actions: usize) -> Self {
        Self {
            kind: DatasetKind::Tabular,
            dims: Dims::Tabular { n_states, n_actions },
            seed: None,
            behavior: None,
            notes: BTreeMap::new(),
        }
    }

    pub fn continuous(state_dim: usize, action_dim: usize) -> Self {
        Self {
            kind: DatasetKind::Continuous,
            dims: Dims::Continuous { state_dim, action_dim },
            seed: None,
            behavior: None,
            notes: BTreeMap::new(),
        }
    }

    pub(crate) fn check(&self) -> Result<()> {
        match (self.kind, self.dims) {
            (DatasetKind::Tabular, Dims::Tabular { .. })
            | (DatasetKind::Continuous, Dims::Continuous { .. }) => Ok(()),
            (kind, _) => Err(Error::InvalidArgument(format!(
                "dims do not match dataset kind {}",
                kind.name()
            ))),
        }
    }

    /// Checks one transition against the declared kind and dimensions.
    pub fn validate(&self, t: &Transition) -> Result<()> {
        if !t.r.is_finite() {
            return Err(Error::NonFinite("reward".into()));
        }
        match self.dims {
            Dims::Tabular { n_states, n_actions } => {
                let check = |p: &Point, n: usize, what: &str| match p {
                    Point::Index(i) if *i < n => Ok(()),
                    Point::Index(i) => Err(Error::InvalidArgument(format!(
                        "{what} index {i} out of range {n}"
                    ))),
                    Point::Vector(_) => Err(Error::KindMismatch {
                        expected: "tabular",
                        found: "continuous",
                    }),
                };
                check(&t.s, n_states, "state")?;
                check(&t.a, n_actions, "action")?;
                check(&t.s_next, n_states, "next state")
            }
            Dims::Continuous { state_dim, action_dim } => {
                let check = |p: &Point, n: usize, what: &str| match p {
                    Point::Vector(v) if v.len() != n => Err(Error::DimensionMismatch(format!(
                        "{what} has dimension {}, expected {n}",
                        v.len()
                    ))),
                    Point::Vector(v) if v.iter().any(|x| !x.is_finite()) => {
                        Err(Error::NonFinite(what.to_string()))
                    }
                    Point::Vector(_) => Ok(()),
                    Point::Index(_) => Err(Error::KindMismatch {
                        expected: "continuous",
                        found: "tabular",
                    }),
                };
                check(&t.s, state_dim, "state")?;
                check(&t.a, action_dim, "action")?;
                check(&t.s_next, state_dim, "next state")
            }
        }
    }
}

/// An ordered list of transitions of one kind, with metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub meta: Meta,
    pub transitions: Vec<Transition>,
}

impl Dataset {
    pub fn new(meta: Meta, transitions: Vec<Transition>) -> Result<Self> {
        meta.check()?;
        for t in &transitions {
            meta.validate(t)?;
        }
        Ok(Self { meta, transitions })
    }

    pub fn kind(&self) -> DatasetKind {
        self.meta.kind
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    /// `(n_states, n_actions)` of a tabular dataset.
    pub fn tabular_dims(&self) -> Result<(usize, usize)> {
        match self.meta.dims {
            Dims::Tabular { n_states, n_actions } => Ok((n_states, n_actions)),
            Dims::Continuous { .. } => Err(Error::KindMismatch {
                expected: "tabular",
                found: "continuous",
            }),
        }
    }

    /// `(s, a, r, s')` index tuples of a tabular dataset.
    pub fn tabular_steps(&self) -> Result<Vec<(usize, usize, f64, usize)>> {
        self.tabular_dims()?;
        Ok(self
            .transitions
            .iter()
            .map(|t| {
                (
                    t.s.index().expect("validated"),
                    t.a.index().expect("validated"),
                    t.r,
                    t.s_next.index().expect("validated"),
                )
            })
            .collect())
    }
}
