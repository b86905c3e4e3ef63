//! Pareto frontier over (local FLOPs, payload bytes, top-1 accuracy) and
//! constrained selection of a split point.

use std::cmp::Ordering;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::CodecConfig;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("no trade-off points")]
    EmptyInput,
    #[error("no constraint given")]
    NoConstraints,
    #[error("no point satisfies the constraints; nearest is k={} at {:.1} bytes, accuracy {:.4}", .nearest.k, .nearest.mean_payload_bytes, .nearest.top1_accuracy)]
    Infeasible { nearest: Box<TradeoffPoint> },
    #[error("bad point record: {0}")]
    BadRecord(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// One configuration's cost and quality. `codec: None` means the raw
/// activation is sent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffPoint {
    pub k: usize,
    pub codec: Option<CodecConfig>,
    pub local_flops: u64,
    pub mean_payload_bytes: f64,
    pub top1_accuracy: f64,
}

impl TradeoffPoint {
    /// Weakly better on all three axes and strictly better on one.
    pub fn dominates(&self, other: &TradeoffPoint) -> bool {
        let no_worse = self.local_flops <= other.local_flops
            && self.mean_payload_bytes <= other.mean_payload_bytes
            && self.top1_accuracy >= other.top1_accuracy;
        let better = self.local_flops < other.local_flops
            || self.mean_payload_bytes < other.mean_payload_bytes
            || self.top1_accuracy > other.top1_accuracy;
        no_worse && better
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Constraints {
    pub max_bytes: Option<f64>,
    pub max_local_flops: Option<u64>,
    pub min_accuracy: Option<f64>,
}

impl Constraints {
    pub fn is_empty(&self) -> bool {
        self.max_bytes.is_none() && self.max_local_flops.is_none() && self.min_accuracy.is_none()
    }

    pub fn admits(&self, p: &TradeoffPoint) -> bool {
        self.max_bytes.is_none_or(|b| p.mean_payload_bytes <= b)
            && self.max_local_flops.is_none_or(|f| p.local_flops <= f)
            && self.min_accuracy.is_none_or(|a| p.top1_accuracy >= a)
    }

    /// Sum of relative constraint violations; zero for admitted points.
    fn violation(&self, p: &TradeoffPoint) -> f64 {
        let rel = |excess: f64, scale: f64| if excess > 0.0 { excess / scale.abs().max(1e-12) } else { 0.0 };
        self.max_bytes.map_or(0.0, |b| rel(p.mean_payload_bytes - b, b))
            + self.max_local_flops.map_or(0.0, |f| rel(p.local_flops as f64 - f as f64, f as f64))
            + self.min_accuracy.map_or(0.0, |a| rel(a - p.top1_accuracy, a))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Objective {
    MaxAccuracy,
    MinBytes,
    MinFlops,
}

impl std::str::FromStr for Objective {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "max-accuracy" | "accuracy" => Ok(Objective::MaxAccuracy),
            "min-bytes" | "bytes" => Ok(Objective::MinBytes),
            "min-flops" | "flops" => Ok(Objective::MinFlops),
            other => Err(format!("unknown objective {other:?}")),
        }
    }
}

/// Non-dominated subset of `points`, ordered by (bytes, flops); ties keep
/// input order.
pub fn pareto_frontier(points: &[TradeoffPoint]) -> Result<Vec<TradeoffPoint>, PlanError> {
    Ok(frontier_mask(points)?
        .into_iter()
        .zip(points)
        .filter(|(keep, _)| *keep)
        .map(|(_, p)| p.clone())
        .sorted_by_cost())
}

/// `mask[i]` is true when `points[i]` is on the frontier.
pub fn frontier_mask(points: &[TradeoffPoint]) -> Result<Vec<bool>, PlanError> {
    if points.is_empty() {
        return Err(PlanError::EmptyInput);
    }
    // sweep in (bytes, flops, -accuracy) order: a dominator always sorts
    // no later than the point it dominates
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        let (p, q) = (&points[a], &points[b]);
        p.mean_payload_bytes
            .total_cmp(&q.mean_payload_bytes)
            .then(p.local_flops.cmp(&q.local_flops))
            .then(q.top1_accuracy.total_cmp(&p.top1_accuracy))
    });
    let mut mask = vec![false; points.len()];
    let mut kept: Vec<usize> = Vec::new();
    for &i in &order {
        if !kept.iter().any(|&j| points[j].dominates(&points[i])) {
            mask[i] = true;
            kept.push(i);
        }
    }
    Ok(mask)
}

trait SortedByCost {
    fn sorted_by_cost(self) -> Vec<TradeoffPoint>;
}

impl<I: Iterator<Item = TradeoffPoint>> SortedByCost for I {
    fn sorted_by_cost(self) -> Vec<TradeoffPoint> {
        let mut v: Vec<TradeoffPoint> = self.collect();
        v.sort_by(|p, q| p.mean_payload_bytes.total_cmp(&q.mean_payload_bytes).then(p.local_flops.cmp(&q.local_flops)));
        v
    }
}

fn rank(objective: Objective, p: &TradeoffPoint, q: &TradeoffPoint) -> Ordering {
    let acc = || q.top1_accuracy.total_cmp(&p.top1_accuracy);
    let bytes = || p.mean_payload_bytes.total_cmp(&q.mean_payload_bytes);
    let flops = || p.local_flops.cmp(&q.local_flops);
    match objective {
        Objective::MaxAccuracy => acc().then_with(bytes).then_with(flops),
        Objective::MinBytes => bytes().then_with(acc).then_with(flops),
        Objective::MinFlops => flops().then_with(acc).then_with(bytes),
    }
}

/// Best admitted point under `objective`; remaining ties broken by accuracy
/// (desc), bytes (asc), flops (asc), then input order.
pub fn select_split(
    points: &[TradeoffPoint],
    constraints: &Constraints,
    objective: Objective,
) -> Result<TradeoffPoint, PlanError> {
    if points.is_empty() {
        return Err(PlanError::EmptyInput);
    }
    if constraints.is_empty() {
        return Err(PlanError::NoConstraints);
    }
    let best = points.iter().filter(|p| constraints.admits(p)).min_by(|p, q| rank(objective, p, q));
    match best {
        Some(p) => Ok(p.clone()),
        None => {
            let nearest = points
                .iter()
                .min_by(|p, q| constraints.violation(p).total_cmp(&constraints.violation(q)))
                .expect("non-empty");
            Err(PlanError::Infeasible { nearest: Box::new(nearest.clone()) })
        }
    }
}

/// Linear scalarization `w_acc·accuracy − w_bytes·bytes − w_flops·flops`;
/// returns indices sorted best first.
pub fn rank_by_weights(points: &[TradeoffPoint], weights: [f64; 3]) -> Vec<usize> {
    let score = |p: &TradeoffPoint| {
        weights[0] * p.top1_accuracy - weights[1] * p.mean_payload_bytes - weights[2] * p.local_flops as f64
    };
    let mut idx: Vec<usize> = (0..points.len()).collect();
    idx.sort_by(|&a, &b| score(&points[b]).total_cmp(&score(&points[a])));
    idx
}

/// Flat CSV row: the codec config is spread over `d,m,b,clip`, empty for raw points.
#[derive(Debug, Serialize, Deserialize)]
pub(crate) struct PointRow {
    pub k: usize,
    pub d: Option<usize>,
    pub m: Option<usize>,
    pub b: Option<u32>,
    pub clip: Option<f32>,
    pub local_flops: u64,
    pub mean_payload_bytes: f64,
    pub top1_accuracy: f64,
}

impl From<&TradeoffPoint> for PointRow {
    fn from(p: &TradeoffPoint) -> Self {
        Self {
            k: p.k,
            d: p.codec.map(|c| c.block_size),
            m: p.codec.map(|c| c.components),
            b: p.codec.map(|c| c.quant_bits),
            clip: p.codec.map(|c| c.clip_sigmas),
            local_flops: p.local_flops,
            mean_payload_bytes: p.mean_payload_bytes,
            top1_accuracy: p.top1_accuracy,
        }
    }
}

impl TryFrom<PointRow> for TradeoffPoint {
    type Error = PlanError;

    fn try_from(r: PointRow) -> Result<Self, PlanError> {
        let codec = match (r.d, r.m, r.b) {
            (Some(d), Some(m), Some(b)) => Some(CodecConfig::new(d, m, b).with_clip(r.clip.unwrap_or(4.0))),
            (None, None, None) => None,
            _ => return Err(PlanError::BadRecord(format!("k={}: partial codec config", r.k))),
        };
        if !(0.0..=1.0).contains(&r.top1_accuracy) {
            return Err(PlanError::BadRecord(format!("k={}: accuracy outside [0,1]", r.k)));
        }
        Ok(TradeoffPoint {
            k: r.k,
            codec,
            local_flops: r.local_flops,
            mean_payload_bytes: r.mean_payload_bytes,
            top1_accuracy: r.top1_accuracy,
        })
    }
}

pub fn write_points_csv<W: Write>(points: &[TradeoffPoint], out: W) -> Result<(), PlanError> {
    let mut w = csv::Writer::from_writer(out);
    for p in points {
        w.serialize(PointRow::from(p))?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Reads points from CSV; extra columns (such as report annotations) are ignored.
pub fn read_points_csv<R: Read>(input: R) -> Result<Vec<TradeoffPoint>, PlanError> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize::<PointRow>().map(|row| TradeoffPoint::try_from(row?)).collect()
}

pub fn write_points_json<W: Write>(points: &[TradeoffPoint], out: W) -> Result<(), PlanError> {
    serde_json::to_writer_pretty(out, points)?;
    Ok(())
}

pub fn read_points_json<R: Read>(input: R) -> Result<Vec<TradeoffPoint>, PlanError> {
    Ok(serde_json::from_reader(input)?)
}
