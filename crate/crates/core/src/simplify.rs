//! Ramer–Douglas–Peucker simplification and per-drawing simplification ladders.
//!
//! Points are integer pixels, so the distance test runs in exact integer
//! arithmetic: a point at perpendicular distance `|cross| / |chord|` is kept
//! iff `cross² > ε² · |chord|²`. Ties on the maximum distance keep the
//! earliest index; a point at exactly ε is dropped.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::drawing::{Drawing, Point, Stroke};

/// Distance threshold in pixel units.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Epsilon(f64);

impl Epsilon {
    /// Dataset strokes already come simplified at this threshold.
    pub const DATASET: Epsilon = Epsilon(2.0);

    pub fn new(value: f64) -> Option<Self> {
        (value.is_finite() && value >= 0.0).then_some(Self(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl fmt::Display for Epsilon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Distance from `p` to the infinite line through `a` and `b`, or to `a`
/// when the two coincide.
pub fn perpendicular_distance(p: Point, a: Point, b: Point) -> f64 {
    let (cross, chord_sq) = cross_and_chord(p, a, b);
    if chord_sq == 0 {
        (cross as f64).sqrt()
    } else {
        (cross.unsigned_abs() as f64) / (chord_sq as f64).sqrt()
    }
}

/// Returns `(cross, |ab|²)`. For a degenerate chord the first value is the
/// squared point distance instead.
fn cross_and_chord(p: Point, a: Point, b: Point) -> (i64, i64) {
    let (px, py) = (i64::from(p.x), i64::from(p.y));
    let (ax, ay) = (i64::from(a.x), i64::from(a.y));
    let (bx, by) = (i64::from(b.x), i64::from(b.y));
    let (dx, dy) = (bx - ax, by - ay);
    let chord_sq = dx * dx + dy * dy;
    if chord_sq == 0 {
        let (ex, ey) = (px - ax, py - ay);
        (ex * ex + ey * ey, 0)
    } else {
        (dx * (ay - py) - dy * (ax - px), chord_sq)
    }
}

/// Squared distance scaled by `|ab|²`, exact in integers. The scale is the
/// same for every point of one chord, so keys compare like distances.
fn distance_key(p: Point, a: Point, b: Point) -> i64 {
    let (cross, chord_sq) = cross_and_chord(p, a, b);
    if chord_sq == 0 {
        cross
    } else {
        cross * cross
    }
}

fn exceeds(key: i64, chord_sq: i64, eps: Epsilon) -> bool {
    let scale = if chord_sq == 0 { 1.0 } else { chord_sq as f64 };
    // key and scale are exact integers below 2^53
    key as f64 > eps.0 * eps.0 * scale
}

/// Indices of the points RDP keeps, in ascending order.
pub fn rdp_keep(points: &[Point], eps: Epsilon) -> Vec<usize> {
    let n = points.len();
    if n <= 2 {
        return (0..n).collect();
    }
    let mut keep = vec![false; n];
    keep[0] = true;
    keep[n - 1] = true;
    let mut stack = vec![(0usize, n - 1)];
    while let Some((lo, hi)) = stack.pop() {
        if hi - lo < 2 {
            continue;
        }
        let (a, b) = (points[lo], points[hi]);
        let (_, chord_sq) = cross_and_chord(a, a, b);
        let mut best = (lo + 1, distance_key(points[lo + 1], a, b));
        for (i, &p) in points.iter().enumerate().take(hi).skip(lo + 2) {
            let k = distance_key(p, a, b);
            if k > best.1 {
                best = (i, k);
            }
        }
        if exceeds(best.1, chord_sq, eps) {
            keep[best.0] = true;
            stack.push((best.0, hi));
            stack.push((lo, best.0));
        }
    }
    keep.iter()
        .enumerate()
        .filter_map(|(i, &k)| k.then_some(i))
        .collect()
}

pub fn rdp_stroke(stroke: &Stroke, eps: Epsilon) -> Stroke {
    let pts = stroke.points();
    let kept: Vec<Point> = rdp_keep(pts, eps).into_iter().map(|i| pts[i]).collect();
    // a closed stroke lying within eps of its start collapses to [a, a]
    Stroke::from_kept(kept)
}

pub fn simplify_drawing(d: &Drawing, eps: Epsilon) -> Drawing {
    d.with_strokes(d.strokes().iter().map(|s| rdp_stroke(s, eps)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rung {
    pub epsilon: Epsilon,
    pub drawing: Drawing,
}

impl Rung {
    pub fn segment_count(&self) -> usize {
        self.drawing.segment_count()
    }
}

/// Progressively simpler versions of one drawing, one rung per distinct
/// geometry, ordered by increasing ε.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplificationLadder {
    pub source: Drawing,
    pub rungs: Vec<Rung>,
}

impl SimplificationLadder {
    /// The rung in effect at `eps`: the last rung whose ε does not exceed it.
    pub fn at(&self, eps: f64) -> Option<&Rung> {
        self.rungs.iter().rev().find(|r| r.epsilon.value() <= eps)
    }

    pub fn segment_counts(&self) -> Vec<usize> {
        self.rungs.iter().map(Rung::segment_count).collect()
    }

    pub fn len(&self) -> usize {
        self.rungs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rungs.is_empty()
    }
}

fn fully_reduced(d: &Drawing) -> bool {
    d.strokes().iter().all(|s| s.len() == 2)
}

/// Simplifies `d` at ε = start, start + step, ... until every stroke is a
/// single segment. Adjacent rungs with identical geometry are merged, keeping
/// the smallest ε.
pub fn build_ladder(d: &Drawing, eps_start: Epsilon, eps_step: f64) -> SimplificationLadder {
    assert!(
        eps_step.is_finite() && eps_step > 0.0,
        "eps_step must be positive, got {eps_step}"
    );
    let mut rungs: Vec<Rung> = Vec::new();
    for k in 0u32.. {
        let eps = Epsilon(eps_start.0 + f64::from(k) * eps_step);
        let simplified = simplify_drawing(d, eps);
        let done = fully_reduced(&simplified);
        let duplicate = rungs
            .last()
            .is_some_and(|r| r.drawing.strokes() == simplified.strokes());
        if !duplicate {
            rungs.push(Rung {
                epsilon: eps,
                drawing: simplified,
            });
        }
        if done {
            break;
        }
    }
    SimplificationLadder {
        source: d.clone(),
        rungs,
    }
}
