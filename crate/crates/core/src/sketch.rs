//! Sketch and stroke data model.
//!
//! Sketches are stored as absolute integer points grouped into strokes. The
//! canonical canvas is 256×256 (coordinates 0–255), matching the simplified
//! public sketch corpus. A sketch can also be written as a flat sequence of
//! pen events `(dx, dy, p)` where `p = 1` draws and `p = 0` only moves the pen.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest coordinate on the canonical canvas.
pub const CANVAS_MAX: i32 = 255;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Point {
    pub x: i32,
    pub y: i32,
}

impl Point {
    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }
}

/// One pen-down interval.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stroke {
    points: Vec<Point>,
}

impl Stroke {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidSketch("stroke has no points".into()));
        }
        Ok(Self { points })
    }

    /// Builds a stroke from the corpus layout: parallel `x` and `y` arrays.
    pub fn from_xy(xs: &[i32], ys: &[i32]) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::InvalidSketch(format!(
                "stroke has {} x values but {} y values",
                xs.len(),
                ys.len()
            )));
        }
        Self::new(xs.iter().zip(ys).map(|(&x, &y)| Point::new(x, y)).collect())
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Parallel `[xs, ys]` arrays, the corpus layout.
    pub fn to_xy(&self) -> [Vec<i32>; 2] {
        [
            self.points.iter().map(|p| p.x).collect(),
            self.points.iter().map(|p| p.y).collect(),
        ]
    }
}

/// Pen event relative to the previous pen position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeltaEvent {
    pub dx: i32,
    pub dy: i32,
    /// 1 while drawing, 0 for a pen-up move to the start of a stroke.
    pub p: u8,
}

impl DeltaEvent {
    pub const fn new(dx: i32, dy: i32, p: u8) -> Self {
        Self { dx, dy, p }
    }
}

/// Category name: lowercase, whitespace runs collapsed to a single `_`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Label(String);

impl Label {
    pub fn new(raw: &str) -> Result<Self> {
        let normalized = raw
            .split_whitespace()
            .map(str::to_lowercase)
            .collect::<Vec<_>>()
            .join("_");
        if normalized.is_empty() {
            return Err(Error::InvalidLabel(raw.to_string()));
        }
        Ok(Self(normalized))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Underscore-separated parts, used for multi-word embedding fallback.
    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.0.split('_').filter(|w| !w.is_empty())
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for Label {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl std::str::FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Label::new(s)
    }
}

impl TryFrom<String> for Label {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        Label::new(&value)
    }
}

impl From<Label> for String {
    fn from(label: Label) -> Self {
        label.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sketch {
    label: Label,
    strokes: Vec<Stroke>,
    source_id: String,
}

impl Sketch {
    pub fn new(label: Label, strokes: Vec<Stroke>, source_id: impl Into<String>) -> Result<Self> {
        if strokes.is_empty() {
            return Err(Error::EmptySketch);
        }
        let total: usize = strokes.iter().map(Stroke::len).sum();
        if total < 2 {
            return Err(Error::InvalidSketch(format!(
                "sketch needs at least 2 points, has {total}"
            )));
        }
        Ok(Self {
            label,
            strokes,
            source_id: source_id.into(),
        })
    }

    /// Builds a sketch from the corpus `drawing` layout.
    pub fn from_drawing(
        label: Label,
        drawing: &[[Vec<i32>; 2]],
        source_id: impl Into<String>,
    ) -> Result<Self> {
        let strokes = drawing
            .iter()
            .map(|[xs, ys]| Stroke::from_xy(xs, ys))
            .collect::<Result<Vec<_>>>()?;
        Self::new(label, strokes, source_id)
    }

    pub fn label(&self) -> &Label {
        &self.label
    }

    pub fn strokes(&self) -> &[Stroke] {
        &self.strokes
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn points(&self) -> impl Iterator<Item = &Point> {
        self.strokes.iter().flat_map(|s| s.points.iter())
    }

    pub fn point_count(&self) -> usize {
        self.strokes.iter().map(Stroke::len).sum()
    }

    pub fn to_drawing(&self) -> Vec<[Vec<i32>; 2]> {
        self.strokes.iter().map(Stroke::to_xy).collect()
    }

    pub fn with_label(mut self, label: Label) -> Self {
        self.label = label;
        self
    }
}

/// Encodes the strokes as pen events. The pen starts at `(0, 0)` and keeps its
/// position across strokes, so the first event of each stroke is a pen-up move
/// from the end of the previous stroke.
pub fn to_delta_sequence(strokes: &[Stroke]) -> Result<Vec<DeltaEvent>> {
    if strokes.is_empty() {
        return Err(Error::EmptySketch);
    }
    let mut prev = Point::new(0, 0);
    let mut events = Vec::with_capacity(strokes.iter().map(Stroke::len).sum());
    for stroke in strokes {
        for (i, &pt) in stroke.points().iter().enumerate() {
            let pen = u8::from(i > 0);
            events.push(DeltaEvent::new(pt.x - prev.x, pt.y - prev.y, pen));
            prev = pt;
        }
    }
    Ok(events)
}

/// Inverse of [`to_delta_sequence`]. Every `p = 0` event (and the first event,
/// whatever its flag) opens a new stroke.
pub fn from_delta_sequence(events: &[DeltaEvent]) -> Result<Vec<Stroke>> {
    if events.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut pos = Point::new(0, 0);
    let mut strokes: Vec<Vec<Point>> = Vec::new();
    for (i, ev) in events.iter().enumerate() {
        if ev.p > 1 {
            return Err(Error::InvalidSketch(format!(
                "pen flag must be 0 or 1, event {i} has {}",
                ev.p
            )));
        }
        pos = Point::new(pos.x + ev.dx, pos.y + ev.dy);
        match strokes.last_mut() {
            Some(current) if ev.p == 1 => current.push(pos),
            _ => strokes.push(vec![pos]),
        }
    }
    Ok(strokes
        .into_iter()
        .map(|points| Stroke { points })
        .collect())
}

/// Maps the sketch onto the canonical canvas.
///
/// The bounding box is translated to the origin and uniformly scaled so its
/// longer side spans 0–255; the shorter side is centred. Coordinates are
/// rounded to integers and consecutive duplicate points collapsed. The
/// mapping is idempotent.
pub fn normalize(sketch: &Sketch) -> Result<Sketch> {
    let mut pts = sketch.points();
    let first = pts.next().ok_or(Error::EmptySketch)?;
    let (mut min_x, mut max_x, mut min_y, mut max_y) = (first.x, first.x, first.y, first.y);
    for p in pts {
        min_x = min_x.min(p.x);
        max_x = max_x.max(p.x);
        min_y = min_y.min(p.y);
        max_y = max_y.max(p.y);
    }
    let width = i64::from(max_x) - i64::from(min_x);
    let height = i64::from(max_y) - i64::from(min_y);
    if width == 0 && height == 0 {
        return Err(Error::DegenerateSketch);
    }
    let long = width.max(height);
    // exact rational scaling, rounding half up
    let scale = move |offset: i64| (2 * offset * i64::from(CANVAS_MAX) + long) / (2 * long);
    let axis = |min: i32, extent: i64| {
        let pad = (i64::from(CANVAS_MAX) - scale(extent)) / 2;
        move |v: i32| (scale(i64::from(v) - i64::from(min)) + pad) as i32
    };
    let map_x = axis(min_x, width);
    let map_y = axis(min_y, height);

    let strokes = sketch
        .strokes
        .iter()
        .map(|stroke| {
            let mut points: Vec<Point> = Vec::with_capacity(stroke.len());
            for p in stroke.points() {
                let q = Point::new(map_x(p.x), map_y(p.y));
                if points.last() != Some(&q) {
                    points.push(q);
                }
            }
            Stroke { points }
        })
        .collect();
    Ok(Sketch {
        label: sketch.label.clone(),
        strokes,
        source_id: sketch.source_id.clone(),
    })
}
