//! Static collision geometry and the box-vs-segment separating-axis test.

use serde::{Deserialize, Serialize};

use super::Vec2;

/// Immobile line segment. `normal` is the unit left-hand normal of `a -> b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub a: Vec2,
    pub b: Vec2,
    pub normal: Vec2,
    min: Vec2,
    max: Vec2,
}

impl Segment {
    /// Returns `None` for a zero-length or non-finite segment.
    pub fn new(a: Vec2, b: Vec2) -> Option<Self> {
        if !a.is_finite() || !b.is_finite() {
            return None;
        }
        let dir = (b - a).try_normalize()?;
        Some(Self {
            a,
            b,
            normal: dir.perp(),
            min: Vec2::new(a.x.min(b.x), a.y.min(b.y)),
            max: Vec2::new(a.x.max(b.x), a.y.max(b.y)),
        })
    }

    pub fn min(&self) -> Vec2 {
        self.min
    }

    pub fn max(&self) -> Vec2 {
        self.max
    }

    fn axis_aligned(&self) -> bool {
        self.normal.x == 0.0 || self.normal.y == 0.0
    }
}

/// A set of segments sharing one material.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticGeometry {
    segments: Vec<Segment>,
    pub friction: f64,
    pub restitution: f64,
    /// Widest segment extent along x, used to bound range queries.
    max_width: f64,
}

impl StaticGeometry {
    pub fn new(mut segments: Vec<Segment>, friction: f64) -> Self {
        segments.sort_by(|l, r| l.min.x.total_cmp(&r.min.x));
        let max_width = segments
            .iter()
            .map(|s| s.max.x - s.min.x)
            .fold(0.0, f64::max);
        Self {
            segments,
            friction: friction.max(0.0),
            restitution: 0.0,
            max_width,
        }
    }

    /// Open chain through `points`; degenerate links are skipped.
    pub fn polyline(points: &[Vec2], friction: f64) -> Self {
        let segments = points
            .windows(2)
            .filter_map(|w| Segment::new(w[0], w[1]))
            .collect();
        Self::new(segments, friction)
    }

    /// Closed polygon through `points`.
    pub fn polygon(points: &[Vec2], friction: f64) -> Self {
        let n = points.len();
        let segments = (0..n)
            .filter_map(|i| Segment::new(points[i], points[(i + 1) % n]))
            .collect();
        Self::new(segments, friction)
    }

    /// Merge several geometries sharing the friction of the first.
    pub fn union(parts: impl IntoIterator<Item = StaticGeometry>) -> Self {
        let mut segments = Vec::new();
        let mut friction = None;
        for part in parts {
            friction.get_or_insert(part.friction);
            segments.extend(part.segments);
        }
        Self::new(segments, friction.unwrap_or(0.0))
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Indices of segments whose x-extent may intersect `[x0, x1]`.
    pub fn candidates(&self, x0: f64, x1: f64) -> std::ops::Range<usize> {
        let lo_key = x0 - self.max_width;
        let start = self.segments.partition_point(|s| s.min.x < lo_key);
        let end = self.segments.partition_point(|s| s.min.x <= x1);
        start..end.max(start)
    }
}

/// Result of the box/segment separating-axis test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Separation {
    /// Unit normal pointing from the segment toward the box.
    pub normal: Vec2,
    /// Signed distance along `normal`: negative when penetrating.
    pub distance: f64,
}

/// Separating-axis test between an axis-aligned square (center, half side)
/// and a segment. Candidate axes are x, y and the segment normal; the axis
/// with the smallest overlap wins.
pub fn box_segment(center: Vec2, half: f64, seg: &Segment) -> Separation {
    // Push-out distance along each direction of an axis; the smaller wins.
    let push_right = seg.max.x - (center.x - half);
    let push_left = (center.x + half) - seg.min.x;
    let push_up = seg.max.y - (center.y - half);
    let push_down = (center.y + half) - seg.min.y;

    let (mut best_overlap, mut best_normal) = if push_right <= push_left {
        (push_right, Vec2::X)
    } else {
        (push_left, -Vec2::X)
    };
    let (overlap_y, normal_y) = if push_up <= push_down {
        (push_up, Vec2::Y)
    } else {
        (push_down, -Vec2::Y)
    };
    if overlap_y < best_overlap {
        best_overlap = overlap_y;
        best_normal = normal_y;
    }

    if !seg.axis_aligned() {
        let n = seg.normal;
        let radius = half * (n.x.abs() + n.y.abs());
        let offset = (center - seg.a).dot(n);
        let overlap_n = radius - offset.abs();
        if overlap_n < best_overlap {
            best_overlap = overlap_n;
            best_normal = if offset >= 0.0 { n } else { -n };
        }
    }

    Separation {
        normal: best_normal,
        distance: -best_overlap,
    }
}
