//! Piecewise straight/arc track geometry.
//!
//! Arc length `s` runs along the road centerline. `lateral` is the signed
//! offset from the centerline, positive to the left of the travel direction.
//! Lanes are numbered from the left: on a three-lane road lane 1 is the left
//! lane, lane 2 the middle lane, lane 3 the right lane.

use thiserror::Error;

use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point2<T> {
    pub x: T,
    pub y: T,
}

impl<T: Real> Point2<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    pub fn dist(self, other: Self) -> T {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Segment<T> {
    Straight {
        length: T,
    },
    /// `angle` is the signed turn in radians, positive = left turn.
    Arc {
        radius: T,
        angle: T,
    },
}

impl<T: Real> Segment<T> {
    pub fn length(&self) -> T {
        match *self {
            Segment::Straight { length } => length,
            Segment::Arc { radius, angle } => radius * angle.abs(),
        }
    }

    /// Signed curvature, positive for left turns.
    pub fn curvature(&self) -> T {
        match *self {
            Segment::Straight { .. } => T::zero(),
            Segment::Arc { radius, angle } => angle.signum() / radius,
        }
    }

    fn turn(&self) -> T {
        match *self {
            Segment::Straight { .. } => T::zero(),
            Segment::Arc { angle, .. } => angle,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrackError {
    #[error("track has no segments")]
    Empty,
    #[error("segment {index}: {reason}")]
    BadSegment { index: usize, reason: String },
    #[error("lane_count must be positive")]
    NoLanes,
    #[error("road_width {road_width} is narrower than {lane_count} lanes of {lane_width}")]
    RoadTooNarrow {
        road_width: f64,
        lane_count: usize,
        lane_width: f64,
    },
    #[error("track is flagged closed but ends {gap:.6} m / {heading_gap:.3e} rad away from its start")]
    NotClosed { gap: f64, heading_gap: f64 },
    #[error("s = {s} is outside the open course [0, {length}]")]
    OutOfBounds { s: f64, length: f64 },
}

/// Declarative description of a track.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackSpec<T> {
    pub segments: Vec<Segment<T>>,
    pub lane_count: usize,
    pub lane_width: T,
    pub road_width: T,
    /// Closed loops wrap `s` modulo the total length.
    pub closed: bool,
}

fn oval_segments<T: Real>(length: T, radius: T) -> Vec<Segment<T>> {
    let pi = T::PI();
    let two = T::lit(2.0);
    let straight = (length - two * pi * radius) / two;
    let arc = Segment::Arc { radius, angle: pi };
    vec![
        Segment::Straight { length: straight },
        arc,
        Segment::Straight { length: straight },
        arc,
    ]
}

impl<T: Real> TrackSpec<T> {
    /// A closed loop of `length` meters built from two straights and two
    /// 180 degree left turns of the given radius.
    pub fn oval(length: T, radius: T) -> Self {
        Self {
            segments: oval_segments(length, radius),
            ..Self::default()
        }
    }

    pub fn straight(length: T) -> Self {
        Self {
            segments: vec![Segment::Straight { length }],
            closed: false,
            ..Self::default()
        }
    }
}

impl<T: Real> Default for TrackSpec<T> {
    /// Three 4 m lanes on a 13 m road, 4 km oval with 200 m turns.
    fn default() -> Self {
        Self {
            segments: oval_segments(T::lit(4000.0), T::lit(200.0)),
            lane_count: 3,
            lane_width: T::lit(4.0),
            road_width: T::lit(13.0),
            closed: true,
        }
    }
}

/// Pose of the centerline at some arc length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose<T> {
    /// Tangent heading, unwrapped and continuous along the track.
    pub heading: T,
    pub curvature: T,
    pub position: Point2<T>,
}

#[derive(Debug, Clone)]
struct SegmentFrame<T> {
    seg: Segment<T>,
    s0: T,
    len: T,
    start: Point2<T>,
    heading0: T,
}

/// A validated track with cached segment frames.
#[derive(Debug, Clone)]
pub struct Track<T> {
    spec: TrackSpec<T>,
    frames: Vec<SegmentFrame<T>>,
    total: T,
}

#[inline]
fn normal<T: Real>(heading: T) -> Point2<T> {
    Point2::new(-heading.sin(), heading.cos())
}

impl<T: Real> Track<T> {
    pub fn new(spec: TrackSpec<T>) -> Result<Self, TrackError> {
        if spec.segments.is_empty() {
            return Err(TrackError::Empty);
        }
        if spec.lane_count == 0 {
            return Err(TrackError::NoLanes);
        }
        let needed = T::from_usize(spec.lane_count).unwrap() * spec.lane_width;
        if !(spec.lane_width > T::zero()) || !(spec.road_width >= needed) {
            return Err(TrackError::RoadTooNarrow {
                road_width: spec.road_width.as_f64(),
                lane_count: spec.lane_count,
                lane_width: spec.lane_width.as_f64(),
            });
        }

        let mut frames = Vec::with_capacity(spec.segments.len());
        let mut s0 = T::zero();
        let mut pos = Point2::new(T::zero(), T::zero());
        let mut heading = T::zero();
        for (index, seg) in spec.segments.iter().enumerate() {
            match *seg {
                Segment::Straight { length } => {
                    if !(length > T::zero()) || !length.is_finite() {
                        return Err(TrackError::BadSegment {
                            index,
                            reason: format!("straight length must be positive, got {length}"),
                        });
                    }
                }
                Segment::Arc { radius, angle } => {
                    if !(radius > T::zero()) || !radius.is_finite() {
                        return Err(TrackError::BadSegment {
                            index,
                            reason: format!("arc radius must be positive, got {radius}"),
                        });
                    }
                    if angle == T::zero() || !angle.is_finite() {
                        return Err(TrackError::BadSegment {
                            index,
                            reason: "arc angle must be nonzero".into(),
                        });
                    }
                }
            }
            let frame = SegmentFrame {
                seg: *seg,
                s0,
                len: seg.length(),
                start: pos,
                heading0: heading,
            };
            pos = frame.point_at(frame.len);
            heading = heading + seg.turn();
            s0 = s0 + frame.len;
            frames.push(frame);
        }

        if spec.closed {
            let gap = pos.dist(Point2::new(T::zero(), T::zero())).as_f64();
            let turns = heading.as_f64() / std::f64::consts::TAU;
            let heading_gap = (turns - turns.round()).abs() * std::f64::consts::TAU;
            let rel = (T::epsilon().as_f64() * 1e3).max(1e-9);
            if gap > rel * s0.as_f64().max(1.0) || heading_gap > rel {
                return Err(TrackError::NotClosed { gap, heading_gap });
            }
        }

        Ok(Self {
            spec,
            frames,
            total: s0,
        })
    }

    pub fn spec(&self) -> &TrackSpec<T> {
        &self.spec
    }

    pub fn total_length(&self) -> T {
        self.total
    }

    pub fn is_closed(&self) -> bool {
        self.spec.closed
    }

    pub fn lane_count(&self) -> usize {
        self.spec.lane_count
    }

    pub fn lane_width(&self) -> T {
        self.spec.lane_width
    }

    pub fn road_width(&self) -> T {
        self.spec.road_width
    }

    /// Wrap `s` onto the track. Closed loops wrap modulo the total length;
    /// open courses reject anything outside `[0, total]`.
    pub fn wrap_s(&self, s: T) -> Result<T, TrackError> {
        if self.spec.closed {
            let w = s % self.total;
            Ok(if w < T::zero() { w + self.total } else { w })
        } else if s >= T::zero() && s <= self.total {
            Ok(s)
        } else {
            Err(TrackError::OutOfBounds {
                s: s.as_f64(),
                length: self.total.as_f64(),
            })
        }
    }

    /// Shortest signed along-track distance from `from` to `to`. Positive
    /// when `to` is ahead of `from`.
    pub fn signed_gap(&self, from: T, to: T) -> T {
        let d = to - from;
        if !self.spec.closed {
            return d;
        }
        let half = self.total / T::lit(2.0);
        let mut w = d % self.total;
        if w >= half {
            w = w - self.total;
        } else if w < -half {
            w = w + self.total;
        }
        w
    }

    fn frame_index(&self, s: T) -> usize {
        let i = self.frames.partition_point(|f| f.s0 <= s);
        i.saturating_sub(1)
    }

    /// Centerline pose at arc length `s`.
    pub fn pose(&self, s: T) -> Result<Pose<T>, TrackError> {
        let s = self.wrap_s(s)?;
        let f = &self.frames[self.frame_index(s)];
        let local = s - f.s0;
        Ok(Pose {
            heading: f.heading_at(local),
            curvature: f.seg.curvature(),
            position: f.point_at(local),
        })
    }

    /// World position and tangent heading of a point at `(s, lateral)`.
    pub fn to_world(&self, s: T, lateral: T) -> Result<(Point2<T>, T), TrackError> {
        let p = self.pose(s)?;
        let n = normal(p.heading);
        Ok((
            Point2::new(p.position.x + n.x * lateral, p.position.y + n.y * lateral),
            p.heading,
        ))
    }

    /// Project a world point back onto the track near `hint_s`.
    /// Returns `(s, lateral)`; `s` is wrapped for closed loops.
    pub fn project(&self, point: Point2<T>, hint_s: T) -> (T, T) {
        let n = self.frames.len();
        let hint = self
            .wrap_s(hint_s)
            .unwrap_or_else(|_| if hint_s < T::zero() { T::zero() } else { self.total });
        let i = self.frame_index(hint);
        let mut candidates = [i; 3];
        let mut count = 1;
        if self.spec.closed || i > 0 {
            candidates[count] = (i + n - 1) % n;
            count += 1;
        }
        if self.spec.closed || i + 1 < n {
            candidates[count] = (i + 1) % n;
            count += 1;
        }

        // Prefer a segment whose local station lies inside it; otherwise the
        // one that needs the least clamping.
        let mut best: Option<(T, T, T, T)> = None; // (overshoot, |lat|, s, lat)
        for &k in &candidates[..count] {
            let f = &self.frames[k];
            let (local, lat) = f.project(point);
            let overshoot = if local < T::zero() {
                -local
            } else if local > f.len {
                local - f.len
            } else {
                T::zero()
            };
            let local = local.clamp_to(T::zero(), f.len);
            let cand = (overshoot, lat.abs(), f.s0 + local, lat);
            best = match best {
                None => Some(cand),
                Some(b) if (cand.0, cand.1) < (b.0, b.1) => Some(cand),
                keep => keep,
            };
        }
        let (_, _, s, lat) = best.expect("at least one candidate");
        let s = if self.spec.closed && s >= self.total {
            s - self.total
        } else {
            s
        };
        (s, lat)
    }

    /// Lateral position of the center of lane `lane` (1-based, from the left).
    pub fn lane_center(&self, lane: usize) -> T {
        let mid = T::from_usize(self.spec.lane_count + 1).unwrap() / T::lit(2.0);
        (mid - T::from_usize(lane).unwrap()) * self.spec.lane_width
    }

    /// The lane whose band contains `lateral`, clamped to the outer lanes.
    pub fn lane_of(&self, lateral: T) -> usize {
        let n = self.spec.lane_count;
        let mid = T::from_usize(n + 1).unwrap() / T::lit(2.0);
        let idx = (mid - lateral / self.spec.lane_width).round();
        let idx = idx.to_i64().unwrap_or(1);
        idx.clamp(1, n as i64) as usize
    }

    /// Bit set of the lanes (bit `i-1` for lane `i`) whose bands strictly
    /// overlap the lateral interval `[lateral - half_width, lateral + half_width]`.
    pub fn lanes_touched(&self, lateral: T, half_width: T) -> u32 {
        let lo = lateral - half_width;
        let hi = lateral + half_width;
        let half_lane = self.spec.lane_width / T::lit(2.0);
        let mut mask = 0u32;
        for lane in 1..=self.spec.lane_count.min(32) {
            let c = self.lane_center(lane);
            if hi > c - half_lane && lo < c + half_lane {
                mask |= 1 << (lane - 1);
            }
        }
        mask
    }
}

impl<T: Real> SegmentFrame<T> {
    fn heading_at(&self, local: T) -> T {
        self.heading0 + self.seg.curvature() * local
    }

    fn center(&self) -> Point2<T> {
        let k = self.seg.curvature();
        let n = normal(self.heading0);
        Point2::new(self.start.x + n.x / k, self.start.y + n.y / k)
    }

    fn point_at(&self, local: T) -> Point2<T> {
        match self.seg {
            Segment::Straight { .. } => {
                let (sin, cos) = self.heading0.sin_cos();
                Point2::new(self.start.x + cos * local, self.start.y + sin * local)
            }
            Segment::Arc { .. } => {
                let k = self.seg.curvature();
                let c = self.center();
                let n = normal(self.heading_at(local));
                Point2::new(c.x - n.x / k, c.y - n.y / k)
            }
        }
    }

    /// Local station and lateral offset of `p` relative to this segment.
    fn project(&self, p: Point2<T>) -> (T, T) {
        match self.seg {
            Segment::Straight { .. } => {
                let (sin, cos) = self.heading0.sin_cos();
                let dx = p.x - self.start.x;
                let dy = p.y - self.start.y;
                (dx * cos + dy * sin, -dx * sin + dy * cos)
            }
            Segment::Arc { angle, .. } => {
                let k = self.seg.curvature();
                let c = self.center();
                let rx = p.x - c.x;
                let ry = p.y - c.y;
                let r = rx.hypot(ry);
                let (theta, lat) = if k > T::zero() {
                    (rx.atan2(-ry), k.recip() - r)
                } else {
                    ((-rx).atan2(ry), r + k.recip())
                };
                let half = angle / T::lit(2.0);
                let turned = half + (theta - self.heading0 - half).wrap_angle();
                (turned / k, lat)
            }
        }
    }
}

/// Centerline pose at arc length `s`. Free-function form of [`Track::pose`].
pub fn track_pose<T: Real>(track: &Track<T>, s: T) -> Result<Pose<T>, TrackError> {
    track.pose(s)
}
