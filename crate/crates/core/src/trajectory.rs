//! Time-based reference trajectories built from straight, arc and
//! linear-curvature blend segments.
//!
//! A trajectory is an arclength-parameterised planar path plus a piecewise
//! constant speed profile. The trailer reference is the same centreline,
//! lagging the tractor by the hitch offset `L_d + L_i` of path length.

use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::robust::reference_input;
use crate::vehicle::{ControlInput, VehicleParams, VehicleState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SegmentKind {
    Straight,
    Arc,
    Blend,
    /// Zero-length stop of fixed duration.
    Dwell,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSegment {
    pub kind: SegmentKind,
    /// Path length, m.
    pub length: f64,
    /// Signed curvature at the segment start, 1/m.
    pub curvature_start: f64,
    /// Signed curvature at the segment end, 1/m.
    pub curvature_end: f64,
    /// Reference speed along the segment, m/s.
    pub speed: f64,
    /// Dwell time, s. Only used by [`SegmentKind::Dwell`].
    pub dwell: f64,
}

impl PathSegment {
    pub fn straight(length: f64, speed: f64) -> Self {
        Self {
            kind: SegmentKind::Straight,
            length,
            curvature_start: 0.0,
            curvature_end: 0.0,
            speed,
            dwell: 0.0,
        }
    }

    /// Circular arc with signed curvature (positive turns left).
    pub fn arc(length: f64, curvature: f64, speed: f64) -> Self {
        Self {
            kind: SegmentKind::Arc,
            length,
            curvature_start: curvature,
            curvature_end: curvature,
            speed,
            dwell: 0.0,
        }
    }

    /// Linear curvature ramp (clothoid).
    pub fn blend(length: f64, curvature_start: f64, curvature_end: f64, speed: f64) -> Self {
        Self {
            kind: SegmentKind::Blend,
            length,
            curvature_start,
            curvature_end,
            speed,
            dwell: 0.0,
        }
    }

    pub fn dwell(duration: f64) -> Self {
        Self {
            kind: SegmentKind::Dwell,
            length: 0.0,
            curvature_start: 0.0,
            curvature_end: 0.0,
            speed: 0.0,
            dwell: duration,
        }
    }

    pub fn duration(&self) -> f64 {
        match self.kind {
            SegmentKind::Dwell => self.dwell,
            _ => self.length / self.speed,
        }
    }

    fn curvature_at(&self, s: f64) -> f64 {
        if self.length > 0.0 {
            self.curvature_start + (self.curvature_end - self.curvature_start) * s / self.length
        } else {
            self.curvature_start
        }
    }

    fn heading_change(&self, s: f64) -> f64 {
        if self.length > 0.0 {
            self.curvature_start * s
                + (self.curvature_end - self.curvature_start) * s * s / (2.0 * self.length)
        } else {
            0.0
        }
    }

    fn check(&self, index: usize) -> Result<()> {
        let finite = [
            self.length,
            self.curvature_start,
            self.curvature_end,
            self.speed,
            self.dwell,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Construction(format!(
                "segment {index}: non-finite field"
            )));
        }
        match self.kind {
            SegmentKind::Dwell => {
                if !(self.dwell > 0.0) {
                    return Err(Error::Construction(format!(
                        "segment {index}: dwell must last > 0 s"
                    )));
                }
            }
            _ => {
                if !(self.length > 0.0) {
                    return Err(Error::Construction(format!(
                        "segment {index}: length must be > 0"
                    )));
                }
                if !(self.speed > 0.0) {
                    return Err(Error::Construction(format!(
                        "segment {index}: moving segments need speed > 0 (use a dwell to stop)"
                    )));
                }
                if self.kind != SegmentKind::Blend && self.curvature_start != self.curvature_end {
                    return Err(Error::Construction(format!(
                        "segment {index}: only blends may change curvature"
                    )));
                }
                if self.kind == SegmentKind::Straight && self.curvature_start != 0.0 {
                    return Err(Error::Construction(format!(
                        "segment {index}: straight with curvature"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Planar pose on the path.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PathPose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub curvature: f64,
}

const QUAD_TOL: f64 = 1e-12;

// 10-point Gauss-Legendre nodes and weights on [-1, 1].
const GL_NODES: [f64; 5] = [
    0.148_874_338_981_631_2,
    0.433_395_394_129_247_2,
    0.679_409_568_299_024_4,
    0.865_063_366_688_984_5,
    0.973_906_528_517_171_7,
];
const GL_WEIGHTS: [f64; 5] = [
    0.295_524_224_714_752_9,
    0.269_266_719_309_996_4,
    0.219_086_362_515_982,
    0.149_451_349_150_580_6,
    0.066_671_344_308_688_1,
];

fn gauss_legendre<F: Fn(f64) -> (f64, f64)>(f: &F, a: f64, b: f64, panels: usize) -> (f64, f64) {
    let h = (b - a) / panels as f64;
    let (mut sx, mut sy) = (0.0, 0.0);
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        let half = h / 2.0;
        for (node, w) in GL_NODES.iter().zip(GL_WEIGHTS.iter()) {
            for sign in [-1.0, 1.0] {
                let (fx, fy) = f(mid + sign * node * half);
                sx += w * fx * half;
                sy += w * fy * half;
            }
        }
    }
    (sx, sy)
}

/// Displacement along a segment from its start to local arclength `s`.
fn displacement(seg: &PathSegment, heading0: f64, s: f64) -> (f64, f64) {
    if s == 0.0 {
        return (0.0, 0.0);
    }
    match seg.kind {
        SegmentKind::Dwell => (0.0, 0.0),
        SegmentKind::Straight => (s * heading0.cos(), s * heading0.sin()),
        SegmentKind::Arc if seg.curvature_start == 0.0 => (s * heading0.cos(), s * heading0.sin()),
        SegmentKind::Arc => {
            let k = seg.curvature_start;
            let th = heading0 + k * s;
            (
                (th.sin() - heading0.sin()) / k,
                -(th.cos() - heading0.cos()) / k,
            )
        }
        SegmentKind::Blend => {
            let f = |u: f64| {
                let th = heading0 + seg.heading_change(u);
                (th.cos(), th.sin())
            };
            let mut panels = 1;
            let mut prev = gauss_legendre(&f, 0.0, s, panels);
            loop {
                panels *= 2;
                let next = gauss_legendre(&f, 0.0, s, panels);
                let diff = (next.0 - prev.0).abs().max((next.1 - prev.1).abs());
                prev = next;
                if diff <= QUAD_TOL || panels >= 1 << 12 {
                    return prev;
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct SegmentStart {
    pose: PathPose,
    arclength: f64,
    time: f64,
}

/// Reference trajectory over `[0, T]`; closed trajectories repeat with period `T`.
#[derive(Debug, Clone)]
pub struct ReferenceTrajectory {
    segments: Vec<PathSegment>,
    starts: Vec<SegmentStart>,
    start_pose: PathPose,
    end_pose: PathPose,
    length: f64,
    duration: f64,
    closed: bool,
}

/// Reference state, input and kinematics at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceSample {
    pub t: f64,
    /// Reference plant state `z_r`.
    pub state: VehicleState,
    /// Reference input `u_r` in plant form `(delta_t, lambda, HP)`.
    pub input: ControlInput,
    /// Reference speed `v_r`, m/s.
    pub speed: f64,
    /// Tractor reference yaw rate, rad/s.
    pub yaw_rate_tractor: f64,
    /// Trailer reference yaw rate, rad/s.
    pub yaw_rate_trailer: f64,
    /// Tractor path curvature, 1/m.
    pub curvature: f64,
    pub segment: SegmentKind,
}

impl ReferenceTrajectory {
    pub fn new(start: PathPose, segments: Vec<PathSegment>, closed: bool) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::Construction("no segments".into()));
        }
        if ![start.x, start.y, start.heading]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(Error::Construction("non-finite start pose".into()));
        }
        for (i, seg) in segments.iter().enumerate() {
            seg.check(i)?;
        }
        let mut starts = Vec::with_capacity(segments.len());
        let mut pose = PathPose {
            curvature: segments[0].curvature_start,
            ..start
        };
        let (mut s, mut t) = (0.0, 0.0);
        for seg in &segments {
            pose.curvature = seg.curvature_start;
            starts.push(SegmentStart {
                pose,
                arclength: s,
                time: t,
            });
            let (dx, dy) = displacement(seg, pose.heading, seg.length);
            pose = PathPose {
                x: pose.x + dx,
                y: pose.y + dy,
                heading: pose.heading + seg.heading_change(seg.length),
                curvature: seg.curvature_end,
            };
            s += seg.length;
            t += seg.duration();
        }
        if !(s > 0.0) {
            return Err(Error::Construction(
                "trajectory has zero path length".into(),
            ));
        }
        let start_pose = starts[0].pose;
        if closed {
            let gap = (pose.x - start_pose.x).hypot(pose.y - start_pose.y);
            let turn = crate::angle::normalize(pose.heading - start_pose.heading);
            if gap > 1e-6 || turn.abs() > 1e-6 {
                return Err(Error::Construction(format!(
                    "closed trajectory does not close: position gap {gap:.3e} m, heading gap {turn:.3e} rad"
                )));
            }
        }
        Ok(Self {
            segments,
            starts,
            start_pose,
            end_pose: pose,
            length: s,
            duration: t,
            closed,
        })
    }

    pub fn segments(&self) -> &[PathSegment] {
        &self.segments
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn start_pose(&self) -> PathPose {
        self.start_pose
    }

    pub fn end_pose(&self) -> PathPose {
        self.end_pose
    }

    pub fn max_abs_curvature(&self) -> f64 {
        self.segments
            .iter()
            .map(|s| s.curvature_start.abs().max(s.curvature_end.abs()))
            .fold(0.0, f64::max)
    }

    /// Segment start times, s.
    pub fn segment_times(&self) -> Vec<f64> {
        self.starts.iter().map(|s| s.time).collect()
    }

    /// Pose at path arclength `s`. Closed paths wrap (heading stays unwrapped);
    /// open paths extend as straight lines beyond both ends.
    pub fn pose_at_arclength(&self, s: f64) -> PathPose {
        let (laps, s_local) = if self.closed {
            let laps = (s / self.length).floor();
            (laps, s - laps * self.length)
        } else {
            (0.0, s)
        };
        if s_local < 0.0 {
            let p = self.start_pose;
            return PathPose {
                x: p.x + s_local * p.heading.cos(),
                y: p.y + s_local * p.heading.sin(),
                heading: p.heading,
                curvature: 0.0,
            };
        }
        if s_local > self.length {
            let p = self.end_pose;
            let ds = s_local - self.length;
            return PathPose {
                x: p.x + ds * p.heading.cos(),
                y: p.y + ds * p.heading.sin(),
                curvature: 0.0,
                ..p
            };
        }
        let idx = self.segment_by_arclength(s_local);
        let seg = &self.segments[idx];
        let start = &self.starts[idx];
        let u = (s_local - start.arclength).clamp(0.0, seg.length);
        let (dx, dy) = displacement(seg, start.pose.heading, u);
        let net_turn = self.end_pose.heading - self.start_pose.heading;
        PathPose {
            x: start.pose.x + dx,
            y: start.pose.y + dy,
            heading: start.pose.heading + seg.heading_change(u) + laps * net_turn,
            curvature: seg.curvature_at(u),
        }
    }

    fn segment_by_arclength(&self, s: f64) -> usize {
        // last moving segment whose start arclength is <= s
        let mut idx = self
            .starts
            .partition_point(|st| st.arclength <= s)
            .saturating_sub(1);
        while idx > 0 && self.segments[idx].kind == SegmentKind::Dwell {
            idx -= 1;
        }
        if self.segments[idx].kind == SegmentKind::Dwell {
            if let Some(next) = self
                .segments
                .iter()
                .position(|seg| seg.kind != SegmentKind::Dwell)
            {
                idx = next;
            }
        }
        idx
    }

    /// Arclength travelled, current speed and segment index at time `t` (already wrapped).
    fn progress(&self, t: f64) -> (f64, f64, usize) {
        let idx = self
            .starts
            .partition_point(|st| st.time <= t)
            .saturating_sub(1);
        let seg = &self.segments[idx];
        let start = &self.starts[idx];
        match seg.kind {
            SegmentKind::Dwell => (start.arclength, 0.0, idx),
            _ => {
                let s = start.arclength + seg.speed * (t - start.time);
                (s.min(start.arclength + seg.length), seg.speed, idx)
            }
        }
    }

    fn wrap_time(&self, t: f64) -> Result<(f64, f64)> {
        if !t.is_finite() {
            return Err(Error::OutsideDomain {
                t,
                duration: self.duration,
            });
        }
        if self.closed {
            let laps = (t / self.duration).floor();
            Ok((laps, t - laps * self.duration))
        } else if (0.0..=self.duration).contains(&t) {
            Ok((0.0, t))
        } else {
            Err(Error::OutsideDomain {
                t,
                duration: self.duration,
            })
        }
    }
}

/// Samples the reference at time `t`.
///
/// `u_r` is zero in the steering channels wherever `v_r = 0`; such instants are
/// flagged by [`validate_trajectory`].
pub fn sample_reference(
    traj: &ReferenceTrajectory,
    t: f64,
    params: &VehicleParams,
) -> Result<ReferenceSample> {
    let (laps, tw) = traj.wrap_time(t)?;
    let (s_local, speed, idx) = traj.progress(tw);
    let s = s_local + laps * traj.length;
    let tractor = traj.pose_at_arclength(s);
    let trailer = traj.pose_at_arclength(s - params.hitch_offset());
    let yaw_rate_tractor = speed * tractor.curvature;
    let yaw_rate_trailer = speed * trailer.curvature;
    let input = if speed != 0.0 {
        reference_input(speed, yaw_rate_tractor, yaw_rate_trailer, params)?
    } else {
        ControlInput::default()
    };
    Ok(ReferenceSample {
        t,
        state: VehicleState {
            x_t: tractor.x,
            y_t: tractor.y,
            psi_t: tractor.heading,
            x_i: trailer.x,
            y_i: trailer.y,
            psi_i: trailer.heading,
            v: speed,
        },
        input,
        speed,
        yaw_rate_tractor,
        yaw_rate_trailer,
        curvature: tractor.curvature,
        segment: traj.segments[idx].kind,
    })
}

/// Closed figure-eight: two crossing straights joined by two opposite-signed
/// lobes of the given radius, with linear-curvature blends at every joint when
/// `blend_length > 0`. The path starts at the crossing point (origin).
pub fn build_figure_eight(
    straight_length: f64,
    radius: f64,
    speed: f64,
    blend_length: f64,
) -> Result<ReferenceTrajectory> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(invalid("radius", format!("must be > 0, got {radius}")));
    }
    if !(speed > 0.0 && speed.is_finite()) {
        return Err(invalid("speed", format!("must be > 0, got {speed}")));
    }
    if !(straight_length >= 0.0 && straight_length.is_finite()) {
        return Err(invalid(
            "straight_length",
            format!("must be >= 0, got {straight_length}"),
        ));
    }
    if !(blend_length >= 0.0 && blend_length.is_finite()) {
        return Err(invalid(
            "blend_length",
            format!("must be >= 0, got {blend_length}"),
        ));
    }
    let k = 1.0 / radius;
    let half_straight = straight_length / 2.0;
    let blend_turn = k * blend_length / 2.0;

    // Half lobe: straight, blend into -k, then arc until heading reaches -pi/2.
    // By mirror symmetry the lobe closes onto the second diagonal when that
    // point lies on the x axis.
    let half_lobe_y = |alpha: f64| -> f64 {
        let arc_angle = alpha + PI / 2.0 - blend_turn;
        let mut y = half_straight * alpha.sin();
        let mut heading = alpha;
        if blend_length > 0.0 {
            let b = PathSegment::blend(blend_length, 0.0, -k, speed);
            y += displacement(&b, heading, blend_length).1;
            heading -= blend_turn;
        }
        let a = PathSegment::arc(arc_angle / k, -k, speed);
        y + displacement(&a, heading, arc_angle / k).1
    };

    let lo_bound = (blend_turn - PI / 2.0).max(0.0) + 1e-12;
    let hi_bound = PI / 2.0;
    let (mut lo, mut hi) = (lo_bound, hi_bound);
    let (f_lo, f_hi) = (half_lobe_y(lo), half_lobe_y(hi));
    let alpha = if f_hi.abs() <= 1e-14 {
        hi
    } else if f_lo.signum() == f_hi.signum() || blend_turn >= PI / 2.0 + hi_bound {
        return Err(Error::Construction(format!(
            "blend length {blend_length} m is too long for radius {radius} m and straight length {straight_length} m"
        )));
    } else {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if half_lobe_y(mid).signum() == f_lo.signum() {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= f64::EPSILON * hi {
                break;
            }
        }
        0.5 * (lo + hi)
    };
    let arc_angle = alpha + PI / 2.0 - blend_turn;
    if !(arc_angle > 0.0) {
        return Err(Error::Construction(format!(
            "blend length {blend_length} m leaves no arc for radius {radius} m"
        )));
    }
    let arc_length = 2.0 * arc_angle / k;

    let mut segs = Vec::new();
    let push_lobe = |segs: &mut Vec<PathSegment>, curvature: f64| {
        if blend_length > 0.0 {
            segs.push(PathSegment::blend(blend_length, 0.0, curvature, speed));
        }
        segs.push(PathSegment::arc(arc_length, curvature, speed));
        if blend_length > 0.0 {
            segs.push(PathSegment::blend(blend_length, curvature, 0.0, speed));
        }
    };
    if half_straight > 0.0 {
        segs.push(PathSegment::straight(half_straight, speed));
    }
    push_lobe(&mut segs, -k);
    if straight_length > 0.0 {
        segs.push(PathSegment::straight(straight_length, speed));
    }
    push_lobe(&mut segs, k);
    if half_straight > 0.0 {
        segs.push(PathSegment::straight(half_straight, speed));
    }
    ReferenceTrajectory::new(
        PathPose {
            x: 0.0,
            y: 0.0,
            heading: alpha,
            curvature: 0.0,
        },
        segs,
        true,
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationOptions {
    /// Require continuous curvature at every joint.
    pub require_c2: bool,
    /// Largest tolerated curvature jump at a joint, 1/m.
    pub curvature_jump_tol: f64,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self {
            require_c2: true,
            curvature_jump_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ValidationIssue {
    /// `v_r = 0` and both reference yaw rates are zero: the error model loses controllability.
    ControllabilityLoss { t_start: f64, t_end: f64 },
    /// `v_r = 0`: feedforward inputs are singular.
    ZeroSpeed { t_start: f64, t_end: f64 },
    /// Speed-model gain is zero.
    ZeroSpeedGain,
    /// Curvature discontinuity at a segment joint.
    CurvatureJump { t: f64, jump: f64 },
}

impl std::fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::ControllabilityLoss { t_start, t_end } => write!(
                f,
                "controllability lost on [{t_start:.3}, {t_end:.3}] s: reference speed and both yaw rates are zero"
            ),
            Self::ZeroSpeed { t_start, t_end } => write!(
                f,
                "reference speed is zero on [{t_start:.3}, {t_end:.3}] s: feedforward needs v_r != 0"
            ),
            Self::ZeroSpeedGain => write!(f, "speed-model gain K is zero: feedforward needs K != 0"),
            Self::CurvatureJump { t, jump } => {
                write!(f, "curvature jumps by {jump:.6} 1/m at t = {t:.3} s (trajectory is not twice differentiable)")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.issues.is_empty()
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.issues.is_empty() {
            return writeln!(f, "trajectory OK");
        }
        for issue in &self.issues {
            writeln!(f, "FAIL: {issue}")?;
        }
        Ok(())
    }
}

pub fn validate_trajectory(
    traj: &ReferenceTrajectory,
    params: &VehicleParams,
    opts: &ValidationOptions,
) -> ValidationReport {
    let mut issues = Vec::new();
    for (seg, start) in traj.segments.iter().zip(&traj.starts) {
        if seg.kind == SegmentKind::Dwell || seg.speed == 0.0 {
            let (t_start, t_end) = (start.time, start.time + seg.duration());
            issues.push(ValidationIssue::ControllabilityLoss { t_start, t_end });
            issues.push(ValidationIssue::ZeroSpeed { t_start, t_end });
        }
    }
    if params.speed_gain == 0.0 {
        issues.push(ValidationIssue::ZeroSpeedGain);
    }
    if opts.require_c2 {
        let moving: Vec<usize> = (0..traj.segments.len())
            .filter(|&i| traj.segments[i].kind != SegmentKind::Dwell)
            .collect();
        let mut joints: Vec<(usize, usize)> = moving.windows(2).map(|w| (w[0], w[1])).collect();
        if traj.closed && moving.len() > 1 {
            joints.push((moving[moving.len() - 1], moving[0]));
        }
        for (a, b) in joints {
            let jump = (traj.segments[b].curvature_start - traj.segments[a].curvature_end).abs();
            if jump > opts.curvature_jump_tol {
                let t = if b == moving[0] && a > b {
                    traj.duration
                } else {
                    traj.starts[b].time
                };
                issues.push(ValidationIssue::CurvatureJump { t, jump });
            }
        }
    }
    ValidationReport { issues }
}
