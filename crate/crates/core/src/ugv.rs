//! Differential-drive path tracking with per-wheel dual-rate speed loops.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loops::{LoopSetup, Strategy};
use crate::simulation::{LoopRunner, Nonlinearity, Sinusoid, TimeSeries, DIVERGENCE_LIMIT};

pub fn wrap_angle(a: f64) -> f64 {
    if a > -std::f64::consts::PI && a <= std::f64::consts::PI {
        return a;
    }
    let w = (a + std::f64::consts::PI).rem_euclid(2.0 * std::f64::consts::PI) - std::f64::consts::PI;
    if w <= -std::f64::consts::PI {
        w + 2.0 * std::f64::consts::PI
    } else {
        w
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Pose { x, y, heading: wrap_angle(heading) }
    }

    /// Exact unicycle motion for constant wheel speeds over `h`.
    pub fn integrate(&self, omega_left: f64, omega_right: f64, wheel_radius: f64, track: f64, h: f64) -> Pose {
        let v = wheel_radius * (omega_right + omega_left) / 2.0;
        let w = wheel_radius * (omega_right - omega_left) / track;
        let th = self.heading;
        if w.abs() < 1e-12 {
            Pose::new(self.x + v * h * th.cos(), self.y + v * h * th.sin(), th)
        } else {
            let th2 = th + w * h;
            Pose::new(self.x + v / w * (th2.sin() - th.sin()), self.y - v / w * (th2.cos() - th.cos()), th2)
        }
    }
}

/// Single stroke over an H outline: up the left leg, across the top, down the right leg.
pub fn h_path(leg: f64, width: f64, spacing: f64) -> Result<Vec<[f64; 2]>> {
    if !(leg > 0.0 && width > 0.0 && spacing > 0.0) {
        return Err(Error::Scenario("path dimensions must be positive".into()));
    }
    let corners = [[0.0, 0.0], [0.0, leg], [width, leg], [width, 0.0]];
    let mut pts = vec![corners[0]];
    for c in corners.windows(2) {
        let len = ((c[1][0] - c[0][0]).powi(2) + (c[1][1] - c[0][1]).powi(2)).sqrt();
        let k = ((len / spacing).round() as usize).max(1);
        for i in 1..=k {
            let f = i as f64 / k as f64;
            pts.push([c[0][0] + f * (c[1][0] - c[0][0]), c[0][1] + f * (c[1][1] - c[0][1])]);
        }
    }
    Ok(pts)
}

/// Polyline with cumulative arc length.
#[derive(Clone, Debug)]
pub struct Path {
    pub points: Vec<[f64; 2]>,
    arc: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection {
    pub arc_length: f64,
    pub distance: f64,
    pub point: [f64; 2],
}

impl Path {
    pub fn new(points: Vec<[f64; 2]>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Scenario("empty path".into()));
        }
        let mut arc = vec![0.0];
        for w in points.windows(2) {
            let d = ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt();
            arc.push(arc.last().unwrap() + d);
        }
        Ok(Path { points, arc })
    }

    pub fn length(&self) -> f64 {
        *self.arc.last().unwrap()
    }

    pub fn end(&self) -> [f64; 2] {
        *self.points.last().unwrap()
    }

    /// Closest point on the polyline whose arc length is at least `from`.
    pub fn project_from(&self, x: f64, y: f64, from: f64) -> Projection {
        let mut best = Projection { arc_length: 0.0, distance: f64::INFINITY, point: self.points[0] };
        if self.points.len() == 1 {
            best.distance = ((x - self.points[0][0]).powi(2) + (y - self.points[0][1]).powi(2)).sqrt();
            return best;
        }
        for i in 0..self.points.len() - 1 {
            if self.arc[i + 1] < from {
                continue;
            }
            let (a, b) = (self.points[i], self.points[i + 1]);
            let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
            let seg = self.arc[i + 1] - self.arc[i];
            let mut f = if seg > 0.0 { ((x - a[0]) * dx + (y - a[1]) * dy) / (seg * seg) } else { 0.0 };
            f = f.clamp(0.0, 1.0);
            if self.arc[i] + f * seg < from && seg > 0.0 {
                f = (from - self.arc[i]) / seg;
            }
            let p = [a[0] + f * dx, a[1] + f * dy];
            let d = ((x - p[0]).powi(2) + (y - p[1]).powi(2)).sqrt();
            if d < best.distance {
                best = Projection { arc_length: self.arc[i] + f * seg, distance: d, point: p };
            }
        }
        best
    }

    pub fn project(&self, x: f64, y: f64) -> Projection {
        self.project_from(x, y, 0.0)
    }

    /// Point at arc length `s`, clamped to the ends.
    pub fn at(&self, s: f64) -> [f64; 2] {
        if s <= 0.0 {
            return self.points[0];
        }
        if s >= self.length() {
            return self.end();
        }
        let i = self.arc.partition_point(|a| *a <= s) - 1;
        let seg = self.arc[i + 1] - self.arc[i];
        let f = (s - self.arc[i]) / seg;
        let (a, b) = (self.points[i], self.points[i + 1]);
        [a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1])]
    }
}

/// Point one look-ahead of arc length beyond the closest-point projection.
pub fn pursuit_target(pose: &Pose, path: &[[f64; 2]], lookahead: f64) -> Result<[f64; 2]> {
    let p = Path::new(path.to_vec())?;
    let proj = p.project(pose.x, pose.y);
    Ok(p.at(proj.arc_length + lookahead))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WheelReferences {
    pub omega_left: f64,
    pub omega_right: f64,
    pub curvature: f64,
}

/// Wheel speeds that steer along the arc through `target` at constant linear speed.
pub fn pursuit_arc(pose: &Pose, target: [f64; 2], linear_speed: f64, track_width: f64, wheel_radius: f64) -> WheelReferences {
    let (dx, dy) = (target[0] - pose.x, target[1] - pose.y);
    let l2 = dx * dx + dy * dy;
    let kappa = if l2 < 1e-18 {
        0.0
    } else {
        let y_local = -pose.heading.sin() * dx + pose.heading.cos() * dy;
        2.0 * y_local / l2
    };
    WheelReferences {
        omega_left: linear_speed * (1.0 - kappa * track_width / 2.0) / wheel_radius,
        omega_right: linear_speed * (1.0 + kappa * track_width / 2.0) / wheel_radius,
        curvature: kappa,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Wheel {
    Left,
    Right,
    Both,
}

#[derive(Clone, Debug)]
pub struct UgvScenario {
    pub path: Vec<[f64; 2]>,
    pub lookahead: f64,
    pub linear_speed: f64,
    pub wheel_radius: f64,
    pub track_width: f64,
    pub setup: LoopSetup,
    pub strategy: Strategy,
    pub disturbance: Option<Sinusoid>,
    pub disturbed_wheel: Wheel,
    pub nonlinearity: Option<Nonlinearity>,
    pub horizon: f64,
    /// Defaults to the first waypoint facing the second.
    pub start: Option<Pose>,
    /// Wheels are commanded to zero once the robot is this close to the final waypoint.
    pub stop_radius: f64,
}

impl UgvScenario {
    pub fn validate(&self) -> Result<()> {
        if self.path.is_empty() {
            return Err(Error::Scenario("empty path".into()));
        }
        if !(self.lookahead > 0.0 && self.linear_speed > 0.0 && self.wheel_radius > 0.0 && self.track_width > 0.0) {
            return Err(Error::Scenario("look-ahead, speed, wheel radius and track must be positive".into()));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::Scenario("horizon must be positive".into()));
        }
        Ok(())
    }

    fn start_pose(&self) -> Pose {
        self.start.unwrap_or_else(|| {
            let a = self.path[0];
            let heading = match self.path.get(1) {
                Some(b) => (b[1] - a[1]).atan2(b[0] - a[0]),
                None => 0.0,
            };
            Pose::new(a[0], a[1], heading)
        })
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub heading: Vec<f64>,
    pub path_error: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct UgvRun {
    pub strategy: Strategy,
    pub trajectory: Trajectory,
    pub left: TimeSeries,
    pub right: TimeSeries,
    pub rms_path_error: f64,
    pub max_path_error: f64,
    /// Encoder samples taken on each wheel.
    pub sensor_reads: usize,
    pub finished_at: Option<f64>,
    pub divergent_at: Option<f64>,
}

pub fn run_ugv(sc: &UgvScenario) -> Result<UgvRun> {
    sc.validate()?;
    let path = Path::new(sc.path.clone())?;
    let mut left = LoopRunner::new(&sc.setup, sc.strategy, sc.nonlinearity, false)?;
    let mut right = LoopRunner::new(&sc.setup, sc.strategy, sc.nonlinearity, false)?;
    let h = sc.setup.fine_period();
    let steps = (sc.horizon / h).round() as usize;
    let mut pose = sc.start_pose();
    let mut progress = 0.0;
    let mut refs = WheelReferences { omega_left: 0.0, omega_right: 0.0, curvature: 0.0 };
    let mut finished_at = None;
    let mut divergent_at = None;
    let mut traj = Trajectory::default();
    let (mut ls, mut rs) = (TimeSeries::default(), TimeSeries::default());
    let mut sq = 0.0;
    let mut max_err: f64 = 0.0;
    for k in 0..steps {
        let t = k as f64 * h;
        let proj = path.project_from(pose.x, pose.y, (progress - sc.lookahead).max(0.0));
        progress = f64::max(progress, proj.arc_length);
        traj.t.push(t);
        traj.x.push(pose.x);
        traj.y.push(pose.y);
        traj.heading.push(pose.heading);
        let err = path.project(pose.x, pose.y).distance;
        traj.path_error.push(err);
        sq += err * err;
        max_err = max_err.max(err);
        if left.is_control_instant() {
            let end = path.end();
            if finished_at.is_none() && ((pose.x - end[0]).powi(2) + (pose.y - end[1]).powi(2)).sqrt() < sc.stop_radius {
                finished_at = Some(t);
            }
            refs = if finished_at.is_some() {
                WheelReferences { omega_left: 0.0, omega_right: 0.0, curvature: 0.0 }
            } else {
                pursuit_arc(&pose, path.at(progress + sc.lookahead), sc.linear_speed, sc.track_width, sc.wheel_radius)
            };
        }
        let d = sc.disturbance.map_or(0.0, |d| d.at(t));
        let (dl, dr) = match sc.disturbed_wheel {
            Wheel::Left => (d, 0.0),
            Wheel::Right => (0.0, d),
            Wheel::Both => (d, d),
        };
        let a = left.advance(refs.omega_left, dl);
        let b = right.advance(refs.omega_right, dr);
        for (s, r, dd, ts) in [(&a, refs.omega_left, dl, &mut ls), (&b, refs.omega_right, dr, &mut rs)] {
            ts.t.push(t);
            ts.r.push(r);
            ts.y.push(s.y);
            ts.u.push(s.u);
            ts.d.push(dd);
        }
        if !(a.y.is_finite() && b.y.is_finite()) || a.y.abs().max(b.y.abs()) > DIVERGENCE_LIMIT {
            divergent_at = Some(t);
            break;
        }
        // the measured wheel speed is the wheel speed
        pose = pose.integrate(a.y, b.y, sc.wheel_radius, sc.track_width, h);
    }
    let n = traj.t.len().max(1);
    Ok(UgvRun {
        strategy: sc.strategy,
        trajectory: traj,
        left: ls,
        right: rs,
        rms_path_error: (sq / n as f64).sqrt(),
        max_path_error: max_err,
        sensor_reads: left.sensor_reads(),
        finished_at,
        divergent_at,
    })
}
