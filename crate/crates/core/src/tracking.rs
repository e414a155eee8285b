//! Constant-velocity Kalman tracking of obstacle centroids and rigid forward
//! propagation of their member clouds over the planning horizon.
//!
//! The filter runs one decoupled (position, velocity) filter per axis; the
//! constant-velocity model has no cross-axis coupling, so the 6×6 covariance is
//! block diagonal and stored as three 2×2 blocks.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::geometry::{Point3, PointCloud};

/// Per-axis 2×2 covariance `[[p_pp, p_pv], [p_vp, p_vv]]`.
pub type AxisCov = [[f64; 2]; 2];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KalmanConfig {
    /// White-acceleration process noise standard deviation, m/s².
    pub sigma_accel: f64,
    /// Centroid measurement noise standard deviation, m.
    pub sigma_meas: f64,
    pub init_pos_var: f64,
    pub init_vel_var: f64,
}

impl Default for KalmanConfig {
    fn default() -> Self {
        Self {
            sigma_accel: 2.0,
            sigma_meas: 0.05,
            init_pos_var: 1.0,
            init_vel_var: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleTrack {
    pub id: u64,
    pub position: Point3,
    pub velocity: Point3,
    pub covariance: [AxisCov; 3],
    pub member_cloud: PointCloud,
    /// Time the state estimate refers to.
    pub state_time: f64,
    pub last_update_time: f64,
    pub last_measurement: Point3,
    /// Number of measurements absorbed so far.
    pub updates: u32,
    /// Recent association outcomes, `true` for a hit; newest at the back.
    pub miss_history: VecDeque<bool>,
}

impl ObstacleTrack {
    /// Starts a track at its first detection: zero velocity, wide prior.
    pub fn new(id: u64, centroid: Point3, members: PointCloud, time: f64, cfg: &KalmanConfig) -> Self {
        let block = [[cfg.init_pos_var, 0.0], [0.0, cfg.init_vel_var]];
        let mut miss_history = VecDeque::new();
        miss_history.push_back(true);
        Self {
            id,
            position: centroid,
            velocity: Point3::default(),
            covariance: [block; 3],
            member_cloud: members,
            state_time: time,
            last_update_time: time,
            last_measurement: centroid,
            updates: 1,
            miss_history,
        }
    }

    pub fn speed(&self) -> f64 {
        self.velocity.norm()
    }

    /// Ground-plane speed; used for the static/dynamic decision.
    pub fn planar_speed(&self) -> f64 {
        self.velocity.x.hypot(self.velocity.y)
    }

    /// Moves the track onto a centroid known to be biased (partial view):
    /// predicts to `time`, then takes the position, keeping the velocity.
    pub fn reanchor(&mut self, centroid: Point3, members: PointCloud, time: f64, cfg: &KalmanConfig) {
        if self.updates > 1 && time > self.state_time {
            *self = kf_predict(self, time - self.state_time, cfg);
        }
        self.position = centroid;
        self.state_time = time;
        self.member_cloud = members;
        self.last_update_time = time;
        self.last_measurement = centroid;
    }

    /// Absorbs an associated centroid measured at `time`.
    ///
    /// The second measurement initializes velocity by finite difference; later
    /// ones go through predict + update.
    pub fn absorb(&mut self, centroid: Point3, members: PointCloud, time: f64, cfg: &KalmanConfig) {
        let r = cfg.sigma_meas * cfg.sigma_meas;
        if self.updates == 1 {
            let dt = time - self.last_update_time;
            if dt > 0.0 {
                self.velocity = (centroid - self.last_measurement) * (1.0 / dt);
                let block = [[r, r / dt], [r / dt, 2.0 * r / (dt * dt)]];
                self.covariance = [block; 3];
            }
            self.position = centroid;
            self.state_time = time;
        } else {
            if time > self.state_time {
                *self = kf_predict(self, time - self.state_time, cfg);
            }
            *self = kf_update(self, centroid, [r; 3]);
        }
        self.updates += 1;
        self.member_cloud = members;
        self.last_update_time = time;
        self.last_measurement = centroid;
    }
}

#[inline]
fn axis_get(p: &Point3, a: usize) -> f64 {
    p.coord(a)
}

fn axis_set(p: &mut Point3, a: usize, v: f64) {
    match a {
        0 => p.x = v,
        1 => p.y = v,
        _ => p.z = v,
    }
}

/// Constant-velocity prediction with white-acceleration process noise.
pub fn kf_predict(track: &ObstacleTrack, dt: f64, cfg: &KalmanConfig) -> ObstacleTrack {
    predict_with_noise(track, dt, cfg.sigma_accel * cfg.sigma_accel)
}

/// Prediction with an explicit acceleration variance `q` (m²/s⁴).
pub fn predict_with_noise(track: &ObstacleTrack, dt: f64, q: f64) -> ObstacleTrack {
    assert!(dt > 0.0, "prediction step must be positive");
    let mut out = track.clone();
    out.position = track.position + track.velocity * dt;
    let (dt2, dt3, dt4) = (dt * dt, dt * dt * dt, dt * dt * dt * dt);
    for cov in out.covariance.iter_mut() {
        let [[a, b], [c, d]] = *cov;
        // F P Fᵀ with F = [[1, dt], [0, 1]]
        let p00 = a + dt * (b + c) + dt2 * d;
        let p01 = b + dt * d;
        let p10 = c + dt * d;
        *cov = [
            [p00 + q * dt4 / 4.0, p01 + q * dt3 / 2.0],
            [p10 + q * dt3 / 2.0, d + q * dt2],
        ];
    }
    out.state_time = track.state_time + dt;
    out
}

/// Position measurement update (Joseph form), per axis.
pub fn kf_update(track: &ObstacleTrack, measured: Point3, meas_var: [f64; 3]) -> ObstacleTrack {
    let mut out = track.clone();
    for a in 0..3 {
        let r = meas_var[a];
        assert!(r > 0.0, "measurement noise must be positive");
        let [[p00, p01], [p10, p11]] = track.covariance[a];
        let s = p00 + r;
        let k0 = p00 / s;
        let k1 = p10 / s;
        let innov = axis_get(&measured, a) - axis_get(&track.position, a);
        axis_set(&mut out.position, a, axis_get(&track.position, a) + k0 * innov);
        axis_set(&mut out.velocity, a, axis_get(&track.velocity, a) + k1 * innov);
        // (I - K H) P (I - K H)ᵀ + K R Kᵀ, H = [1, 0]
        let m = [[1.0 - k0, 0.0], [-k1, 1.0]];
        let p = [[p00, p01], [p10, p11]];
        let mut mp = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                mp[i][j] = m[i][0] * p[0][j] + m[i][1] * p[1][j];
            }
        }
        let k = [k0, k1];
        let mut post = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                post[i][j] = mp[i][0] * m[j][0] + mp[i][1] * m[j][1] + k[i] * r * k[j];
            }
        }
        let sym = 0.5 * (post[0][1] + post[1][0]);
        post[0][1] = sym;
        post[1][0] = sym;
        out.covariance[a] = post;
    }
    out
}

/// `P_dyn,k` for k = 0..n: the union of every member cloud rigidly shifted by
/// `velocity · k · dt`.
pub fn predict_obstacle_clouds(tracks: &[ObstacleTrack], n: usize, dt: f64) -> Vec<PointCloud> {
    assert!(n >= 1, "horizon must be at least one step");
    let frame_time = tracks.iter().map(|t| t.member_cloud.frame_time).fold(0.0, f64::max);
    (0..n)
        .map(|k| {
            let shift = k as f64 * dt;
            let points = tracks
                .iter()
                .flat_map(|t| {
                    let off = t.velocity * shift;
                    t.member_cloud.points.iter().map(move |p| *p + off)
                })
                .collect();
            PointCloud::new(points, frame_time)
        })
        .collect()
}
