//! Brute-force Dubins oracle, independent of the library's dynamics and
//! solver: closed-form circular arcs under piecewise-constant bang-bang
//! controls from `{u_min, 0, u_max}` with one switch.
//!
//! For avoid the best sequence gives a lower bound on the true value, for
//! reach an upper bound. A single switch is enough to realise the optimal
//! strategy for a disk obstacle from almost every state.

use std::f64::consts::PI;

pub struct DubinsOracle {
    pub v: f64,
    pub u_max: f64,
    pub radius: f64,
    pub horizon: f64,
    /// Time between evaluations of the target function.
    pub dt: f64,
    /// Number of candidate switch times, evenly spaced over `[0, T]`.
    pub switches: usize,
}

impl Default for DubinsOracle {
    fn default() -> Self {
        Self {
            v: 0.6,
            u_max: 1.1,
            radius: 0.25,
            horizon: 1.0,
            dt: 0.01,
            switches: 41,
        }
    }
}

fn arc(x: [f64; 3], v: f64, u: f64, t: f64) -> [f64; 3] {
    if u.abs() < 1e-12 {
        [x[0] + v * t * x[2].cos(), x[1] + v * t * x[2].sin(), x[2]]
    } else {
        let th = x[2] + u * t;
        [
            x[0] + v / u * (th.sin() - x[2].sin()),
            x[1] - v / u * (th.cos() - x[2].cos()),
            th,
        ]
    }
}

impl DubinsOracle {
    fn l(&self, p: [f64; 3]) -> f64 {
        p[0].hypot(p[1]) - self.radius
    }

    /// Trajectory minimum of `l` for control `u1` on `[0, s)` then `u2`.
    pub fn cost(&self, x: [f64; 3], u1: f64, u2: f64, s: f64) -> f64 {
        let steps = (self.horizon / self.dt).round() as usize;
        let at_switch = arc(x, self.v, u1, s);
        let mut best = f64::INFINITY;
        for k in 0..=steps {
            let t = self.horizon * k as f64 / steps as f64;
            let p = if t <= s { arc(x, self.v, u1, t) } else { arc(at_switch, self.v, u2, t - s) };
            best = best.min(self.l(p));
        }
        best
    }

    fn sequences(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        let us = [-self.u_max, 0.0, self.u_max];
        let n = self.switches;
        let horizon = self.horizon;
        us.into_iter().flat_map(move |u1| {
            us.into_iter().flat_map(move |u2| {
                (0..n).map(move |j| (u1, u2, horizon * j as f64 / (n - 1) as f64))
            })
        })
    }

    /// Best avoid cost: `max` over sequences (lower bound on the true value).
    pub fn avoid_value(&self, x: [f64; 3]) -> f64 {
        self.sequences()
            .map(|(a, b, s)| self.cost(x, a, b, s))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Best reach cost: `min` over sequences (upper bound on the true value).
    pub fn reach_value(&self, x: [f64; 3]) -> f64 {
        self.sequences()
            .map(|(a, b, s)| self.cost(x, a, b, s))
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn wrap_angle(th: f64) -> f64 {
    (th + PI).rem_euclid(2.0 * PI) - PI
}
