use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
}

impl PidGains {
    pub const LONGITUDINAL: PidGains = PidGains { kp: 5.0, ki: 0.5, kd: 1.0 };
    pub const LATERAL: PidGains = PidGains { kp: 1.0, ki: 0.5, kd: 0.2 };
}

pub const LONGITUDINAL_BUFFER: usize = 40;
pub const LATERAL_BUFFER: usize = 20;

/// Individual contributions of one PID evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PidTerms {
    pub p: f64,
    pub i: f64,
    pub d: f64,
}

impl PidTerms {
    pub fn output(&self) -> f64 {
        self.p + self.i + self.d
    }
}

/// Discrete PID with a fixed-length error window for the integral:
///
/// `u = kp*e + ki*sum(window)*dt + kd*(e - e_prev)/dt`
///
/// The window holds the most recent `capacity` errors including the current one.
#[derive(Debug, Clone, PartialEq)]
pub struct PidState {
    pub gains: PidGains,
    pub dt: f64,
    buffer: VecDeque<f64>,
    capacity: usize,
    last_error: f64,
}

impl PidState {
    pub fn new(gains: PidGains, capacity: usize, dt: f64) -> Self {
        assert!(capacity > 0, "PID buffer must hold at least one frame");
        assert!(dt > 0.0, "PID dt must be positive");
        assert!(gains.kp.is_finite() && gains.ki.is_finite() && gains.kd.is_finite());
        Self { gains, dt, buffer: VecDeque::with_capacity(capacity), capacity, last_error: 0.0 }
    }

    pub fn longitudinal(dt: f64) -> Self {
        Self::new(PidGains::LONGITUDINAL, LONGITUDINAL_BUFFER, dt)
    }

    pub fn lateral(dt: f64) -> Self {
        Self::new(PidGains::LATERAL, LATERAL_BUFFER, dt)
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn last_error(&self) -> f64 {
        self.last_error
    }

    pub fn step(&mut self, error: f64) -> f64 {
        self.step_terms(error).output()
    }

    pub fn step_terms(&mut self, error: f64) -> PidTerms {
        if self.buffer.len() == self.capacity {
            self.buffer.pop_front();
        }
        self.buffer.push_back(error);
        let sum: f64 = self.buffer.iter().sum();
        let terms = PidTerms {
            p: self.gains.kp * error,
            i: self.gains.ki * sum * self.dt,
            d: self.gains.kd * (error - self.last_error) / self.dt,
        };
        self.last_error = error;
        terms
    }

    pub fn reset(&mut self) {
        self.buffer.clear();
        self.last_error = 0.0;
    }
}
