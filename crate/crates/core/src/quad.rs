use serde::{Deserialize, Serialize};

/// The four channel probabilities at one evolution point.
///
/// `p_ab` is the probability of finding b after starting in a. No sum rule
/// is imposed here: the G-metric framework does not conserve probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityQuad {
    pub p_aa: f64,
    pub p_ab: f64,
    pub p_ba: f64,
    pub p_bb: f64,
}

impl ProbabilityQuad {
    pub fn new(p_aa: f64, p_ab: f64, p_ba: f64, p_bb: f64) -> Self {
        Self {
            p_aa,
            p_ab,
            p_ba,
            p_bb,
        }
    }

    pub fn nan() -> Self {
        Self::new(f64::NAN, f64::NAN, f64::NAN, f64::NAN)
    }

    /// P_aa + P_ab
    pub fn sum_a(&self) -> f64 {
        self.p_aa + self.p_ab
    }

    /// P_ba + P_bb
    pub fn sum_b(&self) -> f64 {
        self.p_ba + self.p_bb
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.p_aa, self.p_ab, self.p_ba, self.p_bb]
    }

    pub fn max_abs_diff(&self, other: &ProbabilityQuad) -> f64 {
        self.as_array()
            .iter()
            .zip(other.as_array())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.as_array().iter().all(|x| x.is_finite())
    }
}
