//! Adaptive hard-case sampling of valley widths.
//!
//! With probability `p` a width is drawn from the hard band
//! `(hard_min_width, max_width]`, otherwise uniformly from the whole range.
//! Every `window` finished episodes the window's success rate nudges `p` up
//! or down by `step`.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CurriculumError {
    #[error("invalid curriculum configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CurriculumConfig {
    pub min_width: f64,
    pub max_width: f64,
    pub hard_min_width: f64,
    pub p_init: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub step: f64,
    pub window: usize,
    pub raise_above: f64,
    pub lower_below: f64,
    /// When false `p` stays at `p_init` forever.
    pub adaptive: bool,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        Self {
            min_width: 0.06,
            max_width: 0.42,
            hard_min_width: 0.30,
            p_init: 0.01,
            p_min: 0.01,
            p_max: 0.91,
            step: 0.1,
            window: 100,
            raise_above: 0.6,
            lower_below: 0.3,
            adaptive: true,
        }
    }
}

impl CurriculumConfig {
    /// Same rule with `p` pinned at `p`.
    pub fn fixed(p: f64) -> Self {
        Self { p_init: p, p_min: p, p_max: p, adaptive: false, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), CurriculumError> {
        let bad = |m: &str| Err(CurriculumError::InvalidConfig(m.to_string()));
        if !(self.min_width > 0.0 && self.min_width < self.max_width) {
            return bad("need 0 < min_width < max_width");
        }
        if !(self.hard_min_width >= self.min_width && self.hard_min_width < self.max_width) {
            return bad("hard band must lie inside the width range");
        }
        if !(0.0 <= self.p_min && self.p_min <= self.p_max && self.p_max <= 1.0) {
            return bad("need 0 <= p_min <= p_max <= 1");
        }
        if !(self.p_min..=self.p_max).contains(&self.p_init) {
            return bad("p_init outside [p_min, p_max]");
        }
        if self.window == 0 {
            return bad("window must be positive");
        }
        Ok(())
    }

    pub fn is_hard(&self, width: f64) -> bool {
        width > self.hard_min_width
    }
}

/// Emitted when a full window changes (or fails to change) `p`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurriculumUpdate {
    pub window_mean: f64,
    pub p_before: f64,
    pub p_after: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Curriculum {
    config: CurriculumConfig,
    p: f64,
    window: VecDeque<bool>,
}

impl Curriculum {
    pub fn new(config: CurriculumConfig) -> Result<Self, CurriculumError> {
        config.validate()?;
        Ok(Self { config, p: config.p_init, window: VecDeque::with_capacity(config.window) })
    }

    pub fn config(&self) -> &CurriculumConfig {
        &self.config
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn window_len(&self) -> usize {
        self.window.len()
    }

    pub fn sample_width<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        sample_width(&self.config, self.p, rng)
    }

    /// Records one finished episode; returns the adjustment when the window
    /// filled up.
    pub fn update(&mut self, success: bool) -> Option<CurriculumUpdate> {
        self.window.push_back(success);
        if self.window.len() < self.config.window {
            return None;
        }
        let mean = self.window.iter().filter(|&&s| s).count() as f64 / self.window.len() as f64;
        self.window.clear();
        let before = self.p;
        if self.config.adaptive {
            let c = &self.config;
            let raw = if mean > c.raise_above {
                self.p + c.step
            } else if mean < c.lower_below {
                self.p - c.step
            } else {
                self.p
            };
            // Round away accumulated float noise so p stays on the 0.01 + k·step lattice.
            self.p = (raw * 1e12).round() / 1e12;
            self.p = self.p.clamp(c.p_min, c.p_max);
        }
        Some(CurriculumUpdate { window_mean: mean, p_before: before, p_after: self.p })
    }
}

/// Mixture draw: hard band `(hard_min, max]` with probability `p`, else
/// uniform on `[min, max]`.
pub fn sample_width<R: Rng + ?Sized>(config: &CurriculumConfig, p: f64, rng: &mut R) -> f64 {
    let hard = rng.gen::<f64>() < p;
    let u = rng.gen::<f64>();
    if hard {
        config.max_width - u * (config.max_width - config.hard_min_width)
    } else {
        config.min_width + u * (config.max_width - config.min_width)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn with_p(p: f64) -> Curriculum {
        let mut c = Curriculum::new(CurriculumConfig::default()).unwrap();
        c.p = p;
        c
    }

    fn feed(c: &mut Curriculum, successes: usize) -> CurriculumUpdate {
        let n = c.config.window;
        let mut last = None;
        for i in 0..n {
            last = c.update(i < successes);
        }
        last.unwrap()
    }

    #[test]
    fn raise_lower_and_clamp() {
        let mut c = with_p(0.01);
        assert_eq!(feed(&mut c, 65).p_after, 0.11);
        let mut c = with_p(0.5);
        assert_eq!(feed(&mut c, 20).p_after, 0.4);
        let mut c = with_p(0.91);
        assert_eq!(feed(&mut c, 90).p_after, 0.91);
        let mut c = with_p(0.01);
        assert_eq!(feed(&mut c, 0).p_after, 0.01);
    }

    #[test]
    fn middle_band_keeps_p() {
        let mut c = with_p(0.31);
        assert_eq!(feed(&mut c, 45).p_after, 0.31);
        assert_eq!(c.window_len(), 0);
    }

    #[test]
    fn fixed_never_moves() {
        let mut c = Curriculum::new(CurriculumConfig::fixed(0.91)).unwrap();
        assert_eq!(feed(&mut c, 0).p_after, 0.91);
    }

    #[test]
    fn degenerate_branches() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = CurriculumConfig::default();
        for _ in 0..2000 {
            let w = sample_width(&cfg, 1.0, &mut rng);
            assert!(w > 0.30 && w <= 0.42);
            let w = sample_width(&cfg, 0.0, &mut rng);
            assert!((0.06..=0.42).contains(&w));
        }
    }

    #[test]
    fn invalid_configs() {
        let mut c = CurriculumConfig::default();
        c.hard_min_width = 0.5;
        assert!(Curriculum::new(c).is_err());
        let mut c = CurriculumConfig::default();
        c.p_init = 0.95;
        assert!(Curriculum::new(c).is_err());
    }
}
