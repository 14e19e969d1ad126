use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Population size per class.
    pub n_i: usize,
    /// Parents kept by truncation selection.
    pub n_p: usize,
    pub p_m: f64,
    pub generations: usize,
    pub alpha: f64,
    pub n_top: usize,
    pub patience: usize,
    pub seed: u64,
    pub init_mode: String,
    pub grouping_mode: String,
    pub evaluation: String,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            n_i: 100,
            n_p: 50,
            p_m: 0.1,
            generations: 200,
            alpha: 0.9,
            n_top: 100,
            patience: 20,
            seed: 0,
            init_mode: "sensitivity".into(),
            grouping_mode: "importance".into(),
            evaluation: "pruned".into(),
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.p_m > 0.0 && self.p_m < 1.0) {
            return bad(format!("p_m must lie in (0, 1), got {}", self.p_m));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        for (name, v) in [
            ("n_i", self.n_i),
            ("n_p", self.n_p),
            ("generations", self.generations),
            ("n_top", self.n_top),
            ("patience", self.patience),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.n_p > self.n_i {
            return bad(format!("n_p ({}) exceeds n_i ({})", self.n_p, self.n_i));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        SearchConfig::default().validate().unwrap();
    }

    #[test]
    fn rejects_out_of_range() {
        let base = SearchConfig::default();
        for cfg in [
            SearchConfig { p_m: 0.0, ..base.clone() },
            SearchConfig { p_m: 1.0, ..base.clone() },
            SearchConfig { alpha: 1.0, ..base.clone() },
            SearchConfig { n_p: 101, ..base.clone() },
            SearchConfig { n_top: 0, ..base.clone() },
        ] {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }
}
