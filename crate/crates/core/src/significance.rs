//! Per-relation event counts, normalized causal effect and the filters
//! built on them.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::sv::{Model, SvId};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationStats {
    pub n_target_observed: u64,
    pub n_ss: u64,
    pub n_incidence: u64,
    pub n_concurrence: u64,
}

impl RelationStats {
    /// Counts one step. Nothing changes when the target is unobserved.
    pub fn record(&mut self, ss: bool, incidence: bool, observed: bool) {
        if !observed {
            return;
        }
        self.n_target_observed += 1;
        if ss {
            self.n_ss += 1;
        }
        if incidence {
            self.n_incidence += 1;
        }
        if ss && incidence {
            self.n_concurrence += 1;
        }
    }

    /// `(P(I|SS) - P(I)) / P(I)`, or `None` while either count is zero.
    pub fn nce(&self) -> Option<f64> {
        if self.n_incidence == 0 || self.n_ss == 0 {
            return None;
        }
        let p_i = self.n_incidence as f64 / self.n_target_observed as f64;
        let p_i_ss = self.n_concurrence as f64 / self.n_ss as f64;
        Some((p_i_ss - p_i) / p_i)
    }

    /// `P(I|SS)`, or `None` before the sources were ever satisfied.
    pub fn p_incidence_given_ss(&self) -> Option<f64> {
        (self.n_ss > 0).then(|| self.n_concurrence as f64 / self.n_ss as f64)
    }
}

/// Whether a CSV with these per-target stats is blocked: every target has a
/// defined NCE with magnitude below `eps_t`. Targets without data count as
/// significant.
pub fn is_blocked<'a>(stats: impl IntoIterator<Item = &'a RelationStats>, eps_t: f64) -> bool {
    let mut any = false;
    for s in stats {
        match s.nce() {
            Some(v) if v.abs() < eps_t => any = true,
            _ => return false,
        }
    }
    any
}

/// CSVs currently blocked from receiving new conditioners. Blocking is
/// recomputed from the counts, so it lifts when the counts change.
pub fn apply_nce_blocking(model: &Model, eps_t: f64) -> BTreeSet<SvId> {
    assert!(eps_t > 0.0, "eps_t must be positive");
    model.csvs().filter(|c| is_blocked(c.stats.values(), eps_t)).map(|c| c.id).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterVerdict {
    Keep,
    Remove,
}

/// Conditioner filter of the network variant: drop when `P(SS|I) < eps_sign`.
pub fn mnr_filter_check(stats: &RelationStats, eps_sign: f64) -> FilterVerdict {
    if stats.n_incidence == 0 {
        return FilterVerdict::Keep;
    }
    if (stats.n_concurrence as f64) / (stats.n_incidence as f64) < eps_sign {
        FilterVerdict::Remove
    } else {
        FilterVerdict::Keep
    }
}
