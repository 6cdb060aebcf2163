//! Threshold filtering and largest-remainder budget apportionment.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::RoutingDistribution;
use crate::hazard::Hazard;

/// Hazards activated for a query, in category order. Never empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveSet {
    pub hazards: Vec<Hazard>,
    pub threshold: f64,
}

impl ActiveSet {
    pub fn contains(&self, hazard: Hazard) -> bool {
        self.hazards.contains(&hazard)
    }
}

/// Hazards with probability at least `tau`; the argmax alone when none
/// qualify.
pub fn active_set(dist: &RoutingDistribution, tau: f64) -> ActiveSet {
    let mut hazards: Vec<Hazard> = Hazard::ALL.into_iter().filter(|&h| dist.prob(h) >= tau).collect();
    if hazards.is_empty() {
        hazards.push(dist.argmax());
    }
    ActiveSet { hazards, threshold: tau }
}

/// Integer quotas for active hazards; `quotas` sums to `total`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetAllocation {
    pub quotas: BTreeMap<Hazard, usize>,
    pub total: usize,
}

/// Splits `total` in proportion to the renormalized active probabilities.
/// Each share is floored, then the leftover units go to the largest
/// fractional parts, ties by category order.
pub fn allocate_budget(dist: &RoutingDistribution, active: &ActiveSet, total: usize) -> BudgetAllocation {
    let mass: f64 = active.hazards.iter().map(|&h| dist.prob(h)).sum();
    let n = active.hazards.len() as f64;
    let shares: Vec<(Hazard, f64)> = active
        .hazards
        .iter()
        .map(|&h| {
            let w = if mass > 0.0 { dist.prob(h) / mass } else { 1.0 / n };
            (h, w * total as f64)
        })
        .collect();
    let mut quotas: BTreeMap<Hazard, usize> = shares.iter().map(|&(h, s)| (h, s.floor() as usize)).collect();
    let assigned: usize = quotas.values().sum();
    let mut order: Vec<(Hazard, f64)> = shares.iter().map(|&(h, s)| (h, s - s.floor())).collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    for (h, _) in order.into_iter().cycle().take(total.saturating_sub(assigned)) {
        *quotas.get_mut(&h).expect("active hazard") += 1;
    }
    BudgetAllocation { quotas, total }
}
