//! Cumulative privacy budget accounting under basic sequential composition:
//! per-client epsilon and delta spends add up and a charge that would push
//! either past its cap is refused atomically.

use crate::params::ClientId;
use crate::{Error, Result};
use std::collections::BTreeMap;

/// Cumulative spend of one client.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Spend {
    pub eps: f64,
    pub delta: f64,
}

/// Per-client cumulative privacy spend against shared budget caps.
#[derive(Clone, Debug)]
pub struct PrivacyLedger {
    entries: BTreeMap<ClientId, Spend>,
    eps_budget: f64,
    delta_budget: f64,
}

impl PrivacyLedger {
    pub fn new(eps_budget: f64, delta_budget: f64) -> Result<Self> {
        if eps_budget <= 0.0 || eps_budget.is_nan() {
            return Err(Error::config("privacy.eps_budget", "must be positive"));
        }
        if !(delta_budget > 0.0 && delta_budget <= 1.0) {
            return Err(Error::config(
                "privacy.delta_budget",
                "must lie in (0, 1]",
            ));
        }
        Ok(PrivacyLedger {
            entries: BTreeMap::new(),
            eps_budget,
            delta_budget,
        })
    }

    /// A ledger that never refuses a finite charge; used when no cap is
    /// configured so spends are still recorded.
    pub fn unbounded() -> Self {
        PrivacyLedger {
            entries: BTreeMap::new(),
            eps_budget: f64::INFINITY,
            delta_budget: 1.0,
        }
    }

    pub fn eps_budget(&self) -> f64 {
        self.eps_budget
    }

    pub fn delta_budget(&self) -> f64 {
        self.delta_budget
    }

    pub fn spent(&self, client: ClientId) -> Spend {
        self.entries.get(&client).copied().unwrap_or_default()
    }

    pub fn can_afford(&self, client: ClientId, eps: f64, delta: f64) -> bool {
        let s = self.spent(client);
        s.eps + eps <= self.eps_budget && s.delta + delta <= self.delta_budget
    }

    /// Adds `(eps, delta)` to the client's spend, or refuses with the ledger
    /// unchanged when either cap would be exceeded.
    pub fn charge(&mut self, client: ClientId, eps: f64, delta: f64) -> Result<()> {
        assert!(eps >= 0.0 && delta >= 0.0, "charges must be nonnegative");
        if !self.can_afford(client, eps, delta) {
            return Err(Error::BudgetExhausted(client));
        }
        let entry = self.entries.entry(client).or_default();
        entry.eps += eps;
        entry.delta += delta;
        Ok(())
    }

    /// All recorded spends in ascending client order.
    pub fn entries(&self) -> impl Iterator<Item = (ClientId, Spend)> + '_ {
        self.entries.iter().map(|(&c, &s)| (c, s))
    }
}
