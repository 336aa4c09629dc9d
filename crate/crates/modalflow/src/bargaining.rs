//! Per-provider profit accounting and the asymmetric Nash bargaining
//! allocation, plus an equal-split baseline.

use crate::assignment::LinkProfitModel;
use crate::error::{Error, Result};

/// Link-to-provider assignment: the L x S 0/1 matrix Z with one provider per
/// link, stored as one provider index per link.
#[derive(Debug, Clone, PartialEq)]
pub struct ProviderMap {
    pub names: Vec<String>,
    /// Provider index of each link, in link order.
    pub link_provider: Vec<usize>,
}

impl ProviderMap {
    pub fn num_providers(&self) -> usize {
        self.names.len()
    }

    pub fn validate(&self, num_links: usize) -> Result<()> {
        if self.names.is_empty() {
            return Err(Error::Domain("at least one provider required".into()));
        }
        if self.link_provider.len() != num_links {
            return Err(Error::Domain(format!(
                "provider map covers {} links, expected {num_links}",
                self.link_provider.len()
            )));
        }
        for (l, &p) in self.link_provider.iter().enumerate() {
            if p >= self.names.len() {
                return Err(Error::Domain(format!(
                    "link {} assigned to unknown provider index {p}",
                    l + 1
                )));
            }
        }
        Ok(())
    }
}

/// Per-provider profit sum_l z_li f_l (pi_l(f) + J_l).
pub fn provider_profits(
    f: &[f64],
    j: &[f64],
    profit_model: &LinkProfitModel,
    providers: &ProviderMap,
) -> Result<Vec<f64>> {
    let n = profit_model.num_links();
    if f.len() != n || j.len() != n {
        return Err(Error::Domain(format!(
            "provider_profits expects vectors of length {n}, got f: {}, j: {}",
            f.len(),
            j.len()
        )));
    }
    providers.validate(n)?;
    let pi = profit_model.per_link(f);
    let mut out = vec![0.0; providers.num_providers()];
    for l in 0..n {
        out[providers.link_provider[l]] += f[l] * (pi[l] + j[l]);
    }
    Ok(out)
}

/// Result of a profit-sharing round.
#[derive(Debug, Clone, PartialEq)]
pub struct SharingResult {
    /// Disagreement payoffs: per-provider profits without cooperation.
    pub disagreement: Vec<f64>,
    /// Per-provider profits under the optimized incentive, before transfers.
    pub post: Vec<f64>,
    /// Total profit being shared.
    pub total: f64,
    /// The bargaining allocation R*.
    pub allocation: Vec<f64>,
    /// allocation - post; transfers sum to zero.
    pub compensation: Vec<f64>,
    /// allocation - disagreement; positive for every provider when a surplus
    /// exists.
    pub increase: Vec<f64>,
}

/// Closed-form asymmetric Nash bargaining allocation
/// R*_i = theta_i / sum(theta) * (R_c - sum(t)) + t_i.
pub fn asymmetric_nash(total: f64, disagreement: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
    if disagreement.len() != theta.len() {
        return Err(Error::Domain(format!(
            "{} disagreement payoffs but {} weights",
            disagreement.len(),
            theta.len()
        )));
    }
    if theta.is_empty() {
        return Err(Error::Domain("no providers to share among".into()));
    }
    if let Some(bad) = theta.iter().find(|&&t| t <= 0.0) {
        return Err(Error::Domain(format!("bargaining weights must be > 0, got {bad}")));
    }
    let disagreement_sum: f64 = disagreement.iter().sum();
    if total <= disagreement_sum {
        return Err(Error::NoSurplus { total, disagreement_sum });
    }
    let theta_sum: f64 = theta.iter().sum();
    let surplus = total - disagreement_sum;
    Ok(theta
        .iter()
        .zip(disagreement)
        .map(|(&th, &t)| th / theta_sum * surplus + t)
        .collect())
}

/// Envy-free baseline: everyone gets total / S.
pub fn equal_split(total: f64, providers: usize) -> Result<Vec<f64>> {
    if providers == 0 {
        return Err(Error::Domain("cannot split among zero providers".into()));
    }
    Ok(vec![total / providers as f64; providers])
}

/// Assemble the full sharing report from before/after profit vectors.
pub fn share_profits(
    disagreement: Vec<f64>,
    post: Vec<f64>,
    total: f64,
    theta: &[f64],
) -> Result<SharingResult> {
    if post.len() != disagreement.len() {
        return Err(Error::Domain("before/after profit vectors differ in length".into()));
    }
    let allocation = asymmetric_nash(total, &disagreement, theta)?;
    let compensation: Vec<f64> = allocation.iter().zip(&post).map(|(a, p)| a - p).collect();
    let increase: Vec<f64> = allocation.iter().zip(&disagreement).map(|(a, t)| a - t).collect();
    Ok(SharingResult { disagreement, post, total, allocation, compensation, increase })
}
