//! Proposal kernels over configurations: uniform single-site change and
//! the gradient-informed categorical (GWG-style) proposal.

use rand::Rng;
use thiserror::Error;

use crate::energy_models::{Config, ConfigSpace, GradMatrix};

#[derive(Debug, Error)]
pub enum ProposalError {
    #[error("non-finite gradient entry at site {site}, value {value}")]
    NonFiniteGradient { site: usize, value: u16 },
    #[error("model evaluation failed during reverse proposal: {0}")]
    Callback(String),
}

/// A candidate configuration differing from the source in exactly one
/// site, with forward and reverse proposal log-probabilities in nats.
#[derive(Debug, Clone)]
pub struct ProposalOutcome {
    pub candidate: Config,
    pub changed_site: usize,
    pub new_value: u16,
    pub log_q_forward: f64,
    pub log_q_reverse: f64,
}

/// Uniform site, uniform new value among the V-1 alternatives. Symmetric:
/// both log-probabilities are -ln(D (V-1)).
pub fn propose_random<R: Rng>(x: &Config, space: &ConfigSpace, rng: &mut R) -> ProposalOutcome {
    let d = space.dims;
    let v = space.cardinality;
    let site = rng.gen_range(0..d);
    let offset = rng.gen_range(1..v);
    let new_value = (x.values[site] + offset) % v;
    let log_q = -((d as f64) * (v as f64 - 1.0)).ln();
    ProposalOutcome {
        candidate: x.with_site(site, new_value),
        changed_site: site,
        new_value,
        log_q_forward: log_q,
        log_q_reverse: log_q,
    }
}

/// First-order change estimates for every single-site move of the target
/// whose one-hot gradient is `grad`: score(i, v) = (grad[i,v] -
/// grad[i,x_i]) / 2, with current values masked to -inf.
pub fn gwg_category_scores(grad: &GradMatrix, x: &Config) -> Result<GradMatrix, ProposalError> {
    let mut scores = GradMatrix::zeros(grad.dims, grad.cardinality);
    for site in 0..grad.dims {
        let cur = x.values[site];
        let g_cur = grad.get(site, cur);
        for value in 0..grad.cardinality {
            if value == cur {
                scores.set(site, value, f64::NEG_INFINITY);
                continue;
            }
            let g = grad.get(site, value);
            if !g.is_finite() || !g_cur.is_finite() {
                return Err(ProposalError::NonFiniteGradient { site, value });
            }
            scores.set(site, value, (g - g_cur) / 2.0);
        }
    }
    Ok(scores)
}

fn logsumexp(scores: &GradMatrix) -> f64 {
    let max = scores.as_slice().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = scores.as_slice().iter().map(|&s| (s - max).exp()).sum();
    max + sum.ln()
}

/// Samples (site, value) from the softmax over `gwg_category_scores` of
/// the target gradient at `x`, then evaluates the target gradient at the
/// candidate (via `grad_at_candidate`) for the reverse probability.
pub fn propose_gwg<R, F>(
    x: &Config,
    f_grad: &GradMatrix,
    mut grad_at_candidate: F,
    rng: &mut R,
) -> Result<ProposalOutcome, ProposalError>
where
    R: Rng,
    F: FnMut(&Config) -> Result<GradMatrix, ProposalError>,
{
    let scores = gwg_category_scores(f_grad, x)?;
    let lse = logsumexp(&scores);
    // categorical draw over exp(score - lse)
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut pick = None;
    'outer: for site in 0..scores.dims {
        for value in 0..scores.cardinality {
            let s = scores.get(site, value);
            if s == f64::NEG_INFINITY {
                continue;
            }
            acc += (s - lse).exp();
            if u < acc {
                pick = Some((site, value));
                break 'outer;
            }
        }
    }
    // guard against accumulated rounding leaving acc slightly below 1
    let (site, value) = pick.unwrap_or_else(|| last_move(&scores));
    let candidate = x.with_site(site, value);
    let log_q_forward = scores.get(site, value) - lse;

    let rev_grad = grad_at_candidate(&candidate)?;
    let rev_scores = gwg_category_scores(&rev_grad, &candidate)?;
    let log_q_reverse = rev_scores.get(site, x.values[site]) - logsumexp(&rev_scores);

    Ok(ProposalOutcome { candidate, changed_site: site, new_value: value, log_q_forward, log_q_reverse })
}

fn last_move(scores: &GradMatrix) -> (usize, u16) {
    for site in (0..scores.dims).rev() {
        for value in (0..scores.cardinality).rev() {
            if scores.get(site, value) != f64::NEG_INFINITY {
                return (site, value);
            }
        }
    }
    unreachable!("V >= 2 guarantees at least one legal move");
}
