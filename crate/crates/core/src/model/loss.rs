use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

const UNIT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub margin: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { margin: 1.0 }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if self.margin > 0.0 && self.margin.is_finite() {
            Ok(())
        } else {
            Err(Error::Config(format!("margin must be positive, got {}", self.margin)))
        }
    }
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Squared Euclidean distance between unit vectors, `2 − 2·a·b` on the sphere.
pub fn pair_distance(a: &Tensor, b: &Tensor) -> Result<f64> {
    a.expect_same_shape(b)?;
    for (name, v) in [("first", a), ("second", b)] {
        let n = v.norm();
        if (n - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::Contract(format!("{name} argument has norm {n}, expected 1")));
        }
    }
    Ok(squared_distance(a.data(), b.data()))
}

/// Hinge `max(d_pos − d_neg + margin, 0)`.
pub fn triplet_loss(d_pos: f64, d_neg: f64, cfg: &LossConfig) -> f64 {
    (d_pos - d_neg + cfg.margin).max(0.0)
}

/// How a negative is chosen among the candidates of an anchor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeRule {
    /// Closest non-gold candidate.
    #[default]
    Hardest,
    /// Closest candidate with `d_neg ≥ d_pos`, falling back to the hardest one
    /// when every candidate is nearer than the positive.
    SemiHard,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinedTriplet {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
    pub d_pos: f64,
    pub d_neg: f64,
}

/// Index-based mining used by training: `gold[a]` is the candidate index of
/// anchor `a`'s positive.
pub(crate) fn mine_by_index(
    anchors: &[Tensor],
    candidates: &[Tensor],
    gold: &[usize],
    rule: NegativeRule,
) -> Result<Vec<MinedTriplet>> {
    if anchors.len() != gold.len() {
        return Err(Error::Mining(format!(
            "{} anchors but {} gold entries",
            anchors.len(),
            gold.len()
        )));
    }
    anchors
        .iter()
        .zip(gold)
        .enumerate()
        .map(|(a, (anchor, &pos))| {
            if pos >= candidates.len() {
                return Err(Error::Mining(format!("anchor {a} has no positive in the batch")));
            }
            let d_pos = squared_distance(anchor.data(), candidates[pos].data());
            let mut hardest: Option<(usize, f64)> = None;
            let mut semi: Option<(usize, f64)> = None;
            for (j, c) in candidates.iter().enumerate() {
                if j == pos {
                    continue;
                }
                let d = squared_distance(anchor.data(), c.data());
                if hardest.is_none_or(|(_, best)| d < best) {
                    hardest = Some((j, d));
                }
                if d >= d_pos && semi.is_none_or(|(_, best)| d < best) {
                    semi = Some((j, d));
                }
            }
            let chosen = match rule {
                NegativeRule::Hardest => hardest,
                NegativeRule::SemiHard => semi.or(hardest),
            };
            let (negative, d_neg) = chosen
                .ok_or_else(|| Error::Mining(format!("anchor {a} has no negative candidate")))?;
            Ok(MinedTriplet {
                anchor: a,
                positive: pos,
                negative,
                d_pos,
                d_neg,
            })
        })
        .collect()
}

/// For each anchor, picks its negative among `docs` excluding the anchor's
/// gold document. Ties go to the lowest document index. Anchors whose
/// triplet already satisfies the margin are kept.
pub fn mine_hard(
    anchors: &[Tensor],
    docs: &[(String, Tensor)],
    gold: &[String],
    rule: NegativeRule,
) -> Result<Vec<MinedTriplet>> {
    if anchors.len() != gold.len() {
        return Err(Error::Mining(format!(
            "{} anchors but {} gold ids",
            anchors.len(),
            gold.len()
        )));
    }
    let gold_idx = gold
        .iter()
        .enumerate()
        .map(|(a, id)| {
            docs.iter()
                .position(|(d, _)| d == id)
                .ok_or_else(|| Error::Mining(format!("anchor {a}: positive `{id}` is not in the batch")))
        })
        .collect::<Result<Vec<_>>>()?;
    let vectors: Vec<Tensor> = docs.iter().map(|(_, v)| v.clone()).collect();
    mine_by_index(anchors, &vectors, &gold_idx, rule)
}
