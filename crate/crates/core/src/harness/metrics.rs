//! Ranking metrics over the no-edit scoring pass and over decoded
//! candidate lists.

use serde::{Deserialize, Serialize};

use crate::pairnet::select_top_k;

/// Pair scores from the step-0 pass of one reaction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreDump {
    pub id: String,
    pub pairs: Vec<(usize, usize)>,
    pub scores: Vec<f64>,
    pub gold: Vec<(usize, usize)>,
}

impl ScoreDump {
    /// Number of gold pairs among the `k` best-ranked pairs.
    pub fn gold_in_top(&self, k: usize) -> usize {
        let top = select_top_k(&self.pairs, &self.scores, k);
        top.iter().filter(|&&i| self.gold.contains(&self.pairs[i])).count()
    }
}

/// Fraction of reactions whose gold pairs all rank within the top `k`.
/// Reactions without gold pairs are left out; `None` if none remain.
pub fn coverage_at_k(dumps: &[ScoreDump], k: usize) -> Option<f64> {
    let scored: Vec<&ScoreDump> = dumps.iter().filter(|d| !d.gold.is_empty()).collect();
    if scored.is_empty() {
        return None;
    }
    let hit = scored.iter().filter(|d| d.gold_in_top(k) == d.gold.len()).count();
    Some(hit as f64 / scored.len() as f64)
}

/// Fraction of all gold pairs that rank within the top `k` of their
/// reaction.
pub fn recall_at_k(dumps: &[ScoreDump], k: usize) -> Option<f64> {
    let total: usize = dumps.iter().map(|d| d.gold.len()).sum();
    if total == 0 {
        return None;
    }
    let hit: usize = dumps.iter().map(|d| d.gold_in_top(k)).sum();
    Some(hit as f64 / total as f64)
}

/// Fraction of reactions whose first gold match ranks within `k`.
/// `ranks[i]` is the 1-based rank of the match, if any.
pub fn precision_at_k(ranks: &[Option<usize>], k: usize) -> Option<f64> {
    if ranks.is_empty() {
        return None;
    }
    let hit = ranks.iter().filter(|r| r.is_some_and(|r| r <= k)).count();
    Some(hit as f64 / ranks.len() as f64)
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn dump(scores: Vec<f64>, gold: Vec<(usize, usize)>) -> ScoreDump {
        let pairs = [(0, 1), (0, 2), (1, 2), (0, 3), (1, 3), (2, 3)];
        ScoreDump {
            id: "d".into(),
            pairs: pairs[..scores.len()].to_vec(),
            scores,
            gold,
        }
    }

    #[test]
    fn limits() {
        let d = vec![dump(vec![0.1, 0.9, 0.3, 0.2], vec![(0, 1), (1, 2)])];
        assert_eq!(coverage_at_k(&d, 0), Some(0.0));
        assert_eq!(coverage_at_k(&d, 4), Some(1.0));
        assert_eq!(coverage_at_k(&d, 100), Some(1.0));
        assert_eq!(recall_at_k(&d, 100), Some(1.0));
        // Ranking: (0,2), (1,2), (0,3), (0,1).
        assert_eq!(coverage_at_k(&d, 2), Some(0.0));
        assert_eq!(recall_at_k(&d, 2), Some(0.5));
        assert_eq!(coverage_at_k(&d, 3), Some(0.0));
        assert_eq!(coverage_at_k(&[dump(vec![0.0], vec![])], 1), None);
    }

    #[test]
    fn recall_bounds_coverage_and_both_grow_with_k() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let dumps: Vec<ScoreDump> = (0..50)
            .map(|_| {
                let s: Vec<f64> = (0..6).map(|_| rng.gen()).collect();
                let g = if rng.gen_bool(0.5) { vec![(0, 1)] } else { vec![(0, 2), (2, 3)] };
                dump(s, g)
            })
            .collect();
        let mut last = (0.0, 0.0);
        for k in 0..=6 {
            let c = coverage_at_k(&dumps, k).unwrap();
            let r = recall_at_k(&dumps, k).unwrap();
            assert!(r >= c);
            assert!(c >= last.0 && r >= last.1);
            last = (c, r);
        }
    }

    #[test]
    fn random_scores_cover_one_gold_pair_at_rate_k_over_p() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dumps: Vec<ScoreDump> = (0..20_000)
            .map(|_| dump((0..6).map(|_| rng.gen()).collect(), vec![(1, 2)]))
            .collect();
        for k in 1..=6 {
            let c = coverage_at_k(&dumps, k).unwrap();
            assert!((c - k as f64 / 6.0).abs() < 0.02, "k={k}: {c}");
        }
    }

    #[test]
    fn precision_is_monotone() {
        let ranks = vec![Some(1), Some(3), None, Some(2), Some(5)];
        assert_eq!(precision_at_k(&ranks, 1), Some(0.2));
        assert_eq!(precision_at_k(&ranks, 3), Some(0.6));
        assert_eq!(precision_at_k(&ranks, 5), Some(0.8));
        assert_eq!(precision_at_k(&[], 1), None);
        assert_eq!(precision_at_k(&[Some(1); 4], 1), Some(1.0));
    }
}
