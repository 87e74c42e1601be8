//! Operator identities, adaptive weights and roulette-wheel selection.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DestroyOp {
    Random,
    WaitingTime,
    LongDistance,
    WorstOrder,
    HistoricalKnowledge,
    Route,
    Zone,
    Proximity,
    RefillPosition,
}

pub const DESTROY_OPS: [DestroyOp; 9] = [
    DestroyOp::Random,
    DestroyOp::WaitingTime,
    DestroyOp::LongDistance,
    DestroyOp::WorstOrder,
    DestroyOp::HistoricalKnowledge,
    DestroyOp::Route,
    DestroyOp::Zone,
    DestroyOp::Proximity,
    DestroyOp::RefillPosition,
];

impl DestroyOp {
    pub fn index(self) -> usize {
        DESTROY_OPS.iter().position(|&op| op == self).unwrap()
    }

    pub fn name(self) -> &'static str {
        match self {
            DestroyOp::Random => "random",
            DestroyOp::WaitingTime => "waiting_time",
            DestroyOp::LongDistance => "long_distance",
            DestroyOp::WorstOrder => "worst_order",
            DestroyOp::HistoricalKnowledge => "historical_knowledge",
            DestroyOp::Route => "route",
            DestroyOp::Zone => "zone",
            DestroyOp::Proximity => "proximity",
            DestroyOp::RefillPosition => "refill_position",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RepairOp {
    Greedy,
    Regret,
}

impl RepairOp {
    pub fn name(self) -> &'static str {
        match self {
            RepairOp::Greedy => "greedy",
            RepairOp::Regret => "regret",
        }
    }
}

/// Destroy-operator weights with per-segment score and usage accumulators.
/// Repair operators stay unweighted and are drawn uniformly.
#[derive(Debug, Clone)]
pub struct OperatorBank {
    weights: [f64; 9],
    segment_scores: [f64; 9],
    segment_usage: [u64; 9],
    /// Cumulative usage over the whole run.
    pub total_usage: [u64; 9],
    /// Times the operator produced a new global best.
    pub new_best: [u64; 9],
}

impl Default for OperatorBank {
    fn default() -> Self {
        Self::new()
    }
}

impl OperatorBank {
    pub fn new() -> Self {
        OperatorBank {
            weights: [1.0; 9],
            segment_scores: [0.0; 9],
            segment_usage: [0; 9],
            total_usage: [0; 9],
            new_best: [0; 9],
        }
    }

    pub fn weights(&self) -> [f64; 9] {
        self.weights
    }

    /// Selection probabilities `ps_d = eta_d / sum(eta)`.
    pub fn probabilities(&self) -> [f64; 9] {
        let total: f64 = self.weights.iter().sum();
        let mut ps = self.weights;
        for p in &mut ps {
            *p /= total;
        }
        ps
    }

    pub fn select_destroy(&self, rng: &mut ChaCha8Rng) -> DestroyOp {
        let total: f64 = self.weights.iter().sum();
        let mut point = rng.random::<f64>() * total;
        for (ix, &w) in self.weights.iter().enumerate() {
            if point < w {
                return DESTROY_OPS[ix];
            }
            point -= w;
        }
        *DESTROY_OPS.last().unwrap()
    }

    pub fn select_repair(&self, rng: &mut ChaCha8Rng) -> RepairOp {
        if rng.random_range(0..2) == 0 {
            RepairOp::Greedy
        } else {
            RepairOp::Regret
        }
    }

    pub fn note_usage(&mut self, op: DestroyOp) {
        self.segment_usage[op.index()] += 1;
        self.total_usage[op.index()] += 1;
    }

    pub fn note_new_best(&mut self, op: DestroyOp) {
        self.new_best[op.index()] += 1;
    }

    pub fn credit(&mut self, op: DestroyOp, psi: f64) {
        self.segment_scores[op.index()] += psi;
    }

    /// Segment-boundary update: `eta <- lambda*eta + (1-lambda)*(score/usage)`
    /// for operators used in the segment; unused operators keep their weight.
    pub fn update_weights(&mut self, lambda: f64) {
        for ix in 0..9 {
            if self.segment_usage[ix] > 0 {
                let mean_score = self.segment_scores[ix] / self.segment_usage[ix] as f64;
                self.weights[ix] = lambda * self.weights[ix] + (1.0 - lambda) * mean_score;
            }
            self.segment_scores[ix] = 0.0;
            self.segment_usage[ix] = 0;
        }
        debug_assert!(self.weights.iter().all(|&w| w > 0.0));
        debug_assert!((self.probabilities().iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn fresh_bank_is_uniform() {
        let bank = OperatorBank::new();
        for p in bank.probabilities() {
            assert!((p - 1.0 / 9.0).abs() < 1e-12);
        }
    }

    #[test]
    fn selection_frequencies_match_probabilities() {
        let mut bank = OperatorBank::new();
        // skew the weights and verify the empirical distribution
        bank.note_usage(DestroyOp::Random);
        bank.credit(DestroyOp::Random, 7.0);
        bank.update_weights(0.5);
        let ps = bank.probabilities();

        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut counts = [0usize; 9];
        let draws = 100_000;
        for _ in 0..draws {
            counts[bank.select_destroy(&mut rng).index()] += 1;
        }
        for ix in 0..9 {
            let freq = counts[ix] as f64 / draws as f64;
            assert!(
                (freq - ps[ix]).abs() < 0.01,
                "op {ix}: freq {freq} vs ps {}",
                ps[ix]
            );
        }
    }

    #[test]
    fn unused_operator_keeps_weight() {
        let mut bank = OperatorBank::new();
        bank.note_usage(DestroyOp::Zone);
        bank.credit(DestroyOp::Zone, 4.0);
        bank.update_weights(0.8);
        let w = bank.weights();
        assert!((w[DestroyOp::Zone.index()] - (0.8 + 0.2 * 4.0)).abs() < 1e-12);
        for op in DESTROY_OPS {
            if op != DestroyOp::Zone {
                assert_eq!(w[op.index()], 1.0);
            }
        }
    }

    #[test]
    fn repeated_top_scores_converge_per_formula() {
        let mut bank = OperatorBank::new();
        bank.note_usage(DestroyOp::Random);
        bank.credit(DestroyOp::Random, 7.0);
        bank.update_weights(0.8);
        assert!((bank.weights()[0] - 2.2).abs() < 1e-12);
    }

    #[test]
    fn probabilities_always_renormalize() {
        let mut bank = OperatorBank::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            for _ in 0..10 {
                let op = bank.select_destroy(&mut rng);
                bank.note_usage(op);
                bank.credit(op, [7.0, 4.0, 2.0, 1.0][rng.random_range(0..4)]);
            }
            bank.update_weights(0.8);
            assert!((bank.probabilities().iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(bank.weights().iter().all(|&w| w > 0.0));
        }
    }
}
