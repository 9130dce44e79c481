/// Solution of `min sum s_i / z_i` over `sum z <= budget`, `0 < z <= 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZStep {
    pub z: Vec<f64>,
    /// Budget multiplier; `z_i = min(1, sqrt(s_i / mu))`. Zero when the budget
    /// does not bind.
    pub mu: f64,
    /// All scores were zero and the budget was spread uniformly.
    pub degenerate: bool,
}

impl ZStep {
    pub fn objective(&self, scores: &[f64]) -> f64 {
        scores
            .iter()
            .zip(&self.z)
            .filter(|(s, _)| **s > 0.0)
            .map(|(s, z)| s / z)
            .sum()
    }
}

/// Water-filling: sort `sqrt(s)` in decreasing order and find how many
/// entries sit at the cap of one.
pub fn z_step(scores: &[f64], budget: f64) -> ZStep {
    let m = scores.len();
    assert!(scores.iter().all(|&s| s >= 0.0), "scores must be nonnegative");
    assert!(budget >= 0.0, "budget must be nonnegative");
    let positive = scores.iter().filter(|&&s| s > 0.0).count();
    if positive == 0 {
        let each = if m == 0 { 0.0 } else { (budget / m as f64).min(1.0) };
        return ZStep {
            z: vec![each; m],
            mu: 0.0,
            degenerate: true,
        };
    }
    if budget >= positive as f64 {
        let z = scores.iter().map(|&s| if s > 0.0 { 1.0 } else { 0.0 }).collect();
        return ZStep {
            z,
            mu: 0.0,
            degenerate: false,
        };
    }
    let mut order: Vec<usize> = (0..m).filter(|&i| scores[i] > 0.0).collect();
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]).then(i.cmp(&j)));
    let sq: Vec<f64> = order.iter().map(|&i| scores[i].sqrt()).collect();
    let mut tail: f64 = sq.iter().sum();
    let mut root_mu = 0.0;
    for capped in 0..sq.len() {
        let left = budget - capped as f64;
        if left <= 0.0 {
            break;
        }
        root_mu = tail / left;
        // the largest uncapped entry must not exceed one
        if sq[capped] <= root_mu {
            break;
        }
        tail -= sq[capped];
    }
    let z = scores
        .iter()
        .map(|&s| if s > 0.0 { (s.sqrt() / root_mu).min(1.0) } else { 0.0 })
        .collect();
    ZStep {
        z,
        mu: root_mu * root_mu,
        degenerate: false,
    }
}
