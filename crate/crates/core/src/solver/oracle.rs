use crate::error::{Error, Result};
use crate::problem::{Design, Solution};

/// Largest `C(m_free, budget) * (budget + 1)` the oracle accepts.
pub const ORACLE_LIMIT: f64 = 1e6;

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Exact optimum by enumerating every discard set of size at most the budget
/// over the non-reliable rows, refitting each. Ties go to the set found
/// first: smaller sets, then lexicographically smaller indices.
pub fn enumerate_oracle(design: &Design) -> Result<Solution> {
    let free: Vec<usize> = (0..design.m()).filter(|&i| !design.reliable[i]).collect();
    let b = design.budget.min(free.len());
    let work = binomial(free.len(), b) * (b + 1) as f64;
    if work > ORACLE_LIMIT {
        return Err(Error::OracleTooLarge {
            work,
            limit: ORACLE_LIMIT,
        });
    }
    let mut best = design.fit_subset(&vec![false; design.m()])?;
    for size in 1..=b {
        let mut pick: Vec<usize> = (0..size).collect();
        loop {
            let mut flags = vec![false; design.m()];
            for &j in &pick {
                flags[free[j]] = true;
            }
            let sol = design.fit_subset(&flags)?;
            if sol.objective < best.objective {
                best = sol;
            }
            // next combination in lexicographic order
            let mut i = size;
            while i > 0 && pick[i - 1] == free.len() - size + i - 1 {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            pick[i - 1] += 1;
            for j in i..size {
                pick[j] = pick[j - 1] + 1;
            }
        }
    }
    Ok(best)
}
