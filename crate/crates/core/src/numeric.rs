//! Log-space helpers shared by the divergence, solver and sampler code.

/// `ln Σ exp(x_i)`, returning `-inf` for an empty slice or all `-inf` entries.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Normalizes log-weights into probabilities. Returns `None` when every
/// weight is `-inf` (zero total mass).
pub fn normalize_log_weights(log_w: &[f64]) -> Option<Vec<f64>> {
    let lse = log_sum_exp(log_w);
    if !lse.is_finite() {
        return None;
    }
    let mut probs: Vec<f64> = log_w.iter().map(|&x| (x - lse).exp()).collect();
    // renormalize the rounding residue so the sum is 1 to machine precision
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    Some(probs)
}

/// Streaming `ln((1/n) Σ exp(x_i))` with a running shift, O(1) memory.
#[derive(Debug, Clone, Copy)]
pub struct LogMeanExp {
    shift: f64,
    scaled_sum: f64,
    count: usize,
}

impl Default for LogMeanExp {
    fn default() -> Self {
        Self::new()
    }
}

impl LogMeanExp {
    pub fn new() -> Self {
        Self {
            shift: f64::NEG_INFINITY,
            scaled_sum: 0.0,
            count: 0,
        }
    }

    pub fn push(&mut self, x: f64) {
        self.count += 1;
        if x == f64::NEG_INFINITY {
            return;
        }
        if x > self.shift {
            if self.shift > f64::NEG_INFINITY {
                self.scaled_sum *= (self.shift - x).exp();
            }
            self.shift = x;
        }
        self.scaled_sum += (x - self.shift).exp();
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Logarithm of the mean; `-inf` when nothing (or only `-inf`) was pushed.
    pub fn value(&self) -> f64 {
        if self.count == 0 || self.scaled_sum == 0.0 {
            return f64::NEG_INFINITY;
        }
        self.shift + self.scaled_sum.ln() - (self.count as f64).ln()
    }
}

/// Total variation distance between two probability vectors of equal length.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_sum_exp_handles_large_exponents() {
        let v = log_sum_exp(&[1e6, 1e6]);
        assert!((v - (1e6 + 2f64.ln())).abs() < 1e-9);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY; 3]), f64::NEG_INFINITY);
    }

    #[test]
    fn streaming_mean_matches_batch() {
        let xs = [3.0, -1.0, 250.0, 249.5, f64::NEG_INFINITY, 0.0];
        let mut acc = LogMeanExp::new();
        xs.iter().for_each(|&x| acc.push(x));
        let batch = log_sum_exp(&xs) - (xs.len() as f64).ln();
        assert!((acc.value() - batch).abs() < 1e-12);
    }

    #[test]
    fn normalize_rejects_zero_mass() {
        assert!(normalize_log_weights(&[f64::NEG_INFINITY, f64::NEG_INFINITY]).is_none());
        let p = normalize_log_weights(&[0.0, 2f64.ln()]).unwrap();
        assert!((p[0] - 1.0 / 3.0).abs() < 1e-15);
    }
}
