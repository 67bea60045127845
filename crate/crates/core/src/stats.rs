//! Small descriptive statistics shared by the miner and the evaluator.

use alloc::vec::Vec;

/// Percentile with linear interpolation between closest ranks (inclusive
/// method): position `p * (n - 1)` into the sorted sample.
///
/// `p` is a fraction in `[0, 1]`. Returns `None` for an empty sample.
pub fn percentile(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let p = p.clamp(0.0, 1.0);
    let h = p * (sorted.len() - 1) as f64;
    let lo = libm::floor(h) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = h - lo as f64;
    Some(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
}

pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolates_between_ranks() {
        let v = [0.0, 2.0, 0.5, 1.5];
        assert_eq!(percentile(&v, 0.5), Some(1.0));
        assert_eq!(percentile(&v, 0.75), Some(1.625));
        assert_eq!(percentile(&v, 0.0), Some(0.0));
        assert_eq!(percentile(&v, 1.0), Some(2.0));
        assert_eq!(percentile(&[], 0.5), None);
        assert_eq!(percentile(&[3.0], 0.75), Some(3.0));
    }

    #[test]
    fn exact_rank_when_position_is_integral() {
        // n = 5: 0.75 * 4 = 3, so the 4th smallest value exactly.
        assert_eq!(percentile(&[5.0, 1.0, 4.0, 2.0, 3.0], 0.75), Some(4.0));
    }
}
