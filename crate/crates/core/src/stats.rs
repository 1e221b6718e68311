//! Small descriptive-statistics helpers shared across modules.

/// Running mean and variance (Welford). Identical inputs give an exact mean.
#[derive(Debug, Clone, Copy, Default)]
pub struct Running {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Running {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Sample (n − 1) standard deviation; zero for fewer than two values.
    pub fn sample_std(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2.max(0.0) / (self.n - 1) as f64).sqrt()
        }
    }
}

impl FromIterator<f64> for Running {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut r = Running::default();
        iter.into_iter().for_each(|x| r.push(x));
        r
    }
}

pub fn median_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    median_sorted(&v)
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().copied().collect::<Running>().mean()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point() {
        let r: Running = [0.010, 0.020].into_iter().collect();
        assert!((r.mean() - 0.015).abs() < 1e-15);
        assert!((r.sample_std() - 0.01 / 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn identical_values_exact_mean() {
        let r: Running = std::iter::repeat_n(0.01042, 1000).collect();
        assert_eq!(r.mean(), 0.01042);
        assert_eq!(r.sample_std(), 0.0);
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }
}
