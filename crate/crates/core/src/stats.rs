//! Summary statistics with compensated accumulation.

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut acc = CompensatedSum::default();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

/// Two-sided standard-normal quantile for the supported confidence levels.
pub fn normal_quantile(confidence: f64) -> f64 {
    // Acklam's rational approximation of the inverse normal CDF.
    let p = 0.5 + confidence / 2.0;
    inverse_normal_cdf(p)
}

fn inverse_normal_cdf(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    let p_low = 0.02425;
    if p < p_low {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - p_low {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -inverse_normal_cdf(1.0 - p)
    }
}

/// Sample mean and normal-approximation confidence half-width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanEstimate {
    pub mean: f64,
    pub half_width: f64,
    pub std_dev: f64,
    pub count: usize,
}

pub fn mean_with_ci(samples: &[f64], confidence: f64) -> MeanEstimate {
    let n = samples.len();
    if n == 0 {
        return MeanEstimate {
            mean: 0.0,
            half_width: 0.0,
            std_dev: 0.0,
            count: 0,
        };
    }
    let mean = compensated_sum(samples.iter().copied()) / n as f64;
    let var = if n > 1 {
        compensated_sum(samples.iter().map(|x| (x - mean) * (x - mean))) / (n - 1) as f64
    } else {
        0.0
    };
    let std_dev = var.sqrt();
    MeanEstimate {
        mean,
        half_width: normal_quantile(confidence) * std_dev / (n as f64).sqrt(),
        std_dev,
        count: n,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_95() {
        assert!((normal_quantile(0.95) - 1.959_964).abs() < 1e-5);
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut v = vec![1e16, 1.0, -1e16];
        v.extend(std::iter::repeat(1e-3).take(1000));
        assert!((compensated_sum(v) - 2.0).abs() < 1e-9);
    }

    #[test]
    fn ci_of_constant_is_zero() {
        let est = mean_with_ci(&[3.0; 10], 0.95);
        assert_eq!(est.mean, 3.0);
        assert_eq!(est.half_width, 0.0);
    }
}
