use num_complex::Complex64;

/// Least-squares slope of `ys` against `xs`; `None` with fewer than two
/// points or degenerate abscissae.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len().min(ys.len());
    if n < 2 {
        return None;
    }
    let mx = xs[..n].iter().sum::<f64>() / n as f64;
    let my = ys[..n].iter().sum::<f64>() / n as f64;
    let sxy: f64 = xs[..n]
        .iter()
        .zip(&ys[..n])
        .map(|(x, y)| (x - mx) * (y - my))
        .sum();
    let sxx: f64 = xs[..n].iter().map(|x| (x - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Sample mean and standard error of complex samples. The error is the
/// Euclidean norm of the componentwise (real, imaginary) standard errors.
/// Summation runs in slice order so the result is reproducible bit for bit.
pub fn mean_and_stderr(samples: &[Complex64]) -> (Complex64, f64) {
    let n = samples.len();
    if n == 0 {
        return (Complex64::new(f64::NAN, f64::NAN), f64::NAN);
    }
    let mean = samples.iter().sum::<Complex64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let (vr, vi) = samples.iter().fold((0.0, 0.0), |(vr, vi), z| {
        (vr + (z.re - mean.re).powi(2), vi + (z.im - mean.im).powi(2))
    });
    let denom = (n - 1) as f64 * n as f64;
    (mean, (vr / denom + vi / denom).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let xs: Vec<f64> = [2.0f64, 4.0, 8.0].iter().map(|d| d.ln()).collect();
        let ys: Vec<f64> = [2.0f64, 4.0, 8.0]
            .iter()
            .map(|d| (3.0 / (d * d)).ln())
            .collect();
        assert!((fit_slope(&xs, &ys).unwrap() + 2.0).abs() < 1e-12);
        assert_eq!(fit_slope(&[1.0], &[1.0]), None);
        assert_eq!(fit_slope(&[1.0, 1.0], &[1.0, 2.0]), None);
    }

    #[test]
    fn stderr_of_constant_is_zero() {
        let s = vec![Complex64::new(1.0, 0.0); 10];
        assert_eq!(mean_and_stderr(&s), (Complex64::new(1.0, 0.0), 0.0));
    }

    #[test]
    fn stderr_matches_hand_computation() {
        let s = [Complex64::new(1.0, 2.0), Complex64::new(3.0, 2.0)];
        let (m, e) = mean_and_stderr(&s);
        assert_eq!(m, Complex64::new(2.0, 2.0));
        // real variance 2, stderr sqrt(2/2) = 1; imaginary part constant
        assert!((e - 1.0).abs() < 1e-15);
    }
}
