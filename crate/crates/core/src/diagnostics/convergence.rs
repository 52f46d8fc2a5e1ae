use crate::error::{PlcmError, Result};

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample variance with denominator `n - 1`.
fn var(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

fn cov(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Brooks-Gelman corrected potential scale reduction factor.
///
/// Chains are truncated to the shortest one. With `m` chains of `n` draws,
/// between-chain variance `B`, mean within-chain variance `W` and pooled
/// estimate `V = (n-1)/n W + (m+1)/(mn) B`, returns
/// `sqrt((d + 3) / (d + 1) * V / W)` where `d = 2 V^2 / var(V)` are the
/// degrees of freedom of the Student-t approximation to the pooled
/// posterior. Zero within-chain variance gives NaN.
pub fn bgr_statistic(chains: &[Vec<f64>]) -> Result<f64> {
    let m = chains.len();
    if m < 2 {
        return Err(PlcmError::usage("BGR statistic needs at least two chains"));
    }
    let n = chains.iter().map(Vec::len).min().unwrap_or(0);
    if n < 10 {
        return Err(PlcmError::usage("BGR statistic needs at least 10 draws per chain"));
    }
    let chains: Vec<&[f64]> = chains.iter().map(|c| &c[..n]).collect();
    let (mf, nf) = (m as f64, n as f64);
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let vars: Vec<f64> = chains.iter().map(|c| var(c)).collect();
    let grand = mean(&means);
    let b = nf * var(&means);
    let w = mean(&vars);
    if w == 0.0 {
        return Ok(f64::NAN);
    }
    let v = (nf - 1.0) / nf * w + (mf + 1.0) / (mf * nf) * b;
    let means_sq: Vec<f64> = means.iter().map(|x| x * x).collect();
    let var_v = ((nf - 1.0) / nf).powi(2) / mf * var(&vars)
        + ((mf + 1.0) / (mf * nf)).powi(2) * 2.0 / (mf - 1.0) * b * b
        + 2.0 * (mf + 1.0) * (nf - 1.0) / (mf * nf * nf) * (nf / mf)
            * (cov(&vars, &means_sq) - 2.0 * grand * cov(&vars, &means));
    let df_factor = if var_v > 0.0 {
        let d = 2.0 * v * v / var_v;
        (d + 3.0) / (d + 1.0)
    } else {
        1.0
    };
    Ok((df_factor * v / w).sqrt())
}

/// Sample autocorrelation at lags `0..=max_lag`, normalized by the lag-0
/// sum of squares (biased estimator). `None` for constant or empty series.
pub fn autocorrelation(draws: &[f64], max_lag: usize) -> Option<Vec<f64>> {
    let n = draws.len();
    if n == 0 {
        return None;
    }
    let m = mean(draws);
    let c: Vec<f64> = draws.iter().map(|x| x - m).collect();
    let c0: f64 = c.iter().map(|x| x * x).sum();
    if c0 == 0.0 || !c0.is_finite() {
        return None;
    }
    Some(
        (0..=max_lag.min(n - 1))
            .map(|k| c[..n - k].iter().zip(&c[k..]).map(|(a, b)| a * b).sum::<f64>() / c0)
            .collect(),
    )
}

/// Multi-chain effective sample size using Geyer's initial monotone
/// positive sequence on the combined autocorrelation estimate. NaN for
/// constant draws.
pub fn effective_sample_size(chains: &[Vec<f64>]) -> f64 {
    let m = chains.len();
    let n = chains.iter().map(Vec::len).min().unwrap_or(0);
    if m == 0 || n < 4 {
        return f64::NAN;
    }
    let chains: Vec<&[f64]> = chains.iter().map(|c| &c[..n]).collect();
    let nf = n as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let centered: Vec<Vec<f64>> = chains
        .iter()
        .zip(&means)
        .map(|(c, mu)| c.iter().map(|x| x - mu).collect())
        .collect();
    let autocov = |t: usize| -> f64 {
        centered
            .iter()
            .map(|c| c[..n - t].iter().zip(&c[t..]).map(|(a, b)| a * b).sum::<f64>() / nf)
            .sum::<f64>()
            / m as f64
    };
    let w = chains.iter().map(|c| var(c)).sum::<f64>() / m as f64;
    if w == 0.0 {
        return f64::NAN;
    }
    let b_over_n = if m > 1 { var(&means) } else { 0.0 };
    let var_plus = (nf - 1.0) / nf * w + b_over_n;
    let rho = |t: usize| 1.0 - (w - autocov(t)) / var_plus;

    let mut tau = -1.0;
    let mut prev_pair = f64::INFINITY;
    let mut t = 0;
    while t + 1 < n {
        let mut pair = rho(t) + rho(t + 1);
        if pair <= 0.0 {
            break;
        }
        // monotone sequence
        pair = pair.min(prev_pair);
        prev_pair = pair;
        tau += 2.0 * pair;
        t += 2;
    }
    // antithetic chains can push tau toward zero; cap ESS at N log10(N)
    let total = m as f64 * nf;
    total / tau.max(1.0 / total.log10())
}

/// Monte Carlo standard error of the posterior mean.
pub fn mc_standard_error(chains: &[Vec<f64>]) -> f64 {
    let pooled: Vec<f64> = chains.iter().flatten().copied().collect();
    if pooled.len() < 2 {
        return f64::NAN;
    }
    (var(&pooled) / effective_sample_size(chains)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use rand_distr::{Distribution, Normal};

    fn normal_chain(seed: u64, n: usize, mu: f64) -> Vec<f64> {
        let mut rng = stream_rng(seed, 0);
        let d = Normal::new(mu, 1.0).unwrap();
        (0..n).map(|_| d.sample(&mut rng)).collect()
    }

    fn ar1(seed: u64, n: usize, phi: f64) -> Vec<f64> {
        let mut rng = stream_rng(seed, 0);
        let d = Normal::new(0.0, 1.0).unwrap();
        let mut x = 0.0;
        (0..n)
            .map(|_| {
                x = phi * x + d.sample(&mut rng);
                x
            })
            .collect()
    }

    #[test]
    fn bgr_identical_chains() {
        let c = normal_chain(1, 200, 0.0);
        let r = bgr_statistic(&[c.clone(), c.clone(), c]).unwrap();
        assert!((r - (199.0f64 / 200.0).sqrt()).abs() < 1e-6, "{r}");
    }

    #[test]
    fn bgr_same_target_tends_to_one() {
        let small = bgr_statistic(&[normal_chain(1, 50, 0.0), normal_chain(2, 50, 0.0)]).unwrap();
        let large = bgr_statistic(&[normal_chain(3, 20_000, 0.0), normal_chain(4, 20_000, 0.0)]).unwrap();
        assert!((large - 1.0).abs() < 0.01, "{large}");
        assert!((large - 1.0).abs() <= (small - 1.0).abs() + 0.01);
    }

    #[test]
    fn bgr_separated_chains() {
        let r = bgr_statistic(&[normal_chain(1, 500, 0.0), normal_chain(2, 500, 10.0)]).unwrap();
        assert!(r > 1.1 * 5.0, "{r}");
    }

    #[test]
    fn bgr_usage_errors() {
        assert!(bgr_statistic(&[normal_chain(1, 100, 0.0)]).is_err());
        assert!(bgr_statistic(&[vec![0.0; 5], vec![1.0; 5]]).is_err());
        assert!(bgr_statistic(&[vec![1.0; 20], vec![1.0; 20]]).unwrap().is_nan());
    }

    #[test]
    fn acf_basics() {
        let x = normal_chain(7, 5000, 0.0);
        let acf = autocorrelation(&x, 20).unwrap();
        assert_eq!(acf[0], 1.0);
        let band = 3.0 / (5000f64).sqrt();
        assert!(acf[1..].iter().all(|r| r.abs() < band), "{acf:?}");
        assert!(autocorrelation(&[2.0; 10], 3).is_none());
        let acf = autocorrelation(&ar1(3, 50_000, 0.8), 2).unwrap();
        assert!((acf[1] - 0.8).abs() < 0.02, "{}", acf[1]);
    }

    #[test]
    fn ess_orders() {
        let iid = vec![normal_chain(1, 4000, 0.0), normal_chain(2, 4000, 0.0)];
        let ess = effective_sample_size(&iid);
        assert!(ess > 6000.0 && ess < 10_000.0, "{ess}");
        // AR(1) with phi = 0.8 has integrated time 9
        let corr = vec![ar1(3, 20_000, 0.8), ar1(4, 20_000, 0.8)];
        let ess = effective_sample_size(&corr);
        assert!(ess > 40_000.0 / 13.0 && ess < 40_000.0 / 6.0, "{ess}");
    }
}
