use super::{DistanceConfig, MultivariateMode};
use crate::data::TimeSeries;
use crate::error::{CfxError, Result};

/// Dynamic time warping with steps (i-1, j), (i, j-1), (i-1, j-1) and an
/// optional Sakoe-Chiba band. Series may differ in length but must share
/// the channel count.
pub fn dtw(a: &TimeSeries, b: &TimeSeries, cfg: &DistanceConfig) -> Result<f64> {
    if a.channels() != b.channels() {
        return Err(CfxError::shape(
            format!("{} channels", a.channels()),
            format!("{} channels", b.channels()),
        ));
    }
    let (n, m) = (a.length(), b.length());
    if let Some(band) = cfg.dtw_band {
        if n.abs_diff(m) > band {
            return Err(CfxError::Band { band, len_a: n, len_b: m });
        }
    }
    let square = cfg.squared_cost;
    match cfg.multivariate {
        MultivariateMode::Dependent => Ok(accumulate(n, m, cfg.dtw_band, |i, j| {
            let sq: f64 = (0..a.channels())
                .map(|c| {
                    let d = a.get(c, i) - b.get(c, j);
                    d * d
                })
                .sum();
            if square {
                sq
            } else {
                sq.sqrt()
            }
        })),
        MultivariateMode::Independent => Ok((0..a.channels())
            .map(|c| {
                let (xa, xb) = (a.channel(c), b.channel(c));
                accumulate(n, m, cfg.dtw_band, |i, j| {
                    let d = xa[i] - xb[j];
                    if square {
                        d * d
                    } else {
                        d.abs()
                    }
                })
            })
            .sum()),
    }
}

fn accumulate(n: usize, m: usize, band: Option<usize>, cost: impl Fn(usize, usize) -> f64) -> f64 {
    let w = band.unwrap_or(usize::MAX);
    let mut prev = vec![f64::INFINITY; m + 1];
    let mut curr = vec![f64::INFINITY; m + 1];
    prev[0] = 0.0;
    for i in 1..=n {
        curr.fill(f64::INFINITY);
        let lo = if w == usize::MAX { 1 } else { i.saturating_sub(w).max(1) };
        let hi = if w == usize::MAX { m } else { (i + w).min(m) };
        for j in lo..=hi {
            let best = prev[j - 1].min(prev[j]).min(curr[j - 1]);
            curr[j] = cost(i - 1, j - 1) + best;
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[m]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uni(v: &[f64]) -> TimeSeries {
        TimeSeries::univariate(v.to_vec()).unwrap()
    }

    #[test]
    fn examples() {
        let cfg = DistanceConfig::default();
        assert_eq!(dtw(&uni(&[1.0, 2.0, 3.0]), &uni(&[1.0, 2.0, 3.0]), &cfg).unwrap(), 0.0);
        assert_eq!(dtw(&uni(&[0.0, 0.0, 1.0]), &uni(&[0.0, 1.0, 1.0]), &cfg).unwrap(), 0.0);
        assert_eq!(dtw(&uni(&[0.0, 1.0]), &uni(&[1.0, 0.0]), &cfg).unwrap(), 2.0);
    }

    #[test]
    fn band_zero_is_pointwise_l1() {
        let cfg = DistanceConfig {
            dtw_band: Some(0),
            ..DistanceConfig::default()
        };
        let d = dtw(&uni(&[0.0, 0.0, 1.0]), &uni(&[0.0, 1.0, 1.0]), &cfg).unwrap();
        assert_eq!(d, 1.0);
    }

    #[test]
    fn band_too_narrow_for_lengths() {
        let cfg = DistanceConfig {
            dtw_band: Some(1),
            ..DistanceConfig::default()
        };
        let err = dtw(&uni(&[0.0; 2]), &uni(&[0.0; 5]), &cfg).unwrap_err();
        assert!(matches!(err, CfxError::Band { band: 1, len_a: 2, len_b: 5 }));
    }

    #[test]
    fn unequal_lengths() {
        let d = dtw(&uni(&[0.0, 1.0, 2.0]), &uni(&[0.0, 2.0]), &DistanceConfig::default()).unwrap();
        assert_eq!(d, 1.0);
    }

    #[test]
    fn multivariate_modes() {
        let a = TimeSeries::from_channels(vec![vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let b = TimeSeries::from_channels(vec![vec![3.0, 3.0], vec![4.0, 4.0]]).unwrap();
        let dep = dtw(&a, &b, &DistanceConfig::default()).unwrap();
        assert_eq!(dep, 10.0);
        let ind = DistanceConfig {
            multivariate: MultivariateMode::Independent,
            ..DistanceConfig::default()
        };
        assert_eq!(dtw(&a, &b, &ind).unwrap(), 14.0);
        let sq = DistanceConfig {
            squared_cost: true,
            ..DistanceConfig::default()
        };
        assert_eq!(dtw(&a, &b, &sq).unwrap(), 50.0);
    }
}
