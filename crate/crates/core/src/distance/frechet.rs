use crate::data::TimeSeries;
use crate::error::{CfxError, Result};

/// Discrete Fréchet distance with L2 point cost over channels.
pub fn frechet(a: &TimeSeries, b: &TimeSeries) -> Result<f64> {
    if a.channels() != b.channels() {
        return Err(CfxError::shape(
            format!("{} channels", a.channels()),
            format!("{} channels", b.channels()),
        ));
    }
    let (n, m) = (a.length(), b.length());
    let cost = |i: usize, j: usize| {
        (0..a.channels())
            .map(|c| {
                let d = a.get(c, i) - b.get(c, j);
                d * d
            })
            .sum::<f64>()
            .sqrt()
    };
    let mut prev = vec![0.0f64; m];
    let mut curr = vec![0.0f64; m];
    for i in 0..n {
        for j in 0..m {
            let reach = match (i, j) {
                (0, 0) => 0.0,
                (0, _) => curr[j - 1],
                (_, 0) => prev[0],
                _ => prev[j].min(curr[j - 1]).min(prev[j - 1]),
            };
            curr[j] = cost(i, j).max(reach);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    Ok(prev[m - 1])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uni(v: &[f64]) -> TimeSeries {
        TimeSeries::univariate(v.to_vec()).unwrap()
    }

    #[test]
    fn examples() {
        assert_eq!(frechet(&uni(&[1.0, 5.0]), &uni(&[1.0, 5.0])).unwrap(), 0.0);
        assert_eq!(frechet(&uni(&[0.0, 0.0]), &uni(&[0.0, 1.0])).unwrap(), 1.0);
        assert_eq!(frechet(&uni(&[0.0, 3.0, 0.0]), &uni(&[0.0])).unwrap(), 3.0);
    }

    #[test]
    fn channel_mismatch() {
        let a = TimeSeries::from_channels(vec![vec![0.0], vec![0.0]]).unwrap();
        assert!(matches!(frechet(&a, &uni(&[0.0])), Err(CfxError::Shape { .. })));
    }
}
