use super::{require_two_classes, Classifier, ProbVector};
use crate::data::{Dataset, TimeSeries};
use crate::distance::DistanceConfig;
use crate::error::{CfxError, Result};

/// k-nearest-neighbour vote over a stored training set.
#[derive(Debug, Clone, PartialEq)]
pub struct Knn {
    train: Dataset,
    k: usize,
    metric: DistanceConfig,
}

pub fn train_knn(train: &Dataset, k: usize, metric: DistanceConfig) -> Result<Knn> {
    if train.is_empty() {
        return Err(CfxError::Train {
            epoch: 0,
            message: "empty training set".into(),
        });
    }
    require_two_classes(train)?;
    if k == 0 || k > train.len() {
        return Err(CfxError::Config(format!("k must be in 1..={}, got {k}", train.len())));
    }
    Ok(Knn {
        train: train.clone(),
        k,
        metric,
    })
}

impl Knn {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn metric(&self) -> &DistanceConfig {
        &self.metric
    }

    pub fn training_set(&self) -> &Dataset {
        &self.train
    }

    /// Indices of the k nearest training instances, nearest first; distance
    /// ties go to the lower index.
    pub fn neighbors(&self, x: &TimeSeries) -> Result<Vec<(usize, f64)>> {
        self.check_input(x)?;
        let mut dists = self
            .train
            .instances()
            .iter()
            .enumerate()
            .map(|(i, inst)| Ok((i, self.metric.distance(x, &inst.series)?)))
            .collect::<Result<Vec<_>>>()?;
        dists.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        dists.truncate(self.k);
        Ok(dists)
    }
}

impl Classifier for Knn {
    fn num_classes(&self) -> usize {
        self.train.num_classes()
    }

    fn input_shape(&self) -> (usize, usize) {
        self.train.shape()
    }

    fn predict_proba(&self, x: &TimeSeries) -> Result<ProbVector> {
        let mut votes = vec![0.0; self.num_classes()];
        for (i, _) in self.neighbors(x)? {
            votes[self.train.instance(i).label] += 1.0;
        }
        votes.iter_mut().for_each(|v| *v /= self.k as f64);
        Ok(ProbVector(votes))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::parse_ucr_tsv;

    #[test]
    fn self_match_is_one_hot() {
        let d = parse_ucr_tsv("a\t0\t0\nb\t5\t5\na\t1\t0").unwrap();
        let knn = train_knn(&d, 1, DistanceConfig::default()).unwrap();
        for inst in d.instances() {
            let p = knn.predict_proba(&inst.series).unwrap();
            assert_eq!(p.get(inst.label), 1.0);
        }
    }

    #[test]
    fn vote_fractions() {
        let d = parse_ucr_tsv("a\t0\nb\t2").unwrap();
        let knn = train_knn(&d, 2, DistanceConfig::default()).unwrap();
        let p = knn.predict_proba(&TimeSeries::univariate(vec![0.9]).unwrap()).unwrap();
        assert_eq!(p.as_slice(), &[0.5, 0.5]);
    }

    #[test]
    fn distance_ties_prefer_lower_index() {
        let d = parse_ucr_tsv("b\t1\na\t-1").unwrap();
        let knn = train_knn(&d, 1, DistanceConfig::default()).unwrap();
        let x = TimeSeries::univariate(vec![0.0]).unwrap();
        assert_eq!(knn.neighbors(&x).unwrap()[0].0, 0);
        assert_eq!(knn.predict(&x).unwrap(), 0);
    }

    #[test]
    fn bad_k() {
        let d = parse_ucr_tsv("a\t0\nb\t2").unwrap();
        assert!(train_knn(&d, 3, DistanceConfig::default()).is_err());
        assert!(train_knn(&d, 0, DistanceConfig::default()).is_err());
        let single = parse_ucr_tsv("a\t0\na\t2").unwrap();
        assert!(matches!(train_knn(&single, 1, DistanceConfig::default()), Err(CfxError::Train { .. })));
    }
}
