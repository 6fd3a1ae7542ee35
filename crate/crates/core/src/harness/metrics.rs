use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Actuals closer to zero than this are left out of MAPE.
pub const MAPE_FLOOR: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mape {
    pub percent: f64,
    /// Rows skipped because the actual value was below [`MAPE_FLOOR`].
    pub excluded: usize,
}

/// Mean absolute percentage error, in percent.
pub fn mape(y: &[f64], yhat: &[f64]) -> Result<f64> {
    Ok(mape_detailed(y, yhat)?.percent)
}

pub fn mape_detailed(y: &[f64], yhat: &[f64]) -> Result<Mape> {
    if y.len() != yhat.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            got: yhat.len(),
        });
    }
    if y.is_empty() {
        return Err(Error::Empty("mape input"));
    }
    let mut sum = 0.0;
    let mut used = 0usize;
    for (a, p) in y.iter().zip(yhat) {
        if a.abs() < MAPE_FLOOR {
            continue;
        }
        sum += ((a - p) / a).abs();
        used += 1;
    }
    if used == 0 {
        return Err(Error::AllRowsExcluded(y.len()));
    }
    Ok(Mape {
        percent: sum / used as f64 * 100.0,
        excluded: y.len() - used,
    })
}

/// Mean target of the `k` rows of `train` nearest to `x` (Euclidean), ties
/// going to the lower row index. Both sides must already share a scale.
pub fn knn_predict(train: &Dataset, x: &[f64], k: usize) -> Result<f64> {
    if train.is_empty() {
        return Err(Error::NoRows);
    }
    if k == 0 || k > train.n_rows() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} with {} training rows",
            train.n_rows()
        )));
    }
    if x.len() != train.n_features() {
        return Err(Error::DimensionMismatch {
            expected: train.n_features(),
            got: x.len(),
        });
    }
    let mut dist: Vec<(f64, usize)> = train
        .rows()
        .enumerate()
        .map(|(i, r)| (r.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum(), i))
        .collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < dist.len() {
        dist.select_nth_unstable_by(k - 1, cmp);
    }
    let y = train.targets();
    Ok(dist[..k].iter().map(|&(_, i)| y[i]).sum::<f64>() / k as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::FeatureSchema;
    use proptest::prelude::*;

    #[test]
    fn hand_cases() {
        assert_eq!(mape(&[100.0, 200.0], &[110.0, 180.0]).unwrap(), 10.0);
        assert_eq!(mape(&[3.0, -4.0], &[3.0, -4.0]).unwrap(), 0.0);
        let m = mape_detailed(&[0.0, 50.0], &[1.0, 55.0]).unwrap();
        assert_eq!(m.excluded, 1);
        assert!((m.percent - 10.0).abs() < 1e-12);
        assert!(matches!(
            mape(&[0.0, 1e-9], &[1.0, 1.0]),
            Err(Error::AllRowsExcluded(2))
        ));
        assert!(mape(&[1.0], &[1.0, 2.0]).is_err());
        assert!(mape(&[], &[]).is_err());
    }

    fn grid() -> Dataset {
        let schema = FeatureSchema::new(["u", "v"], "y").unwrap();
        let rows = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 2.0], vec![3.0, 3.0]];
        Dataset::new(schema, rows, vec![1.0, 2.0, 3.0, 4.0]).unwrap()
    }

    #[test]
    fn knn_cases() {
        let ds = grid();
        assert_eq!(knn_predict(&ds, &[3.0, 3.0], 1).unwrap(), 4.0);
        assert_eq!(knn_predict(&ds, &[9.0, -9.0], 4).unwrap(), 2.5);
        // (0.5, 0) is equidistant from rows 0 and 1; k = 1 takes row 0
        assert_eq!(knn_predict(&ds, &[0.5, 0.0], 1).unwrap(), 1.0);
        assert!(knn_predict(&ds, &[0.0, 0.0], 5).is_err());
        assert!(knn_predict(&ds, &[0.0], 1).is_err());
    }

    proptest! {
        #[test]
        fn mape_scale_invariant(
            pairs in proptest::collection::vec((1.0f64..100.0, 0.0f64..200.0), 1..30),
            c in 0.01f64..100.0,
        ) {
            let (y, p): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let a = mape(&y, &p).unwrap();
            prop_assert!(a >= 0.0);
            let ys: Vec<f64> = y.iter().map(|v| v * c).collect();
            let ps: Vec<f64> = p.iter().map(|v| v * c).collect();
            prop_assert!((mape(&ys, &ps).unwrap() - a).abs() <= 1e-9 * a.max(1.0));
            prop_assert_eq!(mape(&y, &y).unwrap(), 0.0);
        }
    }
}
