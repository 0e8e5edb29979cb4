use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndtensor::{Tape, Var};
use crate::scalar::Scalar;

/// Mean squared error between two equal-shape tape values.
pub fn mse_loss<T: Scalar>(tape: &mut Tape<T>, pred: Var, target: Var) -> Result<Var> {
    if tape.shape(pred) != tape.shape(target) {
        return Err(Error::ShapeMismatch(format!(
            "mse_loss: prediction {:?} vs target {:?}",
            tape.shape(pred),
            tape.shape(target)
        )));
    }
    let e = tape.sub(pred, target)?;
    let sq = tape.mul(e, e)?;
    Ok(tape.mean_all(sq))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mae: f64,
    pub rmse: f64,
    /// Percent.
    pub mape: f64,
}

/// MAE, RMSE and MAPE (in percent) of `preds` against strictly positive `targets`.
pub fn metrics(preds: &[f64], targets: &[f64]) -> Result<Metrics> {
    if preds.len() != targets.len() || preds.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "metrics: {} predictions for {} targets",
            preds.len(),
            targets.len()
        )));
    }
    if let Some(&t) = targets.iter().find(|&&t| !(t > 0.0)) {
        return Err(Error::NonPositiveTarget(t));
    }
    let n = preds.len() as f64;
    let (mut abs, mut sq, mut pct) = (0.0, 0.0, 0.0);
    for (&p, &t) in preds.iter().zip(targets) {
        let e = p - t;
        abs += e.abs();
        sq += e * e;
        pct += e.abs() / t;
    }
    Ok(Metrics {
        mae: abs / n,
        rmse: (sq / n).sqrt(),
        mape: 100.0 * pct / n,
    })
}

/// Mean and population standard deviation of each metric.
pub fn aggregate(all: &[Metrics]) -> (Metrics, Metrics) {
    let n = all.len() as f64;
    let stat = |f: fn(&Metrics) -> f64| {
        let mean = all.iter().map(f).sum::<f64>() / n;
        let var = all.iter().map(|m| (f(m) - mean).powi(2)).sum::<f64>() / n;
        (mean, var.sqrt())
    };
    let (mae, rmse, mape) = (stat(|m| m.mae), stat(|m| m.rmse), stat(|m| m.mape));
    (
        Metrics {
            mae: mae.0,
            rmse: rmse.0,
            mape: mape.0,
        },
        Metrics {
            mae: mae.1,
            rmse: rmse.1,
            mape: mape.1,
        },
    )
}
