//! Demand scenarios: an accurate series the plant actually sees and an
//! approximate long-range forecast, both at the fine sample period.
//!
//! Every window is total: indices past the end of a series repeat its final
//! value.

use std::path::Path;

use nalgebra::DVector;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DemandScenario {
    actual: Vec<DVector<f64>>,
    approximate: Vec<DVector<f64>>,
    duration_steps: usize,
}

impl DemandScenario {
    pub fn new(actual: Vec<DVector<f64>>, approximate: Vec<DVector<f64>>, duration_steps: usize) -> Result<Self> {
        if actual.is_empty() || approximate.is_empty() {
            return Err(Error::InvalidArgument("demand series must be nonempty".into()));
        }
        if actual.len() < duration_steps {
            return Err(Error::InvalidArgument(format!(
                "actual series has {} samples, duration is {duration_steps}",
                actual.len()
            )));
        }
        if approximate.len() < duration_steps {
            return Err(Error::InvalidArgument(format!(
                "approximate series has {} samples, duration is {duration_steps}",
                approximate.len()
            )));
        }
        let h = actual[0].len();
        if let Some(bad) = actual.iter().chain(&approximate).find(|d| d.len() != h) {
            return Err(Error::dims("demand", h, bad.len()));
        }
        Ok(Self {
            actual,
            approximate,
            duration_steps,
        })
    }

    /// Scalar series convenience constructor.
    pub fn from_scalars(actual: &[f64], approximate: &[f64], duration_steps: usize) -> Result<Self> {
        let wrap = |s: &[f64]| s.iter().map(|&v| DVector::from_element(1, v)).collect();
        Self::new(wrap(actual), wrap(approximate), duration_steps)
    }

    /// Shipped test fixture (not measured data): the forecast is a constant
    /// 0.4 over 120 steps, while the actual demand adds two pulses of 1.0 on
    /// top of that baseline over steps 10–40 and 70–85 inclusive.
    pub fn fixture() -> Self {
        let duration = 120;
        let approximate = vec![0.4; duration];
        let actual: Vec<f64> = (0..duration)
            .map(|k| {
                if (10..=40).contains(&k) || (70..=85).contains(&k) {
                    0.4 + 1.0
                } else {
                    0.4
                }
            })
            .collect();
        Self::from_scalars(&actual, &approximate, duration).expect("fixture is well formed")
    }

    /// Both fidelities equal to the given series.
    pub fn perfect_forecast(series: &[f64]) -> Result<Self> {
        Self::from_scalars(series, series, series.len())
    }

    pub fn duration_steps(&self) -> usize {
        self.duration_steps
    }

    pub fn n_demands(&self) -> usize {
        self.actual[0].len()
    }

    pub fn actual(&self) -> &[DVector<f64>] {
        &self.actual
    }

    pub fn approximate(&self) -> &[DVector<f64>] {
        &self.approximate
    }

    /// Actual demand applied to the plant at fine step `k` (hold-last).
    pub fn actual_at(&self, k: usize) -> &DVector<f64> {
        hold_last(&self.actual, k)
    }

    /// `actual[k .. k + length]`.
    pub fn accurate_preview(&self, k: usize, length: usize) -> Vec<DVector<f64>> {
        (k..k + length).map(|i| hold_last(&self.actual, i).clone()).collect()
    }

    /// Approximate series sampled at fine indices `k_s·nu, (k_s+1)·nu, …`.
    pub fn approximate_preview(&self, k_s: usize, length: usize, nu: usize) -> Vec<DVector<f64>> {
        let nu = nu.max(1);
        (k_s..k_s + length)
            .map(|i| hold_last(&self.approximate, i.saturating_mul(nu)).clone())
            .collect()
    }

    /// Same windows, but over the approximate series at the fine period.
    pub fn approximate_fine_preview(&self, k: usize, length: usize) -> Vec<DVector<f64>> {
        (k..k + length).map(|i| hold_last(&self.approximate, i).clone()).collect()
    }

    /// Loads each fidelity from a `step,value` CSV with a header row. Steps
    /// must be `0, 1, 2, …` in order.
    pub fn from_csv(actual: &Path, approximate: &Path, duration_steps: Option<usize>) -> Result<Self> {
        let actual = read_series_csv(actual)?;
        let approximate = read_series_csv(approximate)?;
        let duration = duration_steps.unwrap_or_else(|| actual.len().min(approximate.len()));
        Self::from_scalars(&actual, &approximate, duration)
    }
}

fn hold_last(series: &[DVector<f64>], i: usize) -> &DVector<f64> {
    &series[i.min(series.len() - 1)]
}

pub fn read_series_csv(path: &Path) -> Result<Vec<f64>> {
    let location = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::config(&location, e.to_string()))?;
    let mut values = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2;
        let record = record.map_err(|e| Error::config(format!("{location}:{line}"), e.to_string()))?;
        if record.len() != 2 {
            return Err(Error::config(
                format!("{location}:{line}"),
                format!("expected 2 columns (step,value), found {}", record.len()),
            ));
        }
        let step: usize = record[0]
            .parse()
            .map_err(|_| Error::config(format!("{location}:{line}"), format!("bad step `{}`", &record[0])))?;
        let value: f64 = record[1]
            .parse()
            .map_err(|_| Error::config(format!("{location}:{line}"), format!("bad value `{}`", &record[1])))?;
        if step != values.len() {
            return Err(Error::config(
                format!("{location}:{line}"),
                format!("expected step {}, found {step}", values.len()),
            ));
        }
        values.push(value);
    }
    if values.is_empty() {
        return Err(Error::config(location, "series is empty"));
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalars(window: &[DVector<f64>]) -> Vec<f64> {
        window.iter().map(|d| d[0]).collect()
    }

    #[test]
    fn accurate_windows_hold_last() {
        let s = DemandScenario::from_scalars(&[2.0, 2.0, 5.0, 5.0], &[0.0; 4], 4).unwrap();
        assert_eq!(scalars(&s.accurate_preview(0, 3)), vec![2.0, 2.0, 5.0]);
        assert_eq!(scalars(&s.accurate_preview(3, 3)), vec![5.0, 5.0, 5.0]);
        assert!(s.accurate_preview(2, 0).is_empty());
        assert_eq!(scalars(&s.accurate_preview(100, 2)), vec![5.0, 5.0]);
    }

    #[test]
    fn approximate_windows_stride_by_nu() {
        let approx = [1.0, 1.0, 1.0, 1.0, 3.0, 3.0, 3.0, 3.0];
        let s = DemandScenario::from_scalars(&approx, &approx, 8).unwrap();
        assert_eq!(scalars(&s.approximate_preview(0, 2, 4)), vec![1.0, 3.0]);
        assert_eq!(scalars(&s.approximate_preview(5, 3, 4)), vec![3.0, 3.0, 3.0]);
        let constant = DemandScenario::from_scalars(&[0.7; 10], &[0.7; 10], 10).unwrap();
        assert_eq!(scalars(&constant.approximate_preview(1, 4, 3)), vec![0.7; 4]);
    }

    #[test]
    fn coincident_indices_agree_for_perfect_forecast() {
        let series: Vec<f64> = (0..30).map(|k| (k as f64 * 0.3).sin()).collect();
        let s = DemandScenario::perfect_forecast(&series).unwrap();
        let nu = 3;
        let coarse = s.approximate_preview(2, 5, nu);
        let fine = s.accurate_preview(0, 30);
        for (i, d) in coarse.iter().enumerate() {
            assert_eq!(d, &fine[(2 + i) * nu]);
        }
    }

    #[test]
    fn fixture_shape() {
        let s = DemandScenario::fixture();
        assert_eq!(s.duration_steps(), 120);
        assert!(s.approximate().iter().all(|d| d[0] == 0.4));
        assert_eq!(s.actual_at(9)[0], 0.4);
        assert_eq!(s.actual_at(10)[0], 1.4);
        assert_eq!(s.actual_at(40)[0], 1.4);
        assert_eq!(s.actual_at(41)[0], 0.4);
        assert_eq!(s.actual_at(85)[0], 1.4);
        assert_eq!(s.actual_at(86)[0], 0.4);
    }

    #[test]
    fn rejects_short_or_ragged_series() {
        assert!(DemandScenario::from_scalars(&[1.0], &[1.0, 2.0], 2).is_err());
        assert!(DemandScenario::from_scalars(&[], &[], 0).is_err());
        let ragged = DemandScenario::new(
            vec![DVector::zeros(1), DVector::zeros(2)],
            vec![DVector::zeros(1)],
            1,
        );
        assert!(ragged.is_err());
    }

    #[test]
    fn csv_series_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.csv");
        let b = dir.path().join("b.csv");
        std::fs::write(&a, "step,value\n0,0.4\n1,1.4\n2,0.4\n").unwrap();
        std::fs::write(&b, "step,value\n0,0.4\n1,0.4\n2,0.4\n").unwrap();
        let s = DemandScenario::from_csv(&a, &b, None).unwrap();
        assert_eq!(s.duration_steps(), 3);
        assert_eq!(s.actual_at(1)[0], 1.4);

        std::fs::write(&b, "step,value\n0,0.4\n2,0.4\n").unwrap();
        let err = DemandScenario::from_csv(&a, &b, None).unwrap_err();
        assert!(err.to_string().contains("b.csv:3"), "{err}");
    }
}
