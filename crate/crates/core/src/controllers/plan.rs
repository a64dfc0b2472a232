use nalgebra::DVector;

use crate::error::{Error, Result};

/// Scheduled slow-state values at coarse steps, issued at fine step
/// `origin_step`. Value `i` applies to fine steps
/// `origin_step + i·nu .. origin_step + (i+1)·nu`.
#[derive(Debug, Clone, PartialEq)]
pub struct SlowStatePlan {
    values: Vec<DVector<f64>>,
    nu: usize,
    origin_step: usize,
}

impl SlowStatePlan {
    pub fn new(values: Vec<DVector<f64>>, nu: usize, origin_step: usize) -> Result<Self> {
        let Some(first) = values.first() else {
            return Err(Error::InvalidArgument("slow-state plan needs at least one value".into()));
        };
        if first.is_empty() {
            return Err(Error::InvalidArgument("slow-state plan needs at least one slow state".into()));
        }
        if let Some(bad) = values.iter().find(|v| v.len() != first.len()) {
            return Err(Error::dims("plan value", first.len(), bad.len()));
        }
        if nu == 0 {
            return Err(Error::InvalidArgument("plan block length must be >= 1".into()));
        }
        Ok(Self {
            values,
            nu,
            origin_step,
        })
    }

    pub fn values(&self) -> &[DVector<f64>] {
        &self.values
    }

    pub fn nu(&self) -> usize {
        self.nu
    }

    pub fn origin_step(&self) -> usize {
        self.origin_step
    }

    /// Slow-state reference for fine steps `k .. k + length`, holding each
    /// coarse value for `nu` fine steps and the final value past the end.
    pub fn expand(&self, k: usize, length: usize) -> Vec<DVector<f64>> {
        let last = self.values.len() - 1;
        (k..k + length)
            .map(|t| {
                let block = t.saturating_sub(self.origin_step) / self.nu;
                self.values[block.min(last)].clone()
            })
            .collect()
    }
}

/// Selects the slow components of each coarse state.
pub fn extract_slow_plan(
    coarse_states: &[DVector<f64>],
    slow_mask: &[bool],
    nu: usize,
    origin_step: usize,
) -> Result<SlowStatePlan> {
    if let Some(bad) = coarse_states.iter().find(|x| x.len() != slow_mask.len()) {
        return Err(Error::dims("coarse state", slow_mask.len(), bad.len()));
    }
    let values = coarse_states
        .iter()
        .map(|x| {
            DVector::from_iterator(
                slow_mask.iter().filter(|&&s| s).count(),
                x.iter().zip(slow_mask).filter(|(_, &s)| s).map(|(v, _)| *v),
            )
        })
        .collect();
    SlowStatePlan::new(values, nu, origin_step)
}
