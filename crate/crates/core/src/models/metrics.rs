use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `counts[t][p]`: samples of true class `t` predicted as `p`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            counts: vec![vec![0; classes]; classes],
        }
    }

    pub fn from_pairs(classes: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut cm = Self::new(classes);
        for (t, p) in pairs {
            cm.add(t, p)?;
        }
        Ok(cm)
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn add(&mut self, truth: usize, predicted: usize) -> Result<()> {
        let k = self.classes();
        if truth >= k || predicted >= k {
            return Err(Error::Data(format!("class ({truth}, {predicted}) outside {k} classes")));
        }
        self.counts[truth][predicted] += 1;
        Ok(())
    }

    pub fn supports(&self) -> Vec<u64> {
        self.counts.iter().map(|row| row.iter().sum()).collect()
    }

    pub fn total(&self) -> u64 {
        self.supports().iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes()).map(|k| self.counts[k][k]).sum()
    }

    /// `TP / (TP + FN)` for class `k`, one class against the rest.
    pub fn recall(&self, k: usize) -> Result<f64> {
        let support: u64 = self
            .counts
            .get(k)
            .ok_or_else(|| Error::Data(format!("no class {k}")))?
            .iter()
            .sum();
        if support == 0 {
            return Err(Error::Data(format!("class {k} has no validation samples")));
        }
        Ok(self.counts[k][k] as f64 / support as f64)
    }

    pub fn recalls(&self) -> Result<Vec<f64>> {
        (0..self.classes()).map(|k| self.recall(k)).collect()
    }

    /// Support-weighted mean of the per-class recalls, which reduces to `trace / total`.
    pub fn average_recall(&self) -> Result<f64> {
        let total = self.total();
        if total == 0 {
            return Err(Error::Data("empty confusion matrix".into()));
        }
        Ok(self.trace() as f64 / total as f64)
    }
}

/// Support-weighted mean of recalls given separately, `Σ r_k·s_k / Σ s_k`.
pub fn weighted_recall(recalls: &[f64], supports: &[u64]) -> Result<f64> {
    if recalls.len() != supports.len() || recalls.is_empty() {
        return Err(Error::Data(format!(
            "{} recalls for {} supports",
            recalls.len(),
            supports.len()
        )));
    }
    let total: u64 = supports.iter().sum();
    if total == 0 {
        return Err(Error::Data("all supports are zero".into()));
    }
    Ok(recalls.iter().zip(supports).map(|(r, &s)| r * s as f64).sum::<f64>() / total as f64)
}
