//! Attribute axes, threshold windows and partitions of an attribute range.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::bail;
use crate::Result;

/// One attribute axis with its finite value range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeSpec {
    pub id: String,
    pub min: f64,
    pub max: f64,
}

impl AttributeSpec {
    pub fn new(id: impl Into<String>, min: f64, max: f64) -> Result<Self> {
        let spec = Self {
            id: id.into(),
            min,
            max,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            bail!(Config, "attribute id must be nonempty");
        }
        if !(self.min.is_finite() && self.max.is_finite()) || self.min >= self.max {
            bail!(
                Config,
                "attribute `{}` has a degenerate range [{}, {}]",
                self.id,
                self.min,
                self.max
            );
        }
        Ok(())
    }

    pub fn contains(&self, value: f64) -> bool {
        self.min <= value && value <= self.max
    }

    /// Clamps an evaluator output into the range, logging when it had to.
    pub fn clamp(&self, value: f64) -> Result<f64> {
        if value.is_nan() {
            bail!(Contract, "attribute `{}` received NaN", self.id);
        }
        if value < self.min || value > self.max {
            log::debug!(
                "clamping `{}` value {} into [{}, {}]",
                self.id,
                value,
                self.min,
                self.max
            );
        }
        Ok(value.clamp(self.min, self.max))
    }

    /// Maps a value onto `[0, 1]` by the range.
    pub fn normalize(&self, value: f64) -> f64 {
        (value - self.min) / (self.max - self.min)
    }
}

/// Target interval `[start, end]` for one attribute, inclusive on both ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdWindow {
    pub attr_id: String,
    pub start: f64,
    pub end: f64,
}

impl ThresholdWindow {
    pub fn new(spec: &AttributeSpec, start: f64, end: f64) -> Result<Self> {
        let window = Self {
            attr_id: spec.id.clone(),
            start,
            end,
        };
        window.validate(spec)?;
        Ok(window)
    }

    /// Open-ended window `(< end)`, stored clamped to the range minimum.
    pub fn below(spec: &AttributeSpec, end: f64) -> Result<Self> {
        Self::new(spec, spec.min, end)
    }

    /// Open-ended window `(> start)`, stored clamped to the range maximum.
    pub fn above(spec: &AttributeSpec, start: f64) -> Result<Self> {
        Self::new(spec, start, spec.max)
    }

    pub fn validate(&self, spec: &AttributeSpec) -> Result<()> {
        if self.attr_id != spec.id {
            bail!(
                Contract,
                "window for `{}` checked against attribute `{}`",
                self.attr_id,
                spec.id
            );
        }
        if !(spec.min <= self.start && self.start <= self.end && self.end <= spec.max) {
            bail!(
                Contract,
                "window [{}, {}] does not fit `{}` range [{}, {}]",
                self.start,
                self.end,
                spec.id,
                spec.min,
                spec.max
            );
        }
        Ok(())
    }

    pub fn contains(&self, value: f64) -> bool {
        self.start <= value && value <= self.end
    }
}

/// One window per attribute, in the attribute space's canonical order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiConstraint {
    pub windows: Vec<ThresholdWindow>,
}

impl MultiConstraint {
    pub fn new(windows: Vec<ThresholdWindow>) -> Self {
        Self { windows }
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    /// Checks that the windows line up with `specs` one to one.
    pub fn check_aligned(&self, specs: &[AttributeSpec]) -> Result<()> {
        if self.windows.len() != specs.len() {
            bail!(
                Contract,
                "constraint has {} windows for {} attributes",
                self.windows.len(),
                specs.len()
            );
        }
        for (window, spec) in self.windows.iter().zip(specs) {
            window.validate(spec)?;
        }
        Ok(())
    }
}

/// Attribute scores of one sequence, one value per attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AttributeVector(pub Vec<f64>);

impl AttributeVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    /// Builds a vector from raw evaluator outputs, clamping each into range.
    pub fn clamped(values: &[f64], specs: &[AttributeSpec]) -> Result<Self> {
        if values.len() != specs.len() {
            bail!(
                Contract,
                "{} values for {} attributes",
                values.len(),
                specs.len()
            );
        }
        values
            .iter()
            .zip(specs)
            .map(|(&v, spec)| spec.clamp(v))
            .collect::<Result<Vec<_>>>()
            .map(Self)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Contiguous windows tiling an attribute range exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributePartition {
    pub attr_id: String,
    pub windows: Vec<ThresholdWindow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub labels: Vec<String>,
}

impl AttributePartition {
    /// Builds a partition from its interior boundaries.
    pub fn from_boundaries(spec: &AttributeSpec, interior: &[f64]) -> Result<Self> {
        let mut edges = Vec::with_capacity(interior.len() + 2);
        edges.push(spec.min);
        edges.extend_from_slice(interior);
        edges.push(spec.max);
        let windows = edges
            .windows(2)
            .map(|w| ThresholdWindow::new(spec, w[0], w[1]))
            .collect::<Result<Vec<_>>>()?;
        Self::new(spec, windows, Vec::new())
    }

    pub fn new(spec: &AttributeSpec, windows: Vec<ThresholdWindow>, labels: Vec<String>) -> Result<Self> {
        let partition = Self {
            attr_id: spec.id.clone(),
            windows,
            labels,
        };
        partition.validate(spec)?;
        Ok(partition)
    }

    pub fn with_labels(mut self, labels: &[&str]) -> Self {
        self.labels = labels.iter().map(|l| l.to_string()).collect();
        self
    }

    pub fn validate(&self, spec: &AttributeSpec) -> Result<()> {
        if self.attr_id != spec.id {
            bail!(Config, "partition `{}` attached to `{}`", self.attr_id, spec.id);
        }
        let (Some(first), Some(last)) = (self.windows.first(), self.windows.last()) else {
            bail!(Config, "partition of `{}` has no windows", spec.id);
        };
        if first.start != spec.min || last.end != spec.max {
            bail!(Config, "partition of `{}` does not cover its range", spec.id);
        }
        for window in &self.windows {
            window
                .validate(spec)
                .map_err(|e| crate::Error::Config(e.to_string()))?;
            if window.start >= window.end {
                bail!(Config, "partition of `{}` has an empty window", spec.id);
            }
        }
        for pair in self.windows.windows(2) {
            if pair[0].end != pair[1].start {
                bail!(
                    Config,
                    "partition of `{}` is not contiguous at {}",
                    spec.id,
                    pair[0].end
                );
            }
        }
        if !self.labels.is_empty() && self.labels.len() != self.windows.len() {
            bail!(Config, "partition of `{}` has mismatched labels", spec.id);
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn label(&self, index: usize) -> String {
        match self.labels.get(index) {
            Some(label) => label.clone(),
            None => {
                let w = &self.windows[index];
                alloc::format!("[{}, {}]", w.start, w.end)
            }
        }
    }

    /// Index of the window holding `value`; a value on a shared boundary
    /// belongs to the lower window.
    pub fn window_of(&self, value: f64) -> Result<usize> {
        let (Some(first), Some(last)) = (self.windows.first(), self.windows.last()) else {
            bail!(Config, "partition of `{}` has no windows", self.attr_id);
        };
        if !(first.start <= value && value <= last.end) {
            bail!(
                Contract,
                "value {} outside the `{}` range [{}, {}]",
                value,
                self.attr_id,
                first.start,
                last.end
            );
        }
        Ok(self
            .windows
            .iter()
            .position(|w| value <= w.end)
            .unwrap_or(self.windows.len() - 1))
    }
}

/// The attribute axes of a task together with one partition per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeSpace {
    pub specs: Vec<AttributeSpec>,
    pub partitions: Vec<AttributePartition>,
}

impl AttributeSpace {
    pub fn new(specs: Vec<AttributeSpec>, partitions: Vec<AttributePartition>) -> Result<Self> {
        let space = Self { specs, partitions };
        space.validate()?;
        Ok(space)
    }

    pub fn validate(&self) -> Result<()> {
        if self.specs.is_empty() {
            bail!(Config, "attribute space is empty");
        }
        for (i, spec) in self.specs.iter().enumerate() {
            spec.validate()?;
            if self.specs[..i].iter().any(|s| s.id == spec.id) {
                bail!(Config, "duplicate attribute id `{}`", spec.id);
            }
        }
        if self.partitions.len() != self.specs.len() {
            bail!(
                Config,
                "{} partitions for {} attributes",
                self.partitions.len(),
                self.specs.len()
            );
        }
        for (partition, spec) in self.partitions.iter().zip(&self.specs) {
            partition.validate(spec)?;
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.specs.len()
    }

    pub fn ids(&self) -> Vec<String> {
        self.specs.iter().map(|s| s.id.clone()).collect()
    }

    /// Window counts per attribute.
    pub fn shape(&self) -> Vec<usize> {
        self.partitions.iter().map(|p| p.len()).collect()
    }

    pub fn combo_count(&self) -> usize {
        self.partitions.iter().map(|p| p.len()).product()
    }

    /// Per-attribute window indices of a row-major combo index (first
    /// attribute outermost).
    pub fn combo_indices(&self, mut combo: usize) -> Vec<usize> {
        let shape = self.shape();
        let mut indices = alloc::vec![0; shape.len()];
        for (slot, &n) in indices.iter_mut().zip(&shape).rev() {
            *slot = combo % n;
            combo /= n;
        }
        indices
    }

    pub fn combo_from_indices(&self, indices: &[usize]) -> usize {
        indices
            .iter()
            .zip(self.shape())
            .fold(0, |acc, (&i, n)| acc * n + i)
    }

    pub fn constraint(&self, combo: usize) -> MultiConstraint {
        let windows = self
            .combo_indices(combo)
            .into_iter()
            .zip(&self.partitions)
            .map(|(i, p)| p.windows[i].clone())
            .collect();
        MultiConstraint::new(windows)
    }

    /// Every multi-attribute constraint of the partition cross product.
    pub fn combos(&self) -> Vec<MultiConstraint> {
        (0..self.combo_count()).map(|c| self.constraint(c)).collect()
    }

    /// Combo index whose windows hold `attrs`.
    pub fn combo_of(&self, attrs: &AttributeVector) -> Result<usize> {
        if attrs.len() != self.k() {
            bail!(Contract, "{} values for {} attributes", attrs.len(), self.k());
        }
        let indices = attrs
            .values()
            .iter()
            .zip(&self.partitions)
            .map(|(&v, p)| p.window_of(v))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.combo_from_indices(&indices))
    }

    pub fn combo_label(&self, combo: usize) -> String {
        let parts: Vec<String> = self
            .combo_indices(combo)
            .into_iter()
            .zip(&self.partitions)
            .map(|(i, p)| alloc::format!("{}={}", p.attr_id, p.label(i)))
            .collect();
        parts.join(",")
    }

    /// Sentiment `[1, 5]` and complexity `[-2, 2]` with five windows each.
    pub fn style() -> Self {
        let sentiment = AttributeSpec::new("sentiment", 1.0, 5.0).unwrap();
        let complexity = AttributeSpec::new("complexity", -2.0, 2.0).unwrap();
        let sp = AttributePartition::from_boundaries(&sentiment, &[1.5, 2.5, 3.5, 4.5])
            .unwrap()
            .with_labels(&["very negative", "negative", "neutral", "positive", "very positive"]);
        let cp = AttributePartition::from_boundaries(&complexity, &[-1.5, -0.5, 0.5, 1.5])
            .unwrap()
            .with_labels(&["very simple", "simple", "normal", "complex", "very complex"]);
        Self::new(alloc::vec![sentiment, complexity], alloc::vec![sp, cp]).unwrap()
    }

    /// Log fluorescence `[1.28, 4.12]` and ddG `[-5.66, 60.75]` with four
    /// windows each; the open-ended end windows are clamped to the range.
    pub fn protein() -> Self {
        let fluorescence = AttributeSpec::new("fluorescence", 1.28, 4.12).unwrap();
        let ddg = AttributeSpec::new("ddg", -5.66, 60.75).unwrap();
        let fp = AttributePartition::from_boundaries(&fluorescence, &[3.0, 3.4, 3.7])
            .unwrap()
            .with_labels(&["very low", "low", "medium", "bright"]);
        let dp = AttributePartition::from_boundaries(&ddg, &[0.0, 0.5, 2.0])
            .unwrap()
            .with_labels(&[
                "more stable",
                "as stable",
                "slightly destabilized",
                "highly destabilized",
            ]);
        Self::new(alloc::vec![fluorescence, ddg], alloc::vec![fp, dp]).unwrap()
    }
}
