use std::ops::Range;
use std::str::FromStr;

use ndarray::{ArrayView2, ArrayViewMut2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Location of one matrix inside a flat parameter vector (row-major).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slot {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Slot {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len()
    }

    pub fn view<'a, T>(&self, flat: &'a [T]) -> ArrayView2<'a, T> {
        ArrayView2::from_shape((self.rows, self.cols), &flat[self.range()])
            .expect("slot lies inside parameter vector")
    }

    pub fn view_mut<'a, T>(&self, flat: &'a mut [T]) -> ArrayViewMut2<'a, T> {
        ArrayViewMut2::from_shape((self.rows, self.cols), &mut flat[self.range()])
            .expect("slot lies inside parameter vector")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamGroup {
    pub name: String,
    pub start: usize,
    pub end: usize,
}

/// Which parameters an optimizer may touch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrainableSelector {
    All,
    LogvarHeadOnly,
}

impl FromStr for TrainableSelector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(TrainableSelector::All),
            "logvar_head_only" => Ok(TrainableSelector::LogvarHeadOnly),
            other => Err(Error::Config(format!("unknown trainable selector `{other}`"))),
        }
    }
}

/// Flat parameter vector with named groups and a per-parameter trainable mask.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSet<T> {
    values: Vec<T>,
    trainable: Vec<bool>,
    groups: Vec<ParamGroup>,
}

impl<T: Scalar> Default for ParamSet<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        ParamSet {
            values: Vec::new(),
            trainable: Vec::new(),
            groups: Vec::new(),
        }
    }

    /// Reserves a zero-filled `rows x cols` block belonging to `group`.
    pub fn alloc(&mut self, group: &str, rows: usize, cols: usize) -> Slot {
        let slot = Slot {
            offset: self.values.len(),
            rows,
            cols,
        };
        self.values.resize(slot.offset + slot.len(), T::zero());
        self.trainable.resize(slot.offset + slot.len(), true);
        match self.groups.last_mut() {
            Some(g) if g.name == group && g.end == slot.offset => g.end = slot.offset + slot.len(),
            _ => self.groups.push(ParamGroup {
                name: group.to_string(),
                start: slot.offset,
                end: slot.offset + slot.len(),
            }),
        }
        slot
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn trainable(&self) -> &[bool] {
        &self.trainable
    }

    pub fn groups(&self) -> &[ParamGroup] {
        &self.groups
    }

    pub fn group(&self, name: &str) -> Option<&ParamGroup> {
        self.groups.iter().find(|g| g.name == name)
    }

    pub fn trainable_count(&self) -> usize {
        self.trainable.iter().filter(|&&t| t).count()
    }

    /// Marks every parameter whose group satisfies `pred` trainable and all others frozen.
    pub fn set_trainable_where(&mut self, pred: impl Fn(&str) -> bool) {
        for g in &self.groups {
            let on = pred(&g.name);
            self.trainable[g.start..g.end].iter_mut().for_each(|t| *t = on);
        }
    }

    /// Replaces all values; lengths must agree.
    pub fn load(&mut self, values: &[T]) -> Result<()> {
        crate::error::check_dim("parameter load", self.values.len(), values.len())?;
        self.values.copy_from_slice(values);
        Ok(())
    }

    /// Uniform fan-in initialization of a weight slot: U(-1/sqrt(rows), 1/sqrt(rows)).
    pub fn init_fan_in(&mut self, slot: Slot, rng: &mut ChaCha8Rng) {
        let bound = 1.0 / (slot.rows.max(1) as f64).sqrt();
        for v in &mut self.values[slot.range()] {
            *v = T::of(rng.random_range(-bound..bound));
        }
    }

    pub fn scale(&mut self, slot: Slot, factor: f64) {
        let f = T::of(factor);
        self.values[slot.range()].iter_mut().for_each(|v| *v *= f);
    }

    pub fn zeros_like(&self) -> Vec<T> {
        vec![T::zero(); self.values.len()]
    }

    pub fn cast<U: Scalar>(&self) -> ParamSet<U> {
        ParamSet {
            values: self.values.iter().map(|v| U::of(v.f64())).collect(),
            trainable: self.trainable.clone(),
            groups: self.groups.clone(),
        }
    }
}

pub(crate) fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alloc_tracks_groups_and_mask() {
        let mut p = ParamSet::<f64>::new();
        let a = p.alloc("enc", 2, 3);
        let b = p.alloc("enc", 1, 3);
        let c = p.alloc("head", 3, 1);
        assert_eq!(a.offset, 0);
        assert_eq!(b.offset, 6);
        assert_eq!(c.offset, 9);
        assert_eq!(p.len(), 12);
        assert_eq!(p.groups().len(), 2);
        p.set_trainable_where(|g| g == "head");
        assert_eq!(p.trainable_count(), 3);
        assert_eq!(p.trainable().len(), p.len());
    }

    #[test]
    fn selector_parsing() {
        assert_eq!("all".parse::<TrainableSelector>().unwrap(), TrainableSelector::All);
        assert!("mean_head_only".parse::<TrainableSelector>().is_err());
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let mut p = ParamSet::<f64>::new();
        let s = p.alloc("w", 16, 4);
        let mut q = p.clone();
        p.init_fan_in(s, &mut seeded_rng(3));
        q.init_fan_in(s, &mut seeded_rng(3));
        assert_eq!(p, q);
        assert!(p.values().iter().all(|v| v.abs() <= 0.25));
    }
}
