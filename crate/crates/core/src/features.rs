//! Per-modality item features, the item-level missing mask and the
//! missing-item sampling protocol.

use std::collections::HashSet;

use rand::seq::index;

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::rng;

/// Dense item x dim features of one modality.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalityFeatureSet {
    modality: String,
    values: DenseMatrix,
}

impl ModalityFeatureSet {
    pub fn new(modality: impl Into<String>, values: DenseMatrix) -> Result<Self> {
        let modality = modality.into();
        if modality.is_empty() {
            return Err(Error::Features("modality label is empty".into()));
        }
        if values.cols() == 0 {
            return Err(Error::Features(format!(
                "modality `{modality}` has dimension 0"
            )));
        }
        Ok(Self { modality, values })
    }

    pub fn modality(&self) -> &str {
        &self.modality
    }

    pub fn num_items(&self) -> usize {
        self.values.rows()
    }

    pub fn dim(&self) -> usize {
        self.values.cols()
    }

    pub fn values(&self) -> &DenseMatrix {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.values.row(i)
    }

    pub fn with_values(&self, values: DenseMatrix) -> Result<Self> {
        if values.rows() != self.num_items() || values.cols() != self.dim() {
            return Err(Error::Shape(format!(
                "replacement for `{}` is {}x{}, expected {}x{}",
                self.modality,
                values.rows(),
                values.cols(),
                self.num_items(),
                self.dim()
            )));
        }
        Ok(Self {
            modality: self.modality.clone(),
            values,
        })
    }

    /// Fails if any row of a known item holds NaN or infinity.
    pub fn check_finite(&self, mask: &MissingMask) -> Result<()> {
        for i in mask.known_items() {
            if self.row(i).iter().any(|v| !v.is_finite()) {
                return Err(Error::Features(format!(
                    "modality `{}` has a non-finite value at known item {i}",
                    self.modality
                )));
            }
        }
        Ok(())
    }
}

/// All modalities of one catalogue. Labels are unique and every modality
/// covers the same items.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBundle {
    modalities: Vec<ModalityFeatureSet>,
}

impl FeatureBundle {
    pub fn new(modalities: Vec<ModalityFeatureSet>) -> Result<Self> {
        let Some(first) = modalities.first() else {
            return Err(Error::Features("bundle has no modalities".into()));
        };
        let num_items = first.num_items();
        let mut seen = HashSet::new();
        for m in &modalities {
            if !seen.insert(m.modality()) {
                return Err(Error::Features(format!(
                    "duplicate modality `{}`",
                    m.modality()
                )));
            }
            if m.num_items() != num_items {
                return Err(Error::Shape(format!(
                    "modality `{}` has {} items, `{}` has {num_items}",
                    m.modality(),
                    m.num_items(),
                    first.modality()
                )));
            }
        }
        Ok(Self { modalities })
    }

    pub fn num_items(&self) -> usize {
        self.modalities[0].num_items()
    }

    pub fn modalities(&self) -> &[ModalityFeatureSet] {
        &self.modalities
    }

    pub fn labels(&self) -> Vec<String> {
        self.modalities
            .iter()
            .map(|m| m.modality().to_string())
            .collect()
    }

    pub fn into_modalities(self) -> Vec<ModalityFeatureSet> {
        self.modalities
    }

    pub(crate) fn check_finite(&self, mask: &MissingMask) -> Result<()> {
        self.modalities
            .iter()
            .try_for_each(|m| m.check_finite(mask))
    }

    pub(crate) fn check_mask(&self, mask: &MissingMask) -> Result<()> {
        if mask.num_items() != self.num_items() {
            return Err(Error::Shape(format!(
                "mask covers {} items, features cover {}",
                mask.num_items(),
                self.num_items()
            )));
        }
        Ok(())
    }
}

/// Item-level availability: an item has either all or none of its
/// modality features.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MissingMask {
    known: Vec<bool>,
}

impl MissingMask {
    pub fn from_known(known: Vec<bool>) -> Self {
        Self { known }
    }

    pub fn all_known(num_items: usize) -> Self {
        Self {
            known: vec![true; num_items],
        }
    }

    pub fn from_missing(num_items: usize, missing: &[usize]) -> Result<Self> {
        let mut known = vec![true; num_items];
        for &i in missing {
            if i >= num_items {
                return Err(Error::Shape(format!("missing item {i} out of range")));
            }
            known[i] = false;
        }
        Ok(Self { known })
    }

    pub fn num_items(&self) -> usize {
        self.known.len()
    }

    #[inline]
    pub fn is_known(&self, i: usize) -> bool {
        self.known[i]
    }

    pub fn known(&self) -> &[bool] {
        &self.known
    }

    pub fn known_items(&self) -> impl Iterator<Item = usize> + '_ {
        self.known
            .iter()
            .enumerate()
            .filter(|(_, &k)| k)
            .map(|(i, _)| i)
    }

    pub fn missing_items(&self) -> impl Iterator<Item = usize> + '_ {
        self.known
            .iter()
            .enumerate()
            .filter(|(_, &k)| !k)
            .map(|(i, _)| i)
    }

    pub fn num_known(&self) -> usize {
        self.known.iter().filter(|&&k| k).count()
    }

    pub fn num_missing(&self) -> usize {
        self.num_items() - self.num_known()
    }
}

/// Number of items to hide at `rate`: nearest integer, halves rounded up.
pub fn missing_count(num_items: usize, rate: f64) -> usize {
    ((rate * num_items as f64) + 0.5).floor() as usize
}

/// Hides exactly `missing_count(num_items, rate)` items drawn uniformly
/// without replacement from a ChaCha8 stream seeded with `seed`.
pub fn sample_missing(num_items: usize, rate: f64, seed: u64) -> Result<MissingMask> {
    if !(rate > 0.0 && rate < 1.0) {
        return Err(Error::param("rate", format!("{rate} is not in (0, 1)")));
    }
    if num_items == 0 {
        return Err(Error::param("num_items", "must be at least 1"));
    }
    let count = missing_count(num_items, rate).min(num_items);
    let mut rng = rng::seeded(seed);
    let picked = index::sample(&mut rng, num_items, count);
    let mut known = vec![true; num_items];
    for i in picked.iter() {
        known[i] = false;
    }
    Ok(MissingMask { known })
}

/// Zeroes the rows of missing items. Known rows are copied untouched.
pub fn blank_missing(f: &ModalityFeatureSet, mask: &MissingMask) -> Result<ModalityFeatureSet> {
    check_len(f, mask)?;
    let mut values = f.values.clone();
    for i in mask.missing_items() {
        values.row_mut(i).fill(0.0);
    }
    f.with_values(values)
}

pub fn blank_bundle(bundle: &FeatureBundle, mask: &MissingMask) -> Result<FeatureBundle> {
    bundle.check_mask(mask)?;
    let blanked = bundle
        .modalities()
        .iter()
        .map(|m| blank_missing(m, mask))
        .collect::<Result<Vec<_>>>()?;
    FeatureBundle::new(blanked)
}

/// Column mean over known rows, accumulated in `f64`.
pub fn known_mean(f: &ModalityFeatureSet, mask: &MissingMask) -> Result<Vec<f64>> {
    check_len(f, mask)?;
    let mut sum = vec![0.0; f.dim()];
    let mut count = 0usize;
    for i in mask.known_items() {
        for (s, v) in sum.iter_mut().zip(f.row(i)) {
            *s += v;
        }
        count += 1;
    }
    if count == 0 {
        return Err(Error::NoKnownItems);
    }
    let n = count as f64;
    Ok(sum.into_iter().map(|s| s / n).collect())
}

fn check_len(f: &ModalityFeatureSet, mask: &MissingMask) -> Result<()> {
    if f.num_items() != mask.num_items() {
        return Err(Error::Shape(format!(
            "modality `{}` has {} items, mask has {}",
            f.modality(),
            f.num_items(),
            mask.num_items()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(rows: &[[f64; 2]]) -> ModalityFeatureSet {
        ModalityFeatureSet::new("visual", DenseMatrix::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn sample_has_exact_cardinality() {
        let m = sample_missing(10, 0.5, 3).unwrap();
        assert_eq!(m.num_missing(), 5);
        let m = sample_missing(100, 0.9, 11).unwrap();
        assert_eq!((m.num_missing(), m.num_known()), (90, 10));
    }

    #[test]
    fn sample_is_deterministic() {
        assert_eq!(
            sample_missing(50, 0.3, 42).unwrap(),
            sample_missing(50, 0.3, 42).unwrap()
        );
        assert_ne!(
            sample_missing(50, 0.3, 42).unwrap(),
            sample_missing(50, 0.3, 43).unwrap()
        );
    }

    #[test]
    fn sample_rejects_bad_rate() {
        for rate in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(
                sample_missing(10, rate, 0),
                Err(Error::Parameter { .. })
            ));
        }
    }

    #[test]
    fn rounding_is_half_up() {
        assert_eq!(missing_count(10, 0.25), 3);
        assert_eq!(missing_count(10, 0.24), 2);
        assert_eq!(missing_count(3, 0.5), 2);
        assert_eq!(missing_count(7, 0.7), 5);
    }

    #[test]
    fn blank_examples() {
        let f = set(&[[1.0, 2.0], [1.0, 2.0]]);
        assert_eq!(blank_missing(&f, &MissingMask::all_known(2)).unwrap(), f);
        let mask = MissingMask::from_missing(2, &[1]).unwrap();
        let b = blank_missing(&f, &mask).unwrap();
        assert_eq!(b.row(0), &[1.0, 2.0]);
        assert_eq!(b.row(1), &[0.0, 0.0]);
        assert_eq!(blank_missing(&b, &mask).unwrap(), b);
        assert!(blank_missing(&f, &MissingMask::all_known(3)).is_err());
    }

    #[test]
    fn mean_examples() {
        let f = set(&[[1.0, 3.0], [3.0, 5.0], [100.0, 100.0]]);
        let mask = MissingMask::from_missing(3, &[2]).unwrap();
        assert_eq!(known_mean(&f, &mask).unwrap(), vec![2.0, 4.0]);
        let single = MissingMask::from_missing(3, &[0, 2]).unwrap();
        assert_eq!(known_mean(&f, &single).unwrap(), vec![3.0, 5.0]);
        let none = MissingMask::from_missing(3, &[0, 1, 2]).unwrap();
        assert!(matches!(known_mean(&f, &none), Err(Error::NoKnownItems)));
    }

    #[test]
    fn bundle_rejects_duplicates_and_mismatch() {
        let a = set(&[[1.0, 2.0]]);
        assert!(FeatureBundle::new(vec![a.clone(), a.clone()]).is_err());
        let b = ModalityFeatureSet::new("textual", DenseMatrix::zeros(2, 3)).unwrap();
        assert!(matches!(
            FeatureBundle::new(vec![a, b]),
            Err(Error::Shape(_))
        ));
        assert!(ModalityFeatureSet::new("x", DenseMatrix::zeros(2, 0)).is_err());
    }

    #[test]
    fn non_finite_known_rows_are_rejected() {
        let f = set(&[[f64::NAN, 0.0], [1.0, 1.0]]);
        assert!(f.check_finite(&MissingMask::all_known(2)).is_err());
        assert!(f
            .check_finite(&MissingMask::from_missing(2, &[0]).unwrap())
            .is_ok());
    }
}
