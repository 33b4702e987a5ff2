use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Category, ImageSource, Sample};

/// Plan-length buckets used for dataset statistics and per-length validity.
/// Zero-length plans fall in the first bucket.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LengthBucket {
    #[serde(rename = "1-4")]
    UpTo4,
    #[serde(rename = "5-7")]
    From5To7,
    #[serde(rename = "8-10")]
    From8To10,
    #[serde(rename = "11-13")]
    From11To13,
    #[serde(rename = "14+")]
    From14,
}

impl LengthBucket {
    pub const ALL: [LengthBucket; 5] = [
        LengthBucket::UpTo4,
        LengthBucket::From5To7,
        LengthBucket::From8To10,
        LengthBucket::From11To13,
        LengthBucket::From14,
    ];

    pub fn of(len: usize) -> LengthBucket {
        match len {
            0..=4 => LengthBucket::UpTo4,
            5..=7 => LengthBucket::From5To7,
            8..=10 => LengthBucket::From8To10,
            11..=13 => LengthBucket::From11To13,
            _ => LengthBucket::From14,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            LengthBucket::UpTo4 => "1-4",
            LengthBucket::From5To7 => "5-7",
            LengthBucket::From8To10 => "8-10",
            LengthBucket::From11To13 => "11-13",
            LengthBucket::From14 => "14+",
        }
    }
}

impl fmt::Display for LengthBucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub count: usize,
    pub per_category: BTreeMap<Category, usize>,
    pub real_image_fraction: f64,
    /// Only buckets that occur are present.
    pub length_histogram: BTreeMap<LengthBucket, usize>,
}

impl DatasetStats {
    /// Share of gold-plan samples in `bucket`, in percent.
    pub fn bucket_share(&self, bucket: LengthBucket) -> f64 {
        let total: usize = self.length_histogram.values().sum();
        if total == 0 {
            return 0.0;
        }
        100.0 * *self.length_histogram.get(&bucket).unwrap_or(&0) as f64 / total as f64
    }
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "samples: {}", self.count)?;
        for c in Category::ALL {
            writeln!(f, "  {c}: {}", self.per_category.get(&c).unwrap_or(&0))?;
        }
        writeln!(f, "real images: {:.1}%", 100.0 * self.real_image_fraction)?;
        writeln!(f, "plan lengths:")?;
        for b in LengthBucket::ALL {
            writeln!(
                f,
                "  {:>5}: {:>4} ({:.1}%)",
                b.label(),
                self.length_histogram.get(&b).unwrap_or(&0),
                self.bucket_share(b)
            )?;
        }
        Ok(())
    }
}

pub fn stats<S: std::ops::Deref<Target = Sample>>(dataset: &[S]) -> DatasetStats {
    let mut out = DatasetStats {
        count: dataset.len(),
        ..DatasetStats::default()
    };
    let mut real = 0usize;
    for s in dataset {
        *out.per_category.entry(s.category).or_default() += 1;
        if s.image_source == ImageSource::Real {
            real += 1;
        }
        if let Some(plan) = &s.gold_plan {
            *out.length_histogram.entry(LengthBucket::of(plan.len())).or_default() += 1;
        }
    }
    if !dataset.is_empty() {
        out.real_image_fraction = real as f64 / dataset.len() as f64;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bucket_edges() {
        assert_eq!(LengthBucket::of(0), LengthBucket::UpTo4);
        assert_eq!(LengthBucket::of(4), LengthBucket::UpTo4);
        assert_eq!(LengthBucket::of(5), LengthBucket::From5To7);
        assert_eq!(LengthBucket::of(10), LengthBucket::From8To10);
        assert_eq!(LengthBucket::of(13), LengthBucket::From11To13);
        assert_eq!(LengthBucket::of(14), LengthBucket::From14);
    }

    #[test]
    fn empty_dataset() {
        let s = stats::<&Sample>(&[]);
        assert_eq!(s.count, 0);
        assert!(s.per_category.is_empty());
        assert!(s.length_histogram.is_empty());
        assert_eq!(s.real_image_fraction, 0.0);
    }
}
