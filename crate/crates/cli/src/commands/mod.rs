pub mod analyze;
pub mod report;
pub mod run;
pub mod sample;
pub mod synth;
pub mod verify;

use std::collections::BTreeSet;

use xlt_core::corpus::{vocabulary, ClsExample, Examples};
use xlt_core::sampler::{Bucket, BucketItem};

/// Case-folds texts before vocabulary computations when requested; the
/// default keeps vocabularies case-sensitive.
pub(crate) fn fold_case(set: BTreeSet<String>, lowercase: bool) -> BTreeSet<String> {
    if lowercase {
        set.into_iter().map(|w| w.to_lowercase()).collect()
    } else {
        set
    }
}

pub(crate) fn examples_vocabulary(examples: &Examples, lowercase: bool) -> BTreeSet<String> {
    fold_case(examples.vocabulary(), lowercase)
}

/// Word set of one bucket's items.
pub(crate) fn bucket_vocabulary(bucket: &Bucket, lowercase: bool) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for item in &bucket.items {
        match item {
            BucketItem::Cls(e) => {
                let single = [e.clone()];
                out.extend(vocabulary::<ClsExample, _>(single.iter()));
            }
            BucketItem::Seq(s) => {
                for t in &s.tokens {
                    out.insert(t.clone());
                }
            }
        }
    }
    fold_case(out, lowercase)
}

/// Union vocabulary of all buckets in a cell.
pub(crate) fn buckets_vocabulary(buckets: &[Bucket], lowercase: bool) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for b in buckets {
        out.extend(bucket_vocabulary(b, lowercase));
    }
    out
}
