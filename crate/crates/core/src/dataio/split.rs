use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{arg_err, Result};
use crate::rng;

pub const DEFAULT_RATIOS: [f64; 3] = [0.8, 0.1, 0.1];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub ratios: [f64; 3],
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

/// Slice sizes for `n` items: `floor(r_train · n)` to train, the
/// validation share of the remainder (rounded down) to val, the rest to
/// test. 1588 items give 1270/159/159; 5 give 4/0/1.
pub fn split_sizes(n: usize, ratios: [f64; 3]) -> Result<(usize, usize, usize)> {
    if ratios.iter().any(|r| !(*r >= 0.0)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(arg_err!("split ratios {ratios:?} must be non-negative and sum to 1"));
    }
    let n_train = ((ratios[0] * n as f64 + 1e-9) as usize).min(n);
    let rest = n - n_train;
    let tail = ratios[1] + ratios[2];
    let n_val = if tail > 0.0 {
        ((rest as f64 * ratios[1] / tail + 1e-9) as usize).min(rest)
    } else {
        0
    };
    Ok((n_train, n_val, rest - n_val))
}

fn check_unique(ids: &[String]) -> Result<Vec<String>> {
    let mut sorted = ids.to_vec();
    sorted.sort();
    if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
        return Err(arg_err!("duplicate sample id {:?}", w[0]));
    }
    Ok(sorted)
}

/// Seeded shuffle of the sorted ids followed by contiguous slicing.
pub fn split_dataset(ids: &[String], ratios: [f64; 3], seed: u64) -> Result<SplitManifest> {
    let mut ids = check_unique(ids)?;
    let (n_train, n_val, _) = split_sizes(ids.len(), ratios)?;
    ids.shuffle(&mut rng::stream(seed, "split"));
    let test = ids.split_off(n_train + n_val);
    let val = ids.split_off(n_train);
    Ok(SplitManifest {
        seed,
        ratios,
        train: ids,
        val,
        test,
    })
}

/// Splits each stratum independently (stratum of `ids[i]` is
/// `strata[i]`) and concatenates the parts in stratum order.
pub fn split_dataset_stratified(ids: &[String], strata: &[String], ratios: [f64; 3], seed: u64) -> Result<SplitManifest> {
    if ids.len() != strata.len() {
        return Err(arg_err!("{} ids but {} strata", ids.len(), strata.len()));
    }
    check_unique(ids)?;
    let mut groups: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for (id, s) in ids.iter().zip(strata) {
        groups.entry(s.as_str()).or_default().push(id.clone());
    }
    let mut out = SplitManifest {
        seed,
        ratios,
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for (name, members) in groups {
        let seed_k = rng::substream_seed(seed, name);
        let part = split_dataset(&members, ratios, seed_k)?;
        out.train.extend(part.train);
        out.val.extend(part.val);
        out.test.extend(part.test);
    }
    Ok(out)
}
