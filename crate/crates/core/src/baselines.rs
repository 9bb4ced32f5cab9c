//! Feature-free reference policies: the best single reserve price swept over
//! the training set's highest bids, and the zero-reserve policy.

use crate::auction::{AuctionError, Dataset};
use crate::predictors::{PredictorError, ReservePredictor};

/// A single reserve price applied to every auction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarPolicy {
    pub reserve: f64,
}

impl ReservePredictor for ScalarPolicy {
    fn predict(&self, _features: &[f64]) -> Result<f64, PredictorError> {
        Ok(self.reserve)
    }

    fn input_dim(&self) -> Option<usize> {
        None
    }
}

/// Always-sell policy: reserve zero earns each auction's second bid.
pub fn zero_policy() -> ScalarPolicy {
    ScalarPolicy { reserve: 0.0 }
}

/// Best single reserve over the candidate set `{0} + {B_1, ..., B_N}`,
/// evaluated by total training revenue. Ties go to the smaller reserve.
///
/// Sort-based sweep: with candidates ascending, a record contributes its
/// second bid while `r < b_i`, the reserve itself while `b_i <= r <= B_i`,
/// and nothing past `B_i`. Two sorted pointers maintain the running sum of
/// pending second bids and the count of records whose bid interval contains
/// `r`, so the whole sweep is O(N log N).
pub fn nof_fit(train: &Dataset) -> Result<ScalarPolicy, AuctionError> {
    if train.is_empty() {
        return Err(AuctionError::EmptyDataset);
    }
    let mut second_bids = train.second_bids();
    let mut highest_bids = train.highest_bids();
    second_bids.sort_by(f64::total_cmp);
    highest_bids.sort_by(f64::total_cmp);

    let mut candidates = highest_bids.clone();
    candidates.push(0.0);
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();

    let total_second: f64 = second_bids.iter().sum();
    let mut pending_second = total_second; // sum of b_i with b_i > r
    let mut entered = 0usize; // records with b_i <= r
    let mut exited = 0usize; // records with B_i < r
    let mut enter_idx = 0usize;
    let mut exit_idx = 0usize;

    let mut best = (f64::NEG_INFINITY, 0.0);
    for &r in &candidates {
        while enter_idx < second_bids.len() && second_bids[enter_idx] <= r {
            pending_second -= second_bids[enter_idx];
            entered += 1;
            enter_idx += 1;
        }
        while exit_idx < highest_bids.len() && highest_bids[exit_idx] < r {
            exited += 1;
            exit_idx += 1;
        }
        let in_window = entered - exited;
        let revenue = pending_second + r * in_window as f64;
        if revenue > best.0 {
            best = (revenue, r);
        }
    }
    Ok(ScalarPolicy { reserve: best.1 })
}

/// Brute-force reference: evaluates every candidate directly in O(N^2).
/// Same candidate set and tie-breaking as [`nof_fit`].
pub fn nof_fit_brute_force(train: &Dataset) -> Result<ScalarPolicy, AuctionError> {
    if train.is_empty() {
        return Err(AuctionError::EmptyDataset);
    }
    let mut candidates = train.highest_bids();
    candidates.push(0.0);
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();

    let mut best = (f64::NEG_INFINITY, 0.0);
    for &r in &candidates {
        let revenue = constant_reserve_revenue(r, train)?;
        if revenue > best.0 {
            best = (revenue, r);
        }
    }
    Ok(ScalarPolicy { reserve: best.1 })
}

/// Total revenue of one fixed reserve over a dataset.
pub fn constant_reserve_revenue(reserve: f64, data: &Dataset) -> Result<f64, AuctionError> {
    let reserves = vec![reserve; data.len()];
    crate::auction::total_revenue(&reserves, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auction::AuctionRecord;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn dataset(pairs: &[(f64, f64)]) -> Dataset {
        let records = pairs
            .iter()
            .map(|&(hb, sb)| AuctionRecord::new(vec![], hb, sb).unwrap())
            .collect();
        Dataset::from_records(0, records).unwrap()
    }

    #[test]
    fn picks_the_profitable_outlier() {
        let data = dataset(&[(1.0, 0.5), (2.0, 1.0), (10.0, 5.0)]);
        let policy = nof_fit(&data).unwrap();
        assert_relative_eq!(policy.reserve, 10.0);
        assert_relative_eq!(constant_reserve_revenue(10.0, &data).unwrap(), 10.0);
        // candidate revenues are 7, 7, 10
        assert_relative_eq!(constant_reserve_revenue(1.0, &data).unwrap(), 7.0);
        assert_relative_eq!(constant_reserve_revenue(2.0, &data).unwrap(), 7.0);
    }

    #[test]
    fn single_auction_reserves_its_highest_bid() {
        let data = dataset(&[(43.03, 17.5)]);
        assert_relative_eq!(nof_fit(&data).unwrap().reserve, 43.03);
    }

    #[test]
    fn tied_bids_take_the_smallest_optimal_candidate() {
        // all b = B: every reserve <= min(B) earns the full sum; the zero
        // candidate is the smallest optimum
        let data = dataset(&[(2.0, 2.0), (3.0, 3.0), (5.0, 5.0)]);
        let policy = nof_fit(&data).unwrap();
        assert_relative_eq!(policy.reserve, 0.0);
        assert_relative_eq!(
            constant_reserve_revenue(policy.reserve, &data).unwrap(),
            10.0
        );
    }

    #[test]
    fn zero_policy_earns_second_bids() {
        let data = dataset(&[(1.0, 0.5), (2.0, 1.0), (10.0, 5.0)]);
        let policy = zero_policy();
        assert_relative_eq!(
            constant_reserve_revenue(policy.reserve, &data).unwrap(),
            6.5
        );
        assert_relative_eq!(
            crate::auction::pct_of_max(&vec![0.0; 3], &data).unwrap(),
            50.0
        );
    }

    #[test]
    fn empty_dataset_is_an_error() {
        assert!(matches!(
            nof_fit(&Dataset::new(0)),
            Err(AuctionError::EmptyDataset)
        ));
    }

    proptest! {
        #[test]
        fn sweep_matches_brute_force(seed in 0u64..300) {
            use rand::prelude::*;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = 1 + (rng.random::<u32>() % 120) as usize;
            let mut records = Vec::with_capacity(n);
            for _ in 0..n {
                // quantized bids so ties between candidates actually occur
                let sb = (rng.random::<f64>() * 8.0 * 4.0).round() / 4.0;
                let hb = sb + (rng.random::<f64>() * 8.0 * 4.0).round() / 4.0;
                records.push(AuctionRecord::new(vec![], hb, sb).unwrap());
            }
            let data = Dataset::from_records(0, records).unwrap();
            let fast = nof_fit(&data).unwrap();
            let brute = nof_fit_brute_force(&data).unwrap();
            prop_assert_eq!(fast.reserve, brute.reserve);

            // never below the zero policy on the training set
            let fast_rev = constant_reserve_revenue(fast.reserve, &data).unwrap();
            let zero_rev = constant_reserve_revenue(0.0, &data).unwrap();
            prop_assert!(fast_rev >= zero_rev);

            // permutation invariance
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            let permuted = nof_fit(&data.subset(&perm)).unwrap();
            prop_assert_eq!(fast.reserve, permuted.reserve);
        }
    }
}
