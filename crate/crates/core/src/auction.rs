//! Auction data types, the revenue function, and revenue-based metrics.
//!
//! In a second-price auction with reserve `y`, the seller earns the second
//! bid `b` when `y < b`, the reserve itself when `b <= y <= B`, and nothing
//! when the reserve overshoots the highest bid `B`.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AuctionError {
    #[error("invalid bids: second bid {second_bid} must satisfy 0 <= second_bid <= highest bid {highest_bid}")]
    InvalidBids { highest_bid: f64, second_bid: f64 },
    #[error("length mismatch: {left} reserves vs {right} records")]
    LengthMismatch { left: usize, right: usize },
    #[error("feature vector has length {got}, dataset dimension is {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("operation requires a non-empty dataset")]
    EmptyDataset,
    #[error("oracle revenue is zero; percent-of-maximum is undefined")]
    ZeroOracleRevenue,
}

/// One historical auction: feature vector plus the top two bids.
#[derive(Debug, Clone, PartialEq)]
pub struct AuctionRecord {
    features: Vec<f64>,
    highest_bid: f64,
    second_bid: f64,
}

impl AuctionRecord {
    /// Builds a record, enforcing `0 <= second_bid <= highest_bid` and finite
    /// values. Ties `second_bid == highest_bid` are legal.
    pub fn new(features: Vec<f64>, highest_bid: f64, second_bid: f64) -> Result<Self, AuctionError> {
        if !(highest_bid.is_finite()
            && second_bid.is_finite()
            && second_bid >= 0.0
            && second_bid <= highest_bid
            && features.iter().all(|v| v.is_finite()))
        {
            return Err(AuctionError::InvalidBids {
                highest_bid,
                second_bid,
            });
        }
        Ok(Self {
            features,
            highest_bid,
            second_bid,
        })
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn highest_bid(&self) -> f64 {
        self.highest_bid
    }

    pub fn second_bid(&self) -> f64 {
        self.second_bid
    }
}

/// An ordered collection of auction records with a fixed feature dimension.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    records: Vec<AuctionRecord>,
    dim: usize,
}

impl Dataset {
    /// Empty dataset of the given feature dimension.
    pub fn new(dim: usize) -> Self {
        Self {
            records: Vec::new(),
            dim,
        }
    }

    pub fn from_records(dim: usize, records: Vec<AuctionRecord>) -> Result<Self, AuctionError> {
        let mut data = Self::new(dim);
        for r in records {
            data.push(r)?;
        }
        Ok(data)
    }

    pub fn push(&mut self, record: AuctionRecord) -> Result<(), AuctionError> {
        if record.features.len() != self.dim {
            return Err(AuctionError::DimensionMismatch {
                expected: self.dim,
                got: record.features.len(),
            });
        }
        self.records.push(record);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[AuctionRecord] {
        &self.records
    }

    pub fn iter(&self) -> std::slice::Iter<'_, AuctionRecord> {
        self.records.iter()
    }

    pub fn highest_bids(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.highest_bid).collect()
    }

    pub fn second_bids(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.second_bid).collect()
    }

    /// New dataset holding clones of the records at `indices`, in order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
            dim: self.dim,
        }
    }
}

/// Seller revenue for reserve `y` against bids `(B, b)`.
///
/// Piecewise: `b` below the second bid, `y` between the bids (both boundaries
/// inclusive, ties resolved toward seller revenue), `0` past the highest bid.
pub fn revenue(reserve: f64, highest_bid: f64, second_bid: f64) -> Result<f64, AuctionError> {
    if !(second_bid >= 0.0 && second_bid <= highest_bid) {
        return Err(AuctionError::InvalidBids {
            highest_bid,
            second_bid,
        });
    }
    Ok(if reserve < second_bid {
        second_bid
    } else if reserve <= highest_bid {
        reserve
    } else {
        0.0
    })
}

/// Probability that the seller is "satisfied" with the outcome:
/// `exp(-(B - revenue))`, in `(0, 1]`, equal to 1 exactly when the reserve
/// captures the full highest bid.
pub fn satisfaction_prob(
    reserve: f64,
    highest_bid: f64,
    second_bid: f64,
) -> Result<f64, AuctionError> {
    let r = revenue(reserve, highest_bid, second_bid)?;
    Ok((-(highest_bid - r)).exp())
}

/// Total retrospective revenue of per-auction reserves over a dataset.
pub fn total_revenue(reserves: &[f64], data: &Dataset) -> Result<f64, AuctionError> {
    if reserves.len() != data.len() {
        return Err(AuctionError::LengthMismatch {
            left: reserves.len(),
            right: data.len(),
        });
    }
    let mut sum = 0.0;
    for (y, rec) in reserves.iter().zip(data.iter()) {
        sum += revenue(*y, rec.highest_bid, rec.second_bid)?;
    }
    Ok(sum)
}

/// Revenue of an oracle that knows each highest bid in advance: `sum of B_i`.
pub fn oracle_revenue(data: &Dataset) -> Result<f64, AuctionError> {
    if data.is_empty() {
        return Err(AuctionError::EmptyDataset);
    }
    Ok(data.iter().map(|r| r.highest_bid).sum())
}

/// Percentage of the maximum possible revenue attained by `reserves`.
pub fn pct_of_max(reserves: &[f64], data: &Dataset) -> Result<f64, AuctionError> {
    let oracle = oracle_revenue(data)?;
    if oracle <= 0.0 {
        return Err(AuctionError::ZeroOracleRevenue);
    }
    Ok(100.0 * total_revenue(reserves, data)? / oracle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn sample_data() -> Dataset {
        let records = vec![
            AuctionRecord::new(vec![], 1.0, 0.5).unwrap(),
            AuctionRecord::new(vec![], 2.0, 1.0).unwrap(),
            AuctionRecord::new(vec![], 10.0, 5.0).unwrap(),
        ];
        Dataset::from_records(0, records).unwrap()
    }

    #[test]
    fn revenue_branches() {
        assert_relative_eq!(revenue(40.00, 43.03, 17.5).unwrap(), 40.00);
        assert_eq!(revenue(44.00, 43.03, 17.5).unwrap(), 0.0);
        assert_relative_eq!(revenue(43.03, 43.03, 17.5).unwrap(), 43.03);
        assert_relative_eq!(revenue(10.0, 43.03, 17.5).unwrap(), 17.5);
        // y = b boundary takes the middle branch
        assert_relative_eq!(revenue(17.5, 43.03, 17.5).unwrap(), 17.5);
    }

    #[test]
    fn revenue_rejects_invalid_bids() {
        assert!(revenue(1.0, 1.0, 2.0).is_err());
        assert!(revenue(1.0, 1.0, -0.5).is_err());
    }

    #[test]
    fn ties_between_bids_are_legal() {
        let r = AuctionRecord::new(vec![0.0], 5.0, 5.0).unwrap();
        assert_eq!(r.second_bid(), r.highest_bid());
    }

    #[test]
    fn satisfaction_examples() {
        assert_relative_eq!(satisfaction_prob(43.03, 43.03, 17.5).unwrap(), 1.0);
        assert_relative_eq!(satisfaction_prob(3.0, 2.0, 1.0).unwrap(), (-2.0f64).exp());
        assert_relative_eq!(satisfaction_prob(0.5, 2.0, 1.0).unwrap(), (-1.0f64).exp());
    }

    #[test]
    fn total_revenue_examples() {
        let data = sample_data();
        assert_relative_eq!(total_revenue(&[0.0, 0.0, 0.0], &data).unwrap(), 6.5);
        assert_relative_eq!(total_revenue(&[1.0, 1.0, 1.0], &data).unwrap(), 7.0);
        let single = Dataset::from_records(
            0,
            vec![AuctionRecord::new(vec![], 43.03, 17.5).unwrap()],
        )
        .unwrap();
        assert_relative_eq!(total_revenue(&[43.03], &single).unwrap(), 43.03);
        assert!(matches!(
            total_revenue(&[1.0], &data),
            Err(AuctionError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn oracle_and_pct() {
        let data = sample_data();
        assert_relative_eq!(oracle_revenue(&data).unwrap(), 13.0);
        assert_relative_eq!(
            pct_of_max(&data.highest_bids(), &data).unwrap(),
            100.0
        );
        assert_relative_eq!(pct_of_max(&[0.0, 0.0, 0.0], &data).unwrap(), 50.0);
        assert_relative_eq!(
            pct_of_max(&[1.0, 1.0, 1.0], &data).unwrap(),
            100.0 * 7.0 / 13.0
        );
        assert!(matches!(
            oracle_revenue(&Dataset::new(0)),
            Err(AuctionError::EmptyDataset)
        ));
    }

    #[test]
    fn zero_oracle_revenue_is_an_error() {
        let data = Dataset::from_records(
            0,
            vec![AuctionRecord::new(vec![], 0.0, 0.0).unwrap()],
        )
        .unwrap();
        assert!(matches!(
            pct_of_max(&[0.0], &data),
            Err(AuctionError::ZeroOracleRevenue)
        ));
    }

    proptest! {
        #[test]
        fn revenue_bounded_and_unimodal(
            b in 0.0..50.0f64,
            spread in 0.0..50.0f64,
            y1 in -100.0..200.0f64,
            y2 in -100.0..200.0f64,
        ) {
            let hb = b + spread;
            let r1 = revenue(y1, hb, b).unwrap();
            let r2 = revenue(y2, hb, b).unwrap();
            prop_assert!((0.0..=hb).contains(&r1));
            // non-decreasing on (-inf, B]
            if y1 <= y2 && y2 <= hb {
                prop_assert!(r1 <= r2);
            }
            if y1 > hb {
                prop_assert_eq!(r1, 0.0);
            }
            // log satisfaction = revenue - B, pointwise
            let s = satisfaction_prob(y1, hb, b).unwrap();
            prop_assert!((s.ln() - (r1 - hb)).abs() <= 1e-12);
        }

        #[test]
        fn total_revenue_permutation_invariant(seed in 0u64..1000) {
            use rand::prelude::*;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = 20;
            let mut records = Vec::new();
            let mut reserves = Vec::new();
            for _ in 0..n {
                let b: f64 = rng.random::<f64>() * 10.0;
                let hb = b + rng.random::<f64>() * 10.0;
                records.push(AuctionRecord::new(vec![], hb, b).unwrap());
                reserves.push(rng.random::<f64>() * 25.0 - 5.0);
            }
            let data = Dataset::from_records(0, records.clone()).unwrap();
            let base = total_revenue(&reserves, &data).unwrap();

            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            let pdata = data.subset(&perm);
            let preserves: Vec<f64> = perm.iter().map(|&i| reserves[i]).collect();
            let permuted = total_revenue(&preserves, &pdata).unwrap();
            prop_assert!((base - permuted).abs() <= 1e-9 * base.abs().max(1.0));
        }
    }
}
