// SPDX-License-Identifier: Apache-2.0

//! Intra/inter test-case scoring of block transitions and the global
//! per-point frequency map.

use std::io;

use serde::{Deserialize, Serialize};

use crate::dutsim::{CoverageSet, UNIVERSE_SIZE};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoringParams {
    pub alpha: f64,
    pub beta_w: f64,
    pub factor: f64,
}

impl Default for ScoringParams {
    fn default() -> Self {
        ScoringParams { alpha: 0.1, beta_w: 1.0, factor: 1e-5 }
    }
}

impl ScoringParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.alpha > 0.0 && self.alpha < self.beta_w) {
            return Err(format!("scoring needs 0 < alpha < beta_w, got {} / {}", self.alpha, self.beta_w));
        }
        if !(self.factor >= 0.0) {
            return Err(format!("scoring factor must be >= 0, got {}", self.factor));
        }
        Ok(())
    }
}

/// f(x): number of committed test cases that covered each point.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencyMap {
    counts: Vec<u64>,
}

impl Default for FrequencyMap {
    fn default() -> Self {
        FrequencyMap { counts: vec![0; UNIVERSE_SIZE] }
    }
}

impl FrequencyMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, id: u32) -> u64 {
        self.counts.get(id as usize).copied().unwrap_or(0)
    }

    pub fn set(&mut self, id: u32, count: u64) {
        self.counts[id as usize] = count;
    }

    /// Adds one to every point the test case covered.
    pub fn commit(&mut self, coverage: &CoverageSet) {
        for id in coverage.iter() {
            self.counts[id as usize] += 1;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// `id,count` rows for non-zero entries, ascending by id.
    pub fn write_csv<W: io::Write>(&self, w: W) -> csv::Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["id", "count"])?;
        for (id, &c) in self.counts.iter().enumerate() {
            if c > 0 {
                wr.serialize((id, c))?;
            }
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: io::Read>(r: R) -> Result<Self, String> {
        let mut map = FrequencyMap::new();
        for row in csv::Reader::from_reader(r).deserialize::<(u32, u64)>() {
            let (id, c) = row.map_err(|e| e.to_string())?;
            if id as usize >= UNIVERSE_SIZE {
                return Err(format!("frequency id {id} outside universe"));
            }
            map.set(id, c);
        }
        Ok(map)
    }
}

/// β′(x) = max(β − f(x)·factor, α).
pub fn adjusted_beta(x: u32, freq: &FrequencyMap, p: &ScoringParams) -> f64 {
    (p.beta_w - freq.get(x) as f64 * p.factor).max(p.alpha)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransitionScore {
    pub value: f64,
    pub new_points: CoverageSet,
    pub prior_points: CoverageSet,
}

/// Scores the concatenation coverage against the prefix coverage `h`.
pub fn score_transition(
    h: &CoverageSet,
    cov_concat: &CoverageSet,
    freq: &FrequencyMap,
    p: &ScoringParams,
) -> TransitionScore {
    let value = cov_concat.iter().map(|x| if h.contains(x) { p.alpha } else { adjusted_beta(x, freq, p) }).sum();
    TransitionScore { value, new_points: *cov_concat, prior_points: *h }
}

/// Returns `freq` with the finished test case's coverage committed.
pub fn commit_test_case(coverage: &CoverageSet, freq: &FrequencyMap) -> FrequencyMap {
    let mut next = freq.clone();
    next.commit(coverage);
    next
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adjusted_beta_examples() {
        let p = ScoringParams::default();
        let mut f = FrequencyMap::new();
        assert_eq!(adjusted_beta(0, &f, &p), 1.0);
        f.set(0, 20_000);
        assert!((adjusted_beta(0, &f, &p) - 0.8).abs() < 1e-12);
        f.set(0, 10_000_000);
        assert_eq!(adjusted_beta(0, &f, &p), 0.1);
    }

    #[test]
    fn transition_examples() {
        let p = ScoringParams::default();
        let f = FrequencyMap::new();
        let h = CoverageSet::from_ids([1]);
        let g = CoverageSet::from_ids([1, 2, 3]);
        assert!((score_transition(&h, &g, &f, &p).value - 2.1).abs() < 1e-12);
        assert_eq!(score_transition(&h, &CoverageSet::new(), &f, &p).value, 0.0);
        let seven = CoverageSet::from_ids(0..7);
        assert!((score_transition(&seven, &seven, &f, &p).value - 0.7).abs() < 1e-12);
    }

    #[test]
    fn commit_counts_test_cases() {
        let a = CoverageSet::from_ids([4]);
        let f = commit_test_case(&a, &commit_test_case(&a, &FrequencyMap::new()));
        assert_eq!(f.get(4), 2);
        assert_eq!(commit_test_case(&CoverageSet::new(), &f), f);
    }

    #[test]
    fn own_commit_only_affects_later_scores() {
        // Two cases by hand: case A covers {0,1}; case B covers {1}.
        let p = ScoringParams { factor: 0.25, ..Default::default() };
        let a = CoverageSet::from_ids([0, 1]);
        let b = CoverageSet::from_ids([1]);
        let empty = CoverageSet::new();
        let f0 = FrequencyMap::new();
        let before = score_transition(&empty, &a, &f0, &p).value;
        assert_eq!(before, 2.0);
        let f1 = commit_test_case(&a, &f0);
        // B sees A's commit on point 1: 1 - 0.25.
        assert_eq!(score_transition(&empty, &b, &f1, &p).value, 0.75);
        let f2 = commit_test_case(&b, &f1);
        assert_eq!(f2.get(1), 2);
        assert_eq!(f2.get(0), 1);
    }

    #[test]
    fn csv_round_trip() {
        let mut f = FrequencyMap::new();
        f.commit(&CoverageSet::from_ids([3, 9, 400]));
        f.commit(&CoverageSet::from_ids([9]));
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "id,count\n3,1\n9,2\n400,1\n");
        assert_eq!(FrequencyMap::read_csv(buf.as_slice()).unwrap(), f);
    }
}
