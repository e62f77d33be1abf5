//! Ratings → implicit-feedback clicks, movie indexing and user splits.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::ndmath::{Matrix, RngStream};

pub type UserId = u64;
pub type MovieId = u64;

/// Ratings strictly above this value become clicks.
pub const DEFAULT_THRESHOLD: f64 = 3.5;
/// Validation/test size used on the full-size roster.
pub const FULL_SPLIT_SIZE: usize = 10_000;
/// Roster size at which the split sizes reach [`FULL_SPLIT_SIZE`].
pub const FULL_ROSTER: usize = 138_493;
pub const DEFAULT_HOLDOUT_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rating {
    pub user: UserId,
    pub movie: MovieId,
    pub stars: f64,
    pub timestamp: i64,
}

/// Ratings with at most one record per (user, movie).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InteractionsTable {
    records: Vec<Rating>,
}

impl InteractionsTable {
    /// Keeps the latest-timestamp record of every duplicated (user, movie)
    /// pair; on equal timestamps the later record wins. Output is sorted by
    /// (user, movie).
    pub fn from_records(records: impl IntoIterator<Item = Rating>) -> Result<Self> {
        let mut latest: BTreeMap<(UserId, MovieId), Rating> = BTreeMap::new();
        for r in records {
            if !(0.5..=5.0).contains(&r.stars) {
                return Err(Error::Invalid(format!(
                    "rating {} for user {} movie {} outside [0.5, 5.0]",
                    r.stars, r.user, r.movie
                )));
            }
            match latest.get(&(r.user, r.movie)) {
                Some(prev) if prev.timestamp > r.timestamp => {}
                _ => {
                    latest.insert((r.user, r.movie), r);
                }
            }
        }
        Ok(Self {
            records: latest.into_values().collect(),
        })
    }

    pub fn records(&self) -> &[Rating] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Distinct users, ascending.
    pub fn users(&self) -> Vec<UserId> {
        let mut users: Vec<UserId> = self.records.iter().map(|r| r.user).collect();
        users.dedup();
        users
    }
}

/// Bijection between external movie ids and contiguous indices `0..N`,
/// ordered by external id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MovieIndex {
    ids: Vec<MovieId>,
}

impl MovieIndex {
    pub fn new(ids: impl IntoIterator<Item = MovieId>) -> Self {
        let mut ids: Vec<MovieId> = ids.into_iter().collect();
        ids.sort_unstable();
        ids.dedup();
        Self { ids }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn index_of(&self, id: MovieId) -> Option<usize> {
        self.ids.binary_search(&id).ok()
    }

    pub fn id_of(&self, index: usize) -> Option<MovieId> {
        self.ids.get(index).copied()
    }

    pub fn ids(&self) -> &[MovieId] {
        &self.ids
    }

    /// Keeps only movies also present in `other`.
    pub fn intersect(&self, other: &MovieIndex) -> MovieIndex {
        MovieIndex {
            ids: self
                .ids
                .iter()
                .copied()
                .filter(|id| other.index_of(*id).is_some())
                .collect(),
        }
    }
}

/// Sparse users × movies 0/1 matrix, one sorted index list per user.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryClickMatrix {
    n_movies: usize,
    users: Vec<UserId>,
    rows: Vec<Vec<u32>>,
}

impl BinaryClickMatrix {
    /// Builds the matrix from per-user click lists. Users must be distinct;
    /// the roster is sorted by id and every list is sorted and deduplicated.
    pub fn from_rows(n_movies: usize, rows: impl IntoIterator<Item = (UserId, Vec<u32>)>) -> Result<Self> {
        let mut pairs: Vec<(UserId, Vec<u32>)> = rows.into_iter().collect();
        pairs.sort_by_key(|p| p.0);
        if pairs.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Invalid("duplicate user in click matrix".into()));
        }
        let mut users = Vec::with_capacity(pairs.len());
        let mut out = Vec::with_capacity(pairs.len());
        for (user, mut clicks) in pairs {
            clicks.sort_unstable();
            clicks.dedup();
            if let Some(&bad) = clicks.last().filter(|&&m| m as usize >= n_movies) {
                return Err(Error::Invalid(format!(
                    "user {user} clicks movie index {bad} but only {n_movies} movies exist"
                )));
            }
            users.push(user);
            out.push(clicks);
        }
        Ok(Self {
            n_movies,
            users,
            rows: out,
        })
    }

    pub fn n_movies(&self) -> usize {
        self.n_movies
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn roster(&self) -> &[UserId] {
        &self.users
    }

    pub fn row_of(&self, user: UserId) -> Option<usize> {
        self.users.binary_search(&user).ok()
    }

    pub fn clicks(&self, row: usize) -> &[u32] {
        &self.rows[row]
    }

    pub fn clicks_of(&self, user: UserId) -> Option<&[u32]> {
        self.row_of(user).map(|r| self.clicks(r))
    }

    pub fn n_clicks(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// Users retained in the roster despite having no clicks.
    pub fn users_without_clicks(&self) -> Vec<UserId> {
        self.users
            .iter()
            .zip(&self.rows)
            .filter(|(_, r)| r.is_empty())
            .map(|(&u, _)| u)
            .collect()
    }

    /// Dense 0/1 minibatch of the given roster rows.
    pub fn dense_rows(&self, rows: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(rows.len(), self.n_movies);
        for (dst, &src) in rows.iter().enumerate() {
            let row = out.row_mut(dst);
            for &m in &self.rows[src] {
                row[m as usize] = 1.0;
            }
        }
        out
    }

    /// Restriction to the listed users (unknown ids are ignored).
    pub fn subset(&self, users: &[UserId]) -> BinaryClickMatrix {
        let mut keep: Vec<usize> = users.iter().filter_map(|&u| self.row_of(u)).collect();
        keep.sort_unstable();
        keep.dedup();
        BinaryClickMatrix {
            n_movies: self.n_movies,
            users: keep.iter().map(|&r| self.users[r]).collect(),
            rows: keep.iter().map(|&r| self.rows[r].clone()).collect(),
        }
    }
}

/// Thresholds ratings into clicks: `stars > threshold` and the movie is indexed.
/// Every user of the table appears in the roster, even with zero clicks.
pub fn binarize(table: &InteractionsTable, index: &MovieIndex, threshold: f64) -> BinaryClickMatrix {
    let mut rows: BTreeMap<UserId, Vec<u32>> = BTreeMap::new();
    for r in table.records() {
        let entry = rows.entry(r.user).or_default();
        if r.stars > threshold {
            if let Some(i) = index.index_of(r.movie) {
                entry.push(i as u32);
            }
        }
    }
    BinaryClickMatrix::from_rows(index.len(), rows).expect("indices come from the movie index")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitRole {
    Train,
    Validation,
    Test,
}

impl SplitRole {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitRole::Train => "train",
            SplitRole::Validation => "val",
            SplitRole::Test => "test",
        }
    }
}

/// Disjoint train/validation/test user lists, each sorted by id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitSpec {
    pub fold_id: usize,
    pub seed: u64,
    pub train: Vec<UserId>,
    pub validation: Vec<UserId>,
    pub test: Vec<UserId>,
}

impl SplitSpec {
    /// `(user, role)` pairs sorted by user id.
    pub fn assignments(&self) -> Vec<(UserId, SplitRole)> {
        let mut out: Vec<(UserId, SplitRole)> = self
            .train
            .iter()
            .map(|&u| (u, SplitRole::Train))
            .chain(self.validation.iter().map(|&u| (u, SplitRole::Validation)))
            .chain(self.test.iter().map(|&u| (u, SplitRole::Test)))
            .collect();
        out.sort_unstable_by_key(|p| p.0);
        out
    }
}

fn sorted(mut v: Vec<UserId>) -> Vec<UserId> {
    v.sort_unstable();
    v
}

/// Uniform random disjoint validation and test draws; the rest is training.
pub fn split_users(roster: &[UserId], seed: u64, n_val: usize, n_test: usize) -> Result<SplitSpec> {
    if n_val + n_test >= roster.len() {
        return Err(Error::Size(format!(
            "cannot draw {n_val} validation and {n_test} test users from a roster of {}",
            roster.len()
        )));
    }
    let mut rng = RngStream::substream(seed, "split");
    let mut users = roster.to_vec();
    rng.shuffle(&mut users);
    let test = users[..n_test].to_vec();
    let validation = users[n_test..n_test + n_val].to_vec();
    let train = users[n_test + n_val..].to_vec();
    Ok(SplitSpec {
        fold_id: 0,
        seed,
        train: sorted(train),
        validation: sorted(validation),
        test: sorted(test),
    })
}

/// Validation/test size for a roster: 10,000 at full scale, proportionally
/// fewer (at least one) below it.
pub fn proportional_split_size(roster_len: usize) -> usize {
    if roster_len >= FULL_ROSTER {
        FULL_SPLIT_SIZE
    } else {
        ((roster_len as u128 * FULL_SPLIT_SIZE as u128) / FULL_ROSTER as u128).max(1) as usize
    }
}

/// `k` folds with the proportional split sizes.
pub fn make_cv_folds(roster: &[UserId], seed: u64, k: usize) -> Result<Vec<SplitSpec>> {
    let n = proportional_split_size(roster.len());
    make_cv_folds_sized(roster, seed, k, n, n)
}

/// `k` folds whose test sets are disjoint slices of one shuffled roster;
/// each fold's validation users are drawn from its non-test remainder.
pub fn make_cv_folds_sized(
    roster: &[UserId],
    seed: u64,
    k: usize,
    n_val: usize,
    n_test: usize,
) -> Result<Vec<SplitSpec>> {
    if k < 2 {
        return Err(Error::Invalid(format!("cross-validation needs k >= 2, got {k}")));
    }
    if k * n_test > roster.len() || n_test + n_val >= roster.len() {
        return Err(Error::Size(format!(
            "roster of {} cannot hold {k} disjoint test sets of {n_test} plus {n_val} validation users",
            roster.len()
        )));
    }
    let mut users = roster.to_vec();
    RngStream::substream(seed, "cv-folds").shuffle(&mut users);
    let mut folds = Vec::with_capacity(k);
    for fold in 0..k {
        let test = users[fold * n_test..(fold + 1) * n_test].to_vec();
        let mut rest: Vec<UserId> = users[..fold * n_test]
            .iter()
            .chain(&users[(fold + 1) * n_test..])
            .copied()
            .collect();
        let mut rng = RngStream::substream(seed, &format!("cv-validation-{fold}"));
        rng.shuffle(&mut rest);
        let validation = rest[..n_val].to_vec();
        let train = rest[n_val..].to_vec();
        folds.push(SplitSpec {
            fold_id: fold,
            seed,
            train: sorted(train),
            validation: sorted(validation),
            test: sorted(test),
        });
    }
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HoldoutUser {
    pub user: UserId,
    /// Clicks the model is shown (sorted).
    pub input: Vec<u32>,
    /// Clicks masked from the input and used as the relevant set (sorted).
    pub heldout: Vec<u32>,
}

/// Per-user input/held-out partition for masked evaluation.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct HoldoutSplit {
    pub users: Vec<HoldoutUser>,
    /// Users with fewer than two clicks; they take no part in masked evaluation.
    pub excluded: Vec<UserId>,
}

/// Number of clicks held out: `max(1, floor(fraction · n))`.
pub fn holdout_size(n_clicks: usize, fraction: f64) -> usize {
    (libm::floor(fraction * n_clicks as f64) as usize).max(1)
}

/// Holds out a uniform random subset of each listed user's clicks.
pub fn holdout_split(
    clicks: &BinaryClickMatrix,
    users: &[UserId],
    seed: u64,
    fraction: f64,
) -> Result<HoldoutSplit> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Invalid(format!("holdout fraction must lie in (0, 1), got {fraction}")));
    }
    let mut rng = RngStream::substream(seed, "holdout");
    let mut out = HoldoutSplit::default();
    for &user in users {
        let row = clicks
            .clicks_of(user)
            .ok_or_else(|| Error::Invalid(format!("user {user} is not in the click matrix")))?;
        if row.len() < 2 {
            out.excluded.push(user);
            continue;
        }
        let k = holdout_size(row.len(), fraction);
        let mut heldout = rng.sample_without_replacement(row, k);
        heldout.sort_unstable();
        let input = row
            .iter()
            .copied()
            .filter(|m| heldout.binary_search(m).is_err())
            .collect();
        out.users.push(HoldoutUser { user, input, heldout });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rating(user: u64, movie: u64, stars: f64, timestamp: i64) -> Rating {
        Rating {
            user,
            movie,
            stars,
            timestamp,
        }
    }

    #[test]
    fn duplicate_keeps_latest_timestamp() {
        let t = InteractionsTable::from_records([
            rating(1, 10, 2.0, 20),
            rating(1, 10, 5.0, 10),
            rating(2, 10, 4.0, 1),
        ])
        .unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.records()[0].stars, 2.0);
        assert_eq!(t.records()[0].timestamp, 20);
    }

    #[test]
    fn rejects_out_of_range_stars() {
        assert!(InteractionsTable::from_records([rating(1, 1, 5.5, 0)]).is_err());
    }

    #[test]
    fn binarize_threshold_and_missing_movies() {
        let t = InteractionsTable::from_records([
            rating(1, 10, 4.0, 0),
            rating(1, 20, 3.5, 0),
            rating(1, 30, 4.5, 0),
            rating(2, 20, 3.6, 0),
            rating(3, 20, 1.0, 0),
        ])
        .unwrap();
        let index = MovieIndex::new([20, 10]);
        let clicks = binarize(&t, &index, DEFAULT_THRESHOLD);
        assert_eq!(clicks.roster(), &[1, 2, 3]);
        assert_eq!(clicks.clicks_of(1).unwrap(), &[0]); // 4.0 kept, 3.5 not, movie 30 dropped
        assert_eq!(clicks.clicks_of(2).unwrap(), &[1]);
        assert_eq!(clicks.users_without_clicks(), vec![3]);
    }

    #[test]
    fn movie_index_is_sorted_bijection() {
        let index = MovieIndex::new([30, 10, 20, 10]);
        assert_eq!(index.ids(), &[10, 20, 30]);
        for i in 0..3 {
            assert_eq!(index.index_of(index.id_of(i).unwrap()), Some(i));
        }
    }

    #[test]
    fn split_of_twenty() {
        let roster: Vec<u64> = (1..=20).collect();
        let s = split_users(&roster, 5, 5, 5).unwrap();
        assert_eq!(s.train.len(), 10);
        assert_eq!(s.assignments().len(), 20);
        assert_eq!(s, split_users(&roster, 5, 5, 5).unwrap());
        assert!(split_users(&roster, 5, 10, 10).is_err());
    }

    #[test]
    fn full_scale_split_sizes() {
        let roster: Vec<u64> = (0..FULL_ROSTER as u64).collect();
        let s = split_users(&roster, 1, FULL_SPLIT_SIZE, FULL_SPLIT_SIZE).unwrap();
        assert_eq!(s.train.len(), 118_493);
        assert_eq!(proportional_split_size(FULL_ROSTER), FULL_SPLIT_SIZE);
    }

    #[test]
    fn three_folds_have_disjoint_tests() {
        let roster: Vec<u64> = (0..30_000).collect();
        let folds = make_cv_folds(&roster, 11, 3).unwrap();
        assert_eq!(folds.len(), 3);
        let mut all_tests: Vec<u64> = folds.iter().flat_map(|f| f.test.iter().copied()).collect();
        let n = all_tests.len();
        all_tests.sort_unstable();
        all_tests.dedup();
        assert_eq!(all_tests.len(), n);
        for f in &folds {
            assert_eq!(f.train.len() + f.validation.len() + f.test.len(), roster.len());
            assert!(f.validation.iter().all(|u| f.test.binary_search(u).is_err()));
        }
        assert_eq!(folds, make_cv_folds(&roster, 11, 3).unwrap());
        assert!(make_cv_folds(&roster, 11, 1).is_err());
    }

    #[test]
    fn holdout_sizes_follow_floor_rule() {
        let clicks = BinaryClickMatrix::from_rows(
            20,
            [
                (1, (0..10).collect()),
                (2, (0..5).collect()),
                (3, vec![7]),
            ],
        )
        .unwrap();
        let h = holdout_split(&clicks, &[1, 2, 3], 3, DEFAULT_HOLDOUT_FRACTION).unwrap();
        assert_eq!(h.users[0].heldout.len(), 2);
        assert_eq!(h.users[0].input.len(), 8);
        assert_eq!(h.users[1].heldout.len(), 1);
        assert_eq!(h.excluded, vec![3]);
        assert!(holdout_split(&clicks, &[1], 3, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn binarize_is_monotone(stars in 1u32..=9, bump in 1u32..=9, threshold in 0.5f64..5.0) {
            let low = f64::from(stars) * 0.5;
            let high = (low + f64::from(bump) * 0.5).min(5.0);
            let index = MovieIndex::new([1]);
            let a = binarize(&InteractionsTable::from_records([rating(1, 1, low, 0)]).unwrap(), &index, threshold);
            let b = binarize(&InteractionsTable::from_records([rating(1, 1, high, 0)]).unwrap(), &index, threshold);
            prop_assert!(a.n_clicks() <= b.n_clicks());
        }

        #[test]
        fn holdout_partitions_clicks(n in 2usize..60, seed in any::<u64>()) {
            let clicks = BinaryClickMatrix::from_rows(100, [(9, (0..n as u32).map(|i| i * 3 % 100).collect())]).unwrap();
            let h = holdout_split(&clicks, &[9], seed, 0.2).unwrap();
            let u = &h.users[0];
            let mut union: Vec<u32> = u.input.iter().chain(&u.heldout).copied().collect();
            union.sort_unstable();
            prop_assert_eq!(union.as_slice(), clicks.clicks_of(9).unwrap());
            prop_assert_eq!(u.heldout.len(), holdout_size(clicks.clicks_of(9).unwrap().len(), 0.2));
        }

        #[test]
        fn different_seeds_give_different_splits(seed in any::<u64>()) {
            let roster: Vec<u64> = (0..100).collect();
            let a = split_users(&roster, seed, 20, 20).unwrap();
            let b = split_users(&roster, seed.wrapping_add(1), 20, 20).unwrap();
            prop_assert_ne!(a, b);
        }
    }
}
