//! Families of index maps `q_{i,N}(n)` and their combinatorial regularity.
//!
//! A family is a list of `ell` bivariate integer polynomials in the summation
//! index `n` and the horizon `N`.  The statistics in this crate sum, over
//! `n = 1..N`, products of indicators read at the trajectory coordinates
//! `q_{1,N}(n), .., q_{ell,N}(n)`; whether such sums behave like sums of
//! weakly dependent indicators is controlled by three counting conditions:
//!
//! 1. every difference `q_i - q_j` (`i != j`) and every single map `q_i`
//!    takes each value at most `K` times on `0 <= n <= N`;
//! 2. for every permutation `zeta`, the system
//!    `q_i(n) = q_{zeta(i)}(m)` for all `i` has at most `K` ordered
//!    solution pairs `m != n` in `[0, N]^2`;
//! 3. at most `K` ordered pairs `m != n` are nested, i.e. satisfy
//!    `max_i q_i(m) >= max_i q_i(n) >= min_i q_i(n) >= min_i q_i(m)`.
//!
//! All checks are exhaustive at a concrete horizon `N` (grouping by achieved
//! value, or scanning pairs); nothing is verified symbolically for all `N`.
//! Evaluation uses arbitrary-precision integers so that high-degree maps
//! cannot overflow silently.
//!
//! The module also provides the derived objects consumed by the explicit
//! approximation bounds: the collision set (indices where two maps agree),
//! the spread set `U_{N,M}` (all pairwise gaps at least `M`), the semi-metric
//! `delta` between two summation indices together with its neighborhoods
//! `B`, and the asymmetric coincidence test `sigma`.

use std::collections::HashMap;

use num_bigint::BigInt;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Maximum degree per variable of an index-map polynomial.
pub const MAX_DEGREE: u8 = 8;

/// Maximum family size for which the permutation check is enumerable.
pub const MAX_ELL_FOR_PERMUTATIONS: usize = 8;

/// Work cap (in scanned pairs) for the quadratic pair scans.
const PAIR_SCAN_CAP: f64 = 1.0e8;

/// A bivariate integer polynomial `p(n, N) = sum c * n^dn * N^dN`,
/// stored as `(dn, dN, c)` monomials.
///
/// Serializes transparently as a list of `[dn, dN, c]` triples.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Poly2 {
    pub terms: Vec<(u8, u8, i64)>,
}

fn big_pow(base: u64, exp: u8) -> BigInt {
    let mut acc = BigInt::from(1u8);
    let b = BigInt::from(base);
    for _ in 0..exp {
        acc *= &b;
    }
    acc
}

impl Poly2 {
    /// Builds a polynomial from `(dn, dN, c)` monomials.
    pub fn new(terms: Vec<(u8, u8, i64)>) -> Self {
        Poly2 { terms }
    }

    /// Convenience constructor for `a*n + b*N + c`.
    pub fn linear(a: i64, b: i64, c: i64) -> Self {
        Poly2::new(vec![(1, 0, a), (0, 1, b), (0, 0, c)])
    }

    /// Exact evaluation at `(n, N)` in arbitrary precision.
    pub fn eval(&self, n: u64, big_n: u64) -> BigInt {
        let mut acc = BigInt::from(0u8);
        for &(dn, d_big, c) in &self.terms {
            acc += BigInt::from(c) * big_pow(n, dn) * big_pow(big_n, d_big);
        }
        acc
    }

    fn max_degrees(&self) -> (u8, u8) {
        self.terms
            .iter()
            .fold((0, 0), |(a, b), &(dn, d_big, _)| (a.max(dn), b.max(d_big)))
    }
}

/// A family of `ell` index maps plus its regularity constant `K`.
///
/// `K` is the common counting bound the three checks compare against; it is
/// part of the family description because every downstream error bound is
/// linear or quadratic in it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QFamily {
    /// Number of index maps (products of this many indicators).
    pub ell: usize,
    /// Counting bound for the regularity checks.
    #[serde(rename = "K")]
    pub k: u64,
    /// The maps themselves, `polys[i]` being `q_{i+1,N}`.
    pub polys: Vec<Poly2>,
}

/// Result of the value-multiplicity check (differences and level sets).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AssumptionICheck {
    /// Largest multiplicity of any achieved difference or level value.
    pub max_count: u64,
    /// Whether `max_count <= K`.
    pub pass: bool,
}

/// Result of the permutation-system check.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AssumptionIICheck {
    /// Permutation (1-based images) achieving the largest solution count.
    pub worst_permutation: Vec<usize>,
    /// Number of ordered pairs `m != n` solving that permutation's system.
    pub count: u64,
    /// Whether `count <= K`.
    pub pass: bool,
}

/// Result of the nesting-pair check.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AssumptionIIICheck {
    /// All ordered pairs `(m, n)`, `m != n`, whose value ranges nest.
    pub pairs: Vec<(u64, u64)>,
    /// Whether `pairs.len() <= K`.
    pub pass: bool,
}

/// The index sets consumed by the explicit bounds, at one `(N, M, R)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IndexSets {
    /// Collision indices: `n` in `[1, N]` where two distinct maps agree.
    pub hat: Vec<u64>,
    /// Spread indices: `n` in `[1, N]` with all pairwise gaps `>= M`.
    pub u: Vec<u64>,
    /// `b[n-1]` = indices `l` in `[1, M]` with `delta(l, n) < R`.
    pub b: Vec<Vec<u64>>,
    /// Nesting pairs (same as the third check).
    pub d_pairs: Vec<(u64, u64)>,
}

/// Evaluations of a family on the full checker domain `0 <= n <= N`.
///
/// Row `n` holds `[q_1(n), .., q_ell(n)]` exactly.
#[derive(Clone, Debug)]
pub struct FamilyTable {
    pub ell: usize,
    /// `values[n][i]` = `q_{i+1,N}(n)` for `0 <= n <= n_horizon`.
    pub values: Vec<Vec<BigInt>>,
}

impl FamilyTable {
    /// `delta` between rows `k` and `l`: smallest absolute difference
    /// between any value at `k` and any value at `l` (saturating to
    /// `u64::MAX`, far beyond any cutoff this crate compares against).
    pub fn delta(&self, k: u64, l: u64) -> u64 {
        let (a, b) = (&self.values[k as usize], &self.values[l as usize]);
        let mut best = u64::MAX;
        for x in a {
            for y in b {
                best = best.min(abs_diff_u64(x, y));
            }
        }
        best
    }

    /// `sigma(n, m)`: the largest, over values at `m`, of the distance to
    /// the nearest value at `n`.  Zero exactly when every value at `m` is
    /// also achieved at `n`.
    pub fn sigma(&self, n: u64, m: u64) -> u64 {
        let (at_n, at_m) = (&self.values[n as usize], &self.values[m as usize]);
        let mut worst = 0u64;
        for y in at_m {
            let mut best = u64::MAX;
            for x in at_n {
                best = best.min(abs_diff_u64(x, y));
            }
            worst = worst.max(best);
        }
        worst
    }

    fn row_max_min(&self, n: u64) -> (&BigInt, &BigInt) {
        let row = &self.values[n as usize];
        let mut mx = &row[0];
        let mut mn = &row[0];
        for v in row.iter().skip(1) {
            if v > mx {
                mx = v;
            }
            if v < mn {
                mn = v;
            }
        }
        (mx, mn)
    }
}

fn abs_diff_u64(a: &BigInt, b: &BigInt) -> u64 {
    let d = a - b;
    u64::try_from(d.magnitude()).unwrap_or(u64::MAX)
}

/// Flat `u64` evaluation table for the statistics hot path, rows `n = 1..N`.
#[derive(Clone, Debug)]
pub struct IndexTable {
    pub ell: usize,
    pub n_horizon: u64,
    /// Row-major `[q_1(n), .., q_ell(n)]` for `n = 1, .., n_horizon`.
    idx: Vec<u64>,
    /// Largest coordinate any map reads.
    pub max_index: u64,
}

impl IndexTable {
    /// Coordinates read at summation index `n` (`1 <= n <= n_horizon`).
    #[inline]
    pub fn row(&self, n: u64) -> &[u64] {
        let start = (n as usize - 1) * self.ell;
        &self.idx[start..start + self.ell]
    }

    /// Trajectory length needed to read a window of `window` symbols at
    /// every coordinate.
    pub fn required_len(&self, window: usize) -> usize {
        self.max_index as usize + window
    }
}

impl QFamily {
    /// Builds and validates a family; `ell` is taken from `polys.len()`.
    pub fn new(k: u64, polys: Vec<Poly2>) -> Result<Self> {
        let qf = QFamily {
            ell: polys.len(),
            k,
            polys,
        };
        qf.validate()?;
        Ok(qf)
    }

    /// Structural validation: nonempty, consistent `ell`, positive `K`,
    /// degree caps respected.
    pub fn validate(&self) -> Result<()> {
        if self.ell == 0 {
            return Err(Error::config("a family needs at least one index map (ell >= 1)"));
        }
        if self.polys.len() != self.ell {
            return Err(Error::config(format!(
                "ell = {} but {} polynomials supplied",
                self.ell,
                self.polys.len()
            )));
        }
        if self.k == 0 {
            return Err(Error::config("the counting bound K must be >= 1"));
        }
        for (i, p) in self.polys.iter().enumerate() {
            let (dn, d_big) = p.max_degrees();
            if dn > MAX_DEGREE || d_big > MAX_DEGREE {
                return Err(Error::config(format!(
                    "q_{} has degree ({}, {}) exceeding the cap of {} per variable",
                    i + 1,
                    dn,
                    d_big,
                    MAX_DEGREE
                )));
            }
        }
        Ok(())
    }

    /// Parses a family from JSON and validates it.
    pub fn from_json(s: &str) -> Result<Self> {
        let qf: QFamily =
            serde_json::from_str(s).map_err(|e| Error::config(format!("bad family JSON: {e}")))?;
        qf.validate()?;
        Ok(qf)
    }

    /// `q_{i,N}(n)` exactly (`i` is 1-based).  Errors if the value is
    /// negative: a negative value cannot address a trajectory coordinate.
    pub fn evaluate(&self, i: usize, n: u64, big_n: u64) -> Result<BigInt> {
        if i == 0 || i > self.ell {
            return Err(Error::config(format!(
                "map index i = {i} out of range 1..={}",
                self.ell
            )));
        }
        let v = self.polys[i - 1].eval(n, big_n);
        if v.sign() == num_bigint::Sign::Minus {
            return Err(Error::NegativeIndex {
                i,
                n,
                big_n,
                value: v,
            });
        }
        Ok(v)
    }

    /// Evaluates the whole family on `0 <= n <= N`.
    pub fn family_table(&self, big_n: u64) -> Result<FamilyTable> {
        self.validate()?;
        let mut values = Vec::with_capacity(big_n as usize + 1);
        for n in 0..=big_n {
            let mut row = Vec::with_capacity(self.ell);
            for i in 1..=self.ell {
                row.push(self.evaluate(i, n, big_n)?);
            }
            values.push(row);
        }
        Ok(FamilyTable {
            ell: self.ell,
            values,
        })
    }

    /// Builds the `u64` coordinate table for `n = 1..N` used by statistics.
    pub fn index_table(&self, big_n: u64) -> Result<IndexTable> {
        self.validate()?;
        let mut idx = Vec::with_capacity(big_n as usize * self.ell);
        let mut max_index = 0u64;
        for n in 1..=big_n {
            for i in 1..=self.ell {
                let v = self.evaluate(i, n, big_n)?;
                let u = u64::try_from(&v).map_err(|_| Error::IndexOverflow {
                    i,
                    n,
                    big_n,
                    value: v.clone(),
                })?;
                max_index = max_index.max(u);
                idx.push(u);
            }
        }
        Ok(IndexTable {
            ell: self.ell,
            n_horizon: big_n,
            idx,
            max_index,
        })
    }

    /// Value-multiplicity check: groups `n in [0, N]` by each achieved
    /// difference `q_i - q_j` (`i != j`) and by each achieved level `q_i`,
    /// and reports the largest group.  With a single map only levels exist.
    pub fn check_assumption_i(&self, big_n: u64) -> Result<AssumptionICheck> {
        let table = self.family_table(big_n)?;
        let mut max_count = 0u64;

        // Level sets of each map.
        for i in 0..self.ell {
            let mut groups: HashMap<&BigInt, u64> = HashMap::new();
            for row in &table.values {
                *groups.entry(&row[i]).or_insert(0) += 1;
            }
            max_count = max_count.max(groups.values().copied().max().unwrap_or(0));
        }
        // Difference sets of each ordered pair of distinct maps.
        for i in 0..self.ell {
            for j in 0..self.ell {
                if i == j {
                    continue;
                }
                let mut groups: HashMap<BigInt, u64> = HashMap::new();
                for row in &table.values {
                    *groups.entry(&row[i] - &row[j]).or_insert(0) += 1;
                }
                max_count = max_count.max(groups.values().copied().max().unwrap_or(0));
            }
        }

        Ok(AssumptionICheck {
            max_count,
            pass: max_count <= self.k,
        })
    }

    /// Permutation-system check: for every permutation `zeta`, counts
    /// ordered pairs `m != n` in `[0, N]^2` with
    /// `q_i(n) = q_{zeta(i)}(m)` for all `i`, by grouping `m` over its
    /// permuted value vector and looking up each `n`'s value vector.
    pub fn check_assumption_ii(&self, big_n: u64) -> Result<AssumptionIICheck> {
        if self.ell > MAX_ELL_FOR_PERMUTATIONS {
            return Err(Error::config(format!(
                "permutation check enumerates ell! systems; ell = {} exceeds the cap of {}",
                self.ell, MAX_ELL_FOR_PERMUTATIONS
            )));
        }
        let table = self.family_table(big_n)?;
        let mut worst: (Vec<usize>, u64) = ((1..=self.ell).collect(), 0);
        let mut first = true;

        for zeta in permutations(self.ell) {
            // Group m by the vector (q_{zeta(1)}(m), .., q_{zeta(ell)}(m)).
            let mut buckets: HashMap<Vec<&BigInt>, u64> = HashMap::new();
            for row in &table.values {
                let key: Vec<&BigInt> = zeta.iter().map(|&z| &row[z]).collect();
                *buckets.entry(key).or_insert(0) += 1;
            }
            let mut count = 0u64;
            for row in &table.values {
                let key: Vec<&BigInt> = (0..self.ell).map(|i| &row[i]).collect();
                if let Some(&c) = buckets.get(&key) {
                    count += c;
                    // Remove the self pair m = n when it solves the system.
                    let self_solves = (0..self.ell).all(|i| row[i] == row[zeta[i]]);
                    if self_solves {
                        count -= 1;
                    }
                }
            }
            if first || count > worst.1 {
                worst = (zeta.iter().map(|&z| z + 1).collect(), count);
                first = false;
            }
        }

        Ok(AssumptionIICheck {
            worst_permutation: worst.0,
            count: worst.1,
            pass: worst.1 <= self.k,
        })
    }

    /// Nesting-pair check: scans all ordered pairs `m != n` in `[0, N]^2`
    /// and collects those whose value range at `n` sits inside the value
    /// range at `m`.
    pub fn check_assumption_iii(&self, big_n: u64) -> Result<AssumptionIIICheck> {
        let scan = (big_n as f64 + 1.0).powi(2);
        if scan > PAIR_SCAN_CAP {
            return Err(Error::Intractable {
                what: "nesting-pair scan",
                required: scan,
                cap: PAIR_SCAN_CAP,
            });
        }
        let table = self.family_table(big_n)?;
        let extremes: Vec<(&BigInt, &BigInt)> =
            (0..=big_n).map(|n| table.row_max_min(n)).collect();
        let mut pairs = Vec::new();
        for m in 0..=big_n {
            let (max_m, min_m) = extremes[m as usize];
            for n in 0..=big_n {
                if m == n {
                    continue;
                }
                let (max_n, min_n) = extremes[n as usize];
                if max_m >= max_n && max_n >= min_n && min_n >= min_m {
                    pairs.push((m, n));
                }
            }
        }
        let pass = pairs.len() as u64 <= self.k;
        Ok(AssumptionIIICheck { pairs, pass })
    }

    /// `delta(k, l)`: smallest `|q_i(k) - q_j(l)|` over all map pairs.
    /// Symmetric in `(k, l)`; zero iff the families share a value.
    pub fn delta(&self, k: u64, l: u64, big_n: u64) -> Result<u64> {
        let table = self.partial_table(&[k, l], big_n)?;
        Ok(table.delta(k, l))
    }

    /// `sigma(n, m)`: largest distance from a value at `m` to the value
    /// set at `n`; zero iff all of `m`'s values are achieved at `n`.
    pub fn sigma(&self, n: u64, m: u64, big_n: u64) -> Result<u64> {
        let table = self.partial_table(&[n, m], big_n)?;
        Ok(table.sigma(n, m))
    }

    /// Table with only the listed rows evaluated (others left empty), for
    /// point queries without a full scan.
    fn partial_table(&self, rows: &[u64], big_n: u64) -> Result<FamilyTable> {
        self.validate()?;
        let top = rows.iter().copied().max().unwrap_or(0);
        let mut values = vec![Vec::new(); top as usize + 1];
        for &n in rows {
            if n > big_n {
                return Err(Error::config(format!(
                    "index {n} outside the checker domain 0..={big_n}"
                )));
            }
            if values[n as usize].is_empty() {
                let mut row = Vec::with_capacity(self.ell);
                for i in 1..=self.ell {
                    row.push(self.evaluate(i, n, big_n)?);
                }
                values[n as usize] = row;
            }
        }
        Ok(FamilyTable {
            ell: self.ell,
            values,
        })
    }

    /// Builds every index set the explicit bounds consume, by direct scan:
    /// collision set, spread set `U_{N,M}`, neighborhoods
    /// `B^{M,R}_{n,N} = { l in [1,M] : delta(l,n) < R }` for each
    /// `n in [1, N]`, and the nesting pairs.
    pub fn index_sets(&self, big_n: u64, m_cut: u64, r_cut: u64) -> Result<IndexSets> {
        if big_n == 0 || m_cut == 0 || r_cut == 0 {
            return Err(Error::config("index_sets requires N, M, R >= 1"));
        }
        let scan = (big_n as f64 + 1.0) * (m_cut as f64 + 1.0) * (self.ell * self.ell) as f64;
        if scan > PAIR_SCAN_CAP {
            return Err(Error::Intractable {
                what: "neighborhood scan",
                required: scan,
                cap: PAIR_SCAN_CAP,
            });
        }
        let table = self.family_table(big_n)?;

        let mut hat = Vec::new();
        let mut u = Vec::new();
        for n in 1..=big_n {
            let row = &table.values[n as usize];
            let mut collides = false;
            let mut spread = true;
            for i in 0..self.ell {
                for j in (i + 1)..self.ell {
                    let gap = abs_diff_u64(&row[i], &row[j]);
                    if gap == 0 {
                        collides = true;
                    }
                    if gap < m_cut {
                        spread = false;
                    }
                }
            }
            if collides {
                hat.push(n);
            }
            if spread {
                u.push(n);
            }
        }

        let m_top = m_cut.min(big_n);
        let mut b = Vec::with_capacity(big_n as usize);
        for n in 1..=big_n {
            let mut near = Vec::new();
            for l in 1..=m_top {
                if table.delta(l, n) < r_cut {
                    near.push(l);
                }
            }
            b.push(near);
        }

        let d_pairs = self.check_assumption_iii(big_n)?.pairs;

        Ok(IndexSets {
            hat,
            u,
            b,
            d_pairs,
        })
    }
}

/// All permutations of `0..ell` in lexicographic order (Heap's algorithm
/// would also do; `ell` is capped at 8 so the count is at most 40320).
fn permutations(ell: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..ell).collect();
    loop {
        out.push(cur.clone());
        // Next lexicographic permutation.
        let Some(i) = (0..ell.saturating_sub(1)).rev().find(|&i| cur[i] < cur[i + 1]) else {
            break;
        };
        let j = (i + 1..ell).rev().find(|&j| cur[j] > cur[i]).unwrap();
        cur.swap(i, j);
        cur[i + 1..].reverse();
    }
    out
}
