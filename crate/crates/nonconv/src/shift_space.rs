//! Symbolic dynamics over a finite alphabet: cylinder words, overlap
//! exponents, shifted-cylinder measures, and the decay constant of the
//! maximal word probability.
//!
//! The phase space is the one-sided sequence space with the left shift `T`.
//! Observables are cylinder sets `[v]` (all sequences starting with the
//! word `v`).  Return-time asymptotics for cylinders are governed by
//! overlap combinatorics:
//!
//! * `pi(v)` — the least `k >= 1` such that `v` overlaps itself shifted by
//!   `k`; equals `|v|` when `v` has no proper overlap.  Computed from the
//!   word's border array, with a brute-force scan kept as an oracle.
//! * `pi(v, w)` — the least `k >= 1` at which one word can follow the
//!   other with overlap; at most `min(|v|, |w|)` under full support.
//! * `kappa(v, w) = min(pi(v,w), pi(v), pi(w))` — the earliest possible
//!   coincidence among any of the four overlap types.
//!
//! Measures are full-support Bernoulli or positive-transition Markov, so
//! every finite word is admissible and the shift image of a cylinder is
//! the cylinder of its suffix: `P(T^a [v]) = P([v_a .. v_{n-1}])`, and the
//! whole space once `a >= |v|`.  The decay constant `upsilon` is fitted at
//! a finite word length: `P([w]) <= exp(-upsilon * |w|)` for all words up
//! to that length.

use serde::{Deserialize, Serialize};

use crate::processes::ProcessModel;
use crate::{Error, Result};

/// A finite nonempty word over the alphabet, the label of a cylinder set.
///
/// Serialized as a plain string: symbols 0-9 as digits, 10-35 as letters
/// `a`-`z`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Word {
    symbols: Vec<u8>,
}

impl Word {
    /// Builds a word from raw symbols (nonempty, values < 36 so the string
    /// form stays invertible).
    pub fn from_symbols(symbols: Vec<u8>) -> Result<Self> {
        if symbols.is_empty() {
            return Err(Error::config("words must be nonempty"));
        }
        if let Some(&s) = symbols.iter().find(|&&s| s >= 36) {
            return Err(Error::config(format!(
                "symbol {s} has no character form (must be < 36)"
            )));
        }
        Ok(Word { symbols })
    }

    /// Parses the digit/letter string form.
    pub fn parse(s: &str) -> Result<Self> {
        let mut symbols = Vec::with_capacity(s.len());
        for c in s.chars() {
            let v = match c {
                '0'..='9' => c as u8 - b'0',
                'a'..='z' => c as u8 - b'a' + 10,
                _ => {
                    return Err(Error::config(format!(
                        "character {c:?} is not a word symbol (use 0-9, a-z)"
                    )))
                }
            };
            symbols.push(v);
        }
        Word::from_symbols(symbols)
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        false // constructors reject empty words
    }

    pub fn symbols(&self) -> &[u8] {
        &self.symbols
    }

    /// Prefix of the first `n` symbols (`1 <= n <= len`).
    pub fn prefix(&self, n: usize) -> Result<Word> {
        if n == 0 || n > self.len() {
            return Err(Error::config(format!(
                "prefix length {n} out of range 1..={}",
                self.len()
            )));
        }
        Ok(Word {
            symbols: self.symbols[..n].to_vec(),
        })
    }

    /// All symbols belong to the model's alphabet.
    pub fn check_alphabet(&self, alphabet_size: usize) -> Result<()> {
        if let Some(&s) = self.symbols.iter().find(|&&s| s as usize >= alphabet_size) {
            return Err(Error::config(format!(
                "word symbol {s} outside alphabet of size {alphabet_size}"
            )));
        }
        Ok(())
    }
}

impl std::fmt::Display for Word {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for &s in &self.symbols {
            let c = if s < 10 {
                (b'0' + s) as char
            } else {
                (b'a' + s - 10) as char
            };
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

impl TryFrom<String> for Word {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        Word::parse(&s)
    }
}

impl From<Word> for String {
    fn from(w: Word) -> String {
        w.to_string()
    }
}

/// A shift-invariant full-support measure on the sequence space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "measure", rename_all = "snake_case", deny_unknown_fields)]
pub enum ShiftModel {
    /// Product (i.i.d.) measure.
    Bernoulli { probs: Vec<f64> },
    /// Stationary Markov measure with strictly positive transitions.
    Markov {
        transition: Vec<Vec<f64>>,
        stationary: Vec<f64>,
    },
}

impl ShiftModel {
    /// Structural validation plus strict positivity (full support): only
    /// measures charging every finite word are admitted, which is what
    /// keeps the overlap exponents purely combinatorial.
    pub fn validate(&self) -> Result<()> {
        self.as_process().validate()?;
        match self {
            ShiftModel::Bernoulli { probs } => {
                if probs.iter().any(|&p| p <= 0.0) {
                    return Err(Error::config(
                        "full support required: all Bernoulli probabilities must be > 0",
                    ));
                }
            }
            ShiftModel::Markov { transition, .. } => {
                if transition.iter().flatten().any(|&p| p <= 0.0) {
                    return Err(Error::config(
                        "full support required: all transition probabilities must be > 0",
                    ));
                }
            }
        }
        Ok(())
    }

    /// The same law viewed as a process model (for sampling and marginals).
    pub fn as_process(&self) -> ProcessModel {
        match self {
            ShiftModel::Bernoulli { probs } => ProcessModel::IidCategorical {
                probs: probs.clone(),
            },
            ShiftModel::Markov {
                transition,
                stationary,
            } => ProcessModel::StationaryMarkov {
                transition: transition.clone(),
                stationary: stationary.clone(),
            },
        }
    }

    pub fn alphabet_size(&self) -> usize {
        match self {
            ShiftModel::Bernoulli { probs } => probs.len(),
            ShiftModel::Markov { stationary, .. } => stationary.len(),
        }
    }

    /// Largest single-symbol mass (used by the decay fit).
    fn max_symbol_prob(&self) -> f64 {
        match self {
            ShiftModel::Bernoulli { probs } => probs.iter().cloned().fold(0.0, f64::max),
            ShiftModel::Markov { stationary, .. } => {
                stationary.iter().cloned().fold(0.0, f64::max)
            }
        }
    }
}

/// Border array (failure function): `border[i]` is the length of the
/// longest proper border of `w[..=i]`.
fn border_array(w: &[u8]) -> Vec<usize> {
    let n = w.len();
    let mut border = vec![0usize; n];
    let mut b = 0;
    for i in 1..n {
        while b > 0 && w[i] != w[b] {
            b = border[b - 1];
        }
        if w[i] == w[b] {
            b += 1;
        }
        border[i] = b;
    }
    border
}

/// Least `k >= 1` with `v_{i+k} = v_i` for all `0 <= i < n - k`
/// (self-overlap shift), `= n` when no proper overlap exists.  This is the
/// word's smallest period, `n` minus its longest border.
pub fn pi_self(v: &Word) -> usize {
    let n = v.len();
    n - border_array(v.symbols())[n - 1]
}

/// Brute-force oracle for [`pi_self`]: scan shifts directly.
pub fn pi_self_bruteforce(v: &Word) -> usize {
    let w = v.symbols();
    let n = w.len();
    for k in 1..n {
        if (0..n - k).all(|i| w[i + k] == w[i]) {
            return k;
        }
    }
    n
}

/// Least `k >= 1` such that one word, shifted by `k`, is compatible with
/// the other on the overlapping coordinates.  Under full support this is
/// at most `min(|v|, |w|)`: at that shift the overlap range is empty.
pub fn pi_cross(v: &Word, w: &Word) -> usize {
    let (a, b) = (v.symbols(), w.symbols());
    let (n, m) = (a.len(), b.len());
    for k in 1..=n.min(m) {
        // [v] ∩ T^{-k}[w]: w read from coordinate k, overlapping v on
        // coordinates k..min(n, k+m).
        let v_then_w = (0..m.min(n.saturating_sub(k))).all(|j| a[k + j] == b[j]);
        // [w] ∩ T^{-k}[v]: symmetric.
        let w_then_v = (0..n.min(m.saturating_sub(k))).all(|i| b[k + i] == a[i]);
        if v_then_w || w_then_v {
            return k;
        }
    }
    n.min(m)
}

/// The overlap exponents of a pair of words.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReturnData {
    pub pi_v: usize,
    pub pi_w: usize,
    pub pi_vw: usize,
    /// `min(pi_vw, pi_v, pi_w)`: earliest coincidence of any overlap type.
    pub kappa: usize,
}

/// Computes all overlap exponents for `(v, w)`.
pub fn return_data(v: &Word, w: &Word) -> ReturnData {
    let pi_v = pi_self(v);
    let pi_w = pi_self(w);
    let pi_vw = pi_cross(v, w);
    ReturnData {
        pi_v,
        pi_w,
        pi_vw,
        kappa: pi_vw.min(pi_v).min(pi_w),
    }
}

/// `P([v])`: product of symbol masses (Bernoulli) or
/// `pi(v_0) * prod transition(v_i, v_{i+1})` (Markov).
pub fn measure_cylinder(model: &ShiftModel, v: &Word) -> Result<f64> {
    v.check_alphabet(model.alphabet_size())?;
    let w = v.symbols();
    Ok(match model {
        ShiftModel::Bernoulli { probs } => w.iter().map(|&s| probs[s as usize]).product(),
        ShiftModel::Markov {
            transition,
            stationary,
        } => {
            let mut p = stationary[w[0] as usize];
            for pair in w.windows(2) {
                p *= transition[pair[0] as usize][pair[1] as usize];
            }
            p
        }
    })
}

/// `P(T^a [v])` for a shift `a >= 1`: the cylinder of the suffix
/// `v_a .. v_{n-1}` under full support, and the whole space (measure 1)
/// once the shift clears the word.
pub fn shift_image_measure(model: &ShiftModel, v: &Word, a: usize) -> Result<f64> {
    if a == 0 {
        return Err(Error::config("shift amount must be >= 1"));
    }
    if a >= v.len() {
        return Ok(1.0);
    }
    let suffix = Word {
        symbols: v.symbols()[a..].to_vec(),
    };
    measure_cylinder(model, &suffix)
}

/// `P(T^{n-r} [v])` in the overlap parametrization used by the tail sums:
/// `r` is the retained suffix length, valid for `pi(v) <= r <= n - 1`.
pub fn measure_shifted_tail(model: &ShiftModel, v: &Word, r: usize) -> Result<f64> {
    let n = v.len();
    let pi = pi_self(v);
    if r < pi || r >= n {
        return Err(Error::config(format!(
            "overlap length r = {r} out of range {pi} ..= {} for a word of length {n}",
            n.saturating_sub(1)
        )));
    }
    shift_image_measure(model, v, n - r)
}

/// `sum_{r = pi(v)}^{n-1} P(T^{n-r} [v])`: total mass of proper
/// self-overlaps, the quantity the single-word error bounds consume.
/// Zero for words with no proper overlap range (`pi(v) = n`).
pub fn overlap_tail_sum(model: &ShiftModel, v: &Word) -> Result<f64> {
    let n = v.len();
    let mut total = 0.0;
    for r in pi_self(v)..n {
        total += shift_image_measure(model, v, n - r)?;
    }
    Ok(total)
}

/// A fitted decay constant for maximal word probabilities.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct UpsilonFit {
    /// `P([w]) <= exp(-upsilon * |w|)` for every word with `|w| <= n_max`.
    pub upsilon: f64,
    /// The length up to which the guarantee was established.
    pub n_max: usize,
}

/// Fits `upsilon = min_{1 <= n <= n_max} -ln(max_{|w|=n} P([w])) / n`.
/// The per-length maximum is exact: a closed form for Bernoulli, a
/// max-product dynamic program over paths for Markov.
pub fn fit_upsilon(model: &ShiftModel, n_max: usize) -> Result<UpsilonFit> {
    model.validate()?;
    if n_max == 0 {
        return Err(Error::config("upsilon fit needs n_max >= 1"));
    }
    if model.max_symbol_prob() >= 1.0 {
        return Err(Error::config(
            "measure not psi-mixing-compatible: a symbol has probability 1, so upsilon = 0",
        ));
    }
    let mut upsilon = f64::INFINITY;
    match model {
        ShiftModel::Bernoulli { probs } => {
            let top = probs.iter().cloned().fold(0.0, f64::max);
            // max over length-n words is top^n, so the rate is constant.
            for n in 1..=n_max {
                upsilon = upsilon.min(-(top.powi(n as i32).ln()) / n as f64);
            }
        }
        ShiftModel::Markov {
            transition,
            stationary,
        } => {
            let mut dp = stationary.clone();
            for n in 1..=n_max {
                let best = dp.iter().cloned().fold(0.0, f64::max);
                if best >= 1.0 - 1e-15 {
                    return Err(Error::config(
                        "measure not psi-mixing-compatible: a word has probability 1, so upsilon = 0",
                    ));
                }
                upsilon = upsilon.min(-best.ln() / n as f64);
                if n < n_max {
                    let a = dp.len();
                    let mut next = vec![0.0f64; a];
                    for (to, slot) in next.iter_mut().enumerate() {
                        for from in 0..a {
                            *slot = slot.max(dp[from] * transition[from][to]);
                        }
                    }
                    dp = next;
                }
            }
        }
    }
    Ok(UpsilonFit { upsilon, n_max })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn uniform2() -> ShiftModel {
        ShiftModel::Bernoulli {
            probs: vec![0.5, 0.5],
        }
    }

    fn markov_sticky() -> ShiftModel {
        ShiftModel::Markov {
            transition: vec![vec![0.9, 0.1], vec![0.1, 0.9]],
            stationary: vec![0.5, 0.5],
        }
    }

    fn w(s: &str) -> Word {
        Word::parse(s).unwrap()
    }

    #[test]
    fn word_parsing_and_display() {
        assert_eq!(w("0a3").symbols(), &[0, 10, 3]);
        assert_eq!(w("0a3").to_string(), "0a3");
        assert!(Word::parse("").is_err());
        assert!(Word::parse("0!1").is_err());
        assert!(Word::from_symbols(vec![40]).is_err());

        let json = serde_json::to_string(&w("0110")).unwrap();
        assert_eq!(json, "\"0110\"");
        let back: Word = serde_json::from_str(&json).unwrap();
        assert_eq!(back, w("0110"));
    }

    #[test]
    fn self_overlap_examples() {
        assert_eq!(pi_self(&w("000")), 1); // constant word
        assert_eq!(pi_self(&w("010")), 2); // shift 1 fails, shift 2 matches
        assert_eq!(pi_self(&w("012")), 3); // no proper overlap
        assert_eq!(pi_self(&w("0")), 1);
        assert_eq!(pi_self(&w("0101")), 2);
        // Longest proper border of this word is "0110" (length 4), so the
        // smallest period is 16 - 4 = 12.
        assert_eq!(pi_self(&w("0110100110010110")), 12);
    }

    #[test]
    fn cross_overlap_examples() {
        assert_eq!(pi_cross(&w("01"), &w("10")), 1);
        assert_eq!(pi_cross(&w("00"), &w("11")), 2); // no compatible overlap
        for v in ["0", "010", "0011", "0101"] {
            let v = w(v);
            let ps = pi_self(&v);
            let expected = if ps < v.len() { ps } else { v.len() };
            assert_eq!(pi_cross(&v, &v), expected, "word {v}");
        }
        // Unequal lengths: bounded by the shorter word.
        assert!(pi_cross(&w("000111"), &w("10")) <= 2);
    }

    #[test]
    fn return_data_combines_exponents() {
        let rd = return_data(&w("0101"), &w("110"));
        assert_eq!(rd.pi_v, 2);
        assert_eq!(rd.pi_w, 3);
        // shift 1: v then w? v[1..] = "101" vs w = "110": 1,1 ok then 0 vs 0... check by scan below.
        assert_eq!(rd.pi_vw, pi_cross(&w("0101"), &w("110")));
        assert_eq!(rd.kappa, rd.pi_vw.min(rd.pi_v).min(rd.pi_w));
        assert!(rd.pi_vw <= 3);
    }

    #[test]
    fn cylinder_measures() {
        assert_relative_eq!(
            measure_cylinder(&uniform2(), &w("01")).unwrap(),
            0.25,
            max_relative = 1e-15
        );
        assert_relative_eq!(
            measure_cylinder(&markov_sticky(), &w("00")).unwrap(),
            0.45,
            max_relative = 1e-15
        );
        // Forbidden-transition convention on an unvalidated model: zero.
        let degenerate = ShiftModel::Markov {
            transition: vec![vec![1.0, 0.0], vec![0.5, 0.5]],
            stationary: vec![2.0 / 3.0, 1.0 / 3.0],
        };
        assert_eq!(measure_cylinder(&degenerate, &w("01")).unwrap(), 0.0);
        // ... and such a model is rejected by validation.
        assert!(degenerate.validate().is_err());

        assert!(measure_cylinder(&uniform2(), &w("02")).is_err());
    }

    #[test]
    fn shifted_tail_measures() {
        // v = 0101: pi = 2, so r ranges over {2, 3}.
        let v = w("0101");
        assert_relative_eq!(
            measure_shifted_tail(&uniform2(), &v, 2).unwrap(),
            0.25,
            max_relative = 1e-15
        );
        assert_relative_eq!(
            measure_shifted_tail(&uniform2(), &v, 3).unwrap(),
            0.125,
            max_relative = 1e-15
        );
        assert!(measure_shifted_tail(&uniform2(), &v, 1).is_err());
        assert!(measure_shifted_tail(&uniform2(), &v, 4).is_err());

        // Uniform alphabet: suffix of length s has mass |A|^{-s}.
        let u3 = ShiftModel::Bernoulli {
            probs: vec![1.0 / 3.0; 3],
        };
        let word = w("0120");
        // pi("0120") = 3, so r = 3 keeps a suffix of length 3.
        assert_relative_eq!(
            measure_shifted_tail(&u3, &word, 3).unwrap(),
            (1.0f64 / 3.0).powi(3),
            max_relative = 1e-12
        );

        assert_relative_eq!(
            overlap_tail_sum(&uniform2(), &v).unwrap(),
            0.25 + 0.125,
            max_relative = 1e-15
        );
        // No proper overlap range: empty sum.
        assert_eq!(overlap_tail_sum(&uniform2(), &w("0")).unwrap(), 0.0);
        assert_eq!(shift_image_measure(&uniform2(), &w("01"), 5).unwrap(), 1.0);
    }

    /// Independent check of the suffix-cylinder identity: the shift image
    /// T^a[v] is the union of rank-n cylinders [x] over all length-n words
    /// x agreeing with v shifted (x_i = v_{a+i} for i < n - a).
    fn direct_image_measure(model: &ShiftModel, v: &Word, a: usize) -> f64 {
        let n = v.len();
        let alpha = model.alphabet_size() as u8;
        let mut x = vec![0u8; n];
        let mut total = 0.0;
        loop {
            if (0..n - a).all(|i| x[i] == v.symbols()[a + i]) {
                total += measure_cylinder(model, &Word { symbols: x.clone() }).unwrap();
            }
            // odometer over length-n words
            let mut done = true;
            for d in x.iter_mut().rev() {
                if *d + 1 < alpha {
                    *d += 1;
                    done = false;
                    break;
                }
                *d = 0;
            }
            if done {
                break;
            }
        }
        total
    }

    #[test]
    fn suffix_identity_matches_direct_image() {
        let skew = ShiftModel::Bernoulli {
            probs: vec![0.3, 0.7],
        };
        for model in [uniform2(), skew, markov_sticky()] {
            for word in ["01", "010", "0110", "00010"] {
                let v = w(word);
                for a in 1..v.len() {
                    let fast = shift_image_measure(&model, &v, a).unwrap();
                    let slow = direct_image_measure(&model, &v, a);
                    assert_relative_eq!(fast, slow, max_relative = 1e-12);
                }
            }
        }
    }

    #[test]
    fn upsilon_fit_examples() {
        let fit = fit_upsilon(&uniform2(), 6).unwrap();
        assert_relative_eq!(fit.upsilon, std::f64::consts::LN_2, max_relative = 1e-12);
        assert_eq!(fit.n_max, 6);

        let skew = ShiftModel::Bernoulli {
            probs: vec![0.9, 0.1],
        };
        assert_relative_eq!(
            fit_upsilon(&skew, 4).unwrap().upsilon,
            -(0.9f64.ln()),
            max_relative = 1e-12
        );

        // Sticky chain: the best length-n word is constant with mass
        // 0.5 * 0.9^(n-1); the rate still improves with n, so the minimum
        // sits at n_max.
        let fit = fit_upsilon(&markov_sticky(), 8).unwrap();
        assert_relative_eq!(
            fit.upsilon,
            -((0.5 * 0.9f64.powi(7)).ln()) / 8.0,
            max_relative = 1e-12
        );

        // Degenerate symbol: no positive decay constant exists.
        let stuck = ShiftModel::Bernoulli {
            probs: vec![1.0],
        };
        let err = fit_upsilon(&stuck, 3).unwrap_err();
        assert!(err.to_string().contains("psi-mixing-compatible"));
    }

    #[test]
    fn upsilon_guarantee_holds_on_all_short_words() {
        let model = markov_sticky();
        let fit = fit_upsilon(&model, 6).unwrap();
        for n in 1..=6usize {
            let mut x = vec![0u8; n];
            loop {
                let p = measure_cylinder(&model, &Word { symbols: x.clone() }).unwrap();
                assert!(
                    p <= (-(fit.upsilon) * n as f64).exp() + 1e-15,
                    "word {x:?} violates the fitted decay"
                );
                let mut done = true;
                for d in x.iter_mut().rev() {
                    if *d + 1 < 2 {
                        *d += 1;
                        done = false;
                        break;
                    }
                    *d = 0;
                }
                if done {
                    break;
                }
            }
        }
    }

    #[test]
    fn prefix_periods_are_nondecreasing_and_grow() {
        let model = uniform2();
        let process = model.as_process();
        for seed in 0..20u64 {
            let eta = process.sample_path(64, 9000 + seed);
            let mut prev = 0usize;
            for n in 1..=64usize {
                let p = pi_self(&Word::from_symbols(eta[..n].to_vec()).unwrap());
                assert!(p >= prev, "period dropped at prefix {n}");
                prev = p;
            }
            assert!(prev >= 8, "seed {seed}: pi of the length-64 prefix = {prev}");
        }
    }

    proptest! {
        /// Border-array computation agrees with the brute-force scan.
        #[test]
        fn border_array_matches_bruteforce(
            symbols in proptest::collection::vec(0u8..4, 1..64)
        ) {
            let word = Word::from_symbols(symbols).unwrap();
            prop_assert_eq!(pi_self(&word), pi_self_bruteforce(&word));
        }

        /// pi_cross is symmetric and bounded by the shorter length.
        #[test]
        fn cross_overlap_symmetric_and_bounded(
            a in proptest::collection::vec(0u8..3, 1..20),
            b in proptest::collection::vec(0u8..3, 1..20),
        ) {
            let v = Word::from_symbols(a).unwrap();
            let u = Word::from_symbols(b).unwrap();
            let k = pi_cross(&v, &u);
            prop_assert_eq!(k, pi_cross(&u, &v));
            prop_assert!(k >= 1 && k <= v.len().min(u.len()));
        }

        /// Bernoulli cylinder measure is multiplicative over concatenation.
        #[test]
        fn bernoulli_measure_is_multiplicative(
            a in proptest::collection::vec(0u8..2, 1..12),
            b in proptest::collection::vec(0u8..2, 1..12),
            p0 in 0.1f64..0.9,
        ) {
            let model = ShiftModel::Bernoulli { probs: vec![p0, 1.0 - p0] };
            let mut ab = a.clone();
            ab.extend_from_slice(&b);
            let pu = measure_cylinder(&model, &Word::from_symbols(a).unwrap()).unwrap();
            let pv = measure_cylinder(&model, &Word::from_symbols(b).unwrap()).unwrap();
            let puv = measure_cylinder(&model, &Word::from_symbols(ab).unwrap()).unwrap();
            prop_assert!((puv - pu * pv).abs() <= 1e-12 * pu.max(1e-300));
        }

        /// Shift invariance: summing over one more leading symbol leaves
        /// the measure unchanged.
        #[test]
        fn one_step_shift_invariance(
            word in proptest::collection::vec(0u8..2, 1..12),
            sticky in 0.55f64..0.95,
        ) {
            let models = [
                ShiftModel::Bernoulli { probs: vec![0.3, 0.7] },
                ShiftModel::Markov {
                    transition: vec![vec![sticky, 1.0 - sticky], vec![1.0 - sticky, sticky]],
                    stationary: vec![0.5, 0.5],
                },
            ];
            for model in &models {
                let base = measure_cylinder(model, &Word::from_symbols(word.clone()).unwrap()).unwrap();
                let mut extended = 0.0;
                for lead in 0u8..2 {
                    let mut sym = vec![lead];
                    sym.extend_from_slice(&word);
                    extended += measure_cylinder(model, &Word::from_symbols(sym).unwrap()).unwrap();
                }
                prop_assert!((extended - base).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn random_word_periods_match_oracle_in_bulk() {
        // Dense deterministic sweep beyond proptest's case count.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31337);
        for _ in 0..2000 {
            let len = rng.gen_range(1..=64);
            let alpha = rng.gen_range(2..=4) as u8;
            let symbols: Vec<u8> = (0..len).map(|_| rng.gen_range(0..alpha)).collect();
            let word = Word::from_symbols(symbols).unwrap();
            assert_eq!(pi_self(&word), pi_self_bruteforce(&word));
        }
    }
}
