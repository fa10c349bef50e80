//! Finite-alphabet process models: i.i.d., stationary Markov, and a
//! doubled-letter counterexample.
//!
//! All variants are identically distributed sequences over a finite
//! alphabet.  Their interdependence across a gap of `n` positions is
//! measured by the psi coefficient
//!
//! ```text
//!     psi(n) = sup_m  sup  | P(G ∩ D) / (P(G) P(D)) - 1 |
//! ```
//!
//! with `G` ranging over events of the first `m + 1` coordinates and `D`
//! over events of the coordinates from `m + n` on.  For i.i.d. models
//! `psi = 0`; for stationary Markov chains the supremum collapses to state
//! pairs ([`ProcessModel::psi_exact`]); and for the doubled model
//! `xi_{2n} = xi_{2n+1} = eta_n` the coefficient stays at least 1 for every
//! gap, so no psi profile exists even though adjacent blocks decouple in
//! the weaker (phi) sense — the model exists precisely to exercise that
//! failure mode.
//!
//! Sampling is deterministic: each trajectory is a pure function of
//! `(model, length, seed)`, with seeds derived from a master seed by a
//! counter scheme ([`derive_seed`]) so that parallel Monte Carlo is
//! reproducible regardless of scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, ENUMERATION_CAP};

/// Tolerance for probability vectors summing to one.
pub const PROB_SUM_TOL: f64 = 1e-12;
/// Tolerance for the stationarity identity `pi P = pi`.
pub const STATIONARITY_TOL: f64 = 1e-10;

/// A finite-alphabet identically distributed sequence model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProcessModel {
    /// Independent draws from a categorical distribution.
    IidCategorical { probs: Vec<f64> },
    /// Stationary Markov chain started from its stationary law.
    StationaryMarkov {
        transition: Vec<Vec<f64>>,
        stationary: Vec<f64>,
    },
    /// Doubled letters: `xi_{2n} = xi_{2n+1} = eta_n` with `eta` i.i.d.
    /// from `base`.  Identically distributed but not psi-mixing.
    DoubledIid { base: Vec<f64> },
}

pub(crate) fn check_prob_vector(p: &[f64], what: &str) -> Result<()> {
    if p.is_empty() {
        return Err(Error::config(format!("{what}: empty probability vector")));
    }
    if p.len() > 256 {
        return Err(Error::config(format!(
            "{what}: alphabet of {} symbols exceeds the cap of 256",
            p.len()
        )));
    }
    if p.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
        return Err(Error::config(format!("{what}: entries must lie in [0, 1]")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > PROB_SUM_TOL {
        return Err(Error::config(format!(
            "{what}: entries sum to {sum:.15}, not 1 within {PROB_SUM_TOL:.0e}"
        )));
    }
    Ok(())
}

/// True iff some power of the support pattern of `t` is entrywise positive
/// (irreducible and aperiodic).  Uses the Wielandt exponent
/// `(a - 1)^2 + 1` as the single power to test.
fn is_primitive(t: &[Vec<f64>]) -> bool {
    let a = t.len();
    let adj: Vec<Vec<bool>> = t
        .iter()
        .map(|row| row.iter().map(|&x| x > 0.0).collect())
        .collect();
    let mul = |x: &Vec<Vec<bool>>, y: &Vec<Vec<bool>>| -> Vec<Vec<bool>> {
        let mut out = vec![vec![false; a]; a];
        for i in 0..a {
            for k in 0..a {
                if x[i][k] {
                    for j in 0..a {
                        if y[k][j] {
                            out[i][j] = true;
                        }
                    }
                }
            }
        }
        out
    };
    let mut exp = (a - 1) * (a - 1) + 1;
    let mut base = adj;
    let mut acc: Option<Vec<Vec<bool>>> = None;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = Some(match acc {
                None => base.clone(),
                Some(prev) => mul(&prev, &base),
            });
        }
        exp >>= 1;
        if exp > 0 {
            base = mul(&base, &base);
        }
    }
    acc.unwrap().iter().all(|row| row.iter().all(|&b| b))
}

fn mat_mul(x: &[Vec<f64>], y: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let a = x.len();
    let mut out = vec![vec![0.0; a]; a];
    for i in 0..a {
        for k in 0..a {
            let xv = x[i][k];
            if xv != 0.0 {
                for j in 0..a {
                    out[i][j] += xv * y[k][j];
                }
            }
        }
    }
    out
}

/// `t^n` by repeated squaring (`n >= 1`).
fn mat_pow(t: &[Vec<f64>], mut n: u64) -> Vec<Vec<f64>> {
    debug_assert!(n >= 1);
    let mut base = t.to_vec();
    let mut acc: Option<Vec<Vec<f64>>> = None;
    while n > 0 {
        if n & 1 == 1 {
            acc = Some(match acc {
                None => base.clone(),
                Some(prev) => mat_mul(&prev, &base),
            });
        }
        n >>= 1;
        if n > 0 {
            base = mat_mul(&base, &base);
        }
    }
    acc.unwrap()
}

impl ProcessModel {
    /// Structural validation of probability data, stationarity and
    /// primitivity.
    pub fn validate(&self) -> Result<()> {
        match self {
            ProcessModel::IidCategorical { probs } => check_prob_vector(probs, "iid probs"),
            ProcessModel::DoubledIid { base } => check_prob_vector(base, "doubled base"),
            ProcessModel::StationaryMarkov {
                transition,
                stationary,
            } => {
                check_prob_vector(stationary, "stationary vector")?;
                let a = stationary.len();
                if transition.len() != a {
                    return Err(Error::config(format!(
                        "transition matrix has {} rows for an alphabet of {a}",
                        transition.len()
                    )));
                }
                for (i, row) in transition.iter().enumerate() {
                    if row.len() != a {
                        return Err(Error::config(format!(
                            "transition row {i} has {} entries for an alphabet of {a}",
                            row.len()
                        )));
                    }
                    check_prob_vector(row, &format!("transition row {i}"))?;
                }
                if stationary.iter().any(|&x| x <= 0.0) {
                    return Err(Error::config(
                        "stationary vector must be entrywise positive",
                    ));
                }
                for b in 0..a {
                    let mass: f64 = (0..a).map(|x| stationary[x] * transition[x][b]).sum();
                    if (mass - stationary[b]).abs() > STATIONARITY_TOL {
                        return Err(Error::config(format!(
                            "supplied vector is not stationary: (pi P)[{b}] = {mass:.15} vs pi[{b}] = {:.15}",
                            stationary[b]
                        )));
                    }
                }
                if !is_primitive(transition) {
                    return Err(Error::config(
                        "chain is not primitive (needs some power of the transition matrix entrywise positive)",
                    ));
                }
                Ok(())
            }
        }
    }

    /// Number of symbols.
    pub fn alphabet_size(&self) -> usize {
        match self {
            ProcessModel::IidCategorical { probs } => probs.len(),
            ProcessModel::StationaryMarkov { stationary, .. } => stationary.len(),
            ProcessModel::DoubledIid { base } => base.len(),
        }
    }

    /// Marginal law of one coordinate.
    pub fn marginal(&self) -> &[f64] {
        match self {
            ProcessModel::IidCategorical { probs } => probs,
            ProcessModel::StationaryMarkov { stationary, .. } => stationary,
            ProcessModel::DoubledIid { base } => base,
        }
    }

    /// Marginal mass of a symbol set (duplicates and out-of-range symbols
    /// rejected).
    pub fn phi_of(&self, set: &[u8]) -> Result<f64> {
        let a = self.alphabet_size();
        let mut seen = vec![false; a];
        let mut mass = 0.0;
        for &s in set {
            let s = s as usize;
            if s >= a {
                return Err(Error::config(format!(
                    "symbol {s} outside alphabet of size {a}"
                )));
            }
            if seen[s] {
                return Err(Error::config(format!("symbol {s} listed twice in set")));
            }
            seen[s] = true;
            mass += self.marginal()[s];
        }
        Ok(mass)
    }

    /// Samples `xi_0, .., xi_{length-1}` into `out` (resized as needed).
    /// Pure function of `(model, length, seed)`.
    pub fn sample_path_into(&self, length: usize, seed: u64, out: &mut Vec<u8>) {
        out.clear();
        out.reserve(length);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match self {
            ProcessModel::IidCategorical { probs } => {
                let cum = cumulative(probs);
                for _ in 0..length {
                    out.push(draw(&cum, rng.gen::<f64>()));
                }
            }
            ProcessModel::StationaryMarkov {
                transition,
                stationary,
            } => {
                let cum0 = cumulative(stationary);
                let cums: Vec<Vec<f64>> = transition.iter().map(|r| cumulative(r)).collect();
                let mut state = draw(&cum0, rng.gen::<f64>());
                out.push(state);
                for _ in 1..length {
                    state = draw(&cums[state as usize], rng.gen::<f64>());
                    out.push(state);
                }
            }
            ProcessModel::DoubledIid { base } => {
                let cum = cumulative(base);
                let mut i = 0;
                while i < length {
                    let s = draw(&cum, rng.gen::<f64>());
                    out.push(s);
                    if i + 1 < length {
                        out.push(s);
                    }
                    i += 2;
                }
            }
        }
    }

    /// Convenience wrapper allocating a fresh trajectory.
    pub fn sample_path(&self, length: usize, seed: u64) -> Vec<u8> {
        let mut out = Vec::new();
        self.sample_path_into(length, seed, &mut out);
        out
    }

    /// The psi coefficient across a gap of `n`, by the closed form for
    /// each variant: 0 for i.i.d.; for a stationary Markov chain the
    /// supremum over event pairs collapses to state pairs,
    /// `max_{a,b} |P^n(a,b)/pi(b) - 1|` (the collapse is regression-tested
    /// against [`Self::psi_bruteforce`], not assumed).  The doubled model
    /// has no psi profile and errors.
    pub fn psi_exact(&self, n: u64) -> Result<f64> {
        if n == 0 {
            return Err(Error::config("psi is defined for gaps n >= 1"));
        }
        match self {
            ProcessModel::IidCategorical { .. } => Ok(0.0),
            ProcessModel::StationaryMarkov {
                transition,
                stationary,
            } => {
                Ok(state_pair_psi(transition, stationary, n))
            }
            ProcessModel::DoubledIid { .. } => Err(doubled_psi_error()),
        }
    }

    /// Exact psi between the coordinate blocks `0..=m` and
    /// `m+n..=m+n+future_horizon`, by maximizing `|P(G ∩ D)/(P(G)P(D)) - 1|`
    /// over all positive-probability cylinder-word pairs.  The supremum
    /// over events is attained at such pairs because the ratio over any
    /// event pair is a probability-weighted average of the ratios over the
    /// atoms it contains.
    ///
    /// Serves as the independent oracle for [`Self::psi_exact`]; also
    /// defined for the doubled model (where it witnesses values `>= 1`).
    pub fn psi_bruteforce(&self, n: u64, m: u64, future_horizon: u64) -> Result<f64> {
        if n == 0 {
            return Err(Error::config("psi is defined for gaps n >= 1"));
        }
        let a = self.alphabet_size();
        let work = (a as f64).powf((m + 1 + future_horizon + 1) as f64);
        if work > ENUMERATION_CAP {
            return Err(Error::Intractable {
                what: "atom-pair psi enumeration",
                required: work,
                cap: ENUMERATION_CAP,
            });
        }

        let past_len = (m + 1) as usize;
        let fut_len = (future_horizon + 1) as usize;
        let fut_start = (m + n) as usize;

        let mut worst: f64 = 0.0;
        let mut past = vec![0u8; past_len];
        loop {
            let p_past = self.block_probability(0, &past);
            if p_past > 0.0 {
                let mut fut = vec![0u8; fut_len];
                loop {
                    let p_fut = self.block_probability(fut_start, &fut);
                    if p_fut > 0.0 {
                        let joint = self.joint_probability(&past, fut_start, &fut);
                        worst = worst.max((joint / (p_past * p_fut) - 1.0).abs());
                    }
                    if !next_word(&mut fut, a) {
                        break;
                    }
                }
            }
            if !next_word(&mut past, a) {
                break;
            }
        }
        Ok(worst)
    }

    /// Probability that the coordinates `start..start+word.len()` spell
    /// `word`.
    fn block_probability(&self, start: usize, word: &[u8]) -> f64 {
        match self {
            ProcessModel::IidCategorical { probs } => {
                word.iter().map(|&s| probs[s as usize]).product()
            }
            ProcessModel::StationaryMarkov {
                transition,
                stationary,
            } => {
                let mut p = stationary[word[0] as usize];
                for w in word.windows(2) {
                    p *= transition[w[0] as usize][w[1] as usize];
                }
                p
            }
            ProcessModel::DoubledIid { base } => {
                match doubled_constraints(&[(start, word)]) {
                    None => 0.0,
                    Some(cells) => cells.iter().map(|&(_, s)| base[s as usize]).product(),
                }
            }
        }
    }

    /// Probability that coordinates `0..past.len()` spell `past` and
    /// coordinates `fut_start..` spell `fut` simultaneously.
    fn joint_probability(&self, past: &[u8], fut_start: usize, fut: &[u8]) -> f64 {
        match self {
            ProcessModel::IidCategorical { .. } => {
                // Product measure: the joint factorizes by definition.
                self.block_probability(0, past) * self.block_probability(fut_start, fut)
            }
            ProcessModel::StationaryMarkov { transition, .. } => {
                let gap = fut_start - past.len() + 1;
                let bridge = mat_pow(transition, gap as u64);
                self.block_probability(0, past)
                    * bridge[past[past.len() - 1] as usize][fut[0] as usize]
                    * self.block_probability(fut_start, fut)
                    / self.marginal()[fut[0] as usize]
            }
            ProcessModel::DoubledIid { base } => {
                match doubled_constraints(&[(0, past), (fut_start, fut)]) {
                    None => 0.0,
                    Some(cells) => cells.iter().map(|&(_, s)| base[s as usize]).product(),
                }
            }
        }
    }
}

/// Collapses coordinate constraints to constraints on the underlying
/// letters `eta_j` (coordinate `i` reads `eta_{i/2}`).  Returns `None` on
/// conflict (the event is null), otherwise the distinct constrained cells.
fn doubled_constraints(blocks: &[(usize, &[u8])]) -> Option<Vec<(usize, u8)>> {
    let mut cells: Vec<(usize, u8)> = Vec::new();
    for &(start, word) in blocks {
        for (off, &s) in word.iter().enumerate() {
            let cell = (start + off) / 2;
            match cells.iter().find(|&&(c, _)| c == cell) {
                Some(&(_, prev)) if prev != s => return None,
                Some(_) => {}
                None => cells.push((cell, s)),
            }
        }
    }
    Some(cells)
}

/// Odometer increment over words base `a`; false when wrapped to zero.
fn next_word(word: &mut [u8], a: usize) -> bool {
    for d in word.iter_mut().rev() {
        if (*d as usize) + 1 < a {
            *d += 1;
            return true;
        }
        *d = 0;
    }
    false
}

fn cumulative(p: &[f64]) -> Vec<f64> {
    let mut cum = Vec::with_capacity(p.len());
    let mut acc = 0.0;
    for &x in p {
        acc += x;
        cum.push(acc);
    }
    cum
}

#[inline]
fn draw(cum: &[f64], u: f64) -> u8 {
    for (i, &c) in cum.iter().enumerate() {
        if u < c {
            return i as u8;
        }
    }
    (cum.len() - 1) as u8
}

/// `max_{a,b} |P^n(a,b)/pi(b) - 1|` for an `n`-step transition matrix.
fn state_pair_psi(transition: &[Vec<f64>], stationary: &[f64], n: u64) -> f64 {
    let pn = mat_pow(transition, n);
    let mut worst: f64 = 0.0;
    for row in &pn {
        for (b, &p) in row.iter().enumerate() {
            worst = worst.max((p / stationary[b] - 1.0).abs());
        }
    }
    worst
}

fn doubled_psi_error() -> Error {
    Error::PsiUnavailable {
        reason: "the doubled-letter model repeats each symbol, so adjacent \
                 coordinates stay fully dependent at every gap (only the \
                 weaker phi coefficient decays)"
            .into(),
    }
}

/// Derives the per-trial seed from a master seed and a trial counter
/// (splitmix64 of an odd-multiplier combination), so trials are
/// independent streams and reproducible under any work scheduling.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A usable psi profile `n -> psi(n)` for the explicit bounds.
///
/// `Zero` is exact for i.i.d. models; `ExactMarkov` evaluates the
/// state-pair formula of the given chain on demand; `Table` holds
/// externally computed values (e.g. brute-force estimates), extended
/// beyond the table by its last entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum MixingProfile {
    Zero,
    ExactMarkov {
        transition: Vec<Vec<f64>>,
        stationary: Vec<f64>,
    },
    Table { values: Vec<f64> },
}

impl MixingProfile {
    /// Builds the profile implied by a process model (doubled model has
    /// none).
    pub fn from_model(model: &ProcessModel) -> Result<Self> {
        model.validate()?;
        match model {
            ProcessModel::IidCategorical { .. } => Ok(MixingProfile::Zero),
            ProcessModel::StationaryMarkov {
                transition,
                stationary,
            } => Ok(MixingProfile::ExactMarkov {
                transition: transition.clone(),
                stationary: stationary.clone(),
            }),
            ProcessModel::DoubledIid { .. } => Err(doubled_psi_error()),
        }
    }

    /// Validates table monotonicity / nonnegativity and, for chains, the
    /// underlying model.
    pub fn validate(&self) -> Result<()> {
        match self {
            MixingProfile::Zero => Ok(()),
            MixingProfile::ExactMarkov {
                transition,
                stationary,
            } => ProcessModel::StationaryMarkov {
                transition: transition.clone(),
                stationary: stationary.clone(),
            }
            .validate(),
            MixingProfile::Table { values } => {
                if values.is_empty() {
                    return Err(Error::config("psi table must be nonempty"));
                }
                if values.iter().any(|&v| v < 0.0 || !v.is_finite()) {
                    return Err(Error::config("psi values must be finite and nonnegative"));
                }
                for w in values.windows(2) {
                    if w[1] > w[0] + 1e-12 {
                        return Err(Error::config(
                            "psi table must be nonincreasing in the gap",
                        ));
                    }
                }
                Ok(())
            }
        }
    }

    /// `psi(n)`; gap 0 is treated as gap 1 (the profile is only ever read
    /// at gaps >= 1).
    pub fn psi(&self, n: u64) -> f64 {
        let n = n.max(1);
        match self {
            MixingProfile::Zero => 0.0,
            MixingProfile::ExactMarkov {
                transition,
                stationary,
            } => state_pair_psi(transition, stationary, n),
            MixingProfile::Table { values } => {
                let i = (n as usize).min(values.len()) - 1;
                values[i]
            }
        }
    }
}
