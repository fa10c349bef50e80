//! Laws of the return statistics: simulated, enumerated, and compared.
//!
//! The two statistics are
//!
//! ```text
//!     S_N     = sum_{n=1}^{N} X_n,          X_n = prod_i 1_target( xi_{q_i(n)} )
//!     Sigma_N = sum_{n=1}^{tau_N} X_n,      tau = first n with a stop-target hit
//! ```
//!
//! where the target is either a symbol set (process sources) or a word read
//! as a window (shift sources), and `tau_N = min(tau, N)`.  Trials whose stop
//! time exceeds the horizon are *censored*: their count is reported
//! separately and the conditional law is what gets compared against the
//! geometric reference.
//!
//! Monte Carlo is deterministic: trial `t` uses a generator seeded by a
//! counter derivation from `(seed, t)`, and the merge step is an integer
//! histogram sum, so parallel and sequential runs produce identical results.
//! [`exact_law_small`] enumerates every trajectory with its probability and
//! is the ground-truth oracle for small systems.

use serde::{Deserialize, Serialize};

use crate::par;
use crate::processes::{derive_seed, ProcessModel};
use crate::q_families::{IndexTable, QFamily};
use crate::shift_space::{measure_cylinder, ShiftModel, Word};
use crate::{Error, Result, ENUMERATION_CAP};

/// Tail mass below which reference laws are truncated; the cut mass is added
/// back to distances as an upper-bound correction.
pub const TAIL_TOL: f64 = 1e-12;

/// Which limit law the experiment targets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Count all hits up to the horizon; compare against Poisson.
    Poisson,
    /// Count hits up to the first stop-hit; compare against geometric.
    Geometric,
}

/// The sampled system: a finite-alphabet process observed through symbol
/// sets, or a shift system observed through word windows.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Process(ProcessModel),
    Shift(ShiftModel),
}

/// A full experiment description, loadable from JSON.
///
/// Process sources use `gamma` (and `delta` in geometric mode) as symbol
/// sets; shift sources use `v` (and `w`) as words.  Unknown keys are
/// rejected at parse time; cross-field consistency is checked by
/// [`ExperimentSpec::validate`].
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub mode: Mode,
    pub source: Source,
    /// The index-map family defining which coordinates each summand reads.
    pub qf: QFamily,
    /// Horizon: both the number of summands and the stop-time cap.
    #[serde(rename = "N")]
    pub n: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<Vec<u8>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<Vec<u8>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w: Option<String>,
    pub trials: u64,
    pub seed: u64,
}

impl ExperimentSpec {
    /// Cross-field validation: the right target fields for the source kind
    /// and mode, symbols within the alphabet, and disjoint hit/stop targets
    /// (for sets: no common symbol; for words: neither a prefix of the
    /// other, which is exactly disjointness of the two cylinders).
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::config("N must be >= 1"));
        }
        if self.trials == 0 {
            return Err(Error::config("trials must be >= 1"));
        }
        self.qf.validate()?;
        match &self.source {
            Source::Process(model) => {
                model.validate()?;
                if self.v.is_some() || self.w.is_some() {
                    return Err(Error::config(
                        "process sources take symbol sets (gamma/delta), not words (v/w)",
                    ));
                }
                let gamma = self
                    .gamma
                    .as_deref()
                    .ok_or_else(|| Error::config("process sources require gamma"))?;
                model.phi_of(gamma)?;
                match self.mode {
                    Mode::Poisson => {
                        if self.delta.is_some() {
                            return Err(Error::config(
                                "delta is only meaningful in geometric mode",
                            ));
                        }
                    }
                    Mode::Geometric => {
                        let delta = self.delta.as_deref().ok_or_else(|| {
                            Error::config("geometric mode requires a stop set delta")
                        })?;
                        model.phi_of(delta)?;
                        if gamma.iter().any(|s| delta.contains(s)) {
                            return Err(Error::config(
                                "gamma and delta must be disjoint symbol sets",
                            ));
                        }
                    }
                }
            }
            Source::Shift(model) => {
                model.validate()?;
                if self.gamma.is_some() || self.delta.is_some() {
                    return Err(Error::config(
                        "shift sources take words (v/w), not symbol sets (gamma/delta)",
                    ));
                }
                let v = self.word_v()?;
                match self.mode {
                    Mode::Poisson => {
                        if self.w.is_some() {
                            return Err(Error::config("w is only meaningful in geometric mode"));
                        }
                    }
                    Mode::Geometric => {
                        let w = self.word_w()?;
                        if cylinders_overlap(&v, &w) {
                            return Err(Error::config(
                                "cylinders of v and w must be disjoint: neither word may \
                                 be a prefix of the other",
                            ));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn word_v(&self) -> Result<Word> {
        let s = self
            .v
            .as_deref()
            .ok_or_else(|| Error::config("shift sources require the word v"))?;
        let word = Word::parse(s)?;
        word.check_alphabet(self.source_alphabet())?;
        Ok(word)
    }

    fn word_w(&self) -> Result<Word> {
        let s = self
            .w
            .as_deref()
            .ok_or_else(|| Error::config("geometric mode requires the stop word w"))?;
        let word = Word::parse(s)?;
        word.check_alphabet(self.source_alphabet())?;
        Ok(word)
    }

    fn source_alphabet(&self) -> usize {
        match &self.source {
            Source::Process(m) => m.alphabet_size(),
            Source::Shift(m) => m.alphabet_size(),
        }
    }

    /// Marginal mass of the hit target: `Phi(gamma)` or `P([v])`.
    pub fn hit_mass(&self) -> Result<f64> {
        match &self.source {
            Source::Process(m) => m.phi_of(
                self.gamma
                    .as_deref()
                    .ok_or_else(|| Error::config("process sources require gamma"))?,
            ),
            Source::Shift(m) => measure_cylinder(m, &self.word_v()?),
        }
    }

    /// Marginal mass of the stop target (geometric mode only).
    pub fn stop_mass(&self) -> Result<f64> {
        match &self.source {
            Source::Process(m) => m.phi_of(self.delta.as_deref().ok_or_else(|| {
                Error::config("stop mass is only defined in geometric mode (delta)")
            })?),
            Source::Shift(m) => measure_cylinder(m, &self.word_w()?),
        }
    }

    /// The limit law the theorems compare against: `Pois(N * mass^ell)` in
    /// Poisson mode, `Geo(stop^ell / (hit^ell + stop^ell))` in geometric
    /// mode.
    pub fn reference_law(&self) -> Result<ReferenceLaw> {
        self.validate()?;
        let ell = self.qf.ell as i32;
        match self.mode {
            Mode::Poisson => {
                let lambda = self.n as f64 * self.hit_mass()?.powi(ell);
                Ok(ReferenceLaw::Poisson { lambda })
            }
            Mode::Geometric => {
                let hit = self.hit_mass()?.powi(ell);
                let stop = self.stop_mass()?.powi(ell);
                if hit + stop <= 0.0 {
                    return Err(Error::config(
                        "degenerate geometric reference: hit and stop masses are both zero",
                    ));
                }
                Ok(ReferenceLaw::Geometric {
                    rho: stop / (hit + stop),
                })
            }
        }
    }

    /// The finite-horizon competing-renewal parameter
    /// `stop^ell / (stop^ell + hit^ell (1 - stop^ell))`, the exact success
    /// probability when hit and stop trials alternate independently.
    pub fn geometric_star_law(&self) -> Result<ReferenceLaw> {
        self.validate()?;
        if self.mode != Mode::Geometric {
            return Err(Error::config(
                "the adjusted geometric parameter is only defined in geometric mode",
            ));
        }
        let ell = self.qf.ell as i32;
        let hit = self.hit_mass()?.powi(ell);
        let stop = self.stop_mass()?.powi(ell);
        let denom = stop + hit * (1.0 - stop);
        if denom <= 0.0 {
            return Err(Error::config(
                "degenerate adjusted geometric reference: zero hit and stop masses",
            ));
        }
        Ok(ReferenceLaw::GeometricStar {
            rho_star: stop / denom,
        })
    }
}

/// True iff the cylinder sets of the two words intersect, i.e. one word is
/// a prefix of the other (equal words included).
fn cylinders_overlap(a: &Word, b: &Word) -> bool {
    let k = a.len().min(b.len());
    a.symbols()[..k] == b.symbols()[..k]
}

/// A per-coordinate hit test: either "symbol lies in the set" or "the word
/// starts at this offset".
#[derive(Clone, Debug)]
pub enum TargetTest {
    /// Membership table over the alphabet.
    SymbolSet { member: Vec<bool> },
    /// Window comparison against a fixed word.
    WordMatch { word: Vec<u8> },
}

impl TargetTest {
    /// Builds a membership test from a symbol list (duplicates and
    /// out-of-range symbols rejected; the empty set is allowed and never
    /// hits).
    pub fn symbol_set(set: &[u8], alphabet_size: usize) -> Result<Self> {
        let mut member = vec![false; alphabet_size];
        for &s in set {
            let s = s as usize;
            if s >= alphabet_size {
                return Err(Error::config(format!(
                    "symbol {s} outside alphabet of size {alphabet_size}"
                )));
            }
            if member[s] {
                return Err(Error::config(format!("symbol {s} listed twice in set")));
            }
            member[s] = true;
        }
        Ok(TargetTest::SymbolSet { member })
    }

    /// Builds a window test for a word.
    pub fn word(word: &Word) -> Self {
        TargetTest::WordMatch {
            word: word.symbols().to_vec(),
        }
    }

    /// Number of consecutive symbols one test reads.
    pub fn window(&self) -> usize {
        match self {
            TargetTest::SymbolSet { .. } => 1,
            TargetTest::WordMatch { word } => word.len(),
        }
    }

    #[inline]
    fn hits(&self, path: &[u8], at: u64) -> bool {
        let at = at as usize;
        match self {
            TargetTest::SymbolSet { member } => member[path[at] as usize],
            TargetTest::WordMatch { word } => &path[at..at + word.len()] == word.as_slice(),
        }
    }
}

#[inline]
fn row_hits(path: &[u8], row: &[u64], test: &TargetTest) -> bool {
    row.iter().all(|&at| test.hits(path, at))
}

fn check_length(path: &[u8], table: &IndexTable, window: usize) -> Result<()> {
    let required = table.required_len(window);
    if path.len() < required {
        return Err(Error::PathTooShort {
            have: path.len(),
            required,
            max_coordinate: table.max_index,
        });
    }
    Ok(())
}

/// The plain count `S_N`: how many summation indices have all their
/// coordinates hitting the target.
pub fn statistic_s(path: &[u8], table: &IndexTable, hit: &TargetTest) -> Result<u64> {
    check_length(path, table, hit.window())?;
    let mut s = 0u64;
    for n in 1..=table.n_horizon {
        if row_hits(path, table.row(n), hit) {
            s += 1;
        }
    }
    Ok(s)
}

/// Value of the stopped sum `Sigma_N` together with its censoring status.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SigmaOutcome {
    /// Hit count accumulated up to and including the capped stop time.
    pub value: u64,
    /// True iff no stop-hit occurred within the horizon (the cap bound).
    pub censored: bool,
}

/// The stopped sum: hits accumulated until the first index whose
/// coordinates all hit the stop target, capped at the horizon.  A single
/// index cannot hit both targets because they are disjoint.
pub fn statistic_sigma(
    path: &[u8],
    table: &IndexTable,
    hit: &TargetTest,
    stop: &TargetTest,
) -> Result<SigmaOutcome> {
    check_length(path, table, hit.window().max(stop.window()))?;
    let mut value = 0u64;
    for n in 1..=table.n_horizon {
        let row = table.row(n);
        if row_hits(path, row, hit) {
            value += 1;
        } else if row_hits(path, row, stop) {
            return Ok(SigmaOutcome {
                value,
                censored: false,
            });
        }
    }
    Ok(SigmaOutcome {
        value,
        censored: true,
    })
}

/// Histogram of simulated statistic values.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmpiricalPMF {
    /// `counts[k]` = number of uncensored trials with value `k`.
    pub counts: Vec<u64>,
    pub trials: u64,
    /// Trials whose stop time exceeded the horizon (always 0 in Poisson
    /// mode).
    pub censored_trials: u64,
}

impl EmpiricalPMF {
    /// Accounting identity: recorded values plus censored trials must
    /// exhaust the trial budget.
    pub fn check_accounting(&self) -> Result<()> {
        let recorded: u64 = self.counts.iter().sum();
        if recorded + self.censored_trials != self.trials {
            return Err(Error::config(format!(
                "histogram accounts for {} of {} trials",
                recorded + self.censored_trials,
                self.trials
            )));
        }
        Ok(())
    }

    /// Unconditional probabilities `counts[k] / trials` (censored mass is
    /// the shortfall from 1).
    pub fn pmf(&self) -> Vec<f64> {
        let t = self.trials as f64;
        self.counts.iter().map(|&c| c as f64 / t).collect()
    }

    /// Probabilities conditioned on the stop time fitting the horizon;
    /// empty when every trial was censored.
    pub fn conditional_pmf(&self) -> Vec<f64> {
        let u = self.trials - self.censored_trials;
        if u == 0 {
            return Vec::new();
        }
        let u = u as f64;
        self.counts.iter().map(|&c| c as f64 / u).collect()
    }

    /// Fraction of trials that were censored.
    pub fn censored_fraction(&self) -> f64 {
        self.censored_trials as f64 / self.trials as f64
    }

    /// Plot-ready CSV with columns `k,count,probability` (unconditional
    /// probabilities).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,count,probability\n");
        let t = self.trials as f64;
        for (k, &c) in self.counts.iter().enumerate() {
            out.push_str(&format!("{},{},{}\n", k, c, c as f64 / t));
        }
        out
    }
}

/// A prepared experiment: the sampling model, the evaluated index table,
/// and the per-coordinate tests.
struct Prepared {
    sampler: ProcessModel,
    table: IndexTable,
    hit: TargetTest,
    stop: Option<TargetTest>,
    required: usize,
}

fn prepare(spec: &ExperimentSpec) -> Result<Prepared> {
    spec.validate()?;
    let table = spec.qf.index_table(spec.n)?;
    let (sampler, hit, stop) = match &spec.source {
        Source::Process(model) => {
            let alphabet = model.alphabet_size();
            let hit = TargetTest::symbol_set(spec.gamma.as_deref().unwrap_or(&[]), alphabet)?;
            let stop = match spec.mode {
                Mode::Poisson => None,
                Mode::Geometric => Some(TargetTest::symbol_set(
                    spec.delta.as_deref().unwrap_or(&[]),
                    alphabet,
                )?),
            };
            (model.clone(), hit, stop)
        }
        Source::Shift(model) => {
            let hit = TargetTest::word(&spec.word_v()?);
            let stop = match spec.mode {
                Mode::Poisson => None,
                Mode::Geometric => Some(TargetTest::word(&spec.word_w()?)),
            };
            (model.as_process(), hit, stop)
        }
    };
    let window = hit
        .window()
        .max(stop.as_ref().map_or(0, TargetTest::window));
    let required = table.required_len(window);
    Ok(Prepared {
        sampler,
        table,
        hit,
        stop,
        required,
    })
}

/// Fold-state for one worker: histogram plus a reusable trajectory buffer.
struct TrialAccumulator {
    counts: Vec<u64>,
    censored: u64,
    buf: Vec<u8>,
}

impl TrialAccumulator {
    fn new() -> Self {
        TrialAccumulator {
            counts: Vec::new(),
            censored: 0,
            buf: Vec::new(),
        }
    }

    fn record(&mut self, value: u64) {
        let k = value as usize;
        if self.counts.len() <= k {
            self.counts.resize(k + 1, 0);
        }
        self.counts[k] += 1;
    }

    fn merge(mut self, other: Self) -> Self {
        let (mut long, short) = if self.counts.len() >= other.counts.len() {
            let short = other.counts;
            self.censored += other.censored;
            (self, short)
        } else {
            let mut o = other;
            o.censored += self.censored;
            let short = std::mem::take(&mut self.counts);
            (o, short)
        };
        for (dst, src) in long.counts.iter_mut().zip(short) {
            *dst += src;
        }
        long
    }
}

fn run_trial(prep: &Prepared, master_seed: u64, trial: u64, acc: &mut TrialAccumulator) {
    let seed = derive_seed(master_seed, trial);
    prep.sampler.sample_path_into(prep.required, seed, &mut acc.buf);
    match &prep.stop {
        None => {
            let s = statistic_s(&acc.buf, &prep.table, &prep.hit)
                .expect("sampled trajectory meets the required length");
            acc.record(s);
        }
        Some(stop) => {
            let out = statistic_sigma(&acc.buf, &prep.table, &prep.hit, stop)
                .expect("sampled trajectory meets the required length");
            if out.censored {
                acc.censored += 1;
            } else {
                acc.record(out.value);
            }
        }
    }
}

/// Runs the experiment, distributing trials across threads when the
/// `parallel` feature is on.  The result is a pure function of the spec:
/// the histogram merge is order-independent, so thread count and
/// scheduling cannot change it.
pub fn monte_carlo(spec: &ExperimentSpec) -> Result<EmpiricalPMF> {
    let prep = prepare(spec)?;
    let acc = par::indexed_fold(
        spec.trials,
        TrialAccumulator::new,
        |mut acc, t| {
            run_trial(&prep, spec.seed, t, &mut acc);
            acc
        },
        TrialAccumulator::merge,
    );
    finish(acc, spec.trials)
}

/// Single-threaded reference implementation of [`monte_carlo`]; always
/// compiled, used by the benchmark suite and as an equality oracle for the
/// parallel path.
pub fn monte_carlo_sequential(spec: &ExperimentSpec) -> Result<EmpiricalPMF> {
    let prep = prepare(spec)?;
    let mut acc = TrialAccumulator::new();
    for t in 0..spec.trials {
        run_trial(&prep, spec.seed, t, &mut acc);
    }
    finish(acc, spec.trials)
}

fn finish(acc: TrialAccumulator, trials: u64) -> Result<EmpiricalPMF> {
    let pmf = EmpiricalPMF {
        counts: acc.counts,
        trials,
        censored_trials: acc.censored,
    };
    pmf.check_accounting()?;
    Ok(pmf)
}

/// A reference law on the nonnegative integers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReferenceLaw {
    /// `P{k} = e^{-lambda} lambda^k / k!`.
    Poisson { lambda: f64 },
    /// `P{k} = rho (1 - rho)^k`, the limit law of the stopped sum.
    Geometric { rho: f64 },
    /// Same shape with the finite-horizon competing-renewal parameter.
    GeometricStar { rho_star: f64 },
}

impl ReferenceLaw {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ReferenceLaw::Poisson { lambda } => {
                if !lambda.is_finite() || lambda < 0.0 {
                    return Err(Error::config(format!(
                        "Poisson parameter must be a finite nonnegative real, got {lambda}"
                    )));
                }
            }
            ReferenceLaw::Geometric { rho } | ReferenceLaw::GeometricStar { rho_star: rho } => {
                if !rho.is_finite() || rho <= 0.0 || rho > 1.0 {
                    return Err(Error::config(format!(
                        "geometric parameter must lie in (0, 1], got {rho}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Probability table `[P{0}, .., P{k_max}]` truncated once the
    /// remaining tail drops below `tail_tol`, together with the exact tail
    /// mass cut off.
    pub fn truncated(&self, tail_tol: f64) -> (Vec<f64>, f64) {
        const MAX_SUPPORT: usize = 1 << 22;
        let mut table = Vec::new();
        let mut cum = 0.0f64;
        match *self {
            ReferenceLaw::Poisson { lambda } => {
                let mut p = (-lambda).exp();
                let mut k = 0usize;
                loop {
                    table.push(p);
                    cum += p;
                    k += 1;
                    if 1.0 - cum <= tail_tol || k >= MAX_SUPPORT {
                        break;
                    }
                    p *= lambda / k as f64;
                }
            }
            ReferenceLaw::Geometric { rho } | ReferenceLaw::GeometricStar { rho_star: rho } => {
                let mut p = rho;
                let mut k = 0usize;
                loop {
                    table.push(p);
                    cum += p;
                    k += 1;
                    if 1.0 - cum <= tail_tol || k >= MAX_SUPPORT {
                        break;
                    }
                    p *= 1.0 - rho;
                }
            }
        }
        (table, (1.0 - cum).max(0.0))
    }
}

/// Total variation distance between two finite pmfs (`1/2` the L1 norm of
/// the difference; missing entries read as zero).
pub fn tv_distance(p: &[f64], q: &[f64]) -> f64 {
    let len = p.len().max(q.len());
    let mut sum = 0.0;
    for k in 0..len {
        let a = p.get(k).copied().unwrap_or(0.0);
        let b = q.get(k).copied().unwrap_or(0.0);
        sum += (a - b).abs();
    }
    0.5 * sum
}

/// Upper bound on the total variation distance between a finite pmf and a
/// reference law: exact on the truncated support, plus the full cut tail
/// as correction.
pub fn tv_to_reference(pmf: &[f64], law: &ReferenceLaw) -> f64 {
    let (table, tail) = law.truncated(TAIL_TOL);
    tv_distance(pmf, &table) + tail
}

/// The exact law of the statistic, from full trajectory enumeration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactLaw {
    /// `pmf[k]` = exact probability that the (uncensored) value is `k`.
    pub pmf: Vec<f64>,
    /// Exact probability that the stop time exceeds the horizon.
    pub censored_mass: f64,
}

impl ExactLaw {
    /// Law conditioned on the stop time fitting the horizon; empty if
    /// censoring has full mass.
    pub fn conditional_pmf(&self) -> Vec<f64> {
        let kept = 1.0 - self.censored_mass;
        if kept <= 0.0 {
            return Vec::new();
        }
        self.pmf.iter().map(|&p| p / kept).collect()
    }
}

/// How paths are enumerated: an i.i.d. driver (possibly written twice per
/// step, for the doubled-letter model) or a Markov chain.
enum Drive<'a> {
    Iid { probs: &'a [f64], expand: usize },
    Markov {
        transition: &'a [Vec<f64>],
        stationary: &'a [f64],
    },
}

impl<'a> Drive<'a> {
    fn of(model: &'a ProcessModel) -> Drive<'a> {
        match model {
            ProcessModel::IidCategorical { probs } => Drive::Iid { probs, expand: 1 },
            ProcessModel::DoubledIid { base } => Drive::Iid {
                probs: base,
                expand: 2,
            },
            ProcessModel::StationaryMarkov {
                transition,
                stationary,
            } => Drive::Markov {
                transition,
                stationary,
            },
        }
    }

    fn alphabet(&self) -> usize {
        match self {
            Drive::Iid { probs, .. } => probs.len(),
            Drive::Markov { stationary, .. } => stationary.len(),
        }
    }

    /// Number of free decisions needed to pin a path of `len` symbols.
    fn depth_for(&self, len: usize) -> usize {
        match self {
            Drive::Iid { expand, .. } => len.div_ceil(*expand),
            Drive::Markov { .. } => len,
        }
    }
}

fn for_each_path(
    drive: &Drive,
    path: &mut [u8],
    depth: usize,
    total_depth: usize,
    prob: f64,
    visit: &mut impl FnMut(&[u8], f64),
) {
    if depth == total_depth {
        visit(path, prob);
        return;
    }
    let a = drive.alphabet();
    for s in 0..a as u8 {
        let factor = match drive {
            Drive::Iid { probs, .. } => probs[s as usize],
            Drive::Markov {
                transition,
                stationary,
            } => {
                if depth == 0 {
                    stationary[s as usize]
                } else {
                    transition[path[depth - 1] as usize][s as usize]
                }
            }
        };
        if factor == 0.0 {
            continue;
        }
        match drive {
            Drive::Iid { expand, .. } => {
                let start = depth * expand;
                let end = (start + expand).min(path.len());
                path[start..end].fill(s);
            }
            Drive::Markov { .. } => path[depth] = s,
        }
        for_each_path(drive, path, depth + 1, total_depth, prob * factor, visit);
    }
}

/// Exact law of the statistic by enumerating every trajectory with its
/// probability.  Rejected as intractable when the number of trajectories
/// exceeds [`ENUMERATION_CAP`].  This is the ground-truth oracle that
/// Monte Carlo results are checked against on small systems.
pub fn exact_law_small(spec: &ExperimentSpec) -> Result<ExactLaw> {
    let prep = prepare(spec)?;
    let drive = Drive::of(&prep.sampler);
    let depth = drive.depth_for(prep.required);
    let leaves = (drive.alphabet() as f64).powi(depth as i32);
    if leaves > ENUMERATION_CAP {
        return Err(Error::Intractable {
            what: "exact-law trajectory enumeration",
            required: leaves,
            cap: ENUMERATION_CAP,
        });
    }
    let mut path = vec![0u8; prep.required];
    let mut pmf: Vec<f64> = Vec::new();
    let mut censored_mass = 0.0f64;
    let table = &prep.table;
    let hit = &prep.hit;
    let stop = prep.stop.as_ref();
    let mut visit = |p: &[u8], prob: f64| match stop {
        None => {
            let s = statistic_s(p, table, hit).expect("enumerated path meets required length");
            bump(&mut pmf, s, prob);
        }
        Some(stop) => {
            let out = statistic_sigma(p, table, hit, stop)
                .expect("enumerated path meets required length");
            if out.censored {
                censored_mass += prob;
            } else {
                bump(&mut pmf, out.value, prob);
            }
        }
    };
    for_each_path(&drive, &mut path, 0, depth, 1.0, &mut visit);
    Ok(ExactLaw { pmf, censored_mass })
}

fn bump(pmf: &mut Vec<f64>, value: u64, prob: f64) {
    let k = value as usize;
    if pmf.len() <= k {
        pmf.resize(k + 1, 0.0);
    }
    pmf[k] += prob;
}

/// Agreement check between a Monte Carlo histogram and the exact law.
/// Censoring is folded in as one extra outcome so the comparison covers
/// the full trial mass.
#[derive(Clone, Debug, Serialize)]
pub struct ConsistencyReport {
    pub tv: f64,
    /// Statistical tolerance `4 * sqrt(support_size / trials)`.
    pub margin: f64,
    /// True when the distance exceeds the tolerance: a flag to
    /// investigate, not a hard failure.
    pub flagged: bool,
}

/// Compares unconditional laws (with censoring as an extra outcome)
/// against the `4 * sqrt(support / trials)` Monte Carlo tolerance.
pub fn mc_vs_exact(emp: &EmpiricalPMF, exact: &ExactLaw) -> ConsistencyReport {
    let mut tv = tv_distance(&emp.pmf(), &exact.pmf);
    tv += 0.5 * (emp.censored_fraction() - exact.censored_mass).abs();
    let censoring = emp.censored_trials > 0 || exact.censored_mass > 0.0;
    let support = emp.counts.len().max(exact.pmf.len()) + usize::from(censoring);
    let margin = 4.0 * (support as f64 / emp.trials as f64).sqrt();
    ConsistencyReport {
        tv,
        margin,
        flagged: tv > margin,
    }
}
