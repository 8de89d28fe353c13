//! Driving-sequence generation and mixing diagnostics.
//!
//! Processes are i.i.d., Markov, or deliberately non-stationary Markov
//! ("ams" kind: started away from the stationary law, so only the Cesaro
//! averages of the shifted laws stabilize). Strong-mixing coefficients are
//! estimated by exhaustive maximization over bounded-depth cylinder events
//! with exact chain probabilities; the result is a certified lower bound on
//! the true supremum, complemented by fitted decay models that serve as the
//! working upper-bound surrogate.

use crate::error::{Error, Result};
use crate::maps::{Letter, OmegaSequence, Provenance};
use crate::numeric;
use crate::rng::StreamRng;

/// Stream tag for letter draws; part of the documented key derivation
/// `(master seed) -> substream(OMEGA_STREAM) -> substream(realization) -> position`.
const OMEGA_STREAM: u64 = 0x01;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProcessKind {
    Iid,
    Markov,
    /// Markov chain started away from its stationary law: asymptotically
    /// mean stationary but not stationary.
    AmsMarkov,
    /// Letters drawn i.i.d. uniformly from a continuous parameter range.
    IidContinuous,
}

/// A generator of driving sequences with known mixing structure.
#[derive(Clone, Debug)]
pub struct SelectionProcess {
    kind: ProcessKind,
    /// i.i.d. letter probabilities (Iid kind).
    probs: Vec<f64>,
    /// Row-stochastic transition matrix (Markov kinds).
    transition: Vec<Vec<f64>>,
    initial: Vec<f64>,
    stationary: Vec<f64>,
    range: (f64, f64),
    id: String,
}

fn validate_distribution(p: &[f64], what: &str) -> Result<()> {
    if p.is_empty() {
        return Err(Error::Invalid(format!("{what} is empty")));
    }
    if p.iter().any(|&x| x < 0.0) {
        return Err(Error::Invalid(format!("{what} has a negative entry")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > 1e-12 {
        return Err(Error::Invalid(format!(
            "{what} sums to {s}, expected 1 within 1e-12"
        )));
    }
    Ok(())
}

fn stationary_of(transition: &[Vec<f64>]) -> Result<Vec<f64>> {
    let k = transition.len();
    // power iteration on the left action, deterministic start
    let mut pi = vec![1.0 / k as f64; k];
    for _ in 0..20_000 {
        let mut next = vec![0.0; k];
        for (i, row) in transition.iter().enumerate() {
            for j in 0..k {
                next[j] += pi[i] * row[j];
            }
        }
        let diff: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        pi = next;
        if diff < 1e-16 {
            break;
        }
    }
    // verify pi P = pi within 1e-10
    for j in 0..k {
        let img: f64 = (0..k).map(|i| pi[i] * transition[i][j]).sum();
        if (img - pi[j]).abs() > 1e-10 {
            return Err(Error::Invalid(
                "no stationary distribution found (is the chain irreducible and aperiodic?)".into(),
            ));
        }
    }
    Ok(pi)
}

impl SelectionProcess {
    pub fn iid(probs: Vec<f64>) -> Result<Self> {
        validate_distribution(&probs, "iid letter distribution")?;
        Ok(SelectionProcess {
            kind: ProcessKind::Iid,
            id: format!("iid-{}", probs.len()),
            stationary: probs.clone(),
            initial: probs.clone(),
            probs,
            transition: vec![],
            range: (0.0, 0.0),
        })
    }

    /// Uniform i.i.d. letters on an alphabet of size `k`.
    pub fn iid_uniform_letters(k: usize) -> Result<Self> {
        Self::iid(vec![1.0 / k as f64; k])
    }

    /// Deterministic single-letter process.
    pub fn one_letter() -> Self {
        Self::iid(vec![1.0]).expect("single letter")
    }

    /// Markov chain started at its stationary distribution.
    pub fn markov(transition: Vec<Vec<f64>>) -> Result<Self> {
        let k = transition.len();
        if k == 0 || transition.iter().any(|r| r.len() != k) {
            return Err(Error::Invalid(
                "transition matrix must be square and nonempty".into(),
            ));
        }
        for (i, row) in transition.iter().enumerate() {
            validate_distribution(row, &format!("transition row {i}"))?;
        }
        let stationary = stationary_of(&transition)?;
        Ok(SelectionProcess {
            kind: ProcessKind::Markov,
            id: format!("markov-{k}"),
            initial: stationary.clone(),
            stationary,
            probs: vec![],
            transition,
            range: (0.0, 0.0),
        })
    }

    /// Markov chain started at an arbitrary initial distribution; the point
    /// of this kind is that the initial law may differ from the stationary
    /// one.
    pub fn ams_markov(transition: Vec<Vec<f64>>, initial: Vec<f64>) -> Result<Self> {
        let mut p = Self::markov(transition)?;
        if initial.len() != p.stationary.len() {
            return Err(Error::Invalid(
                "initial distribution has wrong length".into(),
            ));
        }
        validate_distribution(&initial, "initial distribution")?;
        p.kind = ProcessKind::AmsMarkov;
        p.id = format!("ams-markov-{}", initial.len());
        p.initial = initial;
        Ok(p)
    }

    /// i.i.d. letters uniform on a continuous range (the letter is the map
    /// parameter itself).
    pub fn iid_continuous(lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) {
            return Err(Error::Invalid(format!(
                "empty continuous range [{lo}, {hi})"
            )));
        }
        Ok(SelectionProcess {
            kind: ProcessKind::IidContinuous,
            id: "iid-continuous".into(),
            probs: vec![],
            transition: vec![],
            initial: vec![],
            stationary: vec![],
            range: (lo, hi),
        })
    }

    pub fn kind(&self) -> ProcessKind {
        self.kind
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn n_letters(&self) -> Option<usize> {
        match self.kind {
            ProcessKind::Iid => Some(self.probs.len()),
            ProcessKind::Markov | ProcessKind::AmsMarkov => Some(self.transition.len()),
            ProcessKind::IidContinuous => None,
        }
    }

    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn transition(&self) -> &[Vec<f64>] {
        &self.transition
    }

    /// Whether the law of the whole sequence is shift-stationary.
    pub fn is_stationary(&self) -> bool {
        match self.kind {
            ProcessKind::Iid | ProcessKind::IidContinuous | ProcessKind::Markov => true,
            ProcessKind::AmsMarkov => self
                .initial
                .iter()
                .zip(&self.stationary)
                .all(|(a, b)| (a - b).abs() < 1e-14),
        }
    }

    /// Draw a sequence; a pure function of `(seed, realization)`.
    pub fn sample_omega(&self, length: usize, seed: u64, realization: u64) -> OmegaSequence {
        let stream = StreamRng::new(seed)
            .substream(OMEGA_STREAM)
            .substream(realization);
        let provenance = Provenance {
            process: self.id.clone(),
            seed,
            realization,
        };
        let mut letters: Vec<Letter> = Vec::with_capacity(length);
        match self.kind {
            ProcessKind::Iid => {
                for i in 0..length {
                    letters.push(sample_index(&self.probs, stream.f64_at(i as u64)) as Letter);
                }
            }
            ProcessKind::IidContinuous => {
                let (lo, hi) = self.range;
                for i in 0..length {
                    letters.push(lo + (hi - lo) * stream.f64_at(i as u64));
                }
            }
            ProcessKind::Markov | ProcessKind::AmsMarkov => {
                if length > 0 {
                    let mut state = sample_index(&self.initial, stream.f64_at(0));
                    letters.push(state as Letter);
                    for i in 1..length {
                        state = sample_index(&self.transition[state], stream.f64_at(i as u64));
                        letters.push(state as Letter);
                    }
                }
            }
        }
        OmegaSequence::new(letters, provenance)
    }

    /// Distribution of the letter at 0-based position `t` under the process
    /// law (initial distribution propagated `t` steps).
    pub fn marginal_at(&self, t: usize) -> Result<Vec<f64>> {
        match self.kind {
            ProcessKind::Iid => Ok(self.probs.clone()),
            ProcessKind::Markov => Ok(self.stationary.clone()),
            ProcessKind::AmsMarkov => {
                let mut m = self.initial.clone();
                for _ in 0..t {
                    m = right_multiply(&m, &self.transition);
                }
                Ok(m)
            }
            ProcessKind::IidContinuous => Err(Error::Unsupported(
                "marginals of a continuous alphabet".into(),
            )),
        }
    }

    fn step_matrix(&self) -> Result<Vec<Vec<f64>>> {
        match self.kind {
            ProcessKind::Iid => {
                let k = self.probs.len();
                Ok(vec![self.probs.clone(); k])
            }
            ProcessKind::Markov | ProcessKind::AmsMarkov => Ok(self.transition.clone()),
            ProcessKind::IidContinuous => Err(Error::Unsupported(
                "transition structure of a continuous alphabet".into(),
            )),
        }
    }

    /// Modulus of the second-largest eigenvalue of the transition matrix,
    /// computed by power iteration on the deflated operator. This is the
    /// exact exponential mixing rate of the chain.
    pub fn second_eigenvalue_modulus(&self) -> Result<f64> {
        let p = self.step_matrix()?;
        let k = p.len();
        if k == 1 {
            return Ok(0.0);
        }
        let pi = &self.stationary;
        // deflate: Q = P - 1 pi^T, then spectral radius via power iteration
        let q: Vec<Vec<f64>> = (0..k)
            .map(|i| (0..k).map(|j| p[i][j] - pi[j]).collect())
            .collect();
        let mut v: Vec<f64> = (0..k)
            .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let mut lambda = 0.0;
        for _ in 0..5000 {
            let w: Vec<f64> = (0..k)
                .map(|i| (0..k).map(|j| q[i][j] * v[j]).sum())
                .collect();
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < 1e-300 {
                return Ok(0.0);
            }
            let next = norm;
            v = w.iter().map(|x| x / norm).collect();
            if (next - lambda).abs() < 1e-14 {
                lambda = next;
                break;
            }
            lambda = next;
        }
        Ok(lambda.min(1.0))
    }

    /// Lower-bound estimate of `sup_i alpha(F_1^i, F_{i+n}^infty)` by
    /// exhaustive maximization of `|P(AB) - P(A)P(B)|` over unions of
    /// cylinder events of depth at most `depth_a` (past block, ending at
    /// scanned positions up to `max_i`) and `depth_b` (future block), with
    /// exact probabilities from the chain. Product-measure kinds short to 0.
    pub fn estimate_alpha(
        &self,
        n: usize,
        max_i: usize,
        depth_a: usize,
        depth_b: usize,
    ) -> Result<f64> {
        if n == 0 {
            return Err(Error::Parameter("alpha gap n must be >= 1".into()));
        }
        if self.kind == ProcessKind::IidContinuous {
            return Err(Error::Unsupported(
                "alpha estimation needs a finite alphabet".into(),
            ));
        }
        if self.kind == ProcessKind::Iid {
            // product measure: every past event is independent of every
            // future event, exactly
            return Ok(0.0);
        }
        if depth_a == 0 || depth_b == 0 {
            return Err(Error::Parameter("cylinder depths must be >= 1".into()));
        }
        let mut best: f64 = 0.0;
        for i in 0..=max_i {
            let da = depth_a.min(i + 1);
            let joint = self.block_joint(i, da, n, depth_b)?;
            best = best.max(max_union_discrepancy(&joint));
        }
        // theoretical ceiling for alpha coefficients
        Ok(best.min(0.25))
    }

    /// Joint law of the word on positions `[i-da+1 ..= i]` and the word on
    /// positions `[i+n ..= i+n+db-1]`, as a matrix indexed by (past word,
    /// future word).
    fn block_joint(&self, i: usize, da: usize, n: usize, db: usize) -> Result<Vec<Vec<f64>>> {
        let k = self.transition.len();
        let start = i + 1 - da;
        let m0 = self.marginal_at(start)?;
        let na = k.pow(da as u32);
        let nb = k.pow(db as u32);
        let mut joint = vec![vec![0.0; nb]; na];
        let gap = self.matrix_power(n);
        for wa in 0..na {
            let letters_a = unpack_word(wa, da, k);
            let mut p_a = m0[letters_a[0]];
            for d in 1..da {
                p_a *= self.transition[letters_a[d - 1]][letters_a[d]];
            }
            if p_a == 0.0 {
                continue;
            }
            let last_a = letters_a[da - 1];
            for wb in 0..nb {
                let letters_b = unpack_word(wb, db, k);
                let mut p = p_a * gap[last_a][letters_b[0]];
                for d in 1..db {
                    p *= self.transition[letters_b[d - 1]][letters_b[d]];
                }
                joint[wa][wb] = p;
            }
        }
        Ok(joint)
    }

    fn matrix_power(&self, n: usize) -> Vec<Vec<f64>> {
        let k = self.transition.len();
        let mut acc: Vec<Vec<f64>> = (0..k)
            .map(|i| (0..k).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        for _ in 0..n {
            acc = mat_mul(&acc, &self.transition);
        }
        acc
    }

    /// Exact `(E[uv], E[u], E[v])` for two word functions under the process
    /// law, from the chain structure.
    pub fn exact_product_moment(&self, u: &WordFn, v: &WordFn) -> Result<(f64, f64, f64)> {
        let k = self
            .n_letters()
            .ok_or_else(|| Error::Unsupported("word moments need a finite alphabet".into()))?;
        u.check(k)?;
        v.check(k)?;
        if v.start < u.end() {
            return Err(Error::Contract(
                "word supports must be ordered and disjoint".into(),
            ));
        }
        let trans = self.step_matrix()?;
        let m0 = self.marginal_at(u.start)?;
        // transition steps from u's last coordinate to v's first
        let gap = v.start - u.end() + 1;
        let gap_mat = {
            let mut acc: Vec<Vec<f64>> = (0..k)
                .map(|i| (0..k).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                .collect();
            for _ in 0..gap {
                acc = mat_mul(&acc, &trans);
            }
            acc
        };
        let nu = k.pow(u.depth as u32);
        let nv = k.pow(v.depth as u32);
        let mut euv = 0.0;
        let mut eu = 0.0;
        // marginal law at v.start for E[v]
        let mut mv = m0.clone();
        for _ in 0..(v.start - u.start) {
            mv = right_multiply(&mv, &trans);
        }
        let mut ev = 0.0;
        for wv in 0..nv {
            let lv = unpack_word(wv, v.depth, k);
            let mut p = mv[lv[0]];
            for d in 1..v.depth {
                p *= trans[lv[d - 1]][lv[d]];
            }
            ev += p * v.table[wv];
        }
        for wu in 0..nu {
            let lu = unpack_word(wu, u.depth, k);
            let mut pu = m0[lu[0]];
            for d in 1..u.depth {
                pu *= trans[lu[d - 1]][lu[d]];
            }
            if pu == 0.0 {
                continue;
            }
            eu += pu * u.table[wu];
            let last = lu[u.depth - 1];
            for wv in 0..nv {
                let lv = unpack_word(wv, v.depth, k);
                let mut p = pu * gap_mat[last][lv[0]];
                for d in 1..v.depth {
                    p *= trans[lv[d - 1]][lv[d]];
                }
                euv += p * u.table[wu] * v.table[wv];
            }
        }
        Ok((euv, eu, ev))
    }

    /// Monte-Carlo audit of the covariance inequality
    /// `|E[uv] - Eu Ev| <= 4 ||u||_inf ||v||_inf alpha(n)` for word
    /// functions separated by `gap` positions. The reported `alpha_bound`
    /// uses the exhaustive estimate at the actual separation.
    pub fn check_strong_mixing(
        &self,
        u: &WordFn,
        v: &WordFn,
        samples: usize,
        seed: u64,
    ) -> Result<MixingCheck> {
        let k = self
            .n_letters()
            .ok_or_else(|| Error::Unsupported("mixing check needs a finite alphabet".into()))?;
        u.check(k)?;
        v.check(k)?;
        if v.start < u.end() {
            return Err(Error::Contract(
                "v must depend only on coordinates at or after the end of u".into(),
            ));
        }
        let gap = v.start - u.end() + 1;
        if samples < 64 {
            return Err(Error::Parameter("need at least 64 samples".into()));
        }
        let length = v.end();
        let n_batches = 16usize;
        let per_batch = samples / n_batches;
        let mut batch_stats = Vec::with_capacity(n_batches);
        for b in 0..n_batches {
            let (mut suv, mut su, mut sv) = (0.0, 0.0, 0.0);
            for s in 0..per_batch {
                let r = (b * per_batch + s) as u64;
                let omega = self.sample_omega(length, seed, r);
                let uval = u.eval(&omega);
                let vval = v.eval(&omega);
                suv += uval * vval;
                su += uval;
                sv += vval;
            }
            let nf = per_batch as f64;
            batch_stats.push(suv / nf - (su / nf) * (sv / nf));
        }
        let (cov, se) = numeric::mean_and_se(&batch_stats);
        let se = se.unwrap_or(0.0);
        let alpha = self.estimate_alpha(gap, u.end() + 2, 2, 2).unwrap_or(0.25);
        let bound = 4.0 * u.sup_norm() * v.sup_norm() * alpha;
        let estimate = cov.abs();
        Ok(MixingCheck {
            estimate,
            se,
            alpha_hat: alpha,
            bound,
            pass: estimate <= bound + 3.0 * se,
        })
    }

    /// Exact Cesaro average `(1/n) sum_{i<n} E[g o tau^i]`, the stationary
    /// value `E_pi[g]`, and their difference. Realizes the asymptotic
    /// mean-stationarity diagnostic for finite-alphabet processes.
    pub fn ams_average(&self, g: &WordFn, n: usize) -> Result<AmsReport> {
        let k = self
            .n_letters()
            .ok_or_else(|| Error::Unsupported("ams averaging needs a finite alphabet".into()))?;
        g.check(k)?;
        if n == 0 {
            return Err(Error::Parameter("n must be >= 1".into()));
        }
        let trans = self.step_matrix()?;
        // word value expectation given the marginal at the word start
        let word_expect = |m: &[f64]| -> f64 {
            let nw = k.pow(g.depth as u32);
            let mut e = 0.0;
            for w in 0..nw {
                let lw = unpack_word(w, g.depth, k);
                let mut p = m[lw[0]];
                for d in 1..g.depth {
                    p *= trans[lw[d - 1]][lw[d]];
                }
                e += p * g.table[w];
            }
            e
        };
        let mut m = self.marginal_at(g.start)?;
        let mut acc = 0.0;
        for _ in 0..n {
            acc += word_expect(&m);
            m = right_multiply(&m, &trans);
        }
        let average = acc / n as f64;
        let stationary_value = word_expect(&self.stationary);
        Ok(AmsReport {
            average,
            stationary_value,
            difference: average - stationary_value,
        })
    }

    /// Estimate `alpha(1..=n_max)` with monotone regularization and fitted
    /// decay models.
    pub fn mixing_profile(
        &self,
        n_max: usize,
        max_i: usize,
        depth: usize,
    ) -> Result<MixingProfile> {
        if n_max == 0 {
            return Err(Error::Parameter("n_max must be >= 1".into()));
        }
        let mut raw = Vec::with_capacity(n_max);
        for n in 1..=n_max {
            raw.push(self.estimate_alpha(n, max_i, depth, depth)?);
        }
        // smallest non-increasing majorant
        let mut alpha = raw.clone();
        for n in (0..n_max.saturating_sub(1)).rev() {
            alpha[n] = alpha[n].max(alpha[n + 1]);
        }
        let fit = fit_decay_models(&alpha);
        Ok(MixingProfile {
            alpha,
            exponential: fit.0,
            polynomial: fit.1,
        })
    }
}

/// Outcome of one strong-mixing inequality audit.
#[derive(Clone, Copy, Debug)]
pub struct MixingCheck {
    pub estimate: f64,
    pub se: f64,
    pub alpha_hat: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Cesaro-average diagnostic for asymptotic mean stationarity.
#[derive(Clone, Copy, Debug)]
pub struct AmsReport {
    pub average: f64,
    pub stationary_value: f64,
    pub difference: f64,
}

/// Estimated mixing coefficients and fitted decay models. `exponential` is
/// `(C, lambda)` for `alpha(n) ~ C lambda^n`; `polynomial` is `(C, gamma)`
/// for the conservative majorant `alpha(n) <= C n^-gamma` on the window.
#[derive(Clone, Debug)]
pub struct MixingProfile {
    pub alpha: Vec<f64>,
    pub exponential: (f64, f64),
    pub polynomial: (f64, f64),
}

impl MixingProfile {
    pub fn n_max(&self) -> usize {
        self.alpha.len()
    }

    pub fn alpha_at(&self, n: usize) -> f64 {
        self.alpha[n - 1]
    }

    /// Fitted polynomial upper bound evaluated at `n`.
    pub fn fitted_bound(&self, n: usize) -> f64 {
        let (c, gamma) = self.polynomial;
        if n == 0 {
            c
        } else {
            c * (n as f64).powf(-gamma)
        }
    }
}

const ALPHA_FLOOR: f64 = 1e-14;

fn fit_decay_models(alpha: &[f64]) -> ((f64, f64), (f64, f64)) {
    let clamped: Vec<f64> = alpha.iter().map(|&a| a.max(ALPHA_FLOOR)).collect();
    let ns: Vec<f64> = (1..=alpha.len()).map(|n| n as f64).collect();
    let logs: Vec<f64> = clamped.iter().map(|a| a.ln()).collect();
    // exponential: ln a = ln C + n ln lambda
    let exp_fit = numeric::least_squares(&ns, &logs)
        .map(|f| (f.intercept.exp(), f.slope.exp().min(1.0)))
        .unwrap_or((clamped[0], 1.0));
    // polynomial majorant: gamma from log-log slope, C lifted to cover data
    let lns: Vec<f64> = ns.iter().map(|n| n.ln()).collect();
    let poly = numeric::least_squares(&lns, &logs)
        .map(|f| -f.slope)
        .unwrap_or(0.0)
        .max(0.0);
    let c = clamped
        .iter()
        .zip(&ns)
        .map(|(a, n)| a * n.powf(poly))
        .fold(0.0, f64::max);
    (exp_fit, (c, poly))
}

/// A bounded function of finitely many coordinates of the driving sequence:
/// `g(omega) = table[word(omega_start .. omega_{start+depth})]` with the
/// word read in base `n_letters`, most significant letter first. Positions
/// are 0-based.
#[derive(Clone, Debug)]
pub struct WordFn {
    pub start: usize,
    pub depth: usize,
    pub table: Vec<f64>,
    pub n_letters: usize,
}

impl WordFn {
    pub fn new(start: usize, depth: usize, n_letters: usize, table: Vec<f64>) -> Result<Self> {
        if depth == 0 || n_letters == 0 {
            return Err(Error::Parameter(
                "word function needs depth and alphabet >= 1".into(),
            ));
        }
        if table.len() != n_letters.pow(depth as u32) {
            return Err(Error::Invalid(format!(
                "table length {} != {}^{}",
                table.len(),
                n_letters,
                depth
            )));
        }
        Ok(WordFn {
            start,
            depth,
            table,
            n_letters,
        })
    }

    /// Indicator of letter `l` at one position.
    pub fn indicator(start: usize, n_letters: usize, l: usize) -> Result<Self> {
        let mut table = vec![0.0; n_letters];
        table[l] = 1.0;
        Self::new(start, 1, n_letters, table)
    }

    /// One past the last coordinate the function depends on.
    pub fn end(&self) -> usize {
        self.start + self.depth
    }

    pub fn sup_norm(&self) -> f64 {
        self.table.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn check(&self, n_letters: usize) -> Result<()> {
        if self.n_letters != n_letters {
            return Err(Error::Contract(format!(
                "word function is over {} letters, process has {}",
                self.n_letters, n_letters
            )));
        }
        Ok(())
    }

    pub fn eval(&self, omega: &OmegaSequence) -> f64 {
        let letters = omega.letters();
        let mut idx = 0usize;
        for d in 0..self.depth {
            idx = idx * self.n_letters + letters[self.start + d] as usize;
        }
        self.table[idx]
    }
}

fn sample_index(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

fn right_multiply(v: &[f64], m: &[Vec<f64>]) -> Vec<f64> {
    let k = v.len();
    (0..k)
        .map(|j| (0..k).map(|i| v[i] * m[i][j]).sum())
        .collect()
}

fn mat_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = a.len();
    (0..k)
        .map(|i| {
            (0..k)
                .map(|j| (0..k).map(|l| a[i][l] * b[l][j]).sum())
                .collect()
        })
        .collect()
}

fn unpack_word(mut w: usize, depth: usize, k: usize) -> Vec<usize> {
    let mut out = vec![0usize; depth];
    for d in (0..depth).rev() {
        out[d] = w % k;
        w /= k;
    }
    out
}

/// Largest `|sum_{a in A, b in B} (J[a][b] - p[a] q[b])|` over all unions A
/// of row atoms and B of column atoms. Enumerates subsets of the smaller
/// side; the optimal complementary union is read off the sign pattern of
/// the partial sums.
fn max_union_discrepancy(joint: &[Vec<f64>]) -> f64 {
    let na = joint.len();
    let nb = joint[0].len();
    let p: Vec<f64> = joint.iter().map(|row| row.iter().sum()).collect();
    let q: Vec<f64> = (0..nb)
        .map(|b| joint.iter().map(|row| row[b]).sum())
        .collect();
    // excess matrix has zero row and column sums
    let mut e: Vec<Vec<f64>> = (0..na)
        .map(|a| (0..nb).map(|b| joint[a][b] - p[a] * q[b]).collect())
        .collect();
    if na > nb {
        // transpose so the enumerated side is the smaller one
        e = (0..nb)
            .map(|b| (0..na).map(|a| e[a][b]).collect())
            .collect();
    }
    let outer = e.len();
    let inner = e[0].len();
    assert!(outer <= 24, "cylinder event space too large to enumerate");
    let mut best: f64 = 0.0;
    for mask in 1u64..(1u64 << outer) {
        let mut pos = 0.0;
        let mut neg = 0.0;
        for r in 0..inner {
            let mut s = 0.0;
            for (c, row) in e.iter().enumerate() {
                if mask & (1 << c) != 0 {
                    s += row[r];
                }
            }
            if s > 0.0 {
                pos += s;
            } else {
                neg += s;
            }
        }
        best = best.max(pos).max(-neg);
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state(p: f64, q: f64) -> Vec<Vec<f64>> {
        vec![vec![1.0 - p, p], vec![q, 1.0 - q]]
    }

    #[test]
    fn sampling_is_deterministic_in_the_key() {
        let proc = SelectionProcess::markov(two_state(0.1, 0.1)).unwrap();
        let a = proc.sample_omega(1000, 7, 3);
        let b = proc.sample_omega(1000, 7, 3);
        assert_eq!(a.letters(), b.letters());
        let c = proc.sample_omega(1000, 7, 4);
        assert_ne!(a.letters(), c.letters());
    }

    #[test]
    fn iid_letter_frequency_concentrates() {
        let proc = SelectionProcess::iid_uniform_letters(2).unwrap();
        let omega = proc.sample_omega(1_000_000, 42, 0);
        let ones = omega.letters().iter().filter(|&&l| l == 1.0).count() as f64;
        let freq = ones / 1e6;
        // binomial sd = 0.0005; allow 3 sigma around 0.5 (band 0.002 in spec)
        assert!((freq - 0.5).abs() < 0.002, "freq = {freq}");
    }

    #[test]
    fn markov_lag1_autocorrelation_matches_spectral_gap() {
        // stationary two-state chain: corr(1_{X_t=1}, 1_{X_{t+1}=1}) = 1-p-q
        let proc = SelectionProcess::markov(two_state(0.1, 0.1)).unwrap();
        let omega = proc.sample_omega(1_000_000, 11, 0);
        let xs: Vec<f64> = omega.letters().to_vec();
        let n = xs.len() - 1;
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / xs.len() as f64;
        let cov = (0..n)
            .map(|i| (xs[i] - mean) * (xs[i + 1] - mean))
            .sum::<f64>()
            / n as f64;
        assert!((cov / var - 0.8).abs() < 0.01, "lag-1 corr = {}", cov / var);
    }

    #[test]
    fn stationary_distribution_validates() {
        let proc = SelectionProcess::markov(two_state(0.2, 0.1)).unwrap();
        // pi = (q, p)/(p+q) = (1/3, 2/3)
        assert!((proc.stationary()[0] - 1.0 / 3.0).abs() < 1e-10);
        assert!((proc.stationary()[1] - 2.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn iid_alpha_is_exactly_zero() {
        let proc = SelectionProcess::iid_uniform_letters(3).unwrap();
        for n in 1..5 {
            assert_eq!(proc.estimate_alpha(n, 4, 2, 2).unwrap(), 0.0);
        }
    }

    #[test]
    fn alpha_matches_exhaustive_pair_enumeration_at_depth_one() {
        // brute force over all 2^2 x 2^2 event pairs (subsets of a binary
        // letter at one past and one future position), exact chain law
        let t = two_state(0.1, 0.1);
        let proc = SelectionProcess::markov(t.clone()).unwrap();
        let est = proc.estimate_alpha(1, 0, 1, 1).unwrap();
        // by hand: single past coordinate 0, future coordinate 1
        let pi = proc.stationary().to_vec();
        let mut brute: f64 = 0.0;
        for amask in 0u8..4 {
            for bmask in 0u8..4 {
                let mut pab = 0.0;
                let mut pa = 0.0;
                let mut pb = 0.0;
                for a in 0..2usize {
                    for b in 0..2usize {
                        let p = pi[a] * t[a][b];
                        if amask & (1 << a) != 0 {
                            pa += p;
                        }
                        if bmask & (1 << b) != 0 {
                            pb += p;
                        }
                        if amask & (1 << a) != 0 && bmask & (1 << b) != 0 {
                            pab += p;
                        }
                    }
                }
                brute = brute.max((pab - pa * pb).abs());
            }
        }
        assert!(est > 0.0);
        assert!((est - brute).abs() < 1e-14, "est {est} vs brute {brute}");
    }

    #[test]
    fn alpha_profile_is_monotone_and_tracks_second_eigenvalue() {
        let proc = SelectionProcess::markov(two_state(0.1, 0.1)).unwrap();
        let prof = proc.mixing_profile(8, 2, 2).unwrap();
        for n in 1..prof.n_max() {
            assert!(prof.alpha[n] <= prof.alpha[n - 1] + 1e-15);
        }
        let lambda2 = proc.second_eigenvalue_modulus().unwrap();
        assert!((lambda2 - 0.8).abs() < 1e-10);
        let (_, fitted_lambda) = prof.exponential;
        assert!(
            (fitted_lambda.ln() - lambda2.ln()).abs() < 0.05,
            "fitted log-rate {} vs exact {}",
            fitted_lambda.ln(),
            lambda2.ln()
        );
    }

    #[test]
    fn strong_mixing_inequality_holds_for_indicator_pairs() {
        let proc = SelectionProcess::markov(two_state(0.1, 0.1)).unwrap();
        let k = 2;
        let u = WordFn::indicator(0, k, 1).unwrap();
        let v = WordFn::indicator(2, k, 1).unwrap();
        let check = proc.check_strong_mixing(&u, &v, 4096, 99).unwrap();
        assert!(
            check.pass,
            "estimate {} bound {} se {}",
            check.estimate, check.bound, check.se
        );
        // exact two-point covariance: pi_1^2 (1-p-q)^2 scaled...
        let (euv, eu, ev) = proc.exact_product_moment(&u, &v).unwrap();
        let exact = (euv - eu * ev).abs();
        assert!((check.estimate - exact).abs() < 5.0 * check.se.max(1e-4));
    }

    #[test]
    fn iid_pairs_are_uncorrelated_within_noise() {
        let proc = SelectionProcess::iid_uniform_letters(2).unwrap();
        let u = WordFn::indicator(0, 2, 0).unwrap();
        let v = WordFn::indicator(3, 2, 0).unwrap();
        let check = proc.check_strong_mixing(&u, &v, 4096, 5).unwrap();
        assert!(check.estimate <= 3.0 * check.se + 1e-12);
    }

    #[test]
    fn ams_difference_vanishes_for_stationary_start_and_single_term() {
        let proc = SelectionProcess::markov(two_state(0.3, 0.2)).unwrap();
        let g = WordFn::indicator(0, 2, 1).unwrap();
        for n in [1usize, 5, 50] {
            let rep = proc.ams_average(&g, n).unwrap();
            assert!(rep.difference.abs() < 1e-13);
        }
        // n = 1 returns the initial-law expectation
        let ams = SelectionProcess::ams_markov(two_state(0.3, 0.2), vec![1.0, 0.0]).unwrap();
        let rep = ams.ams_average(&g, 1).unwrap();
        assert!((rep.average - 0.0).abs() < 1e-15);
    }

    #[test]
    fn ams_cesaro_difference_decays_at_the_harmonic_rate() {
        // the summands converge exponentially, but their Cesaro average
        // differs from the limit by the accumulated early terms over n, so
        // the honest polynomial order of the difference is exactly 1
        let proc = SelectionProcess::ams_markov(two_state(0.3, 0.2), vec![1.0, 0.0]).unwrap();
        let g = WordFn::indicator(0, 2, 1).unwrap();
        let series: Vec<(f64, f64)> = (2..=7)
            .map(|e| {
                let n = 1usize << e;
                let rep = proc.ams_average(&g, n).unwrap();
                (n as f64, rep.difference.abs().max(1e-300))
            })
            .collect();
        // differences head to zero monotonically
        for w in series.windows(2) {
            assert!(w[1].1 < w[0].1);
        }
        let xs: Vec<f64> = series.iter().map(|(n, _)| n.ln()).collect();
        let ys: Vec<f64> = series.iter().map(|(_, d)| d.ln()).collect();
        let fit = numeric::least_squares(&xs, &ys).unwrap();
        let zeta_hat = -fit.slope;
        assert!((0.9..=1.05).contains(&zeta_hat), "fitted zeta {zeta_hat}");
    }

    #[test]
    fn ams_difference_matches_geometric_closed_form() {
        // start at (1,0); E[g o tau^i] = pi_1 - pi_1 lambda^i for the
        // letter-1 indicator, so the Cesaro difference is
        // -pi_1 (1-lambda^n) / (n (1-lambda))
        let (p, q) = (0.3, 0.2);
        let lambda: f64 = 1.0 - p - q;
        let pi1 = p / (p + q);
        let proc = SelectionProcess::ams_markov(two_state(p, q), vec![1.0, 0.0]).unwrap();
        let g = WordFn::indicator(0, 2, 1).unwrap();
        for n in [1usize, 2, 10, 100] {
            let rep = proc.ams_average(&g, n).unwrap();
            let closed = -pi1 * (1.0 - lambda.powi(n as i32)) / (n as f64 * (1.0 - lambda));
            assert!(
                (rep.difference - closed).abs() < 1e-10,
                "n={n}: {} vs {}",
                rep.difference,
                closed
            );
        }
    }

    #[test]
    fn continuous_alphabet_is_rejected_where_unsupported() {
        let proc = SelectionProcess::iid_continuous(2.0, 3.0).unwrap();
        assert!(matches!(
            proc.estimate_alpha(1, 2, 2, 2),
            Err(Error::Unsupported(_))
        ));
        let omega = proc.sample_omega(10, 1, 0);
        assert!(omega.letters().iter().all(|&l| (2.0..3.0).contains(&l)));
    }
}
