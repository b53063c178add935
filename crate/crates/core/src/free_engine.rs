//! Free-limit moments of the process `Ψ` on the unitary dual group U⟨n⟩.
//!
//! Every trace-tuple `Γ = φ(w_1) ... φ(w_r)` obeys a closed linear ODE whose
//! right-hand side is produced by [`apply_generator`]. The latest time of a
//! tuple is the *active* one; letters stamped earlier are inert coefficients.
//!
//! The rewrite rules come from the free Itô product rule. Writing
//! `dΨ_ij = (i/√n) Σ_k dX_ik Ψ_kj - Ψ_ij dt/2` and
//! `dΨ*_ij = -(i/√n) Σ_k Ψ*_kj dX_ki - Ψ*_ij dt/2`, the noise of a plain
//! letter sits in the gap on its left and the noise of a starred letter in
//! the gap on its right. For two active letters `p < q` of one trace the
//! contraction `dX_ab B dX_cd = δ_ad δ_bc φ(B) dt` then
//! * fixes the summed row indices (`(0,0)` and `(1,1)`: `p` takes row `i_q`,
//!   `q` takes row `i_p`), or
//! * gates on `i_p = i_q` and sums a shared row index over `1..=n`
//!   (mixed stars),
//!
//! and cuts the trace at the two gaps: the segment between the gaps becomes
//! a new trace, the rest closes up. Empty traces are dropped (`φ(1) = 1`).
//! The prefactor is `(±i/√n)(±i/√n) = -(1/n)(-1)^{ε_p+ε_q}`.

use std::collections::{HashMap, VecDeque};
use std::sync::Arc;

use dashmap::DashMap;
use num_complex::Complex64;
use num_rational::Rational64;
use num_traits::{ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::ode::{propagate, SparseSystem, DEFAULT_RTOL};
use crate::words::{Letter, TraceTuple};

pub const DEFAULT_MAX_STATES: usize = 100_000;

/// One generator row: canonical targets with exact rational coefficients.
pub type Row = Vec<(TraceTuple, Rational64)>;

/// The generator row of `state`. Letters stamped with the tuple's latest
/// time are active; all others ride along unchanged.
pub fn apply_generator(state: &TraceTuple, n: usize) -> Row {
    let mut row: Row = Vec::new();
    let mut slot: HashMap<TraceTuple, usize> = HashMap::new();
    let mut add = |target: TraceTuple, c: Rational64| {
        if let Some(&k) = slot.get(&target) {
            row[k].1 += c;
        } else {
            slot.insert(target.clone(), row.len());
            row.push((target, c));
        }
    };
    if state.is_unit() {
        return Vec::new();
    }
    let active = state.times().len() - 1;
    let active_count = state.letters().filter(|l| l.time_id == active).count();
    add(state.clone(), Rational64::new(-(active_count as i64), 2));

    let n_i = n as i64;
    for (kappa, trace) in state.traces().iter().enumerate() {
        let letters = trace.letters();
        let positions: Vec<usize> = (0..letters.len())
            .filter(|&p| letters[p].time_id == active)
            .collect();
        for (a, &p) in positions.iter().enumerate() {
            for &q in &positions[a + 1..] {
                let (lp, lq) = (letters[p], letters[q]);
                let sign = if lp.star == lq.star { -1 } else { 1 };
                let coeff = Rational64::new(sign, n_i);
                for pieces in contract(letters, p, q, n) {
                    let mut traces: Vec<Vec<Letter>> = state
                        .traces()
                        .iter()
                        .enumerate()
                        .filter(|(k, _)| *k != kappa)
                        .map(|(_, w)| w.letters().to_vec())
                        .collect();
                    traces.extend(pieces);
                    add(
                        TraceTuple::from_raw_words(traces, state.times().to_vec()),
                        coeff,
                    );
                }
            }
        }
    }
    row.retain(|(_, c)| !c.is_zero());
    row
}

/// The two traces (outer, inner) produced by contracting the noises of
/// positions `p < q`, one pair per value of the summed index.
fn contract(letters: &[Letter], p: usize, q: usize, n: usize) -> Vec<[Vec<Letter>; 2]> {
    let (lp, lq) = (letters[p], letters[q]);
    let gap = |pos: usize, l: Letter| if l.star { pos + 1 } else { pos };
    let (gp, gq) = (gap(p, lp), gap(q, lq));
    let rows: Vec<(usize, usize)> = if lp.star == lq.star {
        vec![(lq.i, lp.i)]
    } else if lp.i == lq.i {
        (1..=n).map(|t| (t, t)).collect()
    } else {
        Vec::new()
    };
    rows.into_iter()
        .map(|(row_p, row_q)| {
            let mut w = letters.to_vec();
            w[p].i = row_p;
            w[q].i = row_q;
            let inner = w[gp..gq].to_vec();
            let mut outer = w[gq..].to_vec();
            outer.extend_from_slice(&w[..gp]);
            [outer, inner]
        })
        .collect()
}

/// A closed set of trace-tuples together with its generator matrix.
#[derive(Clone, Debug)]
pub struct GeneratorSystem {
    pub n: usize,
    pub states: Vec<TraceTuple>,
    pub rows: Vec<Vec<(usize, Rational64)>>,
    pub generator: SparseSystem,
    /// Values at the lower time boundary; the counit (`Ψ_0 = I`) by default.
    pub initial: Vec<Complex64>,
}

impl GeneratorSystem {
    pub fn index_of(&self, tuple: &TraceTuple) -> Option<usize> {
        self.states.iter().position(|s| s == tuple)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Breadth-first closure of `seeds` under [`apply_generator`]. States keep
/// the order in which they were discovered.
pub fn build_closure(seeds: &[TraceTuple], n: usize, max_states: usize) -> Result<GeneratorSystem> {
    let seeds: Vec<TraceTuple> = seeds.iter().map(TraceTuple::canonicalize).collect();
    if let Some(first) = seeds.first() {
        if seeds.iter().any(|s| s.times() != first.times()) {
            return Err(Error::InvalidArgument(
                "closure seeds must share one time table".into(),
            ));
        }
    }
    for s in &seeds {
        s.validate(n)?;
    }
    let mut index: HashMap<TraceTuple, usize> = HashMap::new();
    let mut states: Vec<TraceTuple> = Vec::new();
    let mut rows: Vec<Vec<(usize, Rational64)>> = Vec::new();
    for seed in &seeds {
        if index.contains_key(seed) {
            continue;
        }
        let mut queue = VecDeque::new();
        index.insert(seed.clone(), states.len());
        states.push(seed.clone());
        queue.push_back(states.len() - 1);
        while let Some(cur) = queue.pop_front() {
            let row = apply_generator(&states[cur], n);
            let mut compact = Vec::with_capacity(row.len());
            for (target, c) in row {
                let idx = match index.get(&target) {
                    Some(&i) => i,
                    None => {
                        if states.len() >= max_states {
                            return Err(Error::StateExplosion {
                                seed: seed.to_string(),
                                limit: max_states,
                            });
                        }
                        let i = states.len();
                        index.insert(target.clone(), i);
                        states.push(target);
                        queue.push_back(i);
                        i
                    }
                };
                compact.push((idx, c));
            }
            if rows.len() <= cur {
                rows.resize(cur + 1, Vec::new());
            }
            rows[cur] = compact;
        }
    }
    rows.resize(states.len(), Vec::new());
    let entries = rows.iter().enumerate().flat_map(|(r, row)| {
        row.iter()
            .map(move |&(c, v)| (r, c, Complex64::new(v.to_f64().unwrap_or(f64::NAN), 0.0)))
    });
    let generator = SparseSystem::from_entries(states.len(), entries)?;
    let initial = states.iter().map(TraceTuple::counit_eval).collect();
    Ok(GeneratorSystem {
        n,
        states,
        rows,
        generator,
        initial,
    })
}

/// `d/dt φ_t(w)` at `t = 0`: the generator row paired with the counit.
pub fn derivative_at_zero(word: &TraceTuple, n: usize) -> Result<Rational64> {
    if word.times().len() > 1 {
        return Err(Error::InvalidArgument(
            "derivative at zero needs a single-time word".into(),
        ));
    }
    word.validate(n)?;
    Ok(apply_generator(&word.canonicalize(), n)
        .into_iter()
        .map(|(target, c)| c * Rational64::from_integer(target.counit()))
        .sum())
}

/// A tuple together with the block dimension it lives in.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentQuery {
    pub tuple: TraceTuple,
    pub n: usize,
}

impl MomentQuery {
    pub fn new(tuple: TraceTuple, n: usize) -> Result<Self> {
        tuple.validate(n)?;
        Ok(MomentQuery { tuple, n })
    }
}

/// Evaluator for free-limit moments with shared memo tables. Safe to share
/// across threads; concurrent inserts of the same key store the same value.
#[derive(Debug)]
pub struct FreeEngine {
    n: usize,
    max_states: usize,
    memo: DashMap<String, Complex64>,
    closures: DashMap<String, Arc<GeneratorSystem>>,
}

impl FreeEngine {
    pub fn new(n: usize) -> Self {
        Self::with_max_states(n, DEFAULT_MAX_STATES)
    }

    pub fn with_max_states(n: usize, max_states: usize) -> Self {
        FreeEngine {
            n,
            max_states,
            memo: DashMap::new(),
            closures: DashMap::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn closure(&self, seed: &TraceTuple) -> Result<Arc<GeneratorSystem>> {
        let key = seed.key();
        if let Some(sys) = self.closures.get(&key) {
            return Ok(Arc::clone(&sys));
        }
        let sys = Arc::new(build_closure(
            std::slice::from_ref(seed),
            self.n,
            self.max_states,
        )?);
        Ok(Arc::clone(self.closures.entry(key).or_insert(sys).value()))
    }

    /// `φ_t` of a single-time tuple; the tuple's own time stamp is replaced
    /// by `t`.
    pub fn solve_single_time(&self, tuple: &TraceTuple, t: f64) -> Result<Complex64> {
        tuple.validate(self.n)?;
        if tuple.times().len() > 1 {
            return Err(Error::InvalidArgument(format!(
                "{tuple} has {} distinct times; use evaluate",
                tuple.times().len()
            )));
        }
        if tuple.is_unit() {
            return Ok(Complex64::new(1.0, 0.0));
        }
        let seed = tuple.at_single_time(0.0)?;
        let sys = self.closure(&seed)?;
        let values = propagate(&sys.generator, &sys.initial, t, DEFAULT_RTOL)?;
        Ok(values[0])
    }

    /// Mixed moment of a possibly multi-time tuple, by recursion on the
    /// number of distinct times.
    pub fn evaluate(&self, tuple: &TraceTuple) -> Result<Complex64> {
        tuple.validate(self.n)?;
        self.eval_canonical(&tuple.canonicalize())
    }

    pub fn evaluate_multitime(&self, query: &MomentQuery) -> Result<Complex64> {
        if query.n != self.n {
            return Err(Error::InvalidArgument(format!(
                "query for n={} sent to an engine for n={}",
                query.n, self.n
            )));
        }
        self.evaluate(&query.tuple)
    }

    fn eval_canonical(&self, tuple: &TraceTuple) -> Result<Complex64> {
        if tuple.is_unit() {
            return Ok(Complex64::new(1.0, 0.0));
        }
        if tuple.traces().len() > 1 {
            let mut acc = Complex64::new(1.0, 0.0);
            for factor in tuple.factors() {
                acc *= self.eval_canonical(&factor)?;
            }
            return Ok(acc);
        }
        let key = tuple.key();
        if let Some(v) = self.memo.get(&key) {
            return Ok(*v);
        }
        let value = self.eval_single_trace(tuple)?;
        self.memo.entry(key).or_insert(value);
        Ok(value)
    }

    fn eval_single_trace(&self, tuple: &TraceTuple) -> Result<Complex64> {
        let times = tuple.times();
        let last = times.len() - 1;
        if last == 0 {
            let t = times[0].value();
            return if t == 0.0 {
                Ok(tuple.counit_eval())
            } else {
                self.solve_single_time(tuple, t)
            };
        }
        let span = times[last].value() - times[last - 1].value();
        let sys = self.closure(tuple)?;
        let initial = sys
            .states
            .iter()
            .map(|s| self.eval_canonical(&s.restamp(last, last - 1)))
            .collect::<Result<Vec<_>>>()?;
        let values = propagate(&sys.generator, &initial, span, DEFAULT_RTOL)?;
        Ok(values[0])
    }

    pub fn memo_len(&self) -> usize {
        self.memo.len()
    }
}
