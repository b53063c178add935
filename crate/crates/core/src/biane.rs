//! The n = 1 case: moments `E[tr(U^{k_1}) ... tr(U^{k_r})]` indexed by integer
//! partitions, for Brownian motion on U(d) at finite `d` and in the free limit.
//!
//! For a partition `(k_1, ..., k_r)` of `k` the generator row has
//! * `-(k_1 + ... + k_r)/2` on the diagonal,
//! * `-(k_κ - l)` on the partition with `k_κ` split into `{k_κ - l, l}`,
//!   for every part and every `1 <= l < k_κ`,
//! * at finite `d` only, `-k_κ k_λ / d²` on the partition with two parts
//!   `k_κ, k_λ` merged, for every unordered pair of parts.

use std::collections::HashMap;
use std::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::ode::{propagate, SparseSystem, DEFAULT_RTOL};

/// An integer partition with parts in non-increasing order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Partition(Vec<u32>);

impl Partition {
    pub fn new(mut parts: Vec<u32>) -> Result<Self> {
        if parts.is_empty() || parts.contains(&0) {
            return Err(Error::InvalidArgument(
                "a partition needs at least one part and all parts >= 1".into(),
            ));
        }
        parts.sort_unstable_by(|a, b| b.cmp(a));
        Ok(Partition(parts))
    }

    pub fn parts(&self) -> &[u32] {
        &self.0
    }

    pub fn weight(&self) -> u32 {
        self.0.iter().sum()
    }

    fn replaced(&self, drop: &[usize], add: &[u32]) -> Partition {
        let mut parts: Vec<u32> = self
            .0
            .iter()
            .enumerate()
            .filter(|(idx, _)| !drop.contains(idx))
            .map(|(_, &p)| p)
            .chain(add.iter().copied())
            .collect();
        parts.sort_unstable_by(|a, b| b.cmp(a));
        Partition(parts)
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(u32::to_string).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// All partitions of `k`, in lexicographically descending order.
pub fn enumerate_partitions(k: u32) -> Result<Vec<Partition>> {
    if k < 1 {
        return Err(Error::InvalidArgument(format!("k must be >= 1, got {k}")));
    }
    fn rec(rest: u32, max_part: u32, prefix: &mut Vec<u32>, out: &mut Vec<Partition>) {
        if rest == 0 {
            out.push(Partition(prefix.clone()));
            return;
        }
        for part in (1..=rest.min(max_part)).rev() {
            prefix.push(part);
            rec(rest - part, part, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(k, k, &mut Vec::new(), &mut out);
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Regime {
    Finite { d: u32 },
    Limit,
}

#[derive(Clone, Debug)]
pub struct PartitionSystem {
    pub k: u32,
    pub regime: Regime,
    pub states: Vec<Partition>,
    pub generator: SparseSystem,
    index: HashMap<Partition, usize>,
}

impl PartitionSystem {
    pub fn index_of(&self, p: &Partition) -> Option<usize> {
        self.index.get(p).copied()
    }

    /// Generator row of `p` as `(target, coefficient)` pairs.
    pub fn row(&self, p: &Partition) -> Vec<(Partition, f64)> {
        let Some(r) = self.index_of(p) else {
            return Vec::new();
        };
        self.generator
            .row(r)
            .iter()
            .map(|&(c, v)| (self.states[c].clone(), v.re))
            .collect()
    }
}

pub fn build_generator(k: u32, regime: Regime) -> Result<PartitionSystem> {
    if let Regime::Finite { d } = regime {
        if d < 1 {
            return Err(Error::InvalidArgument("d must be >= 1".into()));
        }
    }
    let states = enumerate_partitions(k)?;
    let index: HashMap<Partition, usize> = states
        .iter()
        .cloned()
        .enumerate()
        .map(|(i, p)| (p, i))
        .collect();
    let mut entries = Vec::new();
    let mut push = |row: usize, target: &Partition, coeff: f64| {
        entries.push((row, index[target], Complex64::new(coeff, 0.0)));
    };
    for (row, p) in states.iter().enumerate() {
        let parts = p.parts();
        push(row, p, -f64::from(p.weight()) / 2.0);
        for (idx, &part) in parts.iter().enumerate() {
            for l in 1..part {
                let target = p.replaced(&[idx], &[part - l, l]);
                push(row, &target, -f64::from(part - l));
            }
        }
        if let Regime::Finite { d } = regime {
            let inv_d2 = 1.0 / f64::from(d).powi(2);
            for a in 0..parts.len() {
                for b in a + 1..parts.len() {
                    let target = p.replaced(&[a, b], &[parts[a] + parts[b]]);
                    push(row, &target, -inv_d2 * f64::from(parts[a] * parts[b]));
                }
            }
        }
    }
    let generator = SparseSystem::from_entries(states.len(), entries)?;
    Ok(PartitionSystem {
        k,
        regime,
        states,
        generator,
        index,
    })
}

/// Moments of every partition of `k` at time `t`, starting from `U_0 = I`
/// (all moments equal to 1).
pub fn solve_moments(k: u32, t: f64, regime: Regime) -> Result<Vec<(Partition, Complex64)>> {
    let system = build_generator(k, regime)?;
    solve_system(&system, t)
}

pub fn solve_system(system: &PartitionSystem, t: f64) -> Result<Vec<(Partition, Complex64)>> {
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!("t must be >= 0, got {t}")));
    }
    let v0 = vec![Complex64::new(1.0, 0.0); system.states.len()];
    let values = propagate(&system.generator, &v0, t, DEFAULT_RTOL)?;
    Ok(system.states.iter().cloned().zip(values).collect())
}

/// Moment of a single partition.
pub fn moment(p: &Partition, t: f64, regime: Regime) -> Result<Complex64> {
    let system = build_generator(p.weight(), regime)?;
    let idx = system.index_of(p).expect("partition of its own weight");
    Ok(solve_system(&system, t)?[idx].1)
}

/// Exact value at d = 1, where `U_t = exp(i B_t)` with `Var B_t = t`:
/// `E[U^m] = exp(-m² t / 2)` with `m` the partition weight.
pub fn d1_oracle(p: &Partition, t: f64) -> Complex64 {
    let m = f64::from(p.weight());
    Complex64::new((-m * m * t / 2.0).exp(), 0.0)
}
