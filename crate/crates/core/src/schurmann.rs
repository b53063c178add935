//! The gaussian Schürmann triple `(π, η, L)` on U⟨n⟩ with `D = M_n(C)`.
//!
//! `π(a) = δ(a)·Id`, `η(u_jk) = E_jk/√n`, `η(u_jk*) = -E_kj/√n` and
//! `L(u_jk) = L(u_jk*) = -δ_jk/2`, extended to words by the cocycle and
//! coboundary rules
//!
//! ```text
//! η(ab) = δ(a)η(b) + η(a)δ(b)
//! L(ab) = δ(a)L(b) + L(a)δ(b) + ⟨η(a*), η(b)⟩,   ⟨A, B⟩ = Tr(A†B)
//! ```
//!
//! with `L(1) = 0`. Every value is rational: vectors are stored as integer
//! matrices `M` with `η = M/√n`, so `⟨η_a, η_b⟩ = Σ M_a M_b / n`.

use std::fmt;

use dashmap::DashMap;
use num_rational::Rational64;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::free_engine::derivative_at_zero;
use crate::words::{Letter, TraceTuple};

/// `η` of a word, as `M/√n` with `M` stored row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SchurmannVector {
    n: usize,
    scaled: Vec<i64>,
}

impl SchurmannVector {
    pub fn zero(n: usize) -> Self {
        SchurmannVector {
            n,
            scaled: vec![0; n * n],
        }
    }

    /// `c·E_ij/√n`.
    fn unit(n: usize, i: usize, j: usize, c: i64) -> Self {
        let mut v = Self::zero(n);
        v.scaled[(i - 1) * n + (j - 1)] = c;
        v
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_zero(&self) -> bool {
        self.scaled.iter().all(|&x| x == 0)
    }

    /// Entry `(i, j)` (1-based) times `√n`.
    pub fn scaled_entry(&self, i: usize, j: usize) -> i64 {
        self.scaled[(i - 1) * self.n + (j - 1)]
    }

    /// The matrix entries as floats.
    pub fn to_matrix(&self) -> Vec<Vec<f64>> {
        let s = (self.n as f64).sqrt();
        self.scaled
            .chunks(self.n)
            .map(|row| row.iter().map(|&x| x as f64 / s).collect())
            .collect()
    }

    /// `⟨self, other⟩ = Tr(self† other)`; all entries are real.
    pub fn inner(&self, other: &SchurmannVector) -> Rational64 {
        let dot: i64 = self
            .scaled
            .iter()
            .zip(&other.scaled)
            .map(|(a, b)| a * b)
            .sum();
        Rational64::new(dot, self.n as i64)
    }

    fn add_scaled(&mut self, other: &SchurmannVector, c: i64) {
        for (a, b) in self.scaled.iter_mut().zip(&other.scaled) {
            *a += c * b;
        }
    }
}

/// Product of letter counits.
pub fn counit(word: &[Letter]) -> i64 {
    word.iter().map(|l| l.counit()).product()
}

/// `w*`: reversed word of adjoint letters.
pub fn adjoint(word: &[Letter]) -> Vec<Letter> {
    word.iter().rev().map(|l| l.adjoint()).collect()
}

pub fn format_word(word: &[Letter]) -> String {
    if word.is_empty() {
        return "1".into();
    }
    word.iter()
        .map(|l| format!("u{}{}{}", l.i, l.j, if l.star { "*" } else { "" }))
        .collect::<Vec<_>>()
        .join(" ")
}

fn check_word(word: &[Letter], n: usize) -> Result<()> {
    for l in word {
        for idx in [l.i, l.j] {
            if idx == 0 || idx > n {
                return Err(Error::IndexOutOfRange { index: idx, n });
            }
        }
    }
    Ok(())
}

/// Cocycle `η` on a word. The empty word maps to 0.
pub fn eta(word: &[Letter], n: usize) -> Result<SchurmannVector> {
    check_word(word, n)?;
    let mut out = SchurmannVector::zero(n);
    for (p, l) in word.iter().enumerate() {
        let others: i64 = word
            .iter()
            .enumerate()
            .filter(|(q, _)| *q != p)
            .map(|(_, x)| x.counit())
            .product();
        if others == 0 {
            continue;
        }
        let base = if l.star {
            SchurmannVector::unit(n, l.j, l.i, -1)
        } else {
            SchurmannVector::unit(n, l.i, l.j, 1)
        };
        out.add_scaled(&base, others);
    }
    Ok(out)
}

/// Generator `L` with a shared memo table.
#[derive(Debug)]
pub struct Schurmann {
    n: usize,
    memo: DashMap<Vec<Letter>, Rational64>,
}

impl Schurmann {
    pub fn new(n: usize) -> Self {
        Schurmann {
            n,
            memo: DashMap::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn ell(&self, word: &[Letter]) -> Result<Rational64> {
        check_word(word, self.n)?;
        let word: Vec<Letter> = word.iter().map(|l| l.at(0)).collect();
        Ok(self.ell_unchecked(&word))
    }

    fn ell_unchecked(&self, word: &[Letter]) -> Rational64 {
        match word {
            [] => Rational64::zero(),
            [l] => Rational64::new(-l.counit(), 2),
            [a, rest @ ..] => {
                if let Some(v) = self.memo.get(word) {
                    return *v;
                }
                let a_word = std::slice::from_ref(a);
                let eta_a_star = eta(&[a.adjoint()], self.n).expect("checked");
                let eta_b = eta(rest, self.n).expect("checked");
                let value = Rational64::from_integer(a.counit()) * self.ell_unchecked(rest)
                    + self.ell_unchecked(a_word) * Rational64::from_integer(counit(rest))
                    + eta_a_star.inner(&eta_b);
                *self.memo.entry(word.to_vec()).or_insert(value)
            }
        }
    }

    /// `L` extended linearly.
    pub fn ell_combination(&self, c: &Combination) -> Result<Rational64> {
        c.terms
            .iter()
            .map(|(coeff, w)| Ok(*coeff * self.ell(w)?))
            .sum()
    }
}

/// A formal linear combination of words; the empty word is the unit.
#[derive(Clone, Debug, PartialEq)]
pub struct Combination {
    pub terms: Vec<(Rational64, Vec<Letter>)>,
}

impl Combination {
    pub fn word(w: Vec<Letter>) -> Self {
        Combination {
            terms: vec![(Rational64::one(), w)],
        }
    }

    pub fn product(&self, other: &Combination) -> Combination {
        let mut terms = Vec::with_capacity(self.terms.len() * other.terms.len());
        for (ca, wa) in &self.terms {
            for (cb, wb) in &other.terms {
                let mut w = wa.clone();
                w.extend_from_slice(wb);
                terms.push((ca * cb, w));
            }
        }
        Combination { terms }
    }

    pub fn counit(&self) -> Rational64 {
        self.terms
            .iter()
            .map(|(c, w)| c * Rational64::from_integer(counit(w)))
            .sum()
    }

    /// Total word length of the leading term.
    fn degree(&self) -> usize {
        self.terms.iter().map(|(_, w)| w.len()).max().unwrap_or(0)
    }
}

impl fmt::Display for Combination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, (c, w)) in self.terms.iter().enumerate() {
            let (sign, mag) = if *c < Rational64::zero() {
                ("-", -c)
            } else {
                ("+", *c)
            };
            if k > 0 {
                write!(f, " {sign} ")?;
            } else if sign == "-" {
                f.write_str("-")?;
            }
            if mag != Rational64::one() || w.is_empty() {
                write!(f, "{mag}")?;
                if !w.is_empty() {
                    f.write_str("·")?;
                }
            }
            if !w.is_empty() {
                f.write_str(&format_word(w))?;
            }
        }
        Ok(())
    }
}

/// `u_ij - δ_ij·1` and `u_ij* - δ_ij·1`, which span the counit kernel as an
/// algebra.
pub fn kernel_generators(n: usize) -> Vec<Combination> {
    let mut out = Vec::with_capacity(2 * n * n);
    for star in [false, true] {
        for i in 1..=n {
            for j in 1..=n {
                let l = Letter::new(i, j, star);
                let mut terms = vec![(Rational64::one(), vec![l])];
                if i == j {
                    terms.push((-Rational64::one(), Vec::new()));
                }
                out.push(Combination { terms });
            }
        }
    }
    out
}

/// Products of kernel generators with 1..=`len` factors.
fn kernel_products(n: usize, len: usize) -> Vec<Combination> {
    let gens = kernel_generators(n);
    let mut layer = gens.clone();
    let mut out = layer.clone();
    for _ in 1..len {
        layer = layer
            .iter()
            .flat_map(|a| gens.iter().map(move |g| a.product(g)))
            .collect();
        out.extend(layer.iter().cloned());
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub a: String,
    pub b: String,
    pub c: String,
    pub value: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianityReport {
    pub n: usize,
    pub max_len: usize,
    pub triples_checked: usize,
    pub violations: Vec<Violation>,
}

/// Checks `L(abc) = 0` for all `a, b, c` that are products of kernel
/// generators with at most `max_len` generators in total.
pub fn gaussianity_check(n: usize, max_len: usize) -> Result<GaussianityReport> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be >= 1".into()));
    }
    if max_len < 3 {
        return Err(Error::InvalidArgument(format!(
            "max_len must be >= 3, got {max_len}"
        )));
    }
    let s = Schurmann::new(n);
    let pool = kernel_products(n, max_len - 2);
    let mut triples = 0;
    let mut violations = Vec::new();
    for a in &pool {
        for b in &pool {
            if a.degree() + b.degree() + 1 > max_len {
                continue;
            }
            let ab = a.product(b);
            for c in &pool {
                if ab.degree() + c.degree() > max_len {
                    continue;
                }
                triples += 1;
                let value = s.ell_combination(&ab.product(c))?;
                if !value.is_zero() {
                    violations.push(Violation {
                        a: a.to_string(),
                        b: b.to_string(),
                        c: c.to_string(),
                        value: value.to_string(),
                    });
                }
            }
        }
    }
    Ok(GaussianityReport {
        n,
        max_len,
        triples_checked: triples,
        violations,
    })
}

/// `η(ab) - δ(a)η(b) - η(a)δ(b)`; zero for every split.
pub fn cocycle_defect(a: &[Letter], b: &[Letter], n: usize) -> Result<SchurmannVector> {
    let mut ab = a.to_vec();
    ab.extend_from_slice(b);
    let mut out = eta(&ab, n)?;
    out.add_scaled(&eta(b, n)?, -counit(a));
    out.add_scaled(&eta(a, n)?, -counit(b));
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Crosscheck {
    pub ell: Rational64,
    pub ode: Rational64,
    pub difference: Rational64,
}

/// Compares `L(w)` with `d/dt φ_t(tr w)` at `t = 0` from the free engine.
pub fn generator_crosscheck(word: &[Letter], n: usize) -> Result<Crosscheck> {
    if word.is_empty() || word.len() > 4 {
        return Err(Error::InvalidArgument(format!(
            "crosscheck needs a word of length 1..=4, got {}",
            word.len()
        )));
    }
    let ell = Schurmann::new(n).ell(word)?;
    let tuple = TraceTuple::single_time(vec![word.iter().map(|l| l.at(0)).collect()], 0.0)?;
    let ode = derivative_at_zero(&tuple, n)?;
    Ok(Crosscheck {
        ell,
        ode,
        difference: ell - ode,
    })
}

/// Every word of length 1..=`max_len` over the `2n²` letters.
pub fn all_words(n: usize, max_len: usize) -> Vec<Vec<Letter>> {
    let letters: Vec<Letter> = [false, true]
        .into_iter()
        .flat_map(|s| (1..=n).flat_map(move |i| (1..=n).map(move |j| Letter::new(i, j, s))))
        .collect();
    let mut layer: Vec<Vec<Letter>> = vec![Vec::new()];
    let mut out = Vec::new();
    for _ in 0..max_len {
        layer = layer
            .iter()
            .flat_map(|w| {
                letters.iter().map(move |l| {
                    let mut w = w.clone();
                    w.push(*l);
                    w
                })
            })
            .collect();
        out.extend(layer.iter().cloned());
    }
    out
}

/// `L` on every generator letter.
pub fn base_values(n: usize) -> Vec<(Letter, Rational64)> {
    let s = Schurmann::new(n);
    all_words(n, 1)
        .into_iter()
        .map(|w| {
            let v = s.ell_unchecked(&w);
            (w[0], v)
        })
        .collect()
}
