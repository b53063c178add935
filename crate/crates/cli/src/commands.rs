use std::fmt::Write as _;

use num_complex::Complex64;
use serde_json::{json, Value};
use ubm_core::biane::{enumerate_partitions, moment, Partition, Regime};
use ubm_core::schurmann::{
    all_words, base_values, format_word, gaussianity_check, generator_crosscheck,
};
use ubm_core::sim::{
    convergence_scan, estimate_functionals, EstimateRecord, Functional, SimConfig,
};
use ubm_core::words::parse_word_at;
use ubm_core::FreeEngine;

use crate::settings::Settings;

/// Text written to the output plus a summary recorded in the manifest.
pub struct Output {
    pub text: String,
    pub summary: Value,
}

/// Shortest round-trip decimal, switching to exponent form for very small
/// or large magnitudes.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-4..1e15).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// Parses `w_1 + w_2 + ...`; unstamped letters get time `t`.
pub fn parse_functional(text: &str, n: usize, t: f64) -> Result<Functional, String> {
    let mut tuples = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (k, c) in text.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            '+' if depth == 0 => {
                tuples.push(parse_word_at(&text[start..k], n, t).map_err(err)?);
                start = k + 1;
            }
            _ => {}
        }
    }
    tuples.push(parse_word_at(&text[start..], n, t).map_err(err)?);
    Ok(Functional::sum(tuples))
}

/// Evaluation times: the word's own stamps when it carries any, else the
/// requested list.
fn eval_times(word: &str, settings: &mut Settings) -> Result<Vec<Option<f64>>, String> {
    if word.contains('@') {
        Ok(vec![None])
    } else {
        Ok(settings.times()?.into_iter().map(Some).collect())
    }
}

fn latest(f: &Functional) -> f64 {
    f.terms
        .iter()
        .flat_map(|(_, t)| t.times().iter().map(|x| x.value()))
        .fold(0.0, f64::max)
}

pub fn partitions(k: u32) -> Result<Output, String> {
    let parts = enumerate_partitions(k).map_err(err)?;
    let mut text = String::new();
    for p in &parts {
        writeln!(text, "{p}").unwrap();
    }
    eprintln!("{} partitions", parts.len());
    Ok(Output {
        text,
        summary: json!({ "k": k, "count": parts.len() }),
    })
}

pub fn moments(s: &mut Settings) -> Result<Output, String> {
    let word = s.word()?;
    let n: usize = s.get_or("n", 1)?;
    let mode = s.get_or("mode", "free".to_string())?;
    let times = eval_times(&word, s)?;
    let mut text = String::from("time,re,im\n");
    match mode.as_str() {
        "free" => {
            let engine = FreeEngine::new(n);
            for t in times {
                let f = parse_functional(&word, n, t.unwrap_or(0.0))?;
                let v = f.free_value(&engine).map_err(err)?;
                writeln!(text, "{},{},{}", num(latest(&f)), num(v.re), num(v.im)).unwrap();
            }
        }
        "biane-finite" => {
            if n != 1 {
                return Err("biane-finite mode needs --n 1".into());
            }
            let d: u32 = s.require("d")?;
            for t in times {
                let f = parse_functional(&word, 1, t.unwrap_or(0.0))?;
                let mut v = Complex64::new(0.0, 0.0);
                for (c, tuple) in &f.terms {
                    if tuple.times().len() > 1 || tuple.letters().any(|l| l.star) {
                        return Err(format!(
                            "biane-finite mode takes single-time words in u11 only, got {tuple}"
                        ));
                    }
                    let parts: Vec<u32> = tuple.traces().iter().map(|w| w.len() as u32).collect();
                    v += c * if parts.is_empty() {
                        Complex64::new(1.0, 0.0)
                    } else {
                        let p = Partition::new(parts).map_err(err)?;
                        moment(&p, latest(&f), Regime::Finite { d }).map_err(err)?
                    };
                }
                writeln!(text, "{},{},{}", num(latest(&f)), num(v.re), num(v.im)).unwrap();
            }
        }
        other => {
            return Err(format!(
                "unknown moments mode '{other}' (free, biane-finite)"
            ))
        }
    }
    Ok(Output {
        text,
        summary: Value::Null,
    })
}

fn sim_config(s: &mut Settings, n: usize) -> Result<SimConfig, String> {
    let threads = s.list::<usize>("threads")?.and_then(|v| v.first().copied());
    Ok(SimConfig {
        n,
        d: s.get_or("d", 1)?,
        dt: s.get_or("dt", 0.05)?,
        paths: s.get_or("paths", 10_000)?,
        seed: s.get_or("seed", 0)?,
        scheme: s.scheme()?,
        threads,
    })
}

pub fn simulate(s: &mut Settings) -> Result<Output, String> {
    let word = s.word()?;
    let n: usize = s.get_or("n", 1)?;
    let times = eval_times(&word, s)?;
    let config = sim_config(s, n)?;
    let funcs = times
        .iter()
        .map(|t| parse_functional(&word, n, t.unwrap_or(0.0)))
        .collect::<Result<Vec<_>, _>>()?;
    let estimates = estimate_functionals(&funcs, &config).map_err(err)?;
    let mut text = String::new();
    for (f, e) in funcs.iter().zip(&estimates) {
        let record = EstimateRecord::new(f, &config, e);
        writeln!(text, "{}", serde_json::to_string(&record).map_err(err)?).unwrap();
    }
    Ok(Output {
        text,
        summary: Value::Null,
    })
}

pub fn compare(s: &mut Settings) -> Result<Output, String> {
    let word = s.word()?;
    let n: usize = s.get_or("n", 1)?;
    let t: f64 = s.get_or("t", 1.0)?;
    let d_list: Vec<usize> = s
        .list("d-list")?
        .ok_or_else(|| "--d-list is required".to_string())?;
    let func = parse_functional(&word, n, t)?;
    let base = sim_config(s, n)?;
    let scan = convergence_scan(&func, &d_list, &base).map_err(err)?;
    let mut text = String::from("d,mc_mean_re,mc_mean_im,stderr,free_re,free_im,bias\n");
    for r in &scan.rows {
        writeln!(
            text,
            "{},{},{},{},{},{},{}",
            r.d,
            num(r.mc_mean_re),
            num(r.mc_mean_im),
            num(r.stderr),
            num(r.free_re),
            num(r.free_im),
            num(r.bias)
        )
        .unwrap();
    }
    match scan.slope {
        Some(slope) => eprintln!("fitted slope: {slope}"),
        None => eprintln!("fitted slope: unavailable (fewer than two biases above 3 stderr)"),
    }
    Ok(Output {
        text,
        summary: json!({ "slope": scan.slope }),
    })
}

pub fn schurmann(s: &mut Settings) -> Result<Output, String> {
    let n: usize = s.get_or("n", 2)?;
    let mode = s.get_or("mode", "gaussianity".to_string())?;
    let value = match mode.as_str() {
        "base" => {
            let values: Vec<Value> = base_values(n)
                .into_iter()
                .map(|(l, v)| json!({ "letter": format_word(&[l]), "ell": v.to_string() }))
                .collect();
            json!({ "n": n, "values": values })
        }
        "gaussianity" => {
            let max_len = s.get_or("max-len", 3)?;
            serde_json::to_value(gaussianity_check(n, max_len).map_err(err)?).map_err(err)?
        }
        "crosscheck" => {
            let max_len: usize = s.get_or("max-len", 3)?;
            if max_len > 4 {
                return Err("crosscheck covers words of length at most 4".into());
            }
            let words = all_words(n, max_len);
            let mut max_abs = num_rational::Rational64::from_integer(0);
            let mut mismatches = Vec::new();
            for w in &words {
                let c = generator_crosscheck(w, n).map_err(err)?;
                let diff = if c.difference < 0.into() {
                    -c.difference
                } else {
                    c.difference
                };
                max_abs = max_abs.max(diff);
                if diff != 0.into() {
                    mismatches.push(json!({
                        "word": format_word(w),
                        "ell": c.ell.to_string(),
                        "ode": c.ode.to_string(),
                    }));
                }
            }
            json!({
                "n": n,
                "max_len": max_len,
                "words_checked": words.len(),
                "max_abs_difference": max_abs.to_string(),
                "mismatches": mismatches,
            })
        }
        other => {
            return Err(format!(
                "unknown schurmann check '{other}' (base, gaussianity, crosscheck)"
            ))
        }
    };
    let mut text = serde_json::to_string(&value).map_err(err)?;
    text.push('\n');
    Ok(Output {
        text,
        summary: Value::Null,
    })
}
