//! Exhaustive Max-Cut and Min-Bisection for small graphs.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::RegularGraph;
use crate::rounding::CutResult;
use crate::Mode;

pub const MAX_BRUTE_FORCE_N: usize = 24;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExactCut {
    /// `max −U` for max-cut, `max U` over balanced `σ` for min-bisection.
    pub value: f64,
    pub witness: Vec<i8>,
    pub mode: Mode,
}

/// Number of edges whose endpoints agree under the bit assignment `bits`
/// (bit `i` set means `σ_i = −1`).
fn agreements(g: &RegularGraph, bits: u32) -> i64 {
    g.edges()
        .filter(|&(i, j)| ((bits >> i) ^ (bits >> j)) & 1 == 0)
        .count() as i64
}

/// Lexicographic order on `σ` with `−1 < +1`: a set bit earlier wins.
fn lex_less(a: u32, b: u32, n: usize) -> bool {
    for i in 0..n {
        let (x, y) = ((a >> i) & 1, (b >> i) & 1);
        if x != y {
            return x > y;
        }
    }
    false
}

fn to_sigma(bits: u32, n: usize) -> Vec<i8> {
    (0..n).map(|i| if (bits >> i) & 1 == 1 { -1 } else { 1 }).collect()
}

/// Picks the better of two `(agreements, bits)` candidates: fewer agreements
/// for max-cut, more for min-bisection, then the lexicographically smaller `σ`.
fn better(a: (i64, u32), b: (i64, u32), maximize: bool, n: usize) -> (i64, u32) {
    let a_wins = if a.0 != b.0 { (a.0 > b.0) == maximize } else { lex_less(a.1, b.1, n) };
    if a_wins {
        a
    } else {
        b
    }
}

/// Exact optimum by enumeration, with `σ_0 = +1` fixed by symmetry.
pub fn brute_force(g: &RegularGraph, mode: Mode) -> Result<ExactCut> {
    let n = g.n();
    if n > MAX_BRUTE_FORCE_N {
        return Err(Error::Resource(format!("brute force is limited to n <= {MAX_BRUTE_FORCE_N}, got {n}")));
    }
    let m = g.num_edges() as i64;
    let (agree, bits) = match mode {
        Mode::MaxCut => max_cut_search(g),
        Mode::MinBis => {
            if n % 2 == 1 {
                return Err(Error::param("min-bisection needs even n"));
            }
            min_bis_search(g)
        }
    };
    let u = (2 * agree - m) as f64 / n as f64;
    let value = match mode {
        Mode::MaxCut => -u,
        Mode::MinBis => u,
    };
    Ok(ExactCut { value, witness: to_sigma(bits, n), mode })
}

/// Gray-code walk over vertices `1..n`, split by the top bits across workers.
fn max_cut_search(g: &RegularGraph) -> (i64, u32) {
    let n = g.n();
    let free = n - 1;
    let prefix_bits = free.min(6);
    let low = free - prefix_bits;
    (0u32..1 << prefix_bits)
        .into_par_iter()
        .map(|p| {
            let start = p << (low + 1);
            let mut bits = start;
            let mut agree = agreements(g, bits);
            let mut best = (agree, bits);
            for step in 1u32..1 << low {
                let v = step.trailing_zeros() as usize + 1;
                let sv = (bits >> v) & 1;
                for &j in g.neighbors(v) {
                    if (bits >> j) & 1 == sv {
                        agree -= 1;
                    } else {
                        agree += 1;
                    }
                }
                bits ^= 1 << v;
                best = better((agree, bits), best, false, n);
            }
            best
        })
        .reduce_with(|a, b| better(a, b, false, n))
        .unwrap()
}

/// All `σ` with `σ_0 = +1` and exactly `n/2` minus signs among vertices `1..n`.
fn min_bis_search(g: &RegularGraph) -> (i64, u32) {
    let n = g.n();
    let half = n / 2;
    let free = (n - 1) as u32;
    // Partition by the lowest set bit's position to parallelize Gosper's walk.
    (0..free)
        .into_par_iter()
        .filter_map(|lowest| {
            let rest = half as u32 - 1;
            if lowest + 1 + rest > free {
                return None;
            }
            let mut best: Option<(i64, u32)> = None;
            let span = free - lowest - 1;
            let mut c: u32 = if rest == 0 { 0 } else { (1u32 << rest) - 1 };
            loop {
                let bits = ((c << (lowest + 1)) | (1 << lowest)) << 1;
                let cand = (agreements(g, bits), bits);
                best = Some(match best {
                    None => cand,
                    Some(b) => better(cand, b, true, n),
                });
                if rest == 0 {
                    break;
                }
                // Gosper's hack: next integer with the same popcount.
                let u = c & c.wrapping_neg();
                let v = c + u;
                c = v + (((v ^ c) / u) >> 2);
                if c >= 1 << span {
                    break;
                }
            }
            best
        })
        .reduce_with(|a, b| better(a, b, true, n))
        .unwrap()
}

/// Fails hard if `cut` beats the exact optimum, which can only mean a bug in
/// objective accounting.
pub fn sanity_bound(g: &RegularGraph, cut: &CutResult, mode: Mode) -> Result<()> {
    let exact = brute_force(g, mode)?;
    sanity_bound_exact(&exact, cut)
}

pub fn sanity_bound_exact(exact: &ExactCut, cut: &CutResult) -> Result<()> {
    let achieved = match exact.mode {
        Mode::MaxCut => -cut.u_value,
        Mode::MinBis => {
            if cut.balance != 0 {
                return Err(Error::param("min-bisection cut is not balanced"));
            }
            cut.u_value
        }
    };
    if achieved > exact.value + 1e-12 {
        return Err(Error::Numeric(format!(
            "{} objective {achieved} exceeds the exact optimum {}",
            exact.mode, exact.value
        )));
    }
    Ok(())
}
