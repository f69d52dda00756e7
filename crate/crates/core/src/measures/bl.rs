//! Dual bounded-Lipschitz distance between empirical measures.
//!
//! `‖μ − ν‖*_BL = sup { Σ c_i f_i : |f_i| ≤ u, |f_i − f_j| ≤ l d_ij, u + l ≤ 1 }`
//! over test-function values on the union support, with `c` the signed
//! masses. A function on a finite set extends with the same bound and
//! Lipschitz constant, so the finite program is exact. With `g_i = f_i + u`
//! every constraint reads `A x ≤ b` with `b ≥ 0`, so the origin is a feasible
//! starting vertex.
//!
//! On the line only adjacent pairs are needed. In higher dimension the pair
//! constraints are generated lazily, starting from a nearest-neighbour graph.

use std::cmp::Ordering;

use super::{dist, EmpiricalMeasure};
use crate::error::{Error, Result};

/// Default cap on the merged support size.
pub const BL_DEFAULT_CAP: usize = 400;

const PIVOT_EPS: f64 = 1e-12;
const PERTURBATION: f64 = 1e-9;
const ALL_PAIRS_LIMIT: usize = 4000;
const NEIGHBOURS: usize = 8;

pub fn bl_distance(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<f64> {
    bl_distance_with(mu, nu, BL_DEFAULT_CAP)
}

pub fn bl_distance_with(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, cap: usize) -> Result<f64> {
    if mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch { expected: mu.dim(), got: nu.dim() });
    }
    let dim = mu.dim();
    let (points, c) = signed_support(mu, nu);
    let n = c.len();
    if n > cap {
        return Err(Error::CapExceeded { size: n, cap });
    }
    if n == 0 {
        return Ok(0.0);
    }
    let pt = |i: usize| &points[i * dim..(i + 1) * dim];

    let mut pairs: Vec<(usize, usize)> = if dim == 1 {
        // signed_support sorts lexicographically, so neighbours are adjacent
        (1..n).map(|i| (i - 1, i)).collect()
    } else if n * (n - 1) / 2 <= ALL_PAIRS_LIMIT {
        (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect()
    } else {
        nearest_neighbour_pairs(n, &pt)
    };
    let complete = dim == 1 || n * (n - 1) / 2 <= ALL_PAIRS_LIMIT;

    for _ in 0..100 {
        let sol = solve(&c, &pairs, &pt)?;
        if complete {
            return Ok(sol.value.max(0.0));
        }
        let added = add_violated(&sol, n, &pt, &mut pairs);
        if added == 0 {
            return Ok(sol.value.max(0.0));
        }
    }
    Err(Error::Simplex("constraint generation did not settle".into()))
}

/// Union support with signed weights `μ − ν`, sorted lexicographically,
/// bitwise-equal points merged and zero entries dropped.
fn signed_support(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> (Vec<f64>, Vec<f64>) {
    let dim = mu.dim();
    let mut entries: Vec<(&[f64], f64)> = mu.iter().chain(nu.iter().map(|(x, w)| (x, -w))).collect();
    let lex = |a: &[f64], b: &[f64]| {
        a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| *o != Ordering::Equal).unwrap_or(Ordering::Equal)
    };
    entries.sort_by(|a, b| lex(a.0, b.0));
    let mut points = Vec::new();
    let mut c: Vec<f64> = Vec::new();
    let mut i = 0;
    while i < entries.len() {
        let mut j = i;
        let mut plus = 0.0;
        let mut minus = 0.0;
        while j < entries.len() && lex(entries[i].0, entries[j].0) == Ordering::Equal {
            if entries[j].1 > 0.0 {
                plus += entries[j].1;
            } else {
                minus -= entries[j].1;
            }
            j += 1;
        }
        let w = plus - minus;
        if w != 0.0 {
            points.extend_from_slice(entries[i].0);
            c.push(w);
        }
        i = j;
    }
    debug_assert_eq!(points.len(), c.len() * dim);
    (points, c)
}

fn nearest_neighbour_pairs<'a>(n: usize, pt: &impl Fn(usize) -> &'a [f64]) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for i in 0..n {
        let mut d: Vec<(f64, usize)> = (0..n).filter(|&j| j != i).map(|j| (dist(pt(i), pt(j)), j)).collect();
        d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, j) in d.iter().take(NEIGHBOURS) {
            pairs.push((i.min(j), i.max(j)));
        }
    }
    pairs.sort_unstable();
    pairs.dedup();
    pairs
}

fn add_violated<'a>(
    sol: &Solution,
    n: usize,
    pt: &impl Fn(usize) -> &'a [f64],
    pairs: &mut Vec<(usize, usize)>,
) -> usize {
    let before = pairs.len();
    for i in 0..n {
        let mut worst = (1e-10, usize::MAX);
        for j in 0..n {
            if j == i {
                continue;
            }
            let gap = (sol.g[i] - sol.g[j]).abs() - sol.l * dist(pt(i), pt(j));
            if gap > worst.0 {
                worst = (gap, j);
            }
        }
        if worst.1 != usize::MAX {
            pairs.push((i.min(worst.1), i.max(worst.1)));
        }
    }
    pairs.sort_unstable();
    pairs.dedup();
    pairs.len() - before
}

struct Solution {
    value: f64,
    g: Vec<f64>,
    l: f64,
}

fn solve<'a>(c: &[f64], pairs: &[(usize, usize)], pt: &impl Fn(usize) -> &'a [f64]) -> Result<Solution> {
    let n = c.len();
    let (iu, il) = (n, n + 1);
    let nv = n + 2;
    let m = n + 2 * pairs.len() + 1;
    let mut lp = Tableau::new(m, nv);
    for i in 0..n {
        lp.set(i, i, 1.0);
        lp.set(i, iu, -2.0);
    }
    for (k, &(i, j)) in pairs.iter().enumerate() {
        let d = dist(pt(i), pt(j));
        let r = n + 2 * k;
        lp.set(r, i, 1.0);
        lp.set(r, j, -1.0);
        lp.set(r, il, -d);
        lp.set(r + 1, j, 1.0);
        lp.set(r + 1, i, -1.0);
        lp.set(r + 1, il, -d);
    }
    lp.set(m - 1, iu, 1.0);
    lp.set(m - 1, il, 1.0);
    lp.set_rhs(m - 1, 1.0);
    let total: f64 = c.iter().sum();
    for (j, &cj) in c.iter().enumerate() {
        lp.set_cost(j, cj);
    }
    lp.set_cost(iu, -total);
    let value = lp.maximize()?;
    let x = lp.primal();
    let u = x[iu];
    Ok(Solution { value, g: x[..n].iter().map(|g| g - u).collect(), l: x[il] })
}

/// Compact simplex tableau for `max cᵀx, Ax ≤ b, x ≥ 0` with `b ≥ 0`.
///
/// Row `m` holds the negated reduced costs. Column `nv` is a perturbed
/// right-hand side `b + ε` that drives the ratio test (the program is highly
/// degenerate at the origin and stalls otherwise); column `nv + 1` carries the
/// true `b` through the same pivots, so the final basis is evaluated exactly.
struct Tableau {
    m: usize,
    nv: usize,
    t: Vec<f64>,
    basic: Vec<usize>,
    nonbasic: Vec<usize>,
}

impl Tableau {
    fn new(m: usize, nv: usize) -> Self {
        let mut tab = Self {
            m,
            nv,
            t: vec![0.0; (m + 1) * (nv + 2)],
            basic: (nv..nv + m).collect(),
            nonbasic: (0..nv).collect(),
        };
        for i in 0..m {
            let k = tab.idx(i, nv);
            tab.t[k] = PERTURBATION * (1.0 + ((i + 1) as f64 * 0.618_033_988_749_895).fract());
        }
        tab
    }

    #[inline]
    fn width(&self) -> usize {
        self.nv + 2
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.width() + j
    }

    fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.t[k] = v;
    }

    fn set_rhs(&mut self, i: usize, v: f64) {
        let k = self.idx(i, self.nv);
        self.t[k] += v;
        self.t[k + 1] = v;
    }

    fn set_cost(&mut self, j: usize, c: f64) {
        let k = self.idx(self.m, j);
        self.t[k] = -c;
    }

    fn entering(&self, bland: bool) -> Option<usize> {
        let row = &self.t[self.idx(self.m, 0)..self.idx(self.m, self.nv)];
        let mut best: Option<usize> = None;
        for (j, &r) in row.iter().enumerate() {
            if r >= -PIVOT_EPS {
                continue;
            }
            best = match best {
                None => Some(j),
                Some(b) if bland && self.nonbasic[j] < self.nonbasic[b] => Some(j),
                Some(b) if !bland && r < row[b] => Some(j),
                keep => keep,
            };
        }
        best
    }

    fn leaving(&self, s: usize) -> Option<usize> {
        let mut best: Option<(f64, usize)> = None;
        for i in 0..self.m {
            let a = self.t[self.idx(i, s)];
            if a <= PIVOT_EPS {
                continue;
            }
            let ratio = self.t[self.idx(i, self.nv)].max(0.0) / a;
            best = match best {
                None => Some((ratio, i)),
                Some((r, b)) if ratio < r || (ratio == r && self.basic[i] < self.basic[b]) => Some((ratio, i)),
                keep => keep,
            };
        }
        best.map(|(_, i)| i)
    }

    fn pivot(&mut self, r: usize, s: usize) {
        let w = self.width();
        let inv = 1.0 / self.t[r * w + s];
        for j in 0..w {
            self.t[r * w + j] *= inv;
        }
        self.t[r * w + s] = inv;
        let (head, rest) = self.t.split_at_mut(r * w);
        let (prow, tail) = rest.split_at_mut(w);
        let update = |row: &mut [f64]| {
            let f = row[s];
            if f != 0.0 {
                for (x, &y) in row.iter_mut().zip(prow.iter()) {
                    *x -= f * y;
                }
                row[s] = -f * inv;
            }
        };
        head.chunks_exact_mut(w).for_each(update);
        tail.chunks_exact_mut(w).for_each(update);
        std::mem::swap(&mut self.basic[r], &mut self.nonbasic[s]);
    }

    /// Optimal value for the unperturbed right-hand side.
    fn maximize(&mut self) -> Result<f64> {
        let mut stalled = 0usize;
        let limit = 50 * (self.m + self.nv) + 1000;
        for _ in 0..limit {
            let Some(s) = self.entering(stalled > 50) else {
                return Ok(self.t[self.idx(self.m, self.nv + 1)]);
            };
            let Some(r) = self.leaving(s) else {
                return Err(Error::Simplex("unbounded program".into()));
            };
            if self.t[self.idx(r, self.nv)] <= PIVOT_EPS * PERTURBATION {
                stalled += 1;
            } else {
                stalled = 0;
            }
            self.pivot(r, s);
        }
        Err(Error::Simplex("iteration limit reached".into()))
    }

    fn primal(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.nv];
        for (i, &b) in self.basic.iter().enumerate() {
            if b < self.nv {
                x[b] = self.t[self.idx(i, self.nv + 1)];
            }
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(xs: &[f64], ws: &[f64]) -> EmpiricalMeasure {
        EmpiricalMeasure::on_line(xs, ws).unwrap()
    }

    #[test]
    fn examples() {
        let a = line(&[0.0, 1.0, 2.5], &[0.2, 0.3, 0.5]);
        assert_eq!(bl_distance(&a, &a).unwrap(), 0.0);
        let d = bl_distance(&line(&[0.0], &[1.0]), &line(&[1.0], &[1.0])).unwrap();
        assert!((d - 2.0 / 3.0).abs() < 1e-12, "{d}");
        let d = bl_distance(&line(&[0.0], &[2.0]), &line(&[0.0], &[1.0])).unwrap();
        assert!((d - 1.0).abs() < 1e-12);
        for &sep in &[0.01, 0.5, 3.0, 10.0] {
            let d = bl_distance(&line(&[0.0], &[1.0]), &line(&[sep], &[1.0])).unwrap();
            assert!((d - 2.0 * sep / (2.0 + sep)).abs() < 1e-12);
        }
    }

    #[test]
    fn plane_dirac_pair() {
        let a = EmpiricalMeasure::dirac(&[0.0, 0.0], 1.0).unwrap();
        let b = EmpiricalMeasure::dirac(&[0.6, 0.8], 1.0).unwrap();
        assert!((bl_distance(&a, &b).unwrap() - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn cap_is_enforced() {
        let xs: Vec<f64> = (0..10).map(f64::from).collect();
        let a = line(&xs, &[1.0; 10]);
        let b = line(&[0.5], &[1.0]);
        assert!(matches!(bl_distance_with(&a, &b, 5), Err(Error::CapExceeded { .. })));
    }

    #[test]
    fn constraint_generation_matches_all_pairs() {
        let cloud = |n: usize, shift: f64| -> EmpiricalMeasure {
            let p: Vec<Vec<f64>> = (0..n)
                .map(|i| {
                    let a = i as f64 * 2.399_963;
                    let r = (i as f64 / n as f64).sqrt();
                    vec![r * a.cos() + shift, r * a.sin()]
                })
                .collect();
            EmpiricalMeasure::from_points(&p, vec![1.0 / n as f64; n]).unwrap()
        };
        let (a, b) = (cloud(60, 0.0), cloud(60, 0.3));
        let lazy = bl_distance(&a, &b).unwrap();
        let (points, c) = signed_support(&a, &b);
        let n = c.len();
        assert!(n * (n - 1) / 2 > ALL_PAIRS_LIMIT);
        let pt = |i: usize| &points[2 * i..2 * i + 2];
        let all: Vec<_> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        let full = solve(&c, &all, &pt).unwrap().value;
        assert!((lazy - full).abs() < 1e-10, "{lazy} vs {full}");
        assert!(full > 0.0 && full <= 0.3 + 1e-9);
    }
}
