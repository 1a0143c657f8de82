//! Exact regime assignment under a switch budget, and random feasible paths.

use rand::seq::index;
use rand::Rng;

/// Optimal label path of one location.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub labels: Vec<usize>,
    /// Sum of the assigned losses, accumulated front to back.
    pub cost: f64,
}

/// Row `j` of the loss block is `+inf` for every regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InfeasibleRow(pub usize);

/// Minimises `sum_j loss[j][r_j]` over label paths with at most `budget`
/// label changes.
///
/// `loss` is a row-major `T x n_regimes` block. The solver is a backward
/// dynamic program over (entry, label, remaining switches), `O(T K^2 C)`.
/// Among optimal paths the lexicographically smallest label sequence is
/// returned, so lower labels win ties at the earliest position.
pub fn gamma_step(loss: &[f64], n_regimes: usize, budget: usize) -> Result<Assignment, InfeasibleRow> {
    let k = n_regimes;
    assert!(k > 0 && loss.len() % k == 0, "loss block must be T x K");
    let t = loss.len() / k;
    if t == 0 {
        return Ok(Assignment {
            labels: Vec::new(),
            cost: 0.0,
        });
    }
    if let Some(j) = (0..t).find(|&j| loss[j * k..(j + 1) * k].iter().all(|v| *v == f64::INFINITY)) {
        return Err(InfeasibleRow(j));
    }

    let b_max = budget.min(t - 1);
    let width = b_max + 1;
    // go[(j * k + label) * width + b]: best cost of entries j.. with `label`
    // at j and at most `b` switches left.
    let idx = |j: usize, label: usize, b: usize| (j * k + label) * width + b;
    let mut go = vec![0.0f64; t * k * width];
    for label in 0..k {
        for b in 0..width {
            go[idx(t - 1, label, b)] = loss[(t - 1) * k + label];
        }
    }
    for j in (0..t - 1).rev() {
        for label in 0..k {
            let here = loss[j * k + label];
            for b in 0..width {
                let mut best = go[idx(j + 1, label, b)];
                if b > 0 {
                    for other in (0..k).filter(|&o| o != label) {
                        best = best.min(go[idx(j + 1, other, b - 1)]);
                    }
                }
                go[idx(j, label, b)] = here + best;
            }
        }
    }

    let mut labels = Vec::with_capacity(t);
    let first_best = (0..k).map(|l| go[idx(0, l, b_max)]).fold(f64::INFINITY, f64::min);
    let mut current = (0..k).find(|&l| go[idx(0, l, b_max)] == first_best).unwrap_or(0);
    let mut left = b_max;
    labels.push(current);
    for j in 1..t {
        let value = |next: usize| -> f64 {
            if next == current {
                go[idx(j, next, left)]
            } else if left > 0 {
                go[idx(j, next, left - 1)]
            } else {
                f64::INFINITY
            }
        };
        let best = (0..k).map(value).fold(f64::INFINITY, f64::min);
        let next = (0..k).find(|&n| value(n) == best).unwrap_or(current);
        if next != current {
            left -= 1;
        }
        current = next;
        labels.push(current);
    }
    let cost = labels.iter().enumerate().map(|(j, &l)| loss[j * k + l]).sum();
    Ok(Assignment { labels, cost })
}

/// Draws a label path with exactly `switches` changes: change points are a
/// uniform subset of the `t - 1` boundaries, the first label is uniform and
/// every later segment takes a uniform label different from its predecessor.
pub fn random_path_with_switches<R: Rng + ?Sized>(
    t: usize,
    n_regimes: usize,
    switches: usize,
    rng: &mut R,
) -> Vec<usize> {
    if t == 0 {
        return Vec::new();
    }
    assert!(n_regimes > 0);
    let switches = if n_regimes == 1 { 0 } else { switches.min(t - 1) };
    let mut cuts: Vec<usize> = index::sample(rng, t - 1, switches).into_vec();
    cuts.sort_unstable();
    let mut label = rng.random_range(0..n_regimes);
    let mut labels = Vec::with_capacity(t);
    let mut next_cut = cuts.iter().peekable();
    for j in 0..t {
        labels.push(label);
        if next_cut.peek() == Some(&&j) {
            next_cut.next();
            let r = rng.random_range(0..n_regimes - 1);
            label = if r >= label { r + 1 } else { r };
        }
    }
    labels
}

/// Path with a uniformly drawn number of switches in `0..=min(budget, t-1)`.
pub fn random_feasible_path<R: Rng + ?Sized>(t: usize, n_regimes: usize, budget: usize, rng: &mut R) -> Vec<usize> {
    if t == 0 {
        return Vec::new();
    }
    let max_switches = if n_regimes == 1 { 0 } else { budget.min(t - 1) };
    let switches = rng.random_range(0..=max_switches);
    random_path_with_switches(t, n_regimes, switches, rng)
}
