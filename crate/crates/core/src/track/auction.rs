//! Linear assignment by the forward auction algorithm with epsilon scaling.
//!
//! Rectangular problems with forbidden pairs are embedded in a square
//! problem: every row gets a private "unassigned" column and every column a
//! private "unassigned" row. A large reward per real pair makes the solver
//! prefer the largest matching first and the cheapest among those second.

use super::gate::GatedPair;

/// One row/column pair of a solved assignment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Assignment {
    pub row: usize,
    pub col: usize,
    pub cost: f64,
}

/// Sparse benefit matrix for a square auction: `edges[i]` lists `(j, a_ij)`.
struct Problem {
    n: usize,
    edges: Vec<Vec<(usize, f64)>>,
    eps_final: f64,
}

impl Problem {
    /// Maximizes total benefit; returns the column of each row.
    fn solve(&self) -> Vec<usize> {
        let n = self.n;
        let scale = self
            .edges
            .iter()
            .flatten()
            .map(|&(_, a)| a.abs())
            .fold(0.0, f64::max)
            .max(1.0);
        // Stand-in for "no second-best object": large enough that a lone
        // bidder keeps the object, finite so prices stay comparable.
        let spread = 4.0 * (n as f64 + 1.0) * scale;
        let eps_final = self.eps_final;
        let mut eps = scale / 2.0;
        let mut price = vec![0.0; n];
        let mut owner: Vec<Option<usize>> = vec![None; n];
        let mut assigned: Vec<Option<usize>> = vec![None; n];

        loop {
            owner.iter_mut().for_each(|o| *o = None);
            assigned.iter_mut().for_each(|a| *a = None);
            let mut queue: std::collections::VecDeque<usize> = (0..n).collect();
            while let Some(i) = queue.pop_front() {
                let mut best: Option<(usize, f64)> = None;
                let mut second = f64::NEG_INFINITY;
                for &(j, a) in &self.edges[i] {
                    let v = a - price[j];
                    match best {
                        Some((_, bv)) if v <= bv => second = second.max(v),
                        Some((_, bv)) => {
                            second = bv;
                            best = Some((j, v));
                        }
                        None => best = Some((j, v)),
                    }
                }
                let (j, v) = best.expect("every row has at least one column");
                let w = if second.is_finite() {
                    second
                } else {
                    v - spread
                };
                price[j] += v - w + eps;
                if let Some(prev) = owner[j].replace(i) {
                    assigned[prev] = None;
                    queue.push_back(prev);
                }
                assigned[i] = Some(j);
            }
            if eps <= eps_final {
                break;
            }
            eps = (eps / 5.0).max(eps_final);
        }
        assigned.into_iter().map(|a| a.expect("complete")).collect()
    }
}

/// Solves a dense rectangular problem where `None` marks a forbidden pair.
///
/// The result has the maximum possible number of pairs and, among those, the
/// minimum total cost. Pairs are returned in row order.
pub fn auction_assign(costs: &[Vec<Option<f64>>]) -> Vec<Assignment> {
    let rows = costs.len();
    let cols = costs.first().map_or(0, Vec::len);
    debug_assert!(costs.iter().all(|r| r.len() == cols));
    let finite: Vec<(usize, usize, f64)> = costs
        .iter()
        .enumerate()
        .flat_map(|(i, r)| {
            r.iter()
                .enumerate()
                .filter_map(move |(j, c)| c.map(|c| (i, j, c)))
        })
        .collect();
    solve_sparse(rows, cols, &finite)
}

fn solve_sparse(rows: usize, cols: usize, finite: &[(usize, usize, f64)]) -> Vec<Assignment> {
    if finite.is_empty() {
        return Vec::new();
    }
    if let [(row, col, cost)] = *finite {
        return vec![Assignment { row, col, cost }];
    }
    // Any matching with one more real pair beats every smaller matching.
    let reward = 1.0 + finite.iter().map(|e| e.2.abs()).sum::<f64>();
    let n = rows + cols;
    let mut edges = vec![Vec::new(); n];
    for &(i, j, c) in finite {
        edges[i].push((j, reward - c));
    }
    for (i, e) in edges.iter_mut().enumerate().take(rows) {
        e.push((cols + i, 0.0));
    }
    for (j, e) in edges.iter_mut().skip(rows).enumerate() {
        e.push((j, 0.0));
        e.extend((0..rows).map(|k| (cols + k, 0.0)));
    }
    let max_cost = finite.iter().map(|e| e.2.abs()).fold(0.0, f64::max);
    let eps_final = (1e-9 * max_cost).max(1e-12 * reward);
    let solution = Problem {
        n,
        edges,
        eps_final,
    }
    .solve();
    let lookup: std::collections::HashMap<(usize, usize), f64> =
        finite.iter().map(|&(i, j, c)| ((i, j), c)).collect();
    (0..rows)
        .filter(|&i| solution[i] < cols)
        .map(|i| Assignment {
            row: i,
            col: solution[i],
            cost: lookup[&(i, solution[i])],
        })
        .collect()
}

/// Global track-to-measurement assignment from gated pairs.
///
/// Independent clusters of the gating graph are solved separately, which
/// gives the same optimum as one joint problem. Returns `(track,
/// measurement)` pairs sorted by track.
pub fn assign(
    pairs: &[GatedPair],
    num_tracks: usize,
    num_measurements: usize,
) -> Vec<(usize, usize)> {
    if pairs.is_empty() {
        return Vec::new();
    }
    // Union-find over tracks (0..T) and measurements (T..T+M).
    let mut parent: Vec<usize> = (0..num_tracks + num_measurements).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for pr in pairs {
        let a = find(&mut parent, pr.track);
        let b = find(&mut parent, num_tracks + pr.measurement);
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut clusters: std::collections::BTreeMap<usize, Vec<&GatedPair>> = Default::default();
    for pr in pairs {
        let root = find(&mut parent, pr.track);
        clusters.entry(root).or_default().push(pr);
    }

    let mut out = Vec::new();
    for members in clusters.values() {
        let mut tracks: Vec<usize> = members.iter().map(|p| p.track).collect();
        let mut meas: Vec<usize> = members.iter().map(|p| p.measurement).collect();
        tracks.sort_unstable();
        tracks.dedup();
        meas.sort_unstable();
        meas.dedup();
        let local: Vec<(usize, usize, f64)> = members
            .iter()
            .map(|p| {
                (
                    tracks.binary_search(&p.track).unwrap(),
                    meas.binary_search(&p.measurement).unwrap(),
                    p.statistic,
                )
            })
            .collect();
        for a in solve_sparse(tracks.len(), meas.len(), &local) {
            out.push((tracks[a.row], meas[a.col]));
        }
    }
    out.sort_unstable();
    out
}
