//! Brute-force oracles shared by the integration tests.

#![allow(dead_code)]

/// Minimum-cost perfect matching on a square cost matrix (Hungarian
/// algorithm with potentials, O(n³)).
pub fn assignment_cost(cost: &[Vec<f64>]) -> f64 {
    let n = cost.len();
    let inf = f64::INFINITY;
    let (mut u, mut v) = (vec![0.0; n + 1], vec![0.0; n + 1]);
    let (mut p, mut way) = (vec![0usize; n + 1], vec![0usize; n + 1]);
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let (mut delta, mut j1) = (inf, 0);
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (1..=n).map(|j| cost[p[j] - 1][j - 1]).sum()
}

/// Exact W1 between uniform empirical measures: replicate each sample so
/// both sides have `n·m` unit atoms, then solve the assignment problem.
pub fn w1_assignment(a: &[f64], b: &[f64]) -> f64 {
    let (n, m) = (a.len(), b.len());
    let left: Vec<f64> = a.iter().flat_map(|&x| std::iter::repeat(x).take(m)).collect();
    let right: Vec<f64> = b.iter().flat_map(|&x| std::iter::repeat(x).take(n)).collect();
    let cost: Vec<Vec<f64>> = left.iter().map(|x| right.iter().map(|y| (x - y).abs()).collect()).collect();
    assignment_cost(&cost) / (n * m) as f64
}

/// Exact W1 for equal sizes by enumerating every permutation (Heap's
/// algorithm).
pub fn w1_permutations(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    let mut perm: Vec<usize> = (0..n).collect();
    let cost = |p: &[usize]| p.iter().enumerate().map(|(i, &j)| (a[i] - b[j]).abs()).sum::<f64>();
    let mut best = cost(&perm);
    let mut c = vec![0usize; n];
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            best = best.min(cost(&perm));
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    best / n as f64
}
