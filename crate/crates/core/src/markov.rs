//! CTMC generator construction and steady-state solution.

use std::fmt;

use thiserror::Error;

use crate::reachability::TangibleGraph;

/// Sparse infinitesimal generator. Off-diagonal entries are stored per row
/// (and mirrored per column for Gauss–Seidel); the diagonal separately.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    col_ptr: Vec<usize>,
    rows: Vec<usize>,
    col_vals: Vec<f64>,
    diag: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("non-finite or negative rate {rate} on edge {from} -> {to}")]
    BadRate { from: usize, to: usize, rate: f64 },
    #[error("chain has {classes} recurrent classes; states {first} and {second} do not communicate")]
    Reducible { classes: usize, first: usize, second: usize },
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("empty chain")]
    Empty,
    #[error("invalid solver config: {0}")]
    Config(String),
    #[error("unknown transition {0}")]
    UnknownTransition(String),
}

impl Generator {
    /// Builds Q from `(source, target, rate)` triples. Self-loops are
    /// dropped and parallel entries summed.
    pub fn from_triples(
        n: usize,
        triples: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Generator, SolveError> {
        let mut per_row: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (s, t, rate) in triples {
            if !(rate.is_finite() && rate >= 0.0) {
                return Err(SolveError::BadRate { from: s, to: t, rate });
            }
            if s == t || rate == 0.0 {
                continue;
            }
            per_row[s].push((t, rate));
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut diag = vec![0.0; n];
        row_ptr.push(0);
        for (i, row) in per_row.iter_mut().enumerate() {
            row.sort_by_key(|&(j, _)| j);
            let mut k = 0;
            while k < row.len() {
                let j = row[k].0;
                let mut sum = 0.0;
                while k < row.len() && row[k].0 == j {
                    sum += row[k].1;
                    k += 1;
                }
                cols.push(j);
                vals.push(sum);
                diag[i] -= sum;
            }
            row_ptr.push(cols.len());
        }

        let mut counts = vec![0usize; n + 1];
        for &j in &cols {
            counts[j + 1] += 1;
        }
        for j in 0..n {
            counts[j + 1] += counts[j];
        }
        let col_ptr = counts.clone();
        let mut fill = counts;
        let mut rows = vec![0; cols.len()];
        let mut col_vals = vec![0.0; cols.len()];
        for i in 0..n {
            for k in row_ptr[i]..row_ptr[i + 1] {
                let j = cols[k];
                rows[fill[j]] = i;
                col_vals[fill[j]] = vals[k];
                fill[j] += 1;
            }
        }
        Ok(Generator { n, row_ptr, cols, vals, col_ptr, rows, col_vals, diag })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return self.diag[i];
        }
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[range.clone()].binary_search(&j) {
            Ok(k) => self.vals[range.start + k],
            Err(_) => 0.0,
        }
    }

    /// Off-diagonal entries of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    /// Off-diagonal entries of column `j`.
    fn column(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.col_ptr[j]..self.col_ptr[j + 1];
        self.rows[r.clone()].iter().copied().zip(self.col_vals[r].iter().copied())
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    pub fn nnz(&self) -> usize {
        self.cols.len() + self.n
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut m = vec![vec![0.0; self.n]; self.n];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = self.diag[i];
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        m
    }

    /// ‖πQ‖∞.
    pub fn residual(&self, pi: &[f64]) -> f64 {
        (0..self.n)
            .map(|j| {
                let s: f64 = self.column(j).map(|(i, q)| pi[i] * q).sum::<f64>() + pi[j] * self.diag[j];
                s.abs()
            })
            .fold(0.0, f64::max)
    }

    /// Recurrent classes (bottom strongly connected components), each
    /// sorted, in order of their smallest state.
    pub fn recurrent_classes(&self) -> Vec<Vec<usize>> {
        let comp = self.scc();
        let ncomp = comp.iter().copied().max().map_or(0, |c| c + 1);
        let mut bottom = vec![true; ncomp];
        for i in 0..self.n {
            for (j, _) in self.row(i) {
                if comp[i] != comp[j] {
                    bottom[comp[i]] = false;
                }
            }
        }
        let mut classes: Vec<Vec<usize>> = vec![Vec::new(); ncomp];
        for (i, &c) in comp.iter().enumerate() {
            if bottom[c] {
                classes[c].push(i);
            }
        }
        let mut classes: Vec<Vec<usize>> = classes.into_iter().filter(|c| !c.is_empty()).collect();
        classes.sort_by_key(|c| c[0]);
        classes
    }

    /// Tarjan's algorithm, iterative. Returns a component id per state.
    fn scc(&self) -> Vec<usize> {
        const UNSEEN: usize = usize::MAX;
        let n = self.n;
        let mut index = vec![UNSEEN; n];
        let mut low = vec![0; n];
        let mut on_stack = vec![false; n];
        let mut comp = vec![UNSEEN; n];
        let mut stack = Vec::new();
        let mut next_index = 0;
        let mut next_comp = 0;
        let mut call: Vec<(usize, usize)> = Vec::new();
        for root in 0..n {
            if index[root] != UNSEEN {
                continue;
            }
            call.push((root, self.row_ptr[root]));
            index[root] = next_index;
            low[root] = next_index;
            next_index += 1;
            stack.push(root);
            on_stack[root] = true;
            while let Some(&mut (v, ref mut k)) = call.last_mut() {
                if *k < self.row_ptr[v + 1] {
                    let w = self.cols[*k];
                    *k += 1;
                    if index[w] == UNSEEN {
                        index[w] = next_index;
                        low[w] = next_index;
                        next_index += 1;
                        stack.push(w);
                        on_stack[w] = true;
                        call.push((w, self.row_ptr[w]));
                    } else if on_stack[w] {
                        low[v] = low[v].min(index[w]);
                    }
                } else {
                    call.pop();
                    if let Some(&(parent, _)) = call.last() {
                        low[parent] = low[parent].min(low[v]);
                    }
                    if low[v] == index[v] {
                        while let Some(w) = stack.pop() {
                            on_stack[w] = false;
                            comp[w] = next_comp;
                            if w == v {
                                break;
                            }
                        }
                        next_comp += 1;
                    }
                }
            }
        }
        comp
    }

    /// Sub-generator on `states` (which must be closed under transitions).
    fn restrict(&self, states: &[usize]) -> Generator {
        let mut local = vec![usize::MAX; self.n];
        for (k, &s) in states.iter().enumerate() {
            local[s] = k;
        }
        let triples: Vec<(usize, usize, f64)> = states
            .iter()
            .flat_map(|&s| {
                let local = &local;
                self.row(s).filter(move |&(j, _)| local[j] != usize::MAX).map(move |(j, v)| (local[s], local[j], v))
            })
            .collect();
        Generator::from_triples(states.len(), triples).expect("rates already validated")
    }
}

/// Q from a tangible graph: merged parallel edges, diagonal = −row sum.
pub fn build_generator(graph: &TangibleGraph) -> Result<Generator, SolveError> {
    Generator::from_triples(graph.len(), graph.edges.iter().map(|e| (e.source, e.target, e.rate)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverMethod {
    Auto,
    Direct,
    Iterative,
}

impl std::str::FromStr for SolverMethod {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "auto" => Ok(SolverMethod::Auto),
            "direct" => Ok(SolverMethod::Direct),
            "iterative" => Ok(SolverMethod::Iterative),
            other => Err(format!("unknown solver method {other}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub method: SolverMethod,
    /// Bound on ‖πQ‖∞.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Chains with at most this many states are solved densely under `Auto`.
    pub direct_threshold: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { method: SolverMethod::Auto, tolerance: 1e-12, max_iterations: 200_000, direct_threshold: 500 }
    }
}

/// The method that produced a solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodUsed {
    /// Single absorbing recurrent state; no solve needed.
    Trivial,
    Direct,
    GaussSeidel,
    Power,
}

impl fmt::Display for MethodUsed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MethodUsed::Trivial => "trivial",
            MethodUsed::Direct => "direct",
            MethodUsed::GaussSeidel => "gauss-seidel",
            MethodUsed::Power => "power",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState {
    pub pi: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub method: MethodUsed,
}

/// Solves πQ = 0, Σπ = 1 for a chain with a single recurrent class.
/// Transient states get probability zero.
pub fn steady_state(q: &Generator, cfg: &SolverConfig) -> Result<SteadyState, SolveError> {
    if cfg.tolerance.is_nan() || cfg.tolerance <= 0.0 || cfg.max_iterations == 0 || cfg.direct_threshold == 0 {
        return Err(SolveError::Config("tolerance must be positive and limits at least 1".into()));
    }
    let n = q.dim();
    if n == 0 {
        return Err(SolveError::Empty);
    }
    let classes = q.recurrent_classes();
    if classes.len() > 1 {
        return Err(SolveError::Reducible { classes: classes.len(), first: classes[0][0], second: classes[1][0] });
    }
    let class = &classes[0];
    let mut pi = vec![0.0; n];
    if class.len() == 1 {
        pi[class[0]] = 1.0;
        return Ok(SteadyState { residual: q.residual(&pi), pi, iterations: 0, method: MethodUsed::Trivial });
    }

    let sub;
    let local: &Generator = if class.len() == n {
        q
    } else {
        sub = q.restrict(class);
        &sub
    };
    let direct = match cfg.method {
        SolverMethod::Direct => true,
        SolverMethod::Iterative => false,
        SolverMethod::Auto => n <= cfg.direct_threshold,
    };

    let (x, iterations, method) = if direct {
        let mut x = solve_dense(local);
        let mut iterations = 0;
        if local.residual(&x) > cfg.tolerance {
            // Polish round-off on badly scaled chains.
            let (y, it) = gauss_seidel(local, x, cfg)?;
            x = y;
            iterations = it;
        }
        (x, iterations, MethodUsed::Direct)
    } else {
        match gauss_seidel(local, uniform(local.dim()), cfg) {
            Ok((x, it)) => (x, it, MethodUsed::GaussSeidel),
            Err(_) => {
                let (x, it) = power(local, cfg)?;
                (x, it, MethodUsed::Power)
            }
        }
    };
    for (&s, v) in class.iter().zip(x) {
        pi[s] = v;
    }
    let residual = q.residual(&pi);
    if residual > cfg.tolerance {
        return Err(SolveError::NoConvergence { iterations, residual });
    }
    Ok(SteadyState { pi, residual, iterations, method })
}

fn uniform(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

fn normalize(x: &mut [f64]) {
    for v in x.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let s: f64 = x.iter().sum();
    if s > 0.0 {
        for v in x.iter_mut() {
            *v /= s;
        }
    }
}

/// Dense Gaussian elimination with partial pivoting on Qᵀπ = 0 with the
/// last balance equation replaced by Σπ = 1.
#[allow(clippy::needless_range_loop)]
fn solve_dense(q: &Generator) -> Vec<f64> {
    let n = q.dim();
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        a[i][i] = q.diag[i];
        for (j, v) in q.row(i) {
            a[j][i] = v;
        }
    }
    let mut b = vec![0.0; n];
    a[n - 1].iter_mut().for_each(|v| *v = 1.0);
    b[n - 1] = 1.0;

    for col in 0..n {
        let pivot = (col..n).max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs())).unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        let p = a[col][col];
        if p == 0.0 {
            continue;
        }
        let (top, bottom) = a.split_at_mut(col + 1);
        let pivot_row = &top[col];
        for (r, row) in bottom.iter_mut().enumerate() {
            let f = row[col] / p;
            if f != 0.0 {
                for (x, y) in row[col..].iter_mut().zip(&pivot_row[col..]) {
                    *x -= f * y;
                }
                b[col + 1 + r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
        x[i] = if a[i][i] == 0.0 { 0.0 } else { (b[i] - s) / a[i][i] };
    }
    normalize(&mut x);
    x
}

/// Gauss–Seidel on the balance equations π_j = Σ_{i≠j} π_i q_ij / −q_jj,
/// normalizing after every sweep.
fn gauss_seidel(q: &Generator, mut x: Vec<f64>, cfg: &SolverConfig) -> Result<(Vec<f64>, usize), SolveError> {
    let n = q.dim();
    let mut residual = f64::INFINITY;
    for it in 1..=cfg.max_iterations {
        for j in 0..n {
            let inflow: f64 = q.column(j).map(|(i, v)| x[i] * v).sum();
            x[j] = inflow / -q.diag[j];
        }
        normalize(&mut x);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SolveError::NoConvergence { iterations: it, residual: f64::NAN });
        }
        residual = q.residual(&x);
        if residual <= cfg.tolerance {
            return Ok((x, it));
        }
    }
    Err(SolveError::NoConvergence { iterations: cfg.max_iterations, residual })
}

/// Power iteration on the uniformized chain P = I + Q/Λ.
#[allow(clippy::needless_range_loop)]
fn power(q: &Generator, cfg: &SolverConfig) -> Result<(Vec<f64>, usize), SolveError> {
    let n = q.dim();
    let lambda = 1.02 * q.diag.iter().map(|d| d.abs()).fold(0.0, f64::max);
    let mut x = uniform(n);
    let mut residual = f64::INFINITY;
    for it in 1..=cfg.max_iterations {
        let mut y: Vec<f64> = (0..n).map(|j| x[j] * (1.0 + q.diag[j] / lambda)).collect();
        for i in 0..n {
            for (j, v) in q.row(i) {
                y[j] += x[i] * v / lambda;
            }
        }
        normalize(&mut y);
        x = y;
        residual = q.residual(&x);
        if residual <= cfg.tolerance {
            return Ok((x, it));
        }
    }
    Err(SolveError::NoConvergence { iterations: cfg.max_iterations, residual })
}

/// Steady-state firing frequency of transition `name`, firings per hour.
pub fn throughput(graph: &TangibleGraph, ss: &SteadyState, name: &str) -> Result<f64, SolveError> {
    let t = graph.transition_id(name).ok_or_else(|| SolveError::UnknownTransition(name.to_string()))?;
    Ok(graph
        .edges
        .iter()
        .map(|e| e.labels.iter().filter(|(u, _)| *u == t).map(|(_, c)| ss.pi[e.source] * c).sum::<f64>())
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: usize, t: &[(usize, usize, f64)]) -> Generator {
        Generator::from_triples(n, t.iter().copied()).unwrap()
    }

    fn cfg(method: SolverMethod) -> SolverConfig {
        SolverConfig { method, ..Default::default() }
    }

    #[test]
    fn two_state_generator() {
        let g = q(2, &[(0, 1, 1.0), (1, 0, 9.0)]);
        assert_eq!(g.to_dense(), vec![vec![-1.0, 1.0], vec![9.0, -9.0]]);
    }

    #[test]
    fn absorbing_row_is_zero() {
        let g = q(2, &[(0, 1, 3.0)]);
        assert_eq!(g.to_dense()[1], vec![0.0, 0.0]);
    }

    #[test]
    fn parallel_entries_merge() {
        let g = q(2, &[(0, 1, 2.0), (0, 1, 3.0), (0, 0, 7.0)]);
        assert_eq!(g.get(0, 1), 5.0);
        assert_eq!(g.get(0, 0), -5.0);
    }

    #[test]
    fn bad_rate_rejected() {
        assert!(matches!(Generator::from_triples(2, [(0, 1, f64::NAN)]), Err(SolveError::BadRate { .. })));
    }

    #[test]
    fn two_state_balance() {
        let g = q(2, &[(0, 1, 1.0), (1, 0, 9.0)]);
        for m in [SolverMethod::Direct, SolverMethod::Iterative] {
            let ss = steady_state(&g, &cfg(m)).unwrap();
            assert!((ss.pi[0] - 0.9).abs() < 1e-12, "{m:?} {:?}", ss.pi);
            assert!((ss.pi[1] - 0.1).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_cycle_is_uniform() {
        let g = q(3, &[(0, 1, 2.0), (1, 2, 2.0), (2, 0, 2.0)]);
        for m in [SolverMethod::Direct, SolverMethod::Iterative] {
            let ss = steady_state(&g, &cfg(m)).unwrap();
            for p in &ss.pi {
                assert!((p - 1.0 / 3.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn birth_death_product_form() {
        let mut t = Vec::new();
        for k in 0..3 {
            t.push((k, k + 1, 1.0));
            t.push((k + 1, k, 2.0));
        }
        let g = q(4, &t);
        let want = [8.0 / 15.0, 4.0 / 15.0, 2.0 / 15.0, 1.0 / 15.0];
        for m in [SolverMethod::Direct, SolverMethod::Iterative] {
            let ss = steady_state(&g, &cfg(m)).unwrap();
            for (p, w) in ss.pi.iter().zip(want) {
                assert!((p - w).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn transient_states_get_zero() {
        let g = q(3, &[(0, 1, 1.0), (1, 2, 1.0), (2, 1, 3.0)]);
        let ss = steady_state(&g, &cfg(SolverMethod::Auto)).unwrap();
        assert_eq!(ss.pi[0], 0.0);
        assert!((ss.pi[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn single_absorbing_state() {
        let g = q(2, &[(0, 1, 1.0)]);
        let ss = steady_state(&g, &cfg(SolverMethod::Auto)).unwrap();
        assert_eq!(ss.pi, vec![0.0, 1.0]);
        assert_eq!(ss.method, MethodUsed::Trivial);
    }

    #[test]
    fn two_recurrent_classes_rejected() {
        let g = q(3, &[(0, 1, 1.0), (0, 2, 1.0)]);
        assert_eq!(
            steady_state(&g, &cfg(SolverMethod::Auto)),
            Err(SolveError::Reducible { classes: 2, first: 1, second: 2 })
        );
    }

    #[test]
    fn iteration_cap_reports_residual() {
        let g = q(4, &[(0, 1, 1.3), (1, 2, 0.7), (2, 3, 2.9), (3, 0, 0.11), (2, 0, 5.0), (1, 3, 0.3)]);
        let c =
            SolverConfig { method: SolverMethod::Iterative, tolerance: 1e-30, max_iterations: 2, ..Default::default() };
        assert!(matches!(steady_state(&g, &c), Err(SolveError::NoConvergence { .. })));
    }

    #[test]
    fn power_iteration_agrees() {
        let g = q(3, &[(0, 1, 1.0), (1, 2, 2.0), (2, 0, 3.0), (1, 0, 0.5)]);
        let (x, _) = power(&g, &SolverConfig::default()).unwrap();
        let d = solve_dense(&g);
        for (a, b) in x.iter().zip(&d) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}
