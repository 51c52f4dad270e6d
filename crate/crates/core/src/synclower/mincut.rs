use std::collections::{BTreeSet, VecDeque};

use crate::ir::ValueId;

/// Dataflow among values defined before a barrier. Node `i` stands for
/// `values[i]`; edges run from definition to use.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValueGraph {
    pub values: Vec<ValueId>,
    pub edges: Vec<(usize, usize)>,
    /// Values that cannot be recomputed after the barrier.
    pub sources: BTreeSet<usize>,
    /// Values used after the barrier.
    pub sinks: BTreeSet<usize>,
}

impl ValueGraph {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn preds(&self) -> Vec<Vec<usize>> {
        let mut pr = vec![Vec::new(); self.len()];
        for &(a, b) in &self.edges {
            pr[b].push(a);
        }
        pr
    }

    /// True if no source reaches a sink without passing through `cut`.
    pub fn separates(&self, cut: &BTreeSet<usize>) -> bool {
        let mut succ = vec![Vec::new(); self.len()];
        for &(a, b) in &self.edges {
            succ[a].push(b);
        }
        let mut seen = vec![false; self.len()];
        let mut stack: Vec<usize> = self.sources.iter().copied().filter(|s| !cut.contains(s)).collect();
        for &s in &stack {
            seen[s] = true;
        }
        while let Some(v) = stack.pop() {
            if self.sinks.contains(&v) {
                return false;
            }
            for &w in &succ[v] {
                if !seen[w] && !cut.contains(&w) {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        true
    }

    /// Nodes to re-materialize after the barrier: everything the sinks
    /// depend on, stopping at cut values.
    pub fn recompute_set(&self, cut: &BTreeSet<usize>) -> BTreeSet<usize> {
        let pr = self.preds();
        let mut out = BTreeSet::new();
        let mut stack: Vec<usize> = self.sinks.iter().copied().filter(|s| !cut.contains(s)).collect();
        while let Some(v) = stack.pop() {
            if out.insert(v) {
                stack.extend(pr[v].iter().copied().filter(|u| !cut.contains(u)));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SpillPlan {
    /// Values cached in scratch memory.
    pub cut: BTreeSet<usize>,
    /// Values recomputed after the barrier.
    pub recompute: BTreeSet<usize>,
}

struct Flow {
    cap: Vec<i64>,
    to: Vec<usize>,
    adj: Vec<Vec<usize>>,
}

impl Flow {
    fn new(n: usize) -> Self {
        Flow { cap: Vec::new(), to: Vec::new(), adj: vec![Vec::new(); n] }
    }

    fn edge(&mut self, a: usize, b: usize, c: i64) {
        self.adj[a].push(self.to.len());
        self.to.push(b);
        self.cap.push(c);
        self.adj[b].push(self.to.len());
        self.to.push(a);
        self.cap.push(0);
    }

    /// Residual reachability from `s` after augmenting to a maximum flow.
    fn max_flow(&mut self, s: usize, t: usize) -> Vec<bool> {
        loop {
            let mut prev = vec![usize::MAX; self.adj.len()];
            let mut seen = vec![false; self.adj.len()];
            seen[s] = true;
            let mut q = VecDeque::from([s]);
            while let Some(v) = q.pop_front() {
                for &e in &self.adj[v] {
                    let w = self.to[e];
                    if self.cap[e] > 0 && !seen[w] {
                        seen[w] = true;
                        prev[w] = e;
                        q.push_back(w);
                    }
                }
            }
            if !seen[t] {
                return seen;
            }
            let mut v = t;
            while v != s {
                let e = prev[v];
                self.cap[e] -= 1;
                self.cap[e ^ 1] += 1;
                v = self.to[e ^ 1];
            }
        }
    }
}

/// Minimum vertex cut between sources and sinks with unit node weights,
/// via max-flow on the split-node graph. Among minimum cuts the one
/// closest to the sources is returned.
pub fn min_cut_live_values(g: &ValueGraph) -> SpillPlan {
    let n = g.len();
    let (s, t) = (2 * n, 2 * n + 1);
    let inf = n as i64 + 1;
    let mut f = Flow::new(2 * n + 2);
    for v in 0..n {
        f.edge(2 * v, 2 * v + 1, 1);
    }
    for &(a, b) in &g.edges {
        f.edge(2 * a + 1, 2 * b, inf);
    }
    for &v in &g.sources {
        f.edge(s, 2 * v, inf);
    }
    for &v in &g.sinks {
        f.edge(2 * v + 1, t, inf);
    }
    let reach = f.max_flow(s, t);
    let cut: BTreeSet<usize> = (0..n).filter(|&v| reach[2 * v] && !reach[2 * v + 1]).collect();
    let recompute = g.recompute_set(&cut);
    SpillPlan { cut, recompute }
}

/// Caches every value used after the barrier.
pub fn spill_all_sinks(g: &ValueGraph) -> SpillPlan {
    SpillPlan { cut: g.sinks.clone(), recompute: BTreeSet::new() }
}
