//! s–t min-cut on sparse graphs with floating-point capacities.
//!
//! The solver grows a search tree from each terminal, augments along the
//! path found where the trees touch, and re-attaches orphaned nodes instead
//! of rebuilding the trees (Boykov–Kolmogorov). Nodes carry a signed terminal
//! residual: positive means excess from the source, negative means excess
//! towards the sink.

use std::collections::VecDeque;
use std::fmt::Write as _;

use crate::error::{Result, SegError};

/// Residual capacities at or below this are treated as saturated.
pub const SATURATION_EPS: f64 = 1e-12;

const NONE: usize = usize::MAX;
const TERMINAL: usize = usize::MAX - 1;
const ORPHAN: usize = usize::MAX - 2;
const INFINITE_DIST: u32 = u32::MAX;

/// Which side of the minimum cut a node ends up on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CutSide {
    Source,
    Sink,
}

#[derive(Debug, Clone)]
struct Arc {
    head: usize,
    next: usize,
    cap: f64,
    r_cap: f64,
}

#[derive(Debug, Clone)]
pub struct FlowNetwork {
    // per node
    first: Vec<usize>,
    source_cap: Vec<f64>,
    sink_cap: Vec<f64>,
    tr_cap: Vec<f64>,
    parent: Vec<usize>,
    is_sink: Vec<bool>,
    active: Vec<bool>,
    ts: Vec<u64>,
    dist: Vec<u32>,
    arcs: Vec<Arc>,
    queue: VecDeque<usize>,
    orphans: VecDeque<usize>,
    time: u64,
    flow: Option<f64>,
}

impl Default for FlowNetwork {
    fn default() -> Self {
        Self::new()
    }
}

fn check_cap(c: f64) -> Result<()> {
    if !c.is_finite() || c < 0.0 {
        return Err(SegError::InvalidArgument(format!(
            "capacity must be finite and nonnegative, got {c}"
        )));
    }
    Ok(())
}

impl FlowNetwork {
    pub fn new() -> Self {
        Self::with_capacity(0, 0)
    }

    pub fn with_capacity(nodes: usize, edges: usize) -> Self {
        Self {
            first: Vec::with_capacity(nodes),
            source_cap: Vec::with_capacity(nodes),
            sink_cap: Vec::with_capacity(nodes),
            tr_cap: Vec::new(),
            parent: Vec::new(),
            is_sink: Vec::new(),
            active: Vec::new(),
            ts: Vec::new(),
            dist: Vec::new(),
            arcs: Vec::with_capacity(2 * edges),
            queue: VecDeque::new(),
            orphans: VecDeque::new(),
            time: 0,
            flow: None,
        }
    }

    pub fn node_count(&self) -> usize {
        self.first.len()
    }

    /// Number of `add_edge` calls so far.
    pub fn edge_count(&self) -> usize {
        self.arcs.len() / 2
    }

    /// Appends `count` isolated nodes and returns the index of the first.
    pub fn add_node_batch(&mut self, count: usize) -> usize {
        let first = self.first.len();
        self.first.resize(first + count, NONE);
        self.source_cap.resize(first + count, 0.0);
        self.sink_cap.resize(first + count, 0.0);
        self.flow = None;
        first
    }

    /// Adds an arc `u -> v` with capacity `cap` and `v -> u` with `rev_cap`.
    pub fn add_edge(&mut self, u: usize, v: usize, cap: f64, rev_cap: f64) -> Result<()> {
        check_cap(cap)?;
        check_cap(rev_cap)?;
        let n = self.node_count();
        if u >= n || v >= n {
            return Err(SegError::InvalidArgument(format!(
                "edge ({u}, {v}) out of range for {n} nodes"
            )));
        }
        if u == v {
            return Err(SegError::InvalidArgument("self loops are not allowed".into()));
        }
        let a = self.arcs.len();
        self.arcs.push(Arc {
            head: v,
            next: self.first[u],
            cap,
            r_cap: cap,
        });
        self.arcs.push(Arc {
            head: u,
            next: self.first[v],
            cap: rev_cap,
            r_cap: rev_cap,
        });
        self.first[u] = a;
        self.first[v] = a + 1;
        self.flow = None;
        Ok(())
    }

    /// Adds terminal capacities to node `u`; repeated calls accumulate.
    pub fn add_terminal(&mut self, u: usize, source_cap: f64, sink_cap: f64) -> Result<()> {
        check_cap(source_cap)?;
        check_cap(sink_cap)?;
        if u >= self.node_count() {
            return Err(SegError::InvalidArgument(format!("node {u} out of range")));
        }
        self.source_cap[u] += source_cap;
        self.sink_cap[u] += sink_cap;
        self.flow = None;
        Ok(())
    }

    /// Accumulated `(source, sink)` capacities of node `u`.
    pub fn terminal(&self, u: usize) -> (f64, f64) {
        (self.source_cap[u], self.sink_cap[u])
    }

    /// Maximum flow value, equal to the minimum cut. Cached until the network changes.
    pub fn max_flow(&mut self) -> f64 {
        if let Some(f) = self.flow {
            return f;
        }
        let f = self.solve();
        self.flow = Some(f);
        f
    }

    /// Side of the minimum cut for node `u`. Nodes not reachable from the
    /// source in the residual graph are on the sink side.
    pub fn cut_side(&self, u: usize) -> Result<CutSide> {
        if self.flow.is_none() {
            return Err(SegError::FlowNotComputed);
        }
        Ok(if self.parent[u] != NONE && !self.is_sink[u] {
            CutSide::Source
        } else {
            CutSide::Sink
        })
    }

    /// Cost of the cut that puts `source_side[u] == true` nodes with the source.
    pub fn cut_cost(&self, source_side: &[bool]) -> f64 {
        let mut cost = 0.0;
        for u in 0..self.node_count() {
            cost += if source_side[u] {
                self.sink_cap[u]
            } else {
                self.source_cap[u]
            };
        }
        for (a, arc) in self.arcs.iter().enumerate() {
            let tail = self.arcs[a ^ 1].head;
            if source_side[tail] && !source_side[arc.head] {
                cost += arc.cap;
            }
        }
        cost
    }

    fn solve(&mut self) -> f64 {
        let n = self.node_count();
        for arc in &mut self.arcs {
            arc.r_cap = arc.cap;
        }
        self.tr_cap = vec![0.0; n];
        self.parent = vec![NONE; n];
        self.is_sink = vec![false; n];
        self.active = vec![false; n];
        self.ts = vec![0; n];
        self.dist = vec![0; n];
        self.queue.clear();
        self.orphans.clear();
        self.time = 0;

        let mut flow = 0.0;
        for i in 0..n {
            let (s, t) = (self.source_cap[i], self.sink_cap[i]);
            flow += s.min(t);
            let r = s - t;
            self.tr_cap[i] = r;
            if r > SATURATION_EPS {
                self.is_sink[i] = false;
                self.parent[i] = TERMINAL;
                self.set_active(i);
                self.dist[i] = 1;
            } else if r < -SATURATION_EPS {
                self.is_sink[i] = true;
                self.parent[i] = TERMINAL;
                self.set_active(i);
                self.dist[i] = 1;
            }
        }

        let mut current: Option<usize> = None;
        loop {
            let i = match current.take() {
                Some(i) if self.parent[i] != NONE => {
                    self.active[i] = false;
                    i
                }
                Some(i) => {
                    self.active[i] = false;
                    match self.next_active() {
                        Some(j) => j,
                        None => break,
                    }
                }
                None => match self.next_active() {
                    Some(j) => j,
                    None => break,
                },
            };

            let middle = self.grow(i);
            self.time += 1;

            if let Some(a) = middle {
                // keep i marked active so adoption does not enqueue it again
                self.active[i] = true;
                current = Some(i);
                flow += self.augment(a);
                while let Some(o) = self.orphans.pop_front() {
                    if self.is_sink[o] {
                        self.process_sink_orphan(o);
                    } else {
                        self.process_source_orphan(o);
                    }
                }
            }
        }
        flow
    }

    /// Expands the tree of `i` by one layer. Returns an arc from the source
    /// tree into the sink tree when the trees meet.
    fn grow(&mut self, i: usize) -> Option<usize> {
        let mut a = self.first[i];
        if !self.is_sink[i] {
            while a != NONE {
                if self.arcs[a].r_cap > SATURATION_EPS {
                    let j = self.arcs[a].head;
                    if self.parent[j] == NONE {
                        self.is_sink[j] = false;
                        self.parent[j] = a ^ 1;
                        self.ts[j] = self.ts[i];
                        self.dist[j] = self.dist[i] + 1;
                        self.set_active(j);
                    } else if self.is_sink[j] {
                        return Some(a);
                    } else if self.ts[j] <= self.ts[i] && self.dist[j] > self.dist[i] {
                        self.parent[j] = a ^ 1;
                        self.ts[j] = self.ts[i];
                        self.dist[j] = self.dist[i] + 1;
                    }
                }
                a = self.arcs[a].next;
            }
        } else {
            while a != NONE {
                if self.arcs[a ^ 1].r_cap > SATURATION_EPS {
                    let j = self.arcs[a].head;
                    if self.parent[j] == NONE {
                        self.is_sink[j] = true;
                        self.parent[j] = a ^ 1;
                        self.ts[j] = self.ts[i];
                        self.dist[j] = self.dist[i] + 1;
                        self.set_active(j);
                    } else if !self.is_sink[j] {
                        return Some(a ^ 1);
                    } else if self.ts[j] <= self.ts[i] && self.dist[j] > self.dist[i] {
                        self.parent[j] = a ^ 1;
                        self.ts[j] = self.ts[i];
                        self.dist[j] = self.dist[i] + 1;
                    }
                }
                a = self.arcs[a].next;
            }
        }
        None
    }

    fn augment(&mut self, middle: usize) -> f64 {
        let mut bottleneck = self.arcs[middle].r_cap;

        let mut i = self.arcs[middle ^ 1].head;
        loop {
            let a = self.parent[i];
            if a == TERMINAL {
                break;
            }
            bottleneck = bottleneck.min(self.arcs[a ^ 1].r_cap);
            i = self.arcs[a].head;
        }
        bottleneck = bottleneck.min(self.tr_cap[i]);

        let mut i = self.arcs[middle].head;
        loop {
            let a = self.parent[i];
            if a == TERMINAL {
                break;
            }
            bottleneck = bottleneck.min(self.arcs[a].r_cap);
            i = self.arcs[a].head;
        }
        bottleneck = bottleneck.min(-self.tr_cap[i]);

        self.arcs[middle ^ 1].r_cap += bottleneck;
        self.arcs[middle].r_cap -= bottleneck;

        let mut i = self.arcs[middle ^ 1].head;
        loop {
            let a = self.parent[i];
            if a == TERMINAL {
                break;
            }
            self.arcs[a].r_cap += bottleneck;
            self.arcs[a ^ 1].r_cap -= bottleneck;
            if self.arcs[a ^ 1].r_cap <= SATURATION_EPS {
                self.set_orphan_front(i);
            }
            i = self.arcs[a].head;
        }
        self.tr_cap[i] -= bottleneck;
        if self.tr_cap[i] <= SATURATION_EPS {
            self.set_orphan_front(i);
        }

        let mut i = self.arcs[middle].head;
        loop {
            let a = self.parent[i];
            if a == TERMINAL {
                break;
            }
            self.arcs[a ^ 1].r_cap += bottleneck;
            self.arcs[a].r_cap -= bottleneck;
            if self.arcs[a].r_cap <= SATURATION_EPS {
                self.set_orphan_front(i);
            }
            i = self.arcs[a].head;
        }
        self.tr_cap[i] += bottleneck;
        if self.tr_cap[i] >= -SATURATION_EPS {
            self.set_orphan_front(i);
        }

        bottleneck
    }

    /// Distance from `j` to its terminal through valid parents, or `None` if
    /// the chain ends in an orphan. Marks the chain with the current time.
    fn origin_distance(&mut self, start: usize) -> Option<u32> {
        let mut j = start;
        let mut d: u32 = 0;
        loop {
            if self.ts[j] == self.time {
                d += self.dist[j];
                break;
            }
            let a = self.parent[j];
            d += 1;
            if a == TERMINAL {
                self.ts[j] = self.time;
                self.dist[j] = 1;
                break;
            }
            if a == ORPHAN {
                return None;
            }
            j = self.arcs[a].head;
        }
        let mut dd = d;
        let mut j = start;
        while self.ts[j] != self.time {
            self.ts[j] = self.time;
            self.dist[j] = dd;
            dd -= 1;
            j = self.arcs[self.parent[j]].head;
        }
        Some(d)
    }

    fn process_source_orphan(&mut self, i: usize) {
        let mut best_arc = NONE;
        let mut best_d = INFINITE_DIST;
        let mut a0 = self.first[i];
        while a0 != NONE {
            if self.arcs[a0 ^ 1].r_cap > SATURATION_EPS {
                let j = self.arcs[a0].head;
                if !self.is_sink[j] && self.parent[j] != NONE {
                    if let Some(d) = self.origin_distance(j) {
                        if d < best_d {
                            best_arc = a0;
                            best_d = d;
                        }
                    }
                }
            }
            a0 = self.arcs[a0].next;
        }
        self.finish_orphan(i, best_arc, best_d, false);
    }

    fn process_sink_orphan(&mut self, i: usize) {
        let mut best_arc = NONE;
        let mut best_d = INFINITE_DIST;
        let mut a0 = self.first[i];
        while a0 != NONE {
            if self.arcs[a0].r_cap > SATURATION_EPS {
                let j = self.arcs[a0].head;
                if self.is_sink[j] && self.parent[j] != NONE {
                    if let Some(d) = self.origin_distance(j) {
                        if d < best_d {
                            best_arc = a0;
                            best_d = d;
                        }
                    }
                }
            }
            a0 = self.arcs[a0].next;
        }
        self.finish_orphan(i, best_arc, best_d, true);
    }

    fn finish_orphan(&mut self, i: usize, best_arc: usize, best_d: u32, sink_tree: bool) {
        self.parent[i] = best_arc;
        if best_arc != NONE {
            self.ts[i] = self.time;
            self.dist[i] = best_d + 1;
            return;
        }
        // no valid parent: free the node and release its children
        let mut a0 = self.first[i];
        while a0 != NONE {
            let j = self.arcs[a0].head;
            let pa = self.parent[j];
            if self.is_sink[j] == sink_tree && pa != NONE {
                let residual_to_i = if sink_tree {
                    self.arcs[a0].r_cap
                } else {
                    self.arcs[a0 ^ 1].r_cap
                };
                if residual_to_i > SATURATION_EPS {
                    self.set_active(j);
                }
                if pa != TERMINAL && pa != ORPHAN && self.arcs[pa].head == i {
                    self.set_orphan_rear(j);
                }
            }
            a0 = self.arcs[a0].next;
        }
    }

    fn set_active(&mut self, i: usize) {
        if !self.active[i] {
            self.active[i] = true;
            self.queue.push_back(i);
        }
    }

    fn next_active(&mut self) -> Option<usize> {
        while let Some(i) = self.queue.pop_front() {
            self.active[i] = false;
            if self.parent[i] != NONE {
                return Some(i);
            }
        }
        None
    }

    fn set_orphan_front(&mut self, i: usize) {
        self.parent[i] = ORPHAN;
        self.orphans.push_front(i);
    }

    fn set_orphan_rear(&mut self, i: usize) {
        self.parent[i] = ORPHAN;
        self.orphans.push_back(i);
    }

    /// DIMACS max-flow text. Nodes are numbered from 1, the source is `n + 1`
    /// and the sink `n + 2`; zero-capacity arcs are omitted.
    pub fn to_dimacs(&self) -> String {
        let n = self.node_count();
        let mut lines = Vec::new();
        for u in 0..n {
            if self.source_cap[u] > 0.0 {
                lines.push(format!("a {} {} {}", n + 1, u + 1, self.source_cap[u]));
            }
            if self.sink_cap[u] > 0.0 {
                lines.push(format!("a {} {} {}", u + 1, n + 2, self.sink_cap[u]));
            }
        }
        for (a, arc) in self.arcs.iter().enumerate() {
            if arc.cap > 0.0 {
                let tail = self.arcs[a ^ 1].head;
                lines.push(format!("a {} {} {}", tail + 1, arc.head + 1, arc.cap));
            }
        }
        let mut out = String::new();
        writeln!(out, "p max {} {}", n + 2, lines.len()).unwrap();
        writeln!(out, "n {} s", n + 1).unwrap();
        writeln!(out, "n {} t", n + 2).unwrap();
        for l in lines {
            out.push_str(&l);
            out.push('\n');
        }
        out
    }

    /// Parses DIMACS max-flow text. Arcs touching the terminals become
    /// terminal capacities; other arcs become one-directional edges.
    pub fn from_dimacs(text: &str) -> Result<FlowNetwork> {
        let bad = |l: &str| SegError::Format(format!("bad DIMACS line {l:?}"));
        let mut total = None;
        let (mut s, mut t) = (None, None);
        let mut arcs = Vec::new();
        for line in text.lines() {
            let parts: Vec<&str> = line.split_whitespace().collect();
            match parts.as_slice() {
                [] | ["c", ..] => {}
                ["p", "max", n, _m] => total = Some(n.parse::<usize>().map_err(|_| bad(line))?),
                ["n", id, "s"] => s = Some(id.parse::<usize>().map_err(|_| bad(line))?),
                ["n", id, "t"] => t = Some(id.parse::<usize>().map_err(|_| bad(line))?),
                ["a", u, v, c] => arcs.push((
                    u.parse::<usize>().map_err(|_| bad(line))?,
                    v.parse::<usize>().map_err(|_| bad(line))?,
                    c.parse::<f64>().map_err(|_| bad(line))?,
                )),
                _ => return Err(bad(line)),
            }
        }
        let total = total.ok_or_else(|| SegError::Format("missing problem line".into()))?;
        let (s, t) = match (s, t) {
            (Some(s), Some(t)) => (s, t),
            _ => return Err(SegError::Format("missing terminal designators".into())),
        };
        // non-terminal DIMACS ids map to dense indices in increasing order
        let index: Vec<Option<usize>> = {
            let mut next = 0;
            (0..=total)
                .map(|id| {
                    if id == 0 || id == s || id == t {
                        None
                    } else {
                        next += 1;
                        Some(next - 1)
                    }
                })
                .collect()
        };
        let lookup = |id: usize| -> Result<Option<usize>> {
            index
                .get(id)
                .copied()
                .ok_or_else(|| SegError::Format(format!("node {id} out of range")))
        };
        let mut net = FlowNetwork::new();
        net.add_node_batch(total.saturating_sub(2));
        for (u, v, c) in arcs {
            match (lookup(u)?, lookup(v)?) {
                (None, Some(j)) if u == s => net.add_terminal(j, c, 0.0)?,
                (Some(i), None) if v == t => net.add_terminal(i, 0.0, c)?,
                (Some(i), Some(j)) => net.add_edge(i, j, c, 0.0)?,
                (None, None) if u == s && v == t => {
                    return Err(SegError::Format("direct source-sink arcs unsupported".into()))
                }
                _ => {}
            }
        }
        Ok(net)
    }
}
