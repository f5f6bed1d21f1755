//! Road network: intersections, directed links, shortest paths and the
//! undirected intersection-adjacency used for dispatcher neighborhoods.
//!
//! Link travel times are free-flow (`length / speed`) and never change, so
//! all-pairs travel times, next-hop links and hop distances are computed once
//! at construction and shared read-only by every dispatcher.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type NodeId = u32;
pub type LinkId = u32;

/// Relative tolerance used when comparing accumulated travel times.
const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub id: LinkId,
    pub from: NodeId,
    pub to: NodeId,
    /// Meters.
    pub length: f64,
    /// Meters per second.
    pub speed: f64,
    /// Seconds, always `length / speed`.
    pub travel_time: f64,
}

impl Link {
    pub fn new(id: LinkId, from: NodeId, to: NodeId, length: f64, speed: f64) -> Self {
        Link {
            id,
            from,
            to,
            length,
            speed,
            travel_time: length / speed,
        }
    }
}

/// Result of a shortest-path query.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Path {
    pub links: Vec<LinkId>,
    pub travel_time: f64,
    pub distance: f64,
}

/// Parameters of the synthetic Manhattan grid generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    pub block_m: f64,
    pub speed_mps: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            rows: 10,
            cols: 10,
            block_m: 200.0,
            speed_mps: 10.0,
        }
    }
}

/// Where a network comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NetworkSpec {
    Grid(GridSpec),
    File(std::path::PathBuf),
}

#[derive(Clone)]
pub struct RoadNetwork {
    nodes: Vec<Node>,
    links: Vec<Link>,
    node_index: BTreeMap<NodeId, usize>,
    link_index: BTreeMap<LinkId, usize>,
    /// Per node (dense index): outbound link indices sorted by link id.
    outbound: Vec<Vec<usize>>,
    /// Per node (dense index): inbound link indices sorted by link id.
    inbound: Vec<Vec<usize>>,
    /// Undirected neighbor node indices, ascending.
    neighbors: Vec<Vec<usize>>,
    /// Row-major `n * n` free-flow travel times; `INFINITY` when unreachable.
    times: Vec<f64>,
    /// Row-major `n * n` next link index on the canonical shortest path.
    next_hop: Vec<Option<usize>>,
    /// Row-major `n * n` undirected hop counts; `u32::MAX` when disconnected.
    hops: Vec<u32>,
}

impl fmt::Debug for RoadNetwork {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RoadNetwork")
            .field("nodes", &self.nodes.len())
            .field("links", &self.links.len())
            .finish()
    }
}

#[derive(PartialEq)]
struct HeapEntry {
    time: f64,
    node: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl RoadNetwork {
    /// Builds a network after structural validation (unique ids, known
    /// endpoints, positive lengths and speeds, no self-loops).
    pub fn new(mut nodes: Vec<Node>, mut links: Vec<Link>) -> Result<Self> {
        nodes.sort_by_key(|n| n.id);
        links.sort_by_key(|l| l.id);

        let mut node_index = BTreeMap::new();
        for (i, n) in nodes.iter().enumerate() {
            if !n.x.is_finite() || !n.y.is_finite() {
                return Err(Error::Validation(format!(
                    "node {} has non-finite coordinates",
                    n.id
                )));
            }
            if node_index.insert(n.id, i).is_some() {
                return Err(Error::Validation(format!("duplicate node id {}", n.id)));
            }
        }

        let mut link_index = BTreeMap::new();
        for (i, l) in links.iter_mut().enumerate() {
            if link_index.insert(l.id, i).is_some() {
                return Err(Error::Validation(format!("duplicate link id {}", l.id)));
            }
            for end in [l.from, l.to] {
                if !node_index.contains_key(&end) {
                    return Err(Error::Validation(format!(
                        "link {} references unknown node {}",
                        l.id, end
                    )));
                }
            }
            if l.from == l.to {
                return Err(Error::Validation(format!("link {} is a self-loop", l.id)));
            }
            if !(l.length > 0.0 && l.length.is_finite()) {
                return Err(Error::Validation(format!(
                    "link {} has non-positive length {}",
                    l.id, l.length
                )));
            }
            if !(l.speed > 0.0 && l.speed.is_finite()) {
                return Err(Error::Validation(format!(
                    "link {} has non-positive speed {}",
                    l.id, l.speed
                )));
            }
            l.travel_time = l.length / l.speed;
        }

        let n = nodes.len();
        let mut outbound = vec![Vec::new(); n];
        let mut inbound = vec![Vec::new(); n];
        let mut neighbor_sets = vec![BTreeSet::new(); n];
        for (li, l) in links.iter().enumerate() {
            let a = node_index[&l.from];
            let b = node_index[&l.to];
            outbound[a].push(li);
            inbound[b].push(li);
            neighbor_sets[a].insert(b);
            neighbor_sets[b].insert(a);
        }
        let neighbors = neighbor_sets
            .into_iter()
            .map(|s| s.into_iter().collect())
            .collect();

        let mut net = RoadNetwork {
            nodes,
            links,
            node_index,
            link_index,
            outbound,
            inbound,
            neighbors,
            times: Vec::new(),
            next_hop: Vec::new(),
            hops: Vec::new(),
        };
        net.precompute();
        Ok(net)
    }

    /// Manhattan grid with bidirectional links between orthogonal neighbors.
    /// Node `r * cols + c` sits at `(c * block, r * block)`; link ids follow
    /// ascending source node, then ascending destination node.
    pub fn grid(spec: GridSpec) -> Result<Self> {
        let GridSpec {
            rows,
            cols,
            block_m,
            speed_mps,
        } = spec;
        if rows < 2 || cols < 2 {
            return Err(Error::Config(format!(
                "grid needs rows >= 2 and cols >= 2, got {rows}x{cols}"
            )));
        }
        let id = |r: usize, c: usize| (r * cols + c) as NodeId;
        let mut nodes = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                nodes.push(Node {
                    id: id(r, c),
                    x: c as f64 * block_m,
                    y: r as f64 * block_m,
                });
            }
        }
        let mut links = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                // ascending neighbor id: up, left, right, down
                let mut nbrs = Vec::with_capacity(4);
                if r > 0 {
                    nbrs.push(id(r - 1, c));
                }
                if c > 0 {
                    nbrs.push(id(r, c - 1));
                }
                if c + 1 < cols {
                    nbrs.push(id(r, c + 1));
                }
                if r + 1 < rows {
                    nbrs.push(id(r + 1, c));
                }
                for to in nbrs {
                    let lid = links.len() as LinkId;
                    links.push(Link::new(lid, id(r, c), to, block_m, speed_mps));
                }
            }
        }
        RoadNetwork::new(nodes, links)
    }

    /// A simple path graph `0 - 1 - ... - (n-1)` with bidirectional links.
    pub fn line(n: usize, spacing_m: f64, speed_mps: f64) -> Result<Self> {
        let nodes = (0..n)
            .map(|i| Node {
                id: i as NodeId,
                x: i as f64 * spacing_m,
                y: 0.0,
            })
            .collect();
        let mut links = Vec::new();
        for i in 0..n.saturating_sub(1) {
            let a = i as NodeId;
            let b = a + 1;
            let lid = links.len() as LinkId;
            links.push(Link::new(lid, a, b, spacing_m, speed_mps));
            links.push(Link::new(lid + 1, b, a, spacing_m, speed_mps));
        }
        RoadNetwork::new(nodes, links)
    }

    pub fn load(spec: &NetworkSpec) -> Result<Self> {
        match spec {
            NetworkSpec::Grid(g) => RoadNetwork::grid(*g),
            NetworkSpec::File(path) => RoadNetwork::from_file(path),
        }
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        RoadNetwork::parse(&text)
    }

    /// Parses the sectioned text format:
    ///
    /// ```text
    /// # comment
    /// NODES
    /// id,x,y
    /// LINKS
    /// id,from,to,length_m,speed_mps
    /// ```
    pub fn parse(text: &str) -> Result<Self> {
        enum Section {
            None,
            Nodes,
            Links,
        }
        let mut section = Section::None;
        let mut nodes = Vec::new();
        let mut links = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let tag = line.trim_start_matches('[').trim_end_matches(']');
            if tag.eq_ignore_ascii_case("nodes") {
                section = Section::Nodes;
                continue;
            }
            if tag.eq_ignore_ascii_case("links") {
                section = Section::Links;
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let parse_err = |msg: String| Error::Parse { line: line_no, msg };
            match section {
                Section::None => {
                    return Err(parse_err(format!(
                        "expected NODES or LINKS header, found {line:?}"
                    )))
                }
                Section::Nodes => {
                    if fields.len() != 3 {
                        return Err(parse_err(format!(
                            "node row needs 3 fields (id,x,y), found {}",
                            fields.len()
                        )));
                    }
                    nodes.push(Node {
                        id: parse_field(fields[0], "id", line_no)?,
                        x: parse_field(fields[1], "x", line_no)?,
                        y: parse_field(fields[2], "y", line_no)?,
                    });
                }
                Section::Links => {
                    if fields.len() != 5 {
                        return Err(parse_err(format!(
                            "link row needs 5 fields (id,from,to,length_m,speed_mps), found {}",
                            fields.len()
                        )));
                    }
                    links.push(Link::new(
                        parse_field(fields[0], "id", line_no)?,
                        parse_field(fields[1], "from", line_no)?,
                        parse_field(fields[2], "to", line_no)?,
                        parse_field(fields[3], "length_m", line_no)?,
                        parse_field(fields[4], "speed_mps", line_no)?,
                    ));
                }
            }
        }
        RoadNetwork::new(nodes, links)
    }

    /// Serializes to the sectioned text format accepted by [`RoadNetwork::parse`].
    pub fn to_text(&self) -> String {
        let mut out = String::from("NODES\n");
        for n in &self.nodes {
            out.push_str(&format!("{},{},{}\n", n.id, n.x, n.y));
        }
        out.push_str("LINKS\n");
        for l in &self.links {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                l.id, l.from, l.to, l.length, l.speed
            ));
        }
        out
    }

    /// Checks that every node can reach every other node. The error lists
    /// (up to 20) unreachable ordered pairs.
    pub fn check_strongly_connected(&self) -> Result<()> {
        let n = self.nodes.len();
        let mut missing = Vec::new();
        let mut total = 0usize;
        for a in 0..n {
            for b in 0..n {
                if a != b && !self.times[a * n + b].is_finite() {
                    total += 1;
                    if missing.len() < 20 {
                        missing.push(format!("{}->{}", self.nodes[a].id, self.nodes[b].id));
                    }
                }
            }
        }
        if total == 0 {
            Ok(())
        } else {
            Err(Error::Validation(format!(
                "network is not strongly connected; {total} unreachable pairs, e.g. {}",
                missing.join(", ")
            )))
        }
    }

    fn precompute(&mut self) {
        let n = self.nodes.len();
        self.times = vec![f64::INFINITY; n * n];
        for src in 0..n {
            let dist = self.dijkstra(src);
            self.times[src * n..(src + 1) * n].copy_from_slice(&dist);
        }
        // canonical next hop: smallest-id outbound link lying on some
        // time-minimal path
        self.next_hop = vec![None; n * n];
        for a in 0..n {
            for b in 0..n {
                if a == b || !self.times[a * n + b].is_finite() {
                    continue;
                }
                let target = self.times[a * n + b];
                for &li in &self.outbound[a] {
                    let l = &self.links[li];
                    let via = l.travel_time + self.times[self.node_index[&l.to] * n + b];
                    if approx_le(via, target) {
                        self.next_hop[a * n + b] = Some(li);
                        break;
                    }
                }
            }
        }
        self.hops = vec![u32::MAX; n * n];
        for src in 0..n {
            let row = &mut self.hops[src * n..(src + 1) * n];
            row[src] = 0;
            let mut queue = VecDeque::from([src]);
            while let Some(u) = queue.pop_front() {
                for &v in &self.neighbors[u] {
                    if row[v] == u32::MAX {
                        row[v] = row[u] + 1;
                        queue.push_back(v);
                    }
                }
            }
        }
    }

    fn dijkstra(&self, src: usize) -> Vec<f64> {
        let n = self.nodes.len();
        let mut dist = vec![f64::INFINITY; n];
        dist[src] = 0.0;
        let mut heap = BinaryHeap::new();
        heap.push(HeapEntry {
            time: 0.0,
            node: src,
        });
        while let Some(HeapEntry { time, node }) = heap.pop() {
            if time > dist[node] {
                continue;
            }
            for &li in &self.outbound[node] {
                let l = &self.links[li];
                let v = self.node_index[&l.to];
                let cand = time + l.travel_time;
                if cand < dist[v] {
                    dist[v] = cand;
                    heap.push(HeapEntry {
                        time: cand,
                        node: v,
                    });
                }
            }
        }
        dist
    }

    fn idx(&self, id: NodeId) -> Result<usize> {
        self.node_index
            .get(&id)
            .copied()
            .ok_or(Error::UnknownNode(id))
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().map(|n| n.id)
    }

    pub fn has_node(&self, id: NodeId) -> bool {
        self.node_index.contains_key(&id)
    }

    pub fn link(&self, id: LinkId) -> Result<&Link> {
        self.link_index
            .get(&id)
            .map(|&i| &self.links[i])
            .ok_or(Error::UnknownLink(id))
    }

    /// Free-flow travel time between two nodes; `INFINITY` when unreachable.
    ///
    /// Panics if either node is unknown.
    pub fn travel_time(&self, from: NodeId, to: NodeId) -> f64 {
        let n = self.nodes.len();
        self.times[self.node_index[&from] * n + self.node_index[&to]]
    }

    /// The first link of the canonical shortest path, `None` when
    /// `from == to` or unreachable.
    pub fn next_link(&self, from: NodeId, to: NodeId) -> Option<&Link> {
        let n = self.nodes.len();
        let a = *self.node_index.get(&from)?;
        let b = *self.node_index.get(&to)?;
        self.next_hop[a * n + b].map(|li| &self.links[li])
    }

    /// Time-minimal path; among equal-time paths the one taking the
    /// smallest-id link at every branch.
    pub fn shortest_path(&self, from: NodeId, to: NodeId) -> Result<Path> {
        self.idx(from)?;
        self.idx(to)?;
        let mut path = Path::default();
        if !self.travel_time(from, to).is_finite() {
            return Err(Error::NoPath { from, to });
        }
        let mut at = from;
        while at != to {
            let link = self.next_link(at, to).ok_or(Error::NoPath { from, to })?;
            path.links.push(link.id);
            path.travel_time += link.travel_time;
            path.distance += link.length;
            at = link.to;
        }
        Ok(path)
    }

    /// Undirected hop count between intersections (`None` if disconnected).
    pub fn hop_distance(&self, a: NodeId, b: NodeId) -> Option<u32> {
        let n = self.nodes.len();
        let h = self.hops[self.idx(a).ok()? * n + self.idx(b).ok()?];
        (h != u32::MAX).then_some(h)
    }

    /// All intersections within `k` undirected hops of `node`, itself included.
    pub fn k_hop_neighbors(&self, node: NodeId, k: u32) -> Result<BTreeSet<NodeId>> {
        let a = self.idx(node)?;
        let n = self.nodes.len();
        Ok((0..n)
            .filter(|&b| self.hops[a * n + b] <= k)
            .map(|b| self.nodes[b].id)
            .collect())
    }

    /// Directly connected intersections (either link direction), ascending.
    pub fn neighbors(&self, node: NodeId) -> Result<Vec<NodeId>> {
        let a = self.idx(node)?;
        Ok(self.neighbors[a]
            .iter()
            .map(|&b| self.nodes[b].id)
            .collect())
    }

    pub fn inbound_links(&self, node: NodeId) -> Result<Vec<LinkId>> {
        let a = self.idx(node)?;
        Ok(self.inbound[a]
            .iter()
            .map(|&li| self.links[li].id)
            .collect())
    }

    pub fn outbound_links(&self, node: NodeId) -> Result<Vec<LinkId>> {
        let a = self.idx(node)?;
        Ok(self.outbound[a]
            .iter()
            .map(|&li| self.links[li].id)
            .collect())
    }

    pub fn max_speed(&self) -> f64 {
        self.links.iter().map(|l| l.speed).fold(0.0, f64::max)
    }
}

fn approx_le(a: f64, b: f64) -> bool {
    a <= b + TIME_EPS * b.abs().max(1.0)
}

fn parse_field<T: std::str::FromStr>(s: &str, name: &str, line: usize) -> Result<T> {
    s.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("invalid {name} value {s:?}"),
    })
}
