use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use serde::{Deserialize, Serialize};

use super::histogram::{BinnedMatrix, MISSING_BIN};
use super::split::{best_from_histograms, node_histograms, BinStat, Criterion, SplitInfo};
use super::{Node, Tree};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Growth {
    /// Breadth-first expansion up to the depth cap.
    LevelWise,
    /// Always expands the frontier leaf with the largest gain.
    LeafWise,
}

pub(crate) struct GrowSpec<'a> {
    pub crit: &'a dyn Criterion,
    pub growth: Growth,
    pub max_depth: Option<usize>,
    pub max_leaves: Option<usize>,
}

struct Pending {
    id: usize,
    depth: usize,
    rows: Vec<u32>,
    split: SplitInfo,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Pending {}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Pending {
    // max-heap: larger gain first, then the older node
    fn cmp(&self, other: &Self) -> Ordering {
        self.split
            .gain
            .total_cmp(&other.split.gain)
            .then_with(|| other.id.cmp(&self.id))
    }
}

enum Frontier {
    Fifo(VecDeque<Pending>),
    Heap(BinaryHeap<Pending>),
}

impl Frontier {
    fn push(&mut self, p: Pending) {
        match self {
            Frontier::Fifo(q) => q.push_back(p),
            Frontier::Heap(h) => h.push(p),
        }
    }

    fn pop(&mut self) -> Option<Pending> {
        match self {
            Frontier::Fifo(q) => q.pop_front(),
            Frontier::Heap(h) => h.pop(),
        }
    }
}

pub(crate) fn row_stat(rows: &[u32], a: &[f64], b: &[f64]) -> BinStat {
    rows.iter().fold(BinStat::default(), |acc, &r| {
        acc + BinStat {
            a: a[r as usize],
            b: b[r as usize],
            n: 1,
        }
    })
}

/// Grows one tree over `rows` using per-row statistics `(a, b)`.
/// `features` is called once per evaluated node and returns the candidate
/// feature set; `leaf_value` maps a node statistic to its output.
pub(crate) fn grow_tree(
    binned: &BinnedMatrix,
    rows: Vec<u32>,
    a: &[f64],
    b: &[f64],
    spec: &GrowSpec<'_>,
    leaf_value: &dyn Fn(&BinStat) -> f64,
    features: &mut dyn FnMut() -> Vec<usize>,
) -> Tree {
    let root = row_stat(&rows, a, b);
    let mut nodes = vec![Node::Leaf {
        value: leaf_value(&root),
        cover: root.b,
    }];
    let mut frontier = match spec.growth {
        Growth::LevelWise => Frontier::Fifo(VecDeque::new()),
        Growth::LeafWise => Frontier::Heap(BinaryHeap::new()),
    };
    let max_leaves = spec.max_leaves.unwrap_or(usize::MAX);
    let mut evaluate = |rows: &[u32], depth: usize| -> Option<SplitInfo> {
        if rows.len() < 2 || spec.max_depth.is_some_and(|d| depth >= d) || max_leaves < 2 {
            return None;
        }
        let feats = features();
        let hists = node_histograms(binned, rows, a, b, &feats);
        best_from_histograms(binned, &hists, &feats, spec.crit)
    };
    if let Some(split) = evaluate(&rows, 0) {
        frontier.push(Pending { id: 0, depth: 0, rows, split });
    }
    let mut n_leaves = 1;
    while n_leaves < max_leaves {
        let Some(p) = frontier.pop() else { break };
        let s = p.split;
        let col = binned.column(s.feature);
        let (left_rows, right_rows): (Vec<u32>, Vec<u32>) = p.rows.iter().partition(|&&r| match col[r as usize] {
            MISSING_BIN => s.default_left,
            bin => bin < s.bin,
        });
        let (l, r) = (nodes.len(), nodes.len() + 1);
        let cover = nodes[p.id].cover();
        nodes[p.id] = Node::Split {
            feature: s.feature,
            threshold: s.threshold,
            default_left: s.default_left,
            left: l,
            right: r,
            gain: s.gain,
            cover,
        };
        for stat in [&s.left, &s.right] {
            nodes.push(Node::Leaf {
                value: leaf_value(stat),
                cover: stat.b,
            });
        }
        n_leaves += 1;
        for (id, child_rows) in [(l, left_rows), (r, right_rows)] {
            if let Some(split) = evaluate(&child_rows, p.depth + 1) {
                frontier.push(Pending {
                    id,
                    depth: p.depth + 1,
                    rows: child_rows,
                    split,
                });
            }
        }
    }
    Tree { nodes }
}
