//! Regression trees: a flat array form for prediction and a nested form for
//! serialization.

use serde::{Deserialize, Serialize};

use super::GbrtError;

/// Child reference: `>= 0` is an internal node, `< 0` is leaf `!child`.
type Child = i32;

#[derive(Debug, Clone, PartialEq)]
struct Internal {
    feature: u32,
    threshold: f64,
    /// Word range into `RegressionTree::cat_words` for categorical splits.
    cats: Option<(u32, u32)>,
    left: Child,
    right: Child,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree {
    internals: Vec<Internal>,
    /// Split gains, aligned with `internals`; kept apart to keep nodes small.
    gains: Vec<f64>,
    leaves: Vec<f64>,
    cat_words: Vec<u64>,
}

/// Nested, self-describing tree node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Node {
    Leaf {
        value: f64,
    },
    Numeric {
        feature: usize,
        threshold: f64,
        gain: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
    Categorical {
        feature: usize,
        left_categories: Vec<u32>,
        gain: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

impl RegressionTree {
    pub fn single_leaf(value: f64) -> Self {
        RegressionTree {
            internals: Vec::new(),
            gains: Vec::new(),
            leaves: vec![value],
            cat_words: Vec::new(),
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves.len()
    }

    pub fn leaf_values(&self) -> &[f64] {
        &self.leaves
    }

    /// Index of the leaf reached by `row` (indexed by feature position).
    #[inline]
    pub fn leaf_index(&self, row: &[f64]) -> usize {
        if self.internals.is_empty() {
            return 0;
        }
        let mut at: Child = 0;
        while at >= 0 {
            let n = &self.internals[at as usize];
            let x = row[n.feature as usize];
            let left = match n.cats {
                None => x <= n.threshold,
                Some((start, len)) => {
                    let words = &self.cat_words[start as usize..(start + len) as usize];
                    category_in(words, x)
                }
            };
            at = if left { n.left } else { n.right };
        }
        !at as usize
    }

    #[inline]
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.leaves[self.leaf_index(row)]
    }

    pub fn max_feature(&self) -> Option<usize> {
        self.internals.iter().map(|n| n.feature as usize).max()
    }

    pub fn to_node(&self) -> Node {
        if self.internals.is_empty() {
            return Node::Leaf {
                value: self.leaves[0],
            };
        }
        self.node_at(0)
    }

    fn node_at(&self, child: Child) -> Node {
        if child < 0 {
            return Node::Leaf {
                value: self.leaves[!child as usize],
            };
        }
        let n = &self.internals[child as usize];
        let left = Box::new(self.node_at(n.left));
        let right = Box::new(self.node_at(n.right));
        match n.cats {
            None => Node::Numeric {
                feature: n.feature as usize,
                threshold: n.threshold,
                gain: self.gains[child as usize],
                left,
                right,
            },
            Some((start, len)) => {
                let words = &self.cat_words[start as usize..(start + len) as usize];
                Node::Categorical {
                    feature: n.feature as usize,
                    left_categories: bitset_members(words),
                    gain: self.gains[child as usize],
                    left,
                    right,
                }
            }
        }
    }

    /// Rebuilds the flat form; leaves are numbered in depth-first,
    /// left-before-right order.
    pub fn from_node(node: &Node) -> Result<Self, GbrtError> {
        let mut t = RegressionTree {
            internals: Vec::new(),
            gains: Vec::new(),
            leaves: Vec::new(),
            cat_words: Vec::new(),
        };
        if let Node::Leaf { value } = node {
            t.leaves.push(check_finite(*value)?);
            return Ok(t);
        }
        t.push_node(node)?;
        Ok(t)
    }

    fn push_node(&mut self, node: &Node) -> Result<Child, GbrtError> {
        let (feature, threshold, cats, gain, left, right) = match node {
            Node::Leaf { value } => {
                self.leaves.push(check_finite(*value)?);
                return Ok(!((self.leaves.len() - 1) as i32));
            }
            Node::Numeric {
                feature,
                threshold,
                gain,
                left,
                right,
            } => (*feature, check_finite(*threshold)?, None, *gain, left, right),
            Node::Categorical {
                feature,
                left_categories,
                gain,
                left,
                right,
            } => {
                let words = bitset(left_categories);
                let start = self.cat_words.len() as u32;
                self.cat_words.extend(&words);
                (*feature, 0.0, Some((start, words.len() as u32)), *gain, left, right)
            }
        };
        let feature = u32::try_from(feature).map_err(|_| GbrtError::Model("feature index too large".into()))?;
        let idx = self.internals.len();
        self.internals.push(Internal {
            feature,
            threshold,
            cats,
            left: 0,
            right: 0,
        });
        self.gains.push(gain);
        let l = self.push_node(left)?;
        let r = self.push_node(right)?;
        self.internals[idx].left = l;
        self.internals[idx].right = r;
        Ok(idx as Child)
    }
}

fn check_finite(v: f64) -> Result<f64, GbrtError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(GbrtError::Model(format!("non-finite value {v} in tree")))
    }
}

fn bitset(codes: &[u32]) -> Vec<u64> {
    let words = codes.iter().max().map_or(0, |m| *m as usize / 64 + 1);
    let mut out = vec![0u64; words];
    for &c in codes {
        out[c as usize / 64] |= 1 << (c % 64);
    }
    out
}

fn bitset_members(words: &[u64]) -> Vec<u32> {
    (0..words.len() * 64)
        .filter(|&c| words[c / 64] & (1 << (c % 64)) != 0)
        .map(|c| c as u32)
        .collect()
}

/// Codes that are not small non-negative integers, or not in the set, go
/// right.
#[inline]
fn category_in(words: &[u64], x: f64) -> bool {
    if x.is_nan() || x < 0.0 || x.fract() != 0.0 {
        return false;
    }
    let c = x as usize;
    c < words.len() * 64 && words[c / 64] & (1 << (c % 64)) != 0
}

/// Incremental construction used during leaf-wise growth.
#[derive(Debug)]
pub(crate) struct TreeBuilder {
    tree: RegressionTree,
    /// Where each open leaf is attached: `(internal, is_left)`, or `None`
    /// for the root.
    slots: Vec<Option<(usize, bool)>>,
}

impl TreeBuilder {
    pub fn new() -> Self {
        TreeBuilder {
            tree: RegressionTree {
                internals: Vec::new(),
                gains: Vec::new(),
                leaves: Vec::new(),
                cat_words: Vec::new(),
            },
            slots: vec![None],
        }
    }

    /// Replaces open leaf `slot` by a split; returns the slots of the new
    /// left and right leaves.
    pub fn split(
        &mut self,
        slot: usize,
        feature: usize,
        threshold: f64,
        categories: Option<&[u32]>,
        gain: f64,
    ) -> (usize, usize) {
        let t = &mut self.tree;
        let cats = categories.map(|c| {
            let words = bitset(c);
            let start = t.cat_words.len() as u32;
            t.cat_words.extend(&words);
            (start, words.len() as u32)
        });
        let idx = t.internals.len();
        t.internals.push(Internal {
            feature: feature as u32,
            threshold: if cats.is_some() { 0.0 } else { threshold },
            cats,
            left: 0,
            right: 0,
        });
        t.gains.push(gain);
        if let Some((parent, is_left)) = self.slots[slot] {
            let p = &mut t.internals[parent];
            if is_left {
                p.left = idx as Child;
            } else {
                p.right = idx as Child;
            }
        }
        self.slots[slot] = Some((idx, true));
        self.slots.push(Some((idx, false)));
        (slot, self.slots.len() - 1)
    }

    /// Assigns a value to every open leaf; `values[slot]`. Leaves keep the
    /// slot numbering.
    pub fn finish(self, values: &[f64]) -> RegressionTree {
        let mut t = self.tree;
        assert_eq!(values.len(), self.slots.len());
        t.leaves = values.to_vec();
        for (leaf, slot) in self.slots.iter().enumerate() {
            if let Some((parent, is_left)) = *slot {
                let p = &mut t.internals[parent];
                if is_left {
                    p.left = !(leaf as i32);
                } else {
                    p.right = !(leaf as i32);
                }
            }
        }
        t
    }
}
