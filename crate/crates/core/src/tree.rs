//! L_p-nested functions as trees.
//!
//! An [`LpTree`] is a cascade of L_p-norms: every inner node computes the
//! `p`-norm of its children's values and every leaf reads `|x_i|` for one
//! coordinate. Leaves carry only their coordinate index (the exponent of a
//! single variable cancels, so it is fixed to one implicitly).
//!
//! Trees use a canonical layout: leaves cover `0..n` in left-to-right order,
//! so every subtree spans a contiguous range of coordinates. Permutations are
//! absorbed by the linear transform of the model.
//!
//! Textual form:
//!
//! ```text
//! tree := node
//! node := leaf | "(" REAL ws node (ws node)+ ")"
//! leaf := UINT
//! ```
//!
//! e.g. `(2.0 0 (1.0 1 2))` is `(|x0|^2 + (|x1| + |x2|)^2)^(1/2)`.

use std::fmt;
use std::ops::Range;

use rand::Rng;

use crate::error::{check_dim, Error, Result};

/// Lower bound applied to every exponent.
pub const P_MIN: f64 = 1e-3;
/// Upper bound applied to every exponent.
pub const P_MAX: f64 = 1e3;

/// Path from the root to a node: the sequence of 0-based child positions.
/// The root is the empty path.
pub type NodeId = Vec<usize>;

/// Recursive tree node.
#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    Leaf(usize),
    Inner { p: f64, children: Vec<Node> },
}

impl Node {
    pub fn inner(p: f64, children: Vec<Node>) -> Node {
        Node::Inner { p, children }
    }

    fn leaf_count(&self) -> usize {
        match self {
            Node::Leaf(_) => 1,
            Node::Inner { children, .. } => children.iter().map(Node::leaf_count).sum(),
        }
    }
}

/// Flattened per-node metadata, stored in pre-order.
#[derive(Clone, Debug)]
pub struct NodeInfo {
    /// Exponent of an inner node, `None` for leaves.
    pub p: Option<f64>,
    /// Indices (into the pre-order node list) of the children.
    pub children: Vec<usize>,
    pub parent: Option<usize>,
    /// Coordinates covered by the subtree.
    pub leaves: Range<usize>,
    pub id: NodeId,
}

impl NodeInfo {
    pub fn is_leaf(&self) -> bool {
        self.p.is_none()
    }

    /// Number of leaves under this node (`n_I`).
    pub fn leaf_count(&self) -> usize {
        self.leaves.len()
    }
}

/// An L_p-nested function.
#[derive(Clone, Debug)]
pub struct LpTree {
    root: Node,
    nodes: Vec<NodeInfo>,
    inner: Vec<usize>,
    n: usize,
}

impl PartialEq for LpTree {
    fn eq(&self, other: &Self) -> bool {
        self.root == other.root
    }
}

/// Values `v_I = f_I(x_I)` at every node, indexed in pre-order.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeValues {
    values: Vec<f64>,
}

impl NodeValues {
    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// Value at node `id`, if the node exists.
    pub fn get(&self, tree: &LpTree, id: &[usize]) -> Option<f64> {
        tree.node_index(id).map(|i| self.values[i])
    }

    pub fn root(&self) -> f64 {
        self.values[0]
    }
}

impl LpTree {
    /// Validates `root` and builds the tree. Exponents are clamped into
    /// `[P_MIN, P_MAX]`.
    pub fn new(root: Node) -> Result<LpTree> {
        let root = clamp_exponents(root)?;
        if matches!(root, Node::Leaf(_)) {
            return Err(Error::InvalidTree(
                "the root must be an inner node".to_string(),
            ));
        }
        let mut leaves = Vec::new();
        collect_leaves(&root, &mut leaves);
        validate_leaves(&leaves)?;
        let n = leaves.len();
        let mut nodes = Vec::new();
        let mut next_leaf = 0;
        flatten(&root, None, Vec::new(), &mut next_leaf, &mut nodes)?;
        let inner = (0..nodes.len()).filter(|&i| !nodes[i].is_leaf()).collect();
        Ok(LpTree {
            root,
            nodes,
            inner,
            n,
        })
    }

    /// Flat L_p-norm over `n ≥ 2` coordinates.
    pub fn flat(n: usize, p: f64) -> Result<LpTree> {
        LpTree::new(Node::inner(p, (0..n).map(Node::Leaf).collect()))
    }

    pub fn parse(text: &str) -> Result<LpTree> {
        let mut parser = Parser::new(text);
        let node = parser.node()?;
        parser.skip_ws();
        if parser.pos < parser.bytes.len() {
            return Err(parser.error("trailing input after tree"));
        }
        LpTree::new(node)
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    /// Dimension of the ambient space (number of leaves).
    pub fn n(&self) -> usize {
        self.n
    }

    /// All nodes in pre-order; index 0 is the root.
    pub fn nodes(&self) -> &[NodeInfo] {
        &self.nodes
    }

    pub fn node(&self, index: usize) -> &NodeInfo {
        &self.nodes[index]
    }

    /// Pre-order indices of the inner nodes. Every per-inner-node vector in
    /// this crate (exponents, gradients) follows this order.
    pub fn inner_indices(&self) -> &[usize] {
        &self.inner
    }

    pub fn inner_count(&self) -> usize {
        self.inner.len()
    }

    pub fn inner_ids(&self) -> Vec<NodeId> {
        self.inner.iter().map(|&i| self.nodes[i].id.clone()).collect()
    }

    pub fn node_index(&self, id: &[usize]) -> Option<usize> {
        let mut idx = 0;
        for &k in id {
            idx = *self.nodes[idx].children.get(k)?;
        }
        Some(idx)
    }

    /// Exponents of the inner nodes in pre-order.
    pub fn exponents(&self) -> Vec<f64> {
        self.inner
            .iter()
            .map(|&i| self.nodes[i].p.expect("inner node"))
            .collect()
    }

    /// Exponent of the root node.
    pub fn root_p(&self) -> f64 {
        self.nodes[0].p.expect("root is inner")
    }

    /// Same topology with new exponents (pre-order over inner nodes).
    pub fn with_exponents(&self, ps: &[f64]) -> Result<LpTree> {
        check_dim(self.inner.len(), ps.len())?;
        let mut it = ps.iter().copied();
        fn rebuild(node: &Node, it: &mut impl Iterator<Item = f64>) -> Node {
            match node {
                Node::Leaf(i) => Node::Leaf(*i),
                Node::Inner { children, .. } => {
                    let p = it.next().expect("exponent count checked");
                    Node::Inner {
                        p,
                        children: children.iter().map(|c| rebuild(c, it)).collect(),
                    }
                }
            }
        }
        LpTree::new(rebuild(&self.root, &mut it))
    }

    /// The subtree under `index` as a standalone tree with leaves renumbered
    /// from zero. Returns `None` for leaves.
    pub fn subtree(&self, index: usize) -> Option<LpTree> {
        let mut id_node = &self.root;
        for &k in &self.nodes[index].id {
            match id_node {
                Node::Inner { children, .. } => id_node = &children[k],
                Node::Leaf(_) => unreachable!(),
            }
        }
        if let Node::Leaf(_) = id_node {
            return None;
        }
        let offset = self.nodes[index].leaves.start;
        fn shift(node: &Node, offset: usize) -> Node {
            match node {
                Node::Leaf(i) => Node::Leaf(i - offset),
                Node::Inner { p, children } => Node::Inner {
                    p: *p,
                    children: children.iter().map(|c| shift(c, offset)).collect(),
                },
            }
        }
        LpTree::new(shift(id_node, offset)).ok()
    }

    /// Evaluates `f(x)` and the values of every node.
    pub fn evaluate(&self, x: &[f64]) -> Result<(f64, NodeValues)> {
        check_dim(self.n, x.len())?;
        let mut values = vec![0.0; self.nodes.len()];
        let f = self.evaluate_into(x, &mut values);
        Ok((f, NodeValues { values }))
    }

    /// `f(x)` only.
    pub fn value(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.n, x.len())?;
        let mut values = vec![0.0; self.nodes.len()];
        Ok(self.evaluate_into(x, &mut values))
    }

    /// Allocation-free evaluation. `values` must hold one slot per node and
    /// `x` must have length `n`.
    pub fn evaluate_into(&self, x: &[f64], values: &mut [f64]) -> f64 {
        debug_assert_eq!(values.len(), self.nodes.len());
        for idx in (0..self.nodes.len()).rev() {
            let node = &self.nodes[idx];
            values[idx] = match node.p {
                None => x[node.leaves.start].abs(),
                Some(p) => p_norm(node.children.iter().map(|&c| values[c]), p),
            };
        }
        values[0]
    }

    /// `∂v_root/∂v_I` for every node given node values. Zero wherever the
    /// node value is zero.
    pub(crate) fn chain_factors(&self, values: &[f64], out: &mut [f64]) {
        out[0] = 1.0;
        for idx in 0..self.nodes.len() {
            let node = &self.nodes[idx];
            if let Some(p) = node.p {
                let v = values[idx];
                for &c in &node.children {
                    let vc = values[c];
                    out[c] = if vc == 0.0 || out[idx] == 0.0 {
                        0.0
                    } else {
                        out[idx] * (vc / v).powf(p - 1.0)
                    };
                }
            }
        }
    }

    /// Gradient `∂f/∂y_i`. At `y_i = 0` the zero sub-derivative is used.
    pub fn gradient_x(&self, y: &[f64]) -> Result<Vec<f64>> {
        let (_, values) = self.evaluate(y)?;
        let mut chain = vec![0.0; self.nodes.len()];
        self.chain_factors(&values.values, &mut chain);
        let mut grad = vec![0.0; self.n];
        self.gradient_x_from(y, &chain, &mut grad);
        Ok(grad)
    }

    pub(crate) fn gradient_x_from(&self, y: &[f64], chain: &[f64], grad: &mut [f64]) {
        for (idx, node) in self.nodes.iter().enumerate() {
            if node.is_leaf() {
                let i = node.leaves.start;
                grad[i] = if y[i] == 0.0 {
                    0.0
                } else {
                    chain[idx] * y[i].signum()
                };
            }
        }
    }

    /// Gradient `∂f/∂p_J` for every inner node `J` (pre-order).
    pub fn gradient_p(&self, x: &[f64]) -> Result<Vec<f64>> {
        let (_, values) = self.evaluate(x)?;
        let mut chain = vec![0.0; self.nodes.len()];
        self.chain_factors(&values.values, &mut chain);
        let mut grad = vec![0.0; self.inner.len()];
        self.gradient_p_from(&values.values, &chain, &mut grad);
        Ok(grad)
    }

    pub(crate) fn gradient_p_from(&self, values: &[f64], chain: &[f64], grad: &mut [f64]) {
        for (slot, &idx) in self.inner.iter().enumerate() {
            let node = &self.nodes[idx];
            let p = node.p.expect("inner node");
            let v = values[idx];
            grad[slot] = if v == 0.0 || chain[idx] == 0.0 {
                0.0
            } else {
                // v^{-p} Σ v_k^p log v_k − log v  ==  Σ w_k log(v_k / v), Σ w_k = 1
                let s: f64 = node
                    .children
                    .iter()
                    .map(|&c| {
                        let ratio = values[c] / v;
                        if ratio == 0.0 {
                            0.0
                        } else {
                            ratio.powf(p) * ratio.ln()
                        }
                    })
                    .sum();
                chain[idx] * v / p * s
            };
        }
    }

    /// Splices every inner node whose exponent is within `tol` of its
    /// parent's into the parent (children promoted, parent exponent kept).
    /// Chains are merged bottom-up.
    pub fn simplify(&self, tol: f64) -> LpTree {
        fn go(node: &Node, tol: f64) -> Node {
            match node {
                Node::Leaf(i) => Node::Leaf(*i),
                Node::Inner { p, children } => {
                    let mut out = Vec::with_capacity(children.len());
                    for child in children {
                        match go(child, tol) {
                            Node::Inner { p: pc, children: cc } if (pc - p).abs() <= tol => {
                                out.extend(cc)
                            }
                            other => out.push(other),
                        }
                    }
                    Node::Inner {
                        p: *p,
                        children: out,
                    }
                }
            }
        }
        LpTree::new(go(&self.root, tol)).expect("splicing preserves tree invariants")
    }

    /// Tree with the inner nodes at `collapsed` (pre-order indices) turned
    /// into leaves. Returns the reduced tree and, for each reduced leaf in
    /// coordinate order, the original node index it stands for.
    pub(crate) fn collapse(&self, collapsed: &[usize]) -> Result<(LpTree, Vec<usize>)> {
        for (i, &a) in collapsed.iter().enumerate() {
            if self.nodes[a].is_leaf() {
                return Err(Error::InvalidTree(format!(
                    "collapsed node {:?} is a leaf",
                    self.nodes[a].id
                )));
            }
            for &b in &collapsed[i + 1..] {
                let (ra, rb) = (&self.nodes[a].leaves, &self.nodes[b].leaves);
                if ra.start < rb.end && rb.start < ra.end {
                    return Err(Error::InvalidTree(
                        "collapsed nodes must be disjoint subtrees".to_string(),
                    ));
                }
            }
        }
        let mut origin = Vec::new();
        fn go(
            tree: &LpTree,
            idx: usize,
            collapsed: &[usize],
            origin: &mut Vec<usize>,
        ) -> Node {
            let info = &tree.nodes[idx];
            if info.is_leaf() || collapsed.contains(&idx) {
                origin.push(idx);
                return Node::Leaf(origin.len() - 1);
            }
            Node::Inner {
                p: info.p.expect("inner"),
                children: info
                    .children
                    .iter()
                    .map(|&c| go(tree, c, collapsed, origin))
                    .collect(),
            }
        }
        let root = go(self, 0, collapsed, &mut origin);
        Ok((LpTree::new(root)?, origin))
    }
}

impl fmt::Display for LpTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn write(node: &Node, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            match node {
                Node::Leaf(i) => write!(f, "{i}"),
                Node::Inner { p, children } => {
                    write!(f, "({p:?}")?;
                    for c in children {
                        f.write_str(" ")?;
                        write(c, f)?;
                    }
                    f.write_str(")")
                }
            }
        }
        write(&self.root, f)
    }
}

impl std::str::FromStr for LpTree {
    type Err = Error;

    fn from_str(s: &str) -> Result<LpTree> {
        LpTree::parse(s)
    }
}

/// `‖v‖_p`, scaled by the largest entry to avoid overflow for large `p`.
pub(crate) fn p_norm(values: impl Iterator<Item = f64> + Clone, p: f64) -> f64 {
    let max = values.clone().fold(0.0_f64, f64::max);
    if max == 0.0 || !max.is_finite() {
        return max;
    }
    let s: f64 = values.map(|v| (v / max).powf(p)).sum();
    max * s.powf(1.0 / p)
}

fn clamp_exponents(node: Node) -> Result<Node> {
    match node {
        Node::Leaf(i) => Ok(Node::Leaf(i)),
        Node::Inner { p, children } => {
            if !(p > 0.0) || !p.is_finite() {
                return Err(Error::InvalidTree(format!(
                    "exponent must be a positive finite number, got {p}"
                )));
            }
            if children.len() < 2 {
                return Err(Error::InvalidTree(format!(
                    "inner node with exponent {p} has {} child(ren); at least two are required",
                    children.len()
                )));
            }
            Ok(Node::Inner {
                p: p.clamp(P_MIN, P_MAX),
                children: children
                    .into_iter()
                    .map(clamp_exponents)
                    .collect::<Result<_>>()?,
            })
        }
    }
}

fn collect_leaves(node: &Node, out: &mut Vec<usize>) {
    match node {
        Node::Leaf(i) => out.push(*i),
        Node::Inner { children, .. } => children.iter().for_each(|c| collect_leaves(c, out)),
    }
}

fn validate_leaves(leaves: &[usize]) -> Result<()> {
    let n = leaves.len();
    let mut seen = vec![false; n];
    for &i in leaves {
        if i >= n {
            let missing = (0..n).find(|&k| !leaves.contains(&k)).unwrap_or(0);
            return Err(Error::InvalidTree(format!(
                "leaf index {i} out of range for {n} leaves (index {missing} is missing)"
            )));
        }
        if seen[i] {
            return Err(Error::InvalidTree(format!("duplicate leaf index {i}")));
        }
        seen[i] = true;
    }
    if let Some(pos) = leaves.iter().enumerate().position(|(k, &i)| k != i) {
        return Err(Error::InvalidTree(format!(
            "leaf indices must appear in order 0..{}; found {} at position {pos}",
            n - 1,
            leaves[pos]
        )));
    }
    Ok(())
}

fn flatten(
    node: &Node,
    parent: Option<usize>,
    id: NodeId,
    next_leaf: &mut usize,
    out: &mut Vec<NodeInfo>,
) -> Result<usize> {
    let idx = out.len();
    let start = *next_leaf;
    let count = node.leaf_count();
    out.push(NodeInfo {
        p: None,
        children: Vec::new(),
        parent,
        leaves: start..start + count,
        id: id.clone(),
    });
    match node {
        Node::Leaf(_) => *next_leaf += 1,
        Node::Inner { p, children } => {
            let mut kids = Vec::with_capacity(children.len());
            for (k, c) in children.iter().enumerate() {
                let mut cid = id.clone();
                cid.push(k);
                kids.push(flatten(c, Some(idx), cid, next_leaf, out)?);
            }
            out[idx].p = Some(*p);
            out[idx].children = kids;
        }
    }
    Ok(idx)
}

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        Parser {
            bytes: text.as_bytes(),
            pos: 0,
        }
    }

    fn error(&self, msg: &str) -> Error {
        Error::Syntax {
            pos: self.pos,
            msg: msg.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn token(&mut self) -> &'a str {
        let start = self.pos;
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b.is_ascii_whitespace() || b == b'(' || b == b')' {
                break;
            }
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos]).expect("ascii boundaries")
    }

    fn node(&mut self) -> Result<Node> {
        self.skip_ws();
        match self.bytes.get(self.pos) {
            None => Err(self.error("unexpected end of input")),
            Some(b')') => Err(self.error("unexpected ')'")),
            Some(b'(') => {
                self.pos += 1;
                self.skip_ws();
                let at = self.pos;
                let tok = self.token();
                if tok.is_empty() {
                    return Err(self.error("expected an exponent after '('"));
                }
                let p: f64 = tok.parse().map_err(|_| Error::Syntax {
                    pos: at,
                    msg: format!("invalid exponent '{tok}'"),
                })?;
                if !p.is_finite() {
                    return Err(Error::Syntax {
                        pos: at,
                        msg: format!("invalid exponent '{tok}'"),
                    });
                }
                if p <= 0.0 {
                    return Err(Error::InvalidTree(format!(
                        "exponent must be positive, got {p} at byte {at}"
                    )));
                }
                let mut children = Vec::new();
                loop {
                    self.skip_ws();
                    match self.bytes.get(self.pos) {
                        None => return Err(self.error("missing ')'")),
                        Some(b')') => {
                            self.pos += 1;
                            break;
                        }
                        Some(_) => children.push(self.node()?),
                    }
                }
                Ok(Node::Inner { p, children })
            }
            Some(_) => {
                let at = self.pos;
                let tok = self.token();
                tok.parse::<usize>().map(Node::Leaf).map_err(|_| Error::Syntax {
                    pos: at,
                    msg: format!("invalid leaf index '{tok}'"),
                })
            }
        }
    }
}

/// Random tree over `n ≥ 2` leaves with exponents drawn uniformly from
/// `p_range`. Inner nodes get between two and four children.
pub fn random_tree<R: Rng + ?Sized>(rng: &mut R, n: usize, p_range: Range<f64>) -> LpTree {
    assert!(n >= 2, "a tree needs at least two leaves");
    fn build<R: Rng + ?Sized>(rng: &mut R, start: usize, len: usize, p_range: &Range<f64>) -> Node {
        if len == 1 {
            return Node::Leaf(start);
        }
        let ell = rng.random_range(2..=len.min(4));
        // ell - 1 distinct cut points in 1..len
        let mut cuts: Vec<usize> = (1..len).collect();
        for i in 0..ell - 1 {
            let j = rng.random_range(i..cuts.len());
            cuts.swap(i, j);
        }
        let mut cuts = cuts[..ell - 1].to_vec();
        cuts.sort_unstable();
        let mut bounds = vec![0];
        bounds.extend(cuts);
        bounds.push(len);
        let p = rng.random_range(p_range.clone());
        let children = bounds
            .windows(2)
            .map(|w| build(rng, start + w[0], w[1] - w[0], p_range))
            .collect();
        Node::Inner { p, children }
    }
    LpTree::new(build(rng, 0, n, &p_range)).expect("random trees are valid")
}
