//! Knowledge-graph data model and the structural quantities the prior is
//! built from.
//!
//! A [`KnowledgeGraph`] is a rooted tree of [`Node`]s. Each node carries a
//! feature set and an extension, the set of products it covers. Extensions
//! nest along edges and the root covers the whole catalog. Graphs are
//! validated once at construction and immutable afterwards.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::borrow::Borrow;
use core::fmt;

use crate::error::{Error, KgError, Result};

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl Borrow<str> for $name {
            fn borrow(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(id: &str) -> Self {
                Self(id.to_string())
            }
        }

        impl From<String> for $name {
            fn from(id: String) -> Self {
                Self(id)
            }
        }
    };
}

string_id!(
    /// Identifier of a product in the catalog.
    ProductId
);
string_id!(
    /// Identifier of a taxonomy node (a meaning hypothesis).
    NodeId
);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Product {
    pub id: ProductId,
    pub label: String,
    pub features: BTreeSet<String>,
}

impl Product {
    pub fn new<'a>(
        id: impl Into<String>,
        label: impl Into<String>,
        features: impl IntoIterator<Item = &'a str>,
    ) -> Self {
        Self {
            id: ProductId::new(id),
            label: label.into(),
            features: features.into_iter().map(String::from).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub id: NodeId,
    pub label: String,
    pub parent: Option<NodeId>,
    pub features: BTreeSet<String>,
    pub extension: BTreeSet<ProductId>,
}

impl Node {
    pub fn new<'a>(
        id: impl Into<String>,
        label: impl Into<String>,
        parent: Option<&str>,
        features: impl IntoIterator<Item = &'a str>,
        extension: impl IntoIterator<Item = &'a str>,
    ) -> Self {
        Self {
            id: NodeId::new(id),
            label: label.into(),
            parent: parent.map(NodeId::from),
            features: features.into_iter().map(String::from).collect(),
            extension: extension.into_iter().map(ProductId::from).collect(),
        }
    }
}

/// A validated taxonomy. Products and nodes keep the order they were given
/// in; lookups go through id indexes built at construction.
#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    id: String,
    products: Vec<Product>,
    nodes: Vec<Node>,
    product_index: BTreeMap<ProductId, usize>,
    node_index: BTreeMap<NodeId, usize>,
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    root: usize,
    // membership[node][product]
    membership: Vec<Vec<bool>>,
}

impl PartialEq for KnowledgeGraph {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id && self.products == other.products && self.nodes == other.nodes
    }
}

impl KnowledgeGraph {
    /// Validates and indexes a taxonomy.
    pub fn new(
        id: impl Into<String>,
        products: Vec<Product>,
        nodes: Vec<Node>,
    ) -> Result<Self, KgError> {
        let id = id.into();
        if id.is_empty() {
            return Err(KgError::EmptyGraphId);
        }
        if products.is_empty() {
            return Err(KgError::NoProducts);
        }

        let mut product_index = BTreeMap::new();
        for (i, p) in products.iter().enumerate() {
            if p.id.as_str().is_empty() {
                return Err(KgError::EmptyProductId);
            }
            if p.features.is_empty() {
                return Err(KgError::EmptyProductFeatures(p.id.to_string()));
            }
            if product_index.insert(p.id.clone(), i).is_some() {
                return Err(KgError::DuplicateProduct(p.id.to_string()));
            }
        }

        let mut node_index = BTreeMap::new();
        for (i, n) in nodes.iter().enumerate() {
            if n.id.as_str().is_empty() {
                return Err(KgError::EmptyNodeId);
            }
            if node_index.insert(n.id.clone(), i).is_some() {
                return Err(KgError::DuplicateNode(n.id.to_string()));
            }
        }

        let mut membership = Vec::with_capacity(nodes.len());
        let mut parent = Vec::with_capacity(nodes.len());
        let mut root = None;
        for n in &nodes {
            if n.features.is_empty() {
                return Err(KgError::EmptyNodeFeatures(n.id.to_string()));
            }
            if n.extension.is_empty() {
                return Err(KgError::EmptyExtension(n.id.to_string()));
            }
            let mut row = vec![false; products.len()];
            for pid in &n.extension {
                let &pi = product_index
                    .get(pid)
                    .ok_or_else(|| KgError::DanglingProduct {
                        node: n.id.to_string(),
                        product: pid.to_string(),
                    })?;
                row[pi] = true;
            }
            membership.push(row);

            match &n.parent {
                None => {
                    if let Some(r) = root {
                        let first: &Node = &nodes[r];
                        return Err(KgError::MultipleRoots(
                            first.id.to_string(),
                            n.id.to_string(),
                        ));
                    }
                    root = Some(node_index[&n.id]);
                    parent.push(None);
                }
                Some(pid) => {
                    let &pi = node_index.get(pid).ok_or_else(|| KgError::DanglingParent {
                        node: n.id.to_string(),
                        parent: pid.to_string(),
                    })?;
                    parent.push(Some(pi));
                }
            }
        }
        if nodes.is_empty() {
            return Err(KgError::NoRoot);
        }

        // Walk every parent chain; a chain longer than the node count loops.
        for start in 0..nodes.len() {
            let mut cur = start;
            let mut hops = 0;
            while let Some(p) = parent[cur] {
                hops += 1;
                if hops > nodes.len() || p == start {
                    return Err(KgError::Cycle(nodes[start].id.to_string()));
                }
                cur = p;
            }
        }
        let root = root.ok_or(KgError::NoRoot)?;

        let mut children = vec![Vec::new(); nodes.len()];
        for (i, p) in parent.iter().enumerate() {
            if let Some(p) = *p {
                children[p].push(i);
                if let Some(missing) = nodes[i].extension.difference(&nodes[p].extension).next()
                {
                    return Err(KgError::ExtensionNotNested {
                        child: nodes[i].id.to_string(),
                        parent: nodes[p].id.to_string(),
                        product: missing.to_string(),
                    });
                }
            }
        }
        if let Some(missing) = products
            .iter()
            .find(|p| !nodes[root].extension.contains(&p.id))
        {
            return Err(KgError::RootNotComplete(missing.id.to_string()));
        }

        Ok(Self {
            id,
            products,
            nodes,
            product_index,
            node_index,
            parent,
            children,
            root,
            membership,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn products(&self) -> &[Product] {
        &self.products
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn root(&self) -> &Node {
        &self.nodes[self.root]
    }

    pub fn node(&self, id: &str) -> Result<&Node> {
        self.node_idx(id).map(|i| &self.nodes[i])
    }

    pub fn product(&self, id: &str) -> Result<&Product> {
        self.product_idx(id).map(|i| &self.products[i])
    }

    /// Products covered by `node`.
    pub fn ext(&self, node: &str) -> Result<&BTreeSet<ProductId>> {
        self.node(node).map(|n| &n.extension)
    }

    /// Nodes sharing `node`'s parent, excluding `node`. Empty for the root.
    pub fn siblings(&self, node: &str) -> Result<BTreeSet<NodeId>> {
        let i = self.node_idx(node)?;
        Ok(self
            .sibling_indices(i)
            .map(|s| self.nodes[s].id.clone())
            .collect())
    }

    pub fn children(&self, node: &str) -> Result<Vec<&NodeId>> {
        let i = self.node_idx(node)?;
        Ok(self.children[i].iter().map(|&c| &self.nodes[c].id).collect())
    }

    pub(crate) fn node_idx(&self, id: &str) -> Result<usize> {
        self.node_index
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownNode(id.to_string()))
    }

    pub(crate) fn product_idx(&self, id: &str) -> Result<usize> {
        self.product_index
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownProduct(id.to_string()))
    }

    pub(crate) fn covers(&self, node: usize, product: usize) -> bool {
        self.membership[node][product]
    }

    pub(crate) fn ext_len(&self, node: usize) -> usize {
        self.nodes[node].extension.len()
    }

    fn sibling_indices(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.parent[i]
            .into_iter()
            .flat_map(move |p| self.children[p].iter().copied())
            .filter(move |&s| s != i)
    }
}

/// `1 - |a ∩ b| / |a ∪ b|`. Two empty sets are at distance 0.
pub fn jaccard_distance<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        return 0.0;
    }
    1.0 - inter as f64 / union as f64
}

/// Settings for ontological distinctiveness.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdConfig {
    /// Lower bound on every node's score, so no hypothesis starts at zero.
    pub od_min: f64,
}

impl Default for OdConfig {
    fn default() -> Self {
        Self { od_min: 0.01 }
    }
}

impl OdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.od_min > 0.0 && self.od_min <= 1.0) {
            return Err(Error::InvalidConfig("od_min must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// How much a node's features set it apart from the alternatives next to it.
///
/// Nodes with siblings score the mean Jaccard distance to their siblings'
/// features. An only child is scored against its parent. The root has
/// nothing to contrast with and covers the whole catalog, so it takes the
/// floor. Every score is clamped to at least `od_min`.
pub fn ontological_distinctiveness(kg: &KnowledgeGraph, node: &str, cfg: &OdConfig) -> Result<f64> {
    let i = kg.node_idx(node)?;
    Ok(od_at(kg, i, cfg))
}

pub(crate) fn od_at(kg: &KnowledgeGraph, i: usize, cfg: &OdConfig) -> f64 {
    let features = &kg.nodes[i].features;
    let (sum, count) = kg
        .sibling_indices(i)
        .fold((0.0, 0usize), |(sum, count), s| {
            (sum + jaccard_distance(features, &kg.nodes[s].features), count + 1)
        });
    let raw = if count > 0 {
        sum / count as f64
    } else if let Some(p) = kg.parent[i] {
        jaccard_distance(features, &kg.nodes[p].features)
    } else {
        cfg.od_min
    };
    raw.max(cfg.od_min)
}
