//! The JSON taxonomy document and directory loading.

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use lexprobe_core::{KgError, KnowledgeGraph, Node, Product};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: malformed JSON: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{}: {source}", path.display())]
    Invalid {
        path: PathBuf,
        #[source]
        source: KgError,
    },
    #[error("graph id `{id}` is defined by both {} and {}", first.display(), second.display())]
    DuplicateGraph { id: String, first: PathBuf, second: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProductDoc {
    pub id: String,
    pub label: String,
    pub features: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeDoc {
    pub id: String,
    pub label: String,
    pub parent: Option<String>,
    pub features: Vec<String>,
    pub extension: Vec<String>,
}

/// On-disk form of a [`KnowledgeGraph`]. Parsing checks shape only;
/// [`KgDocument::into_graph`] does the semantic validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KgDocument {
    pub id: String,
    pub products: Vec<ProductDoc>,
    pub nodes: Vec<NodeDoc>,
}

impl KgDocument {
    pub fn into_graph(self) -> Result<KnowledgeGraph, KgError> {
        let products = self
            .products
            .iter()
            .map(|p| Product::new(p.id.as_str(), p.label.as_str(), p.features.iter().map(String::as_str)))
            .collect();
        let nodes = self
            .nodes
            .iter()
            .map(|n| {
                Node::new(
                    n.id.as_str(),
                    n.label.as_str(),
                    n.parent.as_deref(),
                    n.features.iter().map(String::as_str),
                    n.extension.iter().map(String::as_str),
                )
            })
            .collect();
        KnowledgeGraph::new(self.id, products, nodes)
    }
}

impl From<&KnowledgeGraph> for KgDocument {
    fn from(kg: &KnowledgeGraph) -> Self {
        Self {
            id: kg.id().to_string(),
            products: kg
                .products()
                .iter()
                .map(|p| ProductDoc {
                    id: p.id.to_string(),
                    label: p.label.clone(),
                    features: p.features.iter().cloned().collect(),
                })
                .collect(),
            nodes: kg
                .nodes()
                .iter()
                .map(|n| NodeDoc {
                    id: n.id.to_string(),
                    label: n.label.clone(),
                    parent: n.parent.as_ref().map(|p| p.to_string()),
                    features: n.features.iter().cloned().collect(),
                    extension: n.extension.iter().map(ToString::to_string).collect(),
                })
                .collect(),
        }
    }
}

/// Parses and validates one document. `origin` only labels errors.
pub fn read_kg(mut reader: impl Read, origin: &Path) -> Result<KnowledgeGraph, LoadError> {
    let mut text = String::new();
    reader.read_to_string(&mut text).map_err(|source| LoadError::Io {
        path: origin.to_path_buf(),
        source,
    })?;
    let doc: KgDocument = serde_json::from_str(&text).map_err(|source| LoadError::Json {
        path: origin.to_path_buf(),
        source,
    })?;
    doc.into_graph().map_err(|source| LoadError::Invalid {
        path: origin.to_path_buf(),
        source,
    })
}

pub fn load_kg(path: impl AsRef<Path>) -> Result<KnowledgeGraph, LoadError> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|source| LoadError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_kg(file, path)
}

pub fn to_json_pretty(kg: &KnowledgeGraph) -> String {
    serde_json::to_string_pretty(&KgDocument::from(kg)).expect("documents always serialize")
}

/// Loads every `*.json` file in `dir`, keyed by graph id. Any invalid file
/// fails the whole load.
pub fn load_dir(dir: impl AsRef<Path>) -> Result<BTreeMap<String, Arc<KnowledgeGraph>>, LoadError> {
    let dir = dir.as_ref();
    let io = |source| LoadError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .map_err(io)?;
    paths.retain(|p| p.is_file() && p.extension().is_some_and(|e| e == "json"));
    paths.sort();

    let mut out = BTreeMap::new();
    let mut origin: BTreeMap<String, PathBuf> = BTreeMap::new();
    for path in paths {
        let kg = load_kg(&path)?;
        if let Some(first) = origin.get(kg.id()) {
            return Err(LoadError::DuplicateGraph {
                id: kg.id().to_string(),
                first: first.clone(),
                second: path,
            });
        }
        origin.insert(kg.id().to_string(), path);
        out.insert(kg.id().to_string(), Arc::new(kg));
    }
    Ok(out)
}
