use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{push_joined, read_to_string, write_atomic, Cursor};
use crate::error::{GuapError, Result};
use crate::graph::{largest_component_nodes, CsrAdjacency, Graph, Split};

pub const NODES_FILE: &str = "nodes.tsv";
pub const EDGES_FILE: &str = "edges.tsv";
pub const FEATURES_FILE: &str = "features.txt";

/// Where a dataset lives and what it is expected to contain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetDescriptor {
    pub name: String,
    pub root: PathBuf,
    #[serde(default)]
    pub has_binary_features: bool,
    /// Restrict to the largest connected component after loading.
    #[serde(default)]
    pub use_lcc: bool,
    #[serde(default)]
    pub expected_nodes: Option<usize>,
    #[serde(default)]
    pub expected_edges: Option<usize>,
    #[serde(default)]
    pub expected_classes: Option<usize>,
    #[serde(default)]
    pub expected_train: Option<usize>,
    #[serde(default)]
    pub expected_test: Option<usize>,
}

impl DatasetDescriptor {
    /// A descriptor with no expectations.
    pub fn new(name: impl Into<String>, root: impl Into<PathBuf>) -> Self {
        Self {
            name: name.into(),
            root: root.into(),
            has_binary_features: false,
            use_lcc: false,
            expected_nodes: None,
            expected_edges: None,
            expected_classes: None,
            expected_train: None,
            expected_test: None,
        }
    }

    /// Known benchmark with its published sizes, or `None` for other names.
    pub fn builtin(name: &str, root: impl Into<PathBuf>) -> Option<Self> {
        let (nodes, edges, classes, train, test, binary, lcc) = match name {
            "cora" => (2708, 5278, 7, 140, 1000, true, false),
            "citeseer" => (3327, 4676, 6, 120, 1000, true, false),
            "polblogs" => (1222, 16714, 2, 121, 1101, false, true),
            _ => return None,
        };
        Some(Self {
            has_binary_features: binary,
            use_lcc: lcc,
            expected_nodes: Some(nodes),
            expected_edges: Some(edges),
            expected_classes: Some(classes),
            expected_train: Some(train),
            expected_test: Some(test),
            ..Self::new(name, root)
        })
    }

    fn check(&self, g: &Graph) -> Result<()> {
        let checks = [
            ("nodes", self.expected_nodes, g.n()),
            ("edges", self.expected_edges, g.adjacency().edge_count()),
            ("classes", self.expected_classes, g.num_classes()),
            ("train nodes", self.expected_train, g.train_nodes().len()),
            ("test nodes", self.expected_test, g.test_nodes().len()),
        ];
        for (what, expected, actual) in checks {
            if let Some(e) = expected.filter(|&e| e != actual) {
                return Err(GuapError::Validation(format!(
                    "{}: expected {e} {what}, found {actual}",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSource {
    File,
    /// No features file; one-hot node identity features.
    Identity,
}

#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub graph: Graph,
    /// Node ids in graph order.
    pub ids: Vec<String>,
    pub feature_source: FeatureSource,
    /// Nodes dropped by the largest-component restriction.
    pub dropped_by_lcc: usize,
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(k, l)| (k + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> GuapError {
    GuapError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

struct Nodes {
    ids: Vec<String>,
    labels: Vec<usize>,
    split: Vec<Split>,
}

fn read_nodes(path: &Path) -> Result<Nodes> {
    let text = read_to_string(path)?;
    let mut nodes = Nodes {
        ids: Vec::new(),
        labels: Vec::new(),
        split: Vec::new(),
    };
    let mut seen = HashMap::new();
    for (line, content) in content_lines(&text) {
        let fields: Vec<&str> = content.split('\t').map(str::trim).collect();
        let id = fields[0];
        let label = match fields.get(1) {
            Some(l) if !l.is_empty() => l,
            _ => return Err(parse_error(path, line, format!("node `{id}` has no label"))),
        };
        let label = label
            .parse::<usize>()
            .map_err(|_| parse_error(path, line, format!("label `{label}` is not a class index")))?;
        let split = match fields.get(2) {
            Some(s) => s.parse::<Split>().map_err(|e| parse_error(path, line, e))?,
            None => return Err(parse_error(path, line, format!("node `{id}` has no split tag"))),
        };
        if fields.len() > 3 {
            return Err(parse_error(path, line, "expected 3 tab-separated fields"));
        }
        if seen.insert(id.to_string(), nodes.ids.len()).is_some() {
            return Err(parse_error(path, line, format!("duplicate node id `{id}`")));
        }
        nodes.ids.push(id.to_string());
        nodes.labels.push(label);
        nodes.split.push(split);
    }
    Ok(nodes)
}

fn read_edges(path: &Path, index: &HashMap<&str, usize>) -> Result<Vec<(usize, usize)>> {
    let text = read_to_string(path)?;
    let mut edges = Vec::new();
    for (line, content) in content_lines(&text) {
        let fields: Vec<&str> = content.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(parse_error(path, line, "expected two node ids"));
        }
        let lookup = |id: &str| {
            index.get(id).copied().ok_or_else(|| GuapError::DanglingEdge {
                path: path.to_path_buf(),
                line,
                node: id.to_string(),
            })
        };
        edges.push((lookup(fields[0])?, lookup(fields[1])?));
    }
    Ok(edges)
}

fn read_features(path: &Path, n: usize) -> Result<Array2<f64>> {
    let text = read_to_string(path)?;
    let mut c = Cursor::new(path, &text);
    let mut data = Vec::new();
    let mut d = None;
    for _ in 0..n {
        let line = c.next_line()?;
        let before = data.len();
        for t in line.split_whitespace() {
            data.push(t.parse::<f64>().map_err(|e| c.error(format!("bad number `{t}`: {e}")))?);
        }
        let width = data.len() - before;
        match d {
            None => d = Some(width),
            Some(d) if d != width => return Err(c.error(format!("expected {d} values, found {width}"))),
            _ => {}
        }
    }
    if let Ok(extra) = c.next_line() {
        if !extra.trim().is_empty() {
            return Err(c.error(format!("more feature rows than the {n} nodes")));
        }
    }
    Ok(Array2::from_shape_vec((n, d.unwrap_or(0)), data).expect("row widths checked"))
}

/// Loads `nodes.tsv`, `edges.tsv` and the optional `features.txt` under
/// `desc.root`. Edges are symmetrized and deduplicated; self loops are dropped.
pub fn load_dataset_full(desc: &DatasetDescriptor) -> Result<LoadedDataset> {
    let root = &desc.root;
    let nodes = read_nodes(&root.join(NODES_FILE))?;
    let n = nodes.ids.len();
    if n == 0 {
        return Err(GuapError::EmptyGraph);
    }
    let index: HashMap<&str, usize> = nodes.ids.iter().enumerate().map(|(k, id)| (id.as_str(), k)).collect();
    let edges = read_edges(&root.join(EDGES_FILE), &index)?;
    let features_path = root.join(FEATURES_FILE);
    let (features, source) = if features_path.exists() {
        (read_features(&features_path, n)?, FeatureSource::File)
    } else {
        (Array2::zeros((n, 0)), FeatureSource::Identity)
    };
    if desc.has_binary_features && source == FeatureSource::File && !features.iter().all(|&x| x == 0.0 || x == 1.0) {
        return Err(GuapError::Validation(format!("{}: features are not binary", desc.name)));
    }
    let classes = nodes.labels.iter().max().map_or(0, |&l| l + 1);
    let adjacency = CsrAdjacency::from_edges(n, &edges)?;
    let mut graph = Graph::new(adjacency, features, nodes.labels, classes, nodes.split)?;
    let mut ids = nodes.ids;
    let mut dropped = 0;
    if desc.use_lcc {
        let keep = largest_component_nodes(&graph)?;
        dropped = n - keep.len();
        ids = keep.iter().map(|&k| ids[k].clone()).collect();
        graph = graph.induced(&keep)?;
    }
    if source == FeatureSource::Identity {
        graph = graph.with_features(Array2::eye(graph.n()))?;
    }
    desc.check(&graph)?;
    log::info!(
        "loaded {}: {} nodes, {} edges, {} classes, {} features ({:?})",
        desc.name,
        graph.n(),
        graph.adjacency().edge_count(),
        graph.num_classes(),
        graph.feature_dim(),
        source
    );
    Ok(LoadedDataset {
        graph,
        ids,
        feature_source: source,
        dropped_by_lcc: dropped,
    })
}

pub fn load_dataset(desc: &DatasetDescriptor) -> Result<Graph> {
    Ok(load_dataset_full(desc)?.graph)
}

/// Writes the three dataset files. `features.txt` is omitted (and any stale
/// copy removed) when `with_features` is false.
pub fn write_dataset(g: &Graph, ids: &[String], dir: &Path, with_features: bool) -> Result<()> {
    if ids.len() != g.n() {
        return Err(GuapError::Dimension(format!("{} ids for {} nodes", ids.len(), g.n())));
    }
    let mut nodes = String::new();
    for i in 0..g.n() {
        let _ = writeln!(nodes, "{}\t{}\t{}", ids[i], g.labels()[i], g.split()[i].as_str());
    }
    let mut edges = String::new();
    for (a, b) in g.adjacency().edges() {
        let _ = writeln!(edges, "{}\t{}", ids[a], ids[b]);
    }
    write_atomic(&dir.join(NODES_FILE), &nodes)?;
    write_atomic(&dir.join(EDGES_FILE), &edges)?;
    let features_path = dir.join(FEATURES_FILE);
    if with_features {
        let mut out = String::new();
        for row in g.features().rows() {
            push_joined(&mut out, row.iter());
            out.push('\n');
        }
        write_atomic(&features_path, &out)?;
    } else if features_path.exists() {
        std::fs::remove_file(&features_path).map_err(|e| GuapError::io(&features_path, e))?;
    }
    Ok(())
}
