use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::write_dataset;
use super::read_to_string;
use crate::error::{GuapError, Result};
use crate::graph::{largest_component_nodes, CsrAdjacency, Graph, Split};

/// Public distribution layouts understood by [`convert`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    /// `<name>.content` (id, binary word vector, class) and `<name>.cites`.
    Linqs,
    /// Pol.Blogs GML with a `value` class attribute and no features.
    Gml,
}

impl FromStr for InputFormat {
    type Err = GuapError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linqs" | "cora" | "citeseer" => Ok(InputFormat::Linqs),
            "gml" | "polblogs" => Ok(InputFormat::Gml),
            other => Err(GuapError::UnsupportedFormat(format!("unknown input format `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitSizes {
    PerClass { train_per_class: usize, test: usize },
    Total { train: usize, test: usize },
}

impl SplitSizes {
    pub fn default_for(format: InputFormat) -> Self {
        match format {
            InputFormat::Linqs => SplitSizes::PerClass {
                train_per_class: 20,
                test: 1000,
            },
            InputFormat::Gml => SplitSizes::Total { train: 121, test: 1101 },
        }
    }

    /// Seeded split: training nodes first (per class or overall), then test
    /// nodes drawn from the rest.
    fn assign(self, labels: &[usize], seed: u64) -> Result<Vec<Split>> {
        let n = labels.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let mut split = vec![Split::Other; n];
        let test = match self {
            SplitSizes::PerClass { train_per_class, test } => {
                let classes = labels.iter().max().map_or(0, |&l| l + 1);
                let mut taken = vec![0; classes];
                for &v in &order {
                    if taken[labels[v]] < train_per_class {
                        taken[labels[v]] += 1;
                        split[v] = Split::Train;
                    }
                }
                if let Some(c) = taken.iter().position(|&t| t < train_per_class) {
                    return Err(GuapError::Validation(format!(
                        "class {c} has fewer than {train_per_class} nodes"
                    )));
                }
                test
            }
            SplitSizes::Total { train, test } => {
                if train > n {
                    return Err(GuapError::Validation(format!("{train} training nodes requested of {n}")));
                }
                for &v in &order[..train] {
                    split[v] = Split::Train;
                }
                test
            }
        };
        let rest: Vec<usize> = order.into_iter().filter(|&v| split[v] == Split::Other).collect();
        if test > rest.len() {
            return Err(GuapError::Validation(format!(
                "{test} test nodes requested, only {} left",
                rest.len()
            )));
        }
        for &v in &rest[..test] {
            split[v] = Split::Test;
        }
        Ok(split)
    }
}

/// Summary of one conversion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvertSummary {
    pub nodes: usize,
    pub edges: usize,
    pub classes: usize,
    pub features: Option<usize>,
    pub dropped_links: usize,
    pub dropped_nodes: usize,
}

struct Parsed {
    ids: Vec<String>,
    labels: Vec<usize>,
    features: Option<Array2<f64>>,
    edges: Vec<(usize, usize)>,
    dropped_links: usize,
    lcc: bool,
}

/// Converts a public distribution under `src` into `nodes.tsv`, `edges.tsv`
/// and (when features exist) `features.txt` under `dst`. Output bytes depend
/// only on the input and `seed`.
pub fn convert(format: InputFormat, src: &Path, dst: &Path, sizes: SplitSizes, seed: u64) -> Result<ConvertSummary> {
    let parsed = match format {
        InputFormat::Linqs => parse_linqs(src)?,
        InputFormat::Gml => parse_gml(src)?,
    };
    let n = parsed.ids.len();
    let classes = parsed.labels.iter().max().map_or(0, |&l| l + 1);
    let with_features = parsed.features.is_some();
    let features = parsed.features.unwrap_or_else(|| Array2::zeros((n, 0)));
    let adjacency = CsrAdjacency::from_edges(n, &parsed.edges)?;
    let mut g = Graph::new(adjacency, features, parsed.labels, classes, vec![Split::Other; n])?;
    let mut ids = parsed.ids;
    if parsed.lcc {
        let keep = largest_component_nodes(&g)?;
        ids = keep.iter().map(|&k| ids[k].clone()).collect();
        g = g.induced(&keep)?;
    }
    let split = sizes.assign(g.labels(), seed)?;
    let g = g.with_split(split)?;
    write_dataset(&g, &ids, dst, with_features)?;
    Ok(ConvertSummary {
        nodes: g.n(),
        edges: g.adjacency().edge_count(),
        classes: g.num_classes(),
        features: with_features.then(|| g.feature_dim()),
        dropped_links: parsed.dropped_links,
        dropped_nodes: n - g.n(),
    })
}

fn find_with_extension(dir: &Path, ext: &str) -> Result<PathBuf> {
    let entries = std::fs::read_dir(dir).map_err(|e| GuapError::io(dir, e))?;
    let mut found: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == ext))
        .collect();
    found.sort();
    match found.len() {
        1 => Ok(found.remove(0)),
        0 => Err(GuapError::UnsupportedFormat(format!(
            "no `*.{ext}` file in {}",
            dir.display()
        ))),
        _ => Err(GuapError::UnsupportedFormat(format!(
            "several `*.{ext}` files in {}",
            dir.display()
        ))),
    }
}

fn parse_linqs(src: &Path) -> Result<Parsed> {
    let content_path = find_with_extension(src, "content")?;
    let cites_path = find_with_extension(src, "cites")?;
    let content = read_to_string(&content_path)?;
    let mut ids = Vec::new();
    let mut names = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, line) in content.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 2 {
            return Err(GuapError::Parse {
                path: content_path.clone(),
                line: k + 1,
                message: "expected id, features and class".into(),
            });
        }
        let row = fields[1..fields.len() - 1]
            .iter()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| GuapError::Parse {
                path: content_path.clone(),
                line: k + 1,
                message: e.to_string(),
            })?;
        if rows.first().is_some_and(|r| r.len() != row.len()) {
            return Err(GuapError::Parse {
                path: content_path.clone(),
                line: k + 1,
                message: "feature width differs from the first row".into(),
            });
        }
        ids.push(fields[0].to_string());
        names.push(fields[fields.len() - 1].to_string());
        rows.push(row);
    }
    let classes: BTreeSet<&str> = names.iter().map(String::as_str).collect();
    let class_index: HashMap<&str, usize> = classes.iter().enumerate().map(|(k, &c)| (c, k)).collect();
    let labels = names.iter().map(|c| class_index[c.as_str()]).collect();
    let d = rows.first().map_or(0, Vec::len);
    let features = Array2::from_shape_vec((rows.len(), d), rows.concat()).expect("row widths checked");

    let index: HashMap<&str, usize> = ids.iter().enumerate().map(|(k, id)| (id.as_str(), k)).collect();
    let cites = read_to_string(&cites_path)?;
    let mut edges = Vec::new();
    let mut dropped = 0;
    for (k, line) in cites.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(GuapError::Parse {
                path: cites_path.clone(),
                line: k + 1,
                message: "expected two paper ids".into(),
            });
        }
        match (index.get(fields[0]), index.get(fields[1])) {
            (Some(&a), Some(&b)) => edges.push((a, b)),
            _ => dropped += 1,
        }
    }
    if dropped > 0 {
        log::warn!("{}: dropped {dropped} links to papers without content", cites_path.display());
    }
    Ok(Parsed {
        ids,
        labels,
        features: Some(features),
        edges,
        dropped_links: dropped,
        lcc: false,
    })
}

#[derive(Debug, Clone, PartialEq)]
enum Gml {
    Atom(String),
    List(Vec<(String, Gml)>),
}

fn gml_tokens(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut chars = text.chars().peekable();
    while let Some(&c) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
        } else if c == '[' || c == ']' {
            tokens.push(c.to_string());
            chars.next();
        } else if c == '"' {
            chars.next();
            let mut s = String::from("\"");
            for c in chars.by_ref() {
                if c == '"' {
                    break;
                }
                s.push(c);
            }
            tokens.push(s);
        } else {
            let mut s = String::new();
            while let Some(&c) = chars.peek() {
                if c.is_whitespace() || c == '[' || c == ']' {
                    break;
                }
                s.push(c);
                chars.next();
            }
            tokens.push(s);
        }
    }
    tokens
}

fn gml_list(tokens: &[String], pos: &mut usize, path: &Path) -> Result<Vec<(String, Gml)>> {
    let bad = |message: &str| GuapError::UnsupportedFormat(format!("{}: {message}", path.display()));
    let mut items = Vec::new();
    while *pos < tokens.len() && tokens[*pos] != "]" {
        let key = tokens[*pos].clone();
        *pos += 1;
        let value = tokens.get(*pos).ok_or_else(|| bad("key without value"))?;
        *pos += 1;
        let value = if value == "[" {
            let inner = gml_list(tokens, pos, path)?;
            if tokens.get(*pos).map(String::as_str) != Some("]") {
                return Err(bad("unbalanced brackets"));
            }
            *pos += 1;
            Gml::List(inner)
        } else {
            Gml::Atom(value.clone())
        };
        items.push((key, value));
    }
    Ok(items)
}

fn gml_field<'a>(items: &'a [(String, Gml)], key: &str) -> Option<&'a str> {
    items.iter().find_map(|(k, v)| match v {
        Gml::Atom(a) if k == key => Some(a.as_str()),
        _ => None,
    })
}

fn find_gml(src: &Path) -> Result<PathBuf> {
    if src.is_dir() {
        find_with_extension(src, "gml")
    } else {
        Ok(src.to_path_buf())
    }
}

/// Pol.Blogs: directed links are symmetrized, and the result is restricted
/// to its largest connected component.
fn parse_gml(src: &Path) -> Result<Parsed> {
    let path = find_gml(src)?;
    let text = read_to_string(&path)?;
    let tokens = gml_tokens(&text);
    let mut pos = 0;
    let top = gml_list(&tokens, &mut pos, &path)?;
    let graph = top
        .iter()
        .find_map(|(k, v)| match v {
            Gml::List(items) if k == "graph" => Some(items),
            _ => None,
        })
        .ok_or_else(|| GuapError::UnsupportedFormat(format!("{}: no `graph [ ... ]` block", path.display())))?;
    let missing = |what: &str| GuapError::UnsupportedFormat(format!("{}: {what}", path.display()));
    let mut ids = Vec::new();
    let mut labels = Vec::new();
    let mut index = HashMap::new();
    let mut edges = Vec::new();
    for (k, v) in graph {
        let Gml::List(items) = v else { continue };
        match k.as_str() {
            "node" => {
                let id = gml_field(items, "id").ok_or_else(|| missing("node without id"))?;
                let value = gml_field(items, "value").ok_or_else(|| missing("node without value"))?;
                let label = value.parse::<usize>().map_err(|_| missing("non-integer node value"))?;
                index.insert(id.to_string(), ids.len());
                ids.push(id.to_string());
                labels.push(label);
            }
            "edge" => {
                let a = gml_field(items, "source").ok_or_else(|| missing("edge without source"))?;
                let b = gml_field(items, "target").ok_or_else(|| missing("edge without target"))?;
                edges.push((a.to_string(), b.to_string()));
            }
            _ => {}
        }
    }
    let edges = edges
        .iter()
        .map(|(a, b)| match (index.get(a), index.get(b)) {
            (Some(&a), Some(&b)) => Ok((a, b)),
            _ => Err(missing("edge to an unknown node")),
        })
        .collect::<Result<_>>()?;
    Ok(Parsed {
        ids,
        labels,
        features: None,
        edges,
        dropped_links: 0,
        lcc: true,
    })
}
