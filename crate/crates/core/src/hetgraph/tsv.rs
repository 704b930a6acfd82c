//! Tab-separated graph files.
//!
//! ```text
//! nodes.tsv      name <TAB> type <TAB> label|- [<TAB> f1,f2,...]
//! edges.tsv      src <TAB> dst <TAB> relation
//! relations.tsv  relation <TAB> src_type <TAB> dst_type <TAB> reverse
//! ```
//!
//! Blank lines and lines starting with `#` are ignored. Labels are class
//! indices starting at 0.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{ColdStart, EdgeSpec, GraphError, GraphSpec, HetGraph, NodeSpec, RelationSpec};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TsvPaths {
    pub nodes: PathBuf,
    pub edges: PathBuf,
    pub relations: PathBuf,
}

impl TsvPaths {
    /// `nodes.tsv`, `edges.tsv` and `relations.tsv` inside `dir`.
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        Self {
            nodes: dir.join("nodes.tsv"),
            edges: dir.join("edges.tsv"),
            relations: dir.join("relations.tsv"),
        }
    }
}

fn read(path: &Path) -> Result<String, GraphError> {
    fs::read_to_string(path).map_err(|source| GraphError::Io { path: path.to_path_buf(), source })
}

/// Non-comment lines as `(1-based line number, tab-separated fields)`.
fn records(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            None
        } else {
            Some((i + 1, line.split('\t').collect()))
        }
    })
}

pub fn load_tsv(paths: &TsvPaths, cold_start: ColdStart) -> Result<HetGraph, GraphError> {
    let mut spec = GraphSpec::default();

    let text = read(&paths.nodes)?;
    let err = |line: usize, message: String| GraphError::Parse { path: paths.nodes.clone(), line, message };
    // type -> (feature dim, line it was fixed on)
    let mut dims: HashMap<String, (usize, usize)> = HashMap::new();
    let mut names = HashSet::new();
    for (line, fields) in records(&text) {
        if !(3..=4).contains(&fields.len()) {
            return Err(err(line, format!("expected 3 or 4 fields, found {}", fields.len())));
        }
        let (name, node_type, label) = (fields[0], fields[1], fields[2]);
        if name.is_empty() || node_type.is_empty() {
            return Err(err(line, "empty node or type name".into()));
        }
        if !names.insert(name.to_string()) {
            return Err(err(line, format!("duplicate node `{name}`")));
        }
        let label = match label {
            "-" => None,
            s => Some(s.parse::<usize>().map_err(|_| err(line, format!("unknown label class `{s}`")))?),
        };
        let features = match fields.get(3).map(|f| f.trim()) {
            None | Some("") => None,
            Some(f) => Some(
                f.split(',')
                    .map(|v| v.trim().parse::<f64>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| err(line, format!("bad feature value: {e}")))?,
            ),
        };
        let dim = features.as_ref().map_or(0, Vec::len);
        match dims.get(node_type) {
            Some(&(expected, first)) if expected != dim => {
                return Err(err(
                    line,
                    format!(
                        "feature dimension {dim} for type `{node_type}` differs from {expected} (line {first})"
                    ),
                ));
            }
            Some(_) => {}
            None => {
                dims.insert(node_type.to_string(), (dim, line));
                spec.node_types.push(node_type.to_string());
            }
        }
        spec.nodes.push(NodeSpec {
            name: name.to_string(),
            node_type: node_type.to_string(),
            label,
            features,
        });
    }

    let text = read(&paths.relations)?;
    let err = |line: usize, message: String| GraphError::Parse { path: paths.relations.clone(), line, message };
    let mut relation_names = HashSet::new();
    for (line, fields) in records(&text) {
        if fields.len() != 4 {
            return Err(err(line, format!("expected 4 fields, found {}", fields.len())));
        }
        for t in &fields[1..3] {
            if !dims.contains_key(*t) {
                return Err(err(line, format!("unknown node type `{t}`")));
            }
        }
        relation_names.insert(fields[0].to_string());
        relation_names.insert(fields[3].to_string());
        spec.relations.push(RelationSpec {
            name: fields[0].to_string(),
            src_type: fields[1].to_string(),
            dst_type: fields[2].to_string(),
            reverse: fields[3].to_string(),
        });
    }

    let text = read(&paths.edges)?;
    let err = |line: usize, message: String| GraphError::Parse { path: paths.edges.clone(), line, message };
    for (line, fields) in records(&text) {
        if fields.len() != 3 {
            return Err(err(line, format!("expected 3 fields, found {}", fields.len())));
        }
        for n in &fields[..2] {
            if !names.contains(*n) {
                return Err(err(line, format!("unknown node `{n}`")));
            }
        }
        if !relation_names.contains(fields[2]) {
            return Err(err(line, format!("unknown relation `{}`", fields[2])));
        }
        spec.edges.push(EdgeSpec {
            src: fields[0].to_string(),
            dst: fields[1].to_string(),
            relation: fields[2].to_string(),
        });
    }

    spec.build(cold_start)
}

/// Writes `g` so that [`load_tsv`] rebuilds it. Self-loops, synthesized
/// reverse edges and cold-start features are omitted; loading recreates
/// them.
pub fn save_tsv(g: &HetGraph, paths: &TsvPaths) -> Result<(), GraphError> {
    let write = |path: &Path, body: String| {
        fs::write(path, body).map_err(|source| GraphError::Io { path: path.to_path_buf(), source })
    };

    let mut out = String::from("# name\ttype\tlabel\tfeatures\n");
    for node in 0..g.num_nodes() {
        let p = g.type_of(node);
        let local = g.local_index(node);
        let label = g
            .labels(p)
            .and_then(|l| l.values[local])
            .map_or_else(|| "-".to_string(), |c| c.to_string());
        write!(out, "{}\t{}\t{}", g.node_name(node), g.node_types()[p].name, label).unwrap();
        if !g.is_cold_start(p) {
            let row = g.features(p).row_slice(local);
            let joined: Vec<String> = row.iter().map(f64::to_string).collect();
            write!(out, "\t{}", joined.join(",")).unwrap();
        }
        out.push('\n');
    }
    write(&paths.nodes, out)?;

    let mut out = String::from("# relation\tsrc_type\tdst_type\treverse\n");
    for r in g.relations().iter().filter(|r| !r.is_self_loop) {
        let types = g.node_types();
        writeln!(
            out,
            "{}\t{}\t{}\t{}",
            r.name,
            types[r.src_type].name,
            types[r.dst_type].name,
            g.relation(r.reverse).name
        )
        .unwrap();
    }
    write(&paths.relations, out)?;

    let mut out = String::from("# src\tdst\trelation\n");
    for e in g.edges() {
        let r = g.relation(e.rel);
        let canonical = if r.is_self_loop {
            false
        } else if r.is_self_reverse() {
            e.src <= e.dst
        } else {
            r.id < r.reverse
        };
        if canonical {
            writeln!(out, "{}\t{}\t{}", g.node_name(e.src), g.node_name(e.dst), r.name).unwrap();
        }
    }
    write(&paths.edges, out)
}
