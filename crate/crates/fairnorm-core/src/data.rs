//! Dataset generation, stratified splits, statistics, and file IO.
//!
//! The synthetic generator produces a two-block graph with tunable
//! homophily and a binary node label whose base rate can be skewed per
//! group:
//! - edges: every intra-group pair is kept with probability
//!   intra_target / #intra_pairs, cross pairs analogously, so expected edge
//!   counts hit the targets;
//! - features: a per-group mean offset of magnitude `feature_shift` along a
//!   random unit direction, plus unit Gaussian noise;
//! - labels: with probability `label_bias` the label is forced to
//!   1 - group, otherwise it is the sign of a linear score of the node's
//!   noise (the learnable, group-independent signal). The expected positive
//!   rate gap between groups is exactly `label_bias`.
//!
//! The on-disk dataset layout is a directory holding `edges.tsv` (one
//! undirected edge per line), `features.csv` (header row, one node per
//! line), `meta.json` (column declarations and generator provenance), and
//! `stats.json`.

use crate::dense::{dot, norm2, Mat};
use crate::error::{Error, Result};
use crate::graph::{CsrAdjacency, Graph};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

fn normal_draw(rng: &mut ChaCha8Rng) -> f64 {
    rand::Rng::sample::<f64, _>(rng, rand_distr::StandardNormal)
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SyntheticSpec {
    pub n0: usize,
    pub n1: usize,
    pub feature_dim: usize,
    /// Expected number of within-group edges.
    pub intra_edge_target: usize,
    /// Expected number of cross-group edges.
    pub inter_edge_target: usize,
    /// Magnitude of the per-group feature mean offset.
    pub feature_shift: f64,
    /// Probability that a node's label is forced to 1 - group; equals the
    /// expected positive-rate gap between groups.
    pub label_bias: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Benchmark preset: ~800 nodes with group sizes, feature count, and
    /// intra/inter edge ratio scaled down from a public social-network
    /// dataset (63/37 group split, ~25:1 homophily). The label bias is
    /// calibrated so an unnormalized model picks up a large parity gap
    /// while the group signal is worth little accuracy.
    pub fn bench800(seed: u64) -> Self {
        SyntheticSpec {
            n0: 485,
            n1: 281,
            feature_dim: 59,
            intra_edge_target: 2834,
            inter_edge_target: 114,
            feature_shift: 2.0,
            label_bias: 0.2,
            seed,
        }
    }

    /// Small preset for fast tests.
    pub fn tiny(seed: u64) -> Self {
        SyntheticSpec {
            n0: 24,
            n1: 16,
            feature_dim: 8,
            intra_edge_target: 80,
            inter_edge_target: 16,
            feature_shift: 2.0,
            label_bias: 0.6,
            seed,
        }
    }

    pub fn n(&self) -> usize {
        self.n0 + self.n1
    }

    fn intra_pairs(&self) -> usize {
        self.n0 * (self.n0 - 1) / 2 + self.n1 * (self.n1 - 1) / 2
    }

    fn inter_pairs(&self) -> usize {
        self.n0 * self.n1
    }

    pub fn validate(&self) -> Result<()> {
        if self.n0 < 2 || self.n1 < 2 {
            return Err(Error::InfeasibleSpec(format!(
                "each group needs at least 2 nodes, got {} and {}",
                self.n0, self.n1
            )));
        }
        if self.feature_dim == 0 {
            return Err(Error::InfeasibleSpec("feature_dim must be positive".into()));
        }
        if self.intra_edge_target > self.intra_pairs() {
            return Err(Error::InfeasibleSpec(format!(
                "intra edge target {} exceeds {} available pairs",
                self.intra_edge_target,
                self.intra_pairs()
            )));
        }
        if self.inter_edge_target > self.inter_pairs() {
            return Err(Error::InfeasibleSpec(format!(
                "inter edge target {} exceeds {} available pairs",
                self.inter_edge_target,
                self.inter_pairs()
            )));
        }
        if !(0.0..=1.0).contains(&self.label_bias) {
            return Err(Error::InfeasibleSpec(format!(
                "label_bias must lie in [0, 1], got {}",
                self.label_bias
            )));
        }
        if !self.feature_shift.is_finite() || self.feature_shift < 0.0 {
            return Err(Error::InfeasibleSpec(format!(
                "feature_shift must be finite and nonnegative, got {}",
                self.feature_shift
            )));
        }
        Ok(())
    }
}

/// Generate a graph from the spec. Group 0 occupies node ids [0, n0).
/// All masks start empty; call `make_splits` to assign them.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Graph> {
    spec.validate()?;
    let n = spec.n();
    let f = spec.feature_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    // Group offset direction.
    let mut u: Vec<f64> = (0..f).map(|_| normal_draw(&mut rng)).collect();
    let un = norm2(&u).max(1e-12);
    for x in &mut u {
        *x /= un;
    }
    // Label score direction, orthogonal to the group offset so the
    // learnable signal is disentangled from group membership.
    let w_label: Vec<f64> = loop {
        let mut w: Vec<f64> = (0..f).map(|_| normal_draw(&mut rng)).collect();
        let proj = dot(&w, &u);
        for (wi, ui) in w.iter_mut().zip(u.iter()) {
            *wi -= proj * ui;
        }
        let wn = norm2(&w);
        if wn > 1e-9 || f == 1 {
            if f == 1 {
                // One feature: no orthogonal direction exists; reuse u.
                break u.clone();
            }
            for x in &mut w {
                *x /= wn;
            }
            break w;
        }
    };

    let sensitive: Vec<u8> = (0..n).map(|i| u8::from(i >= spec.n0)).collect();
    let p_intra = spec.intra_edge_target as f64 / spec.intra_pairs() as f64;
    let p_inter = spec.inter_edge_target as f64 / spec.inter_pairs() as f64;
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let p = if sensitive[i] == sensitive[j] {
                p_intra
            } else {
                p_inter
            };
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    let adj = CsrAdjacency::from_edges(n, &edges)?;

    // Noise drawn per node column, then features = group offset + noise.
    let mut noise = Mat::zeros(f, n);
    for j in 0..n {
        for i in 0..f {
            noise.set(i, j, normal_draw(&mut rng));
        }
    }
    let mut features = Mat::zeros(f, n);
    for j in 0..n {
        let sgn = if sensitive[j] == 0 { 1.0 } else { -1.0 };
        for i in 0..f {
            features.set(
                i,
                j,
                sgn * 0.5 * spec.feature_shift * u[i] + noise.get(i, j),
            );
        }
    }

    let mut labels = vec![0u8; n];
    for j in 0..n {
        let forced = rng.random::<f64>() < spec.label_bias;
        if forced {
            labels[j] = 1 - sensitive[j];
        } else {
            let score: f64 = (0..f).map(|i| w_label[i] * noise.get(i, j)).sum();
            labels[j] = u8::from(score > 0.0);
        }
    }

    Graph::new(
        adj,
        features,
        sensitive,
        labels,
        vec![false; n],
        vec![false; n],
        vec![false; n],
    )
}

/// Largest-remainder apportionment of `total` items to `fractions`.
fn largest_remainder(total: usize, fractions: &[f64]) -> Vec<usize> {
    let shares: Vec<f64> = fractions.iter().map(|f| f * total as f64).collect();
    let mut base: Vec<usize> = shares.iter().map(|s| s.floor() as usize).collect();
    let assigned: usize = base.iter().sum();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = shares[a] - shares[a].floor();
        let fb = shares[b] - shares[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for k in 0..(total - assigned) {
        base[order[k % order.len()]] += 1;
    }
    base
}

/// Assign stratified train/val/test masks in place.
///
/// Split sizes follow largest-remainder apportionment of the fractions over
/// the whole graph, exactly. Within each (group, label) cell, members are
/// apportioned the same way and shuffled deterministically. A per-cell
/// coverage floor places at least one member of every nonempty cell in
/// every split with positive fraction before the global totals are
/// reconciled; reconciliation prefers donors that keep that coverage but
/// always lands the exact global sizes. Cells too small to cover every
/// split are an error.
pub fn make_splits(graph: &mut Graph, fractions: (f64, f64, f64), seed: u64) -> Result<()> {
    let fr = [fractions.0, fractions.1, fractions.2];
    if fr.iter().any(|f| !f.is_finite() || *f < 0.0) {
        return Err(Error::InvalidArgument(
            "split fractions must be nonnegative".into(),
        ));
    }
    let sum: f64 = fr.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "split fractions must sum to 1, got {sum}"
        )));
    }
    let n = graph.n();
    let targets = largest_remainder(n, &fr);
    let nz = fr.iter().filter(|f| **f > 0.0).count();

    // Cells in fixed order: (group, label) = (0,0), (0,1), (1,0), (1,1).
    let mut cells: Vec<Vec<usize>> = vec![Vec::new(); 4];
    for i in 0..n {
        let c = (graph.sensitive[i] as usize) * 2 + graph.labels[i] as usize;
        cells[c].push(i);
    }
    for (c, members) in cells.iter().enumerate() {
        if !members.is_empty() && members.len() < nz {
            return Err(Error::SplitInfeasible(format!(
                "cell (group={}, label={}) has only {} members for {} splits",
                c / 2,
                c % 2,
                members.len(),
                nz
            )));
        }
    }
    // Coverage needs one slot per nonempty cell in every used split; without
    // it group metrics downstream would be undefined.
    let nonempty = cells.iter().filter(|m| !m.is_empty()).count();
    for k in 0..3 {
        if fr[k] > 0.0 && targets[k] < nonempty {
            return Err(Error::SplitInfeasible(format!(
                "split {k} gets {} nodes, fewer than the {nonempty} (group, label) cells it must cover",
                targets[k]
            )));
        }
    }

    // Per-cell apportionment with a coverage floor.
    let mut alloc = [[0usize; 3]; 4];
    for (c, members) in cells.iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        let mut b = largest_remainder(members.len(), &fr);
        // Raise empty splits with positive fraction to one, stealing from
        // the largest allocation.
        for k in 0..3 {
            if fr[k] > 0.0 && b[k] == 0 {
                let donor = (0..3)
                    .filter(|&d| b[d] >= 2)
                    .max_by(|&a, &d| b[a].cmp(&b[d]).then(d.cmp(&a)))
                    .expect("cell size >= number of splits guarantees a donor");
                b[donor] -= 1;
                b[k] += 1;
            }
        }
        alloc[c] = [b[0], b[1], b[2]];
    }

    // Reconcile per-split totals with the exact global targets by moving
    // single nodes between splits, preferring donors that keep coverage.
    loop {
        let totals: Vec<usize> = (0..3).map(|k| (0..4).map(|c| alloc[c][k]).sum()).collect();
        let over = (0..3).find(|&k| totals[k] > targets[k]);
        let under = (0..3).find(|&k| totals[k] < targets[k]);
        let (Some(ko), Some(ku)) = (over, under) else {
            break;
        };
        let donor = (0..4)
            .find(|&c| alloc[c][ko] >= 2)
            .or_else(|| (0..4).find(|&c| alloc[c][ko] >= 1))
            .expect("totals over target imply a nonzero allocation");
        alloc[donor][ko] -= 1;
        alloc[donor][ku] += 1;
    }

    // Deterministic shuffle within each cell, then contiguous assignment.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = vec![false; n];
    let mut val = vec![false; n];
    let mut test = vec![false; n];
    for (c, members) in cells.iter().enumerate() {
        let mut order = members.clone();
        for i in (1..order.len()).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }
        let [a, b, t] = alloc[c];
        for (pos, &node) in order.iter().enumerate() {
            if pos < a {
                train[node] = true;
            } else if pos < a + b {
                val[node] = true;
            } else if pos < a + b + t {
                test[node] = true;
            }
        }
    }
    graph.train_mask = train;
    graph.val_mask = val;
    graph.test_mask = test;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n: usize,
    pub feature_dim: usize,
    pub group_sizes: [usize; 2],
    pub edges_total: usize,
    pub edges_intra: usize,
    pub edges_inter: usize,
    /// Fraction of edges inside a group.
    pub homophily: f64,
    pub mean_degree: f64,
    pub positive_rate: [f64; 2],
    pub positive_rate_gap: f64,
    pub split_sizes: [usize; 3],
}

pub fn compute_stats(graph: &Graph) -> DatasetStats {
    let n = graph.n();
    let [g0, g1] = graph.group_indices();
    let mut intra = 0usize;
    let mut inter = 0usize;
    for (u, v) in graph.adj.edge_list() {
        if graph.sensitive[u] == graph.sensitive[v] {
            intra += 1;
        } else {
            inter += 1;
        }
    }
    let total = intra + inter;
    let pos_rate = |idx: &[usize]| {
        idx.iter().map(|&i| graph.labels[i] as usize).sum::<usize>() as f64 / idx.len() as f64
    };
    let p0 = pos_rate(&g0);
    let p1 = pos_rate(&g1);
    DatasetStats {
        n,
        feature_dim: graph.feature_dim(),
        group_sizes: [g0.len(), g1.len()],
        edges_total: total,
        edges_intra: intra,
        edges_inter: inter,
        homophily: if total > 0 {
            intra as f64 / total as f64
        } else {
            0.0
        },
        mean_degree: 2.0 * total as f64 / n as f64,
        positive_rate: [p0, p1],
        positive_rate_gap: (p0 - p1).abs(),
        split_sizes: [
            graph.train_mask.iter().filter(|m| **m).count(),
            graph.val_mask.iter().filter(|m| **m).count(),
            graph.test_mask.iter().filter(|m| **m).count(),
        ],
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub name: String,
    pub n: usize,
    pub feature_dim: usize,
    pub edge_file: String,
    pub feature_file: String,
    pub sensitive_column: String,
    pub label_column: String,
    pub generator: Option<SyntheticSpec>,
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

/// Write the canonical dataset directory: edges.tsv, features.csv,
/// meta.json, stats.json. All output is deterministic.
pub fn write_dataset(dir: &Path, graph: &Graph, meta: &DatasetMeta) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;

    let edge_path = dir.join(&meta.edge_file);
    {
        let file = std::fs::File::create(&edge_path).map_err(|e| io_err(&edge_path, e))?;
        let mut w = BufWriter::new(file);
        for (u, v) in graph.adj.edge_list() {
            writeln!(w, "{u}\t{v}").map_err(|e| io_err(&edge_path, e))?;
        }
        w.flush().map_err(|e| io_err(&edge_path, e))?;
    }

    let feat_path = dir.join(&meta.feature_file);
    {
        let file = std::fs::File::create(&feat_path).map_err(|e| io_err(&feat_path, e))?;
        let mut w = BufWriter::new(file);
        let f = graph.feature_dim();
        let mut header = String::from("node_id");
        for i in 0..f {
            header.push_str(&format!(",f{i}"));
        }
        header.push_str(",sensitive,label");
        writeln!(w, "{header}").map_err(|e| io_err(&feat_path, e))?;
        for j in 0..graph.n() {
            let mut line = format!("{j}");
            for i in 0..f {
                line.push_str(&format!(",{:?}", graph.features.get(i, j)));
            }
            line.push_str(&format!(",{},{}", graph.sensitive[j], graph.labels[j]));
            writeln!(w, "{line}").map_err(|e| io_err(&feat_path, e))?;
        }
        w.flush().map_err(|e| io_err(&feat_path, e))?;
    }

    let meta_path = dir.join("meta.json");
    let meta_json = serde_json::to_string_pretty(meta).expect("meta serializes");
    std::fs::write(&meta_path, meta_json + "\n").map_err(|e| io_err(&meta_path, e))?;

    let stats_path = dir.join("stats.json");
    let stats_json =
        serde_json::to_string_pretty(&compute_stats(graph)).expect("stats serialize");
    std::fs::write(&stats_path, stats_json + "\n").map_err(|e| io_err(&stats_path, e))?;
    Ok(())
}

/// Load a graph from an edge list and a feature table.
///
/// The feature table is comma-separated with a header row. The named
/// sensitive and label columns must hold 0/1; an optional `node_id` column
/// must enumerate 0..n-1 (any order, no repeats); every remaining column is
/// a feature, in header order. Masks start empty.
pub fn load_graph(
    edge_path: &Path,
    feature_path: &Path,
    sensitive_column: &str,
    label_column: &str,
) -> Result<Graph> {
    let feat_file = std::fs::File::open(feature_path).map_err(|e| io_err(feature_path, e))?;
    let mut lines = std::io::BufReader::new(feat_file).lines();
    let header = match lines.next() {
        Some(h) => h.map_err(|e| io_err(feature_path, e))?,
        None => return Err(parse_err(feature_path, 1, "empty feature file")),
    };
    let columns: Vec<String> = header.split(',').map(|c| c.trim().to_string()).collect();
    let find = |name: &str| columns.iter().position(|c| c == name);
    let sens_idx = find(sensitive_column).ok_or_else(|| {
        parse_err(
            feature_path,
            1,
            format!("sensitive column '{sensitive_column}' not in header"),
        )
    })?;
    let label_idx = find(label_column).ok_or_else(|| {
        parse_err(
            feature_path,
            1,
            format!("label column '{label_column}' not in header"),
        )
    })?;
    let id_idx = find("node_id");
    let feature_cols: Vec<usize> = (0..columns.len())
        .filter(|&i| i != sens_idx && i != label_idx && Some(i) != id_idx)
        .collect();
    if feature_cols.is_empty() {
        return Err(parse_err(feature_path, 1, "no feature columns in header"));
    }

    struct Row {
        id: Option<usize>,
        feats: Vec<f64>,
        sens: u8,
        label: u8,
    }
    let mut rows: Vec<Row> = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let lineno = lineno + 2; // 1-based, after header
        let line = line.map_err(|e| io_err(feature_path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(|f| f.trim()).collect();
        if fields.len() != columns.len() {
            return Err(parse_err(
                feature_path,
                lineno,
                format!("expected {} fields, found {}", columns.len(), fields.len()),
            ));
        }
        let parse_bit = |idx: usize, what: &str| -> Result<u8> {
            match fields[idx] {
                "0" => Ok(0),
                "1" => Ok(1),
                other => Err(parse_err(
                    feature_path,
                    lineno,
                    format!("{what} must be 0 or 1, found '{other}'"),
                )),
            }
        };
        let sens = parse_bit(sens_idx, "sensitive attribute")?;
        let label = parse_bit(label_idx, "label")?;
        let id = match id_idx {
            Some(i) => Some(fields[i].parse::<usize>().map_err(|_| {
                parse_err(
                    feature_path,
                    lineno,
                    format!("node_id '{}' is not an integer", fields[i]),
                )
            })?),
            None => None,
        };
        let mut feats = Vec::with_capacity(feature_cols.len());
        for &ci in &feature_cols {
            let v: f64 = fields[ci].parse().map_err(|_| {
                parse_err(
                    feature_path,
                    lineno,
                    format!("'{}' in column '{}' is not a number", fields[ci], columns[ci]),
                )
            })?;
            if !v.is_finite() {
                return Err(parse_err(
                    feature_path,
                    lineno,
                    format!("non-finite value in column '{}'", columns[ci]),
                ));
            }
            feats.push(v);
        }
        rows.push(Row { id, feats, sens, label });
    }
    let n = rows.len();
    if n == 0 {
        return Err(parse_err(feature_path, 2, "feature file has no data rows"));
    }

    let f = feature_cols.len();
    let mut features = Mat::zeros(f, n);
    let mut sensitive = vec![0u8; n];
    let mut labels = vec![0u8; n];
    let mut seen = vec![false; n];
    for (pos, row) in rows.iter().enumerate() {
        let j = match row.id {
            Some(id) => {
                if id >= n {
                    return Err(parse_err(
                        feature_path,
                        pos + 2,
                        format!("node_id {id} out of range for {n} rows"),
                    ));
                }
                if seen[id] {
                    return Err(parse_err(
                        feature_path,
                        pos + 2,
                        format!("node_id {id} appears more than once"),
                    ));
                }
                seen[id] = true;
                id
            }
            None => pos,
        };
        for (i, &v) in row.feats.iter().enumerate() {
            features.set(i, j, v);
        }
        sensitive[j] = row.sens;
        labels[j] = row.label;
    }

    let edge_file = std::fs::File::open(edge_path).map_err(|e| io_err(edge_path, e))?;
    let mut edges = Vec::new();
    for (lineno, line) in std::io::BufReader::new(edge_file).lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| io_err(edge_path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(parse_err(
                edge_path,
                lineno,
                format!("expected 2 whitespace-separated ids, found {}", fields.len()),
            ));
        }
        let parse_id = |s: &str| -> Result<usize> {
            s.parse().map_err(|_| {
                parse_err(edge_path, lineno, format!("'{s}' is not a node id"))
            })
        };
        edges.push((parse_id(fields[0])?, parse_id(fields[1])?));
    }
    let adj = CsrAdjacency::from_edges(n, &edges)?;

    Graph::new(
        adj,
        features,
        sensitive,
        labels,
        vec![false; n],
        vec![false; n],
        vec![false; n],
    )
}

/// Load a dataset directory through its meta.json.
pub fn load_dataset_dir(dir: &Path) -> Result<(Graph, DatasetMeta)> {
    let meta_path = dir.join("meta.json");
    let meta_text = std::fs::read_to_string(&meta_path).map_err(|e| io_err(&meta_path, e))?;
    let meta: DatasetMeta = serde_json::from_str(&meta_text)
        .map_err(|e| parse_err(&meta_path, e.line(), e.to_string()))?;
    let graph = load_graph(
        &dir.join(&meta.edge_file),
        &dir.join(&meta.feature_file),
        &meta.sensitive_column,
        &meta.label_column,
    )?;
    if graph.n() != meta.n {
        return Err(Error::GraphInvariant(format!(
            "meta.json declares {} nodes but the feature table has {}",
            meta.n,
            graph.n()
        )));
    }
    if graph.feature_dim() != meta.feature_dim {
        return Err(Error::GraphInvariant(format!(
            "meta.json declares {} features but the table has {}",
            meta.feature_dim,
            graph.feature_dim()
        )));
    }
    Ok((graph, meta))
}

pub fn meta_for_spec(name: &str, spec: &SyntheticSpec) -> DatasetMeta {
    DatasetMeta {
        name: name.to_string(),
        n: spec.n(),
        feature_dim: spec.feature_dim,
        edge_file: "edges.tsv".into(),
        feature_file: "features.csv".into(),
        sensitive_column: "sensitive".into(),
        label_column: "label".into(),
        generator: Some(spec.clone()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_sizes_follow_largest_remainder_exactly() {
        let spec = SyntheticSpec {
            n0: 600,
            n1: 400,
            feature_dim: 4,
            intra_edge_target: 2000,
            inter_edge_target: 200,
            feature_shift: 1.0,
            label_bias: 0.4,
            seed: 5,
        };
        let mut graph = generate_synthetic(&spec).unwrap();
        make_splits(&mut graph, (0.5, 0.25, 0.25), 99).unwrap();
        let stats = compute_stats(&graph);
        assert_eq!(stats.split_sizes, [500, 250, 250]);
        // Stratification: every (group, label) cell appears in every split.
        for mask in [&graph.train_mask, &graph.val_mask, &graph.test_mask] {
            for g in 0..2u8 {
                for y in 0..2u8 {
                    let covered = (0..graph.n()).any(|i| {
                        mask[i] && graph.sensitive[i] == g && graph.labels[i] == y
                    });
                    assert!(covered, "cell ({g},{y}) missing from a split");
                }
            }
        }
    }

    #[test]
    fn splits_are_deterministic_per_seed() {
        // Mild bias keeps all four (group, label) cells large enough.
        let mut spec = SyntheticSpec::tiny(7);
        spec.label_bias = 0.2;
        let mut g1 = generate_synthetic(&spec).unwrap();
        let mut g2 = generate_synthetic(&spec).unwrap();
        make_splits(&mut g1, (0.5, 0.25, 0.25), 3).unwrap();
        make_splits(&mut g2, (0.5, 0.25, 0.25), 3).unwrap();
        assert_eq!(g1.train_mask, g2.train_mask);
        assert_eq!(g1.val_mask, g2.val_mask);
        assert_eq!(g1.test_mask, g2.test_mask);
        let mut g3 = generate_synthetic(&spec).unwrap();
        make_splits(&mut g3, (0.5, 0.25, 0.25), 4).unwrap();
        assert_ne!(g1.train_mask, g3.train_mask);
    }

    #[test]
    fn infeasible_splits_are_rejected() {
        let mut spec = SyntheticSpec::tiny(11);
        spec.label_bias = 0.2;
        let mut graph = generate_synthetic(&spec).unwrap();
        assert!(make_splits(&mut graph, (0.5, 0.25, 0.3), 1).is_err());
        assert!(make_splits(&mut graph, (1.2, -0.1, -0.1), 1).is_err());
        // A cell smaller than the number of splits cannot be stratified:
        // cell (group=1, label=0) below has exactly one member.
        let adj = CsrAdjacency::from_edges(6, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5)]).unwrap();
        let mut skewed = Graph::new(
            adj,
            Mat::from_fn(2, 6, |i, j| (i + j) as f64),
            vec![0, 0, 0, 1, 1, 1],
            vec![0, 1, 1, 0, 1, 1],
            vec![false; 6],
            vec![false; 6],
            vec![false; 6],
        )
        .unwrap();
        assert!(matches!(
            make_splits(&mut skewed, (0.5, 0.25, 0.25), 1),
            Err(Error::SplitInfeasible(_))
        ));
    }

    #[test]
    fn edge_counts_land_near_targets() {
        let spec = SyntheticSpec::bench800(13);
        let graph = generate_synthetic(&spec).unwrap();
        let stats = compute_stats(&graph);
        let intra_err = (stats.edges_intra as f64 - spec.intra_edge_target as f64).abs()
            / spec.intra_edge_target as f64;
        let inter_err = (stats.edges_inter as f64 - spec.inter_edge_target as f64).abs()
            / spec.inter_edge_target as f64;
        assert!(intra_err < 0.10, "intra edges off by {intra_err}");
        assert!(inter_err < 0.35, "inter edges off by {inter_err}");
        assert_eq!(stats.group_sizes, [485, 281]);
    }

    #[test]
    fn label_bias_controls_positive_rate_gap() {
        // Unbiased: rates agree within 3 sigma of the binomial noise.
        let mut spec = SyntheticSpec {
            n0: 500,
            n1: 500,
            feature_dim: 6,
            intra_edge_target: 1500,
            inter_edge_target: 300,
            feature_shift: 2.0,
            label_bias: 0.0,
            seed: 17,
        };
        let graph = generate_synthetic(&spec).unwrap();
        let stats = compute_stats(&graph);
        let three_sigma = 3.0 * (0.25 / 500.0 + 0.25 / 500.0_f64).sqrt();
        assert!(
            stats.positive_rate_gap < three_sigma,
            "gap {} exceeds 3 sigma {}",
            stats.positive_rate_gap,
            three_sigma
        );
        // Biased: gap tracks label_bias.
        spec.label_bias = 0.6;
        spec.seed = 18;
        let graph = generate_synthetic(&spec).unwrap();
        let stats = compute_stats(&graph);
        assert!(
            (stats.positive_rate_gap - 0.6).abs() < three_sigma + 0.05,
            "gap {} far from 0.6",
            stats.positive_rate_gap
        );
        assert!(stats.positive_rate[0] > stats.positive_rate[1]);
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = SyntheticSpec::tiny(42);
        let a = generate_synthetic(&spec).unwrap();
        let b = generate_synthetic(&spec).unwrap();
        assert_eq!(a.features, b.features);
        assert_eq!(a.adj.edge_list(), b.adj.edge_list());
        assert_eq!(a.labels, b.labels);
    }

    #[test]
    fn dataset_round_trips_through_disk() {
        let spec = SyntheticSpec::tiny(23);
        let graph = generate_synthetic(&spec).unwrap();
        let dir = std::env::temp_dir().join(format!("fairnorm_roundtrip_{}", std::process::id()));
        let meta = meta_for_spec("tiny", &spec);
        write_dataset(&dir, &graph, &meta).unwrap();
        let (loaded, meta_back) = load_dataset_dir(&dir).unwrap();
        assert_eq!(loaded.features, graph.features);
        assert_eq!(loaded.sensitive, graph.sensitive);
        assert_eq!(loaded.labels, graph.labels);
        assert_eq!(loaded.adj.edge_list(), graph.adj.edge_list());
        assert_eq!(meta_back.generator.as_ref(), Some(&spec));
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn loader_reports_line_numbers_on_bad_input() {
        let dir = std::env::temp_dir().join(format!("fairnorm_badinput_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let feat = dir.join("features.csv");
        let edges = dir.join("edges.tsv");

        // Ragged row on line 3.
        std::fs::write(&feat, "node_id,f0,sensitive,label\n0,1.5,0,1\n1,2.5,1\n").unwrap();
        std::fs::write(&edges, "0 1\n").unwrap();
        match load_graph(&edges, &feat, "sensitive", "label") {
            Err(Error::Parse { line: 3, .. }) => {}
            other => panic!("expected parse error on line 3, got {other:?}"),
        }

        // Non-numeric feature on line 2.
        std::fs::write(&feat, "node_id,f0,sensitive,label\n0,abc,0,1\n1,2.5,1,0\n").unwrap();
        match load_graph(&edges, &feat, "sensitive", "label") {
            Err(Error::Parse { line: 2, .. }) => {}
            other => panic!("expected parse error on line 2, got {other:?}"),
        }

        // Missing declared column.
        std::fs::write(&feat, "node_id,f0,s,label\n0,1.0,0,1\n1,2.0,1,0\n").unwrap();
        assert!(matches!(
            load_graph(&edges, &feat, "sensitive", "label"),
            Err(Error::Parse { line: 1, .. })
        ));

        // Duplicate edge.
        std::fs::write(&feat, "node_id,f0,sensitive,label\n0,1.0,0,1\n1,2.0,1,0\n").unwrap();
        std::fs::write(&edges, "0 1\n1 0\n").unwrap();
        assert!(matches!(
            load_graph(&edges, &feat, "sensitive", "label"),
            Err(Error::DuplicateEdge { u: 0, v: 1 })
        ));

        // Edge endpoint out of range.
        std::fs::write(&edges, "0 5\n").unwrap();
        assert!(matches!(
            load_graph(&edges, &feat, "sensitive", "label"),
            Err(Error::NodeOutOfRange { node: 5, n: 2 })
        ));

        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn infeasible_specs_are_rejected() {
        let mut spec = SyntheticSpec::tiny(1);
        spec.intra_edge_target = 10_000;
        assert!(matches!(
            generate_synthetic(&spec),
            Err(Error::InfeasibleSpec(_))
        ));
        let mut spec = SyntheticSpec::tiny(1);
        spec.label_bias = 1.5;
        assert!(generate_synthetic(&spec).is_err());
        let mut spec = SyntheticSpec::tiny(1);
        spec.n1 = 1;
        assert!(generate_synthetic(&spec).is_err());
    }
}
