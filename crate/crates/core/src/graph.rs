//! Interaction matrix and the item-item graph pipeline:
//! co-interaction projection, top-n sparsification, symmetric normalization
//! and the propagation kernel.

use std::collections::VecDeque;
use std::fmt;

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Binary user x item matrix of implicit feedback, row-compressed by user.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionMatrix {
    num_users: usize,
    num_items: usize,
    indptr: Vec<usize>,
    items: Vec<usize>,
}

impl InteractionMatrix {
    /// Builds from `(user, item)` pairs. Duplicates collapse to one entry.
    pub fn from_pairs(
        num_users: usize,
        num_items: usize,
        pairs: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let mut per_user: Vec<Vec<usize>> = vec![Vec::new(); num_users];
        for (u, i) in pairs {
            if u >= num_users {
                return Err(Error::Shape(format!(
                    "user {u} out of range ({num_users} users)"
                )));
            }
            if i >= num_items {
                return Err(Error::Shape(format!(
                    "item {i} out of range ({num_items} items)"
                )));
            }
            per_user[u].push(i);
        }
        Ok(Self::from_user_lists(num_items, per_user))
    }

    pub(crate) fn from_user_lists(num_items: usize, mut per_user: Vec<Vec<usize>>) -> Self {
        let mut indptr = Vec::with_capacity(per_user.len() + 1);
        let mut items = Vec::new();
        indptr.push(0);
        for row in &mut per_user {
            row.sort_unstable();
            row.dedup();
            items.extend_from_slice(row);
            indptr.push(items.len());
        }
        Self {
            num_users: per_user.len(),
            num_items,
            indptr,
            items,
        }
    }

    /// Dense 0/1 rows, one per user.
    pub fn from_dense(rows: &[Vec<u8>]) -> Result<Self> {
        let num_items = rows.first().map_or(0, Vec::len);
        let mut pairs = Vec::new();
        for (u, row) in rows.iter().enumerate() {
            if row.len() != num_items {
                return Err(Error::Shape(format!(
                    "user row {u} has {} items",
                    row.len()
                )));
            }
            for (i, &v) in row.iter().enumerate() {
                match v {
                    0 => {}
                    1 => pairs.push((u, i)),
                    _ => return Err(Error::Shape(format!("entry ({u},{i}) is {v}, not 0/1"))),
                }
            }
        }
        Self::from_pairs(rows.len(), num_items, pairs)
    }

    #[inline]
    pub fn num_users(&self) -> usize {
        self.num_users
    }

    #[inline]
    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn num_interactions(&self) -> usize {
        self.items.len()
    }

    /// Sorted items of user `u`.
    #[inline]
    pub fn user_items(&self, u: usize) -> &[usize] {
        &self.items[self.indptr[u]..self.indptr[u + 1]]
    }

    pub fn contains(&self, u: usize, i: usize) -> bool {
        self.user_items(u).binary_search(&i).is_ok()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.num_users).flat_map(move |u| self.user_items(u).iter().map(move |&i| (u, i)))
    }

    /// Users of each item (the transpose), each list sorted.
    pub fn item_users(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_items];
        for (u, i) in self.pairs() {
            out[i].push(u);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphStage {
    RawCoCounts,
    Sparsified,
    Normalized,
}

impl GraphStage {
    pub fn name(self) -> &'static str {
        match self {
            GraphStage::RawCoCounts => "raw co-count",
            GraphStage::Sparsified => "sparsified",
            GraphStage::Normalized => "normalized",
        }
    }
}

impl fmt::Display for GraphStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Item x item weighted graph at one of the three pipeline stages.
///
/// At the `Normalized` stage `degree` holds the row sums of the binary
/// sparsified graph the weights were derived from.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemItemGraph {
    stage: GraphStage,
    adjacency: CsrMatrix,
    degree: Option<Vec<f64>>,
}

impl ItemItemGraph {
    /// Wraps an adjacency matrix at a given stage after checking that
    /// stage's invariants.
    pub fn from_adjacency(stage: GraphStage, adjacency: CsrMatrix) -> Result<Self> {
        if adjacency.nrows() != adjacency.ncols() {
            return Err(Error::Shape(format!(
                "item graph must be square, got {}x{}",
                adjacency.nrows(),
                adjacency.ncols()
            )));
        }
        if adjacency
            .values()
            .iter()
            .any(|&w| !w.is_finite() || w < 0.0)
        {
            return Err(Error::Shape(
                "item graph weights must be finite and non-negative".into(),
            ));
        }
        if !adjacency.is_symmetric() {
            return Err(Error::Shape(format!(
                "{stage} item graph must be symmetric"
            )));
        }
        let degree = match stage {
            GraphStage::RawCoCounts => {
                if adjacency.values().iter().any(|w| w.fract() != 0.0) {
                    return Err(Error::Shape("co-counts must be integers".into()));
                }
                None
            }
            GraphStage::Sparsified => {
                if adjacency.values().iter().any(|&w| w != 1.0) {
                    return Err(Error::Shape("sparsified graph must be binary".into()));
                }
                None
            }
            GraphStage::Normalized => {
                // Every stored weight is 1/sqrt(d_i d_j) of a binary graph, so
                // the binary degree is the row's stored-entry count.
                Some(
                    (0..adjacency.nrows())
                        .map(|r| adjacency.row_nnz(r) as f64)
                        .collect(),
                )
            }
        };
        Ok(Self {
            stage,
            adjacency,
            degree,
        })
    }

    /// Symmetric binary graph from undirected edges; both directions are stored.
    pub fn sparsified_from_edges(num_items: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut rows = vec![Vec::new(); num_items];
        for &(a, b) in edges {
            if a >= num_items || b >= num_items {
                return Err(Error::Shape(format!("edge ({a},{b}) out of range")));
            }
            rows[a].push((b, 1.0));
            if a != b {
                rows[b].push((a, 1.0));
            }
        }
        for row in &mut rows {
            row.sort_by_key(|&(c, _)| c);
            row.dedup_by_key(|&mut (c, _)| c);
        }
        Ok(Self {
            stage: GraphStage::Sparsified,
            adjacency: CsrMatrix::from_row_lists(num_items, rows)?,
            degree: None,
        })
    }

    #[inline]
    pub fn stage(&self) -> GraphStage {
        self.stage
    }

    #[inline]
    pub fn num_items(&self) -> usize {
        self.adjacency.nrows()
    }

    #[inline]
    pub fn adjacency(&self) -> &CsrMatrix {
        &self.adjacency
    }

    /// Binary degrees recorded at normalization time.
    pub fn binary_degree(&self) -> Option<&[f64]> {
        self.degree.as_deref()
    }

    /// Number of undirected edges, self-loops included once.
    pub fn num_edges(&self) -> usize {
        let m = &self.adjacency;
        (0..m.nrows())
            .map(|r| m.row(r).0.iter().filter(|&&c| c >= r).count())
            .sum()
    }

    pub fn isolated_items(&self) -> Vec<usize> {
        (0..self.num_items())
            .filter(|&r| self.adjacency.row_nnz(r) == 0)
            .collect()
    }

    fn require(&self, expected: GraphStage) -> Result<()> {
        if self.stage != expected {
            return Err(Error::Stage {
                expected: expected.name(),
                actual: self.stage.name(),
            });
        }
        Ok(())
    }

    /// Items whose connected component contains no item flagged in `seeds`.
    pub fn unreached_from(&self, seeds: &[bool]) -> Vec<usize> {
        let n = self.num_items();
        let mut seen = seeds.to_vec();
        let mut queue: VecDeque<usize> = (0..n).filter(|&i| seeds[i]).collect();
        while let Some(v) = queue.pop_front() {
            for &w in self.adjacency.row(v).0 {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        (0..n).filter(|&i| !seen[i]).collect()
    }
}

/// Co-interaction counts `RᵀR`: entry (i, j) is the number of users who
/// interacted with both i and j; the diagonal holds item popularity.
pub fn project_item_item(r: &InteractionMatrix) -> Result<ItemItemGraph> {
    let n = r.num_items();
    if n == 0 {
        return Err(Error::EmptyGraph);
    }
    let item_users = r.item_users();
    let mut counts = vec![0_u64; n];
    let mut touched = Vec::new();
    let mut rows = Vec::with_capacity(n);
    for users in &item_users {
        for &u in users {
            for &j in r.user_items(u) {
                if counts[j] == 0 {
                    touched.push(j);
                }
                counts[j] += 1;
            }
        }
        touched.sort_unstable();
        let row: Vec<(usize, f64)> = touched.iter().map(|&j| (j, counts[j] as f64)).collect();
        for &j in &touched {
            counts[j] = 0;
        }
        touched.clear();
        rows.push(row);
    }
    Ok(ItemItemGraph {
        stage: GraphStage::RawCoCounts,
        adjacency: CsrMatrix::from_row_lists(n, rows)?,
        degree: None,
    })
}

/// Keeps the `n` largest positive co-counts of every row (ties to the lower
/// item index), binarizes them, then symmetrizes by OR with the transpose.
pub fn sparsify_topn(g: &ItemItemGraph, n: usize, exclude_diagonal: bool) -> Result<ItemItemGraph> {
    if n == 0 {
        return Err(Error::param("n", "sparsification size must be at least 1"));
    }
    g.require(GraphStage::RawCoCounts)?;
    let kept = top_n_rows(&g.adjacency, n, exclude_diagonal);
    let size = g.num_items();
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); size];
    for (i, cols) in kept.iter().enumerate() {
        for &j in cols {
            rows[i].push((j, 1.0));
            if i != j {
                rows[j].push((i, 1.0));
            }
        }
    }
    for row in &mut rows {
        row.sort_by_key(|&(c, _)| c);
        row.dedup_by_key(|&mut (c, _)| c);
    }
    Ok(ItemItemGraph {
        stage: GraphStage::Sparsified,
        adjacency: CsrMatrix::from_row_lists(size, rows)?,
        degree: None,
    })
}

/// Row-wise top-n column selection before symmetrization, each list sorted
/// by column.
pub fn top_n_rows(m: &CsrMatrix, n: usize, exclude_diagonal: bool) -> Vec<Vec<usize>> {
    (0..m.nrows())
        .map(|i| {
            let (cols, vals) = m.row(i);
            let mut cand: Vec<(usize, f64)> = cols
                .iter()
                .zip(vals)
                .filter(|&(&j, &v)| v > 0.0 && !(exclude_diagonal && j == i))
                .map(|(&j, &v)| (j, v))
                .collect();
            // stable sort keeps ascending column order among equal counts
            cand.sort_by(|a, b| b.1.total_cmp(&a.1));
            cand.truncate(n);
            let mut keep: Vec<usize> = cand.into_iter().map(|(j, _)| j).collect();
            keep.sort_unstable();
            keep
        })
        .collect()
}

/// `D^{-1/2} A D^{-1/2}` with `d_i` the row sums of the binary graph and
/// `d^{-1/2} = 0` for isolated items.
pub fn normalize_symmetric(g: &ItemItemGraph) -> Result<ItemItemGraph> {
    g.require(GraphStage::Sparsified)?;
    let degree = g.adjacency.row_sums();
    let inv_sqrt: Vec<f64> = degree
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
        .collect();
    let a = &g.adjacency;
    let values: Vec<f64> = (0..a.nrows())
        .flat_map(|i| {
            let (cols, vals) = a.row(i);
            let si = inv_sqrt[i];
            let inv = &inv_sqrt;
            cols.iter().zip(vals).map(move |(&j, &w)| si * w * inv[j])
        })
        .collect();
    let adjacency = CsrMatrix::from_parts(
        a.nrows(),
        a.ncols(),
        a.indptr().to_vec(),
        a.indices().to_vec(),
        values,
    )?;
    Ok(ItemItemGraph {
        stage: GraphStage::Normalized,
        adjacency,
        degree: Some(degree),
    })
}

/// One diffusion step `Ã F`. `f` is not modified.
pub fn propagate_step(g: &ItemItemGraph, f: &DenseMatrix) -> Result<DenseMatrix> {
    g.require(GraphStage::Normalized)?;
    if f.rows() != g.num_items() {
        return Err(Error::Shape(format!(
            "feature matrix has {} rows, graph has {} items",
            f.rows(),
            g.num_items()
        )));
    }
    g.adjacency.mul_dense(f)
}

/// Weighted degree (row sums) of the adjacency at any stage.
pub fn degree_vector(g: &ItemItemGraph) -> Vec<f64> {
    g.adjacency.row_sums()
}

/// Projection, sparsification and normalization in one call.
pub fn build_normalized_graph(
    r: &InteractionMatrix,
    n: usize,
    exclude_diagonal: bool,
) -> Result<ItemItemGraph> {
    let raw = project_item_item(r)?;
    let sparse = sparsify_topn(&raw, n, exclude_diagonal)?;
    normalize_symmetric(&sparse)
}
