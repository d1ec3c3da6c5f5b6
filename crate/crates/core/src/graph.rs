//! Folksonomy graphs: user–tag ("tagging") and item–tag ("tagged") bipartite
//! adjacency in compressed form, with the symmetric normalization
//! coefficient `1/sqrt(deg(a)·deg(b))` stored on every edge.

use std::io::Write;

use crate::dataset::Triple;

/// One side of a bipartite graph in compressed-row form.
#[derive(Debug, Clone, PartialEq)]
pub struct Adjacency {
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    coefficients: Vec<f64>,
}

impl Adjacency {
    pub fn n_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn degree(&self, node: usize) -> usize {
        self.offsets[node + 1] - self.offsets[node]
    }

    /// Sorted neighbor indices of `node`.
    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.neighbors[self.offsets[node]..self.offsets[node + 1]]
    }

    /// Normalization coefficients aligned with [`Adjacency::neighbors`].
    pub fn coefficients(&self, node: usize) -> &[f64] {
        &self.coefficients[self.offsets[node]..self.offsets[node + 1]]
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_nodes()).flat_map(move |a| {
            self.neighbors(a)
                .iter()
                .zip(self.coefficients(a))
                .map(move |(&b, &c)| (a, b, c))
        })
    }
}

/// Undirected bipartite graph stored in both directions.
#[derive(Debug, Clone, PartialEq)]
pub struct BipartiteGraph {
    left: Adjacency,
    right: Adjacency,
}

/// `1/sqrt(deg_a·deg_b)`. Both degrees must be positive.
pub fn norm_coefficient(deg_a: usize, deg_b: usize) -> f64 {
    assert!(
        deg_a >= 1 && deg_b >= 1,
        "normalization requested for an isolated node"
    );
    1.0 / ((deg_a as f64) * (deg_b as f64)).sqrt()
}

fn compress(n_rows: usize, mut edges: Vec<(usize, usize)>) -> (Vec<usize>, Vec<usize>) {
    edges.sort_unstable();
    edges.dedup();
    let mut offsets = vec![0; n_rows + 1];
    for &(a, _) in &edges {
        offsets[a + 1] += 1;
    }
    for k in 0..n_rows {
        offsets[k + 1] += offsets[k];
    }
    (offsets, edges.into_iter().map(|(_, b)| b).collect())
}

impl BipartiteGraph {
    /// Builds a binary graph from `(left, right)` edges; repeated edges collapse.
    pub fn from_edges(n_left: usize, n_right: usize, edges: &[(usize, usize)]) -> Self {
        assert!(
            edges.iter().all(|&(a, b)| a < n_left && b < n_right),
            "edge index out of range"
        );
        let (l_off, l_nb) = compress(n_left, edges.to_vec());
        let (r_off, r_nb) = compress(n_right, edges.iter().map(|&(a, b)| (b, a)).collect());
        let left_deg: Vec<usize> = l_off.windows(2).map(|w| w[1] - w[0]).collect();
        let right_deg: Vec<usize> = r_off.windows(2).map(|w| w[1] - w[0]).collect();

        let mut l_coef = Vec::with_capacity(l_nb.len());
        for a in 0..n_left {
            for &b in &l_nb[l_off[a]..l_off[a + 1]] {
                l_coef.push(norm_coefficient(left_deg[a], right_deg[b]));
            }
        }
        let mut r_coef = Vec::with_capacity(r_nb.len());
        for b in 0..n_right {
            for &a in &r_nb[r_off[b]..r_off[b + 1]] {
                r_coef.push(norm_coefficient(right_deg[b], left_deg[a]));
            }
        }
        BipartiteGraph {
            left: Adjacency {
                offsets: l_off,
                neighbors: l_nb,
                coefficients: l_coef,
            },
            right: Adjacency {
                offsets: r_off,
                neighbors: r_nb,
                coefficients: r_coef,
            },
        }
    }

    pub fn n_left(&self) -> usize {
        self.left.n_nodes()
    }

    pub fn n_right(&self) -> usize {
        self.right.n_nodes()
    }

    pub fn n_edges(&self) -> usize {
        self.left.neighbors.len()
    }

    pub fn left(&self) -> &Adjacency {
        &self.left
    }

    pub fn right(&self) -> &Adjacency {
        &self.right
    }
}

/// The two graphs over a shared tag index space. There are no user–item edges.
#[derive(Debug, Clone, PartialEq)]
pub struct FolksonomyGraphs {
    /// Users (left) × tags (right).
    pub tagging: BipartiteGraph,
    /// Items (left) × tags (right).
    pub tagged: BipartiteGraph,
}

impl FolksonomyGraphs {
    pub fn n_users(&self) -> usize {
        self.tagging.n_left()
    }

    pub fn n_items(&self) -> usize {
        self.tagged.n_left()
    }

    pub fn n_tags(&self) -> usize {
        self.tagging.n_right()
    }

    /// Writes `side<TAB>a<TAB>b<TAB>coefficient` per directed edge, coefficient
    /// at 17 significant digits.
    pub fn write_edges<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let sides = [
            ("user_tag", self.tagging.left()),
            ("tag_user", self.tagging.right()),
            ("item_tag", self.tagged.left()),
            ("tag_item", self.tagged.right()),
        ];
        for (name, adj) in sides {
            for (a, b, c) in adj.edges() {
                writeln!(out, "{name}\t{a}\t{b}\t{c:.16e}")?;
            }
        }
        Ok(())
    }
}

/// Builds both graphs from training triples. Nodes without training edges stay
/// in the index space with empty neighbor lists.
pub fn build_graphs(
    train: &[Triple],
    n_users: usize,
    n_items: usize,
    n_tags: usize,
) -> FolksonomyGraphs {
    let user_tag: Vec<(usize, usize)> = train.iter().map(|t| (t.user, t.tag)).collect();
    let item_tag: Vec<(usize, usize)> = train.iter().map(|t| (t.item, t.tag)).collect();
    FolksonomyGraphs {
        tagging: BipartiteGraph::from_edges(n_users, n_tags, &user_tag),
        tagged: BipartiteGraph::from_edges(n_items, n_tags, &item_tag),
    }
}
