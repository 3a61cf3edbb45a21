use nalgebra::DMatrix;

use super::{LinkKind, Network, NodeKind};
use crate::error::{Error, Result};

/// Node-link incidence matrix with +1 at a link's inflow end ("to") and -1 at
/// its outflow end ("from").
///
/// Stored column-wise: one (outflow row, inflow row) pair per link.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IncidenceMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    row_bounds: [usize; 4],
    col_bounds: [usize; 4],
    columns: Vec<(usize, usize)>,
}

pub fn build_incidence(net: &Network) -> Result<IncidenceMatrix> {
    let n_h = net.n_h();
    let mut columns = Vec::with_capacity(net.n_q());
    for l in net.links() {
        let (from, to) = net.endpoints(l);
        let (r_out, r_in) = (net.head_index(from), net.head_index(to));
        let in_range = |n: super::NodeRef| {
            n.index
                < match n.kind {
                    NodeKind::Junction => net.n_j(),
                    NodeKind::Reservoir => net.n_r(),
                    NodeKind::Tank => net.n_t(),
                }
        };
        if !in_range(from) || !in_range(to) || r_out >= n_h || r_in >= n_h {
            return Err(Error::Structure(format!(
                "link '{}' has a dangling endpoint",
                net.link_id(l)
            )));
        }
        if r_out == r_in {
            return Err(Error::Structure(format!(
                "link '{}' starts and ends at the same node",
                net.link_id(l)
            )));
        }
        columns.push((r_out, r_in));
    }
    let (nj, nr, nt) = (net.n_j(), net.n_r(), net.n_t());
    let (np, nm, nl) = (net.n_p(), net.n_m(), net.n_l());
    Ok(IncidenceMatrix {
        n_rows: n_h,
        n_cols: columns.len(),
        row_bounds: [0, nj, nj + nr, nj + nr + nt],
        col_bounds: [0, np, np + nm, np + nm + nl],
        columns,
    })
}

impl IncidenceMatrix {
    pub fn get(&self, row: usize, col: usize) -> i8 {
        let (out, inn) = self.columns[col];
        if row == inn {
            1
        } else if row == out {
            -1
        } else {
            0
        }
    }

    /// (outflow row, inflow row) of link `col`.
    pub fn column(&self, col: usize) -> (usize, usize) {
        self.columns[col]
    }

    /// Nonzero entries as (row, col, value), ordered by column.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(2 * self.n_cols);
        for (j, &(o, i)) in self.columns.iter().enumerate() {
            let (a, b) = if o < i { ((o, -1.0), (i, 1.0)) } else { ((i, 1.0), (o, -1.0)) };
            out.push((a.0, j, a.1));
            out.push((b.0, j, b.1));
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n_rows, self.n_cols);
        for (r, c, v) in self.triplets() {
            m[(r, c)] = v;
        }
        m
    }

    pub fn row_range(&self, kind: NodeKind) -> std::ops::Range<usize> {
        let i = kind as usize;
        self.row_bounds[i]..self.row_bounds[i + 1]
    }

    pub fn col_range(&self, kind: LinkKind) -> std::ops::Range<usize> {
        let i = kind as usize;
        self.col_bounds[i]..self.col_bounds[i + 1]
    }

    /// Row partition for one node kind (junction, reservoir or tank rows).
    pub fn row_block(&self, kind: NodeKind) -> DMatrix<f64> {
        let r = self.row_range(kind);
        self.to_dense().rows(r.start, r.len()).into_owned()
    }

    /// Column partition for one link kind.
    pub fn col_block(&self, kind: LinkKind) -> DMatrix<f64> {
        let c = self.col_range(kind);
        self.to_dense().columns(c.start, c.len()).into_owned()
    }
}
