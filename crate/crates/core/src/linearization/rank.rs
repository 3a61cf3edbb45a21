use serde::Serialize;

use crate::sparse::{structural_matching, CooMatrix};

/// Dense rank factorizations are skipped above this many columns.
const DENSE_RANK_LIMIT: usize = 4000;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RankReport {
    pub rows: usize,
    pub cols: usize,
    pub structural_rank: usize,
    /// `None` when the matrix is too large for a dense factorization.
    pub numeric_rank: Option<usize>,
    pub full_column_rank: bool,
    pub full_row_rank: bool,
    pub unmatched_rows: Vec<String>,
    pub unmatched_cols: Vec<String>,
}

impl RankReport {
    /// Full column rank, so the covariance solve has a unique answer.
    pub fn is_full_rank(&self) -> bool {
        self.full_column_rank
    }

    pub fn into_error(self) -> crate::error::Error {
        crate::error::Error::RankDeficient {
            rank: self.numeric_rank.unwrap_or(self.structural_rank),
            cols: self.cols,
            unmatched_rows: self.unmatched_rows,
            unmatched_cols: self.unmatched_cols,
        }
    }
}

/// Structural rank from a maximum matching and numeric rank from a
/// column-pivoted QR with threshold `1e-10 * ||A||_F`.
pub fn rank_check<R: ToString, C: ToString>(
    a: &CooMatrix,
    row_labels: &[R],
    col_labels: &[C],
) -> RankReport {
    let (structural, col_match, row_match) = structural_matching(a);
    let numeric = if a.ncols <= DENSE_RANK_LIMIT && a.nrows <= DENSE_RANK_LIMIT {
        let dense = a.to_dense();
        let norm = dense.norm();
        if norm == 0.0 {
            Some(0)
        } else {
            let qr = dense.col_piv_qr();
            let r = qr.r();
            let tol = 1e-10 * norm;
            Some((0..r.nrows().min(r.ncols())).filter(|&i| r[(i, i)].abs() > tol).count())
        }
    } else {
        None
    };
    let rank = numeric.unwrap_or(structural);
    let unmatched_rows = row_match
        .iter()
        .enumerate()
        .filter(|(_, m)| m.is_none())
        .map(|(i, _)| lbl(row_labels, i))
        .collect();
    let unmatched_cols = col_match
        .iter()
        .enumerate()
        .filter(|(_, m)| m.is_none())
        .map(|(i, _)| lbl(col_labels, i))
        .collect();
    RankReport {
        rows: a.nrows,
        cols: a.ncols,
        structural_rank: structural,
        numeric_rank: numeric,
        full_column_rank: rank == a.ncols && structural == a.ncols,
        full_row_rank: rank == a.nrows && structural == a.nrows,
        unmatched_rows,
        unmatched_cols,
    }
}

fn lbl<T: ToString>(labels: &[T], i: usize) -> String {
    labels.get(i).map_or_else(|| format!("#{i}"), ToString::to_string)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundled;
    use crate::hydraulics::{solve_operating_point, StepConditions};
    use crate::linearization::assemble_step;
    use crate::scenario::Scenario;

    fn step_matrix(net: &crate::network::Network) -> crate::linearization::StepSystem {
        let cond = StepConditions::nominal(net);
        let x = solve_operating_point(net, &cond, &Default::default())
            .unwrap()
            .state
            .x;
        let sc = Scenario::deterministic(net, 1);
        assemble_step(net, &sc.measurements, &cond, &x, 0).unwrap()
    }

    #[test]
    fn bundled_systems_have_full_rank() {
        for (_, net) in bundled::all() {
            let s = step_matrix(&net);
            let rep = rank_check(&s.a, &s.rows, &net.state_labels());
            assert!(rep.full_column_rank && rep.full_row_rank, "{rep:?}");
            assert_eq!(rep.numeric_rank, Some(net.n_x()));
        }
    }

    #[test]
    fn duplicated_row_keeps_column_rank() {
        let net = bundled::three_node();
        let s = step_matrix(&net);
        let mut a = s.a.clone();
        let dup: Vec<_> = a.entries.iter().filter(|e| e.0 == 1).copied().collect();
        let r = a.nrows;
        a.nrows += 1;
        for (_, c, v) in dup {
            a.push(r, c, v);
        }
        let rep = rank_check(&a, &[] as &[String], &[] as &[String]);
        assert!(rep.full_column_rank);
        assert!(!rep.full_row_rank);
        assert_eq!(rep.numeric_rank, Some(5));
    }

    #[test]
    fn missing_measurement_is_named() {
        let net = bundled::three_node();
        let s = step_matrix(&net);
        let mut a = s.a.clone();
        // drop the tank measurement row
        a.entries.retain(|e| e.0 != 4);
        let rep = rank_check(&a, &s.rows, &net.state_labels());
        assert!(!rep.full_column_rank);
        assert_eq!(rep.structural_rank, 4);
        assert_eq!(rep.unmatched_rows.len(), 1);
        assert_eq!(rep.unmatched_cols.len(), 1);
    }
}
