use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linearization::{rank_check, LinearSystem, RowKind, RowLabel, StepSystem};
use crate::scenario::{RowClass, RowWeights, Scenario};
use crate::sparse::{CooMatrix, SparseLu};

/// Diagonal of `K_bb` for one step system: demand variances on mass rows,
/// `k_c^2 Var(c)` on pipe rows, zero on pump and valve rows, noise variances
/// on measurement rows.
pub fn assemble_kbb(sys: &StepSystem, scenario: &Scenario) -> Result<Vec<f64>> {
    let k = sys.step;
    let var_d = scenario.demand_var.get(k).ok_or_else(|| {
        Error::Scenario(format!(
            "step {k} is beyond the scenario horizon of {}",
            scenario.horizon
        ))
    })?;
    let n_j = var_d.len();
    let n_p = scenario.roughness_var.len();
    if sys.links.pipes.len() != n_p || sys.rows.len() != sys.a.nrows {
        return Err(Error::Structure("K_bb dimensions do not match the system".into()));
    }
    let mut out = Vec::with_capacity(sys.a.nrows);
    out.extend_from_slice(var_d);
    for (i, l) in sys.links.pipes.iter().enumerate() {
        out.push(l.k_c * l.k_c * scenario.roughness_var[i]);
    }
    out.resize(sys.n_e, 0.0);
    if out.len() != n_j + n_p + (sys.n_e - n_j - n_p) {
        return Err(Error::Structure("unexpected hydraulic row count".into()));
    }
    for m in &sys.measurements {
        out.push(m.variance);
    }
    if out.len() != sys.a.nrows {
        return Err(Error::Structure("K_bb length does not match the system rows".into()));
    }
    Ok(out)
}

/// `K_bb` of a horizon system: per-step blocks, zero on tank rows.
pub fn assemble_kbb_horizon(sys: &LinearSystem, scenario: &Scenario) -> Result<Vec<f64>> {
    let per_step = sys
        .steps
        .iter()
        .map(|s| assemble_kbb(s, scenario))
        .collect::<Result<Vec<_>>>()?;
    Ok(sys
        .row_origin
        .iter()
        .map(|o| o.map_or(0.0, |(k, r)| per_step[k][r]))
        .collect())
}

/// Weight of every row from the scenario's class weights and overrides.
pub fn row_weights(rows: &[RowLabel], weights: &RowWeights) -> Vec<f64> {
    rows.iter()
        .map(|r| {
            let class = match r.kind {
                RowKind::Mass => RowClass::Mass,
                RowKind::Energy => RowClass::Energy,
                RowKind::Valve => RowClass::Valve,
                RowKind::Measurement => RowClass::Measurement,
                RowKind::Tank => return 1.0,
            };
            weights.get(class, &r.id)
        })
        .collect()
}

fn check_kbb(kbb: &[f64], rows: usize) -> Result<()> {
    if kbb.len() != rows {
        return Err(Error::Structure(format!(
            "K_bb has {} entries for {rows} rows",
            kbb.len()
        )));
    }
    if let Some(v) = kbb.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::Numeric(format!(
            "K_bb is not positive semidefinite (diagonal entry {v})"
        )));
    }
    Ok(())
}

fn rank_error(a: &CooMatrix) -> Error {
    rank_check(a, &[] as &[String], &[] as &[String]).into_error()
}

fn finish(x: DMatrix<f64>, a: &CooMatrix) -> Result<(DMatrix<f64>, usize)> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(rank_error(a));
    }
    let k = &x * x.transpose();
    symmetrize_and_clamp(k)
}

/// Symmetrize and zero tiny negative diagonal entries; larger negatives are an error.
pub fn symmetrize_and_clamp(mut k: DMatrix<f64>) -> Result<(DMatrix<f64>, usize)> {
    let n = k.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let m = 0.5 * (k[(i, j)] + k[(j, i)]);
            k[(i, j)] = m;
            k[(j, i)] = m;
        }
    }
    let max_diag = (0..n).fold(0.0f64, |m, i| m.max(k[(i, i)]));
    let mut clamped = 0;
    for i in 0..n {
        let d = k[(i, i)];
        if d < 0.0 {
            if d < -1e-10 * max_diag.max(f64::MIN_POSITIVE) {
                return Err(Error::Numeric(format!(
                    "covariance diagonal {i} is negative ({d:e})"
                )));
            }
            log::warn!("clamping variance {i} from {d:e} to 0");
            k[(i, i)] = 0.0;
            clamped += 1;
        }
    }
    Ok((k, clamped))
}

/// Sources with nonzero variance as `(row, sqrt(variance))`.
fn sources(kbb: &[f64]) -> Vec<(usize, f64)> {
    kbb.iter()
        .enumerate()
        .filter(|(_, v)| **v > 0.0)
        .map(|(i, v)| (i, v.sqrt()))
        .collect()
}

/// `K_xx = (AᵀA)⁻¹ Aᵀ K_bb A (AᵀA)⁻¹`; for square `A` this is `A⁻¹ K_bb A⁻ᵀ`.
///
/// Returns the covariance and the number of clamped diagonal entries.
pub fn solve_covariance(a: &CooMatrix, kbb: &[f64]) -> Result<(DMatrix<f64>, usize)> {
    check_kbb(kbb, a.nrows)?;
    if a.nrows != a.ncols {
        return solve_weighted(a, kbb, &vec![1.0; a.nrows]);
    }
    let n = a.ncols;
    let src = sources(kbb);
    if src.is_empty() {
        if a.nrows < a.ncols {
            return Err(rank_error(a));
        }
        SparseLu::new(a).map_err(|_| rank_error(a))?;
        return Ok((DMatrix::zeros(n, n), 0));
    }
    let lu = SparseLu::new(a).map_err(|_| rank_error(a))?;
    let mut s = DMatrix::zeros(n, src.len());
    for (j, &(i, sd)) in src.iter().enumerate() {
        s[(i, j)] = sd;
    }
    finish(lu.solve_matrix(&s), a)
}

/// Weighted solve with diagonal weights `w`:
/// `K_xx = (AᵀWA)⁻¹ AᵀW K_bb W A (AᵀWA)⁻¹`.
pub fn solve_weighted(a: &CooMatrix, kbb: &[f64], w: &[f64]) -> Result<(DMatrix<f64>, usize)> {
    check_kbb(kbb, a.nrows)?;
    if w.len() != a.nrows {
        return Err(Error::Structure(format!(
            "{} weights for {} rows",
            w.len(),
            a.nrows
        )));
    }
    if let Some(v) = w.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
        return Err(Error::Scenario(format!("weights must be positive, got {v}")));
    }
    if a.nrows < a.ncols {
        return Err(rank_error(a));
    }
    let n = a.ncols;
    let normal = a.weighted_gram(w);
    let lu = SparseLu::new(&normal).map_err(|_| rank_error(a))?;
    let src = sources(kbb);
    if src.is_empty() {
        let probe = lu.solve(&vec![1.0; n]);
        if probe.iter().any(|v| !v.is_finite()) {
            return Err(rank_error(a));
        }
        return Ok((DMatrix::zeros(n, n), 0));
    }
    let rows = a.rows();
    let mut rhs = DMatrix::zeros(n, src.len());
    for (j, &(i, sd)) in src.iter().enumerate() {
        for &(c, v) in &rows[i] {
            rhs[(c, j)] += w[i] * v * sd;
        }
    }
    finish(lu.solve_matrix(&rhs), a)
}

/// `‖A K Aᵀ − K_bb‖_F / ‖K_bb‖_F` (absolute when `K_bb` is zero).
pub fn reconstruction_error(a: &CooMatrix, k: &DMatrix<f64>, kbb: &[f64]) -> f64 {
    let m = a.nrows;
    let n = a.ncols;
    // AK as dense m × n
    let mut ak = DMatrix::<f64>::zeros(m, n);
    for &(r, c, v) in &a.entries {
        for j in 0..n {
            ak[(r, j)] += v * k[(c, j)];
        }
    }
    let mut akat = DMatrix::<f64>::zeros(m, m);
    for &(r, c, v) in &a.entries {
        for i in 0..m {
            akat[(i, r)] += ak[(i, c)] * v;
        }
    }
    for (i, v) in kbb.iter().enumerate() {
        akat[(i, i)] -= v;
    }
    let denom = kbb.iter().map(|v| v * v).sum::<f64>().sqrt();
    let num = akat.norm();
    if denom > 0.0 {
        num / denom
    } else {
        num
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn coo(m: &DMatrix<f64>) -> CooMatrix {
        let mut a = CooMatrix::new(m.nrows(), m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                if m[(i, j)] != 0.0 {
                    a.push(i, j, m[(i, j)]);
                }
            }
        }
        a
    }

    /// Direct dense evaluation of the closed form with explicit inverses.
    fn dense_oracle(a: &DMatrix<f64>, kbb: &[f64], w: &[f64]) -> DMatrix<f64> {
        let wm = DMatrix::from_diagonal(&DVector::from_column_slice(w));
        let kb = DMatrix::from_diagonal(&DVector::from_column_slice(kbb));
        let n_inv = (a.transpose() * &wm * a).try_inverse().unwrap();
        let g = &n_inv * a.transpose() * &wm;
        &g * kb * g.transpose()
    }

    #[test]
    fn identity_system() {
        let a = coo(&DMatrix::identity(4, 4));
        let (k, _) = solve_covariance(&a, &[1.0; 4]).unwrap();
        assert_eq!(k, DMatrix::identity(4, 4));
    }

    #[test]
    fn zero_sources_give_zero_covariance() {
        let a = coo(&DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 1.0]));
        let (k, _) = solve_covariance(&a, &[0.0, 0.0]).unwrap();
        assert_eq!(k, DMatrix::zeros(2, 2));
    }

    #[test]
    fn singular_matrix_is_rank_error() {
        let a = coo(&DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 0.0]));
        assert!(matches!(
            solve_covariance(&a, &[1.0, 1.0]),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn negative_kbb_rejected() {
        let a = coo(&DMatrix::identity(2, 2));
        assert!(solve_covariance(&a, &[1.0, -1.0]).is_err());
    }

    #[test]
    fn nonpositive_weight_rejected() {
        let a = coo(&DMatrix::identity(2, 2));
        assert!(solve_weighted(&a, &[1.0, 1.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn rectangular_matches_sampled_estimator() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let a = DMatrix::from_fn(8, 5, |_, _| {
            let v: f64 = StandardNormal.sample(&mut rng);
            v
        });
        let kbb: Vec<f64> = (0..8).map(|i| 0.5 + i as f64 * 0.25).collect();
        let (k, _) = solve_covariance(&coo(&a), &kbb).unwrap();
        let g = (a.transpose() * &a).try_inverse().unwrap() * a.transpose();
        let n = 1_000_000;
        let mut sum = DVector::zeros(5);
        let mut sq = DMatrix::zeros(5, 5);
        let mut b = DVector::zeros(8);
        for _ in 0..n {
            for i in 0..8 {
                let z: f64 = StandardNormal.sample(&mut rng);
                b[i] = z * kbb[i].sqrt();
            }
            let x = &g * &b;
            sum += &x;
            sq += &x * x.transpose();
        }
        let mean = sum / n as f64;
        let emp = (sq - &mean * mean.transpose() * n as f64) / (n as f64 - 1.0);
        for i in 0..5 {
            assert!((emp[(i, i)] / k[(i, i)] - 1.0).abs() < 0.02);
        }
    }

    #[test]
    fn weights_of_one_reduce_to_plain_solve() {
        let a = DMatrix::from_row_slice(
            4,
            3,
            &[1.0, 0.0, 2.0, 0.5, 1.0, 0.0, 0.0, -1.0, 3.0, 1.0, 1.0, 1.0],
        );
        let kbb = [0.3, 1.0, 2.0, 0.1];
        let (k1, _) = solve_covariance(&coo(&a), &kbb).unwrap();
        let (k2, _) = solve_weighted(&coo(&a), &kbb, &[1.0; 4]).unwrap();
        assert!((k1 - k2).abs().max() < 1e-12);
    }

    proptest! {
        #[test]
        fn weighted_solve_matches_dense_oracle(
            vals in proptest::collection::vec(-3.0f64..3.0, 18),
            kbb in proptest::collection::vec(0.0f64..2.0, 6),
            w in proptest::collection::vec(0.1f64..10.0, 6),
        ) {
            let a = DMatrix::from_row_slice(6, 3, &vals);
            prop_assume!(a.clone().svd(false, false).singular_values.min() > 1e-2);
            let (k, _) = solve_weighted(&coo(&a), &kbb, &w).unwrap();
            let o = dense_oracle(&a, &kbb, &w);
            prop_assert!((&k - &o).abs().max() <= 1e-8 * (1.0 + o.abs().max()));
        }

        #[test]
        fn square_reconstruction_is_exact(
            vals in proptest::collection::vec(-3.0f64..3.0, 16),
            kbb in proptest::collection::vec(0.01f64..2.0, 4),
        ) {
            let a = DMatrix::from_row_slice(4, 4, &vals) + DMatrix::identity(4, 4) * 7.0;
            let c = coo(&a);
            let (k, _) = solve_covariance(&c, &kbb).unwrap();
            prop_assert!(reconstruction_error(&c, &k, &kbb) < 1e-9);
            // covariance of the residual A x - b under the model vanishes
            let cov_res = &a * &k * a.transpose()
                - DMatrix::from_diagonal(&DVector::from_column_slice(&kbb));
            prop_assert!(cov_res.abs().max() < 1e-9);
            let eig = k.clone().symmetric_eigen();
            prop_assert!(eig.eigenvalues.min() >= -1e-9 * k.norm());
        }

        #[test]
        fn extra_measurement_never_increases_variance(
            vals in proptest::collection::vec(-3.0f64..3.0, 15),
            extra in proptest::collection::vec(-3.0f64..3.0, 3),
            kbb in proptest::collection::vec(0.01f64..2.0, 6),
        ) {
            let a = DMatrix::from_row_slice(5, 3, &vals);
            prop_assume!(a.clone().svd(false, false).singular_values.min() > 1e-2);
            let mut b = DMatrix::zeros(6, 3);
            b.view_mut((0, 0), (5, 3)).copy_from(&a);
            for j in 0..3 { b[(5, j)] = extra[j]; }
            // weights equal to inverse variances make the estimator efficient
            let w5: Vec<f64> = kbb[..5].iter().map(|v| 1.0 / v).collect();
            let w6: Vec<f64> = kbb.iter().map(|v| 1.0 / v).collect();
            let (k5, _) = solve_weighted(&coo(&a), &kbb[..5], &w5).unwrap();
            let (k6, _) = solve_weighted(&coo(&b), &kbb, &w6).unwrap();
            for i in 0..3 {
                prop_assert!(k6[(i, i)] <= k5[(i, i)] + 1e-9 * (1.0 + k5[(i, i)]));
            }
        }
    }
}
