use ndarray::{Array2, ArrayView1, ArrayView2};

use super::{EvalError, Result};
use crate::rng::Rng;
use crate::synthgen::sample_dirichlet;

const SUM_TOL: f64 = 1e-6;

fn check_distribution(p: ArrayView1<'_, f64>, what: &str) -> Result<()> {
    if p.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(EvalError::NotDistribution(format!("{what} has a negative or non-finite entry")));
    }
    let s = p.sum();
    if (s - 1.0).abs() > SUM_TOL {
        return Err(EvalError::NotDistribution(format!("{what} sums to {s}")));
    }
    Ok(())
}

fn check_rows(m: ArrayView2<'_, f64>, what: &str) -> Result<()> {
    for (i, row) in m.rows().into_iter().enumerate() {
        check_distribution(row, &format!("{what} row {i}"))?;
    }
    Ok(())
}

fn bhattacharyya(p: ArrayView1<'_, f64>, q: ArrayView1<'_, f64>) -> f64 {
    p.iter().zip(q).map(|(a, b)| (a * b).sqrt()).sum::<f64>().min(1.0)
}

/// `sum_k sqrt(p_k q_k)`, which is one minus the squared Hellinger distance.
pub fn hellinger_similarity(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(EvalError::Dimension(format!("distributions of length {} and {}", p.len(), q.len())));
    }
    let (p, q) = (ArrayView1::from(p), ArrayView1::from(q));
    check_distribution(p, "p")?;
    check_distribution(q, "q")?;
    Ok(bhattacharyya(p, q))
}

/// Pairwise similarities between the rows of `thetas`.
pub fn similarity_matrix(thetas: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    check_rows(thetas, "theta")?;
    let roots = thetas.mapv(f64::sqrt);
    Ok(roots.dot(&roots.t()).mapv(|x| x.min(1.0)))
}

/// Document similarity score: `(1/D) sum_i sum_{j != i} |w_ij - w'_ij|`
/// where `w` and `w'` are pairwise similarities of the true and inferred
/// document-topic proportions. Lower is better.
pub fn dss(true_thetas: ArrayView2<'_, f64>, inferred_thetas: ArrayView2<'_, f64>) -> Result<f64> {
    let d = true_thetas.nrows();
    if d != inferred_thetas.nrows() {
        return Err(EvalError::Dimension(format!("{d} true documents but {} inferred", inferred_thetas.nrows())));
    }
    if d < 2 {
        return Err(EvalError::Invalid("DSS needs at least two documents".into()));
    }
    let w = similarity_matrix(true_thetas)?;
    let v = similarity_matrix(inferred_thetas)?;
    let mut total = 0.0;
    for i in 0..d {
        for j in 0..d {
            if i != j {
                total += (w[[i, j]] - v[[i, j]]).abs();
            }
        }
    }
    Ok(total / d as f64)
}

/// Topic similarity score: for every true topic the similarity of its
/// closest inferred topic, summed. Ranges over `[0, K]`; higher is better.
pub fn tss(true_betas: ArrayView2<'_, f64>, inferred_betas: ArrayView2<'_, f64>) -> Result<f64> {
    if true_betas.ncols() != inferred_betas.ncols() {
        return Err(EvalError::Dimension(format!(
            "topics over {} and {} terms",
            true_betas.ncols(),
            inferred_betas.ncols()
        )));
    }
    if inferred_betas.nrows() == 0 {
        return Err(EvalError::Dimension("no inferred topics".into()));
    }
    check_rows(true_betas, "true topic")?;
    check_rows(inferred_betas, "inferred topic")?;
    Ok(true_betas
        .rows()
        .into_iter()
        .map(|t| {
            inferred_betas
                .rows()
                .into_iter()
                .map(|u| bhattacharyya(t, u))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .sum())
}

/// Expected TSS between two independently drawn `K x V` Dirichlet(eta)
/// topic sets, averaged over `runs` pairs.
pub fn tss_baseline(eta: f64, topics: usize, vocab_size: usize, runs: usize, rng: &mut Rng) -> Result<f64> {
    if runs == 0 || topics == 0 || vocab_size == 0 || !(eta > 0.0) {
        return Err(EvalError::Invalid("baseline needs positive eta, K, V and runs".into()));
    }
    let draw = |rng: &mut Rng| {
        let mut m = Array2::zeros((topics, vocab_size));
        for mut row in m.rows_mut() {
            row.assign(&ArrayView1::from(&sample_dirichlet(eta, vocab_size, rng)));
        }
        m
    };
    let mut total = 0.0;
    for _ in 0..runs {
        let a = draw(rng);
        let b = draw(rng);
        total += tss(a.view(), b.view())?;
    }
    Ok(total / runs as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn hellinger_examples() {
        assert_eq!(hellinger_similarity(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 1.0);
        assert_eq!(hellinger_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let s = hellinger_similarity(&[0.5, 0.5], &[1.0, 0.0]).unwrap();
        assert!((s - 0.5f64.sqrt()).abs() <= 1e-12);
        assert!(matches!(hellinger_similarity(&[1.0], &[0.5, 0.5]), Err(EvalError::Dimension(_))));
        assert!(matches!(hellinger_similarity(&[0.5, 0.6], &[0.5, 0.5]), Err(EvalError::NotDistribution(_))));
        assert!(hellinger_similarity(&[-0.5, 1.5], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn dss_examples() {
        let t = array![[0.2, 0.8], [0.6, 0.4], [1.0, 0.0]];
        assert_eq!(dss(t.view(), t.view()).unwrap(), 0.0);
        let swapped = array![[0.8, 0.2], [0.4, 0.6], [0.0, 1.0]];
        assert!(dss(t.view(), swapped.view()).unwrap() < 1e-15);
        let truth = array![[1.0, 0.0], [1.0, 0.0]];
        let inferred = array![[1.0, 0.0], [0.0, 1.0]];
        assert_eq!(dss(truth.view(), inferred.view()).unwrap(), 1.0);
        assert!(dss(truth.slice(ndarray::s![..1, ..]), inferred.slice(ndarray::s![..1, ..])).is_err());
        assert!(dss(t.view(), truth.view()).is_err());
    }

    #[test]
    fn tss_examples() {
        let eye = array![[1.0, 0.0], [0.0, 1.0]];
        assert_eq!(tss(eye.view(), eye.view()).unwrap(), 2.0);
        let flat = array![[0.5, 0.5]];
        assert!((tss(eye.view(), flat.view()).unwrap() - 2.0 * 0.5f64.sqrt()).abs() < 1e-12);
        let rev = array![[0.0, 1.0], [1.0, 0.0]];
        assert_eq!(tss(eye.view(), rev.view()).unwrap(), 2.0);
        assert!(tss(eye.view(), array![[1.0, 0.0, 0.0]].view()).is_err());
    }

    #[test]
    fn baseline_limits() {
        let b = tss_baseline(1e6, 4, 100, 3, &mut rng::seeded(1)).unwrap();
        assert!((b - 4.0).abs() < 0.05 && b <= 4.0);
        let x = tss_baseline(0.05, 5, 200, 4, &mut rng::seeded(9)).unwrap();
        let y = tss_baseline(0.05, 5, 200, 4, &mut rng::seeded(9)).unwrap();
        assert_eq!(x, y);
        assert!(x < 5.0 && x > 0.0);
        assert!(tss_baseline(0.1, 2, 5, 0, &mut rng::seeded(0)).is_err());
    }

    fn arb_rows(rows: usize, cols: usize) -> impl Strategy<Value = Array2<f64>> {
        proptest::collection::vec(proptest::collection::vec(0.0..1.0f64, cols), rows).prop_map(move |rs| {
            let mut m = Array2::zeros((rows, cols));
            for (i, r) in rs.iter().enumerate() {
                let s: f64 = r.iter().sum::<f64>() + 1e-3 * cols as f64;
                for (j, x) in r.iter().enumerate() {
                    m[[i, j]] = (x + 1e-3) / s;
                }
            }
            m
        })
    }

    proptest! {
        #[test]
        fn hellinger_is_symmetric_and_bounded(m in arb_rows(2, 6)) {
            let (p, q) = (m.row(0).to_vec(), m.row(1).to_vec());
            let a = hellinger_similarity(&p, &q).unwrap();
            prop_assert_eq!(a, hellinger_similarity(&q, &p).unwrap());
            prop_assert!((0.0..=1.0).contains(&a));
            prop_assert!((hellinger_similarity(&p, &p).unwrap() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn tss_self_and_permutation(a in arb_rows(5, 8), b in arb_rows(3, 8), perm in Just(vec![2usize, 0, 1]).prop_shuffle()) {
            prop_assert!((tss(a.view(), a.view()).unwrap() - 5.0).abs() < 1e-9);
            let permuted = b.select(ndarray::Axis(0), &perm);
            prop_assert_eq!(tss(a.view(), b.view()).unwrap(), tss(a.view(), permuted.view()).unwrap());
        }

        #[test]
        fn dss_column_permutation(t in arb_rows(6, 4), inf in arb_rows(6, 4), perm in Just(vec![3usize, 1, 0, 2]).prop_shuffle()) {
            prop_assert_eq!(dss(t.view(), t.view()).unwrap(), 0.0);
            let permuted = inf.select(ndarray::Axis(1), &perm);
            let a = dss(t.view(), inf.view()).unwrap();
            prop_assert!((a - dss(t.view(), permuted.view()).unwrap()).abs() < 1e-12);
        }
    }
}
