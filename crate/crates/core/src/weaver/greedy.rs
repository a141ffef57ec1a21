use num_complex::Complex64;

use super::frame::{Criterion, FiniteFrame, SubsampleMethod, SubsampleResult};
use crate::error::{Error, Result};
use crate::linalg;

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Selection order of a two-barrier potential greedy on the whitened frame.
///
/// With `v_i = S^{-1/2} u_i` and `A` the sum of `v v^*` over the selected
/// vectors, each step picks the vector minimising the increase of
/// `tr (u I - A)^{-1}` minus the decrease of `tr (A - l I)^{-1}`. The
/// barriers are fixed (`u = 1 + max |v_i|^2`, `l = -m/n`), so the inverse
/// matrices change by rank one per step and every candidate's `M v_i` is
/// updated by Sherman-Morrison in `O(m)`. Because the schedule does not
/// depend on the requested size, the selections for different sizes are
/// nested.
pub fn barrier_greedy_order(frame: &FiniteFrame, steps: usize) -> Result<Vec<usize>> {
    let (n, m) = (frame.len(), frame.dim());
    let steps = steps.min(n);
    let s = frame.operator_of(&(0..n).collect::<Vec<_>>());
    let w = linalg::inverse_sqrt_hermitian(&s)
        .ok_or_else(|| Error::Precondition("frame vectors do not span C^m".into()))?;
    // Frame vectors are rows, so v_i^T = u_i^T W^T.
    let v = linalg::mul(&frame.to_matrix(), &w.transpose());
    let vecs: Vec<Vec<Complex64>> = (0..n).map(|i| v.row(i).iter().copied().collect()).collect();
    let max_norm = vecs.iter().map(|x| linalg::norm_sqr(x)).fold(0.0, f64::max);
    let upper = 1.0 + max_norm;
    let lower = -(m as f64) / n as f64;

    // wu_i = (uI - A)^{-1} v_i, wl_i = (A - lI)^{-1} v_i, starting from A = 0.
    let mut wu: Vec<Vec<Complex64>> = vecs.iter().map(|x| scale(x, 1.0 / upper)).collect();
    let mut wl: Vec<Vec<Complex64>> = vecs.iter().map(|x| scale(x, -1.0 / lower)).collect();
    let mut taken = vec![false; n];
    let mut order = Vec::with_capacity(steps);
    for _ in 0..steps {
        let mut best: Option<(f64, usize)> = None;
        for i in 0..n {
            if taken[i] {
                continue;
            }
            let qu = dot(&vecs[i], &wu[i]).re;
            let ql = dot(&vecs[i], &wl[i]).re;
            if qu >= 1.0 {
                continue;
            }
            let score =
                linalg::norm_sqr(&wu[i]) / (1.0 - qu) - linalg::norm_sqr(&wl[i]) / (1.0 + ql);
            if best.is_none_or(|(b, _)| score < b) {
                best = Some((score, i));
            }
        }
        let Some((_, pick)) = best else { break };
        taken[pick] = true;
        order.push(pick);

        let zu = wu[pick].clone();
        let du = 1.0 - dot(&vecs[pick], &zu).re;
        let zl = wl[pick].clone();
        let dl = 1.0 + dot(&vecs[pick], &zl).re;
        for i in 0..n {
            if taken[i] {
                continue;
            }
            let cu = dot(&zu, &vecs[i]) / du;
            let cl = dot(&zl, &vecs[i]) / dl;
            for k in 0..m {
                wu[i][k] += zu[k] * cu;
                wl[i][k] -= zl[k] * cl;
            }
        }
    }
    Ok(order)
}

fn scale(x: &[Complex64], s: f64) -> Vec<Complex64> {
    x.iter().map(|z| z * s).collect()
}

/// First `target_size` vectors of [`barrier_greedy_order`], certified a
/// posteriori as full rank. An uncertified result is returned as such so the
/// caller can retry with a larger size.
pub fn barrier_greedy_subsample(
    frame: &FiniteFrame,
    target_size: usize,
) -> Result<SubsampleResult> {
    let m = frame.dim();
    if target_size < m {
        return Err(Error::range(
            "target_size",
            target_size as f64,
            "at least the dimension m",
        ));
    }
    let order = barrier_greedy_order(frame, target_size)?;
    Ok(SubsampleResult::certify(
        frame,
        order,
        SubsampleMethod::BarrierGreedy,
        Criterion::FullRank {
            max_size: target_size,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weaver::frame::random_tight_frame;

    #[test]
    fn orthonormal_rows_are_all_selected() {
        let m = 5;
        let rows: Vec<Complex64> = (0..m * m)
            .map(|k| Complex64::new(if k % (m + 1) == 0 { 1.0 } else { 0.0 }, 0.0))
            .collect();
        let f = FiniteFrame::from_row_major(m, m, rows).unwrap();
        let r = barrier_greedy_subsample(&f, m).unwrap();
        assert_eq!(r.indices, (0..m).collect::<Vec<_>>());
        assert!(r.certified);
        assert!((r.achieved_bounds.0 - 1.0).abs() < 1e-14);
        assert!((r.achieved_bounds.1 - 1.0).abs() < 1e-14);
    }

    #[test]
    fn random_tight_frame_certifies_at_four_m() {
        let f = random_tight_frame(200, 10, 11).unwrap();
        let r = barrier_greedy_subsample(&f, 40).unwrap();
        assert!(r.certified);
        assert_eq!(r.len(), 40);
        assert!(r.achieved_bounds.0 > 0.0);
    }

    #[test]
    fn selections_are_nested_and_lambda_min_grows() {
        let m = 6;
        let f = random_tight_frame(150, m, 2).unwrap();
        let full = barrier_greedy_order(&f, 8 * m).unwrap();
        let mut last = f64::NEG_INFINITY;
        for t in (2 * m)..=(8 * m) {
            let r = barrier_greedy_subsample(&f, t).unwrap();
            let mut prefix = full[..t].to_vec();
            prefix.sort_unstable();
            assert_eq!(r.indices, prefix);
            assert!(r.achieved_bounds.0 >= last - 1e-14);
            last = r.achieved_bounds.0;
        }
    }

    #[test]
    fn greedy_beats_first_rows_in_conditioning() {
        let m = 8;
        let f = random_tight_frame(160, m, 5).unwrap();
        let r = barrier_greedy_subsample(&f, 2 * m).unwrap();
        let naive = f.bounds_of(&(0..2 * m).collect::<Vec<_>>());
        let ratio = |(lo, hi): (f64, f64)| lo / hi;
        assert!(ratio(r.achieved_bounds) > ratio(naive));
    }

    #[test]
    fn target_below_dimension_is_rejected() {
        let f = random_tight_frame(20, 4, 0).unwrap();
        assert!(barrier_greedy_subsample(&f, 3).is_err());
    }
}
