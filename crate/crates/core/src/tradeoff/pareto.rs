/// Indices of the points not weakly dominated by any other, ordered by
/// `alpha` ascending (ties broken by `beta`, then index).
///
/// `(a', b')` weakly dominates `(a, b)` when `a' <= a`, `b' <= b` and one of
/// the two is strict. Exact duplicates keep only their first occurrence.
pub fn pareto_filter(points: &[(f64, f64)]) -> Vec<usize> {
    let dominated = |i: usize| {
        let (a, b) = points[i];
        points.iter().enumerate().any(|(j, &(a2, b2))| {
            if j == i {
                return false;
            }
            let weak = a2 <= a && b2 <= b;
            let strict = a2 < a || b2 < b;
            weak && (strict || j < i)
        })
    };
    let mut keep: Vec<usize> = (0..points.len()).filter(|&i| !dominated(i)).collect();
    keep.sort_by(|&i, &j| {
        points[i]
            .0
            .total_cmp(&points[j].0)
            .then(points[i].1.total_cmp(&points[j].1))
            .then(i.cmp(&j))
    });
    keep
}

/// Linear interpolation of a frontier's `beta` at `alpha`.
///
/// `frontier` must be sorted by `alpha`. Right of the last point the curve is
/// extended flat; left of the first point there is no value.
fn interpolate(frontier: &[(f64, f64)], alpha: f64) -> Option<f64> {
    let (first, last) = (frontier.first()?, frontier.last()?);
    if alpha < first.0 {
        return None;
    }
    if alpha >= last.0 {
        return Some(last.1);
    }
    let k = frontier.partition_point(|p| p.0 <= alpha);
    let (a0, b0) = frontier[k - 1];
    let (a1, b1) = frontier[k];
    if a1 == a0 {
        return Some(b0.min(b1));
    }
    Some(b0 + (b1 - b0) * (alpha - a0) / (a1 - a0))
}

/// Whether every point of `upper` lies on or above the piecewise-linear
/// frontier `lower` at matched `alpha`, up to `tol`.
///
/// Points of `upper` left of the whole `lower` frontier are not compared.
pub fn curve_dominates(upper: &[(f64, f64)], lower: &[(f64, f64)], tol: f64) -> bool {
    let idx = pareto_filter(lower);
    let frontier: Vec<(f64, f64)> = idx.iter().map(|&i| lower[i]).collect();
    upper
        .iter()
        .all(|&(a, b)| interpolate(&frontier, a).map_or(true, |lb| b >= lb - tol))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn removes_dominated_point() {
        let pts = [(1.0, 3.0), (2.0, 2.0), (3.0, 1.0), (2.5, 2.5)];
        assert_eq!(pareto_filter(&pts), vec![0, 1, 2]);
    }

    #[test]
    fn single_point_and_staircase() {
        assert_eq!(pareto_filter(&[(1.0, 1.0)]), vec![0]);
        let stairs = [(3.0, 1.0), (1.0, 3.0), (2.0, 2.0)];
        assert_eq!(pareto_filter(&stairs), vec![1, 2, 0]);
        assert!(pareto_filter(&[]).is_empty());
    }

    #[test]
    fn duplicates_collapse() {
        let pts = [(1.0, 1.0); 5];
        assert_eq!(pareto_filter(&pts), vec![0]);
        // equal alpha, larger beta is dominated
        assert_eq!(pareto_filter(&[(1.0, 2.0), (1.0, 1.0)]), vec![1]);
    }

    #[test]
    fn domination_by_interpolation() {
        let lower = [(1.0, 3.0), (3.0, 1.0)];
        assert!(curve_dominates(&[(2.0, 2.0), (4.0, 1.0)], &lower, 0.0));
        assert!(!curve_dominates(&[(2.0, 1.9)], &lower, 0.0));
        assert!(curve_dominates(&[(2.0, 1.9)], &lower, 0.2));
        // left of the lower curve: not compared
        assert!(curve_dominates(&[(0.5, 0.0)], &lower, 0.0));
    }
}
