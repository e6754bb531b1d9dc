/// True when `a` dominates `b`: no larger area, no smaller speedup, and
/// strictly better in at least one of the two. Points are `(area, speedup)`.
pub fn dominates(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 <= b.0 && a.1 >= b.1 && (a.0 < b.0 || a.1 > b.1)
}

/// Flags the points no other point dominates.
pub fn pareto_flags(points: &[(f64, f64)]) -> Vec<bool> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    // by area, then by speedup descending; a point is on the front iff it
    // beats the best speedup seen among strictly smaller or equal areas
    order.sort_by(|&i, &j| {
        points[i]
            .0
            .total_cmp(&points[j].0)
            .then(points[j].1.total_cmp(&points[i].1))
    });
    let mut flags = vec![false; points.len()];
    let mut best: Option<(f64, f64)> = None;
    for i in order {
        let p = points[i];
        let on_front = match best {
            None => true,
            Some(b) => !dominates(b, p),
        };
        flags[i] = on_front;
        if best.is_none_or(|b| p.1 > b.1) {
            best = Some(p);
        }
    }
    flags
}
