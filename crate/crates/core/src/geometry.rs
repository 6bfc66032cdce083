//! Planar convex hull (Andrew's monotone chain).

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Vertices of the convex hull of `points` in counter-clockwise order,
/// starting at the rightmost (then topmost) vertex. Collinear boundary points
/// and duplicates are dropped.
pub fn monotone_chain(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts: Vec<[f64; 2]> = points.to_vec();
    pts.sort_by(|a, b| a.partial_cmp(b).expect("finite coordinates"));
    pts.dedup();
    if pts.len() <= 2 {
        return rotate_to_start(pts);
    }

    let mut lower: Vec<[f64; 2]> = Vec::with_capacity(pts.len());
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<[f64; 2]> = Vec::with_capacity(pts.len());
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    rotate_to_start(lower)
}

fn rotate_to_start(mut hull: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
    if hull.len() > 1 {
        let start = (0..hull.len())
            .max_by(|&i, &j| hull[i].partial_cmp(&hull[j]).unwrap())
            .unwrap_or(0);
        hull.rotate_left(start);
    }
    hull
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_with_interior_and_edge_points() {
        let pts = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5], [0.5, 0.0], [1.0, 1.0]];
        let h = monotone_chain(&pts);
        assert_eq!(h, vec![[1.0, 1.0], [0.0, 1.0], [0.0, 0.0], [1.0, 0.0]]);
    }

    #[test]
    fn degenerate_inputs() {
        assert_eq!(monotone_chain(&[[2.0, 3.0], [2.0, 3.0]]), vec![[2.0, 3.0]]);
        let seg = monotone_chain(&[[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]);
        assert_eq!(seg.len(), 2);
    }

    #[test]
    fn hull_is_counter_clockwise() {
        let pts: Vec<[f64; 2]> = (0..40)
            .map(|k| {
                let t = k as f64 * 0.7;
                [t.cos() * (1.0 + 0.3 * (3.0 * t).sin()), t.sin()]
            })
            .collect();
        let h = monotone_chain(&pts);
        for i in 0..h.len() {
            let a = h[i];
            let b = h[(i + 1) % h.len()];
            let c = h[(i + 2) % h.len()];
            assert!(cross(a, b, c) > 0.0);
        }
        // every input point on the inner side of every edge
        for i in 0..h.len() {
            let a = h[i];
            let b = h[(i + 1) % h.len()];
            for &p in &pts {
                assert!(cross(a, b, p) >= -1e-12);
            }
        }
    }
}
