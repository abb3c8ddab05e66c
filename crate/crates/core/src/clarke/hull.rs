//! Extreme points of finite point sets in dimensions 1 to 3.

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn cross(a: &[f64], b: &[f64]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Sorted points with exact duplicates removed.
pub fn dedup(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut p: Vec<Vec<f64>> = points
        .iter()
        .filter(|v| v.iter().all(|x| x.is_finite()))
        .cloned()
        .collect();
    p.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    p.dedup();
    p
}

/// Orthonormal basis of the affine span of `p` around `p[0]`.
fn affine_basis(p: &[Vec<f64>], tol: f64) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let n = p[0].len();
    loop {
        let mut best: Option<(f64, Vec<f64>)> = None;
        for q in p {
            let mut d = sub(q, &p[0]);
            for b in &basis {
                let c = dot(&d, b);
                for i in 0..n {
                    d[i] -= c * b[i];
                }
            }
            let len = norm(&d);
            if len > tol && best.as_ref().is_none_or(|(l, _)| len > *l) {
                best = Some((len, d));
            }
        }
        match best {
            Some((len, d)) if basis.len() < n => {
                basis.push(d.into_iter().map(|x| x / len).collect())
            }
            _ => return basis,
        }
    }
}

/// Vertices of the convex hull of `points` for dimension ≤ 3, in higher
/// dimensions the maximizers of `g·v` over `probes`. The maximizers over
/// `probes` are always included, so the support over the vertices equals the
/// support over all points on every probe, bit for bit.
pub fn extreme_points(points: &[Vec<f64>], probes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let p = dedup(points);
    let mut out = hull_vertices(&p);
    out.extend(support_maximizers(&p, probes));
    out.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    out.dedup();
    out
}

fn hull_vertices(p: &[Vec<f64>]) -> Vec<Vec<f64>> {
    if p.len() <= 1 {
        return p.to_vec();
    }
    let n = p[0].len();
    if n > 3 {
        return Vec::new();
    }
    let scale = p
        .iter()
        .flat_map(|v| v.iter())
        .fold(0.0f64, |m, x| m.max(x.abs()))
        .max(1e-300);
    let basis = affine_basis(p, 1e-9 * scale);
    let coords: Vec<Vec<f64>> = p
        .iter()
        .map(|q| basis.iter().map(|b| dot(&sub(q, &p[0]), b)).collect())
        .collect();
    let idx = match basis.len() {
        0 => vec![0],
        1 => {
            let (mut lo, mut hi) = (0, 0);
            for (i, c) in coords.iter().enumerate() {
                if c[0] < coords[lo][0] {
                    lo = i;
                }
                if c[0] > coords[hi][0] {
                    hi = i;
                }
            }
            vec![lo, hi]
        }
        2 => monotone_chain(&coords, 1e-12 * scale * scale),
        _ => hull3(&coords, 1e-10 * scale),
    };
    idx.into_iter().map(|i| p[i].clone()).collect()
}

fn support_maximizers(p: &[Vec<f64>], probes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    if p.is_empty() {
        return Vec::new();
    }
    let mut idx: Vec<usize> = probes
        .iter()
        .map(|v| {
            let mut best = 0;
            for i in 1..p.len() {
                if dot(&p[i], v) > dot(&p[best], v) {
                    best = i;
                }
            }
            best
        })
        .collect();
    idx.sort_unstable();
    idx.dedup();
    idx.into_iter().map(|i| p[i].clone()).collect()
}

/// Andrew's monotone chain on planar coordinates; returns indices.
fn monotone_chain(c: &[Vec<f64>], eps: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..c.len()).collect();
    order.sort_by(|&a, &b| {
        (c[a][0], c[a][1])
            .partial_cmp(&(c[b][0], c[b][1]))
            .expect("finite")
    });
    let turn = |o: usize, a: usize, b: usize| {
        (c[a][0] - c[o][0]) * (c[b][1] - c[o][1]) - (c[a][1] - c[o][1]) * (c[b][0] - c[o][0])
    };
    let mut hull: Vec<usize> = Vec::with_capacity(2 * c.len());
    for pass in 0..2 {
        let start = hull.len();
        let it: Box<dyn Iterator<Item = &usize>> = if pass == 0 {
            Box::new(order.iter())
        } else {
            Box::new(order.iter().rev())
        };
        for &i in it {
            while hull.len() >= start + 2
                && turn(hull[hull.len() - 2], hull[hull.len() - 1], i) <= eps
            {
                hull.pop();
            }
            hull.push(i);
        }
        hull.pop();
    }
    hull
}

/// Incremental hull of points with a three-dimensional span; returns vertex indices.
fn hull3(c: &[Vec<f64>], eps: f64) -> Vec<usize> {
    let far = |from: &dyn Fn(usize) -> f64| {
        (0..c.len())
            .max_by(|&a, &b| from(a).total_cmp(&from(b)))
            .expect("points")
    };
    let i0 = 0;
    let i1 = far(&|i| norm(&sub(&c[i], &c[i0])));
    let e = sub(&c[i1], &c[i0]);
    let i2 = far(&|i| norm(&cross(&e, &sub(&c[i], &c[i0]))));
    let nrm = cross(&e, &sub(&c[i2], &c[i0]));
    let i3 = far(&|i| dot(&nrm, &sub(&c[i], &c[i0])).abs());
    let centroid: Vec<f64> = (0..3)
        .map(|k| (c[i0][k] + c[i1][k] + c[i2][k] + c[i3][k]) / 4.0)
        .collect();

    let orient = |f: [usize; 3]| -> [usize; 3] {
        let n = cross(&sub(&c[f[1]], &c[f[0]]), &sub(&c[f[2]], &c[f[0]]));
        if dot(&n, &sub(&c[f[0]], &centroid)) < 0.0 {
            [f[0], f[2], f[1]]
        } else {
            f
        }
    };
    let mut faces: Vec<[usize; 3]> = vec![
        orient([i0, i1, i2]),
        orient([i0, i1, i3]),
        orient([i0, i2, i3]),
        orient([i1, i2, i3]),
    ];
    let visible = |f: &[usize; 3], p: &[f64]| {
        let n = cross(&sub(&c[f[1]], &c[f[0]]), &sub(&c[f[2]], &c[f[0]]));
        let len = norm(&n);
        len > 0.0 && dot(&n, &sub(p, &c[f[0]])) / len > eps
    };
    let mid: Vec<f64> = (0..3)
        .map(|k| c.iter().map(|q| q[k]).sum::<f64>() / c.len() as f64)
        .collect();
    let mut order: Vec<usize> = (0..c.len()).collect();
    order.sort_by(|&a, &b| {
        norm(&sub(&c[b], &mid))
            .total_cmp(&norm(&sub(&c[a], &mid)))
            .then(a.cmp(&b))
    });
    for pi in order {
        let p = &c[pi];
        if [i0, i1, i2, i3].contains(&pi) {
            continue;
        }
        let vis: Vec<bool> = faces.iter().map(|f| visible(f, p)).collect();
        if !vis.iter().any(|&v| v) {
            continue;
        }
        let mut edges: Vec<(usize, usize)> = Vec::new();
        for (f, _) in faces.iter().zip(&vis).filter(|(_, v)| **v) {
            for k in 0..3 {
                edges.push((f[k], f[(k + 1) % 3]));
            }
        }
        let horizon: Vec<(usize, usize)> = edges
            .iter()
            .filter(|&&(a, b)| !edges.contains(&(b, a)))
            .cloned()
            .collect();
        let mut kept: Vec<[usize; 3]> = faces
            .iter()
            .zip(&vis)
            .filter(|(_, v)| !**v)
            .map(|(f, _)| *f)
            .collect();
        for (a, b) in horizon {
            kept.push([a, b, pi]);
        }
        faces = kept;
    }
    let mut idx: Vec<usize> = faces.iter().flat_map(|f| f.iter().cloned()).collect();
    idx.sort_unstable();
    idx.dedup();
    idx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> Vec<f64> {
        x.to_vec()
    }

    #[test]
    fn interval_and_polygon() {
        let pts: Vec<Vec<f64>> = [-1.0, 0.3, 1.0, -0.2].iter().map(|x| vec![*x]).collect();
        assert_eq!(extreme_points(&pts, &[]), vec![v(&[-1.0]), v(&[1.0])]);
        let sq = vec![
            v(&[0., 0.]),
            v(&[1., 0.]),
            v(&[1., 1.]),
            v(&[0., 1.]),
            v(&[0.5, 0.5]),
            v(&[0.5, 0.]),
        ];
        assert_eq!(extreme_points(&sq, &[]).len(), 4);
        let seg = vec![v(&[1., 0.]), v(&[0.5, 0.5]), v(&[0., 1.])];
        assert_eq!(extreme_points(&seg, &[]), vec![v(&[0., 1.]), v(&[1., 0.])]);
    }

    #[test]
    fn cube_and_flat_sets_in_space() {
        let mut cube = Vec::new();
        for i in 0..27 {
            cube.push(vec![
                (i % 3) as f64 - 1.0,
                ((i / 3) % 3) as f64 - 1.0,
                (i / 9) as f64 - 1.0,
            ]);
        }
        assert_eq!(extreme_points(&cube, &[]).len(), 8);
        let tri = vec![
            v(&[1., 0., 0.]),
            v(&[0., 1., 0.]),
            v(&[0., 0., 1.]),
            v(&[1. / 3., 1. / 3., 1. / 3.]),
        ];
        assert_eq!(extreme_points(&tri, &[]).len(), 3);
    }
}
