//! Binarization, boundary tracing and polygon simplification.
//!
//! Boundaries run along pixel edges, so vertices sit on integer pixel
//! corners. Each loop keeps foreground on its right as seen on screen
//! (y down): outer boundaries run clockwise, holes counter-clockwise.

use std::collections::HashMap;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Binary {
    pub width: usize,
    pub height: usize,
    pub bits: Vec<bool>,
}

impl Binary {
    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Binary {
        let bits = (0..height).flat_map(|y| (0..width).map(move |x| (x, y))).map(|(x, y)| f(x, y)).collect();
        Binary { width, height, bits }
    }

    /// Out of bounds reads as background.
    pub fn get(&self, x: i64, y: i64) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && self.bits[y as usize * self.width + x as usize]
    }

    /// Pixel containing a continuous point.
    pub fn at(&self, p: [f64; 2]) -> bool {
        self.get(p[0].floor() as i64, p[1].floor() as i64)
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }
}

/// Pixels at or above `threshold` of full scale are foreground.
pub fn binarize(pixels: &[u8], width: usize, height: usize, threshold: f64) -> Binary {
    Binary::from_fn(width, height, |x, y| pixels[y * width + x] as f64 / 255.0 >= threshold)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Contour {
    pub points: Vec<[f64; 2]>,
    pub hole: bool,
}

impl Contour {
    pub fn perimeter(&self) -> f64 {
        perimeter(&self.points)
    }
}

fn perimeter(p: &[[f64; 2]]) -> f64 {
    (0..p.len()).map(|i| dist(p[i], p[(i + 1) % p.len()])).sum()
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Twice the signed area; positive for clockwise-on-screen loops.
pub fn signed_area2(p: &[[f64; 2]]) -> f64 {
    (0..p.len())
        .map(|i| {
            let (a, b) = (p[i], p[(i + 1) % p.len()]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum()
}

type V = (i64, i64);

/// Raw boundary loops, collinear vertices dropped. Diagonal foreground
/// pixels belong to one loop.
pub fn trace_boundaries(img: &Binary) -> Vec<Contour> {
    let mut edges: Vec<(V, V)> = Vec::new();
    for y in 0..img.height as i64 {
        for x in 0..img.width as i64 {
            if !img.get(x, y) {
                continue;
            }
            if !img.get(x, y - 1) {
                edges.push(((x, y), (x + 1, y)));
            }
            if !img.get(x + 1, y) {
                edges.push(((x + 1, y), (x + 1, y + 1)));
            }
            if !img.get(x, y + 1) {
                edges.push(((x + 1, y + 1), (x, y + 1)));
            }
            if !img.get(x - 1, y) {
                edges.push(((x, y + 1), (x, y)));
            }
        }
    }
    let mut out_of: HashMap<V, Vec<usize>> = HashMap::new();
    for (i, e) in edges.iter().enumerate() {
        out_of.entry(e.0).or_default().push(i);
    }
    let mut used = vec![false; edges.len()];
    let mut loops = Vec::new();
    for start in 0..edges.len() {
        if used[start] {
            continue;
        }
        let mut pts: Vec<V> = Vec::new();
        let mut cur = start;
        loop {
            used[cur] = true;
            let (a, b) = edges[cur];
            pts.push(a);
            let d = (b.0 - a.0, b.1 - a.1);
            // left turn first, then straight, then right
            let prefs = [(d.1, -d.0), d, (-d.1, d.0)];
            let next = prefs.iter().find_map(|&p| {
                out_of.get(&b)?.iter().copied().find(|&j| {
                    let (c, e) = edges[j];
                    (e.0 - c.0, e.1 - c.1) == p && (!used[j] || j == start)
                })
            });
            match next {
                Some(j) if j == start => break,
                Some(j) => cur = j,
                None => break,
            }
        }
        let pts: Vec<[f64; 2]> = drop_collinear(&pts).into_iter().map(|(x, y)| [x as f64, y as f64]).collect();
        if pts.len() >= 3 {
            let hole = signed_area2(&pts) < 0.0;
            loops.push(Contour { points: pts, hole });
        }
    }
    loops
}

fn drop_collinear(p: &[V]) -> Vec<V> {
    let n = p.len();
    (0..n)
        .filter(|&i| {
            let (a, b, c) = (p[(i + n - 1) % n], p[i], p[(i + 1) % n]);
            (b.0 - a.0) * (c.1 - b.1) - (b.1 - a.1) * (c.0 - b.0) != 0
        })
        .map(|i| p[i])
        .collect()
}

fn seg_dist(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let l2 = dx * dx + dy * dy;
    if l2 == 0.0 {
        return dist(p, a);
    }
    // differences only, so integer shifts give identical results
    let (px, py) = (p[0] - a[0], p[1] - a[1]);
    let t = ((px * dx + py * dy) / l2).clamp(0.0, 1.0);
    (px - t * dx).hypot(py - t * dy)
}

/// Ramer-Douglas-Peucker on an open chain; keeps both ends.
pub fn rdp(p: &[[f64; 2]], eps: f64) -> Vec<[f64; 2]> {
    if p.len() < 3 {
        return p.to_vec();
    }
    let (first, last) = (p[0], p[p.len() - 1]);
    let (mut k, mut dmax) = (0, 0.0);
    for (i, &q) in p.iter().enumerate().take(p.len() - 1).skip(1) {
        let d = seg_dist(q, first, last);
        if d > dmax {
            (k, dmax) = (i, d);
        }
    }
    if dmax > eps {
        let mut left = rdp(&p[..=k], eps);
        left.pop();
        left.extend(rdp(&p[k..], eps));
        left
    } else {
        vec![first, last]
    }
}

/// Closed-loop simplification: split at the first vertex and the vertex
/// farthest from it, simplify both halves.
pub fn rdp_closed(p: &[[f64; 2]], eps: f64) -> Vec<[f64; 2]> {
    if p.len() <= 3 {
        return p.to_vec();
    }
    let k = (1..p.len()).max_by(|&i, &j| dist(p[0], p[i]).total_cmp(&dist(p[0], p[j])).then(j.cmp(&i))).unwrap();
    let mut a = rdp(&p[..=k], eps);
    let mut second: Vec<[f64; 2]> = p[k..].to_vec();
    second.push(p[0]);
    let b = rdp(&second, eps);
    a.pop();
    a.extend(&b[..b.len() - 1]);
    a
}

/// Traced boundaries simplified with tolerance `rel_eps` times each
/// loop's arc length. Loops that collapse below three vertices are dropped.
pub fn approximate_contours(img: &Binary, rel_eps: f64) -> Vec<Contour> {
    trace_boundaries(img)
        .into_iter()
        .filter_map(|c| {
            let eps = rel_eps * c.perimeter();
            let pts = rdp_closed(&c.points, eps);
            (pts.len() >= 3).then_some(Contour { points: pts, hole: c.hole })
        })
        .collect()
}
