//! Gradient-change feature nodes and the observation SPN built from them.

use mnr::spn::{NodeId, NodeType, Spn};

use crate::contour::{approximate_contours, binarize, Binary, Contour};

pub const SN_KEYS: [&str; 8] = ["contour_h", "contour_v", "inner_h", "inner_v", "outer_h", "outer_v", "all_h", "all_v"];
pub const N_TYPES: usize = 8;

pub const RDP_REL_EPS: f64 = 0.01;
pub const THRESHOLD: f64 = 0.5;
/// sampling step along a segment, in pixels
pub const SEGMENT_STEP: f64 = 0.25;
/// fraction of samples that must agree for an inner or outer relation
pub const REGION_AGREEMENT: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Axis {
    X,
    Y,
}

/// Axis, sign before and after, and whether the corner is convex.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureType {
    pub axis: Axis,
    pub from_positive: bool,
    pub convex: bool,
}

impl FeatureType {
    pub fn index(self) -> NodeType {
        (self.axis as NodeType) * 4 + (!self.from_positive as NodeType) * 2 + (!self.convex as NodeType)
    }

    pub fn from_index(i: NodeType) -> FeatureType {
        FeatureType {
            axis: if i / 4 == 0 { Axis::X } else { Axis::Y },
            from_positive: (i / 2) % 2 == 0,
            convex: i % 2 == 0,
        }
    }

    pub fn name(self) -> String {
        let a = match self.axis {
            Axis::X => "x",
            Axis::Y => "y",
        };
        let (f, t) = if self.from_positive { ("pos", "neg") } else { ("neg", "pos") };
        format!("{}_{a}{f}_{a}{t}", if self.convex { "cx" } else { "cc" })
    }
}

pub fn type_name(t: NodeType) -> String {
    FeatureType::from_index(t).name()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureNode {
    pub ty: FeatureType,
    pub pos: [f64; 2],
    pub contour: usize,
    pub vertex: usize,
}

/// Intensity gradient across an edge points into the foreground, which
/// lies to the right of travel: (-dy, dx) in screen coordinates.
fn gradient_sign(d: [f64; 2], axis: Axis) -> i8 {
    let g = match axis {
        Axis::X => -d[1],
        Axis::Y => d[0],
    };
    (g > 0.0) as i8 - (g < 0.0) as i8
}

/// Nodes where the gradient sign along an axis flips between the last
/// edge with a nonzero sign and the current edge. The node sits at the
/// corner where the new sign starts.
pub fn gradient_change_nodes(poly: &[[f64; 2]], contour: usize) -> Vec<FeatureNode> {
    // drop zero-length edges
    let mut p: Vec<[f64; 2]> = Vec::with_capacity(poly.len());
    for &q in poly {
        if p.last() != Some(&q) {
            p.push(q);
        }
    }
    while p.len() > 1 && p.first() == p.last() {
        p.pop();
    }
    let m = p.len();
    if m < 3 {
        return Vec::new();
    }
    let edge = |i: usize| {
        let (a, b) = (p[i % m], p[(i + 1) % m]);
        [b[0] - a[0], b[1] - a[1]]
    };
    let mut out = Vec::new();
    for i in 0..m {
        let e_in = edge(i + m - 1);
        let e_out = edge(i);
        let cross = e_in[0] * e_out[1] - e_in[1] * e_out[0];
        for axis in [Axis::X, Axis::Y] {
            let s = gradient_sign(e_out, axis);
            if s == 0 {
                continue;
            }
            let prev = (1..m).map(|j| gradient_sign(edge(i + m - j), axis)).find(|&v| v != 0);
            if let Some(ps) = prev {
                if ps != s {
                    out.push(FeatureNode {
                        ty: FeatureType { axis, from_positive: ps > 0, convex: cross > 0.0 },
                        pos: p[i],
                        contour,
                        vertex: i,
                    });
                }
            }
        }
    }
    out
}

/// Inner (`Some(true)`), outer (`Some(false)`) or mixed.
pub fn segment_region(img: &Binary, a: [f64; 2], b: [f64; 2]) -> Option<bool> {
    let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
    let k = ((len / SEGMENT_STEP).ceil() as usize).max(2);
    let samples = k - 1;
    let fg = (1..k)
        .filter(|&i| {
            let t = i as f64 / k as f64;
            img.at([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])])
        })
        .count();
    let frac = fg as f64 / samples as f64;
    if frac >= REGION_AGREEMENT {
        Some(true)
    } else if 1.0 - frac >= REGION_AGREEMENT {
        Some(false)
    } else {
        None
    }
}

fn add_directed(spn: &mut Spn, kh: usize, kv: usize, a: (NodeId, [f64; 2]), b: (NodeId, [f64; 2])) {
    if a.1[0] < b.1[0] {
        spn.add_edge(kh, a.0, b.0);
    } else if b.1[0] < a.1[0] {
        spn.add_edge(kh, b.0, a.0);
    }
    if a.1[1] < b.1[1] {
        spn.add_edge(kv, a.0, b.0);
    } else if b.1[1] < a.1[1] {
        spn.add_edge(kv, b.0, a.0);
    }
}

/// Eight SNs: contour, inner, outer and all, each horizontal (left to
/// right) and vertical (top to bottom). Node ids follow `nodes` order.
pub fn build_observation_spn(nodes: &[FeatureNode], img: &Binary) -> Spn {
    let mut spn = Spn::new(SN_KEYS);
    for (i, n) in nodes.iter().enumerate() {
        spn.add_node(i as NodeId, n.ty.index(), n.pos);
    }
    let at = |i: usize| (i as NodeId, nodes[i].pos);
    // contour neighbours, cyclic per loop
    let mut start = 0;
    while start < nodes.len() {
        let c = nodes[start].contour;
        let end = start + nodes[start..].iter().take_while(|n| n.contour == c).count();
        if end - start >= 2 {
            for i in start..end {
                let j = if i + 1 == end { start } else { i + 1 };
                add_directed(&mut spn, 0, 1, at(i), at(j));
            }
        }
        start = end;
    }
    for i in 0..nodes.len() {
        for j in i + 1..nodes.len() {
            match segment_region(img, nodes[i].pos, nodes[j].pos) {
                Some(true) => add_directed(&mut spn, 2, 3, at(i), at(j)),
                Some(false) => add_directed(&mut spn, 4, 5, at(i), at(j)),
                None => {}
            }
            add_directed(&mut spn, 6, 7, at(i), at(j));
        }
    }
    spn
}

pub fn contour_nodes(contours: &[Contour]) -> Vec<FeatureNode> {
    contours.iter().enumerate().flat_map(|(i, c)| gradient_change_nodes(&c.points, i)).collect()
}

/// Grayscale image to observation SPN.
pub fn image_to_spn(pixels: &[u8], width: usize, height: usize) -> Spn {
    let img = binarize(pixels, width, height, THRESHOLD);
    let contours = approximate_contours(&img, RDP_REL_EPS);
    build_observation_spn(&contour_nodes(&contours), &img)
}

/// Polygon and typed nodes over the binary image, for inspection.
pub fn render_svg(img: &Binary, contours: &[Contour], nodes: &[FeatureNode], scale: f64) -> String {
    use std::fmt::Write as _;
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\">\n",
        img.width as f64 * scale,
        img.height as f64 * scale
    );
    for y in 0..img.height {
        for x in 0..img.width {
            if img.bits[y * img.width + x] {
                let _ = writeln!(
                    s,
                    "<rect x=\"{}\" y=\"{}\" width=\"{scale}\" height=\"{scale}\" fill=\"#ddd\"/>",
                    x as f64 * scale,
                    y as f64 * scale
                );
            }
        }
    }
    for c in contours {
        let pts: Vec<String> = c.points.iter().map(|p| format!("{},{}", p[0] * scale, p[1] * scale)).collect();
        let _ = writeln!(s, "<polygon points=\"{}\" fill=\"none\" stroke=\"black\"/>", pts.join(" "));
    }
    for n in nodes {
        let _ = writeln!(
            s,
            "<circle cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"hsl({},70%,45%)\"><title>{}</title></circle>",
            n.pos[0] * scale,
            n.pos[1] * scale,
            scale * 0.3,
            n.ty.index() as u32 * 45,
            n.ty.name()
        );
    }
    s.push_str("</svg>\n");
    s
}
