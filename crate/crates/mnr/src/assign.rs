//! Assignment populations: same-type node pairings drawn with a softmax
//! over negative positional distance, scored by mismatch.

use rand::Rng;

use crate::refine::{mismatch_score, Assignment};
use crate::spn::{NodeId, Observed, Spn, SpnError};

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// One injective, type-preserving assignment. Pairs in `fixed` are kept
/// when valid; the rest are drawn one pair at a time with probability
/// proportional to exp(-distance) among the pairs still open.
pub fn generate_assignment(src: &Spn, obs: &Observed, fixed: &Assignment, rng: &mut impl Rng) -> Assignment {
    let mut f = Assignment::new();
    let mut used = vec![false; obs.len()];
    for (&s, &o) in fixed {
        let (Some(sn), Some(&i)) = (src.nodes.get(&s), obs.index.get(&o)) else { continue };
        if obs.types[i] == sn.ty && !used[i] {
            used[i] = true;
            f.insert(s, o);
        }
    }
    // (source id, observed index, distance)
    let mut pairs: Vec<(NodeId, usize, f64)> = Vec::new();
    for (&s, sn) in &src.nodes {
        if f.contains_key(&s) {
            continue;
        }
        for &i in obs.by_type.get(&sn.ty).into_iter().flatten() {
            if !used[i] {
                pairs.push((s, i, dist(sn.pos, obs.pos[i])));
            }
        }
    }
    let mut weights: Vec<f64> = Vec::with_capacity(pairs.len());
    while !pairs.is_empty() {
        let d0 = pairs.iter().map(|p| p.2).fold(f64::INFINITY, f64::min);
        weights.clear();
        weights.extend(pairs.iter().map(|p| (d0 - p.2).exp()));
        let total: f64 = weights.iter().sum();
        let mut r = rng.gen::<f64>() * total;
        let mut pick = pairs.len() - 1;
        for (i, w) in weights.iter().enumerate() {
            if r < *w {
                pick = i;
                break;
            }
            r -= w;
        }
        let (s, i, _) = pairs[pick];
        f.insert(s, obs.ids[i]);
        pairs.retain(|p| p.0 != s && p.1 != i);
    }
    f
}

pub fn generate_assignment_population(
    src: &Spn,
    obs: &Observed,
    fixed: &Assignment,
    size: usize,
    rng: &mut impl Rng,
) -> Vec<Assignment> {
    (0..size.max(1)).map(|_| generate_assignment(src, obs, fixed, rng)).collect()
}

/// Index and score of the lowest-mismatch member; ties go to the lowest index.
pub fn best_assignment(src: &Spn, obs: &Observed, population: &[Assignment]) -> Result<(usize, usize), SpnError> {
    let mut best = (0, usize::MAX);
    for (i, f) in population.iter().enumerate() {
        let s = mismatch_score(src, obs, f)?;
        if s < best.1 {
            best = (i, s);
            if s == 0 {
                break;
            }
        }
    }
    Ok(best)
}

/// Population search: the best assignment found and its mismatch.
pub fn search(
    src: &Spn,
    obs: &Observed,
    fixed: &Assignment,
    size: usize,
    rng: &mut impl Rng,
) -> Result<(Assignment, usize), SpnError> {
    src.same_keys(&obs.spn)?;
    let mut best: Option<(Assignment, usize)> = None;
    for _ in 0..size.max(1) {
        let f = generate_assignment(src, obs, fixed, rng);
        let s = mismatch_score(src, obs, &f)?;
        if best.as_ref().map_or(true, |b| s < b.1) {
            best = Some((f, s));
            if s == 0 {
                break;
            }
        }
    }
    Ok(best.unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn nearer_candidate_frequency() {
        let mut src = Spn::new(["k"]);
        src.add_node(0, 3, [0.0, 0.0]);
        let mut o = Spn::new(["k"]);
        o.add_node(10, 3, [1.0, 0.0]);
        o.add_node(11, 3, [0.0, 5.0]);
        o.add_node(12, 4, [0.0, 0.0]);
        let obs = Observed::new(o);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 10_000;
        let near = (0..n).filter(|_| generate_assignment(&src, &obs, &Assignment::new(), &mut rng)[&0] == 10).count();
        let p = (-1f64).exp() / ((-1f64).exp() + (-5f64).exp());
        let freq = near as f64 / n as f64;
        // binomial sd is about 0.0013
        assert!((freq - p).abs() < 0.006, "{freq} vs {p}");
    }

    #[test]
    fn unique_types_are_forced() {
        let mut src = Spn::new(["k"]);
        src.add_node(0, 1, [0.0, 0.0]);
        src.add_node(1, 2, [9.0, 9.0]);
        let mut o = Spn::new(["k"]);
        o.add_node(5, 2, [0.0, 0.0]);
        o.add_node(6, 1, [20.0, 20.0]);
        let obs = Observed::new(o);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = generate_assignment(&src, &obs, &Assignment::new(), &mut rng);
        assert_eq!(f, Assignment::from([(0, 6), (1, 5)]));
    }

    #[test]
    fn fixed_pairs_are_kept_and_invalid_ones_dropped() {
        let mut src = Spn::new(["k"]);
        src.add_node(0, 1, [0.0, 0.0]);
        src.add_node(1, 1, [0.0, 0.0]);
        let mut o = Spn::new(["k"]);
        o.add_node(5, 1, [0.0, 0.0]);
        o.add_node(6, 1, [50.0, 0.0]);
        o.add_node(7, 2, [0.0, 0.0]);
        let obs = Observed::new(o);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = generate_assignment(&src, &obs, &Assignment::from([(1, 6)]), &mut rng);
        assert_eq!(f, Assignment::from([(0, 5), (1, 6)]));
        // wrong type in the fixed part
        let f = generate_assignment(&src, &obs, &Assignment::from([(1, 7)]), &mut rng);
        assert_eq!(f.len(), 2);
        assert!(f.values().all(|&v| v != 7));
    }

    #[test]
    fn best_breaks_ties_low() {
        let mut src = Spn::new(["k"]);
        src.add_node(0, 1, [0.0, 0.0]);
        let mut o = Spn::new(["k"]);
        o.add_node(3, 1, [0.0, 0.0]);
        let obs = Observed::new(o);
        let pop = vec![Assignment::new(), Assignment::from([(0, 3)]), Assignment::from([(0, 3)])];
        assert_eq!(best_assignment(&src, &obs, &pop).unwrap(), (1, 0));
    }
}
