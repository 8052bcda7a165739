//! Hyperbolic word embeddings in the Poincaré ball.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::taxonomy::Taxonomy;

/// Retraction margin: every stored vector has norm below `1 - EPS_BALL`.
pub const EPS_BALL: f64 = 1e-5;
const MAX_NORM: f64 = 1.0 - EPS_BALL - 1e-9;
const INIT_RANGE: f64 = 1e-3;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sq_norm(a: &[f64]) -> f64 {
    dot(a, a)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_in_ball(v: &[f64]) -> Result<()> {
    let n = sq_norm(v);
    if !n.is_finite() || n >= 1.0 {
        return Err(Error::Domain(format!(
            "point with norm {} is outside the open unit ball",
            n.sqrt()
        )));
    }
    Ok(())
}

fn arcosh(x: f64) -> f64 {
    (x + (x * x - 1.0).max(0.0).sqrt()).ln()
}

/// Hyperbolic distance between two points of the open unit ball.
pub fn poincare_distance(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::InvalidInput(format!(
            "dimension mismatch: {} vs {}",
            u.len(),
            v.len()
        )));
    }
    check_in_ball(u)?;
    check_in_ball(v)?;
    Ok(distance_unchecked(u, v))
}

fn distance_unchecked(u: &[f64], v: &[f64]) -> f64 {
    let alpha = 1.0 - sq_norm(u);
    let beta = 1.0 - sq_norm(v);
    arcosh(1.0 + 2.0 * sq_dist(u, v) / (alpha * beta))
}

/// Euclidean gradient of `d(u, v)` with respect to `u`. Zero at `u == v`,
/// where the distance is not differentiable.
pub fn distance_grad_u(u: &[f64], v: &[f64]) -> Vec<f64> {
    let uu = sq_norm(u);
    let vv = sq_norm(v);
    let alpha = 1.0 - uu;
    let beta = 1.0 - vv;
    let gamma = 1.0 + 2.0 * sq_dist(u, v) / (alpha * beta);
    let root = (gamma * gamma - 1.0).sqrt();
    if root == 0.0 || !root.is_finite() {
        return vec![0.0; u.len()];
    }
    let uv = dot(u, v);
    let c = 4.0 / (beta * alpha * alpha * root);
    let a = 1.0 - 2.0 * uv + vv;
    u.iter().zip(v).map(|(&ui, &vi)| c * (a * ui - alpha * vi)).collect()
}

/// Pull a point back inside the ball if it left it.
pub fn project(v: &mut [f64]) {
    let norm = sq_norm(v).sqrt();
    if norm >= MAX_NORM {
        let s = MAX_NORM / norm;
        v.iter_mut().for_each(|x| *x *= s);
    }
}

/// Logarithmic map at the origin, `artanh(‖x‖)·x/‖x‖`: the tangent vector
/// whose length is half the hyperbolic distance to the origin.
pub fn log_map_origin(x: &[f64]) -> Vec<f64> {
    let norm = sq_norm(x).sqrt();
    if norm == 0.0 {
        return x.to_vec();
    }
    let s = norm.min(MAX_NORM).atanh() / norm;
    x.iter().map(|v| v * s).collect()
}

/// Softmax ranking loss of one hypernym edge `(u, v)` against negatives:
/// `d(u,v) + log Σ_{w ∈ {v} ∪ negs} exp(-d(u,w))`.
#[derive(Clone, Debug)]
pub struct EdgeLoss {
    pub loss: f64,
    pub grad_u: Vec<f64>,
    /// Gradient for `v` followed by one per negative, in input order.
    pub grad_targets: Vec<Vec<f64>>,
}

pub fn edge_loss(u: &[f64], v: &[f64], negatives: &[&[f64]]) -> EdgeLoss {
    let targets: Vec<&[f64]> = std::iter::once(v).chain(negatives.iter().copied()).collect();
    let dists: Vec<f64> = targets.iter().map(|t| distance_unchecked(u, t)).collect();
    let m = dists.iter().cloned().fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = dists.iter().map(|d| (m - d).exp()).collect();
    let z: f64 = weights.iter().sum();
    let loss = dists[0] - m + z.ln();

    let mut grad_u = vec![0.0; u.len()];
    let mut grad_targets = Vec::with_capacity(targets.len());
    for (j, t) in targets.iter().enumerate() {
        let mut coeff = -weights[j] / z;
        if j == 0 {
            coeff += 1.0;
        }
        for (g, x) in grad_u.iter_mut().zip(distance_grad_u(u, t)) {
            *g += coeff * x;
        }
        grad_targets.push(distance_grad_u(t, u).into_iter().map(|x| coeff * x).collect());
    }
    EdgeLoss {
        loss,
        grad_u,
        grad_targets,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoincareConfig {
    pub dim: usize,
    pub epochs: usize,
    pub lr: f64,
    pub negatives: usize,
    pub burn_in_epochs: usize,
    pub seed: u64,
}

impl Default for PoincareConfig {
    fn default() -> Self {
        Self {
            dim: 10,
            epochs: 200,
            lr: 0.3,
            negatives: 10,
            burn_in_epochs: 10,
            seed: 0,
        }
    }
}

impl PoincareConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::Config(format!("dim must be >= 2, got {}", self.dim)));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if self.negatives == 0 {
            return Err(Error::Config("negatives must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMeta {
    pub seed: u64,
    pub epochs: usize,
    pub lr: f64,
    pub negatives: usize,
    pub burn_in_epochs: usize,
    /// Mean edge loss per epoch.
    #[serde(default)]
    pub epoch_losses: Vec<f64>,
}

/// Trained word vectors, immutable once built.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoincareEmbedding {
    pub dim: usize,
    pub words: BTreeMap<String, Vec<f64>>,
    pub meta: EmbeddingMeta,
}

impl PoincareEmbedding {
    pub fn embed(&self, word: &str) -> Result<&[f64]> {
        self.words
            .get(word)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::NotFound(format!("word '{word}' has no embedding")))
    }

    /// The word's vector in tangent coordinates at the origin; this is the
    /// form the question decoder consumes.
    pub fn conditioning(&self, word: &str) -> Result<Vec<f64>> {
        self.embed(word).map(log_map_origin)
    }

    pub fn distance(&self, a: &str, b: &str) -> Result<f64> {
        poincare_distance(self.embed(a)?, self.embed(b)?)
    }

    pub fn validate(&self) -> Result<()> {
        for (w, v) in &self.words {
            if v.len() != self.dim {
                return Err(Error::Data(format!(
                    "embedding of '{w}' has {} dims, expected {}",
                    v.len(),
                    self.dim
                )));
            }
            if sq_norm(v).sqrt() >= 1.0 - EPS_BALL || v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Data(format!("embedding of '{w}' leaves the ball")));
            }
        }
        Ok(())
    }

    /// Error listing taxonomy words without a vector.
    pub fn check_covers(&self, taxonomy: &Taxonomy) -> Result<()> {
        let missing: Vec<&str> = taxonomy
            .words()
            .iter()
            .filter(|w| !self.words.contains_key(*w))
            .map(String::as_str)
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::NotFound(format!("no embedding for: {}", missing.join(", "))))
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let e: Self = serde_json::from_str(text)?;
        e.validate()?;
        Ok(e)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }
}

/// Training pairs: every word paired with each of its strict hypernyms.
pub fn closure_edges(taxonomy: &Taxonomy) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for u in 0..taxonomy.len() {
        for a in taxonomy.ancestor_ids(u) {
            if a != u {
                edges.push((u, a));
            }
        }
    }
    edges
}

pub fn train_embeddings(taxonomy: &Taxonomy, config: &PoincareConfig) -> Result<PoincareEmbedding> {
    train_embeddings_with(taxonomy, config, |_, _| {})
}

/// Trains with riemannian SGD; `on_epoch` sees the vectors (indexed by
/// taxonomy id) after each epoch.
pub fn train_embeddings_with(
    taxonomy: &Taxonomy,
    config: &PoincareConfig,
    mut on_epoch: impl FnMut(usize, &[Vec<f64>]),
) -> Result<PoincareEmbedding> {
    config.validate()?;
    let n = taxonomy.len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut theta: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            (0..config.dim)
                .map(|_| rng.random_range(-INIT_RANGE..=INIT_RANGE))
                .collect()
        })
        .collect();

    let mut edges = closure_edges(taxonomy);
    // Words related to u in either direction are never its negatives.
    let related: Vec<BTreeSet<usize>> = (0..n).map(|u| taxonomy.ancestor_ids(u)).collect();
    let negatives_of: Vec<Vec<usize>> = (0..n)
        .map(|u| {
            (0..n)
                .filter(|&w| !related[u].contains(&w) && !related[w].contains(&u))
                .collect()
        })
        .collect();

    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let lr = if epoch < config.burn_in_epochs {
            config.lr / 10.0
        } else {
            config.lr
        };
        edges.shuffle(&mut rng);
        let mut total = 0.0;
        for &(u, v) in &edges {
            let pool = &negatives_of[u];
            let negs: Vec<usize> = if pool.is_empty() {
                Vec::new()
            } else {
                (0..config.negatives)
                    .map(|_| pool[rng.random_range(0..pool.len())])
                    .collect()
            };
            let neg_vecs: Vec<&[f64]> = negs.iter().map(|&w| theta[w].as_slice()).collect();
            let step = edge_loss(&theta[u], &theta[v], &neg_vecs);
            total += step.loss;

            let mut grads: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
            let mut add = |id: usize, g: &[f64]| {
                let acc = grads.entry(id).or_insert_with(|| vec![0.0; g.len()]);
                acc.iter_mut().zip(g).for_each(|(a, b)| *a += b);
            };
            add(u, &step.grad_u);
            add(v, &step.grad_targets[0]);
            for (&w, g) in negs.iter().zip(&step.grad_targets[1..]) {
                add(w, g);
            }
            for (id, g) in grads {
                let p = &mut theta[id];
                let scale = lr * (1.0 - sq_norm(p)).powi(2) / 4.0;
                p.iter_mut().zip(&g).for_each(|(x, gi)| *x -= scale * gi);
                project(p);
            }
        }
        epoch_losses.push(if edges.is_empty() {
            0.0
        } else {
            total / edges.len() as f64
        });
        on_epoch(epoch, &theta);
    }

    let words = taxonomy
        .words()
        .iter()
        .cloned()
        .zip(theta)
        .collect::<BTreeMap<_, _>>();
    Ok(PoincareEmbedding {
        dim: config.dim,
        words,
        meta: EmbeddingMeta {
            seed: config.seed,
            epochs: config.epochs,
            lr: config.lr,
            negatives: config.negatives,
            burn_in_epochs: config.burn_in_epochs,
            epoch_losses,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::gradient_check;
    use rand::Rng;
    use proptest::prelude::*;

    fn random_point(rng: &mut ChaCha8Rng, dim: usize, max_norm: f64) -> Vec<f64> {
        let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let r = rng.random_range(0.0..max_norm);
        let n = sq_norm(&v).sqrt();
        v.iter().map(|x| x / n * r).collect()
    }

    #[test]
    fn log_map_length_is_half_the_distance_to_origin() {
        let x = [0.3, -0.5, 0.7];
        let t = log_map_origin(&x);
        let len = t.iter().map(|v| v * v).sum::<f64>().sqrt();
        let d = poincare_distance(&[0.0; 3], &x).unwrap();
        assert!((2.0 * len - d).abs() < 1e-12);
        assert!((t[0] / t[1] - x[0] / x[1]).abs() < 1e-12);
        assert_eq!(log_map_origin(&[0.0, 0.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn distance_examples() {
        assert_eq!(poincare_distance(&[0.0, 0.0], &[0.0, 0.0]).unwrap(), 0.0);
        let d = poincare_distance(&[0.5, 0.0], &[0.0, 0.0]).unwrap();
        assert!((d - 3f64.ln()).abs() < 1e-12);
        assert!(matches!(
            poincare_distance(&[1.0, 0.0], &[0.0, 0.0]),
            Err(Error::Domain(_))
        ));
        assert!(poincare_distance(&[0.1], &[0.1, 0.0]).is_err());
    }

    #[test]
    fn gradient_zero_at_coincident_points() {
        let u = [0.3, -0.2];
        assert_eq!(distance_grad_u(&u, &u), vec![0.0, 0.0]);
    }

    #[test]
    fn distance_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let u = random_point(&mut rng, 4, 0.9);
            let v = random_point(&mut rng, 4, 0.9);
            let g = distance_grad_u(&u, &v);
            let err = gradient_check(|x| distance_unchecked(x, &v), &g, &u, 1e-6);
            assert!(err < 1e-4, "relative error {err}");
        }
    }

    #[test]
    fn edge_loss_gradient_scales_linearly() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let u = random_point(&mut rng, 3, 0.8);
        let v = random_point(&mut rng, 3, 0.8);
        let n1 = random_point(&mut rng, 3, 0.8);
        let base = edge_loss(&u, &v, &[&n1]);
        let c = 3.5;
        let scaled: Vec<f64> = base.grad_u.iter().map(|g| g * c).collect();
        let err = gradient_check(|x| c * edge_loss(x, &v, &[&n1]).loss, &scaled, &u, 1e-6);
        assert!(err < 1e-4);
    }

    #[test]
    fn projection_keeps_points_inside() {
        let mut v = vec![3.0, 4.0];
        project(&mut v);
        assert!(sq_norm(&v).sqrt() < 1.0 - EPS_BALL);
        let mut w = vec![0.1, 0.2];
        project(&mut w);
        assert_eq!(w, vec![0.1, 0.2]);
    }

    fn chain_taxonomy() -> Taxonomy {
        let edges: Vec<(String, String)> = [
            ("a1", "a"),
            ("a2", "a"),
            ("b1", "b"),
            ("b2", "b"),
            ("a", "root"),
            ("b", "root"),
        ]
        .iter()
        .map(|(c, p)| (c.to_string(), p.to_string()))
        .collect();
        Taxonomy::from_edges(&edges, None).unwrap()
    }

    #[test]
    fn training_is_deterministic_and_bounded() {
        let tax = chain_taxonomy();
        let cfg = PoincareConfig {
            dim: 3,
            epochs: 30,
            seed: 11,
            ..Default::default()
        };
        let mut seen_epochs = 0;
        let a = train_embeddings_with(&tax, &cfg, |_, theta| {
            seen_epochs += 1;
            assert!(theta.iter().all(|v| sq_norm(v).sqrt() < 1.0 - EPS_BALL));
        })
        .unwrap();
        assert_eq!(seen_epochs, 30);
        let b = train_embeddings(&tax, &cfg).unwrap();
        assert_eq!(a, b);
        a.check_covers(&tax).unwrap();
        assert_eq!(a.embed("a1").unwrap().len(), 3);
        assert!(matches!(a.embed("zebra"), Err(Error::NotFound(_))));
    }

    #[test]
    fn siblings_end_closer_than_cousins() {
        let tax = chain_taxonomy();
        let e = train_embeddings(
            &tax,
            &PoincareConfig {
                dim: 2,
                epochs: 150,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(e.distance("a1", "a").unwrap() < e.distance("a1", "b").unwrap());
    }

    #[test]
    fn rejects_bad_config() {
        let tax = chain_taxonomy();
        for cfg in [
            PoincareConfig { dim: 1, ..Default::default() },
            PoincareConfig { lr: 0.0, ..Default::default() },
            PoincareConfig { epochs: 0, ..Default::default() },
            PoincareConfig { negatives: 0, ..Default::default() },
        ] {
            assert!(matches!(train_embeddings(&tax, &cfg), Err(Error::Config(_))));
        }
    }

    #[test]
    fn json_round_trip() {
        let tax = chain_taxonomy();
        let e = train_embeddings(&tax, &PoincareConfig { epochs: 5, ..Default::default() }).unwrap();
        let back = PoincareEmbedding::from_json(&e.to_json().unwrap()).unwrap();
        assert_eq!(back, e);
        let v: serde_json::Value = serde_json::from_str(&e.to_json().unwrap()).unwrap();
        assert!(v["words"]["a1"].is_array());
        assert_eq!(v["dim"], 10);
    }

    fn ball_point(dim: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-1.0f64..1.0, dim).prop_map(|v| {
            let n = sq_norm(&v).sqrt();
            if n >= 0.95 {
                v.iter().map(|x| x / n * 0.95).collect()
            } else {
                v
            }
        })
    }

    proptest! {
        #[test]
        fn distance_axioms(u in ball_point(3), v in ball_point(3), w in ball_point(3)) {
            let duv = poincare_distance(&u, &v).unwrap();
            prop_assert_eq!(duv, poincare_distance(&v, &u).unwrap());
            prop_assert_eq!(poincare_distance(&u, &u).unwrap(), 0.0);
            let duw = poincare_distance(&u, &w).unwrap();
            let dwv = poincare_distance(&w, &v).unwrap();
            prop_assert!(duv <= duw + dwv + 1e-9);
        }

        #[test]
        fn projection_always_lands_in_ball(v in proptest::collection::vec(-10.0f64..10.0, 1..6)) {
            let mut p = v.clone();
            project(&mut p);
            prop_assert!(sq_norm(&p).sqrt() < 1.0 - EPS_BALL);
        }
    }
}
