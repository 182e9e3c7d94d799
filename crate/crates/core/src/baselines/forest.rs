//! Bagged CART trees with Gini splits and random feature subsets.

use alloc::vec::Vec;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::classifier::argmax;
use crate::rng::derive_seed;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestConfig {
    pub num_trees: usize,
    pub max_depth: usize,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            num_trees: 100,
            max_depth: 12,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        /// Taken when `x[feature] <= threshold`.
        left: usize,
        right: usize,
    },
    Leaf {
        histogram: Vec<u32>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    /// Root at index 0.
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
                Node::Leaf { histogram } => {
                    let h: Vec<f64> = histogram.iter().map(|&c| c as f64).collect();
                    return argmax(&h);
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    pub classes: usize,
    pub features: usize,
    pub config: ForestConfig,
}

impl ForestModel {
    pub fn node_count(&self) -> usize {
        self.trees.iter().map(|t| t.nodes.len()).sum()
    }

    /// Bytes of a flat encoding: 16 per split node, 4 per class per leaf.
    pub fn serialized_bytes(&self) -> usize {
        self.trees
            .iter()
            .flat_map(|t| &t.nodes)
            .map(|n| match n {
                Node::Split { .. } => 16,
                Node::Leaf { histogram } => 4 * histogram.len(),
            })
            .sum()
    }
}

fn gini(counts: &[u32], n: u32) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n) * (c as f64 / n)).sum::<f64>()
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [usize],
    classes: usize,
    max_depth: usize,
    try_features: usize,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn histogram(&self, idx: &[usize]) -> Vec<u32> {
        let mut h = alloc::vec![0u32; self.classes];
        for &i in idx {
            h[self.y[i]] += 1;
        }
        h
    }

    /// Best `(feature, threshold, weighted child impurity)` among sampled features.
    fn best_split(&self, idx: &mut [usize], rng: &mut ChaCha8Rng) -> Option<(usize, f64, f64)> {
        let f_total = self.x[0].len();
        let candidates = sample(rng, f_total, self.try_features.min(f_total)).into_vec();
        let total = self.histogram(idx);
        let n = idx.len() as u32;
        let mut best: Option<(usize, f64, f64)> = None;
        for f in candidates {
            idx.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]).then(a.cmp(&b)));
            let mut left = alloc::vec![0u32; self.classes];
            for pos in 0..idx.len() - 1 {
                left[self.y[idx[pos]]] += 1;
                let (lo, hi) = (self.x[idx[pos]][f], self.x[idx[pos + 1]][f]);
                if lo == hi {
                    continue;
                }
                let nl = pos as u32 + 1;
                let nr = (n - nl) as f64;
                let right_purity: f64 = total
                    .iter()
                    .zip(&left)
                    .map(|(t, l)| {
                        let q = (t - l) as f64 / nr;
                        q * q
                    })
                    .sum();
                let score = (nl as f64 * gini(&left, nl) + nr * (1.0 - right_purity)) / n as f64;
                if best.is_none_or(|(_, _, s)| score < s) {
                    let mid = lo + (hi - lo) / 2.0;
                    best = Some((f, if mid < hi { mid } else { lo }, score));
                }
            }
        }
        best
    }

    fn grow(&mut self, mut idx: Vec<usize>, depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let hist = self.histogram(&idx);
        let pure = hist.iter().filter(|&&c| c > 0).count() <= 1;
        let me = self.nodes.len();
        self.nodes.push(Node::Leaf {
            histogram: hist.clone(),
        });
        if depth >= self.max_depth || pure || idx.len() < 2 {
            return me;
        }
        let parent = gini(&hist, idx.len() as u32);
        let Some((feature, threshold, score)) = self.best_split(&mut idx, rng) else {
            return me;
        };
        if score >= parent {
            return me;
        }
        let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| self.x[i][feature] <= threshold);
        let left = self.grow(l, depth + 1, rng);
        let right = self.grow(r, depth + 1, rng);
        self.nodes[me] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        me
    }
}

pub fn forest_fit(features: &[Vec<f64>], labels: &[usize], config: &ForestConfig) -> Result<ForestModel> {
    if features.is_empty() {
        return Err(Error::EmptyInput("forest_fit"));
    }
    if features.len() != labels.len() {
        return Err(Error::ShapeMismatch {
            op: "forest_fit",
            expected: alloc::vec![features.len()],
            got: alloc::vec![labels.len()],
        });
    }
    let width = features[0].len();
    if width == 0 || features.iter().any(|f| f.len() != width) {
        return Err(Error::InvalidConfig(
            "feature vectors must share a non-zero length".into(),
        ));
    }
    if config.num_trees == 0 {
        return Err(Error::InvalidConfig("a forest needs at least one tree".into()));
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let try_features = (libm::sqrt(width as f64) as usize).max(1);
    let n = features.len();
    let trees = (0..config.num_trees)
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, t as u64));
            let boot: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            let mut b = Builder {
                x: features,
                y: labels,
                classes,
                max_depth: config.max_depth,
                try_features,
                nodes: Vec::new(),
            };
            b.grow(boot, 0, &mut rng);
            Tree { nodes: b.nodes }
        })
        .collect();
    Ok(ForestModel {
        trees,
        classes,
        features: width,
        config: *config,
    })
}

/// Majority vote; ties go to the lower class index.
pub fn forest_predict(model: &ForestModel, features: &[Vec<f64>]) -> Result<Vec<usize>> {
    features
        .iter()
        .map(|x| {
            if x.len() != model.features {
                return Err(Error::ShapeMismatch {
                    op: "forest_predict",
                    expected: alloc::vec![model.features],
                    got: alloc::vec![x.len()],
                });
            }
            let mut votes = alloc::vec![0.0; model.classes];
            for t in &model.trees {
                votes[t.predict(x)] += 1.0;
            }
            Ok(argmax(&votes))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_d(values: &[f64]) -> Vec<Vec<f64>> {
        values.iter().map(|&v| alloc::vec![v]).collect()
    }

    #[test]
    fn separable_data_is_learned() {
        let x = one_d(&[0.1, 0.2, 0.3, 0.4, 1.1, 1.2, 1.3, 1.4]);
        let y = [0, 0, 0, 0, 1, 1, 1, 1];
        let m = forest_fit(
            &x,
            &y,
            &ForestConfig {
                num_trees: 15,
                max_depth: 4,
                seed: 1,
            },
        )
        .unwrap();
        assert_eq!(forest_predict(&m, &x).unwrap(), y);
        assert_eq!(
            m,
            forest_fit(
                &x,
                &y,
                &ForestConfig {
                    num_trees: 15,
                    max_depth: 4,
                    seed: 1
                }
            )
            .unwrap()
        );
    }

    #[test]
    fn depth_zero_is_a_majority_vote() {
        let x = one_d(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]);
        let y = [1, 1, 1, 1, 1, 1, 1, 1, 1, 0];
        let m = forest_fit(
            &x,
            &y,
            &ForestConfig {
                num_trees: 1,
                max_depth: 0,
                seed: 3,
            },
        )
        .unwrap();
        assert_eq!(m.node_count(), 1);
        assert!(forest_predict(&m, &x).unwrap().iter().all(|&p| p == 1));
    }

    #[test]
    fn vote_counts() {
        let leaf = |c: usize| Tree {
            nodes: alloc::vec![Node::Leaf {
                histogram: (0..2).map(|i| u32::from(i == c)).collect()
            }],
        };
        let m = ForestModel {
            trees: alloc::vec![leaf(0), leaf(0), leaf(1)],
            classes: 2,
            features: 1,
            config: ForestConfig::default(),
        };
        assert_eq!(forest_predict(&m, &[alloc::vec![0.0]]).unwrap(), [0]);
        let tie = ForestModel {
            trees: alloc::vec![leaf(1), leaf(0)],
            ..m
        };
        assert_eq!(forest_predict(&tie, &[alloc::vec![0.0]]).unwrap(), [0]);
    }

    #[test]
    fn empty_rejected() {
        assert!(forest_fit(&[], &[], &ForestConfig::default()).is_err());
    }
}
