use rand::Rng;

use super::{ScenarioError, ScenarioTree};

/// One element of the product set: a measure index per non-terminal node
/// (in preorder) and the resulting leaf-path probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductMeasure {
    pub choice: Vec<usize>,
    pub leaf_probs: Vec<f64>,
}

impl ProductMeasure {
    pub fn from_choice(tree: &ScenarioTree, choice: Vec<usize>) -> Self {
        let mut node_prob = vec![0.0; tree.nodes().len()];
        node_prob[tree.root()] = 1.0;
        // Preorder guarantees parents are visited before children.
        for &n in tree.internal_nodes() {
            let k = choice[tree.internal_position(n).expect("internal")];
            let m = &tree.ambiguity(n).expect("internal").measures()[k];
            for (c, p) in tree.node(n).children.iter().zip(m) {
                node_prob[*c] = node_prob[n] * p;
            }
        }
        let leaf_probs = tree.leaves().iter().map(|&l| node_prob[l]).collect();
        Self { choice, leaf_probs }
    }
}

/// Number of product measures, saturating at `u128::MAX`.
pub fn product_measure_count(tree: &ScenarioTree) -> u128 {
    tree.internal_nodes()
        .iter()
        .map(|&n| tree.ambiguity(n).map_or(1, |a| a.len()) as u128)
        .fold(1u128, |acc, k| acc.saturating_mul(k))
}

/// Odometer over measure choices; the last non-terminal node varies fastest.
#[derive(Debug, Clone)]
pub struct ProductMeasures<'a> {
    tree: &'a ScenarioTree,
    sizes: Vec<usize>,
    next: Option<Vec<usize>>,
}

impl Iterator for ProductMeasures<'_> {
    type Item = ProductMeasure;

    fn next(&mut self) -> Option<ProductMeasure> {
        let cur = self.next.take()?;
        let mut succ = cur.clone();
        let mut i = succ.len();
        let mut advanced = false;
        while i > 0 {
            i -= 1;
            succ[i] += 1;
            if succ[i] < self.sizes[i] {
                advanced = true;
                break;
            }
            succ[i] = 0;
        }
        if advanced {
            self.next = Some(succ);
        }
        Some(ProductMeasure::from_choice(self.tree, cur))
    }
}

pub fn enumerate_product_measures(tree: &ScenarioTree, cap: u128) -> Result<ProductMeasures<'_>, ScenarioError> {
    let count = product_measure_count(tree);
    if count > cap {
        return Err(ScenarioError::TooManyMeasures { count, cap });
    }
    let sizes: Vec<usize> = tree.internal_nodes().iter().map(|&n| tree.ambiguity(n).map_or(1, |a| a.len())).collect();
    Ok(ProductMeasures { tree, next: Some(vec![0; sizes.len()]), sizes })
}

/// `n` product measures drawn uniformly (with replacement).
pub fn sample_product_measures<R: Rng>(tree: &ScenarioTree, n: usize, rng: &mut R) -> Vec<ProductMeasure> {
    (0..n)
        .map(|_| {
            let choice = tree
                .internal_nodes()
                .iter()
                .map(|&v| rng.gen_range(0..tree.ambiguity(v).map_or(1, |a| a.len())))
                .collect();
            ProductMeasure::from_choice(tree, choice)
        })
        .collect()
}
