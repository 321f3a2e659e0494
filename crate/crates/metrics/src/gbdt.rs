//! A small histogram-based gradient-boosted-trees binary classifier with
//! logistic loss and second-order (Newton) splits. This is the built-in
//! discriminator for the classifier two-sample tests; depth, rounds and
//! learning rate follow the documented defaults, and the interface is small
//! enough to swap in an external classifier for benchmark parity.

const MAX_BINS: usize = 64;

#[derive(Debug, Clone, Copy)]
pub struct GbdtConfig {
    pub rounds: usize,
    pub depth: usize,
    pub learning_rate: f64,
    pub l2: f64,
}

impl Default for GbdtConfig {
    fn default() -> Self {
        Self {
            rounds: 200,
            depth: 3,
            learning_rate: 0.1,
            l2: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        weight: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { weight } => return *weight,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if row[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }
}

pub struct Gbdt {
    cfg: GbdtConfig,
    trees: Vec<Tree>,
    /// Per-feature bin thresholds (upper edges, exclusive of the last bin).
    bins: Vec<Vec<f64>>,
}

impl Gbdt {
    /// Fit on row-major features with binary labels.
    pub fn fit(features: &[Vec<f64>], labels: &[u8], cfg: GbdtConfig) -> Self {
        assert_eq!(features.len(), labels.len());
        let n = features.len();
        let n_feat = features.first().map_or(0, |r| r.len());

        // Quantile bin edges per feature.
        let mut bins = Vec::with_capacity(n_feat);
        for f in 0..n_feat {
            let mut vals: Vec<f64> = features.iter().map(|r| r[f]).collect();
            vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut edges = Vec::new();
            for b in 1..MAX_BINS {
                let v = vals[(b * n / MAX_BINS).min(n - 1)];
                if edges.last().map_or(true, |&e| v > e) {
                    edges.push(v);
                }
            }
            bins.push(edges);
        }
        // Precomputed bin index per sample per feature.
        let binned: Vec<Vec<u16>> = features
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .map(|(f, &x)| bins[f].partition_point(|&e| e < x) as u16)
                    .collect()
            })
            .collect();

        let mut score = vec![0.0f64; n];
        let mut trees = Vec::with_capacity(cfg.rounds);
        for _ in 0..cfg.rounds {
            // Logistic gradients and hessians.
            let mut grad = vec![0.0; n];
            let mut hess = vec![0.0; n];
            for i in 0..n {
                let p = 1.0 / (1.0 + (-score[i]).exp());
                grad[i] = p - labels[i] as f64;
                hess[i] = (p * (1.0 - p)).max(1e-12);
            }
            let tree = grow_tree(&binned, &bins, &grad, &hess, &cfg);
            for i in 0..n {
                score[i] += cfg.learning_rate * tree.predict(&features[i]);
            }
            trees.push(tree);
        }
        Self { cfg, trees, bins }
    }

    pub fn predict_proba(&self, row: &[f64]) -> f64 {
        let s: f64 = self
            .trees
            .iter()
            .map(|t| self.cfg.learning_rate * t.predict(row))
            .sum();
        1.0 / (1.0 + (-s).exp())
    }

    pub fn accuracy(&self, features: &[Vec<f64>], labels: &[u8]) -> f64 {
        if features.is_empty() {
            return 0.5;
        }
        let correct = features
            .iter()
            .zip(labels)
            .filter(|(row, &y)| ((self.predict_proba(row) > 0.5) as u8) == y)
            .count();
        correct as f64 / features.len() as f64
    }

    pub fn bin_count(&self) -> usize {
        self.bins.iter().map(|b| b.len() + 1).sum()
    }
}

fn grow_tree(
    binned: &[Vec<u16>],
    bins: &[Vec<f64>],
    grad: &[f64],
    hess: &[f64],
    cfg: &GbdtConfig,
) -> Tree {
    let mut nodes = Vec::new();
    let all: Vec<u32> = (0..binned.len() as u32).collect();
    split_node(binned, bins, grad, hess, cfg, &all, 0, &mut nodes);
    Tree { nodes }
}

#[allow(clippy::too_many_arguments)]
fn split_node(
    binned: &[Vec<u16>],
    bins: &[Vec<f64>],
    grad: &[f64],
    hess: &[f64],
    cfg: &GbdtConfig,
    rows: &[u32],
    depth: usize,
    nodes: &mut Vec<Node>,
) -> usize {
    let g_total: f64 = rows.iter().map(|&i| grad[i as usize]).sum();
    let h_total: f64 = rows.iter().map(|&i| hess[i as usize]).sum();
    let leaf = |nodes: &mut Vec<Node>| {
        nodes.push(Node::Leaf {
            weight: -g_total / (h_total + cfg.l2),
        });
        nodes.len() - 1
    };
    if depth >= cfg.depth || rows.len() < 2 {
        return leaf(nodes);
    }

    let parent_score = g_total * g_total / (h_total + cfg.l2);
    let mut best: Option<(f64, usize, u16)> = None;
    let n_feat = bins.len();
    let mut g_hist = vec![0.0f64; MAX_BINS];
    let mut h_hist = vec![0.0f64; MAX_BINS];
    for f in 0..n_feat {
        let edge_count = bins[f].len();
        if edge_count == 0 {
            continue;
        }
        g_hist[..=edge_count].fill(0.0);
        h_hist[..=edge_count].fill(0.0);
        for &i in rows {
            let b = binned[i as usize][f] as usize;
            g_hist[b] += grad[i as usize];
            h_hist[b] += hess[i as usize];
        }
        let mut g_left = 0.0;
        let mut h_left = 0.0;
        for b in 0..edge_count {
            g_left += g_hist[b];
            h_left += h_hist[b];
            let h_right = h_total - h_left;
            if h_left <= 0.0 || h_right <= 0.0 {
                continue;
            }
            let g_right = g_total - g_left;
            let gain = g_left * g_left / (h_left + cfg.l2)
                + g_right * g_right / (h_right + cfg.l2)
                - parent_score;
            if gain > 1e-12 && best.map_or(true, |(bg, _, _)| gain > bg) {
                best = Some((gain, f, b as u16));
            }
        }
    }

    let Some((_, feature, bin)) = best else {
        return leaf(nodes);
    };
    let threshold = bins[feature][bin as usize];
    let (left_rows, right_rows): (Vec<u32>, Vec<u32>) = rows
        .iter()
        .partition(|&&i| binned[i as usize][feature] <= bin);
    if left_rows.is_empty() || right_rows.is_empty() {
        return leaf(nodes);
    }
    let at = nodes.len();
    nodes.push(Node::Leaf { weight: 0.0 }); // placeholder
    let left = split_node(binned, bins, grad, hess, cfg, &left_rows, depth + 1, nodes);
    let right = split_node(binned, bins, grad, hess, cfg, &right_rows, depth + 1, nodes);
    nodes[at] = Node::Split {
        feature,
        threshold,
        left,
        right,
    };
    at
}
