//! Semantic-aware filtering: pick a seed Gaussian inside a segmentation mask
//! and grow a fixed-size region around it through 3D nearest neighbours.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geom::{self, Vec3};
use crate::gsio::{CameraPose, GaussianScene, Mask};
use crate::render;

pub const DEFAULT_K: usize = 16;
pub const DEFAULT_TARGET_N: usize = 40_000;

const LEAF_SIZE: usize = 8;

/// `(squared distance, id)` with a total order; ties resolve to the smaller id.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Key(f64, usize);

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

/// Static kd-tree over 3D positions.
#[derive(Debug, Clone)]
pub struct KnnIndex {
    positions: Vec<Vec3>,
    ids: Vec<usize>,
    nodes: Vec<Node>,
}

pub fn build_index(positions: &[Vec3]) -> Result<KnnIndex> {
    if positions.is_empty() {
        return Err(Error::EmptyInput);
    }
    if positions.iter().flatten().any(|v| !v.is_finite()) {
        let index = positions.iter().position(|p| p.iter().any(|v| !v.is_finite())).unwrap();
        return Err(Error::InvalidValue { index });
    }
    let mut index = KnnIndex {
        positions: positions.to_vec(),
        ids: (0..positions.len()).collect(),
        nodes: Vec::new(),
    };
    index.build(0, positions.len());
    Ok(index)
}

impl KnnIndex {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn position(&self, id: usize) -> Vec3 {
        self.positions[id]
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let slot = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return slot;
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &id in &self.ids[start..end] {
            let p = self.positions[id];
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let axis = (0..3)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])).then(b.cmp(&a)))
            .unwrap();
        let mid = start + (end - start) / 2;
        let positions = &self.positions;
        self.ids[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            positions[a][axis].total_cmp(&positions[b][axis]).then(a.cmp(&b))
        });
        let value = positions[self.ids[mid]][axis];
        self.nodes.push(Node::Leaf { start: 0, end: 0 });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[slot] = Node::Split { axis, value, left, right };
        slot
    }

    fn search(&self, node: usize, q: Vec3, k: usize, heap: &mut BinaryHeap<Key>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &id in &self.ids[start..end] {
                    let key = Key(geom::dist2(q, self.positions[id]), id);
                    if heap.len() < k {
                        heap.push(key);
                    } else if key < *heap.peek().unwrap() {
                        heap.pop();
                        heap.push(key);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, k, heap);
                // Points equal to the split value sit on either side, so the
                // bound must not prune equal distances (id tie-breaks).
                if heap.len() < k || diff * diff <= heap.peek().unwrap().0 {
                    self.search(far, q, k, heap);
                }
            }
        }
    }

    /// The `k` nearest ids to `query` with their Euclidean distances, nearest
    /// first, ties by ascending id. `k` is clamped to the index size.
    pub fn knn(&self, query: Vec3, k: usize) -> Vec<(usize, f64)> {
        let k = k.min(self.len());
        if k == 0 {
            return Vec::new();
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.search(0, query, k, &mut heap);
        heap.into_sorted_vec()
            .into_iter()
            .map(|Key(d2, id)| (id, d2.sqrt()))
            .collect()
    }
}

pub fn knn(index: &KnnIndex, query: Vec3, k: usize) -> Vec<(usize, f64)> {
    index.knn(query, k)
}

/// Picks the Gaussian whose projection falls inside the mask and lies closest
/// to the mask centroid; ties go to the smaller depth, then the smaller id.
pub fn pick_seed(scene: &GaussianScene, camera: &CameraPose, mask: &Mask) -> Result<usize> {
    if mask.width != camera.width || mask.height != camera.height {
        return Err(Error::MaskSizeMismatch {
            mask_w: mask.width,
            mask_h: mask.height,
            cam_w: camera.width,
            cam_h: camera.height,
        });
    }
    let (mut sx, mut sy, mut count) = (0.0, 0.0, 0usize);
    for y in 0..mask.height {
        for x in 0..mask.width {
            if mask.get(x, y) != 0 {
                sx += x as f64 + 0.5;
                sy += y as f64 + 0.5;
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::EmptyMask);
    }
    let centroid = (sx / count as f64, sy / count as f64);

    let mut best: Option<(f64, f64, usize)> = None;
    for (id, &x) in scene.centers.iter().enumerate() {
        let Ok((u, v, depth)) = render::project_center(camera, x) else {
            continue;
        };
        if !(u >= 0.0 && v >= 0.0 && u < mask.width as f64 && v < mask.height as f64) {
            continue;
        }
        if mask.get(u as usize, v as usize) == 0 {
            continue;
        }
        let d2 = (u - centroid.0).powi(2) + (v - centroid.1).powi(2);
        let better = match best {
            None => true,
            Some((bd, bdepth, _)) => d2
                .total_cmp(&bd)
                .then(depth.total_cmp(&bdepth))
                .is_lt(),
        };
        if better {
            best = Some((d2, depth, id));
        }
    }
    best.map(|(_, _, id)| id).ok_or(Error::SeedNotFound)
}

/// Ids selected by best-first region growing from `seed`, in selection order.
///
/// Each newly selected Gaussian pushes its `k` nearest neighbours (itself
/// excluded) onto a frontier keyed by their squared distance to it; the
/// smallest key is selected next. When the frontier runs dry the unselected
/// Gaussian nearest to the running centroid of the selection is taken instead.
pub fn grow_region_order(
    index: &KnnIndex,
    seed: usize,
    target_n: usize,
    k: usize,
) -> Result<Vec<usize>> {
    let n = index.len();
    if target_n > n {
        return Err(Error::InsufficientGaussians {
            requested: target_n,
            available: n,
        });
    }
    if seed >= n {
        return Err(Error::Config(format!("seed id {seed} out of range for {n} Gaussians")));
    }
    if target_n == 0 {
        return Ok(Vec::new());
    }
    let mut selected = vec![false; n];
    let mut order = Vec::with_capacity(target_n);
    let mut frontier: BinaryHeap<Reverse<Key>> = BinaryHeap::new();
    let mut sum = [0.0; 3];
    let mut next = Some(seed);

    while order.len() < target_n {
        let id = match next.take() {
            Some(id) => id,
            None => loop {
                match frontier.pop() {
                    Some(Reverse(Key(_, id))) if !selected[id] => break id,
                    Some(_) => continue,
                    None => {
                        let c = geom::scale(sum, 1.0 / order.len() as f64);
                        break (0..n)
                            .filter(|&j| !selected[j])
                            .map(|j| Key(geom::dist2(c, index.position(j)), j))
                            .min()
                            .unwrap()
                            .1;
                    }
                }
            },
        };
        selected[id] = true;
        order.push(id);
        sum = geom::add(sum, index.position(id));
        let p = index.position(id);
        for (j, _) in index.knn(p, k + 1).into_iter().filter(|&(j, _)| j != id).take(k) {
            if !selected[j] {
                frontier.push(Reverse(Key(geom::dist2(p, index.position(j)), j)));
            }
        }
    }
    Ok(order)
}

/// Region-grown subscene of exactly `target_n` Gaussians, ids ascending.
/// Also returns the selected ids.
pub fn grow_region(
    scene: &GaussianScene,
    seed: usize,
    target_n: usize,
    k: usize,
) -> Result<(GaussianScene, Vec<usize>)> {
    if target_n > scene.len() {
        return Err(Error::InsufficientGaussians {
            requested: target_n,
            available: scene.len(),
        });
    }
    let index = build_index(&scene.centers)?;
    let mut ids = grow_region_order(&index, seed, target_n, k)?;
    ids.sort_unstable();
    Ok((scene.select(&ids), ids))
}

/// Seeded uniform random subset of `target_n` Gaussians, ids ascending; the
/// stand-in for region growing when filtering is switched off.
pub fn uniform_subsample(scene: &GaussianScene, target_n: usize, seed: u64) -> Result<(GaussianScene, Vec<usize>)> {
    if target_n > scene.len() {
        return Err(Error::InsufficientGaussians {
            requested: target_n,
            available: scene.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids = rand::seq::index::sample(&mut rng, scene.len(), target_n).into_vec();
    ids.sort_unstable();
    Ok((scene.select(&ids), ids))
}
