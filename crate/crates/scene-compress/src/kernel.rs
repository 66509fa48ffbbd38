//! Gaussian RBF kernel over point positions, served one row at a time
//! through a bounded LRU cache so the full m×m Gram matrix never exists.

use std::sync::Arc;

use rayon::prelude::*;

use crate::scene::SceneModel;

/// Default memory budget for cached kernel rows: 512 MB.
pub const DEFAULT_CACHE_BYTES: usize = 512 * 1024 * 1024;

/// `exp(−‖xi−xj‖² / (2σ²))`, in `(0, 1]`, equal to 1 exactly when the inputs
/// coincide. Symmetric bit-for-bit: the componentwise differences negate,
/// their squares match, and the sum runs in the same order.
pub fn rbf(xi: [f64; 3], xj: [f64; 3], sigma: f64) -> f64 {
    let dx = xi[0] - xj[0];
    let dy = xi[1] - xj[1];
    let dz = xi[2] - xj[2];
    let sq = dx * dx + dy * dy + dz * dz;
    (-sq / (2.0 * sigma * sigma)).exp()
}

/// Builds kernel row `i` directly, without touching any cache. The cache
/// stores rows produced by this exact function, which is what makes cached
/// and uncached reads bitwise identical.
pub fn kernel_row_uncached(scene: &SceneModel, i: usize, sigma: f64) -> Vec<f64> {
    let xi = scene.points()[i].position;
    scene
        .points()
        .par_iter()
        .map(|p| rbf(xi, p.position, sigma))
        .collect()
}

/// Marker for an index not linked into the LRU list.
const UNLINKED: usize = usize::MAX;

/// LRU cache of kernel rows for one scene and one sigma.
///
/// Rows are reference-counted, so a row handed out stays valid even if the
/// cache evicts it on a later fetch. Recency is tracked by an intrusive
/// doubly-linked list over row indices with a sentinel node, giving O(1)
/// touch, insert, and evict.
pub struct KernelRowCache<'a> {
    scene: &'a SceneModel,
    sigma: f64,
    capacity: usize,
    rows: Vec<Option<Arc<[f64]>>>,
    /// `next[i]`/`prev[i]` link resident rows; slot `m` is the sentinel.
    /// List order is most recently used first.
    next: Vec<usize>,
    prev: Vec<usize>,
    resident: usize,
    computed: u64,
}

impl<'a> KernelRowCache<'a> {
    /// Cache holding at most `capacity_rows` rows. The capacity is clamped to
    /// `[2, m]`: two rows because every solver step touches a pair, and at
    /// most one row per point.
    pub fn new(scene: &'a SceneModel, sigma: f64, capacity_rows: usize) -> Self {
        assert!(sigma > 0.0 && sigma.is_finite(), "sigma must be positive");
        let m = scene.len();
        let capacity = capacity_rows.clamp(2, m.max(2)).min(m.max(1));
        let sentinel = m;
        let mut next = vec![UNLINKED; m + 1];
        let mut prev = vec![UNLINKED; m + 1];
        next[sentinel] = sentinel;
        prev[sentinel] = sentinel;
        Self {
            scene,
            sigma,
            capacity,
            rows: vec![None; m],
            next,
            prev,
            resident: 0,
            computed: 0,
        }
    }

    /// Cache sized from a byte budget: `budget / (8·m)` rows, clamped as in
    /// [`KernelRowCache::new`].
    pub fn with_memory_budget(scene: &'a SceneModel, sigma: f64, budget_bytes: usize) -> Self {
        let row_bytes = 8 * scene.len().max(1);
        Self::new(scene, sigma, budget_bytes / row_bytes)
    }

    /// Fetches row `i`, computing it on a miss and evicting the least
    /// recently used row if the cache is full.
    pub fn row(&mut self, i: usize) -> Arc<[f64]> {
        assert!(i < self.scene.len(), "row index {i} out of range");
        if let Some(row) = &self.rows[i] {
            let row = Arc::clone(row);
            self.unlink(i);
            self.push_front(i);
            return row;
        }
        let row: Arc<[f64]> = kernel_row_uncached(self.scene, i, self.sigma).into();
        self.computed += 1;
        if self.resident == self.capacity {
            let lru = self.prev[self.sentinel()];
            debug_assert_ne!(lru, self.sentinel(), "resident list empty at capacity");
            self.unlink(lru);
            self.rows[lru] = None;
            self.resident -= 1;
        }
        self.rows[i] = Some(Arc::clone(&row));
        self.push_front(i);
        self.resident += 1;
        row
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Rows currently held; never exceeds capacity.
    pub fn resident_rows(&self) -> usize {
        self.resident
    }

    /// Total rows built since construction, counting recomputations after
    /// eviction. The cache-behavior tests key off this.
    pub fn computed_rows(&self) -> u64 {
        self.computed
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    fn sentinel(&self) -> usize {
        self.scene.len()
    }

    fn push_front(&mut self, i: usize) {
        let s = self.sentinel();
        let head = self.next[s];
        self.next[i] = head;
        self.prev[i] = s;
        self.prev[head] = i;
        self.next[s] = i;
    }

    fn unlink(&mut self, i: usize) {
        let (p, n) = (self.prev[i], self.next[i]);
        self.next[p] = n;
        self.prev[n] = p;
        self.next[i] = UNLINKED;
        self.prev[i] = UNLINKED;
    }
}
