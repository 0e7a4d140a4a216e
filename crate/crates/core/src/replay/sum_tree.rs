/// Binary sum tree over a fixed number of nonnegative leaves with
/// O(log n) update and prefix-sum search.
#[derive(Debug, Clone)]
pub struct SumTree {
    leaves: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    pub fn new(leaves: usize) -> Self {
        let leaves = leaves.max(1).next_power_of_two();
        Self { leaves, nodes: vec![0.0; 2 * leaves] }
    }

    pub fn capacity(&self) -> usize {
        self.leaves
    }

    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    pub fn get(&self, i: usize) -> f64 {
        self.nodes[self.leaves + i]
    }

    /// Parents are recomputed from their children rather than patched with a
    /// delta, so repeated updates do not accumulate rounding drift.
    pub fn set(&mut self, i: usize, value: f64) {
        debug_assert!(value >= 0.0 && value.is_finite());
        let mut node = self.leaves + i;
        self.nodes[node] = value;
        while node > 1 {
            node /= 2;
            self.nodes[node] = self.nodes[2 * node] + self.nodes[2 * node + 1];
        }
    }

    /// Leaf whose cumulative interval contains `mass`, for `mass` in
    /// `[0, total)`. Zero-valued leaves are never returned while some leaf
    /// is positive.
    pub fn find(&self, mut mass: f64) -> usize {
        let mut node = 1;
        while node < self.leaves {
            let left = 2 * node;
            if mass < self.nodes[left] || self.nodes[left + 1] <= 0.0 {
                node = left;
            } else {
                mass -= self.nodes[left];
                node = left + 1;
            }
        }
        let mut leaf = node - self.leaves;
        // Floating slack can land on an empty leaf at the far right edge.
        while self.nodes[self.leaves + leaf] <= 0.0 && leaf > 0 {
            leaf -= 1;
        }
        leaf
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn totals_and_search() {
        let mut t = SumTree::new(5);
        assert_eq!(t.capacity(), 8);
        for (i, v) in [1.0, 0.0, 3.0, 2.0, 4.0].into_iter().enumerate() {
            t.set(i, v);
        }
        assert_eq!(t.total(), 10.0);
        assert_eq!(t.find(0.0), 0);
        assert_eq!(t.find(0.999), 0);
        assert_eq!(t.find(1.0), 2);
        assert_eq!(t.find(3.999), 2);
        assert_eq!(t.find(4.0), 3);
        assert_eq!(t.find(6.5), 4);
        assert_eq!(t.find(9.999_999), 4);
        t.set(4, 0.0);
        assert_eq!(t.total(), 6.0);
        assert_eq!(t.find(5.999_999_9), 3);
    }
}
