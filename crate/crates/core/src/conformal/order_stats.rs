//! Order-statistics multiset over `f64` keys: O(log n) expected insert and
//! rank selection, implemented as an arena-backed treap.
//!
//! Priorities come from a SplitMix64 sequence over the insertion counter, so
//! two instances fed the same keys build identical trees.

const NIL: u32 = u32::MAX;

#[derive(Clone, Debug)]
struct Node {
    key: f64,
    priority: u64,
    left: u32,
    right: u32,
    size: u32,
}

#[derive(Clone, Debug, Default)]
pub struct OrderStatistics {
    nodes: Vec<Node>,
    root: Option<u32>,
}

fn mix(index: u64) -> u64 {
    let mut z = index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl OrderStatistics {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn size(&self, n: u32) -> u32 {
        if n == NIL {
            0
        } else {
            self.nodes[n as usize].size
        }
    }

    fn pull(&mut self, n: u32) {
        let (l, r) = (self.nodes[n as usize].left, self.nodes[n as usize].right);
        self.nodes[n as usize].size = 1 + self.size(l) + self.size(r);
    }

    /// Splits `n` into keys `< key` and keys `>= key`.
    fn split(&mut self, n: u32, key: f64) -> (u32, u32) {
        if n == NIL {
            return (NIL, NIL);
        }
        if self.nodes[n as usize].key.total_cmp(&key).is_lt() {
            let (a, b) = self.split(self.nodes[n as usize].right, key);
            self.nodes[n as usize].right = a;
            self.pull(n);
            (n, b)
        } else {
            let (a, b) = self.split(self.nodes[n as usize].left, key);
            self.nodes[n as usize].left = b;
            self.pull(n);
            (a, n)
        }
    }

    fn merge(&mut self, a: u32, b: u32) -> u32 {
        if a == NIL {
            return b;
        }
        if b == NIL {
            return a;
        }
        if self.nodes[a as usize].priority > self.nodes[b as usize].priority {
            let r = self.merge(self.nodes[a as usize].right, b);
            self.nodes[a as usize].right = r;
            self.pull(a);
            a
        } else {
            let l = self.merge(a, self.nodes[b as usize].left);
            self.nodes[b as usize].left = l;
            self.pull(b);
            b
        }
    }

    pub fn insert(&mut self, key: f64) {
        let id = self.nodes.len() as u32;
        assert!(id != NIL, "order statistics capacity exhausted");
        self.nodes.push(Node {
            key,
            priority: mix(id as u64),
            left: NIL,
            right: NIL,
            size: 1,
        });
        let root = self.root.unwrap_or(NIL);
        let (a, b) = self.split(root, key);
        let left = self.merge(a, id);
        self.root = Some(self.merge(left, b));
    }

    /// `k`-th smallest key, 1-based.
    pub fn kth_smallest(&self, k: usize) -> Option<f64> {
        if k == 0 || k > self.len() {
            return None;
        }
        let mut k = k as u32;
        let mut n = self.root?;
        loop {
            let node = &self.nodes[n as usize];
            let left = self.size(node.left);
            if k <= left {
                n = node.left;
            } else if k == left + 1 {
                return Some(node.key);
            } else {
                k -= left + 1;
                n = node.right;
            }
        }
    }

    /// `k`-th largest key, 1-based.
    pub fn kth_largest(&self, k: usize) -> Option<f64> {
        if k == 0 || k > self.len() {
            return None;
        }
        self.kth_smallest(self.len() - k + 1)
    }

    /// Keys in ascending order.
    pub fn to_sorted_vec(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        let mut stack = Vec::new();
        let mut n = self.root.unwrap_or(NIL);
        while n != NIL || !stack.is_empty() {
            while n != NIL {
                stack.push(n);
                n = self.nodes[n as usize].left;
            }
            let top = stack.pop().expect("non-empty stack");
            out.push(self.nodes[top as usize].key);
            n = self.nodes[top as usize].right;
        }
        out
    }
}

impl PartialEq for OrderStatistics {
    /// Multiset equality, compared bitwise.
    fn eq(&self, other: &Self) -> bool {
        self.len() == other.len()
            && self
                .to_sorted_vec()
                .iter()
                .zip(other.to_sorted_vec())
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}
