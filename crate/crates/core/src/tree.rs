//! Augmented red-black interval tree.
//!
//! Nodes are ordered by `(low, high, value)`, so several intervals may share
//! a low endpoint. Each node also stores the largest `high` in its subtree,
//! which lets overlap searches skip subtrees that end before the query
//! starts. Searches report every overlapping interval, descending into both
//! children whenever the bounds allow it.
//!
//! Nodes live in an arena (`Vec`) addressed by index; index 0 is the shared
//! black sentinel.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use crate::interval::{overlaps, Interval, IntervalSet};

const NIL: usize = 0;

#[derive(Debug, Clone)]
struct Node<V> {
    interval: Interval,
    max: u32,
    value: Option<V>,
    left: usize,
    right: usize,
    parent: usize,
    red: bool,
}

#[derive(Debug, Clone)]
pub struct IntervalTree<V> {
    nodes: Vec<Node<V>>,
    root: usize,
    free: Vec<usize>,
    len: usize,
}

impl<V: Ord + Clone> Default for IntervalTree<V> {
    fn default() -> Self {
        Self::new()
    }
}

impl<V: Ord + Clone> IntervalTree<V> {
    pub fn new() -> Self {
        let sentinel = Node {
            interval: Interval::point(0),
            max: 0,
            value: None,
            left: NIL,
            right: NIL,
            parent: NIL,
            red: false,
        };
        Self {
            nodes: vec![sentinel],
            root: NIL,
            free: Vec::new(),
            len: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn clear(&mut self) {
        *self = Self::new();
    }

    fn value(&self, n: usize) -> &V {
        self.nodes[n].value.as_ref().expect("live node")
    }

    fn cmp_at(&self, n: usize, interval: &Interval, value: &V) -> Ordering {
        let node = &self.nodes[n];
        (interval.low, interval.high)
            .cmp(&(node.interval.low, node.interval.high))
            .then_with(|| value.cmp(self.value(n)))
    }

    fn find(&self, interval: &Interval, value: &V) -> usize {
        let mut n = self.root;
        while n != NIL {
            match self.cmp_at(n, interval, value) {
                Ordering::Less => n = self.nodes[n].left,
                Ordering::Greater => n = self.nodes[n].right,
                Ordering::Equal => return n,
            }
        }
        NIL
    }

    pub fn contains(&self, interval: &Interval, value: &V) -> bool {
        self.find(interval, value) != NIL
    }

    fn recompute_max(&mut self, n: usize) {
        let (l, r) = (self.nodes[n].left, self.nodes[n].right);
        let mut max = self.nodes[n].interval.high;
        if l != NIL {
            max = max.max(self.nodes[l].max);
        }
        if r != NIL {
            max = max.max(self.nodes[r].max);
        }
        self.nodes[n].max = max;
    }

    fn recompute_to_root(&mut self, mut n: usize) {
        while n != NIL {
            self.recompute_max(n);
            n = self.nodes[n].parent;
        }
    }

    fn rotate_left(&mut self, x: usize) {
        let y = self.nodes[x].right;
        let y_left = self.nodes[y].left;
        self.nodes[x].right = y_left;
        if y_left != NIL {
            self.nodes[y_left].parent = x;
        }
        let xp = self.nodes[x].parent;
        self.nodes[y].parent = xp;
        if xp == NIL {
            self.root = y;
        } else if self.nodes[xp].left == x {
            self.nodes[xp].left = y;
        } else {
            self.nodes[xp].right = y;
        }
        self.nodes[y].left = x;
        self.nodes[x].parent = y;
        self.recompute_max(x);
        self.recompute_max(y);
    }

    fn rotate_right(&mut self, x: usize) {
        let y = self.nodes[x].left;
        let y_right = self.nodes[y].right;
        self.nodes[x].left = y_right;
        if y_right != NIL {
            self.nodes[y_right].parent = x;
        }
        let xp = self.nodes[x].parent;
        self.nodes[y].parent = xp;
        if xp == NIL {
            self.root = y;
        } else if self.nodes[xp].right == x {
            self.nodes[xp].right = y;
        } else {
            self.nodes[xp].left = y;
        }
        self.nodes[y].right = x;
        self.nodes[x].parent = y;
        self.recompute_max(x);
        self.recompute_max(y);
    }

    fn alloc(&mut self, interval: Interval, value: V, parent: usize) -> usize {
        let node = Node {
            interval,
            max: interval.high,
            value: Some(value),
            left: NIL,
            right: NIL,
            parent,
            red: true,
        };
        match self.free.pop() {
            Some(slot) => {
                self.nodes[slot] = node;
                slot
            }
            None => {
                self.nodes.push(node);
                self.nodes.len() - 1
            }
        }
    }

    /// Inserts `(interval, value)`. Returns `false` if the pair was already
    /// present, in which case the tree is unchanged.
    pub fn insert(&mut self, interval: Interval, value: V) -> bool {
        let mut parent = NIL;
        let mut n = self.root;
        let mut went_left = false;
        while n != NIL {
            parent = n;
            match self.cmp_at(n, &interval, &value) {
                Ordering::Less => {
                    n = self.nodes[n].left;
                    went_left = true;
                }
                Ordering::Greater => {
                    n = self.nodes[n].right;
                    went_left = false;
                }
                Ordering::Equal => return false,
            }
        }
        let z = self.alloc(interval, value, parent);
        if parent == NIL {
            self.root = z;
        } else if went_left {
            self.nodes[parent].left = z;
        } else {
            self.nodes[parent].right = z;
        }
        self.recompute_to_root(parent);
        self.insert_fixup(z);
        self.len += 1;
        true
    }

    fn insert_fixup(&mut self, mut z: usize) {
        while self.nodes[self.nodes[z].parent].red {
            let p = self.nodes[z].parent;
            let g = self.nodes[p].parent;
            if p == self.nodes[g].left {
                let uncle = self.nodes[g].right;
                if self.nodes[uncle].red {
                    self.nodes[p].red = false;
                    self.nodes[uncle].red = false;
                    self.nodes[g].red = true;
                    z = g;
                } else {
                    if z == self.nodes[p].right {
                        z = p;
                        self.rotate_left(z);
                    }
                    let p = self.nodes[z].parent;
                    let g = self.nodes[p].parent;
                    self.nodes[p].red = false;
                    self.nodes[g].red = true;
                    self.rotate_right(g);
                }
            } else {
                let uncle = self.nodes[g].left;
                if self.nodes[uncle].red {
                    self.nodes[p].red = false;
                    self.nodes[uncle].red = false;
                    self.nodes[g].red = true;
                    z = g;
                } else {
                    if z == self.nodes[p].left {
                        z = p;
                        self.rotate_right(z);
                    }
                    let p = self.nodes[z].parent;
                    let g = self.nodes[p].parent;
                    self.nodes[p].red = false;
                    self.nodes[g].red = true;
                    self.rotate_left(g);
                }
            }
        }
        let root = self.root;
        self.nodes[root].red = false;
    }

    fn transplant(&mut self, u: usize, v: usize) {
        let up = self.nodes[u].parent;
        if up == NIL {
            self.root = v;
        } else if u == self.nodes[up].left {
            self.nodes[up].left = v;
        } else {
            self.nodes[up].right = v;
        }
        // may write the sentinel's parent; delete_fixup relies on it
        self.nodes[v].parent = up;
    }

    fn minimum(&self, mut n: usize) -> usize {
        while self.nodes[n].left != NIL {
            n = self.nodes[n].left;
        }
        n
    }

    /// Removes `(interval, value)`. Returns `false` if it was not present.
    pub fn remove(&mut self, interval: &Interval, value: &V) -> bool {
        let z = self.find(interval, value);
        if z == NIL {
            return false;
        }
        let mut y = z;
        let mut y_was_red = self.nodes[y].red;
        let x;
        let fix_from;
        if self.nodes[z].left == NIL {
            x = self.nodes[z].right;
            fix_from = self.nodes[z].parent;
            self.transplant(z, x);
        } else if self.nodes[z].right == NIL {
            x = self.nodes[z].left;
            fix_from = self.nodes[z].parent;
            self.transplant(z, x);
        } else {
            y = self.minimum(self.nodes[z].right);
            y_was_red = self.nodes[y].red;
            x = self.nodes[y].right;
            if self.nodes[y].parent == z {
                self.nodes[x].parent = y;
                fix_from = y;
            } else {
                fix_from = self.nodes[y].parent;
                self.transplant(y, x);
                self.nodes[y].right = self.nodes[z].right;
                let yr = self.nodes[y].right;
                self.nodes[yr].parent = y;
            }
            self.transplant(z, y);
            self.nodes[y].left = self.nodes[z].left;
            let yl = self.nodes[y].left;
            self.nodes[yl].parent = y;
            self.nodes[y].red = self.nodes[z].red;
        }
        self.recompute_to_root(fix_from);
        if !y_was_red {
            self.delete_fixup(x);
        }
        self.nodes[NIL].parent = NIL;
        self.nodes[z].value = None;
        self.free.push(z);
        self.len -= 1;
        true
    }

    fn delete_fixup(&mut self, mut x: usize) {
        while x != self.root && !self.nodes[x].red {
            let p = self.nodes[x].parent;
            if x == self.nodes[p].left {
                let mut w = self.nodes[p].right;
                if self.nodes[w].red {
                    self.nodes[w].red = false;
                    self.nodes[p].red = true;
                    self.rotate_left(p);
                    w = self.nodes[self.nodes[x].parent].right;
                }
                let (wl, wr) = (self.nodes[w].left, self.nodes[w].right);
                if !self.nodes[wl].red && !self.nodes[wr].red {
                    self.nodes[w].red = true;
                    x = self.nodes[x].parent;
                } else {
                    if !self.nodes[wr].red {
                        self.nodes[wl].red = false;
                        self.nodes[w].red = true;
                        self.rotate_right(w);
                        w = self.nodes[self.nodes[x].parent].right;
                    }
                    let p = self.nodes[x].parent;
                    self.nodes[w].red = self.nodes[p].red;
                    self.nodes[p].red = false;
                    let wr = self.nodes[w].right;
                    self.nodes[wr].red = false;
                    self.rotate_left(p);
                    x = self.root;
                }
            } else {
                let mut w = self.nodes[p].left;
                if self.nodes[w].red {
                    self.nodes[w].red = false;
                    self.nodes[p].red = true;
                    self.rotate_right(p);
                    w = self.nodes[self.nodes[x].parent].left;
                }
                let (wl, wr) = (self.nodes[w].left, self.nodes[w].right);
                if !self.nodes[wl].red && !self.nodes[wr].red {
                    self.nodes[w].red = true;
                    x = self.nodes[x].parent;
                } else {
                    if !self.nodes[wl].red {
                        self.nodes[wr].red = false;
                        self.nodes[w].red = true;
                        self.rotate_left(w);
                        w = self.nodes[self.nodes[x].parent].left;
                    }
                    let p = self.nodes[x].parent;
                    self.nodes[w].red = self.nodes[p].red;
                    self.nodes[p].red = false;
                    let wl = self.nodes[w].left;
                    self.nodes[wl].red = false;
                    self.rotate_right(p);
                    x = self.root;
                }
            }
        }
        self.nodes[x].red = false;
    }

    /// Calls `visit` for every stored interval overlapping `query`.
    pub fn for_each_overlap<F>(&self, query: &Interval, mut visit: F)
    where
        F: FnMut(&Interval, &V),
    {
        let mut stack = vec![self.root];
        while let Some(n) = stack.pop() {
            if n == NIL {
                continue;
            }
            let node = &self.nodes[n];
            // nothing in this subtree reaches the query
            if node.max < query.low {
                continue;
            }
            if overlaps(&node.interval, query) {
                visit(&node.interval, self.value(n));
            }
            stack.push(node.left);
            // right subtree lows are >= this low; skip when already past
            if node.interval.low <= query.high {
                stack.push(node.right);
            }
        }
    }

    /// All stored intervals overlapping any interval of `query`, grouped by
    /// value in ascending order. Each group carries the overlapping portions
    /// clipped to the query.
    pub fn query_all(&self, query: &IntervalSet) -> Vec<(V, IntervalSet)> {
        let mut hits: BTreeMap<V, Vec<Interval>> = BTreeMap::new();
        for q in query {
            self.for_each_overlap(q, |stored, value| {
                let clipped = stored.intersection(q).expect("overlapping intervals intersect");
                match hits.get_mut(value) {
                    Some(list) => list.push(clipped),
                    None => {
                        hits.insert(value.clone(), vec![clipped]);
                    }
                }
            });
        }
        hits.into_iter()
            .map(|(value, list)| (value, IntervalSet::from_intervals(list)))
            .collect()
    }

    /// In-order traversal.
    pub fn iter(&self) -> impl Iterator<Item = (Interval, &V)> + '_ {
        let mut stack = Vec::new();
        let mut n = self.root;
        std::iter::from_fn(move || {
            while n != NIL {
                stack.push(n);
                n = self.nodes[n].left;
            }
            let top = stack.pop()?;
            n = self.nodes[top].right;
            Some((self.nodes[top].interval, self.value(top)))
        })
    }

    /// Number of nodes on the longest root-to-leaf path.
    pub fn height(&self) -> usize {
        let mut best = 0;
        let mut stack = vec![(self.root, 0usize)];
        while let Some((n, depth)) = stack.pop() {
            if n == NIL {
                best = best.max(depth);
                continue;
            }
            stack.push((self.nodes[n].left, depth + 1));
            stack.push((self.nodes[n].right, depth + 1));
        }
        best
    }

    /// Checks ordering, `max` augmentation, parent links and red-black
    /// rules. Intended for tests; walks the whole tree.
    pub fn validate(&self) -> Result<(), String> {
        if self.nodes[self.root].red {
            return Err("red root".into());
        }
        if self.root != NIL && self.nodes[self.root].parent != NIL {
            return Err("root has a parent".into());
        }
        let mut count = 0;
        self.validate_node(self.root, &mut count)?;
        if count != self.len {
            return Err(format!("len {} but {} nodes reachable", self.len, count));
        }
        let keys: Vec<_> = self.iter().map(|(iv, v)| (iv.low, iv.high, v)).collect();
        if !keys.windows(2).all(|w| w[0] < w[1]) {
            return Err("in-order keys not strictly increasing".into());
        }
        Ok(())
    }

    /// Returns the black height of the subtree.
    fn validate_node(&self, n: usize, count: &mut usize) -> Result<usize, String> {
        if n == NIL {
            return Ok(1);
        }
        *count += 1;
        let node = &self.nodes[n];
        for child in [node.left, node.right] {
            if child != NIL && self.nodes[child].parent != n {
                return Err(format!("broken parent link below {:?}", node.interval));
            }
            if node.red && self.nodes[child].red {
                return Err(format!("red node {:?} has a red child", node.interval));
            }
        }
        let mut expected = node.interval.high;
        for child in [node.left, node.right] {
            if child != NIL {
                expected = expected.max(self.nodes[child].max);
            }
        }
        if expected != node.max {
            return Err(format!("stale max at {:?}", node.interval));
        }
        let lh = self.validate_node(node.left, count)?;
        let rh = self.validate_node(node.right, count)?;
        if lh != rh {
            return Err(format!("black height mismatch at {:?}", node.interval));
        }
        Ok(lh + usize::from(!node.red))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(low: u32, high: u32) -> Interval {
        Interval::new(low, high).unwrap()
    }

    #[test]
    fn empty_tree() {
        let tree: IntervalTree<u32> = IntervalTree::new();
        assert!(tree.is_empty());
        assert_eq!(tree.height(), 0);
        assert!(tree.query_all(&IntervalSet::from_intervals([iv(0, 100)])).is_empty());
        tree.validate().unwrap();
    }

    #[test]
    fn single_insert_sets_max() {
        let mut tree = IntervalTree::new();
        assert!(tree.insert(iv(10, 12), 1u32));
        assert_eq!(tree.nodes[tree.root].max, 12);
        assert!(!tree.insert(iv(10, 12), 1));
        assert_eq!(tree.len(), 1);
        assert!(tree.insert(iv(10, 12), 2));
        assert_eq!(tree.len(), 2);
        tree.validate().unwrap();
    }

    #[test]
    fn delete_sole_and_missing() {
        let mut tree = IntervalTree::new();
        tree.insert(iv(3, 4), "a");
        assert!(!tree.remove(&iv(3, 4), &"b"));
        assert!(tree.remove(&iv(3, 4), &"a"));
        assert!(tree.is_empty());
        assert!(tree.query_all(&IntervalSet::from_intervals([iv(0, 10)])).is_empty());
        tree.validate().unwrap();
    }

    #[test]
    fn blue_area_against_grey_query() {
        let mut tree = IntervalTree::new();
        for (low, high) in [(10, 12), (55, 55)] {
            tree.insert(iv(low, high), "blue");
        }
        tree.insert(iv(20, 40), "other");
        let query = IntervalSet::from_intervals([iv(5, 12), iv(55, 55), iv(58, 58)]);
        let hits = tree.query_all(&query);
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].0, "blue");
        assert_eq!(hits[0].1.intervals(), &[iv(10, 12), iv(55, 55)]);
    }

    #[test]
    fn finds_overlaps_in_both_subtrees() {
        // a long interval on the left and a short one on the right both
        // overlap the query; a single-path search would miss one of them
        let mut tree = IntervalTree::new();
        for (i, (low, high)) in [(0, 100), (50, 50), (60, 61), (70, 70), (5, 6)]
            .into_iter()
            .enumerate()
        {
            tree.insert(iv(low, high), i);
        }
        let hits = tree.query_all(&IntervalSet::from_intervals([iv(60, 70)]));
        let ids: Vec<_> = hits.iter().map(|(v, _)| *v).collect();
        assert_eq!(ids, vec![0, 2, 3]);
    }

    #[test]
    fn ascending_inserts_stay_balanced() {
        let mut tree = IntervalTree::new();
        let n = 10_000u32;
        for i in 1..=n {
            tree.insert(iv(i, i), i);
        }
        tree.validate().unwrap();
        let bound = 2.0 * f64::from(n + 1).log2();
        assert!((tree.height() as f64) <= bound, "height {}", tree.height());
        for i in (1..=n).step_by(2) {
            assert!(tree.remove(&iv(i, i), &i));
        }
        tree.validate().unwrap();
        assert_eq!(tree.len(), 5000);
    }
}
