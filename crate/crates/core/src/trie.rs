//! Path-compressed binary radix trie keyed by [`Prefix`].
//!
//! Each family gets its own trie. Nodes live in an arena; every node stores
//! its full prefix, so descending never needs to re-derive skipped bits.
//! Internal "glue" nodes without a value appear only where two branches
//! diverge.

use std::net::IpAddr;
use std::ops::Deref;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::registry::{addr_to_raw, bit_of, Family, Prefix};

type NodeId = usize;

#[derive(Clone, Debug)]
struct Node<V> {
    prefix: Prefix,
    value: Option<V>,
    children: [Option<NodeId>; 2],
}

impl<V> Node<V> {
    fn new(prefix: Prefix, value: Option<V>) -> Self {
        Node {
            prefix,
            value,
            children: [None, None],
        }
    }
}

/// Binary radix trie for one address family.
#[derive(Clone, Debug)]
pub struct PrefixTrie<V> {
    family: Family,
    nodes: Vec<Node<V>>,
    free: Vec<NodeId>,
    len: usize,
}

/// Length of the common leading bits of two prefixes.
fn common_len(a: &Prefix, b: &Prefix) -> u8 {
    let width = a.family().width();
    let diff = a.bits() ^ b.bits();
    let lz = (diff.leading_zeros() - (128 - u32::from(width))) as u8;
    lz.min(a.len()).min(b.len())
}

impl<V> PrefixTrie<V> {
    pub fn new(family: Family) -> Self {
        PrefixTrie {
            family,
            nodes: vec![Node::new(Prefix::root(family), None)],
            free: Vec::new(),
            len: 0,
        }
    }

    pub fn family(&self) -> Family {
        self.family
    }

    /// Number of stored prefixes.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    fn alloc(&mut self, node: Node<V>) -> NodeId {
        match self.free.pop() {
            Some(id) => {
                self.nodes[id] = node;
                id
            }
            None => {
                self.nodes.push(node);
                self.nodes.len() - 1
            }
        }
    }

    fn check_family(&self, family: Family) -> Result<()> {
        if family == self.family {
            Ok(())
        } else {
            Err(Error::FamilyMismatch {
                expected: self.family,
                got: family,
            })
        }
    }

    /// Stores `value` at `prefix`, returning the value it displaced.
    pub fn insert(&mut self, prefix: Prefix, value: V) -> Result<Option<V>> {
        self.check_family(prefix.family())?;
        let mut cur = 0;
        loop {
            let node_prefix = self.nodes[cur].prefix;
            if node_prefix.len() == prefix.len() {
                let old = self.nodes[cur].value.replace(value);
                if old.is_none() {
                    self.len += 1;
                }
                return Ok(old);
            }
            let side = prefix.bit(node_prefix.len()) as usize;
            let Some(child) = self.nodes[cur].children[side] else {
                let leaf = self.alloc(Node::new(prefix, Some(value)));
                self.nodes[cur].children[side] = Some(leaf);
                self.len += 1;
                return Ok(None);
            };
            let child_prefix = self.nodes[child].prefix;
            if child_prefix.contains(&prefix) {
                cur = child;
                continue;
            }
            let new_id = if prefix.contains(&child_prefix) {
                let mut node = Node::new(prefix, Some(value));
                node.children[child_prefix.bit(prefix.len()) as usize] = Some(child);
                self.alloc(node)
            } else {
                let split = common_len(&prefix, &child_prefix);
                let leaf = self.alloc(Node::new(prefix, Some(value)));
                let mut glue = Node::new(prefix.supernet(split), None);
                glue.children[child_prefix.bit(split) as usize] = Some(child);
                glue.children[prefix.bit(split) as usize] = Some(leaf);
                self.alloc(glue)
            };
            self.nodes[cur].children[side] = Some(new_id);
            self.len += 1;
            return Ok(None);
        }
    }

    /// Node holding exactly `prefix`, if the path exists.
    fn find(&self, prefix: &Prefix) -> Option<NodeId> {
        if prefix.family() != self.family {
            return None;
        }
        let mut cur = 0;
        loop {
            let node = &self.nodes[cur];
            if node.prefix == *prefix {
                return Some(cur);
            }
            if !node.prefix.contains(prefix) {
                return None;
            }
            cur = node.children[prefix.bit(node.prefix.len()) as usize]?;
        }
    }

    pub fn get(&self, prefix: &Prefix) -> Option<&V> {
        self.find(prefix)
            .and_then(|id| self.nodes[id].value.as_ref())
    }

    pub fn get_mut(&mut self, prefix: &Prefix) -> Option<&mut V> {
        let id = self.find(prefix)?;
        self.nodes[id].value.as_mut()
    }

    /// Removes the value stored at exactly `prefix`.
    pub fn remove(&mut self, prefix: &Prefix) -> Option<V> {
        if prefix.family() != self.family {
            return None;
        }
        let mut path: Vec<(NodeId, usize)> = Vec::new();
        let mut cur = 0;
        loop {
            let node = &self.nodes[cur];
            if node.prefix == *prefix {
                break;
            }
            if !node.prefix.contains(prefix) {
                return None;
            }
            let side = prefix.bit(node.prefix.len()) as usize;
            path.push((cur, side));
            cur = node.children[side]?;
        }
        let old = self.nodes[cur].value.take()?;
        self.len -= 1;
        self.prune(cur, &path);
        Some(old)
    }

    /// Drops value-less nodes with fewer than two children, below the root.
    fn prune(&mut self, mut cur: NodeId, path: &[(NodeId, usize)]) {
        let mut depth = path.len();
        while depth > 0 && self.nodes[cur].value.is_none() {
            let (parent, side) = path[depth - 1];
            let kids: Vec<NodeId> = self.nodes[cur].children.iter().flatten().copied().collect();
            match kids.len() {
                0 => self.nodes[parent].children[side] = None,
                1 => self.nodes[parent].children[side] = Some(kids[0]),
                _ => return,
            }
            self.nodes[cur].children = [None, None];
            self.free.push(cur);
            cur = parent;
            depth -= 1;
        }
    }

    /// The most specific stored prefix containing `addr`.
    pub fn longest_match(&self, addr: &IpAddr) -> Option<(Prefix, &V)> {
        self.longest_match_traced(addr).0
    }

    /// Like [`longest_match`](Self::longest_match), also reporting the
    /// number of nodes visited.
    pub fn longest_match_traced(&self, addr: &IpAddr) -> (Option<(Prefix, &V)>, usize) {
        let (family, raw) = addr_to_raw(*addr);
        if family != self.family {
            return (None, 0);
        }
        let width = family.width();
        let mut best = None;
        let mut visited = 0;
        let mut cur = Some(0);
        while let Some(id) = cur {
            let node = &self.nodes[id];
            visited += 1;
            if !node.prefix.contains_addr(addr) {
                break;
            }
            if let Some(v) = &node.value {
                best = Some((node.prefix, v));
            }
            if node.prefix.len() == width {
                break;
            }
            cur = node.children[bit_of(family, raw, node.prefix.len()) as usize];
        }
        (best, visited)
    }

    /// Stored prefixes that contain `prefix`, least specific first.
    /// Includes `prefix` itself if stored.
    pub fn covering(&self, prefix: &Prefix) -> Vec<(Prefix, &V)> {
        let mut out = Vec::new();
        if prefix.family() != self.family {
            return out;
        }
        let mut cur = Some(0);
        while let Some(id) = cur {
            let node = &self.nodes[id];
            if !node.prefix.contains(prefix) {
                break;
            }
            if let Some(v) = &node.value {
                out.push((node.prefix, v));
            }
            if node.prefix.len() == prefix.len() {
                break;
            }
            cur = node.children[prefix.bit(node.prefix.len()) as usize];
        }
        out
    }

    /// Stored prefixes equal to or more specific than `prefix`, in address
    /// order.
    pub fn enumerate_contained(&self, prefix: &Prefix) -> Vec<(Prefix, &V)> {
        let mut out = Vec::new();
        if prefix.family() != self.family {
            return out;
        }
        let mut cur = 0;
        loop {
            let node = &self.nodes[cur];
            if prefix.contains(&node.prefix) {
                self.collect(cur, &mut out);
                return out;
            }
            if !node.prefix.contains(prefix) {
                return out;
            }
            match node.children[prefix.bit(node.prefix.len()) as usize] {
                Some(next) => cur = next,
                None => return out,
            }
        }
    }

    fn collect<'a>(&'a self, start: NodeId, out: &mut Vec<(Prefix, &'a V)>) {
        let mut stack = vec![start];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            if let Some(v) = &node.value {
                out.push((node.prefix, v));
            }
            // Push the 1-branch first so the 0-branch is visited first.
            for child in node.children.iter().rev().flatten() {
                stack.push(*child);
            }
        }
    }

    /// All stored entries in address order.
    pub fn iter(&self) -> impl Iterator<Item = (Prefix, &V)> {
        let mut out = Vec::with_capacity(self.len);
        self.collect(0, &mut out);
        out.into_iter()
    }
}

/// A pair of tries, one per family, addressed uniformly.
#[derive(Clone, Debug)]
pub struct DualStackTrie<V> {
    v4: PrefixTrie<V>,
    v6: PrefixTrie<V>,
}

impl<V> Default for DualStackTrie<V> {
    fn default() -> Self {
        Self::new()
    }
}

impl<V> DualStackTrie<V> {
    pub fn new() -> Self {
        DualStackTrie {
            v4: PrefixTrie::new(Family::V4),
            v6: PrefixTrie::new(Family::V6),
        }
    }

    pub fn family(&self, family: Family) -> &PrefixTrie<V> {
        match family {
            Family::V4 => &self.v4,
            Family::V6 => &self.v6,
        }
    }

    fn family_mut(&mut self, family: Family) -> &mut PrefixTrie<V> {
        match family {
            Family::V4 => &mut self.v4,
            Family::V6 => &mut self.v6,
        }
    }

    pub fn insert(&mut self, prefix: Prefix, value: V) -> Option<V> {
        self.family_mut(prefix.family())
            .insert(prefix, value)
            .expect("family dispatch")
    }

    pub fn get(&self, prefix: &Prefix) -> Option<&V> {
        self.family(prefix.family()).get(prefix)
    }

    pub fn get_mut(&mut self, prefix: &Prefix) -> Option<&mut V> {
        self.family_mut(prefix.family()).get_mut(prefix)
    }

    pub fn remove(&mut self, prefix: &Prefix) -> Option<V> {
        self.family_mut(prefix.family()).remove(prefix)
    }

    pub fn longest_match(&self, addr: &IpAddr) -> Option<(Prefix, &V)> {
        self.family(Family::of(addr)).longest_match(addr)
    }

    pub fn covering(&self, prefix: &Prefix) -> Vec<(Prefix, &V)> {
        self.family(prefix.family()).covering(prefix)
    }

    pub fn enumerate_contained(&self, prefix: &Prefix) -> Vec<(Prefix, &V)> {
        self.family(prefix.family()).enumerate_contained(prefix)
    }

    /// True if some stored prefix equals, contains, or lies inside `prefix`.
    pub fn overlaps(&self, prefix: &Prefix) -> bool {
        !self.covering(prefix).is_empty() || !self.enumerate_contained(prefix).is_empty()
    }

    pub fn len(&self) -> usize {
        self.v4.len() + self.v6.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = (Prefix, &V)> {
        self.v4.iter().chain(self.v6.iter())
    }

    /// Ends the build phase.
    pub fn freeze(self) -> Frozen<Self> {
        Frozen::new(self)
    }
}

impl<V> FromIterator<(Prefix, V)> for DualStackTrie<V> {
    fn from_iter<I: IntoIterator<Item = (Prefix, V)>>(iter: I) -> Self {
        let mut trie = DualStackTrie::new();
        for (p, v) in iter {
            trie.insert(p, v);
        }
        trie
    }
}

/// Read-only, cheaply clonable handle to a finished structure.
#[derive(Debug)]
pub struct Frozen<T>(Arc<T>);

impl<T> Frozen<T> {
    pub fn new(inner: T) -> Self {
        Frozen(Arc::new(inner))
    }
}

impl<T> Clone for Frozen<T> {
    fn clone(&self) -> Self {
        Frozen(Arc::clone(&self.0))
    }
}

impl<T> Deref for Frozen<T> {
    type Target = T;

    fn deref(&self) -> &T {
        &self.0
    }
}
