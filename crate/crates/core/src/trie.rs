//! A path-compressed binary radix trie keyed by IP prefixes.
//!
//! IPv4 and IPv6 prefixes live under separate roots, so a query never
//! crosses address families. Keys are stored left-aligned in a `u128`.

use std::net::{Ipv4Addr, Ipv6Addr};

use ipnet::{IpNet, Ipv4Net, Ipv6Net};

#[derive(Clone, Copy, Debug, Eq, PartialEq)]
struct Key {
    bits: u128,
    len: u8,
}

impl Key {
    fn from_net(net: &IpNet) -> (Family, Key) {
        match net {
            IpNet::V4(n) => (
                Family::V4,
                Key {
                    bits: (u32::from(n.network()) as u128) << 96,
                    len: n.prefix_len(),
                },
            ),
            IpNet::V6(n) => (
                Family::V6,
                Key {
                    bits: u128::from(n.network()),
                    len: n.prefix_len(),
                },
            ),
        }
    }

    fn to_net(self, family: Family) -> IpNet {
        match family {
            Family::V4 => IpNet::V4(
                Ipv4Net::new(Ipv4Addr::from((self.bits >> 96) as u32), self.len)
                    .expect("stored length is valid"),
            ),
            Family::V6 => IpNet::V6(
                Ipv6Net::new(Ipv6Addr::from(self.bits), self.len).expect("stored length is valid"),
            ),
        }
    }

    fn bit(&self, index: u8) -> usize {
        ((self.bits >> (127 - index as u32)) & 1) as usize
    }

    fn truncated(&self, len: u8) -> Key {
        Key {
            bits: self.bits & mask(len),
            len,
        }
    }

    /// Whether `self` contains `other`.
    fn covers(&self, other: &Key) -> bool {
        self.len <= other.len && other.bits & mask(self.len) == self.bits
    }

    fn common_len(&self, other: &Key) -> u8 {
        let diff = (self.bits ^ other.bits).leading_zeros().min(128) as u8;
        diff.min(self.len).min(other.len)
    }
}

fn mask(len: u8) -> u128 {
    if len == 0 {
        0
    } else {
        !0u128 << (128 - len as u32)
    }
}

#[derive(Clone, Copy, Debug, Eq, PartialEq)]
enum Family {
    V4,
    V6,
}

#[derive(Clone, Debug)]
struct Node<V> {
    key: Key,
    value: Option<V>,
    children: [Option<Box<Node<V>>>; 2],
}

impl<V> Node<V> {
    fn new(key: Key, value: Option<V>) -> Self {
        Node {
            key,
            value,
            children: [None, None],
        }
    }
}

/// Prefix-keyed map answering "every stored prefix that covers this one".
#[derive(Clone, Debug)]
pub struct RadixTrie<V> {
    v4: Option<Box<Node<V>>>,
    v6: Option<Box<Node<V>>>,
    len: usize,
}

impl<V> Default for RadixTrie<V> {
    fn default() -> Self {
        RadixTrie {
            v4: None,
            v6: None,
            len: 0,
        }
    }
}

impl<V> RadixTrie<V> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of prefixes holding a value.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    fn root(&self, family: Family) -> &Option<Box<Node<V>>> {
        match family {
            Family::V4 => &self.v4,
            Family::V6 => &self.v6,
        }
    }

    /// Returns the value stored at exactly `net`, inserting one from `make`
    /// if the prefix is new.
    pub fn get_or_insert_with(&mut self, net: IpNet, make: impl FnOnce() -> V) -> &mut V {
        let (family, key) = Key::from_net(&net.trunc());
        let root = match family {
            Family::V4 => &mut self.v4,
            Family::V6 => &mut self.v6,
        };
        let node = insert_node(root, key);
        if node.value.is_none() {
            node.value = Some(make());
            self.len += 1;
        }
        node.value.as_mut().expect("value was just set")
    }

    pub fn get(&self, net: &IpNet) -> Option<&V> {
        let (family, key) = Key::from_net(&net.trunc());
        let mut cursor = self.root(family).as_deref();
        while let Some(node) = cursor {
            if !node.key.covers(&key) {
                return None;
            }
            if node.key.len == key.len {
                return node.value.as_ref();
            }
            cursor = node.children[key.bit(node.key.len)].as_deref();
        }
        None
    }

    /// Every stored prefix that contains `net`, least specific first.
    pub fn covering(&self, net: &IpNet) -> Vec<(IpNet, &V)> {
        let (family, key) = Key::from_net(&net.trunc());
        let mut found = Vec::new();
        let mut cursor = self.root(family).as_deref();
        while let Some(node) = cursor {
            if !node.key.covers(&key) {
                break;
            }
            if let Some(value) = node.value.as_ref() {
                found.push((node.key.to_net(family), value));
            }
            if node.key.len == key.len {
                break;
            }
            cursor = node.children[key.bit(node.key.len)].as_deref();
        }
        found
    }

    /// All stored entries in pre-order (IPv4 first, then IPv6).
    pub fn iter(&self) -> Vec<(IpNet, &V)> {
        let mut out = Vec::with_capacity(self.len);
        for (family, root) in [(Family::V4, &self.v4), (Family::V6, &self.v6)] {
            let mut stack: Vec<&Node<V>> = root.as_deref().into_iter().collect();
            while let Some(node) = stack.pop() {
                if let Some(value) = node.value.as_ref() {
                    out.push((node.key.to_net(family), value));
                }
                // Push the 1-branch first so the 0-branch is visited first.
                for child in node.children.iter().rev().flatten() {
                    stack.push(child);
                }
            }
        }
        out
    }
}

fn insert_node<V>(slot: &mut Option<Box<Node<V>>>, key: Key) -> &mut Node<V> {
    let Some(node) = slot else {
        return slot.insert(Box::new(Node::new(key, None)));
    };
    let common = node.key.common_len(&key);
    if common == node.key.len && common == key.len {
        return slot.as_mut().expect("checked above");
    }
    if common == node.key.len {
        let branch = key.bit(node.key.len);
        let node = slot.as_mut().expect("checked above");
        return insert_node(&mut node.children[branch], key);
    }
    let old = slot.take().expect("checked above");
    if common == key.len {
        // New key is an ancestor of the existing node.
        let mut parent = Box::new(Node::new(key, None));
        let branch = old.key.bit(key.len);
        parent.children[branch] = Some(old);
        return slot.insert(parent);
    }
    // Keys diverge below both: add a valueless glue node.
    let mut glue = Box::new(Node::new(key.truncated(common), None));
    let old_branch = old.key.bit(common);
    glue.children[old_branch] = Some(old);
    let glue = slot.insert(glue);
    glue.children[1 - old_branch].insert(Box::new(Node::new(key, None)))
}
