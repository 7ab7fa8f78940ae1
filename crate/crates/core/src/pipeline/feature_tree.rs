use std::collections::BTreeMap;
use std::fmt;

use serde::de::{self, MapAccess, SeqAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::testgen::SplitMix64;

/// Labelled tree of programming features, e.g. `algorithm/sorting/quick sort`.
/// The root is unlabelled; a node without children is a feature.
///
/// JSON form: an object maps labels to subtrees; an array lists leaf
/// labels; `{}`, `[]` and `null` are leaves.
///
/// ```json
/// {"algorithm": {"sorting": ["merge sort", "quick sort"]}, "data structure": ["heap"]}
/// ```
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct FeatureTree {
    pub children: BTreeMap<String, FeatureTree>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FeatureTreeError {
    #[error("leaf budget must be at least 1")]
    ZeroBudget,
}

impl FeatureTree {
    pub fn leaf() -> Self {
        FeatureTree::default()
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    /// Build a tree from label paths.
    pub fn from_paths<I, P, S>(paths: I) -> Self
    where
        I: IntoIterator<Item = P>,
        P: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut root = FeatureTree::default();
        for path in paths {
            let mut node = &mut root;
            for label in path {
                node = node.children.entry(label.into()).or_default();
            }
        }
        root
    }

    /// Every root-to-leaf label path, in lexicographic order.
    pub fn leaf_paths(&self) -> Vec<Vec<String>> {
        fn walk(node: &FeatureTree, prefix: &mut Vec<String>, out: &mut Vec<Vec<String>>) {
            for (label, child) in &node.children {
                prefix.push(label.clone());
                if child.is_leaf() {
                    out.push(prefix.clone());
                } else {
                    walk(child, prefix, out);
                }
                prefix.pop();
            }
        }
        let mut out = Vec::new();
        walk(self, &mut Vec::new(), &mut out);
        out
    }

    pub fn leaf_count(&self) -> usize {
        if self.is_leaf() {
            return 0;
        }
        self.children.values().map(|c| if c.is_leaf() { 1 } else { c.leaf_count() }).sum()
    }

    fn merge_from(&mut self, other: &FeatureTree) {
        for (label, child) in &other.children {
            self.children.entry(label.clone()).or_default().merge_from(child);
        }
    }
}

/// Union of label paths: nodes with the same path merge, children stay
/// sorted and unique.
pub fn merge_trees<'a>(trees: impl IntoIterator<Item = &'a FeatureTree>) -> FeatureTree {
    let mut out = FeatureTree::default();
    for tree in trees {
        out.merge_from(tree);
    }
    out
}

/// Seeded subtree with at most `budget` leaves, made of whole root-to-leaf
/// paths of `tree`. Returns the whole tree when it has no more than `budget`
/// leaves.
pub fn sample_subtree(tree: &FeatureTree, budget: usize, seed: u64) -> Result<FeatureTree, FeatureTreeError> {
    if budget == 0 {
        return Err(FeatureTreeError::ZeroBudget);
    }
    let mut paths = tree.leaf_paths();
    if paths.len() <= budget {
        return Ok(tree.clone());
    }
    let mut rng = SplitMix64::new(seed);
    for i in 0..budget {
        let j = i + rng.index(paths.len() - i);
        paths.swap(i, j);
    }
    paths.truncate(budget);
    Ok(FeatureTree::from_paths(paths))
}

impl Serialize for FeatureTree {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        if !self.is_leaf() && self.children.values().all(FeatureTree::is_leaf) {
            return serializer.collect_seq(self.children.keys());
        }
        let mut map = serializer.serialize_map(Some(self.children.len()))?;
        for (label, child) in &self.children {
            map.serialize_entry(label, child)?;
        }
        map.end()
    }
}

fn check_label<E: de::Error>(label: &str) -> Result<(), E> {
    if label.trim().is_empty() {
        return Err(E::custom("feature labels must be nonempty"));
    }
    Ok(())
}

struct TreeVisitor;

impl<'de> Visitor<'de> for TreeVisitor {
    type Value = FeatureTree;

    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("a feature tree (object, array of labels, or null)")
    }

    fn visit_unit<E: de::Error>(self) -> Result<FeatureTree, E> {
        Ok(FeatureTree::leaf())
    }

    fn visit_none<E: de::Error>(self) -> Result<FeatureTree, E> {
        Ok(FeatureTree::leaf())
    }

    fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<FeatureTree, A::Error> {
        let mut tree = FeatureTree::default();
        while let Some(label) = seq.next_element::<String>()? {
            check_label(&label)?;
            tree.children.entry(label).or_default();
        }
        Ok(tree)
    }

    fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<FeatureTree, A::Error> {
        let mut tree = FeatureTree::default();
        while let Some((label, child)) = map.next_entry::<String, FeatureTree>()? {
            check_label(&label)?;
            tree.children.entry(label).or_default().merge_from(&child);
        }
        Ok(tree)
    }
}

impl<'de> Deserialize<'de> for FeatureTree {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        deserializer.deserialize_any(TreeVisitor)
    }
}
