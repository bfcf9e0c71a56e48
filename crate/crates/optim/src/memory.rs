//! FIFO memory of past parameter/feedback pairs.

use std::collections::{BTreeMap, VecDeque};

use opto_core::{Graph, NodeId, Value};

pub const DEFAULT_MEMORY_CAPACITY: usize = 10;

/// A deep-copied snapshot of parameter values plus the feedback they drew.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryEntry {
    pub variables: BTreeMap<String, Value>,
    pub feedback: String,
}

/// Bounded FIFO: at most `capacity` entries, oldest evicted first.
#[derive(Debug, Clone)]
pub struct Memory {
    capacity: usize,
    entries: VecDeque<MemoryEntry>,
}

impl Default for Memory {
    fn default() -> Self {
        Memory::new(DEFAULT_MEMORY_CAPACITY)
    }
}

impl Memory {
    pub fn new(capacity: usize) -> Self {
        Memory {
            capacity,
            entries: VecDeque::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn push(&mut self, entry: MemoryEntry) {
        if self.capacity == 0 {
            return;
        }
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(entry);
    }

    pub fn entries(&self) -> impl Iterator<Item = &MemoryEntry> {
        self.entries.iter()
    }
}

/// Deep copy of the current parameter values, keyed by node name.
pub fn snapshot_params(graph: &Graph, params: &[NodeId]) -> BTreeMap<String, Value> {
    params
        .iter()
        .filter_map(|&id| graph.node(id).ok())
        .map(|node| (node.name.clone(), node.value.clone()))
        .collect()
}
