//! Block-sparse background grid. Nodes live in 4³ blocks that are
//! allocated on first touch each substep, so memory follows the occupied
//! region rather than the full resolution.

use crate::math::Vec3;

pub const BLOCK: usize = 4;
pub const BLOCK_NODES: usize = BLOCK * BLOCK * BLOCK;
const EMPTY: u32 = u32::MAX;

/// Grid node. Mass is held in integer quanta so that totals are exact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub mass: i64,
    /// Momentum during transfer, velocity after the grid update.
    pub mv: Vec3,
}

impl Default for Node {
    fn default() -> Self {
        Self {
            mass: 0,
            mv: Vec3::zeros(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SparseGrid {
    /// Nodes per axis (indices `0..nodes`).
    pub nodes: usize,
    blocks_per_axis: usize,
    table: Vec<u32>,
    pub(crate) origins: Vec<[usize; 3]>,
    pub(crate) data: Vec<Node>,
    active: usize,
}

impl SparseGrid {
    /// A grid with nodes `0..=resolution` along each axis.
    pub fn new(resolution: usize) -> Self {
        let nodes = resolution + 1;
        let bpa = nodes.div_ceil(BLOCK);
        Self {
            nodes,
            blocks_per_axis: bpa,
            table: vec![EMPTY; bpa * bpa * bpa],
            origins: Vec::new(),
            data: Vec::new(),
            active: 0,
        }
    }

    pub fn active_blocks(&self) -> usize {
        self.active
    }

    /// Releases every block; storage is kept for reuse.
    pub fn clear(&mut self) {
        for b in 0..self.active {
            let o = self.origins[b];
            let key = self.block_key(o[0] / BLOCK, o[1] / BLOCK, o[2] / BLOCK);
            self.table[key] = EMPTY;
        }
        self.active = 0;
    }

    #[inline]
    fn block_key(&self, bi: usize, bj: usize, bk: usize) -> usize {
        (bi * self.blocks_per_axis + bj) * self.blocks_per_axis + bk
    }

    /// Makes sure the block holding node `(i, j, k)` exists.
    pub fn touch(&mut self, i: usize, j: usize, k: usize) {
        let key = self.block_key(i / BLOCK, j / BLOCK, k / BLOCK);
        if self.table[key] != EMPTY {
            return;
        }
        let slot = self.active;
        let origin = [i / BLOCK * BLOCK, j / BLOCK * BLOCK, k / BLOCK * BLOCK];
        if slot == self.origins.len() {
            self.origins.push(origin);
            self.data.extend(std::iter::repeat_n(Node::default(), BLOCK_NODES));
        } else {
            self.origins[slot] = origin;
            self.data[slot * BLOCK_NODES..(slot + 1) * BLOCK_NODES].fill(Node::default());
        }
        self.table[key] = slot as u32;
        self.active += 1;
    }

    /// Storage slot of node `(i, j, k)`, if its block is allocated.
    #[inline]
    pub fn slot(&self, i: usize, j: usize, k: usize) -> Option<usize> {
        let b = self.table[self.block_key(i / BLOCK, j / BLOCK, k / BLOCK)];
        (b != EMPTY).then(|| {
            b as usize * BLOCK_NODES + ((i % BLOCK) * BLOCK + (j % BLOCK)) * BLOCK + (k % BLOCK)
        })
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize, k: usize) -> Option<&Node> {
        self.slot(i, j, k).map(|s| &self.data[s])
    }

    #[inline]
    pub fn node_mut(&mut self, i: usize, j: usize, k: usize) -> Option<&mut Node> {
        self.slot(i, j, k).map(move |s| &mut self.data[s])
    }

    /// Allocated storage with the node index of each slot.
    pub fn active_nodes(&self) -> impl Iterator<Item = ([usize; 3], &Node)> + '_ {
        self.data[..self.active * BLOCK_NODES]
            .iter()
            .enumerate()
            .map(|(s, n)| (self.slot_index(s), n))
    }

    #[inline]
    pub(crate) fn slot_index(&self, s: usize) -> [usize; 3] {
        let o = self.origins[s / BLOCK_NODES];
        let l = s % BLOCK_NODES;
        [o[0] + l / (BLOCK * BLOCK), o[1] + (l / BLOCK) % BLOCK, o[2] + l % BLOCK]
    }

    pub(crate) fn active_data_mut(&mut self) -> &mut [Node] {
        &mut self.data[..self.active * BLOCK_NODES]
    }

    pub fn total_mass_quanta(&self) -> i64 {
        self.data[..self.active * BLOCK_NODES].iter().map(|n| n.mass).sum()
    }

    pub fn total_momentum(&self) -> Vec3 {
        self.data[..self.active * BLOCK_NODES].iter().map(|n| n.mv).sum()
    }
}
