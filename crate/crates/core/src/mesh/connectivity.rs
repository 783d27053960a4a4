//! Incidence relations in compressed-row form and their on-demand derivation.
//!
//! Derivation rules, starting from the stored cell–vertex relation (tdim, 0):
//!  * (d, 0) for 0 < d < tdim: enumerate the dimension-d sub-simplices of all
//!    cells in scan order, keyed by sorted vertex tuple; this also produces
//!    (tdim, d). Entity vertex lists are stored sorted.
//!  * (d0, d1) with d0 > d1 > 0: extraction — look up each d1-sub-simplex of
//!    every d0 entity in the d1 entity table.
//!  * (d0, d1) with d0 < d1: transpose of (d1, d0).
//!  * (d, d) with d > 0: entities sharing at least one vertex, self excluded.
//!  * (0, 0): vertices sharing an edge, self excluded (the neighbor relation
//!    smoothing wants; the vertex-sharing rule would be the trivial one).
//! One computation may fill several slots; laziness is per derivation chain,
//! not per slot.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use crate::reference::CellType;

/// Offsets + flat incidence indices; row i spans offsets[i]..offsets[i+1].
#[derive(Debug, Clone, PartialEq)]
pub struct Connectivity {
    offsets: Vec<usize>,
    indices: Vec<usize>,
}

impl Connectivity {
    pub fn new(offsets: Vec<usize>, indices: Vec<usize>) -> Self {
        debug_assert!(!offsets.is_empty() && offsets[0] == 0);
        debug_assert!(offsets.windows(2).all(|w| w[0] <= w[1]));
        debug_assert_eq!(*offsets.last().unwrap(), indices.len());
        Connectivity { offsets, indices }
    }

    /// Uniform row width (every entity has the same number of neighbors).
    pub fn uniform(num: usize, width: usize, indices: Vec<usize>) -> Self {
        debug_assert_eq!(indices.len(), num * width);
        let offsets = (0..=num).map(|i| i * width).collect();
        Connectivity { offsets, indices }
    }

    /// Number of source entities (rows).
    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, i: usize) -> &[usize] {
        &self.indices[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn iter(&self) -> impl Iterator<Item = &[usize]> + '_ {
        (0..self.len()).map(move |i| self.get(i))
    }

    fn transpose(&self, num_targets: usize) -> Connectivity {
        let mut counts = vec![0usize; num_targets];
        for &t in &self.indices {
            counts[t] += 1;
        }
        let mut offsets = Vec::with_capacity(num_targets + 1);
        offsets.push(0);
        for c in &counts {
            offsets.push(offsets.last().unwrap() + c);
        }
        let mut cursor = offsets[..num_targets].to_vec();
        let mut indices = vec![0usize; self.indices.len()];
        for src in 0..self.len() {
            for &t in self.get(src) {
                indices[cursor[t]] = src;
                cursor[t] += 1;
            }
        }
        // Source scan order is ascending, so each row comes out sorted.
        Connectivity { offsets, indices }
    }
}

#[derive(Debug)]
pub(super) struct Topology {
    tdim: usize,
    num_vertices: usize,
    vertex_ids: Vec<usize>,
    slots: [[OnceLock<Connectivity>; 4]; 4],
    compute: Mutex<()>,
}

impl Clone for Topology {
    fn clone(&self) -> Self {
        let slots: [[OnceLock<Connectivity>; 4]; 4] = Default::default();
        for d0 in 0..=self.tdim {
            for d1 in 0..=self.tdim {
                if let Some(c) = self.slots[d0][d1].get() {
                    slots[d0][d1].set(c.clone()).unwrap();
                }
            }
        }
        Topology {
            tdim: self.tdim,
            num_vertices: self.num_vertices,
            vertex_ids: self.vertex_ids.clone(),
            slots,
            compute: Mutex::new(()),
        }
    }
}

impl Topology {
    pub fn new(tdim: usize, num_vertices: usize, cells: Vec<usize>) -> Self {
        let slots: [[OnceLock<Connectivity>; 4]; 4] = Default::default();
        let width = tdim + 1;
        let num = cells.len() / width;
        slots[tdim][0].set(Connectivity::uniform(num, width, cells)).unwrap();
        Topology {
            tdim,
            num_vertices,
            vertex_ids: (0..num_vertices).collect(),
            slots,
            compute: Mutex::new(()),
        }
    }

    pub fn num_cells(&self) -> usize {
        self.slots[self.tdim][0].get().unwrap().len()
    }

    pub fn cell_vertices(&self, cell: usize) -> &[usize] {
        self.slots[self.tdim][0].get().unwrap().get(cell)
    }

    pub fn vertex_self(&self, v: usize) -> &[usize] {
        &self.vertex_ids[v..v + 1]
    }

    pub fn computed_pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for d0 in 0..=self.tdim {
            for d1 in 0..=self.tdim {
                if self.slots[d0][d1].get().is_some() {
                    out.push((d0, d1));
                }
            }
        }
        out
    }

    pub fn connectivity(&self, d0: usize, d1: usize) -> &Connectivity {
        if let Some(c) = self.slots[d0][d1].get() {
            return c;
        }
        // Serialize all derivations; results are deterministic so a racing
        // set() by another thread is identical and harmless.
        let _guard = self.compute.lock().unwrap();
        self.ensure(d0, d1);
        self.slots[d0][d1].get().unwrap()
    }

    fn num_entities_known(&self, d: usize) -> usize {
        if d == 0 {
            self.num_vertices
        } else if d == self.tdim {
            self.num_cells()
        } else {
            self.slots[d][0].get().expect("entities not yet created").len()
        }
    }

    fn set_slot(&self, d0: usize, d1: usize, c: Connectivity) {
        let _ = self.slots[d0][d1].set(c);
    }

    fn ensure(&self, d0: usize, d1: usize) {
        if self.slots[d0][d1].get().is_some() {
            return;
        }
        if d0 == d1 {
            // Neighbors through a shared lower-dimensional entity.
            let through = if d0 == 0 { 1 } else { 0 };
            self.ensure(d0, through);
            self.ensure(through, d0);
            let down = self.slots[d0][through].get().unwrap();
            let up = self.slots[through][d0].get().unwrap();
            let mut offsets = vec![0usize];
            let mut indices = Vec::new();
            for e in 0..down.len() {
                let mut neighbors: Vec<usize> = down
                    .get(e)
                    .iter()
                    .flat_map(|&m| up.get(m).iter().copied())
                    .filter(|&other| other != e)
                    .collect();
                neighbors.sort_unstable();
                neighbors.dedup();
                indices.extend_from_slice(&neighbors);
                offsets.push(indices.len());
            }
            self.set_slot(d0, d1, Connectivity::new(offsets, indices));
        } else if d0 > d1 {
            if d1 == 0 {
                self.ensure_entities(d0);
            } else if d0 == self.tdim {
                self.ensure_entities(d1);
            } else {
                self.ensure_entities(d0);
                self.ensure_entities(d1);
                self.extract(d0, d1);
            }
        } else {
            self.ensure(d1, d0);
            let c = self.slots[d1][d0].get().unwrap();
            self.set_slot(d0, d1, c.transpose(self.num_entities_known(d0)));
        }
    }

    /// Create the dimension-d entities: fills (d, 0) and (tdim, d).
    /// No-op for d == 0 and d == tdim where both are implicit.
    fn ensure_entities(&self, d: usize) {
        if d == 0 || d == self.tdim || self.slots[d][0].get().is_some() {
            return;
        }
        let cells = self.slots[self.tdim][0].get().unwrap();
        let cell_type = CellType::from_tdim(self.tdim).unwrap();
        let subs = cell_type.sub_entities(d);
        let mut seen: HashMap<Vec<usize>, usize> = HashMap::new();
        let mut entity_vertices: Vec<usize> = Vec::new();
        let mut cell_entities: Vec<usize> = Vec::with_capacity(cells.len() * subs.len());
        for cell in cells.iter() {
            for sub in subs {
                let mut key: Vec<usize> = sub.iter().map(|&l| cell[l]).collect();
                key.sort_unstable();
                let next = seen.len();
                let id = *seen.entry(key.clone()).or_insert_with(|| {
                    entity_vertices.extend_from_slice(&key);
                    next
                });
                cell_entities.push(id);
            }
        }
        let n = seen.len();
        self.set_slot(d, 0, Connectivity::uniform(n, d + 1, entity_vertices));
        self.set_slot(self.tdim, d, Connectivity::uniform(cells.len(), subs.len(), cell_entities));
    }

    /// (d0, d1) with tdim > d0 > d1 > 0: locate each d1-sub-simplex of every
    /// d0 entity in the global d1 table.
    fn extract(&self, d0: usize, d1: usize) {
        let from = self.slots[d0][0].get().unwrap();
        let to = self.slots[d1][0].get().unwrap();
        let mut lookup: HashMap<&[usize], usize> = HashMap::with_capacity(to.len());
        for e in 0..to.len() {
            lookup.insert(to.get(e), e);
        }
        let entity_type = CellType::from_tdim(d0).unwrap();
        let subs = entity_type.sub_entities(d1);
        let mut indices = Vec::with_capacity(from.len() * subs.len());
        for e in 0..from.len() {
            let verts = from.get(e);
            for sub in subs {
                // Entity vertex lists are sorted, so the sub-tuple is too.
                let key: Vec<usize> = sub.iter().map(|&l| verts[l]).collect();
                indices.push(*lookup.get(key.as_slice()).expect("sub-entity must exist"));
            }
        }
        self.set_slot(d0, d1, Connectivity::uniform(from.len(), subs.len(), indices));
    }
}
