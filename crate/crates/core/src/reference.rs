//! Reference simplices and their sub-entity tables.
//!
//! All of the geometry in the crate is affine images of three reference
//! cells: the unit interval [0,1], the unit triangle with vertices (0,0),
//! (1,0), (0,1) and the unit tetrahedron with vertices (0,0,0), (1,0,0),
//! (0,1,0), (0,0,1).
//!
//! Sub-entity convention: the dimension-d sub-simplices of a cell are the
//! (d+1)-element subsets of its vertex list, ordered lexicographically.
//! So local edge 1 of a triangle is (v0, v2), and local facet k of a
//! tetrahedron is the k-th 3-subset (0,1,2), (0,1,3), (0,2,3), (1,2,3).
//! Every table below follows this ordering, and so does entity creation in
//! the mesh: "entity k of a cell" always means this sub-simplex k.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellType {
    Interval,
    Triangle,
    Tetrahedron,
}

impl CellType {
    pub fn from_tdim(tdim: usize) -> Option<CellType> {
        match tdim {
            1 => Some(CellType::Interval),
            2 => Some(CellType::Triangle),
            3 => Some(CellType::Tetrahedron),
            _ => None,
        }
    }

    pub fn tdim(&self) -> usize {
        match self {
            CellType::Interval => 1,
            CellType::Triangle => 2,
            CellType::Tetrahedron => 3,
        }
    }

    pub fn num_vertices(&self) -> usize {
        self.tdim() + 1
    }

    pub fn name(&self) -> &'static str {
        match self {
            CellType::Interval => "interval",
            CellType::Triangle => "triangle",
            CellType::Tetrahedron => "tetrahedron",
        }
    }

    pub fn from_name(name: &str) -> Option<CellType> {
        match name {
            "interval" => Some(CellType::Interval),
            "triangle" => Some(CellType::Triangle),
            "tetrahedron" => Some(CellType::Tetrahedron),
            _ => None,
        }
    }

    /// Reference vertex coordinates, tdim entries each.
    pub fn vertices(&self) -> &'static [&'static [f64]] {
        match self {
            CellType::Interval => &[&[0.0], &[1.0]],
            CellType::Triangle => &[&[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]],
            CellType::Tetrahedron => &[
                &[0.0, 0.0, 0.0],
                &[1.0, 0.0, 0.0],
                &[0.0, 1.0, 0.0],
                &[0.0, 0.0, 1.0],
            ],
        }
    }

    /// Volume of the reference cell: 1, 1/2, 1/6.
    pub fn volume(&self) -> f64 {
        match self {
            CellType::Interval => 1.0,
            CellType::Triangle => 0.5,
            CellType::Tetrahedron => 1.0 / 6.0,
        }
    }

    /// Local vertex tuples of the dimension-d sub-simplices, in the
    /// lexicographic-subset order described in the module docs.
    pub fn sub_entities(&self, d: usize) -> &'static [&'static [usize]] {
        match (self, d) {
            (CellType::Interval, 0) => &[&[0], &[1]],
            (CellType::Interval, 1) => &[&[0, 1]],
            (CellType::Triangle, 0) => &[&[0], &[1], &[2]],
            (CellType::Triangle, 1) => &[&[0, 1], &[0, 2], &[1, 2]],
            (CellType::Triangle, 2) => &[&[0, 1, 2]],
            (CellType::Tetrahedron, 0) => &[&[0], &[1], &[2], &[3]],
            (CellType::Tetrahedron, 1) => {
                &[&[0, 1], &[0, 2], &[0, 3], &[1, 2], &[1, 3], &[2, 3]]
            }
            (CellType::Tetrahedron, 2) => &[&[0, 1, 2], &[0, 1, 3], &[0, 2, 3], &[1, 2, 3]],
            (CellType::Tetrahedron, 3) => &[&[0, 1, 2, 3]],
            _ => panic!("no dimension-{d} sub-entities on a {}", self.name()),
        }
    }

    pub fn num_sub_entities(&self, d: usize) -> usize {
        self.sub_entities(d).len()
    }

    pub fn facet_type(&self) -> Option<CellType> {
        CellType::from_tdim(self.tdim().wrapping_sub(1))
    }
}
