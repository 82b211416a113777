//! Uniform quadrilateral grid on `[-1, 1]^2` with a rectangular subdomain
//! partition.

use alloc::format;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Number of subdomains along each axis.
///
/// `Partition { nx: 1, ny: 16 }` is the "1x16" layout of sixteen horizontal
/// strips stacked in `x2`; `Partition { nx: 16, ny: 1 }` gives vertical
/// strips.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Partition {
    /// Subdomains along `x1`.
    pub nx: usize,
    /// Subdomains along `x2`.
    pub ny: usize,
}

impl Partition {
    /// New partition with `nx` subdomains along `x1` and `ny` along `x2`.
    pub const fn new(nx: usize, ny: usize) -> Self {
        Self { nx, ny }
    }

    /// Total subdomain count `N_D`.
    pub const fn count(&self) -> usize {
        self.nx * self.ny
    }

    /// Zero-based subdomain index of the block in column `bx` (along `x1`) and
    /// row `by` (along `x2`). Indices run column-major from the bottom-left.
    pub const fn index(&self, bx: usize, by: usize) -> usize {
        bx * self.ny + by
    }

    /// Inverse of [`Partition::index`].
    pub const fn block(&self, m: usize) -> (usize, usize) {
        (m / self.ny, m % self.ny)
    }

    /// Whether two subdomains touch (share at least a corner), including
    /// `a == b`.
    pub fn touches(&self, a: usize, b: usize) -> bool {
        let (ax, ay) = self.block(a);
        let (bx, by) = self.block(b);
        ax.abs_diff(bx) <= 1 && ay.abs_diff(by) <= 1
    }
}

/// Classification of a boundary node relative to the convection field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryKind {
    /// `w . n < 0` on the adjacent boundary side(s).
    Inflow,
    /// `w . n > 0`.
    Outflow,
    /// `w . n == 0`.
    Characteristic,
}

/// Uniform `n x n` Q1 grid on `[-1, 1]^2`.
///
/// Nodes are numbered row-major, `x1` fastest: node `(i, j)` has id
/// `j * (n + 1) + i` and coordinates `(-1 + i h, -1 + j h)`. Elements follow
/// the same pattern with `n` cells per row.
#[derive(Debug, Clone)]
pub struct StructuredMesh {
    n: usize,
    partition: Partition,
    element_subdomain: Vec<usize>,
    interior: Vec<usize>,
    dof_of_node: Vec<Option<usize>>,
}

impl StructuredMesh {
    /// Builds the grid with `n` cells per side and the given partition.
    pub fn new(n: usize, partition: Partition) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidMesh(format!(
                "need at least 2 cells per side, got {n}"
            )));
        }
        if partition.nx == 0 || partition.ny == 0 {
            return Err(Error::InvalidMesh(format!(
                "partition {}x{} has an empty side",
                partition.nx, partition.ny
            )));
        }
        if !n.is_multiple_of(partition.nx) || !n.is_multiple_of(partition.ny) {
            return Err(Error::InvalidMesh(format!(
                "partition {}x{} does not divide a {n}x{n} grid into equal rectangles",
                partition.nx, partition.ny
            )));
        }
        let cx = n / partition.nx;
        let cy = n / partition.ny;
        let mut element_subdomain = Vec::with_capacity(n * n);
        for j in 0..n {
            for i in 0..n {
                element_subdomain.push(partition.index(i / cx, j / cy));
            }
        }

        let mut interior = Vec::with_capacity((n - 1) * (n - 1));
        let mut dof_of_node = alloc::vec![None; (n + 1) * (n + 1)];
        for j in 1..n {
            for i in 1..n {
                let node = j * (n + 1) + i;
                dof_of_node[node] = Some(interior.len());
                interior.push(node);
            }
        }

        Ok(Self {
            n,
            partition,
            element_subdomain,
            interior,
            dof_of_node,
        })
    }

    /// Cells per side.
    pub fn cells_per_side(&self) -> usize {
        self.n
    }

    /// Mesh width `2 / n`.
    pub fn h(&self) -> f64 {
        2.0 / self.n as f64
    }

    /// Subdomain partition.
    pub fn partition(&self) -> Partition {
        self.partition
    }

    /// Number of subdomains `N_D`.
    pub fn subdomain_count(&self) -> usize {
        self.partition.count()
    }

    /// `(n + 1)^2`.
    pub fn node_count(&self) -> usize {
        (self.n + 1) * (self.n + 1)
    }

    /// `n^2`.
    pub fn element_count(&self) -> usize {
        self.n * self.n
    }

    /// Coordinates of a node.
    pub fn node(&self, id: usize) -> [f64; 2] {
        let i = id % (self.n + 1);
        let j = id / (self.n + 1);
        let h = self.h();
        [-1.0 + i as f64 * h, -1.0 + j as f64 * h]
    }

    /// Node ids of an element, counterclockwise from the bottom-left corner.
    pub fn element(&self, e: usize) -> [usize; 4] {
        let i = e % self.n;
        let j = e / self.n;
        let row = self.n + 1;
        let bl = j * row + i;
        [bl, bl + 1, bl + row + 1, bl + row]
    }

    /// Zero-based subdomain of an element.
    pub fn element_subdomain(&self, e: usize) -> usize {
        self.element_subdomain[e]
    }

    /// Center of an element.
    pub fn element_center(&self, e: usize) -> [f64; 2] {
        let [a, _, c, _] = self.element(e);
        let (pa, pc) = (self.node(a), self.node(c));
        [0.5 * (pa[0] + pc[0]), 0.5 * (pa[1] + pc[1])]
    }

    /// Whether the node lies on `∂D`.
    pub fn is_boundary(&self, id: usize) -> bool {
        self.dof_of_node[id].is_none()
    }

    /// Boundary node ids in increasing order.
    pub fn boundary_nodes(&self) -> Vec<usize> {
        (0..self.node_count())
            .filter(|&v| self.is_boundary(v))
            .collect()
    }

    /// Interior node ids; position in this list is the interior dof index.
    pub fn interior_nodes(&self) -> &[usize] {
        &self.interior
    }

    /// Interior dof index of a node, `None` on the boundary.
    pub fn dof(&self, node: usize) -> Option<usize> {
        self.dof_of_node[node]
    }

    /// Inflow/outflow classification of a boundary node for velocity `w`.
    /// Corners use the sum of the two adjacent outward normals. Returns
    /// `None` for interior nodes.
    pub fn boundary_kind(&self, id: usize, w: [f64; 2]) -> Option<BoundaryKind> {
        if !self.is_boundary(id) {
            return None;
        }
        let i = id % (self.n + 1);
        let j = id / (self.n + 1);
        let mut normal = [0.0, 0.0];
        if i == 0 {
            normal[0] -= 1.0;
        }
        if i == self.n {
            normal[0] += 1.0;
        }
        if j == 0 {
            normal[1] -= 1.0;
        }
        if j == self.n {
            normal[1] += 1.0;
        }
        let flux = w[0] * normal[0] + w[1] * normal[1];
        Some(if flux < 0.0 {
            BoundaryKind::Inflow
        } else if flux > 0.0 {
            BoundaryKind::Outflow
        } else {
            BoundaryKind::Characteristic
        })
    }
}
