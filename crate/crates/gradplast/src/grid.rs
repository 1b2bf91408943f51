//! Structured 3-D discretization of the spatial domain.
//!
//! The domain is either a box with one Dirichlet face (where the
//! deformation vanishes) or a fully periodic torus.  Nodes sit at
//! `x_i = i * h` and single-point nodal quadrature assigns every node the
//! cell volume `hx*hy*hz`, so the box `(nx, ny, nz)` with spacing `h`
//! measures `nx*ny*nz*h^3`.

use serde::{Deserialize, Serialize};

use crate::{real, Error, Real, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    /// Box with one Dirichlet face for the deformation and tangential-trace
    /// masking for the plastic strain on the whole boundary.
    Box,
    /// Fully periodic torus; no boundary, exact spectral calculus.
    Periodic,
}

/// One of the six axis-aligned faces of the box.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Face {
    XMin,
    XMax,
    YMin,
    YMax,
    ZMin,
    ZMax,
}

impl Face {
    /// Axis the face is orthogonal to (0 = x, 1 = y, 2 = z).
    pub fn axis(self) -> usize {
        match self {
            Face::XMin | Face::XMax => 0,
            Face::YMin | Face::YMax => 1,
            Face::ZMin | Face::ZMax => 2,
        }
    }

    pub fn is_min(self) -> bool {
        matches!(self, Face::XMin | Face::YMin | Face::ZMin)
    }
}

/// Plain validated-on-construction grid description, as it appears in a
/// scenario file.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub hx: f64,
    pub hy: f64,
    pub hz: f64,
    pub topology: Topology,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dirichlet_face: Option<Face>,
}

impl GridSpec {
    /// Cubic helper used all over the test suite.
    pub fn cube(n: usize, h: f64, topology: Topology, dirichlet_face: Option<Face>) -> Self {
        GridSpec {
            nx: n,
            ny: n,
            nz: n,
            hx: h,
            hy: h,
            hz: h,
            topology,
            dirichlet_face,
        }
    }
}

/// Validated spatial discretization shared by all field containers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid<T> {
    nx: usize,
    ny: usize,
    nz: usize,
    hx: T,
    hy: T,
    hz: T,
    topology: Topology,
    dirichlet_face: Option<Face>,
}

/// `make_grid`: validate a spec and produce the grid all fields reference.
pub fn make_grid<T: Real>(spec: &GridSpec) -> Result<Grid<T>> {
    Grid::from_spec(spec)
}

impl<T: Real> Grid<T> {
    pub fn from_spec(spec: &GridSpec) -> Result<Self> {
        if spec.nx < 4 || spec.ny < 4 || spec.nz < 4 {
            return Err(Error::InvalidSpec(format!(
                "node counts ({}, {}, {}) must all be >= 4",
                spec.nx, spec.ny, spec.nz
            )));
        }
        if !(spec.hx > 0.0 && spec.hy > 0.0 && spec.hz > 0.0) {
            return Err(Error::InvalidSpec(format!(
                "spacings ({}, {}, {}) must be positive",
                spec.hx, spec.hy, spec.hz
            )));
        }
        match (spec.topology, spec.dirichlet_face) {
            (Topology::Box, None) => {
                return Err(Error::InvalidSpec(
                    "box topology requires exactly one dirichlet face".into(),
                ))
            }
            (Topology::Periodic, Some(_)) => {
                return Err(Error::InvalidSpec(
                    "periodic topology admits no dirichlet face".into(),
                ))
            }
            _ => {}
        }
        Ok(Grid {
            nx: spec.nx,
            ny: spec.ny,
            nz: spec.nz,
            hx: real(spec.hx),
            hy: real(spec.hy),
            hz: real(spec.hz),
            topology: spec.topology,
            dirichlet_face: spec.dirichlet_face,
        })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn nz(&self) -> usize {
        self.nz
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nz]
    }

    pub fn spacing(&self, axis: usize) -> T {
        match axis {
            0 => self.hx,
            1 => self.hy,
            2 => self.hz,
            _ => unreachable!("axis out of range"),
        }
    }

    pub fn spacings(&self) -> [T; 3] {
        [self.hx, self.hy, self.hz]
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    pub fn dirichlet_face(&self) -> Option<Face> {
        self.dirichlet_face
    }

    pub fn n_nodes(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    /// Quadrature weight of a single node.
    pub fn cell_volume(&self) -> T {
        self.hx * self.hy * self.hz
    }

    /// Total measure of the domain under nodal quadrature.
    pub fn volume(&self) -> T {
        self.cell_volume() * real(self.n_nodes() as f64)
    }

    /// Flat index of node `(i, j, k)`; `x` is the outermost axis.
    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        debug_assert!(i < self.nx && j < self.ny && k < self.nz);
        (i * self.ny + j) * self.nz + k
    }

    /// Inverse of [`Grid::idx`].
    #[inline]
    pub fn coords(&self, n: usize) -> (usize, usize, usize) {
        let k = n % self.nz;
        let j = (n / self.nz) % self.ny;
        let i = n / (self.ny * self.nz);
        (i, j, k)
    }

    /// Physical position of a node.
    pub fn position(&self, i: usize, j: usize, k: usize) -> [T; 3] {
        [
            self.hx * real(i as f64),
            self.hy * real(j as f64),
            self.hz * real(k as f64),
        ]
    }

    /// Faces a node lies on (empty for interior nodes or periodic grids).
    pub fn faces_at(&self, i: usize, j: usize, k: usize) -> impl Iterator<Item = Face> {
        let mut faces = [None; 6];
        if self.topology == Topology::Box {
            if i == 0 {
                faces[0] = Some(Face::XMin);
            }
            if i == self.nx - 1 {
                faces[1] = Some(Face::XMax);
            }
            if j == 0 {
                faces[2] = Some(Face::YMin);
            }
            if j == self.ny - 1 {
                faces[3] = Some(Face::YMax);
            }
            if k == 0 {
                faces[4] = Some(Face::ZMin);
            }
            if k == self.nz - 1 {
                faces[5] = Some(Face::ZMax);
            }
        }
        faces.into_iter().flatten()
    }

    /// True when `(i, j, k)` lies on the configured Dirichlet face.
    pub fn on_dirichlet_face(&self, i: usize, j: usize, k: usize) -> bool {
        match self.dirichlet_face {
            None => false,
            Some(face) => {
                let (n, v) = match face.axis() {
                    0 => (self.nx, i),
                    1 => (self.ny, j),
                    _ => (self.nz, k),
                };
                if face.is_min() {
                    v == 0
                } else {
                    v == n - 1
                }
            }
        }
    }
}
