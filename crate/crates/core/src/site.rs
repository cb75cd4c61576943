//! Lattice points and undirected edges of `Z^d`.

use core::ops::{Add, Neg, Sub};

/// Largest supported lattice dimension.
pub const MAX_DIM: usize = 4;

/// A point of `Z^d`, stored in a fixed array; coordinates beyond the
/// dimension in use are kept at zero.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Site(pub [i64; MAX_DIM]);

impl Site {
    pub const ORIGIN: Site = Site([0; MAX_DIM]);

    pub fn from_slice(coords: &[i64]) -> Site {
        assert!(coords.len() <= MAX_DIM, "at most {MAX_DIM} coordinates");
        let mut c = [0; MAX_DIM];
        c[..coords.len()].copy_from_slice(coords);
        Site(c)
    }

    /// Unit vector `e_axis`.
    pub fn unit(axis: usize) -> Site {
        let mut c = [0; MAX_DIM];
        c[axis] = 1;
        Site(c)
    }

    pub fn coords(&self, dim: usize) -> &[i64] {
        &self.0[..dim]
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0)
    }

    /// Squared euclidean length.
    pub fn norm2(&self) -> i64 {
        self.0.iter().map(|c| c * c).sum()
    }

    pub fn l1(&self) -> i64 {
        self.0.iter().map(|c| c.abs()).sum()
    }

    pub fn linf(&self) -> i64 {
        self.0.iter().map(|c| c.abs()).max().unwrap_or(0)
    }

    /// Nearest-neighbour step `±e_k`.
    pub fn is_unit_step(&self) -> bool {
        self.l1() == 1
    }

    /// First nonzero coordinate is positive.
    pub fn is_lex_positive(&self) -> bool {
        self.0.iter().find(|&&c| c != 0).is_some_and(|&c| c > 0)
    }

    /// Axis of a nearest-neighbour step.
    pub fn unit_axis(&self) -> Option<usize> {
        if !self.is_unit_step() {
            return None;
        }
        self.0.iter().position(|&c| c != 0)
    }

    pub fn scale(&self, k: i64) -> Site {
        let mut c = self.0;
        c.iter_mut().for_each(|v| *v *= k);
        Site(c)
    }
}

impl Add for Site {
    type Output = Site;
    fn add(self, rhs: Site) -> Site {
        let mut c = self.0;
        for (a, b) in c.iter_mut().zip(rhs.0) {
            *a += b;
        }
        Site(c)
    }
}

impl Sub for Site {
    type Output = Site;
    fn sub(self, rhs: Site) -> Site {
        self + (-rhs)
    }
}

impl Neg for Site {
    type Output = Site;
    fn neg(self) -> Site {
        self.scale(-1)
    }
}

/// Undirected edge `{base, base + step}` in canonical form: `step` is
/// lexicographically positive, so every edge has exactly one `EdgeId`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeId {
    base: Site,
    step: Site,
}

impl EdgeId {
    /// Canonical id of the edge between `x` and `x + z`. Returns `None` for `z = 0`.
    pub fn new(x: Site, z: Site) -> Option<EdgeId> {
        if z.is_zero() {
            None
        } else if z.is_lex_positive() {
            Some(EdgeId { base: x, step: z })
        } else {
            Some(EdgeId { base: x + z, step: -z })
        }
    }

    pub fn base(&self) -> Site {
        self.base
    }

    pub fn step(&self) -> Site {
        self.step
    }

    pub fn tip(&self) -> Site {
        self.base + self.step
    }

    pub fn is_nearest_neighbor(&self) -> bool {
        self.step.is_unit_step()
    }

    pub fn contains(&self, x: Site) -> bool {
        self.base == x || self.tip() == x
    }
}

/// Row-major iterator (last coordinate fastest) over the cube
/// `{x : |x_i| <= radius}` in dimension `dim`.
pub fn cube_sites(dim: usize, radius: i64) -> impl Iterator<Item = Site> {
    let side = (2 * radius + 1).max(0) as u64;
    let total = side.pow(dim as u32);
    (0..total).map(move |mut idx| {
        let mut c = [0i64; MAX_DIM];
        for k in (0..dim).rev() {
            c[k] = (idx % side) as i64 - radius;
            idx /= side;
        }
        Site(c)
    })
}
