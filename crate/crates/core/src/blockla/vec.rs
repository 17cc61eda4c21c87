use nalgebra::DVector;
use std::ops::{Add, Mul, Neg, Sub};

/// Sizes of the two blocks of a partitioned state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BlockShape {
    pub nx: usize,
    pub ny: usize,
}

impl BlockShape {
    pub fn new(nx: usize, ny: usize) -> Self {
        Self { nx, ny }
    }

    pub fn len(&self) -> usize {
        self.nx + self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A vector split into an `x` block and a `y` block.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockVec {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
}

impl BlockVec {
    pub fn new(x: DVector<f64>, y: DVector<f64>) -> Self {
        Self { x, y }
    }

    pub fn from_slices(x: &[f64], y: &[f64]) -> Self {
        Self::new(DVector::from_column_slice(x), DVector::from_column_slice(y))
    }

    pub fn zeros(shape: BlockShape) -> Self {
        Self::new(DVector::zeros(shape.nx), DVector::zeros(shape.ny))
    }

    pub fn shape(&self) -> BlockShape {
        BlockShape::new(self.x.len(), self.y.len())
    }

    /// Unit vector for global index `i` (x block first).
    pub fn unit(shape: BlockShape, i: usize) -> Self {
        let mut v = Self::zeros(shape);
        v.set(i, 1.0);
        v
    }

    pub fn get(&self, i: usize) -> f64 {
        if i < self.x.len() {
            self.x[i]
        } else {
            self.y[i - self.x.len()]
        }
    }

    pub fn set(&mut self, i: usize, value: f64) {
        let nx = self.x.len();
        if i < nx {
            self.x[i] = value;
        } else {
            self.y[i - nx] = value;
        }
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.x.dot(&other.x) + self.y.dot(&other.y)
    }

    pub fn norm_inf(&self) -> f64 {
        self.x.amax().max(self.y.amax())
    }

    pub fn norm2(&self) -> f64 {
        (self.x.norm_squared() + self.y.norm_squared()).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(self.y.iter()).all(|v| v.is_finite())
    }

    /// `self += a * other`
    pub fn axpy(&mut self, a: f64, other: &Self) {
        self.x.axpy(a, &other.x, 1.0);
        self.y.axpy(a, &other.y, 1.0);
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self::new(&self.x * a, &self.y * a)
    }

    pub fn flatten(&self) -> DVector<f64> {
        DVector::from_iterator(self.x.len() + self.y.len(), self.x.iter().chain(self.y.iter()).copied())
    }

    pub fn from_flat(shape: BlockShape, v: &DVector<f64>) -> Self {
        assert_eq!(v.len(), shape.len(), "flat vector length does not match block shape");
        Self::new(
            DVector::from_column_slice(&v.as_slice()[..shape.nx]),
            DVector::from_column_slice(&v.as_slice()[shape.nx..]),
        )
    }
}

impl Add for &BlockVec {
    type Output = BlockVec;
    fn add(self, rhs: &BlockVec) -> BlockVec {
        BlockVec::new(&self.x + &rhs.x, &self.y + &rhs.y)
    }
}

impl Sub for &BlockVec {
    type Output = BlockVec;
    fn sub(self, rhs: &BlockVec) -> BlockVec {
        BlockVec::new(&self.x - &rhs.x, &self.y - &rhs.y)
    }
}

impl Add for BlockVec {
    type Output = BlockVec;
    fn add(self, rhs: BlockVec) -> BlockVec {
        &self + &rhs
    }
}

impl Sub for BlockVec {
    type Output = BlockVec;
    fn sub(self, rhs: BlockVec) -> BlockVec {
        &self - &rhs
    }
}

impl Neg for &BlockVec {
    type Output = BlockVec;
    fn neg(self) -> BlockVec {
        BlockVec::new(-&self.x, -&self.y)
    }
}

impl Neg for BlockVec {
    type Output = BlockVec;
    fn neg(self) -> BlockVec {
        -&self
    }
}

impl Mul<f64> for &BlockVec {
    type Output = BlockVec;
    fn mul(self, rhs: f64) -> BlockVec {
        self.scaled(rhs)
    }
}

impl Mul<f64> for BlockVec {
    type Output = BlockVec;
    fn mul(self, rhs: f64) -> BlockVec {
        self.scaled(rhs)
    }
}
