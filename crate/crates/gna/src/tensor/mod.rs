//! Dense f64 tensors in row-major order, the substrate for every numeric
//! structure in the crate (feature maps, weights, localization maps).
//!
//! Submodules: [`ops`] holds pure forward/backward kernels, [`tape`] the
//! reverse-mode recorder, [`gradcheck`] the finite-difference oracle.

pub mod gradcheck;
pub mod ops;
pub mod tape;

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::rng::Rng;
use rand::Rng as _;

const MAGIC: &[u8; 4] = b"GNAT";
const VERSION: u32 = 1;

/// Dense tensor. `grad` is allocated iff `requires_grad`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
}

impl Tensor {
    /// Builds a tensor from row-major data; extents must be positive and
    /// multiply out to `data.len()`.
    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        if shape.iter().any(|&e| e == 0) {
            return Err(Error::shape(format!("zero extent in shape {shape:?}")));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::shape(format!(
                "shape {shape:?} implies {numel} elements, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape: shape.to_vec(), data, requires_grad: false, grad: None })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel: usize = shape.iter().product();
        Tensor::from_vec(shape, vec![0.0; numel]).expect("consistent by construction")
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let numel: usize = shape.iter().product();
        Tensor::from_vec(shape, vec![value; numel]).expect("consistent by construction")
    }

    /// Rank-0 tensor.
    pub fn scalar(value: f64) -> Self {
        Tensor::from_vec(&[], vec![value]).expect("consistent by construction")
    }

    /// Uniform values in `[lo, hi)`.
    pub fn rand_uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut Rng) -> Self {
        let numel: usize = shape.iter().product();
        let data = (0..numel).map(|_| rng.gen_range(lo..hi)).collect();
        Tensor::from_vec(shape, data).expect("consistent by construction")
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// The sole element of a rank-0 or one-element tensor.
    pub fn item(&self) -> Result<f64> {
        if self.data.len() != 1 {
            return Err(Error::contract(format!(
                "item() on tensor of {} elements",
                self.data.len()
            )));
        }
        Ok(self.data[0])
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    /// Toggles gradient tracking; enabling allocates a zeroed buffer.
    pub fn set_requires_grad(&mut self, on: bool) {
        self.requires_grad = on;
        self.grad = if on { Some(vec![0.0; self.data.len()]) } else { None };
    }

    pub fn with_grad(mut self) -> Self {
        self.set_requires_grad(true);
        self
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn grad_mut(&mut self) -> Option<&mut [f64]> {
        self.grad.as_deref_mut()
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = &mut self.grad {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// Accumulates `delta` into the gradient buffer.
    pub fn add_grad(&mut self, delta: &[f64]) -> Result<()> {
        let g = self
            .grad
            .as_deref_mut()
            .ok_or_else(|| Error::contract("add_grad on tensor without grad buffer"))?;
        if g.len() != delta.len() {
            return Err(Error::shape("gradient length mismatch"));
        }
        for (gi, di) in g.iter_mut().zip(delta) {
            *gi += di;
        }
        Ok(())
    }

    /// Row-major offset of a multi-index.
    pub fn offset(&self, idx: &[usize]) -> Result<usize> {
        if idx.len() != self.shape.len() {
            return Err(Error::index(format!(
                "rank {} index for rank {} tensor",
                idx.len(),
                self.shape.len()
            )));
        }
        let mut off = 0;
        for (&i, &e) in idx.iter().zip(&self.shape) {
            if i >= e {
                return Err(Error::index(format!("index {idx:?} out of shape {:?}", self.shape)));
            }
            off = off * e + i;
        }
        Ok(off)
    }

    pub fn at(&self, idx: &[usize]) -> Result<f64> {
        Ok(self.data[self.offset(idx)?])
    }

    pub fn set(&mut self, idx: &[usize], value: f64) -> Result<()> {
        let off = self.offset(idx)?;
        self.data[off] = value;
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Reinterprets the same data under a new shape of equal volume.
    pub fn reshaped(&self, shape: &[usize]) -> Result<Tensor> {
        Tensor::from_vec(shape, self.data.clone())
    }

    // ── Serialization ────────────────────────────────────────────────────
    //
    // Flat binary record: magic "GNAT", version u32, rank u32, one u64 per
    // extent, then the row-major payload as little-endian f64.

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.shape.len() as u32).to_le_bytes())?;
        for &e in &self.shape {
            w.write_all(&(e as u64).to_le_bytes())?;
        }
        for &v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Tensor> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::validation(format!("bad tensor magic {magic:?}")));
        }
        let version = read_u32(r)?;
        if version != VERSION {
            return Err(Error::validation(format!("unsupported tensor version {version}")));
        }
        let rank = read_u32(r)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_u64(r)? as usize);
        }
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        let mut buf = [0u8; 8];
        for _ in 0..numel {
            r.read_exact(&mut buf)?;
            data.push(f64::from_le_bytes(buf));
        }
        Tensor::from_vec(&shape, data)
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

/// Extents of a rank-3 tensor.
pub fn dims3(t: &Tensor) -> Result<(usize, usize, usize)> {
    match t.shape() {
        [a, b, c] => Ok((*a, *b, *c)),
        s => Err(Error::shape(format!("expected rank 3, got {s:?}"))),
    }
}

/// Extents of a rank-2 tensor.
pub fn dims2(t: &Tensor) -> Result<(usize, usize)> {
    match t.shape() {
        [a, b] => Ok((*a, *b)),
        s => Err(Error::shape(format!("expected rank 2, got {s:?}"))),
    }
}

/// Extents of a rank-4 tensor.
pub fn dims4(t: &Tensor) -> Result<(usize, usize, usize, usize)> {
    match t.shape() {
        [a, b, c, d] => Ok((*a, *b, *c, *d)),
        s => Err(Error::shape(format!("expected rank 4, got {s:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn from_vec_validates_volume() {
        assert!(Tensor::from_vec(&[2, 3], vec![0.0; 6]).is_ok());
        assert!(matches!(Tensor::from_vec(&[2, 3], vec![0.0; 5]), Err(Error::Shape(_))));
        assert!(matches!(Tensor::from_vec(&[0], vec![]), Err(Error::Shape(_))));
    }

    #[test]
    fn scalar_is_rank_zero() {
        let s = Tensor::scalar(2.5);
        assert_eq!(s.rank(), 0);
        assert_eq!(s.numel(), 1);
        assert_eq!(s.item().unwrap(), 2.5);
    }

    #[test]
    fn grad_buffer_tracks_requires_grad() {
        let mut t = Tensor::zeros(&[2, 2]);
        assert!(t.grad().is_none());
        t.set_requires_grad(true);
        assert_eq!(t.grad().unwrap(), &[0.0; 4]);
        t.add_grad(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        t.add_grad(&[1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(t.grad().unwrap(), &[2.0, 2.0, 3.0, 4.0]);
        t.set_requires_grad(false);
        assert!(t.grad().is_none());
    }

    #[test]
    fn offset_is_row_major() {
        let t = Tensor::from_vec(&[2, 3, 4], (0..24).map(f64::from).collect()).unwrap();
        assert_eq!(t.at(&[0, 0, 0]).unwrap(), 0.0);
        assert_eq!(t.at(&[1, 2, 3]).unwrap(), 23.0);
        assert_eq!(t.at(&[1, 0, 2]).unwrap(), 14.0);
        assert!(t.at(&[2, 0, 0]).is_err());
        assert!(t.at(&[0, 0]).is_err());
    }

    #[test]
    fn serialization_round_trip() {
        let mut rng = rng_from_seed(11);
        for shape in [vec![], vec![5], vec![3, 4], vec![2, 3, 4]] {
            let t = Tensor::rand_uniform(&shape, -2.0, 2.0, &mut rng);
            let mut buf = Vec::new();
            t.write_to(&mut buf).unwrap();
            let back = Tensor::read_from(&mut buf.as_slice()).unwrap();
            assert_eq!(t.shape(), back.shape());
            assert_eq!(t.data(), back.data());
        }
    }

    #[test]
    fn serialization_layout_is_frozen() {
        // Byte-level golden record: shape [1,2], payload [1.0, -2.0].
        let t = Tensor::from_vec(&[1, 2], vec![1.0, -2.0]).unwrap();
        let mut buf = Vec::new();
        t.write_to(&mut buf).unwrap();
        let mut expect = Vec::new();
        expect.extend_from_slice(b"GNAT");
        expect.extend_from_slice(&1u32.to_le_bytes());
        expect.extend_from_slice(&2u32.to_le_bytes());
        expect.extend_from_slice(&1u64.to_le_bytes());
        expect.extend_from_slice(&2u64.to_le_bytes());
        expect.extend_from_slice(&1.0f64.to_le_bytes());
        expect.extend_from_slice(&(-2.0f64).to_le_bytes());
        assert_eq!(buf, expect);
    }

    #[test]
    fn bad_magic_is_rejected() {
        let buf = b"NOPE\x01\x00\x00\x00\x00\x00\x00\x00".to_vec();
        assert!(matches!(Tensor::read_from(&mut buf.as_slice()), Err(Error::Validation(_))));
    }

    #[test]
    fn truncated_record_is_io_error() {
        let t = Tensor::from_vec(&[4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let mut buf = Vec::new();
        t.write_to(&mut buf).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(matches!(Tensor::read_from(&mut buf.as_slice()), Err(Error::Io(_))));
    }
}
