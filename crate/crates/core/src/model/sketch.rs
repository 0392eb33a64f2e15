use candle_core::{DType, Tensor};

use crate::error::{shape_err, Error, Result};
use crate::imaging::Plane;

/// `[lines; edges; min(1, lines + edges)]` stacked along channels, `(n, 3, h, w)`.
pub fn compose_sketch_tensor(o_l: &Tensor, o_e: &Tensor) -> Result<Tensor> {
    if o_l.dims() != o_e.dims() || o_l.rank() != 4 || o_l.dim(1)? != 1 {
        return Err(shape_err(
            "two (n, 1, h, w) maps",
            format!("{:?} and {:?}", o_l.dims(), o_e.dims()),
        ));
    }
    for t in [o_l, o_e] {
        let lo = t.min_all()?.to_dtype(DType::F64)?.to_scalar::<f64>()?;
        let hi = t.max_all()?.to_dtype(DType::F64)?.to_scalar::<f64>()?;
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) {
            return Err(Error::InvalidInput(format!(
                "sketch inputs must lie in [0, 1], got [{lo}, {hi}]"
            )));
        }
    }
    let sum = (o_l + o_e)?.minimum(1.0)?;
    Ok(Tensor::cat(&[o_l, o_e, &sum], 1)?)
}

/// One sample of a sketch tensor as host planes.
#[derive(Clone, Debug, PartialEq)]
pub struct SketchTensor {
    pub lines: Plane,
    pub edges: Plane,
    pub combined: Plane,
}

impl SketchTensor {
    pub fn from_tensor(s: &Tensor, sample: usize) -> Result<Self> {
        let (_, c, h, w) = s.dims4()?;
        if c != 3 {
            return Err(shape_err("3 channels", c));
        }
        let s = s.get(sample)?.to_dtype(DType::F32)?;
        let plane = |i: usize| -> Result<Plane> {
            Plane::from_vec(h, w, s.get(i)?.flatten_all()?.to_vec1()?)
        };
        Ok(Self {
            lines: plane(0)?,
            edges: plane(1)?,
            combined: plane(2)?,
        })
    }

    /// Checks the channel-2 identity bit for bit.
    pub fn identity_holds(&self) -> bool {
        self.lines
            .data()
            .iter()
            .zip(self.edges.data())
            .zip(self.combined.data())
            .all(|((&l, &e), &c)| c == (l + e).min(1.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::Device;

    #[test]
    fn clip_at_one() {
        let l = Tensor::new(&[[[[0.7f32, 0.0]]]], &Device::Cpu).unwrap();
        let e = Tensor::new(&[[[[0.6f32, 0.0]]]], &Device::Cpu).unwrap();
        let s = compose_sketch_tensor(&l, &e).unwrap();
        let v: Vec<f32> = s.flatten_all().unwrap().to_vec1().unwrap();
        assert_eq!(v, vec![0.7, 0.0, 0.6, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn rejects_out_of_range() {
        let l = Tensor::new(&[[[[1.5f32]]]], &Device::Cpu).unwrap();
        let e = Tensor::new(&[[[[0.0f32]]]], &Device::Cpu).unwrap();
        assert!(compose_sketch_tensor(&l, &e).is_err());
    }
}
