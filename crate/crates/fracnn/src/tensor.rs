//! Dense row-major tensor of `f64` with the small set of operations the
//! rest of the crate builds on. Supported ranks are 1 (vectors), 2
//! (matrices) and 4 (batched image blocks laid out sample x height x
//! width x channel).

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

fn product(shape: &[usize]) -> usize {
    shape.iter().product()
}

fn check_rank(shape: &[usize]) -> Result<()> {
    if !matches!(shape.len(), 1 | 2 | 4) {
        return Err(Error::InvalidShape {
            shape: shape.to_vec(),
            reason: "rank must be 1, 2 or 4".into(),
        });
    }
    if shape.iter().any(|&d| d == 0) {
        return Err(Error::InvalidShape {
            shape: shape.to_vec(),
            reason: "dimensions must be positive".into(),
        });
    }
    Ok(())
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        check_rank(&shape)?;
        if product(&shape) != data.len() {
            return Err(Error::InvalidShape {
                shape,
                reason: format!("shape product does not match data length {}", data.len()),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        check_rank(&shape)?;
        let n = product(&shape);
        Ok(Self {
            shape,
            data: vec![0.0; n],
        })
    }

    pub fn ones(shape: Vec<usize>) -> Result<Self> {
        Self::filled(shape, 1.0)
    }

    pub fn filled(shape: Vec<usize>, value: f64) -> Result<Self> {
        check_rank(&shape)?;
        let n = product(&shape);
        Ok(Self {
            shape,
            data: vec![value; n],
        })
    }

    /// Rank-1 tensor from a vector of values.
    pub fn from_vec(data: Vec<f64>) -> Result<Self> {
        Self::new(vec![data.len()], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Reinterprets the flat row-major data under a new shape.
    pub fn reshape(&self, shape: Vec<usize>) -> Result<Self> {
        check_rank(&shape)?;
        if product(&shape) != self.data.len() {
            return Err(Error::InvalidShape {
                shape,
                reason: format!("cannot reshape {} elements", self.data.len()),
            });
        }
        Ok(Self {
            shape,
            data: self.data.clone(),
        })
    }

    /// Element-wise product. `rhs` must either match the shape exactly or
    /// have a shape that is a trailing suffix of `self`'s shape (the
    /// limited broadcast used for bias-style operands and scalars).
    pub fn hadamard(&self, rhs: &Tensor) -> Result<Self> {
        if self.shape == rhs.shape {
            let data = self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a * b)
                .collect();
            return Ok(Self {
                shape: self.shape.clone(),
                data,
            });
        }
        let suffix_match = rhs.shape.len() < self.shape.len()
            && self.shape[self.shape.len() - rhs.shape.len()..] == *rhs.shape;
        if !suffix_match {
            return Err(Error::ShapeMismatch {
                op: "hadamard",
                left: self.shape.clone(),
                right: rhs.shape.clone(),
            });
        }
        // Row-major layout makes a trailing-suffix broadcast a plain modulo.
        let n = rhs.data.len();
        let data = self
            .data
            .iter()
            .enumerate()
            .map(|(i, a)| a * rhs.data[i % n])
            .collect();
        Ok(Self {
            shape: self.shape.clone(),
            data,
        })
    }

    /// Standard matrix product of two rank-2 tensors.
    pub fn matmul(&self, rhs: &Tensor) -> Result<Self> {
        let (m, k) = self.dims2("matmul")?;
        let (k2, n) = rhs.dims2("matmul")?;
        if k != k2 {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                left: self.shape.clone(),
                right: rhs.shape.clone(),
            });
        }
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let arow = &self.data[i * k..(i + 1) * k];
            let crow = &mut out[i * n..(i + 1) * n];
            for (kk, &aik) in arow.iter().enumerate() {
                let brow = &rhs.data[kk * n..(kk + 1) * n];
                for (c, &b) in crow.iter_mut().zip(brow) {
                    *c += aik * b;
                }
            }
        }
        Ok(Self {
            shape: vec![m, n],
            data: out,
        })
    }

    /// `self^T * rhs` without materializing the transpose.
    pub fn matmul_transpose_left(&self, rhs: &Tensor) -> Result<Self> {
        let (q, m) = self.dims2("matmul_transpose_left")?;
        let (q2, n) = rhs.dims2("matmul_transpose_left")?;
        if q != q2 {
            return Err(Error::ShapeMismatch {
                op: "matmul_transpose_left",
                left: self.shape.clone(),
                right: rhs.shape.clone(),
            });
        }
        let mut out = vec![0.0; m * n];
        for i in 0..q {
            let arow = &self.data[i * m..(i + 1) * m];
            let brow = &rhs.data[i * n..(i + 1) * n];
            for (p, &a) in arow.iter().enumerate() {
                let crow = &mut out[p * n..(p + 1) * n];
                for (c, &b) in crow.iter_mut().zip(brow) {
                    *c += a * b;
                }
            }
        }
        Ok(Self {
            shape: vec![m, n],
            data: out,
        })
    }

    /// `self * rhs^T` without materializing the transpose.
    pub fn matmul_transpose_right(&self, rhs: &Tensor) -> Result<Self> {
        let (m, k) = self.dims2("matmul_transpose_right")?;
        let (n, k2) = rhs.dims2("matmul_transpose_right")?;
        if k != k2 {
            return Err(Error::ShapeMismatch {
                op: "matmul_transpose_right",
                left: self.shape.clone(),
                right: rhs.shape.clone(),
            });
        }
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let arow = &self.data[i * k..(i + 1) * k];
            for j in 0..n {
                let brow = &rhs.data[j * k..(j + 1) * k];
                out[i * n + j] = arow.iter().zip(brow).map(|(a, b)| a * b).sum();
            }
        }
        Ok(Self {
            shape: vec![m, n],
            data: out,
        })
    }

    /// Transpose of a rank-2 tensor.
    pub fn transpose2(&self) -> Result<Self> {
        let (m, n) = self.dims2("transpose2")?;
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = self.data[i * n + j];
            }
        }
        Ok(Self {
            shape: vec![n, m],
            data: out,
        })
    }

    /// Element-wise `(|x| + offset)^exponent`. A zero element combined
    /// with a negative exponent and zero offset is rejected instead of
    /// silently producing infinity.
    pub fn abs_pow_offset(&self, exponent: f64, offset: f64) -> Result<Self> {
        if offset < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "abs_pow_offset offset must be nonnegative, got {offset}"
            )));
        }
        if exponent == 0.0 {
            return Tensor::ones(self.shape.clone());
        }
        let mut data = Vec::with_capacity(self.data.len());
        for &x in &self.data {
            let base = x.abs() + offset;
            if base == 0.0 && exponent < 0.0 {
                return Err(Error::SingularPower { exponent });
            }
            data.push(base.powf(exponent));
        }
        Ok(Self {
            shape: self.shape.clone(),
            data,
        })
    }

    /// Sums over the given axes; reduced axes are removed from the shape.
    /// Reducing every axis yields a rank-1 tensor of length 1.
    pub fn reduce_sum(&self, axes: &[usize]) -> Result<Self> {
        let rank = self.rank();
        let mut reduce = vec![false; rank];
        for &axis in axes {
            if axis >= rank {
                return Err(Error::InvalidAxis { axis, rank });
            }
            reduce[axis] = true;
        }
        if axes.is_empty() {
            return Ok(self.clone());
        }
        let out_shape: Vec<usize> = self
            .shape
            .iter()
            .zip(&reduce)
            .filter(|(_, &r)| !r)
            .map(|(&d, _)| d)
            .collect();
        let out_shape = if out_shape.is_empty() {
            vec![1]
        } else {
            out_shape
        };

        // Strides of the kept axes inside the output tensor.
        let mut out_strides = vec![0usize; rank];
        let mut acc = 1;
        for axis in (0..rank).rev() {
            if !reduce[axis] {
                out_strides[axis] = acc;
                acc *= self.shape[axis];
            }
        }

        let mut out = vec![0.0; product(&out_shape)];
        let mut index = vec![0usize; rank];
        for &v in &self.data {
            let mut o = 0;
            for axis in 0..rank {
                o += index[axis] * out_strides[axis];
            }
            out[o] += v;
            // row-major index increment
            for axis in (0..rank).rev() {
                index[axis] += 1;
                if index[axis] < self.shape[axis] {
                    break;
                }
                index[axis] = 0;
            }
        }
        Tensor::new(out_shape, out)
    }

    pub fn add(&self, rhs: &Tensor) -> Result<Self> {
        self.zip_with(rhs, "add", |a, b| a + b)
    }

    pub fn sub(&self, rhs: &Tensor) -> Result<Self> {
        self.zip_with(rhs, "sub", |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|x| x * s).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn iter_sum(&self) -> f64 {
        self.data.iter().sum()
    }

    fn zip_with(&self, rhs: &Tensor, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.shape != rhs.shape {
            return Err(Error::ShapeMismatch {
                op,
                left: self.shape.clone(),
                right: rhs.shape.clone(),
            });
        }
        let data = self
            .data
            .iter()
            .zip(&rhs.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Self {
            shape: self.shape.clone(),
            data,
        })
    }

    pub(crate) fn dims2(&self, op: &'static str) -> Result<(usize, usize)> {
        if self.rank() != 2 {
            return Err(Error::ShapeMismatch {
                op,
                left: self.shape.clone(),
                right: vec![],
            });
        }
        Ok((self.shape[0], self.shape[1]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t1(data: &[f64]) -> Tensor {
        Tensor::from_vec(data.to_vec()).unwrap()
    }

    fn t2(rows: usize, cols: usize, data: &[f64]) -> Tensor {
        Tensor::new(vec![rows, cols], data.to_vec()).unwrap()
    }

    #[test]
    fn hadamard_hand_example() {
        let a = t1(&[1.0, 2.0, 3.0]);
        let b = t1(&[4.0, 5.0, 6.0]);
        assert_eq!(a.hadamard(&b).unwrap().data(), &[4.0, 10.0, 18.0]);
    }

    #[test]
    fn hadamard_identity_and_annihilator() {
        let a = t2(2, 3, &[1.0, -2.0, 3.0, 4.0, 5.5, -0.5]);
        let ones = Tensor::ones(vec![2, 3]).unwrap();
        let zeros = Tensor::zeros(vec![2, 3]).unwrap();
        assert_eq!(a.hadamard(&ones).unwrap(), a);
        assert_eq!(a.hadamard(&zeros).unwrap(), zeros);
    }

    #[test]
    fn hadamard_trailing_broadcast() {
        let a = t2(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = t1(&[10.0, 100.0, 1000.0]);
        let got = a.hadamard(&b).unwrap();
        assert_eq!(got.data(), &[10.0, 200.0, 3000.0, 40.0, 500.0, 6000.0]);
    }

    #[test]
    fn hadamard_shape_mismatch_names_both_shapes() {
        let a = t2(2, 2, &[1.0; 4]);
        let b = t1(&[1.0; 3]);
        match a.hadamard(&b) {
            Err(Error::ShapeMismatch { left, right, .. }) => {
                assert_eq!(left, vec![2, 2]);
                assert_eq!(right, vec![3]);
            }
            other => panic!("expected shape mismatch, got {other:?}"),
        }
    }

    #[test]
    fn matmul_hand_example() {
        let a = t2(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let b = t2(2, 1, &[1.0, 1.0]);
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.shape(), &[2, 1]);
        assert_eq!(c.data(), &[3.0, 7.0]);
    }

    #[test]
    fn matmul_identity_and_dot() {
        let eye = t2(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let m = t2(2, 2, &[5.0, -1.0, 2.0, 0.5]);
        assert_eq!(eye.matmul(&m).unwrap(), m);

        let row = t2(1, 3, &[1.0, 2.0, 3.0]);
        let col = t2(3, 1, &[4.0, 5.0, 6.0]);
        assert_eq!(row.matmul(&col).unwrap().data(), &[32.0]);
    }

    #[test]
    fn matmul_dimension_mismatch() {
        let a = t2(2, 3, &[0.0; 6]);
        let b = t2(2, 2, &[0.0; 4]);
        assert!(matches!(a.matmul(&b), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn abs_pow_offset_examples() {
        let t = t1(&[0.04]);
        let r = t.abs_pow_offset(0.5, 0.0).unwrap();
        assert!((r.data()[0] - 0.2).abs() < 1e-15);

        let t = t1(&[3.0, -2.0, 0.0]);
        let r = t.abs_pow_offset(0.0, 0.0).unwrap();
        assert_eq!(r.data(), &[1.0, 1.0, 1.0]);

        let t = t1(&[0.0]);
        let r = t.abs_pow_offset(-0.5, 1e-8).unwrap();
        assert!((r.data()[0] - 1e4).abs() / 1e4 < 1e-12);
    }

    #[test]
    fn abs_pow_offset_rejects_zero_to_negative() {
        let t = t1(&[1.0, 0.0]);
        assert!(matches!(
            t.abs_pow_offset(-0.5, 0.0),
            Err(Error::SingularPower { .. })
        ));
    }

    #[test]
    fn reduce_sum_examples() {
        let m = t2(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let cols = m.reduce_sum(&[1]).unwrap();
        assert_eq!(cols.shape(), &[2]);
        assert_eq!(cols.data(), &[3.0, 7.0]);

        assert_eq!(m.reduce_sum(&[]).unwrap(), m);

        let z = Tensor::zeros(vec![3, 2]).unwrap();
        assert_eq!(z.reduce_sum(&[0, 1]).unwrap().data(), &[0.0]);
    }

    #[test]
    fn reduce_sum_rank4_spatial() {
        // sum over sample/height/width leaves per-channel totals
        let t = Tensor::new(
            vec![1, 2, 2, 2],
            vec![1.0, 10.0, 2.0, 20.0, 3.0, 30.0, 4.0, 40.0],
        )
        .unwrap();
        let per_channel = t.reduce_sum(&[0, 1, 2]).unwrap();
        assert_eq!(per_channel.shape(), &[2]);
        assert_eq!(per_channel.data(), &[10.0, 100.0]);
    }

    #[test]
    fn reduce_sum_invalid_axis() {
        let m = t2(2, 2, &[0.0; 4]);
        assert!(matches!(
            m.reduce_sum(&[2]),
            Err(Error::InvalidAxis { axis: 2, rank: 2 })
        ));
    }

    #[test]
    fn rank_and_shape_validation() {
        assert!(Tensor::zeros(vec![2, 2, 2]).is_err());
        assert!(Tensor::zeros(vec![0]).is_err());
        assert!(Tensor::new(vec![2, 2], vec![1.0; 3]).is_err());
    }

    #[test]
    fn transpose_round_trip() {
        let m = t2(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let mt = m.transpose2().unwrap();
        assert_eq!(mt.shape(), &[3, 2]);
        assert_eq!(mt.transpose2().unwrap(), m);
    }

    fn naive_matmul(a: &Tensor, b: &Tensor) -> Tensor {
        let (m, k) = (a.shape()[0], a.shape()[1]);
        let n = b.shape()[1];
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                let mut s = 0.0;
                for kk in 0..k {
                    s += a.data()[i * k + kk] * b.data()[kk * n + j];
                }
                out[i * n + j] = s;
            }
        }
        Tensor::new(vec![m, n], out).unwrap()
    }

    proptest! {
        #[test]
        fn matmul_matches_naive_reference(
            a in proptest::collection::vec(-10.0f64..10.0, 25),
            b in proptest::collection::vec(-10.0f64..10.0, 25),
        ) {
            let a = t2(5, 5, &a);
            let b = t2(5, 5, &b);
            let fast = a.matmul(&b).unwrap();
            let slow = naive_matmul(&a, &b);
            for (x, y) in fast.data().iter().zip(slow.data()) {
                let denom = x.abs().max(y.abs()).max(1.0);
                prop_assert!((x - y).abs() / denom < 1e-12);
            }
        }

        #[test]
        fn transposed_variants_match_explicit_transpose(
            a in proptest::collection::vec(-10.0f64..10.0, 20),
            b in proptest::collection::vec(-10.0f64..10.0, 20),
        ) {
            let a45 = t2(4, 5, &a);
            let b45 = t2(4, 5, &b);
            let at_b = a45.matmul_transpose_left(&b45).unwrap();
            let reference = a45.transpose2().unwrap().matmul(&b45).unwrap();
            for (x, y) in at_b.data().iter().zip(reference.data()) {
                prop_assert!((x - y).abs() < 1e-12 * x.abs().max(y.abs()).max(1.0));
            }

            let a_bt = a45.matmul_transpose_right(&b45).unwrap();
            let reference = a45.matmul(&b45.transpose2().unwrap()).unwrap();
            for (x, y) in a_bt.data().iter().zip(reference.data()) {
                prop_assert!((x - y).abs() < 1e-12 * x.abs().max(y.abs()).max(1.0));
            }
        }

        #[test]
        fn hadamard_matches_naive_reference(
            a in proptest::collection::vec(-10.0f64..10.0, 25),
            b in proptest::collection::vec(-10.0f64..10.0, 25),
        ) {
            let ta = t2(5, 5, &a);
            let tb = t2(5, 5, &b);
            let got = ta.hadamard(&tb).unwrap();
            for i in 0..25 {
                prop_assert_eq!(got.data()[i], a[i] * b[i]);
            }
        }

        #[test]
        fn abs_pow_offset_strictly_positive(
            vals in proptest::collection::vec(-5.0f64..5.0, 8),
            alpha in 0.01f64..1.99,
        ) {
            let t = t1(&vals);
            let r = t.abs_pow_offset(1.0 - alpha, 1e-8).unwrap();
            prop_assert!(r.data().iter().all(|&x| x > 0.0));
        }

        #[test]
        fn reshape_round_trips(vals in proptest::collection::vec(-1e6f64..1e6, 24)) {
            let t = Tensor::new(vec![2, 3, 2, 2], vals).unwrap();
            let flat = t.reshape(vec![24]).unwrap();
            let back = flat.reshape(vec![2, 3, 2, 2]).unwrap();
            prop_assert_eq!(back, t);
        }
    }
}
