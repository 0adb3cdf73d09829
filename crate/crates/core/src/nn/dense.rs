use rayon::prelude::*;

use super::{Float, Tensor};
use crate::error::{Error, Result};

/// `y = x . w + b` with `x: [n, in]`, `w: [in, out]`, `b: [out]`.
pub fn dense_forward<T: Float>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, fan_in, fan_out) = check(x, w)?;
    if b.shape() != [fan_out] {
        return Err(Error::Dimension(format!("dense bias {:?} does not match width {fan_out}", b.shape())));
    }
    let (xd, wd, bd) = (x.data(), w.data(), b.data());
    let mut y = vec![T::zero(); n * fan_out];
    y.par_chunks_mut(fan_out.max(1)).enumerate().for_each(|(i, row)| {
        row.copy_from_slice(bd);
        for (k, &xv) in xd[i * fan_in..(i + 1) * fan_in].iter().enumerate() {
            if xv == T::zero() {
                continue;
            }
            for (o, &wv) in row.iter_mut().zip(&wd[k * fan_out..(k + 1) * fan_out]) {
                *o = *o + xv * wv;
            }
        }
    });
    Tensor::new(vec![n, fan_out], y)
}

pub struct DenseGrads<T> {
    pub dx: Option<Tensor<T>>,
    pub dw: Tensor<T>,
    pub db: Tensor<T>,
}

/// Gradients of a dense layer; every reduction over the batch runs in
/// ascending sample order.
pub fn dense_backward<T: Float>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    dy: &Tensor<T>,
    need_dx: bool,
) -> Result<DenseGrads<T>> {
    let (n, fan_in, fan_out) = check(x, w)?;
    if dy.shape() != [n, fan_out] {
        return Err(Error::Dimension(format!("dense upstream gradient {:?} != [{n}, {fan_out}]", dy.shape())));
    }
    let (xd, wd, dyd) = (x.data(), w.data(), dy.data());

    let mut dw = vec![T::zero(); fan_in * fan_out];
    dw.par_chunks_mut(fan_out.max(1)).enumerate().for_each(|(k, row)| {
        for i in 0..n {
            let xv = xd[i * fan_in + k];
            if xv == T::zero() {
                continue;
            }
            for (g, &d) in row.iter_mut().zip(&dyd[i * fan_out..(i + 1) * fan_out]) {
                *g = *g + xv * d;
            }
        }
    });

    let mut db = vec![T::zero(); fan_out];
    for i in 0..n {
        for (g, &d) in db.iter_mut().zip(&dyd[i * fan_out..(i + 1) * fan_out]) {
            *g = *g + d;
        }
    }

    let dx = if need_dx {
        let mut dx = vec![T::zero(); n * fan_in];
        dx.par_chunks_mut(fan_in.max(1)).enumerate().for_each(|(i, row)| {
            let dy_row = &dyd[i * fan_out..(i + 1) * fan_out];
            for (k, g) in row.iter_mut().enumerate() {
                let w_row = &wd[k * fan_out..(k + 1) * fan_out];
                *g = dy_row.iter().zip(w_row).fold(T::zero(), |acc, (&a, &b)| acc + a * b);
            }
        });
        Some(Tensor::new(vec![n, fan_in], dx)?)
    } else {
        None
    };

    Ok(DenseGrads {
        dx,
        dw: Tensor::new(vec![fan_in, fan_out], dw)?,
        db: Tensor::new(vec![fan_out], db)?,
    })
}

fn check<T: Float>(x: &Tensor<T>, w: &Tensor<T>) -> Result<(usize, usize, usize)> {
    let (xs, ws) = (x.shape(), w.shape());
    if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[0] {
        return Err(Error::Dimension(format!("dense input {xs:?} incompatible with weight {ws:?}")));
    }
    Ok((xs[0], ws[0], ws[1]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_weight() {
        let x = Tensor::<f64>::from_f64(&[2, 3], &[1.0, -2.0, 3.0, 0.5, 0.0, 4.0]).unwrap();
        let mut eye = vec![0.0; 9];
        for i in 0..3 {
            eye[i * 3 + i] = 1.0;
        }
        let w = Tensor::from_f64(&[3, 3], &eye).unwrap();
        let y = dense_forward(&x, &w, &Tensor::zeros(&[3])).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn hand_sum() {
        let x = Tensor::<f64>::from_f64(&[1, 2], &[1.0, 2.0]).unwrap();
        let w = Tensor::from_f64(&[2, 2], &[1.0, 0.0, 0.0, 1.0]).unwrap();
        let b = Tensor::from_f64(&[2], &[3.0, -3.0]).unwrap();
        assert_eq!(dense_forward(&x, &w, &b).unwrap().data(), &[4.0, -1.0]);
    }

    #[test]
    fn shape_mismatch() {
        let x = Tensor::<f32>::zeros(&[1, 3]);
        let w = Tensor::zeros(&[2, 2]);
        assert!(matches!(dense_forward(&x, &w, &Tensor::zeros(&[2])), Err(Error::Dimension(_))));
    }
}
