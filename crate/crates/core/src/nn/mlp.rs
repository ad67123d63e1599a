use crate::error::{Error, Result};
use crate::matrix::Matrix;

use super::{relu, relu_grad};

/// Two-layer feature homogenizer: each layer is affine → ReLU → dropout.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    /// hidden × input
    pub w1: Matrix,
    /// 1 × hidden
    pub b1: Matrix,
    /// embed × hidden
    pub w2: Matrix,
    /// 1 × embed
    pub b2: Matrix,
}

#[derive(Clone, Debug)]
pub struct MlpCache {
    input: Matrix,
    pre1: Matrix,
    /// post-activation, post-dropout output of layer 1
    act1: Matrix,
    pre2: Matrix,
    masks: Option<[Matrix; 2]>,
}

fn affine(x: &Matrix, w: &Matrix, b: &Matrix) -> Matrix {
    let mut z = x.matmul_t(w);
    for i in 0..z.rows() {
        for (v, bias) in z.row_mut(i).iter_mut().zip(b.as_slice()) {
            *v += bias;
        }
    }
    z
}

fn activate(pre: &Matrix, mask: Option<&Matrix>) -> Matrix {
    let mut out = pre.clone();
    out.as_mut_slice().iter_mut().for_each(|v| *v = relu(*v));
    if let Some(m) = mask {
        for (v, k) in out.as_mut_slice().iter_mut().zip(m.as_slice()) {
            *v *= k;
        }
    }
    out
}

/// d(pre) from d(output) through dropout and ReLU.
fn activate_backward(d_out: &Matrix, pre: &Matrix, mask: Option<&Matrix>) -> Matrix {
    let mut d = d_out.clone();
    for (i, (g, z)) in d.as_mut_slice().iter_mut().zip(pre.as_slice()).enumerate() {
        let keep = mask.map_or(1.0, |m| m.as_slice()[i]);
        *g *= keep * relu_grad(*z);
    }
    d
}

impl Mlp {
    pub fn zeros(input: usize, hidden: usize, embed: usize) -> Self {
        Self {
            w1: Matrix::zeros(hidden, input),
            b1: Matrix::zeros(1, hidden),
            w2: Matrix::zeros(embed, hidden),
            b2: Matrix::zeros(1, embed),
        }
    }

    pub fn forward(&self, x: &Matrix, masks: Option<&[Matrix; 2]>) -> Result<Matrix> {
        Ok(self.forward_cached(x, masks)?.0)
    }

    pub fn forward_cached(&self, x: &Matrix, masks: Option<&[Matrix; 2]>) -> Result<(Matrix, MlpCache)> {
        if x.cols() != self.w1.cols() {
            return Err(Error::Shape(format!(
                "MLP expects {} input features, got {}",
                self.w1.cols(),
                x.cols()
            )));
        }
        if !x.is_finite() {
            return Err(Error::NonFinite("MLP input".into()));
        }
        if let Some([m1, m2]) = masks {
            if m1.shape() != (x.rows(), self.w1.rows()) || m2.shape() != (x.rows(), self.w2.rows()) {
                return Err(Error::Shape("MLP dropout mask shape".into()));
            }
        }
        let pre1 = affine(x, &self.w1, &self.b1);
        let act1 = activate(&pre1, masks.map(|m| &m[0]));
        let pre2 = affine(&act1, &self.w2, &self.b2);
        let out = activate(&pre2, masks.map(|m| &m[1]));
        let cache = MlpCache {
            input: x.clone(),
            pre1,
            act1,
            pre2,
            masks: masks.cloned(),
        };
        Ok((out, cache))
    }

    /// Accumulates parameter gradients into `grads`. The input gradient is
    /// not needed upstream (features are data) and is not computed.
    pub fn backward(&self, cache: &MlpCache, d_out: &Matrix, grads: &mut Mlp) {
        let masks = cache.masks.as_ref();
        let d_pre2 = activate_backward(d_out, &cache.pre2, masks.map(|m| &m[1]));
        grads.w2.add_scaled(&d_pre2.t_matmul(&cache.act1), 1.0);
        add_col_sums(&mut grads.b2, &d_pre2);
        let d_act1 = d_pre2.matmul(&self.w2);
        let d_pre1 = activate_backward(&d_act1, &cache.pre1, masks.map(|m| &m[0]));
        grads.w1.add_scaled(&d_pre1.t_matmul(&cache.input), 1.0);
        add_col_sums(&mut grads.b1, &d_pre1);
    }
}

fn add_col_sums(target: &mut Matrix, m: &Matrix) {
    for (t, s) in target.as_mut_slice().iter_mut().zip(m.col_sums()) {
        *t += s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::grad_check;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
        Matrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    fn random_mlp(rng: &mut ChaCha8Rng) -> Mlp {
        Mlp {
            w1: random(rng, 9, 7),
            b1: random(rng, 1, 9),
            w2: random(rng, 5, 9),
            b2: random(rng, 1, 5),
        }
    }

    /// Scalar-loop re-implementation of the two layers.
    fn oracle(p: &Mlp, x: &Matrix) -> Matrix {
        let layer = |input: &[f64], w: &Matrix, b: &Matrix| -> Vec<f64> {
            (0..w.rows())
                .map(|o| {
                    let mut acc = b[(0, o)];
                    for i in 0..input.len() {
                        acc += w[(o, i)] * input[i];
                    }
                    acc.max(0.0)
                })
                .collect()
        };
        let mut out = Matrix::zeros(x.rows(), p.w2.rows());
        for n in 0..x.rows() {
            let h = layer(x.row(n), &p.w1, &p.b1);
            out.row_mut(n).copy_from_slice(&layer(&h, &p.w2, &p.b2));
        }
        out
    }

    #[test]
    fn zero_params_give_zero_output() {
        let mlp = Mlp::zeros(7, 64, 64);
        let x = Matrix::filled(3, 7, 2.5);
        assert_eq!(mlp.forward(&x, None).unwrap(), Matrix::zeros(3, 64));
    }

    #[test]
    fn padded_identity_embeds_nonnegative_input() {
        let mut mlp = Mlp::zeros(7, 64, 64);
        for i in 0..7 {
            mlp.w1[(i, i)] = 1.0;
            mlp.w2[(i, i)] = 1.0;
        }
        let x = Matrix::from_rows(&[[1.0, 0.0, 2.0, 3.0, 0.5, 0.0, 4.0]]);
        let out = mlp.forward(&x, None).unwrap();
        assert_eq!(&out.row(0)[..7], x.row(0));
        assert!(out.row(0)[7..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matches_scalar_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let mlp = random_mlp(&mut rng);
            let x = random(&mut rng, 6, 7);
            let diff = mlp.forward(&x, None).unwrap().max_abs_diff(&oracle(&mlp, &x));
            assert!(diff < 1e-12, "{diff}");
        }
    }

    #[test]
    fn rejects_non_finite_and_bad_shape() {
        let mlp = Mlp::zeros(7, 4, 4);
        let mut x = Matrix::zeros(2, 7);
        x[(1, 3)] = f64::NAN;
        assert!(matches!(mlp.forward(&x, None), Err(Error::NonFinite(_))));
        assert!(matches!(mlp.forward(&Matrix::zeros(2, 6), None), Err(Error::Shape(_))));
    }

    #[test]
    fn dropout_scales_survivors() {
        let mut mlp = Mlp::zeros(7, 7, 7);
        for i in 0..7 {
            mlp.w1[(i, i)] = 1.0;
            mlp.w2[(i, i)] = 1.0;
        }
        let x = Matrix::filled(1, 7, 1.0);
        let m1 = Matrix::from_rows(&[[2.0, 0.0, 2.0, 2.0, 2.0, 2.0, 2.0]]);
        let m2 = Matrix::from_rows(&[[2.0, 2.0, 0.0, 2.0, 2.0, 2.0, 2.0]]);
        let out = mlp.forward(&x, Some(&[m1, m2])).unwrap();
        assert_eq!(out.row(0), &[4.0, 0.0, 0.0, 4.0, 4.0, 4.0, 4.0]);
    }

    fn flat(p: &Mlp) -> Vec<f64> {
        [&p.w1, &p.b1, &p.w2, &p.b2].iter().flat_map(|m| m.as_slice().to_vec()).collect()
    }

    fn set_flat(p: &mut Mlp, x: &[f64]) {
        let mut rest = x;
        for m in [&mut p.w1, &mut p.b1, &mut p.w2, &mut p.b2] {
            let (head, tail) = rest.split_at(m.len());
            m.as_mut_slice().copy_from_slice(head);
            rest = tail;
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mlp = random_mlp(&mut rng);
        let x = random(&mut rng, 4, 7);
        let w = random(&mut rng, 4, 5);
        let mask = |rng: &mut ChaCha8Rng, c| Matrix::from_fn(4, c, |_, _| if rng.random::<f64>() < 0.2 { 0.0 } else { 1.25 });
        let masks = [mask(&mut rng, 9), mask(&mut rng, 5)];

        let (_, cache) = mlp.forward_cached(&x, Some(&masks)).unwrap();
        let mut grads = Mlp::zeros(7, 9, 5);
        mlp.backward(&cache, &w, &mut grads);
        let mut probe = mlp.clone();
        let f = |p: &[f64]| {
            set_flat(&mut probe, p);
            let out = probe.forward(&x, Some(&masks)).unwrap();
            out.as_slice().iter().zip(w.as_slice()).map(|(a, b)| a * b).sum::<f64>()
        };
        let report = grad_check(f, &flat(&mlp), &flat(&grads), 1e-6).unwrap();
        assert!(report.max_rel_error < 1e-6, "{report:?}");
    }
}
