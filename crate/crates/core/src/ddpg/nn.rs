//! Dense layers with hand-written backpropagation. Batches are row-major
//! `batch × features` slices.

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Fully connected layer `y = W x + b`, with `W` stored row-major as
/// `n_out × n_in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub n_in: usize,
    pub n_out: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

/// C (m×n) = alpha · A (m×k) · B (k×n) + beta · C, all strides in elements.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: (&[f64], isize, isize),
    b: (&[f64], isize, isize),
    beta: f64,
    c: (&mut [f64], isize, isize),
) {
    if m == 0 || n == 0 {
        return;
    }
    // bounds of the largest addressed element in each operand
    let reach = |rows: usize, cols: usize, rs: isize, cs: isize| {
        (rows.saturating_sub(1)) as isize * rs + (cols.saturating_sub(1)) as isize * cs
    };
    assert!(k == 0 || (reach(m, k, a.1, a.2) as usize) < a.0.len());
    assert!(k == 0 || (reach(k, n, b.1, b.2) as usize) < b.0.len());
    assert!((reach(m, n, c.1, c.2) as usize) < c.0.len());
    // SAFETY: strides are non-negative and every addressed element was
    // bounds-checked above; A and B never alias C.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.0.as_ptr(),
            a.1,
            a.2,
            b.0.as_ptr(),
            b.1,
            b.2,
            beta,
            c.0.as_mut_ptr(),
            c.1,
            c.2,
        );
    }
}

impl Dense {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Dense {
            n_in,
            n_out,
            weight: vec![0.0; n_in * n_out],
            bias: vec![0.0; n_out],
        }
    }

    pub fn uniform<R: Rng>(n_in: usize, n_out: usize, bound: f64, rng: &mut R) -> Self {
        let mut d = Self::zeros(n_in, n_out);
        for w in d.weight.iter_mut().chain(d.bias.iter_mut()) {
            *w = rng.gen_range(-bound..=bound);
        }
        d
    }

    /// Fan-in scaled uniform initialization, ±1/sqrt(n_in).
    pub fn fan_in<R: Rng>(n_in: usize, n_out: usize, rng: &mut R) -> Self {
        Self::uniform(n_in, n_out, 1.0 / (n_in as f64).sqrt(), rng)
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.n_in, self.n_out)
    }

    pub fn n_params(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn forward(&self, x: &[f64], batch: usize) -> Vec<f64> {
        debug_assert_eq!(x.len(), batch * self.n_in);
        let mut y = Vec::with_capacity(batch * self.n_out);
        for _ in 0..batch {
            y.extend_from_slice(&self.bias);
        }
        gemm(
            batch,
            self.n_in,
            self.n_out,
            1.0,
            (x, self.n_in as isize, 1),
            (&self.weight, 1, self.n_in as isize),
            1.0,
            (&mut y, self.n_out as isize, 1),
        );
        y
    }

    /// Accumulates parameter gradients into `grad` and returns the gradient
    /// with respect to the input when `want_input` is set.
    pub fn backward(
        &self,
        x: &[f64],
        dy: &[f64],
        batch: usize,
        grad: Option<&mut Dense>,
        want_input: bool,
    ) -> Option<Vec<f64>> {
        debug_assert_eq!(dy.len(), batch * self.n_out);
        if let Some(g) = grad {
            // dW += dY^T X
            gemm(
                self.n_out,
                batch,
                self.n_in,
                1.0,
                (dy, 1, self.n_out as isize),
                (x, self.n_in as isize, 1),
                1.0,
                (&mut g.weight, self.n_in as isize, 1),
            );
            for row in dy.chunks_exact(self.n_out) {
                for (gb, d) in g.bias.iter_mut().zip(row) {
                    *gb += d;
                }
            }
        }
        want_input.then(|| {
            let mut dx = vec![0.0; batch * self.n_in];
            gemm(
                batch,
                self.n_out,
                self.n_in,
                1.0,
                (dy, self.n_out as isize, 1),
                (&self.weight, self.n_in as isize, 1),
                0.0,
                (&mut dx, self.n_in as isize, 1),
            );
            dx
        })
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.weight.iter().chain(self.bias.iter())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weight.iter_mut().chain(self.bias.iter_mut())
    }
}

pub fn relu_inplace(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

/// Zeroes `grad` wherever the post-activation `out` was clipped.
pub fn relu_backward(out: &[f64], grad: &mut [f64]) {
    for (g, o) in grad.iter_mut().zip(out) {
        if *o <= 0.0 {
            *g = 0.0;
        }
    }
}

/// A set of dense layers that can be treated as one flat parameter vector.
pub trait Parameters {
    fn layers(&self) -> Vec<&Dense>;
    fn layers_mut(&mut self) -> Vec<&mut Dense>;

    fn n_params(&self) -> usize {
        self.layers().iter().map(|l| l.n_params()).sum()
    }

    fn flat(&self) -> Vec<f64> {
        self.layers().into_iter().flat_map(|l| l.params().copied()).collect()
    }

    fn set_flat(&mut self, values: &[f64]) {
        let mut it = values.iter();
        for l in self.layers_mut() {
            for p in l.params_mut() {
                *p = *it.next().expect("flat parameter vector too short");
            }
        }
        assert!(it.next().is_none(), "flat parameter vector too long");
    }

    fn all_finite(&self) -> bool {
        self.layers().iter().all(|l| l.params().all(|p| p.is_finite()))
    }

    fn fill_zero(&mut self) {
        for l in self.layers_mut() {
            l.params_mut().for_each(|p| *p = 0.0);
        }
    }
}

/// Elementwise `target ← tau · source + (1 - tau) · target`.
pub fn soft_update<P: Parameters>(target: &mut P, source: &P, tau: f64) {
    for (t, s) in target.layers_mut().into_iter().zip(source.layers()) {
        assert_eq!((t.n_in, t.n_out), (s.n_in, s.n_out), "layer shapes differ");
        for (tp, sp) in t.params_mut().zip(s.params()) {
            *tp = tau * sp + (1.0 - tau) * *tp;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn naive_forward(l: &Dense, x: &[f64]) -> Vec<f64> {
        (0..l.n_out)
            .map(|o| l.bias[o] + (0..l.n_in).map(|i| l.weight[o * l.n_in + i] * x[i]).sum::<f64>())
            .collect()
    }

    #[test]
    fn forward_matches_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let l = Dense::uniform(7, 5, 1.0, &mut rng);
        let x: Vec<f64> = (0..21).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y = l.forward(&x, 3);
        for b in 0..3 {
            let want = naive_forward(&l, &x[b * 7..(b + 1) * 7]);
            for o in 0..5 {
                assert!((y[b * 5 + o] - want[o]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn backward_matches_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let l = Dense::uniform(4, 3, 1.0, &mut rng);
        let x: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let dy: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut g = l.zeros_like();
        let dx = l.backward(&x, &dy, 2, Some(&mut g), true).unwrap();
        for o in 0..3 {
            for i in 0..4 {
                let want: f64 = (0..2).map(|b| dy[b * 3 + o] * x[b * 4 + i]).sum();
                assert!((g.weight[o * 4 + i] - want).abs() < 1e-12);
            }
            let want_b: f64 = (0..2).map(|b| dy[b * 3 + o]).sum();
            assert!((g.bias[o] - want_b).abs() < 1e-12);
        }
        for b in 0..2 {
            for i in 0..4 {
                let want: f64 = (0..3).map(|o| dy[b * 3 + o] * l.weight[o * 4 + i]).sum();
                assert!((dx[b * 4 + i] - want).abs() < 1e-12);
            }
        }
    }

    struct One(Dense);
    impl Parameters for One {
        fn layers(&self) -> Vec<&Dense> {
            vec![&self.0]
        }
        fn layers_mut(&mut self) -> Vec<&mut Dense> {
            vec![&mut self.0]
        }
    }

    #[test]
    fn soft_update_cases() {
        let src = One(Dense {
            n_in: 1,
            n_out: 1,
            weight: vec![2.0],
            bias: vec![2.0],
        });
        let mut t = One(Dense::zeros(1, 1));
        soft_update(&mut t, &src, 0.0);
        assert_eq!(t.flat(), vec![0.0, 0.0]);
        soft_update(&mut t, &src, 0.5);
        assert_eq!(t.flat(), vec![1.0, 1.0]);
        soft_update(&mut t, &src, 1.0);
        assert_eq!(t.flat(), src.flat());
    }

    #[test]
    fn target_lag_shrinks_geometrically() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let src = One(Dense::uniform(6, 4, 1.0, &mut rng));
        let mut t = One(Dense::uniform(6, 4, 1.0, &mut rng));
        let tau = 0.01;
        let err0: Vec<f64> = t.flat().iter().zip(src.flat()).map(|(a, b)| a - b).collect();
        let k = 50;
        for _ in 0..k {
            soft_update(&mut t, &src, tau);
        }
        let factor = (1.0 - tau).powi(k);
        for ((a, b), e0) in t.flat().iter().zip(src.flat()).zip(err0) {
            assert!(((a - b) - factor * e0).abs() < 1e-12);
        }
    }
}
