//! Mean negative log-likelihood of a batch and its exact gradient.

use super::{forward_batch, head_log_density, HeadScratch, MdnParams};
use crate::error::{Error, Result};
use crate::real::{gemm, MatRef, Real};

/// Reusable buffers for [`nll_and_gradients`].
#[derive(Debug, Default)]
pub struct Workspace<T> {
    acts: Vec<Vec<T>>,
    delta: Vec<T>,
    delta_prev: Vec<T>,
    head: HeadScratch<T>,
}

impl<T: Real> Workspace<T> {
    pub fn new() -> Self {
        Self { acts: Vec::new(), delta: Vec::new(), delta_prev: Vec::new(), head: HeadScratch::default() }
    }
}

/// Returns the mean of `-log density` over the `rows` examples in `x`/`y`
/// and writes its gradient with respect to every parameter into `grads`.
///
/// A non-finite loss is reported as [`Error::TrainingDiverged`] with zero
/// epoch and batch indices; the training loop fills those in.
pub fn nll_and_gradients<T: Real>(
    params: &MdnParams<T>,
    x: &[T],
    y: &[T],
    rows: usize,
    grads: &mut MdnParams<T>,
    ws: &mut Workspace<T>,
) -> Result<f64> {
    let arch = params.arch();
    let (k, n) = (arch.components, arch.target_dim);
    assert!(rows > 0, "empty batch");
    assert_eq!(x.len(), rows * arch.input_dim);
    assert_eq!(y.len(), rows * n);
    assert_eq!(grads.arch(), arch);

    forward_batch(params, x, rows, &mut ws.acts);
    let head = params.head();
    let width = arch.head_width();
    if !ws.head.fits(k, n) {
        ws.head = HeadScratch::new(k, n);
    }
    ws.delta.clear();
    ws.delta.resize(rows * width, T::zero());
    let scale = T::cst(1.0 / rows as f64);
    let mut total = 0.0;
    for r in 0..rows {
        let out = &ws.acts[head][r * width..(r + 1) * width];
        let g = &mut ws.delta[r * width..(r + 1) * width];
        total += head_log_density(out, &y[r * n..(r + 1) * n], k, n, &mut ws.head, Some((g, scale)));
    }
    let loss = -total / rows as f64;
    if !loss.is_finite() {
        return Err(Error::TrainingDiverged { epoch: 0, batch: 0, loss });
    }

    for l in (0..params.num_layers()).rev() {
        let (fan_in, fan_out) = params.shape(l);
        let input: &[T] = if l == 0 { x } else { &ws.acts[l - 1] };
        let (gw, gb) = grads.layer_mut(l);
        gemm(MatRef::t(input, rows, fan_in), MatRef::new(&ws.delta, rows, fan_out), T::zero(), gw);
        gb.fill(T::zero());
        for row in ws.delta.chunks_exact(fan_out) {
            for (b, d) in gb.iter_mut().zip(row) {
                *b += *d;
            }
        }
        if l > 0 {
            ws.delta_prev.resize(rows * fan_in, T::zero());
            gemm(MatRef::new(&ws.delta, rows, fan_out), MatRef::t(params.weights(l), fan_in, fan_out), T::zero(), &mut ws.delta_prev);
            for (d, a) in ws.delta_prev.iter_mut().zip(&ws.acts[l - 1]) {
                if *a <= T::zero() {
                    *d = T::zero();
                }
            }
            std::mem::swap(&mut ws.delta, &mut ws.delta_prev);
        }
    }
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdn::{forward, init_network, mixture_log_density, MdnArchitecture};
    use crate::rng::SimRng;

    fn batch(rows: usize, input: usize, n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let mut rng = SimRng::new(seed);
        let x = (0..rows * input).map(|_| rng.normal()).collect();
        let y = (0..rows * n).map(|_| rng.normal()).collect();
        (x, y)
    }

    fn loss_only(p: &MdnParams<f64>, x: &[f64], y: &[f64], rows: usize) -> f64 {
        let a = p.arch();
        let mut s = 0.0;
        for r in 0..rows {
            let mix = forward(p, &x[r * a.input_dim..(r + 1) * a.input_dim]).unwrap();
            s -= mixture_log_density(&mix, &y[r * a.target_dim..(r + 1) * a.target_dim]);
        }
        s / rows as f64
    }

    #[test]
    fn gradients_match_central_differences() {
        let arch = MdnArchitecture { input_dim: 3, hidden: vec![5, 4], components: 3, target_dim: 2 };
        let mut p = init_network::<f64>(&arch, 11).unwrap();
        // nonzero biases so every path is exercised
        let mut rng = SimRng::new(99);
        for l in 0..p.num_layers() {
            let (_, b) = p.layer_mut(l);
            for v in b.iter_mut() {
                *v = 0.3 * rng.normal();
            }
        }
        let rows = 7;
        let (x, y) = batch(rows, 3, 2, 4);
        let mut g = MdnParams::zeros(&arch).unwrap();
        let mut ws = Workspace::new();
        let loss = nll_and_gradients(&p, &x, &y, rows, &mut g, &mut ws).unwrap();
        assert!((loss - loss_only(&p, &x, &y, rows)).abs() < 1e-12);

        let h = 1e-5;
        let mut worst = 0.0f64;
        for i in 0..p.as_slice().len() {
            let orig = p.as_slice()[i];
            p.as_mut_slice()[i] = orig + h;
            let up = loss_only(&p, &x, &y, rows);
            p.as_mut_slice()[i] = orig - h;
            let down = loss_only(&p, &x, &y, rows);
            p.as_mut_slice()[i] = orig;
            let fd = (up - down) / (2.0 * h);
            let an = g.as_slice()[i];
            let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-3);
            worst = worst.max(rel);
        }
        assert!(worst < 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn duplicated_batch_gives_same_loss_and_gradients() {
        let arch = MdnArchitecture { input_dim: 2, hidden: vec![6], components: 2, target_dim: 1 };
        let p = init_network::<f64>(&arch, 3).unwrap();
        let (x, y) = batch(5, 2, 1, 8);
        let mut g1 = MdnParams::zeros(&arch).unwrap();
        let mut g2 = MdnParams::zeros(&arch).unwrap();
        let mut ws = Workspace::new();
        let l1 = nll_and_gradients(&p, &x, &y, 5, &mut g1, &mut ws).unwrap();
        let x2 = [x.clone(), x].concat();
        let y2 = [y.clone(), y].concat();
        let l2 = nll_and_gradients(&p, &x2, &y2, 10, &mut g2, &mut ws).unwrap();
        assert!((l1 - l2).abs() < 1e-12);
        for (a, b) in g1.as_slice().iter().zip(g2.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_head_loss_matches_forward() {
        let arch = MdnArchitecture { input_dim: 1, hidden: vec![4], components: 4, target_dim: 1 };
        let mut p = init_network::<f64>(&arch, 1).unwrap();
        let h = p.head();
        p.layer_mut(h).0.fill(0.0);
        let mut g = MdnParams::zeros(&arch).unwrap();
        let loss = nll_and_gradients(&p, &[0.5], &[0.0], 1, &mut g, &mut Workspace::new()).unwrap();
        let mix = forward(&p, &[0.5]).unwrap();
        assert!((loss + mixture_log_density(&mix, &[0.0])).abs() < 1e-15);
        assert!((loss - 0.918_938_533_204_672_7).abs() < 1e-12);
    }

    #[test]
    fn single_precision_gradients_track_double() {
        let arch = MdnArchitecture { input_dim: 2, hidden: vec![8, 8], components: 4, target_dim: 1 };
        let p = init_network::<f64>(&arch, 21).unwrap();
        let (x, y) = batch(16, 2, 1, 2);
        let mut g = MdnParams::zeros(&arch).unwrap();
        let l = nll_and_gradients(&p, &x, &y, 16, &mut g, &mut Workspace::new()).unwrap();
        let p32 = p.cast::<f32>();
        let x32: Vec<f32> = x.iter().map(|&v| v as f32).collect();
        let y32: Vec<f32> = y.iter().map(|&v| v as f32).collect();
        let mut g32 = MdnParams::zeros(&arch).unwrap();
        let l32 = nll_and_gradients(&p32, &x32, &y32, 16, &mut g32, &mut Workspace::new()).unwrap();
        assert!((l - l32).abs() < 1e-5);
        for (a, b) in g.as_slice().iter().zip(g32.as_slice()) {
            assert!((a - *b as f64).abs() < 1e-4);
        }
    }
}
