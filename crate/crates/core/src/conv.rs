//! FFT-based linear convolution.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// First `out_len` terms of the linear convolution `sum_j a[j] b[k - j]`.
pub fn convolve(a: &[f64], b: &[f64], out_len: usize) -> Vec<f64> {
    if a.is_empty() || b.is_empty() || out_len == 0 {
        return vec![0.0; out_len];
    }
    let full = a.len() + b.len() - 1;
    let size = full.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);

    let pad = |v: &[f64]| {
        let mut buf = vec![Complex::new(0.0, 0.0); size];
        for (dst, &src) in buf.iter_mut().zip(v) {
            dst.re = src;
        }
        buf
    };
    let mut fa = pad(a);
    let mut fb = pad(b);
    fwd.process(&mut fa);
    fwd.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= *y;
    }
    inv.process(&mut fa);
    let scale = 1.0 / size as f64;
    (0..out_len).map(|k| if k < full { fa[k].re * scale } else { 0.0 }).collect()
}
