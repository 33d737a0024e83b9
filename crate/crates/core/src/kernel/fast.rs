//! Zero-padded FFT application of shift-invariant kernels.
//!
//! Padding to at least `2n − 1` per axis turns the circular product into the
//! linear convolution over the box, so nothing wraps around.

use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::KernelSpec;
use crate::scalar::Real;
use crate::space::Grid;

pub(crate) struct ConvPlan<T: Real> {
    shape: Vec<usize>,
    padded: Vec<usize>,
    spectrum: Vec<Complex<T>>,
    forward: Vec<Arc<dyn Fft<T>>>,
    inverse: Vec<Arc<dyn Fft<T>>>,
}

impl<T: Real> fmt::Debug for ConvPlan<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConvPlan")
            .field("shape", &self.shape)
            .field("padded", &self.padded)
            .finish()
    }
}

impl<T: Real> ConvPlan<T> {
    pub(crate) fn new(spec: &KernelSpec<T>, grid: &Grid<T>) -> Self {
        let shape = grid.points().to_vec();
        let padded: Vec<usize> = shape.iter().map(|n| (2 * n - 1).next_power_of_two()).collect();
        let mut planner = FftPlanner::<T>::new();
        let forward: Vec<_> = padded.iter().map(|l| planner.plan_fft_forward(*l)).collect();
        let inverse: Vec<_> = padded.iter().map(|l| planner.plan_fft_inverse(*l)).collect();
        let h = grid.spacing();
        let wrap = |k: isize, l: usize| if k >= 0 { k as usize } else { (l as isize + k) as usize };

        let total: usize = padded.iter().product();
        let mut profile = vec![Complex::new(T::zero(), T::zero()); total];
        match shape.as_slice() {
            [n] => {
                let n = *n as isize;
                for k in (1 - n)..n {
                    let x = h[0] * T::of(k as f64);
                    profile[wrap(k, padded[0])] = Complex::new(spec.profile(&[x]), T::zero());
                }
            }
            [nx, ny] => {
                let (nx, ny) = (*nx as isize, *ny as isize);
                for a in (1 - nx)..nx {
                    for b in (1 - ny)..ny {
                        let x = [h[0] * T::of(a as f64), h[1] * T::of(b as f64)];
                        let idx = wrap(a, padded[0]) * padded[1] + wrap(b, padded[1]);
                        profile[idx] = Complex::new(spec.profile(&x), T::zero());
                    }
                }
            }
            _ => unreachable!("grids are 1-D or 2-D"),
        }
        let mut plan = Self {
            shape,
            padded,
            spectrum: Vec::new(),
            forward,
            inverse,
        };
        plan.transform(&mut profile, true);
        plan.spectrum = profile;
        plan
    }

    fn transform(&self, data: &mut [Complex<T>], forward: bool) {
        let ffts = if forward { &self.forward } else { &self.inverse };
        match self.padded.as_slice() {
            [_] => ffts[0].process(data),
            [lx, ly] => {
                // Rows are contiguous; columns go through a scratch buffer.
                for row in data.chunks_exact_mut(*ly) {
                    ffts[1].process(row);
                }
                let mut column = vec![Complex::new(T::zero(), T::zero()); *lx];
                for j in 0..*ly {
                    for i in 0..*lx {
                        column[i] = data[i * ly + j];
                    }
                    ffts[0].process(&mut column);
                    for i in 0..*lx {
                        data[i * ly + j] = column[i];
                    }
                }
            }
            _ => unreachable!(),
        }
    }

    /// `yᵢ = Σⱼ J(xᵢ − xⱼ) gⱼ`.
    pub(crate) fn convolve(&self, g: &[T]) -> Vec<T> {
        let total: usize = self.padded.iter().product();
        let mut buf = vec![Complex::new(T::zero(), T::zero()); total];
        match self.shape.as_slice() {
            [n] => {
                for (b, v) in buf.iter_mut().zip(&g[..*n]) {
                    b.re = *v;
                }
            }
            [nx, ny] => {
                let ly = self.padded[1];
                for i in 0..*nx {
                    for j in 0..*ny {
                        buf[i * ly + j].re = g[i * ny + j];
                    }
                }
            }
            _ => unreachable!(),
        }
        self.transform(&mut buf, true);
        for (b, s) in buf.iter_mut().zip(&self.spectrum) {
            *b *= *s;
        }
        self.transform(&mut buf, false);
        let norm = T::one() / T::of_usize(total);
        match self.shape.as_slice() {
            [n] => buf[..*n].iter().map(|c| c.re * norm).collect(),
            [nx, ny] => {
                let ly = self.padded[1];
                let mut out = Vec::with_capacity(nx * ny);
                for i in 0..*nx {
                    for j in 0..*ny {
                        out.push(buf[i * ly + j].re * norm);
                    }
                }
                out
            }
            _ => unreachable!(),
        }
    }
}
