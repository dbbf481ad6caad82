//! Symmetric kernels.

use rand::Rng;

use crate::stream;

/// A permutation-symmetric function of `order()` observations.
///
/// Randomized kernels receive a 64-bit key for their private randomness. The
/// evaluators derive it from the subsample's original indices, so the same
/// subsample always sees the same draw. Deterministic kernels ignore it.
pub trait Kernel<T>: Sync {
    fn order(&self) -> usize;

    fn eval(&self, sample: &[&T], omega: u64) -> f64;

    fn randomized(&self) -> bool {
        false
    }
}

impl<T, K: Kernel<T> + ?Sized> Kernel<T> for &K {
    fn order(&self) -> usize {
        (**self).order()
    }

    fn eval(&self, sample: &[&T], omega: u64) -> f64 {
        (**self).eval(sample, omega)
    }

    fn randomized(&self) -> bool {
        (**self).randomized()
    }
}

impl<T, K: Kernel<T> + ?Sized> Kernel<T> for Box<K> {
    fn order(&self) -> usize {
        (**self).order()
    }

    fn eval(&self, sample: &[&T], omega: u64) -> f64 {
        (**self).eval(sample, omega)
    }

    fn randomized(&self) -> bool {
        (**self).randomized()
    }
}

/// Mean of the sample; with order 1 the U-statistic is the sample mean.
#[derive(Debug, Clone, Copy)]
pub struct MeanKernel {
    pub order: usize,
}

impl Kernel<f64> for MeanKernel {
    fn order(&self) -> usize {
        self.order
    }

    fn eval(&self, sample: &[&f64], _: u64) -> f64 {
        sample.iter().copied().sum::<f64>() / sample.len() as f64
    }
}

/// Unbiased sample variance of the `order` observations. Order 2 gives
/// (z1 - z2)^2 / 2; any order yields the sample variance as U-statistic.
#[derive(Debug, Clone, Copy)]
pub struct VarianceKernel {
    pub order: usize,
}

impl Kernel<f64> for VarianceKernel {
    fn order(&self) -> usize {
        self.order
    }

    fn eval(&self, sample: &[&f64], _: u64) -> f64 {
        let m = sample.len() as f64;
        let mean = sample.iter().copied().sum::<f64>() / m;
        sample
            .iter()
            .map(|&&z| (z - mean) * (z - mean))
            .sum::<f64>()
            / (m - 1.0)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ProductKernel {
    pub order: usize,
}

impl Kernel<f64> for ProductKernel {
    fn order(&self) -> usize {
        self.order
    }

    fn eval(&self, sample: &[&f64], _: u64) -> f64 {
        sample.iter().copied().product()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConstantKernel {
    pub order: usize,
    pub value: f64,
}

impl<T> Kernel<T> for ConstantKernel {
    fn order(&self) -> usize {
        self.order
    }

    fn eval(&self, _: &[&T], _: u64) -> f64 {
        self.value
    }
}

/// Randomized kernel: the sum of the sample times an independent random sign.
#[derive(Debug, Clone, Copy)]
pub struct SignFlipKernel {
    pub order: usize,
}

impl SignFlipKernel {
    pub fn sign(omega: u64) -> f64 {
        if stream::rng(omega).random::<bool>() {
            1.0
        } else {
            -1.0
        }
    }
}

impl Kernel<f64> for SignFlipKernel {
    fn order(&self) -> usize {
        self.order
    }

    fn eval(&self, sample: &[&f64], omega: u64) -> f64 {
        Self::sign(omega) * sample.iter().copied().sum::<f64>()
    }

    fn randomized(&self) -> bool {
        true
    }
}

/// Pins a randomized kernel to one draw, making it deterministic.
#[derive(Debug, Clone, Copy)]
pub struct FixedOmega<K> {
    pub kernel: K,
    pub omega: u64,
}

impl<T, K: Kernel<T>> Kernel<T> for FixedOmega<K> {
    fn order(&self) -> usize {
        self.kernel.order()
    }

    fn eval(&self, sample: &[&T], _: u64) -> f64 {
        self.kernel.eval(sample, self.omega)
    }
}

/// Subtracts a known mean theta from a kernel, giving a centred statistic.
#[derive(Debug, Clone, Copy)]
pub struct CenteredKernel<K> {
    pub kernel: K,
    pub theta: f64,
}

impl<T, K: Kernel<T>> Kernel<T> for CenteredKernel<K> {
    fn order(&self) -> usize {
        self.kernel.order()
    }

    fn eval(&self, sample: &[&T], omega: u64) -> f64 {
        self.kernel.eval(sample, omega) - self.theta
    }

    fn randomized(&self) -> bool {
        self.kernel.randomized()
    }
}

/// Wraps a closure as a kernel.
pub struct FnKernel<F> {
    order: usize,
    randomized: bool,
    f: F,
}

impl<F> FnKernel<F> {
    pub fn new(order: usize, f: F) -> Self {
        FnKernel {
            order,
            randomized: false,
            f,
        }
    }

    pub fn randomized(order: usize, f: F) -> Self {
        FnKernel {
            order,
            randomized: true,
            f,
        }
    }
}

impl<T, F> Kernel<T> for FnKernel<F>
where
    F: Fn(&[&T], u64) -> f64 + Sync,
{
    fn order(&self) -> usize {
        self.order
    }

    fn eval(&self, sample: &[&T], omega: u64) -> f64 {
        (self.f)(sample, omega)
    }

    fn randomized(&self) -> bool {
        self.randomized
    }
}
