use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use crate::autodiff::Tensor;

/// Uniform on `[-√(6/(rows+cols)), √(6/(rows+cols))]`.
pub fn glorot_uniform<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    if rows == 0 || cols == 0 {
        return Tensor::zeros(rows, cols);
    }
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.random_range(-limit..=limit)).collect();
    Tensor::new(rows, cols, data).expect("glorot shape")
}

/// Independent generators derived from one run seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RngStream {
    Init = 0,
    Split = 1,
    Dropout = 2,
}

pub fn stream_rng(seed: u64, stream: RngStream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn glorot_bounds_and_reproducibility() {
        let a = glorot_uniform(8, 16, &mut stream_rng(5, RngStream::Init));
        let b = glorot_uniform(8, 16, &mut stream_rng(5, RngStream::Init));
        assert_eq!(a, b);
        let limit = (6.0f64 / 24.0).sqrt();
        assert!(a.data().iter().all(|v| v.abs() <= limit));
        assert!(a.data().iter().any(|&v| v != a.data()[0]));
        let c = glorot_uniform(8, 16, &mut stream_rng(5, RngStream::Split));
        assert_ne!(a, c);
    }
}
