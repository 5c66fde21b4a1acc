//! Parameter samplers for the outer-loop sweep.

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::fem::{ParameterBox, ParameterPoint};
use crate::registry::Registry;

pub trait Sampler: Send + Sync {
    fn name(&self) -> &'static str;

    /// `n` points inside `param_box`. Deterministic for a fixed `seed`.
    fn sample(&self, param_box: &ParameterBox, n: usize, seed: u64) -> Vec<ParameterPoint>;

    /// Whether the output depends on the seed.
    fn is_random(&self) -> bool {
        false
    }
}

pub type SamplerFactory = fn() -> Box<dyn Sampler>;

fn map_unit(param_box: &ParameterBox, u: [f64; 2]) -> ParameterPoint {
    let [dl, pl] = param_box.lower();
    let [du, pu] = param_box.upper();
    ParameterPoint::new(dl + u[0] * (du - dl), pl + u[1] * (pu - pl))
}

#[derive(Debug, Clone, Copy, Default)]
pub struct UniformRandom;

impl Sampler for UniformRandom {
    fn name(&self) -> &'static str {
        "uniform_random"
    }

    fn sample(&self, param_box: &ParameterBox, n: usize, seed: u64) -> Vec<ParameterPoint> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let u = [rng.random::<f64>(), rng.random::<f64>()];
                map_unit(param_box, u)
            })
            .collect()
    }

    fn is_random(&self) -> bool {
        true
    }
}

/// Halton sequence in bases 2 and 3, starting at index 1.
#[derive(Debug, Clone, Copy, Default)]
pub struct Halton;

pub fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    let b = base as f64;
    while i > 0 {
        f /= b;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

impl Sampler for Halton {
    fn name(&self) -> &'static str {
        "halton"
    }

    fn sample(&self, param_box: &ParameterBox, n: usize, _seed: u64) -> Vec<ParameterPoint> {
        (1..=n as u64)
            .map(|i| map_unit(param_box, [radical_inverse(i, 2), radical_inverse(i, 3)]))
            .collect()
    }
}

/// Tensor grid with `ceil(sqrt(n))` points per axis, row-major in Da,
/// truncated to `n` points.
#[derive(Debug, Clone, Copy, Default)]
pub struct Grid;

impl Sampler for Grid {
    fn name(&self) -> &'static str {
        "grid"
    }

    fn sample(&self, param_box: &ParameterBox, n: usize, _seed: u64) -> Vec<ParameterPoint> {
        let k = (n as f64).sqrt().ceil() as usize;
        let coord = |i: usize| {
            if k <= 1 {
                0.5
            } else {
                i as f64 / (k - 1) as f64
            }
        };
        (0..k)
            .flat_map(|j| (0..k).map(move |i| (i, j)))
            .take(n)
            .map(|(i, j)| map_unit(param_box, [coord(i), coord(j)]))
            .collect()
    }
}

fn uniform_random() -> Box<dyn Sampler> {
    Box::new(UniformRandom)
}

fn halton() -> Box<dyn Sampler> {
    Box::new(Halton)
}

fn grid() -> Box<dyn Sampler> {
    Box::new(Grid)
}

pub fn samplers() -> &'static Registry<SamplerFactory> {
    static SAMPLERS: OnceLock<Registry<SamplerFactory>> = OnceLock::new();
    SAMPLERS.get_or_init(|| {
        Registry::new("sampler")
            .with("uniform_random", uniform_random as SamplerFactory)
            .with("halton", halton as SamplerFactory)
            .with("grid", grid as SamplerFactory)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx() -> ParameterBox {
        ParameterBox::new([0.1, 1.0], [10.0, 10.0]).unwrap()
    }

    #[test]
    fn all_samplers_stay_in_box() {
        for name in samplers().names() {
            let s = samplers().get(name).unwrap()();
            let pts = s.sample(&bx(), 37, 7);
            assert_eq!(pts.len(), 37, "{name}");
            assert!(pts.iter().all(|p| bx().contains(p)), "{name}");
        }
    }

    #[test]
    fn uniform_is_seeded() {
        let a = UniformRandom.sample(&bx(), 10, 42);
        let b = UniformRandom.sample(&bx(), 10, 42);
        let c = UniformRandom.sample(&bx(), 10, 43);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn halton_first_points() {
        assert_eq!(radical_inverse(1, 2), 0.5);
        assert_eq!(radical_inverse(3, 2), 0.75);
        assert!((radical_inverse(2, 3) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn grid_corners() {
        let pts = Grid.sample(&bx(), 4, 0);
        assert_eq!(pts, bx().corners().to_vec());
    }
}
