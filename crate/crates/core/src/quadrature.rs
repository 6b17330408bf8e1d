//! Globally adaptive Gauss-Kronrod (10/21-point) quadrature.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::scalar::KahanSum;

// QUADPACK qk21 abscissae and weights.
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689,
    0.973_906_528_517_171_720_077_964_012_084,
    0.930_157_491_355_708_226_001_207_180_060,
    0.865_063_366_688_984_510_732_096_688_423,
    0.780_817_726_586_416_897_063_717_578_345,
    0.679_409_568_299_024_406_234_327_365_115,
    0.562_757_134_668_604_683_339_000_099_273,
    0.433_395_394_129_247_190_799_265_943_166,
    0.294_392_862_701_460_198_131_126_603_104,
    0.148_874_338_981_631_210_884_826_001_130,
    0.0,
];
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062,
    0.032_558_162_307_964_727_478_818_972_460,
    0.054_755_896_574_351_996_031_381_300_245,
    0.075_039_674_810_919_952_767_043_140_916,
    0.093_125_454_583_697_605_535_065_465_083,
    0.109_387_158_802_297_641_899_210_590_326,
    0.123_491_976_262_065_851_077_958_109_831,
    0.134_709_217_311_473_325_928_054_001_772,
    0.142_775_938_577_060_080_797_094_273_139,
    0.147_739_104_901_338_491_374_841_515_972,
    0.149_445_554_002_916_905_664_936_468_390,
];
// Gauss weights for the odd-indexed Kronrod nodes.
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893,
    0.149_451_349_150_580_593_145_776_339_658,
    0.219_086_362_515_982_043_995_534_934_228,
    0.269_266_719_309_996_355_091_226_921_569,
    0.295_524_224_714_752_870_173_892_994_651,
];

const RULE_POINTS: usize = 21;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

#[derive(Clone, Copy, Debug)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut gauss = 0.0;
    let mut kronrod = fc * WGK[10];
    for (j, (&x, &w)) in XGK[..10].iter().zip(&WGK[..10]).enumerate() {
        let dx = half * x;
        let pair = f(center - dx) + f(center + dx);
        kronrod += w * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    let value = kronrod * half;
    let error = ((kronrod - gauss) * half).abs();
    (value, error)
}

/// Adaptive integrator settings.
#[derive(Clone, Copy, Debug)]
pub struct Quadrature {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_evaluations: usize,
}

impl Default for Quadrature {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 0.0,
            max_evaluations: 10_000_000,
        }
    }
}

impl Quadrature {
    pub fn with_tolerance(rel_tol: f64, abs_tol: f64) -> Self {
        Self {
            rel_tol,
            abs_tol,
            ..Self::default()
        }
    }

    /// ∫_a^b f.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64) -> Result<Estimate> {
        self.integrate_pieces(f, &[a, b])
    }

    /// ∫ f over consecutive `breaks`, which seed the initial partition.
    pub fn integrate_pieces<F: Fn(f64) -> f64>(&self, f: F, breaks: &[f64]) -> Result<Estimate> {
        let mut heap = BinaryHeap::new();
        let mut evaluations = 0;
        for w in breaks.windows(2) {
            if w[0] == w[1] {
                continue;
            }
            let (value, error) = kronrod21(&f, w[0], w[1]);
            evaluations += RULE_POINTS;
            heap.push(Segment {
                a: w[0],
                b: w[1],
                value,
                error,
            });
        }
        let mut settled: Vec<Segment> = Vec::new();
        loop {
            let (value, error) = totals(heap.iter().chain(&settled));
            if !value.is_finite() || !error.is_finite() {
                return Err(Error::QuadratureFailure { evaluations, error });
            }
            if error <= self.abs_tol.max(self.rel_tol * value.abs()) {
                return Ok(Estimate {
                    value,
                    error,
                    evaluations,
                });
            }
            let Some(worst) = heap.pop() else {
                // Every segment is at roundoff resolution.
                return Ok(Estimate {
                    value,
                    error,
                    evaluations,
                });
            };
            if evaluations >= self.max_evaluations {
                return Err(Error::QuadratureFailure { evaluations, error });
            }
            let mid = 0.5 * (worst.a + worst.b);
            if !(mid > worst.a && mid < worst.b)
                || (worst.b - worst.a) <= 1e-15 * mid.abs().max(f64::MIN_POSITIVE)
            {
                settled.push(worst);
                continue;
            }
            for (a, b) in [(worst.a, mid), (mid, worst.b)] {
                let (value, error) = kronrod21(&f, a, b);
                heap.push(Segment { a, b, value, error });
            }
            evaluations += 2 * RULE_POINTS;
        }
    }
}

fn totals<'a>(segments: impl Iterator<Item = &'a Segment>) -> (f64, f64) {
    let mut value = KahanSum::new();
    let mut error = KahanSum::new();
    for s in segments {
        value.add(s.value);
        error.add(s.error);
    }
    (value.value(), error.value())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let q = Quadrature::default();
        let e = q.integrate(|x| x.powi(5) - 3.0 * x * x, 0.0, 2.0).unwrap();
        assert!((e.value - (64.0 / 6.0 - 8.0)).abs() < 1e-13);
        assert_eq!(e.evaluations, 21);
    }

    #[test]
    fn endpoint_singularity() {
        let q = Quadrature::with_tolerance(1e-10, 0.0);
        let e = q.integrate(|x: f64| 1.0 / x.sqrt(), 0.0, 1.0).unwrap();
        assert!((e.value - 2.0).abs() < 1e-9, "{e:?}");
    }

    #[test]
    fn sharp_peak() {
        let q = Quadrature::with_tolerance(1e-11, 0.0);
        let e = q
            .integrate(|x: f64| (-1e4 * (x - 0.3).powi(2)).exp(), 0.0, 1.0)
            .unwrap();
        let exact = (std::f64::consts::PI / 1e4).sqrt();
        assert!((e.value - exact).abs() < 1e-12 * exact.max(1.0), "{e:?}");
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let q = Quadrature {
            rel_tol: 1e-14,
            abs_tol: 0.0,
            max_evaluations: 100,
        };
        let r = q.integrate(|x: f64| (1.0 / x).sin(), 1e-6, 1.0);
        assert!(matches!(r, Err(Error::QuadratureFailure { .. })));
    }

    #[test]
    fn empty_range_is_zero() {
        let e = Quadrature::default().integrate(|x| x, 0.5, 0.5).unwrap();
        assert_eq!(e.value, 0.0);
    }
}
