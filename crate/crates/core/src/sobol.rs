//! Deterministic low-discrepancy point generation.
//!
//! Unscrambled Sobol sequences built from the Joe–Kuo `new-joe-kuo-6.21201`
//! direction numbers, emitted in the reference generator's (Gray code) order.
//! The sequence's index-0 point is the origin; it is never emitted, so the
//! first point of every stream is (0.5, …, 0.5). Two streams with the same
//! dimension and skip emit identical points.

use crate::domain::BoxDomain;
use crate::error::{Error, Result};

/// Largest supported dimension. The estimation problems this crate targets
/// use charts and boxes of dimension at most two; 16 leaves headroom.
pub const MAX_DIMENSION: usize = 16;

const BITS: usize = 32;

/// Joe–Kuo parameters (s, a, m_1..m_s) for dimensions 2..=16.
/// Dimension 1 is the van der Corput sequence in base 2.
const JOE_KUO: [(u32, u32, [u32; 6]); 15] = [
    (1, 0, [1, 0, 0, 0, 0, 0]),
    (2, 1, [1, 3, 0, 0, 0, 0]),
    (3, 1, [1, 3, 1, 0, 0, 0]),
    (3, 2, [1, 1, 1, 0, 0, 0]),
    (4, 1, [1, 1, 3, 3, 0, 0]),
    (4, 4, [1, 3, 5, 13, 0, 0]),
    (5, 2, [1, 1, 5, 5, 17, 0]),
    (5, 4, [1, 1, 5, 5, 5, 0]),
    (5, 7, [1, 1, 7, 11, 19, 0]),
    (5, 11, [1, 1, 5, 1, 1, 0]),
    (5, 13, [1, 1, 1, 3, 11, 0]),
    (5, 14, [1, 3, 5, 5, 31, 0]),
    (6, 1, [1, 3, 3, 9, 7, 49]),
    (6, 13, [1, 1, 1, 15, 21, 21]),
    (6, 16, [1, 3, 1, 13, 27, 49]),
];

/// Direction numbers v_c = m_c · 2^(32-c) for one dimension, c = 1..=32,
/// extended by the primitive-polynomial recurrence
/// v_c = v_{c-s} ^ (v_{c-s} >> s) ^ XOR_{k<s, bit k of a} v_{c-k}.
fn direction_numbers(dim_index: usize) -> [u32; BITS] {
    let mut v = [0u32; BITS];
    if dim_index == 0 {
        for (c, slot) in v.iter_mut().enumerate() {
            *slot = 1u32 << (31 - c);
        }
        return v;
    }
    let (s, a, m) = JOE_KUO[dim_index - 1];
    let s = s as usize;
    for c in 0..s {
        v[c] = m[c] << (31 - c);
    }
    for c in s..BITS {
        let mut val = v[c - s] ^ (v[c - s] >> s);
        for k in 1..s {
            if (a >> (s - 1 - k)) & 1 == 1 {
                val ^= v[c - k];
            }
        }
        v[c] = val;
    }
    v
}

/// Sequential Sobol point generator for one fixed dimension.
#[derive(Debug, Clone)]
pub struct SobolStream {
    dimension: usize,
    /// Points generated so far, including any skipped prefix (= index of the
    /// last generated point in the reference sequence).
    next_index: u64,
    state: Vec<u32>,
    directions: Vec<[u32; BITS]>,
}

impl SobolStream {
    /// A stream over [0,1)^dimension starting at the beginning of the
    /// sequence (origin dropped).
    pub fn new(dimension: usize) -> Result<Self> {
        Self::with_skip(dimension, 0)
    }

    /// A stream that drops the first `skip` points, so the next point drawn
    /// is the one with index skip+1.
    pub fn with_skip(dimension: usize, skip: u64) -> Result<Self> {
        if dimension == 0 || dimension > MAX_DIMENSION {
            return Err(Error::invalid(format!(
                "Sobol dimension must be in 1..={MAX_DIMENSION}, got {dimension}"
            )));
        }
        let directions = (0..dimension).map(direction_numbers).collect();
        let mut stream = Self {
            dimension,
            next_index: 0,
            state: vec![0u32; dimension],
            directions,
        };
        for _ in 0..skip {
            stream.advance();
        }
        Ok(stream)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Index (in the reference sequence) of the last generated point,
    /// counting any skipped prefix.
    pub fn next_index(&self) -> u64 {
        self.next_index
    }

    fn advance(&mut self) {
        // Gray code step: flip the direction of the lowest zero bit of the
        // current index. u64 indices never exhaust the 32 direction numbers
        // in practice; the sequence period is 2^32 points.
        let c = (self.next_index as u32).trailing_ones() as usize;
        let c = c.min(BITS - 1);
        for (x, dirs) in self.state.iter_mut().zip(&self.directions) {
            *x ^= dirs[c];
        }
        self.next_index += 1;
    }

    /// Next point, with every coordinate in [0,1).
    pub fn next_point(&mut self) -> Vec<f64> {
        self.advance();
        self.state
            .iter()
            .map(|&x| x as f64 / 4294967296.0)
            .collect()
    }
}

/// The Sobol points with indices skip+1 ..= skip+count, each in [0,1)^dimension.
pub fn sobol_points(dimension: usize, count: usize, skip: u64) -> Result<Vec<Vec<f64>>> {
    if count == 0 {
        return Err(Error::invalid("Sobol point count must be at least 1"));
    }
    let mut stream = SobolStream::with_skip(dimension, skip)?;
    Ok((0..count).map(|_| stream.next_point()).collect())
}

/// Coordinatewise affine map of unit-cube points onto a box:
/// x ↦ lower + x ⊙ (upper − lower).
pub fn scale_to_box(points: &[Vec<f64>], domain: &BoxDomain) -> Result<Vec<Vec<f64>>> {
    let k = domain.dim();
    points
        .iter()
        .map(|p| {
            if p.len() != k {
                return Err(Error::invalid(format!(
                    "point dimension {} does not match box dimension {k}",
                    p.len()
                )));
            }
            Ok(p.iter()
                .zip(domain.lower().iter().zip(domain.upper()))
                .map(|(&u, (&lo, &hi))| lo + u * (hi - lo))
                .collect())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    /// Independent reference: the point with sequence index n is the XOR of
    /// the direction numbers selected by the binary digits of gray(n). This
    /// closed form reproduces the incremental reference generator exactly.
    fn reference_point(dimension: usize, n: u64) -> Vec<f64> {
        let gray = n ^ (n >> 1);
        (0..dimension)
            .map(|j| {
                let dirs = direction_numbers(j);
                let mut x = 0u32;
                for (b, &dir) in dirs.iter().enumerate() {
                    if (gray >> b) & 1 == 1 {
                        x ^= dir;
                    }
                }
                x as f64 / 4294967296.0
            })
            .collect()
    }

    #[test]
    fn matches_reference_generator_bit_for_bit() {
        for dim in [1, 2, 3, 5, 8, 16] {
            let pts = sobol_points(dim, 256, 0).unwrap();
            for (i, p) in pts.iter().enumerate() {
                let r = reference_point(dim, i as u64 + 1);
                assert_eq!(p, &r, "dim {dim}, index {}", i + 1);
            }
        }
    }

    /// First points of the published Joe–Kuo generator (scipy.stats.qmc.Sobol
    /// with scrambling off emits the same values after its origin point).
    #[test]
    fn frozen_reference_values() {
        let d1 = sobol_points(1, 3, 0).unwrap();
        assert_eq!(d1, vec![vec![0.5], vec![0.75], vec![0.25]]);

        let d2 = sobol_points(2, 5, 0).unwrap();
        assert_eq!(
            d2,
            vec![
                vec![0.5, 0.5],
                vec![0.75, 0.25],
                vec![0.25, 0.75],
                vec![0.375, 0.375],
                vec![0.875, 0.875],
            ]
        );

        // skip drops exactly that many leading points
        let skipped = sobol_points(2, 2, 3).unwrap();
        assert_eq!(skipped, vec![vec![0.375, 0.375], vec![0.875, 0.875]]);
    }

    #[test]
    fn rejects_bad_dimension() {
        assert!(sobol_points(0, 10, 0).is_err());
        assert!(sobol_points(MAX_DIMENSION + 1, 10, 0).is_err());
        assert!(sobol_points(1, 0, 0).is_err());
    }

    #[test]
    fn coordinates_lie_in_unit_interval() {
        for dim in [1, 4, 16] {
            for p in sobol_points(dim, 1000, 0).unwrap() {
                assert!(p.iter().all(|&v| (0.0..1.0).contains(&v)));
            }
        }
    }

    #[test]
    fn sample_mean_near_half() {
        let pts = sobol_points(2, 1024, 0).unwrap();
        for j in 0..2 {
            let mean = pts.iter().map(|p| p[j]).sum::<f64>() / 1024.0;
            assert_abs_diff_eq!(mean, 0.5, epsilon = 0.01);
        }
    }

    /// 1-d star discrepancy by direct enumeration over the sorted sample:
    /// D* = 1/(2N) + max_i |x_(i) - (2i-1)/(2N)|.
    fn star_discrepancy_1d(mut xs: Vec<f64>) -> f64 {
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = xs.len() as f64;
        let worst = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| (x - (2.0 * i as f64 + 1.0) / (2.0 * n)).abs())
            .fold(0.0, f64::max);
        1.0 / (2.0 * n) + worst
    }

    #[test]
    fn lower_discrepancy_than_pseudorandom() {
        use rand::{Rng, SeedableRng};
        let n = 1 << 10;
        let sobol: Vec<f64> = sobol_points(1, n, 0).unwrap().into_iter().map(|p| p[0]).collect();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let pseudo: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        assert!(star_discrepancy_1d(sobol) < star_discrepancy_1d(pseudo));
    }

    #[test]
    fn running_mean_qmc_rate() {
        // f(x) = x on [0,1]: mean of the first 4096 points within 0.005 of 0.5
        let pts = sobol_points(1, 4096, 0).unwrap();
        let mean = pts.iter().map(|p| p[0]).sum::<f64>() / 4096.0;
        assert!((mean - 0.5).abs() < 0.005, "error {}", (mean - 0.5).abs());
    }

    #[test]
    fn scale_to_box_examples() {
        let b = BoxDomain::new(vec![0.0], vec![2.0 * std::f64::consts::PI]).unwrap();
        let out = scale_to_box(&[vec![0.5]], &b).unwrap();
        assert_abs_diff_eq!(out[0][0], std::f64::consts::PI, epsilon = 1e-15);

        let b2 = BoxDomain::cube(-2.0, 2.0, 2).unwrap();
        let corner = scale_to_box(&[vec![0.0, 0.0]], &b2).unwrap();
        assert_eq!(corner[0], vec![-2.0, -2.0]);

        let b3 = BoxDomain::new(vec![0.0, -4.0], vec![4.0, 0.0]).unwrap();
        let mid = scale_to_box(&[vec![0.25, 0.75]], &b3).unwrap();
        assert_eq!(mid[0], vec![1.0, -1.0]);

        assert!(scale_to_box(&[vec![0.5]], &b2).is_err());
    }

    proptest! {
        #[test]
        fn streams_are_deterministic(dim in 1usize..=16, skip in 0u64..500, count in 1usize..100) {
            let a = sobol_points(dim, count, skip).unwrap();
            let b = sobol_points(dim, count, skip).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn skip_is_a_suffix(dim in 1usize..=4, skip in 0u64..64) {
            let long = sobol_points(dim, skip as usize + 5, 0).unwrap();
            let short = sobol_points(dim, 5, skip).unwrap();
            prop_assert_eq!(&long[skip as usize..], &short[..]);
        }

        #[test]
        fn scaled_points_stay_in_box(u in proptest::collection::vec(0.0f64..1.0, 2)) {
            let b = BoxDomain::new(vec![-3.0, 1.0], vec![-1.0, 8.0]).unwrap();
            let out = scale_to_box(&[u], &b).unwrap();
            prop_assert!(b.contains(&out[0]));
        }
    }
}
