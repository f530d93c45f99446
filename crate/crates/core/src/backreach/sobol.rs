//! Sobol low-discrepancy points with Joe–Kuo direction numbers.

use crate::error::ReachError;

pub const MAX_SOBOL_DIM: usize = 16;
const BITS: usize = 32;

/// `(a, m)` for dimensions 2..=16 from the new-joe-kuo-6.21201 table.
/// The first dimension is the van der Corput sequence.
const JOE_KUO: [(u32, &[u32]); MAX_SOBOL_DIM - 1] = [
    (0, &[1]),
    (1, &[1, 3]),
    (1, &[1, 3, 1]),
    (2, &[1, 1, 1]),
    (1, &[1, 1, 3, 3]),
    (4, &[1, 3, 5, 13]),
    (2, &[1, 1, 5, 5, 17]),
    (4, &[1, 1, 5, 5, 5]),
    (7, &[1, 1, 7, 11, 19]),
    (11, &[1, 1, 5, 1, 1]),
    (13, &[1, 1, 1, 3, 11]),
    (14, &[1, 3, 5, 5, 31]),
    (1, &[1, 3, 3, 9, 7, 49]),
    (13, &[1, 1, 1, 15, 21, 21]),
    (16, &[1, 3, 1, 13, 27, 49]),
];

fn directions(a: u32, m: &[u32]) -> [u32; BITS] {
    let mut v = [0u32; BITS];
    let s = m.len();
    for i in 0..s.min(BITS) {
        v[i] = m[i] << (31 - i);
    }
    for i in s..BITS {
        let j = i - s;
        v[i] = v[j] ^ (v[j] >> s);
        for k in 0..s - 1 {
            if (a >> (s - 2 - k)) & 1 != 0 {
                v[i] ^= v[i - k - 1];
            }
        }
    }
    v
}

/// Deterministic Sobol sequence; point `i` depends only on `(dim, i)`.
/// Index 0 (the origin) is skipped, so the first draw is the center of the cube.
#[derive(Clone, Debug)]
pub struct SobolSampler {
    dirs: Vec<[u32; BITS]>,
    next: u64,
}

impl SobolSampler {
    pub fn new(dim: usize) -> Result<Self, ReachError> {
        if dim == 0 || dim > MAX_SOBOL_DIM {
            return Err(ReachError::Config(format!("Sobol dimension must be in 1..={MAX_SOBOL_DIM}, got {dim}")));
        }
        let mut dirs = Vec::with_capacity(dim);
        dirs.push(std::array::from_fn(|i| 1u32 << (31 - i)));
        for &(a, m) in JOE_KUO.iter().take(dim - 1) {
            dirs.push(directions(a, m));
        }
        Ok(SobolSampler { dirs, next: 1 })
    }

    pub fn dim(&self) -> usize {
        self.dirs.len()
    }

    /// Index of the next point to be drawn.
    pub fn index(&self) -> u64 {
        self.next
    }

    /// Point `i` of the sequence in `[0, 1)^dim`.
    pub fn point(&self, i: u64) -> Vec<f64> {
        let gray = i ^ (i >> 1);
        self.dirs
            .iter()
            .map(|v| {
                let mut x = 0u32;
                for (b, vb) in v.iter().enumerate() {
                    if (gray >> b) & 1 != 0 {
                        x ^= vb;
                    }
                }
                x as f64 / 4294967296.0
            })
            .collect()
    }

    pub fn next_point(&mut self) -> (u64, Vec<f64>) {
        let i = self.next;
        self.next += 1;
        (i, self.point(i))
    }
}
