//! Gray-code Sobol sequence for up to six dimensions (Joe–Kuo direction
//! numbers).

const BITS: usize = 32;

/// `(s, a, m_1..m_s)` for dimensions 2..=6.
const DIRECTIONS: [(u32, u32, &[u32]); 5] = [
    (1, 0, &[1]),
    (2, 1, &[1, 3]),
    (3, 1, &[1, 3, 1]),
    (3, 2, &[1, 1, 1]),
    (4, 1, &[1, 1, 3, 3]),
];

pub const MAX_DIM: usize = 6;

pub struct Sobol {
    v: Vec<[u32; BITS]>,
    x: Vec<u32>,
    index: u32,
}

impl Sobol {
    pub fn new(dim: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&dim), "sobol supports 1..=6 dimensions");
        let mut v = Vec::with_capacity(dim);
        let mut first = [0u32; BITS];
        for (k, slot) in first.iter_mut().enumerate() {
            *slot = 1u32 << (BITS - 1 - k);
        }
        v.push(first);
        for &(s, a, m) in DIRECTIONS.iter().take(dim - 1) {
            let s = s as usize;
            let mut dir = [0u32; BITS];
            for k in 0..BITS {
                if k < s {
                    dir[k] = m[k] << (BITS - 1 - k);
                } else {
                    let mut val = dir[k - s] ^ (dir[k - s] >> s);
                    for l in 1..s {
                        if (a >> (s - 1 - l)) & 1 == 1 {
                            val ^= dir[k - l];
                        }
                    }
                    dir[k] = val;
                }
            }
            v.push(dir);
        }
        Sobol {
            v,
            x: vec![0; dim],
            index: 0,
        }
    }

    /// Next point in `[0, 1)^dim`; the first point is the origin.
    pub fn next_point(&mut self) -> Vec<f64> {
        let scale = 1.0 / (1u64 << BITS) as f64;
        if self.index > 0 {
            let c = (self.index - 1).trailing_ones() as usize;
            for (x, dir) in self.x.iter_mut().zip(&self.v) {
                *x ^= dir[c];
            }
        }
        self.index += 1;
        self.x.iter().map(|&x| x as f64 * scale).collect()
    }
}
