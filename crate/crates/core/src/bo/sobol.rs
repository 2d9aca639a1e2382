use crate::error::{Error, Result};

const BITS: usize = 32;

/// Primitive-polynomial degree `s`, coefficient word `a` and initial
/// direction numbers `m` for dimensions 2..=8 (Joe-Kuo).
const DIRECTION_TABLE: [(u32, u32, &[u32]); 7] = [
    (1, 0, &[1]),
    (2, 1, &[1, 3]),
    (3, 1, &[1, 3, 1]),
    (3, 2, &[1, 1, 1]),
    (4, 1, &[1, 1, 3, 3]),
    (4, 4, &[1, 3, 5, 13]),
    (5, 2, &[1, 1, 5, 5, 17]),
];

pub const MAX_DIMS: usize = DIRECTION_TABLE.len() + 1;

/// Sobol' sequence in natural (binary) index order.
#[derive(Debug, Clone)]
pub struct Sobol {
    directions: Vec<[u32; BITS]>,
}

impl Sobol {
    pub fn new(dims: usize) -> Result<Self> {
        if dims == 0 || dims > MAX_DIMS {
            return Err(Error::OutOfRange(format!("Sobol' dimension must be in 1..={MAX_DIMS}, got {dims}")));
        }
        let mut directions = Vec::with_capacity(dims);
        let mut first = [0u32; BITS];
        for (j, v) in first.iter_mut().enumerate() {
            *v = 1 << (BITS - 1 - j);
        }
        directions.push(first);
        for &(s, a, m) in &DIRECTION_TABLE[..dims - 1] {
            let s = s as usize;
            let mut v = [0u32; BITS];
            for j in 0..s {
                v[j] = m[j] << (BITS - 1 - j);
            }
            for j in s..BITS {
                v[j] = v[j - s] ^ (v[j - s] >> s);
                for k in 1..s {
                    if (a >> (s - 1 - k)) & 1 == 1 {
                        v[j] ^= v[j - k];
                    }
                }
            }
            directions.push(v);
        }
        Ok(Self { directions })
    }

    pub fn dims(&self) -> usize {
        self.directions.len()
    }

    /// Integer coordinates of element `index` (element 0 is the origin).
    pub fn point_bits(&self, index: u32) -> Vec<u32> {
        self.directions
            .iter()
            .map(|v| (0..BITS).filter(|&b| (index >> b) & 1 == 1).fold(0u32, |acc, b| acc ^ v[b]))
            .collect()
    }

    pub fn point(&self, index: u32) -> Vec<f64> {
        self.point_bits(index).into_iter().map(to_unit).collect()
    }
}

pub(crate) fn to_unit(bits: u32) -> f64 {
    bits as f64 / (1u64 << BITS) as f64
}

/// `count` points after discarding the first `skip` elements and then keeping
/// every `(leap + 1)`-th element. A nonzero `shift` word per dimension applies
/// a digital (XOR) shift, which preserves the net structure.
pub fn sobol_sequence(dims: usize, count: usize, skip: u32, leap: u32, shift: Option<&[u32]>) -> Result<Vec<Vec<f64>>> {
    let sobol = Sobol::new(dims)?;
    if let Some(s) = shift {
        if s.len() != dims {
            return Err(Error::DimensionMismatch { expected: dims, got: s.len() });
        }
    }
    (0..count)
        .map(|j| {
            let index = (j as u64) * (leap as u64 + 1) + skip as u64;
            let index = u32::try_from(index).map_err(|_| Error::OutOfRange("Sobol' index exceeds 32 bits".into()))?;
            let bits = sobol.point_bits(index);
            Ok(match shift {
                Some(s) => bits.iter().zip(s).map(|(b, x)| to_unit(b ^ x)).collect(),
                None => bits.into_iter().map(to_unit).collect(),
            })
        })
        .collect()
}
