use std::hash::Hasher;

use fnv::FnvHasher;

pub const DEFAULT_EMBED_DIM: usize = 64;

/// Lowercased alphanumeric tokens.
pub fn tokenize(u: &str) -> impl Iterator<Item = String> + '_ {
    u.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_lowercase)
}

/// Bucket and sign for one token: FNV-1a 64, low bits pick the bucket and
/// the top bit picks the sign.
pub fn hash_token(token: &str, d: usize) -> (usize, f64) {
    let mut h = FnvHasher::default();
    h.write(token.as_bytes());
    let v = h.finish();
    let bucket = (v % d as u64) as usize;
    let sign = if v >> 63 == 0 { 1.0 } else { -1.0 };
    (bucket, sign)
}

/// Signed feature hashing followed by L2 normalization. Inputs without
/// tokens map to the zero vector.
pub fn embed_text(u: &str, d: usize) -> Vec<f64> {
    let mut v = vec![0.0; d];
    if d == 0 {
        return v;
    }
    for tok in tokenize(u) {
        let (b, s) = hash_token(&tok, d);
        v[b] += s;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_norm_and_deterministic() {
        let a = embed_text("IF at(cell_adjacent_hole) THEN outcome(failure)", 64);
        assert_eq!(a, embed_text("IF at(cell_adjacent_hole) THEN outcome(failure)", 64));
        assert!((dot(&a, &a) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn punctuation_only_is_zero() {
        assert_eq!(embed_text("(),;", 8), vec![0.0; 8]);
    }

    #[test]
    fn case_insensitive() {
        assert_eq!(embed_text("Avoid HOLES", 64), embed_text("avoid holes", 64));
    }
}
