pub const SEM_DIM: usize = 128;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// Lowercased alphanumeric runs.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase().split(|c: char| !c.is_alphanumeric()).filter(|s| !s.is_empty()).map(str::to_owned).collect()
}

/// Hashed bag of tokens, L2-normalized; the empty bag maps to zero.
pub fn encode_text(text: &str) -> Vec<f64> {
    let mut counts = [0u32; SEM_DIM];
    for tok in tokenize(text) {
        counts[(fnv1a64(tok.as_bytes()) % SEM_DIM as u64) as usize] += 1;
    }
    let norm_sq: u64 = counts.iter().map(|&c| c as u64 * c as u64).sum();
    if norm_sq == 0 {
        return vec![0.0; SEM_DIM];
    }
    let norm = (norm_sq as f64).sqrt();
    counts.iter().map(|&c| c as f64 / norm).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn empty_text_is_zero() {
        assert!(encode_text("").iter().all(|&x| x == 0.0));
        assert!(encode_text(" ,.!").iter().all(|&x| x == 0.0));
    }

    #[test]
    fn repeated_token_is_colinear() {
        assert_eq!(encode_text("walk walk"), encode_text("walk"));
    }

    #[test]
    fn case_and_punctuation_ignored() {
        assert_eq!(encode_text("A person, WALKING."), encode_text("a person walking"));
    }

    proptest! {
        #[test]
        fn bag_is_order_invariant(words in prop::collection::vec("[a-z0-9]{1,6}", 0..12), seed in any::<u64>()) {
            let mut shuffled = words.clone();
            let n = shuffled.len();
            if n > 1 {
                let mut s = seed;
                for i in (1..n).rev() {
                    s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    shuffled.swap(i, (s >> 33) as usize % (i + 1));
                }
            }
            prop_assert_eq!(encode_text(&words.join(" ")), encode_text(&shuffled.join(" ")));
        }

        #[test]
        fn norm_is_zero_or_one(text in ".{0,80}") {
            let v = encode_text(&text);
            let n: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assert!(n == 0.0 || (n - 1.0).abs() < 1e-9);
        }
    }
}
