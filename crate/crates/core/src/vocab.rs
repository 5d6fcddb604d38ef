//! Byte-level vocabulary: 256 byte tokens followed by the special tokens.

pub const BOS: usize = 256;
pub const MASK: usize = 257;
pub const PAD: usize = 258;
/// Reserved; never produced by [`encode`].
pub const SEP: usize = 259;

/// Smallest vocabulary that holds every byte and every special token.
pub const MIN_VOCAB: usize = 259;
pub const DEFAULT_VOCAB: usize = 260;

pub fn is_special(id: usize) -> bool {
    id >= 256
}

/// `BOS` followed by the UTF-8 bytes of `text`, cut to `max_len` tokens.
pub fn encode(text: &str, max_len: usize) -> Vec<usize> {
    std::iter::once(BOS)
        .chain(text.bytes().map(usize::from))
        .take(max_len)
        .collect()
}

/// Inverse of [`encode`] for the byte tokens; specials are dropped.
pub fn decode(tokens: &[usize]) -> String {
    let bytes: Vec<u8> = tokens
        .iter()
        .filter(|&&t| t < 256)
        .map(|&t| t as u8)
        .collect();
    String::from_utf8_lossy(&bytes).into_owned()
}

/// Right-pads with `PAD` to `len`.
pub fn pad_to(tokens: &[usize], len: usize) -> Vec<usize> {
    let mut out = tokens.to_vec();
    out.resize(len.max(tokens.len()), PAD);
    out
}
