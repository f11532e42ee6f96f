/// Bit-reversal permutation of `[0, n)`.
///
/// For non-powers of two the permutation of the next power of two is
/// generated and only the entries below `n` are kept, in order.
pub fn bit_reversal_perm(n: usize) -> Vec<usize> {
    if n <= 1 {
        return vec![0; n];
    }
    let p = n.next_power_of_two();
    let bits = p.trailing_zeros();
    (0..p)
        .map(|i| i.reverse_bits() >> (usize::BITS - bits))
        .filter(|&j| j < n)
        .collect()
}

/// Whether `p` is a bijection on `[0, p.len())`.
pub fn is_permutation(p: &[usize]) -> bool {
    let mut seen = vec![false; p.len()];
    p.iter().all(|&i| i < seen.len() && !std::mem::replace(&mut seen[i], true))
}
