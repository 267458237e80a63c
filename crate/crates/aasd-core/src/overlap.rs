//! Token-overlap metrics between an input and a reference: longest common
//! subsequence ratio, with a contiguous-substring variant.

use crate::types::TokenId;

/// Length of the longest common subsequence. Standard O(|a|*|b|) dynamic
/// program with a rolling row.
pub fn lcs_len(a: &[TokenId], b: &[TokenId]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for &x in a {
        for (j, &y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Length of the longest common contiguous substring.
pub fn common_substring_len(a: &[TokenId], b: &[TokenId]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut best = 0usize;
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for &x in a {
        for (j, &y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { 0 };
            best = best.max(cur[j + 1]);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    best
}

/// Overlap ratio `LCS(x, y) / |y|`. `None` when the reference is empty.
pub fn overlap_ratio(x: &[TokenId], y: &[TokenId]) -> Option<f64> {
    (!y.is_empty()).then(|| lcs_len(x, y) as f64 / y.len() as f64)
}

/// Contiguous variant: longest common substring over `|y|`.
pub fn substring_overlap_ratio(x: &[TokenId], y: &[TokenId]) -> Option<f64> {
    (!y.is_empty()).then(|| common_substring_len(x, y) as f64 / y.len() as f64)
}
