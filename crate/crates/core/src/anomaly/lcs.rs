//! Longest common subsequence by dynamic programming.

/// `(n+1)×(m+1)` prefix table, row-major: `t[i*(m+1)+j]` is the LCS length of
/// `a[..i]` and `b[..j]`.
fn prefix_table<T: PartialEq>(a: &[T], b: &[T]) -> Vec<u32> {
    let w = b.len() + 1;
    let mut t = vec![0u32; (a.len() + 1) * w];
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            t[i * w + j] = if a[i - 1] == b[j - 1] {
                t[(i - 1) * w + j - 1] + 1
            } else {
                t[(i - 1) * w + j].max(t[i * w + j - 1])
            };
        }
    }
    t
}

/// Length of the LCS of `a` and `b`, in O(min(n, m)) memory.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let (long, short) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    let mut prev = vec![0usize; short.len() + 1];
    let mut cur = vec![0usize; short.len() + 1];
    for x in long {
        for (j, y) in short.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[short.len()]
}

/// Index pairs `(i, j)` with `a[i] == b[j]` forming a longest common
/// subsequence, in increasing order.
///
/// The backtrace starts at the bottom-right cell and prefers the diagonal on a
/// match, then moving up (dropping from `a`), then left.
pub fn lcs_alignment<T: PartialEq>(a: &[T], b: &[T]) -> Vec<(usize, usize)> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let w = b.len() + 1;
    let t = prefix_table(a, b);
    let mut pairs = Vec::with_capacity(t[a.len() * w + b.len()] as usize);
    let (mut i, mut j) = (a.len(), b.len());
    while i > 0 && j > 0 {
        if a[i - 1] == b[j - 1] {
            pairs.push((i - 1, j - 1));
            i -= 1;
            j -= 1;
        } else if t[(i - 1) * w + j] >= t[i * w + j - 1] {
            i -= 1;
        } else {
            j -= 1;
        }
    }
    pairs.reverse();
    pairs
}

/// A longest common subsequence of `a` and `b`.
pub fn lcs_pair<T: PartialEq + Clone>(a: &[T], b: &[T]) -> Vec<T> {
    lcs_alignment(a, b)
        .into_iter()
        .map(|(i, _)| a[i].clone())
        .collect()
}

/// Linear-time subsequence test.
pub fn is_subsequence<T: PartialEq>(needle: &[T], haystack: &[T]) -> bool {
    let mut it = haystack.iter();
    needle.iter().all(|x| it.any(|y| y == x))
}
