//! Suffix array construction by induced sorting (SA-IS) and the permuted
//! LCP array derived from it.
//!
//! The construction works on an implicit sentinel: position `n` compares
//! smaller than every suffix, so byte buffers can contain any value,
//! including `0x00`. Recursion reuses the output array as scratch space:
//! the reduced string lives in the tail of `sa` while the reduced suffix
//! array is written to its head. Peak working memory at the top level is
//! the input, the `u32` output array, a type bitmap and a 256-entry bucket
//! table.

/// Sentinel for an unused slot during induction.
const EMPTY: u32 = u32::MAX;

/// Below this length a comparison sort is cheaper than induction.
const NAIVE_THRESHOLD: usize = 16;

/// A suffix array over a byte buffer: `sa[i]` is the start offset of the
/// `i`-th smallest suffix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuffixArray {
    sa: Vec<u32>,
}

impl SuffixArray {
    /// Builds the suffix array of `text` in O(n).
    ///
    /// Panics if `text` is longer than `u32::MAX - 1` bytes; callers split
    /// larger corpora before reaching this point.
    pub fn build(text: &[u8]) -> Self {
        assert!(
            text.len() < EMPTY as usize,
            "suffix array input exceeds 4 GiB; split the corpus"
        );
        let mut sa = vec![0u32; text.len()];
        sais(text, &mut sa, 256);
        SuffixArray { sa }
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.sa
    }

    pub fn len(&self) -> usize {
        self.sa.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sa.is_empty()
    }

    pub fn into_inner(self) -> Vec<u32> {
        self.sa
    }

    /// Permuted LCP array: `plcp[p]` is the length of the longest common
    /// prefix between the suffix at `p` and its predecessor in suffix
    /// order (0 for the smallest suffix). Computed with the Φ method in
    /// place, so the only extra allocation is one `u32` per byte.
    pub fn permuted_lcp(&self, text: &[u8]) -> Vec<u32> {
        let n = text.len();
        debug_assert_eq!(n, self.sa.len());
        let mut phi = vec![EMPTY; n];
        for w in self.sa.windows(2) {
            phi[w[1] as usize] = w[0];
        }
        let mut l = 0usize;
        for i in 0..n {
            let prev = phi[i];
            if prev == EMPTY {
                phi[i] = 0;
                l = 0;
                continue;
            }
            let j = prev as usize;
            while i + l < n && j + l < n && text[i + l] == text[j + l] {
                l += 1;
            }
            phi[i] = l as u32;
            l = l.saturating_sub(1);
        }
        phi
    }
}

trait Symbol: Copy + Ord {
    fn index(self) -> usize;
}

impl Symbol for u8 {
    #[inline]
    fn index(self) -> usize {
        self as usize
    }
}

impl Symbol for u32 {
    #[inline]
    fn index(self) -> usize {
        self as usize
    }
}

/// Fixed-size bitmap for the L/S type of every position (S = set).
struct TypeMap {
    words: Vec<u64>,
}

impl TypeMap {
    fn new(n: usize) -> Self {
        TypeMap { words: vec![0; n.div_ceil(64)] }
    }

    #[inline]
    fn is_s(&self, i: usize) -> bool {
        self.words[i >> 6] >> (i & 63) & 1 == 1
    }

    #[inline]
    fn set_s(&mut self, i: usize) {
        self.words[i >> 6] |= 1 << (i & 63);
    }

    #[inline]
    fn is_lms(&self, i: usize) -> bool {
        i > 0 && self.is_s(i) && !self.is_s(i - 1)
    }
}

fn bucket_bounds<T: Symbol>(s: &[T], bkt: &mut [u32], ends: bool) {
    bkt.iter_mut().for_each(|b| *b = 0);
    for &c in s {
        bkt[c.index()] += 1;
    }
    let mut sum = 0u32;
    for b in bkt.iter_mut() {
        sum += *b;
        *b = if ends { sum } else { sum - *b };
    }
}

fn induce<T: Symbol>(s: &[T], sa: &mut [u32], types: &TypeMap, bkt: &mut [u32]) {
    let n = s.len();
    // L-type suffixes, left to right. The implicit sentinel's predecessor
    // (n - 1) is always L-type and is the first suffix placed.
    bucket_bounds(s, bkt, false);
    let c = s[n - 1].index();
    sa[bkt[c] as usize] = (n - 1) as u32;
    bkt[c] += 1;
    for i in 0..n {
        let v = sa[i];
        if v != EMPTY && v > 0 {
            let p = v as usize - 1;
            if !types.is_s(p) {
                let c = s[p].index();
                sa[bkt[c] as usize] = p as u32;
                bkt[c] += 1;
            }
        }
    }
    // S-type suffixes, right to left.
    bucket_bounds(s, bkt, true);
    for i in (0..n).rev() {
        let v = sa[i];
        if v != EMPTY && v > 0 {
            let p = v as usize - 1;
            if types.is_s(p) {
                let c = s[p].index();
                bkt[c] -= 1;
                sa[bkt[c] as usize] = p as u32;
            }
        }
    }
}

fn naive<T: Symbol>(s: &[T], sa: &mut [u32]) {
    for (i, slot) in sa.iter_mut().enumerate() {
        *slot = i as u32;
    }
    sa.sort_unstable_by(|&a, &b| s[a as usize..].cmp(&s[b as usize..]));
}

fn lms_substrings_equal<T: Symbol>(s: &[T], types: &TypeMap, a: usize, b: usize) -> bool {
    let n = s.len();
    let end_of = |p: usize| {
        let mut q = p + 1;
        while q < n && !types.is_lms(q) {
            q += 1;
        }
        q
    };
    let (end_a, end_b) = (end_of(a), end_of(b));
    if end_a - a != end_b - b {
        return false;
    }
    // Compare inclusive of the terminating LMS character; a substring that
    // runs into the sentinel is unique.
    if end_a == n || end_b == n {
        return false;
    }
    s[a..=end_a] == s[b..=end_b]
}

fn sais<T: Symbol>(s: &[T], sa: &mut [u32], alphabet: usize) {
    let n = s.len();
    debug_assert_eq!(sa.len(), n);
    if n < NAIVE_THRESHOLD {
        naive(s, sa);
        return;
    }

    let mut types = TypeMap::new(n);
    // s[n-1] is L-type: the sentinel after it is smaller.
    for i in (0..n - 1).rev() {
        if s[i] < s[i + 1] || (s[i] == s[i + 1] && types.is_s(i + 1)) {
            types.set_s(i);
        }
    }

    let mut bkt = vec![0u32; alphabet];

    // Stage 1: sort LMS substrings.
    sa.iter_mut().for_each(|v| *v = EMPTY);
    bucket_bounds(s, &mut bkt, true);
    for i in 1..n {
        if types.is_lms(i) {
            let c = s[i].index();
            bkt[c] -= 1;
            sa[bkt[c] as usize] = i as u32;
        }
    }
    induce(s, sa, &types, &mut bkt);

    // Compact sorted LMS positions into the head of `sa`.
    let mut m = 0usize;
    for i in 0..n {
        let p = sa[i] as usize;
        if p < n && types.is_lms(p) {
            sa[m] = p as u32;
            m += 1;
        }
    }
    if m == 0 {
        // Non-increasing input: the first induction is already final.
        return;
    }

    // Name LMS substrings; names are written at m + p/2, which is unique
    // because LMS positions are at least two apart.
    sa[m..].iter_mut().for_each(|v| *v = EMPTY);
    let mut names = 0u32;
    let mut prev: Option<usize> = None;
    for i in 0..m {
        let p = sa[i] as usize;
        if !prev.is_some_and(|q| lms_substrings_equal(s, &types, q, p)) {
            names += 1;
        }
        prev = Some(p);
        sa[m + p / 2] = names - 1;
    }
    let mut j = n;
    for i in (m..n).rev() {
        if sa[i] != EMPTY {
            j -= 1;
            sa[j] = sa[i];
        }
    }

    // Stage 2: suffix array of the reduced string, stored in sa[..m].
    {
        let (head, tail) = sa.split_at_mut(n - m);
        let reduced = &tail[..];
        let reduced_sa = &mut head[..m];
        if (names as usize) < m {
            sais(reduced, reduced_sa, names as usize);
        } else {
            for (i, &name) in reduced.iter().enumerate() {
                reduced_sa[name as usize] = i as u32;
            }
        }
    }

    // Stage 3: map back to text positions and induce the full order.
    let mut k = n - m;
    for i in 1..n {
        if types.is_lms(i) {
            sa[k] = i as u32;
            k += 1;
        }
    }
    for i in 0..m {
        sa[i] = sa[n - m + sa[i] as usize];
    }
    sa[m..].iter_mut().for_each(|v| *v = EMPTY);
    bucket_bounds(s, &mut bkt, true);
    for i in (0..m).rev() {
        let p = sa[i];
        sa[i] = EMPTY;
        let c = s[p as usize].index();
        bkt[c] -= 1;
        sa[bkt[c] as usize] = p;
    }
    induce(s, sa, &types, &mut bkt);
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_force(text: &[u8]) -> Vec<u32> {
        let mut idx: Vec<u32> = (0..text.len() as u32).collect();
        idx.sort_by(|&a, &b| text[a as usize..].cmp(&text[b as usize..]));
        idx
    }

    fn brute_lcp(text: &[u8], sa: &[u32]) -> Vec<u32> {
        let mut plcp = vec![0u32; text.len()];
        for w in sa.windows(2) {
            let (a, b) = (w[0] as usize, w[1] as usize);
            let l = text[a..].iter().zip(&text[b..]).take_while(|(x, y)| x == y).count();
            plcp[b] = l as u32;
        }
        plcp
    }

    #[test]
    fn banana() {
        assert_eq!(SuffixArray::build(b"banana").as_slice(), &[5, 3, 1, 0, 4, 2]);
    }

    #[test]
    fn repeated_single_byte() {
        assert_eq!(SuffixArray::build(b"aaaa").as_slice(), &[3, 2, 1, 0]);
        let long = vec![b'a'; 1000];
        let expected: Vec<u32> = (0..1000).rev().collect();
        assert_eq!(SuffixArray::build(&long).as_slice(), &expected[..]);
    }

    #[test]
    fn singleton_and_empty() {
        assert_eq!(SuffixArray::build(b"x").as_slice(), &[0]);
        assert!(SuffixArray::build(b"").is_empty());
    }

    #[test]
    fn handles_zero_and_ff_bytes() {
        let text = b"\x00\xff\x00\xff\x00ab\xffab\x00\x00\xff\xff\x00abab\xff\x00\x00";
        assert_eq!(SuffixArray::build(text).as_slice(), &brute_force(text)[..]);
    }

    #[test]
    fn long_periodic_inputs() {
        for period in [1usize, 2, 3, 7, 50] {
            let text: Vec<u8> = (0..5000).map(|i| b'a' + (i % period) as u8).collect();
            assert_eq!(SuffixArray::build(&text).as_slice(), &brute_force(&text)[..]);
        }
    }

    #[test]
    fn lcp_banana() {
        let sa = SuffixArray::build(b"banana");
        let plcp = sa.permuted_lcp(b"banana");
        // suffix order: a, ana, anana, banana, na, nana
        let in_order: Vec<u32> = sa.as_slice().iter().map(|&p| plcp[p as usize]).collect();
        assert_eq!(in_order, vec![0, 1, 3, 0, 0, 2]);
    }

    proptest! {
        #[test]
        fn matches_brute_force(text in proptest::collection::vec(0u8..4, 0..400)) {
            let sa = SuffixArray::build(&text);
            prop_assert_eq!(sa.as_slice(), &brute_force(&text)[..]);
            prop_assert_eq!(sa.permuted_lcp(&text), brute_lcp(&text, sa.as_slice()));
        }

        #[test]
        fn matches_brute_force_full_alphabet(text in proptest::collection::vec(any::<u8>(), 0..2000)) {
            let sa = SuffixArray::build(&text);
            prop_assert_eq!(sa.as_slice(), &brute_force(&text)[..]);
        }
    }
}
