/// Odometer step over a mixed-radix index; `false` once it wraps around.
pub(crate) fn advance(idx: &mut [usize], sizes: &[usize]) -> bool {
    for i in (0..idx.len()).rev() {
        idx[i] += 1;
        if idx[i] < sizes[i] {
            return true;
        }
        idx[i] = 0;
    }
    false
}
