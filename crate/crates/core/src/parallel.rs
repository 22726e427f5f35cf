//! Deterministic reductions for parallel maps.

/// Work unit for chunked parallel maps over quadrature nodes.
pub(crate) const CHUNK: usize = 2048;

/// Pairwise reduction whose tree shape depends only on `items.len()`, so the
/// floating-point result is independent of thread scheduling.
pub(crate) fn tree_reduce<T, F>(mut items: Vec<T>, combine: F) -> Option<T>
where
    F: Fn(T, T) -> T,
{
    while items.len() > 1 {
        let mut next = Vec::with_capacity(items.len().div_ceil(2));
        let mut it = items.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(combine(a, b)),
                None => next.push(a),
            }
        }
        items = next;
    }
    items.pop()
}
