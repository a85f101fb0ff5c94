//! 4-connected component labeling on row-major grids.

use std::collections::VecDeque;

/// Labels 4-connected components of pixels that satisfy `include`, where two
/// neighbours join when `same(a, b)` holds. Excluded pixels get `u32::MAX`.
///
/// Components are numbered in raster-scan order of their first pixel.
pub fn label_components(
    width: usize,
    height: usize,
    include: impl Fn(usize) -> bool,
    same: impl Fn(usize, usize) -> bool,
) -> (Vec<u32>, usize) {
    let n = width * height;
    let mut ids = vec![u32::MAX; n];
    let mut count = 0u32;
    let mut queue = VecDeque::new();
    for start in 0..n {
        if ids[start] != u32::MAX || !include(start) {
            continue;
        }
        ids[start] = count;
        queue.push_back(start);
        while let Some(p) = queue.pop_front() {
            for q in neighbours4(p, width, height) {
                if ids[q] == u32::MAX && include(q) && same(p, q) {
                    ids[q] = count;
                    queue.push_back(q);
                }
            }
        }
        count += 1;
    }
    (ids, count as usize)
}

/// Up to four edge-adjacent neighbours of pixel `p`.
pub fn neighbours4(p: usize, width: usize, height: usize) -> impl Iterator<Item = usize> {
    let x = p % width;
    let y = p / width;
    [
        (x > 0).then(|| p - 1),
        (x + 1 < width).then(|| p + 1),
        (y > 0).then(|| p - width),
        (y + 1 < height).then(|| p + width),
    ]
    .into_iter()
    .flatten()
}
