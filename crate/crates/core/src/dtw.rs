//! Plain dynamic time warping over an implicit cost matrix.

/// Minimal-cost monotone path from `(0, 0)` to `(n − 1, m − 1)` using steps
/// `(1, 1)`, `(1, 0)` and `(0, 1)`. Returns the path and its total cost
/// (the sum of `cost` over every visited cell).
///
/// Ties prefer the diagonal step, then the step that advances `i`.
pub(crate) fn dtw(n: usize, m: usize, cost: impl Fn(usize, usize) -> f64) -> (Vec<(usize, usize)>, f64) {
    assert!(n > 0 && m > 0, "dtw on an empty grid");
    // 0 = diagonal, 1 = from (i-1, j), 2 = from (i, j-1)
    let mut steps = vec![0u8; n * m];
    let mut prev = vec![f64::INFINITY; m];
    let mut cur = vec![f64::INFINITY; m];
    for i in 0..n {
        for j in 0..m {
            let c = cost(i, j);
            if i == 0 && j == 0 {
                cur[0] = c;
                continue;
            }
            let mut best = f64::INFINITY;
            let mut dir = 0u8;
            if i > 0 && j > 0 && prev[j - 1] < best {
                best = prev[j - 1];
                dir = 0;
            }
            if i > 0 && prev[j] < best {
                best = prev[j];
                dir = 1;
            }
            if j > 0 && cur[j - 1] < best {
                best = cur[j - 1];
                dir = 2;
            }
            cur[j] = best + c;
            steps[i * m + j] = dir;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let total = prev[m - 1];

    let mut path = Vec::with_capacity(n + m);
    let (mut i, mut j) = (n - 1, m - 1);
    path.push((i, j));
    while (i, j) != (0, 0) {
        match steps[i * m + j] {
            0 => {
                i -= 1;
                j -= 1;
            }
            1 => i -= 1,
            _ => j -= 1,
        }
        path.push((i, j));
    }
    path.reverse();
    (path, total)
}
