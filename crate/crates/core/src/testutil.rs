use crate::image::Mask;

/// 4-connected components of the `false` pixels by breadth-first flood fill,
/// as lists of raster offsets.
pub fn flood_fill_partition(edges: &Mask) -> Vec<Vec<usize>> {
    let (w, h) = edges.dims();
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    for start in 0..w * h {
        if edges.data()[start] || seen[start] {
            continue;
        }
        let mut comp = vec![start];
        seen[start] = true;
        let mut head = 0;
        while head < comp.len() {
            let i = comp[head];
            head += 1;
            let (u, v) = (i % w, i / w);
            let mut push = |j: usize| {
                if !edges.data()[j] && !seen[j] {
                    seen[j] = true;
                    comp.push(j);
                }
            };
            if u > 0 {
                push(i - 1);
            }
            if u + 1 < w {
                push(i + 1);
            }
            if v > 0 {
                push(i - w);
            }
            if v + 1 < h {
                push(i + w);
            }
        }
        out.push(comp);
    }
    out
}
