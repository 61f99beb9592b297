//! 4-connected component labeling of binary masks.

use crate::raster::Mask;

/// Components of `mask` in raster order of their first pixel.
pub fn connected_components(mask: &Mask) -> Vec<Mask> {
    let (h, w) = mask.dims();
    let mut seen = vec![false; h * w];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for start in mask.ones() {
        if seen[start] {
            continue;
        }
        let mut comp = Mask::zeros(h, w);
        seen[start] = true;
        stack.push(start);
        while let Some(p) = stack.pop() {
            comp.set(p, true);
            let (y, x) = (p / w, p % w);
            let mut visit = |q: usize| {
                if mask.get(q) && !seen[q] {
                    seen[q] = true;
                    stack.push(q);
                }
            };
            if y > 0 {
                visit(p - w);
            }
            if y + 1 < h {
                visit(p + w);
            }
            if x > 0 {
                visit(p - 1);
            }
            if x + 1 < w {
                visit(p + 1);
            }
        }
        out.push(comp);
    }
    out
}

/// Pixels of `mask` with a 4-neighbour outside the mask or outside the image.
pub fn boundary(mask: &Mask) -> Mask {
    let (h, w) = mask.dims();
    Mask::from_fn(h, w, |p| {
        if !mask.get(p) {
            return false;
        }
        let (y, x) = (p / w, p % w);
        y == 0 || x == 0 || y + 1 == h || x + 1 == w || !mask.get(p - w) || !mask.get(p + w) || !mask.get(p - 1) || !mask.get(p + 1)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(rows: &[&str]) -> Mask {
        let w = rows[0].len();
        let bits: Vec<bool> = rows.iter().flat_map(|r| r.chars().map(|c| c == '#')).collect();
        Mask::new(rows.len(), w, bits).unwrap()
    }

    #[test]
    fn diagonal_pixels_are_separate() {
        let m = parse(&["#.", ".#"]);
        assert_eq!(connected_components(&m).len(), 2);
    }

    #[test]
    fn components_partition_the_mask() {
        let m = parse(&["##..#", "#..##", "..#..", "###.#"]);
        let comps = connected_components(&m);
        assert_eq!(comps.len(), 4);
        let total: usize = comps.iter().map(|c| c.count()).sum();
        assert_eq!(total, m.count());
        for (i, a) in comps.iter().enumerate() {
            for b in &comps[i + 1..] {
                assert!(!a.intersects(b));
            }
        }
    }

    #[test]
    fn boundary_of_block() {
        let m = parse(&[".....", ".###.", ".###.", ".###.", "....."]);
        let b = boundary(&m);
        assert_eq!(b.count(), 8);
        assert!(!b.get(12));
    }
}
