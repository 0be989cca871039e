//! Dense boolean grids, kept separate from the run-length code so that the
//! corruption ledger can cross-check it.

use crate::rle::BinaryMask;

/// Expands runs into a row-major grid without going through `rle::decode`.
pub fn expand(mask: &BinaryMask) -> Vec<bool> {
    let mut out = Vec::with_capacity(mask.pixel_count() as usize);
    let mut value = false;
    for &run in mask.runs() {
        out.extend(std::iter::repeat(value).take(run as usize));
        value = !value;
    }
    out.resize(mask.pixel_count() as usize, false);
    out
}

pub fn count(grid: &[bool]) -> u64 {
    grid.iter().filter(|&&b| b).count() as u64
}

/// Intersection over union of two same-size grids; 0 when both are empty.
pub fn iou(a: &[bool], b: &[bool]) -> f64 {
    assert_eq!(a.len(), b.len(), "grid sizes differ");
    let (mut inter, mut uni) = (0u64, 0u64);
    for (&x, &y) in a.iter().zip(b) {
        inter += u64::from(x && y);
        uni += u64::from(x || y);
    }
    if uni == 0 {
        0.0
    } else {
        inter as f64 / uni as f64
    }
}

/// Erosion by a `(2k+1)`-square, equal to `k` rounds of 3x3 erosion; pixels
/// outside the canvas count as background.
pub fn erode(grid: &[bool], height: u32, width: u32, k: u32) -> Vec<bool> {
    if k == 0 {
        return grid.to_vec();
    }
    let (h, w, k) = (height as usize, width as usize, k as usize);
    // a pixel survives a pass if the window around it is all foreground
    let pass = |src: &[bool], len: usize, lines: usize, at: &dyn Fn(usize, usize) -> usize| {
        let mut out = vec![false; src.len()];
        for line in 0..lines {
            let mut run = 0usize;
            let mut runs = vec![0usize; len];
            for i in 0..len {
                run = if src[at(line, i)] { run + 1 } else { 0 };
                runs[i] = run;
            }
            for i in 0..len {
                if i >= k && i + k < len {
                    out[at(line, i)] = runs[i + k] >= 2 * k + 1;
                }
            }
        }
        out
    };
    let rows = pass(grid, w, h, &|y, x| y * w + x);
    pass(&rows, h, w, &|x, y| y * w + x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rle::encode;

    #[test]
    fn expand_matches_source_grid() {
        let g = vec![false, true, true, false, false, true];
        assert_eq!(expand(&encode(&g, 2, 3).unwrap()), g);
        assert_eq!(expand(&BinaryMask::empty(2, 2)), vec![false; 4]);
    }

    #[test]
    fn erosion_peels_one_ring() {
        let g = vec![true; 25];
        let e = erode(&g, 5, 5, 1);
        assert_eq!(count(&e), 9);
        assert_eq!(count(&erode(&g, 5, 5, 2)), 1);
        assert_eq!(count(&erode(&g, 5, 5, 3)), 0);
        assert_eq!(erode(&g, 5, 5, 0), g);
    }

    fn erode_stepwise(grid: &[bool], h: u32, w: u32, k: u32) -> Vec<bool> {
        let (h, w) = (h as i64, w as i64);
        let mut cur = grid.to_vec();
        for _ in 0..k {
            let prev = cur.clone();
            for y in 0..h {
                for x in 0..w {
                    cur[(y * w + x) as usize] = (-1..=1).all(|dy| {
                        (-1..=1).all(|dx| {
                            let (yy, xx) = (y + dy, x + dx);
                            (0..h).contains(&yy) && (0..w).contains(&xx) && prev[(yy * w + xx) as usize]
                        })
                    });
                }
            }
        }
        cur
    }

    #[test]
    fn square_erosion_equals_repeated_3x3() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        for _ in 0..300 {
            let (h, w) = (rng.gen_range(1..12), rng.gen_range(1..12));
            let p = rng.gen_range(0.5..1.0);
            let g: Vec<bool> = (0..h * w).map(|_| rng.gen_bool(p)).collect();
            for k in 0..4 {
                assert_eq!(erode(&g, h, w, k), erode_stepwise(&g, h, w, k));
            }
        }
    }

    #[test]
    fn iou_cases() {
        assert_eq!(iou(&[false; 4], &[false; 4]), 0.0);
        assert_eq!(iou(&[true, true, false, false], &[true, false, true, false]), 1.0 / 3.0);
    }
}
