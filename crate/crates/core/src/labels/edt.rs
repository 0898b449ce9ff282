//! Exact squared Euclidean distance transform (lower envelope of parabolas,
//! one pass per axis).

const FAR: f64 = 1e20;

fn envelope_1d(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let fq = f[q] + (q * q) as f64;
        let mut s;
        loop {
            let p = v[k];
            s = (fq - (f[p] + (p * p) as f64)) / (2 * q - 2 * p) as f64;
            // z[0] is -inf, so this never pops past the first parabola.
            if s <= z[k] {
                k -= 1;
            } else {
                break;
            }
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, out) in d.iter_mut().enumerate().take(n) {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let dq = q as f64 - p as f64;
        *out = dq * dq + f[p];
    }
}

/// Squared distance from every pixel to the nearest `true` pixel of `sources`
/// (row-major, `width × height`). With no sources every entry is at least `1e20`.
pub fn squared_distance_transform(sources: &[bool], width: usize, height: usize) -> Vec<f64> {
    assert_eq!(sources.len(), width * height);
    let n = width.max(height);
    let (mut f, mut d) = (vec![0.0; n], vec![0.0; n]);
    let (mut v, mut z) = (vec![0usize; n], vec![0.0; n + 1]);
    let mut grid: Vec<f64> = sources.iter().map(|&s| if s { 0.0 } else { FAR }).collect();

    for x in 0..width {
        for y in 0..height {
            f[y] = grid[y * width + x];
        }
        envelope_1d(&f[..height], &mut d[..height], &mut v, &mut z);
        for y in 0..height {
            grid[y * width + x] = d[y];
        }
    }
    for y in 0..height {
        let row = &mut grid[y * width..(y + 1) * width];
        f[..width].copy_from_slice(row);
        envelope_1d(&f[..width], &mut d[..width], &mut v, &mut z);
        row.copy_from_slice(&d[..width]);
    }
    grid
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute(sources: &[bool], w: usize, h: usize) -> Vec<f64> {
        (0..w * h)
            .map(|i| {
                let (y, x) = ((i / w) as i64, (i % w) as i64);
                sources
                    .iter()
                    .enumerate()
                    .filter(|(_, &s)| s)
                    .map(|(j, _)| {
                        let (yy, xx) = ((j / w) as i64, (j % w) as i64);
                        ((y - yy).pow(2) + (x - xx).pow(2)) as f64
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    }

    #[test]
    fn single_source() {
        let mut s = vec![false; 9];
        s[4] = true;
        let d = squared_distance_transform(&s, 3, 3);
        assert_eq!(d, vec![2.0, 1.0, 2.0, 1.0, 0.0, 1.0, 2.0, 1.0, 2.0]);
    }

    proptest! {
        #[test]
        fn matches_brute_force(w in 1usize..12, h in 1usize..12, bits in prop::collection::vec(prop::bool::weighted(0.15), 144)) {
            let s = &bits[..w * h];
            if s.iter().any(|&b| b) {
                prop_assert_eq!(squared_distance_transform(s, w, h), brute(s, w, h));
            }
        }
    }
}
