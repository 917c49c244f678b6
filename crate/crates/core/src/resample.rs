//! Separable resampling of single-channel `f64` planes.

/// One output sample as a weighted sum of input indices.
pub type Taps = Vec<(usize, f64)>;

/// Box-filter weights: each output cell averages the input cells it covers,
/// weighted by overlap length. Requires `out_len <= in_len`.
pub fn area_taps(in_len: usize, out_len: usize) -> Vec<Taps> {
    assert!(out_len >= 1 && out_len <= in_len, "area resampling only shrinks");
    let scale = in_len as f64 / out_len as f64;
    (0..out_len)
        .map(|o| {
            let (lo, hi) = (o as f64 * scale, (o + 1) as f64 * scale);
            let mut taps = Vec::new();
            let mut i = lo.floor() as usize;
            while (i as f64) < hi && i < in_len {
                let overlap = (hi.min(i as f64 + 1.0) - lo.max(i as f64)).max(0.0);
                if overlap > 0.0 {
                    taps.push((i, overlap / scale));
                }
                i += 1;
            }
            taps
        })
        .collect()
}

/// Linear interpolation at pixel centres (`align_corners = false`), edge
/// clamped. Equal sizes give the identity exactly.
pub fn bilinear_taps(in_len: usize, out_len: usize) -> Vec<Taps> {
    let scale = in_len as f64 / out_len as f64;
    (0..out_len)
        .map(|o| {
            let x = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (in_len - 1) as f64);
            let i0 = x.floor() as usize;
            let frac = x - i0 as f64;
            if frac == 0.0 || i0 + 1 >= in_len {
                vec![(i0, 1.0)]
            } else {
                vec![(i0, 1.0 - frac), (i0 + 1, frac)]
            }
        })
        .collect()
}

/// Applies row taps then column taps to a row-major `h × w` plane.
pub fn resample_plane(plane: &[f64], w: usize, rows: &[Taps], cols: &[Taps]) -> Vec<f64> {
    let h = plane.len() / w;
    let ow = cols.len();
    let mut tmp = vec![0.0; h * ow];
    for y in 0..h {
        let src = &plane[y * w..(y + 1) * w];
        for (ox, taps) in cols.iter().enumerate() {
            tmp[y * ow + ox] = taps.iter().map(|&(i, wt)| src[i] * wt).sum();
        }
    }
    let mut out = vec![0.0; rows.len() * ow];
    for (oy, taps) in rows.iter().enumerate() {
        for ox in 0..ow {
            out[oy * ow + ox] = taps.iter().map(|&(i, wt)| tmp[i * ow + ox] * wt).sum();
        }
    }
    out
}

pub fn resize_area(plane: &[f64], h: usize, w: usize, oh: usize, ow: usize) -> Vec<f64> {
    debug_assert_eq!(plane.len(), h * w);
    resample_plane(plane, w, &area_taps(h, oh), &area_taps(w, ow))
}

pub fn resize_bilinear(plane: &[f64], h: usize, w: usize, oh: usize, ow: usize) -> Vec<f64> {
    debug_assert_eq!(plane.len(), h * w);
    resample_plane(plane, w, &bilinear_taps(h, oh), &bilinear_taps(w, ow))
}
