use super::GrayImage;

/// 3×3 median with edge replication.
pub fn median_filter_3x3(img: &GrayImage) -> GrayImage {
    let (w, h) = (img.width(), img.height());
    let mut out = Vec::with_capacity(w * h);
    let mut window = [0u8; 9];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut k = 0;
            for dy in -1..=1 {
                for dx in -1..=1 {
                    window[k] = img.get_clamped(x + dx, y + dy);
                    k += 1;
                }
            }
            window.sort_unstable();
            out.push(window[4]);
        }
    }
    GrayImage::new(w, h, out).expect("dimensions unchanged")
}

/// Separable `[1, 2, 1] / 4` smoothing in both axes (a 3×3 kernel over 16),
/// computed in integers and rounded half-up.
pub fn binomial_blur_3x3(img: &GrayImage) -> GrayImage {
    let (w, h) = (img.width(), img.height());
    // horizontal pass keeps the unnormalized sums (max 1020)
    let mut horiz = vec![0u16; w * h];
    for y in 0..h {
        let row = img.row(y);
        for x in 0..w {
            let l = row[x.saturating_sub(1)] as u16;
            let r = row[(x + 1).min(w - 1)] as u16;
            horiz[y * w + x] = l + 2 * row[x] as u16 + r;
        }
    }
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        let up = y.saturating_sub(1) * w;
        let mid = y * w;
        let down = (y + 1).min(h - 1) * w;
        for x in 0..w {
            let s = horiz[up + x] as u32 + 2 * horiz[mid + x] as u32 + horiz[down + x] as u32;
            out.push(((s + 8) >> 4) as u8);
        }
    }
    GrayImage::new(w, h, out).expect("dimensions unchanged")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_image() -> impl Strategy<Value = GrayImage> {
        (1usize..10, 1usize..10).prop_flat_map(|(w, h)| {
            proptest::collection::vec(any::<u8>(), w * h)
                .prop_map(move |d| GrayImage::new(w, h, d).unwrap())
        })
    }

    #[test]
    fn median_removes_impulse() {
        let mut img = GrayImage::filled(3, 3, 10).unwrap();
        img.set(1, 1, 255);
        assert_eq!(median_filter_3x3(&img).get(1, 1), 10);
    }

    #[test]
    fn median_constant_is_fixed_point() {
        let img = GrayImage::filled(6, 4, 99).unwrap();
        let once = median_filter_3x3(&img);
        assert_eq!(once, img);
        assert_eq!(median_filter_3x3(&once), once);
    }

    #[test]
    fn blur_impulse_response() {
        let mut img = GrayImage::filled(5, 5, 0).unwrap();
        img.set(2, 2, 16);
        let out = binomial_blur_3x3(&img);
        assert_eq!(out.get(2, 2), 4);
        assert_eq!(out.get(1, 1), 1);
        assert_eq!(out.get(3, 1), 1);
        assert_eq!(out.get(2, 1), 2);
        assert_eq!(out.get(0, 0), 0);
    }

    #[test]
    fn blur_constant() {
        let img = GrayImage::filled(7, 3, 255).unwrap();
        assert_eq!(binomial_blur_3x3(&img), img);
    }

    #[test]
    fn single_pixel_images() {
        let img = GrayImage::filled(1, 1, 17).unwrap();
        assert_eq!(median_filter_3x3(&img), img);
        assert_eq!(binomial_blur_3x3(&img), img);
    }

    proptest! {
        #[test]
        fn filters_stay_within_input_range(img in arb_image()) {
            let (lo, hi) = img.min_max();
            for out in [median_filter_3x3(&img), binomial_blur_3x3(&img)] {
                let (olo, ohi) = out.min_max();
                prop_assert!(olo >= lo && ohi <= hi);
            }
        }
    }
}
