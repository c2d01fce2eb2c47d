use super::{GrayImage, ImageError};

/// Summed-area tables of intensities and squared intensities.
///
/// Both tables are `(width + 1) × (height + 1)` with a zero first row and
/// column, so `sums[y][x]` is the sum over `[0, x) × [0, y)`.
#[derive(Clone, Debug)]
pub struct IntegralImage {
    width: usize,
    height: usize,
    sums: Vec<u64>,
    sq_sums: Vec<u64>,
}

pub fn build_integrals(img: &GrayImage) -> IntegralImage {
    let (w, h) = (img.width(), img.height());
    let stride = w + 1;
    let mut sums = vec![0u64; stride * (h + 1)];
    let mut sq_sums = vec![0u64; stride * (h + 1)];
    for y in 0..h {
        let mut row_sum = 0u64;
        let mut row_sq = 0u64;
        for (x, &v) in img.row(y).iter().enumerate() {
            let v = v as u64;
            row_sum += v;
            row_sq += v * v;
            let i = (y + 1) * stride + x + 1;
            sums[i] = sums[i - stride] + row_sum;
            sq_sums[i] = sq_sums[i - stride] + row_sq;
        }
    }
    IntegralImage {
        width: w,
        height: h,
        sums,
        sq_sums,
    }
}

impl IntegralImage {
    /// Width of the source image (the table is one wider).
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Table entry at `(x, y)`, `0 ≤ x ≤ width`, `0 ≤ y ≤ height`.
    pub fn sum_at(&self, x: usize, y: usize) -> u64 {
        self.sums[y * (self.width + 1) + x]
    }

    pub fn sq_sum_at(&self, x: usize, y: usize) -> u64 {
        self.sq_sums[y * (self.width + 1) + x]
    }

    pub fn rect_sum(
        &self,
        x: usize,
        y: usize,
        w: usize,
        h: usize,
        squared: bool,
    ) -> Result<u64, ImageError> {
        if x + w > self.width || y + h > self.height {
            return Err(ImageError::OutOfBounds {
                x,
                y,
                w,
                h,
                width: self.width,
                height: self.height,
            });
        }
        let table = if squared { &self.sq_sums } else { &self.sums };
        Ok(self.corner_sum(table, x, y, w, h))
    }

    /// The plain table, row-major with stride `width + 1`.
    #[inline]
    pub(crate) fn sums(&self) -> &[u64] {
        &self.sums
    }

    /// Unchecked variant for inner loops that have already validated the
    /// window. Panics (via slice indexing) if the rectangle is out of range.
    #[inline]
    pub(crate) fn sum_unchecked(&self, x: usize, y: usize, w: usize, h: usize) -> u64 {
        self.corner_sum(&self.sums, x, y, w, h)
    }

    #[inline]
    pub(crate) fn sq_sum_unchecked(&self, x: usize, y: usize, w: usize, h: usize) -> u64 {
        self.corner_sum(&self.sq_sums, x, y, w, h)
    }

    #[inline]
    fn corner_sum(&self, table: &[u64], x: usize, y: usize, w: usize, h: usize) -> u64 {
        let stride = self.width + 1;
        let top = y * stride;
        let bottom = (y + h) * stride;
        // a + d >= b + c always holds for a summed-area table, so the
        // unsigned arithmetic cannot underflow when evaluated in this order
        table[bottom + x + w] + table[top + x] - table[top + x + w] - table[bottom + x]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_pixel() {
        let ii = build_integrals(&GrayImage::filled(1, 1, 200).unwrap());
        assert_eq!(ii.sum_at(1, 1), 200);
        assert_eq!(ii.sq_sum_at(1, 1), 40_000);
        assert_eq!(ii.sum_at(0, 1), 0);
        assert_eq!(ii.sum_at(1, 0), 0);
    }

    #[test]
    fn ones() {
        let ii = build_integrals(&GrayImage::filled(3, 3, 1).unwrap());
        assert_eq!(ii.sum_at(3, 3), 9);
        let ii = build_integrals(&GrayImage::filled(4, 4, 1).unwrap());
        assert_eq!(ii.rect_sum(0, 0, 4, 4, false).unwrap(), 16);
    }

    #[test]
    fn zero_area_and_bounds() {
        let ii = build_integrals(&GrayImage::filled(4, 4, 9).unwrap());
        assert_eq!(ii.rect_sum(2, 1, 0, 3, false).unwrap(), 0);
        assert_eq!(ii.rect_sum(4, 4, 0, 0, true).unwrap(), 0);
        assert!(matches!(
            ii.rect_sum(1, 1, 4, 1, false),
            Err(ImageError::OutOfBounds { .. })
        ));
    }

    #[test]
    fn squared_table() {
        let img = GrayImage::new(2, 1, vec![3, 4]).unwrap();
        let ii = build_integrals(&img);
        assert_eq!(ii.rect_sum(0, 0, 2, 1, true).unwrap(), 25);
        assert_eq!(ii.rect_sum(1, 0, 1, 1, true).unwrap(), 16);
    }

    #[test]
    fn large_image_does_not_overflow() {
        // 2^23 pixels of 255: squared sums reach ~5.5e11
        let img = GrayImage::filled(4096, 2048, 255).unwrap();
        let ii = build_integrals(&img);
        assert_eq!(ii.sum_at(4096, 2048), 255 * 4096 * 2048);
        assert_eq!(ii.sq_sum_at(4096, 2048), 255 * 255 * 4096 * 2048);
    }
}
