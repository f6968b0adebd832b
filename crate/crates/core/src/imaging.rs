//! Intensity and depth grids, bilinear sampling, gradients and pyramids.

use nalgebra::Vector2;

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, PixelCoord};
use crate::scalar::{lit, Real};

/// A scalar field over continuous pixel coordinates.
///
/// Grid images implement this with bilinear interpolation; the synthetic
/// renderer implements it analytically so that Jacobians can be checked on
/// surfaces with continuous derivatives.
pub trait Surface<T: Real> {
    fn width(&self) -> usize;
    fn height(&self) -> usize;

    /// Value at `p`, `None` outside the domain or where data is missing.
    fn sample(&self, p: &PixelCoord<T>) -> Option<T>;

    /// Spatial derivative `(∂/∂u, ∂/∂v)` at `p`.
    fn gradient(&self, p: &PixelCoord<T>) -> Option<Vector2<T>>;
}

/// Bilinear cell lookup: top-left lattice index and fractional offsets.
fn cell<T: Real>(p: &PixelCoord<T>, width: usize, height: usize) -> Option<(usize, usize, T, T)> {
    if !p.is_finite() {
        return None;
    }
    let max_u: T = lit((width - 1) as f64);
    let max_v: T = lit((height - 1) as f64);
    if p.u < T::zero() || p.v < T::zero() || p.u > max_u || p.v > max_v {
        return None;
    }
    let x0 = num_traits::ToPrimitive::to_usize(&p.u.floor())?.min(width - 2);
    let y0 = num_traits::ToPrimitive::to_usize(&p.v.floor())?.min(height - 2);
    let fx = p.u - lit(x0 as f64);
    let fy = p.v - lit(y0 as f64);
    Some((x0, y0, fx, fy))
}

fn central_difference<T: Real, S: Surface<T> + ?Sized>(s: &S, p: &PixelCoord<T>) -> Option<Vector2<T>> {
    let one = T::one();
    let max_u: T = lit((s.width() - 2) as f64);
    let max_v: T = lit((s.height() - 2) as f64);
    if !(p.u >= one && p.v >= one && p.u <= max_u && p.v <= max_v) {
        return None;
    }
    let half: T = lit(0.5);
    let du = s.sample(&PixelCoord::new(p.u + one, p.v))? - s.sample(&PixelCoord::new(p.u - one, p.v))?;
    let dv = s.sample(&PixelCoord::new(p.u, p.v + one))? - s.sample(&PixelCoord::new(p.u, p.v - one))?;
    Some(Vector2::new(du * half, dv * half))
}

/// Grayscale image with values in `[0, 1]`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct IntensityImage<T: Real> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Real> IntensityImage<T> {
    pub fn new(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        check_shape(width, height, data.len())?;
        if let Some(bad) = data
            .iter()
            .position(|v| !v.is_finite() || *v < T::zero() || *v > T::one())
        {
            return Err(Error::InvalidInput(format!(
                "intensity at index {bad} outside [0, 1]"
            )));
        }
        Ok(Self { width, height, data })
    }

    /// Builds an image from `f(col, row)`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                data.push(f(col, row));
            }
        }
        Self::new(width, height, data)
    }

    pub fn constant(width: usize, height: usize, value: T) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> T {
        self.data[row * self.width + col]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn mean(&self) -> T {
        let sum = self.data.iter().fold(T::zero(), |acc, v| acc + *v);
        sum / lit((self.data.len()) as f64)
    }

    fn downsample(&self) -> Self {
        let (w, h) = (self.width / 2, self.height / 2);
        let quarter: T = lit(0.25);
        let mut data = Vec::with_capacity(w * h);
        for row in 0..h {
            for col in 0..w {
                let (c, r) = (2 * col, 2 * row);
                let s = self.get(c, r) + self.get(c + 1, r) + self.get(c, r + 1) + self.get(c + 1, r + 1);
                data.push(s * quarter);
            }
        }
        Self {
            width: w,
            height: h,
            data,
        }
    }
}

impl<T: Real> Surface<T> for IntensityImage<T> {
    fn width(&self) -> usize {
        self.width
    }

    fn height(&self) -> usize {
        self.height
    }

    fn sample(&self, p: &PixelCoord<T>) -> Option<T> {
        let (x0, y0, fx, fy) = cell(p, self.width, self.height)?;
        let one = T::one();
        let v00 = self.get(x0, y0);
        let v10 = self.get(x0 + 1, y0);
        let v01 = self.get(x0, y0 + 1);
        let v11 = self.get(x0 + 1, y0 + 1);
        let top = v00 * (one - fx) + v10 * fx;
        let bottom = v01 * (one - fx) + v11 * fx;
        Some(top * (one - fy) + bottom * fy)
    }

    fn gradient(&self, p: &PixelCoord<T>) -> Option<Vector2<T>> {
        central_difference(self, p)
    }
}

/// Depth map in meters with a validity mask. Missing measurements are never
/// read as values.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthImage<T: Real> {
    width: usize,
    height: usize,
    data: Vec<T>,
    valid: Vec<bool>,
}

impl<T: Real> DepthImage<T> {
    /// Builds a depth map; non-finite or non-positive entries become invalid.
    pub fn new(width: usize, height: usize, mut data: Vec<T>) -> Result<Self> {
        check_shape(width, height, data.len())?;
        let valid: Vec<bool> = data.iter().map(|d| d.is_finite() && *d > T::zero()).collect();
        for (d, ok) in data.iter_mut().zip(&valid) {
            if !ok {
                *d = T::zero();
            }
        }
        Ok(Self {
            width,
            height,
            data,
            valid,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> Option<T>,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                data.push(f(col, row).unwrap_or_else(T::zero));
            }
        }
        Self::new(width, height, data)
    }

    pub fn constant(width: usize, height: usize, value: T) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> Option<T> {
        let i = row * self.width + col;
        self.valid[i].then(|| self.data[i])
    }

    pub fn is_valid(&self, col: usize, row: usize) -> bool {
        self.valid[row * self.width + col]
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Valid depth values in row-major order.
    pub fn valid_values(&self) -> impl Iterator<Item = T> + '_ {
        self.data
            .iter()
            .zip(&self.valid)
            .filter(|(_, ok)| **ok)
            .map(|(d, _)| *d)
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    fn downsample(&self) -> Self {
        let (w, h) = (self.width / 2, self.height / 2);
        let mut data = Vec::with_capacity(w * h);
        for row in 0..h {
            for col in 0..w {
                let (c, r) = (2 * col, 2 * row);
                let (sum, count) = [(c, r), (c + 1, r), (c, r + 1), (c + 1, r + 1)]
                    .iter()
                    .filter_map(|&(cc, rr)| self.get(cc, rr))
                    .fold((T::zero(), 0usize), |(s, n), d| (s + d, n + 1));
                data.push(if count == 0 {
                    T::zero()
                } else {
                    sum / lit(count as f64)
                });
            }
        }
        let valid = data.iter().map(|d| *d > T::zero()).collect();
        Self {
            width: w,
            height: h,
            data,
            valid,
        }
    }
}

impl<T: Real> Surface<T> for DepthImage<T> {
    fn width(&self) -> usize {
        self.width
    }

    fn height(&self) -> usize {
        self.height
    }

    fn sample(&self, p: &PixelCoord<T>) -> Option<T> {
        let (x0, y0, fx, fy) = cell(p, self.width, self.height)?;
        let one = T::one();
        let weights = [
            ((x0, y0), (one - fx) * (one - fy)),
            ((x0 + 1, y0), fx * (one - fy)),
            ((x0, y0 + 1), (one - fx) * fy),
            ((x0 + 1, y0 + 1), fx * fy),
        ];
        let mut acc = T::zero();
        for ((c, r), w) in weights {
            if w != T::zero() {
                acc += self.get(c, r)? * w;
            }
        }
        Some(acc)
    }

    fn gradient(&self, p: &PixelCoord<T>) -> Option<Vector2<T>> {
        central_difference(self, p)
    }
}

fn check_shape(width: usize, height: usize, len: usize) -> Result<()> {
    if width < 3 || height < 3 {
        return Err(Error::InvalidInput(format!(
            "image is {width}x{height}; at least 3x3 is required"
        )));
    }
    if width * height != len {
        return Err(Error::InvalidInput(format!(
            "image data has {len} entries, expected {}",
            width * height
        )));
    }
    Ok(())
}

/// Coarse-to-fine image pairs, finest level first.
#[derive(Clone, Debug)]
pub struct Pyramid<T: Real> {
    pub levels: Vec<(IntensityImage<T>, DepthImage<T>)>,
}

impl<T: Real> Pyramid<T> {
    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }
}

/// Downsamples by 2×2 averaging; depth averages only its valid neighbours.
pub fn build_pyramid<T: Real>(
    intensity: &IntensityImage<T>,
    depth: &DepthImage<T>,
    levels: usize,
) -> Result<Pyramid<T>> {
    if levels == 0 {
        return Err(Error::InvalidInput("pyramid needs at least one level".into()));
    }
    if intensity.width() != depth.width() || intensity.height() != depth.height() {
        return Err(Error::InvalidInput(
            "intensity and depth resolutions differ".into(),
        ));
    }
    let min_side = 3 * (1usize << (levels - 1));
    if intensity.width() < min_side || intensity.height() < min_side {
        return Err(Error::InvalidInput(format!(
            "{}x{} image is too small for {levels} pyramid levels",
            intensity.width(),
            intensity.height()
        )));
    }
    let mut out = Vec::with_capacity(levels);
    out.push((intensity.clone(), depth.clone()));
    for _ in 1..levels {
        let (i, d) = out.last().expect("non-empty");
        let next = (i.downsample(), d.downsample());
        out.push(next);
    }
    Ok(Pyramid { levels: out })
}

/// Intrinsics for pyramid level `level` under 2×2 averaging.
///
/// Focal lengths halve per level. The principal point also halves, with a
/// quarter-pixel shift so that coarse pixel centres stay aligned with the
/// centres of the fine blocks they average.
pub fn level_intrinsics<T: Real>(k: &CameraIntrinsics<T>, level: usize) -> CameraIntrinsics<T> {
    let mut out = *k;
    let half: T = lit(0.5);
    let quarter: T = lit(0.25);
    for _ in 0..level {
        out = CameraIntrinsics {
            fx: out.fx * half,
            fy: out.fy * half,
            cx: out.cx * half - quarter,
            cy: out.cy * half - quarter,
        };
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn px(u: f64, v: f64) -> PixelCoord<f64> {
        PixelCoord::new(u, v)
    }

    #[test]
    fn rejects_bad_images() {
        assert!(IntensityImage::<f64>::new(2, 3, vec![0.0; 6]).is_err());
        assert!(IntensityImage::<f64>::new(3, 3, vec![0.0; 8]).is_err());
        assert!(IntensityImage::<f64>::new(3, 3, vec![1.5; 9]).is_err());
        assert!(IntensityImage::<f64>::new(3, 3, vec![f64::NAN; 9]).is_err());
    }

    #[test]
    fn bilinear_exact_on_lattice() {
        let img = IntensityImage::from_fn(5, 4, |c, r| (c * 7 + r * 3) as f64 / 40.0).unwrap();
        for r in 0..4 {
            for c in 0..5 {
                assert_eq!(img.sample(&px(c as f64, r as f64)).unwrap(), img.get(c, r));
            }
        }
    }

    #[test]
    fn bilinear_constant_and_midpoint() {
        let img = IntensityImage::constant(4, 4, 0.3).unwrap();
        assert_relative_eq!(img.sample(&px(1.7, 2.2)).unwrap(), 0.3, epsilon = 1e-15);

        // [[0,1],[0,1]] embedded in the top-left corner of a 3x3 image.
        let img = IntensityImage::new(3, 3, vec![0.0, 1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0]).unwrap();
        assert_relative_eq!(img.sample(&px(0.5, 0.5)).unwrap(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn bilinear_out_of_bounds() {
        let img = IntensityImage::constant(4, 4, 0.3).unwrap();
        assert!(img.sample(&px(-0.01, 1.0)).is_none());
        assert!(img.sample(&px(3.0, 3.01)).is_none());
        assert!(img.sample(&px(3.0, 3.0)).is_some());
        assert!(img.sample(&px(f64::NAN, 1.0)).is_none());
    }

    #[test]
    fn depth_sampling_respects_mask() {
        let mut data = vec![1.0; 16];
        data[5] = 0.0; // (1, 1)
        let d = DepthImage::new(4, 4, data).unwrap();
        assert!(d.sample(&px(0.5, 0.5)).is_none());
        assert!(d.sample(&px(1.5, 1.5)).is_none());
        // Lattice point next to the hole only touches valid data.
        assert_eq!(d.sample(&px(2.0, 1.0)).unwrap(), 1.0);
        assert_eq!(d.sample(&px(2.5, 2.5)).unwrap(), 1.0);
        assert!(d.get(1, 1).is_none());
    }

    #[test]
    fn gradient_of_linear_images() {
        let constant = IntensityImage::constant(6, 6, 0.5).unwrap();
        assert_eq!(constant.gradient(&px(2.3, 3.1)).unwrap(), Vector2::zeros());

        let ramp = DepthImage::from_fn(8, 8, |c, _| Some(1.0 + c as f64)).unwrap();
        let g = ramp.gradient(&px(3.4, 2.2)).unwrap();
        assert_relative_eq!(g, Vector2::new(1.0, 0.0), epsilon = 1e-12);

        let plane =
            IntensityImage::from_fn(9, 9, |c, r| 0.1 * c as f64 / 4.0 + 0.2 * r as f64 / 4.0).unwrap();
        let g = plane.gradient(&px(4.25, 3.5)).unwrap();
        assert_relative_eq!(g, Vector2::new(0.1 / 4.0, 0.2 / 4.0), epsilon = 1e-14);
    }

    #[test]
    fn gradient_needs_a_margin() {
        let img = IntensityImage::constant(6, 6, 0.5).unwrap();
        assert!(img.gradient(&px(0.9, 3.0)).is_none());
        assert!(img.gradient(&px(3.0, 4.1)).is_none());
        assert!(img.gradient(&px(1.0, 4.0)).is_some());
    }

    #[test]
    fn pyramid_single_level_is_input() {
        let i = IntensityImage::constant(6, 6, 0.25).unwrap();
        let d = DepthImage::constant(6, 6, 2.0).unwrap();
        let p = build_pyramid(&i, &d, 1).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p.levels[0].0, i);
        assert_eq!(p.levels[0].1, d);
    }

    #[test]
    fn pyramid_constant_and_sizes() {
        let i = IntensityImage::constant(24, 13, 0.25).unwrap();
        let d = DepthImage::constant(24, 13, 2.0).unwrap();
        let p = build_pyramid(&i, &d, 3).unwrap();
        let sizes: Vec<_> = p.levels.iter().map(|(i, _)| (i.width(), i.height())).collect();
        assert_eq!(sizes, vec![(24, 13), (12, 6), (6, 3)]);
        for (i, d) in &p.levels {
            assert!(i.data().iter().all(|v| *v == 0.25));
            assert!(d.valid_values().all(|v| v == 2.0));
        }
        assert!(build_pyramid(&i, &d, 4).is_err());
        assert!(build_pyramid(&i, &d, 0).is_err());
    }

    #[test]
    fn pyramid_depth_averages_valid_neighbours() {
        let mut data: Vec<f64> = (0..36).map(|k| 1.0 + k as f64 * 0.1).collect();
        data[0] = 0.0;
        let d = DepthImage::new(6, 6, data.clone()).unwrap();
        let i = IntensityImage::constant(6, 6, 0.5).unwrap();
        let p = build_pyramid(&i, &d, 2).unwrap();
        let coarse = &p.levels[1].1;
        let expected = (data[1] + data[6] + data[7]) / 3.0;
        assert_relative_eq!(coarse.get(0, 0).unwrap(), expected, epsilon = 1e-15);

        let mut hole = vec![1.0; 36];
        for k in [0, 1, 6, 7] {
            hole[k] = 0.0;
        }
        let d = DepthImage::new(6, 6, hole).unwrap();
        let p = build_pyramid(&i, &d, 2).unwrap();
        assert!(p.levels[1].1.get(0, 0).is_none());
    }

    #[test]
    fn level_intrinsics_keep_pixel_centres() {
        let k = CameraIntrinsics::new(500.0, 400.0, 319.5, 239.5).unwrap();
        let k1 = level_intrinsics(&k, 1);
        assert_eq!(k1.fx, 250.0);
        assert_eq!(k1.fy, 200.0);
        assert_eq!(k1.cx, 159.5);
        assert_eq!(k1.cy, 119.5);
        assert_eq!(level_intrinsics(&k, 0), k);
    }
}
