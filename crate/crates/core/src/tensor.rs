//! Dense planes, channel stacks and the two neural operators the network
//! needs: "same"-size zero-padded 3x3 convolution and ReLU.
//!
//! Every convolution output pixel is accumulated in the fixed order
//! bias, then input channel, kernel row, kernel column, with out-of-bounds
//! taps skipped. That order does not depend on the plane size or on how
//! work is split across threads, so results are bitwise reproducible and a
//! crop of a larger input yields the same values wherever the crop's
//! receptive field stays in bounds.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Work (in multiply-accumulates) below which convolutions stay on the
/// calling thread.
const PAR_MIN_MACS: usize = 1 << 20;

#[derive(Clone, Debug, PartialEq)]
pub struct Plane<T> {
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Scalar> Plane<T> {
    pub fn new(height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::dimension(format!(
                "plane dimensions must be positive, got {height}x{width}"
            )));
        }
        if data.len() != height * width {
            return Err(Error::dimension(format!(
                "plane {height}x{width} needs {} samples, got {}",
                height * width,
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    /// Panics on zero dimensions.
    pub fn filled(height: usize, width: usize, value: T) -> Self {
        assert!(height > 0 && width > 0, "plane dimensions must be positive");
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, T::zero())
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        assert!(height > 0 && width > 0, "plane dimensions must be positive");
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    /// `(height, width)`
    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> T {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: T) {
        self.data[y * self.width + x] = v;
    }

    #[inline]
    pub fn row(&self, y: usize) -> &[T] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    #[inline]
    pub fn row_mut(&mut self, y: usize) -> &mut [T] {
        let w = self.width;
        &mut self.data[y * w..(y + 1) * w]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.check_same_dims(other)?;
        Ok(Self {
            height: self.height,
            width: self.width,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn check_same_dims(&self, other: &Self) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::contract(format!(
                "plane shape mismatch: {:?} vs {:?}",
                self.dims(),
                other.dims()
            )));
        }
        Ok(())
    }

    pub fn crop(&self, y0: usize, x0: usize, height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 || y0 + height > self.height || x0 + width > self.width {
            return Err(Error::dimension(format!(
                "crop {height}x{width} at ({y0},{x0}) outside {}x{} plane",
                self.height, self.width
            )));
        }
        let mut data = Vec::with_capacity(height * width);
        for y in y0..y0 + height {
            data.extend_from_slice(&self.row(y)[x0..x0 + width]);
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    /// Copies `src` into this plane with its top-left corner at `(y0, x0)`.
    pub fn paste(&mut self, src: &Self, y0: usize, x0: usize) -> Result<()> {
        if y0 + src.height > self.height || x0 + src.width > self.width {
            return Err(Error::dimension(format!(
                "paste of {}x{} at ({y0},{x0}) outside {}x{} plane",
                src.height, src.width, self.height, self.width
            )));
        }
        for y in 0..src.height {
            self.row_mut(y0 + y)[x0..x0 + src.width].copy_from_slice(src.row(y));
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> Plane<U> {
        Plane {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| U::of(v.to_f64_lossy())).collect(),
        }
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }
}

/// Channel-planar stack of equally sized planes.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap<T> {
    planes: Vec<Plane<T>>,
}

impl<T: Scalar> FeatureMap<T> {
    pub fn new(planes: Vec<Plane<T>>) -> Result<Self> {
        let Some(first) = planes.first() else {
            return Err(Error::contract("feature map needs at least one channel"));
        };
        let dims = first.dims();
        if let Some(bad) = planes.iter().find(|p| p.dims() != dims) {
            return Err(Error::contract(format!(
                "feature map planes disagree: {:?} vs {:?}",
                dims,
                bad.dims()
            )));
        }
        Ok(Self { planes })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        assert!(channels > 0);
        Self {
            planes: (0..channels).map(|_| Plane::zeros(height, width)).collect(),
        }
    }

    pub fn single(plane: Plane<T>) -> Self {
        Self {
            planes: vec![plane],
        }
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.planes.len()
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.planes[0].height()
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.planes[0].width()
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        self.planes[0].dims()
    }

    #[inline]
    pub fn plane(&self, c: usize) -> &Plane<T> {
        &self.planes[c]
    }

    #[inline]
    pub fn plane_mut(&mut self, c: usize) -> &mut Plane<T> {
        &mut self.planes[c]
    }

    pub fn planes(&self) -> &[Plane<T>] {
        &self.planes
    }

    pub fn into_planes(self) -> Vec<Plane<T>> {
        self.planes
    }

    pub fn map(&self, f: impl Fn(T) -> T + Copy) -> Self {
        Self {
            planes: self.planes.iter().map(|p| p.map(f)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T + Copy) -> Result<Self> {
        if self.channels() != other.channels() {
            return Err(Error::contract(format!(
                "channel mismatch: {} vs {}",
                self.channels(),
                other.channels()
            )));
        }
        let planes = self
            .planes
            .iter()
            .zip(&other.planes)
            .map(|(a, b)| a.zip_map(b, f))
            .collect::<Result<_>>()?;
        Ok(Self { planes })
    }

    pub fn crop(&self, y0: usize, x0: usize, height: usize, width: usize) -> Result<Self> {
        let planes = self
            .planes
            .iter()
            .map(|p| p.crop(y0, x0, height, width))
            .collect::<Result<_>>()?;
        Ok(Self { planes })
    }
}

/// A bank of 3x3 filters, `taps` laid out `(out, in, ky, kx)` row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvKernel3x3<T> {
    out_channels: usize,
    in_channels: usize,
    taps: Vec<T>,
    bias: Option<Vec<T>>,
}

impl<T: Scalar> ConvKernel3x3<T> {
    pub fn new(
        out_channels: usize,
        in_channels: usize,
        taps: Vec<T>,
        bias: Option<Vec<T>>,
    ) -> Result<Self> {
        if out_channels == 0 || in_channels == 0 {
            return Err(Error::contract("kernel channel counts must be positive"));
        }
        if taps.len() != out_channels * in_channels * 9 {
            return Err(Error::contract(format!(
                "kernel {out_channels}x{in_channels} needs {} taps, got {}",
                out_channels * in_channels * 9,
                taps.len()
            )));
        }
        if let Some(b) = &bias {
            if b.len() != out_channels {
                return Err(Error::contract(format!(
                    "bias length {} does not match {out_channels} output channels",
                    b.len()
                )));
            }
        }
        Ok(Self {
            out_channels,
            in_channels,
            taps,
            bias,
        })
    }

    pub fn zeros(out_channels: usize, in_channels: usize, with_bias: bool) -> Self {
        Self {
            out_channels,
            in_channels,
            taps: vec![T::zero(); out_channels * in_channels * 9],
            bias: with_bias.then(|| vec![T::zero(); out_channels]),
        }
    }

    /// Single-channel kernel whose centre tap is one.
    pub fn identity() -> Self {
        let mut k = Self::zeros(1, 1, false);
        k.taps[4] = T::one();
        k
    }

    #[inline]
    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    #[inline]
    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    #[inline]
    pub fn taps(&self) -> &[T] {
        &self.taps
    }

    #[inline]
    pub fn taps_mut(&mut self) -> &mut [T] {
        &mut self.taps
    }

    #[inline]
    pub fn bias(&self) -> Option<&[T]> {
        self.bias.as_deref()
    }

    #[inline]
    pub fn bias_mut(&mut self) -> Option<&mut [T]> {
        self.bias.as_deref_mut()
    }

    /// The nine taps connecting input channel `i` to output channel `o`.
    #[inline]
    pub fn filter(&self, o: usize, i: usize) -> &[T] {
        let start = (o * self.in_channels + i) * 9;
        &self.taps[start..start + 9]
    }

    #[inline]
    pub fn tap(&self, o: usize, i: usize, ky: usize, kx: usize) -> T {
        self.taps[((o * self.in_channels + i) * 3 + ky) * 3 + kx]
    }

    pub(crate) fn parts_mut(&mut self) -> (&mut [T], Option<&mut [T]>) {
        (&mut self.taps, self.bias.as_deref_mut())
    }

    /// Trainable element count: taps plus bias.
    pub fn param_count(&self) -> usize {
        self.taps.len() + self.bias.as_ref().map_or(0, Vec::len)
    }

    /// Kernel of the adjoint operator: swaps in/out channels and rotates every
    /// filter by 180 degrees. Bias is dropped.
    pub fn adjoint(&self) -> Self {
        let mut taps = vec![T::zero(); self.taps.len()];
        for o in 0..self.out_channels {
            for i in 0..self.in_channels {
                let src = self.filter(o, i);
                let dst_start = (i * self.out_channels + o) * 9;
                for t in 0..9 {
                    taps[dst_start + 8 - t] = src[t];
                }
            }
        }
        Self {
            out_channels: self.in_channels,
            in_channels: self.out_channels,
            taps,
            bias: None,
        }
    }

    pub fn cast<U: Scalar>(&self) -> ConvKernel3x3<U> {
        let conv = |v: &T| U::of(v.to_f64_lossy());
        ConvKernel3x3 {
            out_channels: self.out_channels,
            in_channels: self.in_channels,
            taps: self.taps.iter().map(conv).collect(),
            bias: self.bias.as_ref().map(|b| b.iter().map(conv).collect()),
        }
    }
}

/// Zero-padded "same" 3x3 convolution (cross-correlation, as in CNNs).
pub fn conv3x3<T: Scalar>(input: &FeatureMap<T>, kernel: &ConvKernel3x3<T>) -> Result<FeatureMap<T>> {
    if input.channels() != kernel.in_channels() {
        return Err(Error::contract(format!(
            "conv3x3: input has {} channels, kernel expects {}",
            input.channels(),
            kernel.in_channels()
        )));
    }
    let (h, w) = input.dims();
    let compute = |o: usize| {
        let bias = kernel.bias().map_or(T::zero(), |b| b[o]);
        let mut out = vec![bias; h * w];
        for y in 0..h {
            let acc = &mut out[y * w..(y + 1) * w];
            for i in 0..input.channels() {
                accumulate_row(acc, input.plane(i), y, kernel.filter(o, i));
            }
        }
        Plane {
            height: h,
            width: w,
            data: out,
        }
    };
    let macs = h * w * kernel.in_channels() * kernel.out_channels() * 9;
    let planes: Vec<Plane<T>> = if macs >= PAR_MIN_MACS && kernel.out_channels() > 1 {
        (0..kernel.out_channels()).into_par_iter().map(compute).collect()
    } else {
        (0..kernel.out_channels()).map(compute).collect()
    };
    Ok(FeatureMap { planes })
}

/// Convolves one plane with one 3x3 filter (no bias).
pub fn conv3x3_plane<T: Scalar>(plane: &Plane<T>, filter: &[T; 9]) -> Plane<T> {
    let (h, w) = plane.dims();
    let mut out = vec![T::zero(); h * w];
    for y in 0..h {
        accumulate_row(&mut out[y * w..(y + 1) * w], plane, y, filter);
    }
    Plane {
        height: h,
        width: w,
        data: out,
    }
}

/// Adds the contribution of `src` through a 3x3 `filter` to output row `y`.
#[inline]
fn accumulate_row<T: Scalar>(acc: &mut [T], src: &Plane<T>, y: usize, filter: &[T]) {
    let (h, w) = src.dims();
    let above = (y > 0).then(|| src.row(y - 1));
    let below = (y + 1 < h).then(|| src.row(y + 1));
    let mid = src.row(y);
    if w == 1 {
        // Only the centre column is ever in bounds.
        for (ky, row) in [above, Some(mid), below].into_iter().enumerate() {
            if let Some(row) = row {
                acc[0] += filter[ky * 3 + 1] * row[0];
            }
        }
        return;
    }
    match (above, below) {
        (Some(a), Some(b)) => accumulate_three_rows(acc, [a, mid, b], filter),
        _ => {
            for (ky, row) in [above, Some(mid), below].into_iter().enumerate() {
                if let Some(row) = row {
                    accumulate_one_row(acc, row, &filter[ky * 3..ky * 3 + 3]);
                }
            }
        }
    }
}

#[inline]
fn accumulate_one_row<T: Scalar>(acc: &mut [T], row: &[T], t: &[T]) {
    let w = acc.len();
    let (t0, t1, t2) = (t[0], t[1], t[2]);
    acc[0] = acc[0] + t1 * row[0] + t2 * row[1];
    let interior = acc[1..w - 1]
        .iter_mut()
        .zip(row[..w - 2].iter().zip(&row[1..w - 1]).zip(&row[2..]));
    for (a, ((&l, &c), &r)) in interior {
        let mut v = *a;
        v += t0 * l;
        v += t1 * c;
        v += t2 * r;
        *a = v;
    }
    acc[w - 1] = acc[w - 1] + t0 * row[w - 2] + t1 * row[w - 1];
}

#[inline]
fn accumulate_three_rows<T: Scalar>(acc: &mut [T], rows: [&[T]; 3], f: &[T]) {
    let w = acc.len();
    let [a, m, b] = rows;
    // Edge columns: the out-of-bounds column is skipped, order kept.
    {
        let mut v = acc[0];
        v += f[1] * a[0];
        v += f[2] * a[1];
        v += f[4] * m[0];
        v += f[5] * m[1];
        v += f[7] * b[0];
        v += f[8] * b[1];
        acc[0] = v;
    }
    for x in 1..w - 1 {
        let mut v = acc[x];
        v += f[0] * a[x - 1];
        v += f[1] * a[x];
        v += f[2] * a[x + 1];
        v += f[3] * m[x - 1];
        v += f[4] * m[x];
        v += f[5] * m[x + 1];
        v += f[6] * b[x - 1];
        v += f[7] * b[x];
        v += f[8] * b[x + 1];
        acc[x] = v;
    }
    {
        let x = w - 1;
        let mut v = acc[x];
        v += f[0] * a[x - 1];
        v += f[1] * a[x];
        v += f[3] * m[x - 1];
        v += f[4] * m[x];
        v += f[6] * b[x - 1];
        v += f[7] * b[x];
        acc[x] = v;
    }
}

pub fn relu<T: Scalar>(input: &FeatureMap<T>) -> FeatureMap<T> {
    input.map(|v| if v > T::zero() { v } else { T::zero() })
}

pub(crate) fn relu_in_place<T: Scalar>(fm: &mut FeatureMap<T>) {
    for p in &mut fm.planes {
        for v in p.data_mut() {
            if !(*v > T::zero()) {
                *v = T::zero();
            }
        }
    }
}

/// Gradients of a convolution layer.
#[derive(Clone, Debug)]
pub struct ConvGrads<T> {
    pub input: Option<FeatureMap<T>>,
    pub taps: Vec<T>,
    pub bias: Option<Vec<T>>,
}

/// Reverse-mode step through `conv3x3(input, kernel)`.
///
/// `need_input` skips the input gradient for the first layer of a chain.
pub fn conv3x3_backward<T: Scalar>(
    input: &FeatureMap<T>,
    kernel: &ConvKernel3x3<T>,
    grad_out: &FeatureMap<T>,
    need_input: bool,
) -> Result<ConvGrads<T>> {
    if input.channels() != kernel.in_channels() || grad_out.channels() != kernel.out_channels() {
        return Err(Error::contract(format!(
            "conv3x3_backward: kernel {}->{} with input {} and grad {} channels",
            kernel.in_channels(),
            kernel.out_channels(),
            input.channels(),
            grad_out.channels()
        )));
    }
    if input.dims() != grad_out.dims() {
        return Err(Error::contract("conv3x3_backward: spatial shape mismatch"));
    }
    let grad_input = if need_input {
        Some(conv3x3(grad_out, &kernel.adjoint())?)
    } else {
        None
    };

    let (ci, co) = (kernel.in_channels(), kernel.out_channels());
    let per_out = |o: usize| {
        let g = grad_out.plane(o);
        let mut taps = vec![T::zero(); ci * 9];
        for i in 0..ci {
            let f = filter_gradient(g, input.plane(i));
            taps[i * 9..i * 9 + 9].copy_from_slice(&f);
        }
        taps
    };
    let macs = input.height() * input.width() * ci * co * 9;
    let taps: Vec<T> = if macs >= PAR_MIN_MACS && co > 1 {
        (0..co).into_par_iter().flat_map_iter(per_out).collect()
    } else {
        (0..co).flat_map(per_out).collect()
    };
    let bias = kernel
        .bias()
        .map(|_| grad_out.planes().iter().map(|p| lane_sum(p.data())).collect());
    Ok(ConvGrads {
        input: grad_input,
        taps,
        bias,
    })
}

/// dL/dfilter for one (out, in) channel pair:
/// `f[ky][kx] = sum_{y,x} g[y][x] * src[y+ky-1][x+kx-1]`.
fn filter_gradient<T: Scalar>(g: &Plane<T>, src: &Plane<T>) -> [T; 9] {
    let (h, w) = g.dims();
    let mut f = [T::zero(); 9];
    for y in 0..h {
        let gr = g.row(y);
        for ky in 0..3 {
            let sy = y as isize + ky as isize - 1;
            if sy < 0 || sy >= h as isize {
                continue;
            }
            let sr = src.row(sy as usize);
            // kx = 0 pairs g[x] with src[x-1], x >= 1
            if w > 1 {
                f[ky * 3] += lane_dot(&gr[1..], &sr[..w - 1]);
                f[ky * 3 + 2] += lane_dot(&gr[..w - 1], &sr[1..]);
            }
            f[ky * 3 + 1] += lane_dot(gr, sr);
        }
    }
    f
}

/// Dot product with four interleaved partial sums (fixed order).
#[inline]
pub(crate) fn lane_dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    for (x, y) in ra.iter().zip(rb) {
        acc[0] += *x * *y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3])
}

#[inline]
pub(crate) fn lane_sum<T: Scalar>(a: &[T]) -> T {
    let mut acc = [T::zero(); 4];
    let c = a.chunks_exact(4);
    let r = c.remainder();
    for x in c {
        acc[0] += x[0];
        acc[1] += x[1];
        acc[2] += x[2];
        acc[3] += x[3];
    }
    for x in r {
        acc[0] += *x;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3])
}

/// `dz = da * [z > 0]`, the ReLU subgradient with `relu'(0) = 0`.
pub(crate) fn relu_backward<T: Scalar>(
    pre_activation: &FeatureMap<T>,
    grad: &mut FeatureMap<T>,
) {
    for (z, g) in pre_activation.planes.iter().zip(grad.planes.iter_mut()) {
        for (zv, gv) in z.data().iter().zip(g.data_mut()) {
            if !(*zv > T::zero()) {
                *gv = T::zero();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Textbook nested-loop convolution used as the reference.
    fn naive_conv(input: &FeatureMap<f64>, k: &ConvKernel3x3<f64>) -> FeatureMap<f64> {
        let (h, w) = input.dims();
        let mut planes = Vec::new();
        for o in 0..k.out_channels() {
            let mut p = Plane::zeros(h, w);
            for y in 0..h {
                for x in 0..w {
                    let mut s = k.bias().map_or(0.0, |b| b[o]);
                    for i in 0..k.in_channels() {
                        for dy in 0..3 {
                            for dx in 0..3 {
                                let sy = y as isize + dy as isize - 1;
                                let sx = x as isize + dx as isize - 1;
                                if sy >= 0 && sx >= 0 && (sy as usize) < h && (sx as usize) < w {
                                    s += k.tap(o, i, dy, dx)
                                        * input.plane(i).get(sy as usize, sx as usize);
                                }
                            }
                        }
                    }
                    p.set(y, x, s);
                }
            }
            planes.push(p);
        }
        FeatureMap::new(planes).unwrap()
    }

    fn random_fm(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize) -> FeatureMap<f64> {
        FeatureMap::new(
            (0..c)
                .map(|_| Plane::from_fn(h, w, |_, _| rng.random_range(-1.0..1.0)))
                .collect(),
        )
        .unwrap()
    }

    fn random_kernel(rng: &mut ChaCha8Rng, o: usize, i: usize, bias: bool) -> ConvKernel3x3<f64> {
        let taps = (0..o * i * 9).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b = bias.then(|| (0..o).map(|_| rng.random_range(-1.0..1.0)).collect());
        ConvKernel3x3::new(o, i, taps, b).unwrap()
    }

    #[test]
    fn identity_kernel_is_identity() {
        let input = FeatureMap::single(Plane::filled(5, 5, 1.0));
        let out = conv3x3(&input, &ConvKernel3x3::identity()).unwrap();
        assert_eq!(out, input);
    }

    #[test]
    fn all_ones_kernel_counts_neighbours() {
        let input = FeatureMap::single(Plane::filled(5, 5, 1.0));
        let k = ConvKernel3x3::new(1, 1, vec![1.0; 9], None).unwrap();
        let out = conv3x3(&input, &k).unwrap();
        let p = out.plane(0);
        assert_eq!(p.get(2, 2), 9.0);
        assert_eq!(p.get(1, 3), 9.0);
        assert_eq!(p.get(0, 0), 4.0);
        assert_eq!(p.get(4, 4), 4.0);
        assert_eq!(p.get(0, 2), 6.0);
        assert_eq!(p.get(3, 4), 6.0);
    }

    #[test]
    fn matches_nested_loop_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let input = random_fm(&mut rng, 1, 8, 8);
        let k = random_kernel(&mut rng, 4, 1, true);
        let fast = conv3x3(&input, &k).unwrap();
        let slow = naive_conv(&input, &k);
        for c in 0..4 {
            for (a, b) in fast.plane(c).data().iter().zip(slow.plane(c).data()) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
        // Narrow and single-row shapes exercise the edge paths.
        for (h, w) in [(1, 1), (1, 5), (5, 1), (2, 2), (3, 7)] {
            let input = random_fm(&mut rng, 3, h, w);
            let k = random_kernel(&mut rng, 2, 3, true);
            let fast = conv3x3(&input, &k).unwrap();
            let slow = naive_conv(&input, &k);
            for c in 0..2 {
                for (a, b) in fast.plane(c).data().iter().zip(slow.plane(c).data()) {
                    assert!((a - b).abs() < 1e-12, "{h}x{w}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn channel_mismatch_is_contract_error() {
        let input = FeatureMap::<f64>::zeros(2, 4, 4);
        let k = ConvKernel3x3::zeros(1, 3, false);
        assert!(matches!(conv3x3(&input, &k), Err(Error::Contract(_))));
    }

    #[test]
    fn relu_examples() {
        let p = Plane::new(1, 3, vec![-1.0, 0.0, 2.0]).unwrap();
        let out = relu(&FeatureMap::single(p));
        assert_eq!(out.plane(0).data(), &[0.0, 0.0, 2.0]);

        let nonneg = FeatureMap::single(Plane::new(1, 3, vec![0.0, 0.5, 3.0]).unwrap());
        assert_eq!(relu(&nonneg), nonneg);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = random_fm(&mut rng, 2, 6, 6);
        let out = relu(&r);
        for c in 0..2 {
            for (o, i) in out.plane(c).data().iter().zip(r.plane(c).data()) {
                assert_eq!(*o, i.max(0.0));
            }
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let input = random_fm(&mut rng, 2, 5, 6);
        let k = random_kernel(&mut rng, 3, 2, true);
        let weights = random_fm(&mut rng, 3, 5, 6);
        // L = <weights, conv(input, k)>, so dL/dout = weights.
        let loss = |inp: &FeatureMap<f64>, k: &ConvKernel3x3<f64>| -> f64 {
            let out = conv3x3(inp, k).unwrap();
            (0..3)
                .map(|c| {
                    out.plane(c)
                        .data()
                        .iter()
                        .zip(weights.plane(c).data())
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
                })
                .sum()
        };
        let g = conv3x3_backward(&input, &k, &weights, true).unwrap();
        let h = 1e-6;
        for t in 0..k.taps().len() {
            let mut kp = k.clone();
            kp.taps_mut()[t] += h;
            let mut km = k.clone();
            km.taps_mut()[t] -= h;
            let fd = (loss(&input, &kp) - loss(&input, &km)) / (2.0 * h);
            assert!((fd - g.taps[t]).abs() < 1e-6, "tap {t}: {fd} vs {}", g.taps[t]);
        }
        for o in 0..3 {
            let mut kp = k.clone();
            kp.bias_mut().unwrap()[o] += h;
            let mut km = k.clone();
            km.bias_mut().unwrap()[o] -= h;
            let fd = (loss(&input, &kp) - loss(&input, &km)) / (2.0 * h);
            assert!((fd - g.bias.as_ref().unwrap()[o]).abs() < 1e-6);
        }
        let gi = g.input.unwrap();
        for c in 0..2 {
            for idx in 0..30 {
                let mut ip = input.clone();
                ip.plane_mut(c).data_mut()[idx] += h;
                let mut im = input.clone();
                im.plane_mut(c).data_mut()[idx] -= h;
                let fd = (loss(&ip, &k) - loss(&im, &k)) / (2.0 * h);
                assert!((fd - gi.plane(c).data()[idx]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn parallel_and_serial_paths_agree_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let input = random_fm(&mut rng, 16, 80, 80);
        let k = random_kernel(&mut rng, 16, 16, true);
        let full = conv3x3(&input, &k).unwrap();
        for o in 0..16 {
            let single = ConvKernel3x3::new(
                1,
                16,
                k.taps()[o * 16 * 9..(o + 1) * 16 * 9].to_vec(),
                Some(vec![k.bias().unwrap()[o]]),
            )
            .unwrap();
            let one = conv3x3(&input, &single).unwrap();
            assert_eq!(one.plane(0), full.plane(o));
        }
    }
}
