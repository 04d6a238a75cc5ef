//! 2-D convolution with stride, dilation, zero padding and channel groups.
//!
//! Three execution paths share one contract:
//! * pointwise (1×1, stride 1, no padding, one group) is a GEMM per batch item;
//! * depth-wise (groups = in = out channels) runs direct tap loops that skip taps falling
//!   entirely in the padding, which matters for large dilations on small maps;
//! * everything else goes through im2col + GEMM per group.
//!
//! Batch items are processed in parallel. Weight gradients are reduced over the batch in a
//! fixed order, so results are bitwise identical for any thread count.

use rayon::prelude::*;

use crate::error::{Error, Result};

use super::scalar::Scalar;
use super::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub dilation: usize,
    pub groups: usize,
    pub padding: usize,
}

impl ConvSpec {
    /// Dense k×k convolution, stride 1, no dilation, no padding.
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel,
            stride: 1,
            dilation: 1,
            groups: 1,
            padding: 0,
        }
    }

    pub fn pointwise(in_channels: usize, out_channels: usize) -> Self {
        Self::new(in_channels, out_channels, 1)
    }

    /// Depth-wise k×k convolution with dilation `d` and "same" padding.
    pub fn depthwise(channels: usize, kernel: usize, dilation: usize) -> Self {
        Self::new(channels, channels, kernel)
            .with_groups(channels)
            .with_dilation(dilation)
            .same_padding()
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn with_dilation(mut self, dilation: usize) -> Self {
        self.dilation = dilation;
        self
    }

    pub fn with_groups(mut self, groups: usize) -> Self {
        self.groups = groups;
        self
    }

    pub fn with_padding(mut self, padding: usize) -> Self {
        self.padding = padding;
        self
    }

    /// Pads by `d·(k−1)/2` so stride-1 outputs keep the input size (odd kernels).
    pub fn same_padding(mut self) -> Self {
        self.padding = self.dilation * (self.kernel.saturating_sub(1)) / 2;
        self
    }

    /// Receptive extent of one dilated kernel: `k + (k−1)(d−1)`.
    pub fn effective_kernel(&self) -> usize {
        effective_kernel(self.kernel, self.dilation)
    }

    pub fn weight_shape(&self) -> [usize; 4] {
        [
            self.out_channels,
            self.in_channels / self.groups.max(1),
            self.kernel,
            self.kernel,
        ]
    }

    pub fn weight_count(&self) -> usize {
        self.weight_shape().iter().product()
    }

    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 || self.dilation == 0 || self.kernel == 0 {
            return Err(Error::config(format!(
                "stride, dilation and kernel must be positive: {self:?}"
            )));
        }
        if self.groups == 0
            || self.in_channels % self.groups != 0
            || self.out_channels % self.groups != 0
        {
            return Err(Error::config(format!(
                "channels {}→{} not divisible by groups {}",
                self.in_channels, self.out_channels, self.groups
            )));
        }
        Ok(())
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let span = self.effective_kernel();
        let (ph, pw) = (h + 2 * self.padding, w + 2 * self.padding);
        if ph < span || pw < span {
            return Err(Error::config(format!(
                "input {h}×{w} with padding {} is smaller than the effective kernel {span}",
                self.padding
            )));
        }
        Ok(((ph - span) / self.stride + 1, (pw - span) / self.stride + 1))
    }

    fn path(&self) -> Path {
        if self.kernel == 1 && self.stride == 1 && self.padding == 0 && self.groups == 1 {
            Path::Pointwise
        } else if self.groups > 1
            && self.groups == self.in_channels
            && self.groups == self.out_channels
        {
            Path::Depthwise
        } else {
            Path::General
        }
    }

    fn check(&self, x: &[usize], w: &[usize], bias: Option<&[usize]>) -> Result<()> {
        self.validate()?;
        if x.len() != 4 || x[1] != self.in_channels {
            return Err(Error::config(format!(
                "conv input {x:?} does not have {} channels",
                self.in_channels
            )));
        }
        if w != self.weight_shape() {
            return Err(Error::config(format!(
                "conv weight {w:?} != expected {:?}",
                self.weight_shape()
            )));
        }
        if let Some(b) = bias {
            if b != [self.out_channels] {
                return Err(Error::config(format!(
                    "conv bias {b:?} != [{}]",
                    self.out_channels
                )));
            }
        }
        Ok(())
    }
}

pub fn effective_kernel(kernel: usize, dilation: usize) -> usize {
    kernel + (kernel - 1) * (dilation - 1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Path {
    Pointwise,
    Depthwise,
    General,
}

/// Gradients of a convolution with respect to its three inputs.
#[derive(Clone, Debug)]
pub struct ConvGrads<T> {
    pub input: Option<Tensor<T>>,
    pub weight: Tensor<T>,
    pub bias: Option<Tensor<T>>,
}

pub fn conv2d_forward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    spec: &ConvSpec,
) -> Result<Tensor<T>> {
    spec.check(x.shape(), w.shape(), bias.map(|b| b.shape()))?;
    let (b, _, h, wd) = x.dims4()?;
    let (ho, wo) = spec.output_hw(h, wd)?;
    let co = spec.out_channels;
    let mut out = vec![T::zero(); b * co * ho * wo];
    let in_item = spec.in_channels * h * wd;
    let out_item = co * ho * wo;
    let geo = Geometry::new(spec, h, wd, ho, wo);

    out.par_chunks_mut(out_item.max(1))
        .enumerate()
        .for_each(|(bi, ob)| {
            let xb = &x.data()[bi * in_item..(bi + 1) * in_item];
            match spec.path() {
                Path::Pointwise => {
                    T::gemm(co, spec.in_channels, h * wd, w.data(), false, xb, false, ob, false)
                }
                Path::Depthwise => {
                    for c in 0..co {
                        let kw = &w.data()[c * geo.taps()..(c + 1) * geo.taps()];
                        geo.depthwise_forward(
                            &xb[c * h * wd..(c + 1) * h * wd],
                            kw,
                            &mut ob[c * ho * wo..(c + 1) * ho * wo],
                        );
                    }
                }
                Path::General => general_forward(spec, &geo, xb, w.data(), ob),
            }
            if let Some(bias) = bias {
                for (c, plane) in ob.chunks_mut(ho * wo).enumerate() {
                    let bv = bias.data()[c];
                    plane.iter_mut().for_each(|v| *v += bv);
                }
            }
        });
    Tensor::new(vec![b, co, ho, wo], out)
}

/// Reverse pass. `dy` has the forward output's shape; `need_input` skips the input gradient.
pub fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    has_bias: bool,
    spec: &ConvSpec,
    dy: &Tensor<T>,
    need_input: bool,
) -> Result<ConvGrads<T>> {
    spec.check(x.shape(), w.shape(), None)?;
    let (b, ci, h, wd) = x.dims4()?;
    let (ho, wo) = spec.output_hw(h, wd)?;
    let co = spec.out_channels;
    if dy.shape() != [b, co, ho, wo] {
        return Err(Error::config(format!(
            "conv upstream gradient {:?} != output [{b}, {co}, {ho}, {wo}]",
            dy.shape()
        )));
    }
    let in_item = ci * h * wd;
    let out_item = co * ho * wo;
    let geo = Geometry::new(spec, h, wd, ho, wo);
    let path = spec.path();

    let bias = has_bias.then(|| {
        let mut db = vec![T::zero(); co];
        for bi in 0..b {
            for (c, plane) in dy.data()[bi * out_item..(bi + 1) * out_item]
                .chunks(ho * wo)
                .enumerate()
            {
                db[c] += plane.iter().copied().sum();
            }
        }
        Tensor::new(vec![co], db).expect("bias gradient shape")
    });

    let input = if need_input {
        let mut dx = vec![T::zero(); b * in_item];
        dx.par_chunks_mut(in_item.max(1))
            .enumerate()
            .for_each(|(bi, dxb)| {
                let dyb = &dy.data()[bi * out_item..(bi + 1) * out_item];
                match path {
                    Path::Pointwise => {
                        T::gemm(ci, co, h * wd, w.data(), true, dyb, false, dxb, false)
                    }
                    Path::Depthwise => {
                        for c in 0..co {
                            let kw = &w.data()[c * geo.taps()..(c + 1) * geo.taps()];
                            geo.depthwise_input_grad(
                                &dyb[c * ho * wo..(c + 1) * ho * wo],
                                kw,
                                &mut dxb[c * h * wd..(c + 1) * h * wd],
                            );
                        }
                    }
                    Path::General => general_input_grad(spec, &geo, dyb, w.data(), dxb),
                }
            });
        Some(Tensor::new(x.shape().to_vec(), dx)?)
    } else {
        None
    };

    let wcount = spec.weight_count();
    let weight = match path {
        Path::Depthwise => {
            let taps = geo.taps();
            let mut dw = vec![T::zero(); wcount];
            dw.par_chunks_mut(taps).enumerate().for_each(|(c, dwc)| {
                for bi in 0..b {
                    let xp = &x.data()[bi * in_item + c * h * wd..bi * in_item + (c + 1) * h * wd];
                    let dyp =
                        &dy.data()[bi * out_item + c * ho * wo..bi * out_item + (c + 1) * ho * wo];
                    geo.depthwise_weight_grad(xp, dyp, dwc);
                }
            });
            dw
        }
        _ => {
            let partials: Vec<Vec<T>> = (0..b)
                .into_par_iter()
                .map(|bi| {
                    let xb = &x.data()[bi * in_item..(bi + 1) * in_item];
                    let dyb = &dy.data()[bi * out_item..(bi + 1) * out_item];
                    let mut dw = vec![T::zero(); wcount];
                    if path == Path::Pointwise {
                        T::gemm(co, h * wd, ci, dyb, false, xb, true, &mut dw, false);
                    } else {
                        general_weight_grad(spec, &geo, xb, dyb, &mut dw);
                    }
                    dw
                })
                .collect();
            let mut dw = vec![T::zero(); wcount];
            for p in &partials {
                for (a, &v) in dw.iter_mut().zip(p) {
                    *a += v;
                }
            }
            dw
        }
    };

    Ok(ConvGrads {
        input,
        weight: Tensor::new(w.shape().to_vec(), weight)?,
        bias,
    })
}

/// Index arithmetic shared by the direct and im2col paths.
struct Geometry {
    k: usize,
    s: usize,
    d: usize,
    p: usize,
    h: usize,
    w: usize,
    ho: usize,
    wo: usize,
}

impl Geometry {
    fn new(spec: &ConvSpec, h: usize, w: usize, ho: usize, wo: usize) -> Self {
        Self {
            k: spec.kernel,
            s: spec.stride,
            d: spec.dilation,
            p: spec.padding,
            h,
            w,
            ho,
            wo,
        }
    }

    fn taps(&self) -> usize {
        self.k * self.k
    }

    /// Output index range `[lo, hi)` whose input coordinate `o·s + tap·d − p` lies in `[0, len)`.
    fn valid_range(&self, tap: usize, len: usize, out_len: usize) -> (usize, usize) {
        let off = (tap * self.d) as isize - self.p as isize;
        let s = self.s as isize;
        // o·s + off >= 0
        let lo = if off >= 0 { 0 } else { ((-off) + s - 1) / s };
        // o·s + off <= len − 1
        let top = len as isize - 1 - off;
        let hi = if top < 0 { 0 } else { top / s + 1 };
        let lo = lo.clamp(0, out_len as isize) as usize;
        let hi = hi.clamp(0, out_len as isize) as usize;
        (lo, hi.max(lo))
    }

    fn input_coord(&self, o: usize, tap: usize) -> usize {
        (o * self.s + tap * self.d) - self.p
    }

    fn depthwise_forward<T: Scalar>(&self, x: &[T], kw: &[T], out: &mut [T]) {
        for ky in 0..self.k {
            let (oy0, oy1) = self.valid_range(ky, self.h, self.ho);
            for kx in 0..self.k {
                let (ox0, ox1) = self.valid_range(kx, self.w, self.wo);
                if ox0 >= ox1 {
                    continue;
                }
                let wv = kw[ky * self.k + kx];
                for oy in oy0..oy1 {
                    let iy = self.input_coord(oy, ky);
                    let orow = &mut out[oy * self.wo + ox0..oy * self.wo + ox1];
                    if self.s == 1 {
                        let ix0 = self.input_coord(ox0, kx);
                        let irow = &x[iy * self.w + ix0..iy * self.w + ix0 + (ox1 - ox0)];
                        for (o, &i) in orow.iter_mut().zip(irow) {
                            *o += wv * i;
                        }
                    } else {
                        for (j, o) in orow.iter_mut().enumerate() {
                            *o += wv * x[iy * self.w + self.input_coord(ox0 + j, kx)];
                        }
                    }
                }
            }
        }
    }

    fn depthwise_input_grad<T: Scalar>(&self, dy: &[T], kw: &[T], dx: &mut [T]) {
        for ky in 0..self.k {
            let (oy0, oy1) = self.valid_range(ky, self.h, self.ho);
            for kx in 0..self.k {
                let (ox0, ox1) = self.valid_range(kx, self.w, self.wo);
                if ox0 >= ox1 {
                    continue;
                }
                let wv = kw[ky * self.k + kx];
                for oy in oy0..oy1 {
                    let iy = self.input_coord(oy, ky);
                    let grow = &dy[oy * self.wo + ox0..oy * self.wo + ox1];
                    if self.s == 1 {
                        let ix0 = self.input_coord(ox0, kx);
                        let drow = &mut dx[iy * self.w + ix0..iy * self.w + ix0 + (ox1 - ox0)];
                        for (d, &g) in drow.iter_mut().zip(grow) {
                            *d += wv * g;
                        }
                    } else {
                        for (j, &g) in grow.iter().enumerate() {
                            dx[iy * self.w + self.input_coord(ox0 + j, kx)] += wv * g;
                        }
                    }
                }
            }
        }
    }

    fn depthwise_weight_grad<T: Scalar>(&self, x: &[T], dy: &[T], dw: &mut [T]) {
        for ky in 0..self.k {
            let (oy0, oy1) = self.valid_range(ky, self.h, self.ho);
            for kx in 0..self.k {
                let (ox0, ox1) = self.valid_range(kx, self.w, self.wo);
                let mut acc = T::zero();
                for oy in oy0..oy1 {
                    let iy = self.input_coord(oy, ky);
                    for ox in ox0..ox1 {
                        acc += dy[oy * self.wo + ox] * x[iy * self.w + self.input_coord(ox, kx)];
                    }
                }
                dw[ky * self.k + kx] += acc;
            }
        }
    }

    /// Unfolds `channels` input planes into a (channels·k·k) × (ho·wo) matrix.
    fn im2col<T: Scalar>(&self, x: &[T], channels: usize, cols: &mut [T]) {
        let (hw_out, taps) = (self.ho * self.wo, self.taps());
        cols.iter_mut().for_each(|v| *v = T::zero());
        for c in 0..channels {
            let plane = &x[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ky in 0..self.k {
                let (oy0, oy1) = self.valid_range(ky, self.h, self.ho);
                for kx in 0..self.k {
                    let (ox0, ox1) = self.valid_range(kx, self.w, self.wo);
                    let row = (c * taps + ky * self.k + kx) * hw_out;
                    for oy in oy0..oy1 {
                        let iy = self.input_coord(oy, ky);
                        for ox in ox0..ox1 {
                            cols[row + oy * self.wo + ox] =
                                plane[iy * self.w + self.input_coord(ox, kx)];
                        }
                    }
                }
            }
        }
    }

    fn col2im<T: Scalar>(&self, cols: &[T], channels: usize, dx: &mut [T]) {
        let (hw_out, taps) = (self.ho * self.wo, self.taps());
        for c in 0..channels {
            let plane = &mut dx[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ky in 0..self.k {
                let (oy0, oy1) = self.valid_range(ky, self.h, self.ho);
                for kx in 0..self.k {
                    let (ox0, ox1) = self.valid_range(kx, self.w, self.wo);
                    let row = (c * taps + ky * self.k + kx) * hw_out;
                    for oy in oy0..oy1 {
                        let iy = self.input_coord(oy, ky);
                        for ox in ox0..ox1 {
                            plane[iy * self.w + self.input_coord(ox, kx)] +=
                                cols[row + oy * self.wo + ox];
                        }
                    }
                }
            }
        }
    }
}

fn group_dims(spec: &ConvSpec, geo: &Geometry) -> (usize, usize, usize, usize) {
    let cig = spec.in_channels / spec.groups;
    let cog = spec.out_channels / spec.groups;
    (cig, cog, cig * geo.taps(), geo.ho * geo.wo)
}

fn general_forward<T: Scalar>(spec: &ConvSpec, geo: &Geometry, xb: &[T], w: &[T], ob: &mut [T]) {
    let (cig, cog, kdim, p) = group_dims(spec, geo);
    let mut cols = vec![T::zero(); kdim * p];
    for g in 0..spec.groups {
        geo.im2col(&xb[g * cig * geo.h * geo.w..], cig, &mut cols);
        T::gemm(
            cog,
            kdim,
            p,
            &w[g * cog * kdim..(g + 1) * cog * kdim],
            false,
            &cols,
            false,
            &mut ob[g * cog * p..(g + 1) * cog * p],
            false,
        );
    }
}

fn general_input_grad<T: Scalar>(
    spec: &ConvSpec,
    geo: &Geometry,
    dyb: &[T],
    w: &[T],
    dxb: &mut [T],
) {
    let (cig, cog, kdim, p) = group_dims(spec, geo);
    let mut cols = vec![T::zero(); kdim * p];
    for g in 0..spec.groups {
        T::gemm(
            kdim,
            cog,
            p,
            &w[g * cog * kdim..(g + 1) * cog * kdim],
            true,
            &dyb[g * cog * p..(g + 1) * cog * p],
            false,
            &mut cols,
            false,
        );
        geo.col2im(&cols, cig, &mut dxb[g * cig * geo.h * geo.w..]);
    }
}

fn general_weight_grad<T: Scalar>(
    spec: &ConvSpec,
    geo: &Geometry,
    xb: &[T],
    dyb: &[T],
    dw: &mut [T],
) {
    let (cig, cog, kdim, p) = group_dims(spec, geo);
    let mut cols = vec![T::zero(); kdim * p];
    for g in 0..spec.groups {
        geo.im2col(&xb[g * cig * geo.h * geo.w..], cig, &mut cols);
        T::gemm(
            cog,
            p,
            kdim,
            &dyb[g * cog * p..(g + 1) * cog * p],
            false,
            &cols,
            true,
            &mut dw[g * cog * kdim..(g + 1) * cog * kdim],
            true,
        );
    }
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    /// Direct six-loop convolution used as the reference for every path.
    fn naive_conv(x: &Tensor<f64>, w: &Tensor<f64>, spec: &ConvSpec) -> Tensor<f64> {
        let (b, _, h, wd) = x.dims4().unwrap();
        let (ho, wo) = spec.output_hw(h, wd).unwrap();
        let (cig, cog) = (
            spec.in_channels / spec.groups,
            spec.out_channels / spec.groups,
        );
        let k = spec.kernel;
        let mut out = Tensor::zeros(vec![b, spec.out_channels, ho, wo]);
        for bi in 0..b {
            for oc in 0..spec.out_channels {
                let g = oc / cog;
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut acc = 0.0;
                        for icg in 0..cig {
                            let ic = g * cig + icg;
                            for ky in 0..k {
                                for kx in 0..k {
                                    let iy = (oy * spec.stride + ky * spec.dilation) as isize
                                        - spec.padding as isize;
                                    let ix = (ox * spec.stride + kx * spec.dilation) as isize
                                        - spec.padding as isize;
                                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                        continue;
                                    }
                                    acc += w.data()[((oc * cig + icg) * k + ky) * k + kx]
                                        * x.data()[((bi * spec.in_channels + ic) * h
                                            + iy as usize)
                                            * wd
                                            + ix as usize];
                                }
                            }
                        }
                        out.data_mut()[((bi * spec.out_channels + oc) * ho + oy) * wo + ox] = acc;
                    }
                }
            }
        }
        out
    }

    fn random(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> Tensor<f64> {
        Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn all_ones_three_by_three_sums_to_nine() {
        let x = Tensor::<f32>::full(vec![1, 1, 3, 3], 1.0);
        let w = Tensor::<f32>::full(vec![1, 1, 3, 3], 1.0);
        let y = conv2d_forward(&x, &w, None, &ConvSpec::new(1, 1, 3)).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1, 1]);
        assert_eq!(y.data()[0], 9.0);
    }

    #[test]
    fn effective_kernel_expansion() {
        assert_eq!(effective_kernel(11, 1), 11);
        assert_eq!(effective_kernel(11, 2), 21);
        assert_eq!(effective_kernel(11, 4), 41);
        assert_eq!(effective_kernel(11, 8), 81);
    }

    #[test]
    fn every_path_matches_naive_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let specs = [
            ConvSpec::pointwise(3, 5),
            ConvSpec::depthwise(4, 3, 1),
            ConvSpec::depthwise(4, 5, 3),
            ConvSpec::depthwise(3, 3, 2).with_stride(2),
            ConvSpec::new(4, 6, 3).with_groups(2).with_padding(1),
            ConvSpec::new(3, 4, 4).with_stride(4),
            ConvSpec::new(2, 3, 3).with_dilation(2).with_padding(1).with_stride(2),
            ConvSpec::new(2, 4, 3).with_groups(2).same_padding(),
        ];
        for spec in specs {
            let x = random(vec![2, spec.in_channels, 8, 8], &mut rng);
            let w = random(spec.weight_shape().to_vec(), &mut rng);
            let got = conv2d_forward(&x, &w, None, &spec).unwrap();
            let want = naive_conv(&x, &w, &spec);
            assert_eq!(got.shape(), want.shape(), "{spec:?}");
            for (a, b) in got.data().iter().zip(want.data()) {
                assert!((a - b).abs() < 1e-12, "{spec:?}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn pointwise_equals_per_pixel_matrix_multiply() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = ConvSpec::pointwise(3, 2);
        let x = random(vec![1, 3, 4, 4], &mut rng);
        let w = random(vec![2, 3, 1, 1], &mut rng);
        let y = conv2d_forward(&x, &w, None, &spec).unwrap();
        for p in 0..16 {
            for o in 0..2 {
                let want: f64 = (0..3)
                    .map(|i| w.data()[o * 3 + i] * x.data()[i * 16 + p])
                    .sum();
                assert!((y.data()[o * 16 + p] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dilated_kernel_larger_than_input_matches_zero_embedded_dense_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        // k_d = 41 on a 6×6 input
        let spec = ConvSpec::depthwise(2, 11, 4);
        let x = random(vec![1, 2, 6, 6], &mut rng);
        let w = random(vec![2, 1, 11, 11], &mut rng);
        let y = conv2d_forward(&x, &w, None, &spec).unwrap();
        assert_eq!(y.shape(), &[1, 2, 6, 6]);

        let kd = spec.effective_kernel();
        let mut dense = Tensor::<f64>::zeros(vec![2, 1, kd, kd]);
        for c in 0..2 {
            for ky in 0..11 {
                for kx in 0..11 {
                    dense.data_mut()[(c * kd + ky * 4) * kd + kx * 4] =
                        w.data()[(c * 11 + ky) * 11 + kx];
                }
            }
        }
        let dense_spec = ConvSpec::new(2, 2, kd).with_groups(2).with_padding(kd / 2);
        let want = naive_conv(&x, &dense, &dense_spec);
        for (a, b) in y.data().iter().zip(want.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_and_parameter_errors() {
        let x = Tensor::<f32>::zeros(vec![1, 3, 8, 8]);
        let w = Tensor::<f32>::zeros(vec![4, 3, 3, 3]);
        assert!(conv2d_forward(&x, &w, None, &ConvSpec::new(2, 4, 3)).is_err());
        assert!(conv2d_forward(&x, &w, None, &ConvSpec::new(3, 4, 3).with_stride(0)).is_err());
        assert!(conv2d_forward(&x, &w, None, &ConvSpec::new(3, 4, 3).with_dilation(0)).is_err());
        assert!(conv2d_forward(&x, &w, None, &ConvSpec::new(3, 4, 2)).is_err());
        assert!(ConvSpec::new(3, 4, 3).with_groups(2).validate().is_err());
    }

    #[test]
    fn patch_embedding_shape() {
        let spec = ConvSpec::new(3, 64, 16).with_stride(16);
        assert_eq!(spec.output_hw(1152, 1152).unwrap(), (72, 72));
        assert_eq!(spec.output_hw(192, 192).unwrap(), (12, 12));
    }
}
