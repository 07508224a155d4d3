//! Image frames and the crop/resize machinery feeding the extractors.
//!
//! Frames are interleaved RGB, `u8`. Crops are sampled bilinearly with edge
//! replication (so search regions may extend past the frame) and come out as
//! `side x side x 3` tensors scaled to `[0, 1]`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const FRAME_CHANNELS: usize = 3;

/// One RGB video frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    /// Interleaved RGB, row-major, `height * width * 3` bytes.
    pub data: Vec<u8>,
}

impl Frame {
    pub fn new(width: usize, height: usize) -> Self {
        Frame {
            width,
            height,
            data: vec![0; width * height * FRAME_CHANNELS],
        }
    }

    pub fn from_data(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height * FRAME_CHANNELS {
            return Err(Error::invalid("frame", "data length != w*h*3"));
        }
        Ok(Frame {
            width,
            height,
            data,
        })
    }

    /// Pixel value with edge replication outside the frame, in `[0, 1]`.
    #[inline]
    pub fn sample(&self, x: isize, y: isize, c: usize) -> f32 {
        let xi = x.clamp(0, self.width as isize - 1) as usize;
        let yi = y.clamp(0, self.height as isize - 1) as usize;
        self.data[(yi * self.width + xi) * FRAME_CHANNELS + c] as f32 / 255.0
    }

    #[inline]
    pub fn put(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let idx = (y * self.width + x) * FRAME_CHANNELS;
        self.data[idx..idx + 3].copy_from_slice(&rgb);
    }
}

/// Axis-aligned box as center + size, in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxPx {
    pub cx: f32,
    pub cy: f32,
    pub w: f32,
    pub h: f32,
}

impl BoxPx {
    pub fn from_corner(x: f32, y: f32, w: f32, h: f32) -> Self {
        BoxPx {
            cx: x + w / 2.0,
            cy: y + h / 2.0,
            w,
            h,
        }
    }

    /// Top-left corner `(x, y)`.
    pub fn corner(&self) -> (f32, f32) {
        (self.cx - self.w / 2.0, self.cy - self.h / 2.0)
    }

    pub fn is_degenerate(&self) -> bool {
        !(self.w > 0.0 && self.h > 0.0 && self.cx.is_finite() && self.cy.is_finite())
    }
}

/// Samples a square window of side `src_side` (pixels, may be fractional)
/// centered at `(cx, cy)` and resizes it to `dst_side x dst_side x 3` with
/// bilinear interpolation. Out-of-frame reads replicate the border.
pub fn crop_resize(frame: &Frame, cx: f32, cy: f32, src_side: f32, dst_side: usize) -> Result<Tensor> {
    if !(src_side > 0.0) || dst_side == 0 {
        return Err(Error::invalid("crop_resize", "degenerate crop"));
    }
    let step = src_side / dst_side as f32;
    let origin_x = cx - src_side / 2.0;
    let origin_y = cy - src_side / 2.0;
    let mut data = Vec::with_capacity(dst_side * dst_side * FRAME_CHANNELS);
    for r in 0..dst_side {
        // pixel-center coordinates in the source frame
        let sy = origin_y + (r as f32 + 0.5) * step - 0.5;
        let y0 = libm::floorf(sy) as isize;
        let fy = sy - y0 as f32;
        for c in 0..dst_side {
            let sx = origin_x + (c as f32 + 0.5) * step - 0.5;
            let x0 = libm::floorf(sx) as isize;
            let fx = sx - x0 as f32;
            for ch in 0..FRAME_CHANNELS {
                let v00 = frame.sample(x0, y0, ch);
                let v01 = frame.sample(x0 + 1, y0, ch);
                let v10 = frame.sample(x0, y0 + 1, ch);
                let v11 = frame.sample(x0 + 1, y0 + 1, ch);
                let top = v00 + (v01 - v00) * fx;
                let bot = v10 + (v11 - v10) * fx;
                data.push(top + (bot - top) * fy);
            }
        }
    }
    Tensor::from_vec(&[dst_side, dst_side, FRAME_CHANNELS], data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_crop_reproduces_pixels() {
        let mut f = Frame::new(4, 4);
        for y in 0..4 {
            for x in 0..4 {
                let v = (y * 4 + x) as u8 * 10;
                f.put(x, y, [v, v, v]);
            }
        }
        let t = crop_resize(&f, 2.0, 2.0, 4.0, 4).unwrap();
        for y in 0..4 {
            for x in 0..4 {
                let want = (y * 4 + x) as f32 * 10.0 / 255.0;
                assert!((t.at3(y, x, 0) - want).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn out_of_frame_replicates_edges() {
        let mut f = Frame::new(2, 2);
        f.put(0, 0, [100, 0, 0]);
        f.put(1, 0, [100, 0, 0]);
        f.put(0, 1, [100, 0, 0]);
        f.put(1, 1, [100, 0, 0]);
        let t = crop_resize(&f, 1.0, 1.0, 10.0, 5).unwrap();
        for &v in t.data() {
            assert!(v == 100.0 / 255.0 || v == 0.0);
        }
        assert!((t.at3(0, 0, 0) - 100.0 / 255.0).abs() < 1e-6);
    }

    #[test]
    fn box_roundtrip() {
        let b = BoxPx::from_corner(10.0, 20.0, 4.0, 6.0);
        assert_eq!((b.cx, b.cy), (12.0, 23.0));
        assert_eq!(b.corner(), (10.0, 20.0));
    }
}
