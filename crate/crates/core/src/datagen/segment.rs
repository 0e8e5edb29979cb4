use crate::error::{Error, Result};
use crate::ndtensor::{ops, Tensor};
use crate::scalar::Scalar;

/// Frames per model input segment.
pub const SEGMENT_LEN: usize = 16;

/// Start frames of consecutive non-overlapping windows; a leftover partial
/// window is replaced by the last `len` frames.
pub fn segment_starts(frames: usize, len: usize) -> Result<Vec<usize>> {
    if frames < len || len == 0 {
        return Err(Error::TooShort { frames, min: len });
    }
    let mut starts: Vec<usize> = (0..frames / len).map(|i| i * len).collect();
    if !frames.is_multiple_of(len) {
        starts.push(frames - len);
    }
    Ok(starts)
}

/// Splits `video[T0,...]` along its first axis into `len`-frame segments.
pub fn segment<T: Scalar>(video: &Tensor<T>, len: usize) -> Result<Vec<Tensor<T>>> {
    let shape = video.shape();
    let starts = segment_starts(shape[0], len)?;
    starts
        .into_iter()
        .map(|s| {
            let mut ranges: Vec<(usize, usize)> = shape.iter().map(|&e| (0, e)).collect();
            ranges[0] = (s, s + len);
            ops::slice(video, &ranges)
        })
        .collect()
}
