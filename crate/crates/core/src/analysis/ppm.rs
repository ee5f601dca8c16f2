//! Binary PPM (P6, maxval 255) images as `[3, H, W]` tensors in `[0, 1]`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{DType, Tensor};

pub fn decode_ppm(bytes: &[u8]) -> Result<Tensor> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        // Skip whitespace and comments between header tokens.
        while pos < bytes.len() {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else if bytes[pos].is_ascii_whitespace() {
                pos += 1;
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() && bytes[pos] != b'#' {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format {
                field: "ppm header",
                detail: "truncated header".into(),
            });
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if fields[0] != "P6" {
        return Err(Error::Format {
            field: "ppm magic",
            detail: format!("expected P6, found {}", fields[0]),
        });
    }
    let parse = |s: &str, field: &'static str| -> Result<usize> {
        s.parse().map_err(|_| Error::Format {
            field,
            detail: format!("not an integer: {s}"),
        })
    };
    let w = parse(&fields[1], "ppm width")?;
    let h = parse(&fields[2], "ppm height")?;
    let maxval = parse(&fields[3], "ppm maxval")?;
    if maxval != 255 {
        return Err(Error::Format {
            field: "ppm maxval",
            detail: format!("only 255 is supported, found {maxval}"),
        });
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let expected = pos + 3 * w * h;
    if bytes.len() != expected {
        return Err(Error::Length {
            expected,
            actual: bytes.len(),
        });
    }
    let raster = &bytes[pos..];
    let mut data = vec![0.0; 3 * h * w];
    for (i, px) in raster.chunks_exact(3).enumerate() {
        for c in 0..3 {
            data[c * h * w + i] = px[c] as f64 / 255.0;
        }
    }
    Tensor::new(vec![3, h, w], data, DType::F32)
}

pub fn encode_ppm(img: &Tensor) -> Result<Vec<u8>> {
    let (h, w) = match *img.shape() {
        [3, h, w] => (h, w),
        _ => {
            return Err(Error::arg(format!(
                "PPM output needs shape [3, H, W], got {:?}",
                img.shape()
            )))
        }
    };
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    let d = img.data();
    for i in 0..h * w {
        for c in 0..3 {
            out.push((d[c * h * w + i] * 255.0).round().clamp(0.0, 255.0) as u8);
        }
    }
    Ok(out)
}

pub fn read_ppm(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    decode_ppm(&fs::read(path).map_err(|e| Error::storage(path, e))?)
}

pub fn write_ppm(img: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_ppm(img)?).map_err(|e| Error::storage(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_layout() {
        let mut bytes = b"P6\n# comment\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[255, 0, 51, 0, 128, 255]);
        let img = decode_ppm(&bytes).unwrap();
        assert_eq!(img.shape(), &[3, 1, 2]);
        assert_eq!(img.data()[0], 1.0);
        assert_eq!(img.data()[4], 0.2f32 as f64);
        let again = encode_ppm(&img).unwrap();
        assert_eq!(&again[again.len() - 6..], &bytes[bytes.len() - 6..]);
    }

    #[test]
    fn rejects_other_formats() {
        assert!(decode_ppm(b"P3\n1 1\n255\n").is_err());
        assert!(decode_ppm(b"P6\n1 1\n65535\n\0\0\0\0\0\0").is_err());
        assert!(matches!(decode_ppm(b"P6\n2 2\n255\n\0\0\0"), Err(Error::Length { .. })));
    }

    #[test]
    fn write_clamps_and_rounds() {
        let img = Tensor::from_f64(vec![3, 1, 1], vec![-0.5, 0.5, 1.5]).unwrap();
        let bytes = encode_ppm(&img).unwrap();
        assert_eq!(&bytes[bytes.len() - 3..], &[0, 128, 255]);
    }
}
