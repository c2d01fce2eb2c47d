use std::fs;
use std::path::Path;

use super::{GrayImage, ImageError};

/// Decodes a P2 (ASCII) or P5 (binary) PGM stream with maxval ≤ 255.
///
/// Sample values are kept as stored; no rescaling to 255 happens when
/// maxval is smaller.
pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage, ImageError> {
    if bytes.len() < 2 || bytes[0] != b'P' || !matches!(bytes[1], b'2' | b'5') {
        return Err(ImageError::BadMagic);
    }
    let binary = bytes[1] == b'5';
    let mut cur = Cursor { bytes, pos: 2 };

    let width = cur.header_number("width")?;
    let height = cur.header_number("height")?;
    let maxval = cur.header_number("maxval")?;
    if width == 0 || height == 0 {
        return Err(ImageError::ZeroDimension);
    }
    if maxval == 0 {
        return Err(ImageError::MalformedHeader(
            "maxval must be positive".into(),
        ));
    }
    if maxval > 255 {
        return Err(ImageError::UnsupportedMaxval(maxval as u32));
    }
    let expected = width
        .checked_mul(height)
        .ok_or_else(|| ImageError::MalformedHeader("dimensions overflow".into()))?;

    let data = if binary {
        // exactly one whitespace byte separates maxval from the payload
        match cur.peek() {
            Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
            _ => {
                return Err(ImageError::MalformedHeader(
                    "missing whitespace after maxval".into(),
                ))
            }
        }
        let payload = &bytes[cur.pos..];
        if payload.len() < expected {
            return Err(ImageError::Truncated {
                expected,
                found: payload.len(),
            });
        }
        let data = payload[..expected].to_vec();
        if let Some(&v) = data.iter().find(|&&v| v as usize > maxval) {
            return Err(ImageError::SampleOutOfRange {
                value: v as u32,
                maxval: maxval as u32,
            });
        }
        data
    } else {
        let mut data = Vec::with_capacity(expected);
        while data.len() < expected {
            match cur.next_token() {
                Some(tok) => {
                    let v: usize = parse_decimal(tok).ok_or_else(|| {
                        ImageError::MalformedHeader(format!(
                            "bad ASCII sample {:?}",
                            String::from_utf8_lossy(tok)
                        ))
                    })?;
                    if v > maxval {
                        return Err(ImageError::SampleOutOfRange {
                            value: v.min(u32::MAX as usize) as u32,
                            maxval: maxval as u32,
                        });
                    }
                    data.push(v as u8);
                }
                None => {
                    return Err(ImageError::Truncated {
                        expected,
                        found: data.len(),
                    })
                }
            }
        }
        data
    };
    GrayImage::new(width, height, data)
}

/// Encodes as binary P5 with maxval 255.
pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let header = format!("P5\n{} {}\n255\n", img.width(), img.height());
    let mut out = Vec::with_capacity(header.len() + img.data().len());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(img.data());
    out
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayImage, ImageError> {
    decode_pgm(&fs::read(path)?)
}

pub fn write_pgm(img: &GrayImage, path: impl AsRef<Path>) -> Result<(), ImageError> {
    fs::write(path, encode_pgm(img))?;
    Ok(())
}

fn parse_decimal(tok: &[u8]) -> Option<usize> {
    if tok.is_empty() || !tok.iter().all(u8::is_ascii_digit) {
        return None;
    }
    std::str::from_utf8(tok).ok()?.parse().ok()
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    /// Skips whitespace and `#` comments (which run to end of line).
    fn skip_filler(&mut self) {
        while let Some(b) = self.peek() {
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while let Some(c) = self.peek() {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    fn next_token(&mut self) -> Option<&'a [u8]> {
        self.skip_filler();
        let start = self.pos;
        while let Some(b) = self.peek() {
            if b.is_ascii_whitespace() || b == b'#' {
                break;
            }
            self.pos += 1;
        }
        (self.pos > start).then(|| &self.bytes[start..self.pos])
    }

    fn header_number(&mut self, what: &str) -> Result<usize, ImageError> {
        let tok = self
            .next_token()
            .ok_or_else(|| ImageError::MalformedHeader(format!("missing {what}")))?;
        parse_decimal(tok).ok_or_else(|| {
            ImageError::MalformedHeader(format!("bad {what} {:?}", String::from_utf8_lossy(tok)))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_pixel_p5() {
        let mut bytes = b"P5 1 1 255\n".to_vec();
        bytes.push(0x7f);
        let img = decode_pgm(&bytes).unwrap();
        assert_eq!((img.width(), img.height()), (1, 1));
        assert_eq!(img.get(0, 0), 127);
    }

    #[test]
    fn ascii_with_comments() {
        let src = b"P2\n# made by hand\n3 2 # trailing\n255\n0 1 2\n# mid-data\n253 254 255\n";
        let img = decode_pgm(src).unwrap();
        assert_eq!(img.data(), &[0, 1, 2, 253, 254, 255]);
    }

    #[test]
    fn comment_in_binary_header() {
        let mut bytes = b"P5\n# c\n2 1\n# another\n255\n".to_vec();
        bytes.extend_from_slice(&[9, 10]);
        assert_eq!(decode_pgm(&bytes).unwrap().data(), &[9, 10]);
    }

    #[test]
    fn payload_may_start_with_whitespace_byte() {
        let mut bytes = b"P5 2 1 255\n".to_vec();
        bytes.extend_from_slice(b" \n");
        assert_eq!(decode_pgm(&bytes).unwrap().data(), &[32, 10]);
    }

    #[test]
    fn error_paths() {
        assert!(matches!(
            decode_pgm(b"P3 1 1 255\n0 0 0"),
            Err(ImageError::BadMagic)
        ));
        assert!(matches!(
            decode_pgm(b"P5 2 2 65535\n\0\0\0\0\0\0\0\0"),
            Err(ImageError::UnsupportedMaxval(65535))
        ));
        assert!(matches!(
            decode_pgm(b"P5 2 2 255\n\x01\x02"),
            Err(ImageError::Truncated {
                expected: 4,
                found: 2
            })
        ));
        assert!(matches!(
            decode_pgm(b"P2 2 2 255\n1 2 3"),
            Err(ImageError::Truncated {
                expected: 4,
                found: 3
            })
        ));
        assert!(matches!(
            decode_pgm(b"P2 1 1 15\n16"),
            Err(ImageError::SampleOutOfRange { .. })
        ));
        assert!(decode_pgm(b"P5 x 1 255\n\0").is_err());
    }

    #[test]
    fn header_declares_width_then_height() {
        let img = GrayImage::filled(3, 2, 0).unwrap();
        let bytes = encode_pgm(&img);
        assert!(bytes.starts_with(b"P5\n3 2\n255\n"));
        assert_eq!(decode_pgm(&bytes).unwrap(), img);
    }

    proptest! {
        #[test]
        fn round_trip(w in 1usize..12, h in 1usize..12, seed in any::<u64>()) {
            let mut s = seed;
            let img = GrayImage::from_fn(w, h, |_, _| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (s >> 56) as u8
            }).unwrap();
            prop_assert_eq!(decode_pgm(&encode_pgm(&img)).unwrap(), img);
        }
    }
}
