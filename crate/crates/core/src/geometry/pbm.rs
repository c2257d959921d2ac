//! PBM reader/writer. Accepts plain `P1` and binary `P4`. Bit 1 is black
//! (solid), bit 0 is white (void); binary rows are packed MSB-first and
//! padded to a byte boundary with zero bits.

use super::{GeometryError, PoreImage};
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PbmFormat {
    Plain,
    Binary,
}

impl std::str::FromStr for PbmFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "plain" | "p1" => Ok(PbmFormat::Plain),
            "binary" | "p4" => Ok(PbmFormat::Binary),
            other => Err(format!("unknown pbm format '{other}'")),
        }
    }
}

pub fn load_pbm(path: &Path) -> Result<PoreImage, GeometryError> {
    let bytes = std::fs::read(path)?;
    load_pbm_bytes(&bytes)
}

pub fn save_pbm(image: &PoreImage, path: &Path, format: PbmFormat) -> Result<(), GeometryError> {
    std::fs::write(path, save_pbm_bytes(image, format))?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn err(&self, message: impl Into<String>) -> GeometryError {
        GeometryError::Parse {
            offset: self.pos,
            message: message.into(),
        }
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<u8> {
        let b = self.peek();
        if b.is_some() {
            self.pos += 1;
        }
        b
    }

    /// Skips whitespace and `#` comments (comment runs to end of line).
    fn skip_separators(&mut self) {
        while let Some(b) = self.peek() {
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while let Some(c) = self.bump() {
                    if c == b'\n' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    fn read_uint(&mut self, what: &str) -> Result<usize, GeometryError> {
        self.skip_separators();
        let start = self.pos;
        let mut value: usize = 0;
        let mut any = false;
        while let Some(b) = self.peek() {
            if b.is_ascii_digit() {
                value = value
                    .checked_mul(10)
                    .and_then(|v| v.checked_add((b - b'0') as usize))
                    .ok_or_else(|| self.err(format!("{what} overflows")))?;
                any = true;
                self.pos += 1;
            } else {
                break;
            }
        }
        if !any {
            self.pos = start;
            return Err(self.err(format!("expected {what} digits")));
        }
        Ok(value)
    }
}

pub fn load_pbm_bytes(bytes: &[u8]) -> Result<PoreImage, GeometryError> {
    let mut cur = Cursor { bytes, pos: 0 };
    if bytes.len() < 2 {
        return Err(cur.err("missing magic"));
    }
    let magic = &bytes[0..2];
    cur.pos = 2;
    let binary = match magic {
        b"P1" => false,
        b"P4" => true,
        _ => {
            cur.pos = 0;
            return Err(cur.err("expected magic P1 or P4"));
        }
    };
    let width = cur.read_uint("width")?;
    let height = cur.read_uint("height")?;
    if width == 0 || height == 0 {
        return Err(cur.err(format!("zero dimension {width}x{height}")));
    }
    let mut cells = Vec::with_capacity(width * height);
    if binary {
        // Exactly one whitespace byte separates the header from the raster.
        match cur.bump() {
            Some(b) if b.is_ascii_whitespace() => {}
            _ => return Err(cur.err("expected single whitespace before P4 raster")),
        }
        let row_bytes = width.div_ceil(8);
        for _y in 0..height {
            let row = cur
                .bytes
                .get(cur.pos..cur.pos + row_bytes)
                .ok_or_else(|| cur.err("truncated P4 raster row"))?;
            for x in 0..width {
                let byte = row[x / 8];
                let bit = (byte >> (7 - (x % 8))) & 1;
                cells.push(bit == 0); // 0 = white = void
            }
            cur.pos += row_bytes;
        }
    } else {
        for _ in 0..width * height {
            cur.skip_separators();
            match cur.bump() {
                Some(b'0') => cells.push(true),
                Some(b'1') => cells.push(false),
                Some(other) => {
                    cur.pos -= 1;
                    return Err(cur.err(format!(
                        "expected '0' or '1' pixel token, found {:?}",
                        other as char
                    )));
                }
                None => return Err(cur.err("truncated P1 raster")),
            }
        }
    }
    PoreImage::new(width, height, cells)
}

pub fn save_pbm_bytes(image: &PoreImage, format: PbmFormat) -> Vec<u8> {
    let (w, h) = (image.width(), image.height());
    match format {
        PbmFormat::Plain => {
            let mut out = format!("P1\n{w} {h}\n").into_bytes();
            for y in 0..h {
                let mut line = String::with_capacity(2 * w);
                for x in 0..w {
                    if x > 0 {
                        line.push(' ');
                    }
                    line.push(if image.is_void(x, y) { '0' } else { '1' });
                }
                line.push('\n');
                out.extend_from_slice(line.as_bytes());
            }
            out
        }
        PbmFormat::Binary => {
            let mut out = format!("P4\n{w} {h}\n").into_bytes();
            let row_bytes = w.div_ceil(8);
            for y in 0..h {
                let mut row = vec![0u8; row_bytes];
                for x in 0..w {
                    if !image.is_void(x, y) {
                        row[x / 8] |= 1 << (7 - (x % 8));
                    }
                }
                out.extend_from_slice(&row);
            }
            out
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn plain_two_by_two_all_void() {
        let img = load_pbm_bytes(b"P1 2 2 0 0 0 0").unwrap();
        assert_eq!(img.width(), 2);
        assert_eq!(img.height(), 2);
        assert_eq!(img.void_count(), 4);
    }

    /// Hand bit-packing oracle for a 10x2 binary image: row stride is 2
    /// bytes, the last 6 bits of each second byte are padding, and pixel
    /// (9, 0) lives in bit 6 of byte 1.
    #[test]
    fn binary_bit_packing_oracle_10x2() {
        let mut raster = vec![0u8; 4];
        let set_solid = |raster: &mut Vec<u8>, x: usize, y: usize| {
            raster[y * 2 + x / 8] |= 1 << (7 - (x % 8));
        };
        set_solid(&mut raster, 9, 0);
        set_solid(&mut raster, 0, 1);
        set_solid(&mut raster, 8, 1);
        assert_eq!(raster[1], 0b0100_0000, "pixel (9,0) is bit 6 of byte 1");
        let mut bytes = b"P4\n10 2\n".to_vec();
        bytes.extend_from_slice(&raster);
        let img = load_pbm_bytes(&bytes).unwrap();
        for y in 0..2 {
            for x in 0..10 {
                let expect_solid = (x, y) == (9, 0) || (x, y) == (0, 1) || (x, y) == (8, 1);
                assert_eq!(img.is_void(x, y), !expect_solid, "pixel ({x},{y})");
            }
        }
    }

    #[test]
    fn plain_all_solid_payload_is_nine_ones() {
        let img = PoreImage::filled(3, 3, false);
        let bytes = save_pbm_bytes(&img, PbmFormat::Plain);
        let text = String::from_utf8(bytes).unwrap();
        let ones = text
            .lines()
            .skip(2)
            .flat_map(|l| l.split_whitespace())
            .collect::<Vec<_>>();
        assert_eq!(ones, vec!["1"; 9]);
    }

    /// Hand bit-packing oracle: 10x1 alternating (solid at even x)
    /// packs to bytes 0xAA, 0x80.
    #[test]
    fn binary_payload_10x1_alternating() {
        let img = PoreImage::from_fn(10, 1, |x, _| x % 2 == 1);
        let bytes = save_pbm_bytes(&img, PbmFormat::Binary);
        let raster = &bytes[bytes.len() - 2..];
        assert_eq!(raster, &[0xAA, 0x80]);
    }

    #[test]
    fn rejects_zero_dimension() {
        let err = load_pbm_bytes(b"P1 0 3 ").unwrap_err();
        assert!(matches!(err, GeometryError::Parse { .. }), "{err}");
    }

    #[test]
    fn truncated_p4_names_offset() {
        let err = load_pbm_bytes(b"P4\n10 2\n\xff").unwrap_err();
        match err {
            GeometryError::Parse { offset, .. } => assert_eq!(offset, 8),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn comments_and_whitespace_are_skipped() {
        let img = load_pbm_bytes(b"P1\n# a comment\n 3 # inline\n1\n011").unwrap();
        assert_eq!((img.width(), img.height()), (3, 1));
        assert!(img.is_void(0, 0));
        assert!(!img.is_void(1, 0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        /// load . save is the identity on cells for both formats, including
        /// the plain -> binary -> plain chain.
        #[test]
        fn round_trip_identity(w in 1usize..20, h in 1usize..20, seed in 0u64..500) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let img = PoreImage::from_fn(w, h, |_, _| rng.random_bool(0.5));
            let via_plain = load_pbm_bytes(&save_pbm_bytes(&img, PbmFormat::Plain)).unwrap();
            prop_assert_eq!(&via_plain, &img);
            let via_binary = load_pbm_bytes(&save_pbm_bytes(&img, PbmFormat::Binary)).unwrap();
            prop_assert_eq!(&via_binary, &img);
            let chained =
                load_pbm_bytes(&save_pbm_bytes(&via_plain, PbmFormat::Binary)).unwrap();
            prop_assert_eq!(&chained, &img);
        }
    }
}
