//! Binary PGM (P5, maxval 255) for rendered views.

use std::fs;
use std::path::Path;

use super::GrayImage;
use crate::error::{Error, Result};

pub fn encode(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.size, img.size).into_bytes();
    out.extend_from_slice(&img.levels);
    out
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<GrayImage> {
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::parse(path, "truncated PGM header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    if fields[0] != "P5" {
        return Err(Error::parse(path, "not a binary PGM (P5)"));
    }
    let num = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::parse(path, format!("bad header field `{s}`")))
    };
    let (w, h, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
    if w != h {
        return Err(Error::parse(path, "views must be square"));
    }
    if maxval != 255 {
        return Err(Error::parse(path, "only maxval 255 is supported"));
    }
    let raster = bytes
        .get(pos..pos + w * h)
        .ok_or_else(|| Error::parse(path, "truncated raster"))?;
    Ok(GrayImage {
        size: w,
        levels: raster.to_vec(),
    })
}

pub fn write(path: &Path, img: &GrayImage) -> Result<()> {
    fs::write(path, encode(img))?;
    Ok(())
}

pub fn read(path: &Path) -> Result<GrayImage> {
    decode(&fs::read(path)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_comments() {
        let img = GrayImage {
            size: 3,
            levels: vec![0, 10, 255, 32, 9, 13, 1, 2, 3],
        };
        assert_eq!(decode(&encode(&img), Path::new("a")).unwrap(), img);
        let mut commented = b"P5\n# made by hand\n3 3\n255\n".to_vec();
        commented.extend_from_slice(&img.levels);
        assert_eq!(decode(&commented, Path::new("b")).unwrap(), img);
        assert!(decode(b"P2\n3 3\n255\n", Path::new("c")).is_err());
        assert!(decode(b"P5\n3 3\n255\n\x01", Path::new("d")).is_err());
    }
}
