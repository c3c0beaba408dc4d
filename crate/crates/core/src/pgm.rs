//! Binary PGM (`P5`, 8-bit) codec and plan file I/O.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::grid::{GrayImage, OccupancyGrid};

pub fn encode_pgm(image: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend_from_slice(image.pixels());
    out
}

pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let mut pos = 0;
    if bytes.get(..2) != Some(b"P5") {
        return Err(Error::MalformedImage("missing P5 magic".into()));
    }
    pos += 2;
    let width = header_number(bytes, &mut pos, "width")?;
    let height = header_number(bytes, &mut pos, "height")?;
    let maxval = header_number(bytes, &mut pos, "maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::MalformedImage(format!(
            "zero dimension {width}x{height}"
        )));
    }
    if maxval == 0 || maxval > 255 {
        return Err(Error::MalformedImage(format!(
            "maxval {maxval} is not an 8-bit depth"
        )));
    }
    // Exactly one whitespace byte separates the header from the raster.
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::MalformedImage("no separator after maxval".into())),
    }
    let need = width
        .checked_mul(height)
        .ok_or_else(|| Error::MalformedImage("dimensions overflow".into()))?;
    let raster = &bytes[pos..];
    if raster.len() < need {
        return Err(Error::MalformedImage(format!(
            "expected {need} pixel bytes, found {}",
            raster.len()
        )));
    }
    GrayImage::new(width, height, raster[..need].to_vec())
}

fn header_number(bytes: &[u8], pos: &mut usize, what: &str) -> Result<usize> {
    loop {
        match bytes.get(*pos) {
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(b'#') => {
                while let Some(&b) = bytes.get(*pos) {
                    *pos += 1;
                    if b == b'\n' {
                        break;
                    }
                }
            }
            _ => break,
        }
    }
    let start = *pos;
    while bytes.get(*pos).is_some_and(u8::is_ascii_digit) {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::MalformedImage(format!("missing {what}")));
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::MalformedImage(format!("bad {what}")))
}

pub fn read_pgm(path: &Path) -> Result<GrayImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes)
}

pub fn write_pgm(image: &GrayImage, path: &Path) -> Result<()> {
    write_atomic(path, &encode_pgm(image))
}

/// Reads a plan image; pixels below 128 become blocked cells.
pub fn load_occupancy(path: &Path, cell_size: f64) -> Result<OccupancyGrid> {
    read_pgm(path)?.to_grid(cell_size)
}

/// Writes blocked cells as 0 and free cells as 255.
pub fn save_occupancy(grid: &OccupancyGrid, path: &Path) -> Result<()> {
    write_pgm(&GrayImage::from_grid(grid), path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Cell;

    #[test]
    fn decodes_two_pixel_plan() {
        let g = decode_pgm(b"P5\n2 1\n255\n\x00\xff")
            .unwrap()
            .to_grid(1.0)
            .unwrap();
        assert_eq!(g.cells(), &[Cell::Blocked, Cell::Free]);
    }

    #[test]
    fn all_white_is_all_free() {
        let mut bytes = b"P5 3 3 255\n".to_vec();
        bytes.extend([255u8; 9]);
        let g = decode_pgm(&bytes).unwrap().to_grid(1.0).unwrap();
        assert_eq!(g.free_count(), 9);
    }

    #[test]
    fn pixel_127_is_blocked() {
        let g = decode_pgm(b"P5 1 1 255 \x7f")
            .unwrap()
            .to_grid(1.0)
            .unwrap();
        assert_eq!(g.cells(), &[Cell::Blocked]);
    }

    #[test]
    fn header_comments_are_skipped() {
        let img = decode_pgm(b"P5\n# made by hand\n1 2\n# depth\n255\n\x01\x02").unwrap();
        assert_eq!(img.pixels(), &[1, 2]);
    }

    #[test]
    fn single_blocked_cell_encodes_to_zero() {
        let g = OccupancyGrid::filled(1, 1, 1.0, Cell::Blocked).unwrap();
        assert_eq!(encode_pgm(&GrayImage::from_grid(&g)), b"P5\n1 1\n255\n\x00");
    }

    #[test]
    fn header_of_100_square() {
        let g = OccupancyGrid::filled(100, 100, 1.0, Cell::Free).unwrap();
        let bytes = encode_pgm(&GrayImage::from_grid(&g));
        let header = std::str::from_utf8(&bytes[..15]).unwrap();
        let tokens: Vec<&str> = header.split_whitespace().collect();
        assert_eq!(tokens, ["P5", "100", "100", "255"]);
        assert_eq!(bytes.len(), 15 + 10_000);
    }

    #[test]
    fn malformed_inputs() {
        assert!(matches!(
            decode_pgm(b"P2 1 1 255 0"),
            Err(Error::MalformedImage(_))
        ));
        assert!(matches!(
            decode_pgm(b"P5 0 1 255 "),
            Err(Error::MalformedImage(_))
        ));
        assert!(matches!(
            decode_pgm(b"P5 2 2 255 \x00"),
            Err(Error::MalformedImage(_))
        ));
        assert!(matches!(
            decode_pgm(b"P5 1 1 65535 \x00\x00"),
            Err(Error::MalformedImage(_))
        ));
        assert!(matches!(decode_pgm(b"P5 x"), Err(Error::MalformedImage(_))));
    }

    #[test]
    fn missing_file_is_io_failure() {
        let err = load_occupancy(Path::new("/nonexistent/plan.pgm"), 1.0).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}
