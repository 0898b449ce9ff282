//! Binary greyscale PGM (`P5`): 8-bit samples when `maxval < 256`, otherwise
//! 16-bit big-endian.

use std::io::{Read, Write};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub values: Vec<u16>,
}

fn header_token(bytes: &[u8], pos: &mut usize) -> Result<usize> {
    loop {
        match bytes.get(*pos) {
            Some(b'#') => {
                while bytes.get(*pos).is_some_and(|&b| b != b'\n') {
                    *pos += 1;
                }
            }
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(_) => break,
            None => return Err(Error::format("PGM", "truncated header")),
        }
    }
    let start = *pos;
    while bytes.get(*pos).is_some_and(u8::is_ascii_digit) {
        *pos += 1;
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::format("PGM", "expected a decimal header field"))
}

pub fn read_pgm<R: Read>(input: &mut R) -> Result<Pgm> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if !bytes.starts_with(b"P5") {
        return Err(Error::format("PGM", "missing P5 magic"));
    }
    let mut pos = 2;
    let width = header_token(&bytes, &mut pos)?;
    let height = header_token(&bytes, &mut pos)?;
    let maxval = header_token(&bytes, &mut pos)?;
    if width == 0 || height == 0 || maxval == 0 || maxval > 65535 {
        return Err(Error::format(
            "PGM",
            format!("bad header {width}×{height} maxval {maxval}"),
        ));
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::format(
            "PGM",
            "header must end in one whitespace byte",
        ));
    }
    pos += 1;
    let n = width * height;
    let sample = if maxval < 256 { 1 } else { 2 };
    let body = &bytes[pos..];
    if body.len() < n * sample {
        return Err(Error::format(
            "PGM",
            format!("expected {} sample bytes, found {}", n * sample, body.len()),
        ));
    }
    let values: Vec<u16> = if sample == 1 {
        body[..n].iter().map(|&b| b as u16).collect()
    } else {
        body[..2 * n]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    };
    if values.iter().any(|&v| v as usize > maxval) {
        return Err(Error::format("PGM", "sample exceeds maxval"));
    }
    Ok(Pgm {
        width,
        height,
        maxval: maxval as u16,
        values,
    })
}

pub fn write_pgm<W: Write>(out: &mut W, pgm: &Pgm) -> Result<()> {
    if pgm.values.len() != pgm.width * pgm.height {
        return Err(Error::format(
            "PGM",
            "value count does not match dimensions",
        ));
    }
    let mut buf = format!("P5\n{} {}\n{}\n", pgm.width, pgm.height, pgm.maxval).into_bytes();
    if pgm.maxval < 256 {
        for &v in &pgm.values {
            buf.push(u8::try_from(v).map_err(|_| Error::format("PGM", "sample exceeds 8 bits"))?);
        }
    } else {
        for &v in &pgm.values {
            buf.extend_from_slice(&v.to_be_bytes());
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eight_and_sixteen_bit() {
        let p = Pgm {
            width: 2,
            height: 1,
            maxval: 255,
            values: vec![3, 255],
        };
        let mut buf = Vec::new();
        write_pgm(&mut buf, &p).unwrap();
        assert_eq!(buf, b"P5\n2 1\n255\n\x03\xff");
        assert_eq!(read_pgm(&mut buf.as_slice()).unwrap(), p);

        let p16 = Pgm {
            width: 1,
            height: 2,
            maxval: 65535,
            values: vec![300, 1],
        };
        let mut buf = Vec::new();
        write_pgm(&mut buf, &p16).unwrap();
        assert!(buf.ends_with(&[0x01, 0x2c, 0x00, 0x01]));
        assert_eq!(read_pgm(&mut buf.as_slice()).unwrap(), p16);
    }

    #[test]
    fn comments_and_errors() {
        let raw = b"P5 # made by hand\n2 # w\n1\n255\n\x00\x01";
        assert_eq!(read_pgm(&mut &raw[..]).unwrap().values, vec![0, 1]);
        assert!(read_pgm(&mut &b"P2\n1 1\n255\n0"[..]).is_err());
        assert!(read_pgm(&mut &b"P5\n2 2\n255\n\x00"[..]).is_err());
        assert!(read_pgm(&mut &b"P5\n1 1\n9\n\x0a"[..]).is_err());
    }
}
