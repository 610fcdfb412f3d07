//! YUV4MPEG2 ingestion and emission (8-bit, 4:2:0, progressive).

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::frame::{chroma_dim, Frame, PixelPlane, VideoSequence};

const SIGNATURE: &[u8] = b"YUV4MPEG2";
const FRAME_TAG: &[u8] = b"FRAME";

fn parse_err<T>(offset: usize, msg: impl Into<String>) -> Result<T> {
    Err(Error::Parse { offset, msg: msg.into() })
}

fn find_newline(data: &[u8], from: usize) -> Option<usize> {
    data[from..].iter().position(|&b| b == b'\n').map(|p| from + p)
}

fn parse_rational(tok: &str) -> Option<(u32, u32)> {
    let (n, d) = tok.split_once(':')?;
    Some((n.parse().ok()?, d.parse().ok()?))
}

pub fn read_y4m<R: Read>(mut reader: R) -> Result<VideoSequence> {
    let mut data = Vec::new();
    reader.read_to_end(&mut data)?;
    parse_y4m(&data)
}

pub fn parse_y4m(data: &[u8]) -> Result<VideoSequence> {
    if !data.starts_with(SIGNATURE) {
        return parse_err(0, "missing YUV4MPEG2 signature");
    }
    let header_end = match find_newline(data, 0) {
        Some(p) => p,
        None => return parse_err(data.len(), "unterminated stream header"),
    };
    let header = std::str::from_utf8(&data[SIGNATURE.len()..header_end])
        .map_err(|e| Error::Parse { offset: SIGNATURE.len() + e.valid_up_to(), msg: "header is not UTF-8".into() })?;

    let (mut width, mut height, mut fps) = (None, None, None);
    let mut offset = SIGNATURE.len();
    for raw in header.split(' ') {
        let tok_offset = offset;
        offset += raw.len() + 1;
        if raw.is_empty() {
            continue;
        }
        let (tag, val) = raw.split_at(1);
        match tag {
            "W" => width = Some(val.parse::<usize>().map_err(|_| Error::Parse { offset: tok_offset, msg: format!("bad width {val:?}") })?),
            "H" => height = Some(val.parse::<usize>().map_err(|_| Error::Parse { offset: tok_offset, msg: format!("bad height {val:?}") })?),
            "F" => {
                fps = Some(parse_rational(val).filter(|r| r.0 > 0 && r.1 > 0).ok_or_else(|| Error::Parse {
                    offset: tok_offset,
                    msg: format!("bad frame rate {val:?}"),
                })?)
            }
            "C" => {
                if !matches!(val, "420" | "420jpeg" | "420paldv" | "420mpeg2") {
                    return Err(Error::Unsupported(format!("colorspace C{val}")));
                }
            }
            "I" => {
                if val != "p" && val != "?" {
                    return Err(Error::Unsupported(format!("interlacing I{val}")));
                }
            }
            // Aspect ratio and extensions carry nothing we need.
            "A" | "X" => {}
            _ => return parse_err(tok_offset, format!("unknown header token {raw:?}")),
        }
    }
    let width = width.filter(|&w| w > 0).ok_or_else(|| Error::Parse { offset: header_end, msg: "missing or zero W".into() })?;
    let height = height.filter(|&h| h > 0).ok_or_else(|| Error::Parse { offset: header_end, msg: "missing or zero H".into() })?;
    let fps = fps.ok_or_else(|| Error::Parse { offset: header_end, msg: "missing F".into() })?;

    let (cw, ch) = (chroma_dim(width), chroma_dim(height));
    let frame_bytes = width * height + 2 * cw * ch;
    let mut frames = Vec::new();
    let mut pos = header_end + 1;
    while pos < data.len() {
        if !data[pos..].starts_with(FRAME_TAG) {
            return parse_err(pos, "expected FRAME marker");
        }
        let line_end = find_newline(data, pos).ok_or_else(|| Error::Truncated(format!("unterminated FRAME marker at byte {pos}")))?;
        let start = line_end + 1;
        if data.len() - start < frame_bytes {
            return Err(Error::Truncated(format!(
                "frame {} has {} of {frame_bytes} payload bytes",
                frames.len(),
                data.len() - start
            )));
        }
        let payload = &data[start..start + frame_bytes];
        let (ys, rest) = payload.split_at(width * height);
        let (us, vs) = rest.split_at(cw * ch);
        frames.push(Frame::new(
            PixelPlane::new(width, height, ys.to_vec())?,
            PixelPlane::new(cw, ch, us.to_vec())?,
            PixelPlane::new(cw, ch, vs.to_vec())?,
            frames.len(),
        )?);
        pos = start + frame_bytes;
    }
    if frames.is_empty() {
        return Err(Error::Truncated("stream contains no frames".into()));
    }
    VideoSequence::new(frames, fps)
}

pub fn write_y4m<W: Write>(seq: &VideoSequence, mut out: W) -> Result<()> {
    if seq.is_empty() {
        return Err(Error::InvalidInput("cannot write an empty sequence".into()));
    }
    writeln!(out, "YUV4MPEG2 W{} H{} F{}:{} Ip A1:1 C420jpeg", seq.width, seq.height, seq.fps.0, seq.fps.1)?;
    for frame in &seq.frames {
        out.write_all(b"FRAME\n")?;
        for plane in frame.planes() {
            out.write_all(plane.samples())?;
        }
    }
    Ok(())
}

pub fn to_y4m_bytes(seq: &VideoSequence) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_y4m(seq, &mut buf)?;
    Ok(buf)
}
