//! Raster and event file formats.
//!
//! * RGB: binary PPM (`P6`, maxval 255).
//! * Segmentation: binary PGM (`P5`, maxval 65535, big-endian samples).
//! * Depth: PFM `Pf` (one channel), flow: PFM `PF` (three channels, the
//!   third is zero). PFM scale is `-1` (little-endian) and rows are stored
//!   bottom to top. Background depth is written as `+inf`; invalid flow as 0.
//! * Events: CSV with header `t,x,y,polarity`.

use std::io::{self, Write};

use super::events::Event;
use super::flow::FlowField;
use super::raster::FrameBundle;

pub fn write_ppm<W: Write>(frame: &FrameBundle, mut out: W) -> io::Result<()> {
    write!(out, "P6\n{} {}\n255\n", frame.width, frame.height)?;
    out.write_all(&frame.rgb)
}

pub fn write_pgm16<W: Write>(width: usize, height: usize, data: &[u16], mut out: W) -> io::Result<()> {
    write!(out, "P5\n{width} {height}\n65535\n")?;
    let mut buf = Vec::with_capacity(2 * data.len());
    for v in data {
        buf.extend_from_slice(&v.to_be_bytes());
    }
    out.write_all(&buf)
}

pub fn write_seg_pgm<W: Write>(frame: &FrameBundle, out: W) -> io::Result<()> {
    write_pgm16(frame.width, frame.height, &frame.seg, out)
}

fn write_pfm<W: Write>(width: usize, height: usize, channels: usize, sample: impl Fn(usize, usize, usize) -> f32, mut out: W) -> io::Result<()> {
    let tag = if channels == 1 { "Pf" } else { "PF" };
    write!(out, "{tag}\n{width} {height}\n-1\n")?;
    let mut buf = Vec::with_capacity(4 * width * height * channels);
    for v in (0..height).rev() {
        for u in 0..width {
            for c in 0..channels {
                buf.extend_from_slice(&sample(u, v, c).to_le_bytes());
            }
        }
    }
    out.write_all(&buf)
}

pub fn write_depth_pfm<W: Write>(frame: &FrameBundle, out: W) -> io::Result<()> {
    write_pfm(frame.width, frame.height, 1, |u, v, _| frame.depth[v * frame.width + u], out)
}

pub fn write_flow_pfm<W: Write>(flow: &FlowField, out: W) -> io::Result<()> {
    write_pfm(
        flow.width,
        flow.height,
        3,
        |u, v, c| if c < 2 { flow.data[v * flow.width + u][c] } else { 0.0 },
        out,
    )
}

pub fn write_events_csv<W: Write>(events: &[Event], mut out: W) -> io::Result<()> {
    writeln!(out, "t,x,y,polarity")?;
    for e in events {
        writeln!(out, "{:.9},{},{},{}", e.t, e.x, e.y, e.polarity)?;
    }
    Ok(())
}

/// Reads back a `P5` 16-bit PGM written by [`write_pgm16`].
pub fn read_pgm16(bytes: &[u8]) -> Option<(usize, usize, Vec<u16>)> {
    let mut parts = Vec::new();
    let mut pos = 0;
    while parts.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        parts.push(std::str::from_utf8(&bytes[start..pos]).ok()?.to_string());
    }
    pos += 1;
    if parts[0] != "P5" || parts[3] != "65535" {
        return None;
    }
    let (w, h): (usize, usize) = (parts[1].parse().ok()?, parts[2].parse().ok()?);
    let body = bytes.get(pos..pos + 2 * w * h)?;
    Some((w, h, body.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()))
}
