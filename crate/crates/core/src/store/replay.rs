//! `DRF1` depth replay container.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "DRF1"
//! 4       4     width        u32 LE
//! 8       4     height       u32 LE
//! 12      4     frame_count  u32 LE
//! 16      4     reserved     u32 LE, must be 0
//! 20      ...   frame_count frames, each:
//!               u64 LE timestamp_us
//!               u64 LE frame_index
//!               width*height u16 LE depth samples (mm), row-major
//! ```

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::depth::DepthFrame;
use crate::error::ReplayError;

pub const REPLAY_MAGIC: [u8; 4] = *b"DRF1";
pub const REPLAY_HEADER_LEN: u64 = 20;
const FRAME_PREFIX_LEN: u64 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReplayHeader {
    pub width: u32,
    pub height: u32,
    pub frame_count: u32,
}

impl ReplayHeader {
    pub fn frame_bytes(&self) -> u64 {
        FRAME_PREFIX_LEN + 2 * self.width as u64 * self.height as u64
    }

    /// Exact size of a well-formed file with this header.
    pub fn file_len(&self) -> u64 {
        REPLAY_HEADER_LEN + self.frame_count as u64 * self.frame_bytes()
    }

    fn encode(&self) -> [u8; REPLAY_HEADER_LEN as usize] {
        let mut b = [0u8; REPLAY_HEADER_LEN as usize];
        b[0..4].copy_from_slice(&REPLAY_MAGIC);
        b[4..8].copy_from_slice(&self.width.to_le_bytes());
        b[8..12].copy_from_slice(&self.height.to_le_bytes());
        b[12..16].copy_from_slice(&self.frame_count.to_le_bytes());
        b
    }

    fn decode(b: &[u8; REPLAY_HEADER_LEN as usize]) -> Result<Self, ReplayError> {
        if b[0..4] != REPLAY_MAGIC {
            return Err(ReplayError::CorruptHeader(format!(
                "bad magic {:?}",
                String::from_utf8_lossy(&b[0..4])
            )));
        }
        let word = |i: usize| u32::from_le_bytes(b[i..i + 4].try_into().unwrap());
        let (width, height, frame_count, reserved) = (word(4), word(8), word(12), word(16));
        if reserved != 0 {
            return Err(ReplayError::CorruptHeader(format!(
                "reserved field is {reserved}"
            )));
        }
        if width == 0 || height == 0 {
            return Err(ReplayError::CorruptHeader(format!(
                "zero frame dimension {width}x{height}"
            )));
        }
        Ok(Self {
            width,
            height,
            frame_count,
        })
    }
}

/// Streams frames into a replay whose frame count is fixed up front.
pub struct ReplayWriter<W: Write> {
    out: W,
    header: ReplayHeader,
    written: u32,
    last_index: Option<u64>,
    buf: Vec<u8>,
}

impl<W: Write> ReplayWriter<W> {
    pub fn new(mut out: W, header: ReplayHeader) -> Result<Self, ReplayError> {
        out.write_all(&header.encode())?;
        Ok(Self {
            out,
            header,
            written: 0,
            last_index: None,
            buf: Vec::with_capacity(header.frame_bytes() as usize),
        })
    }

    pub fn push(&mut self, frame: &DepthFrame) -> Result<(), ReplayError> {
        let h = &self.header;
        if (frame.width, frame.height) != (h.width, h.height)
            || frame.depth.len() as u64 != h.width as u64 * h.height as u64
        {
            return Err(ReplayError::DimensionMismatch {
                frame: frame.frame_index,
                width: h.width,
                height: h.height,
                actual_width: frame.width,
                actual_height: frame.height,
            });
        }
        if let Some(prev) = self.last_index {
            if frame.frame_index <= prev {
                return Err(ReplayError::NonMonotonicIndex {
                    frame: self.written,
                    previous: prev,
                    index: frame.frame_index,
                });
            }
        }
        if self.written == h.frame_count {
            return Err(ReplayError::CorruptHeader(format!(
                "more frames than the declared {}",
                h.frame_count
            )));
        }
        self.buf.clear();
        self.buf
            .extend_from_slice(&frame.timestamp_us.to_le_bytes());
        self.buf.extend_from_slice(&frame.frame_index.to_le_bytes());
        for d in &frame.depth {
            self.buf.extend_from_slice(&d.to_le_bytes());
        }
        self.out.write_all(&self.buf)?;
        self.written += 1;
        self.last_index = Some(frame.frame_index);
        Ok(())
    }

    /// Flushes and returns the sink. Fails if fewer frames than declared
    /// were pushed.
    pub fn finish(mut self) -> Result<W, ReplayError> {
        if self.written != self.header.frame_count {
            return Err(ReplayError::Truncated {
                frame: self.written,
                frame_count: self.header.frame_count,
            });
        }
        self.out.flush()?;
        Ok(self.out)
    }
}

pub fn write_replay<W: Write>(frames: &[DepthFrame], out: W) -> Result<W, ReplayError> {
    let first = frames.first().ok_or(ReplayError::Empty)?;
    let frame_count = u32::try_from(frames.len())
        .map_err(|_| ReplayError::CorruptHeader("more than u32::MAX frames".into()))?;
    let mut w = ReplayWriter::new(
        out,
        ReplayHeader {
            width: first.width,
            height: first.height,
            frame_count,
        },
    )?;
    for f in frames {
        w.push(f)?;
    }
    w.finish()
}

pub fn write_replay_file(frames: &[DepthFrame], path: impl AsRef<Path>) -> Result<(), ReplayError> {
    if frames.is_empty() {
        return Err(ReplayError::Empty);
    }
    let out = BufWriter::new(File::create(path)?);
    write_replay(frames, out)?;
    Ok(())
}

/// Reads frames one at a time. Yields `Err` once and then stops on any
/// format violation.
pub struct ReplayReader<R: Read> {
    input: R,
    header: ReplayHeader,
    read: u32,
    last_index: Option<u64>,
    buf: Vec<u8>,
    failed: bool,
}

impl<R: Read> ReplayReader<R> {
    pub fn new(mut input: R) -> Result<Self, ReplayError> {
        let mut hb = [0u8; REPLAY_HEADER_LEN as usize];
        read_full(&mut input, &mut hb).map_err(|e| match e {
            ReadFull::Short(n) => {
                ReplayError::CorruptHeader(format!("file ends after {n} of 20 header bytes"))
            }
            ReadFull::Io(e) => ReplayError::Io(e),
        })?;
        let header = ReplayHeader::decode(&hb)?;
        Ok(Self {
            input,
            header,
            read: 0,
            last_index: None,
            buf: vec![0u8; header.frame_bytes() as usize],
            failed: false,
        })
    }

    pub fn header(&self) -> ReplayHeader {
        self.header
    }

    fn read_frame(&mut self) -> Result<DepthFrame, ReplayError> {
        let position = self.read;
        read_full(&mut self.input, &mut self.buf).map_err(|e| match e {
            ReadFull::Short(_) => ReplayError::Truncated {
                frame: position,
                frame_count: self.header.frame_count,
            },
            ReadFull::Io(e) => ReplayError::Io(e),
        })?;
        let timestamp_us = u64::from_le_bytes(self.buf[0..8].try_into().unwrap());
        let frame_index = u64::from_le_bytes(self.buf[8..16].try_into().unwrap());
        if let Some(prev) = self.last_index {
            if frame_index <= prev {
                return Err(ReplayError::NonMonotonicIndex {
                    frame: position,
                    previous: prev,
                    index: frame_index,
                });
            }
        }
        let depth = self.buf[FRAME_PREFIX_LEN as usize..]
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes([c[0], c[1]]))
            .collect();
        self.read += 1;
        self.last_index = Some(frame_index);
        Ok(DepthFrame {
            width: self.header.width,
            height: self.header.height,
            frame_index,
            timestamp_us,
            depth,
        })
    }

    /// After all declared frames are read, checks nothing follows them.
    fn check_end(&mut self) -> Result<(), ReplayError> {
        let mut extra = 0u64;
        let mut chunk = [0u8; 4096];
        loop {
            match self.input.read(&mut chunk) {
                Ok(0) => break,
                Ok(n) => extra += n as u64,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
        if extra > 0 {
            return Err(ReplayError::TrailingData(extra));
        }
        Ok(())
    }
}

impl<R: Read> Iterator for ReplayReader<R> {
    type Item = Result<DepthFrame, ReplayError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        let res = if self.read < self.header.frame_count {
            self.read_frame().map(Some)
        } else {
            // checked once: the next call sees `failed` or returns None below
            self.failed = true;
            self.check_end().map(|_| None)
        };
        match res {
            Ok(Some(f)) => Some(Ok(f)),
            Ok(None) => None,
            Err(e) => {
                self.failed = true;
                Some(Err(e))
            }
        }
    }
}

pub fn read_replay<R: Read>(input: R) -> Result<Vec<DepthFrame>, ReplayError> {
    ReplayReader::new(input)?.collect()
}

pub fn open_replay(path: impl AsRef<Path>) -> Result<ReplayReader<BufReader<File>>, ReplayError> {
    ReplayReader::new(BufReader::new(File::open(path)?))
}

pub fn read_replay_file(path: impl AsRef<Path>) -> Result<Vec<DepthFrame>, ReplayError> {
    open_replay(path)?.collect()
}

enum ReadFull {
    Short(usize),
    Io(io::Error),
}

fn read_full<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<(), ReadFull> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => return Err(ReadFull::Short(filled)),
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(ReadFull::Io(e)),
        }
    }
    Ok(())
}
