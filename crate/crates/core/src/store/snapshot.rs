//! Per-event snapshots as binary PGM (`P5`) images of the rendered depth frame.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use crate::depth::{render_grayscale, DepthFrame, GrayImage, SegmentationConfig};

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.pixels);
    out
}

/// Parses the files [`encode_pgm`] writes (no comments, maxval 255).
pub fn decode_pgm(bytes: &[u8]) -> Option<GrayImage> {
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while bytes.get(pos)?.is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while !bytes.get(pos)?.is_ascii_whitespace() {
            pos += 1;
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).ok()?);
    }
    // exactly one whitespace byte separates maxval from the raster
    pos += 1;
    if fields[0] != "P5" || fields[3] != "255" {
        return None;
    }
    let width: u32 = fields[1].parse().ok()?;
    let height: u32 = fields[2].parse().ok()?;
    let pixels = bytes.get(pos..)?.to_vec();
    (pixels.len() == width as usize * height as usize).then_some(GrayImage {
        width,
        height,
        pixels,
    })
}

/// Directory of snapshots named by event sequence number.
#[derive(Debug, Clone)]
pub struct SnapshotStore {
    dir: PathBuf,
}

impl SnapshotStore {
    pub fn open(dir: impl AsRef<Path>) -> io::Result<Self> {
        fs::create_dir_all(dir.as_ref())?;
        Ok(Self {
            dir: dir.as_ref().to_path_buf(),
        })
    }

    pub fn path_for(&self, id: u64) -> PathBuf {
        self.dir.join(format!("{id:010}.pgm"))
    }

    /// Writes the snapshot for event `event_seq`; the id is the sequence number.
    pub fn save(
        &self,
        frame: &DepthFrame,
        cfg: &SegmentationConfig,
        event_seq: u64,
    ) -> io::Result<u64> {
        let bytes = encode_pgm(&render_grayscale(frame, cfg));
        fs::write(self.path_for(event_seq), bytes)?;
        Ok(event_seq)
    }

    pub fn load(&self, id: u64) -> io::Result<Option<Vec<u8>>> {
        match fs::read(self.path_for(id)) {
            Ok(b) => Ok(Some(b)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }

    /// Removes every snapshot file.
    pub fn clear(&self) -> io::Result<()> {
        for entry in fs::read_dir(&self.dir)? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "pgm") {
                fs::remove_file(path)?;
            }
        }
        Ok(())
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}
