//! RIFF/WAVE reading (PCM 16/24-bit, IEEE float 32-bit) and writing
//! (IEEE float 32-bit). Integer PCM is scaled to `[-1, 1)`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::signal::AudioClip;

const FORMAT_PCM: u16 = 1;
const FORMAT_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SampleFormat {
    Int16,
    Int24,
    Float32,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(
                self.pos as u64,
                format!("truncated while reading {what}"),
            ));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

/// Decodes a WAV file held in memory.
pub fn decode_wav(bytes: &[u8]) -> Result<AudioClip> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "RIFF tag")? != b"RIFF" {
        return Err(Error::format(0, "missing RIFF tag"));
    }
    r.u32("RIFF size")?;
    if r.take(4, "WAVE tag")? != b"WAVE" {
        return Err(Error::format(8, "missing WAVE tag"));
    }

    let mut fmt: Option<(SampleFormat, usize, u32)> = None;
    loop {
        let chunk_start = r.pos as u64;
        let id: [u8; 4] = r.take(4, "chunk id")?.try_into().unwrap();
        let size = r.u32("chunk size")? as usize;
        match &id {
            b"fmt " => {
                if size < 16 {
                    return Err(Error::format(chunk_start, "fmt chunk shorter than 16 bytes"));
                }
                let body_start = r.pos;
                let mut tag = r.u16("format tag")?;
                let channels = r.u16("channel count")? as usize;
                let rate = r.u32("sample rate")?;
                r.u32("byte rate")?;
                r.u16("block align")?;
                let bits = r.u16("bits per sample")?;
                if tag == FORMAT_EXTENSIBLE {
                    if size < 40 {
                        return Err(Error::format(chunk_start, "extensible fmt chunk too short"));
                    }
                    r.take(8, "extension header")?;
                    tag = r.u16("subformat")?;
                }
                r.pos = body_start;
                r.take(size + (size & 1), "fmt chunk")?;
                let format = match (tag, bits) {
                    (FORMAT_PCM, 16) => SampleFormat::Int16,
                    (FORMAT_PCM, 24) => SampleFormat::Int24,
                    (FORMAT_FLOAT, 32) => SampleFormat::Float32,
                    _ => {
                        return Err(Error::format(
                            body_start as u64,
                            format!("unsupported codec: format tag {tag}, {bits} bits"),
                        ))
                    }
                };
                if channels == 0 {
                    return Err(Error::format(body_start as u64 + 2, "zero channels"));
                }
                if rate == 0 {
                    return Err(Error::format(body_start as u64 + 4, "zero sample rate"));
                }
                fmt = Some((format, channels, rate));
            }
            b"data" => {
                let (format, channels, rate) = fmt.ok_or_else(|| {
                    Error::format(chunk_start, "data chunk precedes fmt chunk")
                })?;
                let data_offset = r.pos as u64;
                let data = r.take(size, "sample data")?;
                return decode_samples(data, data_offset, format, channels, rate);
            }
            _ => {
                r.take(size + (size & 1), "skipped chunk")?;
            }
        }
    }
}

fn decode_samples(
    data: &[u8],
    offset: u64,
    format: SampleFormat,
    channels: usize,
    rate: u32,
) -> Result<AudioClip> {
    let width = match format {
        SampleFormat::Int16 => 2,
        SampleFormat::Int24 => 3,
        SampleFormat::Float32 => 4,
    };
    let frame = width * channels;
    if data.len() % frame != 0 {
        return Err(Error::format(
            offset + (data.len() - data.len() % frame) as u64,
            "data chunk ends mid-frame",
        ));
    }
    let frames = data.len() / frame;
    let mut out = vec![Vec::with_capacity(frames); channels];
    for chunk in data.chunks_exact(frame) {
        for (m, s) in chunk.chunks_exact(width).enumerate() {
            let v = match format {
                SampleFormat::Int16 => i16::from_le_bytes([s[0], s[1]]) as f64 / 32768.0,
                SampleFormat::Int24 => {
                    let raw = i32::from_le_bytes([0, s[0], s[1], s[2]]) >> 8;
                    raw as f64 / 8_388_608.0
                }
                SampleFormat::Float32 => f32::from_le_bytes([s[0], s[1], s[2], s[3]]) as f64,
            };
            out[m].push(v);
        }
    }
    AudioClip::new(out, rate as f64)
}

/// Encodes a clip as 32-bit IEEE float WAV.
pub fn encode_wav(clip: &AudioClip) -> Result<Vec<u8>> {
    let channels = clip.num_channels();
    if channels == 0 || channels > u16::MAX as usize {
        return Err(Error::Shape(format!("cannot encode {channels} channels")));
    }
    let rate = clip.sample_rate();
    if rate.fract() != 0.0 || rate > u32::MAX as f64 {
        return Err(Error::Config(format!("sample rate {rate} is not a valid WAV rate")));
    }
    let data_len = clip.len() * channels * 4;
    if data_len > (u32::MAX as usize) - 36 {
        return Err(Error::Shape("clip too long for a RIFF container".into()));
    }
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_FLOAT.to_le_bytes());
    out.extend_from_slice(&(channels as u16).to_le_bytes());
    out.extend_from_slice(&(rate as u32).to_le_bytes());
    out.extend_from_slice(&((rate as u32) * channels as u32 * 4).to_le_bytes());
    out.extend_from_slice(&((channels * 4) as u16).to_le_bytes());
    out.extend_from_slice(&32u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for n in 0..clip.len() {
        for m in 0..channels {
            out.extend_from_slice(&(clip.channel(m)[n] as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_wav(&bytes)
}

pub fn save_wav(clip: &AudioClip, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_wav(clip)?).map_err(|e| Error::io(path, e))
}
