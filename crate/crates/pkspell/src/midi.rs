//! Standard MIDI File (format 0 and 1) note extraction.
//!
//! Produces a [`Piece`] from raw SMF bytes: note-ons (velocity > 0) are paired
//! first-in-first-matched with the next note-off (or velocity-0 note-on) on
//! the same track, channel and pitch; tick times become seconds through the
//! merged tempo map (set-tempo meta events from every track, 500000 us per
//! quarter by default) and the header's ticks-per-quarter. Channel 10
//! (percussion) is excluded. Notes are ordered by onset, ties by pitch
//! low-to-high, remaining ties by track order.

use thiserror::Error;

use crate::corpus::{Note, Piece};

const DEFAULT_TEMPO: u32 = 500_000; // microseconds per quarter note

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MidiError {
    #[error("malformed midi file at byte {offset}: {message}")]
    Malformed { offset: usize, message: String },
}

fn malformed(offset: usize, message: impl Into<String>) -> MidiError {
    MidiError::Malformed {
        offset,
        message: message.into(),
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, pos: 0 }
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn u8(&mut self) -> Result<u8, MidiError> {
        let b = *self
            .bytes
            .get(self.pos)
            .ok_or_else(|| malformed(self.pos, "unexpected end of data"))?;
        self.pos += 1;
        Ok(b)
    }

    fn u16(&mut self) -> Result<u16, MidiError> {
        Ok(u16::from_be_bytes([self.u8()?, self.u8()?]))
    }

    fn u32(&mut self) -> Result<u32, MidiError> {
        Ok(u32::from_be_bytes([
            self.u8()?,
            self.u8()?,
            self.u8()?,
            self.u8()?,
        ]))
    }

    fn skip(&mut self, n: usize) -> Result<(), MidiError> {
        if self.remaining() < n {
            return Err(malformed(self.bytes.len(), "unexpected end of data"));
        }
        self.pos += n;
        Ok(())
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], MidiError> {
        if self.remaining() < n {
            return Err(malformed(self.bytes.len(), "unexpected end of data"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    /// Variable-length quantity, at most 4 bytes.
    fn varint(&mut self) -> Result<u32, MidiError> {
        let start = self.pos;
        let mut value: u32 = 0;
        for _ in 0..4 {
            let b = self.u8()?;
            value = (value << 7) | u32::from(b & 0x7f);
            if b & 0x80 == 0 {
                return Ok(value);
            }
        }
        Err(malformed(start, "variable-length quantity longer than 4 bytes"))
    }
}

/// How header division maps ticks to time.
enum Division {
    TicksPerQuarter(u16),
    /// Frames per second and ticks per frame; tempo events do not apply.
    Smpte(f64, u8),
}

struct RawNote {
    track: usize,
    on_tick: u64,
    off_tick: u64,
    pitch: u8,
}

struct TrackEvents {
    notes: Vec<RawNote>,
    tempos: Vec<(u64, u32)>,
}

/// Parse an SMF byte stream into an ordered note sequence.
///
/// The returned piece has an empty id; callers name it.
pub fn read_midi(bytes: &[u8]) -> Result<Piece, MidiError> {
    let mut r = Reader::new(bytes);
    let header_off = r.pos;
    if r.take(4)? != b"MThd" {
        return Err(malformed(header_off, "missing MThd chunk"));
    }
    let header_len = r.u32()? as usize;
    if header_len < 6 {
        return Err(malformed(header_off + 4, "MThd chunk shorter than 6 bytes"));
    }
    let format = r.u16()?;
    if format > 1 {
        return Err(malformed(
            header_off + 8,
            format!("unsupported SMF format {format}"),
        ));
    }
    let ntrks = r.u16()?;
    let division_off = r.pos;
    let division_raw = r.u16()?;
    r.skip(header_len - 6)?;
    let division = if division_raw & 0x8000 == 0 {
        if division_raw == 0 {
            return Err(malformed(division_off, "division of zero ticks per quarter"));
        }
        Division::TicksPerQuarter(division_raw)
    } else {
        let fps = match (division_raw >> 8) as i8 {
            -24 => 24.0,
            -25 => 25.0,
            -29 => 29.97,
            -30 => 30.0,
            other => {
                return Err(malformed(
                    division_off,
                    format!("invalid SMPTE frame rate {other}"),
                ));
            }
        };
        let tpf = (division_raw & 0xff) as u8;
        if tpf == 0 {
            return Err(malformed(division_off, "zero ticks per SMPTE frame"));
        }
        Division::Smpte(fps, tpf)
    };

    let mut tracks: Vec<TrackEvents> = Vec::new();
    while tracks.len() < usize::from(ntrks) {
        if r.remaining() == 0 {
            return Err(malformed(
                r.pos,
                format!("expected {ntrks} tracks, found {}", tracks.len()),
            ));
        }
        let chunk_off = r.pos;
        let tag = r.take(4)?;
        let len = r.u32()? as usize;
        if tag == b"MTrk" {
            let data_start = r.pos;
            let data = r.take(len)?;
            tracks.push(parse_track(data, data_start, tracks.len())?);
        } else {
            // Alien chunk: skip.
            r.skip(len)
                .map_err(|_| malformed(chunk_off, "chunk length exceeds file"))?;
        }
    }
    if r.remaining() > 0 {
        log::warn!("ignoring {} trailing bytes after last track", r.remaining());
    }

    // Merge tempo events from all tracks. Same-tick entries keep their track
    // order, and the last one at a tick wins.
    let mut tempos: Vec<(u64, u32)> = Vec::new();
    for t in &tracks {
        tempos.extend_from_slice(&t.tempos);
    }
    tempos.sort_by_key(|&(tick, _)| tick);
    let tick_to_seconds = TempoMap::new(&division, &tempos);

    let mut notes: Vec<(Note, usize)> = Vec::new();
    for t in &tracks {
        for raw in &t.notes {
            let onset = tick_to_seconds.seconds(raw.on_tick);
            let off = tick_to_seconds.seconds(raw.off_tick);
            let mut duration = off - onset;
            if duration <= 0.0 {
                log::warn!(
                    "zero-length note (pitch {}) at tick {}: clamping duration to 1 ms",
                    raw.pitch,
                    raw.on_tick
                );
                duration = 1e-3;
            }
            notes.push((
                Note {
                    onset,
                    duration,
                    pitch: raw.pitch,
                },
                raw.track,
            ));
        }
    }
    notes.sort_by(|a, b| {
        a.0.onset
            .total_cmp(&b.0.onset)
            .then(a.0.pitch.cmp(&b.0.pitch))
            .then(a.1.cmp(&b.1))
    });

    Ok(Piece {
        id: String::new(),
        composer: None,
        notes: notes.into_iter().map(|(n, _)| n).collect(),
    })
}

fn parse_track(data: &[u8], file_offset: usize, track: usize) -> Result<TrackEvents, MidiError> {
    let mut r = Reader::new(data);
    let off = |r: &Reader| file_offset + r.pos;

    let mut tick: u64 = 0;
    let mut running_status: Option<u8> = None;
    let mut tempos: Vec<(u64, u32)> = Vec::new();
    let mut notes: Vec<RawNote> = Vec::new();
    // Open note-ons per (channel, pitch), first-in-first-matched.
    let mut open: Vec<Vec<u64>> = vec![Vec::new(); 16 * 128];
    let mut ended = false;

    while r.remaining() > 0 {
        tick += u64::from(r.varint()?);
        let event_off = off(&r);
        let first = r.u8()?;
        let status = if first & 0x80 != 0 {
            if first < 0xf0 {
                running_status = Some(first);
            }
            first
        } else {
            // Data byte: running status.
            r.pos -= 1;
            running_status
                .ok_or_else(|| malformed(event_off, "data byte without running status"))?
        };

        match status & 0xf0 {
            0x80 | 0x90 => {
                let pitch = data_byte(&mut r, file_offset)?;
                let velocity = data_byte(&mut r, file_offset)?;
                let channel = status & 0x0f;
                if channel == 9 {
                    continue; // percussion
                }
                let slot = usize::from(channel) * 128 + usize::from(pitch);
                let is_on = status & 0xf0 == 0x90 && velocity > 0;
                if is_on {
                    open[slot].push(tick);
                } else if let Some(pos) = open[slot].first().copied() {
                    open[slot].remove(0);
                    notes.push(RawNote {
                        track,
                        on_tick: pos,
                        off_tick: tick,
                        pitch,
                    });
                } else {
                    log::warn!("note-off without matching note-on at byte {event_off}");
                }
            }
            0xa0 | 0xb0 | 0xe0 => {
                data_byte(&mut r, file_offset)?;
                data_byte(&mut r, file_offset)?;
            }
            0xc0 | 0xd0 => {
                data_byte(&mut r, file_offset)?;
            }
            0xf0 => {
                running_status = None;
                match status {
                    0xf0 | 0xf7 => {
                        let len = r.varint()? as usize;
                        r.skip(len)
                            .map_err(|_| malformed(event_off, "sysex length exceeds track"))?;
                    }
                    0xff => {
                        let meta_type = r.u8()?;
                        let len = r.varint()? as usize;
                        let payload = r
                            .take(len)
                            .map_err(|_| malformed(event_off, "meta length exceeds track"))?;
                        match meta_type {
                            0x51 => {
                                if payload.len() != 3 {
                                    return Err(malformed(
                                        event_off,
                                        "set-tempo payload must be 3 bytes",
                                    ));
                                }
                                let us = u32::from_be_bytes([
                                    0, payload[0], payload[1], payload[2],
                                ]);
                                tempos.push((tick, us));
                            }
                            0x2f => {
                                ended = true;
                                break;
                            }
                            _ => {}
                        }
                    }
                    other => {
                        return Err(malformed(
                            event_off,
                            format!("unsupported status byte {other:#04x}"),
                        ));
                    }
                }
            }
            _ => unreachable!(),
        }
    }
    if !ended {
        log::warn!("track {track} has no end-of-track event");
    }

    // Close unterminated notes at the end of the track.
    for (slot, opens) in open.iter().enumerate() {
        let pitch = (slot % 128) as u8;
        for &on_tick in opens {
            log::warn!("unterminated note (pitch {pitch}) closed at end of track {track}");
            notes.push(RawNote {
                track,
                on_tick,
                off_tick: tick,
                pitch,
            });
        }
    }

    Ok(TrackEvents { notes, tempos })
}

fn data_byte(r: &mut Reader, file_offset: usize) -> Result<u8, MidiError> {
    let at = file_offset + r.pos;
    let b = r.u8()?;
    if b & 0x80 != 0 {
        return Err(malformed(at, format!("invalid data byte {b:#04x}")));
    }
    Ok(b)
}

/// Piecewise-linear tick-to-seconds conversion.
struct TempoMap {
    /// (start tick, seconds at start, seconds per tick), ascending by tick.
    segments: Vec<(u64, f64, f64)>,
}

impl TempoMap {
    fn new(division: &Division, tempos: &[(u64, u32)]) -> TempoMap {
        match division {
            Division::Smpte(fps, tpf) => {
                let spt = 1.0 / (fps * f64::from(*tpf));
                TempoMap {
                    segments: vec![(0, 0.0, spt)],
                }
            }
            Division::TicksPerQuarter(tpq) => {
                let tpq = f64::from(*tpq);
                let mut segments: Vec<(u64, f64, f64)> =
                    vec![(0, 0.0, f64::from(DEFAULT_TEMPO) / (tpq * 1e6))];
                for &(tick, us) in tempos {
                    let spt = f64::from(us) / (tpq * 1e6);
                    let (last_tick, last_sec, last_spt) = *segments.last().unwrap();
                    let start_sec = last_sec + (tick - last_tick) as f64 * last_spt;
                    if tick == last_tick {
                        *segments.last_mut().unwrap() = (tick, last_sec, spt);
                    } else {
                        segments.push((tick, start_sec, spt));
                    }
                }
                TempoMap { segments }
            }
        }
    }

    fn seconds(&self, tick: u64) -> f64 {
        let idx = self
            .segments
            .partition_point(|&(start, _, _)| start <= tick)
            .saturating_sub(1);
        let (start, sec, spt) = self.segments[idx];
        sec + (tick - start) as f64 * spt
    }
}
