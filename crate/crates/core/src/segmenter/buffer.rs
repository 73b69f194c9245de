use super::SegmentError;

/// Fixed-capacity circular store of per-frame sample blocks.
#[derive(Debug, Clone)]
pub struct RingBuffer {
    data: Vec<f32>,
    capacity: usize,
    frame_len: usize,
    written: u64,
}

impl RingBuffer {
    pub fn new(capacity: usize, frame_len: usize) -> Self {
        assert!(capacity > 0 && frame_len > 0, "ring buffer needs a positive size");
        Self { data: vec![0.0; capacity * frame_len], capacity, frame_len, written: 0 }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    /// Frames written since creation.
    pub fn written(&self) -> u64 {
        self.written
    }

    /// Slot the next frame goes to.
    pub fn write_pos(&self) -> usize {
        (self.written % self.capacity as u64) as usize
    }

    pub fn slot_of(&self, frame: u64) -> usize {
        (frame % self.capacity as u64) as usize
    }

    /// Stores one frame; shorter input is zero-padded, longer input is cut.
    pub fn write_frame(&mut self, samples: &[f32]) {
        let start = self.write_pos() * self.frame_len;
        let dst = &mut self.data[start..start + self.frame_len];
        let n = samples.len().min(self.frame_len);
        dst[..n].copy_from_slice(&samples[..n]);
        dst[n..].fill(0.0);
        self.written += 1;
    }

    pub fn slot(&self, i: usize) -> &[f32] {
        &self.data[i * self.frame_len..(i + 1) * self.frame_len]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    /// First slot.
    pub start: usize,
    /// Length in frames.
    pub len: usize,
}

/// Which layout the segment had inside the buffer when it was resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpanCase {
    /// Never wrapped.
    Linear,
    /// Wrapped, but the traceback pulls the end back before the buffer end.
    PulledBack,
    /// Wrapped; one part at the tail of the buffer, one at the front.
    Split,
    /// Buffer exhausted while the segment is still open.
    Overflow,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentSpan {
    pub spans: Vec<Span>,
    pub truncated: bool,
    pub case: SpanCase,
}

impl SegmentSpan {
    pub fn total_len(&self) -> usize {
        self.spans.iter().map(|s| s.len).sum()
    }
}

/// Locates a segment in a buffer of `capacity` frames. `begin_slot` is the
/// slot of the segment's first frame and `written` the number of frames
/// written since then. `traceback` is the number of trailing frames to drop;
/// `None` means no end has been found and only an exhausted buffer can be
/// resolved.
pub fn resolve_segment(
    capacity: usize,
    begin_slot: usize,
    written: usize,
    traceback: Option<usize>,
) -> Result<SegmentSpan, SegmentError> {
    if begin_slot >= capacity {
        return Err(SegmentError::SpanOutOfRange { start: begin_slot, len: 0, capacity });
    }
    let Some(tb) = traceback else {
        if written < capacity {
            return Err(SegmentError::NotOverflowed { written, capacity });
        }
        let mut spans = vec![Span { start: begin_slot, len: capacity - begin_slot }];
        if begin_slot > 0 {
            spans.push(Span { start: 0, len: begin_slot });
        }
        return Ok(SegmentSpan { spans, truncated: true, case: SpanCase::Overflow });
    };
    if tb > written {
        return Err(SegmentError::InvalidTraceback { traceback: tb, written });
    }
    if written > capacity {
        return Err(SegmentError::Overwritten { written, capacity });
    }
    let out_len = written - tb;
    if begin_slot + written <= capacity {
        return Ok(SegmentSpan { spans: vec![Span { start: begin_slot, len: out_len }], truncated: false, case: SpanCase::Linear });
    }
    let write_pos = begin_slot + written - capacity;
    if write_pos <= tb {
        return Ok(SegmentSpan {
            spans: vec![Span { start: begin_slot, len: out_len }],
            truncated: false,
            case: SpanCase::PulledBack,
        });
    }
    Ok(SegmentSpan {
        spans: vec![Span { start: begin_slot, len: capacity - begin_slot }, Span { start: 0, len: write_pos - tb }],
        truncated: false,
        case: SpanCase::Split,
    })
}

/// Concatenated samples of every span, in order.
pub fn extract(rb: &RingBuffer, span: &SegmentSpan) -> Result<Vec<f32>, SegmentError> {
    let mut out = Vec::with_capacity(span.total_len() * rb.frame_len());
    for s in &span.spans {
        if s.start + s.len > rb.capacity() {
            return Err(SegmentError::SpanOutOfRange { start: s.start, len: s.len, capacity: rb.capacity() });
        }
        for i in s.start..s.start + s.len {
            out.extend_from_slice(rb.slot(i));
        }
    }
    Ok(out)
}
