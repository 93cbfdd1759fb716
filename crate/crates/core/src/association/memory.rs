use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::instance::EmbeddingSet;
use crate::mask::InstanceMask;

/// Thing masks of one frame, labelled with their track ids once assigned.
#[derive(Debug, Clone)]
pub struct FrameState {
    pub index: usize,
    pub masks: Vec<InstanceMask>,
    pub embeddings: Option<EmbeddingSet>,
}

impl FrameState {
    pub fn ids(&self) -> impl Iterator<Item = u16> + '_ {
        self.masks.iter().map(InstanceMask::instance_id)
    }
}

/// Frames older than the immediate predecessor, kept for temporal rescue,
/// plus the track id counter.
#[derive(Debug, Clone)]
pub struct TrackMemory {
    capacity: usize,
    frames: VecDeque<FrameState>,
    next_id: u16,
}

impl TrackMemory {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            frames: VecDeque::with_capacity(capacity + 1),
            next_id: 1,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Stores a frame, evicting the oldest beyond capacity.
    pub fn push(&mut self, frame: FrameState) -> Result<()> {
        if let Some(last) = self.frames.back() {
            if frame.index <= last.index {
                return Err(Error::Invariant(format!(
                    "memory frame {} pushed after frame {}",
                    frame.index, last.index
                )));
            }
        }
        if self.capacity == 0 {
            return Ok(());
        }
        self.frames.push_back(frame);
        while self.frames.len() > self.capacity {
            self.frames.pop_front();
        }
        Ok(())
    }

    pub fn newest_first(&self) -> impl Iterator<Item = &FrameState> {
        self.frames.iter().rev()
    }

    /// Issues a fresh track id; ids are never reused.
    pub fn allocate_id(&mut self) -> Result<u16> {
        let id = self.next_id;
        self.next_id = id
            .checked_add(1)
            .ok_or_else(|| Error::Invariant("track id space exhausted".into()))?;
        Ok(id)
    }

    pub fn next_id(&self) -> u16 {
        self.next_id
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(index: usize) -> FrameState {
        FrameState {
            index,
            masks: vec![],
            embeddings: None,
        }
    }

    #[test]
    fn ring_keeps_the_newest_frames() {
        let mut mem = TrackMemory::new(2);
        for i in 0..5 {
            mem.push(frame(i)).unwrap();
        }
        let idx: Vec<usize> = mem.newest_first().map(|f| f.index).collect();
        assert_eq!(idx, vec![4, 3]);
        assert!(mem.push(frame(4)).is_err());
    }

    #[test]
    fn ids_are_monotone() {
        let mut mem = TrackMemory::new(1);
        assert_eq!(mem.allocate_id().unwrap(), 1);
        assert_eq!(mem.allocate_id().unwrap(), 2);
        assert_eq!(mem.next_id(), 3);
    }
}
