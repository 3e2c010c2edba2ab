use crate::error::{Error, Result};
use crate::numcore::Tensor;
use crate::tgraph::Event;

/// One embedding vector per node plus the time it was last written.
/// Unseen nodes hold zeros and time 0.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryState {
    dim: usize,
    src: Vec<f64>,
    dst: Vec<f64>,
    src_last: Vec<f64>,
    dst_last: Vec<f64>,
}

impl MemoryState {
    pub fn new(n_src: usize, n_dst: usize, dim: usize) -> Self {
        MemoryState {
            dim,
            src: vec![0.0; n_src * dim],
            dst: vec![0.0; n_dst * dim],
            src_last: vec![0.0; n_src],
            dst_last: vec![0.0; n_dst],
        }
    }

    pub fn reset(&mut self) {
        self.src.fill(0.0);
        self.dst.fill(0.0);
        self.src_last.fill(0.0);
        self.dst_last.fill(0.0);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_src(&self) -> usize {
        self.src_last.len()
    }

    pub fn n_dst(&self) -> usize {
        self.dst_last.len()
    }

    pub fn src(&self, id: usize) -> &[f64] {
        &self.src[id * self.dim..(id + 1) * self.dim]
    }

    pub fn dst(&self, id: usize) -> &[f64] {
        &self.dst[id * self.dim..(id + 1) * self.dim]
    }

    pub fn src_last_update(&self, id: usize) -> f64 {
        self.src_last[id]
    }

    pub fn dst_last_update(&self, id: usize) -> f64 {
        self.dst_last[id]
    }

    pub fn last_updates(&self) -> impl Iterator<Item = f64> + '_ {
        self.src_last.iter().chain(&self.dst_last).copied()
    }

    pub fn check_ids(&self, events: &[Event]) -> Result<()> {
        for e in events {
            if e.src >= self.n_src() || e.dst >= self.n_dst() {
                return Err(Error::Data(format!(
                    "event {} references node ({}, {}) outside memory ({}, {})",
                    e.idx,
                    e.src,
                    e.dst,
                    self.n_src(),
                    self.n_dst()
                )));
            }
        }
        Ok(())
    }

    /// Overwrites the memories of each event's endpoints, in event order, so a
    /// node that appears twice keeps the later write.
    pub fn write(&mut self, events: &[Event], src_embed: &Tensor, dst_embed: &Tensor) -> Result<()> {
        let d = self.dim;
        if src_embed.shape() != (events.len(), d) || dst_embed.shape() != (events.len(), d) {
            return Err(Error::Dimension {
                op: "memory write",
                left: (events.len(), d),
                right: src_embed.shape(),
            });
        }
        self.check_ids(events)?;
        for (i, e) in events.iter().enumerate() {
            self.src[e.src * d..(e.src + 1) * d].copy_from_slice(src_embed.row(i));
            self.dst[e.dst * d..(e.dst + 1) * d].copy_from_slice(dst_embed.row(i));
            self.src_last[e.src] = e.t;
            self.dst_last[e.dst] = e.t;
        }
        Ok(())
    }
}
