//! Hierarchical GOP scheduling.

use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FrameType {
    I,
    B,
}

impl FrameType {
    pub fn as_str(self) -> &'static str {
        match self {
            FrameType::I => "I",
            FrameType::B => "B",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Slot {
    pub display_index: usize,
    pub coding_order: usize,
    pub frame_type: FrameType,
    /// Reference distance `i`; 0 for I frames.
    pub ref_distance: usize,
    pub past_ref: Option<usize>,
    pub future_ref: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GopPlan {
    pub gop_size: usize,
    /// Slots in coding order, including the I frame at `gop_size` that
    /// closes the GOP and opens the next one.
    pub slots: Vec<Slot>,
}

pub fn check_gop_size(g: usize) -> Result<()> {
    if !g.is_power_of_two() || !(2..=64).contains(&g) {
        return invalid(format!("GOP size must be a power of two in [2, 64], got {g}"));
    }
    Ok(())
}

fn i_slot(display_index: usize, coding_order: usize) -> Slot {
    Slot { display_index, coding_order, frame_type: FrameType::I, ref_distance: 0, past_ref: None, future_ref: None }
}

/// Appends the B slots of a dyadic GOP starting at `base` in level order.
fn push_b_levels(slots: &mut Vec<Slot>, base: usize, g: usize) {
    let mut i = g / 2;
    while i >= 1 {
        for t in (i..g).step_by(2 * i) {
            slots.push(Slot {
                display_index: base + t,
                coding_order: slots.len(),
                frame_type: FrameType::B,
                ref_distance: i,
                past_ref: Some(base + t - i),
                future_ref: Some(base + t + i),
            });
        }
        i /= 2;
    }
}

pub fn build_gop_plan(g: usize) -> Result<GopPlan> {
    check_gop_size(g)?;
    let mut slots = vec![i_slot(0, 0), i_slot(g, 1)];
    push_b_levels(&mut slots, 0, g);
    Ok(GopPlan { gop_size: g, slots })
}

/// Coding-order slots for a whole sequence. Full GOPs of size `g` come
/// first; the remainder is split into the largest dyadic GOP that fits,
/// repeatedly, and a single leftover frame is coded as I.
pub fn sequence_plan(frame_count: usize, g: usize) -> Result<Vec<Slot>> {
    check_gop_size(g)?;
    if frame_count == 0 {
        return invalid("sequence has no frames");
    }
    let mut slots = vec![i_slot(0, 0)];
    let mut pos = 0;
    while pos + 1 < frame_count {
        let remaining = frame_count - 1 - pos;
        let size = if remaining >= g { g } else { 1 << remaining.ilog2() };
        let co = slots.len();
        slots.push(i_slot(pos + size, co));
        if size >= 2 {
            push_b_levels(&mut slots, pos, size);
        }
        pos += size;
    }
    Ok(slots)
}
