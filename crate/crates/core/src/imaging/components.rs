use std::collections::VecDeque;

use super::SegMask;
use crate::error::{Error, Result};

/// Keeps only the largest 4-connected foreground component.
///
/// Ties go to the component whose first pixel comes earliest in row-major
/// order.
pub fn largest_component(mask: &SegMask) -> Result<SegMask> {
    let (w, h) = (mask.width(), mask.height());
    let bits = mask.bits();
    let mut label = vec![0u32; bits.len()];
    let mut queue = VecDeque::new();
    let mut best: Option<(u32, usize)> = None;
    let mut next = 0u32;

    for start in 0..bits.len() {
        if !bits[start] || label[start] != 0 {
            continue;
        }
        next += 1;
        label[start] = next;
        queue.push_back(start);
        let mut size = 0usize;
        while let Some(i) = queue.pop_front() {
            size += 1;
            let (x, y) = (i % w, i / w);
            let mut visit = |j: usize| {
                if bits[j] && label[j] == 0 {
                    label[j] = next;
                    queue.push_back(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        if best.is_none_or(|(_, s)| size > s) {
            best = Some((next, size));
        }
    }

    let (keep, _) = best.ok_or(Error::EmptySegmentation)?;
    let bits = label.iter().map(|&l| l == keep).collect();
    SegMask::new(w, h, bits)
}
