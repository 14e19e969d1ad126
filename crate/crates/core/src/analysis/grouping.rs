//! Partition of each conv layer's kernels into importance-ordered groups.
//!
//! A genome has one bit per group. Conv layers linked by residual pairs
//! form one *segment* and share bits: the segment's group pattern is applied
//! to each member layer's own importance ordering, so member layers always
//! keep the same number of kernels.

use serde::{Deserialize, Serialize};

use crate::analysis::importance::ImportanceTable;
use crate::error::{Error, Result};
use crate::store::spec::ShapePlan;

/// 10 groups below 256 kernels, 100 otherwise; never more groups than kernels.
pub fn groups_for_width(width: usize) -> usize {
    let g = if width < 256 { 10 } else { 100 };
    g.min(width)
}

/// Near-equal contiguous chunks; the first `len % groups` chunks get one extra.
pub fn chunk_sizes(len: usize, groups: usize) -> Vec<usize> {
    let base = len / groups;
    let extra = len % groups;
    (0..groups).map(|g| base + usize::from(g < extra)).collect()
}

/// Kernel indices by descending score, ties by ascending index.
pub fn importance_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

fn chunk(order: &[usize], sizes: &[usize]) -> Vec<Vec<usize>> {
    let mut out = Vec::with_capacity(sizes.len());
    let mut start = 0;
    for &s in sizes {
        out.push(order[start..start + s].to_vec());
        start += s;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    /// Conv ordinals sharing this segment, ascending; the first is the source.
    pub convs: Vec<usize>,
    pub groups: usize,
    /// Offset of the segment's first bit in the genome.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupingMap {
    pub segments: Vec<Segment>,
    pub conv_widths: Vec<usize>,
    /// `[class][conv][group]` -> kernel indices within that conv.
    pub groups: Vec<Vec<Vec<Vec<usize>>>>,
}

impl GroupingMap {
    pub fn total_bits(&self) -> usize {
        self.segments.iter().map(|s| s.groups).sum()
    }

    pub fn num_classes(&self) -> usize {
        self.groups.len()
    }

    pub fn total_kernels(&self) -> usize {
        self.conv_widths.iter().sum()
    }

    /// Global id of the first kernel of each conv layer.
    pub fn conv_offsets(&self) -> Vec<usize> {
        self.conv_widths
            .iter()
            .scan(0, |acc, &w| {
                let o = *acc;
                *acc += w;
                Some(o)
            })
            .collect()
    }

    pub fn segment_of(&self, conv: usize) -> usize {
        self.segments
            .iter()
            .position(|s| s.convs.contains(&conv))
            .expect("every conv belongs to a segment")
    }

    /// Builds a map for every class by chunking per-layer kernel orders.
    ///
    /// `order(class, conv)` returns the conv's kernel indices, most important
    /// first; `sizes(width)` gives the number of groups for a width.
    pub fn from_orders(
        plan: &ShapePlan,
        residual_pairs: &[(usize, usize)],
        classes: usize,
        sizes: impl Fn(usize) -> usize,
        mut order: impl FnMut(usize, usize) -> Vec<usize>,
    ) -> Result<Self> {
        let widths: Vec<usize> = plan.convs.iter().map(|c| c.out_channels).collect();
        let segments = build_segments(&widths, residual_pairs, &sizes)?;
        let mut groups = Vec::with_capacity(classes);
        for class in 0..classes {
            let mut per_conv = vec![Vec::new(); widths.len()];
            for seg in &segments {
                let chunks = chunk_sizes(widths[seg.convs[0]], seg.groups);
                for &conv in &seg.convs {
                    let ord = order(class, conv);
                    debug_assert_eq!(ord.len(), widths[conv]);
                    per_conv[conv] = chunk(&ord, &chunks);
                }
            }
            groups.push(per_conv);
        }
        Ok(Self {
            segments,
            conv_widths: widths,
            groups,
        })
    }

    /// Checks the partition invariants for every (class, conv).
    pub fn check(&self) -> Result<()> {
        for (n, class) in self.groups.iter().enumerate() {
            for (conv, groups) in class.iter().enumerate() {
                let mut seen = vec![false; self.conv_widths[conv]];
                for k in groups.iter().flatten() {
                    if std::mem::replace(&mut seen[*k], true) {
                        return Err(Error::Genome(format!(
                            "class {n} conv{conv}: kernel {k} in two groups"
                        )));
                    }
                }
                if seen.iter().any(|s| !s) {
                    return Err(Error::Genome(format!(
                        "class {n} conv{conv}: groups do not cover all kernels"
                    )));
                }
            }
        }
        Ok(())
    }
}

fn build_segments(
    widths: &[usize],
    residual_pairs: &[(usize, usize)],
    sizes: &impl Fn(usize) -> usize,
) -> Result<Vec<Segment>> {
    // union-find over residual links
    let mut parent: Vec<usize> = (0..widths.len()).collect();
    fn root(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for &(a, b) in residual_pairs {
        let (ra, rb) = (root(&mut parent, a), root(&mut parent, b));
        let (lo, hi) = (ra.min(rb), ra.max(rb));
        parent[hi] = lo;
    }
    let mut segments: Vec<Segment> = Vec::new();
    for conv in 0..widths.len() {
        let r = root(&mut parent, conv);
        match segments.iter_mut().find(|s| s.convs[0] == r) {
            Some(s) => {
                if widths[conv] != widths[r] {
                    return Err(Error::Residual {
                        src: r,
                        dst: conv,
                        reason: "linked layers differ in width".into(),
                    });
                }
                s.convs.push(conv);
            }
            None => segments.push(Segment {
                convs: vec![conv],
                groups: sizes(widths[conv]).clamp(1, widths[conv]),
                offset: 0,
            }),
        }
    }
    let mut offset = 0;
    for s in &mut segments {
        s.offset = offset;
        offset += s.groups;
    }
    Ok(segments)
}

/// Importance-based grouping.
pub fn build_grouping(
    importance: &ImportanceTable,
    plan: &ShapePlan,
    residual_pairs: &[(usize, usize)],
) -> Result<GroupingMap> {
    for (n, class) in importance.scores.iter().enumerate() {
        if class.len() != plan.convs.len()
            || class.iter().zip(&plan.convs).any(|(s, c)| s.len() != c.out_channels)
        {
            return Err(Error::Shape(format!(
                "importance for class {n} does not cover every kernel"
            )));
        }
    }
    GroupingMap::from_orders(
        plan,
        residual_pairs,
        importance.num_classes(),
        groups_for_width,
        |class, conv| importance_order(&importance.scores[class][conv]),
    )
}
